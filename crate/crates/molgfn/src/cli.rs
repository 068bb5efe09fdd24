//! The `molgfn` command: pretrain, finetune, sample, and evaluate, wired
//! from a run-config file (see [`crate::config`]).
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric abort.
//! Fixed seed and any worker count give byte-identical sample files and
//! training logs; timing lines stay zeroed unless `io.log_wall_time` is on.

use crate::config::{ConfigError, RunConfig};
use crate::descriptors::{DescriptorError, Evaluator, Fingerprint, ScoreTable};
use crate::mdp::{MdpError, State};
use crate::metrics::{
    hit_ratios, MetricsError, MetricsReport, SampleSet, DEFAULT_CIRCLES_THRESHOLD,
};
use crate::policy::{PolicyError, PolicyParams};
use crate::reward::{aggregate_reward, ConditionalSpec, ConditioningContext, RewardError};
use crate::smiles::{self, canonical_key, CanonicalKey, LoadError, SmilesError};
use crate::trainer::{
    sample_terminal_range, substream, Mode, TrainError, TrainIo, Trainer,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::collections::HashSet;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric abort: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> CliError {
        match e {
            PolicyError::BadConfig(_) | PolicyError::Checkpoint(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> CliError {
        match e {
            TrainError::NumericAbort { .. } => CliError::Numeric(e.to_string()),
            TrainError::BadConfig(_) => CliError::Config(e.to_string()),
            TrainError::Reward(r) => CliError::Config(r.to_string()),
            TrainError::Policy(p) => CliError::from(p),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<MdpError> for CliError {
    fn from(e: MdpError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<SmilesError> for CliError {
    fn from(e: SmilesError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<DescriptorError> for CliError {
    fn from(e: DescriptorError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "molgfn", version, about = "Conditional molecular graph generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from scratch on the goal-conditioned reward, mixing online
    /// rollouts with deconstructed dataset molecules.
    Pretrain(PretrainArgs),
    /// Continue from a pretrained checkpoint on a downstream reward.
    Finetune(FinetuneArgs),
    /// Draw molecules from a checkpoint at the canonical conditioning.
    Sample(SampleArgs),
    /// Compute the metric report over a sample file.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct PretrainArgs {
    /// Run-config file.
    #[arg(long)]
    config: PathBuf,
    /// Resume parameters from this checkpoint; the step counter continues
    /// when the filename has the step_NNNNNNN.ckpt form.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sampling threads. Results are identical for any count.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Abort on the first malformed dataset line instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Accept a checkpoint whose config shape hash differs.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Run-config file (finetuning defaults fill unset keys).
    #[arg(long)]
    config: PathBuf,
    /// Pretrained checkpoint: initializes the policy and, under rtb,
    /// stays frozen as the prior.
    #[arg(long)]
    prior: PathBuf,
    /// Objective: tb (single policy) or rtb (anchored to the prior).
    #[arg(long, default_value = "rtb")]
    objective: String,
    /// SMILES installed as an immutable starting scaffold.
    #[arg(long)]
    seed_scaffold: Option<String>,
    /// Resume a finetuning run from this checkpoint (skips the logZ
    /// recalibration; step parsed from a step_NNNNNNN.ckpt filename).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// Run-config file; supplies the model shape, conditionals, seed, and
    /// sampling temperature.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Molecules to draw.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SMILES installed as an immutable starting scaffold.
    #[arg(long)]
    seed_scaffold: Option<String>,
    /// Keep first occurrences of each canonical key, resampling until n
    /// unique molecules or the attempt cap (20 n).
    #[arg(long)]
    unique: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Sample file: smiles<TAB>reward per line, extra columns ignored.
    samples: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail on unparseable sample lines instead of skipping them.
    #[arg(long)]
    strict: bool,
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: &Path, base: RunConfig) -> Result<RunConfig, CliError> {
    let (cfg, warnings) = RunConfig::load_with_base(base, path)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

/// Steps already taken, read from a step_NNNNNNN.ckpt filename; other names
/// restart the counter.
fn step_from_filename(path: &Path) -> usize {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("step_"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn run_training(mut trainer: Trainer, cfg: &RunConfig) -> Result<(), CliError> {
    let remaining = cfg.training.max_num_iter.saturating_sub(trainer.step_count());
    if remaining == 0 {
        eprintln!(
            "nothing to do: step {} already at max_num_iter {}",
            trainer.step_count(),
            cfg.training.max_num_iter
        );
        return Ok(());
    }
    let ckpt_dir = PathBuf::from(&cfg.io.checkpoint_dir);
    fs::create_dir_all(&ckpt_dir)?;
    let mut log = fs::OpenOptions::new().create(true).append(true).open(&cfg.io.log_path)?;
    let mut io = TrainIo {
        checkpoint_dir: Some(&ckpt_dir),
        log: Some(&mut log),
        log_wall_time: cfg.io.log_wall_time,
    };
    trainer.run(remaining, &mut io)?;
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, RunConfig::pretrain_default())?;
    let specs = cfg.conditional_specs()?;
    let train_cfg = cfg.to_train_config();
    let mdp_cfg = cfg.to_mdp_config();
    let (params, start_step) = match &args.checkpoint {
        Some(p) => (
            PolicyParams::load(p, cfg.to_policy_config(), args.force)?,
            step_from_filename(p),
        ),
        None => (PolicyParams::init(cfg.to_policy_config(), train_cfg.seed)?, 0),
    };
    let dataset = if train_cfg.mix_ratio < 1.0 {
        let path = cfg.data.dataset_path.as_deref().ok_or_else(|| {
            CliError::Config("pretraining with mix_ratio < 1 needs data.dataset_path".into())
        })?;
        Some(load_dataset(Path::new(path), args.strict, &mdp_cfg)?)
    } else {
        None
    };
    let mut trainer = Trainer::new(train_cfg, Mode::Pretrain, mdp_cfg, specs, params)?
        .with_workers(args.workers);
    if let Some(dataset) = dataset {
        trainer = trainer.with_dataset(dataset);
    }
    trainer.set_step(start_step);
    run_training(trainer, &cfg)
}

/// Loads an offline corpus, dropping molecules outside the MDP caps: they
/// have no construction trajectory under this config.
fn load_dataset(
    path: &Path,
    strict: bool,
    mdp_cfg: &crate::mdp::MdpConfig,
) -> Result<Vec<crate::molgraph::MolGraph>, CliError> {
    let corpus = smiles::load_smi_file(path, strict)?;
    for (line, msg) in &corpus.skipped {
        eprintln!("warning: {}:{line}: {msg} (skipped)", path.display());
    }
    let total = corpus.records.len();
    let kept: Vec<crate::molgraph::MolGraph> = corpus
        .records
        .into_iter()
        .map(|r| r.graph)
        .filter(|g| g.node_count() <= mdp_cfg.max_nodes && g.edge_count() <= mdp_cfg.max_edges)
        .collect();
    if kept.len() < total {
        eprintln!(
            "warning: {}: dropped {} of {total} molecules outside the node/edge caps",
            path.display(),
            total - kept.len()
        );
    }
    if kept.is_empty() {
        return Err(CliError::Data(format!("dataset {} has no usable molecules", path.display())));
    }
    Ok(kept)
}

fn cmd_finetune(args: FinetuneArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, RunConfig::finetune_default())?;
    let specs = cfg.conditional_specs()?;
    let train_cfg = cfg.to_train_config();
    let mdp_cfg = cfg.to_mdp_config();
    let mode = match args.objective.as_str() {
        "tb" => Mode::FinetuneTb,
        "rtb" => Mode::FinetuneRtb,
        other => {
            return Err(CliError::Config(format!("objective must be tb or rtb, got `{other}`")))
        }
    };
    let prior = PolicyParams::load(&args.prior, cfg.to_policy_config(), args.force)?;
    let (params, start_step) = match &args.checkpoint {
        Some(p) => (
            PolicyParams::load(p, cfg.to_policy_config(), args.force)?,
            step_from_filename(p),
        ),
        None => {
            let mut phi = prior.clone();
            let mut rng = substream(train_cfg.seed, 0, 0, 3);
            phi.recalibrate_log_z(train_cfg.logz_recalibration_sigma, &mut rng);
            (phi, 0)
        }
    };
    let mut trainer = Trainer::new(train_cfg, mode, mdp_cfg.clone(), specs, params)?
        .with_workers(args.workers);
    if mode == Mode::FinetuneRtb {
        trainer = trainer.with_prior(prior);
    }
    if let Some(smi) = &args.seed_scaffold {
        let graph = smiles::parse(smi)?;
        trainer = trainer.with_scaffold(State::from_scaffold(graph, &mdp_cfg)?);
    }
    trainer.set_step(start_step);
    run_training(trainer, &cfg)
}

fn sample_line(
    graph: &crate::molgraph::MolGraph,
    ctx: &ConditioningContext,
    specs: &[ConditionalSpec],
    evaluator: &Evaluator,
) -> Result<String, CliError> {
    let smi = smiles::write(graph)?;
    let reward = aggregate_reward(graph, ctx, evaluator, None)?;
    let mut line = format!("{smi}\t{reward:.6e}");
    for spec in specs {
        let v = evaluator.eval(&spec.property, graph)?;
        line.push_str(&format!("\t{v:.4}"));
    }
    Ok(line)
}

fn cmd_sample(args: SampleArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, RunConfig::pretrain_default())?;
    let specs = cfg.conditional_specs()?;
    let mdp_cfg = cfg.to_mdp_config();
    let params = PolicyParams::load(&args.checkpoint, cfg.to_policy_config(), args.force)?;
    let s0 = match &args.seed_scaffold {
        Some(smi) => State::from_scaffold(smiles::parse(smi)?, &mdp_cfg)?,
        None => State::empty(),
    };
    let evaluator = Evaluator::new();
    let seed = cfg.io.random_seed;
    let temp = cfg.training.sample_temp;

    let mut lines: Vec<String> = Vec::with_capacity(args.n);
    if args.unique {
        let cap = args.n.saturating_mul(20);
        let chunk = (args.workers.max(1) * 64).min(cap.max(1));
        let mut seen: HashSet<CanonicalKey> = HashSet::new();
        let mut next = 0usize;
        while lines.len() < args.n && next < cap {
            let take = chunk.min(cap - next);
            let drawn = sample_terminal_range(
                &params,
                &specs,
                &mdp_cfg,
                &s0,
                next as u64,
                take,
                seed,
                temp,
                args.workers,
            )?;
            next += take;
            for (graph, ctx, _) in &drawn {
                if lines.len() >= args.n {
                    break;
                }
                if seen.insert(canonical_key(graph)) {
                    lines.push(sample_line(graph, ctx, &specs, &evaluator)?);
                }
            }
        }
        if lines.len() < args.n {
            return Err(CliError::Data(format!(
                "unique sampling hit the attempt cap ({cap}) with {} of {} molecules",
                lines.len(),
                args.n
            )));
        }
    } else {
        let drawn = sample_terminal_range(
            &params, &specs, &mdp_cfg, &s0, 0, args.n, seed, temp, args.workers,
        )?;
        for (graph, ctx, _) in &drawn {
            lines.push(sample_line(graph, ctx, &specs, &evaluator)?);
        }
    }

    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    match &args.out {
        Some(path) => fs::write(path, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config, RunConfig::pretrain_default())?;
    let specs = cfg.conditional_specs()?;
    let evaluator = Evaluator::new();

    let text = fs::read_to_string(&args.samples)?;
    let mut molecules = Vec::new();
    let mut rewards = Vec::new();
    let mut attempted = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        attempted += 1;
        match parse_sample_record(t) {
            Ok((graph, reward)) => {
                molecules.push(graph);
                rewards.push(reward);
            }
            Err(msg) => {
                let at = format!("{}:{line}: {msg}", args.samples.display());
                if args.strict {
                    return Err(CliError::Data(at));
                }
                eprintln!("warning: {at} (skipped)");
            }
        }
    }
    let set = SampleSet::with_attempted(molecules, rewards, attempted)?;

    let reference = match &cfg.data.novelty_ref_path {
        Some(path) => {
            let corpus = smiles::load_smi_file(Path::new(path), false)?;
            let mut keys = HashSet::new();
            let mut fps = Vec::new();
            for rec in &corpus.records {
                keys.insert(canonical_key(&rec.graph));
                fps.push(crate::descriptors::fingerprint(
                    &rec.graph,
                    crate::descriptors::DEFAULT_FP_RADIUS,
                    crate::descriptors::DEFAULT_FP_WIDTH,
                )?);
            }
            Some((keys, fps))
        }
        None => None,
    };

    let mut report = MetricsReport::compute(
        &set,
        &specs,
        &evaluator,
        reference.as_ref().map(|(keys, _)| keys),
        DEFAULT_CIRCLES_THRESHOLD,
    )?;
    if let Some(table_path) = &cfg.data.score_table_path {
        let median = cfg.data.actives_median.ok_or_else(|| {
            CliError::Config("data.score_table_path needs data.actives_median".into())
        })?;
        let table = ScoreTable::load(Path::new(table_path))?;
        let empty: Vec<Fingerprint> = Vec::new();
        let ref_fps = reference.as_ref().map(|(_, fps)| fps.as_slice()).unwrap_or(&empty);
        report.attach_hits(&hit_ratios(&set, &table, median, ref_fps, &evaluator)?);
    }

    let rendered = report.render();
    match &args.out {
        Some(path) => fs::write(path, rendered)?,
        None => std::io::stdout().write_all(rendered.as_bytes())?,
    }
    Ok(())
}

fn parse_sample_record(line: &str) -> Result<(crate::molgraph::MolGraph, f64), String> {
    let mut fields = line.split('\t');
    let smi = fields.next().ok_or("empty line")?;
    let reward_str = fields.next().ok_or("missing reward column")?;
    let graph = smiles::parse(smi.trim()).map_err(|e| e.to_string())?;
    let reward: f64 =
        reward_str.trim().parse().map_err(|e| format!("bad reward `{reward_str}`: {e}"))?;
    Ok((graph, reward))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    /// A config small enough that training steps finish in milliseconds.
    fn toy_config_text(dir: &Path, extra: &str) -> String {
        format!(
            "model.num_layers = 1\n\
             model.num_emb = 8\n\
             model.num_heads = 1\n\
             model.num_mlp_layers = 1\n\
             conditionals.properties = qed\n\
             training.max_num_iter = 4\n\
             training.checkpoint_every = 2\n\
             training.sampling_batch_size = 4\n\
             training.training_batch_size = 2\n\
             training.mix_ratio = 1\n\
             training.max_nodes = 6\n\
             training.max_edges = 6\n\
             training.max_traj_len = 14\n\
             io.random_seed = 11\n\
             io.checkpoint_dir = {ckpt}\n\
             io.log_path = {log}\n\
             {extra}",
            ckpt = dir.join("ckpts").display(),
            log = dir.join("train.log").display(),
        )
    }

    fn write_config(dir: &Path, extra: &str) -> PathBuf {
        let path = dir.join("run.cfg");
        fs::write(&path, toy_config_text(dir, extra)).unwrap();
        path
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn pretrain_writes_checkpoints_and_log() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let code = run(s(&["molgfn", "pretrain", "--config", config.to_str().unwrap()]));
        assert_eq!(code, 0);
        for name in ["step_0000002.ckpt", "step_0000004.ckpt", "latest.ckpt"] {
            assert!(dir.path().join("ckpts").join(name).exists(), "missing {name}");
        }
        let log = fs::read_to_string(dir.path().join("train.log")).unwrap();
        assert_eq!(log.lines().count(), 2);
        assert!(log.contains("step=2") && log.contains("step=4"));
        assert!(log.contains("wall=0.000"));
    }

    #[test]
    fn pretrain_resume_continues_the_step_counter() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        assert_eq!(run(s(&["molgfn", "pretrain", "--config", config.to_str().unwrap()])), 0);
        // Raise the horizon and resume from the step-4 checkpoint.
        let config2 = dir.path().join("run2.cfg");
        fs::write(
            &config2,
            toy_config_text(dir.path(), "").replace("max_num_iter = 4", "max_num_iter = 6"),
        )
        .unwrap();
        let ckpt = dir.path().join("ckpts").join("step_0000004.ckpt");
        let code = run(s(&[
            "molgfn",
            "pretrain",
            "--config",
            config2.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        assert!(dir.path().join("ckpts").join("step_0000006.ckpt").exists());
        let log = fs::read_to_string(dir.path().join("train.log")).unwrap();
        // Appended: the resumed run adds its own step-6 record.
        assert!(log.contains("step=6"));
    }

    #[test]
    fn config_errors_exit_2() {
        let dir = tempdir().unwrap();
        // Missing file.
        let missing = dir.path().join("nope.cfg");
        assert_eq!(
            run(s(&["molgfn", "pretrain", "--config", missing.to_str().unwrap()])),
            2
        );
        // Unknown key.
        let bad = dir.path().join("bad.cfg");
        fs::write(&bad, "model.frobnicate = 1\n").unwrap();
        assert_eq!(run(s(&["molgfn", "pretrain", "--config", bad.to_str().unwrap()])), 2);
        // Offline mixing without a dataset path.
        let nomix = write_config(dir.path(), "").to_str().unwrap().to_string();
        let text = fs::read_to_string(&nomix).unwrap().replace("mix_ratio = 1", "mix_ratio = 0.5");
        fs::write(&nomix, text).unwrap();
        assert_eq!(run(s(&["molgfn", "pretrain", "--config", &nomix])), 2);
        // Bad CLI usage.
        assert_eq!(run(s(&["molgfn", "pretrain", "--no-such-flag"])), 2);
        // Bad finetune objective.
        let config = write_config(dir.path(), "");
        let prior = dir.path().join("prior.ckpt");
        seed_checkpoint(&config, &prior);
        assert_eq!(
            run(s(&[
                "molgfn",
                "finetune",
                "--config",
                config.to_str().unwrap(),
                "--prior",
                prior.to_str().unwrap(),
                "--objective",
                "dagger",
            ])),
            2
        );
    }

    /// Initialize a checkpoint compatible with `config` at `path`.
    fn seed_checkpoint(config: &Path, path: &Path) {
        let (cfg, _) = RunConfig::load(config).unwrap();
        let params = PolicyParams::init(cfg.to_policy_config(), cfg.io.random_seed).unwrap();
        params.save(path).unwrap();
    }

    #[test]
    fn sample_files_are_byte_identical_across_runs_and_workers() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let ckpt = dir.path().join("model.ckpt");
        seed_checkpoint(&config, &ckpt);
        let out1 = dir.path().join("a.tsv");
        let out2 = dir.path().join("b.tsv");
        for (out, workers) in [(&out1, "1"), (&out2, "3")] {
            let code = run(s(&[
                "molgfn",
                "sample",
                "--config",
                config.to_str().unwrap(),
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--n",
                "8",
                "--workers",
                workers,
                "--out",
                out.to_str().unwrap(),
            ]));
            assert_eq!(code, 0);
        }
        let a = fs::read(&out1).unwrap();
        let b = fs::read(&out2).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
        // Every line is smiles<TAB>reward<TAB>qed with parseable fields.
        for line in String::from_utf8(a).unwrap().lines() {
            let fields: Vec<&str> = line.split('\t').collect();
            assert_eq!(fields.len(), 3);
            smiles::parse(fields[0]).unwrap();
            fields[1].parse::<f64>().unwrap();
            fields[2].parse::<f64>().unwrap();
        }
    }

    #[test]
    fn sample_n_zero_writes_an_empty_file() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let ckpt = dir.path().join("model.ckpt");
        seed_checkpoint(&config, &ckpt);
        let out = dir.path().join("empty.tsv");
        let code = run(s(&[
            "molgfn",
            "sample",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--n",
            "0",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        assert_eq!(fs::read(&out).unwrap().len(), 0);
    }

    #[test]
    fn unique_mode_filters_duplicate_keys() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let ckpt = dir.path().join("model.ckpt");
        seed_checkpoint(&config, &ckpt);
        let out = dir.path().join("u.tsv");
        let code = run(s(&[
            "molgfn",
            "sample",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--n",
            "6",
            "--unique",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let text = fs::read_to_string(&out).unwrap();
        let keys: Vec<String> = text
            .lines()
            .map(|l| canonical_key(&smiles::parse(l.split('\t').next().unwrap()).unwrap()).to_string())
            .collect();
        assert_eq!(keys.len(), 6);
        let distinct: HashSet<&String> = keys.iter().collect();
        assert_eq!(distinct.len(), 6);
    }

    #[test]
    fn scaffold_core_appears_in_every_sample() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let ckpt = dir.path().join("model.ckpt");
        seed_checkpoint(&config, &ckpt);
        let out = dir.path().join("scaf.tsv");
        let code = run(s(&[
            "molgfn",
            "sample",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--n",
            "5",
            "--seed-scaffold",
            "CCO",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 5);
        // Every sample keeps at least the scaffold's atom count.
        for line in text.lines() {
            let g = smiles::parse(line.split('\t').next().unwrap()).unwrap();
            assert!(g.node_count() >= 3);
        }
    }

    #[test]
    fn evaluate_reports_metrics_and_respects_strict() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let samples = dir.path().join("samples.tsv");
        fs::write(
            &samples,
            "CCO\t0.5\nCCO\t0.5\nCCN\t0.25\nc1ccccc1\t0.75\nCCCC\t0.125\nnot-a-smiles\t0.1\n",
        )
        .unwrap();
        // Strict mode fails on the malformed line.
        assert_eq!(
            run(s(&[
                "molgfn",
                "evaluate",
                samples.to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
                "--strict",
            ])),
            3
        );
        // Lenient mode skips it and counts it against validity.
        let out = dir.path().join("report.txt");
        let code = run(s(&[
            "molgfn",
            "evaluate",
            samples.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let report = fs::read_to_string(&out).unwrap();
        assert!(report.contains("n: 5"));
        // 5 parsed of 6 attempted.
        assert!(report.contains("validity: 0.8333"));
        // 4 distinct keys over 5 samples.
        assert!(report.contains("uniqueness: 0.8000"));
        assert!(report.contains("hit_ratio: absent"));
        assert!(report.contains("novelty: absent"));
        assert!(report.contains("top_1: 0.750000"));
    }

    #[test]
    fn evaluate_with_reference_and_scores_fills_optional_metrics() {
        let dir = tempdir().unwrap();
        let refs = dir.path().join("ref.smi");
        fs::write(&refs, "CCO\n").unwrap();
        let scores = dir.path().join("scores.tsv");
        fs::write(&scores, "CCO\t-9.0\nCCN\t-7.0\nc1ccccc1\t-8.5\nCCCC\t-9.5\n").unwrap();
        let extra = format!(
            "data.novelty_ref_path = {}\ndata.score_table_path = {}\ndata.actives_median = -8\n",
            refs.display(),
            scores.display()
        );
        let config = write_config(dir.path(), &extra);
        let samples = dir.path().join("samples.tsv");
        fs::write(&samples, "CCO\t0.5\nCCN\t0.25\nc1ccccc1\t0.75\nCCCC\t0.125\n").unwrap();
        let out = dir.path().join("report.txt");
        let code = run(s(&[
            "molgfn",
            "evaluate",
            samples.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(code, 0);
        let report = fs::read_to_string(&out).unwrap();
        // CCO is in the reference; the other three keys are novel.
        assert!(report.contains("novelty: 0.7500"));
        assert!(report.contains("hit_ratio:"));
        assert!(!report.contains("hit_ratio: absent"));
        assert!(report.contains("missing_scores: 0"));
    }

    #[test]
    fn finetune_runs_both_objectives_and_keeps_the_prior_file() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let prior = dir.path().join("prior.ckpt");
        seed_checkpoint(&config, &prior);
        let before = fs::read(&prior).unwrap();
        for objective in ["rtb", "tb"] {
            let code = run(s(&[
                "molgfn",
                "finetune",
                "--config",
                config.to_str().unwrap(),
                "--prior",
                prior.to_str().unwrap(),
                "--objective",
                objective,
            ]));
            assert_eq!(code, 0, "objective {objective}");
        }
        assert_eq!(fs::read(&prior).unwrap(), before);
        assert!(dir.path().join("ckpts").join("latest.ckpt").exists());
    }

    #[test]
    fn nan_checkpoint_aborts_with_exit_4() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let (cfg, _) = RunConfig::load(&config).unwrap();
        let mut params = PolicyParams::init(cfg.to_policy_config(), 0).unwrap();
        let name = params.names()[0].clone();
        params.tensor_mut(&name).unwrap().data[0] = f64::NAN;
        let ckpt = dir.path().join("nan.ckpt");
        params.save(&ckpt).unwrap();
        let code = run(s(&[
            "molgfn",
            "pretrain",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ]));
        assert_eq!(code, 4);
    }

    #[test]
    fn checkpoint_shape_mismatch_is_a_config_error() {
        let dir = tempdir().unwrap();
        let config = write_config(dir.path(), "");
        // Checkpoint built from a wider model shape.
        let other = dir.path().join("other.cfg");
        fs::write(&other, toy_config_text(dir.path(), "model.i2h_width = 2\n")).unwrap();
        let ckpt = dir.path().join("wide.ckpt");
        seed_checkpoint(&other, &ckpt);
        let code = run(s(&[
            "molgfn",
            "sample",
            "--config",
            config.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--n",
            "1",
            "--out",
            dir.path().join("x.tsv").to_str().unwrap(),
        ]));
        assert_eq!(code, 2);
    }
}
