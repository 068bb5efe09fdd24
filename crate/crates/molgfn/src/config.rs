//! Run configuration: a flat, typed `key = value` text format with section
//! prefixes (`model.`, `conditionals.`, `training.`, `data.`, `io.`).
//!
//! Files are partial overrides on top of a named default; every knob has a
//! field, unknown or duplicate keys are errors, and `load(write(c)) == c`.

use crate::descriptors::PropertyId;
use crate::mdp::MdpConfig;
use crate::policy::PolicyConfig;
use crate::reward::{
    pretraining_conditionals, ConditionalSpec, PropertyBounds, NUM_THERMOMETER_DIM,
};
use crate::trainer::TrainConfig;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key {0}")]
    UnknownKey(String),
    #[error("duplicate config key {0}")]
    DuplicateKey(String),
    #[error("missing config key {0}")]
    MissingKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub num_layers: usize,
    pub num_emb: usize,
    pub num_heads: usize,
    pub num_mlp_layers: usize,
    pub i2h_width: usize,
    /// Conditioning-encoding resolution; the policy encoding is compiled
    /// for 16, so validation pins this value.
    pub num_thermometer_dim: usize,
}

/// One conditioned property: canonical range, preference direction, decay
/// rate, and (sampling window, extrema window) bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEntry {
    pub property: PropertyId,
    pub range: (f64, f64),
    pub d: i8,
    pub lambda: f64,
    /// c_min, c_max, c_min_star, c_max_star.
    pub bounds: (f64, f64, f64, f64),
}

impl ConditionalEntry {
    fn from_spec(s: &ConditionalSpec) -> ConditionalEntry {
        ConditionalEntry {
            property: s.property.clone(),
            range: s.range,
            d: s.d,
            lambda: s.lambda,
            bounds: (s.bounds.c_min, s.bounds.c_max, s.bounds.c_min_star, s.bounds.c_max_star),
        }
    }

    pub fn to_spec(&self) -> Result<ConditionalSpec, ConfigError> {
        if !(self.range.0 < self.range.1) {
            return Err(ConfigError::Invalid(format!(
                "conditional {}: need range low < high, got [{}, {}]",
                self.property, self.range.0, self.range.1
            )));
        }
        if ![-1, 0, 1].contains(&self.d) {
            return Err(ConfigError::Invalid(format!(
                "conditional {}: d must be -1, 0, or 1, got {}",
                self.property, self.d
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "conditional {}: lambda must be positive",
                self.property
            )));
        }
        let (a, b, c, e) = self.bounds;
        let bounds = PropertyBounds::new(a, b, c, e)
            .map_err(|err| ConfigError::Invalid(format!("conditional {}: {err}", self.property)))?;
        Ok(ConditionalSpec {
            property: self.property.clone(),
            range: self.range,
            d: self.d,
            lambda: self.lambda,
            bounds,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub max_num_iter: usize,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mix_ratio: f64,
    pub learning_rate: f64,
    pub z_learning_rate: f64,
    pub lr_decay: f64,
    pub z_lr_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub clip_grad: f64,
    pub sampling_batch_size: usize,
    pub training_batch_size: usize,
    pub checkpoint_every: usize,
    pub random_action_prob: f64,
    pub random_stop_prob: f64,
    pub sample_temp: f64,
    pub oob_percent: f64,
    pub sigma_frac: f64,
    pub num_back_steps_max: Option<usize>,
    pub logz_recalibration_sigma: f64,
    pub max_traj_len: usize,
    pub max_nodes: usize,
    pub max_edges: usize,
    pub tb_p_b_is_parameterized: bool,
    pub gfn_batch_shuffle: bool,
    pub bootstrap_own_reward: bool,
    pub illegal_action_logreward: f64,
    /// Accepted for completeness; has no effect here (dataset radius
    /// rescaling belongs to corpus preparation).
    pub zinc_rad_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSection {
    pub dataset_path: Option<String>,
    pub novelty_ref_path: Option<String>,
    pub score_table_path: Option<String>,
    /// Median docking score of known actives, the hit-ratio cutoff.
    pub actives_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoSection {
    pub checkpoint_dir: String,
    pub log_path: String,
    pub random_seed: u64,
    /// Record real wall times in the training log instead of 0.0; off by
    /// default to keep logs byte-reproducible.
    pub log_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub conditionals: Vec<ConditionalEntry>,
    pub training: TrainingSection,
    pub data: DataSection,
    pub io: IoSection,
}

impl RunConfig {
    pub fn pretrain_default() -> RunConfig {
        let t = TrainConfig::pretrain_defaults();
        RunConfig {
            model: ModelSection {
                num_layers: 8,
                num_emb: 128,
                num_heads: 2,
                num_mlp_layers: 4,
                i2h_width: 1,
                num_thermometer_dim: NUM_THERMOMETER_DIM,
            },
            conditionals: pretraining_conditionals()
                .iter()
                .map(ConditionalEntry::from_spec)
                .collect(),
            training: TrainingSection {
                max_num_iter: t.max_num_iter,
                beta: t.beta,
                lambda1: t.lambda1,
                lambda2: t.lambda2,
                mix_ratio: t.mix_ratio,
                learning_rate: t.learning_rate,
                z_learning_rate: t.z_learning_rate,
                lr_decay: t.lr_decay,
                z_lr_decay: t.z_lr_decay,
                adam_beta1: t.adam_beta1,
                adam_beta2: t.adam_beta2,
                adam_eps: t.adam_eps,
                weight_decay: t.weight_decay,
                clip_grad: t.grad_clip,
                sampling_batch_size: t.sampling_batch_size,
                training_batch_size: t.training_batch_size,
                checkpoint_every: t.checkpoint_every,
                random_action_prob: t.random_action_prob,
                random_stop_prob: t.random_stop_prob,
                sample_temp: t.sample_temp,
                oob_percent: t.oob_percent,
                sigma_frac: t.sigma_frac,
                num_back_steps_max: t.num_back_steps_max,
                logz_recalibration_sigma: t.logz_recalibration_sigma,
                max_traj_len: 40,
                max_nodes: 45,
                max_edges: 50,
                tb_p_b_is_parameterized: t.p_b_is_parameterized,
                gfn_batch_shuffle: t.batch_shuffle,
                bootstrap_own_reward: t.bootstrap_own_reward,
                illegal_action_logreward: t.illegal_action_logreward,
                zinc_rad_scale: 1.0,
            },
            data: DataSection::default(),
            io: IoSection {
                checkpoint_dir: "checkpoints".into(),
                log_path: "train.log".into(),
                random_seed: t.seed,
                log_wall_time: false,
            },
        }
    }

    pub fn finetune_default() -> RunConfig {
        let mut cfg = RunConfig::pretrain_default();
        cfg.training.beta = 64.0;
        cfg.training.mix_ratio = 1.0;
        cfg.training.sampling_batch_size = 1024;
        cfg.training.checkpoint_every = 500;
        cfg.training.logz_recalibration_sigma = 0.1;
        cfg
    }

    /// A desk-scale setup small enough for examples and tests.
    pub fn toy() -> RunConfig {
        let mut cfg = RunConfig::pretrain_default();
        cfg.model.num_layers = 2;
        cfg.model.num_emb = 8;
        cfg.model.num_mlp_layers = 1;
        cfg.training.sampling_batch_size = 16;
        cfg.training.training_batch_size = 8;
        cfg.training.max_num_iter = 50;
        cfg.training.checkpoint_every = 25;
        cfg.io.random_seed = 7;
        cfg
    }

    pub fn num_properties(&self) -> usize {
        self.conditionals.len()
    }

    pub fn conditional_specs(&self) -> Result<Vec<ConditionalSpec>, ConfigError> {
        self.conditionals.iter().map(|c| c.to_spec()).collect()
    }

    pub fn to_policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            num_layers: self.model.num_layers,
            emb_dim: self.model.num_emb,
            num_heads: self.model.num_heads,
            num_mlp_layers: self.model.num_mlp_layers,
            i2h_width: self.model.i2h_width,
            cond_dim: crate::reward::ConditioningContext::encoding_len(self.conditionals.len()),
            leaky_slope: 0.01,
        }
    }

    pub fn to_train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            beta: t.beta,
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            mix_ratio: t.mix_ratio,
            learning_rate: t.learning_rate,
            z_learning_rate: t.z_learning_rate,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            weight_decay: t.weight_decay,
            lr_decay: t.lr_decay,
            z_lr_decay: t.z_lr_decay,
            grad_clip: t.clip_grad,
            sampling_batch_size: t.sampling_batch_size,
            training_batch_size: t.training_batch_size,
            max_num_iter: t.max_num_iter,
            seed: self.io.random_seed,
            checkpoint_every: t.checkpoint_every,
            random_action_prob: t.random_action_prob,
            random_stop_prob: t.random_stop_prob,
            sample_temp: t.sample_temp,
            oob_percent: t.oob_percent,
            sigma_frac: t.sigma_frac,
            num_back_steps_max: t.num_back_steps_max,
            logz_recalibration_sigma: t.logz_recalibration_sigma,
            p_b_is_parameterized: t.tb_p_b_is_parameterized,
            batch_shuffle: t.gfn_batch_shuffle,
            bootstrap_own_reward: t.bootstrap_own_reward,
            illegal_action_logreward: t.illegal_action_logreward,
        }
    }

    pub fn to_mdp_config(&self) -> MdpConfig {
        MdpConfig {
            max_nodes: self.training.max_nodes,
            max_edges: self.training.max_edges,
            max_traj_len: self.training.max_traj_len,
            ..MdpConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.model.num_thermometer_dim != NUM_THERMOMETER_DIM {
            return Err(ConfigError::Invalid(format!(
                "num_thermometer_dim must be {NUM_THERMOMETER_DIM}; the conditioning encoding is \
                 compiled for that width"
            )));
        }
        if self.conditionals.is_empty() {
            return Err(ConfigError::Invalid("at least one conditional is required".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.conditionals {
            if !seen.insert(c.property.to_string()) {
                return Err(ConfigError::Invalid(format!(
                    "conditional {} listed twice",
                    c.property
                )));
            }
        }
        self.conditional_specs()?;
        self.to_policy_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.to_train_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.training.max_nodes == 0 || self.training.max_edges == 0 {
            return Err(ConfigError::Invalid("graph caps must be positive".into()));
        }
        if self.training.max_traj_len == 0 {
            return Err(ConfigError::Invalid("max_traj_len must be positive".into()));
        }
        Ok(())
    }

    /// Parses overrides on top of the pretraining defaults. Returns the
    /// validated config and any warnings (accepted-but-inert keys).
    pub fn parse_str(text: &str) -> Result<(RunConfig, Vec<String>), ConfigError> {
        RunConfig::parse_str_with_base(RunConfig::pretrain_default(), text)
    }

    pub fn parse_str_with_base(
        base: RunConfig,
        text: &str,
    ) -> Result<(RunConfig, Vec<String>), ConfigError> {
        let mut e = Entries::scan(text)?;
        let mut cfg = base;
        let mut warnings = Vec::new();

        macro_rules! set {
            ($key:literal, $slot:expr, $parse:ident) => {
                if let Some((v, line)) = e.take($key) {
                    $slot = $parse(&v, line)?;
                }
            };
        }

        set!("model.num_layers", cfg.model.num_layers, parse_usize);
        set!("model.num_emb", cfg.model.num_emb, parse_usize);
        set!("model.num_heads", cfg.model.num_heads, parse_usize);
        set!("model.num_mlp_layers", cfg.model.num_mlp_layers, parse_usize);
        set!("model.i2h_width", cfg.model.i2h_width, parse_usize);
        set!("model.num_thermometer_dim", cfg.model.num_thermometer_dim, parse_usize);

        // The properties list replaces the conditional set; per-property
        // keys then override fields. Properties without built-in defaults
        // must spell out every field.
        let props: Vec<PropertyId> = match e.take("conditionals.properties") {
            Some((v, line)) => {
                let names: Vec<&str> = v
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .collect();
                if names.is_empty() {
                    return Err(ConfigError::Parse {
                        line,
                        msg: "conditionals.properties must list at least one property".into(),
                    });
                }
                names.iter().map(|n| PropertyId::parse(n)).collect()
            }
            None => cfg.conditionals.iter().map(|c| c.property.clone()).collect(),
        };
        let defaults: Vec<ConditionalEntry> =
            pretraining_conditionals().iter().map(ConditionalEntry::from_spec).collect();
        let mut entries = Vec::with_capacity(props.len());
        for p in props {
            let name = p.to_string();
            let range = match e.take(&format!("conditionals.{name}.range")) {
                Some((v, line)) => Some(parse_f64_pair(&v, line)?),
                None => None,
            };
            let d = match e.take(&format!("conditionals.{name}.d")) {
                Some((v, line)) => Some(parse_i8(&v, line)?),
                None => None,
            };
            let lambda = match e.take(&format!("conditionals.{name}.lambda")) {
                Some((v, line)) => Some(parse_f64(&v, line)?),
                None => None,
            };
            let bounds = match e.take(&format!("conditionals.{name}.bounds")) {
                Some((v, line)) => Some(parse_f64_quad(&v, line)?),
                None => None,
            };
            let seed_entry = cfg
                .conditionals
                .iter()
                .chain(defaults.iter())
                .find(|c| c.property == p)
                .cloned();
            let entry = match seed_entry {
                Some(mut base) => {
                    if let Some(r) = range {
                        base.range = r;
                    }
                    if let Some(d) = d {
                        base.d = d;
                    }
                    if let Some(l) = lambda {
                        base.lambda = l;
                    }
                    if let Some(b) = bounds {
                        base.bounds = b;
                    }
                    base
                }
                None => ConditionalEntry {
                    property: p,
                    range: range.ok_or_else(|| {
                        ConfigError::MissingKey(format!("conditionals.{name}.range"))
                    })?,
                    d: d.ok_or_else(|| ConfigError::MissingKey(format!("conditionals.{name}.d")))?,
                    lambda: lambda.ok_or_else(|| {
                        ConfigError::MissingKey(format!("conditionals.{name}.lambda"))
                    })?,
                    bounds: bounds.ok_or_else(|| {
                        ConfigError::MissingKey(format!("conditionals.{name}.bounds"))
                    })?,
                },
            };
            entries.push(entry);
        }
        cfg.conditionals = entries;

        set!("training.max_num_iter", cfg.training.max_num_iter, parse_usize);
        set!("training.beta", cfg.training.beta, parse_f64);
        set!("training.lambda1", cfg.training.lambda1, parse_f64);
        set!("training.lambda2", cfg.training.lambda2, parse_f64);
        set!("training.mix_ratio", cfg.training.mix_ratio, parse_f64);
        set!("training.learning_rate", cfg.training.learning_rate, parse_f64);
        set!("training.z_learning_rate", cfg.training.z_learning_rate, parse_f64);
        set!("training.lr_decay", cfg.training.lr_decay, parse_f64);
        set!("training.z_lr_decay", cfg.training.z_lr_decay, parse_f64);
        set!("training.adam_beta1", cfg.training.adam_beta1, parse_f64);
        set!("training.adam_beta2", cfg.training.adam_beta2, parse_f64);
        set!("training.adam_eps", cfg.training.adam_eps, parse_f64);
        set!("training.weight_decay", cfg.training.weight_decay, parse_f64);
        set!("training.clip_grad", cfg.training.clip_grad, parse_f64);
        set!("training.sampling_batch_size", cfg.training.sampling_batch_size, parse_usize);
        set!("training.training_batch_size", cfg.training.training_batch_size, parse_usize);
        set!("training.checkpoint_every", cfg.training.checkpoint_every, parse_usize);
        set!("training.random_action_prob", cfg.training.random_action_prob, parse_f64);
        set!("training.random_stop_prob", cfg.training.random_stop_prob, parse_f64);
        set!("training.sample_temp", cfg.training.sample_temp, parse_f64);
        set!("training.oob_percent", cfg.training.oob_percent, parse_f64);
        set!("training.sigma_frac", cfg.training.sigma_frac, parse_f64);
        set!(
            "training.num_back_steps_max",
            cfg.training.num_back_steps_max,
            parse_opt_usize
        );
        set!(
            "training.logz_recalibration_sigma",
            cfg.training.logz_recalibration_sigma,
            parse_f64
        );
        set!("training.max_traj_len", cfg.training.max_traj_len, parse_usize);
        set!("training.max_nodes", cfg.training.max_nodes, parse_usize);
        set!("training.max_edges", cfg.training.max_edges, parse_usize);
        set!(
            "training.tb_p_b_is_parameterized",
            cfg.training.tb_p_b_is_parameterized,
            parse_bool
        );
        set!("training.gfn_batch_shuffle", cfg.training.gfn_batch_shuffle, parse_bool);
        set!("training.bootstrap_own_reward", cfg.training.bootstrap_own_reward, parse_bool);
        set!(
            "training.illegal_action_logreward",
            cfg.training.illegal_action_logreward,
            parse_f64
        );
        if let Some((v, line)) = e.take("training.zinc_rad_scale") {
            cfg.training.zinc_rad_scale = parse_f64(&v, line)?;
            warnings.push("training.zinc_rad_scale is accepted but has no effect".into());
        }

        if let Some((v, _)) = e.take("data.dataset_path") {
            cfg.data.dataset_path = Some(v);
        }
        if let Some((v, _)) = e.take("data.novelty_ref_path") {
            cfg.data.novelty_ref_path = Some(v);
        }
        if let Some((v, _)) = e.take("data.score_table_path") {
            cfg.data.score_table_path = Some(v);
        }
        if let Some((v, line)) = e.take("data.actives_median") {
            cfg.data.actives_median = Some(parse_f64(&v, line)?);
        }

        if let Some((v, _)) = e.take("io.checkpoint_dir") {
            cfg.io.checkpoint_dir = v;
        }
        if let Some((v, _)) = e.take("io.log_path") {
            cfg.io.log_path = v;
        }
        set!("io.random_seed", cfg.io.random_seed, parse_u64);
        set!("io.log_wall_time", cfg.io.log_wall_time, parse_bool);

        if let Some((key, line)) = e.first_unused() {
            return Err(ConfigError::UnknownKey(format!("{key} (line {line})")));
        }
        cfg.validate()?;
        Ok((cfg, warnings))
    }

    pub fn load(path: &Path) -> Result<(RunConfig, Vec<String>), ConfigError> {
        RunConfig::parse_str(&fs::read_to_string(path)?)
    }

    pub fn load_with_base(
        base: RunConfig,
        path: &Path,
    ) -> Result<(RunConfig, Vec<String>), ConfigError> {
        RunConfig::parse_str_with_base(base, &fs::read_to_string(path)?)
    }

    pub fn write_str(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "model.num_layers = {}", self.model.num_layers);
        let _ = writeln!(w, "model.num_emb = {}", self.model.num_emb);
        let _ = writeln!(w, "model.num_heads = {}", self.model.num_heads);
        let _ = writeln!(w, "model.num_mlp_layers = {}", self.model.num_mlp_layers);
        let _ = writeln!(w, "model.i2h_width = {}", self.model.i2h_width);
        let _ = writeln!(w, "model.num_thermometer_dim = {}", self.model.num_thermometer_dim);

        let names: Vec<String> = self.conditionals.iter().map(|c| c.property.to_string()).collect();
        let _ = writeln!(w, "conditionals.properties = {}", names.join(" "));
        for c in &self.conditionals {
            let p = c.property.to_string();
            let _ = writeln!(w, "conditionals.{p}.range = {} {}", c.range.0, c.range.1);
            let _ = writeln!(w, "conditionals.{p}.d = {}", c.d);
            let _ = writeln!(w, "conditionals.{p}.lambda = {}", c.lambda);
            let _ = writeln!(
                w,
                "conditionals.{p}.bounds = {} {} {} {}",
                c.bounds.0, c.bounds.1, c.bounds.2, c.bounds.3
            );
        }

        let t = &self.training;
        let _ = writeln!(w, "training.max_num_iter = {}", t.max_num_iter);
        let _ = writeln!(w, "training.beta = {}", t.beta);
        let _ = writeln!(w, "training.lambda1 = {}", t.lambda1);
        let _ = writeln!(w, "training.lambda2 = {}", t.lambda2);
        let _ = writeln!(w, "training.mix_ratio = {}", t.mix_ratio);
        let _ = writeln!(w, "training.learning_rate = {}", t.learning_rate);
        let _ = writeln!(w, "training.z_learning_rate = {}", t.z_learning_rate);
        let _ = writeln!(w, "training.lr_decay = {}", t.lr_decay);
        let _ = writeln!(w, "training.z_lr_decay = {}", t.z_lr_decay);
        let _ = writeln!(w, "training.adam_beta1 = {}", t.adam_beta1);
        let _ = writeln!(w, "training.adam_beta2 = {}", t.adam_beta2);
        let _ = writeln!(w, "training.adam_eps = {}", t.adam_eps);
        let _ = writeln!(w, "training.weight_decay = {}", t.weight_decay);
        let _ = writeln!(w, "training.clip_grad = {}", t.clip_grad);
        let _ = writeln!(w, "training.sampling_batch_size = {}", t.sampling_batch_size);
        let _ = writeln!(w, "training.training_batch_size = {}", t.training_batch_size);
        let _ = writeln!(w, "training.checkpoint_every = {}", t.checkpoint_every);
        let _ = writeln!(w, "training.random_action_prob = {}", t.random_action_prob);
        let _ = writeln!(w, "training.random_stop_prob = {}", t.random_stop_prob);
        let _ = writeln!(w, "training.sample_temp = {}", t.sample_temp);
        let _ = writeln!(w, "training.oob_percent = {}", t.oob_percent);
        let _ = writeln!(w, "training.sigma_frac = {}", t.sigma_frac);
        match t.num_back_steps_max {
            Some(n) => {
                let _ = writeln!(w, "training.num_back_steps_max = {n}");
            }
            None => {
                let _ = writeln!(w, "training.num_back_steps_max = none");
            }
        }
        let _ = writeln!(w, "training.logz_recalibration_sigma = {}", t.logz_recalibration_sigma);
        let _ = writeln!(w, "training.max_traj_len = {}", t.max_traj_len);
        let _ = writeln!(w, "training.max_nodes = {}", t.max_nodes);
        let _ = writeln!(w, "training.max_edges = {}", t.max_edges);
        let _ = writeln!(w, "training.tb_p_b_is_parameterized = {}", t.tb_p_b_is_parameterized);
        let _ = writeln!(w, "training.gfn_batch_shuffle = {}", t.gfn_batch_shuffle);
        let _ = writeln!(w, "training.bootstrap_own_reward = {}", t.bootstrap_own_reward);
        let _ = writeln!(w, "training.illegal_action_logreward = {}", t.illegal_action_logreward);
        let _ = writeln!(w, "training.zinc_rad_scale = {}", t.zinc_rad_scale);

        if let Some(p) = &self.data.dataset_path {
            let _ = writeln!(w, "data.dataset_path = {p}");
        }
        if let Some(p) = &self.data.novelty_ref_path {
            let _ = writeln!(w, "data.novelty_ref_path = {p}");
        }
        if let Some(p) = &self.data.score_table_path {
            let _ = writeln!(w, "data.score_table_path = {p}");
        }
        if let Some(m) = self.data.actives_median {
            let _ = writeln!(w, "data.actives_median = {m}");
        }

        let _ = writeln!(w, "io.checkpoint_dir = {}", self.io.checkpoint_dir);
        let _ = writeln!(w, "io.log_path = {}", self.io.log_path);
        let _ = writeln!(w, "io.random_seed = {}", self.io.random_seed);
        let _ = writeln!(w, "io.log_wall_time = {}", self.io.log_wall_time);
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        Ok(fs::write(path, self.write_str())?)
    }
}

/// Raw `key = value` lines with consumption tracking: whatever nobody takes
/// is an unknown key.
struct Entries {
    items: Vec<(String, String, usize)>,
    used: Vec<bool>,
}

impl Entries {
    fn scan(text: &str) -> Result<Entries, ConfigError> {
        let mut items: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(ConfigError::Parse { line, msg: "expected `key = value`".into() });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Parse { line, msg: "empty key".into() });
            }
            if items.iter().any(|(k2, _, _)| *k2 == key) {
                return Err(ConfigError::DuplicateKey(key));
            }
            items.push((key, v.trim().to_string(), line));
        }
        let used = vec![false; items.len()];
        Ok(Entries { items, used })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        for (i, (k, v, line)) in self.items.iter().enumerate() {
            if k == key {
                self.used[i] = true;
                return Some((v.clone(), *line));
            }
        }
        None
    }

    fn first_unused(&self) -> Option<(&str, usize)> {
        self.items
            .iter()
            .zip(&self.used)
            .find(|(_, &u)| !u)
            .map(|((k, _, line), _)| (k.as_str(), *line))
    }
}

fn parse_usize(v: &str, line: usize) -> Result<usize, ConfigError> {
    v.parse().map_err(|e| ConfigError::Parse { line, msg: format!("bad integer `{v}`: {e}") })
}

fn parse_u64(v: &str, line: usize) -> Result<u64, ConfigError> {
    v.parse().map_err(|e| ConfigError::Parse { line, msg: format!("bad integer `{v}`: {e}") })
}

fn parse_i8(v: &str, line: usize) -> Result<i8, ConfigError> {
    v.parse().map_err(|e| ConfigError::Parse { line, msg: format!("bad integer `{v}`: {e}") })
}

fn parse_f64(v: &str, line: usize) -> Result<f64, ConfigError> {
    v.parse().map_err(|e| ConfigError::Parse { line, msg: format!("bad number `{v}`: {e}") })
}

fn parse_bool(v: &str, line: usize) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::Parse { line, msg: format!("bad bool `{v}` (true/false)") }),
    }
}

fn parse_opt_usize(v: &str, line: usize) -> Result<Option<usize>, ConfigError> {
    if v == "none" {
        Ok(None)
    } else {
        parse_usize(v, line).map(Some)
    }
}

fn parse_f64_pair(v: &str, line: usize) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(ConfigError::Parse { line, msg: format!("expected two numbers, got `{v}`") });
    }
    Ok((parse_f64(parts[0], line)?, parse_f64(parts[1], line)?))
}

fn parse_f64_quad(v: &str, line: usize) -> Result<(f64, f64, f64, f64), ConfigError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(ConfigError::Parse { line, msg: format!("expected four numbers, got `{v}`") });
    }
    Ok((
        parse_f64(parts[0], line)?,
        parse_f64(parts[1], line)?,
        parse_f64(parts[2], line)?,
        parse_f64(parts[3], line)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for cfg in [
            RunConfig::pretrain_default(),
            RunConfig::finetune_default(),
            RunConfig::toy(),
        ] {
            let text = cfg.write_str();
            let (back, warnings) = RunConfig::parse_str(&text).unwrap();
            assert_eq!(back, cfg);
            // zinc_rad_scale appears in the full dump.
            assert_eq!(warnings.len(), 1);
            // A second trip is byte-stable.
            assert_eq!(back.write_str(), text);
        }
    }

    #[test]
    fn round_trips_with_data_section_and_back_step_cap() {
        let mut cfg = RunConfig::pretrain_default();
        cfg.data.dataset_path = Some("data/corpus_1k.smi".into());
        cfg.data.score_table_path = Some("data/scores.tsv".into());
        cfg.data.actives_median = Some(-8.25);
        cfg.training.num_back_steps_max = Some(25);
        let (back, _) = RunConfig::parse_str(&cfg.write_str()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_override_defaults() {
        let (cfg, warnings) =
            RunConfig::parse_str("training.beta = 32\nio.random_seed = 99\n").unwrap();
        assert_eq!(cfg.training.beta, 32.0);
        assert_eq!(cfg.io.random_seed, 99);
        // Everything else keeps the pretraining defaults.
        assert_eq!(cfg.training.lambda2, 20.0);
        assert_eq!(cfg.conditionals.len(), 4);
        assert!(warnings.is_empty());
        // The seed flows into the trainer config.
        assert_eq!(cfg.to_train_config().seed, 99);
    }

    #[test]
    fn finetune_base_applies() {
        let (cfg, _) =
            RunConfig::parse_str_with_base(RunConfig::finetune_default(), "training.beta = 48\n")
                .unwrap();
        assert_eq!(cfg.training.beta, 48.0);
        assert_eq!(cfg.training.sampling_batch_size, 1024);
        assert_eq!(cfg.training.mix_ratio, 1.0);
    }

    #[test]
    fn property_lists_accept_commas_or_spaces() {
        let (a, _) = RunConfig::parse_str("conditionals.properties = qed, tpsa\n").unwrap();
        let (b, _) = RunConfig::parse_str("conditionals.properties = qed tpsa\n").unwrap();
        assert_eq!(a.conditionals, b.conditionals);
    }

    #[test]
    fn conditionals_list_replaces_the_set() {
        let (cfg, _) = RunConfig::parse_str(
            "conditionals.properties = qed tpsa\nconditionals.qed.range = 0.5 0.7\n",
        )
        .unwrap();
        assert_eq!(cfg.conditionals.len(), 2);
        assert_eq!(cfg.conditionals[0].property, PropertyId::Qed);
        assert_eq!(cfg.conditionals[0].range, (0.5, 0.7));
        // Unmentioned fields keep the built-in defaults.
        assert_eq!(cfg.conditionals[0].bounds, (0.2, 0.9, 0.0, 1.0));
        assert_eq!(cfg.conditionals[1].property, PropertyId::Tpsa);
        assert_eq!(cfg.conditionals[1].range, (60.0, 100.0));
        // cond_dim follows the property count.
        assert_eq!(cfg.to_policy_config().cond_dim, 2 * 35);
    }

    #[test]
    fn property_without_defaults_needs_every_field() {
        let err = RunConfig::parse_str("conditionals.properties = molwt\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingKey(_)));

        let (cfg, _) = RunConfig::parse_str(
            "conditionals.properties = molwt\n\
             conditionals.molwt.range = 250 350\n\
             conditionals.molwt.d = 0\n\
             conditionals.molwt.lambda = 30\n\
             conditionals.molwt.bounds = 100 500 0 800\n",
        )
        .unwrap();
        assert_eq!(cfg.conditionals[0].property, PropertyId::MolWt);
        assert_eq!(cfg.conditionals[0].bounds, (100.0, 500.0, 0.0, 800.0));
    }

    #[test]
    fn unknown_duplicate_and_malformed_keys_are_rejected() {
        assert!(matches!(
            RunConfig::parse_str("model.frobnicate = 3\n").unwrap_err(),
            ConfigError::UnknownKey(_)
        ));
        assert!(matches!(
            RunConfig::parse_str("conditionals.qed.frob = 1\n").unwrap_err(),
            ConfigError::UnknownKey(_)
        ));
        assert!(matches!(
            RunConfig::parse_str("training.beta = 1\ntraining.beta = 2\n").unwrap_err(),
            ConfigError::DuplicateKey(_)
        ));
        let err = RunConfig::parse_str("just some words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
    }

    #[test]
    fn typed_values_are_enforced_with_line_numbers() {
        let err = RunConfig::parse_str("\n# c\nmodel.num_layers = banana\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }));
        assert!(matches!(
            RunConfig::parse_str("io.log_wall_time = maybe\n").unwrap_err(),
            ConfigError::Parse { .. }
        ));
        assert!(matches!(
            RunConfig::parse_str("conditionals.qed.bounds = 1 2 3\n").unwrap_err(),
            ConfigError::Parse { .. }
        ));
    }

    #[test]
    fn inert_knob_warns() {
        let (_, warnings) = RunConfig::parse_str("training.zinc_rad_scale = 2\n").unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("zinc_rad_scale"));
    }

    #[test]
    fn semantic_validation_runs_on_load() {
        for text in [
            "model.num_thermometer_dim = 8\n",
            "conditionals.qed.d = 5\n",
            "conditionals.qed.range = 0.9 0.1\n",
            "training.bootstrap_own_reward = true\n",
            // emb not divisible by heads
            "model.num_emb = 9\n",
            // sampling batch not a multiple of training batch
            "training.sampling_batch_size = 7\ntraining.training_batch_size = 4\n",
        ] {
            let err = RunConfig::parse_str(text).unwrap_err();
            assert!(
                matches!(err, ConfigError::Invalid(_)),
                "expected Invalid for {text:?}, got {err:?}"
            );
        }
    }

    #[test]
    fn conversions_carry_the_caps() {
        let cfg = RunConfig::pretrain_default();
        let mdp = cfg.to_mdp_config();
        assert_eq!((mdp.max_nodes, mdp.max_edges, mdp.max_traj_len), (45, 50, 40));
        let t = cfg.to_train_config();
        assert_eq!(t.seed, 1_428_570);
        assert_eq!(t.beta, 96.0);
        let p = cfg.to_policy_config();
        assert_eq!(p.cond_dim, 4 * 35);
        assert_eq!(p.emb_dim, 128);
        let specs = cfg.conditional_specs().unwrap();
        assert_eq!(specs.len(), 4);
        assert_eq!(specs[1].d, 1);
    }
}
