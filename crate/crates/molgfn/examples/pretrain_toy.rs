//! A miniature pretraining run: trajectory balance plus likelihood
//! regularization on a hybrid stream of online rollouts and deconstructed
//! corpus molecules. Finishes in under a minute on a laptop.
//!
//!     cargo run --example pretrain_toy

use molgfn::config::RunConfig;
use molgfn::policy::PolicyParams;
use molgfn::smiles::load_smi_file;
use molgfn::trainer::{Mode, TrainIo, Trainer};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Start from the toy preset and shrink the state space so trajectories
    // stay short. Everything here could equally come from a config file.
    let mut cfg = RunConfig::toy();
    cfg.training.max_nodes = 8;
    cfg.training.max_edges = 9;
    cfg.training.max_traj_len = 26;
    cfg.training.max_num_iter = 60;
    cfg.training.checkpoint_every = 30;
    cfg.validate()?;

    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus_1k.smi");
    let dataset: Vec<_> = load_smi_file(&corpus, true)?
        .records
        .into_iter()
        .map(|r| r.graph)
        .filter(|g| {
            g.node_count() <= cfg.training.max_nodes && g.edge_count() <= cfg.training.max_edges
        })
        .collect();
    println!("offline dataset: {} corpus molecules within the caps", dataset.len());

    let params = PolicyParams::init(cfg.to_policy_config(), cfg.io.random_seed)?;
    let n_params: usize = params.tensors().iter().map(|t| t.data.len()).sum();
    println!("policy: {n_params} parameters");

    let mut trainer = Trainer::new(
        cfg.to_train_config(),
        Mode::Pretrain,
        cfg.to_mdp_config(),
        cfg.conditional_specs()?,
        params,
    )?
    .with_dataset(dataset);

    // Drive the loop in slices so we can print a loss curve.
    println!("\n step       total          tb         mle   mean R");
    for _ in 0..6 {
        let rec = trainer.run(10, &mut TrainIo::default())?;
        println!(
            " {:>4}  {:>10.1}  {:>10.1}  {:>10.2}   {:.4}",
            trainer.step_count(),
            rec.total,
            rec.tb,
            rec.mle,
            rec.mean_reward
        );
    }

    let dir = tempfile::tempdir()?;
    trainer.params.save(&dir.path().join("toy.ckpt"))?;
    println!("\nsaved checkpoint to {}", dir.path().join("toy.ckpt").display());
    Ok(())
}
