//! Drives the `molgfn` command-line flow end to end in a temp directory:
//! write a config, pretrain, sample from the checkpoint, evaluate the sample
//! file. The same calls work from a shell:
//!
//!     molgfn pretrain --config run.cfg
//!     molgfn sample   --config run.cfg --checkpoint ckpts/latest.ckpt \
//!                     --n 40 --out samples.tsv
//!     molgfn evaluate samples.tsv --config run.cfg
//!
//!     cargo run --example end_to_end_cli

use std::fs;

fn molgfn(args: &[&str]) {
    let mut argv = vec!["molgfn"];
    argv.extend_from_slice(args);
    let code = molgfn::cli::run(argv);
    assert_eq!(code, 0, "`molgfn {}` exited with {code}", args.join(" "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();

    // Configs are flat key = value files; anything omitted keeps the
    // pretraining defaults. Paths here are absolute so cwd doesn't matter.
    let config = root.join("run.cfg");
    fs::write(
        &config,
        format!(
            "model.num_layers = 1\n\
             model.num_emb = 8\n\
             model.num_heads = 1\n\
             model.num_mlp_layers = 1\n\
             conditionals.properties = qed, numrings\n\
             training.max_num_iter = 20\n\
             training.checkpoint_every = 10\n\
             training.sampling_batch_size = 8\n\
             training.training_batch_size = 4\n\
             training.mix_ratio = 1\n\
             training.max_nodes = 7\n\
             training.max_edges = 8\n\
             training.max_traj_len = 22\n\
             io.random_seed = 5\n\
             io.checkpoint_dir = {}\n\
             io.log_path = {}\n",
            root.join("ckpts").display(),
            root.join("train.log").display()
        ),
    )?;

    println!("pretraining 20 toy steps...");
    molgfn(&["pretrain", "--config", config.to_str().unwrap()]);
    println!("  log:\n{}", indent(&fs::read_to_string(root.join("train.log"))?));

    let ckpt = root.join("ckpts/latest.ckpt");
    let samples = root.join("samples.tsv");
    println!("sampling 40 molecules...");
    molgfn(&[
        "sample",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--n",
        "40",
        "--out",
        samples.to_str().unwrap(),
    ]);
    let body = fs::read_to_string(&samples)?;
    println!("  first lines (smiles, reward, qed, numrings):");
    for line in body.lines().take(4) {
        println!("    {line}");
    }

    println!("evaluating...");
    let report = root.join("report.txt");
    molgfn(&[
        "evaluate",
        samples.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    println!("{}", indent(&fs::read_to_string(&report)?));
    Ok(())
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("  {l}\n")).collect()
}
