//! Prints the descriptor set for a handful of molecules and a pairwise
//! fingerprint-similarity matrix.
//!
//!     cargo run --example descriptor_tour

use molgfn::descriptors::{
    fingerprint, tanimoto, Evaluator, PropertyId, DEFAULT_FP_RADIUS, DEFAULT_FP_WIDTH,
};
use molgfn::smiles::parse;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let names_and_smiles = [
        ("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
        ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
        ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
        ("nicotinamide", "NC(=O)c1cccnc1"),
        ("octanol", "CCCCCCCCO"),
        ("benzene", "c1ccccc1"),
    ];
    let evaluator = Evaluator::new();
    let props = [
        PropertyId::MolWt,
        PropertyId::Tpsa,
        PropertyId::LogP,
        PropertyId::Qed,
        PropertyId::Sas,
        PropertyId::NumRings,
    ];

    print!("{:<14}", "molecule");
    for p in &props {
        print!("{:>9}", p.to_string());
    }
    println!();
    let mut graphs = Vec::new();
    for (name, smi) in names_and_smiles {
        let g = parse(smi)?;
        print!("{name:<14}");
        for p in &props {
            print!("{:>9.2}", evaluator.eval(p, &g)?);
        }
        println!();
        graphs.push((name, g));
    }

    println!("\npairwise Tanimoto similarity (radius-2 fingerprints):");
    let fps: Vec<_> = graphs
        .iter()
        .map(|(_, g)| fingerprint(g, DEFAULT_FP_RADIUS, DEFAULT_FP_WIDTH).unwrap())
        .collect();
    print!("{:<14}", "");
    for (name, _) in &graphs {
        print!("{:>9.8}", name);
    }
    println!();
    for (i, (name, _)) in graphs.iter().enumerate() {
        print!("{name:<14}");
        for fp in &fps {
            print!("{:>9.3}", tanimoto(&fps[i], fp)?);
        }
        println!();
    }
    Ok(())
}
