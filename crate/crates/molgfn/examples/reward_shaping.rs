//! Plots the goal-conditioned property reward and shows how direction flags,
//! the multiplicative aggregate, and the thermometer encoding behave.
//!
//!     cargo run --example reward_shaping

use molgfn::descriptors::{Evaluator, PropertyId};
use molgfn::reward::{
    aggregate_reward, pretraining_conditionals, property_reward, thermometer_encode,
    ConditioningContext, PropertyConditional, NUM_THERMOMETER_DIM,
};
use molgfn::smiles::parse;

fn ascii_curve(label: &str, cond: &PropertyConditional, lo: f64, hi: f64) {
    println!("{label}");
    for i in 0..=20 {
        let p = lo + (hi - lo) * i as f64 / 20.0;
        let r = property_reward(p, cond);
        let bar = "#".repeat((r * 40.0).round() as usize);
        println!("  p={p:6.1}  r={r:5.3} {bar}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A TPSA goal of [60, 100]. Inside the range the reward is 1; outside it
    // decays smoothly.
    let inside = PropertyConditional::new(PropertyId::Tpsa, 60.0, 100.0, 0, 20.0)?;
    ascii_curve("d = 0 (hit the range [60, 100]):", &inside, 0.0, 160.0);

    // Directional goals reuse the range but push toward one edge.
    let lower = PropertyConditional::new(PropertyId::Tpsa, 60.0, 100.0, -1, 20.0)?;
    let higher = PropertyConditional::new(PropertyId::Tpsa, 60.0, 100.0, 1, 20.0)?;
    println!("\npreferences at sample points (d=-1 wants low, d=+1 wants high):");
    for p in [40.0, 60.0, 80.0, 100.0, 120.0] {
        println!(
            "  p={p:6.1}  d=-1 -> {:5.3}   d=0 -> {:5.3}   d=+1 -> {:5.3}",
            property_reward(p, &lower),
            property_reward(p, &inside),
            property_reward(p, &higher)
        );
    }

    // The aggregate multiplies one factor per conditioned property.
    let specs = pretraining_conditionals();
    let ctx = ConditioningContext::fixed(&specs)?;
    let evaluator = Evaluator::new();
    println!("\naggregate reward under the four pretraining conditionals:");
    for smi in ["CC(=O)Nc1ccc(O)cc1", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "CCCCCCCCO"] {
        let g = parse(smi)?;
        println!("  {smi:<28} R = {:.6}", aggregate_reward(&g, &ctx, &evaluator, None)?);
    }

    // Conditioning ranges enter the policy through thermometer encodings.
    let enc = thermometer_encode(80.0, 0.0, 150.0, NUM_THERMOMETER_DIM);
    let cells: Vec<String> = enc.iter().map(|v| format!("{v:.2}")).collect();
    println!("\nthermometer_encode(80 | [0, 150], {NUM_THERMOMETER_DIM} dims):");
    println!("  [{}]", cells.join(", "));
    println!("\npolicy conditioning vector length for 4 properties: {}",
        ConditioningContext::encoding_len(4));
    Ok(())
}
