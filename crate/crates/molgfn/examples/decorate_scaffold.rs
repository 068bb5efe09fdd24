//! Grows molecules around a frozen scaffold: episodes start from a seed
//! molecule whose atoms and bonds can never be edited or removed, so every
//! sample contains the core as a subgraph at the original indices.
//!
//!     cargo run --example decorate_scaffold

use molgfn::mdp::{backward_actions, MdpConfig, State};
use molgfn::molgraph::Element;
use molgfn::policy::PolicyParams;
use molgfn::reward::pretraining_conditionals;
use molgfn::trainer::sample_terminals;
use molgfn::smiles::{parse, write};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mdp_cfg = MdpConfig {
        max_nodes: 11,
        max_edges: 13,
        max_traj_len: 30,
        enable_node_attrs: false,
        ..Default::default()
    };
    let benzene = parse("c1ccccc1")?;
    let s0 = State::from_scaffold(benzene.clone(), &mdp_cfg)?;
    // The seed is a source state: deconstruction refuses to cross it.
    assert!(matches!(backward_actions(&s0, &mdp_cfg), Err(molgfn::mdp::MdpError::AtSeed)));
    println!(
        "scaffold {} frozen: {} nodes, {} edges; backward navigation stops at the seed",
        write(&benzene)?,
        benzene.node_count(),
        benzene.edge_count(),
    );

    let specs = pretraining_conditionals();
    let params = PolicyParams::init(molgfn::policy::PolicyConfig::desk(
        molgfn::reward::ConditioningContext::encoding_len(specs.len()),
    ), 3)?;
    let samples = sample_terminals(&params, &specs, &mdp_cfg, &s0, 12, 5, 1.0)?;

    println!("\n12 decorated samples (first 6 atoms are always the benzene core):");
    for (graph, _, _) in &samples {
        // The frozen core sits at indices 0..6 with its bonds intact.
        assert!(graph.node_count() >= 6);
        for i in 0..6 {
            assert_eq!(graph.atom(i).element, Element::C);
        }
        println!("  {}", write(graph)?);
    }
    Ok(())
}
