//! Builds a molecule action by action inside the construction MDP, then
//! deconstructs it back to the empty state and replays the reversed
//! trajectory to recover the same molecule.
//!
//!     cargo run --example assemble_and_replay

use molgfn::mdp::{apply, deconstruct, forward_actions, replay, Action, MdpConfig, State};
use molgfn::molgraph::{BondOrder, Element};
use molgfn::smiles::{canonical_key, write};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = MdpConfig::default();

    // Acetic acid, one action at a time. Every prefix is a legal state and
    // the action set is masked so valences can never break.
    let script = [
        Action::AddNode { attach: None, element: Element::C },
        Action::AddNode { attach: Some(0), element: Element::C },
        Action::SetEdgeAttr { edge: 0, order: BondOrder::Single },
        Action::AddNode { attach: Some(1), element: Element::O },
        Action::SetEdgeAttr { edge: 1, order: BondOrder::Double },
        Action::AddNode { attach: Some(1), element: Element::O },
        Action::SetEdgeAttr { edge: 2, order: BondOrder::Single },
        Action::Stop,
    ];
    let mut state = State::empty();
    for (t, action) in script.iter().enumerate() {
        let legal = forward_actions(&state, t, &cfg)?;
        assert!(legal.contains(action), "script step {t} is not legal");
        println!(
            "step {t}: {:>2} atoms, {:>2} legal actions, taking {action:?}",
            state.graph.node_count(),
            legal.len()
        );
        state = apply(&state, action)?;
    }
    let acetic = state.graph.clone();
    println!("built: {}\n", write(&acetic)?);

    // Deconstruction walks backward actions down to the empty graph. The
    // chooser picks among legal backward actions; a closure works.
    let mut first = |_: &State, _: &[Action]| 0usize;
    let traj = deconstruct(&acetic, None, &cfg, &mut first, None)?;
    println!("deconstruction found a {}-step construction trajectory:", traj.len());
    for (t, action) in traj.actions.iter().enumerate() {
        println!("  {t}: {action:?}");
    }

    // The trajectory is already forward-ordered; replaying it from the empty
    // state must land on the same canonical molecule.
    let replayed = replay(&State::empty(), &traj.actions, &cfg)?;
    assert!(replayed.terminal);
    assert_eq!(canonical_key(replayed.final_graph()), canonical_key(&acetic));
    println!("replay reached {} again", write(replayed.final_graph())?);
    Ok(())
}
