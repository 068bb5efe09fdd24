//! Atom-level GFlowNets for conditional molecular graph generation.
//!
//! The crate builds molecules atom by atom inside a valence-masked
//! construction/deconstruction MDP, scores them with goal-conditioned
//! multiplicative rewards over cheap molecular descriptors, and trains a
//! graph-attention policy with trajectory balance (hybrid online/offline,
//! MLE-regularized) or finetunes it against a frozen prior with relative
//! trajectory balance. An evaluation suite covers the usual generative
//! chemistry metrics (diversity, #modes, #circles, success rate, ...).
//!
//! Start with the runnable examples (`cargo run --example <name>`): each one
//! walks a single capability end to end. The `molgfn` binary wraps the same
//! API behind `pretrain` / `finetune` / `sample` / `evaluate` subcommands.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod descriptors;
pub mod mdp;
pub mod metrics;
pub mod molgraph;
pub mod policy;
pub mod reward;
pub mod smiles;
pub mod trainer;

pub use molgraph::{BondOrder, Chirality, Element, MolGraph};
