//! Simulation and statistical verification for random-walk Polya urns:
//! each new ball copies a uniformly chosen existing ball's color and adds
//! an independent displacement. The library covers displacement models,
//! urn growth, empirical-measure comparisons, the subdivision schedule
//! T_n = floor(e^{c n^kappa}), coupling diagnostics at box resolution, and
//! the experiment protocols behind the `urnlab` binary.

pub mod bigexp;
pub mod config;
pub mod coupling;
pub mod displacement;
pub mod error;
pub mod experiments;
pub mod measure;
pub mod rng;
pub mod schedule;
pub mod urn;
