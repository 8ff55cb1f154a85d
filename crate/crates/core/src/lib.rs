//! Deep resistive networks: steady-state simulation, compilation from ReLU
//! perceptrons and training by equilibrium propagation.
//!
//! A network is a layered circuit of voltage sources, resistors and ideal
//! diodes. Its steady state minimizes the dissipated power over the set of
//! potentials allowed by the diodes, which [`solver`] computes by exact
//! block coordinate descent.

pub mod compile;
pub mod ep;
pub mod error;
pub mod experiment;
pub mod idx;
pub mod model;
pub mod netlist;
pub mod relu;
pub mod rng;
pub mod solver;

pub use compile::{compile, layer_gain, layer_gains, verify_compilation, CompileConfig, DeviationReport, LayerGains};
pub use ep::{conductance_stats, ep_gradient, nudged_energy, nudged_solve, EpConfig, EpGradient, Targets, Trainer};
pub use error::{DrnError, Result};
pub use experiment::{demo_universal, run_experiment, Arch, DatasetId, ExperimentConfig, RunMetrics};
pub use idx::{parse_idx, IdxDataset};
pub use model::{encode_input, random_drn, DrnParams, DrnState, UnitPolarity};
pub use relu::{init_relu_net, ReluActivations, ReluNet};
pub use solver::{
    energy, kcl_residual, layer_update, max_principle_check, solve_steady_state, SolverConfig, SteadyStateCert,
    UpdateMode,
};
