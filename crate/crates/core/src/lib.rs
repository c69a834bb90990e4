//! Distributed ADMM over colored agent graphs, unfolded into a fixed-depth
//! pipeline whose per-iteration hyperparameters are learned from data.
//!
//! * [`graph`]: agent topology, Erdős–Rényi sampling, greedy coloring.
//! * [`engine`]: the color-scheduled primal/dual iteration and run traces.
//! * [`lasso`], [`linreg`]: the two problem instances and their data.
//! * [`schedule`]: per-iteration (and per-agent) hyperparameters, θ files.
//! * [`unfold`], [`train`]: loss, reverse-mode gradients, Adam training.
//! * [`experiment`]: config-driven pipelines behind the `dadmm` CLI.

pub mod dataset;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod lasso;
pub mod linalg;
pub mod linreg;
pub mod schedule;
pub mod train;
pub mod unfold;

pub use dataset::{Sample, TrainingDataset};
pub use engine::{disagreement, run_dadmm, AgentState, NetworkState, Problem, RunOptions, RunTrace, StopRule};
pub use error::{Error, Result};
pub use graph::{generate_erdos_renyi, greedy_color, validate_coloring, AgentGraph, ProperColoring};
pub use lasso::{LassoDataset, LassoProblem};
pub use linreg::{LinRegDataset, LinRegProblem};
pub use schedule::{HyperparameterSchedule, ProblemKind, ShareMode};
pub use train::{train, train_sequential, TrainOptions, TrainingOutcome};
pub use unfold::{loss_gradient, mse_loss, GradientReport};
