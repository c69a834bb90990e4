#![allow(dead_code)]

use dadmm_core::graph::{greedy_color, AgentGraph, ProperColoring};
use dadmm_core::lasso::{generate_lasso_dataset, LassoDatasetHeader, LassoProblem};
use dadmm_core::linreg::{generate_linreg_dataset, LinRegDatasetHeader, LinRegProblem};
use dadmm_core::{generate_erdos_renyi, TrainingDataset};

pub fn small_graph(agents: usize, seed: u64) -> (AgentGraph, ProperColoring) {
    let graph = generate_erdos_renyi(agents, 0.5, seed).unwrap();
    let coloring = greedy_color(&graph);
    (graph, coloring)
}

pub fn lasso_data(agents: usize, n: usize, m: usize, samples: usize, seed: u64) -> TrainingDataset<LassoProblem> {
    generate_lasso_dataset(&LassoDatasetHeader {
        num_agents: agents,
        n,
        m,
        sparsity: 0.25,
        snr_db: 2.0,
        seed,
        num_train: samples,
        num_test: 0,
    })
    .unwrap()
    .to_training()
    .unwrap()
}

pub fn linreg_data(
    agents: usize,
    d: usize,
    per_agent: usize,
    samples: usize,
    seed: u64,
) -> TrainingDataset<LinRegProblem> {
    generate_linreg_dataset(&LinRegDatasetHeader {
        num_agents: agents,
        d,
        samples_per_agent: per_agent,
        noise_std: 0.5,
        seed,
        num_train: samples,
        num_test: 0,
    })
    .unwrap()
    .to_training()
    .unwrap()
}

/// Deterministic jitter so every schedule entry differs.
pub fn jitter(values: &mut [f64], amount: f64) {
    for (i, v) in values.iter_mut().enumerate() {
        let u = ((i as f64 * 0.618_033_988_75).fract() - 0.5) * 2.0;
        *v *= 1.0 + amount * u;
    }
}
