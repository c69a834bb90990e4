//! Fixed benchmark instances.

use dadmm_core::lasso::{generate_lasso_dataset, LassoDatasetHeader};
use dadmm_core::linreg::{generate_linreg_dataset, LinRegDatasetHeader};
use dadmm_core::{
    generate_erdos_renyi, greedy_color, AgentGraph, LassoProblem, LinRegProblem, ProperColoring, TrainingDataset,
};

pub fn network(agents: usize) -> (AgentGraph, ProperColoring) {
    let graph = generate_erdos_renyi(agents, 0.5, 1).expect("benchmark graph");
    let coloring = greedy_color(&graph);
    (graph, coloring)
}

pub fn lasso(agents: usize, n: usize, m: usize, samples: usize) -> TrainingDataset<LassoProblem> {
    generate_lasso_dataset(&LassoDatasetHeader {
        num_agents: agents,
        n,
        m,
        sparsity: 0.25,
        snr_db: 2.0,
        seed: 7,
        num_train: samples,
        num_test: 0,
    })
    .and_then(|d| d.to_training())
    .expect("benchmark LASSO data")
}

pub fn linreg(agents: usize, d: usize, per_agent: usize, samples: usize) -> TrainingDataset<LinRegProblem> {
    generate_linreg_dataset(&LinRegDatasetHeader {
        num_agents: agents,
        d,
        samples_per_agent: per_agent,
        noise_std: 0.5,
        seed: 3,
        num_train: samples,
        num_test: 0,
    })
    .and_then(|d| d.to_training())
    .expect("benchmark regression data")
}
