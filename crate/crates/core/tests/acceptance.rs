//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs the shipped desk-scale presets end to end.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dadmm_core::experiment::{cmd_compare_modes, cmd_eval, cmd_gen_data, cmd_train, cmd_transfer, ExperimentConfig};
use dadmm_core::graph::{generate_erdos_renyi, greedy_color, validate_coloring, AgentGraph, ProperColoring};
use dadmm_core::lasso::{self, generate_lasso_dataset, LassoDataset, LassoDatasetHeader};
use dadmm_core::linreg::{self, generate_linreg_dataset, LinRegDatasetHeader};
use dadmm_core::train::{grid_search_baseline, train, BaselineGrid, TrainOptions};
use dadmm_core::unfold::batch_loss;
use dadmm_core::{
    loss_gradient, run_dadmm, HyperparameterSchedule, Problem, ProblemKind, RunOptions, Sample, ShareMode,
};

const LASSO_DESK: &str = include_str!("../../../configs/lasso-desk.toml");
const LINREG_DESK: &str = include_str!("../../../configs/linreg-desk.toml");

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn config_in(text: &str, dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml_str(text).expect("preset parses");
    c.out_dir = dir.to_path_buf();
    c
}

// ---------------------------------------------------------------- A1

fn fd_mismatches<P: Problem>(
    theta: &HyperparameterSchedule,
    batch: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    depth: usize,
) -> (usize, f64) {
    let analytic = loss_gradient(theta, batch, graph, coloring, depth).unwrap().gradient;
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for i in 0..theta.num_scalars() {
        let h = 1e-6 * theta.values()[i].abs().max(1e-2);
        let mut plus = theta.clone();
        plus.values_mut()[i] += h;
        let mut minus = theta.clone();
        minus.values_mut()[i] -= h;
        let fd = (batch_loss(&plus, batch, graph, coloring, depth).unwrap()
            - batch_loss(&minus, batch, graph, coloring, depth).unwrap())
            / (2.0 * h);
        let abs = (analytic[i] - fd).abs();
        let rel = abs / fd.abs().max(f64::MIN_POSITIVE);
        if rel > 1e-4 && abs > 1e-8 {
            bad += 1;
        }
        if abs > 1e-8 {
            worst = worst.max(rel);
        }
    }
    (bad, worst)
}

fn random_theta(
    kind: ProblemKind,
    mode: ShareMode,
    depth: usize,
    agents: usize,
    base: &[f64],
    rng: &mut ChaCha8Rng,
) -> HyperparameterSchedule {
    let mut theta = HyperparameterSchedule::repeated(kind, mode, depth, agents, base).unwrap();
    for v in theta.values_mut() {
        *v *= rng.random_range(0.5..1.5);
    }
    theta
}

fn a1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut bad, mut worst) = (0usize, 0usize, 0.0f64);
    for i in 0..10u64 {
        let graph = generate_erdos_renyi(3, 0.6, 100 + i).unwrap();
        let coloring = greedy_color(&graph);
        let data = generate_lasso_dataset(&LassoDatasetHeader {
            num_agents: 3,
            n: 8,
            m: 4,
            sparsity: 0.25,
            snr_db: 2.0,
            seed: 200 + i,
            num_train: 2,
            num_test: 0,
        })
        .unwrap()
        .to_training()
        .unwrap();
        for mode in [ShareMode::AgentSpecific, ShareMode::Shared] {
            let theta = random_theta(ProblemKind::Lasso, mode, 5, 3, &[1.0, 0.1, 0.1, 0.05], &mut rng);
            let (b, w) = fd_mismatches(&theta, data.train(), &graph, &coloring, 5);
            checked += theta.num_scalars();
            bad += b;
            worst = worst.max(w);
        }

        let data = generate_linreg_dataset(&LinRegDatasetHeader {
            num_agents: 3,
            d: 4,
            samples_per_agent: 5,
            noise_std: 0.5,
            seed: 300 + i,
            num_train: 2,
            num_test: 0,
        })
        .unwrap()
        .to_training()
        .unwrap();
        for mode in [ShareMode::AgentSpecific, ShareMode::Shared] {
            let theta = random_theta(
                ProblemKind::Linreg,
                mode,
                5,
                3,
                &[0.1, 0.5, 0.1, 0.5, 0.05, 0.05],
                &mut rng,
            );
            let (b, w) = fd_mismatches(&theta, data.train(), &graph, &coloring, 5);
            checked += theta.num_scalars();
            bad += b;
            worst = worst.max(w);
        }
    }
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(
        bad == 0 && fast,
        format!("{checked} coordinates, {bad} mismatched, worst relative error {worst:.1e}, {time}"),
    )
}

// ---------------------------------------------------------------- A2

fn a2() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::from_toml_str(LASSO_DESK).unwrap();
    let l = config.lasso.clone().unwrap();
    let graph = generate_erdos_renyi(config.graph.agents, config.graph.p_edge, config.graph.seed).unwrap();
    let coloring = greedy_color(&graph);
    let data = generate_lasso_dataset(&LassoDatasetHeader {
        num_agents: config.graph.agents,
        n: l.n,
        m: l.m,
        sparsity: l.sparsity,
        snr_db: l.snr_db[0],
        seed: config.data.seed,
        num_train: config.data.num_train,
        num_test: config.data.num_test,
    })
    .unwrap()
    .to_training()
    .unwrap();
    let tau = config.baseline.hyperparameters[lasso::TAU];
    let max_iterations = config.baseline.max_iterations;
    let tolerance = config.baseline.tolerance;
    let grid = grid_search_baseline(
        &BaselineGrid::lasso_default(tau),
        &data.train()[..5],
        &graph,
        &coloring,
        max_iterations,
        tolerance,
    )
    .unwrap();
    let fixed = HyperparameterSchedule::fixed(ProblemKind::Lasso, &grid.best).unwrap();
    let reached = data.test()[..10]
        .iter()
        .filter(|s| {
            let run = RunOptions::iterations(max_iterations).with_tolerance(tolerance);
            run_dadmm(&s.problem, &graph, &coloring, &fixed, &run)
                .map(|t| t.converged)
                .unwrap_or(false)
        })
        .count();
    let (fast, time) = within(Duration::from_secs(120), start);
    let tuple: Vec<String> = grid.best.iter().map(|v| format!("{v:.4}")).collect();
    outcome(
        reached >= 9 && fast,
        format!(
            "grid tuple (rho, alpha, eta, tau) = ({}); disagreement < {tolerance:e} within {max_iterations} iterations on {reached}/10 test samples, {time}",
            tuple.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- A3

fn a3(dir: &Path) -> Outcome {
    let start = Instant::now();
    let config = config_in(LASSO_DESK, dir);
    cmd_gen_data(&config).unwrap();
    cmd_train(&config).unwrap();
    let s = cmd_eval(&config, None).unwrap().remove(0);
    // A baseline that never matches within its budget needs more than
    // budget / T times the messages.
    let factor_ok = s.reduction_factor.is_none_or(|f| f >= 3.0);
    let factor = match s.reduction_factor {
        Some(f) => format!("{f:.2}"),
        None => format!(
            "> {:.0} (baseline never matched within {} iterations)",
            s.baseline_iterations as f64 / s.depth as f64,
            s.baseline_iterations
        ),
    };
    let (fast, time) = within(Duration::from_secs(15 * 60), start);
    outcome(
        s.unfolded_final_mse < s.baseline_at_depth_mse && factor_ok && fast,
        format!(
            "test MSE unfolded {:.4} vs baseline at T {:.4} (converged {:.4}); reduction factor {factor}; {time}",
            s.unfolded_final_mse, s.baseline_at_depth_mse, s.baseline_converged_mse
        ),
    )
}

// ---------------------------------------------------------------- A4, A5

fn a4_a5(dir: &Path) -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut config = config_in(LINREG_DESK, dir);
    cmd_gen_data(&config).unwrap();
    config.unfolding.mode = ShareMode::Shared;
    cmd_train(&config).unwrap();
    let transfer = cmd_transfer(&config, None).unwrap().remove(0);
    let mut ok = true;
    let mut parts = Vec::new();
    for t in &transfer.targets {
        let pass = match (t.unfolded_final_mse, t.baseline_at_depth_mse) {
            (Some(u), Some(b)) => u <= b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        ok &= pass;
        parts.push(format!(
            "P={} (max degree {}): unfolded {} vs baseline at T {}",
            t.num_agents,
            t.max_degree,
            t.unfolded_final_mse.map_or("diverged".into(), |v| format!("{v:.4}")),
            t.baseline_at_depth_mse.map_or("diverged".into(), |v| format!("{v:.4}")),
        ));
    }
    let (fast, time) = within(Duration::from_secs(15 * 60), start);
    let a4 = outcome(ok && fast, format!("{}; {time}", parts.join("; ")));

    config.unfolding.mode = ShareMode::AgentSpecific;
    cmd_train(&config).unwrap();
    let c = cmd_compare_modes(&config).unwrap().remove(0);
    let a5 = outcome(
        c.ratio <= 2.0,
        format!(
            "test MSE shared {:.5} vs agent-specific {:.5}, ratio {:.3}",
            c.shared_final_mse, c.agent_specific_final_mse, c.ratio
        ),
    );
    (a4, a5)
}

// ---------------------------------------------------------------- A6

fn standalone_subgradient(
    a: &dadmm_core::linalg::Matrix,
    b: &[f64],
    alpha: f64,
    tau: f64,
    iterations: usize,
) -> Vec<Vec<f64>> {
    let n = a.cols();
    let mut y = vec![0.0; n];
    let mut out = Vec::new();
    for _ in 0..iterations {
        let r: Vec<f64> = (0..a.rows())
            .map(|i| a.row(i).iter().zip(&y).map(|(x, v)| x * v).sum::<f64>() - b[i])
            .collect();
        for j in 0..n {
            let g: f64 = (0..a.rows()).map(|i| a.row(i)[j] * r[i]).sum::<f64>() + tau * lasso::sign(y[j]);
            y[j] -= alpha * g;
        }
        out.push(y.clone());
    }
    out
}

fn a6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();

    let mut bad_colorings = 0;
    for i in 0..100u64 {
        let p = rng.random_range(1..=30);
        let p_edge = rng.random_range(0.3..=1.0);
        let graph = generate_erdos_renyi(p, p_edge, i).unwrap();
        let coloring = greedy_color(&graph);
        if !validate_coloring(&graph, &coloring).passed() || coloring.num_colors() > graph.max_degree() + 1 {
            bad_colorings += 1;
        }
    }
    if bad_colorings > 0 {
        failures.push(format!("{bad_colorings} invalid colorings"));
    }

    let mut bad_counts = 0;
    for i in 0..20u64 {
        let p = rng.random_range(2..=8);
        let depth = rng.random_range(1..=15);
        let graph = generate_erdos_renyi(p, 0.6, 50 + i).unwrap();
        let coloring = greedy_color(&graph);
        let data = generate_linreg_dataset(&LinRegDatasetHeader {
            num_agents: p,
            d: 3,
            samples_per_agent: 4,
            noise_std: 0.1,
            seed: i,
            num_train: 1,
            num_test: 0,
        })
        .unwrap()
        .to_training()
        .unwrap();
        let theta = HyperparameterSchedule::repeated(
            ProblemKind::Linreg,
            ShareMode::Shared,
            depth,
            p,
            &[0.1, 0.3, 0.1, 0.3, 0.05, 0.05],
        )
        .unwrap();
        let trace = run_dadmm(
            &data.train()[0].problem,
            &graph,
            &coloring,
            &theta,
            &RunOptions::iterations(depth),
        )
        .unwrap();
        if trace.last().messages != 2 * graph.num_edges() as u64 * depth as u64 {
            bad_counts += 1;
        }
    }
    if bad_counts > 0 {
        failures.push(format!("{bad_counts} wrong message counts"));
    }

    let ds = generate_lasso_dataset(&LassoDatasetHeader {
        num_agents: 1,
        n: 12,
        m: 8,
        sparsity: 0.25,
        snr_db: 2.0,
        seed: 5,
        num_train: 1,
        num_test: 0,
    })
    .unwrap();
    let single = ds.problem(&ds.samples[0]).unwrap();
    let graph = AgentGraph::new(1, []).unwrap();
    let coloring = greedy_color(&graph);
    let (alpha, tau) = (0.1, 0.05);
    let fixed = HyperparameterSchedule::fixed(ProblemKind::Lasso, &[1.0, alpha, 0.1, tau]).unwrap();
    let trace = run_dadmm(
        &single,
        &graph,
        &coloring,
        &fixed,
        &RunOptions::iterations(50).keeping_iterates(),
    )
    .unwrap();
    let oracle = standalone_subgradient(&ds.sensing[0], &ds.samples[0].b[0], alpha, tau, 50);
    let iterates = trace.iterates.unwrap();
    let max_diff = oracle
        .iter()
        .zip(&iterates[1..])
        .flat_map(|(o, it)| o.iter().zip(&it[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max);
    if max_diff > 1e-12 {
        failures.push(format!("P=1 deviates by {max_diff:.1e}"));
    }

    // Dead parameters: the last iteration's dual steps never reach the
    // output, and τ at iteration 0 multiplies sign(0) = 0.
    let graph = generate_erdos_renyi(4, 0.6, 9).unwrap();
    let coloring = greedy_color(&graph);
    let depth = 4;
    let lasso_data = generate_lasso_dataset(&LassoDatasetHeader {
        num_agents: 4,
        n: 10,
        m: 4,
        sparsity: 0.25,
        snr_db: 2.0,
        seed: 3,
        num_train: 3,
        num_test: 0,
    })
    .unwrap()
    .to_training()
    .unwrap();
    let theta = HyperparameterSchedule::repeated(
        ProblemKind::Lasso,
        ShareMode::AgentSpecific,
        depth,
        4,
        &[1.0, 0.1, 0.1, 0.05],
    )
    .unwrap();
    let g = loss_gradient(&theta, lasso_data.train(), &graph, &coloring, depth)
        .unwrap()
        .gradient;
    let mut dead_nonzero = 0;
    for p in 0..4 {
        dead_nonzero += (g[theta.offset(depth - 1, p) + lasso::ETA] != 0.0) as usize;
        dead_nonzero += (g[theta.offset(0, p) + lasso::TAU] != 0.0) as usize;
    }
    let lr_data = generate_linreg_dataset(&LinRegDatasetHeader {
        num_agents: 4,
        d: 3,
        samples_per_agent: 5,
        noise_std: 0.3,
        seed: 4,
        num_train: 3,
        num_test: 0,
    })
    .unwrap()
    .to_training()
    .unwrap();
    let theta = HyperparameterSchedule::repeated(
        ProblemKind::Linreg,
        ShareMode::Shared,
        depth,
        4,
        &[0.1, 0.3, 0.1, 0.3, 0.05, 0.05],
    )
    .unwrap();
    let g = loss_gradient(&theta, lr_data.train(), &graph, &coloring, depth)
        .unwrap()
        .gradient;
    dead_nonzero += (g[theta.offset(depth - 1, 0) + linreg::ETA] != 0.0) as usize;
    dead_nonzero += (g[theta.offset(depth - 1, 0) + linreg::GAMMA] != 0.0) as usize;
    if dead_nonzero > 0 {
        failures.push(format!("{dead_nonzero} dead parameters with non-zero gradient"));
    }

    let options = TrainOptions {
        epochs: 2,
        batch_size: 2,
        learning_rate: 0.01,
        seed: 11,
    };
    let run = || train(&theta, lr_data.train(), &graph, &coloring, &options).unwrap();
    let (first, second) = (run(), run());
    let same_theta = first
        .best
        .values()
        .iter()
        .zip(second.best.values())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_theta || first.history != second.history {
        failures.push("training is not deterministic".into());
    }
    let d1 = generate_lasso_dataset(&ds.header).unwrap();
    let d2: LassoDataset = generate_lasso_dataset(&ds.header).unwrap();
    if d1 != d2 {
        failures.push("data generation is not deterministic".into());
    }

    let (fast, time) = within(Duration::from_secs(60), start);
    let detail = if failures.is_empty() {
        format!("colorings, message counts, P=1 equivalence (max diff {max_diff:.1e}), dead parameters, determinism; {time}")
    } else {
        format!("{}; {time}", failures.join("; "))
    };
    outcome(failures.is_empty() && fast, detail)
}

// ---------------------------------------------------------------- A7

fn a7() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (p, t) in [(5usize, 20usize), (20, 25)] {
        for (kind, len) in [(ProblemKind::Lasso, 4usize), (ProblemKind::Linreg, 6)] {
            let tuple = vec![0.1; len];
            let specific = HyperparameterSchedule::repeated(kind, ShareMode::AgentSpecific, t, p, &tuple).unwrap();
            let shared = HyperparameterSchedule::repeated(kind, ShareMode::Shared, t, p, &tuple).unwrap();
            ok &= specific.num_scalars() == len * p * t && shared.num_scalars() == len * t;
            parts.push(format!(
                "{kind} P={p} T={t}: {}/{}",
                specific.num_scalars(),
                shared.num_scalars()
            ));
        }
    }
    outcome(ok, parts.join(", "))
}

fn main() -> ExitCode {
    let lasso_dir = tempfile::tempdir().unwrap();
    let linreg_dir = tempfile::tempdir().unwrap();
    let mut results = vec![("A1", a1()), ("A2", a2()), ("A3", a3(lasso_dir.path()))];
    let (a4, a5) = a4_a5(linreg_dir.path());
    results.push(("A4", a4));
    results.push(("A5", a5));
    results.push(("A6", a6()));
    results.push(("A7", a7()));
    let mut failed = 0;
    for (name, o) in &results {
        println!("{name} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.passed as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
