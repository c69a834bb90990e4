//! Config-driven experiment pipelines: data generation, training, evaluation
//! against the fixed-hyperparameter baseline, transfer to larger graphs and
//! the shared/agent-specific comparison.
//!
//! Every artifact lives at a path derived from the config alone:
//!
//! ```text
//! <out>/graph.json
//! <out>/data/<variant>.json
//! <out>/theta/theta_<mode>[_<variant>].json
//! <out>/train/<mode>[_<variant>].{csv,json}
//! <out>/eval/<mode>[_<variant>]/{unfolded.csv,baseline.csv,summary.json}
//! <out>/transfer[/<variant>]/P<n>/{unfolded.csv,baseline.csv}, summary.json
//! <out>/compare[/<variant>]/{agent-specific.csv,shared.csv,summary.json}
//! ```
//!
//! LASSO configs produce one variant per SNR (`lasso_snr2dB`, ...); linear
//! regression has a single variant with no suffix.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, TrainingDataset};
use crate::engine::{run_dadmm, Problem, RunOptions};
use crate::error::{io_err, Error, Result};
use crate::graph::{generate_erdos_renyi, greedy_color, AgentGraph, GraphFile, ProperColoring};
use crate::lasso::{generate_lasso_dataset, LassoDataset, LassoDatasetHeader, LassoProblem};
use crate::linreg::{generate_linreg_dataset, LinRegDataset, LinRegDatasetHeader, LinRegProblem};
use crate::schedule::{HyperparameterSchedule, ProblemKind, ShareMode};
use crate::train::{init_baseline_hyperparameters, train, train_sequential, TrainOptions};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub graph: GraphConfig,
    pub data: DataConfig,
    /// Required when `problem = "lasso"`.
    #[serde(default)]
    pub lasso: Option<LassoDataConfig>,
    /// Required when `problem = "linreg"`.
    #[serde(default)]
    pub linreg: Option<LinRegDataConfig>,
    pub unfolding: UnfoldingConfig,
    pub training: TrainingConfig,
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_p_edge() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub agents: usize,
    #[serde(default = "default_p_edge")]
    pub p_edge: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub num_train: usize,
    pub num_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoDataConfig {
    pub n: usize,
    /// Rows per agent.
    pub m: usize,
    pub sparsity: f64,
    pub snr_db: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinRegDataConfig {
    pub d: usize,
    pub samples_per_agent: usize,
    pub noise_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnfoldingConfig {
    pub depth: usize,
    pub mode: ShareMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Train in segments of this many iterations instead of end to end.
    #[serde(default)]
    pub segment_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Fixed tuple, also the initial value of every trained θ entry.
    pub hyperparameters: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default)]
    pub targets: Vec<usize>,
    /// When set, target graphs use `p_edge = mean_degree / (P − 1)` so the
    /// expected degree stays fixed as `P` grows; otherwise `graph.p_edge`.
    #[serde(default)]
    pub mean_degree: Option<f64>,
    /// Test samples per target; defaults to `data.num_test`.
    #[serde(default)]
    pub num_test: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
    }

    /// Replaces every seed with one derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.graph.seed = seed;
        self.data.seed = seed.wrapping_add(1);
        self.training.seed = seed.wrapping_add(2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.graph.agents == 0 {
            return bad("graph.agents must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.graph.p_edge) {
            return bad(format!("graph.p_edge {} outside [0, 1]", self.graph.p_edge));
        }
        if self.unfolding.depth == 0 {
            return bad("unfolding.depth must be positive".into());
        }
        if self.data.num_test == 0 {
            return bad("data.num_test must be positive".into());
        }
        if self.baseline.hyperparameters.len() != self.problem.tuple_len() {
            return bad(format!(
                "baseline.hyperparameters needs {} values ({}) for {}",
                self.problem.tuple_len(),
                self.problem.names().join(", "),
                self.problem
            ));
        }
        if self.training.segment_length == Some(0) {
            return bad("training.segment_length must be positive".into());
        }
        if let Some(k) = self.transfer.mean_degree {
            if k.is_nan() || k <= 0.0 {
                return bad(format!("transfer.mean_degree {k} must be positive"));
            }
        }
        match self.problem {
            ProblemKind::Lasso => match &self.lasso {
                None => return bad("problem = \"lasso\" needs a [lasso] table".into()),
                Some(l) if l.snr_db.is_empty() => return bad("lasso.snr_db lists no SNR".into()),
                Some(_) => {}
            },
            ProblemKind::Linreg => {
                if self.linreg.is_none() {
                    return bad("problem = \"linreg\" needs a [linreg] table".into());
                }
            }
        }
        Ok(())
    }

    fn variants(&self) -> Vec<Variant> {
        match (self.problem, &self.lasso) {
            (ProblemKind::Lasso, Some(l)) => l
                .snr_db
                .iter()
                .map(|&snr| Variant {
                    label: format!("snr{snr}dB"),
                    snr_db: Some(snr),
                })
                .collect(),
            _ => vec![Variant {
                label: String::new(),
                snr_db: None,
            }],
        }
    }

    pub fn graph_path(&self) -> PathBuf {
        self.out_dir.join("graph.json")
    }

    fn dataset_path(&self, v: &Variant) -> PathBuf {
        let name = match self.problem {
            ProblemKind::Lasso => format!("lasso_{}.json", v.label),
            ProblemKind::Linreg => "linreg.json".to_string(),
        };
        self.out_dir.join("data").join(name)
    }

    fn stem(mode: ShareMode, v: &Variant) -> String {
        if v.label.is_empty() {
            mode.to_string()
        } else {
            format!("{mode}_{}", v.label)
        }
    }

    fn theta_path(&self, mode: ShareMode, v: &Variant) -> PathBuf {
        self.out_dir
            .join("theta")
            .join(format!("theta_{}.json", Self::stem(mode, v)))
    }

    fn variant_dir(&self, kind: &str, v: &Variant) -> PathBuf {
        let dir = self.out_dir.join(kind);
        if v.label.is_empty() {
            dir
        } else {
            dir.join(&v.label)
        }
    }

    /// Dataset files in variant order.
    pub fn dataset_paths(&self) -> Vec<PathBuf> {
        self.variants().iter().map(|v| self.dataset_path(v)).collect()
    }

    /// θ files for `mode` in variant order.
    pub fn theta_paths(&self, mode: ShareMode) -> Vec<PathBuf> {
        self.variants().iter().map(|v| self.theta_path(mode, v)).collect()
    }
}

#[derive(Debug, Clone)]
struct Variant {
    label: String,
    snr_db: Option<f64>,
}

/// One row of a mean-over-test-set curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    /// Mean over samples of the per-agent MSE to the ground truth.
    pub loss: f64,
    pub objective: f64,
    pub disagreement: f64,
    pub messages: u64,
}

/// Runs `iterations` steps on every sample and averages iterations `1..`.
pub fn mean_curve<P: Problem>(
    schedule: &HyperparameterSchedule,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    iterations: usize,
) -> Result<Vec<CurveRow>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let traces: Vec<Result<_>> = samples
        .par_iter()
        .map(|s| {
            run_dadmm(
                &s.problem,
                graph,
                coloring,
                schedule,
                &RunOptions::iterations(iterations).with_ground_truth(&s.target),
            )
            .map(|t| t.records)
        })
        .collect();
    let mut rows: Vec<CurveRow> = (1..=iterations)
        .map(|k| CurveRow {
            iteration: k,
            loss: 0.0,
            objective: 0.0,
            disagreement: 0.0,
            messages: 0,
        })
        .collect();
    let weight = 1.0 / samples.len() as f64;
    for records in traces {
        for (row, rec) in rows.iter_mut().zip(&records?[1..]) {
            row.loss += weight * rec.mse.unwrap_or(f64::NAN);
            row.objective += weight * rec.objective;
            row.disagreement += weight * rec.disagreement;
            row.messages = rec.messages;
        }
    }
    Ok(rows)
}

pub fn write_curve(path: &Path, rows: &[CurveRow]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// `k / depth` for the first baseline iteration `k` whose loss is at most
/// `target`; `None` if the baseline never gets there.
pub fn reduction_factor(baseline: &[CurveRow], target: f64, depth: usize) -> Option<f64> {
    baseline
        .iter()
        .find(|r| r.loss <= target)
        .map(|r| r.iteration as f64 / depth as f64)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn load_graph(config: &ExperimentConfig) -> Result<(AgentGraph, ProperColoring)> {
    let path = config.graph_path();
    require(&path)?;
    let (graph, coloring) = GraphFile::read(&path)?.into_parts()?;
    if graph.num_agents() != config.graph.agents {
        return Err(Error::InvalidArgument(format!(
            "{} has P={} but the config asks for P={}",
            path.display(),
            graph.num_agents(),
            config.graph.agents
        )));
    }
    Ok((graph, coloring))
}

fn load_theta(path: &Path) -> Result<HyperparameterSchedule> {
    HyperparameterSchedule::read_json(path)
}

fn lasso_header(
    config: &ExperimentConfig,
    agents: usize,
    snr_db: f64,
    seed: u64,
    split: (usize, usize),
) -> LassoDatasetHeader {
    let l = config.lasso.as_ref().expect("validated");
    LassoDatasetHeader {
        num_agents: agents,
        n: l.n,
        m: l.m,
        sparsity: l.sparsity,
        snr_db,
        seed,
        num_train: split.0,
        num_test: split.1,
    }
}

fn linreg_header(config: &ExperimentConfig, agents: usize, seed: u64, split: (usize, usize)) -> LinRegDatasetHeader {
    let l = config.linreg.expect("validated");
    LinRegDatasetHeader {
        num_agents: agents,
        d: l.d,
        samples_per_agent: l.samples_per_agent,
        noise_std: l.noise_std,
        seed,
        num_train: split.0,
        num_test: split.1,
    }
}

/// Distinct data seeds per SNR so variants do not share noise draws.
fn variant_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(1000 * index as u64)
}

/// Writes the graph and one dataset per variant; returns the paths written.
pub fn cmd_gen_data(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let g = config.graph;
    let graph = generate_erdos_renyi(g.agents, g.p_edge, g.seed)?;
    let coloring = greedy_color(&graph);
    log::info!(
        "graph: P={}, |E|={}, {} colors",
        graph.num_agents(),
        graph.num_edges(),
        coloring.num_colors()
    );
    let mut written = vec![config.graph_path()];
    write_json(&written[0], &GraphFile::new(&graph, &coloring))?;
    let split = (config.data.num_train, config.data.num_test);
    for (i, v) in config.variants().iter().enumerate() {
        let path = config.dataset_path(v);
        ensure_parent(&path)?;
        let seed = variant_seed(config.data.seed, i);
        match config.problem {
            ProblemKind::Lasso => {
                let snr = v.snr_db.expect("lasso variants carry an SNR");
                generate_lasso_dataset(&lasso_header(config, g.agents, snr, seed, split))?.write_json(&path)?
            }
            ProblemKind::Linreg => {
                generate_linreg_dataset(&linreg_header(config, g.agents, seed, split))?.write_json(&path)?
            }
        }
        written.push(path);
    }
    Ok(written)
}

fn load_lasso(path: &Path, agents: usize) -> Result<TrainingDataset<LassoProblem>> {
    require(path)?;
    let ds = LassoDataset::read_json(path)?;
    check_agents(path, ds.header.num_agents, agents)?;
    ds.to_training()
}

fn load_linreg(path: &Path, agents: usize) -> Result<TrainingDataset<LinRegProblem>> {
    require(path)?;
    let ds = LinRegDataset::read_json(path)?;
    check_agents(path, ds.header.num_agents, agents)?;
    ds.to_training()
}

fn check_agents(path: &Path, found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} holds P={found} agents, config asks for P={expected}",
            path.display()
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub mode: ShareMode,
    pub snr_db: Option<f64>,
    pub depth: usize,
    pub num_scalars: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub divergence: Option<String>,
    pub wall_clock_seconds: f64,
    pub theta: PathBuf,
    pub history: PathBuf,
}

fn train_variant<P: Problem>(
    config: &ExperimentConfig,
    v: &Variant,
    data: &TrainingDataset<P>,
    graph: &AgentGraph,
    coloring: &ProperColoring,
) -> Result<TrainSummary> {
    let mode = config.unfolding.mode;
    let depth = config.unfolding.depth;
    let theta0 = init_baseline_hyperparameters(
        config.problem,
        mode,
        depth,
        graph.num_agents(),
        &config.baseline.hyperparameters,
    )?;
    let t = config.training;
    let options = TrainOptions {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed: t.seed,
    };
    let start = Instant::now();
    let outcome = match t.segment_length {
        Some(len) => train_sequential(&theta0, data.train(), graph, coloring, len, &options)?,
        None => train(&theta0, data.train(), graph, coloring, &options)?,
    };
    let elapsed = start.elapsed().as_secs_f64();

    let theta_path = config.theta_path(mode, v);
    ensure_parent(&theta_path)?;
    outcome.best.write_json(&theta_path)?;
    let stem = ExperimentConfig::stem(mode, v);
    let history_path = config.out_dir.join("train").join(format!("{stem}.csv"));
    ensure_parent(&history_path)?;
    let mut w = csv::Writer::from_path(&history_path)?;
    for row in &outcome.history {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(&history_path))?;

    let summary = TrainSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        problem: config.problem,
        mode,
        snr_db: v.snr_db,
        depth,
        num_scalars: theta0.num_scalars(),
        initial_loss: outcome.initial_loss,
        best_loss: outcome.best_loss,
        epoch_losses: outcome.epoch_losses,
        steps: outcome.history.len(),
        divergence: outcome.divergence,
        wall_clock_seconds: elapsed,
        theta: theta_path,
        history: history_path,
    };
    write_json(&config.out_dir.join("train").join(format!("{stem}.json")), &summary)?;
    log::info!(
        "trained {mode} θ{}: loss {:.6} -> {:.6} in {elapsed:.1}s",
        if v.label.is_empty() {
            String::new()
        } else {
            format!(" ({})", v.label)
        },
        summary.initial_loss,
        summary.best_loss
    );
    Ok(summary)
}

/// Trains θ for the configured mode on every variant. Artifacts are written
/// even when training diverges; the divergence is then returned as an error.
pub fn cmd_train(config: &ExperimentConfig) -> Result<Vec<TrainSummary>> {
    let (graph, coloring) = load_graph(config)?;
    let mut out = Vec::new();
    for v in config.variants() {
        let path = config.dataset_path(&v);
        let summary = match config.problem {
            ProblemKind::Lasso => {
                train_variant(config, &v, &load_lasso(&path, graph.num_agents())?, &graph, &coloring)?
            }
            ProblemKind::Linreg => {
                train_variant(config, &v, &load_linreg(&path, graph.num_agents())?, &graph, &coloring)?
            }
        };
        if let Some(msg) = &summary.divergence {
            return Err(Error::TrainingDiverged(msg.clone()));
        }
        out.push(summary);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub mode: ShareMode,
    pub snr_db: Option<f64>,
    pub num_agents: usize,
    pub num_edges: usize,
    pub depth: usize,
    pub test_samples: usize,
    pub unfolded_final_mse: f64,
    pub baseline_at_depth_mse: f64,
    pub baseline_converged_mse: f64,
    pub baseline_iterations: usize,
    /// Baseline iterations needed to match the unfolded loss, over the depth;
    /// `None` when the baseline never matches it within `baseline_iterations`.
    pub reduction_factor: Option<f64>,
    pub unfolded_messages: u64,
    pub baseline_messages_to_match: Option<u64>,
    pub unfolded_seconds: f64,
    pub baseline_seconds: f64,
    pub unfolded_curve: PathBuf,
    pub baseline_curve: PathBuf,
}

fn eval_variant<P: Problem>(
    config: &ExperimentConfig,
    v: &Variant,
    theta: &HyperparameterSchedule,
    data: &TrainingDataset<P>,
    graph: &AgentGraph,
    coloring: &ProperColoring,
) -> Result<EvalSummary> {
    let mode = theta
        .mode()
        .ok_or_else(|| Error::InvalidArgument("θ file holds a fixed schedule".into()))?;
    let depth = theta.depth().expect("unfolded schedules have a depth");
    let baseline = HyperparameterSchedule::fixed(config.problem, &config.baseline.hyperparameters)?;
    let max_iterations = config.baseline.max_iterations.max(depth);

    let start = Instant::now();
    let unfolded_rows = mean_curve(theta, data.test(), graph, coloring, depth)?;
    let unfolded_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let baseline_rows = mean_curve(&baseline, data.test(), graph, coloring, max_iterations)?;
    let baseline_seconds = start.elapsed().as_secs_f64();

    let dir = config.variant_dir("eval", v).join(mode.to_string());
    let unfolded_curve = dir.join("unfolded.csv");
    let baseline_curve = dir.join("baseline.csv");
    write_curve(&unfolded_curve, &unfolded_rows)?;
    write_curve(&baseline_curve, &baseline_rows)?;

    let unfolded_final = unfolded_rows[depth - 1];
    let factor = reduction_factor(&baseline_rows, unfolded_final.loss, depth);
    let summary = EvalSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        problem: config.problem,
        mode,
        snr_db: v.snr_db,
        num_agents: graph.num_agents(),
        num_edges: graph.num_edges(),
        depth,
        test_samples: data.test().len(),
        unfolded_final_mse: unfolded_final.loss,
        baseline_at_depth_mse: baseline_rows[depth - 1].loss,
        baseline_converged_mse: baseline_rows[max_iterations - 1].loss,
        baseline_iterations: max_iterations,
        reduction_factor: factor,
        unfolded_messages: unfolded_final.messages,
        baseline_messages_to_match: factor.map(|f| {
            let k = (f * depth as f64).round() as usize;
            baseline_rows[k - 1].messages
        }),
        unfolded_seconds,
        baseline_seconds,
        unfolded_curve,
        baseline_curve,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates θ (the configured mode's file unless `theta` is given) and the
/// baseline on the test split of every variant.
pub fn cmd_eval(config: &ExperimentConfig, theta: Option<&Path>) -> Result<Vec<EvalSummary>> {
    let (graph, coloring) = load_graph(config)?;
    let variants = config.variants();
    if theta.is_some() && variants.len() > 1 {
        return Err(Error::InvalidArgument(
            "an explicit θ file needs a config with a single SNR".into(),
        ));
    }
    let mut out = Vec::new();
    for v in &variants {
        let theta_path = theta
            .map(Path::to_path_buf)
            .unwrap_or_else(|| config.theta_path(config.unfolding.mode, v));
        let schedule = load_theta(&theta_path)?;
        check_kind(config, &schedule, &theta_path)?;
        let path = config.dataset_path(v);
        let summary = match config.problem {
            ProblemKind::Lasso => eval_variant(
                config,
                v,
                &schedule,
                &load_lasso(&path, graph.num_agents())?,
                &graph,
                &coloring,
            )?,
            ProblemKind::Linreg => eval_variant(
                config,
                v,
                &schedule,
                &load_linreg(&path, graph.num_agents())?,
                &graph,
                &coloring,
            )?,
        };
        out.push(summary);
    }
    Ok(out)
}

fn check_kind(config: &ExperimentConfig, theta: &HyperparameterSchedule, path: &Path) -> Result<()> {
    if theta.kind() == config.problem {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} is a {} θ but the config is for {}",
            path.display(),
            theta.kind(),
            config.problem
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTarget {
    pub num_agents: usize,
    pub p_edge: f64,
    pub num_edges: usize,
    pub max_degree: usize,
    /// `None` when the iterates diverged.
    pub unfolded_final_mse: Option<f64>,
    pub baseline_at_depth_mse: Option<f64>,
    pub unfolded_curve: Option<PathBuf>,
    pub baseline_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub snr_db: Option<f64>,
    pub depth: usize,
    pub trained_on_agents: usize,
    pub test_samples: usize,
    pub targets: Vec<TransferTarget>,
}

/// Mean curve, or `None` if the run diverged.
fn curve_or_divergence<P: Problem>(
    schedule: &HyperparameterSchedule,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    iterations: usize,
) -> Result<Option<Vec<CurveRow>>> {
    match mean_curve(schedule, samples, graph, coloring, iterations) {
        Ok(rows) if rows.iter().all(|r| r.loss.is_finite()) => Ok(Some(rows)),
        Ok(_) | Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn transfer_target<P: Problem>(
    config: &ExperimentConfig,
    dir: &Path,
    theta: &HyperparameterSchedule,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    p_edge: f64,
) -> Result<TransferTarget> {
    let coloring = greedy_color(graph);
    let depth = theta.depth().expect("shared θ has a depth");
    let baseline = HyperparameterSchedule::fixed(config.problem, &config.baseline.hyperparameters)?;
    let dir = dir.join(format!("P{}", graph.num_agents()));
    let mut target = TransferTarget {
        num_agents: graph.num_agents(),
        p_edge,
        num_edges: graph.num_edges(),
        max_degree: graph.max_degree(),
        unfolded_final_mse: None,
        baseline_at_depth_mse: None,
        unfolded_curve: None,
        baseline_curve: None,
    };
    if let Some(rows) = curve_or_divergence(theta, samples, graph, &coloring, depth)? {
        let path = dir.join("unfolded.csv");
        write_curve(&path, &rows)?;
        target.unfolded_final_mse = Some(rows[depth - 1].loss);
        target.unfolded_curve = Some(path);
    } else {
        log::warn!("unfolded run diverged on P={}", graph.num_agents());
    }
    if let Some(rows) = curve_or_divergence(&baseline, samples, graph, &coloring, depth)? {
        let path = dir.join("baseline.csv");
        write_curve(&path, &rows)?;
        target.baseline_at_depth_mse = Some(rows[depth - 1].loss);
        target.baseline_curve = Some(path);
    } else {
        log::warn!("baseline run diverged on P={}", graph.num_agents());
    }
    Ok(target)
}

/// Runs a shared-mode θ on fresh graphs and data with `transfer.targets`
/// agents, next to the fixed baseline truncated at the same depth.
pub fn cmd_transfer(config: &ExperimentConfig, theta: Option<&Path>) -> Result<Vec<TransferSummary>> {
    if config.transfer.targets.is_empty() {
        return Err(Error::InvalidArgument("transfer.targets is empty".into()));
    }
    let variants = config.variants();
    if theta.is_some() && variants.len() > 1 {
        return Err(Error::InvalidArgument(
            "an explicit θ file needs a config with a single SNR".into(),
        ));
    }
    let num_test = config.transfer.num_test.unwrap_or(config.data.num_test);
    let mut out = Vec::new();
    for (i, v) in variants.iter().enumerate() {
        let theta_path = theta
            .map(Path::to_path_buf)
            .unwrap_or_else(|| config.theta_path(ShareMode::Shared, v));
        let schedule = load_theta(&theta_path)?;
        check_kind(config, &schedule, &theta_path)?;
        if schedule.mode() != Some(ShareMode::Shared) {
            return Err(Error::InvalidArgument(format!(
                "{} is not a shared-mode θ; agent-specific θ is bound to its training graph",
                theta_path.display()
            )));
        }
        let dir = config.variant_dir("transfer", v);
        let mut targets = Vec::new();
        for &p in &config.transfer.targets {
            let p_edge = match config.transfer.mean_degree {
                Some(k) if p > 1 => (k / (p - 1) as f64).min(1.0),
                _ => config.graph.p_edge,
            };
            let graph = generate_erdos_renyi(p, p_edge, config.graph.seed.wrapping_add(p as u64))?;
            let seed = variant_seed(config.data.seed, i).wrapping_add(p as u64);
            let target = match config.problem {
                ProblemKind::Lasso => {
                    let snr = v.snr_db.expect("lasso variants carry an SNR");
                    let ds =
                        generate_lasso_dataset(&lasso_header(config, p, snr, seed, (0, num_test)))?.to_training()?;
                    transfer_target(config, &dir, &schedule, ds.test(), &graph, p_edge)?
                }
                ProblemKind::Linreg => {
                    let ds = generate_linreg_dataset(&linreg_header(config, p, seed, (0, num_test)))?.to_training()?;
                    transfer_target(config, &dir, &schedule, ds.test(), &graph, p_edge)?
                }
            };
            log::info!(
                "transfer P={p}: unfolded {:?}, baseline at T {:?}",
                target.unfolded_final_mse,
                target.baseline_at_depth_mse
            );
            targets.push(target);
        }
        let summary = TransferSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            problem: config.problem,
            snr_db: v.snr_db,
            depth: schedule.depth().expect("shared θ has a depth"),
            trained_on_agents: config.graph.agents,
            test_samples: num_test,
            targets,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        out.push(summary);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub snr_db: Option<f64>,
    pub depth: usize,
    pub agent_specific_final_mse: f64,
    pub shared_final_mse: f64,
    /// Shared over agent-specific final test loss.
    pub ratio: f64,
    pub agent_specific_curve: PathBuf,
    pub shared_curve: PathBuf,
}

fn compare_variant<P: Problem>(
    config: &ExperimentConfig,
    v: &Variant,
    data: &TrainingDataset<P>,
    graph: &AgentGraph,
    coloring: &ProperColoring,
) -> Result<CompareSummary> {
    let dir = config.variant_dir("compare", v);
    let mut finals = Vec::new();
    let mut curves = Vec::new();
    let mut depths = Vec::new();
    for mode in [ShareMode::AgentSpecific, ShareMode::Shared] {
        let path = config.theta_path(mode, v);
        let theta = load_theta(&path)?;
        check_kind(config, &theta, &path)?;
        if theta.mode() != Some(mode) {
            return Err(Error::InvalidArgument(format!(
                "{} does not hold a {mode} θ",
                path.display()
            )));
        }
        let depth = theta.depth().expect("unfolded θ");
        let rows = mean_curve(&theta, data.test(), graph, coloring, depth)?;
        let curve = dir.join(format!("{mode}.csv"));
        write_curve(&curve, &rows)?;
        finals.push(rows[depth - 1].loss);
        curves.push(curve);
        depths.push(depth);
    }
    if depths[0] != depths[1] {
        return Err(Error::InvalidArgument(format!(
            "θ depths differ: agent-specific T={}, shared T={}",
            depths[0], depths[1]
        )));
    }
    let shared_curve = curves.pop().expect("two modes");
    let agent_specific_curve = curves.pop().expect("two modes");
    let summary = CompareSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        problem: config.problem,
        snr_db: v.snr_db,
        depth: depths[0],
        agent_specific_final_mse: finals[0],
        shared_final_mse: finals[1],
        ratio: finals[1] / finals[0],
        agent_specific_curve,
        shared_curve,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Evaluates the trained agent-specific and shared θ side by side.
pub fn cmd_compare_modes(config: &ExperimentConfig) -> Result<Vec<CompareSummary>> {
    let (graph, coloring) = load_graph(config)?;
    let mut out = Vec::new();
    for v in config.variants() {
        let path = config.dataset_path(&v);
        let summary = match config.problem {
            ProblemKind::Lasso => {
                compare_variant(config, &v, &load_lasso(&path, graph.num_agents())?, &graph, &coloring)?
            }
            ProblemKind::Linreg => {
                compare_variant(config, &v, &load_linreg(&path, graph.num_agents())?, &graph, &coloring)?
            }
        };
        out.push(summary);
    }
    Ok(out)
}
