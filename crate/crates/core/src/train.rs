//! Mini-batch Adam over the scheduled hyperparameters.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Sample;
use crate::engine::{disagreement, run_dadmm, Problem, RunOptions};
use crate::error::{Error, Result};
use crate::graph::{AgentGraph, ProperColoring};
use crate::schedule::{HyperparameterSchedule, ProblemKind, ShareMode};
use crate::unfold::{batch_loss, loss_gradient_refs};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam state for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }

    /// Updates `params[i]` for `i` in `active` only.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], active: Range<usize>) {
        self.steps += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.steps);
        let c2 = 1.0 - ADAM_BETA2.powi(self.steps);
        for i in active {
            let g = grad[i];
            self.first[i] = ADAM_BETA1 * self.first[i] + (1.0 - ADAM_BETA1) * g;
            self.second[i] = ADAM_BETA2 * self.second[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// θ together with its optimizer state.
#[derive(Debug, Clone)]
pub struct TrainableParameters {
    pub schedule: HyperparameterSchedule,
    pub optimizer: Adam,
}

impl TrainableParameters {
    pub fn new(schedule: HyperparameterSchedule, learning_rate: f64) -> Self {
        let optimizer = Adam::new(schedule.num_scalars(), learning_rate);
        Self { schedule, optimizer }
    }

    pub fn mode(&self) -> Option<ShareMode> {
        self.schedule.mode()
    }

    pub fn problem(&self) -> ProblemKind {
        self.schedule.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub segment: usize,
    pub epoch: usize,
    pub step: usize,
    pub batch_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// θ with the lowest full training loss seen at an epoch boundary.
    pub best: HyperparameterSchedule,
    pub best_loss: f64,
    pub initial_loss: f64,
    /// One row per Adam step.
    pub history: Vec<StepRecord>,
    /// Full training loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Set when training stopped on a non-finite loss.
    pub divergence: Option<String>,
}

struct Segment {
    index: usize,
    depth: usize,
    active: Range<usize>,
    epochs: usize,
}

fn run_segment<P: Problem>(
    theta: &mut HyperparameterSchedule,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    options: &TrainOptions,
    segment: &Segment,
    outcome: &mut TrainingOutcome,
) -> Result<()> {
    let mut adam = Adam::new(theta.num_scalars(), options.learning_rate);
    let mut best = theta.clone();
    let mut best_loss = batch_loss(theta, samples, graph, coloring, segment.depth)?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    'epochs: for epoch in 0..segment.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream((segment.index as u64) << 32 | epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(options.batch_size) {
            let batch: Vec<&Sample<P>> = chunk.iter().map(|&i| &samples[i]).collect();
            let report = match loss_gradient_refs(theta, &batch, graph, coloring, segment.depth) {
                Ok(r) if r.loss.is_finite() && r.gradient.iter().all(|g| g.is_finite()) => r,
                Ok(_) | Err(Error::Divergence { .. }) | Err(Error::NonFiniteGradient { .. }) => {
                    outcome.divergence = Some(format!(
                        "non-finite loss in segment {}, epoch {epoch}, step {step}",
                        segment.index + 1
                    ));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            outcome.history.push(StepRecord {
                segment: segment.index,
                epoch,
                step,
                batch_loss: report.loss,
            });
            adam.step(theta.values_mut(), &report.gradient, segment.active.clone());
            step += 1;
        }
        let loss = match batch_loss(theta, samples, graph, coloring, segment.depth) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::Divergence { .. }) => {
                outcome.divergence = Some(format!(
                    "non-finite training loss after segment {}, epoch {epoch}",
                    segment.index + 1
                ));
                break;
            }
            Err(e) => return Err(e),
        };
        outcome.epoch_losses.push(loss);
        log::debug!("segment {} epoch {epoch}: training loss {loss:.6}", segment.index + 1);
        if loss < best_loss {
            best_loss = loss;
            best = theta.clone();
        }
    }
    *theta = best;
    outcome.best_loss = best_loss;
    Ok(())
}

fn check_train_inputs<P: Problem>(
    theta0: &HyperparameterSchedule,
    samples: &[Sample<P>],
    options: &TrainOptions,
) -> Result<usize> {
    let depth = theta0
        .depth()
        .ok_or_else(|| Error::InvalidArgument("training needs an unfolded schedule, not a fixed one".into()))?;
    if options.batch_size == 0 || samples.len() < options.batch_size {
        return Err(Error::InvalidArgument(format!(
            "batch size {} invalid for {} samples",
            options.batch_size,
            samples.len()
        )));
    }
    Ok(depth)
}

fn log_negative(theta: &HyperparameterSchedule) {
    let negatives = theta.values().iter().filter(|v| **v < 0.0).count();
    if negatives > 0 {
        log::info!("{negatives} learned hyperparameters are negative");
    }
}

/// End-to-end training at the schedule's full depth.
pub fn train<P: Problem>(
    theta0: &HyperparameterSchedule,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    options: &TrainOptions,
) -> Result<TrainingOutcome> {
    let depth = check_train_inputs(theta0, samples, options)?;
    let mut theta = theta0.clone();
    let initial_loss = batch_loss(&theta, samples, graph, coloring, depth)?;
    let mut outcome = TrainingOutcome {
        best: theta0.clone(),
        best_loss: initial_loss,
        initial_loss,
        history: Vec::new(),
        epoch_losses: Vec::new(),
        divergence: None,
    };
    let segment = Segment {
        index: 0,
        depth,
        active: 0..theta.num_scalars(),
        epochs: options.epochs,
    };
    run_segment(&mut theta, samples, graph, coloring, options, &segment, &mut outcome)?;
    log_negative(&theta);
    outcome.best = theta;
    Ok(outcome)
}

/// Segment-wise training: segment `s` trains only the iterations
/// `[s·t, (s+1)·t)` against the loss at depth `(s+1)·t` (clipped to the
/// schedule depth), with every earlier segment frozen.
pub fn train_sequential<P: Problem>(
    theta0: &HyperparameterSchedule,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    segment_length: usize,
    options: &TrainOptions,
) -> Result<TrainingOutcome> {
    let depth = check_train_inputs(theta0, samples, options)?;
    if segment_length == 0 {
        return Err(Error::InvalidArgument("segment length must be positive".into()));
    }
    let mut theta = theta0.clone();
    let initial_loss = batch_loss(&theta, samples, graph, coloring, depth)?;
    let mut outcome = TrainingOutcome {
        best: theta0.clone(),
        best_loss: initial_loss,
        initial_loss,
        history: Vec::new(),
        epoch_losses: Vec::new(),
        divergence: None,
    };
    for (index, start) in (0..depth).step_by(segment_length).enumerate() {
        let end = (start + segment_length).min(depth);
        let segment = Segment {
            index,
            depth: end,
            active: theta.iteration_span(start..end),
            epochs: options.epochs,
        };
        run_segment(&mut theta, samples, graph, coloring, options, &segment, &mut outcome)?;
        if outcome.divergence.is_some() {
            break;
        }
    }
    outcome.best_loss = batch_loss(&theta, samples, graph, coloring, depth)?;
    log_negative(&theta);
    outcome.best = theta;
    Ok(outcome)
}

/// Starting θ: the baseline tuple repeated over every iteration (and agent).
pub fn init_baseline_hyperparameters(
    kind: ProblemKind,
    mode: ShareMode,
    depth: usize,
    num_agents: usize,
    tuple: &[f64],
) -> Result<HyperparameterSchedule> {
    HyperparameterSchedule::repeated(kind, mode, depth, num_agents, tuple)
}

/// Candidate values per tuple slot. Slots sharing a `tie` group move together.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineGrid {
    pub kind: ProblemKind,
    /// `axes[g]` lists the values of group `g`.
    pub axes: Vec<Vec<f64>>,
    /// `groups[slot]` is the group of each tuple slot.
    pub groups: Vec<usize>,
}

impl BaselineGrid {
    /// Coarse LASSO grid over (ρ, α, η) with τ held at `tau`: the final
    /// objective is only comparable between runs sharing the same τ.
    pub fn lasso_default(tau: f64) -> Self {
        Self {
            kind: ProblemKind::Lasso,
            axes: vec![
                Self::log_axis(1.0, 100.0, 5),
                Self::log_axis(0.001, 0.03, 7),
                Self::log_axis(0.01, 1.0, 5),
                vec![tau],
            ],
            groups: vec![0, 1, 2, 3],
        }
    }

    /// Coarse regression grid with the ω-coordinate rates tied to the
    /// a-coordinate ones (δ = α, β = ρ, γ = η).
    pub fn linreg_default() -> Self {
        Self {
            kind: ProblemKind::Linreg,
            axes: vec![
                Self::log_axis(0.01, 1.0, 9),
                Self::log_axis(0.03, 3.0, 9),
                Self::log_axis(0.01, 1.0, 9),
            ],
            groups: vec![0, 1, 0, 1, 2, 2],
        }
    }

    /// `values` spaced logarithmically between `lo` and `hi` inclusive.
    pub fn log_axis(lo: f64, hi: f64, values: usize) -> Vec<f64> {
        if values == 1 {
            return vec![lo];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..values)
            .map(|i| (a + (b - a) * i as f64 / (values - 1) as f64).exp())
            .collect()
    }

    pub fn candidates(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        out.into_iter()
            .map(|choice| self.groups.iter().map(|&g| choice[g]).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: Vec<f64>,
    pub best_objective: f64,
    pub evaluated: usize,
    pub admissible: usize,
}

/// Picks the tuple with the smallest mean final objective over `samples`
/// after `max_iterations`, among tuples that never diverge and bring the
/// disagreement below `tolerance` on every sample.
pub fn grid_search_baseline<P: Problem>(
    grid: &BaselineGrid,
    samples: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    max_iterations: usize,
    tolerance: f64,
) -> Result<GridSearchResult> {
    let candidates = grid.candidates();
    let scored: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|tuple| {
            let schedule = HyperparameterSchedule::fixed(grid.kind, tuple).ok()?;
            let mut total = 0.0;
            for s in samples {
                let trace = run_dadmm(
                    &s.problem,
                    graph,
                    coloring,
                    &schedule,
                    &RunOptions::iterations(max_iterations),
                )
                .ok()?;
                let primals = trace.final_primals();
                let reached = trace.records.iter().any(|r| r.disagreement < tolerance)
                    && disagreement(&primals, graph) < tolerance;
                if !reached {
                    return None;
                }
                total += trace.last().objective;
            }
            let mean = total / samples.len() as f64;
            mean.is_finite().then_some(mean)
        })
        .collect();
    let admissible = scored.iter().filter(|s| s.is_some()).count();
    let (best_idx, best_objective) = scored
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidArgument("no grid candidate converged".into()))?;
    Ok(GridSearchResult {
        best: candidates[best_idx].clone(),
        best_objective,
        evaluated: candidates.len(),
        admissible,
    })
}
