//! Color-scheduled D-ADMM over an arbitrary [`Problem`].
//!
//! One iteration walks the color classes in order. Every agent of a class
//! takes its primal step from the neighbor copies it holds when the class
//! starts; once the whole class is done, the new iterates are delivered to
//! the neighbors. After the last class every agent takes its dual step.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{io_err, Error, Result};
use crate::graph::{AgentGraph, ProperColoring};
use crate::schedule::{HyperparameterSchedule, ProblemKind};

/// Which slots of a hyperparameter tuple act on one primal coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoordinateRoles {
    /// Primal step size (α or δ).
    pub step: usize,
    /// Quadratic consensus penalty (ρ or β).
    pub penalty: usize,
    /// Dual step size (η or γ).
    pub dual_step: usize,
}

/// Local data and update rules of one distributed problem.
///
/// The primal and dual iterates of an agent are flat vectors of length
/// [`Problem::dim`]. `copies` are the neighbor iterates held by the agent,
/// in ascending neighbor order. Every update must depend only on the agent's
/// own data, its own iterates and those copies.
///
/// The forward updates are `primal_step` and `dual_update`. Training needs
/// them in the generic form
///
/// ```text
/// y' = y − s ⊙ (∇f(y) + |N|·λ + r ⊙ (|N|·y − Σ_j y_j))
/// λ' = λ + e ⊙ (|N|·y' − Σ_j y_j)
/// ```
///
/// where `s`, `r`, `e` are picked per coordinate by [`Problem::roles`], and
/// the derivative hooks below describe `∇f`.
pub trait Problem: Sync {
    fn kind(&self) -> ProblemKind;

    fn num_agents(&self) -> usize;

    fn dim(&self) -> usize;

    fn local_objective(&self, agent: usize, y: &[f64], hyper: &[f64]) -> f64;

    /// Gradient of the agent's augmented Lagrangian with respect to its
    /// primal iterate.
    fn primal_gradient(&self, agent: usize, y: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64>;

    fn primal_step(&self, agent: usize, y: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64>;

    fn dual_update(&self, agent: usize, y_new: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64>;

    fn roles(&self, coord: usize) -> CoordinateRoles;

    /// Gradient of the local objective (data term plus regularizer).
    fn data_gradient(&self, agent: usize, y: &[f64], hyper: &[f64], out: &mut [f64]);

    /// Hessian of the local objective applied to `v`, with the ℓ1 term
    /// treated as piecewise linear.
    fn data_hessian_vec(&self, agent: usize, y: &[f64], v: &[f64], out: &mut [f64]);

    /// Adds `Σ_i v_i ∂(∇f)_i/∂h` to `hyper_adjoint` for every tuple slot `h`.
    fn data_gradient_hyper_vjp(&self, agent: usize, y: &[f64], v: &[f64], hyper_adjoint: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
    /// Latest iterate received from each neighbor.
    pub neighbor_copies: BTreeMap<usize, Vec<f64>>,
}

/// The state of every agent between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
}

impl NetworkState {
    /// Everything zero, as before the first iteration.
    pub fn zeros(graph: &AgentGraph, dim: usize) -> Self {
        let agents = (0..graph.num_agents())
            .map(|p| AgentState {
                primal: vec![0.0; dim],
                dual: vec![0.0; dim],
                neighbor_copies: graph.neighbors(p).iter().map(|&j| (j, vec![0.0; dim])).collect(),
            })
            .collect();
        Self { agents }
    }

    pub fn primals(&self) -> Vec<&[f64]> {
        self.agents.iter().map(|a| a.primal.as_slice()).collect()
    }

    /// Runs iteration `iteration` (0-based) of the schedule.
    pub fn iterate<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        graph: &AgentGraph,
        coloring: &ProperColoring,
        schedule: &HyperparameterSchedule,
        iteration: usize,
    ) -> Result<()> {
        self.iterate_with_order(problem, graph, coloring, schedule, iteration, |class| class.to_vec())
    }

    /// Like [`NetworkState::iterate`], visiting each color class in the
    /// order returned by `order`. The result does not depend on it.
    pub fn iterate_with_order<P, F>(
        &mut self,
        problem: &P,
        graph: &AgentGraph,
        coloring: &ProperColoring,
        schedule: &HyperparameterSchedule,
        iteration: usize,
        order: F,
    ) -> Result<()>
    where
        P: Problem + ?Sized,
        F: Fn(&[usize]) -> Vec<usize>,
    {
        for class in coloring.classes() {
            let mut updated = Vec::with_capacity(class.len());
            for agent in order(class) {
                let state = &self.agents[agent];
                let copies: Vec<&[f64]> = state.neighbor_copies.values().map(Vec::as_slice).collect();
                let hyper = schedule.tuple(iteration, agent);
                let next = problem.primal_step(agent, &state.primal, &copies, &state.dual, hyper);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence {
                        iteration: iteration + 1,
                        agent: agent + 1,
                    });
                }
                updated.push((agent, next));
            }
            // Deliver only after the whole class has stepped.
            for (agent, next) in updated {
                for &j in graph.neighbors(agent) {
                    self.agents[j]
                        .neighbor_copies
                        .get_mut(&agent)
                        .expect("copy slot exists for every neighbor")
                        .clone_from(&next);
                }
                self.agents[agent].primal = next;
            }
        }
        for agent in 0..self.agents.len() {
            let state = &self.agents[agent];
            let copies: Vec<&[f64]> = state.neighbor_copies.values().map(Vec::as_slice).collect();
            let hyper = schedule.tuple(iteration, agent);
            let dual = problem.dual_update(agent, &state.primal, &copies, &state.dual, hyper);
            if dual.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    iteration: iteration + 1,
                    agent: agent + 1,
                });
            }
            self.agents[agent].dual = dual;
        }
        Ok(())
    }
}

/// Largest infinity-norm gap between neighboring agents.
pub fn disagreement<V: AsRef<[f64]>>(primals: &[V], graph: &AgentGraph) -> f64 {
    graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            primals[i]
                .as_ref()
                .iter()
                .zip(primals[j].as_ref())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Mean over agents of `‖y_p − target‖²`.
pub fn mean_squared_error<V: AsRef<[f64]>>(primals: &[V], target: &[f64]) -> f64 {
    let total: f64 = primals
        .iter()
        .map(|y| {
            y.as_ref()
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    total / primals.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StopRule {
    pub max_iterations: usize,
    /// Stop as soon as the disagreement drops below this value.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub stop: StopRule,
    pub ground_truth: Option<&'a [f64]>,
    /// Keep every agent's iterate at every iteration in the trace.
    pub keep_iterates: bool,
}

impl<'a> RunOptions<'a> {
    pub fn iterations(max_iterations: usize) -> Self {
        Self {
            stop: StopRule {
                max_iterations,
                tolerance: None,
            },
            ..Self::default()
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.stop.tolerance = Some(tolerance);
        self
    }

    pub fn with_ground_truth(mut self, truth: &'a [f64]) -> Self {
        self.ground_truth = Some(truth);
        self
    }

    pub fn keeping_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean local objective over agents.
    pub objective: f64,
    pub mse: Option<f64>,
    pub disagreement: f64,
    /// Directed messages sent so far.
    pub messages: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// Row 0 is the zero initial state, row k the state after k iterations.
    pub records: Vec<IterationRecord>,
    /// `iterates[k][p]`, present when requested.
    pub iterates: Option<Vec<Vec<Vec<f64>>>>,
    pub final_state: NetworkState,
    /// True when the disagreement tolerance stopped the run.
    pub converged: bool,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace always holds the initial state")
    }

    pub fn final_primals(&self) -> Vec<&[f64]> {
        self.final_state.primals()
    }

    /// Writes `iteration,objective,mse,disagreement,messages`; `mse` is empty
    /// when no ground truth was given.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["iteration", "objective", "mse", "disagreement", "messages"])?;
        for r in &self.records {
            csv.write_record([
                r.iteration.to_string(),
                r.objective.to_string(),
                r.mse.map(|v| v.to_string()).unwrap_or_default(),
                r.disagreement.to_string(),
                r.messages.to_string(),
            ])?;
        }
        csv.flush().map_err(io_err("<csv>"))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        self.write_csv(file)
    }
}

fn check_inputs<P: Problem + ?Sized>(
    problem: &P,
    graph: &AgentGraph,
    coloring: &ProperColoring,
    schedule: &HyperparameterSchedule,
    iterations: usize,
) -> Result<()> {
    if problem.num_agents() != graph.num_agents() {
        return Err(Error::DimensionMismatch {
            expected: graph.num_agents(),
            actual: problem.num_agents(),
            context: "problem agents vs graph",
        });
    }
    if schedule.kind() != problem.kind() {
        return Err(Error::InvalidArgument(format!(
            "{} schedule used with a {} problem",
            schedule.kind(),
            problem.kind()
        )));
    }
    if let Some(p) = schedule.bound_agents() {
        if p != graph.num_agents() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_agents(),
                actual: p,
                context: "agent-specific schedule agents",
            });
        }
    }
    if !schedule.covers(iterations) {
        return Err(Error::InvalidArgument(format!(
            "schedule depth {:?} shorter than {iterations} iterations",
            schedule.depth()
        )));
    }
    let report = crate::graph::validate_coloring(graph, coloring);
    if !report.passed() {
        return Err(Error::InvalidArgument(report.to_string()));
    }
    Ok(())
}

fn record<P: Problem + ?Sized>(
    problem: &P,
    state: &NetworkState,
    graph: &AgentGraph,
    schedule: &HyperparameterSchedule,
    iteration: usize,
    truth: Option<&[f64]>,
) -> IterationRecord {
    let primals = state.primals();
    // The objective's τ comes from the iteration that produced the iterate.
    let hyper_iteration = iteration.saturating_sub(1);
    let objective = primals
        .iter()
        .enumerate()
        .map(|(p, y)| problem.local_objective(p, y, schedule.tuple(hyper_iteration, p)))
        .sum::<f64>()
        / primals.len() as f64;
    IterationRecord {
        iteration,
        objective,
        mse: truth.map(|t| mean_squared_error(&primals, t)),
        disagreement: disagreement(&primals, graph),
        messages: 2 * graph.num_edges() as u64 * iteration as u64,
    }
}

/// Runs D-ADMM from the zero state and records every iteration.
pub fn run_dadmm<P: Problem + ?Sized>(
    problem: &P,
    graph: &AgentGraph,
    coloring: &ProperColoring,
    schedule: &HyperparameterSchedule,
    options: &RunOptions<'_>,
) -> Result<RunTrace> {
    let max_iterations = options.stop.max_iterations;
    check_inputs(problem, graph, coloring, schedule, max_iterations)?;
    if let Some(truth) = options.ground_truth {
        if truth.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                actual: truth.len(),
                context: "ground truth",
            });
        }
    }
    let mut state = NetworkState::zeros(graph, problem.dim());
    let mut records = vec![record(problem, &state, graph, schedule, 0, options.ground_truth)];
    let mut iterates = options
        .keep_iterates
        .then(|| vec![state.agents.iter().map(|a| a.primal.clone()).collect::<Vec<_>>()]);
    let mut converged = false;
    for k in 0..max_iterations {
        state.iterate(problem, graph, coloring, schedule, k)?;
        let rec = record(problem, &state, graph, schedule, k + 1, options.ground_truth);
        records.push(rec);
        if let Some(its) = iterates.as_mut() {
            its.push(state.agents.iter().map(|a| a.primal.clone()).collect());
        }
        if options.stop.tolerance.is_some_and(|tol| rec.disagreement < tol) {
            converged = true;
            break;
        }
    }
    Ok(RunTrace {
        records,
        iterates,
        final_state: state,
        converged,
    })
}
