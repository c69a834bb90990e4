//! Loss of the unrolled pipeline and its exact gradient with respect to every
//! scheduled hyperparameter.
//!
//! The forward pass checkpoints all primal and dual iterates after each
//! iteration. The backward pass walks the iterations in reverse; inside an
//! iteration it first undoes the dual phase, then the primal updates in
//! reverse color order. A neighbor iterate read during a primal step is the
//! new one when the neighbor's color comes first and the old one otherwise,
//! so both versions are available from the two bracketing checkpoints.

use rayon::prelude::*;

use crate::dataset::Sample;
use crate::engine::{NetworkState, Problem};
use crate::error::{Error, Result};
use crate::graph::{AgentGraph, ProperColoring};
use crate::schedule::HyperparameterSchedule;

/// Mean squared error `(1/(|D|·P)) Σ_l Σ_p ‖y_p − ȳ_l‖²` over `outputs[l][p]`.
pub fn mse_loss<V: AsRef<[f64]>>(outputs: &[Vec<V>], targets: &[Vec<f64>]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if outputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: outputs.len(),
            context: "outputs vs targets",
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (agents, target) in outputs.iter().zip(targets) {
        for y in agents {
            let y = y.as_ref();
            if y.len() != target.len() {
                return Err(Error::DimensionMismatch {
                    expected: target.len(),
                    actual: y.len(),
                    context: "agent output vs target",
                });
            }
            total += y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        count += agents.len();
    }
    Ok(total / count as f64)
}

/// Primal and dual iterates of every agent after each of `depth` iterations.
#[derive(Debug, Clone)]
pub struct Checkpoints {
    /// `primal[k][p]`, `k = 0..=depth`.
    pub primal: Vec<Vec<Vec<f64>>>,
    pub dual: Vec<Vec<Vec<f64>>>,
}

pub fn forward<P: Problem + ?Sized>(
    problem: &P,
    graph: &AgentGraph,
    coloring: &ProperColoring,
    schedule: &HyperparameterSchedule,
    depth: usize,
) -> Result<Checkpoints> {
    let mut state = NetworkState::zeros(graph, problem.dim());
    let snapshot = |s: &NetworkState| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        s.agents.iter().map(|a| (a.primal.clone(), a.dual.clone())).unzip()
    };
    let (p0, d0) = snapshot(&state);
    let mut primal = vec![p0];
    let mut dual = vec![d0];
    for k in 0..depth {
        state.iterate(problem, graph, coloring, schedule, k)?;
        let (p, d) = snapshot(&state);
        primal.push(p);
        dual.push(d);
    }
    Ok(Checkpoints { primal, dual })
}

/// Gradient of the batch loss plus summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub loss: f64,
    /// Same layout as the schedule's flat values.
    pub gradient: Vec<f64>,
    pub norm: f64,
    pub max_abs: f64,
}

impl GradientReport {
    fn new(loss: f64, gradient: Vec<f64>) -> Self {
        let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        let max_abs = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        Self {
            loss,
            gradient,
            norm,
            max_abs,
        }
    }
}

fn neighbor_sum(ys: &[Vec<f64>], neighbors: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for &j in neighbors {
        for (o, v) in out.iter_mut().zip(&ys[j]) {
            *o += v;
        }
    }
}

/// Accumulates `scale · Σ_p ‖y_p^{(depth)} − target‖²` and its gradient into
/// `grad`; returns the unscaled squared error sum.
#[allow(clippy::too_many_arguments)]
fn sample_gradient<P: Problem + ?Sized>(
    problem: &P,
    graph: &AgentGraph,
    coloring: &ProperColoring,
    schedule: &HyperparameterSchedule,
    depth: usize,
    target: &[f64],
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let ckpt = forward(problem, graph, coloring, schedule, depth)?;
    let n = problem.dim();
    let num_agents = graph.num_agents();
    let tuple_len = schedule.kind().tuple_len();
    let roles: Vec<_> = (0..n).map(|i| problem.roles(i)).collect();

    let mut squared_error = 0.0;
    let mut y_adj: Vec<Vec<f64>> = ckpt.primal[depth]
        .iter()
        .map(|y| {
            y.iter()
                .zip(target)
                .map(|(a, b)| {
                    squared_error += (a - b) * (a - b);
                    2.0 * scale * (a - b)
                })
                .collect()
        })
        .collect();
    let mut dual_adj = vec![vec![0.0; n]; num_agents];

    let mut sum_buf = vec![0.0; n];
    let mut data_grad = vec![0.0; n];
    let mut hv = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut hyper_adj = vec![0.0; tuple_len];

    for k in (0..depth).rev() {
        let y_old = &ckpt.primal[k];
        let y_new = &ckpt.primal[k + 1];
        let lam_old = &ckpt.dual[k];

        // Dual phase: λ' = λ + e ⊙ (|N|·y' − Σ_j y'_j).
        for p in 0..num_agents {
            let nbrs = graph.neighbors(p);
            let deg = nbrs.len() as f64;
            if nbrs.is_empty() {
                continue;
            }
            let hyper = schedule.tuple(k, p);
            let offset = schedule.offset(k, p);
            neighbor_sum(y_new, nbrs, &mut sum_buf);
            for i in 0..n {
                let la = dual_adj[p][i];
                if la == 0.0 {
                    continue;
                }
                let e = hyper[roles[i].dual_step];
                grad[offset + roles[i].dual_step] += la * (deg * y_new[p][i] - sum_buf[i]);
                y_adj[p][i] += deg * e * la;
                for &j in nbrs {
                    y_adj[j][i] -= e * la;
                }
            }
        }

        // Primal phase, reverse color order.
        for class in coloring.classes().iter().rev() {
            for &p in class {
                let nbrs = graph.neighbors(p);
                let deg = nbrs.len() as f64;
                let color = coloring.color_of(p);
                let hyper = schedule.tuple(k, p);
                let offset = schedule.offset(k, p);
                let yp = &y_old[p];

                sum_buf.iter_mut().for_each(|s| *s = 0.0);
                for &j in nbrs {
                    let seen = if coloring.color_of(j) < color {
                        &y_new[j]
                    } else {
                        &y_old[j]
                    };
                    for (s, val) in sum_buf.iter_mut().zip(seen) {
                        *s += val;
                    }
                }
                problem.data_gradient(p, yp, hyper, &mut data_grad);

                hyper_adj.iter_mut().for_each(|h| *h = 0.0);
                for i in 0..n {
                    let r = hyper[roles[i].penalty];
                    let consensus = deg * yp[i] - sum_buf[i];
                    let q = data_grad[i] + deg * lam_old[p][i] + r * consensus;
                    let w = y_adj[p][i];
                    hyper_adj[roles[i].step] -= w * q;
                    v[i] = -hyper[roles[i].step] * w;
                    hyper_adj[roles[i].penalty] += v[i] * consensus;
                }
                problem.data_hessian_vec(p, yp, &v, &mut hv);
                problem.data_gradient_hyper_vjp(p, yp, &v, &mut hyper_adj);
                for (h, g) in hyper_adj.iter().enumerate() {
                    grad[offset + h] += g;
                }
                for i in 0..n {
                    let r = hyper[roles[i].penalty];
                    y_adj[p][i] += hv[i] + deg * r * v[i];
                    dual_adj[p][i] += deg * v[i];
                    for &j in nbrs {
                        y_adj[j][i] -= r * v[i];
                    }
                }
                if y_adj[p].iter().chain(&dual_adj[p]).any(|a| !a.is_finite()) {
                    return Err(Error::NonFiniteGradient {
                        iteration: k + 1,
                        agent: p + 1,
                    });
                }
            }
        }
    }
    Ok(squared_error)
}

/// MSE loss at `depth` over `batch` and its exact gradient with respect to
/// every scalar of `schedule`. Entries of iterations at or beyond `depth` are
/// exactly zero.
///
/// Samples run in parallel; per-sample gradients are summed in batch order.
pub fn loss_gradient<P: Problem>(
    schedule: &HyperparameterSchedule,
    batch: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    depth: usize,
) -> Result<GradientReport> {
    let refs: Vec<&Sample<P>> = batch.iter().collect();
    loss_gradient_refs(schedule, &refs, graph, coloring, depth)
}

pub(crate) fn loss_gradient_refs<P: Problem>(
    schedule: &HyperparameterSchedule,
    batch: &[&Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    depth: usize,
) -> Result<GradientReport> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if !schedule.covers(depth) {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} beyond schedule depth {:?}",
            schedule.depth()
        )));
    }
    let scale = 1.0 / (batch.len() * graph.num_agents()) as f64;
    let per_sample: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_iter()
        .map(|sample| {
            let mut grad = vec![0.0; schedule.num_scalars()];
            let se = sample_gradient(
                &sample.problem,
                graph,
                coloring,
                schedule,
                depth,
                &sample.target,
                scale,
                &mut grad,
            )?;
            Ok((se, grad))
        })
        .collect();
    let mut gradient = vec![0.0; schedule.num_scalars()];
    let mut total = 0.0;
    for item in per_sample {
        let (se, g) = item?;
        total += se;
        gradient.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok(GradientReport::new(total * scale, gradient))
}

/// MSE loss at `depth` over `batch` (forward only).
pub fn batch_loss<P: Problem>(
    schedule: &HyperparameterSchedule,
    batch: &[Sample<P>],
    graph: &AgentGraph,
    coloring: &ProperColoring,
    depth: usize,
) -> Result<f64> {
    let outputs: Vec<Result<Vec<Vec<f64>>>> = batch
        .par_iter()
        .map(|s| {
            let mut state = NetworkState::zeros(graph, s.problem.dim());
            for k in 0..depth {
                state.iterate(&s.problem, graph, coloring, schedule, k)?;
            }
            Ok(state.agents.into_iter().map(|a| a.primal).collect())
        })
        .collect();
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<f64>> = batch.iter().map(|s| s.target.clone()).collect();
    mse_loss(&outputs, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let exact = vec![vec![vec![1.0, 2.0], vec![1.0, 2.0]]];
        assert_eq!(mse_loss(&exact, &[vec![1.0, 2.0]]).unwrap(), 0.0);
        let one = vec![vec![vec![1.0, 0.0]]];
        assert_eq!(mse_loss(&one, &[vec![0.0, 0.0]]).unwrap(), 1.0);
        // Hand sums: sample 1 → 1 + 4, sample 2 → 0 + 9; divided by 2·2.
        let two = vec![vec![vec![1.0], vec![2.0]], vec![vec![3.0], vec![0.0]]];
        assert_eq!(mse_loss(&two, &[vec![0.0], vec![3.0]]).unwrap(), 14.0 / 4.0);
        assert!(mse_loss::<Vec<f64>>(&[], &[]).is_err());
        assert!(mse_loss(&one, &[vec![0.0]]).is_err());
    }
}
