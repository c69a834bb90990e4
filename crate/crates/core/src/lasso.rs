//! Distributed LASSO: each agent holds a sensing block `A_p` and observation
//! `b_p` and minimizes `½‖A_p y − b_p‖² + τ‖y‖₁`.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, TrainingDataset};
use crate::engine::{CoordinateRoles, Problem};
use crate::error::{io_err, Error, Result};
use crate::linalg::{norm_sq, Matrix};
use crate::schedule::ProblemKind;

pub const RHO: usize = 0;
pub const ALPHA: usize = 1;
pub const ETA: usize = 2;
pub const TAU: usize = 3;

/// One `(ρ, α, η, τ)` tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoHyper {
    pub rho: f64,
    pub alpha: f64,
    pub eta: f64,
    pub tau: f64,
}

impl LassoHyper {
    pub fn to_array(self) -> [f64; 4] {
        [self.rho, self.alpha, self.eta, self.tau]
    }

    pub fn from_slice(h: &[f64]) -> Self {
        Self {
            rho: h[RHO],
            alpha: h[ALPHA],
            eta: h[ETA],
            tau: h[TAU],
        }
    }
}

/// Componentwise sign with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoLocalData {
    pub a: Arc<Matrix>,
    pub b: Vec<f64>,
}

impl LassoLocalData {
    pub fn new(a: Arc<Matrix>, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                actual: b.len(),
                context: "observation length vs sensing rows",
            });
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    fn check(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: y.len(),
                context: "LASSO iterate",
            });
        }
        Ok(())
    }

    /// `Aᵀ(A y − b) + τ·sign(y)`
    fn smooth_grad_into(&self, y: &[f64], tau: f64, out: &mut [f64]) {
        let mut residual = self.a.mul_vec(y);
        residual.iter_mut().zip(&self.b).for_each(|(r, b)| *r -= b);
        self.a.mul_t_vec_into(&residual, out);
        for (o, &yi) in out.iter_mut().zip(y) {
            *o += tau * sign(yi);
        }
    }
}

/// `½‖A y − b‖² + τ‖y‖₁`
pub fn lasso_objective(data: &LassoLocalData, y: &[f64], tau: f64) -> Result<f64> {
    data.check(y)?;
    let mut residual = data.a.mul_vec(y);
    residual.iter_mut().zip(&data.b).for_each(|(r, b)| *r -= b);
    Ok(0.5 * norm_sq(&residual) + tau * y.iter().map(|v| v.abs()).sum::<f64>())
}

/// `AᵀA y − Aᵀb + τ·sign(y) + Σ_j [λ + ρ(y − y_j)]`; the caller steps
/// `y ← y − α·(this)`.
pub fn lasso_primal_gradient(
    data: &LassoLocalData,
    y: &[f64],
    copies: &[&[f64]],
    lambda: &[f64],
    rho: f64,
    tau: f64,
) -> Result<Vec<f64>> {
    data.check(y)?;
    if lambda.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: lambda.len(),
            context: "LASSO dual",
        });
    }
    if let Some(bad) = copies.iter().find(|c| c.len() != y.len()) {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: bad.len(),
            context: "LASSO neighbor copy",
        });
    }
    let mut grad = vec![0.0; y.len()];
    data.smooth_grad_into(y, tau, &mut grad);
    for copy in copies {
        for i in 0..y.len() {
            grad[i] += lambda[i] + rho * (y[i] - copy[i]);
        }
    }
    Ok(grad)
}

/// `λ + η·Σ_j (y_new − y_j)`
pub fn lasso_dual_update(lambda: &[f64], y_new: &[f64], copies: &[&[f64]], eta: f64) -> Vec<f64> {
    let mut out = lambda.to_vec();
    for copy in copies {
        for i in 0..out.len() {
            out[i] += eta * (y_new[i] - copy[i]);
        }
    }
    out
}

/// A D-LASSO instance over `P` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    agents: Vec<LassoLocalData>,
}

impl LassoProblem {
    pub fn new(agents: Vec<LassoLocalData>) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::InvalidArgument("LASSO problem needs at least one agent".into()))?;
        let n = first.dim();
        if let Some(bad) = agents.iter().find(|a| a.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: bad.dim(),
                context: "sensing columns across agents",
            });
        }
        Ok(Self { agents })
    }

    pub fn agent(&self, p: usize) -> &LassoLocalData {
        &self.agents[p]
    }
}

impl Problem for LassoProblem {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Lasso
    }

    fn num_agents(&self) -> usize {
        self.agents.len()
    }

    fn dim(&self) -> usize {
        self.agents[0].dim()
    }

    fn local_objective(&self, agent: usize, y: &[f64], hyper: &[f64]) -> f64 {
        lasso_objective(&self.agents[agent], y, hyper[TAU]).expect("engine passes consistent dimensions")
    }

    fn primal_gradient(&self, agent: usize, y: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64> {
        lasso_primal_gradient(&self.agents[agent], y, copies, dual, hyper[RHO], hyper[TAU])
            .expect("engine passes consistent dimensions")
    }

    fn primal_step(&self, agent: usize, y: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64> {
        let grad = self.primal_gradient(agent, y, copies, dual, hyper);
        y.iter().zip(grad).map(|(yi, g)| yi - hyper[ALPHA] * g).collect()
    }

    fn dual_update(&self, _agent: usize, y_new: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64> {
        lasso_dual_update(dual, y_new, copies, hyper[ETA])
    }

    fn roles(&self, _coord: usize) -> CoordinateRoles {
        CoordinateRoles {
            step: ALPHA,
            penalty: RHO,
            dual_step: ETA,
        }
    }

    fn data_gradient(&self, agent: usize, y: &[f64], hyper: &[f64], out: &mut [f64]) {
        self.agents[agent].smooth_grad_into(y, hyper[TAU], out);
    }

    fn data_hessian_vec(&self, agent: usize, _y: &[f64], v: &[f64], out: &mut [f64]) {
        let a = &self.agents[agent].a;
        a.mul_t_vec_into(&a.mul_vec(v), out);
    }

    fn data_gradient_hyper_vjp(&self, _agent: usize, y: &[f64], v: &[f64], hyper_adjoint: &mut [f64]) {
        hyper_adjoint[TAU] += y.iter().zip(v).map(|(&yi, vi)| sign(yi) * vi).sum::<f64>();
    }
}

/// `σ² = 10^(−SNR/10)`, with SNR defined as `1/σ²`.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Non-zero count of a sparse ground truth: `⌈sparsity·n⌉`.
pub fn support_size(sparsity: f64, n: usize) -> usize {
    // Guard against 0.3·10 = 3.0000000000000004 style round-up.
    ((sparsity * n as f64) - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoDatasetHeader {
    #[serde(rename = "P")]
    pub num_agents: usize,
    pub n: usize,
    pub m: usize,
    pub sparsity: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub num_train: usize,
    pub num_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSample {
    /// One observation vector per agent.
    pub b: Vec<Vec<f64>>,
    pub y_bar: Vec<f64>,
}

/// Sensing blocks shared by every sample plus the labeled samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoDataset {
    pub header: LassoDatasetHeader,
    pub sensing: Vec<Arc<Matrix>>,
    pub samples: Vec<LassoSample>,
}

#[derive(Serialize, Deserialize)]
struct LassoDatasetFile {
    header: LassoDatasetHeader,
    /// Row-major `m × n` block per agent.
    sensing: Vec<Vec<f64>>,
    samples: Vec<LassoSample>,
}

/// Draws Gaussian sensing blocks once, then `num_train + num_test` sparse
/// ground truths with noisy per-agent observations `b_p = A_p ȳ + n_p`.
pub fn generate_lasso_dataset(params: &LassoDatasetHeader) -> Result<LassoDataset> {
    let LassoDatasetHeader {
        num_agents,
        n,
        m,
        sparsity,
        snr_db,
        seed,
        num_train,
        num_test,
    } = *params;
    if num_agents == 0 || n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "LASSO dimensions must be positive (P={num_agents}, n={n}, m={m})"
        )));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!("sparsity {sparsity} outside (0, 1]")));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument("SNR must be finite".into()));
    }
    if m * num_agents > n {
        log::warn!(
            "m·P = {} exceeds n = {n}; the pooled system is not compressive",
            m * num_agents
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entry = Normal::new(0.0, (1.0 / (m * num_agents) as f64).sqrt()).expect("positive std");
    let sensing: Vec<Arc<Matrix>> = (0..num_agents)
        .map(|_| {
            let data = (0..m * n).map(|_| entry.sample(&mut rng)).collect();
            Arc::new(Matrix::from_row_major(m, n, data).expect("sized above"))
        })
        .collect();
    let noise_std = noise_variance(snr_db).sqrt();
    let k = support_size(sparsity, n);
    let samples = (0..num_train + num_test)
        .map(|_| {
            let mut y_bar = vec![0.0; n];
            for idx in rand::seq::index::sample(&mut rng, n, k) {
                y_bar[idx] = rng.sample(StandardNormal);
            }
            let b = sensing
                .iter()
                .map(|a| {
                    let mut b = a.mul_vec(&y_bar);
                    for v in &mut b {
                        *v += noise_std * rng.sample::<f64, _>(StandardNormal);
                    }
                    b
                })
                .collect();
            LassoSample { b, y_bar }
        })
        .collect();
    Ok(LassoDataset {
        header: *params,
        sensing,
        samples,
    })
}

impl LassoDataset {
    pub fn problem(&self, sample: &LassoSample) -> Result<LassoProblem> {
        let agents = self
            .sensing
            .iter()
            .zip(&sample.b)
            .map(|(a, b)| LassoLocalData::new(Arc::clone(a), b.clone()))
            .collect::<Result<Vec<_>>>()?;
        LassoProblem::new(agents)
    }

    pub fn to_training(&self) -> Result<TrainingDataset<LassoProblem>> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    problem: self.problem(s)?,
                    target: s.y_bar.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingDataset {
            samples,
            num_train: self.header.num_train,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = LassoDatasetFile {
            header: self.header,
            sensing: self.sensing.iter().map(|a| a.as_slice().to_vec()).collect(),
            samples: self.samples.clone(),
        };
        let text = serde_json::to_string(&file)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let file: LassoDatasetFile = serde_json::from_str(&text)?;
        let h = file.header;
        if file.sensing.len() != h.num_agents || file.samples.len() != h.num_train + h.num_test {
            return Err(Error::InvalidArgument(format!(
                "{} disagrees with its header",
                path.display()
            )));
        }
        let sensing = file
            .sensing
            .into_iter()
            .map(|data| Matrix::from_row_major(h.m, h.n, data).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            header: h,
            sensing,
            samples: file.samples,
        })
    }
}
