//! Distributed linear regression: agents share an affine model `(a, ω)` and
//! each holds `L_p` labeled samples, minimizing
//! `(1/(2 L_p)) Σ_i (aᵀx_i + ω − s_i)²`.
//!
//! Flat iterate layout is `[a_1, …, a_d, ω]`; the flat dual is `[μ, λ]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, TrainingDataset};
use crate::engine::{CoordinateRoles, Problem};
use crate::error::{io_err, Error, Result};
use crate::linalg::dot;
use crate::schedule::ProblemKind;

pub const ALPHA: usize = 0;
pub const RHO: usize = 1;
pub const DELTA: usize = 2;
pub const BETA: usize = 3;
pub const ETA: usize = 4;
pub const GAMMA: usize = 5;

/// One `(α, ρ, δ, β, η, γ)` tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegHyper {
    pub alpha: f64,
    pub rho: f64,
    pub delta: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
}

impl LinRegHyper {
    pub fn to_array(self) -> [f64; 6] {
        [self.alpha, self.rho, self.delta, self.beta, self.eta, self.gamma]
    }

    pub fn from_slice(h: &[f64]) -> Self {
        Self {
            alpha: h[ALPHA],
            rho: h[RHO],
            delta: h[DELTA],
            beta: h[BETA],
            eta: h[ETA],
            gamma: h[GAMMA],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegModel {
    pub a: Vec<f64>,
    pub omega: f64,
}

impl LinRegModel {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = self.a.clone();
        y.push(self.omega);
        y
    }

    pub fn from_flat(y: &[f64]) -> Self {
        let (a, omega) = y.split_at(y.len() - 1);
        Self {
            a: a.to_vec(),
            omega: omega[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRegDuals {
    pub mu: Vec<f64>,
    pub lambda: f64,
}

/// Labeled samples of one agent with cached second moments of `z = [x; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRegLocalData {
    samples: Vec<(Vec<f64>, f64)>,
    /// `(1/L) Σ z zᵀ`, row-major `(d+1)²`.
    gram: Vec<f64>,
    /// `(1/L) Σ s z`
    moment: Vec<f64>,
}

impl LinRegLocalData {
    pub fn new(samples: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let d = samples
            .first()
            .map(|(x, _)| x.len())
            .ok_or_else(|| Error::InvalidArgument("agent has no labeled samples".into()))?;
        if d == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if let Some((x, _)) = samples.iter().find(|(x, _)| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
                context: "feature vector",
            });
        }
        let dz = d + 1;
        let scale = 1.0 / samples.len() as f64;
        let mut gram = vec![0.0; dz * dz];
        let mut moment = vec![0.0; dz];
        let mut z = vec![1.0; dz];
        for (x, s) in &samples {
            z[..d].copy_from_slice(x);
            for i in 0..dz {
                moment[i] += scale * s * z[i];
                for j in 0..dz {
                    gram[i * dz + j] += scale * z[i] * z[j];
                }
            }
        }
        Ok(Self { samples, gram, moment })
    }

    pub fn samples(&self) -> &[(Vec<f64>, f64)] {
        &self.samples
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn features(&self) -> usize {
        self.moment.len() - 1
    }

    fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.features() {
            return Err(Error::DimensionMismatch {
                expected: self.features(),
                actual: a.len(),
                context: "regression weights",
            });
        }
        Ok(())
    }

    /// Gradient of the data term at flat `y = [a; ω]`: `G y − m`.
    fn data_grad_into(&self, y: &[f64], out: &mut [f64]) {
        let dz = self.moment.len();
        for ((o, row), m) in out.iter_mut().zip(self.gram.chunks_exact(dz)).zip(&self.moment) {
            *o = dot(row, y) - m;
        }
    }

    fn gram_vec_into(&self, v: &[f64], out: &mut [f64]) {
        let dz = self.moment.len();
        for (o, row) in out.iter_mut().zip(self.gram.chunks_exact(dz)) {
            *o = dot(row, v);
        }
    }
}

/// `(1/(2 L_p)) Σ_i (aᵀx_i + ω − s_i)²`
pub fn linreg_objective(data: &LinRegLocalData, model: &LinRegModel) -> Result<f64> {
    data.check(&model.a)?;
    let total: f64 = data
        .samples
        .iter()
        .map(|(x, s)| {
            let r = dot(&model.a, x) + model.omega - s;
            r * r
        })
        .sum();
    Ok(total / (2.0 * data.num_samples() as f64))
}

/// `a − α·[(1/L) Σ_i x_i(x_iᵀa + ω − s_i) + Σ_j (μ + ρ(a − a_j))]`
pub fn linreg_primal_step_a(
    data: &LinRegLocalData,
    a: &[f64],
    omega: f64,
    neighbor_a: &[&[f64]],
    mu: &[f64],
    alpha: f64,
    rho: f64,
) -> Result<Vec<f64>> {
    data.check(a)?;
    data.check(mu)?;
    for c in neighbor_a {
        data.check(c)?;
    }
    let d = a.len();
    let mut y = a.to_vec();
    y.push(omega);
    let mut grad = vec![0.0; d + 1];
    data.data_grad_into(&y, &mut grad);
    grad.truncate(d);
    for copy in neighbor_a {
        for i in 0..d {
            grad[i] += mu[i] + rho * (a[i] - copy[i]);
        }
    }
    Ok(a.iter().zip(grad).map(|(ai, g)| ai - alpha * g).collect())
}

/// `ω − δ·[(1/L) Σ_i (aᵀx_i + ω − s_i) + Σ_j (λ + β(ω − ω_j))]`
pub fn linreg_primal_step_omega(
    data: &LinRegLocalData,
    a: &[f64],
    omega: f64,
    neighbor_omega: &[f64],
    lambda: f64,
    delta: f64,
    beta: f64,
) -> Result<f64> {
    data.check(a)?;
    let d = a.len();
    let dz = d + 1;
    let row = &data.gram[d * dz..];
    let mut grad = dot(&row[..d], a) + row[d] * omega - data.moment[d];
    for &copy in neighbor_omega {
        grad += lambda + beta * (omega - copy);
    }
    Ok(omega - delta * grad)
}

/// `μ + η·Σ_j (a_new − a_j)`
pub fn linreg_dual_update_mu(mu: &[f64], a_new: &[f64], neighbor_a: &[&[f64]], eta: f64) -> Vec<f64> {
    let mut out = mu.to_vec();
    for copy in neighbor_a {
        for i in 0..out.len() {
            out[i] += eta * (a_new[i] - copy[i]);
        }
    }
    out
}

/// `λ + γ·Σ_j (ω_new − ω_j)`
pub fn linreg_dual_update_lambda(lambda: f64, omega_new: f64, neighbor_omega: &[f64], gamma: f64) -> f64 {
    lambda + gamma * neighbor_omega.iter().map(|w| omega_new - w).sum::<f64>()
}

fn split_copies<'a>(copies: &[&'a [f64]], d: usize) -> (Vec<&'a [f64]>, Vec<f64>) {
    copies.iter().map(|c| (&c[..d], c[d])).unzip()
}

/// A D-LR instance over `P` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct LinRegProblem {
    agents: Vec<LinRegLocalData>,
}

impl LinRegProblem {
    pub fn new(agents: Vec<LinRegLocalData>) -> Result<Self> {
        let d = agents
            .first()
            .map(LinRegLocalData::features)
            .ok_or_else(|| Error::InvalidArgument("regression problem needs at least one agent".into()))?;
        if let Some(bad) = agents.iter().find(|a| a.features() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.features(),
                context: "feature dimension across agents",
            });
        }
        Ok(Self { agents })
    }

    pub fn agent(&self, p: usize) -> &LinRegLocalData {
        &self.agents[p]
    }

    pub fn features(&self) -> usize {
        self.agents[0].features()
    }
}

impl Problem for LinRegProblem {
    fn kind(&self) -> ProblemKind {
        ProblemKind::Linreg
    }

    fn num_agents(&self) -> usize {
        self.agents.len()
    }

    fn dim(&self) -> usize {
        self.features() + 1
    }

    fn local_objective(&self, agent: usize, y: &[f64], _hyper: &[f64]) -> f64 {
        linreg_objective(&self.agents[agent], &LinRegModel::from_flat(y)).expect("engine passes consistent dimensions")
    }

    fn primal_gradient(&self, agent: usize, y: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64> {
        let h = LinRegHyper::from_slice(hyper);
        let d = self.features();
        let mut grad = vec![0.0; d + 1];
        self.agents[agent].data_grad_into(y, &mut grad);
        for copy in copies {
            for i in 0..d {
                grad[i] += dual[i] + h.rho * (y[i] - copy[i]);
            }
            grad[d] += dual[d] + h.beta * (y[d] - copy[d]);
        }
        grad
    }

    fn primal_step(&self, agent: usize, y: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64> {
        let h = LinRegHyper::from_slice(hyper);
        let d = self.features();
        let data = &self.agents[agent];
        let (copy_a, copy_omega) = split_copies(copies, d);
        let mut next = linreg_primal_step_a(data, &y[..d], y[d], &copy_a, &dual[..d], h.alpha, h.rho)
            .expect("engine passes consistent dimensions");
        let omega = linreg_primal_step_omega(data, &y[..d], y[d], &copy_omega, dual[d], h.delta, h.beta)
            .expect("engine passes consistent dimensions");
        next.push(omega);
        next
    }

    fn dual_update(&self, _agent: usize, y_new: &[f64], copies: &[&[f64]], dual: &[f64], hyper: &[f64]) -> Vec<f64> {
        let h = LinRegHyper::from_slice(hyper);
        let d = self.features();
        let (copy_a, copy_omega) = split_copies(copies, d);
        let mut next = linreg_dual_update_mu(&dual[..d], &y_new[..d], &copy_a, h.eta);
        next.push(linreg_dual_update_lambda(dual[d], y_new[d], &copy_omega, h.gamma));
        next
    }

    fn roles(&self, coord: usize) -> CoordinateRoles {
        if coord < self.features() {
            CoordinateRoles {
                step: ALPHA,
                penalty: RHO,
                dual_step: ETA,
            }
        } else {
            CoordinateRoles {
                step: DELTA,
                penalty: BETA,
                dual_step: GAMMA,
            }
        }
    }

    fn data_gradient(&self, agent: usize, y: &[f64], _hyper: &[f64], out: &mut [f64]) {
        self.agents[agent].data_grad_into(y, out);
    }

    fn data_hessian_vec(&self, agent: usize, _y: &[f64], v: &[f64], out: &mut [f64]) {
        self.agents[agent].gram_vec_into(v, out);
    }

    fn data_gradient_hyper_vjp(&self, _agent: usize, _y: &[f64], _v: &[f64], _hyper_adjoint: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinRegDatasetHeader {
    #[serde(rename = "P")]
    pub num_agents: usize,
    pub d: usize,
    #[serde(rename = "L_p")]
    pub samples_per_agent: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub num_train: usize,
    pub num_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegSample {
    /// Per agent, `[x, s]` pairs.
    pub agents: Vec<Vec<(Vec<f64>, f64)>>,
    pub y_bar: LinRegModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegDataset {
    pub header: LinRegDatasetHeader,
    pub samples: Vec<LinRegSample>,
}

/// Draws a standard-Gaussian model `(ā, ω̄)` per sample and, per agent,
/// `L_p` standard-Gaussian features labeled `āᵀx + ω̄ + noise`.
pub fn generate_linreg_dataset(params: &LinRegDatasetHeader) -> Result<LinRegDataset> {
    let h = *params;
    if h.num_agents == 0 || h.d == 0 || h.samples_per_agent == 0 {
        return Err(Error::InvalidArgument(format!(
            "regression dimensions must be positive (P={}, d={}, L_p={})",
            h.num_agents, h.d, h.samples_per_agent
        )));
    }
    if !(h.noise_std >= 0.0 && h.noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise std {} invalid", h.noise_std)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let samples = (0..h.num_train + h.num_test)
        .map(|_| {
            let a: Vec<f64> = (0..h.d).map(|_| rng.sample(StandardNormal)).collect();
            let omega: f64 = rng.sample(StandardNormal);
            let agents = (0..h.num_agents)
                .map(|_| {
                    (0..h.samples_per_agent)
                        .map(|_| {
                            let x: Vec<f64> = (0..h.d).map(|_| rng.sample(StandardNormal)).collect();
                            let noise: f64 = rng.sample(StandardNormal);
                            let s = dot(&a, &x) + omega + h.noise_std * noise;
                            (x, s)
                        })
                        .collect()
                })
                .collect();
            LinRegSample {
                agents,
                y_bar: LinRegModel { a, omega },
            }
        })
        .collect();
    Ok(LinRegDataset { header: h, samples })
}

impl LinRegDataset {
    pub fn problem(sample: &LinRegSample) -> Result<LinRegProblem> {
        let agents = sample
            .agents
            .iter()
            .map(|s| LinRegLocalData::new(s.clone()))
            .collect::<Result<Vec<_>>>()?;
        LinRegProblem::new(agents)
    }

    pub fn to_training(&self) -> Result<TrainingDataset<LinRegProblem>> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    problem: Self::problem(s)?,
                    target: s.y_bar.to_flat(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingDataset {
            samples,
            num_train: self.header.num_train,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let ds: Self = serde_json::from_str(&text)?;
        if ds.samples.len() != ds.header.num_train + ds.header.num_test {
            return Err(Error::InvalidArgument(format!(
                "{} disagrees with its header",
                path.display()
            )));
        }
        Ok(ds)
    }
}
