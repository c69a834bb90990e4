//! Per-iteration hyperparameter schedules, the trainable weights of the
//! unfolded pipeline.
//!
//! Values are stored flat: iteration-major, then agent (agent-specific mode
//! only), then the problem's tuple order. LASSO tuples are `(ρ, α, η, τ)`;
//! linear-regression tuples are `(α, ρ, δ, β, η, γ)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const THETA_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Lasso,
    Linreg,
}

impl ProblemKind {
    pub fn tuple_len(self) -> usize {
        self.names().len()
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            ProblemKind::Lasso => &["rho", "alpha", "eta", "tau"],
            ProblemKind::Linreg => &["alpha", "rho", "delta", "beta", "eta", "gamma"],
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Lasso => "lasso",
            ProblemKind::Linreg => "linreg",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(ProblemKind::Lasso),
            "linreg" => Ok(ProblemKind::Linreg),
            other => Err(Error::InvalidArgument(format!("unknown problem '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShareMode {
    /// Separate tuple for every (iteration, agent).
    AgentSpecific,
    /// One tuple per iteration, used by every agent.
    Shared,
}

impl fmt::Display for ShareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShareMode::AgentSpecific => "agent-specific",
            ShareMode::Shared => "shared",
        })
    }
}

impl FromStr for ShareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agent-specific" => Ok(ShareMode::AgentSpecific),
            "shared" => Ok(ShareMode::Shared),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    /// One tuple reused at every iteration by every agent.
    Fixed,
    Unfolded {
        mode: ShareMode,
        depth: usize,
        num_agents: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperparameterSchedule {
    kind: ProblemKind,
    layout: Layout,
    values: Vec<f64>,
}

impl HyperparameterSchedule {
    /// A baseline schedule that applies `tuple` at every iteration and agent,
    /// for any number of iterations.
    pub fn fixed(kind: ProblemKind, tuple: &[f64]) -> Result<Self> {
        check_tuple(kind, tuple)?;
        Ok(Self {
            kind,
            layout: Layout::Fixed,
            values: tuple.to_vec(),
        })
    }

    /// A depth-`depth` schedule initialized by repeating `tuple`.
    /// `num_agents` is ignored in shared mode.
    pub fn repeated(
        kind: ProblemKind,
        mode: ShareMode,
        depth: usize,
        num_agents: usize,
        tuple: &[f64],
    ) -> Result<Self> {
        check_tuple(kind, tuple)?;
        let num_agents = match mode {
            ShareMode::AgentSpecific if num_agents == 0 => {
                return Err(Error::InvalidArgument("agent-specific schedule needs P ≥ 1".into()))
            }
            ShareMode::AgentSpecific => num_agents,
            ShareMode::Shared => 1,
        };
        let copies = depth * num_agents;
        let values = tuple.iter().copied().cycle().take(copies * tuple.len()).collect();
        Ok(Self {
            kind,
            layout: Layout::Unfolded {
                mode,
                depth,
                num_agents,
            },
            values,
        })
    }

    /// Wraps flat values laid out as described in the module docs.
    pub fn from_values(
        kind: ProblemKind,
        mode: ShareMode,
        depth: usize,
        num_agents: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let num_agents = match mode {
            ShareMode::AgentSpecific => num_agents,
            ShareMode::Shared => 1,
        };
        let expected = depth * num_agents * kind.tuple_len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
                context: "schedule values",
            });
        }
        Ok(Self {
            kind,
            layout: Layout::Unfolded {
                mode,
                depth,
                num_agents,
            },
            values,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    /// `None` for fixed baseline schedules.
    pub fn mode(&self) -> Option<ShareMode> {
        match self.layout {
            Layout::Fixed => None,
            Layout::Unfolded { mode, .. } => Some(mode),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.layout, Layout::Fixed)
    }

    /// Number of unfolded iterations; `None` for fixed schedules.
    pub fn depth(&self) -> Option<usize> {
        match self.layout {
            Layout::Fixed => None,
            Layout::Unfolded { depth, .. } => Some(depth),
        }
    }

    /// Agent count the schedule is bound to (agent-specific mode only).
    pub fn bound_agents(&self) -> Option<usize> {
        match self.layout {
            Layout::Unfolded {
                mode: ShareMode::AgentSpecific,
                num_agents,
                ..
            } => Some(num_agents),
            _ => None,
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Whether iteration `iteration` (0-based) can be looked up.
    pub fn covers(&self, iterations: usize) -> bool {
        self.depth().is_none_or(|t| iterations <= t)
    }

    /// Flat offset of the tuple used by `agent` at `iteration` (0-based).
    pub fn offset(&self, iteration: usize, agent: usize) -> usize {
        let k = self.kind.tuple_len();
        match self.layout {
            Layout::Fixed => 0,
            Layout::Unfolded {
                mode: ShareMode::Shared,
                ..
            } => iteration * k,
            Layout::Unfolded { num_agents, .. } => (iteration * num_agents + agent) * k,
        }
    }

    pub fn tuple(&self, iteration: usize, agent: usize) -> &[f64] {
        let start = self.offset(iteration, agent);
        &self.values[start..start + self.kind.tuple_len()]
    }

    /// Indices of the flat values belonging to iterations `range` (0-based).
    pub fn iteration_span(&self, range: std::ops::Range<usize>) -> std::ops::Range<usize> {
        let per_iteration = match self.layout {
            Layout::Fixed => return 0..self.values.len(),
            Layout::Unfolded { num_agents, .. } => num_agents * self.kind.tuple_len(),
        };
        range.start * per_iteration..range.end * per_iteration
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = ThetaFile::from_schedule(self)?;
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let file: ThetaFile = serde_json::from_str(&text)?;
        file.into_schedule()
    }
}

fn check_tuple(kind: ProblemKind, tuple: &[f64]) -> Result<()> {
    if tuple.len() != kind.tuple_len() {
        return Err(Error::DimensionMismatch {
            expected: kind.tuple_len(),
            actual: tuple.len(),
            context: "hyperparameter tuple",
        });
    }
    Ok(())
}

/// Serialized trained θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFile {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub mode: ShareMode,
    #[serde(rename = "T")]
    pub depth: usize,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none", default)]
    pub num_agents: Option<usize>,
    /// Tuple order of the innermost index.
    pub names: Vec<String>,
    /// Iteration-major, agent-minor, tuple order innermost.
    pub values: Vec<f64>,
}

impl ThetaFile {
    pub fn from_schedule(schedule: &HyperparameterSchedule) -> Result<Self> {
        let (mode, depth) = match (schedule.mode(), schedule.depth()) {
            (Some(m), Some(t)) => (m, t),
            _ => {
                return Err(Error::InvalidArgument(
                    "fixed baseline schedules are not serialized as θ".into(),
                ))
            }
        };
        Ok(Self {
            schema_version: THETA_SCHEMA_VERSION,
            problem: schedule.kind(),
            mode,
            depth,
            num_agents: schedule.bound_agents(),
            names: schedule.kind().names().iter().map(|s| s.to_string()).collect(),
            values: schedule.values().to_vec(),
        })
    }

    pub fn into_schedule(self) -> Result<HyperparameterSchedule> {
        if self.schema_version != THETA_SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported θ schema version {}",
                self.schema_version
            )));
        }
        let agents = match (self.mode, self.num_agents) {
            (ShareMode::AgentSpecific, Some(p)) => p,
            (ShareMode::AgentSpecific, None) => {
                return Err(Error::InvalidArgument("agent-specific θ requires P".into()))
            }
            (ShareMode::Shared, _) => 1,
        };
        HyperparameterSchedule::from_values(self.problem, self.mode, self.depth, agents, self.values)
    }
}
