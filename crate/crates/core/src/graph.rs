//! Agent communication topology: undirected connected graphs, Erdős–Rényi
//! sampling and greedy proper coloring.
//!
//! Agents are 0-based in the Rust API. The JSON graph file and every
//! human-facing message use 1-based agent and color numbers.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

/// Upper bound on rejected Erdős–Rényi candidates before giving up.
pub const MAX_CONNECTIVITY_ATTEMPTS: usize = 1000;

/// An undirected, connected, simple graph over `num_agents` agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentGraph {
    num_agents: usize,
    /// Sorted, deduplicated pairs with `i < j`.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<usize>>,
}

impl AgentGraph {
    /// Builds a graph from an edge list. Pairs may come in either
    /// orientation and duplicates are merged. Rejects self-loops,
    /// out-of-range agents and disconnected graphs.
    pub fn new(num_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let graph = Self::build(num_agents, edges)?;
        if !graph.is_connected() {
            return Err(Error::InvalidArgument(format!(
                "graph over {num_agents} agents is not connected"
            )));
        }
        Ok(graph)
    }

    fn build(num_agents: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::InvalidArgument("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at agent {}", a + 1)));
            }
            if a >= num_agents || b >= num_agents {
                return Err(Error::InvalidArgument(format!(
                    "edge {{{}, {}}} out of range for {num_agents} agents",
                    a + 1,
                    b + 1
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); num_agents];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_agents,
            edges,
            adjacency,
        })
    }

    pub fn complete(num_agents: usize) -> Result<Self> {
        let edges = (0..num_agents).flat_map(|i| (i + 1..num_agents).map(move |j| (i, j)));
        Self::new(num_agents, edges)
    }

    pub fn path(num_agents: usize) -> Result<Self> {
        Self::new(num_agents, (1..num_agents).map(|j| (j - 1, j)))
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.adjacency[agent]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.adjacency[agent].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_agents];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.num_agents
    }
}

/// Samples G(P, p_edge) graphs until one is connected.
///
/// Every candidate visits the pairs `i < j` in lexicographic order and keeps
/// each one independently with probability `p_edge`. The stream comes from a
/// ChaCha8 generator so the result is identical on every platform.
pub fn generate_erdos_renyi(num_agents: usize, p_edge: f64, seed: u64) -> Result<AgentGraph> {
    if num_agents == 0 {
        return Err(Error::InvalidArgument("graph needs at least one agent".into()));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::InvalidArgument(format!(
            "edge probability {p_edge} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_CONNECTIVITY_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..num_agents {
            for j in i + 1..num_agents {
                if rng.random::<f64>() < p_edge {
                    edges.push((i, j));
                }
            }
        }
        let candidate = AgentGraph::build(num_agents, edges)?;
        if candidate.is_connected() {
            return Ok(candidate);
        }
    }
    Err(Error::Disconnected {
        agents: num_agents,
        p_edge,
        attempts: MAX_CONNECTIVITY_ATTEMPTS,
    })
}

/// A partition of the agents into color classes. Colors are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProperColoring {
    classes: Vec<Vec<usize>>,
    color_of: Vec<usize>,
}

impl ProperColoring {
    /// Builds a coloring from one color per agent. Classes are ordered by
    /// color index, agents within a class ascending.
    pub fn from_colors(color_of: Vec<usize>) -> Self {
        let num_colors = color_of.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut classes = vec![Vec::new(); num_colors];
        for (agent, &c) in color_of.iter().enumerate() {
            classes[c].push(agent);
        }
        Self { classes, color_of }
    }

    /// Builds a coloring from explicit classes without checking them.
    /// Agents missing from every class get color `usize::MAX`; use
    /// [`validate_coloring`] to inspect the result.
    pub fn from_classes(num_agents: usize, classes: Vec<Vec<usize>>) -> Self {
        let mut color_of = vec![usize::MAX; num_agents];
        for (c, class) in classes.iter().enumerate() {
            for &agent in class {
                if agent < num_agents {
                    color_of[agent] = c;
                }
            }
        }
        Self { classes, color_of }
    }

    pub fn num_colors(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn color_of(&self, agent: usize) -> usize {
        self.color_of[agent]
    }

    pub fn colors(&self) -> &[usize] {
        &self.color_of
    }
}

/// First-fit coloring in ascending agent order: each agent takes the smallest
/// color not already used by a lower-indexed neighbor.
pub fn greedy_color(graph: &AgentGraph) -> ProperColoring {
    let n = graph.num_agents();
    let mut color_of = vec![usize::MAX; n];
    let mut used = vec![false; graph.max_degree() + 2];
    for agent in 0..n {
        used.iter_mut().for_each(|u| *u = false);
        for &nb in graph.neighbors(agent) {
            if color_of[nb] != usize::MAX {
                used[color_of[nb]] = true;
            }
        }
        color_of[agent] = used.iter().position(|&u| !u).expect("degree + 1 colors suffice");
    }
    ProperColoring::from_colors(color_of)
}

/// Outcome of checking a coloring against a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColoringReport {
    /// Edges whose endpoints share a color (0-based agents).
    pub conflicting_edges: Vec<(usize, usize)>,
    /// Agents that appear in no class.
    pub uncovered: Vec<usize>,
    /// Agents listed more than once across classes, or out of range.
    pub duplicated: Vec<usize>,
}

impl ColoringReport {
    pub fn passed(&self) -> bool {
        self.conflicting_edges.is_empty() && self.uncovered.is_empty() && self.duplicated.is_empty()
    }
}

impl fmt::Display for ColoringReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "coloring valid");
        }
        write!(f, "coloring invalid:")?;
        for &(i, j) in &self.conflicting_edges {
            write!(f, " edge {{{}, {}}} monochromatic;", i + 1, j + 1)?;
        }
        for &a in &self.uncovered {
            write!(f, " agent {} uncolored;", a + 1)?;
        }
        for &a in &self.duplicated {
            write!(f, " agent {} listed twice or out of range;", a + 1)?;
        }
        Ok(())
    }
}

pub fn validate_coloring(graph: &AgentGraph, coloring: &ProperColoring) -> ColoringReport {
    let n = graph.num_agents();
    let mut report = ColoringReport::default();
    let mut hits = vec![0usize; n];
    for class in coloring.classes() {
        for &agent in class {
            if agent >= n {
                report.duplicated.push(agent);
            } else {
                hits[agent] += 1;
            }
        }
    }
    for (agent, &h) in hits.iter().enumerate() {
        match h {
            0 => report.uncovered.push(agent),
            1 => {}
            _ => report.duplicated.push(agent),
        }
    }
    let colors = coloring.colors();
    for &(i, j) in graph.edges() {
        let ci = colors.get(i).copied().unwrap_or(usize::MAX);
        let cj = colors.get(j).copied().unwrap_or(usize::MAX);
        if ci == cj {
            report.conflicting_edges.push((i, j));
        }
    }
    report
}

/// On-disk graph layout, 1-based: `{"P": int, "edges": [[i,j],...], "colors": [int,...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(rename = "P")]
    pub num_agents: usize,
    pub edges: Vec<[usize; 2]>,
    pub colors: Vec<usize>,
}

impl GraphFile {
    pub fn new(graph: &AgentGraph, coloring: &ProperColoring) -> Self {
        Self {
            num_agents: graph.num_agents(),
            edges: graph.edges().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            colors: coloring.colors().iter().map(|&c| c + 1).collect(),
        }
    }

    pub fn into_parts(self) -> Result<(AgentGraph, ProperColoring)> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for [i, j] in self.edges {
            if i == 0 || j == 0 {
                return Err(Error::InvalidArgument("graph file agents are 1-based".into()));
            }
            edges.push((i - 1, j - 1));
        }
        let graph = AgentGraph::new(self.num_agents, edges)?;
        if self.colors.len() != self.num_agents || self.colors.contains(&0) {
            return Err(Error::InvalidArgument(
                "graph file needs one 1-based color per agent".into(),
            ));
        }
        let coloring = ProperColoring::from_colors(self.colors.iter().map(|c| c - 1).collect());
        let report = validate_coloring(&graph, &coloring);
        if !report.passed() {
            return Err(Error::InvalidArgument(report.to_string()));
        }
        Ok((graph, coloring))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}
