//! Time-varying digraphs and the mixing matrices built on them.
//!
//! Self-loops are implicit: every agent is always in its own in- and
//! out-neighborhood, so an edge set never stores `(i, i)`.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors raised while building or validating graphs and weights.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a network needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("edge ({from}, {to}) has an endpoint outside [0, {num_agents})")]
    EndpointOutOfRange {
        from: usize,
        to: usize,
        num_agents: usize,
    },
    #[error("connectivity window must be positive and no longer than the sequence")]
    EmptyWindow,
    #[error("metropolis weights need a symmetric snapshot; edge ({0}, {1}) has no reverse")]
    Asymmetric(usize, usize),
    #[error("custom sequence is empty")]
    EmptyCustom,
    #[error("custom snapshot has {found} agents, sequence expects {expected}")]
    AgentCountMismatch { expected: usize, found: usize },
    #[error("graph file: {0}")]
    Parse(String),
}

/// One slot's communication topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigraphSnapshot {
    num_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DigraphSnapshot {
    /// Builds a snapshot from directed links `(from, to)`. Self-loops in the
    /// input are accepted and dropped since they are always implied.
    pub fn new(
        num_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if num_agents == 0 {
            return Err(GraphError::TooFewAgents(0));
        }
        let mut set = BTreeSet::new();
        for (from, to) in edges {
            if from >= num_agents || to >= num_agents {
                return Err(GraphError::EndpointOutOfRange {
                    from,
                    to,
                    num_agents,
                });
            }
            if from != to {
                set.insert((from, to));
            }
        }
        Ok(Self {
            num_agents,
            edges: set,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    /// Directed links without the implicit self-loops.
    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    /// Agents that send to `i`, including `i` itself, in increasing order.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .edges
            .iter()
            .filter(|&&(_, to)| to == i)
            .map(|&(from, _)| from)
            .collect();
        v.push(i);
        v.sort_unstable();
        v
    }

    /// Agents that `i` sends to, including `i` itself, in increasing order.
    pub fn out_neighbors(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .edges
            .range((i, 0)..(i + 1, 0))
            .map(|&(_, to)| to)
            .collect();
        v.push(i);
        v.sort_unstable();
        v
    }

    /// Out-degree counting the self-loop, so always at least 1.
    pub fn out_degree(&self, i: usize) -> usize {
        self.edges.range((i, 0)..(i + 1, 0)).count() + 1
    }

    /// Number of point-to-point transmissions in this slot (self-loops excluded).
    pub fn message_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(a, b)| self.edges.contains(&(b, a)))
    }

    /// Union with the reversed edges.
    pub fn symmetrized(&self) -> Self {
        let mut edges = self.edges.clone();
        for &(a, b) in &self.edges {
            edges.insert((b, a));
        }
        Self {
            num_agents: self.num_agents,
            edges,
        }
    }

    /// Strong connectivity of this snapshot alone.
    pub fn strongly_connected(&self) -> bool {
        strongly_connected(self.num_agents, &self.edges)
    }
}

/// Which family of digraphs a [`GraphSequence`] produces.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphModel {
    /// Directed ring `i -> i+1 mod I` plus one fresh uniformly random
    /// out-neighbor per agent and slot.
    RingPlusRandom,
    /// Fixed strongly connected digraph. `None` uses the slot-0
    /// `RingPlusRandom` draw for the sequence seed.
    StaticStronglyConnected(Option<Vec<(usize, usize)>>),
    /// Fixed undirected graph, each pair listed once. `None` uses the
    /// symmetrized slot-0 `RingPlusRandom` draw.
    StaticUndirected(Option<Vec<(usize, usize)>>),
    /// Explicit snapshots, repeated cyclically past the end.
    Custom(Vec<DigraphSnapshot>),
}

/// A deterministic, seeded digraph sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSequence {
    pub model: GraphModel,
    pub seed: u64,
    pub num_agents: usize,
    /// Claimed connectivity window B.
    pub window: usize,
}

impl GraphSequence {
    pub fn new(model: GraphModel, seed: u64, num_agents: usize, window: usize) -> Self {
        Self {
            model,
            seed,
            num_agents,
            window,
        }
    }

    /// True when every snapshot is undirected, so doubly stochastic
    /// Metropolis weights can be built.
    pub fn is_undirected(&self) -> bool {
        match &self.model {
            GraphModel::StaticUndirected(_) => true,
            GraphModel::Custom(list) => list.iter().all(DigraphSnapshot::is_symmetric),
            _ => false,
        }
    }

    pub fn snapshot(&self, n: usize) -> Result<DigraphSnapshot, GraphError> {
        generate_snapshot(self, n)
    }
}

/// Returns the snapshot of `seq` at slot `n`.
pub fn generate_snapshot(seq: &GraphSequence, n: usize) -> Result<DigraphSnapshot, GraphError> {
    let num = seq.num_agents;
    if num < 2 {
        return Err(GraphError::TooFewAgents(num));
    }
    match &seq.model {
        GraphModel::RingPlusRandom => Ok(ring_plus_random(num, seq.seed, n as u64)),
        GraphModel::StaticStronglyConnected(edges) => match edges {
            Some(e) => DigraphSnapshot::new(num, e.iter().copied()),
            None => Ok(ring_plus_random(num, seq.seed, 0)),
        },
        GraphModel::StaticUndirected(edges) => match edges {
            Some(e) => Ok(DigraphSnapshot::new(num, e.iter().copied())?.symmetrized()),
            None => Ok(ring_plus_random(num, seq.seed, 0).symmetrized()),
        },
        GraphModel::Custom(list) => {
            if list.is_empty() {
                return Err(GraphError::EmptyCustom);
            }
            let snap = &list[n % list.len()];
            if snap.num_agents != num {
                return Err(GraphError::AgentCountMismatch {
                    expected: num,
                    found: snap.num_agents,
                });
            }
            Ok(snap.clone())
        }
    }
}

/// Each agent's extra target comes from a ChaCha stream selected by the slot
/// index and positioned by the agent index, so draws are independent of
/// evaluation order.
fn ring_plus_random(num: usize, seed: u64, slot: u64) -> DigraphSnapshot {
    let mut edges = BTreeSet::new();
    for i in 0..num {
        let next = (i + 1) % num;
        edges.insert((i, next));
        if num > 2 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(slot);
            rng.set_word_pos(64 * i as u128);
            // uniform over the num - 2 agents that are neither i nor next
            let k = rng.random_range(0..num - 2);
            let target = (next + 1 + k) % num;
            edges.insert((i, target));
        }
    }
    DigraphSnapshot { num_agents: num, edges }
}

fn strongly_connected(num: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut fwd = vec![Vec::new(); num];
    let mut bwd = vec![Vec::new(); num];
    for &(a, b) in edges {
        fwd[a].push(b);
        bwd[b].push(a);
    }
    // every node reaches 0 and 0 reaches every node
    reaches_all(&fwd, 0) && reaches_all(&bwd, 0)
}

fn reaches_all(adj: &[Vec<usize>], start: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// True iff the edge union over every window of `window` consecutive
/// snapshots is strongly connected.
pub fn check_b_strong_connectivity(
    snapshots: &[DigraphSnapshot],
    window: usize,
) -> Result<bool, GraphError> {
    if window == 0 || snapshots.len() < window {
        return Err(GraphError::EmptyWindow);
    }
    let num = snapshots[0].num_agents;
    for start in 0..=snapshots.len() - window {
        let mut union = BTreeSet::new();
        for s in &snapshots[start..start + window] {
            if s.num_agents != num {
                return Err(GraphError::AgentCountMismatch {
                    expected: num,
                    found: s.num_agents,
                });
            }
            union.extend(s.edges.iter().copied());
        }
        if !strongly_connected(num, &union) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Stochasticity class of a mixing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    ColumnStochastic,
    DoublyStochastic,
}

/// A mixing matrix `A^n` compliant with one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// `entries[(i, j)]` weighs what agent `i` receives from agent `j`.
    pub entries: DMatrix<f64>,
    pub kind: WeightKind,
    /// Smallest nonzero entry actually realized.
    pub kappa: f64,
}

impl WeightMatrix {
    pub fn num_agents(&self) -> usize {
        self.entries.nrows()
    }
}

fn min_nonzero(m: &DMatrix<f64>) -> f64 {
    m.iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Push-sum weights `a_ij = 1 / d_j` on every link `j -> i` and the diagonal.
pub fn build_push_sum_weights(g: &DigraphSnapshot) -> WeightMatrix {
    let num = g.num_agents;
    let mut a = DMatrix::zeros(num, num);
    for j in 0..num {
        let w = 1.0 / g.out_degree(j) as f64;
        a[(j, j)] = w;
        for &(_, i) in g.edges.range((j, 0)..(j + 1, 0)) {
            a[(i, j)] = w;
        }
    }
    let kappa = min_nonzero(&a);
    WeightMatrix {
        entries: a,
        kind: WeightKind::ColumnStochastic,
        kappa,
    }
}

/// Metropolis-Hastings weights `1 / (1 + max(deg_i, deg_j))` for an
/// undirected snapshot; degrees exclude the self-loop.
pub fn build_metropolis_weights(g: &DigraphSnapshot) -> Result<WeightMatrix, GraphError> {
    if let Some(&(a, b)) = g.edges.iter().find(|&&(a, b)| !g.edges.contains(&(b, a))) {
        return Err(GraphError::Asymmetric(a, b));
    }
    let num = g.num_agents;
    let deg: Vec<usize> = (0..num).map(|i| g.out_degree(i) - 1).collect();
    let mut a = DMatrix::zeros(num, num);
    for &(i, j) in &g.edges {
        a[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
    }
    for i in 0..num {
        let off: f64 = (0..num).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = 1.0 - off;
    }
    let kappa = min_nonzero(&a);
    Ok(WeightMatrix {
        entries: a,
        kind: WeightKind::DoublyStochastic,
        kappa,
    })
}

/// Parses a sequence file: one line per slot, links written `j>i` and
/// separated by whitespace. Blank lines are slots with only self-loops;
/// lines starting with `#` are comments.
pub fn parse_graph_text(text: &str, num_agents: usize) -> Result<Vec<DigraphSnapshot>, GraphError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        let mut edges = Vec::new();
        for tok in line.split_whitespace() {
            let (a, b) = tok.split_once('>').ok_or_else(|| {
                GraphError::Parse(format!("line {}: expected `j>i`, got `{tok}`", lineno + 1))
            })?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    GraphError::Parse(format!("line {}: bad agent index `{s}`", lineno + 1))
                })
            };
            edges.push((parse(a)?, parse(b)?));
        }
        out.push(DigraphSnapshot::new(num_agents, edges)?);
    }
    if out.is_empty() {
        return Err(GraphError::EmptyCustom);
    }
    Ok(out)
}

/// Reads a sequence file from disk; see [`parse_graph_text`].
pub fn load_graph_file(
    path: impl AsRef<Path>,
    num_agents: usize,
) -> Result<Vec<DigraphSnapshot>, GraphError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| GraphError::Parse(format!("{}: {e}", path.as_ref().display())))?;
    parse_graph_text(&text, num_agents)
}
