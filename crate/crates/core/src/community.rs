//! Leiden community detection with modularity as the quality function.
//!
//! One pass runs the three Leiden phases until the aggregate graph stops
//! shrinking: fast local moving, refinement inside each community (random
//! merges restricted to well-connected sub-communities), and aggregation of the
//! refined partition. Passes repeat from the previous result until modularity
//! improves by less than [`CONVERGENCE_TOLERANCE`] or `max_passes` is reached.
//! The converged partition is then polished by iterated local search: a few
//! nodes are moved into neighboring communities, passes rerun from there, and
//! the result is kept only when it improves modularity.
//! A final split into connected components makes every returned community an
//! internally connected subgraph.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum whole-pass modularity gain required to run another pass.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-7;

/// Randomness of the refinement merge choice (θ in the Leiden formulation).
const REFINEMENT_THETA: f64 = 0.01;

/// Perturb-and-rerun rounds applied after the first chain converges.
const PERTURBATION_ROUNDS: usize = 64;

/// Moves must beat staying by more than this, which keeps passes from cycling on
/// floating-point noise.
const MOVE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommunityError {
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) has invalid weight {2}")]
    InvalidWeight(usize, usize, f64),
    #[error("assignment covers {actual} nodes, graph has {expected}")]
    AssignmentLength { expected: usize, actual: usize },
}

/// Undirected weighted graph over nodes `0..n`.
///
/// Self-loop weight is tracked separately and only ever non-zero on aggregate
/// graphs, where it holds the (ordered-pair) internal weight of a super-node.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degrees: Vec<f64>,
    total_weight: f64,
}

impl WeightedGraph {
    /// Builds a loop-free graph; parallel edges are merged by summing weights.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, CommunityError> {
        let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(CommunityError::NodeOutOfRange(u, v, n));
            }
            if u == v {
                return Err(CommunityError::SelfLoop(u));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(CommunityError::InvalidWeight(u, v, w));
            }
            *rows[u].entry(v).or_default() += w;
            *rows[v].entry(u).or_default() += w;
        }
        let adj = rows.into_iter().map(|r| r.into_iter().collect()).collect();
        Ok(Self::from_parts(adj, vec![0.0; n]))
    }

    fn from_parts(adj: Vec<Vec<(usize, f64)>>, self_loops: Vec<f64>) -> Self {
        let degrees: Vec<f64> = adj
            .iter()
            .zip(&self_loops)
            .map(|(row, s)| row.iter().map(|(_, w)| w).sum::<f64>() + s)
            .collect();
        let total_weight = degrees.iter().sum();
        Self {
            adj,
            self_loops,
            degrees,
            total_weight,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> f64 {
        self.degrees[node]
    }

    /// Twice the total edge weight (2m).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeidenConfig {
    pub resolution: f64,
    pub max_passes: usize,
    pub rng_seed: u64,
    pub min_community_size: usize,
}

impl Default for LeidenConfig {
    fn default() -> Self {
        Self {
            resolution: 1.0,
            max_passes: 10,
            rng_seed: 0,
            min_community_size: 1,
        }
    }
}

/// Dense community assignment (`0..community_count`) and its modularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

/// A Leiden run with the modularity observed after every local-moving phase,
/// one sequence per chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LeidenRun {
    pub partition: Partition,
    pub move_traces: Vec<Vec<f64>>,
    pub passes: usize,
}

/// Q = (1/2m) Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j). Zero on an edgeless graph.
pub fn modularity(
    graph: &WeightedGraph,
    assignment: &[usize],
    resolution: f64,
) -> Result<f64, CommunityError> {
    if assignment.len() != graph.node_count() {
        return Err(CommunityError::AssignmentLength {
            expected: graph.node_count(),
            actual: assignment.len(),
        });
    }
    Ok(modularity_unchecked(graph, assignment, resolution))
}

fn modularity_unchecked(graph: &WeightedGraph, assignment: &[usize], resolution: f64) -> f64 {
    let two_m = graph.total_weight();
    if two_m == 0.0 {
        return 0.0;
    }
    let n_comms = assignment.iter().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; n_comms];
    let mut totals = vec![0.0; n_comms];
    for (i, &c) in assignment.iter().enumerate() {
        totals[c] += graph.degree(i);
        internal[c] += graph.self_loops[i];
        for &(j, w) in graph.neighbors(i) {
            if assignment[j] == c {
                internal[c] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&totals)
        .map(|(inn, tot)| inn / two_m - resolution * (tot / two_m).powi(2))
        .sum()
}

pub fn leiden(graph: &WeightedGraph, config: &LeidenConfig) -> Partition {
    leiden_traced(graph, config).partition
}

pub fn leiden_traced(graph: &WeightedGraph, config: &LeidenConfig) -> LeidenRun {
    let n = graph.node_count();
    if n == 0 {
        return LeidenRun {
            partition: Partition {
                assignment: Vec::new(),
                modularity: 0.0,
            },
            move_traces: Vec::new(),
            passes: 0,
        };
    }
    let gamma = config.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut traces = Vec::new();
    let mut passes = 0;

    let (mut best, mut best_quality) = run_chain(
        graph,
        (0..n).collect(),
        config,
        &mut rng,
        &mut traces,
        &mut passes,
    );
    if graph.edge_count() > 0 {
        for _ in 0..PERTURBATION_ROUNDS {
            let start = perturb(graph, &best, &mut rng);
            let (candidate, quality) =
                run_chain(graph, start, config, &mut rng, &mut traces, &mut passes);
            if quality > best_quality + MOVE_EPSILON {
                best = candidate;
                best_quality = quality;
            }
        }
    }

    if config.min_community_size > 1 {
        best = merge_small(graph, &best, config.min_community_size);
        best_quality = modularity_unchecked(graph, &best, gamma);
    }
    LeidenRun {
        partition: Partition {
            assignment: best,
            modularity: best_quality,
        },
        move_traces: traces,
        passes,
    }
}

/// Runs Leiden passes from `start` until a pass gains less than the tolerance
/// or `max_passes` is spent.
fn run_chain(
    graph: &WeightedGraph,
    start: Vec<usize>,
    config: &LeidenConfig,
    rng: &mut ChaCha8Rng,
    traces: &mut Vec<Vec<f64>>,
    passes: &mut usize,
) -> (Vec<usize>, f64) {
    let gamma = config.resolution;
    let mut assignment = relabel(&start);
    let mut quality = modularity_unchecked(graph, &assignment, gamma);
    let mut trace = Vec::new();
    for _ in 0..config.max_passes.max(1) {
        *passes += 1;
        let next = leiden_pass(graph, &assignment, gamma, rng, &mut trace);
        let next = split_disconnected(graph, &next);
        let next_quality = modularity_unchecked(graph, &next, gamma);
        let gain = next_quality - quality;
        if gain >= -MOVE_EPSILON {
            assignment = next;
            quality = next_quality;
        }
        if gain < CONVERGENCE_TOLERANCE {
            break;
        }
    }
    traces.push(trace);
    (assignment, quality)
}

/// Moves one to three random nodes, each into the community of a random
/// neighbor or, one time in four, into a fresh community.
fn perturb(graph: &WeightedGraph, assignment: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = assignment.to_vec();
    let mut fresh = graph.node_count();
    let movable: Vec<usize> = (0..graph.node_count())
        .filter(|&v| !graph.neighbors(v).is_empty())
        .collect();
    for _ in 0..rng.gen_range(1..=3) {
        let v = movable[rng.gen_range(0..movable.len())];
        if rng.gen_bool(0.25) {
            out[v] = fresh;
            fresh += 1;
        } else {
            let (u, _) = graph.neighbors(v)[rng.gen_range(0..graph.neighbors(v).len())];
            out[v] = out[u];
        }
    }
    out
}

fn leiden_pass(
    base: &WeightedGraph,
    start: &[usize],
    gamma: f64,
    rng: &mut ChaCha8Rng,
    trace: &mut Vec<f64>,
) -> Vec<usize> {
    let mut graph = base.clone();
    let mut part = relabel(start);
    // base node -> node of the current aggregate level
    let mut level_of: Vec<usize> = (0..base.node_count()).collect();
    loop {
        move_nodes(&graph, &mut part, gamma, rng);
        let flat: Vec<usize> = level_of.iter().map(|&x| part[x]).collect();
        trace.push(modularity_unchecked(base, &flat, gamma));

        let communities = count_labels(&part);
        if communities == graph.node_count() {
            break;
        }
        let refined = refine(&graph, &part, gamma, rng);
        let (aggregate, agg_of) = aggregate(&graph, &refined);
        if aggregate.node_count() == graph.node_count() {
            // refinement merged nothing; aggregation cannot make progress
            break;
        }
        let mut next_part = vec![0; aggregate.node_count()];
        for (v, &a) in agg_of.iter().enumerate() {
            next_part[a] = part[v];
        }
        level_of.iter_mut().for_each(|x| *x = agg_of[*x]);
        graph = aggregate;
        part = relabel(&next_part);
    }
    relabel(&level_of.iter().map(|&x| part[x]).collect::<Vec<_>>())
}

/// Queue-based local moving. Every accepted move strictly increases modularity.
fn move_nodes(graph: &WeightedGraph, part: &mut [usize], gamma: f64, rng: &mut ChaCha8Rng) {
    let n = graph.node_count();
    let two_m = graph.total_weight();
    if two_m == 0.0 {
        return;
    }
    let mut comm_total = vec![0.0; n];
    let mut comm_size = vec![0usize; n];
    for v in 0..n {
        comm_total[part[v]] += graph.degree(v);
        comm_size[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).filter(|&c| comm_size[c] == 0).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];

    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let own = part[v];
        let kv = graph.degree(v);

        for &(u, w) in graph.neighbors(v) {
            let c = part[u];
            if link[c] == 0.0 {
                touched.push(c);
            }
            link[c] += w;
        }

        comm_total[own] -= kv;
        comm_size[own] -= 1;
        let gain = |c: usize, w: f64| w - gamma * kv * comm_total[c] / two_m;
        let stay = gain(own, link[own]);
        let mut best = own;
        let mut best_gain = stay;
        touched.sort_unstable();
        for &c in &touched {
            if c == own {
                continue;
            }
            let g = gain(c, link[c]);
            if g > best_gain + MOVE_EPSILON {
                best = c;
                best_gain = g;
            }
        }
        // an empty community scores 0
        if comm_size[own] > 0 && best_gain < -MOVE_EPSILON && 0.0 > stay + MOVE_EPSILON {
            if let Some(&c) = empty.last() {
                best = c;
            }
        }

        if best != own && empty.last() == Some(&best) {
            empty.pop();
        }
        comm_total[best] += kv;
        comm_size[best] += 1;
        if best != own {
            part[v] = best;
            if comm_size[own] == 0 {
                empty.push(own);
            }
            for &(u, _) in graph.neighbors(v) {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }

        for &c in &touched {
            link[c] = 0.0;
        }
        touched.clear();
    }
}

/// Refines each community of `part` into well-connected sub-communities.
fn refine(graph: &WeightedGraph, part: &[usize], gamma: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = graph.node_count();
    let two_m = graph.total_weight();
    let mut refined: Vec<usize> = (0..n).collect();
    let mut ref_total: Vec<f64> = (0..n).map(|v| graph.degree(v)).collect();
    let mut ref_size = vec![1usize; n];

    let mut comm_total = vec![0.0; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        comm_total[part[v]] += graph.degree(v);
        members[part[v]].push(v);
    }
    // weight from each node to the rest of its own community
    let inside: Vec<f64> = (0..n)
        .map(|v| {
            graph
                .neighbors(v)
                .iter()
                .filter(|(u, _)| part[*u] == part[v])
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    // weight from each refined community to the rest of its community
    let mut external = inside.clone();

    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    for nodes in members.iter_mut().filter(|m| m.len() > 1) {
        nodes.shuffle(rng);
        let total_c = comm_total[part[nodes[0]]];
        for &v in nodes.iter() {
            if ref_size[refined[v]] != 1 {
                continue;
            }
            let kv = graph.degree(v);
            if inside[v] < gamma * kv * (total_c - kv) / two_m {
                continue;
            }
            for &(u, w) in graph.neighbors(v) {
                if part[u] != part[v] {
                    continue;
                }
                let t = refined[u];
                if link[t] == 0.0 {
                    touched.push(t);
                }
                link[t] += w;
            }
            let own = refined[v];
            ref_total[own] -= kv;
            touched.sort_unstable();

            let mut candidates: Vec<(usize, f64)> = vec![(own, 0.0)];
            for &t in &touched {
                if t == own {
                    continue;
                }
                let well_connected =
                    external[t] >= gamma * ref_total[t] * (total_c - ref_total[t]) / two_m;
                if !well_connected {
                    continue;
                }
                let delta = 2.0 * (link[t] - gamma * kv * ref_total[t] / two_m) / two_m;
                if delta >= 0.0 {
                    candidates.push((t, delta));
                }
            }
            let chosen = sample_by_quality(&candidates, rng);

            ref_total[chosen] += kv;
            if chosen != own {
                refined[v] = chosen;
                ref_size[own] = 0;
                ref_size[chosen] += 1;
                external[chosen] += inside[v] - 2.0 * link[chosen];
            }
            for &t in &touched {
                link[t] = 0.0;
            }
            touched.clear();
        }
    }
    refined
}

/// Draws a candidate with probability proportional to exp(Δ/θ).
fn sample_by_quality(candidates: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let max = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = candidates
        .iter()
        .map(|c| ((c.1 - max) / REFINEMENT_THETA).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    for (c, w) in candidates.iter().zip(&weights) {
        if draw < *w {
            return c.0;
        }
        draw -= w;
    }
    candidates
        .last()
        .expect("own community is always a candidate")
        .0
}

/// Collapses each label of `groups` into one node. Returns the aggregate graph
/// and the aggregate node of every input node.
fn aggregate(graph: &WeightedGraph, groups: &[usize]) -> (WeightedGraph, Vec<usize>) {
    let agg_of = relabel(groups);
    let count = count_labels(&agg_of);
    let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
    let mut self_loops = vec![0.0; count];
    for v in 0..graph.node_count() {
        let a = agg_of[v];
        self_loops[a] += graph.self_loops[v];
        for &(u, w) in graph.neighbors(v) {
            let b = agg_of[u];
            if a == b {
                self_loops[a] += w;
            } else {
                *rows[a].entry(b).or_default() += w;
            }
        }
    }
    let adj = rows.into_iter().map(|r| r.into_iter().collect()).collect();
    (WeightedGraph::from_parts(adj, self_loops), agg_of)
}

/// Splits every community into its connected components. Never lowers modularity.
fn split_disconnected(graph: &WeightedGraph, assignment: &[usize]) -> Vec<usize> {
    let n = graph.node_count();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if out[start] != usize::MAX {
            continue;
        }
        let c = assignment[start];
        out[start] = next;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(u, _) in graph.neighbors(v) {
                if out[u] == usize::MAX && assignment[u] == c {
                    out[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    out
}

/// Folds communities smaller than `min_size` into their most strongly linked neighbor.
fn merge_small(graph: &WeightedGraph, assignment: &[usize], min_size: usize) -> Vec<usize> {
    let mut part = assignment.to_vec();
    loop {
        let k = count_labels(&part);
        let mut sizes = vec![0usize; k];
        part.iter().for_each(|&c| sizes[c] += 1);
        let mut merged = false;
        for small in (0..k).filter(|&c| sizes[c] > 0 && sizes[c] < min_size) {
            let mut links = vec![0.0; k];
            for v in (0..part.len()).filter(|&v| part[v] == small) {
                for &(u, w) in graph.neighbors(v) {
                    if part[u] != small {
                        links[part[u]] += w;
                    }
                }
            }
            let target = (0..k)
                .filter(|&c| links[c] > 0.0)
                .max_by(|&a, &b| links[a].total_cmp(&links[b]).then(b.cmp(&a)));
            if let Some(target) = target {
                part.iter_mut()
                    .filter(|c| **c == small)
                    .for_each(|c| *c = target);
                merged = true;
                break;
            }
        }
        part = relabel(&part);
        if !merged {
            return part;
        }
    }
}

/// Renumbers labels densely in order of first appearance.
fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn count_labels(labels: &[usize]) -> usize {
    let mut seen = std::collections::HashSet::new();
    labels.iter().filter(|l| seen.insert(**l)).count()
}

/// True when every community induces a connected subgraph.
pub fn communities_connected(graph: &WeightedGraph, assignment: &[usize]) -> bool {
    split_disconnected(graph, assignment).iter().max() == relabel(assignment).iter().max()
}
