//! Leiden community detection: fast local moving, refinement within
//! communities, and aggregation on the refined partition.
//!
//! Both objectives are handled through one gain expression. Every node
//! carries a weight `a` (weighted degree for RB modularity, node count for
//! CPM) and moving node `v` into community `C` changes the unnormalized
//! objective by
//!
//! ```text
//! w(v, C) − scale · a_v · A_C
//! ```
//!
//! with `scale = γ / 2m` for RB modularity and `scale = γ` for CPM.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{quality, Edge, Partition, QualityConfig, QualityFunction};
use crate::error::{Error, Result};

/// Randomness of the refinement merge choice, in units of the unnormalized gain.
const THETA: f64 = 0.01;
const EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LeidenOutcome {
    pub partition: Partition,
    pub quality: f64,
    /// Objective value after every completed pass, non-decreasing.
    pub pass_qualities: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Network {
    /// Neighbors sorted by index, parallel edges merged, no self-loops.
    adj: Vec<Vec<(usize, f64)>>,
    node_weight: Vec<f64>,
}

impl Network {
    fn n(&self) -> usize {
        self.adj.len()
    }

    fn build(n: usize, edges: &[(usize, usize, f64)], node_weight: Vec<f64>) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            if u != v {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(nb, _)| nb);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(list.len());
            for &(nb, w) in list.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == nb => last.1 += w,
                    _ => merged.push((nb, w)),
                }
            }
            *list = merged;
        }
        Self { adj, node_weight }
    }

    /// Collapses each `groups` label into one node.
    fn aggregate(&self, groups: &[usize], count: usize) -> Self {
        let mut node_weight = vec![0.0; count];
        let mut edges = Vec::new();
        for v in 0..self.n() {
            node_weight[groups[v]] += self.node_weight[v];
            for &(u, w) in &self.adj[v] {
                if v < u && groups[v] != groups[u] {
                    edges.push((groups[v], groups[u], w));
                }
            }
        }
        Self::build(count, &edges, node_weight)
    }
}

/// Relabels to 0..count in order of first appearance.
fn densify(labels: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; labels.len().max(labels.iter().copied().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    next
}

/// Scratch space for accumulating edge weight from one node to each community.
struct NeighborWeights {
    weight: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl NeighborWeights {
    fn new(n: usize) -> Self {
        Self {
            weight: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn collect(&mut self, adj: &[(usize, f64)], label: &[usize]) {
        for &(u, w) in adj {
            let c = label[u];
            if !self.seen[c] {
                self.seen[c] = true;
                self.touched.push(c);
            }
            self.weight[c] += w;
        }
    }

    fn clear(&mut self) {
        for &c in &self.touched {
            self.weight[c] = 0.0;
            self.seen[c] = false;
        }
        self.touched.clear();
    }
}

/// Queue-based local moving. Returns whether any node changed community.
fn fast_local_move(net: &Network, part: &mut [usize], scale: f64, rng: &mut ChaCha8Rng) -> bool {
    let n = net.n();
    let mut comm_weight = vec![0.0; n];
    let mut comm_count = vec![0usize; n];
    for v in 0..n {
        comm_weight[part[v]] += net.node_weight[v];
        comm_count[part[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..n).rev().filter(|&c| comm_count[c] == 0).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];
    let mut scratch = NeighborWeights::new(n);
    let mut changed = false;

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let own = part[v];
        let a_v = net.node_weight[v];
        scratch.collect(&net.adj[v], part);

        comm_weight[own] -= a_v;
        comm_count[own] -= 1;
        if comm_count[own] == 0 {
            empty.push(own);
        }

        // among equally good options (the current community included) pick uniformly,
        // so that plateaus between local optima can be crossed
        let own_gain = scratch.weight[own] - scale * a_v * comm_weight[own];
        let mut best = own;
        let mut best_gain = own_gain;
        let mut ties = 1u32;
        for &c in &scratch.touched {
            if c == own {
                continue;
            }
            let gain = scratch.weight[c] - scale * a_v * comm_weight[c];
            if gain > best_gain + EPS {
                best = c;
                best_gain = gain;
                ties = 1;
            } else if gain >= best_gain - EPS {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best = c;
                }
            }
        }
        if let Some(&fresh) = empty.last() {
            if 0.0 > best_gain + EPS {
                best = fresh;
                best_gain = 0.0;
            }
        }

        if comm_count[best] == 0 {
            let popped = empty.pop();
            debug_assert_eq!(popped, Some(best));
        }
        comm_weight[best] += a_v;
        comm_count[best] += 1;
        part[v] = best;

        if best != own {
            changed = true;
        }
        // only strict improvements re-queue neighbors, which keeps the queue finite
        if best_gain > own_gain + EPS {
            for &(u, _) in &net.adj[v] {
                if !queued[u] && part[u] != best {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
        scratch.clear();
    }
    changed
}

/// Refines each community of `part` by merging singletons into well-connected
/// sub-communities. Returns refined labels (subsets of `part`'s communities).
fn refine(net: &Network, part: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = net.n();
    let mut comm_total = vec![0.0; n];
    for v in 0..n {
        comm_total[part[v]] += net.node_weight[v];
    }
    // weight from each node to the rest of its own community
    let external: Vec<f64> = (0..n)
        .map(|v| {
            net.adj[v]
                .iter()
                .filter(|&&(u, _)| part[u] == part[v])
                .map(|&(_, w)| w)
                .sum()
        })
        .collect();

    let mut refined: Vec<usize> = (0..n).collect();
    let mut r_weight = net.node_weight.clone();
    let mut r_external = external.clone();
    let mut singleton = vec![true; n];
    let mut scratch = NeighborWeights::new(n);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut candidates: Vec<(usize, f64)> = Vec::new();

    for v in order {
        if !singleton[v] {
            continue;
        }
        let c = part[v];
        let a_v = net.node_weight[v];
        let total = comm_total[c];
        if external[v] < scale * a_v * (total - a_v) - EPS {
            continue;
        }
        let own = refined[v];
        let same_comm: Vec<(usize, f64)> = net.adj[v].iter().copied().filter(|&(u, _)| part[u] == c).collect();
        scratch.collect(&same_comm, &refined);

        r_weight[own] -= a_v;
        r_external[own] -= external[v];

        candidates.clear();
        candidates.push((own, 0.0));
        for &t in &scratch.touched {
            if t == own {
                continue;
            }
            let well_connected = r_external[t] >= scale * r_weight[t] * (total - r_weight[t]) - EPS;
            if !well_connected {
                continue;
            }
            let gain = scratch.weight[t] - scale * a_v * r_weight[t];
            if gain >= -EPS {
                candidates.push((t, gain.max(0.0)));
            }
        }

        let target = if candidates.len() == 1 {
            own
        } else {
            let top = candidates.iter().map(|&(_, g)| g).fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = candidates.iter().map(|&(_, g)| ((g - top) / THETA).exp()).collect();
            let sum: f64 = probs.iter().sum();
            let mut pick = rng.random::<f64>() * sum;
            let mut chosen = candidates[candidates.len() - 1].0;
            for (i, p) in probs.iter().enumerate() {
                if pick < *p {
                    chosen = candidates[i].0;
                    break;
                }
                pick -= p;
            }
            chosen
        };

        let w_to_target = scratch.weight.get(target).copied().unwrap_or(0.0);
        r_weight[target] += a_v;
        r_external[target] += external[v] - 2.0 * w_to_target;
        refined[v] = target;
        if target != own {
            singleton[target] = false;
            singleton[v] = false;
        }
        scratch.clear();
    }
    refined
}

/// One full Leiden iteration starting from `initial` on the base network.
fn iterate(base: &Network, initial: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut net = base.clone();
    let mut part = initial.to_vec();
    densify(&mut part);
    // base node -> node of the current aggregate network
    let mut node_of: Vec<usize> = (0..base.n()).collect();

    loop {
        fast_local_move(&net, &mut part, scale, rng);
        let communities = densify(&mut part);
        if communities == net.n() {
            break;
        }
        let mut refined = refine(&net, &part, scale, rng);
        let count = densify(&mut refined);
        if count == net.n() {
            // refinement merged nothing, aggregation would not shrink the network
            break;
        }
        let aggregate = net.aggregate(&refined, count);
        let mut agg_part = vec![0; count];
        for v in 0..net.n() {
            agg_part[refined[v]] = part[v];
        }
        for slot in node_of.iter_mut() {
            *slot = refined[*slot];
        }
        net = aggregate;
        part = agg_part;
    }
    node_of.iter().map(|&x| part[x]).collect()
}

/// Splits every community into its connected components.
fn split_disconnected(base: &Network, labels: &[usize]) -> Vec<usize> {
    let n = base.n();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if out[s] != usize::MAX {
            continue;
        }
        out[s] = next;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for &(u, _) in &base.adj[v] {
                if out[u] == usize::MAX && labels[u] == labels[s] {
                    out[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    out
}

fn validate(edges: &[Edge], n: usize, cfg: &QualityConfig) -> Result<()> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Config("leiden needs at least one node".into()));
    }
    for &(u, v, w) in edges {
        if u >= n || v >= n {
            return Err(Error::IndexOutOfRange { index: u.max(v), len: n });
        }
        if cfg.use_weights && !(w > 0.0 && w.is_finite()) {
            return Err(Error::NonPositiveWeight { u, v, weight: w });
        }
    }
    Ok(())
}

/// Leiden partition of an undirected graph on `n` nodes.
pub fn leiden(edges: &[Edge], n: usize, cfg: &QualityConfig) -> Result<Partition> {
    leiden_with_trace(edges, n, cfg).map(|o| o.partition)
}

/// Like [`leiden`], also reporting the objective after every pass.
///
/// A pass is a full Leiden iteration started from the previous pass's
/// partition; a run stops when a pass changes nothing or after
/// `cfg.max_passes` passes. `cfg.restarts` runs with distinct random
/// streams execute in parallel and the highest-quality one is returned,
/// the lowest-numbered run winning ties. The trace is that run's.
pub fn leiden_with_trace(edges: &[Edge], n: usize, cfg: &QualityConfig) -> Result<LeidenOutcome> {
    validate(edges, n, cfg)?;
    let weighted: Vec<Edge> = edges.iter().map(|&(u, v, w)| (u, v, cfg.weight(w))).collect();
    let total: f64 = weighted.iter().filter(|e| e.0 != e.1).map(|e| e.2).sum();

    let (node_weight, scale) = match cfg.function {
        QualityFunction::RbModularity => {
            let mut degree = vec![0.0; n];
            for &(u, v, w) in &weighted {
                if u != v {
                    degree[u] += w;
                    degree[v] += w;
                }
            }
            let scale = if total > 0.0 { cfg.resolution / (2.0 * total) } else { 0.0 };
            (degree, scale)
        }
        QualityFunction::Cpm => (vec![1.0; n], cfg.resolution),
    };
    let base = Network::build(n, &weighted, node_weight);

    let runs: Vec<(Partition, Vec<f64>, f64)> = (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(run);
            let (partition, mut trace) = single_run(&base, edges, n, cfg, scale, total, &mut rng);
            let q = quality(edges, n, &partition, cfg);
            if trace.is_empty() {
                trace.push(q);
            }
            (partition, trace, q)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.2 > runs[best].2 + EPS {
            best = i;
        }
    }
    let (partition, pass_qualities, quality) = runs.into_iter().nth(best).expect("at least one restart");
    Ok(LeidenOutcome {
        partition,
        quality,
        pass_qualities,
    })
}

fn single_run(
    base: &Network,
    edges: &[Edge],
    n: usize,
    cfg: &QualityConfig,
    scale: f64,
    total: f64,
    rng: &mut ChaCha8Rng,
) -> (Partition, Vec<f64>) {
    let mut labels: Vec<usize> = (0..n).collect();
    let mut current = Partition::singletons(n);
    let mut pass_qualities = Vec::new();
    if total > 0.0 {
        for _ in 0..cfg.max_passes {
            let next = split_disconnected(base, &iterate(base, &labels, scale, rng));
            let next_partition = Partition::from_labels(&next);
            let stable = next_partition == current;
            pass_qualities.push(quality(edges, n, &next_partition, cfg));
            current = next_partition;
            labels = next;
            if stable {
                break;
            }
        }
    }
    (current, pass_qualities)
}

#[cfg(test)]
mod tests {
    use super::super::{clusters_connected, QualityFunction};
    use super::*;

    fn two_triangles() -> Vec<Edge> {
        vec![
            (0, 1, 1.0),
            (1, 2, 1.0),
            (0, 2, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
            (3, 5, 1.0),
            (2, 3, 1.0),
        ]
    }

    fn cpm(gamma: f64) -> QualityConfig {
        QualityConfig {
            function: QualityFunction::Cpm,
            resolution: gamma,
            ..Default::default()
        }
    }

    #[test]
    fn two_triangles_cpm() {
        let triangles = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(leiden(&two_triangles(), 6, &cpm(0.5)).unwrap(), triangles);
        // γ = 1 is a plateau: the triangles, pairs and singletons all score 0
        let at_one = leiden(&two_triangles(), 6, &cpm(1.0)).unwrap();
        assert_eq!(quality(&two_triangles(), 6, &at_one, &cpm(1.0)), 0.0);
        assert!(clusters_connected(&two_triangles(), &at_one));
    }

    #[test]
    fn edgeless_graph_is_singletons() {
        let p = leiden(&[], 4, &QualityConfig::default()).unwrap();
        assert_eq!(p.num_clusters(), 4);
        let p = leiden(&[], 4, &cpm(0.5)).unwrap();
        assert_eq!(p.num_clusters(), 4);
    }

    #[test]
    fn isolated_nodes_stay_alone() {
        let mut e = two_triangles();
        e.push((0, 1, 1.0));
        let rb = QualityConfig {
            resolution: 1.0,
            ..Default::default()
        };
        let p = leiden(&e, 8, &rb).unwrap();
        assert_eq!(p.sizes()[p.cluster_of(6)], 1);
        assert_eq!(p.sizes()[p.cluster_of(7)], 1);
    }

    #[test]
    fn rejects_non_positive_weights() {
        let mut c = cpm(1.0);
        c.use_weights = true;
        let err = leiden(&[(0, 1, 0.0)], 2, &c).unwrap_err();
        assert!(matches!(err, Error::NonPositiveWeight { .. }));
        // unweighted runs ignore the stored weight
        c.use_weights = false;
        assert!(leiden(&[(0, 1, 0.0)], 2, &c).is_ok());
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cpm(0.0);
        assert!(leiden(&[], 2, &c).is_err());
        c.resolution = 1.0;
        c.max_passes = 0;
        assert!(leiden(&[], 2, &c).is_err());
        assert!(leiden(&[(0, 5, 1.0)], 2, &cpm(1.0)).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let e: Vec<Edge> = (0..40).flat_map(|i| [(i, (i + 1) % 40, 1.0), (i, (i * 7 + 3) % 40, 1.0)]).filter(|e| e.0 != e.1).collect();
        let c = QualityConfig {
            resolution: 1.0,
            seed: 42,
            ..Default::default()
        };
        assert_eq!(leiden(&e, 40, &c).unwrap(), leiden(&e, 40, &c).unwrap());
    }

    #[test]
    fn ring_of_cliques_recovered() {
        let mut e = Vec::new();
        for c in 0..6 {
            for i in 0..5 {
                for j in i + 1..5 {
                    e.push((c * 5 + i, c * 5 + j, 1.0));
                }
            }
            e.push((c * 5, ((c + 1) % 6) * 5 + 1, 1.0));
        }
        let out = leiden_with_trace(&e, 30, &QualityConfig { resolution: 1.0, ..Default::default() }).unwrap();
        assert_eq!(out.partition.num_clusters(), 6);
        assert!(clusters_connected(&e, &out.partition));
        assert!(out.pass_qualities.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}
