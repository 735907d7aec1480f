//! Exact top-k cosine neighbor search and the textual edge set it induces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusGraph;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Which nodes a small-cluster query may link to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateScope {
    /// Every corpus node.
    #[default]
    Global,
    /// Only the small-cluster nodes themselves.
    Restricted,
}

impl CandidateScope {
    /// Candidate node indices for a corpus of `n` nodes and the given query set.
    pub fn candidates(self, n: usize, queries: &[usize]) -> Vec<usize> {
        match self {
            Self::Global => (0..n).collect(),
            Self::Restricted => queries.to_vec(),
        }
    }
}

impl FromStr for CandidateScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" | "all" => Ok(Self::Global),
            "restricted" | "small" => Ok(Self::Restricted),
            other => Err(Error::Config(format!("unknown candidate scope {other:?}"))),
        }
    }
}

impl fmt::Display for CandidateScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Global => "global",
            Self::Restricted => "restricted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborList {
    pub query: usize,
    /// `(node, cosine)` sorted by cosine descending, ties by ascending node.
    pub neighbors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnOutput {
    pub lists: Vec<NeighborList>,
    /// Queries that received fewer than `k` neighbors because the candidate set was too small.
    pub short_queries: usize,
}

/// Heap entry ordered so that the *worse* neighbor compares greater.
#[derive(Debug, Clone, Copy)]
struct Entry {
    score: f64,
    node: usize,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

fn top_k(query: usize, candidates: &[usize], m: &EmbeddingMatrix, k: usize) -> NeighborList {
    // max-heap on "worseness": the root is the current worst kept neighbor
    let mut heap: BinaryHeap<Entry> = BinaryHeap::with_capacity(k + 1);
    let q = m.row(query);
    for &c in candidates {
        if c == query {
            continue;
        }
        let entry = Entry {
            score: crate::embedding::dot(q, m.row(c)),
            node: c,
        };
        if heap.len() < k {
            heap.push(entry);
        } else if let Some(worst) = heap.peek() {
            if entry < *worst {
                heap.pop();
                heap.push(entry);
            }
        }
    }
    let neighbors = heap
        .into_sorted_vec()
        .into_iter()
        .map(|e| (e.node, e.score))
        .collect();
    NeighborList { query, neighbors }
}

/// For every query, the `k` candidates (never the query itself) with the highest
/// cosine similarity. The matrix must be row-normalized.
///
/// `workers` pins the size of the thread pool; output is identical for any value.
pub fn knn_search(
    queries: &[usize],
    candidates: &[usize],
    m: &EmbeddingMatrix,
    k: usize,
    workers: Option<usize>,
) -> Result<KnnOutput> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if !m.is_normalized() {
        return Err(Error::Config("knn_search requires a row-normalized matrix".into()));
    }
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(&bad) = queries.iter().chain(cands.iter()).find(|&&i| i >= m.n()) {
        return Err(Error::IndexOutOfRange { index: bad, len: m.n() });
    }

    let run = || -> Vec<NeighborList> {
        queries
            .par_iter()
            .map(|&q| top_k(q, &cands, m, k))
            .collect()
    };
    let lists = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let short_queries = lists.iter().filter(|l| l.neighbors.len() < k).count();
    Ok(KnnOutput {
        lists,
        short_queries,
    })
}

/// Undirected textual edges `(u, v, cosine)` with `u < v`, sorted by pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextualEdgeSet {
    pub edges: Vec<(usize, usize, f64)>,
}

impl TextualEdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// TSV `u_id<TAB>v_id<TAB>weight` with six decimals.
    pub fn write_tsv(&self, path: &Path, graph: &CorpusGraph) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for &(u, v, wt) in &self.edges {
            writeln!(w, "{}\t{}\t{:.6}", graph.id_of(u), graph.id_of(v), wt)
                .map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Turns neighbor lists into undirected edges; a pair listed from both ends
/// becomes a single edge.
pub fn neighbor_lists_to_edges(lists: &[NeighborList]) -> TextualEdgeSet {
    let mut edges: Vec<(usize, usize, f64)> = lists
        .iter()
        .flat_map(|l| {
            l.neighbors
                .iter()
                .filter(move |&&(nb, _)| nb != l.query)
                .map(move |&(nb, w)| (l.query.min(nb), l.query.max(nb), w))
        })
        .collect();
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    TextualEdgeSet { edges }
}
