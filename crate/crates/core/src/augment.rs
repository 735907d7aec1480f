//! Semantic augmentation: kNN repair edges for small clusters, cosine
//! weights on citation edges, and the α-blend that merges both.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{Edge, Partition};
use crate::corpus::CorpusGraph;
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::knn::TextualEdgeSet;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_SIZE_THRESHOLD: usize = 1000;

/// Members of every cluster with at most `size_threshold` nodes, ascending.
pub fn select_small_cluster_nodes(p: &Partition, size_threshold: usize) -> Result<Vec<usize>> {
    let largest = p.sizes().first().copied().unwrap_or(0);
    if size_threshold >= largest {
        return Err(Error::ThresholdSelectsAll {
            threshold: size_threshold,
            largest,
        });
    }
    Ok((0..p.n())
        .filter(|&i| p.sizes()[p.cluster_of(i)] <= size_threshold)
        .collect())
}

/// A citation pair with its clamped cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CitingEdge {
    pub u: usize,
    pub v: usize,
    pub w_textual: f64,
}

/// Weights every undirected citation edge by `max(0, cosine)` of its endpoints.
pub fn weight_citation_edges(graph: &CorpusGraph, m: &EmbeddingMatrix) -> Result<Vec<CitingEdge>> {
    if m.n() != graph.n() {
        return Err(Error::Config(format!(
            "embedding rows ({}) not bound to graph nodes ({})",
            m.n(),
            graph.n()
        )));
    }
    Ok(graph
        .undirected_edges()
        .par_iter()
        .map(|&(u, v)| CitingEdge {
            u,
            v,
            w_textual: m.cosine_unchecked(u, v).max(0.0),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    /// Clamped cosine; `None` for citation-only pairs that carry no textual signal.
    pub w_textual: Option<f64>,
    /// 1 when the pair is cited in either direction.
    pub w_citing: f64,
    pub w_blend: f64,
    /// Whether the pair came out of the kNN repair step.
    pub from_knn: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub e_citing: usize,
    pub e_textual: usize,
    pub e_overlap: usize,
    pub e_total: usize,
}

impl Bookkeeping {
    /// `e_total == e_citing + e_textual − e_overlap`
    pub fn identity_holds(&self) -> bool {
        self.e_citing + self.e_textual == self.e_total + self.e_overlap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedGraph {
    pub n: usize,
    pub alpha: f64,
    /// Sorted by `(u, v)`.
    pub edges: Vec<WeightedEdge>,
    pub bookkeeping: Bookkeeping,
}

pub fn blend_weight(alpha: f64, w_textual: Option<f64>, w_citing: f64) -> f64 {
    alpha * w_textual.unwrap_or(0.0) + (1.0 - alpha) * w_citing
}

/// Union of citation and textual pairs with `w = α·w_textual + (1 − α)·w_citing`.
///
/// On overlapping pairs both components are kept; the textual component there
/// is the cosine, which is identical from either source.
pub fn blend(n: usize, textual: &TextualEdgeSet, citing: &[CitingEdge], alpha: f64) -> Result<AugmentedGraph> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let mut edges: Vec<WeightedEdge> = Vec::with_capacity(citing.len() + textual.len());
    let mut c = citing.to_vec();
    c.sort_by_key(|e| (e.u, e.v));
    let t = &textual.edges;
    let (mut i, mut j) = (0, 0);
    let mut overlap = 0;
    while i < c.len() || j < t.len() {
        let ck = c.get(i).map(|e| (e.u, e.v));
        let tk = t.get(j).map(|e| (e.0, e.1));
        let edge = match (ck, tk) {
            (Some(a), Some(b)) if a == b => {
                overlap += 1;
                i += 1;
                j += 1;
                (a, Some(t[j - 1].2.max(0.0)), 1.0, true)
            }
            (Some(a), b) if b.is_none() || a < b.unwrap() => {
                i += 1;
                (a, Some(c[i - 1].w_textual), 1.0, false)
            }
            (_, Some(b)) => {
                j += 1;
                (b, Some(t[j - 1].2.max(0.0)), 0.0, true)
            }
            _ => unreachable!(),
        };
        let ((u, v), w_textual, w_citing, from_knn) = edge;
        if u >= n || v >= n || u >= v {
            return Err(Error::Config(format!("edge ({u}, {v}) invalid for {n} nodes")));
        }
        edges.push(WeightedEdge {
            u,
            v,
            w_textual,
            w_citing,
            w_blend: blend_weight(alpha, w_textual, w_citing),
            from_knn,
        });
    }
    let bookkeeping = Bookkeeping {
        e_citing: c.len(),
        e_textual: t.len(),
        e_overlap: overlap,
        e_total: edges.len(),
    };
    Ok(AugmentedGraph {
        n,
        alpha,
        edges,
        bookkeeping,
    })
}

/// Citation-only augmented graph (no textual edges), where `w_textual` is left absent.
pub fn citing_only(graph: &CorpusGraph, alpha: f64) -> Result<AugmentedGraph> {
    let mut g = blend(
        graph.n(),
        &TextualEdgeSet::default(),
        &graph
            .undirected_edges()
            .iter()
            .map(|&(u, v)| CitingEdge { u, v, w_textual: 0.0 })
            .collect::<Vec<_>>(),
        alpha,
    )?;
    for e in &mut g.edges {
        e.w_textual = None;
        e.w_blend = blend_weight(alpha, None, e.w_citing);
    }
    Ok(g)
}

impl AugmentedGraph {
    /// Every pair once with weight 1.
    pub fn unweighted_view(&self) -> Vec<Edge> {
        self.edges.iter().map(|e| (e.u, e.v, 1.0)).collect()
    }

    /// Unit weights, but pairs present in both origins get weight 2.
    pub fn unweighted_view_with_multiplicity(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|e| {
                let both = e.w_citing > 0.0 && e.from_knn;
                (e.u, e.v, if both { 2.0 } else { 1.0 })
            })
            .collect()
    }

    /// Blended weights, dropping pairs whose weight is exactly zero.
    pub fn weighted_view(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .filter(|e| e.w_blend > 0.0)
            .map(|e| (e.u, e.v, e.w_blend))
            .collect()
    }

    /// TSV `u_id, v_id, w_textual (or "-"), w_citing, w_blend`.
    pub fn write_tsv(&self, path: &Path, graph: &CorpusGraph) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for e in &self.edges {
            let textual = e.w_textual.map_or_else(|| "-".to_string(), |t| format!("{t:.6}"));
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{:.6}",
                graph.id_of(e.u),
                graph.id_of(e.v),
                textual,
                e.w_citing,
                e.w_blend
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
