//! Graph partitioning: Leiden, a K-means baseline on embeddings and an
//! exhaustive optimum for tiny graphs.

mod brute;
mod kmeans;
mod leiden;

pub use brute::{brute_force_best_partition, BRUTE_FORCE_MAX_NODES};
pub use kmeans::{kmeans, KMeansConfig, KMeansOutcome};
pub use leiden::{leiden, leiden_with_trace, LeidenOutcome};

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusGraph;
use crate::error::{Error, Result};

/// Undirected weighted edge `(u, v, weight)`.
pub type Edge = (usize, usize, f64);

/// Node → cluster assignment with canonical cluster ids: clusters are
/// numbered by descending size, ties by smallest member index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary cluster labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        // (size, first member) per distinct label, in first-appearance order
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut stats: Vec<(usize, usize)> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let s = *slot.entry(l).or_insert_with(|| {
                stats.push((0, i));
                stats.len() - 1
            });
            stats[s].0 += 1;
        }
        let mut order: Vec<usize> = (0..stats.len()).collect();
        order.sort_by(|&a, &b| stats[b].0.cmp(&stats[a].0).then(stats[a].1.cmp(&stats[b].1)));
        let mut canon = vec![0; stats.len()];
        for (new_id, &s) in order.iter().enumerate() {
            canon[s] = new_id;
        }
        let assignment: Vec<usize> = labels.iter().map(|l| canon[slot[l]]).collect();
        let sizes = order.iter().map(|&s| stats[s].0).collect();
        Self { assignment, sizes }
    }

    pub fn singletons(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn all_in_one(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    /// Cluster sizes, non-increasing.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Members of every cluster in ascending node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// CSV with header `pub_id,cluster`, one row per node in index order.
    pub fn write_csv(&self, path: &Path, graph: &CorpusGraph) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "pub_id,cluster").map_err(io)?;
        for (i, &c) in self.assignment.iter().enumerate() {
            writeln!(w, "{},{}", csv_field(graph.id_of(i)), c).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a partition CSV; every graph node must appear exactly once.
    pub fn read_csv(path: &Path, graph: &CorpusGraph) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut labels = vec![usize::MAX; graph.n()];
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 {
                if line.trim() != "pub_id,cluster" {
                    return Err(parse_err(1, "expected header pub_id,cluster".into()));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (id, cluster) = line
                .rsplit_once(',')
                .ok_or_else(|| parse_err(i + 1, "expected two columns".into()))?;
            let id = unquote(id);
            let cluster: usize = cluster
                .trim()
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad cluster id {cluster:?}")))?;
            let node = graph
                .index_of(&id)
                .ok_or_else(|| parse_err(i + 1, format!("unknown pub_id {id:?}")))?;
            if labels[node] != usize::MAX {
                return Err(parse_err(i + 1, format!("pub_id {id:?} listed twice")));
            }
            labels[node] = cluster;
        }
        if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Config(format!(
                "partition {} has no row for {}",
                path.display(),
                graph.id_of(missing)
            )));
        }
        Ok(Self::from_labels(&labels))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn unquote(s: &str) -> String {
    match s.strip_prefix('"').and_then(|t| t.strip_suffix('"')) {
        Some(inner) => inner.replace("\"\"", "\""),
        None => s.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QualityFunction {
    /// Modularity with a resolution parameter on the null-model term.
    #[serde(rename = "rb")]
    RbModularity,
    /// Constant Potts model.
    #[serde(rename = "cpm")]
    Cpm,
}

impl FromStr for QualityFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rb" | "modularity" | "rb_modularity" => Ok(Self::RbModularity),
            "cpm" => Ok(Self::Cpm),
            other => Err(Error::Config(format!("unknown quality function {other:?}"))),
        }
    }
}

impl fmt::Display for QualityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RbModularity => "rb",
            Self::Cpm => "cpm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub function: QualityFunction,
    pub resolution: f64,
    pub use_weights: bool,
    pub seed: u64,
    pub max_passes: usize,
    /// Independent runs; the best partition by quality is kept.
    pub restarts: usize,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            function: QualityFunction::RbModularity,
            resolution: 0.05,
            use_weights: false,
            seed: 0,
            max_passes: 10,
            restarts: 8,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!("resolution must be positive, got {}", self.resolution)));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn weight(&self, w: f64) -> f64 {
        if self.use_weights {
            w
        } else {
            1.0
        }
    }
}

/// Value of the configured objective for `partition`.
///
/// RB modularity: `Q = 1/(2m) Σ_ij [A_ij − γ k_i k_j / (2m)] δ(c_i, c_j)`,
/// which is 0 on a graph without edges.
/// CPM: `H = Σ_c [W_c − γ n_c (n_c − 1) / 2]`.
///
/// Self-loops are ignored; parallel edges add up.
pub fn quality(edges: &[Edge], n: usize, partition: &Partition, cfg: &QualityConfig) -> f64 {
    assert_eq!(partition.n(), n, "partition size differs from node count");
    let c = partition.num_clusters();
    let mut internal = vec![0.0; c];
    let mut degree_sum = vec![0.0; c];
    let mut total = 0.0;
    for &(u, v, w) in edges {
        if u == v {
            continue;
        }
        let w = cfg.weight(w);
        total += w;
        let (cu, cv) = (partition.cluster_of(u), partition.cluster_of(v));
        degree_sum[cu] += w;
        degree_sum[cv] += w;
        if cu == cv {
            internal[cu] += w;
        }
    }
    let gamma = cfg.resolution;
    match cfg.function {
        QualityFunction::RbModularity => {
            if total == 0.0 {
                return 0.0;
            }
            let two_m = 2.0 * total;
            (0..c)
                .map(|i| 2.0 * internal[i] / two_m - gamma * (degree_sum[i] / two_m).powi(2))
                .sum()
        }
        QualityFunction::Cpm => (0..c)
            .map(|i| {
                let size = partition.sizes()[i] as f64;
                internal[i] - gamma * size * (size - 1.0) / 2.0
            })
            .sum(),
    }
}

/// Whether every cluster induces a connected subgraph.
pub fn clusters_connected(edges: &[Edge], partition: &Partition) -> bool {
    let mut dsu = crate::corpus::DisjointSet::new(partition.n());
    for &(u, v, _) in edges {
        if partition.cluster_of(u) == partition.cluster_of(v) {
            dsu.union(u, v);
        }
    }
    partition.members().iter().all(|m| {
        let root = dsu.find(m[0]);
        m.iter().all(|&x| dsu.find(x) == root)
    })
}
