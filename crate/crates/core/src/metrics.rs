//! Evaluation of partitions against subject labels and graph structure.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::{Edge, Partition};
use crate::corpus::{CorpusGraph, PublicationRecord, YearWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHomogeneity {
    pub cluster: usize,
    pub size: usize,
    pub labeled_size: usize,
    pub dominant_label: Option<String>,
    pub dominant_count: usize,
    /// `None` when the cluster has no labeled member.
    pub homogeneity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub clusters: Vec<ClusterHomogeneity>,
    /// Members without labels, excluded from every denominator.
    pub unlabeled: usize,
}

/// Share of labeled members that carry the cluster's dominant label.
///
/// `records[i]` describes node `i`. A record with several labels counts
/// toward each of them; equal counts go to the lexicographically smallest label.
pub fn homogeneity(p: &Partition, records: &[PublicationRecord]) -> HomogeneityReport {
    assert_eq!(p.n(), records.len(), "records must align with partition nodes");
    let mut counts: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); p.num_clusters()];
    let mut labeled = vec![0usize; p.num_clusters()];
    let mut unlabeled = 0;
    for (i, r) in records.iter().enumerate() {
        let c = p.cluster_of(i);
        if r.labels.is_empty() {
            unlabeled += 1;
            continue;
        }
        labeled[c] += 1;
        let mut seen: Vec<&str> = r.labels.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for l in seen {
            *counts[c].entry(l).or_insert(0) += 1;
        }
    }
    let clusters = counts
        .iter()
        .enumerate()
        .map(|(c, labels)| {
            // BTreeMap iterates in label order, so the first maximum wins ties
            let dominant = labels.iter().fold(None::<(&str, usize)>, |best, (&l, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((l, n)),
            });
            ClusterHomogeneity {
                cluster: c,
                size: p.sizes()[c],
                labeled_size: labeled[c],
                dominant_label: dominant.map(|d| d.0.to_string()),
                dominant_count: dominant.map_or(0, |d| d.1),
                homogeneity: dominant.map(|d| d.1 as f64 / labeled[c] as f64),
            }
        })
        .collect();
    HomogeneityReport { clusters, unlabeled }
}

/// Cluster sizes, largest first.
pub fn cluster_size_distribution(p: &Partition) -> Vec<usize> {
    p.sizes().to_vec()
}

/// Symmetric cluster × cluster edge counts; the diagonal holds intra-cluster edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl LinkMatrix {
    /// Each edge counted once: the upper triangle including the diagonal.
    pub fn total(&self) -> usize {
        let c = self.counts.len();
        (0..c).map(|i| (i..c).map(|j| self.counts[i][j]).sum::<usize>()).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let header: Vec<String> = (0..self.counts.len()).map(|c| c.to_string()).collect();
        writeln!(w, "cluster,{}", header.join(",")).map_err(io)?;
        for (c, row) in self.counts.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{c},{}", cells.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

pub fn link_distribution(p: &Partition, edges: &[Edge]) -> LinkMatrix {
    let c = p.num_clusters();
    let mut counts = vec![vec![0usize; c]; c];
    for &(u, v, _) in edges {
        let (a, b) = (p.cluster_of(u), p.cluster_of(v));
        counts[a][b] += 1;
        if a != b {
            counts[b][a] += 1;
        }
    }
    LinkMatrix { counts }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub cluster: usize,
    pub first: usize,
    pub second: usize,
    pub both: usize,
    /// Members carrying neither label.
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub labels: (String, String),
    pub rows: Vec<ConfusionRow>,
}

/// Per-cluster counts of records carrying only the first label, only the
/// second, both, or neither.
pub fn confusion(p: &Partition, records: &[PublicationRecord], label_pair: (&str, &str)) -> ConfusionTable {
    assert_eq!(p.n(), records.len(), "records must align with partition nodes");
    let mut rows: Vec<ConfusionRow> = (0..p.num_clusters())
        .map(|cluster| ConfusionRow {
            cluster,
            ..Default::default()
        })
        .collect();
    for (i, r) in records.iter().enumerate() {
        let row = &mut rows[p.cluster_of(i)];
        match (r.has_label(label_pair.0), r.has_label(label_pair.1)) {
            (true, true) => row.both += 1,
            (true, false) => row.first += 1,
            (false, true) => row.second += 1,
            (false, false) => row.other += 1,
        }
    }
    ConfusionTable {
        labels: (label_pair.0.to_string(), label_pair.1.to_string()),
        rows,
    }
}

/// Publications known to the bibliographic database, with their year when known.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageIndex {
    years: HashMap<String, Option<i32>>,
}

impl CoverageIndex {
    pub fn insert(&mut self, pub_id: impl Into<String>, year: Option<i32>) {
        let slot = self.years.entry(pub_id.into()).or_insert(None);
        if year.is_some() {
            *slot = year;
        }
    }

    pub fn contains(&self, pub_id: &str) -> bool {
        self.years.contains_key(pub_id)
    }

    pub fn year(&self, pub_id: &str) -> Option<i32> {
        self.years.get(pub_id).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Allowlist file: one `pub_id` per line, optionally followed by `<TAB>year`.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut index = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, year) = match line.split_once('\t') {
                Some((id, y)) => {
                    let year = y.trim().parse().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("bad year {y:?}"),
                    })?;
                    (id, Some(year))
                }
                None => (line.as_str(), None),
            };
            index.insert(id, year);
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionFunnel {
    pub total_refs: usize,
    pub in_coverage: usize,
    pub in_window: usize,
    pub in_graph: usize,
    /// Stage counts relative to `total_refs`, percent, one decimal.
    pub pct_in_coverage: f64,
    pub pct_in_window: f64,
    pub pct_in_graph: f64,
    /// `in_graph / total_refs` in percent with two decimals.
    pub overall_retention: f64,
    /// False when there were no references and percentages are reported as 0.
    pub percentages_defined: bool,
}

pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale + 0.5).floor() / scale
}

impl RetentionFunnel {
    pub fn from_counts(total_refs: usize, in_coverage: usize, in_window: usize, in_graph: usize) -> Self {
        let defined = total_refs > 0;
        let pct = |x: usize, d: i32| {
            if defined {
                round_half_up(100.0 * x as f64 / total_refs as f64, d)
            } else {
                0.0
            }
        };
        Self {
            total_refs,
            in_coverage,
            in_window,
            in_graph,
            pct_in_coverage: pct(in_coverage, 1),
            pct_in_window: pct(in_window, 1),
            pct_in_graph: pct(in_graph, 1),
            overall_retention: pct(in_graph, 2),
            percentages_defined: defined,
        }
    }
}

/// Follows every reference of `records` through coverage, the year window
/// (year of the referenced publication) and finally the extracted graph.
pub fn retention_funnel(
    records: &[&PublicationRecord],
    coverage: &CoverageIndex,
    window: YearWindow,
    graph: &CorpusGraph,
) -> RetentionFunnel {
    let (mut total, mut covered, mut in_window, mut in_graph) = (0, 0, 0, 0);
    for r in records {
        let citing = graph.index_of(&r.pub_id);
        for target in &r.refs {
            total += 1;
            if !coverage.contains(target) {
                continue;
            }
            covered += 1;
            if !coverage.year(target).is_some_and(|y| window.contains(y)) {
                continue;
            }
            in_window += 1;
            let present = match (citing, graph.index_of(target)) {
                (Some(u), Some(v)) => graph.has_directed_edge(u, v),
                _ => false,
            };
            if present {
                in_graph += 1;
            }
        }
    }
    RetentionFunnel::from_counts(total, covered, in_window, in_graph)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `(low, high, count)`; the last bin is closed on the right.
    pub bins: Vec<(f64, f64, usize)>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.2).sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "bin_low,bin_high,count").map_err(io)?;
        for &(lo, hi, c) in &self.bins {
            writeln!(w, "{lo:.2},{hi:.2},{c}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Fixed-width histogram over `[0, 1]`.
pub fn weight_histogram(weights: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::Config(format!("bin width {bin_width} outside (0, 1]")));
    }
    let nbins = (1.0 / bin_width - 1e-9).ceil() as usize;
    let low = |i: usize| i as f64 * bin_width;
    let mut bins: Vec<(f64, f64, usize)> = (0..nbins).map(|i| (low(i), low(i + 1).min(1.0), 0)).collect();
    for &w in weights {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::WeightOutOfRange(w));
        }
        // nudge values sitting on a decimal bin edge into the bin that edge opens
        let i = ((w / bin_width + 1e-9).floor() as usize).min(nbins - 1);
        bins[i].2 += 1;
    }
    Ok(Histogram { bin_width, bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, labels: &[&str]) -> PublicationRecord {
        PublicationRecord {
            pub_id: id.into(),
            title: "t".into(),
            abstract_text: "a".into(),
            year: Some(2010),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            refs: vec![],
        }
    }

    #[test]
    fn homogeneity_three_quarters() {
        let recs = vec![rec("a", &["M"]), rec("b", &["M"]), rec("c", &["M"]), rec("d", &["O"])];
        let r = homogeneity(&Partition::all_in_one(4), &recs);
        assert_eq!(r.clusters[0].dominant_label.as_deref(), Some("M"));
        assert_eq!(r.clusters[0].homogeneity, Some(0.75));
    }

    #[test]
    fn homogeneity_single_label_is_one() {
        let recs = vec![rec("a", &["M"]), rec("b", &["M"])];
        assert_eq!(homogeneity(&Partition::all_in_one(2), &recs).clusters[0].homogeneity, Some(1.0));
    }

    #[test]
    fn homogeneity_multi_label_counts_everywhere() {
        let recs = vec![rec("a", &["M"]), rec("b", &["M", "O"]), rec("c", &["O"]), rec("d", &["O"])];
        let r = homogeneity(&Partition::all_in_one(4), &recs);
        assert_eq!(r.clusters[0].dominant_label.as_deref(), Some("O"));
        assert_eq!(r.clusters[0].dominant_count, 3);
        assert_eq!(r.clusters[0].homogeneity, Some(0.75));
    }

    #[test]
    fn homogeneity_ties_and_unlabeled() {
        let recs = vec![rec("a", &["O"]), rec("b", &["M"]), rec("c", &[]), rec("d", &[])];
        let p = Partition::from_labels(&[0, 0, 0, 1]);
        let r = homogeneity(&p, &recs);
        assert_eq!(r.clusters[0].dominant_label.as_deref(), Some("M"));
        assert_eq!(r.clusters[0].homogeneity, Some(0.5));
        assert_eq!(r.clusters[1].homogeneity, None);
        assert_eq!(r.unlabeled, 2);
    }

    #[test]
    fn sizes_sorted() {
        assert_eq!(cluster_size_distribution(&Partition::from_labels(&[3, 3, 1])), vec![2, 1]);
        assert_eq!(cluster_size_distribution(&Partition::all_in_one(5)), vec![5]);
    }

    #[test]
    fn link_matrix_triangle() {
        let e = vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)];
        assert_eq!(link_distribution(&Partition::all_in_one(3), &e).counts, vec![vec![3]]);
    }

    #[test]
    fn link_matrix_cross_edge() {
        let m = link_distribution(&Partition::from_labels(&[0, 1]), &[(0, 1, 1.0)]);
        assert_eq!(m.counts, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn link_matrix_crafted() {
        // c0 = {0..4} (5 nodes), c1 = {5,6,7}
        let mut e = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (0, 4, 1.0)];
        e.extend([(5, 6, 1.0), (6, 7, 1.0)]);
        e.extend([(0, 5, 1.0), (2, 6, 1.0), (4, 7, 1.0)]);
        let p = Partition::from_labels(&[0, 0, 0, 0, 0, 1, 1, 1]);
        let m = link_distribution(&p, &e);
        assert_eq!(m.counts, vec![vec![5, 3], vec![3, 2]]);
        assert_eq!(m.total(), 10);
    }

    #[test]
    fn confusion_rows() {
        let recs = vec![rec("a", &["M"]), rec("b", &["M", "O"]), rec("c", &["O"]), rec("d", &["X"])];
        let p = Partition::from_labels(&[0, 0, 0, 1]);
        let t = confusion(&p, &recs, ("M", "O"));
        assert_eq!((t.rows[0].first, t.rows[0].second, t.rows[0].both, t.rows[0].other), (1, 1, 1, 0));
        assert_eq!((t.rows[1].first, t.rows[1].second, t.rows[1].both, t.rows[1].other), (0, 0, 0, 1));
    }

    #[test]
    fn funnel_percentages() {
        let f = RetentionFunnel::from_counts(15_559, 10_502, 2_704, 2_665);
        assert_eq!(f.pct_in_coverage, 67.5);
        assert_eq!(f.pct_in_window, 17.4);
        assert_eq!(f.pct_in_graph, 17.1);
        assert_eq!(f.overall_retention, 17.13);
    }

    #[test]
    fn funnel_empty_and_single() {
        let f = RetentionFunnel::from_counts(0, 0, 0, 0);
        assert!(!f.percentages_defined);
        assert_eq!(f.pct_in_graph, 0.0);

        let g = CorpusGraph::new(vec!["a".into(), "b".into()], vec![(0, 1)]).unwrap();
        let mut a = rec("a", &["M"]);
        a.refs = vec!["b".into()];
        let mut cov = CoverageIndex::default();
        cov.insert("b", Some(2010));
        let f = retention_funnel(&[&a], &cov, YearWindow::default(), &g);
        assert_eq!((f.total_refs, f.in_coverage, f.in_window, f.in_graph), (1, 1, 1, 1));
        assert_eq!(f.overall_retention, 100.0);
    }

    #[test]
    fn funnel_stages() {
        let g = CorpusGraph::new(vec!["a".into(), "b".into(), "c".into()], vec![(0, 1)]).unwrap();
        let mut a = rec("a", &["M"]);
        // b: kept; c: in window but no edge; old: outside window; ext: outside coverage
        a.refs = vec!["b".into(), "c".into(), "old".into(), "ext".into()];
        let mut cov = CoverageIndex::default();
        cov.insert("b", Some(2001));
        cov.insert("c", Some(2002));
        cov.insert("old", Some(1995));
        let f = retention_funnel(&[&a], &cov, YearWindow::default(), &g);
        assert_eq!((f.total_refs, f.in_coverage, f.in_window, f.in_graph), (4, 3, 2, 1));
    }

    #[test]
    fn histogram_binning() {
        let h = weight_histogram(&[0.8, 0.81, 0.3], 0.05).unwrap();
        assert_eq!(h.bins.len(), 20);
        assert_eq!(h.bins[16].2, 2);
        assert_eq!(h.bins[6].2, 1);
        assert_eq!(h.total(), 3);
        // edges land in the bin they open; 1.0 lands in the closed last bin
        let edges = weight_histogram(&[0.85, 0.15, 1.0, 0.0], 0.05).unwrap();
        assert_eq!(edges.bins[17].2, 1);
        assert_eq!(edges.bins[3].2, 1);
        assert_eq!(edges.bins[19].2, 1);
        assert_eq!(edges.bins[0].2, 1);
    }

    #[test]
    fn histogram_empty_and_errors() {
        assert_eq!(weight_histogram(&[], 0.05).unwrap().total(), 0);
        assert!(matches!(weight_histogram(&[1.2], 0.05), Err(Error::WeightOutOfRange(_))));
        assert!(weight_histogram(&[-0.1], 0.05).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn link_matrix_conserves_edges(labels in proptest::collection::vec(0usize..4, 2..20), raw in proptest::collection::vec((0usize..100, 0usize..100), 0..40)) {
                let n = labels.len();
                let p = Partition::from_labels(&labels);
                let e: Vec<Edge> = raw.iter().map(|&(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).map(|(a, b)| (a, b, 1.0)).collect();
                let m = link_distribution(&p, &e);
                prop_assert_eq!(m.total(), e.len());
                for i in 0..m.counts.len() {
                    for j in 0..m.counts.len() {
                        prop_assert_eq!(m.counts[i][j], m.counts[j][i]);
                    }
                }
            }

            #[test]
            fn histogram_total(ws in proptest::collection::vec(0.0f64..=1.0, 0..200)) {
                prop_assert_eq!(weight_histogram(&ws, 0.05).unwrap().total(), ws.len());
            }

            #[test]
            fn confusion_sums(labels in proptest::collection::vec(0usize..3, 1..30), tags in proptest::collection::vec(0u8..4, 30)) {
                let recs: Vec<PublicationRecord> = labels.iter().enumerate().map(|(i, _)| match tags[i] {
                    0 => rec("x", &["M"]), 1 => rec("x", &["O"]), 2 => rec("x", &["M", "O"]), _ => rec("x", &[]),
                }).collect();
                let p = Partition::from_labels(&labels);
                let t = confusion(&p, &recs, ("M", "O"));
                let sum = |f: fn(&ConfusionRow) -> usize| t.rows.iter().map(f).sum::<usize>();
                prop_assert_eq!(sum(|r| r.first) + sum(|r| r.both), recs.iter().filter(|r| r.has_label("M")).count());
                prop_assert_eq!(sum(|r| r.second) + sum(|r| r.both), recs.iter().filter(|r| r.has_label("O")).count());
                for (c, row) in t.rows.iter().enumerate() {
                    prop_assert_eq!(row.first + row.second + row.both + row.other, p.sizes()[c]);
                }
                let h = homogeneity(&p, &recs);
                for c in &h.clusters {
                    prop_assert!(c.dominant_count <= c.labeled_size && c.labeled_size <= c.size);
                    if let Some(x) = c.homogeneity { prop_assert!((0.0..=1.0).contains(&x)); }
                }
            }

            #[test]
            fn funnel_monotone(t in 0usize..1000, a in 0usize..1000, b in 0usize..1000, c in 0usize..1000) {
                let mut v = [t, a, b, c];
                v.sort_unstable_by(|x, y| y.cmp(x));
                let f = RetentionFunnel::from_counts(v[0], v[1], v[2], v[3]);
                prop_assert!(f.pct_in_coverage >= f.pct_in_window && f.pct_in_window >= f.pct_in_graph);
            }
        }
    }
}
