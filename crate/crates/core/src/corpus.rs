//! Publication metadata ingestion, preprocessing filters and the citation graph.
//!
//! Records come from a JSON Lines metadata file and citation pairs from a
//! two-column TSV. Filtering happens at two levels: per-record rules
//! (missing metadata, short abstracts, year window) and graph rules
//! (largest connected component, degree-one pruning).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One publication as read from the metadata file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    #[serde(rename = "id")]
    pub pub_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// `None` when the source record lacks a publication year.
    pub year: Option<i32>,
    pub labels: Vec<String>,
    #[serde(default)]
    pub refs: Vec<String>,
}

impl PublicationRecord {
    pub fn has_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Text submitted to an embedding model: title, one space, abstract.
    pub fn embedding_text(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }
}

/// Length in Unicode scalar values after collapsing whitespace runs to one space
/// and trimming both ends.
pub fn normalized_char_len(text: &str) -> usize {
    let mut words = 0usize;
    let mut chars = 0usize;
    for word in text.split_whitespace() {
        words += 1;
        chars += word.chars().count();
    }
    chars + words.saturating_sub(1)
}

/// A citation pair that could not be resolved against the record set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmatchedEdge {
    pub line: usize,
    pub citing: String,
    pub cited: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub edge_lines: usize,
    pub duplicate_edges: usize,
    pub unmatched: Vec<UnmatchedEdge>,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub records: Vec<PublicationRecord>,
    /// Unique matched citation pairs `(citing, cited)` in file order.
    pub edges: Vec<(String, String)>,
    pub report: LoadReport,
}

/// Reads the metadata JSONL and the citation TSV.
///
/// Duplicate directed pairs are collapsed and counted; pairs whose endpoints
/// are not in the metadata are dropped and listed in the report.
pub fn load_corpus(metadata_path: &Path, edges_path: &Path) -> Result<LoadedCorpus> {
    let records = read_metadata(metadata_path)?;
    let known: HashSet<&str> = records.iter().map(|r| r.pub_id.as_str()).collect();

    let file = File::open(edges_path).map_err(|e| Error::io(edges_path, e))?;
    let mut report = LoadReport::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(edges_path, e))?;
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (citing, cited) = match (cols.next(), cols.next(), cols.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => (a, b),
            _ => {
                return Err(Error::Parse {
                    path: edges_path.to_path_buf(),
                    line: lineno,
                    message: "expected two tab-separated columns".into(),
                })
            }
        };
        report.edge_lines += 1;
        if !known.contains(citing) || !known.contains(cited) {
            report.unmatched.push(UnmatchedEdge {
                line: lineno,
                citing: citing.to_string(),
                cited: cited.to_string(),
            });
            continue;
        }
        let pair = (citing.to_string(), cited.to_string());
        if seen.contains(&pair) {
            report.duplicate_edges += 1;
        } else {
            seen.insert(pair.clone());
            edges.push(pair);
        }
    }
    Ok(LoadedCorpus {
        records,
        edges,
        report,
    })
}

pub fn read_metadata(path: &Path) -> Result<Vec<PublicationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PublicationRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !ids.insert(record.pub_id.clone()) {
            return Err(Error::DuplicatePubId(record.pub_id));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_metadata(path: &Path, records: &[PublicationRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes directed edges as `citing_id<TAB>cited_id` lines.
pub fn write_edges(path: &Path, graph: &CorpusGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &(u, v) in graph.directed_edges() {
        writeln!(w, "{}\t{}", graph.id_of(u), graph.id_of(v)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Removal counts for every preprocessing rule.
///
/// Record stage: `records_in = missing_metadata + abstract_too_short +
/// outside_year_window + records_out`. Graph stage: `records_out =
/// outside_lcc + degree_one + nodes_out`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub records_in: usize,
    pub missing_metadata: usize,
    pub abstract_too_short: usize,
    pub outside_year_window: usize,
    pub records_out: usize,
    pub outside_lcc: usize,
    pub degree_one: usize,
    pub nodes_out: usize,
    pub edge_lines: usize,
    pub duplicate_edges: usize,
    pub unmatched_edges: usize,
    pub edges_dropped_by_record_filters: usize,
    pub edges_dropped_by_graph_filters: usize,
    pub directed_edges_out: usize,
    /// Surviving records without any subject label; kept in the graph but
    /// excluded from homogeneity denominators.
    pub unlabeled_records: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::Config(format!("empty year window {start}-{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

impl Default for YearWindow {
    fn default() -> Self {
        Self {
            start: 2000,
            end: 2024,
        }
    }
}

impl std::str::FromStr for YearWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("year window must look like 2000-2024, got {s:?}"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        YearWindow::new(start, end)
    }
}

impl std::fmt::Display for YearWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Keeps a record iff id, title and year are present, the normalized abstract
/// has at least `min_abstract_chars` characters, and the year is inside the window.
/// Each removed record is charged to the first rule it fails.
pub fn apply_filters(
    records: &[PublicationRecord],
    min_abstract_chars: usize,
    window: YearWindow,
) -> (Vec<PublicationRecord>, FilterReport) {
    let mut report = FilterReport {
        records_in: records.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for r in records {
        let year = match r.year {
            Some(y) if !r.pub_id.is_empty() && !r.title.trim().is_empty() => y,
            _ => {
                report.missing_metadata += 1;
                continue;
            }
        };
        if normalized_char_len(&r.abstract_text) < min_abstract_chars {
            report.abstract_too_short += 1;
            continue;
        }
        if !window.contains(year) {
            report.outside_year_window += 1;
            continue;
        }
        kept.push(r.clone());
    }
    report.records_out = kept.len();
    report.unlabeled_records = kept.iter().filter(|r| r.labels.is_empty()).count();
    (kept, report)
}

/// Directed citation graph over densely indexed publications.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    directed: Vec<(usize, usize)>,
    undirected: Vec<(usize, usize)>,
}

impl CorpusGraph {
    /// Builds a graph from node ids (index order) and directed index pairs.
    /// Duplicate directed pairs are collapsed.
    pub fn new(ids: Vec<String>, mut directed: Vec<(usize, usize)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::Config(format!("empty pub_id at index {i}")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicatePubId(id.clone()));
            }
        }
        let n = ids.len();
        if let Some(&(u, v)) = directed.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(Error::IndexOutOfRange {
                index: u.max(v),
                len: n,
            });
        }
        directed.sort_unstable();
        directed.dedup();
        let undirected = undirected_projection(&directed);
        Ok(Self {
            ids,
            index,
            directed,
            undirected,
        })
    }

    /// Builds the graph over `records` (in order) from id pairs; pairs touching
    /// an unknown id are dropped and their count returned.
    pub fn from_records(
        records: &[PublicationRecord],
        edges: &[(String, String)],
    ) -> Result<(Self, usize)> {
        let ids: Vec<String> = records.iter().map(|r| r.pub_id.clone()).collect();
        let index: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut dropped = 0;
        let mut directed = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            match (index.get(a.as_str()), index.get(b.as_str())) {
                (Some(&u), Some(&v)) => directed.push((u, v)),
                _ => dropped += 1,
            }
        }
        Ok((Self::new(ids, directed)?, dropped))
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn id_of(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Sorted, deduplicated `(citing, cited)` pairs. Self-citations are kept here.
    pub fn directed_edges(&self) -> &[(usize, usize)] {
        &self.directed
    }

    /// Sorted simple undirected edges `(u, v)` with `u < v`.
    pub fn undirected_edges(&self) -> &[(usize, usize)] {
        &self.undirected
    }

    pub fn has_directed_edge(&self, citing: usize, cited: usize) -> bool {
        self.directed.binary_search(&(citing, cited)).is_ok()
    }

    /// Undirected simple degree of every node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n()];
        for &(u, v) in &self.undirected {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Induced subgraph on the nodes with `keep[i]`, re-indexed densely in
    /// ascending original index order.
    pub fn induced_subgraph(&self, keep: &[bool]) -> CorpusGraph {
        let mut remap = vec![usize::MAX; self.n()];
        let mut ids = Vec::new();
        for (i, id) in self.ids.iter().enumerate() {
            if keep[i] {
                remap[i] = ids.len();
                ids.push(id.clone());
            }
        }
        let directed = self
            .directed
            .iter()
            .filter(|&&(u, v)| keep[u] && keep[v])
            .map(|&(u, v)| (remap[u], remap[v]))
            .collect();
        CorpusGraph::new(ids, directed).expect("subgraph of a valid graph is valid")
    }

    /// Component label per node (labels ordered by smallest member index).
    pub fn components(&self) -> Vec<usize> {
        let mut dsu = DisjointSet::new(self.n());
        for &(u, v) in &self.undirected {
            dsu.union(u, v);
        }
        let mut label = vec![usize::MAX; self.n()];
        let mut comp_of_root = HashMap::new();
        for (i, slot) in label.iter_mut().enumerate() {
            let root = dsu.find(i);
            let next = comp_of_root.len();
            *slot = *comp_of_root.entry(root).or_insert(next);
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().max().map_or(0, |&m| m + 1)
    }
}

/// Simple undirected projection of directed pairs: self-loops dropped, each
/// unordered pair once, sorted.
pub fn undirected_projection(directed: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = directed
        .iter()
        .filter(|&&(u, v)| u != v)
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Induced subgraph on the largest undirected connected component. Among
/// equally large components the one holding the smallest node index wins.
pub fn largest_component(graph: &CorpusGraph) -> CorpusGraph {
    if graph.n() == 0 {
        return graph.clone();
    }
    let label = graph.components();
    let count = label.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; count];
    for &c in &label {
        sizes[c] += 1;
    }
    // labels are numbered by first appearance, so the first maximum has the smallest member
    let best = (0..count)
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .unwrap();
    let keep: Vec<bool> = label.iter().map(|&c| c == best).collect();
    graph.induced_subgraph(&keep)
}

/// Removes every node whose undirected degree is exactly one.
///
/// With `fixpoint = false` this is a single pass over the input degrees.
/// With `fixpoint = true` the pass repeats until no degree-one node remains.
pub fn prune_degree_one(graph: &CorpusGraph, fixpoint: bool) -> CorpusGraph {
    let mut current = graph.clone();
    loop {
        let keep: Vec<bool> = current.degrees().iter().map(|&d| d != 1).collect();
        if keep.iter().all(|&k| k) {
            return current;
        }
        current = current.induced_subgraph(&keep);
        if !fixpoint {
            return current;
        }
    }
}

/// Union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}
