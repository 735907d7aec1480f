//! End-to-end experiment: preprocessing, baseline clustering, augmentation,
//! re-clustering and reports, driven by a flat `key = value` configuration.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{self, AugmentedGraph, Bookkeeping, CitingEdge};
use crate::community::{self, Edge, KMeansConfig, LeidenOutcome, Partition, QualityConfig, QualityFunction};
use crate::corpus::{self, CorpusGraph, FilterReport, LoadReport, PublicationRecord, YearWindow};
use crate::embedding::{self, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::knn::{self, CandidateScope, TextualEdgeSet};
use crate::metrics::{self, ConfusionTable, CoverageIndex, HomogeneityReport, RetentionFunnel};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub metadata: PathBuf,
    pub edges: PathBuf,
    pub vectors: PathBuf,
    pub ids: PathBuf,
    pub coverage: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub k: usize,
    pub candidates: CandidateScope,
    pub alpha: f64,
    pub resolution: f64,
    pub quality_function: QualityFunction,
    /// Which augmented partition the summary singles out.
    pub use_weights: bool,
    pub size_threshold: usize,
    pub seed: u64,
    pub year_window: YearWindow,
    pub min_abstract_chars: usize,
    pub largest_component: bool,
    pub prune_degree_one: bool,
    pub prune_fixpoint: bool,
    pub max_passes: usize,
    pub restarts: usize,
    pub kmeans_k: Option<usize>,
    pub label_pair: Option<(String, String)>,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            metadata: PathBuf::from("metadata.jsonl"),
            edges: PathBuf::from("edges.tsv"),
            vectors: PathBuf::from("vectors.emb"),
            ids: PathBuf::from("ids.txt"),
            coverage: None,
            out_dir: PathBuf::from("out"),
            k: 10,
            candidates: CandidateScope::Global,
            alpha: augment::DEFAULT_ALPHA,
            resolution: 0.05,
            quality_function: QualityFunction::RbModularity,
            use_weights: true,
            size_threshold: augment::DEFAULT_SIZE_THRESHOLD,
            seed: 0,
            year_window: YearWindow::default(),
            min_abstract_chars: 100,
            largest_component: true,
            prune_degree_one: true,
            prune_fixpoint: false,
            max_passes: 10,
            restarts: 8,
            kmeans_k: None,
            label_pair: None,
            workers: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" => Ok(None),
        v => parse_value(key, v).map(Some),
    }
}

impl PipelineConfig {
    /// Sets one field from its textual form; `key` is the field name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "metadata" => self.metadata = value.into(),
            "edges" => self.edges = value.into(),
            "vectors" => self.vectors = value.into(),
            "ids" => self.ids = value.into(),
            "coverage" => self.coverage = parse_optional(key, value)?,
            "out_dir" => self.out_dir = value.into(),
            "k" => self.k = parse_value(key, value)?,
            "candidates" => self.candidates = value.parse()?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "resolution" => self.resolution = parse_value(key, value)?,
            "quality_function" => self.quality_function = value.parse()?,
            "use_weights" => self.use_weights = parse_value(key, value)?,
            "size_threshold" => self.size_threshold = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "year_window" => self.year_window = value.parse()?,
            "min_abstract_chars" => self.min_abstract_chars = parse_value(key, value)?,
            "largest_component" => self.largest_component = parse_value(key, value)?,
            "prune_degree_one" => self.prune_degree_one = parse_value(key, value)?,
            "prune_fixpoint" => self.prune_fixpoint = parse_value(key, value)?,
            "max_passes" => self.max_passes = parse_value(key, value)?,
            "restarts" => self.restarts = parse_value(key, value)?,
            "kmeans_k" => self.kmeans_k = parse_optional(key, value)?,
            "label_pair" => {
                self.label_pair = match value {
                    "" | "none" => None,
                    v => {
                        let (a, b) = v
                            .split_once(',')
                            .ok_or_else(|| Error::Config(format!("label_pair must be `a,b`, got {v:?}")))?;
                        Some((a.trim().to_string(), b.trim().to_string()))
                    }
                }
            }
            "workers" => self.workers = parse_optional(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Later keys win.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    /// Reads a configuration file; relative paths are resolved against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.metadata);
        fix(&mut self.edges);
        fix(&mut self.vectors);
        fix(&mut self.ids);
        fix(&mut self.out_dir);
        if let Some(c) = &mut self.coverage {
            fix(c);
        }
    }

    /// Serializes back to the `key = value` format.
    pub fn to_kv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let lines = [
            ("metadata", self.metadata.display().to_string()),
            ("edges", self.edges.display().to_string()),
            ("vectors", self.vectors.display().to_string()),
            ("ids", self.ids.display().to_string()),
            ("coverage", opt(self.coverage.as_ref().map(|p| p.display().to_string()))),
            ("out_dir", self.out_dir.display().to_string()),
            ("k", self.k.to_string()),
            ("candidates", self.candidates.to_string()),
            ("alpha", self.alpha.to_string()),
            ("resolution", self.resolution.to_string()),
            ("quality_function", self.quality_function.to_string()),
            ("use_weights", self.use_weights.to_string()),
            ("size_threshold", self.size_threshold.to_string()),
            ("seed", self.seed.to_string()),
            ("year_window", self.year_window.to_string()),
            ("min_abstract_chars", self.min_abstract_chars.to_string()),
            ("largest_component", self.largest_component.to_string()),
            ("prune_degree_one", self.prune_degree_one.to_string()),
            ("prune_fixpoint", self.prune_fixpoint.to_string()),
            ("max_passes", self.max_passes.to_string()),
            ("restarts", self.restarts.to_string()),
            ("kmeans_k", opt(self.kmeans_k.map(|k| k.to_string()))),
            ("label_pair", opt(self.label_pair.as_ref().map(|(a, b)| format!("{a},{b}")))),
            ("workers", opt(self.workers.map(|w| w.to_string()))),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn quality_config(&self, use_weights: bool, seed: u64) -> QualityConfig {
        QualityConfig {
            function: self.quality_function,
            resolution: self.resolution,
            use_weights,
            seed,
            max_passes: self.max_passes,
            restarts: self.restarts,
        }
    }

    /// Parameter checks only.
    pub fn validate_params(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        if self.kmeans_k == Some(0) || self.workers == Some(0) {
            return Err(Error::Config("kmeans_k and workers must be positive".into()));
        }
        self.quality_config(false, 0).validate()
    }

    /// Parameter checks plus existence of every input file.
    pub fn validate(&self) -> Result<()> {
        self.validate_params()?;
        let inputs = [Some(&self.metadata), Some(&self.edges), Some(&self.vectors), Some(&self.ids), self.coverage.as_ref()];
        for p in inputs.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Stage seed: first eight bytes (little endian) of SHA-256 over the master
/// seed's little-endian bytes followed by the stage name.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Preprocessed corpus with node-aligned records.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Every record read from the metadata file.
    pub all_records: Vec<PublicationRecord>,
    /// `records[i]` describes graph node `i`.
    pub records: Vec<PublicationRecord>,
    pub graph: CorpusGraph,
    pub load: LoadReport,
    pub filter: FilterReport,
}

/// ingest → record filters → largest component → degree-one pruning.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let loaded = corpus::load_corpus(&cfg.metadata, &cfg.edges)?;
    let (kept, mut report) = corpus::apply_filters(&loaded.records, cfg.min_abstract_chars, cfg.year_window);
    report.edge_lines = loaded.report.edge_lines;
    report.duplicate_edges = loaded.report.duplicate_edges;
    report.unmatched_edges = loaded.report.unmatched.len();
    let (mut graph, dropped) = CorpusGraph::from_records(&kept, &loaded.edges)?;
    report.edges_dropped_by_record_filters = dropped;
    let edges_before = graph.directed_edges().len();

    if cfg.largest_component {
        let n = graph.n();
        graph = corpus::largest_component(&graph);
        report.outside_lcc = n - graph.n();
    }
    if cfg.prune_degree_one {
        let n = graph.n();
        graph = corpus::prune_degree_one(&graph, cfg.prune_fixpoint);
        report.degree_one = n - graph.n();
    }
    report.nodes_out = graph.n();
    report.directed_edges_out = graph.directed_edges().len();
    report.edges_dropped_by_graph_filters = edges_before - report.directed_edges_out;

    let by_id: HashMap<&str, &PublicationRecord> = kept.iter().map(|r| (r.pub_id.as_str(), r)).collect();
    let records: Vec<PublicationRecord> = graph.ids().iter().map(|id| by_id[id.as_str()].clone()).collect();
    report.unlabeled_records = records.iter().filter(|r| r.labels.is_empty()).count();
    Ok(Prepared {
        all_records: loaded.records,
        records,
        graph,
        load: loaded.report,
        filter: report,
    })
}

/// Embeddings reordered to graph nodes and unit-normalized.
pub fn load_bound_embeddings(cfg: &PipelineConfig, graph: &CorpusGraph) -> Result<EmbeddingMatrix> {
    let (m, ids) = embedding::load_embeddings(&cfg.vectors, &cfg.ids)?;
    m.restrict_to(&ids, graph)?.normalize_rows()
}

pub fn citation_edges(graph: &CorpusGraph) -> Vec<Edge> {
    graph.undirected_edges().iter().map(|&(u, v)| (u, v, 1.0)).collect()
}

#[derive(Debug, Clone)]
pub struct Augmentation {
    pub small_nodes: Vec<usize>,
    pub short_queries: usize,
    pub textual: TextualEdgeSet,
    pub citing: Vec<CitingEdge>,
    pub graph: AugmentedGraph,
}

/// S1 kNN from small-cluster members over all nodes, S2 citation weights, blend.
pub fn augment_graph(
    cfg: &PipelineConfig,
    graph: &CorpusGraph,
    m: &EmbeddingMatrix,
    baseline: &Partition,
) -> Result<Augmentation> {
    let small_nodes = augment::select_small_cluster_nodes(baseline, cfg.size_threshold)?;
    let (textual, short_queries) = if small_nodes.is_empty() {
        (TextualEdgeSet::default(), 0)
    } else {
        let candidates = cfg.candidates.candidates(graph.n(), &small_nodes);
        let out = knn::knn_search(&small_nodes, &candidates, m, cfg.k, cfg.workers)?;
        (knn::neighbor_lists_to_edges(&out.lists), out.short_queries)
    };
    let citing = augment::weight_citation_edges(graph, m)?;
    let blended = augment::blend(graph.n(), &textual, &citing, cfg.alpha)?;
    Ok(Augmentation {
        small_nodes,
        short_queries,
        textual,
        citing,
        graph: blended,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub clusters: usize,
    pub quality: Option<f64>,
    pub sizes: Vec<usize>,
    pub homogeneity: HomogeneityReport,
    pub confusion: Option<ConfusionTable>,
}

pub fn partition_metrics(
    p: &Partition,
    records: &[PublicationRecord],
    quality: Option<f64>,
    label_pair: Option<&(String, String)>,
) -> PartitionMetrics {
    PartitionMetrics {
        clusters: p.num_clusters(),
        quality,
        sizes: metrics::cluster_size_distribution(p),
        homogeneity: metrics::homogeneity(p, records),
        confusion: label_pair.map(|(a, b)| metrics::confusion(p, records, (a, b))),
    }
}

/// The two most frequent labels, ties broken by label order.
pub fn dominant_label_pair(records: &[PublicationRecord]) -> Option<(String, String)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        for l in &r.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    match ranked.as_slice() {
        [a, b, ..] => Some((a.0.to_string(), b.0.to_string())),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub graph: String,
    pub edges: usize,
    pub clusters: usize,
    pub largest: Option<usize>,
    pub second: Option<usize>,
    pub homogeneity_largest: Option<f64>,
    pub homogeneity_second: Option<f64>,
}

fn summary_row(graph: &str, edges: usize, m: &PartitionMetrics) -> SummaryRow {
    let h = |i: usize| m.homogeneity.clusters.get(i).and_then(|c| c.homogeneity);
    SummaryRow {
        graph: graph.into(),
        edges,
        clusters: m.clusters,
        largest: m.sizes.first().copied(),
        second: m.sizes.get(1).copied(),
        homogeneity_largest: h(0),
        homogeneity_second: h(1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub quality_function: QualityFunction,
    pub selected: String,
    pub small_cluster_nodes: usize,
    pub short_knn_queries: usize,
    pub baseline: PartitionMetrics,
    pub unweighted: PartitionMetrics,
    pub weighted: PartitionMetrics,
    pub kmeans: Option<PartitionMetrics>,
    pub retention: Option<RetentionFunnel>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub timings: Vec<StageTiming>,
    pub bookkeeping: Bookkeeping,
    pub clusters: BTreeMap<String, usize>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Runner {
    timings: Vec<StageTiming>,
}

impl Runner {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage: name,
            source: Box::new(e),
        });
        self.timings.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn leiden_on(edges: &[Edge], n: usize, qc: &QualityConfig) -> Result<LeidenOutcome> {
    community::leiden_with_trace(edges, n, qc)
}

/// Runs every stage and writes all reports under `cfg.out_dir`.
///
/// On failure the outputs written so far are kept next to a `FAILED` file
/// naming the stage and cause.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = run_stages(cfg, &out);
    if let Err(e) = &result {
        let _ = fs::write(&marker, format!("{e}\n"));
    }
    result
}

fn run_stages(cfg: &PipelineConfig, out: &Path) -> Result<RunManifest> {
    let mut run = Runner { timings: Vec::new() };
    let seeds: BTreeMap<String, u64> = ["baseline", "augmented_unweighted", "augmented_weighted", "kmeans"]
        .iter()
        .map(|s| (s.to_string(), derive_seed(cfg.seed, s)))
        .collect();

    let prepared = run.stage("preprocess", || {
        let p = prepare(cfg)?;
        write_json(&out.join("filter_report.json"), &p.filter)?;
        Ok(p)
    })?;
    let graph = &prepared.graph;
    let n = graph.n();

    let baseline_edges = citation_edges(graph);
    let baseline = run.stage("baseline_leiden", || {
        let outcome = leiden_on(&baseline_edges, n, &cfg.quality_config(false, seeds["baseline"]))?;
        outcome.partition.write_csv(&out.join("baseline_partition.csv"), graph)?;
        Ok(outcome)
    })?;

    let m = run.stage("embeddings", || load_bound_embeddings(cfg, graph))?;

    let aug = run.stage("augment", || {
        let a = augment_graph(cfg, graph, &m, &baseline.partition)?;
        a.textual.write_tsv(&out.join("textual_edges.tsv"), graph)?;
        a.graph.write_tsv(&out.join("augmented.tsv"), graph)?;
        write_json(&out.join("bookkeeping.json"), &a.graph.bookkeeping)?;
        Ok(a)
    })?;

    let unweighted_edges = aug.graph.unweighted_view();
    let unweighted = run.stage("augmented_leiden_unweighted", || {
        let o = leiden_on(&unweighted_edges, n, &cfg.quality_config(false, seeds["augmented_unweighted"]))?;
        o.partition.write_csv(&out.join("partition_unweighted.csv"), graph)?;
        Ok(o)
    })?;
    let weighted_edges = aug.graph.weighted_view();
    let weighted = run.stage("augmented_leiden_weighted", || {
        let o = leiden_on(&weighted_edges, n, &cfg.quality_config(true, seeds["augmented_weighted"]))?;
        o.partition.write_csv(&out.join("partition_weighted.csv"), graph)?;
        Ok(o)
    })?;

    let kmeans = match cfg.kmeans_k {
        Some(k) => Some(run.stage("kmeans", || {
            let o = community::kmeans(
                &m,
                &KMeansConfig {
                    k,
                    seed: seeds["kmeans"],
                    ..Default::default()
                },
            )?;
            o.partition.write_csv(&out.join("kmeans_partition.csv"), graph)?;
            Ok(o)
        })?),
        None => None,
    };

    let report = run.stage("metrics", || {
        let records = &prepared.records;
        let pair = cfg.label_pair.clone().or_else(|| dominant_label_pair(records));
        let pm = |p: &Partition, q: Option<f64>| partition_metrics(p, records, q, pair.as_ref());
        let baseline_m = pm(&baseline.partition, Some(baseline.quality));
        let unweighted_m = pm(&unweighted.partition, Some(unweighted.quality));
        let weighted_m = pm(&weighted.partition, Some(weighted.quality));
        let kmeans_m = kmeans.as_ref().map(|o| pm(&o.partition, None));

        metrics::link_distribution(&baseline.partition, &baseline_edges).write_csv(&out.join("link_matrix_baseline.csv"))?;
        metrics::link_distribution(&unweighted.partition, &unweighted_edges)
            .write_csv(&out.join("link_matrix_unweighted.csv"))?;
        metrics::link_distribution(&weighted.partition, &weighted_edges).write_csv(&out.join("link_matrix_weighted.csv"))?;
        let weights: Vec<f64> = aug.citing.iter().map(|e| e.w_textual).collect();
        metrics::weight_histogram(&weights, 0.05)?.write_csv(&out.join("weight_histogram.csv"))?;

        let retention = match &cfg.coverage {
            Some(path) => {
                let mut coverage = CoverageIndex::read(path)?;
                for r in &prepared.all_records {
                    if coverage.contains(&r.pub_id) && coverage.year(&r.pub_id).is_none() {
                        coverage.insert(r.pub_id.clone(), r.year);
                    }
                }
                let subset: Vec<&PublicationRecord> = aug.small_nodes.iter().map(|&i| &records[i]).collect();
                Some(metrics::retention_funnel(&subset, &coverage, cfg.year_window, graph))
            }
            None => None,
        };

        let mut summary = vec![
            summary_row("citation", baseline_edges.len(), &baseline_m),
            summary_row("augmented_unweighted", unweighted_edges.len(), &unweighted_m),
            summary_row("augmented_weighted", weighted_edges.len(), &weighted_m),
        ];
        if let Some(km) = &kmeans_m {
            summary.push(summary_row("kmeans", 0, km));
        }
        let report = MetricsReport {
            quality_function: cfg.quality_function,
            selected: if cfg.use_weights { "augmented_weighted" } else { "augmented_unweighted" }.into(),
            small_cluster_nodes: aug.small_nodes.len(),
            short_knn_queries: aug.short_queries,
            baseline: baseline_m,
            unweighted: unweighted_m,
            weighted: weighted_m,
            kmeans: kmeans_m,
            retention,
            summary,
        };
        write_json(&out.join("metrics.json"), &report)?;
        Ok(report)
    })?;

    let mut clusters = BTreeMap::new();
    clusters.insert("baseline".to_string(), report.baseline.clusters);
    clusters.insert("augmented_unweighted".to_string(), report.unweighted.clusters);
    clusters.insert("augmented_weighted".to_string(), report.weighted.clusters);
    if let Some(km) = &report.kmeans {
        clusters.insert("kmeans".to_string(), km.clusters);
    }
    let manifest = RunManifest {
        version: VERSION.into(),
        config: cfg.clone(),
        seeds,
        timings: run.timings,
        bookkeeping: aug.graph.bookkeeping,
        clusters,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
