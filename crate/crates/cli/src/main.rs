use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use citeweave::community::{self, Edge, KMeansConfig, Partition, QualityFunction};
use citeweave::corpus::{self, CorpusGraph};
use citeweave::embedding::{self, ServiceConfig};
use citeweave::metrics;
use citeweave::knn::CandidateScope;
use citeweave::pipeline::{self, derive_seed, write_json, PipelineConfig, RunManifest};
use citeweave::synth;
use citeweave::{augment, Error, Result};

#[derive(Parser)]
#[command(name = "citeweave", version, about = "Repair fragmented citation networks with text-embedding edges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and filter a corpus; write the retained records and edges.
    Ingest(Common),
    /// Leiden clustering of the citation graph or of a stored edge list.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Edge list `u<TAB>v[<TAB>..<TAB>weight]` to cluster instead of the corpus.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Baseline clustering, kNN repair edges, citation weights and blend.
    Augment(Common),
    /// Cosine weights on citation edges and their histogram.
    Weigh(Common),
    /// Metrics for a stored partition of the corpus graph.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        partition: PathBuf,
    },
    /// K-means on the embeddings of the corpus graph nodes.
    Kmeans(Common),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Run every stage from a configuration file or a previous manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
    },
    /// Embed title + abstract of every record through the service at CITEWEAVE_EMBED_URL.
    Embed {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    ids: Option<PathBuf>,
    #[arg(long)]
    coverage: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// kNN candidate scope: `global` (all nodes) or `restricted` (small-cluster nodes only).
    #[arg(long)]
    candidates: Option<CandidateScope>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    resolution: Option<f64>,
    #[arg(long)]
    quality: Option<QualityFunction>,
    #[arg(long, conflicts_with = "unweighted")]
    weighted: bool,
    #[arg(long)]
    unweighted: bool,
    #[arg(long)]
    small_threshold: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kmeans_k: Option<usize>,
    /// Extra `key=value` configuration overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated community sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    p_intra: Option<f64>,
    #[arg(long)]
    p_inter: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    fragments: Option<usize>,
    /// Fragment size range `min-max`.
    #[arg(long)]
    fragment_sizes: Option<String>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        let paths = [
            (&self.metadata, &mut cfg.metadata),
            (&self.edges, &mut cfg.edges),
            (&self.vectors, &mut cfg.vectors),
            (&self.ids, &mut cfg.ids),
            (&self.out, &mut cfg.out_dir),
        ];
        for (flag, field) in paths {
            if let Some(p) = flag {
                *field = p.clone();
            }
        }
        if self.coverage.is_some() {
            cfg.coverage = self.coverage.clone();
        }
        cfg.k = self.k.unwrap_or(cfg.k);
        cfg.candidates = self.candidates.unwrap_or(cfg.candidates);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.resolution = self.resolution.unwrap_or(cfg.resolution);
        cfg.quality_function = self.quality.unwrap_or(cfg.quality_function);
        cfg.size_threshold = self.small_threshold.unwrap_or(cfg.size_threshold);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        if self.kmeans_k.is_some() {
            cfg.kmeans_k = self.kmeans_k;
        }
        if self.weighted {
            cfg.use_weights = true;
        }
        if self.unweighted {
            cfg.use_weights = false;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate_params()
    }
}

fn require(paths: &[&Path]) -> Result<()> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(Error::Config(format!("input file {} does not exist", p.display()))),
        None => Ok(()),
    }
}

fn out_dir(cfg: &PipelineConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    Ok(&cfg.out_dir)
}

fn prepared(cfg: &PipelineConfig) -> Result<pipeline::Prepared> {
    require(&[&cfg.metadata, &cfg.edges])?;
    pipeline::prepare(cfg)
}

fn embeddings(cfg: &PipelineConfig, graph: &CorpusGraph) -> Result<embedding::EmbeddingMatrix> {
    require(&[&cfg.vectors, &cfg.ids])?;
    pipeline::load_bound_embeddings(cfg, graph)
}

/// Reads `u<TAB>v[<TAB>..<TAB>weight]`; nodes are numbered by first appearance.
fn read_edge_list(path: &Path, weighted: bool) -> Result<(CorpusGraph, Vec<Edge>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if cols.len() < 2 {
            return Err(bad("expected at least two columns".into()));
        }
        let mut node = |id: &str| {
            *index.entry(id.to_string()).or_insert_with(|| {
                ids.push(id.to_string());
                ids.len() - 1
            })
        };
        let (u, v) = (node(cols[0]), node(cols[1]));
        let w = if weighted && cols.len() > 2 {
            let last = cols[cols.len() - 1];
            last.trim().parse::<f64>().map_err(|_| bad(format!("bad weight {last:?}")))?
        } else {
            1.0
        };
        if u != v && !(weighted && w == 0.0) {
            edges.push((u.min(v), u.max(v), w));
        }
    }
    edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    edges.dedup_by(|a, b| (a.0, a.1) == (b.0, b.1));
    let directed = edges.iter().map(|&(u, v, _)| (u, v)).collect();
    Ok((CorpusGraph::new(ids, directed)?, edges))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(common) => {
            let cfg = common.config()?;
            let p = prepared(&cfg)?;
            let out = out_dir(&cfg)?;
            corpus::write_metadata(&out.join("metadata.jsonl"), &p.records)?;
            corpus::write_edges(&out.join("edges.tsv"), &p.graph)?;
            write_json(&out.join("filter_report.json"), &p.filter)?;
            write_json(&out.join("load_report.json"), &p.load)?;
            println!("{} records, {} citation pairs retained", p.graph.n(), p.graph.directed_edges().len());
        }
        Command::Cluster { common, graph } => {
            let cfg = common.config()?;
            let (g, edges) = match &graph {
                Some(path) => {
                    require(&[path])?;
                    read_edge_list(path, cfg.use_weights)?
                }
                None => {
                    let g = prepared(&cfg)?.graph;
                    let e = pipeline::citation_edges(&g);
                    (g, e)
                }
            };
            let use_weights = cfg.use_weights && graph.is_some();
            let qc = cfg.quality_config(use_weights, derive_seed(cfg.seed, "baseline"));
            let outcome = community::leiden_with_trace(&edges, g.n(), &qc)?;
            let out = out_dir(&cfg)?;
            outcome.partition.write_csv(&out.join("partition.csv"), &g)?;
            let report = json!({
                "quality_function": cfg.quality_function,
                "resolution": cfg.resolution,
                "use_weights": use_weights,
                "seed": cfg.seed,
                "quality": outcome.quality,
                "pass_qualities": outcome.pass_qualities,
                "clusters": outcome.partition.num_clusters(),
                "sizes": outcome.partition.sizes(),
                "connected": community::clusters_connected(&edges, &outcome.partition),
            });
            write_json(&out.join("cluster_report.json"), &report)?;
            println!("{} clusters, quality {:.6}", outcome.partition.num_clusters(), outcome.quality);
        }
        Command::Augment(common) => {
            let cfg = common.config()?;
            let p = prepared(&cfg)?;
            let m = embeddings(&cfg, &p.graph)?;
            let qc = cfg.quality_config(false, derive_seed(cfg.seed, "baseline"));
            let baseline = community::leiden(&pipeline::citation_edges(&p.graph), p.graph.n(), &qc)?;
            let a = pipeline::augment_graph(&cfg, &p.graph, &m, &baseline)?;
            let out = out_dir(&cfg)?;
            baseline.write_csv(&out.join("baseline_partition.csv"), &p.graph)?;
            a.textual.write_tsv(&out.join("textual_edges.tsv"), &p.graph)?;
            a.graph.write_tsv(&out.join("augmented.tsv"), &p.graph)?;
            write_json(&out.join("bookkeeping.json"), &a.graph.bookkeeping)?;
            let b = &a.graph.bookkeeping;
            println!(
                "e_citing {} + e_textual {} - e_overlap {} = e_total {}",
                b.e_citing, b.e_textual, b.e_overlap, b.e_total
            );
        }
        Command::Weigh(common) => {
            let cfg = common.config()?;
            let p = prepared(&cfg)?;
            let m = embeddings(&cfg, &p.graph)?;
            let weighted = augment::weight_citation_edges(&p.graph, &m)?;
            let out = out_dir(&cfg)?;
            let mut tsv = String::new();
            for e in &weighted {
                tsv.push_str(&format!("{}\t{}\t{:.6}\n", p.graph.id_of(e.u), p.graph.id_of(e.v), e.w_textual));
            }
            let path = out.join("citation_weights.tsv");
            fs::write(&path, tsv).map_err(|e| Error::io(&path, e))?;
            let weights: Vec<f64> = weighted.iter().map(|e| e.w_textual).collect();
            metrics::weight_histogram(&weights, 0.05)?.write_csv(&out.join("weight_histogram.csv"))?;
            println!("{} citation edges weighted", weighted.len());
        }
        Command::Metrics { common, partition } => {
            let cfg = common.config()?;
            require(&[&partition])?;
            let p = prepared(&cfg)?;
            let part = Partition::read_csv(&partition, &p.graph)?;
            let edges = pipeline::citation_edges(&p.graph);
            let pair = cfg.label_pair.clone().or_else(|| pipeline::dominant_label_pair(&p.records));
            let q = community::quality(&edges, p.graph.n(), &part, &cfg.quality_config(false, 0));
            let report = pipeline::partition_metrics(&part, &p.records, Some(q), pair.as_ref());
            let out = out_dir(&cfg)?;
            write_json(&out.join("partition_metrics.json"), &report)?;
            metrics::link_distribution(&part, &edges).write_csv(&out.join("link_matrix.csv"))?;
            println!("{} clusters, sizes {:?}", report.clusters, report.sizes);
        }
        Command::Kmeans(common) => {
            let cfg = common.config()?;
            let k = cfg
                .kmeans_k
                .ok_or_else(|| Error::Config("kmeans needs --kmeans-k".into()))?;
            let p = prepared(&cfg)?;
            let m = embeddings(&cfg, &p.graph)?;
            let kc = KMeansConfig {
                k,
                seed: derive_seed(cfg.seed, "kmeans"),
                ..Default::default()
            };
            let outcome = community::kmeans(&m, &kc)?;
            let out = out_dir(&cfg)?;
            outcome.partition.write_csv(&out.join("kmeans_partition.csv"), &p.graph)?;
            let pair = cfg.label_pair.clone().or_else(|| pipeline::dominant_label_pair(&p.records));
            let report = pipeline::partition_metrics(&outcome.partition, &p.records, None, pair.as_ref());
            write_json(
                &out.join("kmeans_report.json"),
                &json!({
                    "k": k,
                    "iterations": outcome.iterations,
                    "inertia_history": outcome.inertia_history,
                    "metrics": report,
                }),
            )?;
            println!("k-means sizes {:?}", outcome.partition.sizes());
        }
        Command::Synth(args) => synth_command(args)?,
        Command::Pipeline { common, manifest } => {
            let cfg = match &manifest {
                Some(path) => {
                    let mut cfg = RunManifest::read(path)?.config;
                    common.apply(&mut cfg)?;
                    cfg
                }
                None => common.config()?,
            };
            let m = pipeline::run_pipeline(&cfg)?;
            for (name, count) in &m.clusters {
                println!("{name}: {count} clusters");
            }
            println!("outputs in {}", cfg.out_dir.display());
        }
        Command::Embed {
            metadata,
            out,
            batch_size,
            workers,
        } => {
            let mut sc = ServiceConfig::from_env()
                .ok_or_else(|| Error::Config(format!("{} is not set", embedding::EMBED_URL_ENV)))?;
            if batch_size == 0 || workers == 0 {
                return Err(Error::Config("batch size and workers must be positive".into()));
            }
            sc.batch_size = batch_size;
            sc.workers = workers;
            require(&[&metadata])?;
            let records = corpus::read_metadata(&metadata)?;
            let m = embedding::embed_via_service(&records, &sc)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            embedding::write_vectors(&out.join("vectors.emb"), &m)?;
            let ids: Vec<String> = records.iter().map(|r| r.pub_id.clone()).collect();
            embedding::write_ids(&out.join("ids.txt"), &ids)?;
            println!("{} vectors of dimension {}", m.n(), m.d());
        }
    }
    Ok(())
}

fn synth_command(args: SynthArgs) -> Result<()> {
    let mut preset = match &args.preset {
        Some(name) => synth::preset(name, args.seed)?,
        None => synth::Preset {
            planted: synth::PlantedSpec {
                seed: args.seed,
                ..Default::default()
            },
            fragments: synth::FragmentSpec {
                fragment_count: 0,
                fragment_size_range: (1, 1),
                source_community: 0,
                seed: args.seed.wrapping_add(1),
            },
        },
    };
    if let Some(s) = args.sizes {
        preset.planted.community_sizes = s;
        preset.planted.labels.clear();
    }
    preset.planted.p_intra = args.p_intra.unwrap_or(preset.planted.p_intra);
    preset.planted.p_inter = args.p_inter.unwrap_or(preset.planted.p_inter);
    preset.planted.embed_dim = args.dim.unwrap_or(preset.planted.embed_dim);
    preset.fragments.fragment_count = args.fragments.unwrap_or(preset.fragments.fragment_count);
    if let Some(range) = &args.fragment_sizes {
        let bad = || Error::Config(format!("fragment sizes must look like 8-20, got {range:?}"));
        let (a, b) = range.split_once('-').ok_or_else(bad)?;
        preset.fragments.fragment_size_range = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    }

    let (corpus, graph) = synth::generate(&preset)?;
    let paths = synth::write_corpus(&args.out, &corpus, &graph)?;
    // a configuration that keeps the fragments and treats them as small clusters
    let cfg = PipelineConfig {
        metadata: "metadata.jsonl".into(),
        edges: "edges.tsv".into(),
        vectors: "vectors.emb".into(),
        ids: "ids.txt".into(),
        out_dir: "out".into(),
        resolution: 0.3,
        size_threshold: 100,
        largest_component: false,
        prune_degree_one: false,
        seed: args.seed,
        ..Default::default()
    };
    let conf = args.out.join("pipeline.conf");
    fs::write(&conf, cfg.to_kv()).map_err(|e| Error::io(&conf, e))?;
    write_json(&args.out.join("synth_spec.json"), &preset)?;
    println!(
        "{} nodes, {} citation pairs, {} components written to {}",
        graph.n(),
        graph.directed_edges().len(),
        graph.component_count(),
        paths.metadata.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn is_validation(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::AlphaOutOfRange(_) | Error::Infeasible(_) | Error::TooManyNodes { .. }
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
