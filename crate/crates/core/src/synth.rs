//! Synthetic corpora: planted-partition citation graphs with labelled,
//! community-correlated embeddings and controlled fragmentation.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusGraph, PublicationRecord};
use crate::embedding::{self, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub community_sizes: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    pub embed_dim: usize,
    /// One minus the cosine between any two community centers, in `[0, 1]`.
    pub center_separation: f64,
    /// Per-coordinate standard deviation of the noise added to a center.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Label of each community; `C0`, `C1`, … when empty.
    pub labels: Vec<String>,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            community_sizes: vec![50, 50],
            p_intra: 0.2,
            p_inter: 0.005,
            embed_dim: 16,
            center_separation: 0.7,
            noise_sigma: 0.1,
            seed: 0,
            labels: Vec::new(),
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let infeasible = |m: String| Err(Error::Infeasible(m));
        if self.community_sizes.is_empty() || self.community_sizes.contains(&0) {
            return infeasible("community sizes must be non-empty and positive".into());
        }
        for p in [self.p_intra, self.p_inter] {
            if !(0.0..=1.0).contains(&p) {
                return infeasible(format!("edge probability {p} outside [0, 1]"));
            }
        }
        if self.community_sizes.len() > 1 && self.p_intra <= self.p_inter {
            return infeasible("p_intra must exceed p_inter".into());
        }
        if self.embed_dim < self.community_sizes.len() + 1 {
            return infeasible(format!(
                "embed_dim {} too small for {} communities",
                self.embed_dim,
                self.community_sizes.len()
            ));
        }
        if !(0.0..=1.0).contains(&self.center_separation) || !(self.noise_sigma >= 0.0) {
            return infeasible("center_separation must lie in [0, 1] and noise_sigma be non-negative".into());
        }
        if !self.labels.is_empty() && self.labels.len() != self.community_sizes.len() {
            return infeasible("one label per community required".into());
        }
        Ok(())
    }

    fn label(&self, c: usize) -> String {
        self.labels.get(c).cloned().unwrap_or_else(|| format!("C{c}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentSpec {
    pub fragment_count: usize,
    /// Inclusive `(min, max)` fragment size.
    pub fragment_size_range: (usize, usize),
    pub source_community: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub graph: CorpusGraph,
    /// Node-aligned records; `refs` reflect the unfragmented graph.
    pub records: Vec<PublicationRecord>,
    /// Node-aligned unit rows.
    pub embeddings: EmbeddingMatrix,
    /// Planted community of every node.
    pub community: Vec<usize>,
}

const FILLER: &str = "We study structural properties of the problem and report computational results \
on benchmark instances together with a discussion of practical implications.";

/// Stochastic block model with random edge directions.
pub fn planted_graph(spec: &PlantedSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let community: Vec<usize> = spec
        .community_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let n = community.len();

    let mut directed = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community[u] == community[v] {
                spec.p_intra
            } else {
                spec.p_inter
            };
            if rng.random::<f64>() < p {
                directed.push(if rng.random::<bool>() { (u, v) } else { (v, u) });
            }
        }
    }

    let d = spec.embed_dim;
    let shared = (1.0 - spec.center_separation).sqrt();
    let own = spec.center_separation.sqrt();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Infeasible(e.to_string()))?;
    let mut data = Vec::with_capacity(n * d);
    for &c in &community {
        let mut row: Vec<f64> = (0..d).map(|_| noise.sample(&mut rng)).collect();
        row[0] += shared;
        row[c + 1] += own;
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(row.iter().map(|x| (x / norm) as f32));
    }
    let embeddings = EmbeddingMatrix::new(n, d, data)?.normalize_rows()?;

    let ids: Vec<String> = (0..n).map(|i| format!("P{i:06}")).collect();
    let mut refs = vec![Vec::new(); n];
    for &(u, v) in &directed {
        refs[u].push(ids[v].clone());
    }
    let records = ids
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(i, (id, refs))| {
            let label = spec.label(community[i]);
            PublicationRecord {
                pub_id: id.clone(),
                title: format!("Synthetic publication {i} in {label}"),
                abstract_text: format!("A contribution to {label}. {FILLER}"),
                year: Some(rng.random_range(2000..=2024)),
                labels: vec![label],
                refs,
            }
        })
        .collect();

    Ok(SyntheticCorpus {
        graph: CorpusGraph::new(ids, directed)?,
        records,
        embeddings,
        community,
    })
}

/// Cuts `spec.fragment_count` disjoint node groups out of one community.
///
/// Every edge between a fragment and any other node is removed, and a random
/// spanning tree is added inside each fragment so it forms one component.
pub fn fragment(graph: &CorpusGraph, community: &[usize], spec: &FragmentSpec) -> Result<CorpusGraph> {
    if spec.fragment_count == 0 {
        return Ok(graph.clone());
    }
    let (lo, hi) = spec.fragment_size_range;
    if lo == 0 || lo > hi {
        return Err(Error::Infeasible(format!("bad fragment size range {lo}..={hi}")));
    }
    assert_eq!(community.len(), graph.n(), "community must align with graph nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool: Vec<usize> = (0..graph.n()).filter(|&i| community[i] == spec.source_community).collect();
    pool.shuffle(&mut rng);

    let sizes: Vec<usize> = (0..spec.fragment_count).map(|_| rng.random_range(lo..=hi)).collect();
    let needed: usize = sizes.iter().sum();
    // the remainder of the community must stay non-empty
    if needed >= pool.len() {
        return Err(Error::Infeasible(format!(
            "{needed} fragment nodes requested from a community of {}",
            pool.len()
        )));
    }

    let mut owner = vec![usize::MAX; graph.n()];
    let mut groups = Vec::with_capacity(sizes.len());
    let mut rest = pool.as_slice();
    for (f, &s) in sizes.iter().enumerate() {
        let (group, tail) = rest.split_at(s);
        for &v in group {
            owner[v] = f;
        }
        groups.push(group.to_vec());
        rest = tail;
    }

    let mut directed: Vec<(usize, usize)> = graph
        .directed_edges()
        .iter()
        .copied()
        .filter(|&(u, v)| owner[u] == owner[v])
        .collect();
    for group in &groups {
        for i in 1..group.len() {
            let j = rng.random_range(0..i);
            directed.push(if rng.random::<bool>() {
                (group[i], group[j])
            } else {
                (group[j], group[i])
            });
        }
    }
    CorpusGraph::new(graph.ids().to_vec(), directed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPaths {
    pub metadata: PathBuf,
    pub edges: PathBuf,
    pub vectors: PathBuf,
    pub ids: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            metadata: dir.join("metadata.jsonl"),
            edges: dir.join("edges.tsv"),
            vectors: dir.join("vectors.emb"),
            ids: dir.join("ids.txt"),
        }
    }
}

/// Writes `graph` (possibly fragmented) with the corpus records and embeddings.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus, graph: &CorpusGraph) -> Result<CorpusPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = CorpusPaths::in_dir(dir);
    corpus::write_metadata(&paths.metadata, &corpus.records)?;
    corpus::write_edges(&paths.edges, graph)?;
    embedding::write_vectors(&paths.vectors, &corpus.embeddings)?;
    embedding::write_ids(&paths.ids, graph.ids())?;
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub planted: PlantedSpec,
    pub fragments: FragmentSpec,
}

/// Two dominant communities plus thirty small fragments cut out of the larger one.
pub fn paper_mini(seed: u64) -> Preset {
    Preset {
        planted: PlantedSpec {
            community_sizes: vec![2000, 1000],
            p_intra: 0.01,
            p_inter: 0.0005,
            embed_dim: 64,
            center_separation: 0.7,
            noise_sigma: 0.1,
            seed,
            labels: vec!["Mathematics".into(), "OR&MS".into()],
        },
        fragments: FragmentSpec {
            fragment_count: 30,
            fragment_size_range: (8, 20),
            source_community: 0,
            seed: seed.wrapping_add(1),
        },
    }
}

pub fn preset(name: &str, seed: u64) -> Result<Preset> {
    match name {
        "paper-mini" => Ok(paper_mini(seed)),
        other => Err(Error::Config(format!("unknown preset {other:?}"))),
    }
}

/// Generates the preset corpus and its fragmented graph.
pub fn generate(preset: &Preset) -> Result<(SyntheticCorpus, CorpusGraph)> {
    let corpus = planted_graph(&preset.planted)?;
    let fragmented = fragment(&corpus.graph, &corpus.community, &preset.fragments)?;
    Ok((corpus, fragmented))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn dense(seed: u64) -> SyntheticCorpus {
        planted_graph(&PlantedSpec {
            community_sizes: vec![30, 30],
            p_intra: 0.5,
            p_inter: 0.05,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn complete_graph() {
        let c = planted_graph(&PlantedSpec {
            community_sizes: vec![5],
            p_intra: 1.0,
            p_inter: 0.0,
            embed_dim: 4,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.graph.undirected_edges().len(), 10);
    }

    #[test]
    fn deterministic() {
        let (a, b) = (dense(4), dense(4));
        assert_eq!(a.graph.directed_edges(), b.graph.directed_edges());
        assert_eq!(a.records, b.records);
        assert_eq!(a.embeddings.as_slice(), b.embeddings.as_slice());
        assert_ne!(dense(5).graph.directed_edges(), a.graph.directed_edges());
    }

    #[test]
    fn rejects_infeasible() {
        let bad = |f: fn(&mut PlantedSpec)| {
            let mut s = PlantedSpec::default();
            f(&mut s);
            planted_graph(&s).is_err()
        };
        assert!(bad(|s| s.p_intra = 1.5));
        assert!(bad(|s| s.p_inter = -0.1));
        assert!(bad(|s| s.p_inter = 0.3));
        assert!(bad(|s| s.community_sizes = vec![3, 0]));
        assert!(bad(|s| s.embed_dim = 2));
        assert!(bad(|s| s.labels = vec!["x".into()]));
    }

    #[test]
    fn labels_and_embeddings_follow_communities() {
        let c = dense(1);
        for (i, r) in c.records.iter().enumerate() {
            assert_eq!(r.labels, vec![format!("C{}", c.community[i])]);
            assert!(corpus::normalized_char_len(&r.abstract_text) >= 100);
            assert!((c.embeddings.norm(i) - 1.0).abs() < 1e-5);
        }
        let mean = |same: bool| {
            let mut s = (0.0, 0);
            for u in 0..60 {
                for v in u + 1..60 {
                    if (c.community[u] == c.community[v]) == same {
                        s.0 += c.embeddings.dot(u, v);
                        s.1 += 1;
                    }
                }
            }
            s.0 / s.1 as f64
        };
        assert!(mean(true) > mean(false) + 0.3);
    }

    #[test]
    fn refs_match_directed_edges() {
        let c = dense(2);
        let total: usize = c.records.iter().map(|r| r.refs.len()).sum();
        assert_eq!(total, c.graph.directed_edges().len());
    }

    #[test]
    fn one_fragment_adds_one_component() {
        let c = dense(3);
        assert_eq!(c.graph.component_count(), 1);
        let spec = FragmentSpec {
            fragment_count: 1,
            fragment_size_range: (3, 3),
            source_community: 0,
            seed: 0,
        };
        let g = fragment(&c.graph, &c.community, &spec).unwrap();
        assert_eq!(g.component_count(), 2);
    }

    #[test]
    fn zero_fragments_unchanged() {
        let c = dense(3);
        let spec = FragmentSpec {
            fragment_count: 0,
            fragment_size_range: (3, 5),
            source_community: 0,
            seed: 0,
        };
        let g = fragment(&c.graph, &c.community, &spec).unwrap();
        assert_eq!(g.directed_edges(), c.graph.directed_edges());
    }

    #[test]
    fn too_many_fragment_nodes() {
        let c = dense(3);
        let spec = FragmentSpec {
            fragment_count: 10,
            fragment_size_range: (3, 3),
            source_community: 1,
            seed: 0,
        };
        assert!(matches!(fragment(&c.graph, &c.community, &spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn fragments_are_isolated_and_connected() {
        let c = dense(6);
        let spec = FragmentSpec {
            fragment_count: 4,
            fragment_size_range: (2, 5),
            source_community: 1,
            seed: 9,
        };
        let g = fragment(&c.graph, &c.community, &spec).unwrap();
        assert_eq!(g.component_count(), 5);
        let original: HashSet<(usize, usize)> = c.graph.undirected_edges().iter().copied().collect();
        let comp = g.components();
        let main = comp[(0..60).find(|&i| c.community[i] == 0).unwrap()];
        for &(u, v) in g.undirected_edges() {
            assert_eq!(comp[u], comp[v]);
            // edges outside fragments are all original
            if comp[u] == main {
                assert!(original.contains(&(u, v)));
            }
        }
        for v in 0..60 {
            if comp[v] != main {
                assert_eq!(c.community[v], 1);
            }
        }
    }

    #[test]
    fn paper_mini_shape() {
        let (corpus, g) = generate(&paper_mini(11)).unwrap();
        assert_eq!(g.n(), 3000);
        assert_eq!(corpus.embeddings.d(), 64);
        // 30 fragments plus the connected remainder
        assert_eq!(g.component_count(), 31);
    }

    #[test]
    fn write_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = dense(7);
        let paths = write_corpus(dir.path(), &c, &c.graph).unwrap();
        let loaded = corpus::load_corpus(&paths.metadata, &paths.edges).unwrap();
        assert_eq!(loaded.records, c.records);
        let (m, ids) = embedding::load_embeddings(&paths.vectors, &paths.ids).unwrap();
        assert_eq!(ids, c.graph.ids());
        assert_eq!(m.as_slice(), c.embeddings.as_slice());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn fragment_edges_subset(seed in 0u64..1000, count in 0usize..5) {
                let c = dense(seed);
                let spec = FragmentSpec { fragment_count: count, fragment_size_range: (1, 4), source_community: 0, seed };
                let g = fragment(&c.graph, &c.community, &spec).unwrap();
                let original: HashSet<(usize, usize)> = c.graph.undirected_edges().iter().copied().collect();
                let comp = g.components();
                let base: HashSet<usize> = (0..60).filter(|&i| c.community[i] == 1).map(|i| comp[i]).collect();
                for &(u, v) in g.undirected_edges() {
                    prop_assert_eq!(comp[u], comp[v]);
                    if !original.contains(&(u, v)) {
                        // new edges only inside a fragment
                        prop_assert!(!base.contains(&comp[u]));
                    }
                }
            }
        }
    }
}
