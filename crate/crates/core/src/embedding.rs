//! Dense text embeddings: the `EMB1` binary format, row normalization,
//! cosine similarity and a small client for an HTTP embedding service.
//!
//! Values are stored as `f32`; every reduction (dot product, norm) runs in `f64`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusGraph, PublicationRecord};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMB1";

/// Environment variable that may supply the embedding service endpoint.
pub const EMBED_URL_ENV: &str = "CITEWEAVE_EMBED_URL";

/// Row-major `n × d` matrix of embeddings, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::EmbeddingFormat(format!(
                "{} values for a {n}x{d} matrix",
                data.len()
            )));
        }
        Ok(Self {
            n,
            d,
            data,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionDrift {
                expected: d,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Dot product of rows `u` and `v` accumulated in `f64`.
    #[inline]
    pub fn dot(&self, u: usize, v: usize) -> f64 {
        dot(self.row(u), self.row(v))
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.dot(i, i).sqrt()
    }

    /// Divides every row by its Euclidean norm.
    pub fn normalize_rows(mut self) -> Result<Self> {
        let d = self.d;
        for i in 0..self.n {
            let norm = self.norm(i);
            if norm == 0.0 {
                return Err(Error::ZeroRow(i));
            }
            for x in &mut self.data[i * d..(i + 1) * d] {
                *x = (*x as f64 / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Cosine similarity of rows `u` and `v`; a plain dot product once normalized.
    pub fn cosine(&self, u: usize, v: usize) -> Result<f64> {
        for i in [u, v] {
            if i >= self.n {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n,
                });
            }
        }
        Ok(self.cosine_unchecked(u, v))
    }

    #[inline]
    pub(crate) fn cosine_unchecked(&self, u: usize, v: usize) -> f64 {
        if self.normalized {
            self.dot(u, v)
        } else {
            let denom = self.norm(u) * self.norm(v);
            if denom == 0.0 {
                0.0
            } else {
                self.dot(u, v) / denom
            }
        }
    }

    /// Reorders rows so that row `i` belongs to graph node `i`.
    ///
    /// `ids[r]` names row `r`. Ids unknown to the graph and graph nodes
    /// without a row are both errors.
    pub fn bind_to(self, ids: &[String], graph: &CorpusGraph) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::IdCountMismatch {
                expected: self.n,
                found: ids.len(),
            });
        }
        let mut row_of = HashMap::with_capacity(ids.len());
        for (r, id) in ids.iter().enumerate() {
            if graph.index_of(id).is_none() {
                return Err(Error::UnknownEmbeddingId(id.clone()));
            }
            row_of.insert(id.as_str(), r);
        }
        self.select_rows(&row_of, graph)
    }

    /// Like [`bind_to`](Self::bind_to) but silently ignores ids that are not graph
    /// nodes (e.g. records removed by preprocessing).
    pub fn restrict_to(self, ids: &[String], graph: &CorpusGraph) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::IdCountMismatch {
                expected: self.n,
                found: ids.len(),
            });
        }
        let row_of: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(r, id)| (id.as_str(), r))
            .collect();
        self.select_rows(&row_of, graph)
    }

    fn select_rows(self, row_of: &HashMap<&str, usize>, graph: &CorpusGraph) -> Result<Self> {
        let missing: Vec<String> = graph
            .ids()
            .iter()
            .filter(|id| !row_of.contains_key(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbeddings(missing));
        }
        let mut data = Vec::with_capacity(graph.n() * self.d);
        for id in graph.ids() {
            data.extend_from_slice(self.row(row_of[id.as_str()]));
        }
        Ok(Self {
            n: graph.n(),
            d: self.d,
            data,
            normalized: self.normalized,
        })
    }
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn read_vectors(path: &Path) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_vectors(&bytes)
}

pub fn decode_vectors(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::EmbeddingFormat("missing EMB1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[12..];
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| Error::EmbeddingFormat("header size overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::EmbeddingFormat(format!(
            "header says {n}x{d} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(n, d, data)
}

pub fn encode_vectors(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + m.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.n as u32).to_le_bytes());
    out.extend_from_slice(&(m.d as u32).to_le_bytes());
    for x in &m.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn write_vectors(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    std::fs::write(path, encode_vectors(m)).map_err(|e| Error::io(path, e))
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| Error::io(path, e)))
        .collect()
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for id in ids {
        writeln!(w, "{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a vectors file and its ids file; row `i` is named by line `i`.
pub fn load_embeddings(vectors_path: &Path, ids_path: &Path) -> Result<(EmbeddingMatrix, Vec<String>)> {
    let m = read_vectors(vectors_path)?;
    let ids = read_ids(ids_path)?;
    if ids.len() != m.n() {
        return Err(Error::IdCountMismatch {
            expected: m.n(),
            found: ids.len(),
        });
    }
    Ok((m, ids))
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub batch_size: usize,
    pub workers: usize,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl ServiceConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            batch_size: 32,
            workers: 1,
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(5),
        }
    }

    /// Endpoint taken from `CITEWEAVE_EMBED_URL`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var(EMBED_URL_ENV).ok().map(Self::new)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

fn post_batch(cfg: &ServiceConfig, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, String> {
    let mut backoff = cfg.initial_backoff;
    let mut attempt = 0;
    loop {
        let outcome = ureq::post(&cfg.endpoint)
            .send_json(EmbedRequest { texts })
            .and_then(|mut resp| resp.body_mut().read_json::<EmbedResponse>());
        match outcome {
            Ok(resp) if resp.vectors.len() == texts.len() => return Ok(resp.vectors),
            Ok(resp) => {
                return Err(format!(
                    "service returned {} vectors for {} texts",
                    resp.vectors.len(),
                    texts.len()
                ))
            }
            Err(e) if attempt >= cfg.max_retries => return Err(e.to_string()),
            Err(_) => {
                std::thread::sleep(backoff);
                backoff = (backoff * 2).min(cfg.max_backoff);
                attempt += 1;
            }
        }
    }
}

/// Embeds `title + " " + abstract` of each record through an HTTP service.
///
/// Batches are dispatched to `cfg.workers` threads, one request in flight per
/// worker; rows come back in record order. The first failing batch (in record
/// order) aborts the call.
pub fn embed_via_service(records: &[PublicationRecord], cfg: &ServiceConfig) -> Result<EmbeddingMatrix> {
    if records.is_empty() {
        return EmbeddingMatrix::new(0, 0, Vec::new());
    }
    if cfg.batch_size == 0 || cfg.workers == 0 {
        return Err(Error::Config("batch_size and workers must be positive".into()));
    }
    let texts: Vec<String> = records.iter().map(PublicationRecord::embedding_text).collect();
    let batches: Vec<&[String]> = texts.chunks(cfg.batch_size).collect();
    let results: Mutex<Vec<Option<std::result::Result<Vec<Vec<f32>>, String>>>> =
        Mutex::new(vec![None; batches.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(batches.len()) {
            s.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::SeqCst);
                if b >= batches.len() {
                    break;
                }
                let out = post_batch(cfg, batches[b]);
                let failed = out.is_err();
                results.lock().unwrap()[b] = Some(out);
                if failed {
                    // stop handing out new work
                    next.store(batches.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
    });

    let mut rows = Vec::with_capacity(records.len());
    let mut dim: Option<usize> = None;
    for (b, slot) in results.into_inner().unwrap().into_iter().enumerate() {
        let first_id = records[b * cfg.batch_size].pub_id.clone();
        let vectors = match slot {
            Some(Ok(v)) => v,
            Some(Err(message)) => return Err(Error::Service { pub_id: first_id, message }),
            None => {
                return Err(Error::Service {
                    pub_id: first_id,
                    message: "batch not attempted after an earlier failure".into(),
                })
            }
        };
        for v in vectors {
            let expected = *dim.get_or_insert(v.len());
            if v.len() != expected {
                return Err(Error::DimensionDrift {
                    expected,
                    found: v.len(),
                });
            }
            rows.push(v);
        }
    }
    EmbeddingMatrix::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    fn m(rows: &[&[f32]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn decode_two_by_three() {
        let mut bytes = b"EMB1".to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for x in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let mat = decode_vectors(&bytes).unwrap();
        assert_eq!((mat.n(), mat.d()), (2, 3));
        assert_eq!(mat.row(1), &[4.0, 5.0, 6.0]);
        assert_eq!(encode_vectors(&mat), bytes);
    }

    #[test]
    fn payload_size_mismatch() {
        let mut bytes = b"EMB1".to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(decode_vectors(&bytes), Err(Error::EmbeddingFormat(_))));
        assert!(matches!(decode_vectors(b"EMB2aaaaaaaa"), Err(Error::EmbeddingFormat(_))));
    }

    #[test]
    fn id_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let v = dir.path().join("v.emb");
        let ids = dir.path().join("ids.txt");
        write_vectors(&v, &m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        std::fs::write(&ids, "a\nb\nc\n").unwrap();
        let err = load_embeddings(&v, &ids).unwrap_err();
        assert!(matches!(err, Error::IdCountMismatch { expected: 2, found: 3 }));
        assert!(err.to_string().contains("id count mismatch"));
    }

    #[test]
    fn binding_reports_missing_node() {
        let ids: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let g = CorpusGraph::new(ids.clone(), vec![]).unwrap();
        let mat = m(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let have = vec!["a".to_string(), "b".into(), "d".into(), "e".into()];
        match mat.bind_to(&have, &g) {
            Err(Error::MissingEmbeddings(missing)) => assert_eq!(missing, vec!["c".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binding_permutes_rows() {
        let g = CorpusGraph::new(vec!["a".into(), "b".into()], vec![]).unwrap();
        let mat = m(&[&[2.0], &[1.0]]);
        let bound = mat.bind_to(&["b".into(), "a".into()], &g).unwrap();
        assert_eq!(bound.row(0), &[1.0]);
        assert_eq!(bound.row(1), &[2.0]);
        let unknown = m(&[&[2.0], &[1.0]]).bind_to(&["b".into(), "z".into()], &g);
        assert!(matches!(unknown, Err(Error::UnknownEmbeddingId(id)) if id == "z"));
    }

    #[test]
    fn normalize_three_four() {
        let mat = m(&[&[3.0, 4.0]]).normalize_rows().unwrap();
        assert!((mat.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((mat.row(0)[1] - 0.8).abs() < 1e-7);
        assert!(mat.is_normalized());
    }

    #[test]
    fn normalize_zero_row_errors() {
        assert!(matches!(m(&[&[1.0, 0.0], &[0.0, 0.0]]).normalize_rows(), Err(Error::ZeroRow(1))));
    }

    #[test]
    fn cosine_examples() {
        let mat = m(&[&[3.0, 4.0], &[4.0, 3.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert!((mat.cosine(0, 1).unwrap() - 0.96).abs() < 1e-12);
        assert_eq!(mat.cosine(2, 3).unwrap(), 0.0);
        assert!((mat.cosine(0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(mat.cosine(0, 9), Err(Error::IndexOutOfRange { index: 9, len: 4 })));
        let unit = mat.normalize_rows().unwrap();
        assert!((unit.cosine(0, 1).unwrap() - 0.96).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_matrix() -> impl Strategy<Value = EmbeddingMatrix> {
            (1usize..8, 1usize..10).prop_flat_map(|(n, d)| {
                proptest::collection::vec(
                    proptest::collection::vec(-10.0f32..10.0, d).prop_filter("nonzero", |r| r.iter().any(|x| x.abs() > 1e-2)),
                    n,
                )
                .prop_map(|rows| EmbeddingMatrix::from_rows(&rows).unwrap())
            })
        }

        proptest! {
            #[test]
            fn cosine_symmetric_and_bounded(mat in arb_matrix()) {
                let unit = mat.clone().normalize_rows().unwrap();
                for u in 0..mat.n() {
                    prop_assert!((unit.cosine(u, u).unwrap() - 1.0).abs() < 1e-6);
                    for v in 0..mat.n() {
                        let c = mat.cosine(u, v).unwrap();
                        prop_assert_eq!(c, mat.cosine(v, u).unwrap());
                        prop_assert!(c.abs() <= 1.0 + 1e-9);
                        prop_assert!((unit.cosine(u, v).unwrap() - c).abs() < 1e-6);
                    }
                }
            }

            #[test]
            fn normalize_idempotent(mat in arb_matrix()) {
                let once = mat.normalize_rows().unwrap();
                let twice = once.clone().normalize_rows().unwrap();
                for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                    prop_assert!((a - b).abs() as f64 <= 1e-7);
                }
            }
        }
    }

    /// Minimal HTTP stub: answers each POST with vectors of the dimension
    /// given by `dims[request_index]` (last entry repeats).
    fn stub_server(dims: Vec<usize>, fail_first: usize) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            let mut served = 0usize;
            for stream in listener.incoming() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap() == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let hit = counter.fetch_add(1, Ordering::SeqCst);
                if hit < fail_first {
                    let resp = "HTTP/1.1 503 Service Unavailable\r\ncontent-length: 0\r\nconnection: close\r\n\r\n";
                    stream.write_all(resp.as_bytes()).unwrap();
                    continue;
                }
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let texts = req["texts"].as_array().unwrap();
                let d = *dims.get(served).unwrap_or(dims.last().unwrap());
                served += 1;
                let vectors: Vec<Vec<f32>> = texts
                    .iter()
                    .map(|t| {
                        let len = t.as_str().unwrap().len() as f32;
                        (0..d).map(|j| len + j as f32).collect()
                    })
                    .collect();
                let payload = serde_json::json!({ "vectors": vectors }).to_string();
                let resp = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    payload.len(),
                    payload
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (url, hits)
    }

    fn recs(n: usize) -> Vec<PublicationRecord> {
        (0..n)
            .map(|i| PublicationRecord {
                pub_id: format!("P{i}"),
                title: "t".repeat(i + 1),
                abstract_text: "abc".into(),
                year: Some(2010),
                labels: vec![],
                refs: vec![],
            })
            .collect()
    }

    #[test]
    fn service_two_records() {
        let (url, _) = stub_server(vec![4], 0);
        let out = embed_via_service(&recs(2), &ServiceConfig::new(url)).unwrap();
        assert_eq!((out.n(), out.d()), (2, 4));
        // "t abc" and "tt abc"
        assert_eq!(out.row(0)[0], 5.0);
        assert_eq!(out.row(1)[0], 6.0);
    }

    #[test]
    fn service_empty_input() {
        let out = embed_via_service(&[], &ServiceConfig::new("http://127.0.0.1:9/unused")).unwrap();
        assert_eq!(out.n(), 0);
    }

    #[test]
    fn service_dimension_drift() {
        let (url, _) = stub_server(vec![4, 5], 0);
        let mut cfg = ServiceConfig::new(url);
        cfg.batch_size = 1;
        let err = embed_via_service(&recs(2), &cfg).unwrap_err();
        assert!(matches!(err, Error::DimensionDrift { expected: 4, found: 5 }));
        assert!(err.to_string().contains("dimension drift"));
    }

    #[test]
    fn service_retries_then_succeeds() {
        let (url, hits) = stub_server(vec![3], 2);
        let mut cfg = ServiceConfig::new(url);
        cfg.initial_backoff = Duration::from_millis(5);
        let out = embed_via_service(&recs(3), &cfg).unwrap();
        assert_eq!(out.n(), 3);
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn service_gives_up_with_pub_id() {
        let (url, _) = stub_server(vec![3], usize::MAX);
        let mut cfg = ServiceConfig::new(url);
        cfg.initial_backoff = Duration::from_millis(1);
        cfg.max_retries = 2;
        match embed_via_service(&recs(2), &cfg) {
            Err(Error::Service { pub_id, .. }) => assert_eq!(pub_id, "P0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn service_order_preserved_with_workers() {
        let (url, _) = stub_server(vec![2], 0);
        let mut cfg = ServiceConfig::new(url);
        cfg.batch_size = 2;
        cfg.workers = 3;
        let out = embed_via_service(&recs(9), &cfg).unwrap();
        for i in 0..9 {
            assert_eq!(out.row(i)[0], (i + 1 + 4) as f32);
        }
    }
}
