//! Binary snapshots of the engine state.
//!
//! Layout (all integers and reals little-endian, reals as IEEE-754 binary64):
//!
//! ```text
//! magic     8 bytes  "MNEMOSNP"
//! version   u32      1
//! params    str      parameters as JSON, fields in declaration order
//! nodes     u64 count, then node records
//! edges     u64 count, then edge records
//! archive   nodes section, edges section
//! counters  u64 turns, u64 consolidations, u64 next id
//! prior     u64 computed_at, f64 damping, u64 iterations, f64 tolerance,
//!           u64 iterations run, u64 count, then (u64 id, f64 score) pairs
//! trailer   32 bytes SHA-256 over every preceding byte
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8. A node record is
//! `u8 kind, u64 id, u32 dormancy streak`, then for episodes
//! `f64 timestamp, str content, vec embedding` and for concepts
//! `str name, u8 category, f64 confidence, u32 count + str attributes,
//! vec embedding`. `vec` is a u32 length followed by f64 components. An
//! edge record is `u64 src, u64 dst, u8 kind, f64 weight, u64 created_at`.
//! Nodes and edges are written in key order, so equal states encode to
//! equal bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::embedding::Embedding;
use crate::error::PersistError;
use crate::extract::Category;
use crate::graph::{
    Archive, Edge, EdgeKind, EpisodicNode, MemoryGraph, Node, NodeId, SemanticNode,
};
use crate::params::HyperParams;
use crate::prior::StructuralPrior;

pub const MAGIC: &[u8; 8] = b"MNEMOSNP";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

/// Everything a snapshot stores. The lexical index is rebuilt on load.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub params: HyperParams,
    pub graph: MemoryGraph,
    pub prior: StructuralPrior,
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
    bad_real: Option<&'static str>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64, what: &'static str) {
        if !v.is_finite() && self.bad_real.is_none() {
            self.bad_real = Some(what);
        }
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn vec(&mut self, e: &Embedding) {
        self.u32(e.dim() as u32);
        for &c in e.as_slice() {
            self.f64(c, "embedding component");
        }
    }

    fn nodes<'a>(&mut self, nodes: impl ExactSizeIterator<Item = &'a Node>) {
        self.u64(nodes.len() as u64);
        for n in nodes {
            match n {
                Node::Episodic(e) => {
                    self.u8(0);
                    self.u64(e.id.0);
                    self.u32(e.dormancy_streak);
                    self.f64(e.timestamp, "timestamp");
                    self.str(&e.content);
                    self.vec(&e.embedding);
                }
                Node::Semantic(s) => {
                    self.u8(1);
                    self.u64(s.id.0);
                    self.u32(s.dormancy_streak);
                    self.str(&s.name);
                    self.u8(s.category.code());
                    self.f64(s.confidence, "confidence");
                    self.u32(s.attributes.len() as u32);
                    for a in &s.attributes {
                        self.str(a);
                    }
                    self.vec(&s.embedding);
                }
            }
        }
    }

    fn edges<'a>(&mut self, edges: impl ExactSizeIterator<Item = &'a Edge>) {
        self.u64(edges.len() as u64);
        for e in edges {
            self.u64(e.src.0);
            self.u64(e.dst.0);
            self.u8(e.kind.code());
            self.f64(e.weight, "edge weight");
            self.u64(e.created_at);
        }
    }

    fn graph(&mut self, g: &MemoryGraph) {
        self.nodes(g.nodes_map().values());
        self.edges(g.edges_map().values());
        self.nodes(g.archive().nodes.values());
        self.edges(g.archive().edges.values());
        self.u64(g.turn_counter());
        self.u64(g.consolidation_counter());
        self.u64(g.next_id());
    }

    fn finish(self) -> Result<Vec<u8>, PersistError> {
        match self.bad_real {
            Some(what) => Err(PersistError::Integrity(format!("non-finite {what}"))),
            None => Ok(self.buf),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PersistError> {
        if self.buf.len() - self.pos < n {
            return Err(PersistError::Truncated(format!(
                "while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8, PersistError> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self, what: &str) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self, what: &str) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
    fn str(&mut self, what: &str) -> Result<String, PersistError> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| PersistError::Integrity(format!("{what} is not UTF-8")))
    }
    fn count(&mut self, what: &str) -> Result<usize, PersistError> {
        let n = self.u64(what)?;
        usize::try_from(n)
            .map_err(|_| PersistError::Integrity(format!("{what} count {n} too large")))
    }
    fn vec(&mut self) -> Result<Embedding, PersistError> {
        let n = self.u32("embedding length")? as usize;
        let raw = self.take(n.saturating_mul(8), "embedding")?;
        let comps = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Embedding::from_unit(comps)
            .map_err(|_| PersistError::Integrity("embedding is not unit-norm".into()))
    }

    fn nodes(&mut self) -> Result<Vec<Node>, PersistError> {
        let n = self.count("node count")?;
        let mut out = Vec::with_capacity(n.min(self.buf.len() / 16));
        for _ in 0..n {
            let kind = self.u8("node kind")?;
            let id = NodeId(self.u64("node id")?);
            let dormancy_streak = self.u32("dormancy streak")?;
            out.push(match kind {
                0 => Node::Episodic(EpisodicNode {
                    id,
                    dormancy_streak,
                    timestamp: self.f64("timestamp")?,
                    content: self.str("content")?,
                    embedding: self.vec()?,
                }),
                1 => {
                    let name = self.str("name")?;
                    let code = self.u8("category")?;
                    let category = Category::from_code(code).ok_or_else(|| {
                        PersistError::Integrity(format!("unknown category code {code}"))
                    })?;
                    let confidence = self.f64("confidence")?;
                    let k = self.u32("attribute count")? as usize;
                    let mut attributes = Vec::with_capacity(k.min(1024));
                    for _ in 0..k {
                        attributes.push(self.str("attribute")?);
                    }
                    Node::Semantic(SemanticNode {
                        id,
                        name,
                        category,
                        embedding: self.vec()?,
                        attributes,
                        confidence,
                        dormancy_streak,
                    })
                }
                k => return Err(PersistError::Integrity(format!("unknown node kind {k}"))),
            });
        }
        Ok(out)
    }

    fn edges(&mut self) -> Result<Vec<Edge>, PersistError> {
        let n = self.count("edge count")?;
        let mut out = Vec::with_capacity(n.min(self.buf.len() / 33));
        for _ in 0..n {
            let src = NodeId(self.u64("edge src")?);
            let dst = NodeId(self.u64("edge dst")?);
            let code = self.u8("edge kind")?;
            let kind = EdgeKind::from_code(code)
                .ok_or_else(|| PersistError::Integrity(format!("unknown edge kind {code}")))?;
            out.push(Edge {
                src,
                dst,
                kind,
                weight: self.f64("edge weight")?,
                created_at: self.u64("created_at")?,
            });
        }
        Ok(out)
    }
}

/// Canonical bytes of a graph alone (nodes, edges, archive, counters).
pub fn canonical_graph_bytes(graph: &MemoryGraph) -> Vec<u8> {
    let mut w = Writer::default();
    w.graph(graph);
    w.buf
}

pub fn encode_snapshot(snap: &Snapshot) -> Result<Vec<u8>, PersistError> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    let params =
        serde_json::to_string(&snap.params).map_err(|e| PersistError::Integrity(e.to_string()))?;
    w.str(&params);
    w.graph(&snap.graph);
    let p = &snap.prior;
    w.u64(p.computed_at);
    w.f64(p.damping, "damping");
    w.u64(p.iterations as u64);
    w.f64(p.tolerance, "tolerance");
    w.u64(p.iterations_run as u64);
    w.u64(p.scores.len() as u64);
    for (id, s) in &p.scores {
        w.u64(id.0);
        w.f64(*s, "prior score");
    }
    let mut buf = w.finish()?;
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn no_duplicates(nodes: &[Node], what: &str) -> Result<(), PersistError> {
    let mut seen = std::collections::BTreeSet::new();
    match nodes.iter().find(|n| !seen.insert(n.id())) {
        Some(n) => Err(PersistError::Integrity(format!(
            "duplicate {what} node id {}",
            n.id()
        ))),
        None => Ok(()),
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, PersistError> {
    if bytes.len() < MAGIC.len() {
        return Err(PersistError::Truncated(
            "file shorter than the header".into(),
        ));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(PersistError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let params_json = r.str("params")?;
    let params: HyperParams = serde_json::from_str(&params_json)
        .map_err(|e| PersistError::Integrity(format!("params: {e}")))?;
    let nodes = r.nodes()?;
    let edges = r.edges()?;
    let archived_nodes = r.nodes()?;
    let archived_edges = r.edges()?;
    let turns = r.u64("turn counter")?;
    let consolidations = r.u64("consolidation counter")?;
    let next_id = r.u64("next id")?;
    let computed_at = r.u64("prior computed_at")?;
    let damping = r.f64("prior damping")?;
    let iterations = r.count("prior iterations")?;
    let tolerance = r.f64("prior tolerance")?;
    let iterations_run = r.count("prior iterations run")?;
    let n = r.count("prior count")?;
    let mut scores = BTreeMap::new();
    for _ in 0..n {
        let id = NodeId(r.u64("prior id")?);
        scores.insert(id, r.f64("prior score")?);
    }
    let payload_end = r.pos;
    let rest = bytes.len() - payload_end;
    if rest < CHECKSUM_LEN {
        return Err(PersistError::Truncated("checksum trailer missing".into()));
    }
    if rest > CHECKSUM_LEN {
        return Err(PersistError::Integrity(format!(
            "{} unexpected bytes after payload",
            rest - CHECKSUM_LEN
        )));
    }
    if Sha256::digest(&bytes[..payload_end]).as_slice() != &bytes[payload_end..] {
        return Err(PersistError::Checksum);
    }

    no_duplicates(&nodes, "live")?;
    no_duplicates(&archived_nodes, "archived")?;
    let archive = Archive {
        nodes: archived_nodes.into_iter().map(|n| (n.id(), n)).collect(),
        edges: archived_edges.into_iter().map(|e| (e.key(), e)).collect(),
    };
    let graph = MemoryGraph::from_parts(nodes, edges, archive, turns, consolidations, next_id)
        .map_err(|e| PersistError::Integrity(e.to_string()))?;
    let prior = StructuralPrior {
        scores: BTreeMap::new(),
        normalized: BTreeMap::new(),
        computed_at,
        damping,
        iterations,
        tolerance,
        iterations_run,
    }
    .with_scores(scores);
    Ok(Snapshot {
        params,
        graph,
        prior,
    })
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

/// Write atomically: a temporary file in the same directory, synced, then
/// renamed over `path`. Returns the byte count.
pub fn save_snapshot(snap: &Snapshot, path: &Path) -> Result<u64, PersistError> {
    let bytes = encode_snapshot(snap)?;
    let tmp = temp_path(path);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(bytes.len() as u64)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, PersistError> {
    decode_snapshot(&fs::read(path)?)
}
