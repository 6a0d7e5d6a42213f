//! Conversational memory engine.
//!
//! Dialogue turns are stored as episodic nodes in a directed graph; periodic
//! consolidation distils semantic concept nodes from recent turns. Queries
//! seed energy into anchor nodes found by a lexical and a dense trigger, spread
//! it along edges with fan-out dilution and lateral inhibition, and rank nodes
//! by a fusion of similarity, activation and a PageRank prior. A confidence
//! gate rejects queries the memory cannot support.
//!
//! [`Engine`] bundles the pieces; each stage is also usable on its own.

pub mod activation;
pub mod conversation;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod eval;
pub mod extract;
pub mod graph;
pub mod lexical;
pub mod params;
pub mod persistence;
pub mod prior;
pub mod retrieval;
pub mod serve;
pub mod synth;
pub mod text;

pub use activation::{run_activation, ActivationState};
pub use embedding::{
    cosine_sim, EmbedderConfig, EmbedderMode, Embedding, EmbeddingProvider, HashEmbedder,
};
pub use engine::{Engine, EngineStats};
pub use error::{Error, Result};
pub use extract::{Category, ConceptExtractor, ExtractedEdgeHint, ExtractedItem, RuleExtractor};
pub use graph::{
    ConsolidationReport, Edge, EdgeKind, EpisodicNode, MemoryGraph, Node, NodeId, NodeKind,
    SemanticNode,
};
pub use lexical::LexicalIndex;
pub use params::{HyperParams, TimestampUnit};
pub use prior::StructuralPrior;
pub use retrieval::{retrieve, RetrievalCandidate, RetrievalResult, Verdict};
