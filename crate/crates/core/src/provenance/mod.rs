//! Provenance graphs: system objects as nodes, audited events as edges.
//!
//! Node and edge attributes are rendered to sentences and hashed into
//! [`EMBEDDING_DIM`]-wide vectors, which become the GNN input features.

mod embed;
mod graph;
mod sentence;

pub use embed::{embed_sentence, fnv1a64, tokenize, EMBEDDING_DIM};
pub use graph::{build_graph, parse_events, BuildOptions, Event, GraphArchive, ProvenanceGraph};
pub use sentence::{render_edge, render_node};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeType {
    NetFlow,
    File,
    Subject,
    UnnamedPipe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeType {
    Execute,
    Accept,
    ModifyProcess,
    CreateObject,
    Rename,
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeType::NetFlow => "NET_FLOW",
            NodeType::File => "FILE",
            NodeType::Subject => "SUBJECT",
            NodeType::UnnamedPipe => "UNNAMED_PIPE",
        })
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeType::Execute => "EXECUTE",
            EdgeType::Accept => "ACCEPT",
            EdgeType::ModifyProcess => "MODIFY_PROCESS",
            EdgeType::CreateObject => "CREATE_OBJECT",
            EdgeType::Rename => "RENAME",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvNode {
    pub id: String,
    pub node_type: NodeType,
    pub attrs: BTreeMap<String, String>,
    pub embedding: Vec<f64>,
}

impl ProvNode {
    pub fn sentence(&self) -> crate::Result<String> {
        render_node(self.node_type, &self.attrs, &self.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvEdge {
    pub id: String,
    pub edge_type: EdgeType,
    pub src: String,
    pub dst: String,
    pub attrs: BTreeMap<String, String>,
    pub embedding: Vec<f64>,
    pub label: u8,
}

impl ProvEdge {
    pub fn sentence(&self) -> crate::Result<String> {
        render_edge(self.edge_type, &self.attrs, &self.id)
    }
}
