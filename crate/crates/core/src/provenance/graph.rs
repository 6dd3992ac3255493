use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{embed_sentence, render_edge, render_node, EdgeType, NodeType, ProvEdge, ProvNode};
use crate::error::{Error, Result};

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Event {
    Node {
        id: String,
        #[serde(rename = "type")]
        node_type: NodeType,
        #[serde(default, deserialize_with = "attr_map")]
        attrs: BTreeMap<String, String>,
    },
    Edge {
        id: String,
        #[serde(rename = "type")]
        edge_type: EdgeType,
        src: String,
        dst: String,
        #[serde(default, deserialize_with = "attr_map")]
        attrs: BTreeMap<String, String>,
        label: u8,
    },
}

/// Attribute values may be JSON strings, numbers or booleans; all are kept as text.
fn attr_map<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, String>, D::Error> {
    use serde::de::Error as _;
    let raw = BTreeMap::<String, serde_json::Value>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k, s)),
            serde_json::Value::Number(n) => Ok((k, n.to_string())),
            serde_json::Value::Bool(b) => Ok((k, b.to_string())),
            other => Err(D::Error::custom(format!("attribute '{k}' must be a scalar, got {other}"))),
        })
        .collect()
}

/// Read a JSON Lines event stream. Blank lines are skipped.
pub fn parse_events<R: BufRead>(reader: R) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<events>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| Error::Row { line: i as u64 + 1, message: e.to_string() })?;
        events.push(event);
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Load all node declarations before any edge, so edges may precede
    /// the nodes they reference.
    pub two_pass: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { two_pass: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProvenanceGraph {
    nodes: Vec<ProvNode>,
    node_index: HashMap<String, usize>,
    edges: Vec<ProvEdge>,
    edge_index: HashMap<String, usize>,
    endpoints: Vec<(usize, usize)>,
    /// Per node: `(edge index, neighbor node index)`, ascending by edge index.
    adjacency: Vec<Vec<(usize, usize)>>,
}

fn check_attrs(required: &[&str], attrs: &BTreeMap<String, String>, what: &str) -> Result<()> {
    if let Some(extra) = attrs.keys().find(|k| !required.contains(&k.as_str())) {
        return Err(Error::Graph(format!("{what}: unexpected attribute '{extra}'")));
    }
    Ok(())
}

pub fn build_graph(events: &[Event], options: BuildOptions) -> Result<ProvenanceGraph> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut dangling = Vec::new();

    let mut add_node = |id: &String, node_type: NodeType, attrs: &BTreeMap<String, String>, nodes: &mut Vec<ProvNode>| -> Result<()> {
        if !seen.insert(id.clone()) {
            return Err(Error::Graph(format!("duplicate node id '{id}'")));
        }
        let sentence = render_node(node_type, attrs, id)?;
        check_attrs(node_type.required_attrs(), attrs, &format!("node {id}"))?;
        nodes.push(ProvNode { id: id.clone(), node_type, attrs: attrs.clone(), embedding: embed_sentence(&sentence) });
        Ok(())
    };

    if options.two_pass {
        for ev in events {
            if let Event::Node { id, node_type, attrs } = ev {
                add_node(id, *node_type, attrs, &mut nodes)?;
            }
        }
    }
    for ev in events {
        match ev {
            Event::Node { id, node_type, attrs } => {
                if !options.two_pass {
                    add_node(id, *node_type, attrs, &mut nodes)?;
                }
            }
            Event::Edge { id, edge_type, src, dst, attrs, label } => {
                if !options.two_pass {
                    for end in [src, dst] {
                        if !nodes.iter().any(|n: &ProvNode| &n.id == end) {
                            dangling.push(format!("{id}->{end}"));
                        }
                    }
                }
                if *label > 1 {
                    return Err(Error::Graph(format!("edge {id}: label must be 0 or 1, got {label}")));
                }
                let sentence = render_edge(*edge_type, attrs, id)?;
                check_attrs(edge_type.required_attrs(), attrs, &format!("edge {id}"))?;
                edges.push(ProvEdge {
                    id: id.clone(),
                    edge_type: *edge_type,
                    src: src.clone(),
                    dst: dst.clone(),
                    attrs: attrs.clone(),
                    embedding: embed_sentence(&sentence),
                    label: *label,
                });
            }
        }
    }
    if !dangling.is_empty() {
        return Err(Error::Graph(format!("edges reference undeclared nodes: {}", dangling.join(", "))));
    }
    ProvenanceGraph::from_parts(nodes, edges)
}

impl ProvenanceGraph {
    /// Assemble a graph, checking id uniqueness and edge endpoints.
    pub fn from_parts(nodes: Vec<ProvNode>, edges: Vec<ProvEdge>) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate node id '{}'", n.id)));
            }
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut endpoints = Vec::with_capacity(edges.len());
        let mut missing = Vec::new();
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id.clone(), i).is_some() {
                return Err(Error::Graph(format!("duplicate edge id '{}'", e.id)));
            }
            match (node_index.get(&e.src), node_index.get(&e.dst)) {
                (Some(&s), Some(&d)) => endpoints.push((s, d)),
                (s, d) => {
                    if s.is_none() {
                        missing.push(format!("{}->{}", e.id, e.src));
                    }
                    if d.is_none() {
                        missing.push(format!("{}->{}", e.id, e.dst));
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Graph(format!("edges reference unknown nodes: {}", missing.join(", "))));
        }
        let adjacency = Self::adjacency_from(nodes.len(), &endpoints);
        Ok(Self { nodes, node_index, edges, edge_index, endpoints, adjacency })
    }

    fn adjacency_from(n: usize, endpoints: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); n];
        for (e, &(s, d)) in endpoints.iter().enumerate() {
            adj[s].push((e, d));
            if s != d {
                adj[d].push((e, s));
            }
        }
        adj
    }

    /// Recompute adjacency from the edge list.
    pub fn rebuild_adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        Self::adjacency_from(self.nodes.len(), &self.endpoints)
    }

    pub fn nodes(&self) -> &[ProvNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ProvEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_position(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn edge_position(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    /// `(src, dst)` node indices of every edge.
    pub fn endpoints(&self) -> &[(usize, usize)] {
        &self.endpoints
    }

    pub fn adjacency(&self) -> &[Vec<(usize, usize)>] {
        &self.adjacency
    }

    pub fn edge_labels(&self) -> Vec<u8> {
        self.edges.iter().map(|e| e.label).collect()
    }

    /// Node indices within `k` undirected hops of the edge's endpoints.
    fn khop_nodes(&self, edge: usize, k: usize) -> Vec<bool> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::new();
        let (s, d) = self.endpoints[edge];
        for v in [s, d] {
            if dist[v] == usize::MAX {
                dist[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            if dist[v] == k {
                continue;
            }
            for &(_, u) in &self.adjacency[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist.into_iter().map(|x| x != usize::MAX).collect()
    }

    /// Induced subgraph on every node within `k` undirected hops of the
    /// queried edge's endpoints.
    pub fn khop_subgraph(&self, edge_id: &str, k: usize) -> Result<ProvenanceGraph> {
        let edge = self.edge_position(edge_id).ok_or_else(|| Error::Graph(format!("unknown edge id '{edge_id}'")))?;
        if k == 0 {
            return Err(Error::InvalidArgument("hop count must be at least 1".into()));
        }
        let keep = self.khop_nodes(edge, k);
        let nodes: Vec<ProvNode> = self.nodes.iter().zip(&keep).filter(|(_, &k)| k).map(|(n, _)| n.clone()).collect();
        let edges: Vec<ProvEdge> = self
            .edges
            .iter()
            .zip(&self.endpoints)
            .filter(|(_, &(s, d))| keep[s] && keep[d])
            .map(|(e, _)| e.clone())
            .collect();
        ProvenanceGraph::from_parts(nodes, edges)
    }

    /// Subgraph holding the given edges and their endpoints, in original order.
    pub fn edge_subgraph(&self, edge_indices: &[usize]) -> ProvenanceGraph {
        let mut keep_edge = vec![false; self.edges.len()];
        let mut keep_node = vec![false; self.nodes.len()];
        for &e in edge_indices {
            keep_edge[e] = true;
            let (s, d) = self.endpoints[e];
            keep_node[s] = true;
            keep_node[d] = true;
        }
        let nodes = self.nodes.iter().zip(&keep_node).filter(|(_, &k)| k).map(|(n, _)| n.clone()).collect();
        let edges = self.edges.iter().zip(&keep_edge).filter(|(_, &k)| k).map(|(e, _)| e.clone()).collect();
        ProvenanceGraph::from_parts(nodes, edges).expect("subgraph of a valid graph is valid")
    }

    pub fn to_archive(&self) -> GraphArchive {
        GraphArchive {
            format_version: GraphArchive::VERSION,
            nodes: self
                .nodes
                .iter()
                .map(|n| ArchivedNode { id: n.id.clone(), node_type: n.node_type, attrs: n.attrs.clone() })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| ArchivedEdge {
                    id: e.id.clone(),
                    edge_type: e.edge_type,
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    attrs: e.attrs.clone(),
                    label: e.label,
                })
                .collect(),
        }
    }

    /// Rebuild from an archive; embeddings are recomputed from the attributes.
    pub fn from_archive(archive: &GraphArchive) -> Result<Self> {
        if archive.format_version != GraphArchive::VERSION {
            return Err(Error::Graph(format!("unsupported graph archive version {}", archive.format_version)));
        }
        let events: Vec<Event> = archive
            .nodes
            .iter()
            .map(|n| Event::Node { id: n.id.clone(), node_type: n.node_type, attrs: n.attrs.clone() })
            .chain(archive.edges.iter().map(|e| Event::Edge {
                id: e.id.clone(),
                edge_type: e.edge_type,
                src: e.src.clone(),
                dst: e.dst.clone(),
                attrs: e.attrs.clone(),
                label: e.label,
            }))
            .collect();
        build_graph(&events, BuildOptions::default())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_archive(&crate::fsutil::read_json(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::fsutil::write_json(path, &self.to_archive())
    }

    /// Graphviz rendering with caller-supplied labels. The highlighted edge is drawn red.
    pub fn to_dot(
        &self,
        node_label: impl Fn(usize) -> String,
        edge_label: impl Fn(usize) -> String,
        highlight: Option<usize>,
    ) -> String {
        let mut out = String::from("digraph provenance {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "  \"{}\" [label=\"{}\\n{}\"];", esc(&n.id), esc(&n.id), esc(&node_label(i)));
        }
        for (i, e) in self.edges.iter().enumerate() {
            let color = if highlight == Some(i) { ", color=red, penwidth=2" } else { "" };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"{}];",
                esc(&e.src),
                esc(&e.dst),
                esc(&edge_label(i)),
                color
            );
        }
        out.push_str("}\n");
        out
    }
}

fn esc(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// On-disk graph form. Embeddings are derived data and are not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArchive {
    pub format_version: u32,
    pub nodes: Vec<ArchivedNode>,
    pub edges: Vec<ArchivedEdge>,
}

impl GraphArchive {
    pub const VERSION: u32 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedNode {
    pub id: String,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivedEdge {
    pub id: String,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    pub src: String,
    pub dst: String,
    pub attrs: BTreeMap<String, String>,
    pub label: u8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subject(id: &str) -> String {
        format!(r#"{{"kind":"node","id":"{id}","type":"SUBJECT","attrs":{{"sub_type":"process"}}}}"#)
    }

    fn edge(id: &str, src: &str, dst: &str) -> String {
        format!(r#"{{"kind":"edge","id":"{id}","type":"MODIFY_PROCESS","src":"{src}","dst":"{dst}","attrs":{{"exec":"imapd"}},"label":0}}"#)
    }

    fn graph(lines: &[String]) -> Result<ProvenanceGraph> {
        let events = parse_events(lines.join("\n").as_bytes())?;
        build_graph(&events, BuildOptions::default())
    }

    /// Breadth-first enumeration on an explicit undirected edge list, independent
    /// of the graph's adjacency structure.
    fn bfs_oracle(n: usize, edges: &[(usize, usize)], q: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
        let mut reach: Vec<usize> = vec![edges[q].0, edges[q].1];
        let mut frontier = reach.clone();
        for _ in 0..k {
            let mut next = Vec::new();
            for &(a, b) in edges {
                for (x, y) in [(a, b), (b, a)] {
                    if frontier.contains(&x) && !reach.contains(&y) && !next.contains(&y) {
                        next.push(y);
                    }
                }
            }
            reach.extend(&next);
            frontier = next;
        }
        let mut nodes: Vec<usize> = (0..n).filter(|v| reach.contains(v)).collect();
        nodes.dedup();
        let es = (0..edges.len()).filter(|&e| reach.contains(&edges[e].0) && reach.contains(&edges[e].1)).collect();
        (nodes, es)
    }

    #[test]
    fn two_nodes_one_edge() {
        let g = graph(&[subject("a"), subject("b"), edge("e", "a", "b")]).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert!(g.adjacency().iter().all(|l| l.len() == 1));
        assert_eq!(g.rebuild_adjacency(), g.adjacency());
    }

    #[test]
    fn dangling_edge_names_target() {
        let err = graph(&[subject("a"), edge("e", "a", "ghost")]).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn duplicate_node_rejected() {
        assert!(graph(&[subject("a"), subject("a")]).is_err());
    }

    #[test]
    fn single_pass_requires_declaration_order() {
        let lines = [edge("e", "a", "b"), subject("a"), subject("b")];
        let events = parse_events(lines.join("\n").as_bytes()).unwrap();
        assert!(build_graph(&events, BuildOptions { two_pass: false }).is_err());
        assert!(build_graph(&events, BuildOptions { two_pass: true }).is_ok());
    }

    #[test]
    fn missing_and_extra_attributes() {
        let bad = r#"{"kind":"node","id":"f","type":"FILE","attrs":{}}"#.to_string();
        assert!(matches!(graph(&[bad]), Err(Error::Template { .. })));
        let extra = r#"{"kind":"node","id":"f","type":"FILE","attrs":{"sub_type":"dir","x":"1"}}"#.to_string();
        assert!(graph(&[extra]).is_err());
    }

    #[test]
    fn numeric_attributes_become_text() {
        let nf = r#"{"kind":"node","id":"n","type":"NET_FLOW","attrs":{"local_address":"10.0.0.1","local_port":80,"remote_address":"1.1.1.1","remote_port":4444}}"#.to_string();
        let g = graph(&[nf]).unwrap();
        assert_eq!(g.nodes()[0].attrs["local_port"], "80");
    }

    #[test]
    fn pipe_embedding_is_zero() {
        let pipe = r#"{"kind":"node","id":"p","type":"UNNAMED_PIPE"}"#.to_string();
        let g = graph(&[pipe]).unwrap();
        assert!(g.nodes()[0].embedding.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn khop_isolated_edge() {
        let g = graph(&[subject("a"), subject("b"), subject("c"), edge("e", "a", "b")]).unwrap();
        let s = g.khop_subgraph("e", 1).unwrap();
        assert_eq!(s.node_count(), 2);
        assert_eq!(s.edge_count(), 1);
        assert!(g.khop_subgraph("nope", 1).is_err());
    }

    #[test]
    fn khop_star() {
        let mut lines = vec![subject("c")];
        for i in 0..5 {
            lines.push(subject(&format!("l{i}")));
        }
        for i in 0..5 {
            lines.push(edge(&format!("e{i}"), "c", &format!("l{i}")));
        }
        let g = graph(&lines).unwrap();
        let s = g.khop_subgraph("e0", 1).unwrap();
        let (nodes, edges) = bfs_oracle(6, g.endpoints(), 0, 1);
        assert_eq!(s.edge_count(), 5);
        assert_eq!(s.edge_count(), edges.len());
        assert_eq!(s.node_count(), nodes.len());
    }

    #[test]
    fn khop_beyond_diameter_is_component() {
        let g = graph(&[
            subject("a"),
            subject("b"),
            subject("c"),
            subject("d"),
            subject("z"),
            edge("e1", "a", "b"),
            edge("e2", "b", "c"),
            edge("e3", "c", "d"),
        ])
        .unwrap();
        let s = g.khop_subgraph("e1", 10).unwrap();
        assert_eq!(s.node_count(), 4);
        assert_eq!(s.edge_count(), 3);
    }

    #[test]
    fn archive_round_trip() {
        let g = graph(&[subject("a"), subject("b"), edge("e", "a", "b")]).unwrap();
        let json = serde_json::to_string(&g.to_archive()).unwrap();
        let back = ProvenanceGraph::from_archive(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn dot_highlights_edge() {
        let g = graph(&[subject("a"), subject("b"), edge("e", "a", "b")]).unwrap();
        let dot = g.to_dot(|_| "score=1".into(), |_| "class=0".into(), Some(0));
        assert!(dot.contains("color=red"));
        assert!(dot.contains("\"a\" -> \"b\""));
    }

    proptest! {
        #[test]
        fn khop_matches_oracle_and_grows(raw in proptest::collection::vec((0usize..8, 0usize..8), 1..14), q in 0usize..14, k in 1usize..4) {
            let q = q % raw.len();
            let mut lines: Vec<String> = (0..8).map(|i| subject(&format!("n{i}"))).collect();
            for (i, (s, d)) in raw.iter().enumerate() {
                lines.push(edge(&format!("e{i}"), &format!("n{s}"), &format!("n{d}")));
            }
            let g = graph(&lines).unwrap();
            prop_assert_eq!(g.rebuild_adjacency(), g.adjacency().to_vec());
            let (nodes, edges) = bfs_oracle(8, g.endpoints(), q, k);
            let sub = g.khop_subgraph(&format!("e{q}"), k).unwrap();
            let sub_nodes: Vec<usize> = sub.nodes().iter().map(|n| g.node_position(&n.id).unwrap()).collect();
            let sub_edges: Vec<usize> = sub.edges().iter().map(|e| g.edge_position(&e.id).unwrap()).collect();
            prop_assert_eq!(&sub_nodes, &nodes);
            prop_assert_eq!(&sub_edges, &edges);
            prop_assert!(sub_edges.contains(&q));
            let bigger = g.khop_subgraph(&format!("e{q}"), k + 1).unwrap();
            for e in sub.edges() {
                prop_assert!(bigger.edge_position(&e.id).is_some());
            }
        }
    }
}
