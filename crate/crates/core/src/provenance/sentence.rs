//! Sentence templates for provenance nodes and edges.

use std::collections::BTreeMap;

use super::{EdgeType, NodeType};
use crate::error::{Error, Result};

impl NodeType {
    /// Attribute keys the sentence template consumes.
    pub fn required_attrs(self) -> &'static [&'static str] {
        match self {
            NodeType::NetFlow => &["local_address", "local_port", "remote_address", "remote_port"],
            NodeType::File | NodeType::Subject => &["sub_type"],
            NodeType::UnnamedPipe => &[],
        }
    }

    fn template(self) -> &'static str {
        match self {
            NodeType::NetFlow => {
                "A \"net_flow\" node has a local address of {{local_address}}, a local port of {{local_port}}, \
                 a remote address of {{remote_address}}, and a remote port of {{remote_port}}."
            }
            NodeType::File => "A \"file\" node has the subtype of \"{{sub_type}}\".",
            NodeType::Subject => "A \"subject\" node has the subtype of \"{{sub_type}}\".",
            NodeType::UnnamedPipe => "",
        }
    }
}

impl EdgeType {
    pub fn required_attrs(self) -> &'static [&'static str] {
        match self {
            EdgeType::Execute => &["exec", "cmd_line"],
            EdgeType::Accept => &["address", "port", "exec"],
            EdgeType::ModifyProcess | EdgeType::CreateObject | EdgeType::Rename => &["exec"],
        }
    }

    fn template(self) -> &'static str {
        match self {
            EdgeType::Execute => {
                "A \"execute\" edge executed the \"{{exec}}\" program, and its command line is \"{{cmd_line}}\"."
            }
            EdgeType::Accept => {
                "An \"rename\" edge accepted the connection from {{address}} with the port of {{port}}, \
                 and it executed the \"{{exec}}\" program."
            }
            EdgeType::ModifyProcess => "An \"modify_process\" edge executed the \"{{exec}}\" program.",
            EdgeType::CreateObject => "An \"create_object\" edge executed the \"{{exec}}\" program.",
            EdgeType::Rename => "An \"rename\" edge executed the \"{{exec}}\" program.",
        }
    }
}

/// Substitute `{{key}}` placeholders verbatim. `kind`/`id` only label errors.
fn instantiate(template: &str, attrs: &BTreeMap<String, String>, kind: &str, id: &str) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").expect("templates are well formed");
        let key = &after[..end];
        let value = attrs.get(key).ok_or_else(|| Error::Template {
            kind: kind.to_string(),
            id: id.to_string(),
            key: key.to_string(),
        })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_node(node_type: NodeType, attrs: &BTreeMap<String, String>, id: &str) -> Result<String> {
    instantiate(node_type.template(), attrs, &format!("{node_type} node"), id)
}

pub fn render_edge(edge_type: EdgeType, attrs: &BTreeMap<String, String>, id: &str) -> Result<String> {
    instantiate(edge_type.template(), attrs, &format!("{edge_type} edge"), id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn file_node() {
        let s = render_node(NodeType::File, &attrs(&[("sub_type", "dir")]), "n1").unwrap();
        assert_eq!(s, "A \"file\" node has the subtype of \"dir\".");
    }

    #[test]
    fn unnamed_pipe_is_empty() {
        assert_eq!(render_node(NodeType::UnnamedPipe, &BTreeMap::new(), "p").unwrap(), "");
    }

    #[test]
    fn modify_process_edge() {
        let s = render_edge(EdgeType::ModifyProcess, &attrs(&[("exec", "imapd")]), "e1").unwrap();
        assert_eq!(s, "An \"modify_process\" edge executed the \"imapd\" program.");
    }

    #[test]
    fn net_flow_node() {
        let a = attrs(&[
            ("local_address", "10.0.0.5"),
            ("local_port", "80"),
            ("remote_address", "1.2.3.4"),
            ("remote_port", "51000"),
        ]);
        assert_eq!(
            render_node(NodeType::NetFlow, &a, "nf").unwrap(),
            "A \"net_flow\" node has a local address of 10.0.0.5, a local port of 80, \
             a remote address of 1.2.3.4, and a remote port of 51000."
        );
    }

    #[test]
    fn accept_and_execute_edges() {
        let a = attrs(&[("address", "1.2.3.4"), ("port", "22"), ("exec", "sshd")]);
        assert_eq!(
            render_edge(EdgeType::Accept, &a, "e").unwrap(),
            "An \"rename\" edge accepted the connection from 1.2.3.4 with the port of 22, and it executed the \"sshd\" program."
        );
        let a = attrs(&[("exec", "sh"), ("cmd_line", "sh -c ls")]);
        assert_eq!(
            render_edge(EdgeType::Execute, &a, "e").unwrap(),
            "A \"execute\" edge executed the \"sh\" program, and its command line is \"sh -c ls\"."
        );
    }

    #[test]
    fn missing_attribute_names_key() {
        let err = render_edge(EdgeType::Execute, &attrs(&[("exec", "sh")]), "e9").unwrap_err();
        match err {
            Error::Template { key, id, .. } => {
                assert_eq!(key, "cmd_line");
                assert_eq!(id, "e9");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
