use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Archive, Status};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: String,
    pub score: f64,
    pub status: Status,
    pub visit_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub format_version: u32,
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<TreeEdge>,
}

impl TreeDocument {
    /// Graphviz rendering; fill colour runs from white (score 0) to green
    /// (score 1), invalid designs are drawn dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph archive {\n  node [shape=box, style=filled];\n");
        for n in &self.nodes {
            let shade = (255.0 - n.score.clamp(0.0, 1.0) * 155.0).round() as u8;
            let style = match n.status {
                Status::Valid => "filled",
                Status::Invalid => "filled,dashed",
            };
            let _ = writeln!(
                out,
                "  \"{id}\" [label=\"{id}\\nscore={score:.3}\\nvisits={v}\", fillcolor=\"#{shade:02x}ff{shade:02x}\", style=\"{style}\"];",
                id = n.id,
                score = n.score,
                v = n.visit_count,
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", e.from, e.to);
        }
        out.push_str("}\n");
        out
    }
}

pub fn export_tree(archive: &Archive) -> TreeDocument {
    let nodes = archive
        .records()
        .iter()
        .map(|r| TreeNode {
            id: r.design_id.clone(),
            score: r.score,
            status: r.status,
            visit_count: r.visit_count,
        })
        .collect();
    let edges = archive
        .records()
        .iter()
        .filter_map(|r| {
            r.parent_id.as_ref().map(|p| TreeEdge {
                from: p.clone(),
                to: r.design_id.clone(),
            })
        })
        .collect();
    TreeDocument {
        format_version: FORMAT_VERSION,
        nodes,
        edges,
    }
}
