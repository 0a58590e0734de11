//! Graph text format: one JSON object, one node or edge per line.
//!
//! ```text
//! {"version":1,"num_labels":3,"num_transitions":1,
//!  "nodes":[{"id":0,"label":-1},
//!   {"id":1,"label":0},
//!   ...],
//!  "edges":[{"src":0,"dst":1,"w":1.0,"trans":0},
//!   ...]}
//! ```

use serde::{Deserialize, Serialize};

use super::{Edge, LabelGraph};
use crate::{Error, Result};

const VERSION: u32 = 1;
const NON_EMITTING: i64 = -1;

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    label: i64,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: usize,
    dst: usize,
    w: f64,
    trans: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    num_labels: usize,
    num_transitions: usize,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

pub fn serialize_graph(g: &LabelGraph) -> String {
    let mut out = format!(
        "{{\"version\":{VERSION},\"num_labels\":{},\"num_transitions\":{},\n \"nodes\":[",
        g.num_labels, g.num_transitions
    );
    for (id, label) in g.labels.iter().enumerate() {
        let rec = NodeRecord {
            id,
            label: label.map_or(NON_EMITTING, |l| l as i64),
        };
        if id > 0 {
            out.push_str(",\n  ");
        }
        out.push_str(&serde_json::to_string(&rec).expect("node record serializes"));
    }
    out.push_str("],\n \"edges\":[");
    for (i, e) in g.edges.iter().enumerate() {
        let rec = EdgeRecord {
            src: e.src,
            dst: e.dst,
            w: e.weight,
            trans: e.trans,
        };
        if i > 0 {
            out.push_str(",\n  ");
        }
        out.push_str(&serde_json::to_string(&rec).expect("edge record serializes"));
    }
    out.push_str("]}\n");
    out
}

/// Parses and validates a graph document.
pub fn deserialize_graph(text: &str) -> Result<LabelGraph> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| Error::GraphFormat(e.to_string()))?;
    if doc.version != VERSION {
        return Err(Error::GraphFormat(format!(
            "unsupported version {}",
            doc.version
        )));
    }
    let n = doc.nodes.len();
    let mut labels: Vec<Option<Option<usize>>> = vec![None; n];
    for rec in &doc.nodes {
        if rec.id >= n {
            return Err(Error::GraphFormat(format!(
                "node id {} out of range for {n} nodes",
                rec.id
            )));
        }
        if labels[rec.id].is_some() {
            return Err(Error::GraphFormat(format!("duplicate node id {}", rec.id)));
        }
        let label = match rec.label {
            NON_EMITTING => None,
            l if l >= 0 => Some(l as usize),
            l => {
                return Err(Error::GraphFormat(format!(
                    "node {}: bad label {l}",
                    rec.id
                )))
            }
        };
        labels[rec.id] = Some(label);
    }
    let graph = LabelGraph {
        num_labels: doc.num_labels,
        num_transitions: doc.num_transitions,
        // ids are a permutation of 0..n here, every slot is filled
        labels: labels.into_iter().map(Option::unwrap).collect(),
        edges: doc
            .edges
            .into_iter()
            .map(|e| Edge {
                src: e.src,
                dst: e.dst,
                weight: e.w,
                trans: e.trans,
            })
            .collect(),
    };
    graph.validate().into_result()?;
    Ok(graph)
}
