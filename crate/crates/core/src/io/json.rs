//! JSON documents holding a graph, optional global motions and an optional
//! solver report.
//!
//! ```json
//! {
//!   "n_views": 2,
//!   "edges": [{ "i": 0, "j": 1, "r": [1,0,0, 0,1,0, 0,0,1], "t": [1,0,0] }],
//!   "globals": [{ "r": [...], "t": [...] }, ...],
//!   "report": { "mode": "mcc", "iterations_run": 3, "records": [...], ... }
//! }
//! ```
//!
//! Rotations are 9 numbers in row-major order. An edge may carry a `weight`
//! (default 1), used by the fixed-weights solver mode.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, GlobalMotionSet, GraphError, MotionGraph, RelativeMotionEdge};
use crate::se3::{Motion, MOTION_TOLERANCE};
use crate::solver::SolveReport;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct JsonError {
    /// Location of the offending field, e.g. `edges[3].r`.
    pub path: String,
    pub message: String,
}

impl JsonError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub r: [f64; 9],
    pub t: [f64; 3],
}

impl From<&Motion> for MotionRecord {
    fn from(m: &Motion) -> Self {
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[3 * row + col] = m.r[(row, col)];
            }
        }
        Self {
            r,
            t: [m.t[0], m.t[1], m.t[2]],
        }
    }
}

impl From<&MotionRecord> for Motion {
    fn from(rec: &MotionRecord) -> Self {
        Motion::new(
            Matrix3::from_row_slice(&rec.r),
            Vector3::from_column_slice(&rec.t),
        )
    }
}

fn unit_weight() -> f64 {
    1.0
}

fn is_unit(w: &f64) -> bool {
    *w == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub r: [f64; 9],
    pub t: [f64; 3],
    #[serde(default = "unit_weight", skip_serializing_if = "is_unit")]
    pub weight: f64,
}

/// Serialized form; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub n_views: usize,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub globals: Option<Vec<MotionRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SolveReport>,
}

/// Validated document contents.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionDocument {
    pub graph: MotionGraph,
    pub globals: Option<GlobalMotionSet>,
    pub report: Option<SolveReport>,
}

fn graph_error_path(e: &GraphError) -> String {
    match *e {
        GraphError::IndexOutOfRange { edge, i, n_views, .. } => {
            let field = if i >= n_views { "i" } else { "j" };
            format!("edges[{edge}].{field}")
        }
        GraphError::SelfLoop { edge, .. } => format!("edges[{edge}].j"),
        GraphError::DuplicateEdge { edge, .. } => format!("edges[{edge}]"),
        GraphError::InvalidMotion { edge, .. } => format!("edges[{edge}].r"),
        GraphError::InvalidWeight { edge, .. } => format!("edges[{edge}].weight"),
        GraphError::InvalidGlobal { view, .. } => format!("globals[{view}].r"),
        _ => ".".to_string(),
    }
}

/// Parses and validates a document. Schema errors carry the path of the
/// offending field.
pub fn parse_json(text: &str) -> Result<MotionDocument, JsonError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let record: DocumentRecord = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        JsonError::at(path, e.into_inner().to_string())
    })?;

    let edges = record
        .edges
        .iter()
        .map(|e| {
            let rec = MotionRecord { r: e.r, t: e.t };
            RelativeMotionEdge::weighted(e.i, e.j, Motion::from(&rec), e.weight)
        })
        .collect();
    let graph = build_graph(record.n_views, edges)
        .map_err(|e| JsonError::at(graph_error_path(&e), e.to_string()))?;

    let globals = match record.globals {
        None => None,
        Some(list) => {
            if list.len() != record.n_views {
                return Err(JsonError::at(
                    "globals",
                    format!("expected {} motions, found {}", record.n_views, list.len()),
                ));
            }
            let set: GlobalMotionSet = list.iter().map(Motion::from).collect();
            for (v, m) in set.iter().enumerate() {
                m.validate(MOTION_TOLERANCE)
                    .map_err(|d| JsonError::at(format!("globals[{v}].r"), d.to_string()))?;
            }
            Some(set)
        }
    };

    if let Some(report) = &record.report {
        if report.final_weights.len() != graph.n_edges() && !report.final_weights.is_empty() {
            return Err(JsonError::at(
                "report.final_weights",
                format!("expected {} weights, found {}", graph.n_edges(), report.final_weights.len()),
            ));
        }
    }

    Ok(MotionDocument {
        graph,
        globals,
        report: record.report,
    })
}

pub fn to_record(g: &MotionGraph, globals: Option<&GlobalMotionSet>, report: Option<&SolveReport>) -> DocumentRecord {
    DocumentRecord {
        n_views: g.n_views(),
        edges: g
            .edges()
            .iter()
            .map(|e| {
                let m = MotionRecord::from(&e.measurement);
                EdgeRecord {
                    i: e.i,
                    j: e.j,
                    r: m.r,
                    t: m.t,
                    weight: e.weight,
                }
            })
            .collect(),
        globals: globals.map(|set| set.iter().map(MotionRecord::from).collect()),
        report: report.cloned(),
    }
}

/// Pretty-printed document. Floats use the shortest representation that
/// parses back to the identical value.
pub fn write_json(g: &MotionGraph, globals: Option<&GlobalMotionSet>, report: Option<&SolveReport>) -> String {
    let mut text = serde_json::to_string_pretty(&to_record(g, globals, report)).expect("document is serializable");
    text.push('\n');
    text
}
