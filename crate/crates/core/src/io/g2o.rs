//! Subset of the g2o text format: `VERTEX_SE3:QUAT` and `EDGE_SE3:QUAT`.
//!
//! ```text
//! VERTEX_SE3:QUAT id tx ty tz qx qy qz qw
//! EDGE_SE3:QUAT   i j tx ty tz qx qy qz qw [21 upper-triangular information entries]
//! ```
//!
//! Vertex ids that already cover `0..N` are kept; any other id set is
//! remapped to `0..N` in order of first appearance. The information matrix is
//! read and discarded; the writer emits an identity.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use super::quat::{quaternion_to_rotation, rotation_to_quaternion, NonUnitQuaternion};
use crate::graph::{build_graph, GlobalMotionSet, GraphError, MotionGraph, RelativeMotionEdge};
use crate::se3::Motion;

const VERTEX_TAG: &str = "VERTEX_SE3:QUAT";
const EDGE_TAG: &str = "EDGE_SE3:QUAT";
const INFO_ENTRIES: usize = 21;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum G2oErrorKind {
    #[error("{0}")]
    Malformed(String),
    #[error("cannot parse {token:?} as {expected}")]
    BadNumber { token: String, expected: &'static str },
    #[error(transparent)]
    NonUnitQuaternion(#[from] NonUnitQuaternion),
    #[error("vertex {0} defined twice")]
    DuplicateVertex(i64),
    #[error("vertex {0} is referenced but never defined while other vertices are")]
    MissingVertex(i64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct G2oError {
    /// 1-based line number.
    pub line: usize,
    pub kind: G2oErrorKind,
}

/// Parsed g2o content.
#[derive(Debug, Clone, PartialEq)]
pub struct G2oDocument {
    pub graph: MotionGraph,
    /// Present when the file defines vertices.
    pub globals: Option<GlobalMotionSet>,
    /// Original vertex id of each dense view index.
    pub ids: Vec<i64>,
    /// Skipped records.
    pub warnings: Vec<String>,
}

struct Cursor<'a> {
    line: usize,
    tokens: std::slice::Iter<'a, &'a str>,
}

impl<'a> Cursor<'a> {
    fn err(&self, kind: impl Into<G2oErrorKind>) -> G2oError {
        G2oError {
            line: self.line,
            kind: kind.into(),
        }
    }

    fn next_token(&mut self, what: &str) -> Result<&'a str, G2oError> {
        self.tokens
            .next()
            .copied()
            .ok_or_else(|| self.err(G2oErrorKind::Malformed(format!("missing {what}"))))
    }

    fn id(&mut self) -> Result<i64, G2oError> {
        let tok = self.next_token("vertex id")?;
        tok.parse().map_err(|_| {
            self.err(G2oErrorKind::BadNumber {
                token: tok.to_string(),
                expected: "an integer id",
            })
        })
    }

    fn float(&mut self, what: &str) -> Result<f64, G2oError> {
        let tok = self.next_token(what)?;
        tok.parse().map_err(|_| {
            self.err(G2oErrorKind::BadNumber {
                token: tok.to_string(),
                expected: "a decimal number",
            })
        })
    }

    fn pose(&mut self) -> Result<Motion, G2oError> {
        let mut v = [0.0; 7];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = self.float(["tx", "ty", "tz", "qx", "qy", "qz", "qw"][k])?;
        }
        let r = quaternion_to_rotation([v[3], v[4], v[5], v[6]]).map_err(|e| self.err(e))?;
        Ok(Motion::new(r, Vector3::new(v[0], v[1], v[2])))
    }

    fn remaining(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Default)]
struct IdMap {
    seen: HashSet<i64>,
    /// Ids in order of first appearance, with that line.
    order: Vec<(i64, usize)>,
}

impl IdMap {
    fn note(&mut self, id: i64, line: usize) {
        if self.seen.insert(id) {
            self.order.push((id, line));
        }
    }

    /// Dense index per id: ids that already form `0..N` keep their value,
    /// anything else is numbered by first appearance.
    fn finish(self) -> (HashMap<i64, usize>, Vec<(i64, usize)>) {
        let n = self.order.len();
        let already_dense = self.order.iter().all(|&(id, _)| id >= 0 && (id as usize) < n);
        let mut order = self.order;
        if already_dense {
            order.sort_unstable_by_key(|&(id, _)| id);
        }
        let dense = order.iter().enumerate().map(|(v, &(id, _))| (id, v)).collect();
        (dense, order)
    }
}

/// Parses g2o text. Either the whole document is valid or an error names the line.
pub fn parse_g2o(text: &str) -> Result<G2oDocument, G2oError> {
    let mut ids = IdMap::default();
    let mut vertices: HashMap<i64, Motion> = HashMap::new();
    let mut raw_edges: Vec<(i64, i64, Motion)> = Vec::new();
    let mut edge_lines = Vec::new();
    let mut warnings = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let Some((&tag, rest)) = tokens.split_first() else {
            continue;
        };
        let mut cur = Cursor {
            line,
            tokens: rest.iter(),
        };
        match tag {
            VERTEX_TAG => {
                let id = cur.id()?;
                let pose = cur.pose()?;
                if cur.remaining() != 0 {
                    return Err(cur.err(G2oErrorKind::Malformed(format!(
                        "{VERTEX_TAG} expects 8 fields, found {}",
                        rest.len()
                    ))));
                }
                if vertices.insert(id, pose).is_some() {
                    return Err(cur.err(G2oErrorKind::DuplicateVertex(id)));
                }
                ids.note(id, line);
            }
            EDGE_TAG => {
                let a = cur.id()?;
                let b = cur.id()?;
                let measurement = cur.pose()?;
                let extra = cur.remaining();
                if extra != 0 && extra != INFO_ENTRIES {
                    return Err(cur.err(G2oErrorKind::Malformed(format!(
                        "{EDGE_TAG} expects 9 or 30 fields, found {}",
                        rest.len()
                    ))));
                }
                for _ in 0..extra {
                    cur.float("information entry")?;
                }
                ids.note(a, line);
                ids.note(b, line);
                raw_edges.push((a, b, measurement));
                edge_lines.push(line);
            }
            other => {
                let msg = format!("line {line}: skipping unsupported record {other}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let (dense, order) = ids.finish();
    let n_views = order.len();
    let globals = if vertices.is_empty() {
        None
    } else {
        let mut motions = Vec::with_capacity(n_views);
        for &(id, line) in &order {
            match vertices.get(&id) {
                Some(m) => motions.push(*m),
                None => {
                    return Err(G2oError {
                        line,
                        kind: G2oErrorKind::MissingVertex(id),
                    })
                }
            }
        }
        Some(GlobalMotionSet::new(motions))
    };

    let edges = raw_edges
        .into_iter()
        .map(|(a, b, m)| RelativeMotionEdge::new(dense[&a], dense[&b], m))
        .collect();
    let graph = build_graph(n_views, edges).map_err(|e| G2oError {
        line: offending_edge(&e).map_or(0, |h| edge_lines[h]),
        kind: e.into(),
    })?;

    Ok(G2oDocument {
        graph,
        globals,
        ids: order.into_iter().map(|(id, _)| id).collect(),
        warnings,
    })
}

fn offending_edge(e: &GraphError) -> Option<usize> {
    match *e {
        GraphError::IndexOutOfRange { edge, .. }
        | GraphError::SelfLoop { edge, .. }
        | GraphError::DuplicateEdge { edge, .. }
        | GraphError::InvalidMotion { edge, .. }
        | GraphError::InvalidWeight { edge, .. } => Some(edge),
        _ => None,
    }
}

fn push_pose(out: &mut String, m: &Motion) {
    let q = rotation_to_quaternion(&m.r);
    for x in m.t.iter().chain(q.iter()) {
        let _ = write!(out, " {x}");
    }
}

/// Serializes vertices (when `globals` is given) followed by edges. Ids are
/// the dense view indices. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_g2o(g: &MotionGraph, globals: Option<&GlobalMotionSet>) -> String {
    let mut out = String::new();
    if let Some(globals) = globals {
        for (v, m) in globals.iter().enumerate() {
            let _ = write!(out, "{VERTEX_TAG} {v}");
            push_pose(&mut out, m);
            out.push('\n');
        }
    }
    for e in g.edges() {
        let _ = write!(out, "{EDGE_TAG} {} {}", e.i, e.j);
        push_pose(&mut out, &e.measurement);
        for r in 0..6 {
            for c in r..6 {
                out.push_str(if r == c { " 1" } else { " 0" });
            }
        }
        out.push('\n');
    }
    out
}
