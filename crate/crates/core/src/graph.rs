//! View graph: N views joined by measured relative motions.
//!
//! Every edge `(i, j)` stores a measurement that should satisfy
//! `measurement = M_i^-1 * M_j` for the global motions `M_i`, `M_j`.

use std::collections::{HashMap, VecDeque};
use std::ops::Index;

use thiserror::Error;

use crate::se3::{compose, frobenius_residual, inverse, Motion, MotionDefect, MOTION_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("edge {edge} ({i}, {j}) references a view outside 0..{n_views}")]
    IndexOutOfRange {
        edge: usize,
        i: usize,
        j: usize,
        n_views: usize,
    },
    #[error("edge {edge} is a self loop on view {view}")]
    SelfLoop { edge: usize, view: usize },
    #[error("edge {edge} ({i}, {j}) duplicates edge {first} for the same view pair")]
    DuplicateEdge {
        edge: usize,
        first: usize,
        i: usize,
        j: usize,
    },
    #[error("edge {edge} carries an invalid motion: {defect}")]
    InvalidMotion { edge: usize, defect: MotionDefect },
    #[error("edge {edge} has weight {weight}, expected a value in (0, 1]")]
    InvalidWeight { edge: usize, weight: f64 },
    #[error("global motion {view} is invalid: {defect}")]
    InvalidGlobal { view: usize, defect: MotionDefect },
    #[error("view graph is disconnected; components: {}", format_components(.components))]
    Disconnected { components: Vec<Vec<usize>> },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("expected {expected} global motions, found {found}")]
    LengthMismatch { expected: usize, found: usize },
}

fn format_components(components: &[Vec<usize>]) -> String {
    components
        .iter()
        .map(|c| {
            let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            format!("{{{}}}", ids.join(", "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One measured relative motion between views `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeMotionEdge {
    pub i: usize,
    pub j: usize,
    pub measurement: Motion,
    /// Correntropy weight in `(0, 1]`.
    pub weight: f64,
}

impl RelativeMotionEdge {
    pub fn new(i: usize, j: usize, measurement: Motion) -> Self {
        Self::weighted(i, j, measurement, 1.0)
    }

    pub fn weighted(i: usize, j: usize, measurement: Motion, weight: f64) -> Self {
        Self {
            i,
            j,
            measurement,
            weight,
        }
    }
}

/// Validated view graph. Construct with [`build_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct MotionGraph {
    n_views: usize,
    edges: Vec<RelativeMotionEdge>,
}

/// Validates indices, motions and weights, and rejects self loops and repeated
/// view pairs (in either direction).
pub fn build_graph(n_views: usize, edges: Vec<RelativeMotionEdge>) -> Result<MotionGraph, GraphError> {
    let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(edges.len());
    for (h, e) in edges.iter().enumerate() {
        if e.i >= n_views || e.j >= n_views {
            return Err(GraphError::IndexOutOfRange {
                edge: h,
                i: e.i,
                j: e.j,
                n_views,
            });
        }
        if e.i == e.j {
            return Err(GraphError::SelfLoop { edge: h, view: e.i });
        }
        let key = (e.i.min(e.j), e.i.max(e.j));
        if let Some(&first) = seen.get(&key) {
            return Err(GraphError::DuplicateEdge {
                edge: h,
                first,
                i: e.i,
                j: e.j,
            });
        }
        seen.insert(key, h);
        e.measurement
            .validate(MOTION_TOLERANCE)
            .map_err(|defect| GraphError::InvalidMotion { edge: h, defect })?;
        check_weight(h, e.weight)?;
    }
    Ok(MotionGraph { n_views, edges })
}

fn check_weight(edge: usize, weight: f64) -> Result<(), GraphError> {
    if weight > 0.0 && weight <= 1.0 {
        Ok(())
    } else {
        Err(GraphError::InvalidWeight { edge, weight })
    }
}

impl MotionGraph {
    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[RelativeMotionEdge] {
        &self.edges
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    /// Overwrites every edge weight. Leaves the graph untouched on error.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<(), GraphError> {
        if weights.len() != self.edges.len() {
            return Err(GraphError::LengthMismatch {
                expected: self.edges.len(),
                found: weights.len(),
            });
        }
        for (h, &w) in weights.iter().enumerate() {
            check_weight(h, w)?;
        }
        for (e, &w) in self.edges.iter_mut().zip(weights) {
            e.weight = w;
        }
        Ok(())
    }

    /// Copy of the graph with measurements replaced edge by edge.
    pub(crate) fn map_measurements(&self, mut f: impl FnMut(usize, &RelativeMotionEdge) -> Motion) -> MotionGraph {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(h, e)| RelativeMotionEdge {
                measurement: f(h, e),
                ..*e
            })
            .collect();
        MotionGraph {
            n_views: self.n_views,
            edges,
        }
    }

    /// Undirected adjacency `(edge index, neighbour)` in edge order.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_views];
        for (h, e) in self.edges.iter().enumerate() {
            adj[e.i].push((h, e.j));
            adj[e.j].push((h, e.i));
        }
        adj
    }

    /// Breadth-first tree from view 0: `(edge index, parent, child)` in visit order.
    pub fn bfs_tree(&self) -> Vec<(usize, usize, usize)> {
        let adj = self.adjacency();
        let mut tree = Vec::with_capacity(self.n_views.saturating_sub(1));
        if self.n_views == 0 {
            return tree;
        }
        let mut visited = vec![false; self.n_views];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(v) = queue.pop_front() {
            for &(h, w) in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    tree.push((h, v, w));
                    queue.push_back(w);
                }
            }
        }
        tree
    }
}

/// Connected components of the undirected view graph, each sorted, ordered by
/// smallest member.
pub fn connected_components(g: &MotionGraph) -> Vec<Vec<usize>> {
    let adj = g.adjacency();
    let mut label = vec![usize::MAX; g.n_views];
    let mut components = Vec::new();
    for start in 0..g.n_views {
        if label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(_, w) in &adj[v] {
                if label[w] == usize::MAX {
                    label[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

pub fn is_connected(g: &MotionGraph) -> bool {
    connected_components(g).len() <= 1
}

pub(crate) fn require_connected(g: &MotionGraph) -> Result<(), GraphError> {
    let components = connected_components(g);
    if components.len() > 1 {
        Err(GraphError::Disconnected { components })
    } else {
        Ok(())
    }
}

/// The N global motions. Index 0 is the gauge reference.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMotionSet {
    motions: Vec<Motion>,
}

impl GlobalMotionSet {
    pub fn new(motions: Vec<Motion>) -> Self {
        Self { motions }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![Motion::identity(); n])
    }

    pub fn len(&self) -> usize {
        self.motions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motions.is_empty()
    }

    pub fn as_slice(&self) -> &[Motion] {
        &self.motions
    }

    pub fn as_mut_slice(&mut self) -> &mut [Motion] {
        &mut self.motions
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Motion> {
        self.motions.iter()
    }

    pub fn into_inner(self) -> Vec<Motion> {
        self.motions
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for (view, m) in self.motions.iter().enumerate() {
            m.validate(MOTION_TOLERANCE)
                .map_err(|defect| GraphError::InvalidGlobal { view, defect })?;
        }
        Ok(())
    }

    /// Left-multiplies every motion by `g` (a change of gauge).
    pub fn left_multiplied(&self, g: &Motion) -> Self {
        Self::new(self.motions.iter().map(|m| compose(g, m)).collect())
    }
}

impl Index<usize> for GlobalMotionSet {
    type Output = Motion;

    fn index(&self, i: usize) -> &Motion {
        &self.motions[i]
    }
}

impl FromIterator<Motion> for GlobalMotionSet {
    fn from_iter<I: IntoIterator<Item = Motion>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Chains measurements along the breadth-first tree from view 0, starting at identity.
pub fn spanning_tree_init(g: &MotionGraph) -> Result<GlobalMotionSet, GraphError> {
    require_connected(g)?;
    let mut motions = vec![Motion::identity(); g.n_views];
    for (h, parent, child) in g.bfs_tree() {
        let e = &g.edges[h];
        // parent * (parent -> child)
        let step = if e.i == parent {
            e.measurement
        } else {
            inverse(&e.measurement)
        };
        motions[child] = compose(&motions[parent], &step);
    }
    Ok(GlobalMotionSet::new(motions))
}

fn check_lengths(g: &MotionGraph, globals: &GlobalMotionSet) -> Result<(), GraphError> {
    if globals.len() != g.n_views {
        return Err(GraphError::LengthMismatch {
            expected: g.n_views,
            found: globals.len(),
        });
    }
    Ok(())
}

/// Per-edge Frobenius residuals `|| M^_ij - M_i^-1 M_j ||_F`, in edge order.
pub fn edge_residuals(g: &MotionGraph, globals: &GlobalMotionSet) -> Result<Vec<f64>, GraphError> {
    check_lengths(g, globals)?;
    Ok(g.edges
        .iter()
        .map(|e| frobenius_residual(&e.measurement, &globals[e.i], &globals[e.j]))
        .collect())
}

/// Mean per-edge Frobenius residual.
pub fn residual_motion_error(g: &MotionGraph, globals: &GlobalMotionSet) -> Result<f64, GraphError> {
    if g.n_edges() == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let residuals = edge_residuals(g, globals)?;
    Ok(mean_in_order(&residuals))
}

pub(crate) fn mean_in_order(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, &v| acc + v) / values.len() as f64
}
