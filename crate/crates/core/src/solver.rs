//! Motion averaging solvers.
//!
//! Each iteration linearizes every edge residual
//! `dM_ij = M_i * M^_ij * M_j^-1` in the Lie algebra, stacks the bands
//! `w (x_j - x_i) = w log(dM_ij)` into one sparse system `D x = dV`, takes the
//! minimum-norm least-squares solution and applies it as a world-frame
//! correction `M_i <- exp(x_i) * M_i` for every view except the reference.
//!
//! In [`Mode::Mcc`] the weights are re-derived every iteration from the
//! Gaussian kernel with an adaptive width `sigma_k = alpha * e_M,k`, where
//! `e_M,k` is the mean per-edge Frobenius residual of the current iterate.
//! [`Mode::Plain`] keeps every weight at 1 and [`Mode::FixedWeights`] uses
//! the weights already stored on the graph.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    edge_residuals, mean_in_order, require_connected, GlobalMotionSet, GraphError, MotionGraph,
};
use crate::se3::{compose, exp_twist, gaussian_kernel, inverse, log_motion, KernelWidth, Se3Error, Twist, SIGMA_FLOOR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge {edge}: residual motion cannot be linearized: {source}")]
    AngleNearPi { edge: usize, source: Se3Error },
    #[error("linear system has rank {rank}, below the {required} needed beyond the gauge freedom")]
    RankDeficientBeyondGauge { rank: usize, required: usize },
    #[error("iteration {iteration} produced non-finite values")]
    NonFinite {
        iteration: usize,
        report: Box<SolveReport>,
    },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Correntropy weights with adaptive kernel width.
    #[default]
    Mcc,
    /// Unweighted (Frobenius) motion averaging.
    Plain,
    /// Constant weights taken from the graph edges.
    FixedWeights,
}

/// How the reference view's share of each update is handled.
///
/// The system `D x = dV` is blind to a common offset added to every block, so
/// its minimum-norm solution spreads part of the correction onto view 0,
/// which is never moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeFix {
    /// Shift the solution so the reference block is zero (`x_i - x_0`); this is
    /// the least-squares minimizer with view 0 held fixed.
    #[default]
    Anchored,
    /// Apply the minimum-norm blocks as they are and drop block 0. Converges
    /// at rate `(N - 1) / N` on the gauge component.
    DiscardReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Kernel width multiplier.
    pub alpha: f64,
    pub max_iterations: usize,
    /// Stop once the largest applied twist entry falls below this.
    pub change_tolerance: f64,
    pub sigma_floor: f64,
    pub mode: Mode,
    pub gauge: GaugeFix,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iterations: 50,
            change_tolerance: 1e-10,
            sigma_floor: SIGMA_FLOOR,
            mode: Mode::Mcc,
            gauge: GaugeFix::Anchored,
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: String| Err(SolveError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.change_tolerance > 0.0) {
            return bad(format!("change_tolerance must be positive, got {}", self.change_tolerance));
        }
        if !(self.sigma_floor > 0.0) {
            return bad(format!("sigma_floor must be positive, got {}", self.sigma_floor));
        }
        Ok(())
    }
}

/// One weighted band of `D`: `-w I6` in block column `i`, `+w I6` in block column `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// The stacked system `D x = dV`, kept in band form.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub n_views: usize,
    pub bands: Vec<Band>,
    /// `w_h * dv_h` for every edge, 6 rows per edge.
    pub rhs: DVector<f64>,
}

impl LinearSystem {
    pub fn n_rows(&self) -> usize {
        6 * self.bands.len()
    }

    pub fn n_cols(&self) -> usize {
        6 * self.n_views
    }

    /// Dense `6H x 6N` coefficient matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows(), self.n_cols());
        for (h, b) in self.bands.iter().enumerate() {
            for k in 0..6 {
                d[(6 * h + k, 6 * b.i + k)] = -b.weight;
                d[(6 * h + k, 6 * b.j + k)] = b.weight;
            }
        }
        d
    }

    /// `D x` without materializing `D`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.n_cols());
        let mut out = DVector::zeros(self.n_rows());
        for (h, b) in self.bands.iter().enumerate() {
            for k in 0..6 {
                out[6 * h + k] = b.weight * (x[6 * b.j + k] - x[6 * b.i + k]);
            }
        }
        out
    }

    /// `H x N` weighted incidence matrix `B`; `D` is `B` with every entry
    /// expanded to a scaled 6x6 identity.
    pub fn weighted_incidence(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.bands.len(), self.n_views);
        for (h, band) in self.bands.iter().enumerate() {
            b[(h, band.i)] = -band.weight;
            b[(h, band.j)] = band.weight;
        }
        b
    }

    fn rhs_blocks(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.bands.len(), 6, |h, k| self.rhs[6 * h + k])
    }
}

/// Per-iteration trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Mean Frobenius residual of the iterate the step started from.
    pub residual_error: f64,
    /// Kernel width used for the weights (MCC mode only).
    pub sigma: Option<f64>,
    /// Largest absolute entry of the applied twist blocks.
    pub max_update: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    pub alpha: f64,
    pub iterations_run: usize,
    pub records: Vec<IterationRecord>,
    /// Weights used in the last iteration, in edge order.
    pub final_weights: Vec<f64>,
    /// Mean Frobenius residual of the returned globals.
    pub final_residual_error: f64,
    pub termination: Termination,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// What an observer sees after each iteration.
#[derive(Debug)]
pub struct IterationView<'a> {
    /// 1-based iteration counter.
    pub iteration: usize,
    pub before: &'a GlobalMotionSet,
    pub after: &'a GlobalMotionSet,
    pub weights: &'a [f64],
    pub record: &'a IterationRecord,
}

/// Correntropy weights `G_sigma(|| M^_ij - M_i^-1 M_j ||_F)`; stored on the
/// edges and returned in edge order.
pub fn assign_weights(
    g: &mut MotionGraph,
    globals: &GlobalMotionSet,
    sigma: KernelWidth,
) -> Result<Vec<f64>, GraphError> {
    let residuals = edge_residuals(g, globals)?;
    let weights = weights_from_residuals(&residuals, sigma);
    g.set_weights(&weights)?;
    Ok(weights)
}

fn weights_from_residuals(residuals: &[f64], sigma: KernelWidth) -> Vec<f64> {
    residuals.iter().map(|&e| gaussian_kernel(e, sigma)).collect()
}

/// Linearizes every edge around the current globals.
pub fn build_linear_system(
    g: &MotionGraph,
    globals: &GlobalMotionSet,
    weights: &[f64],
) -> Result<LinearSystem, SolveError> {
    if globals.len() != g.n_views() {
        return Err(GraphError::LengthMismatch {
            expected: g.n_views(),
            found: globals.len(),
        }
        .into());
    }
    if weights.len() != g.n_edges() {
        return Err(GraphError::LengthMismatch {
            expected: g.n_edges(),
            found: weights.len(),
        }
        .into());
    }
    let mut bands = Vec::with_capacity(g.n_edges());
    let mut rhs = DVector::zeros(6 * g.n_edges());
    for (h, (e, &w)) in g.edges().iter().zip(weights).enumerate() {
        let residual = compose(&compose(&globals[e.i], &e.measurement), &inverse(&globals[e.j]));
        let dv = log_motion(&residual).map_err(|source| SolveError::AngleNearPi { edge: h, source })?;
        rhs.fixed_rows_mut::<6>(6 * h).copy_from(&(dv.to_vector() * w));
        bands.push(Band { i: e.i, j: e.j, weight: w });
    }
    Ok(LinearSystem {
        n_views: g.n_views(),
        bands,
        rhs,
    })
}

/// Minimum-norm least-squares solution `D^+ dV`, one twist per view.
///
/// Since `D = B (x) I6`, the pseudo-inverse factors as `B^+ (x) I6` and only
/// the `H x N` incidence matrix is decomposed. Singular values below
/// `max(6H, 6N) * eps * s_max` are treated as zero.
pub fn solve_min_norm(sys: &LinearSystem) -> Result<Vec<Twist>, SolveError> {
    let n = sys.n_views;
    let required = n.saturating_sub(1);
    if sys.bands.is_empty() || n == 0 {
        if required > 0 {
            return Err(SolveError::RankDeficientBeyondGauge { rank: 0, required: 6 * required });
        }
        return Ok(vec![Twist::zero(); n]);
    }
    let b = sys.weighted_incidence();
    let svd = b.svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = (sys.n_rows().max(sys.n_cols()) as f64) * f64::EPSILON * s_max;
    let rank = svd.rank(tol);
    if rank < required {
        return Err(SolveError::RankDeficientBeyondGauge {
            rank: 6 * rank,
            required: 6 * required,
        });
    }
    let x = svd
        .solve(&sys.rhs_blocks(), tol)
        .expect("singular vectors were requested");
    Ok((0..n)
        .map(|v| Twist::from_slice(&[x[(v, 0)], x[(v, 1)], x[(v, 2)], x[(v, 3)], x[(v, 4)], x[(v, 5)]]))
        .collect())
}

/// The twists actually applied to views `1..N` (block 0 is never applied).
pub fn applied_twists(solution: &[Twist], gauge: GaugeFix) -> Vec<Twist> {
    let Some(reference) = solution.first() else {
        return Vec::new();
    };
    solution[1..]
        .iter()
        .map(|x| match gauge {
            GaugeFix::Anchored => Twist::new(x.omega - reference.omega, x.u - reference.u),
            GaugeFix::DiscardReference => *x,
        })
        .collect()
}

/// `M_i <- exp(x_i) * M_i` for `i >= 1`; view 0 is copied through untouched.
pub fn apply_update(globals: &GlobalMotionSet, solution: &[Twist], gauge: GaugeFix) -> GlobalMotionSet {
    assert_eq!(globals.len(), solution.len(), "one twist per view");
    let applied = applied_twists(solution, gauge);
    globals
        .iter()
        .enumerate()
        .map(|(i, m)| if i == 0 { *m } else { compose(&exp_twist(&applied[i - 1]), m) })
        .collect()
}

/// One weighted motion-averaging iteration. Returns the new globals and the
/// largest absolute entry of the applied twists.
pub fn weighted_ma_step(
    g: &MotionGraph,
    globals: &GlobalMotionSet,
    weights: &[f64],
    gauge: GaugeFix,
) -> Result<(GlobalMotionSet, f64), SolveError> {
    let sys = build_linear_system(g, globals, weights)?;
    let solution = solve_min_norm(&sys)?;
    let magnitude = applied_twists(&solution, gauge)
        .iter()
        .map(Twist::max_abs)
        .fold(0.0, f64::max);
    Ok((apply_update(globals, &solution, gauge), magnitude))
}

/// Robust motion averaging with correntropy weights and adaptive kernel width.
pub fn mcc_motion_averaging(
    g: &MotionGraph,
    init: &GlobalMotionSet,
    cfg: &SolverConfig,
) -> Result<(GlobalMotionSet, SolveReport), SolveError> {
    solve(g, init, &cfg.with_mode(Mode::Mcc))
}

/// Classical motion averaging: every weight fixed at 1.
pub fn plain_ma(
    g: &MotionGraph,
    init: &GlobalMotionSet,
    cfg: &SolverConfig,
) -> Result<(GlobalMotionSet, SolveReport), SolveError> {
    solve(g, init, &cfg.with_mode(Mode::Plain))
}

/// Runs the mode selected in `cfg`.
pub fn solve(
    g: &MotionGraph,
    init: &GlobalMotionSet,
    cfg: &SolverConfig,
) -> Result<(GlobalMotionSet, SolveReport), SolveError> {
    solve_observed(g, init, cfg, |_| {})
}

/// Like [`solve`], calling `observer` after every completed iteration.
pub fn solve_observed<F>(
    g: &MotionGraph,
    init: &GlobalMotionSet,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<(GlobalMotionSet, SolveReport), SolveError>
where
    F: FnMut(&IterationView<'_>),
{
    cfg.validate()?;
    if init.len() != g.n_views() {
        return Err(GraphError::LengthMismatch {
            expected: g.n_views(),
            found: init.len(),
        }
        .into());
    }
    init.validate()?;
    if g.n_edges() == 0 {
        return Err(GraphError::EmptyGraph.into());
    }
    require_connected(g)?;

    let mut graph = g.clone();
    let mut globals = init.clone();
    let mut report = SolveReport {
        mode: cfg.mode,
        alpha: cfg.alpha,
        iterations_run: 0,
        records: Vec::with_capacity(cfg.max_iterations),
        final_weights: graph.weights(),
        final_residual_error: f64::NAN,
        termination: Termination::MaxIterations,
    };

    for k in 1..=cfg.max_iterations {
        let residuals = edge_residuals(&graph, &globals)?;
        let residual_error = mean_in_order(&residuals);
        let (sigma, weights) = match cfg.mode {
            Mode::Mcc => {
                let sigma = KernelWidth::with_floor(cfg.alpha * residual_error, cfg.sigma_floor);
                let w = weights_from_residuals(&residuals, sigma);
                graph.set_weights(&w)?;
                (Some(sigma.get()), w)
            }
            Mode::Plain => (None, vec![1.0; graph.n_edges()]),
            Mode::FixedWeights => (None, graph.weights()),
        };

        let (next, max_update) = weighted_ma_step(&graph, &globals, &weights, cfg.gauge)?;
        let record = IterationRecord {
            residual_error,
            sigma,
            max_update,
        };
        report.records.push(record);
        report.iterations_run = k;
        report.final_weights = weights;

        let finite = max_update.is_finite()
            && next.iter().all(|m| m.r.iter().chain(m.t.iter()).all(|x| x.is_finite()));
        if !finite {
            report.final_residual_error = f64::NAN;
            return Err(SolveError::NonFinite {
                iteration: k,
                report: Box::new(report),
            });
        }

        observer(&IterationView {
            iteration: k,
            before: &globals,
            after: &next,
            weights: &report.final_weights,
            record: &record,
        });
        globals = next;
        log::debug!("iteration {k}: e_M = {residual_error:e}, max update = {max_update:e}");

        if max_update < cfg.change_tolerance {
            report.termination = Termination::Converged;
            break;
        }
    }

    report.final_residual_error = mean_in_order(&edge_residuals(&graph, &globals)?);
    Ok((globals, report))
}
