//! Robust global motion averaging on SE(3).
//!
//! Given measured relative motions between pairs of views, recover one global
//! motion per view. The solver linearizes edge residuals in the Lie algebra,
//! solves a weighted minimum-norm least-squares problem per iteration, and
//! weights every edge with a Gaussian correntropy kernel whose width follows
//! the mean residual. Gross outliers receive weights close to zero.
//!
//! ```
//! use motionavg::{build_graph, spanning_tree_init, solve, Motion, RelativeMotionEdge, SolverConfig};
//!
//! let g = build_graph(2, vec![RelativeMotionEdge::new(0, 1, Motion::from_translation(1.0, 0.0, 0.0))]).unwrap();
//! let init = spanning_tree_init(&g).unwrap();
//! let (globals, report) = solve(&g, &init, &SolverConfig::default()).unwrap();
//! assert!(report.converged());
//! assert!((globals[1].t.x - 1.0).abs() < 1e-12);
//! ```

pub mod bench;
pub mod graph;
pub mod io;
pub mod se3;
pub mod solver;

pub use graph::{
    build_graph, connected_components, edge_residuals, is_connected, residual_motion_error, spanning_tree_init,
    GlobalMotionSet, GraphError, MotionGraph, RelativeMotionEdge,
};
pub use se3::{
    compose, correntropy_loss, exp_twist, frobenius_residual, gaussian_kernel, hat, inverse, log_motion,
    validate_motion, KernelWidth, Motion, MotionDefect, Se3Error, Twist,
};
pub use solver::{
    assign_weights, build_linear_system, mcc_motion_averaging, plain_ma, solve, solve_min_norm, solve_observed,
    weighted_ma_step, GaugeFix, IterationRecord, LinearSystem, Mode, SolveError, SolveReport, SolverConfig,
    Termination,
};
