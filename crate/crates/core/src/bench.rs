//! Synthetic scenes, evaluation metrics and experiment drivers.
//!
//! Every random stage draws from its own ChaCha8 stream seeded by
//! [`ScenarioSpec::seed`], so changing one stage (say the noise level) leaves
//! the draws of the other stages untouched and results are identical across
//! platforms.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::{Vector3, Vector6};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, spanning_tree_init, GlobalMotionSet, GraphError, MotionGraph, RelativeMotionEdge};
use crate::se3::{compose, exp_twist, inverse, Motion, Twist};
use crate::solver::{solve, Mode, SolveError, SolveReport, SolverConfig};

/// Half the side of the cube translations are drawn from.
pub const SCENE_HALF_EXTENT: f64 = 5.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_views: usize,
    /// Fraction of the `N(N-1)/2` view pairs that carry an edge.
    pub edge_density: f64,
    /// Per-axis standard deviation of rotational edge noise, in degrees.
    pub rot_noise_deg: f64,
    /// Per-axis standard deviation of translational edge noise.
    pub trans_noise: f64,
    pub outlier_fraction: f64,
    pub seed: u64,
    /// Norm of the random twist applied to every non-reference view of the
    /// spanning-tree initialization; 0 disables it.
    pub init_perturbation: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_views: 15,
            edge_density: 0.45,
            rot_noise_deg: 0.3,
            trans_noise: 0.05,
            outlier_fraction: 0.15,
            seed: 0,
            init_perturbation: 0.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::InvalidSpec(msg));
        if self.n_views < 2 {
            return bad(format!("n_views must be at least 2, got {}", self.n_views));
        }
        if !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return bad(format!("edge_density must lie in (0, 1], got {}", self.edge_density));
        }
        if !(self.rot_noise_deg >= 0.0 && self.rot_noise_deg.is_finite()) {
            return bad(format!("rot_noise_deg must be non-negative, got {}", self.rot_noise_deg));
        }
        if !(self.trans_noise >= 0.0 && self.trans_noise.is_finite()) {
            return bad(format!("trans_noise must be non-negative, got {}", self.trans_noise));
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction < 1.0) {
            return bad(format!("outlier_fraction must lie in [0, 1), got {}", self.outlier_fraction));
        }
        if !(self.init_perturbation >= 0.0 && self.init_perturbation.is_finite()) {
            return bad(format!("init_perturbation must be non-negative, got {}", self.init_perturbation));
        }
        Ok(())
    }
}

/// Random stages; each gets its own generator stream.
#[derive(Debug, Clone, Copy)]
enum Stage {
    Truth = 1,
    Edges = 2,
    Noise = 3,
    Outliers = 4,
    Init = 5,
}

fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

fn random_translation(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let cube = Uniform::new_inclusive(-SCENE_HALF_EXTENT, SCENE_HALF_EXTENT).expect("finite bounds");
    Vector3::new(cube.sample(rng), cube.sample(rng), cube.sample(rng))
}

/// Random axis, angle uniform in `[lo, hi]`, translation uniform in the scene cube.
fn random_motion(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Motion {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(lo..=hi);
    let t = random_translation(rng);
    Motion::from_axis_angle(Vector3::from(axis), angle, t)
}

/// `N` ground-truth motions with view 0 at identity.
pub fn generate_ground_truth(n_views: usize, seed: u64) -> GlobalMotionSet {
    let mut rng = stage_rng(seed, Stage::Truth);
    let mut motions = Vec::with_capacity(n_views);
    if n_views > 0 {
        motions.push(Motion::identity());
    }
    for _ in 1..n_views {
        motions.push(random_motion(&mut rng, 0.0, FRAC_PI_2));
    }
    GlobalMotionSet::new(motions)
}

/// Exactly consistent edges `M_i^-1 M_j`: a random spanning tree plus every
/// other pair with the probability that makes the expected edge count
/// `density * N(N-1)/2`. Edge directions are random.
pub fn make_relative_motions(gt: &GlobalMotionSet, edge_density: f64, seed: u64) -> Result<MotionGraph, GraphError> {
    let n = gt.len();
    let mut rng = stage_rng(seed, Stage::Edges);
    let mut in_tree = vec![vec![false; n]; n];
    let mut pairs = Vec::new();

    for v in 1..n {
        let parent = rng.random_range(0..v);
        in_tree[parent][v] = true;
        pairs.push(if rng.random_bool(0.5) { (parent, v) } else { (v, parent) });
    }

    let all_pairs = n * n.saturating_sub(1) / 2;
    let tree_pairs = n.saturating_sub(1);
    let p_extra = if all_pairs > tree_pairs {
        ((edge_density * all_pairs as f64 - tree_pairs as f64) / (all_pairs - tree_pairs) as f64).clamp(0.0, 1.0)
    } else {
        0.0
    };
    for i in 0..n {
        for j in i + 1..n {
            if in_tree[i][j] {
                continue;
            }
            let keep = rng.random_bool(p_extra);
            let flip = rng.random_bool(0.5);
            if keep {
                pairs.push(if flip { (j, i) } else { (i, j) });
            }
        }
    }

    let edges = pairs
        .into_iter()
        .map(|(i, j)| RelativeMotionEdge::new(i, j, compose(&inverse(&gt[i]), &gt[j])))
        .collect();
    build_graph(n, edges)
}

fn noise_distribution(std: f64) -> Option<Normal<f64>> {
    (std > 0.0).then(|| Normal::new(0.0, std).expect("finite standard deviation"))
}

/// Right-multiplies every measurement by `exp` of a random twist with
/// independent normal components.
pub fn perturb_edges(g: &MotionGraph, rot_noise_deg: f64, trans_noise: f64, seed: u64) -> MotionGraph {
    if rot_noise_deg == 0.0 && trans_noise == 0.0 {
        return g.clone();
    }
    let mut rng = stage_rng(seed, Stage::Noise);
    let rot = noise_distribution(rot_noise_deg.to_radians());
    let trans = noise_distribution(trans_noise);
    let mut draw = |d: &Option<Normal<f64>>| d.as_ref().map_or(0.0, |d| d.sample(&mut rng));
    g.map_measurements(|_, e| {
        let omega = Vector3::new(draw(&rot), draw(&rot), draw(&rot));
        let u = Vector3::new(draw(&trans), draw(&trans), draw(&trans));
        compose(&e.measurement, &exp_twist(&Twist::new(omega, u)))
    })
}

/// Replaces `floor(fraction * H)` non-tree edges (capped at the number of
/// such edges) by random motions with rotation angle in `[pi/4, pi]`.
///
/// The exempt tree is the breadth-first tree that [`spanning_tree_init`]
/// chains along, so the initialization never passes through an outlier.
/// Returns the sorted outlier edge indices.
pub fn inject_outliers(g: &MotionGraph, outlier_fraction: f64, seed: u64) -> (MotionGraph, Vec<usize>) {
    let mut in_tree = vec![false; g.n_edges()];
    for (h, _, _) in g.bfs_tree() {
        in_tree[h] = true;
    }
    let candidates: Vec<usize> = (0..g.n_edges()).filter(|&h| !in_tree[h]).collect();
    let count = ((outlier_fraction * g.n_edges() as f64).floor() as usize).min(candidates.len());
    if count == 0 {
        return (g.clone(), Vec::new());
    }

    let mut rng = stage_rng(seed, Stage::Outliers);
    let mut labels: Vec<usize> = sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    labels.sort_unstable();

    let mut replacement = vec![None; g.n_edges()];
    for &h in &labels {
        replacement[h] = Some(random_motion(&mut rng, FRAC_PI_4, PI));
    }
    let contaminated = g.map_measurements(|h, e| replacement[h].unwrap_or(e.measurement));
    (contaminated, labels)
}

/// Right-multiplies views `1..N` by `exp` of a random twist of norm `magnitude`.
/// View 0 stays put so the gauge is unchanged.
pub fn perturb_globals(globals: &GlobalMotionSet, magnitude: f64, seed: u64) -> GlobalMotionSet {
    if magnitude == 0.0 {
        return globals.clone();
    }
    let mut rng = stage_rng(seed, Stage::Init);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    globals
        .iter()
        .enumerate()
        .map(|(v, m)| {
            if v == 0 {
                return *m;
            }
            let dir = Vector6::from_fn(|_, _| normal.sample(&mut rng)).normalize();
            compose(m, &exp_twist(&Twist::from_vector(&(dir * magnitude))))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewError {
    pub e_r: f64,
    pub e_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean Frobenius rotation error over views.
    pub e_r: f64,
    /// Mean Euclidean translation error over views.
    pub e_t: f64,
    pub per_view: Vec<ViewError>,
}

/// Compares two motion sets view by view, without any gauge alignment.
pub fn evaluate(est: &GlobalMotionSet, gt: &GlobalMotionSet) -> Result<EvalResult, GraphError> {
    if est.len() != gt.len() {
        return Err(GraphError::LengthMismatch {
            expected: gt.len(),
            found: est.len(),
        });
    }
    let per_view: Vec<ViewError> = est
        .iter()
        .zip(gt.iter())
        .map(|(a, b)| ViewError {
            e_r: (a.r - b.r).norm(),
            e_t: (a.t - b.t).norm(),
        })
        .collect();
    let n = per_view.len().max(1) as f64;
    Ok(EvalResult {
        e_r: per_view.iter().fold(0.0, |s, v| s + v.e_r) / n,
        e_t: per_view.iter().fold(0.0, |s, v| s + v.e_t) / n,
        per_view,
    })
}

/// A generated benchmark scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub truth: GlobalMotionSet,
    /// Noisy, contaminated measurements.
    pub graph: MotionGraph,
    /// Sorted indices of outlier edges.
    pub outliers: Vec<usize>,
    /// Spanning-tree chaining, perturbed when `init_perturbation` is positive.
    pub init: GlobalMotionSet,
}

pub fn build_scene(spec: &ScenarioSpec) -> Result<Scene, BenchError> {
    spec.validate()?;
    let truth = generate_ground_truth(spec.n_views, spec.seed);
    let clean = make_relative_motions(&truth, spec.edge_density, spec.seed)?;
    let noisy = perturb_edges(&clean, spec.rot_noise_deg, spec.trans_noise, spec.seed);
    let (graph, outliers) = inject_outliers(&noisy, spec.outlier_fraction, spec.seed);
    let init = perturb_globals(&spanning_tree_init(&graph)?, spec.init_perturbation, spec.seed);
    Ok(Scene {
        truth,
        graph,
        outliers,
        init,
    })
}

/// Result of one solver mode on one scene.
#[derive(Debug)]
pub struct MethodRun {
    pub mode: Mode,
    pub alpha: f64,
    pub outcome: Result<(GlobalMotionSet, SolveReport, EvalResult), SolveError>,
    pub runtime: Duration,
}

impl MethodRun {
    /// Rotation error, or infinity when the solver failed.
    pub fn e_r(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::INFINITY, |(_, _, ev)| ev.e_r)
    }

    pub fn e_t(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::INFINITY, |(_, _, ev)| ev.e_t)
    }

    pub fn converged(&self) -> bool {
        self.outcome.as_ref().is_ok_and(|(_, r, _)| r.converged())
    }

    pub fn report(&self) -> Option<&SolveReport> {
        self.outcome.as_ref().ok().map(|(_, r, _)| r)
    }

    pub fn row(&self, seed: u64) -> TableRow {
        TableRow {
            seed,
            mode: self.mode,
            alpha: self.alpha,
            iterations: self.report().map(|r| r.iterations_run),
            e_r: self.e_r(),
            e_t: self.e_t(),
            converged: self.converged(),
            runtime: self.runtime,
        }
    }
}

#[derive(Debug)]
pub struct TrialResult {
    pub scene: Scene,
    pub runs: Vec<MethodRun>,
}

fn run_mode(scene: &Scene, cfg: &SolverConfig, mode: Mode) -> MethodRun {
    let cfg = cfg.with_mode(mode);
    let start = Instant::now();
    let outcome = solve(&scene.graph, &scene.init, &cfg).map(|(globals, report)| {
        let ev = evaluate(&globals, &scene.truth).expect("solver keeps the view count");
        (globals, report, ev)
    });
    MethodRun {
        mode,
        alpha: cfg.alpha,
        outcome,
        runtime: start.elapsed(),
    }
}

/// Builds the scene for `spec` and runs every mode in `modes` from the same
/// initialization. Solver failures are reported per run, not propagated.
pub fn run_trial(spec: &ScenarioSpec, cfg: &SolverConfig, modes: &[Mode]) -> Result<TrialResult, BenchError> {
    let scene = build_scene(spec)?;
    let runs = modes.iter().map(|&m| run_mode(&scene, cfg, m)).collect();
    Ok(TrialResult { scene, runs })
}

/// One MCC run per kernel multiplier, all on the same scene.
pub fn sweep_alpha(spec: &ScenarioSpec, alphas: &[f64], cfg: &SolverConfig) -> Result<Vec<MethodRun>, BenchError> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(BenchError::InvalidSpec(format!("alpha must be positive, got {a}")));
    }
    let scene = build_scene(spec)?;
    Ok(alphas
        .iter()
        .map(|&alpha| run_mode(&scene, &SolverConfig { alpha, ..*cfg }, Mode::Mcc))
        .collect())
}

/// One line of the flat results table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub seed: u64,
    pub mode: Mode,
    pub alpha: f64,
    /// `None` when the solver failed.
    pub iterations: Option<usize>,
    pub e_r: f64,
    pub e_t: f64,
    pub converged: bool,
    pub runtime: Duration,
}

pub const TABLE_HEADER: &str = "seed,method,alpha,iterations,converged,e_R,e_t,runtime_s";

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Mcc => "mcc",
        Mode::Plain => "plain",
        Mode::FixedWeights => "fixed_weights",
    }
}

/// Comma-separated table preceded by `#` comment lines describing the scenario.
/// Runtimes are wall-clock and therefore only written when `timing` is set;
/// otherwise the column holds `NA` and the output is byte-reproducible.
pub fn format_table(spec: &ScenarioSpec, rows: &[TableRow], timing: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# n_views={} edge_density={} rot_noise_deg={} trans_noise={} outlier_fraction={} init_perturbation={} seed={}",
        spec.n_views,
        spec.edge_density,
        spec.rot_noise_deg,
        spec.trans_noise,
        spec.outlier_fraction,
        spec.init_perturbation,
        spec.seed
    );
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let iterations = r.iterations.map_or("NA".to_string(), |k| k.to_string());
        let runtime = if timing {
            format!("{:.6}", r.runtime.as_secs_f64())
        } else {
            "NA".to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{:e},{}",
            r.seed,
            mode_name(r.mode),
            r.alpha,
            iterations,
            r.converged,
            r.e_r,
            r.e_t,
            runtime
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{is_connected, residual_motion_error};
    use crate::se3::{frobenius_residual, MOTION_TOLERANCE};

    #[test]
    fn ground_truth_gauge_and_determinism() {
        let gt = generate_ground_truth(2, 3);
        assert_eq!(gt.len(), 2);
        assert_eq!(gt[0], Motion::identity());
        assert!(gt[1].validate(MOTION_TOLERANCE).is_ok());
        assert!(gt[1].angle() <= FRAC_PI_2 + 1e-12);
        assert!(gt[1].t.iter().all(|c| c.abs() <= SCENE_HALF_EXTENT));
        assert_eq!(generate_ground_truth(6, 11), generate_ground_truth(6, 11));
        assert_ne!(generate_ground_truth(6, 11), generate_ground_truth(6, 12));
    }

    #[test]
    fn density_extremes() {
        let gt = generate_ground_truth(9, 1);
        let full = make_relative_motions(&gt, 1.0, 1).unwrap();
        assert_eq!(full.n_edges(), 36);
        assert!(residual_motion_error(&full, &gt).unwrap() < 1e-12);

        let sparse = make_relative_motions(&gt, 1e-9, 1).unwrap();
        assert_eq!(sparse.n_edges(), 8);
        assert!(is_connected(&sparse));
    }

    #[test]
    fn zero_noise_is_bitwise_identity() {
        let gt = generate_ground_truth(7, 2);
        let g = make_relative_motions(&gt, 0.5, 2).unwrap();
        assert_eq!(perturb_edges(&g, 0.0, 0.0, 2), g);
        assert_eq!(perturb_edges(&g, 0.3, 0.05, 9), perturb_edges(&g, 0.3, 0.05, 9));
        assert_ne!(perturb_edges(&g, 0.3, 0.05, 9), g);
    }

    #[test]
    fn outlier_count_and_magnitude() {
        let gt = generate_ground_truth(10, 4);
        let g = make_relative_motions(&gt, 0.6, 4).unwrap();
        let (same, none) = inject_outliers(&g, 0.0, 4);
        assert_eq!(same, g);
        assert!(none.is_empty());

        let fraction = 3.5 / g.n_edges() as f64;
        let (bad, labels) = inject_outliers(&g, fraction, 4);
        assert_eq!(labels.len(), 3);
        let tree: Vec<usize> = g.bfs_tree().iter().map(|t| t.0).collect();
        for &h in &labels {
            assert!(!tree.contains(&h));
            let e = &bad.edges()[h];
            // min over angles in [pi/4, pi] of ||I - R||_F is 2 sqrt(2) sin(pi/8)
            let r = frobenius_residual(&e.measurement, &gt[e.i], &gt[e.j]);
            assert!(r >= 0.7, "outlier residual {r}");
        }
    }

    #[test]
    fn evaluate_arithmetic() {
        let gt = generate_ground_truth(10, 5);
        let zero = evaluate(&gt, &gt).unwrap();
        assert_eq!((zero.e_r, zero.e_t), (0.0, 0.0));

        let mut shifted = gt.clone();
        shifted.as_mut_slice()[3].t.x += 1.0;
        let ev = evaluate(&shifted, &gt).unwrap();
        assert_eq!(ev.e_r, 0.0);
        assert!((ev.e_t - 0.1).abs() < 1e-12);

        let mut flipped = gt.clone();
        flipped.as_mut_slice()[0] = Motion::rot_z(PI);
        let ev = evaluate(&flipped, &gt).unwrap();
        assert!((ev.e_r - 2.0 * 2f64.sqrt() / 10.0).abs() < 1e-12);

        assert!(matches!(
            evaluate(&GlobalMotionSet::identity(3), &gt),
            Err(GraphError::LengthMismatch { expected: 10, found: 3 })
        ));
    }

    #[test]
    fn table_format_is_reproducible() {
        let spec = ScenarioSpec {
            n_views: 6,
            seed: 7,
            ..Default::default()
        };
        let rows: Vec<TableRow> = sweep_alpha(&spec, &[0.4, 1.0], &SolverConfig::default())
            .unwrap()
            .iter()
            .map(|r| r.row(spec.seed))
            .collect();
        let a = format_table(&spec, &rows, false);
        assert_eq!(a.lines().count(), 4);
        assert!(a.starts_with("# n_views=6"));
        assert!(a.contains("seed=7"));
        let again: Vec<TableRow> = sweep_alpha(&spec, &[0.4, 1.0], &SolverConfig::default())
            .unwrap()
            .iter()
            .map(|r| r.row(spec.seed))
            .collect();
        assert_eq!(a, format_table(&spec, &again, false));
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            ScenarioSpec { n_views: 1, ..Default::default() },
            ScenarioSpec { edge_density: 0.0, ..Default::default() },
            ScenarioSpec { outlier_fraction: 1.0, ..Default::default() },
            ScenarioSpec { rot_noise_deg: -1.0, ..Default::default() },
        ] {
            assert!(matches!(build_scene(&spec), Err(BenchError::InvalidSpec(_))));
        }
        assert!(sweep_alpha(&ScenarioSpec::default(), &[1.0, 0.0], &SolverConfig::default()).is_err());
    }
}
