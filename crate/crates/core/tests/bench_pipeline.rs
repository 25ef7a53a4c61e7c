use motionavg::bench::{
    evaluate, generate_ground_truth, make_relative_motions, perturb_edges, run_trial, sweep_alpha, ScenarioSpec,
};
use motionavg::{compose, inverse, is_connected, log_motion, GlobalMotionSet, Mode, SolverConfig};

const ALL_MODES: [Mode; 3] = [Mode::Mcc, Mode::Plain, Mode::FixedWeights];

fn clean(n_views: usize, edge_density: f64, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        n_views,
        edge_density,
        rot_noise_deg: 0.0,
        trans_noise: 0.0,
        outlier_fraction: 0.0,
        seed,
        init_perturbation: 0.1,
    }
}

#[test]
fn rotational_noise_has_the_requested_spread() {
    // complete graph on 142 views: 10011 edges
    let truth = generate_ground_truth(142, 8);
    let g = make_relative_motions(&truth, 1.0, 8).unwrap();
    assert!(g.n_edges() >= 10_000);
    let sigma = 0.3f64.to_radians();
    let noisy = perturb_edges(&g, 0.3, 0.0, 8);

    let mut sum_sq = [0.0f64; 3];
    for (a, b) in g.edges().iter().zip(noisy.edges()) {
        let x = log_motion(&compose(&inverse(&a.measurement), &b.measurement)).unwrap();
        assert!(x.u.norm() < 1e-9);
        for k in 0..3 {
            assert!(x.omega[k].abs() <= 5.0 * sigma);
            sum_sq[k] += x.omega[k] * x.omega[k];
        }
    }
    for s in sum_sq {
        let std = (s / g.n_edges() as f64).sqrt();
        assert!((std / sigma - 1.0).abs() < 0.1, "empirical std {} deg", std.to_degrees());
    }
}

#[test]
fn noiseless_pipeline_is_exact_in_every_mode() {
    for n in [5, 10, 15, 36] {
        for density in [0.3, 0.5, 1.0] {
            let trial = run_trial(&clean(n, density, n as u64), &SolverConfig::default(), &ALL_MODES).unwrap();
            assert!(is_connected(&trial.scene.graph));
            for run in &trial.runs {
                assert!(run.converged(), "N={n} density={density} {:?}", run.mode);
                assert!(run.e_r() < 1e-8 && run.e_t() < 1e-8, "N={n} density={density} {:?}", run.mode);
            }
        }
    }
}

#[test]
fn outlier_weights_separate_from_inliers() {
    let mut separated = 0;
    for seed in 0..20 {
        let spec = ScenarioSpec {
            seed,
            ..Default::default()
        };
        let trial = run_trial(&spec, &SolverConfig::default(), &[Mode::Mcc]).unwrap();
        let weights = &trial.runs[0].report().unwrap().final_weights;
        let outliers = &trial.scene.outliers;
        assert!(!outliers.is_empty());
        let worst_outlier = outliers.iter().map(|&h| weights[h]).fold(0.0, f64::max);
        let weakest_inlier = (0..weights.len())
            .filter(|h| !outliers.contains(h))
            .map(|h| weights[h])
            .fold(1.0, f64::min);
        if worst_outlier < weakest_inlier {
            separated += 1;
        }
    }
    assert!(separated >= 18, "separated on {separated} of 20 seeds");
}

#[test]
fn evaluate_is_symmetric() {
    let a = generate_ground_truth(9, 1);
    let b = generate_ground_truth(9, 2);
    let ab = evaluate(&a, &b).unwrap();
    let ba = evaluate(&b, &a).unwrap();
    assert_eq!(ab.e_r, ba.e_r);
    assert_eq!(ab.e_t, ba.e_t);
    assert_eq!(ab.per_view.len(), 9);
    assert!(evaluate(&a, &GlobalMotionSet::identity(8)).is_err());
}

#[test]
fn trials_are_deterministic() {
    let spec = ScenarioSpec {
        seed: 3,
        ..Default::default()
    };
    let a = run_trial(&spec, &SolverConfig::default(), &[Mode::Mcc, Mode::Plain]).unwrap();
    let b = run_trial(&spec, &SolverConfig::default(), &[Mode::Mcc, Mode::Plain]).unwrap();
    assert_eq!(a.scene, b.scene);
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.outcome.as_ref().ok(), y.outcome.as_ref().ok());
    }
}

#[test]
fn single_alpha_sweep_matches_trial() {
    let spec = ScenarioSpec {
        seed: 4,
        ..Default::default()
    };
    let cfg = SolverConfig::default();
    let sweep = sweep_alpha(&spec, &[1.0], &cfg).unwrap();
    let trial = run_trial(&spec, &cfg, &[Mode::Mcc]).unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].outcome.as_ref().ok(), trial.runs[0].outcome.as_ref().ok());
}

#[test]
fn alpha_is_irrelevant_on_noiseless_scenes() {
    let rows = sweep_alpha(&clean(12, 0.5, 6), &[0.4, 0.7, 1.0, 1.5, 2.0], &SolverConfig::default()).unwrap();
    for r in &rows {
        assert!((r.e_r() - rows[0].e_r()).abs() < 1e-8);
        assert!((r.e_t() - rows[0].e_t()).abs() < 1e-8);
    }
}
