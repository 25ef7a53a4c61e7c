use std::f64::consts::PI;

use motionavg::bench::{generate_ground_truth, make_relative_motions, perturb_edges};
use motionavg::io::quat::{quaternion_to_rotation, rotation_to_quaternion};
use motionavg::io::{parse_g2o, parse_json, write_g2o, write_json};
use motionavg::{
    build_graph, exp_twist, residual_motion_error, spanning_tree_init, GlobalMotionSet, Motion, MotionGraph,
    RelativeMotionEdge, Twist,
};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy random graph with random weights, plus the truth it was built from.
fn random_graph(seed: u64) -> (MotionGraph, GlobalMotionSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..20);
    let density = rng.random_range(0.05..=1.0);
    let truth = generate_ground_truth(n, seed);
    let g = perturb_edges(&make_relative_motions(&truth, density, seed).unwrap(), 2.0, 0.1, seed);
    let edges = g
        .edges()
        .iter()
        .map(|e| RelativeMotionEdge::weighted(e.i, e.j, e.measurement, rng.random_range(1e-3..=1.0)))
        .collect();
    (build_graph(n, edges).unwrap(), truth)
}

fn max_rotation_gap(a: &Motion, b: &Motion) -> f64 {
    (a.r - b.r).abs().max()
}

#[test]
fn json_roundtrip_is_exact_on_random_graphs() {
    for seed in 0..100 {
        let (g, truth) = random_graph(seed);
        let text = write_json(&g, Some(&truth), None);
        let doc = parse_json(&text).unwrap();
        assert_eq!(doc.graph, g, "seed {seed}");
        assert_eq!(doc.globals.as_ref(), Some(&truth), "seed {seed}");
        assert_eq!(write_json(&doc.graph, doc.globals.as_ref(), None), text);
    }
}

#[test]
fn g2o_roundtrip_on_random_graphs() {
    for seed in 0..100 {
        let (g, truth) = random_graph(seed);
        let doc = parse_g2o(&write_g2o(&g, Some(&truth))).unwrap();
        assert_eq!(doc.ids, (0..g.n_views() as i64).collect::<Vec<_>>());
        assert_eq!(doc.graph.n_edges(), g.n_edges());
        for (a, b) in doc.graph.edges().iter().zip(g.edges()) {
            assert_eq!((a.i, a.j), (b.i, b.j));
            // translations are written verbatim; rotations pass through a quaternion
            assert_eq!(a.measurement.t, b.measurement.t);
            assert!(max_rotation_gap(&a.measurement, &b.measurement) < 1e-14, "seed {seed}");
        }
        for (a, b) in doc.globals.unwrap().iter().zip(truth.iter()) {
            assert_eq!(a.t, b.t);
            assert!(max_rotation_gap(a, b) < 1e-14);
        }
    }
}

#[test]
fn g2o_text_is_stable_after_one_cycle() {
    for seed in 0..20 {
        let (g, truth) = random_graph(seed);
        let once = parse_g2o(&write_g2o(&g, Some(&truth))).unwrap();
        let text = write_g2o(&once.graph, once.globals.as_ref());
        let twice = parse_g2o(&text).unwrap();
        for (a, b) in twice.graph.edges().iter().zip(once.graph.edges()) {
            assert!(max_rotation_gap(&a.measurement, &b.measurement) < 1e-15);
        }
    }
}

#[test]
fn quaternion_roundtrip_of_random_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let m = Motion::from_axis_angle(axis, rng.random_range(0.0..PI), Vector3::zeros());
        let back = quaternion_to_rotation(rotation_to_quaternion(&m.r)).unwrap();
        worst = worst.max((back - m.r).abs().max());
    }
    assert!(worst < 1e-12, "worst deviation {worst:e}");
}

#[test]
fn the_three_parse_error_examples() {
    let err = parse_g2o("# header\n\nEDGE_SE3:QUAT 0 1 0 0 0 2 0 0 0").unwrap_err();
    assert_eq!(err.line, 3);
    assert!(err.to_string().contains("quaternion"));

    let err = parse_g2o("EDGE_SE3:QUAT 0 1 0 0 0 0 0 0 1\nEDGE_SE3:QUAT 0 1 0 0 0 0 0 0 1\n").unwrap_err();
    assert_eq!(err.line, 2);
    assert!(err.to_string().contains("duplicates"));

    let err = parse_json(r#"{"edges": []}"#).unwrap_err();
    assert!(err.to_string().contains("n_views"));

    let err = parse_json(r#"{"n_views": 2, "edges": [{"i": 0, "j": 1, "r": [1, 0, 0], "t": [0, 0, 0]}]}"#)
        .unwrap_err();
    assert_eq!(err.path, "edges[0].r");
}

#[test]
fn residual_error_is_gauge_invariant_and_zero_at_the_tree_init() {
    for seed in 0..20 {
        let truth = generate_ground_truth(8, seed);
        let g = make_relative_motions(&truth, 0.6, seed).unwrap();
        let init = spanning_tree_init(&g).unwrap();
        assert!(residual_motion_error(&g, &init).unwrap() < 1e-10);

        let noisy = perturb_edges(&g, 3.0, 0.2, seed);
        let base = residual_motion_error(&noisy, &truth).unwrap();
        let gauge = exp_twist(&Twist::new(Vector3::new(0.3, -1.1, 0.7), Vector3::new(4.0, 2.0, -9.0)));
        let moved = residual_motion_error(&noisy, &truth.left_multiplied(&gauge)).unwrap();
        assert!((base - moved).abs() < 1e-10);
    }
}

fn g2o_line() -> impl Strategy<Value = String> {
    let tag = prop_oneof![
        Just("VERTEX_SE3:QUAT"),
        Just("EDGE_SE3:QUAT"),
        Just("FIX"),
        Just("#"),
        Just(""),
    ];
    let token = prop_oneof![
        Just("0".to_string()),
        Just("1".to_string()),
        Just("2".to_string()),
        Just("0.5".to_string()),
        Just("-1".to_string()),
        Just("nan".to_string()),
        Just("x".to_string()),
        (-3.0f64..3.0).prop_map(|v| v.to_string()),
    ];
    (tag, proptest::collection::vec(token, 0..32)).prop_map(|(tag, toks)| format!("{tag} {}", toks.join(" ")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn g2o_parse_never_yields_an_invalid_graph(lines in proptest::collection::vec(g2o_line(), 0..6)) {
        let text = lines.join("\n");
        match parse_g2o(&text) {
            Ok(doc) => {
                for e in doc.graph.edges() {
                    prop_assert!(e.i < doc.graph.n_views() && e.j < doc.graph.n_views() && e.i != e.j);
                    prop_assert!(e.measurement.is_valid());
                }
                if let Some(globals) = &doc.globals {
                    prop_assert_eq!(globals.len(), doc.graph.n_views());
                    prop_assert!(globals.validate().is_ok());
                }
            }
            Err(e) => prop_assert!(e.line >= 1 && e.line <= lines.len().max(1)),
        }
    }

    #[test]
    fn g2o_parse_survives_arbitrary_text(text in "\\PC{0,200}") {
        if let Err(e) = parse_g2o(&text) {
            prop_assert!(e.line >= 1);
        }
    }
}
