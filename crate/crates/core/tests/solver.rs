use fundrank::location::essential_error;
use fundrank::multiview::{rank_profile, MultiviewBlockMatrix};
use fundrank::solver::{cost, solve, Initialization, SolverConfig, SolverStatus};
use fundrank::synth::{corrupt, generate_scene, SceneConfig};

fn problem(n: usize, missing: f64, seed: u64) -> (MultiviewBlockMatrix, MultiviewBlockMatrix) {
    let config = SceneConfig {
        n_cameras: n,
        missing_fraction: missing,
        unit_normalize: false,
        seed,
        ..SceneConfig::default()
    };
    let scene = generate_scene(&config).unwrap();
    let truth = MultiviewBlockMatrix::from_poses(&scene.poses);
    let (f_hat, _) = corrupt(&truth, &config).unwrap();
    (truth, f_hat)
}

fn max_block_error(out: &MultiviewBlockMatrix, truth: &MultiviewBlockMatrix) -> f64 {
    truth
        .unordered_pairs()
        .map(|(i, j)| essential_error(&out.block(i, j), &truth.block(i, j)).unwrap() / 100.0)
        .fold(0.0, f64::max)
}

#[test]
fn exact_input_is_a_fixed_point() {
    let scene = generate_scene(&SceneConfig {
        n_cameras: 8,
        seed: 4,
        ..SceneConfig::default()
    })
    .unwrap();
    let truth = MultiviewBlockMatrix::from_poses(&scene.poses);
    for init in [Initialization::Spectral, Initialization::Completion] {
        let out = solve(&truth, &SolverConfig::default(), &init).unwrap();
        assert!(out.final_cost() < 1e-10, "{:?}", out.cost_history());
        assert!(max_block_error(&out.f, &truth) < 1e-8);
    }
}

#[test]
fn missing_pairs_are_filled_in() {
    for seed in 0..3 {
        let (truth, f_hat) = problem(12, 0.3, 40 + seed);
        let out = solve(&f_hat, &SolverConfig::default(), &Initialization::Completion).unwrap();
        let missing: Vec<_> = truth.unordered_pairs().filter(|&(i, j)| !f_hat.observed(i, j)).collect();
        assert!(!missing.is_empty());
        assert!(missing.iter().all(|&(i, j)| out.f.observed(i, j)));
        assert!(max_block_error(&out.f, &truth) < 1e-6);
    }
}

#[test]
fn output_satisfies_structural_invariants() {
    let (_, f_hat) = problem(9, 0.2, 7);
    let out = solve(&f_hat, &SolverConfig::default(), &Initialization::Completion).unwrap();
    let n = f_hat.n();
    let lambda = out.scales.as_matrix();
    assert_eq!(lambda, &lambda.transpose());
    assert!((0..n).all(|i| lambda[(i, i)] == 0.0));
    assert!(rank_profile(&out.state.b, 1e-10).rank <= 3);
    assert!(out.state.weights.as_matrix().iter().all(|w| *w >= 0.0));
    for i in 0..n {
        assert_eq!(out.f.block(i, i), nalgebra::Matrix3::zeros());
        let d = out.a.fixed_view::<3, 3>(3 * i, 3 * i);
        assert!((d + d.transpose()).norm() < 1e-12 * out.a.norm());
    }
    // Canonical gauge.
    assert!((out.a.norm() - 0.5 * f_hat.data().norm()).abs() < 1e-10 * f_hat.data().norm());
    assert_eq!(out.state.cost_history.len(), out.state.irls_iterations);
}

#[test]
fn cost_is_invariant_under_the_scale_gauge() {
    let (_, f_hat) = problem(6, 0.0, 3);
    let out = solve(&f_hat, &SolverConfig::default(), &Initialization::Completion).unwrap();
    let c = cost(&f_hat, &out.a, &out.scales);
    for s in [0.01, 0.5, 3.0, 100.0] {
        let c_s = cost(&f_hat, &(&out.a * s), &out.scales.scaled(1.0 / s));
        assert!((c - c_s).abs() <= 1e-10 * c.max(1.0));
    }
}

#[test]
fn non_convergence_is_a_status() {
    let (_, f_hat) = problem(8, 0.2, 11);
    let config = SolverConfig {
        max_irls: 1,
        max_admm: 2,
        ..SolverConfig::default()
    };
    let out = solve(&f_hat, &config, &Initialization::Spectral).unwrap();
    assert_eq!(out.state.cost_history.len(), 1);
    assert!(matches!(out.status, SolverStatus::MaxIter | SolverStatus::Converged));
    assert!(out.f.data().iter().all(|v| v.is_finite()));
}

#[test]
fn warm_start_from_true_poses_is_exact() {
    let config = SceneConfig {
        n_cameras: 10,
        missing_fraction: 0.3,
        unit_normalize: false,
        seed: 21,
        ..SceneConfig::default()
    };
    let scene = generate_scene(&config).unwrap();
    let truth = MultiviewBlockMatrix::from_poses(&scene.poses);
    let (f_hat, _) = corrupt(&truth, &config).unwrap();
    let out = solve(&f_hat, &SolverConfig::default(), &Initialization::Poses(scene.poses.clone())).unwrap();
    assert!(max_block_error(&out.f, &truth) < 1e-8);
}

#[test]
fn invalid_configs_are_rejected() {
    let (_, f_hat) = problem(5, 0.0, 1);
    let bad = SolverConfig {
        delta: 0.0,
        ..SolverConfig::default()
    };
    assert!(matches!(
        solve(&f_hat, &bad, &Initialization::Spectral),
        Err(fundrank::Error::InvalidConfig { field, .. }) if field == "delta"
    ));
}
