use fundrank::geometry::{fundamental_global, project, CameraPose};
use fundrank::location::{essential_error, extract_direction, location_error, recover_locations, DirectionSet};
use fundrank::multiview::{build_factors, rank_profile, svp, MultiviewBlockMatrix, DEFAULT_RANK_TOL};
use fundrank::synth::{corrupt, generate_scene, Layout, SceneConfig};
use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

fn pose() -> impl Strategy<Value = CameraPose> {
    (vec3(3.0), vec3(5.0)).prop_map(|(axis, center)| {
        CameraPose::calibrated(*Rotation3::new(axis).matrix(), center).unwrap()
    })
}

fn layout() -> impl Strategy<Value = Layout> {
    prop_oneof![Just(Layout::Sphere), Just(Layout::Ring), Just(Layout::Collinear)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epipolar_constraint_holds(a in pose(), b in pose(), p in vec3(1.0)) {
        let (pa, pb) = match (project(&a, &p), project(&b, &p)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => return Ok(()),
        };
        let f = fundamental_global(&a, &b);
        let lhs = (pa.transpose() * f * pb)[0];
        prop_assert!(lhs.abs() <= 1e-10 * f.norm() * pa.norm() * pb.norm());
        prop_assert!((fundamental_global(&b, &a) - f.transpose()).norm() <= 1e-12 * f.norm().max(1.0));
    }

    #[test]
    fn factors_reproduce_multiview_matrix(seed in 0u64..10_000, n in 3usize..9, layout in layout()) {
        let scene = generate_scene(&SceneConfig { n_cameras: n, layout, seed, ..SceneConfig::default() }).unwrap();
        let f = MultiviewBlockMatrix::from_poses(&scene.poses);
        prop_assert!(f.symmetry_residual() <= 1e-10 * f.data().norm());
        let a = build_factors(&scene.poses).unwrap().product();
        prop_assert!((&a + a.transpose() - f.data()).norm() <= 1e-10 * f.data().norm());
        for i in 0..n {
            let d = a.fixed_view::<3, 3>(3 * i, 3 * i);
            prop_assert!((d + d.transpose()).norm() <= 1e-12);
        }
    }

    #[test]
    fn rank_is_invariant_under_camera_scaling(
        seed in 0u64..10_000,
        scales in prop::collection::vec(0.2f64..5.0, 6),
        layout in layout(),
    ) {
        let scene = generate_scene(&SceneConfig { n_cameras: 6, layout, seed, ..SceneConfig::default() }).unwrap();
        let e = MultiviewBlockMatrix::essentials_from_poses(&scene.poses);
        let scaled = e.scaled_by_cameras(&scales).unwrap();
        prop_assert_eq!(
            e.rank_profile(DEFAULT_RANK_TOL).rank,
            scaled.rank_profile(DEFAULT_RANK_TOL).rank
        );
    }

    #[test]
    fn svp_is_idempotent(entries in prop::collection::vec(-1.0f64..1.0, 36), r in 1usize..5) {
        let m = DMatrix::from_vec(6, 6, entries);
        let once = svp(&m, r);
        let twice = svp(&once, r);
        prop_assert!((&twice - &once).norm() <= 1e-12 * m.norm().max(1.0));
        prop_assert!(rank_profile(&once, 1e-10).rank <= r);
    }

    #[test]
    fn corruption_partitions_pairs(seed in 0u64..10_000, outliers in 0.0f64..0.5, missing in 0.0f64..0.5) {
        let config = SceneConfig {
            n_cameras: 7,
            outlier_fraction: outliers,
            missing_fraction: missing,
            unit_normalize: false,
            seed,
            ..SceneConfig::default()
        };
        let scene = generate_scene(&config).unwrap();
        let truth = MultiviewBlockMatrix::from_poses(&scene.poses);
        let (f_hat, report) = corrupt(&truth, &config).unwrap();
        let (again, _) = corrupt(&truth, &config).unwrap();
        prop_assert_eq!(f_hat.data(), again.data());
        for (i, j) in truth.unordered_pairs() {
            let missing = report.missing_pairs.contains(&(i, j));
            let outlier = report.outlier_pairs.contains(&(i, j));
            prop_assert!(!(missing && outlier));
            prop_assert_eq!(f_hat.observed(i, j), !missing);
            if !missing && !outlier {
                // Noise-free: dividing out the recorded scale restores the truth.
                let mu = report.true_scales.get(i, j);
                let restored = f_hat.block(i, j) / mu;
                prop_assert!((restored - truth.block(i, j)).norm() <= 1e-12 * truth.block(i, j).norm());
            }
        }
    }

    #[test]
    fn directions_are_antisymmetric(a in pose(), b in pose()) {
        prop_assume!((a.center() - b.center()).norm() > 1e-3);
        let e_ab = fundamental_global(&a, &b);
        let e_ba = fundamental_global(&b, &a);
        // A point in front of neither or both: use a shared synthetic ray pair.
        let p = (a.center() + b.center()) * 0.5 + Vector3::new(0.0, 0.0, 100.0);
        let rays_ab = vec![(a.rotation().transpose() * (p - a.center()), b.rotation().transpose() * (p - b.center()))];
        let rays_ba = vec![(rays_ab[0].1, rays_ab[0].0)];
        let g_ab = extract_direction(&e_ab, a.rotation(), b.rotation(), Some(&rays_ab)).unwrap();
        let g_ba = extract_direction(&e_ba, b.rotation(), a.rotation(), Some(&rays_ba)).unwrap();
        prop_assert!((g_ab + g_ba).norm() <= 1e-8);
        let truth = (a.center() - b.center()).normalize();
        prop_assert!((g_ab - truth).norm() <= 1e-8);
    }

    #[test]
    fn errors_are_gauge_invariant(
        seed in 0u64..10_000,
        axis in vec3(3.0),
        shift in vec3(10.0),
        s in 0.1f64..10.0,
    ) {
        let scene = generate_scene(&SceneConfig { n_cameras: 6, seed, ..SceneConfig::default() }).unwrap();
        let rot = *Rotation3::new(axis).matrix();
        let moved: Vec<CameraPose> = scene
            .poses
            .iter()
            .map(|p| CameraPose::calibrated(rot * p.rotation(), rot * p.center() + shift).unwrap())
            .collect();
        let e = MultiviewBlockMatrix::essentials_from_poses(&scene.poses);
        let e_moved = MultiviewBlockMatrix::essentials_from_poses(&moved);
        let perturb = Matrix3::new(0.0, 0.1, 0.0, 0.0, 0.0, 0.2, 0.05, 0.0, 0.0);
        for (i, j) in e.unordered_pairs() {
            let d1 = essential_error(&(e.block(i, j) + perturb), &e.block(i, j)).unwrap();
            // A world rotation leaves every essential block unchanged.
            prop_assert!((e_moved.block(i, j) - e.block(i, j)).norm() <= 1e-10 * e.block(i, j).norm().max(1.0));
            let d2 = essential_error(&(e_moved.block(i, j) + perturb), &e_moved.block(i, j)).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-10 * d1.max(1.0));
        }
        let t_ref = scene.centers();
        let t_est: Vec<_> = t_ref.iter().enumerate()
            .map(|(k, t)| t + Vector3::new(0.01 * k as f64, -0.02, 0.003 * (k * k) as f64))
            .collect();
        let moved_ref: Vec<_> = t_ref.iter().map(|t| rot * t * s + shift).collect();
        let moved_est: Vec<_> = t_est.iter().map(|t| rot * t * s + shift).collect();
        let before = location_error(&t_est, &t_ref).unwrap();
        let after = location_error(&moved_est, &moved_ref).unwrap();
        for (x, y) in before.iter().zip(&after) {
            // Errors live in reference units, which the similarity rescales by s.
            prop_assert!((x * s - y).abs() <= 1e-10 * s.max(1.0));
        }
    }

    #[test]
    fn exact_directions_interpolate(seed in 0u64..10_000, n in 3usize..9) {
        let scene = generate_scene(&SceneConfig { n_cameras: n, seed, ..SceneConfig::default() }).unwrap();
        let t = scene.centers();
        let mut directions = DirectionSet::new();
        for i in 0..n {
            for j in (i + 1)..n {
                directions.insert(i, j, t[i] - t[j]);
            }
        }
        let sol = recover_locations(&directions, n, false).unwrap();
        prop_assert!(sol.residual_history[0] < 1e-10);
        let errs = location_error(&sol.t, &t).unwrap();
        prop_assert!(errs.iter().all(|e| *e < 1e-6));
    }
}
