use proptest::prelude::*;
use sfclab::cons::{basis_function, BasisSpec};
use sfclab::grid::{l2_inner, sample_brownian, BrownianPath, Convention, Grid, GridFunction, C64};
use sfclab::processes::{DetFunction, PathFunctional, RandomFunctionSpec};
use sfclab::reconstruct::{
    left_continuous_mod, lil_abs_estimator, local_average, parseval_transform, recover_drift, IdentificationParams,
    LilEstimator, LilParams, Pipeline, Side,
};
use sfclab::sfc::{apply_mask, compute_sfc, Diffusion, IndexMask, IntegralFlavor, SfcParams, StochasticDifferential};

fn diff(a: RandomFunctionSpec, b: RandomFunctionSpec) -> StochasticDifferential {
    StochasticDifferential::new(a, b, IntegralFlavor::OgawaU)
}

fn params() -> SfcParams {
    SfcParams::default()
}

/// Scaled path `c B` on the same grid.
fn scaled(path: &BrownianPath, c: f64) -> GridFunction {
    let v: Vec<f64> = path.values().iter().map(|b| c * b).collect();
    GridFunction::from_real(*path.grid(), &v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sfc_is_linear_in_the_differential(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let grid = Grid::new(1.0, 256).unwrap();
        let path = sample_brownian(grid, seed);
        let e = BasisSpec::haar();
        let a1 = RandomFunctionSpec::fv(DetFunction::sine(1.0), PathFunctional::Terminal);
        let b1 = RandomFunctionSpec::deterministic(DetFunction::linear(1.0, 0.0));
        let combo_a = RandomFunctionSpec::fv(DetFunction::Product { factors: vec![DetFunction::constant(alpha), DetFunction::sine(1.0)] }, PathFunctional::Terminal);
        let combo_b = RandomFunctionSpec::deterministic(DetFunction::linear(beta, 0.0));
        let s_a = compute_sfc(&diff(a1, RandomFunctionSpec::zero()), &path, &e, 256, &params()).unwrap();
        let s_b = compute_sfc(&diff(RandomFunctionSpec::zero(), b1), &path, &e, 256, &params()).unwrap();
        let s = compute_sfc(&diff(combo_a, combo_b), &path, &e, 256, &params()).unwrap();
        for n in 0..256 {
            let want = s_a.values[n] * alpha + s_b.values[n] * beta;
            prop_assert!((s.values[n] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn masking_is_idempotent_and_commutes(x in prop::collection::btree_set(1usize..=64, 0..6), y in prop::collection::btree_set(1usize..=64, 0..6), seed in any::<u64>()) {
        let grid = Grid::new(1.0, 64).unwrap();
        let path = sample_brownian(grid, seed);
        let s = compute_sfc(&diff(RandomFunctionSpec::constant(1.0), RandomFunctionSpec::zero()), &path, &BasisSpec::haar(), 64, &params()).unwrap();
        let mx = IndexMask::excluding(64, x.iter().copied()).unwrap();
        let my = IndexMask::excluding(64, y.iter().copied()).unwrap();
        let once = apply_mask(&s, &mx).unwrap();
        prop_assert_eq!(apply_mask(&once, &mx).unwrap(), once.clone());
        let xy = apply_mask(&once, &my).unwrap();
        let yx = apply_mask(&apply_mask(&s, &my).unwrap(), &mx).unwrap();
        prop_assert_eq!(xy, yx);
    }

    #[test]
    fn parseval_completeness_for_every_family(seed in any::<u64>(), fam in 0usize..4) {
        let grid = Grid::new(1.0, 128).unwrap();
        let path = sample_brownian(grid, seed);
        let e = [BasisSpec::haar(), BasisSpec::cosine(), BasisSpec::trigonometric(), BasisSpec::indicator()][fam];
        let s = compute_sfc(&diff(RandomFunctionSpec::constant(1.0), RandomFunctionSpec::zero()), &path, &e, 128, &params()).unwrap();
        let p = parseval_transform(&s, &e, &grid).unwrap();
        for (x, b) in p.values().iter().zip(path.values()) {
            prop_assert!((x - C64::new(*b, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn magnitude_estimator_is_positively_homogeneous(seed in any::<u64>(), c in 0.01f64..100.0, node in 0usize..900) {
        let grid = Grid::new(1.0, 1 << 10).unwrap();
        let path = sample_brownian(grid, seed);
        let est = LilEstimator::new(grid, LilParams::new(1.0 / 16.0)).unwrap();
        let x = left_continuous_mod(&scaled(&path, 1.0));
        let base = est.abs_estimate(&x, node, 1.0).unwrap();
        let scaled_est = est.abs_estimate(&x.scale(C64::new(c, 0.0)), node, 1.0).unwrap();
        prop_assert!((scaled_est - c * base).abs() <= 1e-12 * c * base.abs().max(1.0));
    }

    #[test]
    fn drift_perturbation_is_bounded(seed in any::<u64>(), amp in -5.0f64..5.0, freq in 0.0f64..20.0, node in 0usize..900) {
        let grid = Grid::new(1.0, 1 << 10).unwrap();
        let path = sample_brownian(grid, seed);
        let h_max = 1.0 / 16.0;
        let est = LilEstimator::new(grid, LilParams::new(h_max)).unwrap();
        let x = scaled(&path, 1.0);
        let b = GridFunction::from_real_fn(grid, |t| amp * (freq * t).cos() + 0.5).unwrap();
        let mut acc = 0.0;
        let mut prim = vec![0.0];
        for v in b.cells() {
            acc += v.re * grid.dt();
            prim.push(acc);
        }
        let shifted = x.add(&GridFunction::from_real(grid, &prim).unwrap()).unwrap();
        let change = (est.abs_estimate(&shifted, node, 1.0).unwrap() - est.abs_estimate(&x, node, 1.0).unwrap()).abs();
        let bound = b.l2_norm() / (2.0 * (1.0 / h_max).ln().ln()).sqrt();
        prop_assert!(change <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn mask_perturbation_is_bounded(seed in any::<u64>(), removed in prop::collection::btree_set(1usize..=64, 1..5), node in 0usize..900) {
        let grid = Grid::new(1.0, 1 << 10).unwrap();
        let path = sample_brownian(grid, seed);
        let e = BasisSpec::haar();
        let d = diff(
            RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::CosTerminal),
            RandomFunctionSpec::deterministic(DetFunction::sine(2.0)),
        );
        let s = compute_sfc(&d, &path, &e, 1 << 10, &params()).unwrap();
        let m = IndexMask::excluding(1 << 10, removed.iter().copied()).unwrap();
        let full = left_continuous_mod(&parseval_transform(&s, &e, &grid).unwrap());
        let masked = left_continuous_mod(&parseval_transform(&apply_mask(&s, &m).unwrap(), &e, &grid).unwrap());
        let h_max = 1.0 / 16.0;
        let est = LilEstimator::new(grid, LilParams::new(h_max)).unwrap();
        let change = (est.abs_estimate(&masked, node, 1.0).unwrap() - est.abs_estimate(&full, node, 1.0).unwrap()).abs();
        let mass: f64 = removed.iter().map(|&n| s.values[n - 1].norm()).sum();
        let bound = mass / (2.0 * (1.0 / h_max).ln().ln()).sqrt();
        prop_assert!(change <= bound * (1.0 + 1e-12) + 1e-15);
    }
}

#[test]
fn self_calibrated_estimates_are_exact_on_scaled_paths() {
    let grid = Grid::new(1.0, 1 << 12).unwrap();
    let est = LilEstimator::new(grid, LilParams::new(1.0 / 32.0)).unwrap();
    for seed in 0..10 {
        let path = sample_brownian(grid, seed);
        for a in [-2.0, -1.0, 0.5, 3.0] {
            let x = scaled(&path, a);
            let cal = est.calibration_factor(&path, 1000).unwrap();
            assert!((est.abs_estimate(&x, 1000, cal).unwrap() - a.abs()).abs() < 1e-12);
            let s = est.signed_estimate(&x, &path, 1000).unwrap();
            assert!(s.stabilized);
            assert!((s.value - a).abs() < 1e-12, "a = {a}: {:?}", s.k_trace);
        }
    }
}

#[test]
fn lcm_is_idempotent_and_tagged() {
    let grid = Grid::new(1.0, 32).unwrap();
    let path = sample_brownian(grid, 3);
    let x = scaled(&path, 1.0);
    let once = left_continuous_mod(&x);
    assert_eq!(once.convention(), Convention::LeftContinuous);
    assert_eq!(left_continuous_mod(&once), once);
    assert_eq!(once.value(5).re, path.values()[4]);
}

#[test]
fn free_estimator_needs_the_path_for_calibration() {
    let grid = Grid::new(1.0, 1 << 10).unwrap();
    let path = sample_brownian(grid, 1);
    let x = scaled(&path, 2.0);
    let p = LilParams::new(1.0 / 16.0);
    assert!(lil_abs_estimator(&x, 10, &p, None).is_err());
    assert!((lil_abs_estimator(&x, 10, &p, Some(&path)).unwrap() - 2.0).abs() < 1e-12);
    assert!(lil_abs_estimator(&x, 1000, &p, Some(&path)).is_err());
}

#[test]
fn local_average_of_constant_is_constant() {
    let grid = Grid::new(1.0, 1 << 10).unwrap();
    let c = GridFunction::constant(grid, C64::new(1.5, 0.0));
    let r = local_average(&c, 100, Side::Right, &[64.0, 128.0, 256.0]).unwrap();
    assert!((r.value - 1.5).abs() < 1e-12);
    let l = local_average(&c, 100, Side::Left, &[64.0, 128.0, 256.0]).unwrap();
    assert!((l.value - 1.5).abs() < 1e-12);
    assert!(local_average(&c, 0, Side::Left, &[64.0]).is_err());
}

#[test]
fn drift_recovery_returns_the_lambda_projection() {
    let grid = Grid::new(1.0, 256).unwrap();
    let path = sample_brownian(grid, 6);
    let e = BasisSpec::haar();
    let b = DetFunction::linear(1.0, 0.0);
    let d = diff(RandomFunctionSpec::constant(1.0), RandomFunctionSpec::deterministic(b.clone()));
    let (a_form, _) = d.lower(&grid).unwrap();
    let s = compute_sfc(&d, &path, &e, 256, &params()).unwrap();
    let mask = IndexMask::excluding(256, [1, 2, 3]).unwrap();
    let rec = recover_drift(&s, Diffusion::Form(&a_form), &path, &e, &mask, IntegralFlavor::OgawaU).unwrap();
    let b = b.realize(&grid).unwrap();
    let mut want = b.cells().to_vec();
    for n in 1..=3 {
        let en = basis_function(&e, n, &grid).unwrap();
        let c = l2_inner(&en, &b).unwrap();
        want.iter_mut().zip(en.cells()).for_each(|(w, v)| *w -= c * v);
    }
    for (x, y) in rec.cells().iter().zip(&want) {
        assert!((x - y).norm() < 1e-10);
    }
}

#[test]
fn skorokhod_flavor_pipeline_recovers_drift() {
    let grid = Grid::new(1.0, 1 << 12).unwrap();
    let a = RandomFunctionSpec::LocallyAc {
        a0: Box::new(RandomFunctionSpec::constant(1.0)),
        derivative: Box::new(RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::Terminal)),
    };
    let b = DetFunction::sine(1.0);
    let d = StochasticDifferential::new(a, RandomFunctionSpec::deterministic(b.clone()), IntegralFlavor::Skorokhod);
    let params = IdentificationParams {
        lil: Some(LilParams::new(1.0 / 16.0)),
        nodes: vec![512, 1024],
        smoothing: Vec::new(),
        recover_drift: true,
        sfc: SfcParams::default(),
    };
    let pipe = Pipeline::new(&d, grid, BasisSpec::haar(), IndexMask::full(1 << 12), params).unwrap();
    let report = pipe.run(&sample_brownian(grid, 2)).unwrap();
    let drift = report.drift.unwrap();
    let truth = b.realize(&grid).unwrap();
    for (x, y) in drift.cells().iter().zip(truth.cells()) {
        assert!((x - y).norm() < 1e-9);
    }
    assert_eq!(report.abs_curve.len(), 2);
    assert!(matches!(
        Pipeline::new(
            &StochasticDifferential::new(
                RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::AbsTerminal),
                RandomFunctionSpec::zero(),
                IntegralFlavor::Skorokhod
            ),
            grid,
            BasisSpec::haar(),
            IndexMask::full(16),
            IdentificationParams { lil: None, nodes: vec![], smoothing: vec![], recover_drift: false, sfc: SfcParams::default() }
        ),
        Err(sfclab::Error::FlavorMismatch(_))
    ));
}
