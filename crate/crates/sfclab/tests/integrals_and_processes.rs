use proptest::prelude::*;
use sfclab::cons::BasisSpec;
use sfclab::grid::{sample_brownian, wiener_integral, BrownianPath, Grid, GridFunction, C64};
use sfclab::integrals::{
    left_point_sum, ogawa_ibp, ogawa_ibp_primitive, ogawa_phi_integral, ogawa_via_trace, s_type_decomposition,
    skorokhod_integral, symmetric_sum, universality_check,
};
use sfclab::processes::{
    jordan_decompose, malliavin_derivative, realize, ChaosTerm, DetFunction, Jump, PathFunctional,
    RandomFunctionSpec,
};

fn one() -> DetFunction {
    DetFunction::constant(1.0)
}

fn fv_specs() -> Vec<RandomFunctionSpec> {
    vec![
        RandomFunctionSpec::deterministic(DetFunction::linear(2.0, -1.0)),
        RandomFunctionSpec::fv(DetFunction::sine(1.0), PathFunctional::Terminal),
        RandomFunctionSpec::fv(DetFunction::linear(1.0, 0.5), PathFunctional::SinTerminal),
        RandomFunctionSpec::fv(one(), PathFunctional::CosTerminal),
        RandomFunctionSpec::fv(DetFunction::Sawtooth { period: 0.25, amplitude: 1.0 }, PathFunctional::Midpoint),
        RandomFunctionSpec::fv(one(), PathFunctional::Wiener(DetFunction::Indicator { start: 0.25, end: 0.75 })),
        RandomFunctionSpec::StepRandom {
            jumps: vec![
                Jump { time: 0.25, scale: 2.0, functional: Some(PathFunctional::Terminal) },
                Jump { time: 0.5, scale: -1.0, functional: None },
            ],
        },
        RandomFunctionSpec::FirstChaos {
            u0: DetFunction::constant(0.5),
            terms: vec![ChaosTerm { u: DetFunction::linear(1.0, 0.0), v: DetFunction::Indicator { start: 0.5, end: 1.0 } }],
        },
        RandomFunctionSpec::LocallyAc {
            a0: Box::new(RandomFunctionSpec::constant(1.0)),
            derivative: Box::new(RandomFunctionSpec::fv(one(), PathFunctional::Terminal)),
        },
    ]
}

/// Skorokhod integral of `g * F` for `F = B_L[v]`, from first principles:
/// `B_L[g] B_L[v] - <g, v>`.
fn skorokhod_linear_oracle(g: &GridFunction, v: &GridFunction, path: &BrownianPath) -> f64 {
    let l = path.grid().horizon();
    let inner: f64 = g.cells().iter().zip(v.cells()).map(|(a, b)| (a * b).re).sum::<f64>() * path.grid().dt();
    wiener_integral(g, path, l).unwrap().re * wiener_integral(v, path, l).unwrap().re - inner
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn series_matches_ibp_for_every_fv_spec(seed in any::<u64>(), which in 0usize..9) {
        let grid = Grid::new(1.0, 256).unwrap();
        let path = sample_brownian(grid, seed);
        let spec = &fv_specs()[which];
        let a = realize(spec, &path).unwrap().function;
        let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
        let ibp = ogawa_ibp(&a, &one, &path, 0.0, 1.0).unwrap();
        let series = ogawa_phi_integral(&a, &path, &BasisSpec::haar(), 256, 1e-10).unwrap();
        prop_assert!((series.value - ibp).norm() < 1e-9 * (1.0 + ibp.norm()));
    }

    #[test]
    fn malliavin_kernel_matches_finite_differences(seed in any::<u64>(), which in 1usize..9, i in 0usize..64, j in 0usize..65) {
        let grid = Grid::new(1.0, 64).unwrap();
        let path = sample_brownian(grid, seed);
        let spec = &fv_specs()[which];
        let kernel = malliavin_derivative(spec, &path).unwrap();
        let eps = 1e-6;
        let up = realize(spec, &path.perturbed(i, eps)).unwrap().function.value(j);
        let down = realize(spec, &path.perturbed(i, -eps)).unwrap().function.value(j);
        let fd = (up - down) / (2.0 * eps);
        prop_assert!((fd - kernel.at(i, j)).norm() < 1e-5, "fd {} kernel {}", fd, kernel.at(i, j));
    }

    #[test]
    fn trace_formula_bridges_skorokhod_and_ibp(seed in any::<u64>(), which in 0usize..9) {
        let grid = Grid::new(1.0, 256).unwrap();
        let path = sample_brownian(grid, seed);
        let spec = &fv_specs()[which];
        let a = realize(spec, &path).unwrap().function;
        let e = GridFunction::from_real_fn(grid, |t| 1.0 + (3.0 * t).cos()).unwrap();
        let ibp = ogawa_ibp(&a, &e, &path, 0.0, 1.0).unwrap();
        let via = ogawa_via_trace(spec, &path, &e).unwrap();
        prop_assert!((via - ibp).norm() < 1e-10 * (1.0 + ibp.norm()));
    }

    #[test]
    fn jordan_parts_are_monotone_and_recombine(values in prop::collection::vec(-4.0f64..4.0, 17)) {
        let grid = Grid::new(1.0, 16).unwrap();
        let r = GridFunction::from_real(grid, &values).unwrap();
        let (p, m) = jordan_decompose(&r).unwrap();
        for j in 0..=16 {
            prop_assert!((p.value(j).re - m.value(j).re - (values[j] - values[0])).abs() < 1e-12);
            if j > 0 {
                prop_assert!(p.value(j).re >= p.value(j - 1).re && m.value(j).re >= m.value(j - 1).re);
            }
        }
    }
}

#[test]
fn skorokhod_of_linear_functionals_matches_chaos_oracle() {
    let grid = Grid::new(1.0, 512).unwrap();
    let g = DetFunction::sine(2.0);
    let v = DetFunction::Indicator { start: 0.25, end: 0.75 };
    let spec = RandomFunctionSpec::fv(g.clone(), PathFunctional::Wiener(v.clone()));
    let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
    for seed in 0..20 {
        let path = sample_brownian(grid, seed);
        let got = skorokhod_integral(&spec, &path, &one).unwrap().re;
        let want = skorokhod_linear_oracle(&g.realize(&grid).unwrap(), &v.realize(&grid).unwrap(), &path);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn skorokhod_reduces_to_ito_for_adapted_integrands() {
    let grid = Grid::new(1.0, 256).unwrap();
    let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
    let det = RandomFunctionSpec::deterministic(DetFunction::sine(1.0));
    let adapted = RandomFunctionSpec::STypeIto {
        f: DetFunction::constant(1.0),
        h: Box::new(RandomFunctionSpec::zero()),
        a0: Box::new(RandomFunctionSpec::zero()),
    };
    for seed in 0..10 {
        let path = sample_brownian(grid, seed);
        for spec in [&det, &adapted] {
            let a = realize(spec, &path).unwrap().function;
            let ito = left_point_sum(&a, &one, &path).unwrap();
            assert!((skorokhod_integral(spec, &path, &one).unwrap() - ito).norm() < 1e-12);
        }
    }
}

#[test]
fn brownian_integrand_decomposition_is_the_symmetric_sum_up_to_quadratic_variation() {
    let grid = Grid::new(1.0, 1 << 12).unwrap();
    let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
    let spec = RandomFunctionSpec::STypeIto {
        f: DetFunction::constant(1.0),
        h: Box::new(RandomFunctionSpec::zero()),
        a0: Box::new(RandomFunctionSpec::zero()),
    };
    for seed in 0..5 {
        let path = sample_brownian(grid, seed);
        let a = realize(&spec, &path).unwrap().function;
        let d = s_type_decomposition(&spec, &path, &one).unwrap();
        let strat = symmetric_sum(&a, &one, &path).unwrap();
        assert!((strat.re - 0.5 * path.terminal().powi(2)).abs() < 1e-10);
        let qv: f64 = path.increments().iter().map(|x| x * x).sum();
        assert!((d.total().re - strat.re - 0.5 * (1.0 - qv)).abs() < 1e-10);
    }
}

#[test]
fn ibp_primitive_of_terminal_value() {
    let grid = Grid::new(1.0, 128).unwrap();
    let path = sample_brownian(grid, 9);
    let spec = RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::Terminal);
    let a = realize(&spec, &path).unwrap().function;
    let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
    let y = ogawa_ibp_primitive(&a, &one, &path).unwrap();
    for k in [1, 17, 64, 128] {
        assert!((y[k].re - path.terminal() * path.values()[k]).abs() < 1e-12);
    }
}

#[test]
fn bases_agree_on_fv_integrands() {
    let grid = Grid::new(1.0, 1024).unwrap();
    let path = sample_brownian(grid, 4);
    let f = realize(&RandomFunctionSpec::fv(DetFunction::linear(1.0, 0.0), PathFunctional::Terminal), &path).unwrap();
    let report = universality_check(
        &f,
        &path,
        &[BasisSpec::haar(), BasisSpec::cosine(), BasisSpec::indicator()],
        1024,
        1e-8,
    )
    .unwrap();
    assert!(report.max_spread < 1e-9, "{}", report.max_spread);
    assert!(report.ibp_deviation.unwrap() < 1e-9);
}

#[test]
fn abs_functional_has_no_skorokhod_form() {
    let grid = Grid::new(1.0, 64).unwrap();
    let path = sample_brownian(grid, 1);
    let spec = RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::AbsTerminal);
    let one = GridFunction::constant(grid, C64::new(1.0, 0.0));
    assert!(skorokhod_integral(&spec, &path, &one).is_err());
    assert!(realize(&spec, &path).is_ok());
}
