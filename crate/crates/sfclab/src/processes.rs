//! Random functions `a(t, w)` with known structure, their realizations on a
//! path, total variation, and closed-form Malliavin derivatives.
//!
//! Every supported spec lowers to a [`ChaosForm`]
//!
//! ```text
//! a(t_j) = base_j + sum_r profile_r(t_j) h_r(B_L[v_r]) + B_{t_j}[f]
//! ```
//!
//! with deterministic `base`, `profile_r`, `v_r` (real) and `f`. The derivative
//! `D_{t_i}` acts as the partial derivative in the increment `dB_i`.

use serde::{Deserialize, Serialize};

use crate::cons::{basis_function, BasisFamily, BasisSpec, TrigOrdering};
use crate::error::{Error, Result};
use crate::grid::{same_grid, BrownianPath, Grid, GridFunction, C64, ZERO};

/// Deterministic function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetFunction {
    Constant {
        value: f64,
    },
    Linear {
        slope: f64,
        #[serde(default)]
        intercept: f64,
    },
    /// `amplitude * sin(2 pi frequency t + phase)`
    Sine {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude * cos(2 pi frequency t + phase)`
    Cosine {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `values[0]` before `breaks[0]`, `values[i]` on `[breaks[i-1], breaks[i])`.
    Step {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// `amplitude * frac(t / period)`
    Sawtooth {
        period: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `1` on `[start, end)`.
    Indicator {
        start: f64,
        end: f64,
    },
    /// `amplitude * (-1)^j` at node `j`.
    Alternating {
        #[serde(default = "one")]
        amplitude: f64,
    },
    Basis {
        family: BasisFamily,
        #[serde(default)]
        ordering: TrigOrdering,
        index: usize,
    },
    Sum {
        terms: Vec<DetFunction>,
    },
    Product {
        factors: Vec<DetFunction>,
    },
}

fn one() -> f64 {
    1.0
}

impl DetFunction {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn linear(slope: f64, intercept: f64) -> Self {
        Self::Linear { slope, intercept }
    }

    pub fn sine(frequency: f64) -> Self {
        Self::Sine { amplitude: 1.0, frequency, phase: 0.0 }
    }

    pub fn realize(&self, grid: &Grid) -> Result<GridFunction> {
        use std::f64::consts::TAU;
        let real = |f: &dyn Fn(f64) -> f64| GridFunction::from_real_fn(*grid, f);
        match self {
            Self::Constant { value } => real(&|_| *value),
            Self::Linear { slope, intercept } => real(&|t| slope * t + intercept),
            Self::Sine { amplitude, frequency, phase } => {
                real(&|t| amplitude * (TAU * frequency * t + phase).sin())
            }
            Self::Cosine { amplitude, frequency, phase } => {
                real(&|t| amplitude * (TAU * frequency * t + phase).cos())
            }
            Self::Step { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::InvalidParams("step needs one more value than breaks".into()));
                }
                let idx = breaks.iter().map(|&b| grid.node_index(b)).collect::<Result<Vec<_>>>()?;
                if idx.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::InvalidParams("step breaks must be non-decreasing".into()));
                }
                let v = (0..grid.node_count())
                    .map(|j| values[idx.iter().filter(|&&b| j >= b).count()])
                    .collect::<Vec<_>>();
                GridFunction::from_real(*grid, &v)
            }
            Self::Sawtooth { period, amplitude } => {
                if !(*period > 0.0) {
                    return Err(Error::InvalidParams("sawtooth period must be positive".into()));
                }
                real(&|t| amplitude * (t / period).fract())
            }
            Self::Indicator { start, end } => GridFunction::indicator(*grid, *start, *end),
            Self::Alternating { amplitude } => {
                let v: Vec<f64> =
                    (0..grid.node_count()).map(|j| if j % 2 == 0 { *amplitude } else { -amplitude }).collect();
                GridFunction::from_real(*grid, &v)
            }
            Self::Basis { family, ordering, index } => {
                basis_function(&BasisSpec { family: *family, ordering: *ordering }, *index, grid)
            }
            Self::Sum { terms } => terms
                .iter()
                .try_fold(GridFunction::zeros(*grid), |acc, f| acc.add(&f.realize(grid)?)),
            Self::Product { factors } => factors
                .iter()
                .try_fold(GridFunction::constant(*grid, C64::new(1.0, 0.0)), |acc, f| {
                    acc.mul(&f.realize(grid)?)
                }),
        }
    }
}

/// Scalar functional `F(w)` of the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathFunctional {
    #[serde(rename = "B(L)")]
    Terminal,
    #[serde(rename = "sin(B(L))")]
    SinTerminal,
    #[serde(rename = "cos(B(L))")]
    CosTerminal,
    #[serde(rename = "B(L/2)")]
    Midpoint,
    #[serde(rename = "|B(L)|")]
    AbsTerminal,
    /// `B(t)` at a grid node.
    #[serde(rename = "value_at")]
    ValueAt(f64),
    /// `B_L[v]` for a real deterministic `v`.
    #[serde(rename = "wiener")]
    Wiener(DetFunction),
    /// `sin(B_L[v])`.
    #[serde(rename = "sin_wiener")]
    SinWiener(DetFunction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Linear,
    Sin,
    Cos,
    Abs,
}

impl Nonlinearity {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Sin => x.sin(),
            Self::Cos => x.cos(),
            Self::Abs => x.abs(),
        }
    }

    fn derivative(self, x: f64) -> Result<f64> {
        match self {
            Self::Linear => Ok(1.0),
            Self::Sin => Ok(x.cos()),
            Self::Cos => Ok(-x.sin()),
            Self::Abs => Err(Error::NoClosedFormDerivative("|B(L)|".into())),
        }
    }
}

/// `h(B_L[v])` with real cell kernel `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub h: Nonlinearity,
    pub kernel: Vec<f64>,
}

impl Functional {
    fn lower(spec: &PathFunctional, grid: &Grid) -> Result<Self> {
        let n = grid.n_steps();
        let ones_until = |k: usize| (0..n).map(|j| if j < k { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let real_kernel = |f: &DetFunction| -> Result<Vec<f64>> {
            let g = f.realize(grid)?;
            Ok(g.real_values()?[..n].to_vec())
        };
        let (h, kernel) = match spec {
            PathFunctional::Terminal => (Nonlinearity::Linear, vec![1.0; n]),
            PathFunctional::SinTerminal => (Nonlinearity::Sin, vec![1.0; n]),
            PathFunctional::CosTerminal => (Nonlinearity::Cos, vec![1.0; n]),
            PathFunctional::AbsTerminal => (Nonlinearity::Abs, vec![1.0; n]),
            PathFunctional::Midpoint => (Nonlinearity::Linear, ones_until(n / 2)),
            PathFunctional::ValueAt(t) => (Nonlinearity::Linear, ones_until(grid.node_index(*t)?)),
            PathFunctional::Wiener(f) => (Nonlinearity::Linear, real_kernel(f)?),
            PathFunctional::SinWiener(f) => (Nonlinearity::Sin, real_kernel(f)?),
        };
        Ok(Self { h, kernel })
    }

    pub fn argument(&self, path: &BrownianPath) -> f64 {
        self.kernel.iter().zip(path.increments()).map(|(v, x)| v * x).sum()
    }

    pub fn value(&self, path: &BrownianPath) -> f64 {
        self.h.apply(self.argument(path))
    }

    /// `h'(B_L[v])`, so that `D_{t_i} F = h'(B_L[v]) v_i`.
    pub fn derivative_factor(&self, path: &BrownianPath) -> Result<f64> {
        self.h.derivative(self.argument(path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jump {
    pub time: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub functional: Option<PathFunctional>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosTerm {
    pub u: DetFunction,
    pub v: DetFunction,
}

/// Declarative random function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RandomFunctionSpec {
    Deterministic {
        g: DetFunction,
    },
    /// `g(t) F(w)`
    FvAnticipative {
        g: DetFunction,
        functional: PathFunctional,
    },
    /// `sum_i scale_i F_i 1_{t >= time_i}`
    StepRandom {
        jumps: Vec<Jump>,
    },
    /// `u0(t) + sum_r u_r(t) B_L[v_r]`
    FirstChaos {
        #[serde(default = "DetFunction::zero")]
        u0: DetFunction,
        terms: Vec<ChaosTerm>,
    },
    /// `int_0^t f dB + int_0^t h ds + a0` with deterministic `f`.
    STypeIto {
        f: DetFunction,
        #[serde(default = "RandomFunctionSpec::boxed_zero")]
        h: Box<RandomFunctionSpec>,
        #[serde(default = "RandomFunctionSpec::boxed_zero")]
        a0: Box<RandomFunctionSpec>,
    },
    /// `a0 + int_0^t a'(s) ds`
    LocallyAc {
        a0: Box<RandomFunctionSpec>,
        derivative: Box<RandomFunctionSpec>,
    },
}

impl RandomFunctionSpec {
    pub fn zero() -> Self {
        Self::Deterministic { g: DetFunction::zero() }
    }

    fn boxed_zero() -> Box<Self> {
        Box::new(Self::zero())
    }

    pub fn constant(c: f64) -> Self {
        Self::Deterministic { g: DetFunction::constant(c) }
    }

    pub fn deterministic(g: DetFunction) -> Self {
        Self::Deterministic { g }
    }

    pub fn fv(g: DetFunction, functional: PathFunctional) -> Self {
        Self::FvAnticipative { g, functional }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Deterministic { .. } => "deterministic",
            Self::FvAnticipative { .. } => "fv_anticipative",
            Self::StepRandom { .. } => "step_random",
            Self::FirstChaos { .. } => "first_chaos",
            Self::STypeIto { .. } => "s_type_ito",
            Self::LocallyAc { .. } => "locally_ac",
        }
    }

    pub fn lower(&self, grid: &Grid) -> Result<ChaosForm> {
        let n1 = grid.node_count();
        let mut form = ChaosForm::zero(*grid);
        match self {
            Self::Deterministic { g } => form.base = g.realize(grid)?.into_values(),
            Self::FvAnticipative { g, functional } => form.terms.push(ProductTerm {
                profile: g.realize(grid)?.into_values(),
                functional: Functional::lower(functional, grid)?,
            }),
            Self::StepRandom { jumps } => {
                for jump in jumps {
                    let k = grid.node_index(jump.time)?;
                    let profile: Vec<C64> = (0..n1)
                        .map(|j| if j >= k { C64::new(jump.scale, 0.0) } else { ZERO })
                        .collect();
                    match &jump.functional {
                        Some(f) => form.terms.push(ProductTerm {
                            profile,
                            functional: Functional::lower(f, grid)?,
                        }),
                        None => form.base.iter_mut().zip(&profile).for_each(|(b, p)| *b += p),
                    }
                }
            }
            Self::FirstChaos { u0, terms } => {
                form.base = u0.realize(grid)?.into_values();
                for t in terms {
                    form.terms.push(ProductTerm {
                        profile: t.u.realize(grid)?.into_values(),
                        functional: Functional::lower(&PathFunctional::Wiener(t.v.clone()), grid)?,
                    });
                }
            }
            Self::STypeIto { f, h, a0 } => {
                form.running = Some(f.realize(grid)?.cells().to_vec());
                form.absorb_integral(&h.lower(grid)?)?;
                form.absorb_initial(&a0.lower(grid)?);
            }
            Self::LocallyAc { a0, derivative } => {
                form.absorb_integral(&derivative.lower(grid)?)?;
                form.absorb_initial(&a0.lower(grid)?);
            }
        }
        Ok(form)
    }
}

/// One product term `profile(t) F(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub profile: Vec<C64>,
    pub functional: Functional,
}

/// Lowered random function; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosForm {
    grid: Grid,
    pub base: Vec<C64>,
    pub terms: Vec<ProductTerm>,
    /// Cell values of the deterministic Ito integrand `f`.
    pub running: Option<Vec<C64>>,
}

fn cumulative(v: &[C64], dt: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = ZERO;
    out.push(acc);
    for x in &v[..v.len() - 1] {
        acc += x * dt;
        out.push(acc);
    }
    out
}

impl ChaosForm {
    pub fn zero(grid: Grid) -> Self {
        Self { grid, base: vec![ZERO; grid.node_count()], terms: Vec::new(), running: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// No Ito running term, so every realization has finite grid variation.
    pub fn is_finite_variation(&self) -> bool {
        self.running.is_none()
    }

    pub fn has_closed_form_derivative(&self) -> bool {
        self.terms.iter().all(|t| t.functional.h != Nonlinearity::Abs)
    }

    fn absorb_integral(&mut self, rate: &ChaosForm) -> Result<()> {
        if rate.running.is_some() {
            return Err(Error::UnsupportedSpec("integrated rate must not carry an Ito term".into()));
        }
        let dt = self.grid.dt();
        self.base.iter_mut().zip(cumulative(&rate.base, dt)).for_each(|(b, c)| *b += c);
        for t in &rate.terms {
            self.terms.push(ProductTerm { profile: cumulative(&t.profile, dt), functional: t.functional.clone() });
        }
        Ok(())
    }

    fn absorb_initial(&mut self, a0: &ChaosForm) {
        self.base.iter_mut().for_each(|b| *b += a0.base[0]);
        for t in &a0.terms {
            self.terms.push(ProductTerm {
                profile: vec![t.profile[0]; self.grid.node_count()],
                functional: t.functional.clone(),
            });
        }
    }

    pub fn realize(&self, path: &BrownianPath) -> Result<GridFunction> {
        same_grid(&self.grid, path.grid())?;
        let mut v = self.base.clone();
        for t in &self.terms {
            let f = t.functional.value(path);
            v.iter_mut().zip(&t.profile).for_each(|(x, p)| *x += p * f);
        }
        if let Some(f) = &self.running {
            let mut acc = ZERO;
            for j in 1..v.len() {
                acc += f[j - 1] * path.increments()[j - 1];
                v[j] += acc;
            }
        }
        GridFunction::new(self.grid, v)
    }

    pub fn malliavin(&self, path: &BrownianPath) -> Result<MalliavinKernel> {
        same_grid(&self.grid, path.grid())?;
        let terms = self
            .terms
            .iter()
            .map(|t| {
                Ok(KernelTerm {
                    profile: t.profile.clone(),
                    factor: t.functional.derivative_factor(path)?,
                    kernel: t.functional.kernel.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MalliavinKernel { grid: self.grid, terms, running: self.running.clone() })
    }

    /// Closed-form Skorokhod integral of `e a` over `[0, L]`.
    pub fn skorokhod(&self, path: &BrownianPath, e: &GridFunction) -> Result<C64> {
        same_grid(&self.grid, path.grid())?;
        same_grid(&self.grid, e.grid())?;
        let dt = self.grid.dt();
        let xi = path.increments();
        let e = e.cells();
        let mut total: C64 = e.iter().zip(&self.base).zip(xi).map(|((e, b), x)| e * b * x).sum();
        for t in &self.terms {
            let h = &t.functional;
            let f = h.value(path);
            let d = h.derivative_factor(path)?;
            let wiener: C64 = e.iter().zip(&t.profile).zip(xi).map(|((e, u), x)| e * u * x).sum();
            let trace: C64 =
                e.iter().zip(&t.profile).zip(&h.kernel).map(|((e, u), v)| e * u * *v).sum::<C64>() * dt;
            total += wiener * f - trace * d;
        }
        if let Some(f) = &self.running {
            let mut w = ZERO;
            for j in 0..e.len() {
                total += e[j] * w * xi[j];
                w += f[j] * xi[j];
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct KernelTerm {
    profile: Vec<C64>,
    factor: f64,
    kernel: Vec<f64>,
}

/// `D_{t_i} a(t_j)` on increment index `i` and node `j`, stored in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinKernel {
    grid: Grid,
    terms: Vec<KernelTerm>,
    running: Option<Vec<C64>>,
}

impl MalliavinKernel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn at(&self, i: usize, j: usize) -> C64 {
        if i >= self.grid.n_steps() {
            return ZERO;
        }
        let mut v: C64 = self.terms.iter().map(|t| t.profile[j] * (t.factor * t.kernel[i])).sum();
        if let (Some(f), true) = (&self.running, i < j) {
            v += f[i];
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        let zero_terms = self
            .terms
            .iter()
            .all(|t| t.factor == 0.0 || t.kernel.iter().all(|&k| k == 0.0) || t.profile.iter().all(|p| *p == ZERO));
        let zero_running = self.running.as_ref().is_none_or(|f| f.iter().all(|x| *x == ZERO));
        zero_terms && zero_running
    }

    /// `D_{t_j} a(t_j)` for `j < n`; the Ito part vanishes on the grid diagonal.
    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.grid.n_steps()).map(|j| self.at(j, j)).collect()
    }

    /// Diagonal with the Ito part taken as the mean of its one-sided limits, `f(t)/2`.
    pub fn symmetric_diagonal(&self) -> Vec<C64> {
        let mut d = self.diagonal();
        if let Some(f) = &self.running {
            d.iter_mut().zip(f).for_each(|(x, f)| *x += f * 0.5);
        }
        d
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        (0..self.grid.n_steps()).map(|i| (0..self.grid.node_count()).map(|j| self.at(i, j)).collect()).collect()
    }
}

/// One realization together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedFunction {
    pub function: GridFunction,
    pub spec: RandomFunctionSpec,
    pub seed: u64,
    pub finite_variation: bool,
}

pub fn realize(spec: &RandomFunctionSpec, path: &BrownianPath) -> Result<RealizedFunction> {
    let form = spec.lower(path.grid())?;
    Ok(RealizedFunction {
        function: form.realize(path)?,
        spec: spec.clone(),
        seed: path.seed(),
        finite_variation: form.is_finite_variation(),
    })
}

pub fn malliavin_derivative(spec: &RandomFunctionSpec, path: &BrownianPath) -> Result<MalliavinKernel> {
    spec.lower(path.grid())?.malliavin(path)
}

/// `sum |dv|` over the nodes `<= up_to`.
pub fn total_variation(r: &GridFunction, up_to: usize) -> Result<f64> {
    let v = r.real_values()?;
    let k = up_to.min(v.len() - 1);
    Ok(v[..=k].windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

/// Cumulative positive and negative increments.
pub fn jordan_decompose(r: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    let v = r.real_values()?;
    let mut plus = vec![0.0; v.len()];
    let mut minus = vec![0.0; v.len()];
    for j in 1..v.len() {
        let d = v[j] - v[j - 1];
        plus[j] = plus[j - 1] + d.max(0.0);
        minus[j] = minus[j - 1] + (-d).max(0.0);
    }
    Ok((GridFunction::from_real(*r.grid(), &plus)?, GridFunction::from_real(*r.grid(), &minus)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_brownian;

    fn grid() -> Grid {
        Grid::new(1.0, 512).unwrap()
    }

    #[test]
    fn deterministic_ignores_path() {
        let g = grid();
        let spec = RandomFunctionSpec::deterministic(DetFunction::linear(2.0, 1.0));
        let a = realize(&spec, &sample_brownian(g, 1)).unwrap();
        let b = realize(&spec, &sample_brownian(g, 2)).unwrap();
        assert_eq!(a.function, b.function);
        assert!(malliavin_derivative(&spec, &sample_brownian(g, 1)).unwrap().is_zero());
    }

    #[test]
    fn fv_terminal_is_constant_b_l() {
        let g = grid();
        let p = sample_brownian(g, 3);
        let spec = RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::Terminal);
        let r = realize(&spec, &p).unwrap();
        assert!(r.function.values().iter().all(|z| (z.re - p.terminal()).abs() < 1e-12));
        assert!(r.finite_variation);
    }

    #[test]
    fn s_type_with_unit_f_is_brownian() {
        let g = grid();
        let p = sample_brownian(g, 5);
        let spec = RandomFunctionSpec::STypeIto {
            f: DetFunction::constant(1.0),
            h: Box::new(RandomFunctionSpec::zero()),
            a0: Box::new(RandomFunctionSpec::zero()),
        };
        let r = realize(&spec, &p).unwrap();
        for j in 0..=512 {
            assert!((r.function.value(j).re - p.values()[j]).abs() < 1e-12);
        }
        assert!(!r.finite_variation);
    }

    #[test]
    fn midpoint_functional_requires_no_offgrid() {
        let g = grid();
        let bad = RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::ValueAt(0.3));
        assert!(matches!(bad.lower(&g), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn abs_has_no_derivative() {
        let g = grid();
        let spec = RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::AbsTerminal);
        assert!(matches!(
            malliavin_derivative(&spec, &sample_brownian(g, 1)),
            Err(Error::NoClosedFormDerivative(_))
        ));
    }

    #[test]
    fn total_variation_and_jordan() {
        let g = grid();
        let ramp = GridFunction::from_real_fn(g, |t| t).unwrap();
        assert!((total_variation(&ramp, 512).unwrap() - 1.0).abs() < 1e-12);
        let (p, m) = jordan_decompose(&ramp.scale(C64::new(-1.0, 0.0))).unwrap();
        assert!(p.values().iter().all(|z| z.re == 0.0));
        assert!((m.value(512).re - 1.0).abs() < 1e-12);
        assert!(matches!(
            total_variation(&GridFunction::constant(g, C64::new(0.0, 1.0)), 4),
            Err(Error::ComplexInput)
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"type":"locally_ac",
            "a0":{"type":"deterministic","g":{"kind":"constant","value":1.0}},
            "derivative":{"type":"fv_anticipative","g":{"kind":"constant","value":1.0},"functional":"B(L)"}}"#;
        let spec: RandomFunctionSpec = serde_json::from_str(text).unwrap();
        let back: RandomFunctionSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, back);
        let bad = r#"{"type":"deterministic","g":{"kind":"constant","value":1.0},"extra":1}"#;
        assert!(serde_json::from_str::<RandomFunctionSpec>(bad).is_err());
    }
}
