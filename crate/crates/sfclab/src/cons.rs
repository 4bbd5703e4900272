//! Complete orthonormal systems on the grid: Haar, exponential, cosine and
//! normalized cell indicators, with fast analysis/synthesis and the basis
//! condition diagnostics.
//!
//! Ordinals start at 1. All families are step functions on the cells; the
//! value at the last node repeats the last cell, except for the exponential
//! family which is sampled at every node.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, C64, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    Haar,
    Trigonometric,
    Cosine,
    Indicator,
}

/// Enumeration of the exponential system by ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrigOrdering {
    /// 0, 1, -1, 2, -2, ...
    #[default]
    Symmetric,
    /// 0, 1, 2, ..., n/2 - 1, then -1, -2, ..., -n/2.
    PositiveFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub family: BasisFamily,
    #[serde(default)]
    pub ordering: TrigOrdering,
}

impl BasisSpec {
    pub fn new(family: BasisFamily) -> Self {
        Self { family, ordering: TrigOrdering::Symmetric }
    }

    pub fn haar() -> Self {
        Self::new(BasisFamily::Haar)
    }

    pub fn trigonometric() -> Self {
        Self::new(BasisFamily::Trigonometric)
    }

    pub fn cosine() -> Self {
        Self::new(BasisFamily::Cosine)
    }

    pub fn indicator() -> Self {
        Self::new(BasisFamily::Indicator)
    }

    pub fn with_ordering(mut self, ordering: TrigOrdering) -> Self {
        self.ordering = ordering;
        self
    }

    /// Number of elements representable on `grid`.
    pub fn max_index(&self, grid: &Grid) -> usize {
        grid.n_steps()
    }

    pub fn check_index(&self, index: usize, grid: &Grid) -> Result<()> {
        let max = self.max_index(grid);
        if index == 0 || index > max {
            return Err(Error::BasisFinerThanGrid { index, max });
        }
        Ok(())
    }

    /// Signed frequency of an exponential ordinal.
    pub fn frequency(&self, index: usize, grid: &Grid) -> i64 {
        let m = index as i64;
        match self.ordering {
            TrigOrdering::Symmetric => {
                if m % 2 == 0 {
                    m / 2
                } else {
                    -(m / 2)
                }
            }
            TrigOrdering::PositiveFirst => {
                let half = (grid.n_steps() / 2) as i64;
                if m <= half {
                    m - 1
                } else {
                    half - m
                }
            }
        }
    }
}

/// Ordered coefficients `c_m = <phi_m, f>`, `m = 1..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisCoefficients {
    pub spec: BasisSpec,
    pub values: Vec<C64>,
}

impl BasisCoefficients {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coefficient of ordinal `m` (1-based).
    pub fn get(&self, m: usize) -> C64 {
        self.values[m - 1]
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Element `index` of the family, evaluated from its closed form.
pub fn basis_function(spec: &BasisSpec, index: usize, grid: &Grid) -> Result<GridFunction> {
    spec.check_index(index, grid)?;
    let n = grid.n_steps();
    let sqrt_l = grid.horizon().sqrt();
    let mut values = vec![ZERO; n + 1];
    match spec.family {
        BasisFamily::Haar => {
            if index == 1 {
                values.fill(C64::new(1.0 / sqrt_l, 0.0));
            } else {
                let level = usize::BITS - 1 - (index - 1).leading_zeros();
                let blocks = 1usize << level;
                let k = index - 1 - blocks;
                let width = n / blocks;
                let amp = (blocks as f64).sqrt() / sqrt_l;
                for j in k * width..(k + 1) * width {
                    let sign = if j < k * width + width / 2 { 1.0 } else { -1.0 };
                    values[j] = C64::new(sign * amp, 0.0);
                }
                values[n] = values[n - 1];
            }
        }
        BasisFamily::Trigonometric => {
            let q = spec.frequency(index, grid) as f64;
            for (j, v) in values.iter_mut().enumerate() {
                *v = C64::from_polar(1.0 / sqrt_l, 2.0 * PI * q * j as f64 / n as f64);
            }
        }
        BasisFamily::Cosine => {
            let k = (index - 1) as f64;
            let amp = if index == 1 { 1.0 / sqrt_l } else { (2.0 / grid.horizon()).sqrt() };
            for (j, v) in values.iter_mut().take(n).enumerate() {
                *v = C64::new(amp * (PI * k * (j as f64 + 0.5) / n as f64).cos(), 0.0);
            }
            values[n] = values[n - 1];
        }
        BasisFamily::Indicator => {
            values[index - 1] = C64::new(1.0 / grid.dt().sqrt(), 0.0);
            if index == n {
                values[n] = values[n - 1];
            }
        }
    }
    Ok(GridFunction::from_vec_unchecked(*grid, values))
}

enum Plan {
    Haar,
    Indicator,
    Trig { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
    Cosine { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
}

/// Fast analysis and synthesis for one family on one grid.
pub struct Projector {
    spec: BasisSpec,
    grid: Grid,
    plan: Plan,
}

impl std::fmt::Debug for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Projector").field("spec", &self.spec).field("grid", &self.grid).finish()
    }
}

impl Projector {
    pub fn new(spec: BasisSpec, grid: Grid) -> Self {
        let n = grid.n_steps();
        let mut planner = FftPlanner::new();
        let plan = match spec.family {
            BasisFamily::Haar => Plan::Haar,
            BasisFamily::Indicator => Plan::Indicator,
            BasisFamily::Trigonometric => Plan::Trig {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            },
            BasisFamily::Cosine => Plan::Cosine {
                fwd: planner.plan_fft_forward(2 * n),
                inv: planner.plan_fft_inverse(2 * n),
            },
        };
        Self { spec, grid, plan }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn bin(&self, index: usize) -> usize {
        let n = self.grid.n_steps() as i64;
        self.spec.frequency(index, &self.grid).rem_euclid(n) as usize
    }

    /// All `n_steps` coefficients `<phi_m, f>` of the cell values `f`.
    pub fn analyze(&self, f: &[C64]) -> Vec<C64> {
        let n = self.grid.n_steps();
        assert_eq!(f.len(), n, "analysis expects one value per cell");
        let dt = self.grid.dt();
        let sqrt_l = self.grid.horizon().sqrt();
        match &self.plan {
            Plan::Haar => {
                let mut sums = f.to_vec();
                let mut out = vec![ZERO; n];
                let mut len = n;
                while len > 1 {
                    let half = len / 2;
                    let scale = (half as f64).sqrt() / sqrt_l * dt;
                    for k in 0..half {
                        let (a, b) = (sums[2 * k], sums[2 * k + 1]);
                        out[half + k] = (a - b) * scale;
                        sums[k] = a + b;
                    }
                    len = half;
                }
                out[0] = sums[0] * (dt / sqrt_l);
                out
            }
            Plan::Indicator => f.iter().map(|&v| v * dt.sqrt()).collect(),
            Plan::Trig { fwd, .. } => {
                let mut buf = f.to_vec();
                fwd.process(&mut buf);
                let scale = dt / sqrt_l;
                (1..=n).map(|m| buf[self.bin(m)] * scale).collect()
            }
            Plan::Cosine { fwd, .. } => {
                let mut buf = Vec::with_capacity(2 * n);
                buf.extend_from_slice(f);
                buf.extend(f.iter().rev());
                fwd.process(&mut buf);
                let lead = (2.0 / self.grid.horizon()).sqrt() * dt;
                (0..n)
                    .map(|k| {
                        let s = buf[k] * C64::from_polar(0.5, -PI * k as f64 / (2 * n) as f64);
                        if k == 0 {
                            s * (dt / sqrt_l)
                        } else {
                            s * lead
                        }
                    })
                    .collect()
            }
        }
    }

    /// Cell values of `sum_m c_m phi_m` for the given leading ordinals.
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<C64> {
        let n = self.grid.n_steps();
        assert!(coeffs.len() <= n, "more coefficients than grid cells");
        let sqrt_l = self.grid.horizon().sqrt();
        let c = |m: usize| coeffs.get(m).copied().unwrap_or(ZERO);
        match &self.plan {
            Plan::Haar => {
                let mut v = vec![ZERO; n];
                v[0] = c(0) / sqrt_l;
                let mut len = 1;
                while len < n {
                    let scale = (len as f64).sqrt() / sqrt_l;
                    for k in (0..len).rev() {
                        let (p, d) = (v[k], c(len + k) * scale);
                        v[2 * k] = p + d;
                        v[2 * k + 1] = p - d;
                    }
                    len *= 2;
                }
                v
            }
            Plan::Indicator => {
                let s = 1.0 / self.grid.dt().sqrt();
                (0..n).map(|j| c(j) * s).collect()
            }
            Plan::Trig { inv, .. } => {
                let mut buf = vec![ZERO; n];
                for (i, &a) in coeffs.iter().enumerate() {
                    buf[self.bin(i + 1)] += a;
                }
                inv.process(&mut buf);
                buf.iter().map(|z| z / sqrt_l).collect()
            }
            Plan::Cosine { inv, .. } => {
                let amp = |k: usize| {
                    if k == 0 {
                        1.0 / sqrt_l
                    } else {
                        (2.0 / self.grid.horizon()).sqrt()
                    }
                };
                let run = |part: &dyn Fn(C64) -> f64| {
                    let mut buf = vec![ZERO; 2 * n];
                    for (k, &a) in coeffs.iter().enumerate() {
                        buf[k] = C64::from_polar(part(a) * amp(k), PI * k as f64 / (2 * n) as f64);
                    }
                    inv.process(&mut buf);
                    buf.truncate(n);
                    buf.into_iter().map(|z| z.re).collect::<Vec<_>>()
                };
                let re = run(&|z: C64| z.re);
                if coeffs.iter().all(|z| z.im == 0.0) {
                    return re.into_iter().map(|x| C64::new(x, 0.0)).collect();
                }
                let im = run(&|z: C64| z.im);
                re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect()
            }
        }
    }

    /// Grid function with the synthesized cells; the last node repeats the last cell.
    pub fn synthesize_function(&self, coeffs: &[C64]) -> GridFunction {
        let mut v = self.synthesize(coeffs);
        v.push(v[v.len() - 1]);
        GridFunction::from_vec_unchecked(self.grid, v)
    }
}

/// `c_m = <phi_m, f>` for `m = 1..M`.
pub fn project(f: &GridFunction, spec: &BasisSpec, m: usize) -> Result<BasisCoefficients> {
    if m == 0 {
        return Err(Error::InvalidParams("projection order M must be >= 1".into()));
    }
    spec.check_index(m, f.grid())?;
    let mut values = Projector::new(*spec, *f.grid()).analyze(f.cells());
    values.truncate(m);
    Ok(BasisCoefficients { spec: *spec, values })
}

/// `sum_m c_m phi_m` as a grid function.
pub fn synthesize(coeffs: &BasisCoefficients, grid: &Grid) -> Result<GridFunction> {
    if coeffs.len() > coeffs.spec.max_index(grid) {
        return Err(Error::BasisFinerThanGrid {
            index: coeffs.len(),
            max: coeffs.spec.max_index(grid),
        });
    }
    Ok(Projector::new(coeffs.spec, *grid).synthesize_function(&coeffs.values))
}

/// Cumulative left-point integral `t_j -> int_0^{t_j} e`.
pub fn antiderivative(e: &GridFunction) -> GridFunction {
    let dt = e.grid().dt();
    let mut out = Vec::with_capacity(e.values().len());
    let mut acc = ZERO;
    out.push(acc);
    for &v in e.cells() {
        acc += v * dt;
        out.push(acc);
    }
    GridFunction::from_vec_unchecked(*e.grid(), out).with_convention(crate::grid::Convention::Node)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionFlag {
    pub holds: bool,
    /// Grid total variation over the variation of the even-node subsample.
    pub tv_ratio: f64,
    /// Sup norm at `M_max` over sup norm at `M_max / 2`.
    pub plateau_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNormPoint {
    pub m: usize,
    pub l2: f64,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisConditionReport {
    pub c1: ConditionFlag,
    pub c2: ConditionFlag,
    /// Running sup over `M' <= M` of the norms of `sum_{m<=M'} phi_m conj(phi~_m)`.
    pub sup_norms: Vec<SupNormPoint>,
}

const TV_RATIO_LIMIT: f64 = 1.25;
const PLATEAU_LIMIT: f64 = 1.2;

fn grid_tv(values: &[C64], step: usize) -> f64 {
    values.iter().step_by(step).collect::<Vec<_>>().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Numeric sweep of the basis conditions for weight `e` and inner family `phi`.
///
/// For real families the sum is the one in the conditions; for the exponential
/// family the antiderivative is conjugated so the sum stays a diagonal kernel value.
pub fn check_basis_condition(e: &GridFunction, phi: &BasisSpec, m_max: usize) -> BasisConditionReport {
    let grid = *e.grid();
    let m_max = m_max.clamp(1, phi.max_index(&grid));
    let dt = grid.dt();
    let n = grid.n_steps();

    let fine = grid_tv(e.cells(), 1);
    let coarse = grid_tv(e.cells(), 2);
    let tv_ratio = if fine <= 1e-300 { 1.0 } else if coarse <= 1e-300 { f64::INFINITY } else { fine / coarse };
    let tv_ok = tv_ratio <= TV_RATIO_LIMIT;

    let mut sum = vec![ZERO; n];
    let mut sup_norms = Vec::with_capacity(m_max);
    let (mut sup_l2, mut sup_l1) = (0.0f64, 0.0f64);
    for m in 1..=m_max {
        let f = basis_function(phi, m, &grid).expect("index checked above");
        let anti = antiderivative(&f);
        for (j, s) in sum.iter_mut().enumerate() {
            *s += f.value(j) * anti.value(j).conj();
        }
        let l2 = (sum.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt).sqrt();
        let l1 = sum.iter().map(|z| z.norm()).sum::<f64>() * dt;
        sup_l2 = sup_l2.max(l2);
        sup_l1 = sup_l1.max(l1);
        sup_norms.push(SupNormPoint { m, l2: sup_l2, l1: sup_l1 });
    }

    let plateau = |pick: fn(&SupNormPoint) -> f64| {
        let last = pick(&sup_norms[m_max - 1]);
        let mid = pick(&sup_norms[(m_max / 2).max(1) - 1]);
        if mid <= 1e-300 {
            1.0
        } else {
            last / mid
        }
    };
    let r2 = plateau(|p| p.l2);
    let r1 = plateau(|p| p.l1);
    BasisConditionReport {
        c1: ConditionFlag { holds: tv_ok && r2 <= PLATEAU_LIMIT, tv_ratio, plateau_ratio: r2 },
        c2: ConditionFlag { holds: tv_ok && r1 <= PLATEAU_LIMIT, tv_ratio, plateau_ratio: r1 },
        sup_norms,
    }
}
