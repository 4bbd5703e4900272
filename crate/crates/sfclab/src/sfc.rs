//! Stochastic Fourier coefficients `c_n = int conj(e_n) dY` of
//! `dY = a dB + b dt` in the Ogawa (series and universal) and Skorokhod
//! flavors, and cofinite index masks.
//!
//! On the grid every flavor is a coefficient of a cell density:
//!
//! * Ogawa-u, finite variation: `a dB / dt` (the Abel-summed form of the
//!   integration-by-parts formula),
//! * Ogawa-u, S-type: `a dB / dt + f / 2`,
//! * Skorokhod: `a dB / dt - D_t a(t)`,
//!
//! so a whole vector costs one fast transform.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cons::{basis_function, BasisSpec, Projector};
use crate::error::{Error, Result};
use crate::grid::{same_grid, BrownianPath, Grid, GridFunction, C64};
use crate::integrals::{ogawa_ibp, ogawa_series, wiener_coefficients};
use crate::processes::{ChaosForm, RandomFunctionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegralFlavor {
    OgawaPhi { basis: BasisSpec, m_max: usize },
    OgawaU,
    Skorokhod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticDifferential {
    pub a: RandomFunctionSpec,
    pub b: RandomFunctionSpec,
    pub flavor: IntegralFlavor,
}

impl StochasticDifferential {
    pub fn new(a: RandomFunctionSpec, b: RandomFunctionSpec, flavor: IntegralFlavor) -> Self {
        Self { a, b, flavor }
    }

    /// Lowers both specs and checks flavor compatibility.
    pub fn lower(&self, grid: &Grid) -> Result<(ChaosForm, ChaosForm)> {
        let a = self.a.lower(grid)?;
        let b = self.b.lower(grid)?;
        match self.flavor {
            IntegralFlavor::Skorokhod if !a.has_closed_form_derivative() => {
                return Err(Error::FlavorMismatch(format!(
                    "skorokhod flavor needs a closed-form derivative of a ({})",
                    self.a.label()
                )))
            }
            IntegralFlavor::OgawaU if !a.is_finite_variation() && !a.has_closed_form_derivative() => {
                return Err(Error::FlavorMismatch(format!(
                    "ogawa_u needs a finite-variation or trace-class a ({})",
                    self.a.label()
                )))
            }
            IntegralFlavor::OgawaPhi { basis, m_max } => {
                if m_max == 0 {
                    return Err(Error::InvalidParams("M_max must be >= 1".into()));
                }
                basis.check_index(m_max, grid)?;
            }
            _ => {}
        }
        Ok((a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfcParams {
    #[serde(default = "default_tolerance")]
    pub series_tolerance: f64,
    /// Number of leading indices evaluated a second way for the cross-check.
    #[serde(default = "default_cross_check")]
    pub cross_check: usize,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_cross_check() -> usize {
    4
}

impl Default for SfcParams {
    fn default() -> Self {
        Self { series_tolerance: default_tolerance(), cross_check: default_cross_check() }
    }
}

/// Cofinite index set `Lambda` within `1..=n_outer`, stored as its complement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMask {
    n_outer: usize,
    excluded: BTreeSet<usize>,
}

impl IndexMask {
    pub fn full(n_outer: usize) -> Self {
        Self { n_outer, excluded: BTreeSet::new() }
    }

    pub fn excluding(n_outer: usize, excluded: impl IntoIterator<Item = usize>) -> Result<Self> {
        let excluded: BTreeSet<usize> = excluded.into_iter().collect();
        if let Some(&bad) = excluded.iter().find(|&&m| m == 0 || m > n_outer) {
            return Err(Error::InvalidMask(format!("index {bad} outside 1..={n_outer}")));
        }
        if excluded.len() >= n_outer {
            return Err(Error::EmptyMask);
        }
        Ok(Self { n_outer, excluded })
    }

    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn excluded(&self) -> impl Iterator<Item = usize> + '_ {
        self.excluded.iter().copied()
    }

    pub fn contains(&self, m: usize) -> bool {
        m >= 1 && m <= self.n_outer && !self.excluded.contains(&m)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        Self::excluding(self.n_outer.min(other.n_outer), self.excluded.union(&other.excluded).copied().filter(|&m| m <= self.n_outer.min(other.n_outer)))
    }
}

/// One replicate's coefficients; absent entries are outside the mask.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SfcVector {
    pub values: Vec<C64>,
    pub present: Vec<bool>,
    pub seed: u64,
    /// Largest deviation from the integration-by-parts evaluation on the leading indices.
    pub ibp_cross_check: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SfcRow {
    pub replicate: u64,
    pub n: usize,
    pub re: f64,
    pub im: f64,
    pub present: bool,
}

impl SfcVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coefficient `n` (1-based) if present.
    pub fn get(&self, n: usize) -> Option<C64> {
        (self.present[n - 1]).then(|| self.values[n - 1])
    }

    /// Values with absent entries read as zero.
    pub fn zero_filled(&self) -> Vec<C64> {
        self.values.iter().zip(&self.present).map(|(v, &p)| if p { *v } else { C64::new(0.0, 0.0) }).collect()
    }

    pub fn rows(&self, replicate: u64) -> impl Iterator<Item = SfcRow> + '_ {
        self.values.iter().zip(&self.present).enumerate().map(move |(i, (v, &present))| SfcRow {
            replicate,
            n: i + 1,
            re: v.re,
            im: v.im,
            present,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.values
                .iter()
                .zip(&self.present)
                .map(|(v, &p)| if p { serde_json::json!([v.re, v.im]) } else { serde_json::Value::Null })
                .collect(),
        )
    }
}

pub fn apply_mask(sfc: &SfcVector, mask: &IndexMask) -> Result<SfcVector> {
    let mut out = sfc.clone();
    for (i, p) in out.present.iter_mut().enumerate() {
        *p = *p && mask.contains(i + 1);
    }
    if !out.present.iter().any(|&p| p) {
        return Err(Error::EmptyMask);
    }
    Ok(out)
}

/// Diffusion coefficient given either structurally or as one realization.
#[derive(Debug, Clone, Copy)]
pub enum Diffusion<'a> {
    Form(&'a ChaosForm),
    Realization(&'a GridFunction),
}

/// Reusable evaluator for one scenario on one grid.
pub struct SfcEngine {
    grid: Grid,
    flavor: IntegralFlavor,
    outer: Projector,
    inner: Option<Projector>,
    n_outer: usize,
    params: SfcParams,
}

impl SfcEngine {
    pub fn new(grid: Grid, e: BasisSpec, n_outer: usize, flavor: IntegralFlavor, params: SfcParams) -> Result<Self> {
        if n_outer == 0 {
            return Err(Error::InvalidParams("N_outer must be >= 1".into()));
        }
        e.check_index(n_outer, &grid)?;
        let inner = match flavor {
            IntegralFlavor::OgawaPhi { basis, m_max } => {
                basis.check_index(m_max.max(1), &grid)?;
                Some(Projector::new(basis, grid))
            }
            _ => None,
        };
        Ok(Self { grid, flavor, outer: Projector::new(e, grid), inner, n_outer, params })
    }

    pub fn outer(&self) -> &Projector {
        &self.outer
    }

    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    /// `int conj(e_n) a dB` in the engine's flavor for `n = 1..=N_outer`.
    pub fn diffusion_part(&self, a: Diffusion<'_>, path: &BrownianPath) -> Result<Vec<C64>> {
        same_grid(&self.grid, path.grid())?;
        let dt = self.grid.dt();
        let xi = path.increments();
        let realized;
        let (values, form) = match a {
            Diffusion::Form(form) => {
                realized = form.realize(path)?;
                (realized.cells(), Some(form))
            }
            Diffusion::Realization(g) => {
                same_grid(&self.grid, g.grid())?;
                (g.cells(), None)
            }
        };
        let mut density: Vec<C64> = values.iter().zip(xi).map(|(a, x)| a * (x / dt)).collect();
        match (self.flavor, form) {
            (IntegralFlavor::OgawaU, Some(form)) => {
                if let Some(f) = &form.running {
                    density.iter_mut().zip(f).for_each(|(d, f)| *d += f * 0.5);
                }
            }
            (IntegralFlavor::OgawaU, None) => {}
            (IntegralFlavor::Skorokhod, Some(form)) => {
                let diag = form.malliavin(path)?.diagonal();
                density.iter_mut().zip(&diag).for_each(|(d, k)| *d -= k);
            }
            (IntegralFlavor::Skorokhod, None) => {
                return Err(Error::FlavorMismatch("skorokhod flavor needs the structure of a, not a realization".into()))
            }
            (IntegralFlavor::OgawaPhi { m_max, .. }, _) => {
                let inner = self.inner.as_ref().expect("inner projector for ogawa_phi");
                let w = wiener_coefficients(inner, path);
                return (1..=self.n_outer)
                    .map(|n| {
                        let en = basis_function(self.outer.spec(), n, &self.grid)?;
                        let f: Vec<C64> = en.values().iter().zip(values.iter().chain(std::iter::once(&values[values.len() - 1]))).map(|(e, a)| e.conj() * a).collect();
                        let f = GridFunction::new(self.grid, f)?;
                        Ok(ogawa_series(inner, &w, &f, m_max, self.params.series_tolerance).value)
                    })
                    .collect();
            }
        }
        let mut c = self.outer.analyze(&density);
        c.truncate(self.n_outer);
        Ok(c)
    }

    /// `<e_n, b>` for `n = 1..=N_outer`.
    pub fn drift_part(&self, b: &GridFunction) -> Vec<C64> {
        let mut c = self.outer.analyze(b.cells());
        c.truncate(self.n_outer);
        c
    }

    pub fn compute(&self, a: &ChaosForm, b: &ChaosForm, path: &BrownianPath) -> Result<SfcVector> {
        let mut values = self.diffusion_part(Diffusion::Form(a), path)?;
        let b_real = b.realize(path)?;
        for (c, d) in values.iter_mut().zip(self.drift_part(&b_real)) {
            *c += d;
        }
        let ibp_cross_check = if self.flavor == IntegralFlavor::OgawaU && a.is_finite_variation() {
            self.ibp_cross_check(&a.realize(path)?, &b_real, path, &values)?
        } else {
            None
        };
        Ok(SfcVector { present: vec![true; values.len()], values, seed: path.seed(), ibp_cross_check })
    }

    fn ibp_cross_check(&self, a: &GridFunction, b: &GridFunction, path: &BrownianPath, values: &[C64]) -> Result<Option<f64>> {
        if self.params.cross_check == 0 || !a.is_real() {
            return Ok(None);
        }
        let mut worst = 0.0f64;
        for n in 1..=self.params.cross_check.min(self.n_outer) {
            let en = basis_function(self.outer.spec(), n, &self.grid)?;
            let ibp = ogawa_ibp(a, &en.conj(), path, 0.0, self.grid.horizon())?;
            let drift: C64 = en.cells().iter().zip(b.cells()).map(|(e, b)| e.conj() * b).sum::<C64>() * self.grid.dt();
            worst = worst.max((ibp + drift - values[n - 1]).norm());
        }
        Ok(Some(worst))
    }
}

pub fn compute_sfc(
    diff: &StochasticDifferential,
    path: &BrownianPath,
    e: &BasisSpec,
    n_outer: usize,
    params: &SfcParams,
) -> Result<SfcVector> {
    let (a, b) = diff.lower(path.grid())?;
    SfcEngine::new(*path.grid(), *e, n_outer, diff.flavor, *params)?.compute(&a, &b, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_brownian;
    use crate::processes::{DetFunction, PathFunctional};

    fn grid() -> Grid {
        Grid::new(1.0, 256).unwrap()
    }

    #[test]
    fn pure_drift_projection() {
        let g = grid();
        let diff = StochasticDifferential::new(
            RandomFunctionSpec::zero(),
            RandomFunctionSpec::deterministic(DetFunction::Basis {
                family: crate::cons::BasisFamily::Haar,
                ordering: Default::default(),
                index: 1,
            }),
            IntegralFlavor::OgawaU,
        );
        let s = compute_sfc(&diff, &sample_brownian(g, 1), &BasisSpec::haar(), 256, &SfcParams::default()).unwrap();
        assert!((s.values[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(s.values[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn terminal_times_wiener_coefficients() {
        let g = grid();
        let p = sample_brownian(g, 2);
        let diff = StochasticDifferential::new(
            RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::Terminal),
            RandomFunctionSpec::zero(),
            IntegralFlavor::OgawaU,
        );
        let s = compute_sfc(&diff, &p, &BasisSpec::haar(), 256, &SfcParams::default()).unwrap();
        for n in [1, 2, 7, 200] {
            let en = basis_function(&BasisSpec::haar(), n, &g).unwrap();
            let w = crate::grid::wiener_integral(&en, &p, 1.0).unwrap();
            assert!((s.values[n - 1] - w * p.terminal()).norm() < 1e-10);
        }
        assert!(s.ibp_cross_check.unwrap() < 1e-10);
    }

    #[test]
    fn skorokhod_flavor_rejects_abs() {
        let g = grid();
        let diff = StochasticDifferential::new(
            RandomFunctionSpec::fv(DetFunction::constant(1.0), PathFunctional::AbsTerminal),
            RandomFunctionSpec::zero(),
            IntegralFlavor::Skorokhod,
        );
        assert!(matches!(diff.lower(&g), Err(Error::FlavorMismatch(_))));
    }

    #[test]
    fn masks() {
        assert!(matches!(IndexMask::excluding(3, [1, 2, 3]), Err(Error::EmptyMask)));
        assert!(IndexMask::excluding(3, [4]).is_err());
        let m = IndexMask::excluding(8, [1, 2]).unwrap();
        assert!(!m.contains(1) && m.contains(3));
        let sfc = SfcVector { values: vec![C64::new(1.0, 0.0); 8], present: vec![true; 8], seed: 0, ibp_cross_check: None };
        let once = apply_mask(&sfc, &m).unwrap();
        assert_eq!(apply_mask(&once, &m).unwrap(), once);
        let other = IndexMask::excluding(8, [5]).unwrap();
        assert_eq!(apply_mask(&once, &other).unwrap(), apply_mask(&sfc, &m.intersect(&other).unwrap()).unwrap());
        assert_eq!(apply_mask(&sfc, &IndexMask::full(8)).unwrap(), sfc);
    }
}
