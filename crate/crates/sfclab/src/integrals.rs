//! Ogawa integrals as CONS series, the integration-by-parts formula for
//! finite-variation integrands, Skorokhod integrals and their trace
//! corrections.

use serde::Serialize;

use crate::cons::{BasisSpec, Projector};
use crate::error::{Error, Result};
use crate::grid::{same_grid, stieltjes_integral, wiener_process, BrownianPath, GridFunction, C64, ZERO};
use crate::processes::{ChaosForm, RandomFunctionSpec, RealizedFunction};

/// Partial sums of an Ogawa series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesResult {
    pub partial_sums: Vec<C64>,
    pub value: C64,
    pub converged: bool,
    pub tail_estimate: f64,
}

impl SeriesResult {
    fn from_partial_sums(partial_sums: Vec<C64>, tolerance: f64) -> Self {
        let m = partial_sums.len();
        let value = partial_sums[m - 1];
        let start = (3 * m) / 4;
        let tail_estimate = partial_sums[start.min(m - 1)..].iter().map(|s| (s - value).norm()).fold(0.0, f64::max);
        Self { partial_sums, value, converged: tail_estimate <= tolerance, tail_estimate }
    }
}

/// `B_L[phi_m]` for every ordinal of the projector's family.
pub fn wiener_coefficients(proj: &Projector, path: &BrownianPath) -> Vec<C64> {
    let dt = path.grid().dt();
    let density: Vec<C64> = path.increments().iter().map(|x| C64::new(x / dt, 0.0)).collect();
    proj.analyze(&density).into_iter().map(|c| c.conj()).collect()
}

/// Series for `f` from precomputed Wiener coefficients.
pub fn ogawa_series(proj: &Projector, wiener: &[C64], f: &GridFunction, m_max: usize, tolerance: f64) -> SeriesResult {
    let coeffs = proj.analyze(f.cells());
    let mut acc = ZERO;
    let sums = coeffs[..m_max].iter().zip(wiener).map(|(c, w)| {
        acc += c * w;
        acc
    });
    SeriesResult::from_partial_sums(sums.collect(), tolerance)
}

/// `S_M = sum_{m<=M} <phi_m, f> B_L[phi_m]` for `M = 1..m_max`.
pub fn ogawa_phi_integral(
    f: &GridFunction,
    path: &BrownianPath,
    phi: &BasisSpec,
    m_max: usize,
    tolerance: f64,
) -> Result<SeriesResult> {
    same_grid(f.grid(), path.grid())?;
    if m_max == 0 {
        return Err(Error::InvalidParams("M_max must be >= 1".into()));
    }
    phi.check_index(m_max, path.grid())?;
    let proj = Projector::new(*phi, *path.grid());
    let w = wiener_coefficients(&proj, path);
    Ok(ogawa_series(&proj, &w, f, m_max, tolerance))
}

/// `a(t-) B_t[e] - a(s+) B_s[e] - int_(s,t) B_u[e] da(u)` on `[s, t]`.
pub fn ogawa_ibp(a: &GridFunction, e: &GridFunction, path: &BrownianPath, s: f64, t: f64) -> Result<C64> {
    same_grid(a.grid(), path.grid())?;
    let grid = path.grid();
    let (i, k) = (grid.node_index(s)?, grid.node_index(t)?);
    if i > k {
        return Err(Error::InvalidInterval { s, t });
    }
    if i == k {
        return Ok(ZERO);
    }
    let av = a.real_values()?;
    let w = GridFunction::new(*grid, wiener_process(e, path)?)?;
    let jumps = stieltjes_integral(&w, a, s, t)?;
    Ok(w.value(k) * av[k - 1] - w.value(i) * av[i] - jumps)
}

/// The integration-by-parts value on `[0, t_k]` for every node `k`.
pub fn ogawa_ibp_primitive(a: &GridFunction, e: &GridFunction, path: &BrownianPath) -> Result<Vec<C64>> {
    same_grid(a.grid(), path.grid())?;
    let av = a.real_values()?;
    let w = wiener_process(e, path)?;
    let n = path.grid().n_steps();
    let mut out = vec![ZERO; n + 1];
    let mut jumps = ZERO;
    for k in 1..=n {
        if k >= 2 {
            jumps += w[k - 1] * (av[k - 1] - av[k - 2]);
        }
        out[k] = w[k] * av[k - 1] - w[0] * av[0] - jumps;
    }
    Ok(out)
}

/// `sum_j e_j a_j dB_j`.
pub fn left_point_sum(a: &GridFunction, e: &GridFunction, path: &BrownianPath) -> Result<C64> {
    same_grid(a.grid(), path.grid())?;
    same_grid(e.grid(), path.grid())?;
    Ok(a.cells().iter().zip(e.cells()).zip(path.increments()).map(|((a, e), x)| a * e * x).sum())
}

/// `sum_j e_j (a_j + a_{j+1}) / 2 dB_j`.
pub fn symmetric_sum(a: &GridFunction, e: &GridFunction, path: &BrownianPath) -> Result<C64> {
    same_grid(a.grid(), path.grid())?;
    same_grid(e.grid(), path.grid())?;
    let v = a.values();
    Ok((0..path.grid().n_steps()).map(|j| e.value(j) * (v[j] + v[j + 1]) * 0.5 * path.increments()[j]).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalityEntry {
    pub basis: BasisSpec,
    pub m_max: usize,
    pub series: SeriesResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalityReport {
    pub entries: Vec<UniversalityEntry>,
    pub max_spread: f64,
    /// Largest distance to the integration-by-parts value, for finite-variation integrands.
    pub ibp_deviation: Option<f64>,
}

pub fn universality_check(
    f: &RealizedFunction,
    path: &BrownianPath,
    specs: &[BasisSpec],
    m_max: usize,
    tolerance: f64,
) -> Result<UniversalityReport> {
    if specs.len() < 2 {
        return Err(Error::InvalidParams("universality check needs at least two bases".into()));
    }
    let entries = specs
        .iter()
        .map(|spec| {
            let m = m_max.min(spec.max_index(path.grid()));
            Ok(UniversalityEntry {
                basis: *spec,
                m_max: m,
                series: ogawa_phi_integral(&f.function, path, spec, m, tolerance)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_spread = 0.0f64;
    for a in &entries {
        for b in &entries {
            max_spread = max_spread.max((a.series.value - b.series.value).norm());
        }
    }
    let ibp_deviation = if f.finite_variation && f.function.is_real() {
        let one = GridFunction::constant(*path.grid(), C64::new(1.0, 0.0));
        let ibp = ogawa_ibp(&f.function, &one, path, 0.0, path.grid().horizon())?;
        Some(entries.iter().map(|e| (e.series.value - ibp).norm()).fold(0.0, f64::max))
    } else {
        None
    };
    Ok(UniversalityReport { entries, max_spread, ibp_deviation })
}

/// Skorokhod integral of `e a` over `[0, L]` in closed form.
pub fn skorokhod_integral(spec: &RandomFunctionSpec, path: &BrownianPath, e: &GridFunction) -> Result<C64> {
    let form = spec.lower(path.grid())?;
    if !form.has_closed_form_derivative() {
        return Err(Error::UnsupportedSpec(format!("{} has no closed-form Skorokhod integral", spec.label())));
    }
    form.skorokhod(path, e)
}

/// `sum_j e_j D_{t_j}(int_0^{t_j} a'(s) ds + a(0)) dt` with the derivative
/// applied to each piece separately.
fn locally_ac_trace(a0: &ChaosForm, rate: &ChaosForm, path: &BrownianPath, e: &GridFunction) -> Result<C64> {
    let dt = path.grid().dt();
    let n = path.grid().n_steps();
    let mut row = vec![ZERO; n];
    for t in &rate.terms {
        let d = t.functional.derivative_factor(path)?;
        let mut acc = ZERO;
        for j in 0..n {
            row[j] += acc * (d * t.functional.kernel[j]);
            acc += t.profile[j] * dt;
        }
    }
    for t in &a0.terms {
        let d = t.functional.derivative_factor(path)?;
        for j in 0..n {
            row[j] += t.profile[0] * (d * t.functional.kernel[j]);
        }
    }
    Ok(e.cells().iter().zip(&row).map(|(e, r)| e * r).sum::<C64>() * dt)
}

/// Skorokhod integral plus the trace of the derivative kernel.
///
/// The Ito part of an S-type integrand enters the trace through the mean of
/// its one-sided diagonal limits, `f(t) / 2`.
pub fn ogawa_via_trace(spec: &RandomFunctionSpec, path: &BrownianPath, e: &GridFunction) -> Result<C64> {
    let grid = path.grid();
    let form = spec.lower(grid)?;
    let skorokhod = form.skorokhod(path, e)?;
    let trace = match spec {
        RandomFunctionSpec::LocallyAc { a0, derivative } => {
            let (a0, rate) = (a0.lower(grid)?, derivative.lower(grid)?);
            if !rate.is_finite_variation() || !a0.is_finite_variation() {
                return Err(Error::UnsupportedSpec("locally_ac pieces must not carry an Ito term".into()));
            }
            locally_ac_trace(&a0, &rate, path, e)?
        }
        _ => {
            let d = form.malliavin(path)?.symmetric_diagonal();
            e.cells().iter().zip(&d).map(|(e, d)| e * d).sum::<C64>() * grid.dt()
        }
    };
    Ok(skorokhod + trace)
}

/// The three pieces of the Ogawa integral of `e a` for an S-type integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SDecomposition {
    pub skorokhod_part: C64,
    pub half_f_part: C64,
    pub derivative_part: C64,
}

impl SDecomposition {
    pub fn total(&self) -> C64 {
        self.skorokhod_part + self.half_f_part + self.derivative_part
    }
}

pub fn s_type_decomposition(spec: &RandomFunctionSpec, path: &BrownianPath, e: &GridFunction) -> Result<SDecomposition> {
    let RandomFunctionSpec::STypeIto { f, h, a0 } = spec else {
        return Err(Error::UnsupportedSpec(format!("{} is not an S-type Ito process", spec.label())));
    };
    let grid = path.grid();
    same_grid(e.grid(), grid)?;
    let dt = grid.dt();
    let skorokhod_part = skorokhod_integral(spec, path, e)?;
    let f = f.realize(grid)?;
    let half_f_part = e.cells().iter().zip(f.cells()).map(|(e, f)| e * f).sum::<C64>() * (0.5 * dt);
    let (h, a0) = (h.lower(grid)?, a0.lower(grid)?);
    if !h.is_finite_variation() || !a0.is_finite_variation() {
        return Err(Error::UnsupportedSpec("h and a0 must not carry an Ito term".into()));
    }
    let derivative_part = locally_ac_trace(&a0, &h, path, e)?;
    Ok(SDecomposition { skorokhod_part, half_f_part, derivative_part })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoNisioResult {
    pub partial: GridFunction,
    pub sup_error: f64,
}

/// `s -> sum_{m<=M} B_L[phi_m] <e 1_[0,s), phi_m>` and its sup distance to `B_s[e]`.
pub fn ito_nisio_partial(e: &GridFunction, path: &BrownianPath, phi: &BasisSpec, m: usize) -> Result<ItoNisioResult> {
    same_grid(e.grid(), path.grid())?;
    phi.check_index(m, path.grid())?;
    let grid = *path.grid();
    let proj = Projector::new(*phi, grid);
    let w: Vec<C64> = wiener_coefficients(&proj, path).into_iter().take(m).map(|c| c.conj()).collect();
    let g = proj.synthesize(&w);
    let exact = wiener_process(e, path)?;
    let mut values = Vec::with_capacity(grid.node_count());
    let mut acc = ZERO;
    values.push(acc);
    for (j, gj) in g.iter().enumerate() {
        acc += e.value(j) * gj.conj() * grid.dt();
        values.push(acc);
    }
    let sup_error = values.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(ItoNisioResult { partial: GridFunction::new(grid, values)?, sup_error })
}
