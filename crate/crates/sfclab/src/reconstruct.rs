//! Identification from SFCs: Parseval inversion to the primitive,
//! left-continuous modification, LIL estimators of `|a|` and `a`, local
//! averaging and drift recovery.
//!
//! The LIL ladder runs from `h_max` down to `h_min`. Rung `h` is the sup of
//! the normalized difference quotient over lags `s - t` in `[h, h_max]`, so
//! the rung at `h_min` is the sup over the whole window `(t, t + h_max]`.
//! The magnitude estimator takes absolute increments; the k-shift estimator
//! of the signed value uses the one-sided quotient.

use serde::{Deserialize, Serialize};

use crate::cons::BasisSpec;
use crate::error::{Error, Result};
use crate::grid::{same_grid, BrownianPath, Convention, Grid, GridFunction, C64, ZERO};
use crate::processes::ChaosForm;
use crate::sfc::{apply_mask, Diffusion, IndexMask, IntegralFlavor, SfcEngine, SfcParams, SfcVector, StochasticDifferential};

/// `t -> sum_{n present} c_n int_0^t e_n`, absent coefficients read as zero.
pub fn parseval_transform(sfc: &SfcVector, e: &BasisSpec, grid: &Grid) -> Result<GridFunction> {
    if sfc.len() > e.max_index(grid) {
        return Err(Error::BasisFinerThanGrid { index: sfc.len(), max: e.max_index(grid) });
    }
    let proj = crate::cons::Projector::new(*e, *grid);
    Ok(primitive_from_coefficients(&proj, &sfc.zero_filled()))
}

fn primitive_from_coefficients(proj: &crate::cons::Projector, coeffs: &[C64]) -> GridFunction {
    let grid = *proj.grid();
    let density = proj.synthesize(coeffs);
    let dt = grid.dt();
    let mut values = Vec::with_capacity(grid.node_count());
    let mut acc = ZERO;
    values.push(acc);
    for d in density {
        acc += d * dt;
        values.push(acc);
    }
    GridFunction::from_vec_unchecked(grid, values)
}

/// Value at `t_j` replaced by the value of the cell `[t_{j-1}, t_j)`; zero at the origin.
pub fn left_continuous_mod(x: &GridFunction) -> GridFunction {
    if x.convention() == Convention::LeftContinuous {
        return x.clone();
    }
    let v = x.values();
    let mut out = Vec::with_capacity(v.len());
    out.push(ZERO);
    out.extend_from_slice(&v[..v.len() - 1]);
    GridFunction::from_vec_unchecked(*x.grid(), out).with_convention(Convention::LeftContinuous)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    None,
    /// Divide by the same functional of the path `B` at the same node.
    #[default]
    SelfCalibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilParams {
    pub h_max: f64,
    /// Defaults to `dt`.
    #[serde(default)]
    pub h_min: Option<f64>,
    /// Lags are sampled every `stride` cells.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "default_k_schedule")]
    pub k_schedule: Vec<f64>,
    #[serde(default)]
    pub calibration: Calibration,
}

fn one() -> usize {
    1
}

fn default_k_schedule() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0]
}

impl LilParams {
    pub fn new(h_max: f64) -> Self {
        Self { h_max, h_min: None, stride: 1, k_schedule: default_k_schedule(), calibration: Calibration::SelfCalibrated }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let dt = grid.dt();
        let h_min = self.h_min.unwrap_or(dt);
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.h_max < (-1.0f64).exp()) {
            return bad(format!("h_max = {} must be below 1/e so that loglog(1/h) > 0", self.h_max));
        }
        if h_min < dt * (1.0 - 1e-9) {
            return bad(format!("h_min = {h_min} is below dt = {dt}"));
        }
        if h_min > self.h_max {
            return bad(format!("h_min = {h_min} exceeds h_max = {}", self.h_max));
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if self.k_schedule.is_empty() || self.k_schedule[0] <= 0.0 || self.k_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("k_schedule must be positive and strictly increasing".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilLadder {
    pub h: Vec<f64>,
    pub values: Vec<f64>,
}

impl LilLadder {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("non-empty ladder")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedEstimate {
    pub value: f64,
    /// `(k, estimate_k)` up to the stopping point.
    pub k_trace: Vec<(f64, f64)>,
    pub stabilized: bool,
}

const STABILITY: f64 = 0.05;

/// Precomputed normalizers and rungs for one grid.
#[derive(Debug, Clone)]
pub struct LilEstimator {
    grid: Grid,
    params: LilParams,
    window: usize,
    rungs: Vec<usize>,
    inv_norm: Vec<f64>,
}

impl LilEstimator {
    pub fn new(grid: Grid, params: LilParams) -> Result<Self> {
        params.validate(&grid)?;
        let dt = grid.dt();
        let window = ((params.h_max / dt).round() as usize).max(1);
        let min_cells = ((params.h_min.unwrap_or(dt) / dt).round() as usize).clamp(1, window);
        let mut rungs = vec![window];
        let mut h = window;
        while h / 2 > min_cells {
            h /= 2;
            rungs.push(h);
        }
        if *rungs.last().unwrap() != min_cells {
            rungs.push(min_cells);
        }
        let inv_norm = (0..=window)
            .map(|l| {
                if l == 0 {
                    0.0
                } else {
                    let h = l as f64 * dt;
                    1.0 / (2.0 * h * (1.0 / h).ln().ln()).sqrt()
                }
            })
            .collect();
        Ok(Self { grid, params, window, rungs, inv_norm })
    }

    pub fn params(&self) -> &LilParams {
        &self.params
    }

    pub fn window_cells(&self) -> usize {
        self.window
    }

    fn check_node(&self, t: usize) -> Result<()> {
        if t + self.window > self.grid.n_steps() {
            let dt = self.grid.dt();
            return Err(Error::WindowOutOfRange { t: t as f64 * dt, end: (t + self.window) as f64 * dt });
        }
        Ok(())
    }

    fn ladder_with(&self, t: usize, two_sided: bool, x: impl Fn(usize) -> f64) -> LilLadder {
        let x0 = x(t);
        let inc = |l: usize| if two_sided { (x(t + l) - x0).abs() } else { x(t + l) - x0 };
        let dt = self.grid.dt();
        let mut best = f64::NEG_INFINITY;
        let mut values = Vec::with_capacity(self.rungs.len());
        let mut rung = 0;
        let stride = self.params.stride;
        let mut l = self.window;
        loop {
            while rung < self.rungs.len() && self.rungs[rung] > l {
                values.push(best);
                rung += 1;
            }
            best = best.max(inc(l) * self.inv_norm[l]);
            if l <= stride {
                if l > 1 {
                    l = 1;
                    continue;
                }
                break;
            }
            l -= stride;
        }
        while values.len() < self.rungs.len() {
            values.push(best);
        }
        LilLadder { h: self.rungs.iter().map(|&c| c as f64 * dt).collect(), values }
    }

    /// Ladder of absolute increments of `x` at node `t`, real part.
    pub fn ladder(&self, x: &GridFunction, t: usize) -> Result<LilLadder> {
        same_grid(&self.grid, x.grid())?;
        self.check_node(t)?;
        let v = x.values();
        Ok(self.ladder_with(t, true, |j| v[j].re))
    }

    /// Ladder of signed increments, as used by the k-shift.
    pub fn one_sided_ladder(&self, x: &GridFunction, t: usize) -> Result<LilLadder> {
        same_grid(&self.grid, x.grid())?;
        self.check_node(t)?;
        let v = x.values();
        Ok(self.ladder_with(t, false, |j| v[j].re))
    }

    /// Magnitude functional evaluated on the path itself.
    pub fn calibration_factor(&self, path: &BrownianPath, t: usize) -> Result<f64> {
        self.path_functional(path, t, true)
    }

    /// One-sided functional of the path. Negative when the path stays below
    /// `B(t)` over the whole window; the k-shift ratio is still consistent then.
    pub fn one_sided_calibration_factor(&self, path: &BrownianPath, t: usize) -> Result<f64> {
        self.path_functional(path, t, false)
    }

    fn path_functional(&self, path: &BrownianPath, t: usize, two_sided: bool) -> Result<f64> {
        same_grid(&self.grid, path.grid())?;
        self.check_node(t)?;
        let b = path.values();
        let c = self.ladder_with(t, two_sided, |j| b[j]).last();
        if c == 0.0 || !c.is_finite() {
            return Err(Error::InvalidParams(format!("degenerate calibration factor {c} at node {t}")));
        }
        Ok(c)
    }

    fn calibration(&self, path: Option<&BrownianPath>, t: usize) -> Result<f64> {
        match (self.params.calibration, path) {
            (Calibration::None, _) => Ok(1.0),
            (Calibration::SelfCalibrated, Some(p)) => self.calibration_factor(p, t),
            (Calibration::SelfCalibrated, None) => {
                Err(Error::InvalidParams("self-calibration needs the reference path".into()))
            }
        }
    }

    /// Ladder value at `h_min`, divided by `calibration`.
    pub fn abs_estimate(&self, x: &GridFunction, t: usize, calibration: f64) -> Result<f64> {
        Ok(self.ladder(x, t)?.last() / calibration)
    }

    pub fn signed_estimate(&self, x: &GridFunction, path: &BrownianPath, t: usize) -> Result<SignedEstimate> {
        same_grid(&self.grid, x.grid())?;
        same_grid(&self.grid, path.grid())?;
        self.check_node(t)?;
        let cal = match self.params.calibration {
            Calibration::None => 1.0,
            Calibration::SelfCalibrated => self.one_sided_calibration_factor(path, t)?,
        };
        let (v, b) = (x.values(), path.values());
        let mut k_trace: Vec<(f64, f64)> = Vec::with_capacity(self.params.k_schedule.len());
        for &k in &self.params.k_schedule {
            let est = self.ladder_with(t, false, |j| v[j].re + k * b[j]).last() / cal - k;
            if let Some(&(k_prev, prev)) = k_trace.last() {
                k_trace.push((k, est));
                if (est - prev).abs() < STABILITY * (k - k_prev) {
                    return Ok(SignedEstimate { value: est, k_trace, stabilized: true });
                }
            } else {
                k_trace.push((k, est));
            }
        }
        let value = k_trace.last().unwrap().1;
        Ok(SignedEstimate { value, k_trace, stabilized: false })
    }
}

/// Estimate of `|a(t)|`; the path is read only for self-calibration.
pub fn lil_abs_estimator(x: &GridFunction, t: usize, params: &LilParams, path: Option<&BrownianPath>) -> Result<f64> {
    let est = LilEstimator::new(*x.grid(), params.clone())?;
    let cal = est.calibration(path, t)?;
    est.abs_estimate(x, t, cal)
}

pub fn lil_signed_estimator(x: &GridFunction, path: &BrownianPath, t: usize, params: &LilParams) -> Result<SignedEstimate> {
    LilEstimator::new(*x.grid(), params.clone())?.signed_estimate(x, path, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalAverage {
    /// `(n, n int over the window of length 1/n)`
    pub ladder: Vec<(f64, f64)>,
    pub value: f64,
}

pub fn local_average(a: &GridFunction, t: usize, side: Side, n_ladder: &[f64]) -> Result<LocalAverage> {
    let grid = a.grid();
    let v = a.real_values()?;
    if n_ladder.is_empty() {
        return Err(Error::InvalidParams("empty averaging ladder".into()));
    }
    let mut ladder = Vec::with_capacity(n_ladder.len());
    for &n in n_ladder {
        let w = (1.0 / (n * grid.dt())).round() as usize;
        if w == 0 {
            return Err(Error::InvalidParams(format!("window 1/{n} is below one cell")));
        }
        let (lo, hi) = match side {
            Side::Right if t + w <= grid.n_steps() => (t, t + w),
            Side::Left if t >= w => (t - w, t),
            _ => return Err(Error::SideInfeasible(format!("{side:?} window of {w} cells at node {t}"))),
        };
        ladder.push((n, v[lo..hi].iter().sum::<f64>() / w as f64));
    }
    let value = ladder.last().unwrap().1;
    Ok(LocalAverage { ladder, value })
}

impl SfcEngine {
    /// `sum_{n in Lambda} (c_n - int conj(e_n) a dB) e_n`.
    pub fn recover_drift(&self, sfc: &SfcVector, a: Diffusion<'_>, path: &BrownianPath, mask: &IndexMask) -> Result<GridFunction> {
        let diffusion = self.diffusion_part(a, path)?;
        let coeffs: Vec<C64> = (1..=sfc.len().min(self.n_outer()))
            .map(|n| match sfc.get(n) {
                Some(c) if mask.contains(n) => c - diffusion[n - 1],
                _ => ZERO,
            })
            .collect();
        Ok(self.outer().synthesize_function(&coeffs))
    }
}

pub fn recover_drift(
    sfc: &SfcVector,
    a: Diffusion<'_>,
    path: &BrownianPath,
    e: &BasisSpec,
    mask: &IndexMask,
    flavor: IntegralFlavor,
) -> Result<GridFunction> {
    SfcEngine::new(*path.grid(), *e, sfc.len(), flavor, SfcParams::default())?.recover_drift(sfc, a, path, mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationParams {
    #[serde(default)]
    pub lil: Option<LilParams>,
    /// LIL evaluation nodes.
    #[serde(default)]
    pub nodes: Vec<usize>,
    /// `n` values for local averaging of the `|a|` curve; empty disables smoothing.
    #[serde(default)]
    pub smoothing: Vec<f64>,
    #[serde(default = "yes")]
    pub recover_drift: bool,
    #[serde(default)]
    pub sfc: SfcParams,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub node: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedPoint {
    pub node: usize,
    pub estimate: SignedEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationDiagnostics {
    pub ibp_cross_check: Option<f64>,
    pub calibration: Vec<CurvePoint>,
    pub unstable_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationReport {
    pub sfc: SfcVector,
    pub primitive: GridFunction,
    pub modified: GridFunction,
    pub abs_curve: Vec<CurvePoint>,
    pub abs_smoothed: Vec<CurvePoint>,
    pub signed_curve: Vec<SignedPoint>,
    pub drift: Option<GridFunction>,
    pub diagnostics: IdentificationDiagnostics,
}

/// Prepared end-to-end pipeline for one scenario, reusable across paths.
pub struct Pipeline {
    grid: Grid,
    a: ChaosForm,
    b: ChaosForm,
    e: BasisSpec,
    engine: SfcEngine,
    mask: IndexMask,
    lil: Option<LilEstimator>,
    params: IdentificationParams,
}

impl Pipeline {
    pub fn new(
        diff: &StochasticDifferential,
        grid: Grid,
        e: BasisSpec,
        mask: IndexMask,
        params: IdentificationParams,
    ) -> Result<Self> {
        let (a, b) = diff.lower(&grid)?;
        let engine = SfcEngine::new(grid, e, mask.n_outer(), diff.flavor, params.sfc)?;
        let lil = params.lil.clone().map(|p| LilEstimator::new(grid, p)).transpose()?;
        if let Some(l) = &lil {
            if let Some(&bad) = params.nodes.iter().find(|&&t| t + l.window_cells() > grid.n_steps()) {
                return Err(Error::WindowOutOfRange {
                    t: grid.time(bad),
                    end: grid.time(bad) + l.window_cells() as f64 * grid.dt(),
                });
            }
        }
        Ok(Self { grid, a, b, e, engine, mask, lil, params })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn a(&self) -> &ChaosForm {
        &self.a
    }

    pub fn b(&self) -> &ChaosForm {
        &self.b
    }

    pub fn engine(&self) -> &SfcEngine {
        &self.engine
    }

    pub fn estimator(&self) -> Option<&LilEstimator> {
        self.lil.as_ref()
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.e
    }

    pub fn mask(&self) -> &IndexMask {
        &self.mask
    }

    pub fn run(&self, path: &BrownianPath) -> Result<IdentificationReport> {
        let sfc = apply_mask(&self.engine.compute(&self.a, &self.b, path)?, &self.mask)?;
        let primitive = parseval_transform(&sfc, &self.e, &self.grid)?;
        let modified = left_continuous_mod(&primitive);

        let mut abs_curve = Vec::new();
        let mut signed_curve = Vec::new();
        let mut calibration = Vec::new();
        let mut unstable_nodes = Vec::new();
        if let Some(lil) = &self.lil {
            for &t in &self.params.nodes {
                let cal = lil.calibration(Some(path), t)?;
                calibration.push(CurvePoint { node: t, value: cal });
                abs_curve.push(CurvePoint { node: t, value: lil.abs_estimate(&modified, t, cal)? });
                let s = lil.signed_estimate(&modified, path, t)?;
                if !s.stabilized {
                    unstable_nodes.push(t);
                }
                signed_curve.push(SignedPoint { node: t, estimate: s });
            }
        }
        let abs_smoothed = self.smooth(&abs_curve)?;
        let drift = if self.params.recover_drift {
            Some(self.engine.recover_drift(&sfc, Diffusion::Form(&self.a), path, &self.mask)?)
        } else {
            None
        };
        let diagnostics = IdentificationDiagnostics { ibp_cross_check: sfc.ibp_cross_check, calibration, unstable_nodes };
        Ok(IdentificationReport { sfc, primitive, modified, abs_curve, abs_smoothed, signed_curve, drift, diagnostics })
    }

    /// Local averages of the step function through the curve points.
    fn smooth(&self, curve: &[CurvePoint]) -> Result<Vec<CurvePoint>> {
        if self.params.smoothing.is_empty() || curve.is_empty() {
            return Ok(Vec::new());
        }
        let mut sorted = curve.to_vec();
        sorted.sort_by_key(|p| p.node);
        let mut values = vec![sorted[0].value; self.grid.node_count()];
        for (i, p) in sorted.iter().enumerate() {
            let end = sorted.get(i + 1).map_or(self.grid.node_count(), |q| q.node);
            values[p.node..end].fill(p.value);
        }
        let step = GridFunction::from_real(self.grid, &values)?;
        curve
            .iter()
            .map(|p| {
                let avg = local_average(&step, p.node, Side::Right, &self.params.smoothing)
                    .or_else(|_| local_average(&step, p.node, Side::Left, &self.params.smoothing))?;
                Ok(CurvePoint { node: p.node, value: avg.value })
            })
            .collect()
    }
}

pub fn run_identification(
    diff: &StochasticDifferential,
    path: &BrownianPath,
    e: &BasisSpec,
    mask: &IndexMask,
    params: &IdentificationParams,
) -> Result<IdentificationReport> {
    Pipeline::new(diff, *path.grid(), *e, mask.clone(), params.clone())?.run(path)
}
