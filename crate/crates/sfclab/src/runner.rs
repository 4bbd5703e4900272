//! Scenario execution: replicated runs of one subcommand, metric aggregation,
//! tolerance checks and output files.
//!
//! Replicate `r` always uses the path seeded by `replicate_seed(base_seed, r)`,
//! and results are collected in replicate order, so every output except
//! `timing.json` is independent of the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cons::{basis_function, check_basis_condition, BasisSpec, Projector};
use crate::error::{Error, Result};
use crate::grid::{l2_inner, replicate_seed, sample_brownian, BrownianPath, Grid, GridFunction, C64, ZERO};
use crate::integrals::{
    ogawa_ibp, ogawa_ibp_primitive, ogawa_series, ogawa_via_trace, s_type_decomposition, symmetric_sum,
    universality_check, wiener_coefficients,
};
use crate::processes::{ChaosForm, RandomFunctionSpec, RealizedFunction};
use crate::reconstruct::{left_continuous_mod, parseval_transform, LilEstimator, Pipeline};
use crate::scenario::{Flavor, Format, ScenarioConfig, Stat, Tolerance};
use crate::sfc::{apply_mask, IndexMask, SfcRow, SfcVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    OracleCheck,
    LilCalibrate,
    BasisDiagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Run => "run",
            Self::OracleCheck => "oracle-check",
            Self::LilCalibrate => "lil-calibrate",
            Self::BasisDiagnose => "basis-diagnose",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "run" => Ok(Self::Run),
            "oracle-check" => Ok(Self::OracleCheck),
            "lil-calibrate" => Ok(Self::LilCalibrate),
            "basis-diagnose" => Ok(Self::BasisDiagnose),
            other => Err(Error::InvalidParams(format!("unknown subcommand {other:?}"))),
        }
    }
}

/// Command-line overrides of the scenario document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(n) = self.replicates {
            config.replication.count = n;
        }
        if let Some(s) = self.seed {
            config.replication.base_seed = s;
        }
        if let Some(o) = &self.out {
            config.outputs.directory = o.to_string_lossy().into_owned();
        }
        if let Some(k) = self.threads {
            config.replication.parallelism = k;
        }
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub replicate: u64,
    pub stage: String,
    pub node_index: usize,
    pub value_re: f64,
    pub value_im: f64,
    pub truth_re: f64,
    pub truth_im: f64,
    pub abs_err: f64,
}

impl ResultRow {
    fn new(replicate: u64, stage: &str, node_index: usize, value: C64, truth: C64) -> Self {
        Self {
            replicate,
            stage: stage.to_owned(),
            node_index,
            value_re: value.re,
            value_im: value.im,
            truth_re: truth.re,
            truth_im: truth.im,
            abs_err: (value - truth).norm(),
        }
    }

    fn real(replicate: u64, stage: &str, node_index: usize, value: f64, truth: f64) -> Self {
        Self::new(replicate, stage, node_index, C64::new(value, 0.0), C64::new(truth, 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub count: usize,
    pub non_finite: usize,
    pub mean: f64,
    pub rms: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub pass: Option<bool>,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        let non_finite = values.len() - v.len();
        let n = v.len();
        if n == 0 {
            let nan = f64::NAN;
            return Self {
                count: 0,
                non_finite,
                mean: nan,
                rms: nan,
                stderr: nan,
                min: nan,
                max: nan,
                max_abs: nan,
                q05: nan,
                q50: nan,
                q95: nan,
                pass: None,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        let stderr = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        v.sort_by(f64::total_cmp);
        Self {
            count: n,
            non_finite,
            mean,
            rms,
            stderr,
            min: v[0],
            max: v[n - 1],
            max_abs: v[0].abs().max(v[n - 1].abs()),
            q05: quantile(&v, 0.05),
            q50: quantile(&v, 0.5),
            q95: quantile(&v, 0.95),
            pass: None,
        }
    }

    pub fn stat(&self, stat: Stat) -> f64 {
        match stat {
            Stat::Mean => self.mean,
            Stat::AbsMean => self.mean.abs(),
            Stat::Rms => self.rms,
            Stat::Q05 => self.q05,
            Stat::Q50 => self.q50,
            Stat::Q95 => self.q95,
            Stat::Min => self.min,
            Stat::Max => self.max,
            Stat::MaxAbs => self.max_abs,
            Stat::Z => {
                // A constant sample has zero spread; treat a vanishing mean as exactly centred.
                if self.stderr > 0.0 {
                    self.mean.abs() / self.stderr
                } else if self.mean.abs() <= f64::EPSILON * self.max_abs.max(1.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceCheck {
    pub metric: String,
    pub stat: Stat,
    pub value: f64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
}

fn check_tolerance(t: &Tolerance, metrics: &BTreeMap<String, MetricSummary>) -> ToleranceCheck {
    let value = metrics.get(&t.metric).map_or(f64::NAN, |m| m.stat(t.stat));
    let pass = value.is_finite() && t.min.map_or(true, |lo| value >= lo) && t.max.map_or(true, |hi| value <= hi);
    ToleranceCheck { metric: t.metric.clone(), stat: t.stat, value, min: t.min, max: t.max, pass }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: u64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub command: String,
    pub replicates: usize,
    pub base_seed: u64,
    pub failures: Vec<ReplicateFailure>,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub checks: Vec<ToleranceCheck>,
    pub pass: bool,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub threads: usize,
    pub wall_seconds: f64,
    /// Summed over replicates.
    pub stage_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub n_steps: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub replicates: usize,
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub sup_l2: f64,
    pub sup_l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub timing: Timing,
    pub rows: Vec<ResultRow>,
    pub sfc_rows: Vec<SfcRow>,
    pub replicates: Vec<serde_json::Value>,
    pub calibration: Vec<CalibrationRow>,
    pub basis: Vec<BasisRow>,
}

#[derive(Default)]
struct Replicate {
    rows: Vec<ResultRow>,
    metrics: Vec<(String, f64)>,
    sfc: Option<SfcVector>,
    detail: serde_json::Value,
    stages: Vec<(&'static str, f64)>,
}

impl Replicate {
    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    fn timed<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((stage, start.elapsed().as_secs_f64()));
        out
    }
}

trait Job: Sync {
    fn replicate(&self, r: u64, seed: u64) -> Result<Replicate>;
}

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)?;
    Ok(crate::scenario::parse_config(&text)?)
}

/// Runs `command` in memory.
pub fn execute(config: &ScenarioConfig, command: Command) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let threads = config.replication.parallelism;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;

    let mut global = Vec::new();
    let mut calibration_spec = Vec::new();
    let mut basis = Vec::new();
    let job: Box<dyn Job> = match command {
        Command::Run => Box::new(RunJob::new(config)?),
        Command::OracleCheck => Box::new(OracleJob::new(config)?),
        Command::LilCalibrate => {
            let job = CalibrateJob::new(config)?;
            calibration_spec = job.grids.iter().map(|(g, est, _)| (*g, est.params().h_min.unwrap_or(g.dt()), est.params().h_max)).collect();
            Box::new(job)
        }
        Command::BasisDiagnose => {
            let job = BasisJob::new(config)?;
            let report = check_basis_condition(&job.weight, &config.inner_basis(), config.m_max().min(BASIS_SWEEP_LIMIT));
            basis = report.sup_norms.iter().map(|p| BasisRow { m: p.m, sup_l2: p.l2, sup_l1: p.l1 }).collect();
            global.push(("c1_plateau_ratio".to_owned(), report.c1.plateau_ratio));
            global.push(("c2_plateau_ratio".to_owned(), report.c2.plateau_ratio));
            global.push(("tv_ratio".to_owned(), report.c1.tv_ratio));
            global.push(("c1_holds".to_owned(), f64::from(u8::from(report.c1.holds))));
            global.push(("c2_holds".to_owned(), f64::from(u8::from(report.c2.holds))));
            Box::new(job)
        }
    };

    let base = config.replication.base_seed;
    let count = config.replication.count as u64;
    let outcomes: Vec<(u64, u64, std::result::Result<Replicate, String>)> = pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(base, r);
                let out = catch_unwind(AssertUnwindSafe(|| job.replicate(r, seed)));
                let out = match out {
                    Ok(Ok(rep)) => Ok(rep),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(panic) => Err(panic_message(panic)),
                };
                (r, seed, out)
            })
            .collect()
    });

    let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (name, v) in global {
        pooled.entry(name).or_default().push(v);
    }
    let mut rows = Vec::new();
    let mut sfc_rows = Vec::new();
    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    let mut stage_seconds: BTreeMap<String, f64> = BTreeMap::new();
    for (r, seed, out) in outcomes {
        match out {
            Ok(rep) => {
                for (name, v) in &rep.metrics {
                    pooled.entry(name.clone()).or_default().push(*v);
                }
                for (stage, s) in &rep.stages {
                    *stage_seconds.entry((*stage).to_owned()).or_default() += s;
                }
                rows.extend(rep.rows);
                if config.outputs.write_sfc {
                    if let Some(s) = &rep.sfc {
                        sfc_rows.extend(s.rows(r));
                    }
                }
                let metrics: BTreeMap<_, _> = rep.metrics.into_iter().collect();
                replicates.push(serde_json::json!({
                    "replicate": r,
                    "seed": seed,
                    "metrics": metrics,
                    "stages": rep.detail,
                }));
            }
            Err(message) => failures.push(ReplicateFailure { replicate: r, seed, message }),
        }
    }

    let mut metrics: BTreeMap<String, MetricSummary> =
        pooled.iter().map(|(k, v)| (k.clone(), MetricSummary::from_values(v))).collect();
    let checks: Vec<ToleranceCheck> = config.tolerances.iter().map(|t| check_tolerance(t, &metrics)).collect();
    for c in &checks {
        if let Some(m) = metrics.get_mut(&c.metric) {
            m.pass = Some(m.pass.unwrap_or(true) && c.pass);
        }
    }
    let calibration = calibration_spec
        .iter()
        .map(|&(g, h_min, h_max)| {
            let s = metrics.get(&calibration_metric(g.n_steps())).cloned().unwrap_or_else(|| MetricSummary::from_values(&[]));
            CalibrationRow {
                n_steps: g.n_steps(),
                h_min,
                h_max,
                replicates: config.replication.count - failures.len(),
                mean: s.mean,
                median: s.q50,
                q05: s.q05,
                q95: s.q95,
            }
        })
        .collect();
    let pass = failures.is_empty() && checks.iter().all(|c| c.pass);
    let summary = RunSummary {
        scenario: config.name.clone(),
        command: command.name().to_owned(),
        replicates: config.replication.count,
        base_seed: base,
        failures,
        metrics,
        checks,
        pass,
    };
    let timing = Timing { threads, wall_seconds: start.elapsed().as_secs_f64(), stage_seconds };
    Ok(RunOutput { summary, timing, rows, sfc_rows, replicates, calibration, basis })
}

/// Applies the overrides, runs `command` and writes the output files.
pub fn run(mut config: ScenarioConfig, command: Command, overrides: &Overrides) -> Result<RunOutput> {
    overrides.apply(&mut config);
    let output = execute(&config, command)?;
    write_outputs(&output, Path::new(&config.outputs.directory), &config.outputs.formats)?;
    Ok(output)
}

pub fn write_outputs(output: &RunOutput, dir: &Path, formats: &[Format]) -> Result<()> {
    fs::create_dir_all(dir)?;
    if formats.contains(&Format::Csv) {
        write_csv(&dir.join("results.csv"), &output.rows, RESULT_HEADER)?;
        if !output.sfc_rows.is_empty() {
            write_csv(&dir.join("sfc.csv"), &output.sfc_rows, &[])?;
        }
        if !output.calibration.is_empty() {
            write_csv(&dir.join("calibration.csv"), &output.calibration, &[])?;
        }
        if !output.basis.is_empty() {
            write_csv(&dir.join("basis.csv"), &output.basis, &[])?;
        }
    }
    if formats.contains(&Format::Json) {
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&output.summary)?)?;
        fs::write(dir.join("replicates.json"), serde_json::to_string_pretty(&output.replicates)?)?;
    }
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&output.timing)?)?;
    Ok(())
}

const RESULT_HEADER: &[&str] =
    &["replicate", "stage", "node_index", "value_re", "value_im", "truth_re", "truth_im", "abs_err"];

/// Serialized rows; the header comes from the field names, or `header` when there are no rows.
fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() && !header.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = panic.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_owned()
    }
}

fn default_stride(config: &ScenarioConfig) -> usize {
    config.outputs.node_stride.unwrap_or((config.grid.n_steps / 256).max(1)).max(1)
}

/// `k -> sum_{j<k} f_j dt` at every node.
fn cumulative(cells: &[C64], dt: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(cells.len() + 1);
    let mut acc = ZERO;
    out.push(acc);
    for c in cells {
        acc += c * dt;
        out.push(acc);
    }
    out
}

fn rel_err(est: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        est.abs()
    } else {
        (est - truth).abs() / truth.abs()
    }
}

fn loglog_norm(h: f64) -> f64 {
    (2.0 * (1.0 / h).ln().ln()).sqrt()
}

struct RunJob {
    grid: Grid,
    pipeline: Pipeline,
    flavor: Flavor,
    band: f64,
    stride: usize,
    homogeneity: Vec<f64>,
    /// Every outer index is present, so the primitive has a pathwise truth.
    full_mask: bool,
    mask_probe: Option<IndexMask>,
    /// Left-continuous primitive of the unit-norm drift probe.
    drift_probe: Option<GridFunction>,
    /// Explicit outer basis functions for the drift truth: `(inside, functions)`.
    projection: Option<(bool, Vec<GridFunction>)>,
}

/// Largest number of explicit basis functions used for the projected drift truth.
const EXPLICIT_PROJECTION_LIMIT: usize = 1 << 12;

impl RunJob {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let grid = config.grid()?;
        let mask = config.mask()?;
        let pipeline = Pipeline::new(
            &config.differential(),
            grid,
            config.outer_basis(),
            mask.clone(),
            config.identification_params()?,
        )?;
        let n = grid.n_steps();
        let e = config.outer_basis();
        let inside: Vec<usize> = (1..=mask.n_outer()).filter(|&m| mask.contains(m)).collect();
        let outside: Vec<usize> = (1..=n).filter(|&m| m > mask.n_outer() || !mask.contains(m)).collect();
        let full_mask = outside.is_empty();
        let projection = if full_mask {
            None
        } else {
            let (is_inside, idx) = if inside.len() <= outside.len() { (true, inside) } else { (false, outside) };
            if idx.len() > EXPLICIT_PROJECTION_LIMIT {
                return Err(Error::InvalidParams(format!(
                    "projected drift truth needs {} explicit basis functions (limit {EXPLICIT_PROJECTION_LIMIT})",
                    idx.len()
                )));
            }
            Some((is_inside, idx.into_iter().map(|m| basis_function(&e, m, &grid)).collect::<Result<Vec<_>>>()?))
        };
        let (mut band, mut homogeneity, mut mask_probe, mut drift_probe) = (0.15, Vec::new(), None, None);
        if let Some(l) = &config.lil {
            band = l.band;
            homogeneity = l.homogeneity.clone();
            if !l.mask_probe.is_empty() {
                mask_probe = Some(IndexMask::excluding(mask.n_outer(), l.mask_probe.iter().copied())?);
            }
            if let Some(d) = &l.drift_probe {
                let f = d.realize(&grid)?;
                let f = f.scale(C64::new(1.0 / f.l2_norm(), 0.0));
                let prim = GridFunction::new(grid, cumulative(f.cells(), grid.dt()))?;
                drift_probe = Some(left_continuous_mod(&prim));
            }
        }
        Ok(Self {
            grid,
            pipeline,
            flavor: config.flavor,
            band,
            stride: default_stride(config),
            homogeneity,
            full_mask,
            mask_probe,
            drift_probe,
            projection,
        })
    }

    /// Primitive `Y` of the differential computed without the SFC machinery.
    fn truth_primitive(&self, a: &GridFunction, b: &GridFunction, path: &BrownianPath) -> Result<Vec<C64>> {
        let form = self.pipeline.a();
        let dt = self.grid.dt();
        let mut y = if form.is_finite_variation() && a.is_real() && self.flavor != Flavor::Skorokhod {
            ogawa_ibp_primitive(a, &GridFunction::constant(self.grid, C64::new(1.0, 0.0)), path)?
        } else {
            let ito: Vec<C64> = a.cells().iter().zip(path.increments()).map(|(a, x)| a * (x / dt)).collect();
            cumulative(&ito, dt)
        };
        let correction: Option<Vec<C64>> = match self.flavor {
            Flavor::Skorokhod => Some(form.malliavin(path)?.diagonal().iter().map(|d| -d).collect()),
            Flavor::OgawaU | Flavor::OgawaPhi => form.running.as_ref().map(|f| f.iter().map(|f| f * 0.5).collect()),
        };
        if let Some(c) = correction {
            y.iter_mut().zip(cumulative(&c, dt)).for_each(|(y, c)| *y += c);
        }
        y.iter_mut().zip(cumulative(b.cells(), dt)).for_each(|(y, c)| *y += c);
        Ok(y)
    }

    fn projected_drift(&self, b: &GridFunction) -> Result<Vec<C64>> {
        let Some((inside, funcs)) = &self.projection else {
            return Ok(b.cells().to_vec());
        };
        let mut acc = if *inside { vec![ZERO; self.grid.n_steps()] } else { b.cells().to_vec() };
        let sign = if *inside { 1.0 } else { -1.0 };
        for e in funcs {
            let c = l2_inner(e, b)? * sign;
            acc.iter_mut().zip(e.cells()).for_each(|(s, e)| *s += c * e);
        }
        Ok(acc)
    }

    fn abs_at(lil: &LilEstimator, x: &GridFunction, t: usize, cal: f64) -> Result<f64> {
        lil.abs_estimate(x, t, cal)
    }
}

impl Job for RunJob {
    fn replicate(&self, r: u64, seed: u64) -> Result<Replicate> {
        let mut rep = Replicate::default();
        let path = &rep.timed("sampling", || sample_brownian(self.grid, seed));
        let report = rep.timed("identification", || self.pipeline.run(path))?;
        let (a, b, y) = rep.timed("oracles", || -> Result<_> {
            let a = self.pipeline.a().realize(path)?;
            let b = self.pipeline.b().realize(path)?;
            let y = self.truth_primitive(&a, &b, path)?;
            Ok((a, b, y))
        })?;
        let n = self.grid.n_steps();

        if self.full_mask {
            let prim = report.primitive.values();
            let mut worst = 0.0f64;
            for (k, (p, t)) in prim.iter().zip(&y).enumerate() {
                worst = worst.max((p - t).norm());
                if k % self.stride == 0 || k == n {
                    rep.rows.push(ResultRow::new(r, "primitive", k, *p, *t));
                }
            }
            rep.metric("primitive_max_err", worst);
        }
        if let Some(x) = report.diagnostics.ibp_cross_check {
            rep.metric("sfc_ibp_cross_check", x);
        }
        let twice = left_continuous_mod(&report.modified);
        let idem = twice.values().iter().zip(report.modified.values()).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        rep.metric("lcm_idempotence_dev", idem);

        if let Some(lil) = self.pipeline.estimator() {
            let (mut abs_in, mut signed_in, mut sign_ok, mut sign_n) = (0usize, 0usize, 0usize, 0usize);
            for (p, cal) in report.abs_curve.iter().zip(&report.diagnostics.calibration) {
                let truth = a.value(p.node).re;
                rep.rows.push(ResultRow::real(r, "abs_a", p.node, p.value, truth.abs()));
                let e = rel_err(p.value, truth.abs());
                rep.metric("abs_a_rel_err", e);
                abs_in += usize::from(e <= self.band);

                for &c in &self.homogeneity {
                    let scaled = report.modified.scale(C64::new(c, 0.0));
                    let est = Self::abs_at(lil, &scaled, p.node, cal.value)?;
                    let dev = (est - c * p.value).abs() / (c * p.value.abs()).max(f64::MIN_POSITIVE);
                    rep.metric("homogeneity_rel_dev", dev);
                }
            }
            for s in &report.signed_curve {
                let truth = a.value(s.node).re;
                rep.rows.push(ResultRow::real(r, "signed_a", s.node, s.estimate.value, truth));
                signed_in += usize::from(rel_err(s.estimate.value, truth) <= self.band);
                if truth != 0.0 {
                    sign_n += 1;
                    sign_ok += usize::from(s.estimate.value.signum() == truth.signum());
                }
                rep.metric("signed_a_stabilized", f64::from(u8::from(s.estimate.stabilized)));
            }
            for p in &report.abs_smoothed {
                rep.rows.push(ResultRow::real(r, "abs_a_smoothed", p.node, p.value, a.value(p.node).re.abs()));
            }
            let k = report.abs_curve.len().max(1) as f64;
            if !report.abs_curve.is_empty() {
                rep.metric("abs_a_in_band", abs_in as f64 / k);
                rep.metric("signed_a_in_band", signed_in as f64 / k);
            }
            if sign_n > 0 {
                rep.metric("signed_a_sign_correct", sign_ok as f64 / sign_n as f64);
            }

            let probe_start = Instant::now();
            {
                let h_max = lil.params().h_max;
                if let Some(m) = &self.mask_probe {
                    let masked = apply_mask(&report.sfc, m)?;
                    let x = left_continuous_mod(&parseval_transform(&masked, self.pipeline.basis(), &self.grid)?);
                    let removed: f64 = m.excluded().filter_map(|i| report.sfc.get(i)).map(|c| c.norm()).sum();
                    for (p, cal) in report.abs_curve.iter().zip(&report.diagnostics.calibration) {
                        let diff = (Self::abs_at(lil, &x, p.node, cal.value)? - p.value).abs();
                        let bound = removed / (loglog_norm(h_max) * cal.value);
                        rep.metric("mask_bound_slack", bound * (1.0 + 1e-12) + 1e-15 - diff);
                    }
                }
                if let Some(d) = &self.drift_probe {
                    let x = report.modified.add(d)?;
                    let h_min = lil.params().h_min.unwrap_or(self.grid.dt());
                    for (p, cal) in report.abs_curve.iter().zip(&report.diagnostics.calibration) {
                        let diff = (Self::abs_at(lil, &x, p.node, cal.value)? - p.value).abs();
                        rep.metric("drift_change", diff);
                        rep.metric("drift_bound_slack", 1.0 / loglog_norm(h_min) - diff);
                        let window = 1.0 / (loglog_norm(h_max) * cal.value);
                        rep.metric("drift_bound_slack_hmax", window * (1.0 + 1e-12) + 1e-15 - diff);
                    }
                }
            }
            rep.stages.push(("probes", probe_start.elapsed().as_secs_f64()));
        }

        if let Some(drift) = &report.drift {
            let truth = self.projected_drift(&b)?;
            let (mut worst, mut err2, mut norm2) = (0.0f64, 0.0, 0.0);
            for (j, (v, t)) in drift.cells().iter().zip(&truth).enumerate() {
                let e = (v - t).norm();
                worst = worst.max(e);
                err2 += e * e;
                norm2 += t.norm_sqr();
                if j % self.stride == 0 {
                    rep.rows.push(ResultRow::new(r, "drift", j, *v, *t));
                }
            }
            rep.metric("drift_max_err", worst);
            rep.metric("drift_rel_l2_err", if norm2 > 0.0 { (err2 / norm2).sqrt() } else { err2.sqrt() });
        }

        rep.detail = serde_json::json!({
            "abs_a": report.abs_curve,
            "abs_a_smoothed": report.abs_smoothed,
            "signed_a": report.signed_curve,
            "calibration": report.diagnostics.calibration,
            "unstable_nodes": report.diagnostics.unstable_nodes,
            "ibp_cross_check": report.diagnostics.ibp_cross_check,
        });
        rep.sfc = Some(report.sfc);
        Ok(rep)
    }
}

struct Integrand {
    name: String,
    spec: RandomFunctionSpec,
    form: ChaosForm,
}

struct OracleJob {
    grid: Grid,
    weight: GridFunction,
    inner: Projector,
    m_max: usize,
    tolerance: f64,
    integrands: Vec<Integrand>,
}

impl OracleJob {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let grid = config.grid()?;
        let named: Vec<(String, RandomFunctionSpec)> = if config.oracle.integrands.is_empty() {
            vec![("a".to_owned(), config.a.clone())]
        } else {
            config.oracle.integrands.iter().map(|s| (s.name.clone(), s.spec.clone())).collect()
        };
        let integrands = named
            .into_iter()
            .map(|(name, spec)| Ok(Integrand { form: spec.lower(&grid)?, name, spec }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            weight: config.oracle.weight.realize(&grid)?,
            inner: Projector::new(config.inner_basis(), grid),
            m_max: config.m_max(),
            tolerance: config.oracle.series_tolerance,
            integrands,
        })
    }
}

impl Job for OracleJob {
    fn replicate(&self, r: u64, seed: u64) -> Result<Replicate> {
        let mut rep = Replicate::default();
        let path = &rep.timed("sampling", || sample_brownian(self.grid, seed));
        let n = self.grid.n_steps();
        let horizon = self.grid.horizon();
        let w = wiener_coefficients(&self.inner, path);
        let mut detail = serde_json::Map::new();
        for it in &self.integrands {
            let a = it.form.realize(path)?;
            let fv = it.form.is_finite_variation() && a.is_real();
            let ibp = if fv { Some(ogawa_ibp(&a, &self.weight, path, 0.0, horizon)?) } else { None };
            if let Some(ibp) = ibp {
                let f = a.mul(&self.weight)?;
                let s = rep.timed("series", || ogawa_series(&self.inner, &w, &f, self.m_max, self.tolerance));
                rep.rows.push(ResultRow::new(r, &format!("{}.series", it.name), n, s.value, ibp));
                rep.metric(format!("{}.series_minus_ibp", it.name), (s.value - ibp).norm());
                rep.metric(format!("{}.series_tail", it.name), s.tail_estimate);
                detail.insert(format!("{}.ibp", it.name), serde_json::json!([ibp.re, ibp.im]));
            }
            if it.form.has_closed_form_derivative() {
                let sk = rep.timed("skorokhod", || it.form.skorokhod(path, &self.weight))?;
                rep.rows.push(ResultRow::new(r, &format!("{}.skorokhod", it.name), n, sk, ZERO));
                rep.metric(format!("{}.skorokhod", it.name), sk.re);
                let via = rep.timed("trace", || ogawa_via_trace(&it.spec, path, &self.weight))?;
                if let Some(ibp) = ibp {
                    rep.rows.push(ResultRow::new(r, &format!("{}.trace", it.name), n, via, ibp));
                    rep.metric(format!("{}.trace_minus_ibp", it.name), (via - ibp).norm());
                }
            }
            if matches!(it.spec, RandomFunctionSpec::STypeIto { .. }) {
                let dec = s_type_decomposition(&it.spec, path, &self.weight)?;
                let strat = symmetric_sum(&a, &self.weight, path)?;
                rep.rows.push(ResultRow::new(r, &format!("{}.decomposition", it.name), n, dec.total(), strat));
                rep.metric(format!("{}.decomposition_minus_stratonovich", it.name), (dec.total() - strat).re);
            }
        }
        rep.detail = serde_json::Value::Object(detail);
        Ok(rep)
    }
}

fn calibration_metric(n_steps: usize) -> String {
    format!("calibration.n{n_steps}")
}

struct CalibrateJob {
    grids: Vec<(Grid, LilEstimator, Vec<usize>)>,
}

impl CalibrateJob {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let lil = config
            .lil
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("lil-calibrate needs a lil section".into()))?;
        let sizes = if config.calibrate.n_steps.is_empty() { vec![config.grid.n_steps] } else { config.calibrate.n_steps.clone() };
        let grids = sizes
            .into_iter()
            .map(|n| {
                let g = Grid::new(config.grid.horizon, n)?;
                let est = LilEstimator::new(g, lil.params())?;
                let nodes = lil.nodes(&g)?;
                if let Some(&t) = nodes.iter().find(|&&t| t + est.window_cells() > n) {
                    return Err(Error::WindowOutOfRange { t: g.time(t), end: g.time(t) + lil.h_max });
                }
                Ok((g, est, nodes))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grids })
    }
}

impl Job for CalibrateJob {
    fn replicate(&self, r: u64, seed: u64) -> Result<Replicate> {
        let mut rep = Replicate::default();
        for (g, est, nodes) in &self.grids {
            let path = rep.timed("sampling", || sample_brownian(*g, seed));
            let name = calibration_metric(g.n_steps());
            for &t in nodes {
                let c = rep.timed("ladder", || est.calibration_factor(&path, t))?;
                rep.rows.push(ResultRow::real(r, &name, t, c, 1.0));
                rep.metric(name.clone(), c);
            }
        }
        Ok(rep)
    }
}

/// Largest `M` of the basis-condition sweep, which costs `O(M n)`.
const BASIS_SWEEP_LIMIT: usize = 512;

struct BasisJob {
    grid: Grid,
    weight: GridFunction,
    a: RandomFunctionSpec,
    bases: Vec<BasisSpec>,
    m_max: usize,
    tolerance: f64,
}

impl BasisJob {
    fn new(config: &ScenarioConfig) -> Result<Self> {
        let grid = config.grid()?;
        let bases = if config.oracle.bases.len() >= 2 {
            config.oracle.bases.clone()
        } else {
            vec![BasisSpec::haar(), BasisSpec::cosine(), BasisSpec::trigonometric()]
        };
        Ok(Self {
            grid,
            weight: config.oracle.weight.realize(&grid)?,
            a: config.a.clone(),
            bases,
            m_max: config.m_max(),
            tolerance: config.oracle.series_tolerance,
        })
    }
}

impl Job for BasisJob {
    fn replicate(&self, r: u64, seed: u64) -> Result<Replicate> {
        let mut rep = Replicate::default();
        let path = &rep.timed("sampling", || sample_brownian(self.grid, seed));
        let realized = crate::processes::realize(&self.a, path)?;
        let f = RealizedFunction { function: realized.function.mul(&self.weight)?, ..realized };
        let report = rep.timed("universality", || universality_check(&f, path, &self.bases, self.m_max, self.tolerance))?;
        rep.metric("universality_spread", report.max_spread);
        if let Some(d) = report.ibp_deviation {
            rep.metric("universality_ibp_deviation", d);
        }
        let reference = report.entries[0].series.value;
        for entry in &report.entries {
            let label = family_label(&entry.basis);
            rep.metric(format!("{label}.tail_estimate"), entry.series.tail_estimate);
            rep.metric(format!("{label}.converged"), f64::from(u8::from(entry.series.converged)));
            rep.rows.push(ResultRow::new(r, &format!("{label}.series"), entry.m_max, entry.series.value, reference));
        }
        Ok(rep)
    }
}

fn family_label(spec: &BasisSpec) -> String {
    serde_json::to_value(spec.family).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}
