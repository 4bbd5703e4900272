//! Dyadic time grid, Brownian paths, grid functions and the elementary
//! integrals (Wiener, Lebesgue, Riemann-Stieltjes, L2 inner product).
//!
//! A grid function value at `t_j` governs the cell `[t_j, t_{j+1})`; the value
//! at the last node `t_n = L` is carried for completeness but never weighted by
//! a cell.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Uniform dyadic discretization of `[0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    n_steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps < 2 || !n_steps.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_steps must be a power of two >= 2, got {n_steps}"
            )));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn node_count(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// log2(n_steps)
    pub fn level(&self) -> u32 {
        self.n_steps.trailing_zeros()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.time(j)).collect()
    }

    /// Index of the node at time `t`; off-grid times are rejected.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let dt = self.dt();
        if !t.is_finite() || t < -1e-9 * dt {
            return Err(Error::OffGrid { t });
        }
        let j = (t / dt).round();
        if j > self.n_steps as f64 || (t - j * dt).abs() > 1e-9 * dt {
            return Err(Error::OffGrid { t });
        }
        Ok(j as usize)
    }
}

/// Seed of replicate `r` under base seed `base`.
pub fn replicate_seed(base: u64, r: u64) -> u64 {
    base ^ r
}

/// One sampled Brownian trajectory on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: Grid,
    seed: u64,
    increments: Vec<f64>,
    values: Vec<f64>,
}

/// Draws i.i.d. `N(0, dt)` increments from a ChaCha8 stream keyed by `seed`.
pub fn sample_brownian(grid: Grid, seed: u64) -> BrownianPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = grid.dt().sqrt();
    let increments: Vec<f64> = (0..grid.n_steps())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    BrownianPath::assemble(grid, seed, increments)
}

impl BrownianPath {
    pub fn from_increments(grid: Grid, seed: u64, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.n_steps() {
            return Err(Error::GridMismatch);
        }
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite increment".into()));
        }
        Ok(Self::assemble(grid, seed, increments))
    }

    fn assemble(grid: Grid, seed: u64, increments: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for x in &increments {
            acc += x;
            values.push(acc);
        }
        Self { grid, seed, increments, values }
    }

    /// Same path with increment `i` shifted by `eps`.
    pub fn perturbed(&self, i: usize, eps: f64) -> Self {
        let mut inc = self.increments.clone();
        inc[i] += eps;
        Self::assemble(self.grid, self.seed, inc)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `increments()[j] = B(t_{j+1}) - B(t_j)`.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.grid.n_steps()]
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.node_index(t)?])
    }
}

/// Interpretation of the node values of a [`GridFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Piecewise constant on `[t_j, t_{j+1})`.
    LeftPoint,
    /// Samples of a continuous function.
    Node,
    /// Piecewise constant on `(t_{j-1}, t_j]`; output of the left-continuous modification.
    LeftContinuous,
}

/// Complex values at the `n_steps + 1` grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<C64>,
    convention: Convention,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParams("non-finite grid function value".into()));
        }
        Ok(Self { grid, values, convention: Convention::LeftPoint })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values, convention: Convention::LeftPoint }
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> C64) -> Result<Self> {
        Self::new(grid, grid.times().into_iter().map(f).collect())
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(grid, |t| C64::new(f(t), 0.0))
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec_unchecked(grid, vec![ZERO; grid.node_count()])
    }

    pub fn constant(grid: Grid, c: C64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.node_count()])
    }

    /// `1` on the cells inside `[s, t)`.
    pub fn indicator(grid: Grid, s: f64, t: f64) -> Result<Self> {
        let (i, k) = (grid.node_index(s)?, grid.node_index(t)?);
        let values = (0..grid.node_count())
            .map(|j| if j >= i && j < k { C64::new(1.0, 0.0) } else { ZERO })
            .collect();
        Ok(Self::from_vec_unchecked(grid, values))
    }

    pub fn with_convention(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn value(&self, j: usize) -> C64 {
        self.values[j]
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Cell values `f(t_0), ..., f(t_{n-1})`.
    pub fn cells(&self) -> &[C64] {
        &self.values[..self.grid.n_steps()]
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im.abs() <= 1e-12 * (1.0 + z.re.abs()))
    }

    pub fn real_values(&self) -> Result<Vec<f64>> {
        if !self.is_real() {
            return Err(Error::ComplexInput);
        }
        Ok(self.values.iter().map(|z| z.re).collect())
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, c: C64) -> Self {
        self.map(|z| z * c)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
            convention: self.convention,
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            convention: self.convention,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Grid L2 norm over the cells.
    pub fn l2_norm(&self) -> f64 {
        (self.cells().iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dt()).sqrt()
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

fn interval(grid: &Grid, s: f64, t: f64) -> Result<(usize, usize)> {
    let (i, k) = (grid.node_index(s)?, grid.node_index(t)?);
    if i > k {
        return Err(Error::InvalidInterval { s, t });
    }
    Ok((i, k))
}

/// `B_t[e] = sum_{t_j < t} e(t_j) dB_j`.
pub fn wiener_integral(e: &GridFunction, path: &BrownianPath, t: f64) -> Result<C64> {
    same_grid(e.grid(), path.grid())?;
    let k = path.grid().node_index(t)?;
    Ok(e.values[..k].iter().zip(&path.increments[..k]).map(|(&v, &x)| v * x).sum())
}

/// `B_{t_k}[e]` at every node.
pub fn wiener_process(e: &GridFunction, path: &BrownianPath) -> Result<Vec<C64>> {
    same_grid(e.grid(), path.grid())?;
    let mut out = Vec::with_capacity(e.values.len());
    let mut acc = ZERO;
    out.push(acc);
    for (&v, &x) in e.cells().iter().zip(&path.increments) {
        acc += v * x;
        out.push(acc);
    }
    Ok(out)
}

/// Left-point rule over `[s, t)`.
pub fn lebesgue_integral(f: &GridFunction, s: f64, t: f64) -> Result<C64> {
    let (i, k) = interval(f.grid(), s, t)?;
    Ok(f.values[i..k].iter().sum::<C64>() * f.grid().dt())
}

/// Integral of `f` against the jumps of `v` at the nodes strictly inside `(s, t)`.
///
/// The jump at `t_j` is `v(t_j) - v(t_{j-1})`, the difference between the
/// cell values to the right and to the left of the node, so that with `f = 1`
/// the sum telescopes to `v(t-) - v(s+)`.
pub fn stieltjes_integral(f: &GridFunction, v: &GridFunction, s: f64, t: f64) -> Result<C64> {
    same_grid(f.grid(), v.grid())?;
    let v = v.real_values()?;
    let (i, k) = interval(f.grid(), s, t)?;
    Ok(((i + 1)..k).map(|j| f.values[j] * (v[j] - v[j - 1])).sum())
}

/// `<f, g> = sum conj(f) g dt`.
pub fn l2_inner(f: &GridFunction, g: &GridFunction) -> Result<C64> {
    same_grid(f.grid(), g.grid())?;
    Ok(f.cells().iter().zip(g.cells()).map(|(a, b)| a.conj() * b).sum::<C64>() * f.grid().dt())
}
