//! JSON scenario documents: schema, defaults and validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cons::{BasisFamily, BasisSpec, TrigOrdering};
use crate::grid::Grid;
use crate::processes::{DetFunction, RandomFunctionSpec};
use crate::reconstruct::{Calibration, IdentificationParams, LilParams};
use crate::sfc::{IndexMask, IntegralFlavor, SfcParams, StochasticDifferential};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigError {
    pub errors: Vec<FieldError>,
}

impl ConfigError {
    fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { errors: vec![FieldError { field: field.into(), message: message.into() }] }
    }

    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.errors.iter().map(|e| e.field.as_str())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "unit")]
    pub horizon: f64,
    pub n_steps: usize,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuterBasisConfig {
    #[serde(default = "haar")]
    pub family: BasisFamily,
    #[serde(default)]
    pub ordering: TrigOrdering,
    /// Defaults to `n_steps`.
    #[serde(default)]
    pub n_outer: Option<usize>,
    /// Indices outside the mask.
    #[serde(default)]
    pub excluded: Vec<usize>,
}

impl Default for OuterBasisConfig {
    fn default() -> Self {
        Self { family: BasisFamily::Haar, ordering: TrigOrdering::Symmetric, n_outer: None, excluded: Vec::new() }
    }
}

fn haar() -> BasisFamily {
    BasisFamily::Haar
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerBasisConfig {
    #[serde(default = "haar")]
    pub family: BasisFamily,
    #[serde(default)]
    pub ordering: TrigOrdering,
    /// Defaults to `n_steps`.
    #[serde(default)]
    pub m_max: Option<usize>,
}

impl Default for InnerBasisConfig {
    fn default() -> Self {
        Self { family: BasisFamily::Haar, ordering: TrigOrdering::Symmetric, m_max: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    OgawaPhi,
    #[default]
    OgawaU,
    Skorokhod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilConfig {
    pub h_max: f64,
    #[serde(default)]
    pub h_min: Option<f64>,
    #[serde(default = "one_usize")]
    pub stride: usize,
    #[serde(default = "default_k_schedule")]
    pub k_schedule: Vec<f64>,
    #[serde(default)]
    pub calibration: Calibration,
    /// Evaluation times; combined with `node_count` evenly spaced nodes.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub node_count: Option<usize>,
    /// Relative half-width of the acceptance band for the estimates.
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default)]
    pub smoothing: Vec<f64>,
    /// Scale factors for the homogeneity probe.
    #[serde(default)]
    pub homogeneity: Vec<f64>,
    /// Indices removed for the mask-perturbation probe.
    #[serde(default)]
    pub mask_probe: Vec<usize>,
    /// Drift added for the drift-perturbation probe, rescaled to unit norm.
    #[serde(default)]
    pub drift_probe: Option<DetFunction>,
}

fn one_usize() -> usize {
    1
}

fn default_k_schedule() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0]
}

fn default_band() -> f64 {
    0.15
}

impl LilConfig {
    pub fn params(&self) -> LilParams {
        LilParams {
            h_max: self.h_max,
            h_min: self.h_min,
            stride: self.stride,
            k_schedule: self.k_schedule.clone(),
            calibration: self.calibration,
        }
    }

    /// Evaluation node indices, sorted and deduplicated.
    pub fn nodes(&self, grid: &Grid) -> crate::Result<Vec<usize>> {
        let mut nodes = self.times.iter().map(|&t| grid.node_index(t)).collect::<crate::Result<Vec<_>>>()?;
        let window = ((self.h_max / grid.dt()).round() as usize).max(1);
        let last = grid.n_steps().saturating_sub(window);
        match self.node_count {
            Some(k) if k > 0 => {
                nodes.extend((0..k).map(|i| if k == 1 { 0 } else { i * last / (k - 1) }));
            }
            _ if nodes.is_empty() => nodes.push(grid.n_steps() / 4),
            _ => {}
        }
        nodes.sort_unstable();
        nodes.dedup();
        Ok(nodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicationConfig {
    #[serde(default = "one_usize")]
    pub count: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one_usize")]
    pub parallelism: usize,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self { count: 1, base_seed: 0, parallelism: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Stride between nodes written for the path-valued stages; defaults to `n_steps / 256`.
    #[serde(default)]
    pub node_stride: Option<usize>,
    /// Also write every SFC vector.
    #[serde(default)]
    pub write_sfc: bool,
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), formats: default_formats(), node_stride: None, write_sfc: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSpec {
    pub name: String,
    pub spec: RandomFunctionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Weight `e` multiplying the integrands.
    #[serde(default = "unit_weight")]
    pub weight: DetFunction,
    /// Extra integrands checked alongside `a`.
    #[serde(default)]
    pub integrands: Vec<NamedSpec>,
    #[serde(default = "default_series_tolerance")]
    pub series_tolerance: f64,
    /// Families compared by the universality check.
    #[serde(default)]
    pub bases: Vec<BasisSpec>,
}

fn unit_weight() -> DetFunction {
    DetFunction::constant(1.0)
}

fn default_series_tolerance() -> f64 {
    1e-8
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { weight: unit_weight(), integrands: Vec::new(), series_tolerance: default_series_tolerance(), bases: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Grid sizes of the calibration table; defaults to the scenario grid.
    #[serde(default)]
    pub n_steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    AbsMean,
    Rms,
    Q05,
    Q50,
    Q95,
    Min,
    Max,
    MaxAbs,
    /// `|mean| / standard error`
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub metric: String,
    pub stat: Stat,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridConfig,
    #[serde(default = "RandomFunctionSpec::zero")]
    pub a: RandomFunctionSpec,
    #[serde(default = "RandomFunctionSpec::zero")]
    pub b: RandomFunctionSpec,
    #[serde(default)]
    pub outer_basis: OuterBasisConfig,
    #[serde(default)]
    pub inner_basis: InnerBasisConfig,
    #[serde(default)]
    pub flavor: Flavor,
    #[serde(default)]
    pub lil: Option<LilConfig>,
    #[serde(default)]
    pub replication: ReplicationConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub sfc: SfcParams,
    #[serde(default)]
    pub tolerances: Vec<Tolerance>,
}

impl ScenarioConfig {
    pub fn grid(&self) -> crate::Result<Grid> {
        Grid::new(self.grid.horizon, self.grid.n_steps)
    }

    pub fn outer_basis(&self) -> BasisSpec {
        BasisSpec { family: self.outer_basis.family, ordering: self.outer_basis.ordering }
    }

    pub fn inner_basis(&self) -> BasisSpec {
        BasisSpec { family: self.inner_basis.family, ordering: self.inner_basis.ordering }
    }

    pub fn n_outer(&self) -> usize {
        self.outer_basis.n_outer.unwrap_or(self.grid.n_steps)
    }

    pub fn m_max(&self) -> usize {
        self.inner_basis.m_max.unwrap_or(self.grid.n_steps)
    }

    pub fn integral_flavor(&self) -> IntegralFlavor {
        match self.flavor {
            Flavor::OgawaPhi => IntegralFlavor::OgawaPhi { basis: self.inner_basis(), m_max: self.m_max() },
            Flavor::OgawaU => IntegralFlavor::OgawaU,
            Flavor::Skorokhod => IntegralFlavor::Skorokhod,
        }
    }

    pub fn differential(&self) -> StochasticDifferential {
        StochasticDifferential::new(self.a.clone(), self.b.clone(), self.integral_flavor())
    }

    pub fn mask(&self) -> crate::Result<IndexMask> {
        IndexMask::excluding(self.n_outer(), self.outer_basis.excluded.iter().copied())
    }

    pub fn identification_params(&self) -> crate::Result<IdentificationParams> {
        let grid = self.grid()?;
        let (lil, nodes, smoothing) = match &self.lil {
            Some(l) => (Some(l.params()), l.nodes(&grid)?, l.smoothing.clone()),
            None => (None, Vec::new(), Vec::new()),
        };
        Ok(IdentificationParams { lil, nodes, smoothing, recover_drift: true, sfc: self.sfc })
    }

    /// Checks every module precondition; all problems are reported at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut push = |field: &str, message: String| errors.push(FieldError { field: field.into(), message });
        let grid = match self.grid() {
            Ok(g) => g,
            Err(e) => {
                let field = if self.grid.horizon.is_finite() && self.grid.horizon > 0.0 { "grid.n_steps" } else { "grid.horizon" };
                return Err(ConfigError::single(field, e.to_string()));
            }
        };
        let a = self.a.lower(&grid);
        if let Err(e) = &a {
            push("a", e.to_string());
        }
        if let Err(e) = self.b.lower(&grid) {
            push("b", e.to_string());
        }
        if a.is_ok() {
            if let Err(e) = self.differential().lower(&grid) {
                if matches!(e, crate::Error::FlavorMismatch(_)) {
                    push("flavor", format!("{e}; incompatible with field a ({})", self.a.label()));
                    push("a", format!("{} cannot be used with flavor {:?}", self.a.label(), self.flavor));
                } else {
                    push("inner_basis.m_max", e.to_string());
                }
            }
        }
        let n = grid.n_steps();
        if self.n_outer() == 0 || self.n_outer() > n {
            push("outer_basis.n_outer", format!("must be in 1..={n}"));
        } else {
            match self.mask() {
                Err(crate::Error::EmptyMask) => push("outer_basis.excluded", "mask must be cofinite and nonempty".into()),
                Err(e) => push("outer_basis.excluded", e.to_string()),
                Ok(_) => {}
            }
        }
        if self.m_max() == 0 || self.m_max() > n {
            push("inner_basis.m_max", format!("must be in 1..={n}"));
        }
        if let Some(l) = &self.lil {
            if let Err(e) = l.params().validate(&grid) {
                push("lil", e.to_string());
            } else {
                match l.nodes(&grid) {
                    Err(e) => push("lil.times", e.to_string()),
                    Ok(nodes) => {
                        let window = ((l.h_max / grid.dt()).round() as usize).max(1);
                        if let Some(&t) = nodes.iter().find(|&&t| t + window > n) {
                            push("lil.times", format!("t = {} too close to L for h_max = {}", grid.time(t), l.h_max));
                        }
                    }
                }
            }
            if !(l.band > 0.0) {
                push("lil.band", "must be positive".into());
            }
            if l.homogeneity.iter().any(|&c| !(c > 0.0)) {
                push("lil.homogeneity", "scale factors must be positive".into());
            }
            if !l.mask_probe.is_empty() {
                if let Err(e) = IndexMask::excluding(self.n_outer(), l.mask_probe.iter().copied()) {
                    push("lil.mask_probe", e.to_string());
                }
            }
            if let Some(d) = &l.drift_probe {
                match d.realize(&grid) {
                    Err(e) => push("lil.drift_probe", e.to_string()),
                    Ok(f) if f.l2_norm() == 0.0 => push("lil.drift_probe", "drift probe has zero norm".into()),
                    Ok(_) => {}
                }
            }
        }
        if self.replication.count == 0 {
            push("replication.count", "must be >= 1".into());
        }
        if self.replication.parallelism == 0 {
            push("replication.parallelism", "must be >= 1".into());
        }
        if let Err(e) = self.oracle.weight.realize(&grid) {
            push("oracle.weight", e.to_string());
        }
        for (i, s) in self.oracle.integrands.iter().enumerate() {
            if let Err(e) = s.spec.lower(&grid) {
                push(&format!("oracle.integrands[{i}].spec"), e.to_string());
            }
        }
        for (i, &m) in self.calibrate.n_steps.iter().enumerate() {
            if let Err(e) = Grid::new(self.grid.horizon, m) {
                push(&format!("calibrate.n_steps[{i}]"), e.to_string());
            }
        }
        for (i, t) in self.tolerances.iter().enumerate() {
            if t.min.is_none() && t.max.is_none() {
                push(&format!("tolerances[{i}]"), "needs min or max".into());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { errors })
        }
    }
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." { format!("line {}", inner.line()) } else { path };
        ConfigError::single(field, format!("{inner}"))
    })?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(r#"{"grid": {"n_steps": 64}}"#).unwrap();
        assert_eq!(c.grid.horizon, 1.0);
        assert_eq!(c.n_outer(), 64);
        assert_eq!(c.flavor, Flavor::OgawaU);
        assert_eq!(c.replication.count, 1);
        assert_eq!(c.a, RandomFunctionSpec::zero());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config(r#"{"grid": {"n_steps": 64, "dx": 1}}"#).unwrap_err();
        assert!(e.errors[0].field.starts_with("grid"), "{e}");
    }

    #[test]
    fn skorokhod_with_abs_names_both_fields() {
        let e = parse_config(
            r#"{"grid": {"n_steps": 64}, "flavor": "skorokhod",
                "a": {"type": "fv_anticipative", "g": {"kind": "constant", "value": 1}, "functional": "|B(L)|"}}"#,
        )
        .unwrap_err();
        let fields: Vec<_> = e.fields().collect();
        assert!(fields.contains(&"flavor") && fields.contains(&"a"), "{e}");
    }

    #[test]
    fn empty_mask_is_rejected() {
        let e = parse_config(r#"{"grid": {"n_steps": 4}, "outer_basis": {"n_outer": 2, "excluded": [1, 2]}}"#).unwrap_err();
        assert_eq!(e.errors[0].message, "mask must be cofinite and nonempty");
    }

    #[test]
    fn bad_grid_is_field_addressed() {
        let e = parse_config(r#"{"grid": {"n_steps": 6}}"#).unwrap_err();
        assert_eq!(e.errors[0].field, "grid.n_steps");
    }
}
