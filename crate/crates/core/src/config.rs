//! Experiment configuration: one JSON file per experiment, with defaults for
//! every field except the model.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{auto_eps2, gap_containing, DEFAULT_EPS1, DEFAULT_RADIUS_RULE};
use crate::bloch::Gap;
use crate::domain::LatticeDomain;
use crate::dos::{default_grid_points, DosRoute};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Value(f64),
    Auto(AutoMidgap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoMidgap {
    #[serde(rename = "auto-midgap")]
    AutoMidgap,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Auto(AutoMidgap::AutoMidgap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eps2Spec {
    Value(f64),
    Auto(Auto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

impl Default for Eps2Spec {
    fn default() -> Self {
        Eps2Spec::Auto(Auto::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default = "yes")]
    pub log_spaced: bool,
}

fn yes() -> bool {
    true
}

impl Default for AlphaGrid {
    fn default() -> Self {
        AlphaGrid {
            min: 100.0,
            max: 10_000.0,
            points: 3,
            log_spaced: true,
        }
    }
}

impl AlphaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 {
            return Err(Error::invalid("alpha_grid.points", "must be >= 1"));
        }
        if !(self.min.is_finite()
            && self.max.is_finite()
            && self.min >= 0.0
            && self.max >= self.min)
        {
            return Err(Error::invalid("alpha_grid", "need 0 <= min <= max"));
        }
        if self.log_spaced && self.min <= 0.0 {
            return Err(Error::invalid(
                "alpha_grid.min",
                "must be > 0 on a log-spaced grid",
            ));
        }
        if self.points == 1 {
            return Ok(vec![self.min]);
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let t = i as f64 / n;
                if i == 0 {
                    self.min
                } else if i == self.points - 1 {
                    self.max
                } else if self.log_spaced {
                    self.min * (self.max / self.min).powf(t)
                } else {
                    self.min + t * (self.max - self.min)
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default)]
    pub eps2: Eps2Spec,
}

fn default_eps1() -> f64 {
    DEFAULT_EPS1
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            eps1: DEFAULT_EPS1,
            eps2: Eps2Spec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteChoice {
    Bloch,
    FiniteVolume,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSpec {
    #[serde(default = "default_route")]
    pub route: RouteChoice,
    /// Uniform λ samples; band edges are added on top.
    #[serde(default)]
    pub grid_points: Option<usize>,
    /// k-points per axis for the Bloch route.
    #[serde(default)]
    pub k_points: Option<usize>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub base_domain: Option<LatticeDomain>,
}

fn default_route() -> RouteChoice {
    RouteChoice::Bloch
}

fn default_betas() -> Vec<f64> {
    vec![50.0, 100.0, 200.0]
}

impl Default for DosSpec {
    fn default() -> Self {
        DosSpec {
            route: RouteChoice::Bloch,
            grid_points: None,
            k_points: None,
            betas: default_betas(),
            base_domain: None,
        }
    }
}

impl DosSpec {
    pub fn bloch_route(&self) -> DosRoute {
        DosRoute::Bloch {
            k_points: self.k_points,
        }
    }

    pub fn finite_volume_route(&self) -> DosRoute {
        DosRoute::FiniteVolume {
            betas: self.betas.clone(),
            base_domain: self.base_domain.clone(),
        }
    }

    /// The route whose table feeds the integral (`both` uses Bloch).
    pub fn primary_route(&self) -> DosRoute {
        match self.route {
            RouteChoice::FiniteVolume => self.finite_volume_route(),
            _ => self.bloch_route(),
        }
    }

    pub fn grid_points_for(&self, d: usize) -> usize {
        self.grid_points.unwrap_or_else(|| default_grid_points(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsSpec {
    /// Radius of the lattice ball the operator is truncated to.
    #[serde(default = "default_bs_radius")]
    pub domain_radius: f64,
    #[serde(default)]
    pub v_cutoff: Option<f64>,
    /// Extra α values drawn uniformly from `(0, alpha_grid.max)` with the seed.
    #[serde(default)]
    pub random_alphas: usize,
}

fn default_bs_radius() -> f64 {
    30.0
}

impl Default for BsSpec {
    fn default() -> Self {
        BsSpec {
            domain_radius: default_bs_radius(),
            v_cutoff: None,
            random_alphas: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichSpec {
    #[serde(default = "default_cells")]
    pub cell_sizes: Vec<f64>,
}

fn default_cells() -> Vec<f64> {
    vec![0.25, 0.125]
}

impl Default for SandwichSpec {
    fn default() -> Self {
        SandwichSpec {
            cell_sizes: default_cells(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub alpha_grid: AlphaGrid,
    #[serde(default)]
    pub split: SplitSpec,
    /// Truncation radius multiplier `c` in `c·ε₂·α^{1/p}`.
    #[serde(default = "default_radius_rule")]
    pub radius_rule: f64,
    #[serde(default)]
    pub dos: DosSpec,
    #[serde(default)]
    pub bs: BsSpec,
    #[serde(default)]
    pub sandwich: SandwichSpec,
    /// k-points per axis for the band report.
    #[serde(default)]
    pub band_k_points: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn default_radius_rule() -> f64 {
    DEFAULT_RADIUS_RULE
}

impl ExperimentConfig {
    pub fn with_model(model: ModelSpec) -> Self {
        ExperimentConfig {
            model,
            lambda: LambdaSpec::default(),
            alpha_grid: AlphaGrid::default(),
            split: SplitSpec::default(),
            radius_rule: DEFAULT_RADIUS_RULE,
            dos: DosSpec::default(),
            bs: BsSpec::default(),
            sandwich: SandwichSpec::default(),
            band_k_points: None,
            output: OutputSpec::default(),
            seed: 0,
        }
    }

    /// Parses JSON; errors name the offending field path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::invalid(
                "config",
                format!(
                    "field `{path}` (line {}, column {}): {inner}",
                    inner.line(),
                    inner.column()
                ),
            )
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// The gap holding the configured λ, and λ itself.
    pub fn resolve_lambda(&self) -> Result<(f64, Gap)> {
        match self.lambda {
            LambdaSpec::Value(l) => Ok((l, gap_containing(&self.model, l)?)),
            LambdaSpec::Auto(_) => {
                let k = self
                    .band_k_points
                    .unwrap_or_else(|| crate::bloch::default_k_points(self.model.d));
                let gap = crate::bloch::find_gap(&self.model, k).ok_or_else(|| {
                    Error::invalid("lambda", "auto-midgap needs a model with a spectral gap")
                })?;
                Ok((gap.midpoint(), gap))
            }
        }
    }

    pub fn resolve_eps2(&self, lambda: f64, gap: &Gap) -> f64 {
        match self.split.eps2 {
            Eps2Spec::Value(v) => v,
            Eps2Spec::Auto(_) => auto_eps2(&self.model, lambda, gap),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let text = r#"{"model": {"d": 1, "period": [2], "cell_values": [0.0, 3.0],
            "impurity": {"psi": {"kind": "constant", "value": 1.0}, "p": 2.0}}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.lambda, LambdaSpec::Auto(AutoMidgap::AutoMidgap));
        assert_eq!(c.alpha_grid.values().unwrap(), vec![100.0, 1000.0, 10000.0]);
        let (l, gap) = c.resolve_lambda().unwrap();
        assert!((l - 3.5).abs() < 1e-9 && gap.contains(l));
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn explicit_values_and_errors() {
        let text = r#"{"model": {"d": 1, "period": [2], "cell_values": [0.0, 3.0],
            "impurity": {"psi": {"kind": "constant", "value": 1.0}, "p": 2.0}},
            "lambda": 3.0, "split": {"eps1": 0.2, "eps2": 2.0}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.lambda, LambdaSpec::Value(3.0));
        assert_eq!(c.split.eps2, Eps2Spec::Value(2.0));
        let bad = r#"{"model": {"d": 1, "period": [2], "cell_values": [0.0],
            "impurity": {"psi": {"kind": "constant", "value": 1.0}, "p": 2.0}}}"#;
        let msg = ExperimentConfig::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("model") && msg.contains("line"), "{msg}");
        let typo = r#"{"model": {"d": 1, "period": [1], "cell_values": [0.0],
            "impurity": {"psi": {"kind": "constant", "value": 1.0}, "p": 2.0}}, "alpah_grid": {}}"#;
        assert!(ExperimentConfig::from_json(typo).is_err());
    }
}
