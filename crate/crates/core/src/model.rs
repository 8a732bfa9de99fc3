//! Periodic background potential `f` and decaying impurity `V`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{norm, site_norm};
use crate::error::{Error, Result};

/// Angular profile `Ψ` of the impurity on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Psi {
    Constant {
        value: f64,
    },
    /// Samples at the directions with polar angle `2πj/M`, interpolated linearly
    /// (periodically) in the angle. In d = 1 exactly two samples: `θ = +1`, `θ = −1`.
    Tabulated {
        values: Vec<f64>,
    },
    /// `base + Σ_a coeffs[a] θ_a²`
    Axial {
        base: f64,
        coeffs: Vec<f64>,
    },
}

impl Psi {
    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Psi::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(Error::invalid("psi.value", "must be finite and >= 0"));
                }
            }
            Psi::Tabulated { values } => {
                match d {
                    1 if values.len() != 2 => {
                        return Err(Error::invalid(
                            "psi.values",
                            "d = 1 needs exactly 2 samples",
                        ))
                    }
                    2 if values.len() < 3 => {
                        return Err(Error::invalid(
                            "psi.values",
                            "d = 2 needs at least 3 samples",
                        ))
                    }
                    1 | 2 => {}
                    _ => {
                        return Err(Error::invalid(
                            "psi.kind",
                            "tabulated profiles are supported for d <= 2",
                        ))
                    }
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("psi.values", "must be finite and >= 0"));
                }
            }
            Psi::Axial { base, coeffs } => {
                if coeffs.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: coeffs.len(),
                    });
                }
                let lowest = coeffs.iter().cloned().fold(f64::INFINITY, f64::min);
                if !(base.is_finite() && coeffs.iter().all(|c| c.is_finite()))
                    || base + lowest < 0.0
                {
                    return Err(Error::invalid(
                        "psi",
                        "axial profile must be >= 0 on the sphere",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Value at a unit direction.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        match self {
            Psi::Constant { value } => *value,
            Psi::Tabulated { values } => {
                if theta.len() == 1 {
                    return if theta[0] >= 0.0 {
                        values[0]
                    } else {
                        values[1]
                    };
                }
                let m = values.len();
                let mut phi = theta[1].atan2(theta[0]);
                if phi < 0.0 {
                    phi += 2.0 * PI;
                }
                let pos = phi / (2.0 * PI) * m as f64;
                let j = (pos.floor() as usize).min(m - 1);
                let t = pos - j as f64;
                values[j] * (1.0 - t) + values[(j + 1) % m] * t
            }
            Psi::Axial { base, coeffs } => {
                base + coeffs
                    .iter()
                    .zip(theta)
                    .map(|(c, t)| c * t * t)
                    .sum::<f64>()
            }
        }
    }

    /// `‖Ψ‖_∞` on the unit sphere.
    pub fn sup(&self) -> f64 {
        match self {
            Psi::Constant { value } => *value,
            Psi::Tabulated { values } => values.iter().cloned().fold(0.0, f64::max),
            Psi::Axial { base, coeffs } => {
                base + coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// Optional `(1 + amplitude·|n|^{-exponent})` factor on the exact decay law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCorrection {
    pub amplitude: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impurity {
    pub psi: Psi,
    pub p: f64,
    #[serde(default = "default_cap")]
    pub near_field_cap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<DecayCorrection>,
}

fn default_cap() -> f64 {
    1.0
}

/// Periodic background and impurity law of `A − αV` on ℤ^d.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub d: usize,
    pub period: Vec<usize>,
    pub cell_values: Vec<f64>,
    pub impurity: Impurity,
}

#[derive(Deserialize)]
struct RawModel {
    d: usize,
    period: Vec<usize>,
    cell_values: Vec<f64>,
    impurity: Impurity,
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = RawModel::deserialize(de)?;
        ModelSpec::new(raw.d, raw.period, raw.cell_values, raw.impurity)
            .map_err(serde::de::Error::custom)
    }
}

impl ModelSpec {
    pub fn new(
        d: usize,
        period: Vec<usize>,
        cell_values: Vec<f64>,
        impurity: Impurity,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "must be positive"));
        }
        if period.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: period.len(),
            });
        }
        if period.contains(&0) {
            return Err(Error::invalid("period", "entries must be positive"));
        }
        let cell: usize = period.iter().product();
        if cell_values.len() != cell {
            return Err(Error::invalid(
                "cell_values",
                format!(
                    "expected {cell} values for period {period:?}, got {}",
                    cell_values.len()
                ),
            ));
        }
        if cell_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cell_values", "must be finite"));
        }
        if !(impurity.p.is_finite() && impurity.p > 0.0) {
            return Err(Error::invalid("impurity.p", "must be > 0"));
        }
        if !(impurity.near_field_cap.is_finite() && impurity.near_field_cap >= 0.0) {
            return Err(Error::invalid("impurity.near_field_cap", "must be >= 0"));
        }
        if let Some(c) = impurity.correction {
            if !(c.amplitude > -1.0 && c.exponent > 0.0) {
                return Err(Error::invalid(
                    "impurity.correction",
                    "needs amplitude > -1 and exponent > 0",
                ));
            }
        }
        impurity.psi.validate(d)?;
        Ok(ModelSpec {
            d,
            period,
            cell_values,
            impurity,
        })
    }

    /// Free lattice (`f ≡ 0`) with a constant angular profile.
    pub fn free(d: usize, psi: f64, p: f64) -> Result<Self> {
        Self::new(
            d,
            vec![1; d],
            vec![0.0],
            Impurity {
                psi: Psi::Constant { value: psi },
                p,
                near_field_cap: psi,
                correction: None,
            },
        )
    }

    /// d = 1 background alternating `cell[0], cell[1]` with `V(n) = psi·|n|^{-p}`.
    pub fn period_two(cell: [f64; 2], psi: f64, p: f64) -> Result<Self> {
        Self::new(
            1,
            vec![2],
            cell.to_vec(),
            Impurity {
                psi: Psi::Constant { value: psi },
                p,
                near_field_cap: psi,
                correction: None,
            },
        )
    }

    /// d = 2 checkerboard background with values `0` and `height`.
    pub fn checkerboard(height: f64, psi: f64, p: f64) -> Result<Self> {
        Self::new(
            2,
            vec![2, 2],
            vec![0.0, height, height, 0.0],
            Impurity {
                psi: Psi::Constant { value: psi },
                p,
                near_field_cap: psi,
                correction: None,
            },
        )
    }

    pub fn cell_size(&self) -> usize {
        self.cell_values.len()
    }

    /// Row-major index (axis 0 slowest) of a cell-local multi-index.
    pub(crate) fn cell_index(&self, local: &[usize]) -> usize {
        local
            .iter()
            .zip(&self.period)
            .fold(0, |acc, (&l, &q)| acc * q + l)
    }

    /// `f(n) = cell_values[n mod q]`.
    pub fn background(&self, n: &[i64]) -> f64 {
        let local: Vec<usize> = n
            .iter()
            .zip(&self.period)
            .map(|(&v, &q)| v.rem_euclid(q as i64) as usize)
            .collect();
        self.cell_values[self.cell_index(&local)]
    }

    /// `‖f‖_∞`
    pub fn background_sup(&self) -> f64 {
        self.cell_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bounds `[−‖f‖_∞, 4d + ‖f‖_∞]` containing the spectrum of the periodic operator.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let s = self.background_sup();
        (-s, 4.0 * self.d as f64 + s)
    }

    /// `V` at a lattice site.
    pub fn evaluate_v(&self, n: &[i64]) -> f64 {
        if n.iter().all(|&v| v == 0) {
            return self.impurity.near_field_cap;
        }
        let r = site_norm(n);
        let theta: Vec<f64> = n.iter().map(|&v| v as f64 / r).collect();
        self.decay_law(&theta, r)
    }

    /// The continuous law `Ψ(x/|x|)|x|^{-p}` at a nonzero real point.
    pub fn evaluate_v_at(&self, x: &[f64]) -> f64 {
        let r = norm(x);
        let theta: Vec<f64> = x.iter().map(|v| v / r).collect();
        self.impurity.psi.eval(&theta) * r.powf(-self.impurity.p)
    }

    fn decay_law(&self, theta: &[f64], r: f64) -> f64 {
        let base = self.impurity.psi.eval(theta) * r.powf(-self.impurity.p);
        match self.impurity.correction {
            Some(c) => base * (1.0 + c.amplitude * r.powf(-c.exponent)),
            None => base,
        }
    }

    /// Short stable digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("model serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_extension() {
        let m = ModelSpec::period_two([0.0, 3.0], 1.0, 2.0).unwrap();
        assert_eq!(m.background(&[-1]), 3.0);
        assert_eq!(m.background(&[0]), 0.0);
        assert_eq!(m.background(&[1]), 3.0);
        assert_eq!(m.background(&[-4]), 0.0);
        assert_eq!(m.background_sup(), 3.0);
        let c = ModelSpec::checkerboard(4.0, 1.0, 2.0).unwrap();
        assert_eq!(c.background(&[0, 0]), 0.0);
        assert_eq!(c.background(&[0, 1]), 4.0);
        assert_eq!(c.background(&[-1, 0]), 4.0);
        assert_eq!(c.background(&[-1, -3]), 0.0);
    }

    #[test]
    fn impurity_law() {
        let m = ModelSpec::free(2, 1.0, 1.0).unwrap();
        assert!((m.evaluate_v(&[3, 4]) - 0.2).abs() < 1e-15);
        assert_eq!(m.evaluate_v(&[0, 0]), 1.0);
        let m1 = ModelSpec::free(1, 1.0, 2.0).unwrap();
        assert_eq!(m1.evaluate_v(&[2]), 0.25);
        assert_eq!(m1.evaluate_v(&[-2]), 0.25);
    }

    #[test]
    fn anisotropic_profiles() {
        let samples: Vec<f64> = (0..16)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / 16.0;
                1.0 + phi.cos().powi(2)
            })
            .collect();
        let mut m = ModelSpec::free(2, 1.0, 1.0).unwrap();
        m.impurity.psi = Psi::Tabulated { values: samples };
        assert!((m.evaluate_v(&[1, 0]) - 2.0).abs() < 1e-15);
        assert!((m.evaluate_v(&[0, 2]) - 0.5).abs() < 1e-15);
        m.impurity.psi = Psi::Axial {
            base: 1.0,
            coeffs: vec![1.0, 0.0],
        };
        assert_eq!(m.evaluate_v(&[1, 0]), 2.0);
        assert_eq!(m.impurity.psi.sup(), 2.0);
    }

    #[test]
    fn tabulated_interpolation_is_continuous_across_wrap() {
        let psi = Psi::Tabulated {
            values: vec![1.0, 2.0, 3.0, 4.0],
        };
        let just_below = (2.0 * PI - 1e-9).sin_cos();
        let v = psi.eval(&[just_below.1, just_below.0]);
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ModelSpec::new(
            1,
            vec![2],
            vec![0.0],
            ModelSpec::free(1, 1.0, 1.0).unwrap().impurity
        )
        .is_err());
        assert!(ModelSpec::free(1, -1.0, 1.0).is_err());
        assert!(ModelSpec::free(1, 1.0, 0.0).is_err());
        let text = r#"{"d":1,"period":[2],"cell_values":[0,3],
            "impurity":{"psi":{"kind":"axial","base":-2.0,"coeffs":[1.0]},"p":2}}"#;
        assert!(serde_json::from_str::<ModelSpec>(text).is_err());
    }

    #[test]
    fn json_form() {
        let text = r#"{"d":1,"period":[2],"cell_values":[0,3],
            "impurity":{"psi":{"kind":"constant","value":1.0},"p":2,"near_field_cap":0.5}}"#;
        let m: ModelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(m.impurity.near_field_cap, 0.5);
        assert_eq!(m.evaluate_v(&[0]), 0.5);
        let again: ModelSpec = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(again, m);
        assert_eq!(again.hash(), m.hash());
        assert_eq!(m.hash().len(), 16);
    }

    #[test]
    fn decay_correction_hook() {
        let mut m = ModelSpec::free(1, 1.0, 2.0).unwrap();
        m.impurity.correction = Some(DecayCorrection {
            amplitude: 1.0,
            exponent: 1.0,
        });
        assert!((m.evaluate_v(&[2]) - 0.25 * 1.5).abs() < 1e-15);
    }
}
