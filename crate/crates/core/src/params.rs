//! Nondimensional model parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spatial dimension of the model.
pub const DIM: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {name} must be {requirement}, got {value}")]
    Invalid {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// `D = D₂/D₁`, `λ = λ₂/λ₁`, proliferation `P`, apoptosis `A`, chemotaxis `χ`
/// and adhesion `G⁻¹`. The interior decay rate is `μ₁ = 1` and the exterior
/// one is `μ₂ = √(λ/D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "D")]
    pub diffusivity: f64,
    #[serde(rename = "lambda")]
    pub uptake: f64,
    #[serde(rename = "P")]
    pub proliferation: f64,
    #[serde(rename = "A")]
    pub apoptosis: f64,
    #[serde(rename = "chi")]
    pub chemotaxis: f64,
    #[serde(rename = "G_inv")]
    pub adhesion: f64,
}

impl ModelParams {
    pub fn new(
        diffusivity: f64,
        uptake: f64,
        proliferation: f64,
        apoptosis: f64,
        chemotaxis: f64,
        adhesion: f64,
    ) -> Result<Self, ParamError> {
        let p = Self {
            diffusivity,
            uptake,
            proliferation,
            apoptosis,
            chemotaxis,
            adhesion,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let check = |name, requirement, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(ParamError::Invalid {
                    name,
                    requirement,
                    value,
                })
            }
        };
        check("D", "positive", self.diffusivity, self.diffusivity > 0.0)?;
        check(
            "lambda",
            "positive (use a small value such as 1e-3 for the no-uptake limit)",
            self.uptake,
            self.uptake > 0.0,
        )?;
        check("P", "finite", self.proliferation, true)?;
        check("A", "finite", self.apoptosis, true)?;
        check("chi", "finite", self.chemotaxis, true)?;
        check("G_inv", "non-negative", self.adhesion, self.adhesion >= 0.0)?;
        Ok(())
    }

    pub fn mu1(&self) -> f64 {
        1.0
    }

    pub fn mu2(&self) -> f64 {
        (self.uptake / self.diffusivity).sqrt()
    }

    /// Relative diffusional penetration length `Λ = √(D/λ)`.
    pub fn penetration_length(&self) -> f64 {
        (self.diffusivity / self.uptake).sqrt()
    }

    pub fn dim(&self) -> f64 {
        DIM
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_rates() {
        let p = ModelParams::new(100.0, 1.0, 0.5, 0.0, 5.0, 0.001).unwrap();
        assert_eq!(p.mu1(), 1.0);
        assert!((p.mu2() - 0.1).abs() < 1e-15);
        assert!((p.penetration_length() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelParams::new(0.0, 1.0, 0.5, 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.5, 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.5, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn json_names() {
        let p: ModelParams =
            serde_json::from_str(r#"{"D":1,"lambda":0.01,"P":0.5,"A":0,"chi":5,"G_inv":0.001}"#)
                .unwrap();
        assert_eq!(p.chemotaxis, 5.0);
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"D":1,"lambda":0.01,"P":0.5,"A":0,"chi":5,"G_inv":0.001,"x":1}"#
        )
        .is_err());
    }
}
