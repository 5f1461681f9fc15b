use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    #[serde(alias = "gaussian")]
    Rbf,
    #[serde(alias = "poly")]
    Polynomial,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelKind::Linear),
            "rbf" | "gaussian" => Ok(KernelKind::Rbf),
            "poly" | "polynomial" => Ok(KernelKind::Polynomial),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Scale for rbf and polynomial kernels.
    pub gamma: f64,
    /// Polynomial degree.
    pub degree: u32,
    /// Polynomial offset.
    pub coef0: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            gamma: 1.0,
            degree: 1,
            coef0: 0.0,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            gamma,
            degree: 1,
            coef0: 0.0,
        }
    }

    pub fn polynomial(degree: u32, gamma: f64, coef0: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Polynomial,
            gamma,
            degree,
            coef0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "kernel gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.kind == KernelKind::Polynomial && self.degree == 0 {
            return Err(Error::Config("polynomial degree must be at least 1".into()));
        }
        if !self.coef0.is_finite() {
            return Err(Error::Config("kernel coef0 must be finite".into()));
        }
        Ok(())
    }

    /// Kernel value on raw slices of equal length.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.kind {
            KernelKind::Linear => dot(x, y),
            KernelKind::Rbf => {
                let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d).exp()
            }
            KernelKind::Polynomial => {
                (self.gamma * dot(x, y) + self.coef0).powi(self.degree as i32)
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::Linear => "linear".into(),
            KernelKind::Rbf => "rbf".into(),
            KernelKind::Polynomial => format!("poly{}", self.degree),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn kernel_eval(k: &KernelSpec, x: &FeatureVector, y: &FeatureVector) -> Result<f64> {
    if x.values.len() != y.values.len() {
        return Err(Error::DimensionMismatch {
            expected: x.values.len(),
            got: y.values.len(),
        });
    }
    Ok(k.eval(&x.values, &y.values))
}
