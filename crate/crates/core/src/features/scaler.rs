use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};

/// Per-dimension standardization fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    #[serde(with = "crate::blob")]
    pub mean: Vec<f64>,
    /// Population standard deviation; constant dimensions store mean 0 and
    /// std 1 so they pass through unchanged.
    #[serde(with = "crate::blob")]
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Identity scaler of the given width.
    pub fn identity(dim: usize) -> Self {
        FeatureScaler {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

pub fn fit_scaler(vectors: &[FeatureVector]) -> Result<FeatureScaler> {
    let first = vectors
        .first()
        .ok_or(Error::EmptyInput("scaler training set"))?;
    let dim = first.values.len();
    for v in vectors {
        if v.values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.values.len(),
            });
        }
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let mut std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    for (m, s) in mean.iter_mut().zip(std.iter_mut()) {
        if *s == 0.0 {
            *m = 0.0;
            *s = 1.0;
        }
    }
    Ok(FeatureScaler { mean, std })
}

pub fn apply_scaler(s: &FeatureScaler, v: &FeatureVector) -> Result<FeatureVector> {
    Ok(FeatureVector {
        values: s.apply_values(&v.values)?,
        descriptor_id: v.descriptor_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector {
            values,
            descriptor_id: "t".into(),
        }
    }

    #[test]
    fn two_point_standardization() {
        let s = fit_scaler(&[fv(vec![0.0]), fv(vec![2.0])]).unwrap();
        assert_eq!(apply_scaler(&s, &fv(vec![0.0])).unwrap().values, vec![-1.0]);
        assert_eq!(apply_scaler(&s, &fv(vec![2.0])).unwrap().values, vec![1.0]);
        assert_eq!(apply_scaler(&s, &fv(vec![1.0])).unwrap().values, vec![0.0]);
    }

    #[test]
    fn constant_dimension_is_unchanged() {
        let s = fit_scaler(&[fv(vec![5.0, 1.0]), fv(vec![5.0, 3.0])]).unwrap();
        assert_eq!(
            apply_scaler(&s, &fv(vec![7.5, 2.0])).unwrap().values,
            vec![7.5, 0.0]
        );
    }

    #[test]
    fn errors() {
        assert!(fit_scaler(&[]).is_err());
        assert!(fit_scaler(&[fv(vec![1.0]), fv(vec![1.0, 2.0])]).is_err());
        let s = FeatureScaler::identity(2);
        assert!(apply_scaler(&s, &fv(vec![1.0])).is_err());
    }
}
