use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log10,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log10 => x.log10(),
        }
    }

    pub fn invert(self, t: f64) -> f64 {
        match self {
            Transform::Identity => t,
            Transform::Log10 => 10f64.powf(t),
        }
    }
}

/// Transform followed by an affine z-score: `z = (T(x) - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub transform: Transform,
    pub mean: f64,
    pub std: f64,
}

impl ColumnScale {
    pub fn identity() -> Self {
        ColumnScale { transform: Transform::Identity, mean: 0.0, std: 1.0 }
    }

    /// Fits mean and population std of the transformed values. Without
    /// `standardize` only the transform is applied.
    pub fn fit(values: impl Iterator<Item = f64>, transform: Transform, standardize: bool) -> Result<Self> {
        if !standardize {
            return Ok(ColumnScale { transform, mean: 0.0, std: 1.0 });
        }
        let t: Vec<f64> = values.map(|v| transform.apply(v)).collect();
        if t.is_empty() {
            return Err(Error::invalid("cannot fit scaling statistics on an empty column"));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("column contains values outside the transform's domain"));
        }
        let n = t.len() as f64;
        let mean = t.iter().sum::<f64>() / n;
        let std = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return Err(Error::invalid("column has zero variance and cannot be standardized"));
        }
        Ok(ColumnScale { transform, mean, std })
    }

    pub fn forward(&self, x: f64) -> f64 {
        (self.transform.apply(x) - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.transform.invert(self.mean + self.std * z)
    }

    /// `d inverse(z) / dz`.
    pub fn inverse_slope(&self, z: f64) -> f64 {
        match self.transform {
            Transform::Identity => self.std,
            Transform::Log10 => std::f64::consts::LN_10 * self.std * self.inverse(z),
        }
    }
}

/// Feature and target scalings that travel with a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub features: Vec<ColumnScale>,
    pub targets: Vec<ColumnScale>,
}

impl Scaling {
    pub fn identity(n_features: usize, n_targets: usize) -> Self {
        Scaling {
            features: vec![ColumnScale::identity(); n_features],
            targets: vec![ColumnScale::identity(); n_targets],
        }
    }

    fn apply(m: &Matrix, cols: &[ColumnScale], f: impl Fn(&ColumnScale, f64) -> f64) -> Result<Matrix> {
        if m.cols() != cols.len() {
            return Err(Error::Shape(format!("{} columns but {} scalings", m.cols(), cols.len())));
        }
        Ok(m.map(|j, v| f(&cols[j], v)))
    }

    pub fn scale_features(&self, m: &Matrix) -> Result<Matrix> {
        Self::apply(m, &self.features, ColumnScale::forward)
    }

    pub fn scale_targets(&self, m: &Matrix) -> Result<Matrix> {
        Self::apply(m, &self.targets, ColumnScale::forward)
    }

    pub fn unscale_features(&self, m: &Matrix) -> Result<Matrix> {
        Self::apply(m, &self.features, ColumnScale::inverse)
    }

    pub fn unscale_targets(&self, m: &Matrix) -> Result<Matrix> {
        Self::apply(m, &self.targets, ColumnScale::inverse)
    }
}
