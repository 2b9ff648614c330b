use serde::{Deserialize, Serialize};

use super::{ColumnScale, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Squared error on the normalized scale.
    Mse,
    /// Squared relative error on the physical scale, `((ŷ - y) / y)²`.
    RelativeMse,
}

impl Loss {
    /// Loss of one output component and its derivative with respect to the
    /// normalized prediction.
    pub(crate) fn term(self, z_hat: f64, z: f64, scale: &ColumnScale) -> (f64, f64) {
        match self {
            Loss::Mse => {
                let e = z_hat - z;
                (e * e, 2.0 * e)
            }
            Loss::RelativeMse => {
                let y = scale.inverse(z);
                let r = (scale.inverse(z_hat) - y) / y;
                (r * r, 2.0 * r / y * scale.inverse_slope(z_hat))
            }
        }
    }
}

/// Mean over samples and components of `((ŷ - y) / y)²`.
pub fn relative_mse(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    check_pair(predictions, targets)?;
    let mut sum = 0.0;
    for (p, y) in predictions.data().iter().zip(targets.data()) {
        if *y == 0.0 {
            return Err(Error::invalid("relative error is undefined for a zero target"));
        }
        sum += ((p - y) / y).powi(2);
    }
    Ok(sum / targets.data().len() as f64)
}

/// Mean over samples and components of `(ŷ - y)²`.
pub fn mse(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    check_pair(predictions, targets)?;
    let sum: f64 = predictions.data().iter().zip(targets.data()).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(sum / targets.data().len() as f64)
}

fn check_pair(predictions: &Matrix, targets: &Matrix) -> Result<()> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::Shape(format!(
            "{}x{} predictions against {}x{} targets",
            predictions.rows(),
            predictions.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    if targets.data().is_empty() {
        return Err(Error::invalid("empty target set"));
    }
    Ok(())
}
