//! Least squares on the encoded window.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AnglePredictor, AngleWindow, TrainingPair, WINDOW};
use crate::error::{Error, Result};

const FEATURES: usize = 2 * WINDOW + 1;
const RIDGE: f64 = 1e-6;

/// Affine map from the 20 encoded inputs (plus intercept) to the encoded
/// target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Two rows of `2 * WINDOW + 1` coefficients, intercept last.
    pub coefficients: [Vec<f64>; 2],
    /// Set when the design was rank deficient and the ridge penalty was used.
    pub ridge: bool,
}

fn features(w: &AngleWindow) -> impl Iterator<Item = f64> + '_ {
    w.encoded()
        .iter()
        .flat_map(|&(s, c)| [s, c])
        .chain(std::iter::once(1.0))
}

pub fn lr_fit(pairs: &[TrainingPair]) -> Result<LinearModel> {
    if pairs.len() < 20 {
        return Err(Error::invalid(format!(
            "linear regression needs at least 20 pairs, got {}",
            pairs.len()
        )));
    }
    let x = DMatrix::from_row_iterator(
        pairs.len(),
        FEATURES,
        pairs.iter().flat_map(|p| features(&p.window)),
    );
    let y = DMatrix::from_row_iterator(
        pairs.len(),
        2,
        pairs.iter().flat_map(|p| [p.target.0, p.target.1]),
    );
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.rank(smax * 1e-10);
    let (beta, ridge) = if rank == FEATURES {
        let b = svd
            .solve(&y, 0.0)
            .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
        (b, false)
    } else {
        let xt = x.transpose();
        let a = &xt * &x + DMatrix::identity(FEATURES, FEATURES) * RIDGE;
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::invalid("ridge normal equations are not positive definite"))?;
        (chol.solve(&(xt * y)), true)
    };
    Ok(LinearModel {
        coefficients: [
            beta.column(0).iter().copied().collect(),
            beta.column(1).iter().copied().collect(),
        ],
        ridge,
    })
}

impl AnglePredictor for LinearModel {
    fn predict_encoded(&self, window: &AngleWindow) -> (f64, f64) {
        let f = DVector::from_iterator(FEATURES, features(window));
        let dot = |c: &[f64]| c.iter().zip(f.iter()).map(|(a, b)| a * b).sum::<f64>();
        (dot(&self.coefficients[0]), dot(&self.coefficients[1]))
    }
}
