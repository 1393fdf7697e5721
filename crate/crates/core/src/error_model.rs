//! Zero-mean Laplace model of viewpoint prediction error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale of a zero-centered Laplace distribution, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceParams {
    scale: f64,
}

impl LaplaceParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::invalid(format!(
                "Laplace scale {scale} must be positive and finite"
            )));
        }
        Ok(LaplaceParams { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.5 * (x / self.scale).exp()
        } else {
            1.0 - 0.5 * (-x / self.scale).exp()
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        (-x.abs() / self.scale).exp() / (2.0 * self.scale)
    }

    /// Inverse CDF, for `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        if u < 0.5 {
            self.scale * (2.0 * u).ln()
        } else {
            -self.scale * (2.0 * (1.0 - u)).ln()
        }
    }
}

/// Signed prediction errors in degrees.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSamples {
    values: Vec<f64>,
}

impl ErrorSamples {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite error sample {bad}")));
        }
        Ok(ErrorSamples { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Maximum-likelihood scale of a zero-mean Laplace: the mean absolute value.
pub fn fit_laplace(samples: &ErrorSamples) -> Result<LaplaceParams> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 error samples, got {n}"
        )));
    }
    let scale = samples.values.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if scale == 0.0 {
        return Err(Error::DegenerateDistribution(
            "all error samples are zero".into(),
        ));
    }
    LaplaceParams::new(scale)
}

/// Probability that a Laplace error falls in `[a, b]`.
pub fn laplace_interval_probability(params: LaplaceParams, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::invalid("NaN interval limit"));
    }
    if a > b {
        return Err(Error::invalid(format!("interval [{a}, {b}] is reversed")));
    }
    let l = params.scale;
    // Differences of tail masses lose nothing to cancellation.
    let p = if b <= 0.0 {
        0.5 * ((b / l).exp() - (a / l).exp())
    } else if a >= 0.0 {
        0.5 * ((-a / l).exp() - (-b / l).exp())
    } else {
        1.0 - 0.5 * (a / l).exp() - 0.5 * (-b / l).exp()
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Result of a Jarque-Bera normality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarqueBera {
    pub statistic: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub reject_gaussian_at_5pct: bool,
}

/// 95th percentile of the chi-squared distribution with 2 degrees of freedom.
pub const CHI2_2_95: f64 = 5.991;

pub fn jarque_bera(samples: &ErrorSamples) -> Result<JarqueBera> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::invalid(format!(
            "Jarque-Bera needs at least 8 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = samples.values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in &samples.values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
        return Err(Error::invalid("zero-variance samples"));
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let statistic = nf / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    Ok(JarqueBera {
        statistic,
        skewness,
        excess_kurtosis,
        reject_gaussian_at_5pct: statistic > CHI2_2_95,
    })
}
