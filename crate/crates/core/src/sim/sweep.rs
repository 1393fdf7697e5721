//! Capacity sweeps over whole sessions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{run_session, SessionConfig};
use crate::allocator::Algorithm;
use crate::error::{Error, Result};
use crate::predictor::trace::HeadTrace;
use crate::predictor::ViewpointPredictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Server capacity, kbps.
    Server,
    /// Mean user capacity, kbps; the configured distribution is rescaled.
    User,
}

/// An allocator setting to run at every point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub algorithm: Algorithm,
    /// Overrides the session omega.
    #[serde(default)]
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl SweepSpec {
    /// `count` evenly spaced points from `start` to `end` inclusive.
    pub fn linear(
        axis: SweepAxis,
        start: f64,
        end: f64,
        count: usize,
        variants: Vec<Variant>,
    ) -> Self {
        let points = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                .collect(),
        };
        SweepSpec {
            axis,
            points,
            variants,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.variants.is_empty() {
            return Err(Error::invalid(
                "sweep needs at least one point and one variant",
            ));
        }
        if self.points.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("sweep points must be positive"));
        }
        if self.points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sweep points must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub point: f64,
    pub algorithm: Algorithm,
    pub omega: f64,
    pub mean_expected_wspsnr: f64,
    pub mean_realized_wspsnr: f64,
    pub mean_instability: f64,
    pub mean_expected_q: f64,
    pub hit_rate: f64,
}

/// Rows are ordered by point, then by variant as listed.
pub fn capacity_sweep(
    config: &SessionConfig,
    traces: &[HeadTrace],
    predictor: &ViewpointPredictor,
    spec: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.points.len() * spec.variants.len());
    for &point in &spec.points {
        for v in &spec.variants {
            let mut c = config.clone();
            c.algorithm = v.algorithm;
            c.omega = v.omega.unwrap_or(config.omega);
            match spec.axis {
                SweepAxis::Server => c.server_capacity = point,
                SweepAxis::User => c.user_capacity = config.user_capacity.with_mean(point),
            }
            let r = run_session(&c, traces, predictor)?.report;
            rows.push(SweepRow {
                axis: spec.axis,
                point,
                algorithm: v.algorithm,
                omega: c.omega,
                mean_expected_wspsnr: r.mean_expected_wspsnr,
                mean_realized_wspsnr: r.mean_realized_wspsnr,
                mean_instability: r.mean_instability,
                mean_expected_q: r.mean_expected_q,
                hit_rate: r.hit_rate,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: [&str; 9] = [
    "axis",
    "capacity_kbps",
    "algorithm",
    "omega",
    "mean_expected_wspsnr_db",
    "mean_realized_wspsnr_db",
    "mean_instability",
    "mean_expected_q",
    "hit_rate",
];

pub fn write_sweep<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            match r.axis {
                SweepAxis::Server => "server".to_string(),
                SweepAxis::User => "user".to_string(),
            },
            r.point.to_string(),
            r.algorithm.name().to_string(),
            r.omega.to_string(),
            r.mean_expected_wspsnr.to_string(),
            r.mean_realized_wspsnr.to_string(),
            r.mean_instability.to_string(),
            r.mean_expected_q.to_string(),
            r.hit_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
