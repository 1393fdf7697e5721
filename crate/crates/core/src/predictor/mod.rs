//! Viewpoint prediction from a one-second history of head angles.
//!
//! Angles enter every model as `(sin, cos)` pairs so that -180 and 180 are
//! neighbours. Pitch and yaw are predicted by separate models.

pub mod cnn;
pub mod linear;
pub mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorSamples;
use crate::geometry::{wrap_deg, ViewAngles};

pub use cnn::{cnn_train, gradient_check, CnnModel, TrainConfig, TrainReport};
pub use linear::{lr_fit, LinearModel};
pub use trace::{HeadTrace, SAMPLE_PERIOD, SAMPLE_RATE_HZ};

/// Samples in a history window.
pub const WINDOW: usize = 10;

pub fn angle_encode(angle: f64) -> (f64, f64) {
    let r = angle.to_radians();
    (r.sin(), r.cos())
}

/// Degrees in `[-180, 180]`; the pair need not be normalized.
pub fn angle_decode(pair: (f64, f64)) -> Result<f64> {
    let (s, c) = pair;
    if s.abs() < 1e-9 && c.abs() < 1e-9 {
        return Err(Error::invalid(format!(
            "cannot decode angle from ({s}, {c})"
        )));
    }
    Ok(s.atan2(c).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Angle {
    Pitch,
    Yaw,
}

impl Angle {
    pub fn of(self, v: &ViewAngles) -> f64 {
        match self {
            Angle::Pitch => v.pitch(),
            Angle::Yaw => v.yaw(),
        }
    }

    /// Signed error `predicted - truth`, wrapped for yaw.
    pub fn error(self, predicted: f64, truth: f64) -> f64 {
        match self {
            Angle::Pitch => predicted - truth,
            Angle::Yaw => wrap_deg(predicted - truth),
        }
    }

    fn finish(self, decoded: f64) -> f64 {
        match self {
            Angle::Pitch => decoded.clamp(-90.0, 90.0),
            Angle::Yaw => decoded,
        }
    }
}

/// Ten consecutive encoded angles, oldest first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleWindow {
    encoded: [(f64, f64); WINDOW],
}

impl AngleWindow {
    pub fn from_angles(angles: &[f64]) -> Result<Self> {
        if angles.len() != WINDOW {
            return Err(Error::invalid(format!(
                "window needs {WINDOW} angles, got {}",
                angles.len()
            )));
        }
        let mut encoded = [(0.0, 0.0); WINDOW];
        for (e, &a) in encoded.iter_mut().zip(angles) {
            if !a.is_finite() {
                return Err(Error::invalid("non-finite angle in window"));
            }
            *e = angle_encode(a);
        }
        Ok(AngleWindow { encoded })
    }

    /// Window made of raw pairs; used for synthetic inputs such as zeros.
    pub fn from_encoded(encoded: [(f64, f64); WINDOW]) -> Self {
        AngleWindow { encoded }
    }

    pub fn encoded(&self) -> &[(f64, f64); WINDOW] {
        &self.encoded
    }

    /// Most recent angle, degrees.
    pub fn last(&self) -> f64 {
        let (s, c) = self.encoded[WINDOW - 1];
        s.atan2(c).to_degrees()
    }
}

/// Encoded window and the encoded angle `horizon` samples after its end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPair {
    pub window: AngleWindow,
    pub target: (f64, f64),
    /// Target in degrees.
    pub truth: f64,
}

/// Horizon in samples; `t_w` must be a positive multiple of 0.1 s.
pub fn horizon_steps(t_w: f64) -> Result<usize> {
    let steps = t_w * SAMPLE_RATE_HZ;
    if !(steps.is_finite() && steps >= 1.0 - 1e-9 && (steps - steps.round()).abs() < 1e-6) {
        return Err(Error::invalid(format!(
            "horizon {t_w} s is not a positive multiple of 0.1 s"
        )));
    }
    Ok(steps.round() as usize)
}

/// Every (window, target) pair of one angle in `traces`.
pub fn training_pairs(traces: &[HeadTrace], angle: Angle, t_w: f64) -> Result<Vec<TrainingPair>> {
    let h = horizon_steps(t_w)?;
    let mut out = Vec::new();
    for tr in traces {
        let a: Vec<f64> = tr.samples().iter().map(|v| angle.of(v)).collect();
        for end in WINDOW - 1..a.len().saturating_sub(h) {
            let truth = a[end + h];
            out.push(TrainingPair {
                window: AngleWindow::from_angles(&a[end + 1 - WINDOW..=end])?,
                target: angle_encode(truth),
                truth,
            });
        }
    }
    Ok(out)
}

/// First `ceil(fraction * n)` traces for training, the rest for testing.
pub fn split_views(traces: &[HeadTrace], fraction: f64) -> (Vec<HeadTrace>, Vec<HeadTrace>) {
    let n = ((traces.len() as f64 * fraction).ceil() as usize).min(traces.len());
    (traces[..n].to_vec(), traces[n..].to_vec())
}

/// A model of one angle.
pub trait AnglePredictor {
    /// Predicted angle (degrees) from an encoded history.
    fn predict_encoded(&self, window: &AngleWindow) -> (f64, f64);
}

/// Repeats the latest observation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Naive;

impl AnglePredictor for Naive {
    fn predict_encoded(&self, window: &AngleWindow) -> (f64, f64) {
        window.encoded[WINDOW - 1]
    }
}

pub fn naive_predict(history: &[f64]) -> Result<f64> {
    history
        .last()
        .copied()
        .ok_or_else(|| Error::invalid("naive prediction needs a nonempty history"))
}

pub fn predict_angle(
    model: &dyn AnglePredictor,
    angle: Angle,
    window: &AngleWindow,
) -> Result<f64> {
    angle_decode(model.predict_encoded(window)).map(|d| angle.finish(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub mean_abs_error: f64,
    pub rmse: f64,
    /// 99.9th percentile of the absolute error, nearest rank.
    pub p999: f64,
}

impl PredictionMetrics {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::invalid("no prediction errors to summarize"));
        }
        let n = errors.len() as f64;
        let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let rank = ((0.999 * n).ceil() as usize).clamp(1, abs.len());
        Ok(PredictionMetrics {
            mean_abs_error: abs.iter().sum::<f64>() / n,
            rmse: (abs.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
            p999: abs[rank - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleEvaluation {
    pub metrics: PredictionMetrics,
    pub errors: ErrorSamples,
}

pub fn evaluate_angle(
    model: &dyn AnglePredictor,
    traces: &[HeadTrace],
    angle: Angle,
    t_w: f64,
) -> Result<AngleEvaluation> {
    let pairs = training_pairs(traces, angle, t_w)?;
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "test traces are too short for a {t_w} s horizon"
        )));
    }
    let errors = pairs
        .iter()
        .map(|p| predict_angle(model, angle, &p.window).map(|x| angle.error(x, p.truth)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AngleEvaluation {
        metrics: PredictionMetrics::from_errors(&errors)?,
        errors: ErrorSamples::new(errors)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorModels {
    Naive,
    Linear {
        pitch: LinearModel,
        yaw: LinearModel,
    },
    Cnn {
        pitch: CnnModel,
        yaw: CnnModel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Naive,
    Linear,
    Cnn,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(PredictorKind::Naive),
            "linear" => Ok(PredictorKind::Linear),
            "cnn" => Ok(PredictorKind::Cnn),
            _ => Err(Error::invalid(format!(
                "unknown predictor '{s}' (naive, linear, cnn)"
            ))),
        }
    }
}

/// Pitch and yaw models for one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointPredictor {
    pub horizon: f64,
    pub models: PredictorModels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointEvaluation {
    pub horizon: f64,
    pub pitch: AngleEvaluation,
    pub yaw: AngleEvaluation,
}

impl ViewpointPredictor {
    pub fn naive(horizon: f64) -> Result<Self> {
        horizon_steps(horizon)?;
        Ok(ViewpointPredictor {
            horizon,
            models: PredictorModels::Naive,
        })
    }

    /// Fits both angle models on `traces`.
    pub fn train(
        kind: PredictorKind,
        traces: &[HeadTrace],
        horizon: f64,
        config: &TrainConfig,
    ) -> Result<Self> {
        horizon_steps(horizon)?;
        let models = match kind {
            PredictorKind::Naive => PredictorModels::Naive,
            PredictorKind::Linear => PredictorModels::Linear {
                pitch: lr_fit(&training_pairs(traces, Angle::Pitch, horizon)?)?,
                yaw: lr_fit(&training_pairs(traces, Angle::Yaw, horizon)?)?,
            },
            PredictorKind::Cnn => PredictorModels::Cnn {
                pitch: cnn_train(&training_pairs(traces, Angle::Pitch, horizon)?, config)?.0,
                yaw: cnn_train(&training_pairs(traces, Angle::Yaw, horizon)?, config)?.0,
            },
        };
        Ok(ViewpointPredictor { horizon, models })
    }

    pub fn model(&self, angle: Angle) -> &dyn AnglePredictor {
        match (&self.models, angle) {
            (PredictorModels::Naive, _) => &Naive,
            (PredictorModels::Linear { pitch, .. }, Angle::Pitch) => pitch,
            (PredictorModels::Linear { yaw, .. }, Angle::Yaw) => yaw,
            (PredictorModels::Cnn { pitch, .. }, Angle::Pitch) => pitch,
            (PredictorModels::Cnn { yaw, .. }, Angle::Yaw) => yaw,
        }
    }

    /// Viewpoint `horizon` seconds after the last of the ten samples.
    pub fn predict(&self, history: &[ViewAngles]) -> Result<ViewAngles> {
        if history.len() < WINDOW {
            return Err(Error::invalid(format!(
                "prediction needs {WINDOW} history samples, got {}",
                history.len()
            )));
        }
        let recent = &history[history.len() - WINDOW..];
        let mut out = [0.0; 2];
        for (o, angle) in out.iter_mut().zip([Angle::Pitch, Angle::Yaw]) {
            let a: Vec<f64> = recent.iter().map(|v| angle.of(v)).collect();
            *o = predict_angle(self.model(angle), angle, &AngleWindow::from_angles(&a)?)?;
        }
        ViewAngles::canonical(out[0], out[1])
    }

    pub fn evaluate(&self, traces: &[HeadTrace]) -> Result<ViewpointEvaluation> {
        Ok(ViewpointEvaluation {
            horizon: self.horizon,
            pitch: evaluate_angle(self.model(Angle::Pitch), traces, Angle::Pitch, self.horizon)?,
            yaw: evaluate_angle(self.model(Angle::Yaw), traces, Angle::Yaw, self.horizon)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            predictor: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                c.format, c.version
            )));
        }
        horizon_steps(c.predictor.horizon)?;
        if let PredictorModels::Cnn { pitch, yaw } = &c.predictor.models {
            pitch.validate()?;
            yaw.validate()?;
        }
        Ok(c.predictor)
    }
}

const CHECKPOINT_FORMAT: &str = "tile360-predictor";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    predictor: ViewpointPredictor,
}

pub(crate) mod test_traces {
    use super::*;

    /// Yaw and pitch sinusoids with the given period, seconds.
    pub fn sinusoid(
        len: usize,
        period: f64,
        phase: f64,
        yaw_amp: f64,
        pitch_amp: f64,
    ) -> HeadTrace {
        let samples = (0..len)
            .map(|i| {
                let w = std::f64::consts::TAU * i as f64 * SAMPLE_PERIOD / period + phase;
                ViewAngles::canonical(pitch_amp * (0.7 * w).sin(), yaw_amp * w.sin() + 100.0)
                    .unwrap()
            })
            .collect();
        HeadTrace::new(samples).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_examples() {
        assert_eq!(angle_encode(0.0), (0.0, 1.0));
        let (s, c) = angle_encode(90.0);
        assert!((s - 1.0).abs() < 1e-15 && c.abs() < 1e-15);
        let a = angle_encode(-180.0);
        let b = angle_encode(180.0);
        assert!(
            (a.0 - b.0).abs() < 1e-15 && (a.1 + 1.0).abs() < 1e-15 && (b.1 + 1.0).abs() < 1e-15
        );
    }

    #[test]
    fn decode_examples() {
        assert_eq!(angle_decode((0.0, 1.0)).unwrap(), 0.0);
        assert!((angle_decode((0.5, -0.866)).unwrap() - 150.0).abs() < 0.01);
        assert!((angle_decode((5.0, -8.66)).unwrap() - 150.0).abs() < 0.01);
        assert!(angle_decode((1e-10, -1e-10)).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(x in -1e4f64..1e4) {
            let back = angle_decode(angle_encode(x)).unwrap();
            let want = crate::geometry::wrap_longitude(x).unwrap();
            prop_assert!(wrap_deg(back - want).abs() < 1e-6);
        }

        #[test]
        fn window_pairs_on_unit_circle(a in proptest::collection::vec(-720f64..720.0, WINDOW)) {
            let w = AngleWindow::from_angles(&a).unwrap();
            for (s, c) in w.encoded() {
                prop_assert!((s * s + c * c - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn naive_examples() {
        assert_eq!(naive_predict(&[30.0; 10]).unwrap(), 30.0);
        let drift: Vec<f64> = (0..10).map(|i| 33.0 + i as f64).collect();
        assert_eq!(naive_predict(&drift).unwrap(), 42.0);
        assert!(naive_predict(&[]).is_err());
        let w = AngleWindow::from_angles(&drift).unwrap();
        assert!((predict_angle(&Naive, Angle::Yaw, &w).unwrap() - 42.0).abs() < 1e-12);
    }

    #[test]
    fn pairs_and_horizons() {
        assert_eq!(horizon_steps(1.0).unwrap(), 10);
        assert_eq!(horizon_steps(0.1).unwrap(), 1);
        assert!(horizon_steps(0.05).is_err() && horizon_steps(0.0).is_err());
        let t = HeadTrace::new(vec![ViewAngles::new(0.0, 0.0).unwrap(); 11]).unwrap();
        assert_eq!(
            training_pairs(std::slice::from_ref(&t), Angle::Yaw, 0.1)
                .unwrap()
                .len(),
            1
        );
        assert!(training_pairs(&[t], Angle::Yaw, 0.2).unwrap().is_empty());
    }

    #[test]
    fn metric_examples() {
        let m = PredictionMetrics::from_errors(&[0.0; 50]).unwrap();
        assert_eq!((m.mean_abs_error, m.rmse, m.p999), (0.0, 0.0, 0.0));
        let m = PredictionMetrics::from_errors(&[3.0, -4.0]).unwrap();
        assert_eq!(m.mean_abs_error, 3.5);
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.p999, 4.0);
    }

    #[test]
    fn naive_on_ramp_and_constant() {
        // 10 deg/s, 1 s ahead: every prediction lags by 10 deg
        let ramp = HeadTrace::new(
            (0..200)
                .map(|i| ViewAngles::canonical(0.0, i as f64).unwrap())
                .collect(),
        )
        .unwrap();
        let e = evaluate_angle(&Naive, &[ramp], Angle::Yaw, 1.0).unwrap();
        assert!((e.metrics.mean_abs_error - 10.0).abs() < 1e-9);
        assert!(e.errors.values().iter().all(|&x| (x + 10.0).abs() < 1e-9));
        let still = HeadTrace::new(vec![ViewAngles::new(12.0, -30.0).unwrap(); 40]).unwrap();
        let p = ViewpointPredictor::naive(1.0)
            .unwrap()
            .evaluate(&[still])
            .unwrap();
        for m in [p.pitch.metrics, p.yaw.metrics] {
            assert!(m.mean_abs_error < 1e-12 && m.rmse < 1e-12 && m.p999 < 1e-12);
        }
    }

    #[test]
    fn yaw_errors_wrap() {
        assert_eq!(Angle::Yaw.error(179.0, -179.0), -2.0);
        assert_eq!(Angle::Pitch.error(10.0, -5.0), 15.0);
    }

    #[test]
    fn predict_needs_history() {
        let p = ViewpointPredictor::naive(0.5).unwrap();
        let h = vec![ViewAngles::new(1.0, 2.0).unwrap(); 9];
        assert!(p.predict(&h).is_err());
        let h = vec![ViewAngles::new(1.0, 2.0).unwrap(); 12];
        let v = p.predict(&h).unwrap();
        assert!((v.pitch() - 1.0).abs() < 1e-12 && (v.yaw() - 2.0).abs() < 1e-12);
    }
}
