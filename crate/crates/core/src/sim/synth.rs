//! Seeded synthetic head traces: a few slow sinusoids plus a mean-reverting
//! walk driven by Laplace steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::LaplaceParams;
use crate::geometry::ViewAngles;
use crate::predictor::trace::{HeadTrace, SAMPLE_PERIOD};

const PITCH_LIMIT: f64 = 85.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub users: usize,
    /// Seconds per trace.
    pub duration: f64,
    /// Sinusoids per angle.
    pub components: usize,
    /// Per-component amplitude range, degrees.
    pub yaw_amplitude: (f64, f64),
    pub pitch_amplitude: (f64, f64),
    /// Range of a pitch offset drawn once per user, degrees.
    pub pitch_offset: (f64, f64),
    /// Period range, seconds.
    pub period: (f64, f64),
    /// Laplace scale of the per-sample jitter steps, degrees.
    pub yaw_jitter: f64,
    pub pitch_jitter: f64,
    /// Pull of the jitter walk back to zero per sample, in [0, 1).
    pub reversion: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 10,
            duration: 60.0,
            components: 3,
            yaw_amplitude: (10.0, 35.0),
            pitch_amplitude: (3.0, 10.0),
            pitch_offset: (-15.0, 15.0),
            period: (6.0, 30.0),
            yaw_jitter: 2.5,
            pitch_jitter: 1.0,
            reversion: 0.02,
        }
    }
}

impl SynthSpec {
    /// Every amplitude and jitter set to zero: constant traces.
    pub fn still(users: usize, duration: f64) -> Self {
        SynthSpec {
            users,
            duration,
            yaw_amplitude: (0.0, 0.0),
            pitch_amplitude: (0.0, 0.0),
            yaw_jitter: 0.0,
            pitch_jitter: 0.0,
            ..SynthSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::invalid("synthetic spec needs at least one user"));
        }
        if !(self.duration.is_finite() && self.duration >= SAMPLE_PERIOD) {
            return Err(Error::invalid(format!(
                "duration {} s is too short",
                self.duration
            )));
        }
        for (name, (lo, hi)) in [
            ("yaw_amplitude", self.yaw_amplitude),
            ("pitch_amplitude", self.pitch_amplitude),
            ("pitch_offset", self.pitch_offset),
            ("period", self.period),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        if self.yaw_amplitude.0 < 0.0 || self.pitch_amplitude.0 < 0.0 {
            return Err(Error::invalid("amplitudes must be non-negative"));
        }
        if self.pitch_offset.0 < -PITCH_LIMIT || self.pitch_offset.1 > PITCH_LIMIT {
            return Err(Error::invalid(format!(
                "pitch offsets must lie within ±{PITCH_LIMIT}°"
            )));
        }
        if self.period.0 <= 0.0 {
            return Err(Error::invalid("periods must be positive"));
        }
        for (name, j) in [
            ("yaw_jitter", self.yaw_jitter),
            ("pitch_jitter", self.pitch_jitter),
        ] {
            if !(j.is_finite() && j >= 0.0) {
                return Err(Error::invalid(format!("{name} {j} must be non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.reversion) {
            return Err(Error::invalid(format!(
                "reversion {} outside [0, 1)",
                self.reversion
            )));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        (self.duration / SAMPLE_PERIOD).round() as usize + 1
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

struct Wave {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

fn waves(rng: &mut ChaCha8Rng, spec: &SynthSpec, amplitude: (f64, f64)) -> Vec<Wave> {
    (0..spec.components)
        .map(|_| Wave {
            amplitude: uniform(rng, amplitude),
            omega: std::f64::consts::TAU / uniform(rng, spec.period),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

fn jitter(rng: &mut ChaCha8Rng, scale: f64) -> Result<f64> {
    if scale == 0.0 {
        return Ok(0.0);
    }
    let u: f64 = loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    Ok(LaplaceParams::new(scale)?.quantile(u))
}

pub fn synth_traces(spec: &SynthSpec, seed: u64) -> Result<Vec<HeadTrace>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.samples();
    let keep = 1.0 - spec.reversion;
    (0..spec.users)
        .map(|_| {
            let yaw0 = rng.random_range(-180.0..180.0);
            let pitch0 = uniform(&mut rng, spec.pitch_offset);
            let yaw_waves = waves(&mut rng, spec, spec.yaw_amplitude);
            let pitch_waves = waves(&mut rng, spec, spec.pitch_amplitude);
            let (mut wy, mut wp) = (0.0, 0.0);
            let mut samples = Vec::with_capacity(n);
            for i in 0..n {
                let t = i as f64 * SAMPLE_PERIOD;
                let sum = |ws: &[Wave]| {
                    ws.iter()
                        .map(|w| w.amplitude * (w.omega * t + w.phase).sin())
                        .sum::<f64>()
                };
                if i > 0 {
                    wy = keep * wy + jitter(&mut rng, spec.yaw_jitter)?;
                    wp = keep * wp + jitter(&mut rng, spec.pitch_jitter)?;
                }
                let pitch = (pitch0 + sum(&pitch_waves) + wp).clamp(-PITCH_LIMIT, PITCH_LIMIT);
                samples.push(ViewAngles::canonical(pitch, yaw0 + sum(&yaw_waves) + wy)?);
            }
            HeadTrace::new(samples)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_model::fit_laplace;
    use crate::predictor::{evaluate_angle, Angle, Naive};

    #[test]
    fn still_spec_gives_constant_traces() {
        for t in synth_traces(&SynthSpec::still(3, 5.0), 9).unwrap() {
            assert_eq!(t.len(), 51);
            assert!(t.samples().iter().all(|s| *s == t.samples()[0]));
        }
    }

    #[test]
    fn seeded() {
        let spec = SynthSpec::default();
        assert_eq!(
            synth_traces(&spec, 4).unwrap(),
            synth_traces(&spec, 4).unwrap()
        );
        assert_ne!(
            synth_traces(&spec, 4).unwrap(),
            synth_traces(&spec, 5).unwrap()
        );
    }

    #[test]
    fn naive_error_regime() {
        let traces = synth_traces(&SynthSpec::default(), 1).unwrap();
        let rmse = evaluate_angle(&Naive, &traces, Angle::Yaw, 1.0)
            .unwrap()
            .metrics
            .rmse;
        assert!((10.0..=40.0).contains(&rmse), "{rmse}");
    }

    #[test]
    fn jitter_scale_is_recovered() {
        // one step ahead the naive error is dominated by the last jitter step
        let spec = SynthSpec {
            duration: 300.0,
            ..SynthSpec::default()
        };
        let traces = synth_traces(&spec, 2).unwrap();
        let errors = evaluate_angle(&Naive, &traces, Angle::Yaw, 0.1)
            .unwrap()
            .errors;
        let fitted = fit_laplace(&errors).unwrap().scale();
        assert!(
            (fitted - spec.yaw_jitter).abs() / spec.yaw_jitter < 0.15,
            "{fitted}"
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SynthSpec {
                users: 0,
                ..SynthSpec::default()
            },
            SynthSpec {
                period: (0.0, 1.0),
                ..SynthSpec::default()
            },
            SynthSpec {
                reversion: 1.0,
                ..SynthSpec::default()
            },
            SynthSpec {
                yaw_jitter: -1.0,
                ..SynthSpec::default()
            },
        ];
        for s in bad {
            assert!(synth_traces(&s, 0).is_err());
        }
    }
}
