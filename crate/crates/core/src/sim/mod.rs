//! Multi-user streaming sessions: predict, classify, allocate and score one
//! segment at a time.

pub mod sweep;
pub mod synth;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate, Algorithm, AllocationProblem, UserSession};
use crate::error::{Error, Result};
use crate::error_model::{fit_laplace, LaplaceParams};
use crate::geometry::{viewport_bounds, viewport_tile_region, Fov, TileGrid, ViewAngles};
use crate::predictor::trace::{HeadTrace, SAMPLE_PERIOD};
use crate::predictor::{horizon_steps, PredictorKind, TrainConfig, ViewpointPredictor, WINDOW};
use crate::ratedist::{distortion, spherical_mse_to_wspsnr, RateLadder, RdMap, TileWeightMap};
use crate::visibility::classify_tiles;

pub use sweep::{capacity_sweep, SweepAxis, SweepRow, SweepSpec, Variant};
pub use synth::{synth_traces, SynthSpec};

/// How per-user capacities are chosen. Drawn once per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserCapacity {
    /// One value per user, kbps.
    Fixed { kbps: Vec<f64> },
    /// Independent uniform draws on `[low, high)` kbps.
    Uniform { low: f64, high: f64 },
}

impl UserCapacity {
    fn validate(&self) -> Result<()> {
        match self {
            UserCapacity::Fixed { kbps } => {
                if kbps.is_empty() || kbps.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                    return Err(Error::invalid("fixed user capacities must be positive"));
                }
            }
            UserCapacity::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low <= high) {
                    return Err(Error::invalid(format!(
                        "user capacity range [{low}, {high}] is invalid"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            UserCapacity::Fixed { kbps } => kbps.iter().sum::<f64>() / kbps.len() as f64,
            UserCapacity::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    /// Same shape, rescaled to the given mean.
    pub fn with_mean(&self, mean: f64) -> Self {
        let f = mean / self.mean();
        match self {
            UserCapacity::Fixed { kbps } => UserCapacity::Fixed {
                kbps: kbps.iter().map(|c| c * f).collect(),
            },
            UserCapacity::Uniform { low, high } => UserCapacity::Uniform {
                low: low * f,
                high: high * f,
            },
        }
    }

    pub fn draw(&self, users: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            UserCapacity::Fixed { kbps } => {
                if kbps.len() != users {
                    return Err(Error::invalid(format!(
                        "{} fixed capacities for {users} users",
                        kbps.len()
                    )));
                }
                Ok(kbps.clone())
            }
            UserCapacity::Uniform { low, high } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok((0..users)
                    .map(|_| {
                        if low == high {
                            *low
                        } else {
                            rng.random_range(*low..*high)
                        }
                    })
                    .collect())
            }
        }
    }
}

/// Prediction-error model used for classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaplaceSpec {
    /// Fitted to the predictor's own errors over the session traces.
    Fitted,
    Supplied {
        pitch: f64,
        yaw: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub grid: TileGrid,
    pub fov: Fov,
    pub ladder: RateLadder,
    /// Prediction lead, seconds.
    pub horizon: f64,
    pub threshold: f64,
    pub omega: f64,
    /// kbps.
    pub server_capacity: f64,
    pub user_capacity: UserCapacity,
    /// Seconds.
    pub segment_duration: f64,
    pub algorithm: Algorithm,
    pub predictor: PredictorKind,
    /// Used only when a linear or CNN predictor is trained for the session.
    pub train: TrainConfig,
    pub laplace: LaplaceSpec,
    pub rd: RdMap,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            grid: TileGrid::new(8, 8).expect("8x8 grid"),
            fov: Fov::default(),
            ladder: RateLadder::standard(),
            horizon: 1.0,
            threshold: 0.05,
            omega: 0.0,
            server_capacity: 15_000.0,
            user_capacity: UserCapacity::Uniform {
                low: 1300.0,
                high: 1700.0,
            },
            segment_duration: 1.0,
            algorithm: Algorithm::Proposed,
            predictor: PredictorKind::Naive,
            train: TrainConfig::default(),
            laplace: LaplaceSpec::Fitted,
            rd: RdMap::default(),
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        TileGrid::new(self.grid.rows(), self.grid.cols())?;
        Fov::new(self.fov.horizontal(), self.fov.vertical())?;
        horizon_steps(self.horizon)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::invalid(format!(
                "omega {} must be non-negative",
                self.omega
            )));
        }
        if !(self.server_capacity.is_finite() && self.server_capacity > 0.0) {
            return Err(Error::invalid(format!(
                "server capacity {} must be positive",
                self.server_capacity
            )));
        }
        self.user_capacity.validate()?;
        let steps = self.segment_duration / SAMPLE_PERIOD;
        if !(steps >= 1.0 && (steps - steps.round()).abs() < 1e-9) {
            return Err(Error::invalid(format!(
                "segment duration {} s must be a positive multiple of 0.1 s",
                self.segment_duration
            )));
        }
        if let LaplaceSpec::Supplied { pitch, yaw } = self.laplace {
            LaplaceParams::new(pitch)?;
            LaplaceParams::new(yaw)?;
        }
        self.rd.validate(self.grid, &self.ladder)?;
        self.train.validate()
    }

    fn segment_steps(&self) -> usize {
        (self.segment_duration / SAMPLE_PERIOD).round() as usize
    }
}

/// The predictor named by the config, trained on `traces` when needed.
pub fn session_predictor(
    config: &SessionConfig,
    traces: &[HeadTrace],
) -> Result<ViewpointPredictor> {
    match config.predictor {
        PredictorKind::Naive => ViewpointPredictor::naive(config.horizon),
        kind => ViewpointPredictor::train(kind, traces, config.horizon, &config.train),
    }
}

/// One user in one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment: usize,
    pub user: usize,
    /// Segment midpoint, seconds from the start of the traces.
    pub time: f64,
    pub predicted: ViewAngles,
    pub truth: ViewAngles,
    pub viewport_tiles: usize,
    pub marginal_tiles: usize,
    /// 1-based ladder index of the viewport tiles.
    pub viewport_index: usize,
    pub marginal_histogram: Vec<usize>,
    pub expected_q: f64,
    pub expected_wspsnr: f64,
    /// Area-weighted MSE over the tiles of the true viewport at their
    /// allocated rates.
    pub realized_mse: f64,
    pub realized_wspsnr: f64,
    pub instability: f64,
    /// The true viewport lies inside the viewport and marginal tiles.
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub segments: usize,
    pub users: usize,
    pub laplace_pitch: f64,
    pub laplace_yaw: f64,
    /// Mean over segments of the allocator objective.
    pub mean_expected_q: f64,
    pub mean_expected_wspsnr: f64,
    pub mean_realized_wspsnr: f64,
    pub mean_instability: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutput {
    pub records: Vec<SegmentRecord>,
    /// Allocator objective of each segment.
    pub objectives: Vec<f64>,
    pub report: SessionReport,
}

/// Sample index of each segment midpoint that has a full history window
/// ending `horizon` before it.
fn segment_midpoints(config: &SessionConfig, len: usize) -> Result<Vec<usize>> {
    let h = horizon_steps(config.horizon)?;
    let d = config.segment_steps();
    let mut mids = Vec::new();
    for k in 0.. {
        let mid = k * d + d / 2;
        if mid >= len {
            break;
        }
        if mid >= h + WINDOW - 1 {
            mids.push(mid);
        }
    }
    if mids.is_empty() {
        return Err(Error::invalid(format!(
            "traces of {len} samples are too short for one segment at horizon {} s",
            config.horizon
        )));
    }
    Ok(mids)
}

fn error_model(
    config: &SessionConfig,
    predictor: &ViewpointPredictor,
    traces: &[HeadTrace],
) -> Result<(LaplaceParams, LaplaceParams)> {
    match config.laplace {
        LaplaceSpec::Supplied { pitch, yaw } => {
            Ok((LaplaceParams::new(pitch)?, LaplaceParams::new(yaw)?))
        }
        LaplaceSpec::Fitted => {
            let e = predictor.evaluate(traces)?;
            Ok((fit_laplace(&e.pitch.errors)?, fit_laplace(&e.yaw.errors)?))
        }
    }
}

pub fn run_session(
    config: &SessionConfig,
    traces: &[HeadTrace],
    predictor: &ViewpointPredictor,
) -> Result<SessionOutput> {
    config.validate()?;
    if traces.is_empty() {
        return Err(Error::invalid("session needs at least one user trace"));
    }
    if (predictor.horizon - config.horizon).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "predictor horizon {} s differs from the session horizon {} s",
            predictor.horizon, config.horizon
        )));
    }
    let len = traces.iter().map(HeadTrace::len).min().expect("non-empty");
    let mids = segment_midpoints(config, len)?;
    let h = horizon_steps(config.horizon)?;
    let (lat_err, lon_err) = error_model(config, predictor, traces)?;
    let capacities = config.user_capacity.draw(traces.len(), config.seed)?;
    let weights = TileWeightMap::new(config.grid);
    let grid = config.grid;

    let mut records = Vec::with_capacity(mids.len() * traces.len());
    let mut objectives = Vec::with_capacity(mids.len());
    for (s, &mid) in mids.iter().enumerate() {
        let seg = |e: Error| Error::Segment {
            segment: s,
            source: Box::new(e),
        };
        let mut users = Vec::with_capacity(traces.len());
        let mut views = Vec::with_capacity(traces.len());
        for (k, tr) in traces.iter().enumerate() {
            let end = mid - h;
            let predicted = predictor
                .predict(&tr.samples()[end + 1 - WINDOW..=end])
                .map_err(seg)?;
            let truth = tr.samples()[mid];
            let bounds = viewport_bounds(predicted, config.fov);
            let classification =
                classify_tiles(grid, &bounds, lat_err, lon_err, config.threshold).map_err(seg)?;
            users.push(UserSession {
                id: k,
                classification,
                capacity: capacities[k],
                rd: config.rd.clone(),
            });
            views.push((predicted, truth));
        }
        let problem = AllocationProblem::new(
            users,
            config.server_capacity,
            config.ladder.clone(),
            config.omega,
        )
        .map_err(seg)?;
        let result = allocate(&problem, config.algorithm).map_err(seg)?;
        objectives.push(result.objective);
        for (k, (u, out)) in problem.users().iter().zip(&result.users).enumerate() {
            let (predicted, truth) = views[k];
            let c = &u.classification;
            let region = viewport_tile_region(&viewport_bounds(truth, config.fov), grid);
            let (mut num, mut area) = (0.0, 0.0);
            for t in region.iter() {
                let rate = config.ladder.rate(result.rates.level(k, t));
                num += weights.area(t) * distortion(u.rd.params(t, grid), rate).map_err(seg)?;
                area += weights.area(t);
            }
            let realized_mse = num / area;
            let hit = region
                .iter()
                .all(|t| c.viewport_tiles.contains(t) || c.marginal_tiles.contains(t));
            records.push(SegmentRecord {
                segment: s,
                user: k,
                time: mid as f64 * SAMPLE_PERIOD,
                predicted,
                truth,
                viewport_tiles: c.viewport_tiles.len(),
                marginal_tiles: c.marginal_tiles.len(),
                viewport_index: out.viewport_index,
                marginal_histogram: out.marginal_histogram.clone(),
                expected_q: out.objective_share,
                expected_wspsnr: out.expected_wspsnr,
                realized_mse,
                realized_wspsnr: spherical_mse_to_wspsnr(realized_mse).map_err(seg)?,
                instability: out.instability,
                hit,
            });
        }
    }
    let n = records.len() as f64;
    let mean = |f: fn(&SegmentRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let report = SessionReport {
        segments: mids.len(),
        users: traces.len(),
        laplace_pitch: lat_err.scale(),
        laplace_yaw: lon_err.scale(),
        mean_expected_q: objectives.iter().sum::<f64>() / objectives.len() as f64,
        mean_expected_wspsnr: mean(|r| r.expected_wspsnr),
        mean_realized_wspsnr: mean(|r| r.realized_wspsnr),
        mean_instability: mean(|r| r.instability),
        hit_rate: mean(|r| if r.hit { 1.0 } else { 0.0 }),
    };
    Ok(SessionOutput {
        records,
        objectives,
        report,
    })
}

pub const RECORD_HEADER: [&str; 17] = [
    "segment",
    "user",
    "time_s",
    "pred_pitch",
    "pred_yaw",
    "true_pitch",
    "true_yaw",
    "viewport_tiles",
    "marginal_tiles",
    "viewport_index",
    "marginal_histogram",
    "expected_q",
    "expected_wspsnr_db",
    "realized_mse",
    "realized_wspsnr_db",
    "instability",
    "hit",
];

/// Writes records as CSV. The marginal histogram is `;`-separated counts
/// for ladder indices 1..L.
pub fn write_records<W: Write>(records: &[SegmentRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        let hist: Vec<String> = r.marginal_histogram.iter().map(|c| c.to_string()).collect();
        w.write_record([
            r.segment.to_string(),
            r.user.to_string(),
            format!("{:.1}", r.time),
            r.predicted.pitch().to_string(),
            r.predicted.yaw().to_string(),
            r.truth.pitch().to_string(),
            r.truth.yaw().to_string(),
            r.viewport_tiles.to_string(),
            r.marginal_tiles.to_string(),
            r.viewport_index.to_string(),
            hist.join(";"),
            r.expected_q.to_string(),
            r.expected_wspsnr.to_string(),
            r.realized_mse.to_string(),
            r.realized_wspsnr.to_string(),
            r.instability.to_string(),
            u8::from(r.hit).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratedist::RdParams;

    fn quick(algorithm: Algorithm) -> SessionConfig {
        SessionConfig {
            algorithm,
            seed: 3,
            ..SessionConfig::default()
        }
    }

    fn synth(users: usize, duration: f64, seed: u64) -> Vec<HeadTrace> {
        let spec = SynthSpec {
            users,
            duration,
            ..SynthSpec::default()
        };
        synth_traces(&spec, seed).unwrap()
    }

    fn run(config: &SessionConfig, traces: &[HeadTrace]) -> SessionOutput {
        run_session(config, traces, &session_predictor(config, traces).unwrap()).unwrap()
    }

    #[test]
    fn static_users_get_top_quality() {
        let traces = synth_traces(&SynthSpec::still(3, 8.0), 1).unwrap();
        let config = SessionConfig {
            server_capacity: 1e6,
            user_capacity: UserCapacity::Fixed { kbps: vec![1e5; 3] },
            laplace: LaplaceSpec::Supplied {
                pitch: 2.0,
                yaw: 2.0,
            },
            ..SessionConfig::default()
        };
        let out = run(&config, &traces);
        let top = config.ladder.rate(config.ladder.top_level());
        let best = spherical_mse_to_wspsnr(distortion(RdParams::default(), top).unwrap()).unwrap();
        assert_eq!(out.report.segments, 6);
        for r in &out.records {
            assert!(r.hit);
            assert!((r.predicted.pitch() - r.truth.pitch()).abs() < 1e-9);
            assert!((r.predicted.yaw() - r.truth.yaw()).abs() < 1e-9);
            assert!((r.realized_wspsnr - best).abs() < 1e-9);
            assert!((r.expected_wspsnr - best).abs() < 1e-9);
        }
    }

    #[test]
    fn expected_q_accounts_for_the_objective() {
        let traces = synth(4, 20.0, 2);
        let out = run(&quick(Algorithm::Proposed), &traces);
        for (s, obj) in out.objectives.iter().enumerate() {
            let sum: f64 = out
                .records
                .iter()
                .filter(|r| r.segment == s)
                .map(|r| r.expected_q)
                .sum();
            assert!((sum - obj).abs() < 1e-12);
        }
        let per_segment: f64 =
            out.records.iter().map(|r| r.expected_q).sum::<f64>() / out.report.segments as f64;
        assert!((per_segment - out.report.mean_expected_q).abs() < 1e-9);
    }

    #[test]
    fn proposed_dominates_comparators() {
        let traces = synth(10, 30.0, 4);
        let p = run(&quick(Algorithm::Proposed), &traces).report;
        let g = run(&quick(Algorithm::Greedy), &traces).report;
        let b = run(&quick(Algorithm::Baseline), &traces).report;
        assert!(
            p.mean_expected_wspsnr >= g.mean_expected_wspsnr,
            "{p:?} {g:?}"
        );
        assert!(
            p.mean_expected_wspsnr >= b.mean_expected_wspsnr,
            "{p:?} {b:?}"
        );
        assert_eq!(b.mean_instability, 0.0);
        assert!(p.mean_instability <= g.mean_instability);
    }

    #[test]
    fn deterministic_csv() {
        let traces = synth(3, 12.0, 5);
        let config = quick(Algorithm::Proposed);
        let csv = |o: &SessionOutput| {
            let mut buf = Vec::new();
            write_records(&o.records, &mut buf).unwrap();
            buf
        };
        let a = csv(&run(&config, &traces));
        assert_eq!(a, csv(&run(&config, &traces)));
        assert!(String::from_utf8(a)
            .unwrap()
            .starts_with(&RECORD_HEADER.join(",")));
    }

    #[test]
    fn short_traces_and_infeasibility() {
        let traces = synth(2, 1.0, 6);
        let err = run_session(
            &quick(Algorithm::Proposed),
            &traces,
            &ViewpointPredictor::naive(1.0).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "{err}");

        let traces = synth(2, 10.0, 6);
        let config = SessionConfig {
            user_capacity: UserCapacity::Fixed {
                kbps: vec![10.0, 10.0],
            },
            ..quick(Algorithm::Greedy)
        };
        let err =
            run_session(&config, &traces, &ViewpointPredictor::naive(1.0).unwrap()).unwrap_err();
        assert!(err.is_infeasible());
        assert!(matches!(err, Error::Segment { segment: 0, .. }), "{err}");
    }

    #[test]
    fn config_defaults_and_validation() {
        let c: SessionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, SessionConfig::default());
        assert_eq!(
            (c.fov.horizontal(), c.fov.vertical(), c.threshold, c.horizon),
            (110.0, 90.0, 0.05, 1.0)
        );
        let bad = [
            r#"{"segment_duration": 0.25}"#,
            r#"{"threshold": 1.0}"#,
            r#"{"fov": {"horizontal": 200, "vertical": 90}}"#,
            r#"{"user_capacity": {"kind": "uniform", "low": 5, "high": 1}}"#,
        ];
        for b in bad {
            let rejected =
                serde_json::from_str::<SessionConfig>(b).map_or(true, |c| c.validate().is_err());
            assert!(rejected, "{b}");
        }
        assert!(serde_json::from_str::<SessionConfig>(r#"{"sever_capacity": 1}"#).is_err());
    }

    #[test]
    fn capacity_draws_are_seeded() {
        let u = UserCapacity::Uniform {
            low: 1300.0,
            high: 1700.0,
        };
        let a = u.draw(10, 1).unwrap();
        assert_eq!(a, u.draw(10, 1).unwrap());
        assert!(a.iter().all(|c| (1300.0..1700.0).contains(c)));
        let scaled = u.with_mean(3000.0).draw(10, 1).unwrap();
        for (x, y) in a.iter().zip(&scaled) {
            assert!((y / x - 2.0).abs() < 1e-12);
        }
    }
}
