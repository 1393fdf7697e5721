//! Oracle suites: analytic results checked against independent sampling,
//! quadrature and exhaustive search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::allocator::{
    allocate, random_small_instance, Algorithm, AllocationProblem, UserSession,
};
use crate::error::Result;
use crate::error_model::{jarque_bera, laplace_interval_probability, ErrorSamples, LaplaceParams};
use crate::geometry::{
    monte_carlo_bounds, viewport_bounds, Fov, Tile, TileGrid, TileSet, ViewAngles, ViewportBounds,
};
use crate::predictor::test_traces::sinusoid;
use crate::predictor::{
    cnn_train, gradient_check, training_pairs, Angle, CnnModel, PredictorKind, TrainConfig,
    ViewpointPredictor,
};
use crate::ratedist::{fit_rd, tile_area, RateLadder, RdMap, RdParams};
use crate::sim::{synth_traces, SynthSpec};
use crate::visibility::TileClassification;

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check {
            name,
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn lon_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Largest disagreement between two boxes, in degrees; infinite when
/// their pole or full-span structure differs.
pub fn bounds_gap(a: &ViewportBounds, b: &ViewportBounds) -> f64 {
    if a.covers_north_pole != b.covers_north_pole
        || a.covers_south_pole != b.covers_south_pole
        || a.full_longitude_span() != b.full_longitude_span()
    {
        return f64::INFINITY;
    }
    let mut gap = (a.lat_north - b.lat_north)
        .abs()
        .max((a.lat_south - b.lat_south).abs());
    if !a.full_longitude_span() {
        gap = gap
            .max(lon_gap(a.lon_west, b.lon_west))
            .max(lon_gap(a.lon_east, b.lon_east));
    }
    gap
}

/// Analytic viewport bounds against the sampled projection, over random
/// viewpoints and FoVs in [60, 120]^2 plus fixed pole and antimeridian
/// cases.
pub fn geometry_suite(cases: usize, samples_per_axis: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixed = Vec::new();
    for (pitch, yaw) in [
        (90.0, 0.0),
        (-90.0, 45.0),
        (89.0, 180.0),
        (-60.0, -180.0),
        (0.0, 180.0),
        (10.0, 179.5),
        (-20.0, -179.9),
        (45.0, 160.0),
    ] {
        for (h, v) in [(110.0, 90.0), (60.0, 60.0), (120.0, 120.0)] {
            fixed.push((pitch, yaw, h, v));
        }
    }
    let mut worst: f64 = 0.0;
    let mut worst_case = (0.0, 0.0, 0.0, 0.0);
    let total = cases.max(fixed.len());
    for i in 0..total {
        let (pitch, yaw, h, v) = if i < fixed.len() {
            fixed[i]
        } else {
            (
                rng.random_range(-90.0..=90.0),
                rng.random_range(-180.0..180.0),
                rng.random_range(60.0..=120.0),
                rng.random_range(60.0..=120.0),
            )
        };
        let vp = ViewAngles::new(pitch, yaw)?;
        let fov = Fov::new(h, v)?;
        let gap = bounds_gap(
            &viewport_bounds(vp, fov),
            &monte_carlo_bounds(vp, fov, samples_per_axis)?,
        );
        if gap > worst {
            worst = gap;
            worst_case = (pitch, yaw, h, v);
        }
    }
    Ok(Check::new(
        "geometry oracle",
        worst <= 0.5,
        format!("{total} cases, worst gap {worst:.2e} deg at (pitch, yaw, h, v) = {worst_case:?}"),
    ))
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-14).integral
}

fn laplace_by_quadrature(scale: f64, a: f64, b: f64) -> f64 {
    let f = |x: f64| (-x.abs() / scale).exp() / (2.0 * scale);
    if a < 0.0 && b > 0.0 {
        integrate(f, a, 0.0) + integrate(f, 0.0, b)
    } else {
        integrate(f, a, b)
    }
}

/// Closed-form Laplace interval probabilities and tile areas against
/// numeric integration, and full-sphere coverage of the tile areas.
pub fn quadrature_suite(cases: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lap: f64 = 0.0;
    let mut area: f64 = 0.0;
    let mut sphere: f64 = 0.0;
    for _ in 0..cases {
        let scale = rng.random_range(0.1..50.0);
        let a = rng.random_range(-200.0..200.0);
        let b = a + rng.random_range(0.0..200.0);
        let p = LaplaceParams::new(scale)?;
        lap = lap.max(
            (laplace_interval_probability(p, a, b)? - laplace_by_quadrature(scale, a, b)).abs(),
        );

        let grid = TileGrid::new(rng.random_range(1..=32), rng.random_range(1..=32))?;
        let m = rng.random_range(1..=grid.rows());
        let n = rng.random_range(1..=grid.cols());
        let step = std::f64::consts::PI / grid.rows() as f64;
        let top = std::f64::consts::FRAC_PI_2 - (m - 1) as f64 * step;
        let numeric =
            std::f64::consts::TAU / grid.cols() as f64 * integrate(f64::cos, top - step, top);
        area = area.max((tile_area(m, n, grid)? - numeric).abs());
    }
    for rows in 1..=24 {
        for cols in [1, 3, 8, 13] {
            let grid = TileGrid::new(rows, cols)?;
            let mut sum = 0.0;
            for t in grid.tiles() {
                sum += tile_area(t.row, t.col, grid)?;
            }
            sphere = sphere.max((sum - 4.0 * std::f64::consts::PI).abs());
        }
    }
    let passed = lap <= 1e-9 && area <= 1e-9 && sphere <= 1e-9;
    Ok(Check::new(
        "closed form vs quadrature",
        passed,
        format!("{cases} cases; max error laplace {lap:.2e}, tile area {area:.2e}, sphere sum {sphere:.2e}"),
    ))
}

fn laplace_samples(rng: &mut ChaCha8Rng, scale: f64, n: usize) -> Result<ErrorSamples> {
    let p = LaplaceParams::new(scale)?;
    let v = (0..n)
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break p.quantile(u);
            }
        })
        .collect();
    ErrorSamples::new(v)
}

/// Jarque-Bera on Laplace and Gaussian draws over `seeds` seeds.
pub fn distribution_suite(samples: usize, seeds: u64) -> Result<Check> {
    let normal = Normal::new(0.0, 5.0).expect("valid normal");
    let (mut laplace_rejected, mut gauss_kept) = (0, 0);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if jarque_bera(&laplace_samples(&mut rng, 5.0, samples)?)?.reject_gaussian_at_5pct {
            laplace_rejected += 1;
        }
        let g = ErrorSamples::new((0..samples).map(|_| normal.sample(&mut rng)).collect())?;
        if !jarque_bera(&g)?.reject_gaussian_at_5pct {
            gauss_kept += 1;
        }
    }
    let need = (0.95 * seeds as f64).ceil() as u64;
    Ok(Check::new(
        "distribution discrimination",
        laplace_rejected == seeds && gauss_kept >= need,
        format!("{samples} draws per seed; Laplace rejected {laplace_rejected}/{seeds}, Gaussian kept {gauss_kept}/{seeds}"),
    ))
}

/// Steepest descent from the relaxation against exhaustive search and
/// against descent started at the bottom rates, on seeded small instances.
pub fn allocator_suite(instances: u64) -> Result<Check> {
    let (mut within, mut below, mut noinit_better) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let p = random_small_instance(seed)?;
        let q = allocate(&p, Algorithm::Proposed)?.objective;
        let best = allocate(&p, Algorithm::GlobalSearch)?.objective;
        let plain = allocate(&p, Algorithm::ProposedNoInit)?.objective;
        let tol = 1e-12 * best.abs().max(1.0);
        let gap = (q - best) / best;
        worst = worst.max(gap);
        if q < best - tol {
            below += 1;
        }
        if gap <= 0.01 {
            within += 1;
        }
        if plain < q - tol {
            noinit_better += 1;
        }
    }
    let need = (0.95 * instances as f64).ceil() as u64;
    Ok(Check::new(
        "allocator optimality gap",
        within >= need && below == 0 && noinit_better == 0,
        format!(
            "{instances} instances; within 1%: {within}, below optimum: {below}, worst gap {:.3}%, no-init better: {noinit_better}",
            100.0 * worst
        ),
    ))
}

/// One user with a 5x4 viewport block and five marginal tiles on 8x8.
fn example_user(capacity: f64) -> Result<UserSession> {
    let grid = TileGrid::new(8, 8)?;
    let v = TileSet::from_tiles(
        grid,
        (2..=6).flat_map(|r| (3..=6).map(move |c| Tile::new(r, c))),
    )?;
    let m = TileSet::from_tiles(grid, (2..=6).map(|r| Tile::new(r, 7)))?;
    let probs = grid
        .tiles()
        .map(|t| {
            if v.contains(t) {
                1.0
            } else if m.contains(t) {
                0.3
            } else {
                0.0
            }
        })
        .collect();
    Ok(UserSession {
        id: 0,
        classification: TileClassification::from_parts(grid, v, m, probs, 0.05)?,
        capacity,
        rd: RdMap::default(),
    })
}

/// The greedy rate of the worked example and baseline flatness.
pub fn arithmetic_suite(instances: u64) -> Result<Check> {
    let p = AllocationProblem::new(
        vec![example_user(2000.0)?],
        1e6,
        RateLadder::standard(),
        0.0,
    )?;
    let g = allocate(&p, Algorithm::Greedy)?;
    let rate = p.ladder().rate(g.users[0].viewport_index - 1);
    let mut flat = allocate(&p, Algorithm::Baseline)?.users[0].instability == 0.0;
    let mut checked = 1;
    for cap in [150.0, 400.0, 900.0, 3000.0, 9000.0] {
        let q = AllocationProblem::new(
            vec![example_user(cap)?],
            1e6,
            RateLadder::standard(),
            0.0,
        )?;
        flat &= allocate(&q, Algorithm::Baseline)?.users[0].instability == 0.0;
        checked += 1;
    }
    for seed in 0..instances {
        let q = random_small_instance(seed)?;
        for server in [q.server_capacity(), 0.6 * q.server_capacity()] {
            match allocate(&q.with_server_capacity(server)?, Algorithm::Baseline) {
                Ok(r) => {
                    checked += 1;
                    flat &= r.users.iter().all(|u| u.instability == 0.0);
                }
                Err(e) if e.is_infeasible() => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Check::new(
        "greedy and baseline arithmetic",
        rate == 49.0 && flat,
        format!("greedy viewport rate {rate} kbps at 2 Mbps; baseline instability zero on {checked} instances: {flat}"),
    ))
}

/// R-D parameter recovery from ladder samples, clean and with 1% noise.
pub fn rd_suite(seed: u64) -> Result<Check> {
    let ladder = RateLadder::standard();
    let truths = [
        (800.0, 0.5, 3.0),
        (300.0, 1.2, 0.5),
        (1500.0, -2.0, 8.0),
        (60.0, 0.0, 12.0),
    ];
    let rel = |a: f64, b: f64| {
        if b == 0.0 {
            a.abs()
        } else {
            (a / b - 1.0).abs()
        }
    };
    let err = |fit: RdParams, t: RdParams| {
        rel(fit.sigma, t.sigma)
            .max(rel(fit.r0, t.r0))
            .max(rel(fit.d0, t.d0))
    };
    let mut clean: f64 = 0.0;
    for &(s, r, d) in &truths {
        let t = RdParams::new(s, r, d)?;
        let pts: Vec<(f64, f64)> = ladder
            .rates()
            .iter()
            .map(|&x| (x, s / (x - r) + d))
            .collect();
        clean = clean.max(err(fit_rd(&pts)?, t));
    }
    let truth = RdParams::new(800.0, 0.5, 3.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).expect("valid normal");
    let pts: Vec<(f64, f64)> = ladder
        .rates()
        .iter()
        .map(|&x| {
            (
                x,
                (800.0 / (x - 0.5) + 3.0) * (1.0 + noise.sample(&mut rng)),
            )
        })
        .collect();
    let noisy = err(fit_rd(&pts)?, truth);
    Ok(Check::new(
        "rate-distortion round trip",
        clean <= 0.01 && noisy <= 0.1,
        format!("worst relative error clean {clean:.2e}, noisy {noisy:.3}"),
    ))
}

/// Training set of the predictor comparison.
#[derive(Debug, Clone, Copy)]
pub struct PredictorSuiteSize {
    pub train_users: usize,
    /// Seconds per training trace.
    pub train_duration: f64,
    pub test_users: usize,
    pub test_duration: f64,
    pub epochs: usize,
}

impl Default for PredictorSuiteSize {
    fn default() -> Self {
        // many short traces: eight long ones let the network overfit
        PredictorSuiteSize {
            train_users: 40,
            train_duration: 20.0,
            test_users: 4,
            test_duration: 60.0,
            epochs: TrainConfig::default().epochs,
        }
    }
}

/// Gradient check at initialization, memorization of a small set, and
/// linear and CNN prediction against naive on synthetic traces at 1 s.
pub fn predictor_suite(size: PredictorSuiteSize) -> Result<Vec<Check>> {
    let spec = |users, duration| SynthSpec {
        users,
        duration,
        ..SynthSpec::default()
    };
    let train = synth_traces(&spec(size.train_users, size.train_duration), 7)?;
    let test = synth_traces(&spec(size.test_users, size.test_duration), 8)?;

    let mut worst_grad = 0.0f64;
    for angle in [Angle::Pitch, Angle::Yaw] {
        let pairs = training_pairs(&train[..1], angle, 1.0)?;
        for (k, p) in pairs
            .iter()
            .step_by(pairs.len().div_ceil(4).max(1))
            .enumerate()
        {
            worst_grad = worst_grad.max(gradient_check(&CnnModel::init(k as u64), p, 1e-4));
        }
    }
    let grad = Check::new(
        "cnn gradient check",
        worst_grad < 1e-4,
        format!("worst relative error {worst_grad:.2e} at initialization"),
    );

    let memo_pairs: Vec<_> =
        training_pairs(&[sinusoid(160, 5.0, 0.2, 80.0, 30.0)], Angle::Yaw, 0.3)?
            .into_iter()
            .take(128)
            .collect();
    let memo_cfg = TrainConfig {
        epochs: 500,
        seed: 7,
        ..TrainConfig::default()
    };
    let (_, report) = cnn_train(&memo_pairs, &memo_cfg)?;
    let memo = Check::new(
        "cnn memorization",
        report.final_loss < 1e-3,
        format!(
            "training MSE {:.2e} on {} pairs",
            report.final_loss,
            memo_pairs.len()
        ),
    );

    let config = TrainConfig {
        epochs: size.epochs,
        ..TrainConfig::default()
    };
    let mut rmse = Vec::new();
    let mut ordered = true;
    for kind in [
        PredictorKind::Naive,
        PredictorKind::Linear,
        PredictorKind::Cnn,
    ] {
        let e = ViewpointPredictor::train(kind, &train, 1.0, &config)?.evaluate(&test)?;
        for m in [e.pitch.metrics, e.yaw.metrics] {
            ordered &= m.mean_abs_error <= m.rmse;
        }
        rmse.push((e.pitch.metrics.rmse, e.yaw.metrics.rmse));
    }
    let [naive, linear, cnn] = [rmse[0], rmse[1], rmse[2]];
    let beats = |m: (f64, f64)| m.0 < naive.0 && m.1 < naive.1;
    let detail = format!(
        "rmse pitch/yaw naive {:.2}/{:.2}, linear {:.2}/{:.2}, cnn {:.2}/{:.2}",
        naive.0, naive.1, linear.0, linear.1, cnn.0, cnn.1
    );
    Ok(vec![
        grad,
        memo,
        Check::new(
            "prediction beats naive",
            beats(linear) && beats(cnn),
            detail,
        ),
        Check::new("mean error within rmse", ordered, "six evaluations".into()),
    ])
}

/// Every fast suite at its documented size.
pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        geometry_suite(1000, 2001, 1)?,
        quadrature_suite(10_000, 2)?,
        distribution_suite(100_000, 20)?,
        allocator_suite(100)?,
        arithmetic_suite(100)?,
        rd_suite(7)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        for c in [
            geometry_suite(40, 501, 3).unwrap(),
            quadrature_suite(200, 4).unwrap(),
            distribution_suite(20_000, 3).unwrap(),
            allocator_suite(10).unwrap(),
            arithmetic_suite(5).unwrap(),
            rd_suite(7).unwrap(),
        ] {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn tiny_predictor_suite_runs() {
        let size = PredictorSuiteSize {
            train_users: 3,
            train_duration: 5.0,
            test_users: 1,
            test_duration: 5.0,
            epochs: 1,
        };
        let checks = predictor_suite(size).unwrap();
        assert_eq!(checks.len(), 4);
        assert!(
            checks[0].passed && checks[1].passed && checks[3].passed,
            "{checks:?}"
        );
    }

    #[test]
    fn gap_notices_structure() {
        let a = ViewportBounds::from_extremes(50.0, -40.0, 170.0, -170.0, false, false).unwrap();
        let b = ViewportBounds::from_extremes(50.2, -40.0, 170.3, -170.0, false, false).unwrap();
        assert!((bounds_gap(&a, &b) - 0.3).abs() < 1e-9);
        let p = ViewportBounds::from_extremes(90.0, 10.0, -180.0, 180.0, true, false).unwrap();
        assert_eq!(bounds_gap(&a, &p), f64::INFINITY);
    }
}
