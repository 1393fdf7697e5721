use proptest::prelude::*;

use tile360::allocator::{allocate, objective, Algorithm};
use tile360::geometry::{Tile, ViewAngles};
use tile360::io::{LaplacePair, ProblemFile, UserSpec};
use tile360::predictor::{PredictorKind, TrainConfig};
use tile360::ratedist::{RateLadder, RdMap};
use tile360::sim::{
    run_session, session_predictor, synth_traces, write_records, SessionConfig, SynthSpec,
};

#[test]
fn linear_session_end_to_end() {
    let traces = synth_traces(
        &SynthSpec {
            users: 6,
            duration: 30.0,
            ..SynthSpec::default()
        },
        21,
    )
    .unwrap();
    let config = SessionConfig {
        predictor: PredictorKind::Linear,
        server_capacity: 8000.0,
        omega: 1.0,
        ..SessionConfig::default()
    };
    let predictor = session_predictor(&config, &traces).unwrap();
    let out = run_session(&config, &traces, &predictor).unwrap();
    let r = &out.report;
    assert_eq!(out.records.len(), r.segments * r.users);
    assert_eq!(out.objectives.len(), r.segments);
    let mean_q = out.objectives.iter().sum::<f64>() / out.objectives.len() as f64;
    assert!((mean_q - r.mean_expected_q).abs() < 1e-9);
    for rec in &out.records {
        assert!(rec.realized_mse.is_finite() && rec.realized_wspsnr.is_finite());
        assert_eq!(
            rec.marginal_histogram.iter().sum::<usize>(),
            rec.marginal_tiles
        );
    }

    let bytes = |o: &tile360::sim::SessionOutput| {
        let mut b = Vec::new();
        write_records(&o.records, &mut b).unwrap();
        b
    };
    let again = run_session(
        &config,
        &traces,
        &session_predictor(&config, &traces).unwrap(),
    )
    .unwrap();
    assert_eq!(bytes(&out), bytes(&again));
}

#[test]
fn dominance_over_twenty_sessions() {
    let spec = SynthSpec {
        users: 10,
        duration: 8.0,
        ..SynthSpec::default()
    };
    let (mut p_sum, mut g_sum, mut b_sum) = (0.0, 0.0, 0.0);
    let (mut p_inst, mut g_inst) = (0.0, 0.0);
    for seed in 0..20 {
        let traces = synth_traces(&spec, 100 + seed).unwrap();
        let run = |algorithm| {
            let config = SessionConfig {
                algorithm,
                server_capacity: 12_000.0,
                seed,
                ..SessionConfig::default()
            };
            let p = session_predictor(&config, &traces).unwrap();
            run_session(&config, &traces, &p).unwrap().report
        };
        let (p, g, b) = (
            run(Algorithm::Proposed),
            run(Algorithm::Greedy),
            run(Algorithm::Baseline),
        );
        assert_eq!(b.mean_instability, 0.0, "seed {seed}");
        p_sum += p.mean_expected_wspsnr;
        g_sum += g.mean_expected_wspsnr;
        b_sum += b.mean_expected_wspsnr;
        p_inst += p.mean_instability;
        g_inst += g.mean_instability;
    }
    assert!(p_sum >= g_sum && p_sum >= b_sum, "{p_sum} {g_sum} {b_sum}");
    assert!(p_inst <= g_inst, "{p_inst} {g_inst}");
}

#[test]
fn cnn_session_trains_on_the_session_traces() {
    let traces = synth_traces(
        &SynthSpec {
            users: 3,
            duration: 10.0,
            ..SynthSpec::default()
        },
        5,
    )
    .unwrap();
    let config = SessionConfig {
        predictor: PredictorKind::Cnn,
        train: TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
        ..SessionConfig::default()
    };
    let p = session_predictor(&config, &traces).unwrap();
    assert!(p.to_json().unwrap().contains("\"cnn\""));
    assert!(run_session(&config, &traces, &p).unwrap().report.hit_rate <= 1.0);
}

fn problem(users: Vec<(f64, f64, f64)>, server: f64, omega: f64) -> ProblemFile {
    ProblemFile {
        grid: tile360::geometry::TileGrid::new(8, 8).unwrap(),
        fov: Default::default(),
        ladder: RateLadder::standard(),
        threshold: 0.05,
        omega,
        server_capacity: server,
        users: users
            .into_iter()
            .map(|(pitch, yaw, capacity)| UserSpec {
                capacity,
                rd: RdMap::default(),
                viewpoint: Some(ViewAngles::new(pitch, yaw).unwrap()),
                laplace: Some(LaplacePair {
                    pitch: 4.0,
                    yaw: 12.0,
                }),
                viewport: None,
                marginal: None,
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn allocations_respect_capacities(
        users in prop::collection::vec((-80.0..80.0f64, -180.0..180.0f64, 600.0..2500.0f64), 1..4),
        server_share in 0.5..1.5f64,
        omega in prop::sample::select(vec![0.0, 1.0]),
    ) {
        let demand: f64 = users.iter().map(|u| u.2).sum();
        let file = problem(users.clone(), demand * server_share, omega);
        let p = file.into_problem().unwrap();
        for algorithm in [Algorithm::Proposed, Algorithm::Greedy, Algorithm::Baseline] {
            let r = match allocate(&p, algorithm) {
                Ok(r) => r,
                Err(e) => { prop_assert!(e.is_infeasible()); continue; }
            };
            let share: f64 = r.users.iter().map(|u| u.objective_share).sum();
            prop_assert!((share - r.objective).abs() < 1e-9);
            prop_assert!((objective(&p, &r.rates).unwrap() - r.objective).abs() < 1e-9);
            let server_load = if algorithm == Algorithm::Proposed { r.consumed_visible } else { r.consumed_total };
            prop_assert!(server_load <= file.server_capacity + 1e-9);
            for (k, u) in r.users.iter().enumerate() {
                let c = &p.users()[k].classification;
                // the baseline streams the whole frame at one rate
                let floor = if algorithm == Algorithm::Baseline { u.viewport_index } else { 1 };
                for t in c.invisible_tiles.iter() {
                    prop_assert_eq!(r.rates.index(k, t), floor);
                }
                let v = c.viewport_tiles.iter().next().unwrap();
                prop_assert_eq!(r.rates.index(k, v), u.viewport_index);
                for t in c.marginal_tiles.iter() {
                    prop_assert!(r.rates.index(k, t) <= u.viewport_index);
                }
                if algorithm == Algorithm::Proposed {
                    prop_assert!(u.consumed_visible <= users[k].2 + 1e-9);
                }
            }
        }
    }
}

#[test]
fn viewport_at_the_pole_gets_full_rows() {
    let p = problem(vec![(80.0, 30.0, 1500.0)], 1500.0, 0.0)
        .into_problem()
        .unwrap();
    let c = &p.users()[0].classification;
    for col in 1..=8 {
        assert!(c.viewport_tiles.contains(Tile::new(1, col)));
    }
}
