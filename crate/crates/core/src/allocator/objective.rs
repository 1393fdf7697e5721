use serde::{Deserialize, Serialize};

use super::problem::{
    Algorithm, AllocationProblem, AllocationResult, RateVector, UserLevels, UserOutcome,
};
use crate::error::{Error, Result};
use crate::geometry::Tile;
use crate::ratedist::spherical_mse_to_wspsnr;

/// Expected spherical distortion of an allocation, averaged over users.
///
/// Only the within-user structure is checked (ladder membership, one
/// viewport rate, margins not above it); capacity and the pinning of
/// invisible tiles do not enter the value.
pub fn objective(problem: &AllocationProblem, rates: &RateVector) -> Result<f64> {
    let state = rates.collapse(problem)?;
    Ok(objective_of(problem, &state))
}

pub(crate) fn objective_of(problem: &AllocationProblem, state: &[UserLevels]) -> f64 {
    problem
        .model
        .iter()
        .zip(state)
        .map(|(m, s)| m.cost(s, problem.omega()))
        .sum()
}

/// An element that can be raised one ladder step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Direction {
    /// The whole viewport group of a user.
    Viewport {
        user: usize,
    },
    Marginal {
        user: usize,
        tile: Tile,
    },
}

impl Direction {
    pub fn user(&self) -> usize {
        match *self {
            Direction::Viewport { user } | Direction::Marginal { user, .. } => user,
        }
    }
}

/// Collapsed form of a direction: `None` is the viewport group, `Some(j)`
/// the j-th marginal tile.
pub(crate) type Move = Option<usize>;

pub(crate) fn resolve(problem: &AllocationProblem, direction: Direction) -> Result<(usize, Move)> {
    let k = direction.user();
    let m = problem
        .model
        .get(k)
        .ok_or_else(|| Error::invalid(format!("no user {k}")))?;
    match direction {
        Direction::Viewport { .. } => Ok((k, None)),
        Direction::Marginal { tile, .. } => m
            .marginal
            .iter()
            .position(|t| t.tile == tile)
            .map(|j| (k, Some(j)))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "tile ({}, {}) is not marginal for user {k}",
                    tile.row, tile.col
                ))
            }),
    }
}

/// Distortion decrease per kbps of a one-step increase along `direction`.
/// A viewport direction raises the whole group.
pub fn slope(problem: &AllocationProblem, rates: &RateVector, direction: Direction) -> Result<f64> {
    let state = rates.collapse(problem)?;
    let (k, mv) = resolve(problem, direction)?;
    slope_of(problem, k, &state[k], mv).ok_or(Error::DirectionExhausted)
}

/// `None` when the element is already at the top rate.
pub(crate) fn slope_of(
    problem: &AllocationProblem,
    k: usize,
    levels: &UserLevels,
    mv: Move,
) -> Option<f64> {
    let m = &problem.model[k];
    let top = problem.levels() - 1;
    let mut bumped = levels.clone();
    let delta_b = match mv {
        None => {
            if levels.viewport >= top {
                return None;
            }
            bumped.viewport += 1;
            m.viewport.len() as f64
                * (problem.rate(bumped.viewport) - problem.rate(levels.viewport))
        }
        Some(j) => {
            let l = levels.marginal[j];
            if l >= top {
                return None;
            }
            bumped.marginal[j] += 1;
            problem.rate(l + 1) - problem.rate(l)
        }
    };
    let omega = problem.omega();
    Some(-(m.cost(&bumped, omega) - m.cost(levels, omega)) / delta_b)
}

/// Population standard deviation of 1-based ladder indices over the
/// user's viewport and marginal tiles.
pub fn instability_index(
    problem: &AllocationProblem,
    rates: &RateVector,
    user: usize,
) -> Result<f64> {
    let u = problem
        .users()
        .get(user)
        .ok_or_else(|| Error::invalid(format!("no user {user}")))?;
    let c = &u.classification;
    let idx: Vec<f64> = c
        .viewport_tiles
        .iter()
        .chain(c.marginal_tiles.iter())
        .map(|t| rates.index(user, t) as f64)
        .collect();
    Ok(population_std(&idx))
}

pub(crate) fn population_std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Visibility-weighted spherical MSE of one user's visible tiles.
pub(crate) fn expected_mse(problem: &AllocationProblem, rates: &RateVector, user: usize) -> f64 {
    let u = &problem.users()[user];
    let c = &u.classification;
    let grid = problem.grid();
    let (mut num, mut den, mut plain, mut area) = (0.0, 0.0, 0.0, 0.0);
    for t in c.viewport_tiles.iter().chain(c.marginal_tiles.iter()) {
        let s = problem.weights().area(t);
        let w = s * c.probability(t);
        let d =
            u.rd.params(t, grid)
                .eval(problem.rate(rates.level(user, t)));
        num += w * d;
        den += w;
        plain += s * d;
        area += s;
    }
    if den > 0.0 {
        num / den
    } else {
        plain / area
    }
}

/// Assembles the reported summary of a rate vector.
pub(crate) fn summarize(
    problem: &AllocationProblem,
    algorithm: Algorithm,
    rates: RateVector,
    iterations: usize,
) -> Result<AllocationResult> {
    let state = rates.collapse(problem)?;
    let objective = objective_of(problem, &state);
    let grid = problem.grid();
    let mut users = Vec::with_capacity(problem.users().len());
    let (mut visible, mut total) = (0.0, 0.0);
    for (k, u) in problem.users().iter().enumerate() {
        let c = &u.classification;
        let mut vis = 0.0;
        for t in c.viewport_tiles.iter().chain(c.marginal_tiles.iter()) {
            vis += problem.rate(rates.level(k, t));
        }
        let all: f64 = grid.tiles().map(|t| problem.rate(rates.level(k, t))).sum();
        visible += vis;
        total += all;
        let mut hist = vec![0; problem.levels()];
        for t in c.marginal_tiles.iter() {
            hist[rates.level(k, t)] += 1;
        }
        let mse = expected_mse(problem, &rates, k);
        users.push(UserOutcome {
            id: u.id,
            viewport_index: rates.index(
                k,
                c.viewport_tiles.iter().next().expect("non-empty viewport"),
            ),
            marginal_histogram: hist,
            instability: instability_index(problem, &rates, k)?,
            expected_mse: mse,
            expected_wspsnr: spherical_mse_to_wspsnr(mse)?,
            objective_share: problem.model[k].cost(&state[k], problem.omega()),
            consumed_visible: vis,
        });
    }
    Ok(AllocationResult {
        algorithm,
        rates,
        objective,
        consumed_visible: visible,
        consumed_total: total,
        users,
        iterations,
    })
}
