//! Reference allocators. Both pay for every tile of the frame: the
//! baseline sends all tiles at one rate, the greedy scheme sends
//! everything outside the viewport at the lowest rate.

use super::objective::summarize;
use super::problem::{Algorithm, AllocationProblem, AllocationResult, RateVector};
use crate::error::{Error, Result};

/// Lowers the user with the highest level (lowest index on ties) one step
/// at a time until the server capacity holds.
fn step_down(levels: &mut [usize], load: impl Fn(usize, usize) -> f64, server: f64) -> Result<()> {
    loop {
        let total: f64 = levels.iter().enumerate().map(|(k, &l)| load(k, l)).sum();
        if total <= server {
            return Ok(());
        }
        let top = *levels.iter().max().expect("at least one user");
        if top == 0 {
            return Err(Error::InfeasibleProblem(format!(
                "lowest-rate load {total} kbps exceeds server capacity {server}"
            )));
        }
        let k = levels.iter().position(|&l| l == top).expect("max exists");
        levels[k] -= 1;
    }
}

/// Largest level `l` with `load(l) <= cap`.
fn best_level(levels: usize, cap: f64, load: impl Fn(usize) -> f64) -> Option<usize> {
    (0..levels).rev().find(|&l| load(l) <= cap)
}

/// Every tile of each user at one common rate.
pub fn baseline_alloc(problem: &AllocationProblem) -> Result<AllocationResult> {
    let grid = problem.grid();
    let tiles = grid.len() as f64;
    let mut levels = Vec::with_capacity(problem.users().len());
    for u in problem.users() {
        let l = best_level(problem.levels(), u.capacity, |l| tiles * problem.rate(l)).ok_or_else(
            || {
                Error::InfeasibleProblem(format!(
                    "user {} cannot receive all {} tiles at the lowest rate within {} kbps",
                    u.id,
                    grid.len(),
                    u.capacity
                ))
            },
        )?;
        levels.push(l);
    }
    step_down(
        &mut levels,
        |_, l| tiles * problem.rate(l),
        problem.server_capacity(),
    )?;
    let mut rates = RateVector::bottom(grid, levels.len());
    for (k, &l) in levels.iter().enumerate() {
        for t in grid.tiles() {
            rates.set_level(k, t, l);
        }
    }
    summarize(problem, Algorithm::Baseline, rates, 0)
}

/// Highest common viewport rate with all other tiles at the lowest rate.
pub fn greedy_alloc(problem: &AllocationProblem) -> Result<AllocationResult> {
    let grid = problem.grid();
    let lo = problem.ladder().lowest();
    let counts: Vec<(f64, f64)> = problem
        .users()
        .iter()
        .map(|u| {
            let v = u.classification.viewport_tiles.len() as f64;
            (v, grid.len() as f64 - v)
        })
        .collect();
    let load = |k: usize, l: usize| counts[k].0 * problem.rate(l) + counts[k].1 * lo;
    let mut levels = Vec::with_capacity(counts.len());
    for (k, u) in problem.users().iter().enumerate() {
        let l = best_level(problem.levels(), u.capacity, |l| load(k, l)).ok_or_else(|| {
            Error::InfeasibleProblem(format!(
                "user {} cannot receive the frame at the lowest rate within {} kbps",
                u.id, u.capacity
            ))
        })?;
        levels.push(l);
    }
    step_down(&mut levels, load, problem.server_capacity())?;
    let mut rates = RateVector::bottom(grid, levels.len());
    for (k, u) in problem.users().iter().enumerate() {
        for t in u.classification.viewport_tiles.iter() {
            rates.set_level(k, t, levels[k]);
        }
    }
    summarize(problem, Algorithm::Greedy, rates, 0)
}
