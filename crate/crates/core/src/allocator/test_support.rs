//! Small hand-built instances shared by the allocator tests.

use super::problem::{AllocationProblem, UserSession};
use crate::geometry::{Tile, TileGrid, TileSet};
use crate::ratedist::{RateLadder, RdMap, RdParams};
use crate::visibility::TileClassification;

/// A 4x4 grid per user with `vp` viewport tiles in row 2 and `mg` marginal
/// tiles in row 3. Probabilities are 0.9 in the viewport and 0.3 in the
/// margin.
pub(crate) fn small_problem(
    shape: &[(usize, usize)],
    server: f64,
    caps: &[f64],
    omega: f64,
) -> AllocationProblem {
    small_problem_with(
        shape,
        server,
        caps,
        omega,
        RateLadder::new(vec![2.0, 4.0, 10.0]).unwrap(),
    )
}

pub(crate) fn small_problem_with(
    shape: &[(usize, usize)],
    server: f64,
    caps: &[f64],
    omega: f64,
    ladder: RateLadder,
) -> AllocationProblem {
    let grid = TileGrid::new(4, 4).unwrap();
    let users = shape
        .iter()
        .zip(caps)
        .enumerate()
        .map(|(id, (&(vp, mg), &cap))| {
            let v = TileSet::from_tiles(grid, (1..=vp).map(|c| Tile::new(2, c))).unwrap();
            let m = TileSet::from_tiles(grid, (1..=mg).map(|c| Tile::new(3, c))).unwrap();
            let probs = grid
                .tiles()
                .map(|t| {
                    if v.contains(t) {
                        0.9
                    } else if m.contains(t) {
                        0.3
                    } else {
                        0.01
                    }
                })
                .collect();
            UserSession {
                id,
                classification: TileClassification::from_parts(grid, v, m, probs, 0.05).unwrap(),
                capacity: cap,
                rd: RdMap::Global {
                    params: RdParams::new(800.0, 0.5, 3.0).unwrap(),
                },
            }
        })
        .collect();
    AllocationProblem::new(users, server, ladder, omega).unwrap()
}
