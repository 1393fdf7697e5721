//! Seeded small instances for oracle comparisons.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problem::{AllocationProblem, UserSession};
use crate::error::Result;
use crate::geometry::{Tile, TileGrid, TileSet};
use crate::ratedist::{RateLadder, RdMap, RdParams};
use crate::visibility::TileClassification;

/// Two users on a 4x8 grid, 1 to 4 visible tiles each (at least one in the
/// viewport), the ladder {2, 10, 49} kbps, random R-D parameters,
/// capacities and omega. Small enough for [`super::global_search`].
pub fn random_small_instance(seed: u64) -> Result<AllocationProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TileGrid::new(4, 8)?;
    let ladder = RateLadder::new(vec![2.0, 10.0, 49.0])?;
    let mut users = Vec::new();
    for id in 0..2 {
        let mut tiles: Vec<Tile> = grid.tiles().collect();
        tiles.shuffle(&mut rng);
        let visible = rng.random_range(1..=4);
        let nv = rng.random_range(1..=visible);
        let v = TileSet::from_tiles(grid, tiles[..nv].iter().copied())?;
        let m = TileSet::from_tiles(grid, tiles[nv..visible].iter().copied())?;
        let probs = grid
            .tiles()
            .map(|t| {
                if v.contains(t) {
                    rng.random_range(0.6..1.0)
                } else if m.contains(t) {
                    rng.random_range(0.05..0.6)
                } else {
                    rng.random_range(0.0..0.05)
                }
            })
            .collect();
        let rd = RdParams::new(
            rng.random_range(300.0..1500.0),
            rng.random_range(0.0..1.5),
            rng.random_range(0.5..5.0),
        )?;
        let lo = visible as f64 * ladder.lowest();
        let hi = visible as f64 * ladder.rate(ladder.top_level());
        users.push(UserSession {
            id,
            classification: TileClassification::from_parts(grid, v, m, probs, 0.05)?,
            capacity: rng.random_range(lo..hi),
            rd: RdMap::Global { params: rd },
        });
    }
    let caps: f64 = users.iter().map(|u| u.capacity).sum();
    let floor: f64 = users
        .iter()
        .map(|u| {
            (u.classification.viewport_tiles.len() + u.classification.marginal_tiles.len()) as f64
                * ladder.lowest()
        })
        .sum();
    let server = floor.max(caps * rng.random_range(0.5..1.1));
    let omega = [0.0, 0.5, 1.0][rng.random_range(0..3)];
    AllocationProblem::new(users, server, ladder, omega)
}
