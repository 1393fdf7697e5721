use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Tile, TileGrid};
use crate::ratedist::{RateLadder, RdMap, RdParams, TileWeightMap};
use crate::visibility::TileClassification;

/// One user's share of an allocation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSession {
    pub id: usize,
    pub classification: TileClassification,
    /// Per-user capacity, kbps.
    pub capacity: f64,
    pub rd: RdMap,
}

/// A multi-user discrete tile rate allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    users: Vec<UserSession>,
    server_capacity: f64,
    ladder: RateLadder,
    omega: f64,
    grid: TileGrid,
    weights: TileWeightMap,
    pub(crate) model: Vec<UserModel>,
}

impl AllocationProblem {
    pub fn new(
        users: Vec<UserSession>,
        server_capacity: f64,
        ladder: RateLadder,
        omega: f64,
    ) -> Result<Self> {
        let first = users
            .first()
            .ok_or_else(|| Error::invalid("allocation problem needs at least one user"))?;
        let grid = first.classification.grid;
        if !(server_capacity.is_finite() && server_capacity > 0.0) {
            return Err(Error::invalid(format!(
                "server capacity {server_capacity} must be positive"
            )));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::invalid(format!(
                "omega {omega} must be non-negative"
            )));
        }
        for u in &users {
            if u.classification.grid != grid {
                return Err(Error::invalid(format!(
                    "user {} uses a different tile grid",
                    u.id
                )));
            }
            if !(u.capacity.is_finite() && u.capacity > 0.0) {
                return Err(Error::invalid(format!(
                    "user {} capacity {} must be positive",
                    u.id, u.capacity
                )));
            }
            if u.classification.viewport_tiles.is_empty() {
                return Err(Error::invalid(format!(
                    "user {} has an empty viewport",
                    u.id
                )));
            }
            u.rd.validate(grid, &ladder)?;
        }
        let weights = TileWeightMap::new(grid);
        let k = users.len() as f64;
        let model = users
            .iter()
            .map(|u| UserModel::build(u, &weights, &ladder, k))
            .collect();
        Ok(AllocationProblem {
            users,
            server_capacity,
            ladder,
            omega,
            grid,
            weights,
            model,
        })
    }

    pub fn users(&self) -> &[UserSession] {
        &self.users
    }

    pub fn server_capacity(&self) -> f64 {
        self.server_capacity
    }

    pub fn ladder(&self) -> &RateLadder {
        &self.ladder
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn grid(&self) -> TileGrid {
        self.grid
    }

    pub fn weights(&self) -> &TileWeightMap {
        &self.weights
    }

    /// Same instance with a different server capacity.
    pub fn with_server_capacity(&self, server_capacity: f64) -> Result<Self> {
        AllocationProblem::new(
            self.users.clone(),
            server_capacity,
            self.ladder.clone(),
            self.omega,
        )
    }

    /// Same instance with a different weight on the margin term.
    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        AllocationProblem::new(
            self.users.clone(),
            self.server_capacity,
            self.ladder.clone(),
            omega,
        )
    }

    pub(crate) fn rate(&self, level: usize) -> f64 {
        self.ladder.rate(level)
    }

    pub(crate) fn levels(&self) -> usize {
        self.ladder.len()
    }
}

/// A visible tile with everything the objective needs.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct TileTerm {
    pub tile: Tile,
    /// `S * P`.
    pub weight: f64,
    pub rd: RdParams,
    /// Distortion at each ladder level.
    pub d: Vec<f64>,
}

/// Per-user objective data in collapsed form: one viewport level and one
/// level per marginal tile.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UserModel {
    pub viewport: Vec<TileTerm>,
    pub marginal: Vec<TileTerm>,
    pub invisible: usize,
    /// `|K| * sum of S over the visible tiles`; every term is divided by it.
    pub norm: f64,
    pub capacity: f64,
}

impl UserModel {
    fn build(user: &UserSession, weights: &TileWeightMap, ladder: &RateLadder, users: f64) -> Self {
        let c = &user.classification;
        let grid = c.grid;
        let term = |tile: Tile| {
            let rd = user.rd.params(tile, grid);
            TileTerm {
                tile,
                weight: weights.area(tile) * c.probability(tile),
                rd,
                d: ladder.rates().iter().map(|&r| rd.eval(r)).collect(),
            }
        };
        let viewport: Vec<TileTerm> = c.viewport_tiles.iter().map(term).collect();
        let marginal: Vec<TileTerm> = c.marginal_tiles.iter().map(term).collect();
        let area: f64 = c
            .viewport_tiles
            .iter()
            .chain(c.marginal_tiles.iter())
            .map(|t| weights.area(t))
            .sum();
        UserModel {
            viewport,
            marginal,
            invisible: c.invisible_tiles.len(),
            norm: users * area,
            capacity: user.capacity,
        }
    }

    /// This user's contribution to the objective.
    pub fn cost(&self, levels: &UserLevels, omega: f64) -> f64 {
        let v = levels.viewport;
        let mut sum: f64 = self.viewport.iter().map(|t| t.weight * t.d[v]).sum();
        for (t, &l) in self.marginal.iter().zip(&levels.marginal) {
            sum += t.weight * t.d[l];
        }
        if omega > 0.0 {
            if let Some(j) = levels.min_marginal() {
                let t = &self.marginal[j];
                sum += omega * t.weight * t.d[levels.marginal[j]];
            }
        }
        sum / self.norm
    }

    /// Rate summed over visible tiles.
    pub fn visible_load(&self, levels: &UserLevels, ladder: &RateLadder) -> f64 {
        self.viewport.len() as f64 * ladder.rate(levels.viewport)
            + levels.marginal.iter().map(|&l| ladder.rate(l)).sum::<f64>()
    }
}

/// Collapsed levels of one user, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct UserLevels {
    pub viewport: usize,
    pub marginal: Vec<usize>,
}

impl UserLevels {
    pub fn bottom(model: &UserModel) -> Self {
        UserLevels {
            viewport: 0,
            marginal: vec![0; model.marginal.len()],
        }
    }

    /// First marginal tile, in row-major order, holding the minimum level.
    pub fn min_marginal(&self) -> Option<usize> {
        let min = *self.marginal.iter().min()?;
        self.marginal.iter().position(|&l| l == min)
    }
}

/// Ladder levels of every tile of every user.
///
/// Levels are 0-based in memory; [`RateVector::index`] and the serialized
/// form report 1-based ladder indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateVector {
    grid: TileGrid,
    levels: Vec<Vec<usize>>,
}

impl RateVector {
    /// Every tile of every user at the lowest rate.
    pub fn bottom(grid: TileGrid, users: usize) -> Self {
        RateVector {
            grid,
            levels: vec![vec![0; grid.len()]; users],
        }
    }

    /// Builds a vector from 1-based indices, `[user][row-major tile]`.
    pub fn from_indices(grid: TileGrid, indices: Vec<Vec<usize>>) -> Result<Self> {
        let mut levels = Vec::with_capacity(indices.len());
        for (k, user) in indices.into_iter().enumerate() {
            if user.len() != grid.len() {
                return Err(Error::invalid(format!(
                    "user {k}: expected {} tile indices, got {}",
                    grid.len(),
                    user.len()
                )));
            }
            if user.contains(&0) {
                return Err(Error::invalid(format!(
                    "user {k}: ladder indices start at 1"
                )));
            }
            levels.push(user.into_iter().map(|i| i - 1).collect());
        }
        Ok(RateVector { grid, levels })
    }

    pub fn grid(&self) -> TileGrid {
        self.grid
    }

    pub fn users(&self) -> usize {
        self.levels.len()
    }

    /// 0-based ladder level.
    pub fn level(&self, user: usize, tile: Tile) -> usize {
        self.levels[user][self.grid.index_of(tile)]
    }

    /// 1-based ladder index.
    pub fn index(&self, user: usize, tile: Tile) -> usize {
        self.level(user, tile) + 1
    }

    pub fn set_level(&mut self, user: usize, tile: Tile, level: usize) {
        let i = self.grid.index_of(tile);
        self.levels[user][i] = level;
    }

    /// 1-based indices as `[user][row][col]`.
    pub fn index_grid(&self) -> Vec<Vec<Vec<usize>>> {
        self.levels
            .iter()
            .map(|u| {
                u.chunks(self.grid.cols())
                    .map(|r| r.iter().map(|l| l + 1).collect())
                    .collect()
            })
            .collect()
    }

    pub(crate) fn raw(&self, user: usize) -> &[usize] {
        &self.levels[user]
    }

    pub(crate) fn expand(problem: &AllocationProblem, state: &[UserLevels]) -> Self {
        let grid = problem.grid();
        let mut rv = RateVector::bottom(grid, state.len());
        for ((m, s), out) in problem.model.iter().zip(state).zip(rv.levels.iter_mut()) {
            for t in &m.viewport {
                out[grid.index_of(t.tile)] = s.viewport;
            }
            for (t, &l) in m.marginal.iter().zip(&s.marginal) {
                out[grid.index_of(t.tile)] = l;
            }
        }
        rv
    }

    /// Reads the collapsed state, checking the within-user structure the
    /// objective relies on: levels on the ladder, one shared viewport level
    /// and marginal levels not above it.
    pub(crate) fn collapse(&self, problem: &AllocationProblem) -> Result<Vec<UserLevels>> {
        if self.grid != problem.grid() || self.users() != problem.users().len() {
            return Err(Error::invalid(
                "rate vector shape does not match the problem",
            ));
        }
        let top = problem.levels();
        let mut out = Vec::with_capacity(self.users());
        for (k, m) in problem.model.iter().enumerate() {
            let raw = self.raw(k);
            if let Some(&l) = raw.iter().find(|&&l| l >= top) {
                return Err(Error::invalid(format!(
                    "user {k}: ladder index {} above {top}",
                    l + 1
                )));
            }
            let v = raw[self.grid.index_of(m.viewport[0].tile)];
            if m.viewport
                .iter()
                .any(|t| raw[self.grid.index_of(t.tile)] != v)
            {
                return Err(Error::invalid(format!(
                    "user {k}: viewport tiles at different rates"
                )));
            }
            let marginal: Vec<usize> = m
                .marginal
                .iter()
                .map(|t| raw[self.grid.index_of(t.tile)])
                .collect();
            if marginal.iter().any(|&l| l > v) {
                return Err(Error::invalid(format!(
                    "user {k}: marginal tile above the viewport rate"
                )));
            }
            out.push(UserLevels {
                viewport: v,
                marginal,
            });
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct RateVectorRepr {
    grid: TileGrid,
    /// 1-based, `[user][row][col]`.
    indices: Vec<Vec<Vec<usize>>>,
}

impl Serialize for RateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RateVectorRepr {
            grid: self.grid,
            indices: self.index_grid(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = RateVectorRepr::deserialize(d)?;
        let flat = repr
            .indices
            .into_iter()
            .map(|rows| rows.into_iter().flatten().collect())
            .collect();
        RateVector::from_indices(repr.grid, flat).map_err(serde::de::Error::custom)
    }
}

/// Per-user summary of an allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOutcome {
    pub id: usize,
    /// 1-based ladder index of the viewport group.
    pub viewport_index: usize,
    /// Number of marginal tiles at each 1-based index, position 0 for index 1.
    pub marginal_histogram: Vec<usize>,
    pub instability: f64,
    /// Visibility-weighted spherical MSE over the visible tiles.
    pub expected_mse: f64,
    pub expected_wspsnr: f64,
    /// This user's term of the objective; the terms sum to it.
    pub objective_share: f64,
    pub consumed_visible: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Proposed,
    ProposedNoInit,
    Baseline,
    Greedy,
    GlobalSearch,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::ProposedNoInit => "proposed_no_init",
            Algorithm::Baseline => "baseline",
            Algorithm::Greedy => "greedy",
            Algorithm::GlobalSearch => "global_search",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "proposed" => Algorithm::Proposed,
            "proposed_no_init" => Algorithm::ProposedNoInit,
            "baseline" => Algorithm::Baseline,
            "greedy" => Algorithm::Greedy,
            "global_search" | "global" => Algorithm::GlobalSearch,
            other => return Err(Error::invalid(format!("unknown algorithm {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub algorithm: Algorithm,
    pub rates: RateVector,
    pub objective: f64,
    /// Visible tiles only, all users.
    pub consumed_visible: f64,
    /// Every tile, all users.
    pub consumed_total: f64,
    pub users: Vec<UserOutcome>,
    /// Accepted steps for iterative solvers, evaluated vectors for search.
    pub iterations: usize,
}

impl AllocationResult {
    pub fn mean_wspsnr(&self) -> f64 {
        self.users.iter().map(|u| u.expected_wspsnr).sum::<f64>() / self.users.len() as f64
    }

    pub fn mean_instability(&self) -> f64 {
        self.users.iter().map(|u| u.instability).sum::<f64>() / self.users.len() as f64
    }
}
