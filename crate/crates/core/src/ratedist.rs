//! Tile rate-distortion model, spherical tile weights and WS-PSNR.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Tile, TileGrid};

/// Strictly increasing per-tile encoding rates, kbps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RateLadder {
    rates: Vec<f64>,
}

impl RateLadder {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.len() < 2 {
            return Err(Error::invalid(format!(
                "rate ladder needs at least 2 levels, got {}",
                rates.len()
            )));
        }
        if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::invalid("ladder rates must be positive and finite"));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("ladder rates must be strictly increasing"));
        }
        Ok(RateLadder { rates })
    }

    /// The six-rate ladder {2, 4, 10, 20, 49, 120} kbps.
    pub fn standard() -> Self {
        RateLadder {
            rates: vec![2.0, 4.0, 10.0, 20.0, 49.0, 120.0],
        }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rate at 0-based level `level`.
    pub fn rate(&self, level: usize) -> f64 {
        self.rates[level]
    }

    pub fn lowest(&self) -> f64 {
        self.rates[0]
    }

    pub fn top_level(&self) -> usize {
        self.rates.len() - 1
    }

    /// Largest 0-based level whose rate does not exceed `value`, or `None`
    /// below the bottom rung.
    pub fn floor_level(&self, value: f64) -> Option<usize> {
        self.rates.iter().rposition(|&r| r <= value)
    }
}

impl TryFrom<Vec<f64>> for RateLadder {
    type Error = Error;

    fn try_from(rates: Vec<f64>) -> Result<Self> {
        RateLadder::new(rates)
    }
}

impl From<RateLadder> for Vec<f64> {
    fn from(l: RateLadder) -> Self {
        l.rates
    }
}

/// Parameters of `D(R) = sigma / (R - r0) + d0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdParams {
    pub sigma: f64,
    pub r0: f64,
    pub d0: f64,
}

impl RdParams {
    pub fn new(sigma: f64, r0: f64, d0: f64) -> Result<Self> {
        let p = RdParams { sigma, r0, d0 };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "sigma {} must be positive",
                self.sigma
            )));
        }
        if !self.r0.is_finite() {
            return Err(Error::invalid("r0 must be finite"));
        }
        if !(self.d0.is_finite() && self.d0 >= 0.0) {
            return Err(Error::invalid(format!(
                "d0 {} must be non-negative",
                self.d0
            )));
        }
        Ok(())
    }

    /// Checks that the model is finite over the whole ladder.
    pub fn validate_for(&self, ladder: &RateLadder) -> Result<()> {
        self.validate()?;
        if self.r0 >= ladder.lowest() {
            return Err(Error::invalid(format!(
                "r0 {} must lie below the lowest ladder rate {}",
                self.r0,
                ladder.lowest()
            )));
        }
        Ok(())
    }

    /// Distortion at a rate known to satisfy `rate > r0`.
    pub(crate) fn eval(&self, rate: f64) -> f64 {
        self.sigma / (rate - self.r0) + self.d0
    }
}

impl Default for RdParams {
    fn default() -> Self {
        RdParams {
            sigma: 800.0,
            r0: 0.5,
            d0: 3.0,
        }
    }
}

/// R-D parameters for every tile of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RdMap {
    Global { params: RdParams },
    PerRow { rows: Vec<RdParams> },
    PerTile { tiles: Vec<RdParams> },
}

impl RdMap {
    pub fn params(&self, tile: Tile, grid: TileGrid) -> RdParams {
        match self {
            RdMap::Global { params } => *params,
            RdMap::PerRow { rows } => rows[tile.row - 1],
            RdMap::PerTile { tiles } => tiles[grid.index_of(tile)],
        }
    }

    pub fn validate(&self, grid: TileGrid, ladder: &RateLadder) -> Result<()> {
        let all: &[RdParams] = match self {
            RdMap::Global { params } => std::slice::from_ref(params),
            RdMap::PerRow { rows } => {
                if rows.len() != grid.rows() {
                    return Err(Error::invalid(format!(
                        "per-row R-D map has {} rows, grid has {}",
                        rows.len(),
                        grid.rows()
                    )));
                }
                rows
            }
            RdMap::PerTile { tiles } => {
                if tiles.len() != grid.len() {
                    return Err(Error::invalid(format!(
                        "per-tile R-D map has {} entries, grid has {}",
                        tiles.len(),
                        grid.len()
                    )));
                }
                tiles
            }
        };
        all.iter().try_for_each(|p| p.validate_for(ladder))
    }

    /// Expands to one parameter set per tile, row-major.
    pub fn expand(&self, grid: TileGrid) -> Vec<RdParams> {
        grid.tiles().map(|t| self.params(t, grid)).collect()
    }
}

impl Default for RdMap {
    fn default() -> Self {
        RdMap::Global {
            params: RdParams::default(),
        }
    }
}

/// Spherical area of a tile on the unit sphere, in steradians.
pub fn tile_area(m: usize, n: usize, grid: TileGrid) -> Result<f64> {
    let b = crate::visibility::tile_bounds(m, n, grid)?;
    Ok(band_area(b.lat_upper, b.lat_lower, grid.cols()))
}

fn band_area(lat_upper: f64, lat_lower: f64, cols: usize) -> f64 {
    2.0 * PI / cols as f64 * (lat_upper.to_radians().sin() - lat_lower.to_radians().sin())
}

/// Spherical areas of every tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileWeightMap {
    grid: TileGrid,
    areas: Vec<f64>,
}

impl TileWeightMap {
    pub fn new(grid: TileGrid) -> Self {
        let areas = grid
            .tiles()
            .map(|t| tile_area(t.row, t.col, grid).expect("tile in grid"))
            .collect();
        TileWeightMap { grid, areas }
    }

    pub fn grid(&self) -> TileGrid {
        self.grid
    }

    pub fn area(&self, tile: Tile) -> f64 {
        self.areas[self.grid.index_of(tile)]
    }

    /// Row-major areas.
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total(&self) -> f64 {
        self.areas.iter().sum()
    }
}

pub fn distortion(params: RdParams, rate: f64) -> Result<f64> {
    if !rate.is_finite() || rate <= params.r0 {
        return Err(Error::invalid(format!(
            "rate {rate} must exceed the model pole r0 = {}",
            params.r0
        )));
    }
    Ok(params.eval(rate))
}

/// Peak-signal conversion for 8-bit content.
pub fn spherical_mse_to_wspsnr(weighted_mse: f64) -> Result<f64> {
    if !(weighted_mse.is_finite() && weighted_mse > 0.0) {
        return Err(Error::invalid(format!(
            "weighted MSE {weighted_mse} must be positive"
        )));
    }
    Ok(10.0 * (255.0f64 * 255.0 / weighted_mse).log10())
}

/// Least-squares fit of the R-D model to `(rate, mse)` samples.
///
/// Residuals are relative (`(D_i - model) / D_i`), so the small distortions
/// at high rates count as much as the large ones near the pole. The pole
/// offset `delta = R_min - r0` is searched on a log grid, with `(sigma, d0)`
/// solved in closed form for each candidate, then refined by golden section.
pub fn fit_rd(samples: &[(f64, f64)]) -> Result<RdParams> {
    if samples.len() < 4 {
        return Err(Error::FitInfeasible(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|(r, d)| !r.is_finite() || !d.is_finite() || *d <= 0.0)
    {
        return Err(Error::FitInfeasible(
            "samples must be finite with positive distortion".into(),
        ));
    }
    let mut pts = samples.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::FitInfeasible("sample rates must be distinct".into()));
    }
    if pts.windows(2).any(|w| w[1].1 >= w[0].1) {
        return Err(Error::FitInfeasible(
            "distortion must strictly decrease with rate".into(),
        ));
    }
    let r_min = pts[0].0;
    let span = pts[pts.len() - 1].0 - r_min;

    let eval = |log_delta: f64| -> Option<(f64, RdParams)> {
        let r0 = r_min - log_delta.exp();
        sub_fit(&pts, r0)
    };

    let lo = (span * 1e-7).ln();
    let hi = (span * 1e4).ln();
    let steps = 400;
    let mut best: Option<(f64, usize)> = None;
    let grid_at = |i: usize| lo + (hi - lo) * i as f64 / steps as f64;
    for i in 0..=steps {
        if let Some((sse, _)) = eval(grid_at(i)) {
            if best.is_none_or(|(b, _)| sse < b) {
                best = Some((sse, i));
            }
        }
    }
    let (_, i_best) =
        best.ok_or_else(|| Error::FitInfeasible("no admissible pole offset".into()))?;

    let cost = |x: f64| eval(x).map_or(f64::INFINITY, |(sse, _)| sse);
    let mut a = grid_at(i_best.saturating_sub(1));
    let mut b = grid_at((i_best + 1).min(steps));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
    }
    let x = 0.5 * (a + b);
    let candidates = [x, grid_at(i_best)];
    let (_, params) = candidates
        .iter()
        .filter_map(|&x| eval(x))
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .ok_or_else(|| Error::FitInfeasible("refinement failed".into()))?;
    Ok(params)
}

/// Weighted linear fit of `D = sigma * x + d0` with `x = 1 / (R - r0)` and
/// `d0 >= 0`. Returns the weighted SSE and the parameters.
fn sub_fit(pts: &[(f64, f64)], r0: f64) -> Option<(f64, RdParams)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(r, d) in pts {
        let w = 1.0 / (d * d);
        let x = 1.0 / (r - r0);
        sw += w;
        sx += w * x;
        sy += w * d;
        sxx += w * x * x;
        sxy += w * x * d;
    }
    let det = sw * sxx - sx * sx;
    let (mut sigma, mut d0) = if det > 0.0 {
        ((sw * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    } else {
        (f64::NAN, f64::NAN)
    };
    if d0.is_nan() || d0 < 0.0 {
        d0 = 0.0;
        sigma = sxy / sxx;
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return None;
    }
    let params = RdParams { sigma, r0, d0 };
    let sse = pts
        .iter()
        .map(|&(r, d)| {
            let e = (d - params.eval(r)) / d;
            e * e
        })
        .sum();
    Some((sse, params))
}
