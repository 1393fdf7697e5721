//! Tile visibility probabilities under the Laplace error model and the
//! viewport / marginal / invisible classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::{laplace_interval_probability, LaplaceParams};
use crate::geometry::{viewport_tile_region, wrap_deg, Tile, TileGrid, TileSet, ViewportBounds};

/// Edges of one equirectangular tile, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileBounds {
    pub lat_upper: f64,
    pub lat_lower: f64,
    pub lon_left: f64,
    pub lon_right: f64,
}

pub fn tile_bounds(m: usize, n: usize, grid: TileGrid) -> Result<TileBounds> {
    if !grid.contains(Tile::new(m, n)) {
        return Err(Error::invalid(format!(
            "tile ({m}, {n}) outside {}x{} grid",
            grid.rows(),
            grid.cols()
        )));
    }
    let dlat = 180.0 / grid.rows() as f64;
    let dlon = 360.0 / grid.cols() as f64;
    Ok(TileBounds {
        lat_upper: 90.0 - (m - 1) as f64 * dlat,
        lat_lower: 90.0 - m as f64 * dlat,
        lon_left: -180.0 + (n - 1) as f64 * dlon,
        lon_right: -180.0 + n as f64 * dlon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileVisibility {
    pub p_total: f64,
    pub p_lat: f64,
    pub p_lon: f64,
}

/// Interval of pitch error that makes the tile overlap the shifted viewport.
/// `None` when no error within `[-90, 90]` does.
pub fn latitude_error_interval(tile: &TileBounds, bounds: &ViewportBounds) -> Option<(f64, f64)> {
    let lo = (tile.lat_lower - bounds.lat_north).max(-90.0);
    let hi = (tile.lat_upper - bounds.lat_south).min(90.0);
    (lo <= hi).then_some((lo, hi))
}

/// Arcs of yaw error, within `[-180, 180]`, that make the tile overlap the
/// shifted viewport. One arc normally, two when the admissible range wraps.
pub fn longitude_error_arcs(tile: &TileBounds, bounds: &ViewportBounds) -> Vec<(f64, f64)> {
    let length = (tile.lon_right - tile.lon_left) + bounds.longitude_span();
    if bounds.full_longitude_span() || length >= 360.0 {
        return vec![(-180.0, 180.0)];
    }
    let lo = wrap_deg(tile.lon_left - bounds.lon_east);
    let hi = lo + length;
    if hi <= 180.0 {
        vec![(lo, hi)]
    } else {
        vec![(lo, 180.0), (-180.0, hi - 360.0)]
    }
}

pub fn tile_visibility(
    tile: &TileBounds,
    bounds: &ViewportBounds,
    lat_err: LaplaceParams,
    lon_err: LaplaceParams,
) -> TileVisibility {
    let p_lat = match latitude_error_interval(tile, bounds) {
        Some((a, b)) => laplace_interval_probability(lat_err, a, b).expect("ordered interval"),
        None => 0.0,
    };
    let arcs = longitude_error_arcs(tile, bounds);
    let p_lon = if arcs == [(-180.0, 180.0)] {
        1.0
    } else {
        arcs.iter()
            .map(|&(a, b)| laplace_interval_probability(lon_err, a, b).expect("ordered arc"))
            .sum::<f64>()
            .min(1.0)
    };
    TileVisibility {
        p_total: p_lat * p_lon,
        p_lat,
        p_lon,
    }
}

/// Partition of the grid for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileClassification {
    pub grid: TileGrid,
    pub viewport_tiles: TileSet,
    pub marginal_tiles: TileSet,
    pub invisible_tiles: TileSet,
    /// Row-major, one entry per tile.
    pub probabilities: Vec<TileVisibility>,
    pub threshold: f64,
}

impl TileClassification {
    pub fn probability(&self, tile: Tile) -> f64 {
        self.probabilities[self.grid.index_of(tile)].p_total
    }

    /// Builds a classification from explicit sets and probabilities,
    /// validating the partition. The supplied probability is stored as the
    /// latitude factor with a unit longitude factor.
    pub fn from_parts(
        grid: TileGrid,
        viewport_tiles: TileSet,
        marginal_tiles: TileSet,
        probabilities: Vec<f64>,
        threshold: f64,
    ) -> Result<Self> {
        if probabilities.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} probabilities, got {}",
                grid.len(),
                probabilities.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        if viewport_tiles.grid() != grid || marginal_tiles.grid() != grid {
            return Err(Error::invalid("tile sets belong to a different grid"));
        }
        if viewport_tiles.iter().any(|t| marginal_tiles.contains(t)) {
            return Err(Error::invalid("viewport and marginal sets overlap"));
        }
        let mut invisible = TileSet::empty(grid);
        for t in grid.tiles() {
            if !viewport_tiles.contains(t) && !marginal_tiles.contains(t) {
                invisible.insert(t)?;
            }
        }
        Ok(TileClassification {
            grid,
            viewport_tiles,
            marginal_tiles,
            invisible_tiles: invisible,
            probabilities: probabilities
                .into_iter()
                .map(|p| TileVisibility {
                    p_total: p,
                    p_lat: p,
                    p_lon: 1.0,
                })
                .collect(),
            threshold,
        })
    }
}

pub fn classify_tiles(
    grid: TileGrid,
    bounds: &ViewportBounds,
    lat_err: LaplaceParams,
    lon_err: LaplaceParams,
    threshold: f64,
) -> Result<TileClassification> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    let viewport_tiles = viewport_tile_region(bounds, grid);
    let mut marginal_tiles = TileSet::empty(grid);
    let mut invisible_tiles = TileSet::empty(grid);
    let mut probabilities = Vec::with_capacity(grid.len());
    for tile in grid.tiles() {
        let tb = tile_bounds(tile.row, tile.col, grid)?;
        let vis = tile_visibility(&tb, bounds, lat_err, lon_err);
        probabilities.push(vis);
        if viewport_tiles.contains(tile) {
            continue;
        }
        if vis.p_total >= threshold {
            marginal_tiles.insert(tile)?;
        } else {
            invisible_tiles.insert(tile)?;
        }
    }
    Ok(TileClassification {
        grid,
        viewport_tiles,
        marginal_tiles,
        invisible_tiles,
        probabilities,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{viewport_bounds, Fov, ViewAngles};
    use proptest::prelude::*;

    fn grid() -> TileGrid {
        TileGrid::new(8, 8).unwrap()
    }

    fn lap(l: f64) -> LaplaceParams {
        LaplaceParams::new(l).unwrap()
    }

    fn equator_bounds() -> ViewportBounds {
        viewport_bounds(ViewAngles::new(0.0, 0.0).unwrap(), Fov::default())
    }

    #[test]
    fn tile_bounds_examples() {
        let b = tile_bounds(1, 1, grid()).unwrap();
        assert_eq!(
            (b.lat_upper, b.lat_lower, b.lon_left, b.lon_right),
            (90.0, 67.5, -180.0, -135.0)
        );
        let b = tile_bounds(8, 8, grid()).unwrap();
        assert_eq!(
            (b.lat_upper, b.lat_lower, b.lon_left, b.lon_right),
            (-67.5, -90.0, 135.0, 180.0)
        );
        let b = tile_bounds(4, 5, grid()).unwrap();
        assert_eq!(
            (b.lat_upper, b.lat_lower, b.lon_left, b.lon_right),
            (22.5, 0.0, 0.0, 45.0)
        );
        assert!(tile_bounds(0, 1, grid()).is_err());
        assert!(tile_bounds(1, 9, grid()).is_err());
    }

    #[test]
    fn inside_tile_is_likely() {
        let b = equator_bounds();
        let t = tile_bounds(4, 5, grid()).unwrap();
        assert!(tile_visibility(&t, &b, lap(5.0), lap(5.0)).p_total >= 0.95);
    }

    #[test]
    fn edge_tile_is_half() {
        let b = ViewportBounds::from_extremes(60.0, -60.0, -45.0, 45.0, false, false).unwrap();
        let t = tile_bounds(4, 6, grid()).unwrap();
        assert_eq!(t.lon_left, b.lon_east);
        let v = tile_visibility(&t, &b, lap(5.0), lap(5.0));
        assert!(v.p_lat > 1.0 - 1e-5);
        assert!((v.p_lon - 0.5).abs() < 1e-6, "{}", v.p_lon);
        assert!((v.p_total - 0.5).abs() < 1e-5);
    }

    #[test]
    fn far_tile_is_negligible() {
        let b = ViewportBounds::from_extremes(45.0, -45.0, -45.0, 45.0, false, false).unwrap();
        // left edge 90 degrees east of the viewport
        let t = tile_bounds(4, 8, TileGrid::new(8, 8).unwrap()).unwrap();
        assert_eq!(t.lon_left - b.lon_east, 90.0);
        let v = tile_visibility(&t, &b, lap(5.0), lap(5.0));
        assert!(v.p_total < 1e-7, "{}", v.p_total);
    }

    #[test]
    fn wrapped_arc_reaches_across_antimeridian() {
        let b = viewport_bounds(ViewAngles::new(0.0, 170.0).unwrap(), Fov::default());
        // column 2 is [-135, -90]; its left edge equals the east bound
        let t = tile_bounds(4, 2, grid()).unwrap();
        let v = tile_visibility(&t, &b, lap(5.0), lap(5.0));
        assert!((v.p_lon - 0.5).abs() < 1e-6);
        // column 6 is [45, 90]; 25 degrees short of the west bound at 115
        let t = tile_bounds(4, 6, grid()).unwrap();
        let v = tile_visibility(&t, &b, lap(5.0), lap(5.0));
        assert!((v.p_lon - 0.5 * (-5.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn pole_viewport_sees_every_longitude() {
        let b = viewport_bounds(ViewAngles::new(90.0, 0.0).unwrap(), Fov::default());
        let t = tile_bounds(1, 3, grid()).unwrap();
        assert_eq!(tile_visibility(&t, &b, lap(5.0), lap(5.0)).p_lon, 1.0);
    }

    #[test]
    fn equator_classification() {
        let c = classify_tiles(grid(), &equator_bounds(), lap(5.0), lap(5.0), 0.05).unwrap();
        assert_eq!(c.viewport_tiles.len(), 20);
        assert_eq!(c.viewport_tiles.rows(), (2..=6).collect());
        assert_eq!(c.viewport_tiles.cols(), (3..=6).collect());
        for t in c.marginal_tiles.iter() {
            assert!((1..=7).contains(&t.row) && (2..=7).contains(&t.col));
            assert!(c.probability(t) >= 0.05);
        }
        for t in c.invisible_tiles.iter() {
            assert!(c.probability(t) < 0.05);
        }
        assert!(c.invisible_tiles.contains(Tile::new(4, 1)));
        assert!(c.invisible_tiles.contains(Tile::new(4, 8)));
        assert_eq!(
            c.viewport_tiles.len() + c.marginal_tiles.len() + c.invisible_tiles.len(),
            64
        );

        let tight =
            classify_tiles(grid(), &equator_bounds(), lap(5.0), lap(5.0), 1.0 - 1e-12).unwrap();
        assert!(tight.marginal_tiles.is_empty());
        let loose = classify_tiles(grid(), &equator_bounds(), lap(5.0), lap(5.0), 1e-300).unwrap();
        assert_eq!(loose.marginal_tiles.len(), 44);
        assert!(classify_tiles(grid(), &equator_bounds(), lap(5.0), lap(5.0), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_threshold_monotone(
            pitch in -90.0f64..=90.0, yaw in -180.0f64..=180.0,
            l1 in 1.0f64..30.0, l2 in 1.0f64..30.0,
            a1 in 0.001f64..0.999, a2 in 0.001f64..0.999,
        ) {
            let b = viewport_bounds(ViewAngles::new(pitch, yaw).unwrap(), Fov::default());
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let c1 = classify_tiles(grid(), &b, lap(l1), lap(l2), lo).unwrap();
            let c2 = classify_tiles(grid(), &b, lap(l1), lap(l2), hi).unwrap();
            prop_assert_eq!(c1.viewport_tiles.len() + c1.marginal_tiles.len() + c1.invisible_tiles.len(), 64);
            prop_assert!(c2.marginal_tiles.is_subset(&c1.marginal_tiles));
            for v in &c1.probabilities {
                prop_assert!((0.0..=1.0).contains(&v.p_total));
                prop_assert!((v.p_total - v.p_lat * v.p_lon).abs() < 1e-15);
            }
        }

        #[test]
        fn viewport_row_dominates(pitch in -40.0f64..=40.0, yaw in -180.0f64..=180.0, l in 1.0f64..20.0) {
            let b = viewport_bounds(ViewAngles::new(pitch, yaw).unwrap(), Fov::default());
            let c = classify_tiles(grid(), &b, lap(l), lap(l), 0.05).unwrap();
            for row in c.viewport_tiles.rows() {
                let inside = (1..=8).filter(|&n| c.viewport_tiles.contains(Tile::new(row, n)))
                    .map(|n| c.probability(Tile::new(row, n))).fold(f64::INFINITY, f64::min);
                let outside = (1..=8).filter(|&n| !c.viewport_tiles.contains(Tile::new(row, n)))
                    .map(|n| c.probability(Tile::new(row, n))).fold(0.0, f64::max);
                prop_assert!(inside >= outside - 1e-12);
            }
        }

        #[test]
        fn longitude_decay(yaw in -180.0f64..=180.0, l in 1.0f64..20.0) {
            let b = viewport_bounds(ViewAngles::new(0.0, yaw).unwrap(), Fov::default());
            let g = TileGrid::new(8, 36).unwrap();
            // walk east from the viewport's east edge
            let start = crate::geometry::tile_of_point(0.0, b.lon_east, g).col;
            let mut prev = f64::INFINITY;
            for step in 1..11 {
                let col = (start - 1 + step) % 36 + 1;
                let t = tile_bounds(4, col, g).unwrap();
                let p = tile_visibility(&t, &b, lap(l), lap(l)).p_lon;
                prop_assert!(p <= prev + 1e-12);
                prev = p;
            }
        }
    }
}
