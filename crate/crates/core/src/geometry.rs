//! Spherical viewport to equirectangular tile mapping.
//!
//! Latitudes are degrees in `[-90, 90]` (north positive), longitudes are
//! degrees in `[-180, 180]` (east positive). Everything is computed on the
//! unit sphere; the radius cancels in every boundary formula.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A viewpoint on the sphere. Roll is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAngles")]
pub struct ViewAngles {
    pitch: f64,
    yaw: f64,
}

#[derive(Deserialize)]
struct RawAngles {
    pitch: f64,
    yaw: f64,
}

impl TryFrom<RawAngles> for ViewAngles {
    type Error = Error;

    fn try_from(r: RawAngles) -> Result<Self> {
        ViewAngles::new(r.pitch, r.yaw)
    }
}

impl ViewAngles {
    pub fn new(pitch: f64, yaw: f64) -> Result<Self> {
        if !pitch.is_finite() || !(-90.0..=90.0).contains(&pitch) {
            return Err(Error::invalid(format!("pitch {pitch} outside [-90, 90]")));
        }
        if !yaw.is_finite() || !(-180.0..=180.0).contains(&yaw) {
            return Err(Error::invalid(format!("yaw {yaw} outside [-180, 180]")));
        }
        Ok(ViewAngles { pitch, yaw })
    }

    /// Builds a viewpoint from arbitrary finite angles, clamping pitch and
    /// wrapping yaw into their canonical ranges.
    pub fn canonical(pitch: f64, yaw: f64) -> Result<Self> {
        if !pitch.is_finite() {
            return Err(Error::invalid("non-finite pitch"));
        }
        ViewAngles::new(pitch.clamp(-90.0, 90.0), wrap_longitude(yaw)?)
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn roll(&self) -> f64 {
        0.0
    }
}

/// Horizontal and vertical field of view of the headset, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFov")]
pub struct Fov {
    horizontal: f64,
    vertical: f64,
}

#[derive(Deserialize)]
struct RawFov {
    horizontal: f64,
    vertical: f64,
}

impl TryFrom<RawFov> for Fov {
    type Error = Error;

    fn try_from(r: RawFov) -> Result<Self> {
        Fov::new(r.horizontal, r.vertical)
    }
}

impl Fov {
    pub fn new(horizontal: f64, vertical: f64) -> Result<Self> {
        for (name, v) in [("horizontal", horizontal), ("vertical", vertical)] {
            if !v.is_finite() || v <= 0.0 || v >= 180.0 {
                return Err(Error::invalid(format!("{name} FoV {v} outside (0, 180)")));
            }
        }
        Ok(Fov {
            horizontal,
            vertical,
        })
    }

    pub fn horizontal(&self) -> f64 {
        self.horizontal
    }

    pub fn vertical(&self) -> f64 {
        self.vertical
    }

    fn half_tangents(&self) -> (f64, f64) {
        (
            (self.horizontal / 2.0).to_radians().tan(),
            (self.vertical / 2.0).to_radians().tan(),
        )
    }
}

impl Default for Fov {
    fn default() -> Self {
        Fov {
            horizontal: 110.0,
            vertical: 90.0,
        }
    }
}

/// An `rows x cols` equirectangular tiling. Row 1 is northernmost, column 1
/// westernmost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct TileGrid {
    rows: usize,
    cols: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    rows: usize,
    cols: usize,
}

impl TryFrom<RawGrid> for TileGrid {
    type Error = Error;

    fn try_from(r: RawGrid) -> Result<Self> {
        TileGrid::new(r.rows, r.cols)
    }
}

impl TileGrid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "tile grid {rows}x{cols} must be non-empty"
            )));
        }
        Ok(TileGrid { rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major position of a tile.
    pub fn index_of(&self, tile: Tile) -> usize {
        (tile.row - 1) * self.cols + (tile.col - 1)
    }

    pub fn tile_at(&self, index: usize) -> Tile {
        Tile {
            row: index / self.cols + 1,
            col: index % self.cols + 1,
        }
    }

    pub fn contains(&self, tile: Tile) -> bool {
        (1..=self.rows).contains(&tile.row) && (1..=self.cols).contains(&tile.col)
    }

    /// All tiles in row-major order.
    pub fn tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.len()).map(|i| self.tile_at(i))
    }
}

impl Default for TileGrid {
    fn default() -> Self {
        TileGrid { rows: 8, cols: 8 }
    }
}

/// A tile position, 1-based. Ordering is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
}

impl Tile {
    pub fn new(row: usize, col: usize) -> Self {
        Tile { row, col }
    }
}

/// Bounding box of a spherical viewport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportBounds {
    pub lat_north: f64,
    pub lat_south: f64,
    pub lon_west: f64,
    pub lon_east: f64,
    pub covers_north_pole: bool,
    pub covers_south_pole: bool,
    pub wraps_antimeridian: bool,
}

impl ViewportBounds {
    /// Bounding box from explicit extremes. The wrap flag is derived; a pole
    /// flag forces the corresponding latitude to the pole and the longitude
    /// span to the full circle.
    pub fn from_extremes(
        lat_north: f64,
        lat_south: f64,
        lon_west: f64,
        lon_east: f64,
        covers_north_pole: bool,
        covers_south_pole: bool,
    ) -> Result<Self> {
        let finite = [lat_north, lat_south, lon_west, lon_east]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite viewport bound"));
        }
        if lat_south > lat_north || lat_north > 90.0 || lat_south < -90.0 {
            return Err(Error::invalid(format!(
                "latitude bounds [{lat_south}, {lat_north}] not ordered within [-90, 90]"
            )));
        }
        let lon_west = wrap_longitude(lon_west)?;
        let lon_east = wrap_longitude(lon_east)?;
        let mut b = ViewportBounds {
            lat_north,
            lat_south,
            lon_west,
            lon_east,
            covers_north_pole,
            covers_south_pole,
            wraps_antimeridian: lon_west > lon_east,
        };
        if covers_north_pole {
            b.lat_north = 90.0;
        }
        if covers_south_pole {
            b.lat_south = -90.0;
        }
        if covers_north_pole || covers_south_pole {
            b.lon_west = -180.0;
            b.lon_east = 180.0;
            b.wraps_antimeridian = false;
        }
        Ok(b)
    }

    /// True when the viewport spans every longitude.
    pub fn full_longitude_span(&self) -> bool {
        self.covers_north_pole || self.covers_south_pole
    }

    /// Longitude extent in degrees, accounting for the antimeridian.
    pub fn longitude_span(&self) -> f64 {
        if self.full_longitude_span() {
            360.0
        } else if self.wraps_antimeridian {
            self.lon_east - self.lon_west + 360.0
        } else {
            self.lon_east - self.lon_west
        }
    }

    /// Whether a point lies inside the box, wrap-aware, with a tolerance in degrees.
    pub fn contains_point(&self, lat: f64, lon: f64, tol: f64) -> bool {
        if lat > self.lat_north + tol || lat < self.lat_south - tol {
            return false;
        }
        if self.full_longitude_span() {
            return true;
        }
        let offset = wrap_deg(lon - self.lon_west);
        let offset = if offset < -tol {
            offset + 360.0
        } else {
            offset
        };
        offset <= self.longitude_span() + tol
    }
}

/// A set of tiles of one grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileSet {
    grid: TileGrid,
    members: BTreeSet<Tile>,
}

impl TileSet {
    pub fn empty(grid: TileGrid) -> Self {
        TileSet {
            grid,
            members: BTreeSet::new(),
        }
    }

    pub fn from_tiles(grid: TileGrid, tiles: impl IntoIterator<Item = Tile>) -> Result<Self> {
        let mut set = TileSet::empty(grid);
        for t in tiles {
            set.insert(t)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, tile: Tile) -> Result<bool> {
        if !self.grid.contains(tile) {
            return Err(Error::invalid(format!(
                "tile ({}, {}) outside {}x{} grid",
                tile.row, tile.col, self.grid.rows, self.grid.cols
            )));
        }
        Ok(self.members.insert(tile))
    }

    pub fn grid(&self) -> TileGrid {
        self.grid
    }

    pub fn contains(&self, tile: Tile) -> bool {
        self.members.contains(&tile)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = Tile> + '_ {
        self.members.iter().copied()
    }

    pub fn is_subset(&self, other: &TileSet) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn rows(&self) -> BTreeSet<usize> {
        self.members.iter().map(|t| t.row).collect()
    }

    pub fn cols(&self) -> BTreeSet<usize> {
        self.members.iter().map(|t| t.col).collect()
    }
}

/// Folds a longitude into `[-180, 180]`.
pub fn wrap_longitude(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!(
            "cannot wrap non-finite longitude {x}"
        )));
    }
    Ok(wrap_deg(x))
}

pub(crate) fn wrap_deg(x: f64) -> f64 {
    let mut x = x;
    if !(-540.0..=540.0).contains(&x) {
        x %= 360.0;
    }
    while x < -180.0 {
        x += 360.0;
    }
    while x > 180.0 {
        x -= 360.0;
    }
    x
}

/// Half of the viewport's longitude extent for a viewpoint at `pitch`.
/// Returns 180 when the viewport covers the nearer pole.
pub fn half_longitude_span(pitch: f64, fov: Fov) -> f64 {
    // southern hemisphere by north-south mirror
    let theta = pitch.abs().to_radians();
    let (tan_h, tan_v) = fov.half_tangents();
    let numerator = theta.cos() - tan_v * theta.sin();
    if numerator < 0.0 {
        return 180.0;
    }
    90.0 - (numerator / tan_h).atan().to_degrees()
}

/// Latitude of the southernmost viewport point.
pub fn southmost_latitude(pitch: f64, fov: Fov) -> f64 {
    let half_v = fov.vertical / 2.0;
    if pitch <= half_v - 90.0 {
        -90.0
    } else if pitch <= half_v {
        pitch - half_v
    } else {
        // lower corner of the image plane
        let theta = pitch.to_radians();
        let (tan_h, tan_v) = fov.half_tangents();
        let rise = theta.sin() - tan_v * theta.cos();
        let run = (theta.cos() + tan_v * theta.sin()).hypot(tan_h);
        (rise / run).atan().to_degrees()
    }
}

/// Latitude of the northernmost viewport point; the exact mirror of
/// [`southmost_latitude`].
pub fn northmost_latitude(pitch: f64, fov: Fov) -> f64 {
    -southmost_latitude(-pitch, fov)
}

/// Bounding box of the viewport seen from `viewpoint`.
pub fn viewport_bounds(viewpoint: ViewAngles, fov: Fov) -> ViewportBounds {
    let pitch = viewpoint.pitch();
    let half = half_longitude_span(pitch, fov);
    let pole = half >= 180.0;
    let covers_north_pole = pole && pitch > 0.0;
    let covers_south_pole = pole && pitch < 0.0;
    let lat_north = northmost_latitude(pitch, fov);
    let lat_south = southmost_latitude(pitch, fov);
    let yaw = viewpoint.yaw();
    ViewportBounds::from_extremes(
        lat_north,
        lat_south,
        wrap_deg(yaw - half),
        wrap_deg(yaw + half),
        covers_north_pole,
        covers_south_pole,
    )
    .expect("analytic bounds are finite and ordered")
}

fn ceil_index(value: f64) -> i64 {
    let nearest = value.round();
    if (value - nearest).abs() < 1e-9 {
        nearest as i64
    } else {
        value.ceil() as i64
    }
}

fn row_of_latitude(lat: f64, rows: usize) -> usize {
    let m = rows as f64;
    ceil_index(m - m * (lat + 90.0) / 180.0).clamp(1, rows as i64) as usize
}

fn col_of_longitude(lon: f64, cols: usize) -> usize {
    let n = cols as f64;
    ceil_index(n * (lon + 180.0) / 360.0).clamp(1, cols as i64) as usize
}

/// Tiles covering the viewport bounding box.
///
/// Boundary values use the literal ceiling of the row/column formula, so a
/// bound sitting exactly on a tile edge includes the tile on the near side
/// of the edge only. A wrapped longitude range is split at the antimeridian,
/// and a covered pole pulls in every column down to the other latitude bound.
pub fn viewport_tile_region(bounds: &ViewportBounds, grid: TileGrid) -> TileSet {
    let first_row = if bounds.covers_north_pole {
        1
    } else {
        row_of_latitude(bounds.lat_north, grid.rows)
    };
    let last_row = if bounds.covers_south_pole {
        grid.rows
    } else {
        row_of_latitude(bounds.lat_south, grid.rows)
    };
    let cols: Vec<usize> = if bounds.full_longitude_span() {
        (1..=grid.cols).collect()
    } else {
        let west = col_of_longitude(bounds.lon_west, grid.cols);
        let east = col_of_longitude(bounds.lon_east, grid.cols);
        if bounds.wraps_antimeridian {
            (west..=grid.cols).chain(1..=east).collect()
        } else {
            (west..=east).collect()
        }
    };
    let mut set = TileSet::empty(grid);
    for row in first_row..=last_row {
        for &col in &cols {
            set.members.insert(Tile { row, col });
        }
    }
    set
}

/// The tile containing a sphere point, using the same ceiling convention.
pub fn tile_of_point(lat: f64, lon: f64, grid: TileGrid) -> Tile {
    Tile {
        row: row_of_latitude(lat, grid.rows),
        col: col_of_longitude(lon, grid.cols),
    }
}

/// A sampled viewport point: position on the image plane and on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewportSample {
    /// Horizontal image-plane coordinate, in units of the sphere radius.
    pub plane_x: f64,
    /// Vertical image-plane coordinate (up positive).
    pub plane_y: f64,
    pub lat: f64,
    pub lon: f64,
}

/// Central projection of the tangent image plane onto the sphere.
struct ImagePlane {
    forward: [f64; 3],
    east: [f64; 3],
    up: [f64; 3],
    half_w: f64,
    half_h: f64,
}

impl ImagePlane {
    fn new(viewpoint: ViewAngles, fov: Fov) -> Self {
        let (st, ct) = viewpoint.pitch().to_radians().sin_cos();
        let (sp, cp) = viewpoint.yaw().to_radians().sin_cos();
        let (half_w, half_h) = fov.half_tangents();
        ImagePlane {
            forward: [ct * cp, ct * sp, st],
            east: [-sp, cp, 0.0],
            up: [-st * cp, -st * sp, ct],
            half_w,
            half_h,
        }
    }

    fn project(&self, x: f64, y: f64) -> ViewportSample {
        let d: [f64; 3] =
            std::array::from_fn(|i| self.forward[i] + x * self.east[i] + y * self.up[i]);
        ViewportSample {
            plane_x: x,
            plane_y: y,
            lat: d[2].atan2(d[0].hypot(d[1])).to_degrees(),
            lon: d[1].atan2(d[0]).to_degrees(),
        }
    }

    /// Whether the pole in direction `z_sign` projects inside the image rectangle.
    fn contains_pole(&self, z_sign: f64) -> bool {
        let depth = z_sign * self.forward[2];
        if depth <= 0.0 {
            return false;
        }
        let x = z_sign * self.east[2] / depth;
        let y = z_sign * self.up[2] / depth;
        x.abs() <= self.half_w && y.abs() <= self.half_h
    }

    fn coord(half: f64, i: usize, n: usize) -> f64 {
        -half + 2.0 * half * i as f64 / (n - 1) as f64
    }
}

/// Every point of a uniform `samples_per_axis^2` grid on the image plane,
/// projected onto the sphere.
pub fn sample_viewport(
    viewpoint: ViewAngles,
    fov: Fov,
    samples_per_axis: usize,
) -> Result<Vec<ViewportSample>> {
    if samples_per_axis < 2 {
        return Err(Error::invalid("need at least 2 samples per axis"));
    }
    let plane = ImagePlane::new(viewpoint, fov);
    let n = samples_per_axis;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        let y = ImagePlane::coord(plane.half_h, j, n);
        for i in 0..n {
            out.push(plane.project(ImagePlane::coord(plane.half_w, i, n), y));
        }
    }
    Ok(out)
}

/// Extreme samples found by the sampling oracle.
#[derive(Debug, Clone, Copy)]
pub struct SampledExtremes {
    pub bounds: ViewportBounds,
    pub westernmost: ViewportSample,
    pub easternmost: ViewportSample,
    pub northernmost: ViewportSample,
    pub southernmost: ViewportSample,
}

/// Sampling oracle for [`viewport_bounds`].
///
/// Latitude and longitude have no critical points on the sphere away from
/// the poles, so the extremes of the projected rectangle lie on its
/// perimeter; only the perimeter of the sample grid is visited. Pole
/// coverage is decided by projecting the pole onto the image plane.
pub fn monte_carlo_extremes(
    viewpoint: ViewAngles,
    fov: Fov,
    samples_per_axis: usize,
) -> Result<SampledExtremes> {
    if samples_per_axis < 2 {
        return Err(Error::invalid("need at least 2 samples per axis"));
    }
    let plane = ImagePlane::new(viewpoint, fov);
    let n = samples_per_axis;
    let yaw = viewpoint.yaw();

    let first = plane.project(-plane.half_w, -plane.half_h);
    let mut west = first;
    let mut east = first;
    let mut north = first;
    let mut south = first;
    let mut west_off = wrap_deg(first.lon - yaw);
    let mut east_off = west_off;

    let mut visit = |s: ViewportSample| {
        let off = wrap_deg(s.lon - yaw);
        if off < west_off {
            west_off = off;
            west = s;
        }
        if off > east_off {
            east_off = off;
            east = s;
        }
        if s.lat > north.lat {
            north = s;
        }
        if s.lat < south.lat {
            south = s;
        }
    };
    for i in 0..n {
        let x = ImagePlane::coord(plane.half_w, i, n);
        visit(plane.project(x, -plane.half_h));
        visit(plane.project(x, plane.half_h));
        let y = ImagePlane::coord(plane.half_h, i, n);
        visit(plane.project(-plane.half_w, y));
        visit(plane.project(plane.half_w, y));
    }

    let covers_north_pole = plane.contains_pole(1.0);
    let covers_south_pole = plane.contains_pole(-1.0);
    let bounds = ViewportBounds::from_extremes(
        north.lat,
        south.lat,
        yaw + west_off,
        yaw + east_off,
        covers_north_pole,
        covers_south_pole,
    )?;
    Ok(SampledExtremes {
        bounds,
        westernmost: west,
        easternmost: east,
        northernmost: north,
        southernmost: south,
    })
}

/// Empirical viewport bounds from a sampled image plane.
pub fn monte_carlo_bounds(
    viewpoint: ViewAngles,
    fov: Fov,
    samples_per_axis: usize,
) -> Result<ViewportBounds> {
    monte_carlo_extremes(viewpoint, fov, samples_per_axis).map(|e| e.bounds)
}
