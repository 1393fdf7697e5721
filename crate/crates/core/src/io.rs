//! File formats: allocation problems, trace directories and error samples.

use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::allocator::{AllocationProblem, UserSession};
use crate::error::{Error, Result};
use crate::error_model::{ErrorSamples, LaplaceParams};
use crate::geometry::{viewport_bounds, Fov, Tile, TileGrid, TileSet, ViewAngles};
use crate::predictor::trace::HeadTrace;
use crate::ratedist::{RateLadder, RdMap};
use crate::visibility::{classify_tiles, TileClassification};

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(value: &T, writer: impl Write) -> Result<()> {
    let mut w = writer;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePair {
    pub pitch: f64,
    pub yaw: f64,
}

/// One marginal tile with its visibility probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalTile {
    pub tile: (usize, usize),
    pub probability: f64,
}

/// A user given either by a predicted viewpoint and error model, or by
/// explicit tile sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    /// kbps.
    pub capacity: f64,
    #[serde(default)]
    pub rd: RdMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewpoint: Option<ViewAngles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplacePair>,
    /// `(row, col)`, 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viewport: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal: Option<Vec<MarginalTile>>,
}

fn default_grid() -> TileGrid {
    TileGrid::new(8, 8).expect("8x8 grid")
}

fn default_threshold() -> f64 {
    0.05
}

/// Input of the `allocate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default = "default_grid")]
    pub grid: TileGrid,
    #[serde(default)]
    pub fov: Fov,
    #[serde(default = "RateLadder::standard")]
    pub ladder: RateLadder,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub omega: f64,
    /// kbps.
    pub server_capacity: f64,
    pub users: Vec<UserSpec>,
}

fn tile_set(grid: TileGrid, tiles: impl IntoIterator<Item = (usize, usize)>) -> Result<TileSet> {
    let mut set = TileSet::empty(grid);
    for (r, c) in tiles {
        if !set.insert(Tile::new(r, c))? {
            return Err(Error::invalid(format!("tile ({r}, {c}) listed twice")));
        }
    }
    Ok(set)
}

impl ProblemFile {
    fn classify(&self, k: usize, u: &UserSpec) -> Result<TileClassification> {
        let grid = self.grid;
        match (&u.viewpoint, &u.laplace, &u.viewport, &u.marginal) {
            (Some(vp), Some(l), None, None) => {
                let bounds = viewport_bounds(*vp, self.fov);
                classify_tiles(grid, &bounds, LaplaceParams::new(l.pitch)?, LaplaceParams::new(l.yaw)?, self.threshold)
            }
            (None, None, Some(v), m) => {
                let m = m.as_deref().unwrap_or_default();
                let viewport = tile_set(grid, v.iter().copied())?;
                let marginal = tile_set(grid, m.iter().map(|t| t.tile))?;
                let mut probs = vec![0.0; grid.len()];
                for t in viewport.iter() {
                    probs[grid.index_of(t)] = 1.0;
                }
                for t in m {
                    probs[grid.index_of(Tile::new(t.tile.0, t.tile.1))] = t.probability;
                }
                TileClassification::from_parts(grid, viewport, marginal, probs, self.threshold)
            }
            _ => Err(Error::invalid(format!(
                "user {k}: give either viewpoint and laplace, or viewport (and optional marginal) tiles"
            ))),
        }
    }

    pub fn into_problem(&self) -> Result<AllocationProblem> {
        TileGrid::new(self.grid.rows(), self.grid.cols())?;
        Fov::new(self.fov.horizontal(), self.fov.vertical())?;
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| {
                Ok(UserSession {
                    id: k,
                    classification: self.classify(k, u)?,
                    capacity: u.capacity,
                    rd: u.rd.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        AllocationProblem::new(users, self.server_capacity, self.ladder.clone(), self.omega)
    }
}

/// Reads one trace file, or every `.csv` file of a directory in file-name
/// order.
pub fn read_traces(paths: &[PathBuf]) -> Result<Vec<HeadTrace>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "csv"));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::invalid("no trace files found"));
    }
    files
        .iter()
        .map(|f| {
            HeadTrace::read_csv(f).map_err(|e| Error::invalid(format!("{}: {e}", f.display())))
        })
        .collect()
}

/// Writes `user_000.csv`, `user_001.csv`, ... into `dir`.
pub fn write_traces(traces: &[HeadTrace], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    traces
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let path = dir.join(format!("user_{k:03}.csv"));
            t.write_csv(&path)?;
            Ok(path)
        })
        .collect()
}

/// One signed error in degrees per line.
pub fn write_errors<W: Write>(samples: &ErrorSamples, writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    for e in samples.values() {
        writeln!(w, "{e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one value per line. Blank lines, `#` comments and a non-numeric
/// first line (a header) are skipped.
pub fn read_errors<R: Read>(reader: R) -> Result<ErrorSamples> {
    let mut v = Vec::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let field = line.trim().trim_end_matches(',');
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(x) => v.push(x),
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(Error::invalid(format!(
                    "line {}: {field:?} is not a number",
                    i + 1
                )))
            }
        }
    }
    ErrorSamples::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_from_viewpoint_and_from_tiles() {
        let json = r#"{
            "server_capacity": 5000,
            "users": [
                {"capacity": 1500, "viewpoint": {"pitch": 0, "yaw": 0}, "laplace": {"pitch": 5, "yaw": 10}},
                {"capacity": 1500, "viewport": [[4, 4], [4, 5]], "marginal": [{"tile": [4, 6], "probability": 0.3}]}
            ]
        }"#;
        let f: ProblemFile = serde_json::from_str(json).unwrap();
        let p = f.into_problem().unwrap();
        assert_eq!(p.users()[0].classification.viewport_tiles.len(), 20);
        let c = &p.users()[1].classification;
        assert_eq!((c.viewport_tiles.len(), c.marginal_tiles.len()), (2, 1));
        assert_eq!(c.probability(Tile::new(4, 6)), 0.3);
    }

    #[test]
    fn ambiguous_users_are_rejected() {
        let json = r#"{"server_capacity": 1, "users": [{"capacity": 1, "viewpoint": {"pitch": 0, "yaw": 0}}]}"#;
        let f: ProblemFile = serde_json::from_str(json).unwrap();
        assert!(f.into_problem().is_err());
        let dup =
            r#"{"server_capacity": 9, "users": [{"capacity": 9, "viewport": [[1, 1], [1, 1]]}]}"#;
        assert!(serde_json::from_str::<ProblemFile>(dup)
            .unwrap()
            .into_problem()
            .is_err());
    }

    #[test]
    fn trace_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = HeadTrace::new(vec![ViewAngles::new(1.0, 2.0).unwrap(); 12]).unwrap();
        write_traces(&[t.clone(), t.clone()], dir.path()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let back = read_traces(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(back, vec![t.clone(), t]);
    }

    #[test]
    fn error_file_round_trip() {
        let y = ErrorSamples::new(vec![3.25, 0.0, -7.0, 1e-3]).unwrap();
        let mut buf = Vec::new();
        write_errors(&y, &mut buf).unwrap();
        assert_eq!(read_errors(&buf[..]).unwrap().values(), y.values());
        let text = "error\n1.5\n\n# note\n-2\n";
        assert_eq!(read_errors(text.as_bytes()).unwrap().values(), &[1.5, -2.0]);
        assert!(read_errors("1\nx\n".as_bytes()).is_err());
    }
}
