//! Head-movement traces sampled at 10 Hz.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ViewAngles;

pub const SAMPLE_RATE_HZ: f64 = 10.0;
pub const SAMPLE_PERIOD: f64 = 1.0 / SAMPLE_RATE_HZ;

/// One viewer's viewpoint over time, one sample every 0.1 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTrace {
    samples: Vec<ViewAngles>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    t: f64,
    pitch: f64,
    yaw: f64,
    roll: f64,
}

impl HeadTrace {
    pub fn new(samples: Vec<ViewAngles>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("head trace has no samples"));
        }
        Ok(HeadTrace { samples })
    }

    pub fn samples(&self) -> &[ViewAngles] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * SAMPLE_PERIOD
    }

    /// Reads `t,pitch,yaw,roll` CSV. Timestamps must be spaced 0.1 s apart;
    /// roll is read and discarded.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "pitch", "yaw", "roll"] {
            return Err(Error::invalid(format!(
                "trace header must be t,pitch,yaw,roll, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        let mut prev: Option<f64> = None;
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            if let Some(p) = prev {
                if ((row.t - p) - SAMPLE_PERIOD).abs() > 1e-6 {
                    return Err(Error::invalid(format!(
                        "row {}: sample spacing {:.6} s, expected 0.1 s",
                        i + 1,
                        row.t - p
                    )));
                }
            }
            prev = Some(row.t);
            samples.push(ViewAngles::canonical(row.pitch, row.yaw)?);
        }
        HeadTrace::new(samples)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        HeadTrace::from_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "pitch", "yaw", "roll"])?;
        for (i, s) in self.samples.iter().enumerate() {
            w.write_record([
                format!("{:.1}", i as f64 * SAMPLE_PERIOD),
                format!("{}", s.pitch()),
                format!("{}", s.yaw()),
                "0".to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv(std::fs::File::create(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = HeadTrace::new(vec![
            ViewAngles::new(10.0, -170.5).unwrap(),
            ViewAngles::new(-3.25, 179.0).unwrap(),
            ViewAngles::new(0.0, 0.0).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,pitch,yaw,roll\n0.0,10,-170.5,0\n"));
        assert_eq!(HeadTrace::from_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn rejects_bad_spacing_and_headers() {
        let uneven = "t,pitch,yaw,roll\n0.0,0,0,0\n0.1,0,0,0\n0.3,0,0,0\n";
        assert!(HeadTrace::from_csv(uneven.as_bytes()).is_err());
        let header = "time,pitch,yaw,roll\n0.0,0,0,0\n";
        assert!(HeadTrace::from_csv(header.as_bytes()).is_err());
        let wrapped = "t,pitch,yaw,roll\n0.0,95,370,4\n";
        let t = HeadTrace::from_csv(wrapped.as_bytes()).unwrap();
        assert_eq!((t.samples()[0].pitch(), t.samples()[0].yaw()), (90.0, 10.0));
    }
}
