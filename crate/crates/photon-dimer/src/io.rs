//! File formats: CSV dumps, binary lattice maps with JSON sidecars, the
//! PTAG1 time-tag container, and JSON tables with complex numbers encoded
//! as [re, im] pairs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::Path;

use crate::boundstate::BoundStateSolution;
use crate::harness::{TagStreams, TimeTagRecord};
use crate::params::ns_to_ps;
use crate::pulse::SampledWaveform;
use crate::twophoton::TwoPhotonWavefunction;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad tag file: {0}")]
    TagFormat(String),
}

/// A complex number on disk, always the two-element array [re, im].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComplexPair(pub f64, pub f64);

impl From<Complex64> for ComplexPair {
    fn from(z: Complex64) -> Self {
        ComplexPair(z.re, z.im)
    }
}

impl From<ComplexPair> for Complex64 {
    fn from(p: ComplexPair) -> Self {
        Complex64::new(p.0, p.1)
    }
}

/// Write a generic CSV table: a header line and one row per record.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    Ok(())
}

/// Waveform dump: t_ps, re, im, abs2.
pub fn write_waveform_csv(path: &Path, w: &SampledWaveform) -> Result<(), IoError> {
    let rows: Vec<Vec<f64>> = w
        .grid
        .points()
        .zip(&w.amps)
        .map(|(t, a)| vec![ns_to_ps(t), a.re, a.im, a.norm_sqr()])
        .collect();
    write_csv(path, "t_ps,re,im,abs2", &rows)
}

/// Grid metadata stored next to a binary lattice dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSidecar {
    pub n_points: usize,
    pub spacing_ps: f64,
    pub origin_ps: f64,
    /// What the f64 lattice holds (e.g. "abs2").
    pub quantity: String,
}

/// Row-major little-endian f64 dump of |psi2|^2 plus a JSON sidecar at
/// `<path>.json`.
pub fn write_map_binary(path: &Path, psi: &TwoPhotonWavefunction) -> Result<(), IoError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    for v in &psi.psi {
        f.write_all(&v.norm_sqr().to_le_bytes())?;
    }
    drop(f);
    let sidecar = MapSidecar {
        n_points: psi.grid.n_points,
        spacing_ps: ns_to_ps(psi.grid.spacing),
        origin_ps: ns_to_ps(psi.grid.origin),
        quantity: "abs2".into(),
    };
    write_json(&path.with_extension("json"), &sidecar)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// One bound-state solution as stored in JSON tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub e_total: f64,
    pub delta1: ComplexPair,
    pub delta2: ComplexPair,
    pub c_over_a: ComplexPair,
    pub norm: f64,
    pub lambda: ComplexPair,
    pub residual: f64,
}

impl From<&BoundStateSolution> for BoundRow {
    fn from(s: &BoundStateSolution) -> Self {
        BoundRow {
            e_total: s.e_total,
            delta1: s.delta1.into(),
            delta2: s.delta2.into(),
            c_over_a: s.c_coeff.into(),
            norm: s.norm,
            lambda: s.lambda.into(),
            residual: s.residual,
        }
    }
}

const TAG_MAGIC: &[u8; 5] = b"PTAG1";

/// Serialize both channels into the PTAG1 container: the magic, the pulse
/// period (u64 le), then records [u8 channel][u64 le timestamp_ps] merged
/// across channels in timestamp order.
pub fn write_tags(path: &Path, tags: &TagStreams) -> Result<(), IoError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    f.write_all(TAG_MAGIC)?;
    f.write_all(&tags.period_ps.to_le_bytes())?;
    let (mut i, mut j) = (0usize, 0usize);
    let (a, b) = (&tags.channel1, &tags.channel2);
    let put = |f: &mut BufWriter<std::fs::File>, t: &TimeTagRecord| -> Result<(), IoError> {
        f.write_all(&[t.channel])?;
        f.write_all(&t.timestamp_ps.to_le_bytes())?;
        Ok(())
    };
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len()
            || (i < a.len() && a[i].timestamp_ps <= b[j].timestamp_ps);
        if take_a {
            put(&mut f, &a[i])?;
            i += 1;
        } else {
            put(&mut f, &b[j])?;
            j += 1;
        }
    }
    Ok(())
}

pub fn read_tags(path: &Path) -> Result<TagStreams, IoError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 5];
    f.read_exact(&mut magic)
        .map_err(|_| IoError::TagFormat("truncated header".into()))?;
    if &magic != TAG_MAGIC {
        return Err(IoError::TagFormat(format!("bad magic {magic:?}")));
    }
    let mut buf8 = [0u8; 8];
    f.read_exact(&mut buf8)
        .map_err(|_| IoError::TagFormat("missing period".into()))?;
    let period_ps = u64::from_le_bytes(buf8);
    let mut channel1 = Vec::new();
    let mut channel2 = Vec::new();
    loop {
        let mut ch = [0u8; 1];
        match f.read_exact(&mut ch) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        f.read_exact(&mut buf8)
            .map_err(|_| IoError::TagFormat("truncated record".into()))?;
        let rec = TimeTagRecord {
            channel: ch[0],
            timestamp_ps: u64::from_le_bytes(buf8),
        };
        match rec.channel {
            0 => channel1.push(rec),
            1 => channel2.push(rec),
            c => return Err(IoError::TagFormat(format!("unknown channel {c}"))),
        }
    }
    Ok(TagStreams {
        period_ps,
        channel1,
        channel2,
    })
}

/// Everything needed to reproduce a CLI run, minus wall-clock time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub crate_version: String,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub grid_points: usize,
    pub threads: usize,
}

/// Count the data lines (excluding the header) of a CSV written by this
/// module; used by smoke tests.
pub fn csv_data_lines(path: &Path) -> Result<usize, IoError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(f.lines().skip(1).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulse::{self, Grid1D, PulseSpec};

    #[test]
    fn waveform_csv_round_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let spec = PulseSpec::new(0.1, 0.0, 0.01);
        let grid = Grid1D::centered(64, 2.0);
        let w = pulse::make_gaussian(&spec, &grid).unwrap();
        let path = dir.path().join("wave.csv");
        write_waveform_csv(&path, &w).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t_ps,re,im,abs2");
        assert_eq!(csv_data_lines(&path).unwrap(), 64);
        let first: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert!((first[0] - ns_to_ps(grid.origin)).abs() < 1e-9);
        assert!((first[3] - (first[1] * first[1] + first[2] * first[2])).abs() < 1e-15);
    }

    #[test]
    fn map_binary_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid1D::centered(16, 1.6);
        let psi: Vec<Complex64> = (0..256)
            .map(|i| Complex64::new(i as f64, -0.5 * i as f64))
            .collect();
        let map = TwoPhotonWavefunction { grid, psi };
        let path = dir.path().join("g2.f64");
        write_map_binary(&path, &map).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 256 * 8);
        let v7 = f64::from_le_bytes(bytes[7 * 8..8 * 8].try_into().unwrap());
        assert_eq!(v7, map.psi[7].norm_sqr());
        let sidecar: MapSidecar = read_json(&path.with_extension("json")).unwrap();
        assert_eq!(sidecar.n_points, 16);
        assert!((sidecar.spacing_ps - 100.0).abs() < 1e-9);
        assert_eq!(sidecar.quantity, "abs2");
    }

    #[test]
    fn tags_round_trip_and_magic() {
        let dir = tempfile::tempdir().unwrap();
        let tags = TagStreams {
            period_ps: 4000,
            channel1: vec![
                TimeTagRecord { channel: 0, timestamp_ps: 120 },
                TimeTagRecord { channel: 0, timestamp_ps: 4500 },
            ],
            channel2: vec![TimeTagRecord { channel: 1, timestamp_ps: 130 }],
        };
        let path = dir.path().join("run.ptag");
        write_tags(&path, &tags).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"PTAG1");
        // merged record order: 120 (ch0), 130 (ch1), 4500 (ch0)
        assert_eq!(bytes[13], 0);
        assert_eq!(bytes[22], 1);
        let back = read_tags(&path).unwrap();
        assert_eq!(back, tags);
    }

    #[test]
    fn bad_tag_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ptag");
        std::fs::write(&path, b"NOTTAGS\x00\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_tags(&path), Err(IoError::TagFormat(_))));
    }

    #[test]
    fn complex_pairs_serialize_as_arrays() {
        let row = BoundRow {
            e_total: 1.5,
            delta1: Complex64::new(0.25, 19.0).into(),
            delta2: Complex64::new(0.0, 44.0).into(),
            c_over_a: Complex64::new(-0.4, 0.1).into(),
            norm: 2.0,
            lambda: Complex64::new(-1.0, 0.0).into(),
            residual: 1e-13,
        };
        let text = serde_json::to_string(&row).unwrap();
        assert!(text.contains("\"delta1\":[0.25,19.0]"), "{text}");
        let back: BoundRow = serde_json::from_str(&text).unwrap();
        let z: Complex64 = back.delta1.into();
        assert_eq!(z, Complex64::new(0.25, 19.0));
    }
}
