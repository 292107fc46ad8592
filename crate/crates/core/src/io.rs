//! On-disk formats. Matrices are a JSON header next to a row-major data file,
//! either little-endian `f64` or CSV. Functional samples are single-column
//! CSV, reports are JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, GroupAction};
use crate::kernels::{IndexSpace, Kernel};
use crate::sampler::PathEnsemble;

/// Matrices with more entries than this default to binary.
pub const BINARY_THRESHOLD: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    /// Row-major little-endian `f64`.
    F64le,
    /// One matrix row per line.
    Csv,
}

impl MatrixFormat {
    pub fn default_for(entries: usize) -> Self {
        if entries > BINARY_THRESHOLD {
            Self::F64le
        } else {
            Self::Csv
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Self::F64le => "bin",
            Self::Csv => "csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub mul: Vec<usize>,
    pub inv: Vec<usize>,
    pub identity: usize,
    /// `perm[g][i]`, one row per group element.
    pub perm: Vec<Vec<usize>>,
}

impl ActionRecord {
    pub fn new(a: &GroupAction) -> Self {
        Self {
            mul: a.group().mul_table().to_vec(),
            inv: a.group().inv_table().to_vec(),
            identity: a.group().identity(),
            perm: a.perm().to_vec(),
        }
    }

    pub fn decode(&self) -> Result<GroupAction> {
        let g = FiniteGroup::from_tables(self.mul.clone(), self.inv.clone(), self.identity)?;
        GroupAction::new(g, self.perm.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceRecord {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionRecord>,
}

impl SpaceRecord {
    pub fn new(space: &IndexSpace) -> Self {
        Self {
            points: space.points().to_vec(),
            weights: space.weights().to_vec(),
            action: space.action().map(ActionRecord::new),
        }
    }

    pub fn decode(&self) -> Result<IndexSpace> {
        let action = self.action.as_ref().map(ActionRecord::decode).transpose()?;
        IndexSpace::new(self.points.clone(), self.weights.clone(), action)
    }
}

/// Header of a stored matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub kind: String,
    pub rows: usize,
    pub cols: usize,
    pub format: MatrixFormat,
    /// Data file name, relative to the header.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization_rank: Option<usize>,
}

fn data_path(header: &Path, name: &str) -> PathBuf {
    header.parent().map_or_else(|| PathBuf::from(name), |p| p.join(name))
}

/// Writes `rows × cols` values given in row-major order.
fn write_data(path: &Path, format: MatrixFormat, cols: usize, row_major: impl Iterator<Item = f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::F64le => {
            for x in row_major {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        MatrixFormat::Csv => {
            for (k, x) in row_major.enumerate() {
                let sep = if (k + 1) % cols.max(1) == 0 { "\n" } else { "," };
                // `{:?}` prints the shortest representation that round-trips.
                write!(w, "{x:?}{sep}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_data(path: &Path, format: MatrixFormat, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let n = rows * cols;
    let out = match format {
        MatrixFormat::F64le => {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            if bytes.len() != 8 * n {
                return Err(Error::DimensionMismatch {
                    what: "binary matrix bytes",
                    expected: 8 * n,
                    found: bytes.len(),
                });
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
        MatrixFormat::Csv => {
            let mut out = Vec::with_capacity(n);
            for (line_no, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                for field in line.split(',') {
                    out.push(field.trim().parse::<f64>().map_err(|e| {
                        Error::InvalidArgument(format!("{}:{}: {e}", path.display(), line_no + 1))
                    })?);
                }
            }
            out
        }
    };
    if out.len() != n {
        return Err(Error::DimensionMismatch {
            what: "matrix entries",
            expected: n,
            found: out.len(),
        });
    }
    Ok(out)
}

fn write_header(path: &Path, h: &MatrixHeader) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, h)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_header(path: &Path, kind: &str) -> Result<MatrixHeader> {
    let h: MatrixHeader = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if h.kind != kind {
        return Err(Error::InvalidArgument(format!("expected a {kind} header, found {}", h.kind)));
    }
    Ok(h)
}

/// Writes `<stem>.json` and `<stem>.bin` or `<stem>.csv`; `format = None`
/// picks by size. Returns the header path.
pub fn write_kernel(k: &Kernel, stem: &Path, format: Option<MatrixFormat>) -> Result<PathBuf> {
    let m = k.len();
    let format = format.unwrap_or(MatrixFormat::default_for(m * m));
    let header = stem.with_extension("json");
    let data = stem.with_extension(format.extension());
    // Symmetric, so column-major storage is also the row-major order.
    write_data(&data, format, m, k.matrix().iter().copied())?;
    write_header(
        &header,
        &MatrixHeader {
            kind: "kernel".into(),
            rows: m,
            cols: m,
            format,
            data: file_name(&data),
            space: Some(SpaceRecord::new(k.space())),
            seed: None,
            factorization_rank: None,
        },
    )?;
    Ok(header)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads a kernel written by [`write_kernel`]; symmetry and PSD are rechecked.
pub fn read_kernel(header: &Path) -> Result<Kernel> {
    let h = read_header(header, "kernel")?;
    let space = h
        .space
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("kernel header has no space".into()))?
        .decode()?;
    let v = read_data(&data_path(header, &h.data), h.format, h.rows, h.cols)?;
    Kernel::new(Arc::new(space), DMatrix::from_row_slice(h.rows, h.cols, &v))
}

/// Writes the ensemble as `S × m` row-major `f64` (one path per row).
pub fn write_ensemble(e: &PathEnsemble, stem: &Path) -> Result<PathBuf> {
    let header = stem.with_extension("json");
    let data = stem.with_extension("bin");
    // Column s of the m × S matrix is path s, so column-major memory is the
    // row-major S × m layout.
    write_data(&data, MatrixFormat::F64le, e.samples.nrows(), e.samples.iter().copied())?;
    write_header(
        &header,
        &MatrixHeader {
            kind: "ensemble".into(),
            rows: e.len(),
            cols: e.samples.nrows(),
            format: MatrixFormat::F64le,
            data: file_name(&data),
            space: Some(SpaceRecord::new(&e.space)),
            seed: Some(e.seed),
            factorization_rank: Some(e.factorization_rank),
        },
    )?;
    Ok(header)
}

pub fn read_ensemble(header: &Path) -> Result<PathEnsemble> {
    let h = read_header(header, "ensemble")?;
    let space = h
        .space
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("ensemble header has no space".into()))?
        .decode()?;
    let v = read_data(&data_path(header, &h.data), h.format, h.rows, h.cols)?;
    Ok(PathEnsemble {
        space: Arc::new(space),
        samples: DMatrix::from_vec(h.cols, h.rows, v),
        seed: h.seed.unwrap_or(0),
        factorization_rank: h.factorization_rank.unwrap_or(0),
    })
}

/// Single-column CSV with a header line.
pub fn write_functional_csv(values: &[f64], name: &str, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{name}")?;
    for x in values {
        writeln!(w, "{x:?}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_functional_csv(path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(line.trim().parse().map_err(|e| {
            Error::InvalidArgument(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BuiltinKernel;
    use crate::sampler::sample;

    fn watson(n: usize) -> Kernel {
        Kernel::builtin(BuiltinKernel::Watson, Arc::new(IndexSpace::interval_with_reversal(n).unwrap())).unwrap()
    }

    #[test]
    fn default_format_switches_at_threshold() {
        assert_eq!(MatrixFormat::default_for(1_000_000), MatrixFormat::Csv);
        assert_eq!(MatrixFormat::default_for(1_000_001), MatrixFormat::F64le);
    }

    #[test]
    fn kernel_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let k = watson(12);
        for f in [MatrixFormat::F64le, MatrixFormat::Csv] {
            let h = write_kernel(&k, &dir.path().join(format!("k_{f:?}")), Some(f)).unwrap();
            let back = read_kernel(&h).unwrap();
            assert_eq!(back.matrix(), k.matrix());
            assert_eq!(back.space().weights(), k.space().weights());
            assert_eq!(back.space().action(), k.space().action());
        }
    }

    #[test]
    fn ensemble_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = sample(&watson(8), 5, 3).unwrap();
        let h = write_ensemble(&e, &dir.path().join("ens")).unwrap();
        let bytes = std::fs::read(dir.path().join("ens.bin")).unwrap();
        // First row is path 0.
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), e.path(0)[1]);
        let back = read_ensemble(&h).unwrap();
        assert_eq!(back.samples, e.samples);
        assert_eq!(back.seed, 3);
    }

    #[test]
    fn functional_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let v = vec![0.1, 1.0 / 3.0, -2.5e-300];
        write_functional_csv(&v, "value", &p).unwrap();
        assert_eq!(read_functional_csv(&p).unwrap(), v);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_kernel(&watson(4), &dir.path().join("k"), Some(MatrixFormat::F64le)).unwrap();
        std::fs::write(dir.path().join("k.bin"), [0u8; 16]).unwrap();
        assert!(matches!(read_kernel(&h), Err(Error::DimensionMismatch { .. })));
    }
}
