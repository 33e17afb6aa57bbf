//! Artifact files: dense binary matrices with JSON sidecars, JSON and CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::collision::CollisionOperators;
use crate::error::{Error, Result};

/// Writes `a` as two little-endian `u64` dimensions followed by the entries
/// in row-major order as little-endian `f64`.
pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&(a.ncols() as u64).to_le_bytes())?;
    for v in a.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows.checked_mul(cols).ok_or_else(|| Error::InvalidArgument("matrix header overflows".into()))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    if r.read(&mut word)? != 0 {
        return Err(Error::InvalidArgument(format!("trailing bytes after {rows}x{cols} matrix")));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMetadata {
    pub gamma: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    pub n: usize,
    pub nu0: f64,
    #[serde(rename = "D")]
    pub cutoff_d: f64,
    pub c0_hat: f64,
    pub dof: usize,
    pub matrices: Vec<String>,
}

/// Exports every operator matrix plus `operators.json` into `dir`.
pub fn export_operators(ops: &CollisionOperators, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mats: [(&str, &Array2<f64>); 7] = [
        ("lambda_tilde", &ops.lambda_tilde),
        ("k_tilde", &ops.k_tilde),
        ("k_singular", &ops.k_singular),
        ("k_regular", &ops.k_regular),
        ("lambda", &ops.lambda_mod),
        ("k", &ops.k_mod),
        ("l", &ops.l_full),
    ];
    let mut written = Vec::new();
    for (name, m) in mats {
        let p = dir.join(format!("{name}.bin"));
        write_matrix(&p, m)?;
        written.push(p);
    }
    let spec = ops.grid.spec;
    let meta = OperatorMetadata {
        gamma: spec.gamma,
        radius: spec.radius,
        n: spec.n_per_axis,
        nu0: ops.nu0,
        cutoff_d: spec.cutoff_d,
        c0_hat: ops.c0_hat,
        dof: ops.dof(),
        matrices: mats.iter().map(|(n, _)| format!("{n}.bin")).collect(),
    };
    let p = dir.join("operators.json");
    write_json(&p, &meta)?;
    written.push(p);
    Ok(written)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let a = Array2::from_shape_fn((2, 3), |(i, j)| (10 * i + j) as f64 + 0.5);
        write_matrix(&p, &a).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        // row-major: second entry is (0, 1)
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 1.5);
        assert_eq!(read_matrix(&p).unwrap(), a);
    }

    #[test]
    fn truncated_matrix_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        write_matrix(&p, &Array2::<f64>::zeros((3, 3))).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(read_matrix(&p).is_err());
    }
}
