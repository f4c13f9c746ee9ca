//! Note embedding matrices.
//!
//! Binary layout (little endian): `b"EMB1"`, `u32 n`, `u32 dim`, then
//! `n * dim` `f32` values row by row. Patient ids live in a sidecar text
//! file next to it (`<path>.ids`, one id per line). A CSV alternative has
//! one row per patient: the id followed by `dim` values, with an optional
//! header line.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::from_flat(ids, dim, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(ids: Vec<String>, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != ids.len() * dim {
            return Err(Error::IdMisalignment(format!(
                "{} ids but {} values at width {dim}",
                ids.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::IdMisalignment(format!("duplicate id `{dup}`")));
        }
        Ok(EmbeddingMatrix { ids, dim, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Rows for `ids`, in that order, as an `f64` matrix.
    pub fn select(&self, ids: &[&str]) -> Result<Array2<f64>> {
        let index: BTreeMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut out = Array2::zeros((ids.len(), self.dim));
        for (r, id) in ids.iter().enumerate() {
            let i = *index
                .get(id)
                .ok_or_else(|| Error::IdMisalignment(format!("no embedding for `{id}`")))?;
            for (o, v) in out.row_mut(r).iter_mut().zip(self.row(i)) {
                *o = f64::from(*v);
            }
        }
        Ok(out)
    }

    /// Rows by position.
    pub fn rows_f64(&self, positions: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((positions.len(), self.dim));
        for (r, &i) in positions.iter().enumerate() {
            for (o, v) in out.row_mut(r).iter_mut().zip(self.row(i)) {
                *o = f64::from(*v);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], ids: Vec<String>) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not an EMB1 embedding file".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = &bytes[12..];
        if body.len() != n * dim * 4 {
            return Err(Error::Format(format!(
                "header says {n}x{dim} but the body holds {} bytes",
                body.len()
            )));
        }
        if ids.len() != n {
            return Err(Error::IdMisalignment(format!(
                "{n} embedding rows but {} ids",
                ids.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::from_flat(ids, dim, values)
    }

    /// Writes the binary matrix and its id sidecar.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        let mut ids = BufWriter::new(fs::File::create(sidecar_path(path))?);
        for id in &self.ids {
            writeln!(ids, "{id}")?;
        }
        ids.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let sidecar = sidecar_path(path);
        let ids = fs::read_to_string(&sidecar).map_err(|e| {
            Error::Format(format!("cannot read id list {}: {e}", sidecar.display()))
        })?;
        let ids = ids
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        Self::from_bytes(&bytes, ids)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim).map(|j| format!("e{j}")));
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)?;
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f32>, _> = rec
                .iter()
                .skip(1)
                .map(|v| v.trim().parse::<f32>())
                .collect();
            match parsed {
                Ok(values) => {
                    ids.push(rec.get(0).unwrap_or_default().to_string());
                    rows.push(values);
                }
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(Error::Format(format!(
                        "embedding csv line {}: {e}",
                        line + 1
                    )))
                }
            }
        }
        Self::new(ids, rows)
    }

    /// Binary when the file starts with the magic bytes, CSV otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let head = {
            use std::io::Read;
            let mut buf = [0u8; 4];
            let mut f = fs::File::open(path)?;
            let read = f.read(&mut buf)?;
            buf[..read].to_vec()
        };
        if head == MAGIC {
            Self::read_binary(path)
        } else {
            Self::read_csv(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, -2.5, 0.125], vec![3.0, 0.0, 1e-7]],
        )
        .unwrap()
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let m = sample();
        m.write_binary(&path).unwrap();
        assert_eq!(EmbeddingMatrix::load(&path).unwrap(), m);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(bytes.len(), 12 + 6 * 4);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let m = sample();
        m.write_csv(&path).unwrap();
        assert_eq!(EmbeddingMatrix::load(&path).unwrap(), m);
    }

    #[test]
    fn misaligned_ids_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes, vec!["a".into()]),
            Err(Error::IdMisalignment(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(vec!["a".into(), "a".into()], vec![vec![1.0], vec![2.0]]),
            Err(Error::IdMisalignment(_))
        ));
    }

    #[test]
    fn select_by_id() {
        let m = sample();
        let x = m.select(&["b", "a"]).unwrap();
        assert_eq!(x[[0, 0]], 3.0);
        assert_eq!(x[[1, 1]], -2.5);
        assert!(m.select(&["c"]).is_err());
    }
}
