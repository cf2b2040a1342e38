//! On-disk formats.
//!
//! Binary files share one layout: a 4-byte ASCII magic, a little-endian u32
//! format version (currently 1), a shape block of little-endian u64 values,
//! and a payload of little-endian f32 values in row-major order. Values are
//! f64 in memory and f32 on disk. Readers reject wrong magic, unknown
//! versions, short files, and trailing bytes.
//!
//! | magic  | contents                | shape block  | payload order            |
//! |--------|-------------------------|--------------|--------------------------|
//! | `SGVF` | feature matrix          | rows, cols   | row-major                |
//! | `SGVW` | class embeddings        | rows, cols   | row-major                |
//! | `SGVM` | attribute heads         | m, d, z      | per head: A (z x d), b   |
//! | `SGVC` | linear classifier       | c, d         | per class: w (d), bias   |
//!
//! Labels travel as CSV: one header row of class names, then one row per
//! sample of f64 values formatted with `Display` (shortest form that parses
//! back to the same bits).

use std::fs;
use std::path::Path;

use crate::classifier::MultiLabelClassifier;
use crate::data::{EmbeddingMatrix, LabelMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::val::AttributeProjector;

pub const MAGIC_FEATURES: &[u8; 4] = b"SGVF";
pub const MAGIC_EMBEDDINGS: &[u8; 4] = b"SGVW";
pub const MAGIC_ATTRIBUTE_MODEL: &[u8; 4] = b"SGVM";
pub const MAGIC_CLASSIFIER: &[u8; 4] = b"SGVC";

pub const FORMAT_VERSION: u32 = 1;

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| {
            Error::Malformed("declared size overflows".into())
        })?;
        if end > self.buf.len() {
            return Err(Error::Truncated { expected: end as u64, found: self.buf.len() as u64 });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32_le(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64_le(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn header(&mut self, expected_magic: &'static [u8; 4]) -> Result<()> {
        let m = self.bytes(4).map_err(|_| Error::Truncated {
            expected: 4,
            found: self.buf.len() as u64,
        })?;
        if m != expected_magic {
            return Err(Error::BadMagic {
                expected: std::str::from_utf8(expected_magic).unwrap(),
                found: [m[0], m[1], m[2], m[3]],
            });
        }
        let version = self.u32_le()?;
        if version != FORMAT_VERSION {
            return Err(Error::BadVersion { found: version });
        }
        Ok(())
    }

    /// Reads `count` f32 values as f64, insisting every one is finite.
    fn f32_payload(&mut self, count: u64) -> Result<Vec<f64>> {
        let need = count.checked_mul(4).ok_or_else(|| {
            Error::Malformed("payload size overflows".into())
        })?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if need > remaining {
            return Err(Error::Truncated {
                expected: self.pos as u64 + need,
                found: self.buf.len() as u64,
            });
        }
        let raw = self.bytes(need as usize)?;
        let mut out = Vec::with_capacity(count as usize);
        for (idx, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("payload value {idx}")));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn write_binary(
    path: &Path,
    magic: &[u8; 4],
    shape: &[u64],
    values: &[f64],
) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 4 + shape.len() * 8 + values.len() * 4);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for &s in shape {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for (idx, &v) in values.iter().enumerate() {
        let v32 = v as f32;
        if !v32.is_finite() {
            return Err(Error::NonFinite(format!("value {idx} cannot be stored as f32")));
        }
        buf.extend_from_slice(&v32.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

fn checked_extent(rows: u64, cols: u64) -> Result<u64> {
    rows.checked_mul(cols)
        .filter(|&n| n <= usize::MAX as u64)
        .ok_or_else(|| Error::Malformed("declared shape overflows".into()))
}

fn read_plain_matrix(path: &Path, magic: &'static [u8; 4]) -> Result<Matrix> {
    let buf = fs::read(path)?;
    let mut r = ByteReader::new(&buf);
    r.header(magic)?;
    let rows = r.u64_le()?;
    let cols = r.u64_le()?;
    let count = checked_extent(rows, cols)?;
    let data = r.f32_payload(count)?;
    r.finish()?;
    Matrix::from_vec(rows as usize, cols as usize, data)
}

pub fn write_features(path: &Path, features: &Matrix) -> Result<()> {
    write_binary(
        path,
        MAGIC_FEATURES,
        &[features.rows() as u64, features.cols() as u64],
        features.data(),
    )
}

pub fn read_features(path: &Path) -> Result<Matrix> {
    read_plain_matrix(path, MAGIC_FEATURES)
}

pub fn write_embeddings(path: &Path, embeddings: &EmbeddingMatrix) -> Result<()> {
    let m = embeddings.matrix();
    write_binary(
        path,
        MAGIC_EMBEDDINGS,
        &[m.rows() as u64, m.cols() as u64],
        m.data(),
    )
}

/// Rows are re-normalized on load; the f32 round-trip costs a few ulps of
/// unit length otherwise.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::new(read_plain_matrix(path, MAGIC_EMBEDDINGS)?)
}

pub fn write_attribute_model(path: &Path, model: &AttributeProjector) -> Result<()> {
    write_binary(
        path,
        MAGIC_ATTRIBUTE_MODEL,
        &[model.heads() as u64, model.feature_dim() as u64, model.embed_dim() as u64],
        model.params(),
    )
}

pub fn read_attribute_model(path: &Path) -> Result<AttributeProjector> {
    let buf = fs::read(path)?;
    let mut r = ByteReader::new(&buf);
    r.header(MAGIC_ATTRIBUTE_MODEL)?;
    let m = r.u64_le()?;
    let d = r.u64_le()?;
    let z = r.u64_le()?;
    let per_head = checked_extent(z, d.checked_add(1).ok_or_else(|| {
        Error::Malformed("declared shape overflows".into())
    })?)?;
    let count = checked_extent(m, per_head)?;
    let params = r.f32_payload(count)?;
    r.finish()?;
    AttributeProjector::from_params(m as usize, d as usize, z as usize, params)
}

pub fn write_classifier(path: &Path, clf: &MultiLabelClassifier) -> Result<()> {
    write_binary(
        path,
        MAGIC_CLASSIFIER,
        &[clf.n_classes() as u64, clf.feature_dim() as u64],
        clf.params(),
    )
}

pub fn read_classifier(path: &Path) -> Result<MultiLabelClassifier> {
    let buf = fs::read(path)?;
    let mut r = ByteReader::new(&buf);
    r.header(MAGIC_CLASSIFIER)?;
    let c = r.u64_le()?;
    let d = r.u64_le()?;
    let per_class = d.checked_add(1).ok_or_else(|| {
        Error::Malformed("declared shape overflows".into())
    })?;
    let count = checked_extent(c, per_class)?;
    let params = r.f32_payload(count)?;
    r.finish()?;
    MultiLabelClassifier::from_params(c as usize, d as usize, params)
}

pub fn write_labels_csv(path: &Path, labels: &LabelMatrix, class_names: &[String]) -> Result<()> {
    if class_names.len() != labels.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "{} class names vs {} label columns",
            class_names.len(),
            labels.n_classes()
        )));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(class_names)?;
    let mut record = Vec::with_capacity(class_names.len());
    for i in 0..labels.n_samples() {
        record.clear();
        record.extend(labels.row(i).iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Returns the labels plus the class names from the header. Kind is inferred:
/// binary when every value is exactly 0 or 1, soft otherwise.
pub fn read_labels_csv(path: &Path) -> Result<(LabelMatrix, Vec<String>)> {
    let mut r = csv::Reader::from_path(path)?;
    let class_names: Vec<String> =
        r.headers()?.iter().map(|s| s.to_string()).collect();
    if class_names.is_empty() {
        return Err(Error::Malformed("label CSV has an empty header".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(class_names.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Malformed(format!("label row {i}, column {j}: {field:?} is not a number"))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!("label CSV {} has no data rows", path.display())));
    }
    let values = Matrix::from_rows(&rows)?;
    if values.cols() != class_names.len() {
        return Err(Error::Malformed(format!(
            "label rows have {} columns, header has {}",
            values.cols(),
            class_names.len()
        )));
    }
    Ok((LabelMatrix::infer(values)?, class_names))
}

/// Single-column CSV of sample indices, used for ground-truth corruption
/// lists.
pub fn write_index_csv(path: &Path, header: &str, indices: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([header])?;
    for &i in indices {
        w.write_record([i.to_string()])?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

pub fn read_index_csv(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let field = record.get(0).ok_or_else(|| {
            Error::Malformed(format!("index CSV row {i} is empty"))
        })?;
        let v: usize = field.parse().map_err(|_| {
            Error::Malformed(format!("index CSV row {i}: {field:?} is not an index"))
        })?;
        out.push(v);
    }
    Ok(out)
}
