//! Partition file serialization: the `.srgb` format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    "SRGB"                      4 bytes
//! version  u16 = 1                     2 bytes
//! key      u32 length + bytes
//! n        u64 row count
//! d        u32 embedding dimension
//! texts    u64 count, then per text: u32 length + bytes
//! emb      n * d * 4 bytes of float32
//! ```
//!
//! Two serialization paths produce byte-identical output: the zero-copy path
//! writes the contiguous row range of the parent embedding buffer directly
//! (O(1) heap allocations), while the naive path rebuilds every row as an
//! owned value sequence first (O(n*d) transient allocations). The naive path
//! exists as the measured baseline; production code calls zero-copy.

use crate::encoder::{EmbeddingMatrix, MatrixView};
use crate::error::{Error, FormatError, Result};
use crate::workload::PartitionKey;

pub const MAGIC: [u8; 4] = *b"SRGB";
pub const VERSION: u16 = 1;

/// Virtual serialization cost in seconds per text. Back-solved from the
/// wall-time decomposition of the reference pipeline (~123 s over 10M
/// texts); configurable on the run config.
pub const DEFAULT_C_SER: f64 = 12.3e-6;

/// Text contents to serialize alongside the embeddings.
#[derive(Debug, Clone)]
pub enum TextsRef<'a> {
    /// Real text rows.
    Bytes(&'a [Vec<u8>]),
    /// Metered placeholders: zero-filled texts of the recorded lengths, so
    /// file sizes stay faithful for upload modeling.
    ZeroFilled(&'a [u32]),
}

impl TextsRef<'_> {
    pub fn count(&self) -> u64 {
        match self {
            TextsRef::Bytes(t) => t.len() as u64,
            TextsRef::ZeroFilled(l) => l.len() as u64,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        match self {
            TextsRef::Bytes(t) => t.iter().map(|x| x.len() as u64).sum(),
            TextsRef::ZeroFilled(l) => l.iter().map(|&x| x as u64).sum(),
        }
    }
}

/// Exact serialized size of a partition file, computable without building it.
pub fn encoded_len(key: &PartitionKey, n: u64, text_bytes: u64, dims: u32) -> u64 {
    4 + 2 + 4 + key.as_str().len() as u64 + 8 + 4 + 8 + n * 4 + text_bytes + n * dims as u64 * 4
}

fn write_header(out: &mut Vec<u8>, key: &PartitionKey, n: u64, dims: u32) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let kb = key.as_str().as_bytes();
    out.extend_from_slice(&(kb.len() as u32).to_le_bytes());
    out.extend_from_slice(kb);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&dims.to_le_bytes());
}

fn write_texts(out: &mut Vec<u8>, texts: &TextsRef<'_>) {
    out.extend_from_slice(&texts.count().to_le_bytes());
    match texts {
        TextsRef::Bytes(rows) => {
            for row in *rows {
                out.extend_from_slice(&(row.len() as u32).to_le_bytes());
                out.extend_from_slice(row);
            }
        }
        TextsRef::ZeroFilled(lens) => {
            for &len in *lens {
                out.extend_from_slice(&len.to_le_bytes());
                let new_len = out.len() + len as usize;
                out.resize(new_len, 0);
            }
        }
    }
}

fn check_inputs(texts: &TextsRef<'_>, view: &MatrixView) -> Result<()> {
    if texts.count() != view.rows() {
        return Err(Error::Config(format!(
            "texts count {} does not match view rows {}",
            texts.count(),
            view.rows()
        )));
    }
    Ok(())
}

/// Serialize by passing the view's contiguous float range straight through.
/// Performs O(1) heap allocations regardless of row count: one exact-size
/// output buffer (plus one transient row buffer when the matrix is virtual).
pub fn serialize_zero_copy(
    key: &PartitionKey,
    texts: &TextsRef<'_>,
    view: &MatrixView,
) -> Result<Vec<u8>> {
    check_inputs(texts, view)?;
    let n = view.rows();
    let total = encoded_len(key, n, texts.total_bytes(), view.dims());
    let mut out = Vec::with_capacity(total as usize);
    write_header(&mut out, key, n, view.dims());
    write_texts(&mut out, texts);
    match view.as_slice() {
        Some(floats) => extend_f32_le(&mut out, floats),
        None => {
            // Virtual matrix: regenerate the rows once, still a single flat buffer.
            let floats = view.materialize();
            extend_f32_le(&mut out, &floats);
        }
    }
    debug_assert_eq!(out.len() as u64, total);
    Ok(out)
}

#[cfg(target_endian = "little")]
#[inline]
fn extend_f32_le(out: &mut Vec<u8>, floats: &[f32]) {
    out.extend_from_slice(bytemuck::cast_slice(floats));
}

#[cfg(target_endian = "big")]
#[inline]
fn extend_f32_le(out: &mut Vec<u8>, floats: &[f32]) {
    for f in floats {
        out.extend_from_slice(&f.to_le_bytes());
    }
}

/// Serialize by rebuilding each row as an owned `Vec<f32>` before writing
/// it. Byte-identical to [`serialize_zero_copy`]; intentionally allocates
/// per row, which is the behavior the zero-copy path exists to avoid.
pub fn serialize_naive(
    key: &PartitionKey,
    texts: &TextsRef<'_>,
    view: &MatrixView,
) -> Result<Vec<u8>> {
    check_inputs(texts, view)?;
    let n = view.rows();
    let d = view.dims() as usize;
    let mut out = Vec::new();
    write_header(&mut out, key, n, view.dims());
    write_texts(&mut out, texts);
    let flat = view.materialize();
    for r in 0..n as usize {
        let row: Vec<f32> = flat[r * d..(r + 1) * d].to_vec();
        let cells: Vec<[u8; 4]> = row.iter().map(|f| f.to_le_bytes()).collect();
        for cell in cells {
            out.extend_from_slice(&cell);
        }
    }
    Ok(out)
}

/// A decoded partition file.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFile {
    pub key: PartitionKey,
    pub dims: u32,
    pub texts: Vec<Vec<u8>>,
    pub embeddings: Vec<f32>,
}

impl PartitionFile {
    pub fn rows(&self) -> u64 {
        self.texts.len() as u64
    }

    /// Rebuild an [`EmbeddingMatrix`] over the decoded rows.
    pub fn matrix(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::from_dense(
            self.key.clone(),
            self.rows(),
            self.dims,
            self.embeddings.clone(),
        )
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.buf.len() - self.pos,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decode a partition file. Every malformation maps to a distinct
/// [`FormatError`]; no input may panic.
pub fn deserialize(bytes: &[u8]) -> Result<PartitionFile> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic).into());
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError::BadVersion(version).into());
    }
    let key_len = r.u32()? as usize;
    let key_bytes = r.take(key_len)?;
    let key = PartitionKey(String::from_utf8_lossy(key_bytes).into_owned());
    let n = r.u64()?;
    let dims = r.u32()?;
    let text_count = r.u64()?;
    if text_count != n {
        return Err(FormatError::LengthMismatch(format!(
            "header declares {n} rows but texts section declares {text_count}"
        ))
        .into());
    }
    // Guard against absurd declared sizes before allocating.
    if n > bytes.len() as u64 {
        return Err(FormatError::LengthMismatch(format!(
            "declared {n} rows exceeds file size {}",
            bytes.len()
        ))
        .into());
    }
    let mut texts = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = r.u32()? as usize;
        texts.push(r.take(len)?.to_vec());
    }
    let emb_bytes = (n as usize)
        .checked_mul(dims as usize)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| FormatError::LengthMismatch("embedding section size overflows".into()))?;
    let emb_raw = r.take(emb_bytes)?;
    let mut embeddings = Vec::with_capacity(n as usize * dims as usize);
    for chunk in emb_raw.chunks_exact(4) {
        embeddings.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos).into());
    }
    Ok(PartitionFile {
        key,
        dims,
        texts,
        embeddings,
    })
}
