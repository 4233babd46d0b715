//! Embedding stores, cosine scoring and multi-utterance enrollment.
//!
//! Speaker and countermeasure embeddings are precomputed elsewhere and
//! consumed from binary files. Stores are immutable once loaded and are
//! meant to be shared read-only across scoring threads.
//!
//! # Binary formats
//!
//! Embedding store (`SASVEMB1`):
//!
//! ```text
//! magic    8 bytes   "SASVEMB1"
//! dim      u32 LE    vector dimension, must be >= 1
//! records  repeated until EOF:
//!   id_len u16 LE
//!   id     id_len bytes, UTF-8
//!   values dim x f32 LE, all finite
//! ```
//!
//! Countermeasure output file (`SASVCML1`): identical layout with the
//! dimension fixed to 2; the first value is the bona fide logit, the
//! second the spoof logit.
//!
//! Record order is preserved on load, so `save` after `load` reproduces
//! the input bytes exactly.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use thiserror::Error;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"SASVEMB1";
pub const CM_OUTPUT_MAGIC: &[u8; 8] = b"SASVCML1";

/// A fixed-dimension vector keyed by an utterance or model id.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    id: String,
    values: Vec<f32>,
}

impl Embedding {
    /// All values must be finite.
    pub fn new(id: impl Into<String>, values: Vec<f32>) -> Result<Self, EmbeddingError> {
        let id = id.into();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue { id, index: pos });
        }
        Ok(Self { id, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| {
                let v = f64::from(v);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes (expected {expected:?})")]
    BadMagic { expected: &'static str },
    #[error("declared dimension is zero")]
    ZeroDimension,
    #[error("countermeasure output file must have dimension 2, found {found}")]
    BadCmDimension { found: u32 },
    #[error("truncated record after {records} complete record(s)")]
    Truncated { records: usize },
    #[error("duplicate id `{id}`")]
    DuplicateId { id: String },
    #[error("record id is not valid UTF-8")]
    InvalidIdUtf8,
    #[error("non-finite value at index {index} of `{id}`")]
    NonFiniteValue { id: String, index: usize },
    #[error("embedding `{id}` has dimension {found}, store expects {expected}")]
    DimensionMismatch {
        id: String,
        found: usize,
        expected: usize,
    },
    #[error("cosine of embeddings with different dimensions ({a} vs {b})")]
    CosineDimensionMismatch { a: usize, b: usize },
    #[error("embedding `{id}` has zero norm")]
    ZeroNorm { id: String },
    #[error("enrollment needs at least one embedding")]
    EmptyEnrollment,
    #[error("id `{id}` is longer than 65535 bytes")]
    IdTooLong { id: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Immutable map from id to embedding; all entries share one dimension.
/// Iteration follows insertion order, which is also the file order.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    entries: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            dim,
            entries: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, embedding: Embedding) -> Result<(), EmbeddingError> {
        if embedding.dim() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                id: embedding.id.clone(),
                found: embedding.dim(),
                expected: self.dim,
            });
        }
        if self.index.contains_key(&embedding.id) {
            return Err(EmbeddingError::DuplicateId {
                id: embedding.id.clone(),
            });
        }
        self.index
            .insert(embedding.id.clone(), self.entries.len());
        self.entries.push(embedding);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Embedding> {
        self.entries.iter()
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, EmbeddingError> {
        let (dim, records) = read_record_file(reader, EMBEDDING_MAGIC)?;
        let mut store = EmbeddingStore::new(dim as usize)?;
        for (id, values) in records {
            store.insert(Embedding::new(id, values)?)?;
        }
        Ok(store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        Self::load(bytes)
    }

    pub fn save<W: Write>(&self, writer: &mut W) -> Result<(), EmbeddingError> {
        write_record_file(
            writer,
            EMBEDDING_MAGIC,
            self.dim as u32,
            self.entries.iter().map(|e| (e.id.as_str(), e.values())),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to Vec cannot fail");
        out
    }
}

/// Countermeasure classifier output for one utterance: a pair of logits,
/// bona fide first.
#[derive(Debug, Clone, PartialEq)]
pub struct CmOutput {
    id: String,
    logits: [f32; 2],
}

impl CmOutput {
    pub fn new(id: impl Into<String>, logits: [f32; 2]) -> Result<Self, EmbeddingError> {
        let id = id.into();
        if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue { id, index: pos });
        }
        Ok(Self { id, logits })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn logits(&self) -> [f32; 2] {
        self.logits
    }

    pub fn bona_fide_logit(&self) -> f32 {
        self.logits[0]
    }

    pub fn spoof_logit(&self) -> f32 {
        self.logits[1]
    }
}

/// Immutable map from utterance id to countermeasure logits.
#[derive(Debug, Clone)]
pub struct CmOutputs {
    entries: Vec<CmOutput>,
    index: HashMap<String, usize>,
}

impl CmOutputs {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, output: CmOutput) -> Result<(), EmbeddingError> {
        if self.index.contains_key(&output.id) {
            return Err(EmbeddingError::DuplicateId {
                id: output.id.clone(),
            });
        }
        self.index.insert(output.id.clone(), self.entries.len());
        self.entries.push(output);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&CmOutput> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &CmOutput> {
        self.entries.iter()
    }

    pub fn load<R: Read>(reader: R) -> Result<Self, EmbeddingError> {
        let (dim, records) = read_record_file(reader, CM_OUTPUT_MAGIC)?;
        if dim != 2 {
            return Err(EmbeddingError::BadCmDimension { found: dim });
        }
        let mut outputs = CmOutputs::new();
        for (id, values) in records {
            outputs.insert(CmOutput::new(id, [values[0], values[1]])?)?;
        }
        Ok(outputs)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        Self::load(bytes)
    }

    pub fn save<W: Write>(&self, writer: &mut W) -> Result<(), EmbeddingError> {
        write_record_file(
            writer,
            CM_OUTPUT_MAGIC,
            2,
            self.entries.iter().map(|e| (e.id.as_str(), &e.logits[..])),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to Vec cannot fail");
        out
    }
}

impl Default for CmOutputs {
    fn default() -> Self {
        Self::new()
    }
}

type Records = Vec<(String, Vec<f32>)>;

fn read_record_file<R: Read>(
    mut reader: R,
    magic: &'static [u8; 8],
) -> Result<(u32, Records), EmbeddingError> {
    let mut header = [0u8; 8];
    read_fully(&mut reader, &mut header).map_err(|_| EmbeddingError::BadMagic {
        expected: std::str::from_utf8(magic).unwrap(),
    })?;
    if &header != magic {
        return Err(EmbeddingError::BadMagic {
            expected: std::str::from_utf8(magic).unwrap(),
        });
    }
    let mut dim_bytes = [0u8; 4];
    read_fully(&mut reader, &mut dim_bytes).map_err(|_| EmbeddingError::Truncated { records: 0 })?;
    let dim = u32::from_le_bytes(dim_bytes);
    if dim == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }

    let mut records = Vec::new();
    loop {
        let mut len_bytes = [0u8; 2];
        match try_read_fully(&mut reader, &mut len_bytes)? {
            ReadOutcome::Eof => break,
            ReadOutcome::Partial => {
                return Err(EmbeddingError::Truncated {
                    records: records.len(),
                })
            }
            ReadOutcome::Full => {}
        }
        let id_len = u16::from_le_bytes(len_bytes) as usize;
        let mut id_bytes = vec![0u8; id_len];
        read_fully(&mut reader, &mut id_bytes).map_err(|_| EmbeddingError::Truncated {
            records: records.len(),
        })?;
        let id = String::from_utf8(id_bytes).map_err(|_| EmbeddingError::InvalidIdUtf8)?;
        let mut values = Vec::with_capacity(dim as usize);
        let mut buf = [0u8; 4];
        for _ in 0..dim {
            read_fully(&mut reader, &mut buf).map_err(|_| EmbeddingError::Truncated {
                records: records.len(),
            })?;
            values.push(f32::from_le_bytes(buf));
        }
        records.push((id, values));
    }
    Ok((dim, records))
}

fn write_record_file<'a, W: Write>(
    writer: &mut W,
    magic: &[u8; 8],
    dim: u32,
    records: impl Iterator<Item = (&'a str, &'a [f32])>,
) -> Result<(), EmbeddingError> {
    writer.write_all(magic)?;
    writer.write_all(&dim.to_le_bytes())?;
    for (id, values) in records {
        let id_len = u16::try_from(id.len()).map_err(|_| EmbeddingError::IdTooLong {
            id: id.to_string(),
        })?;
        writer.write_all(&id_len.to_le_bytes())?;
        writer.write_all(id.as_bytes())?;
        for v in values {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

enum ReadOutcome {
    Full,
    Partial,
    Eof,
}

/// Distinguishes clean EOF (no bytes) from a truncated read.
fn try_read_fully<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<ReadOutcome, EmbeddingError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            return Ok(if filled == 0 {
                ReadOutcome::Eof
            } else {
                ReadOutcome::Partial
            });
        }
        filled += n;
    }
    Ok(ReadOutcome::Full)
}

fn read_fully<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), EmbeddingError> {
    match try_read_fully(reader, buf)? {
        ReadOutcome::Full => Ok(()),
        _ => Err(EmbeddingError::Truncated { records: 0 }),
    }
}

/// Cosine similarity in `[-1, 1]`, computed in f64 and clamped against
/// rounding.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::CosineDimensionMismatch {
            a: a.dim(),
            b: b.dim(),
        });
    }
    let norm_a = a.norm();
    if norm_a == 0.0 {
        return Err(EmbeddingError::ZeroNorm { id: a.id.clone() });
    }
    let norm_b = b.norm();
    if norm_b == 0.0 {
        return Err(EmbeddingError::ZeroNorm { id: b.id.clone() });
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Enrollment model from one or more utterance embeddings: each member is
/// divided by its norm, then the normalized vectors are averaged. The
/// result keeps the first member's id.
pub fn enroll(members: &[&Embedding]) -> Result<Embedding, EmbeddingError> {
    let first = members.first().ok_or(EmbeddingError::EmptyEnrollment)?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    for member in members {
        if member.dim() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                id: member.id.clone(),
                found: member.dim(),
                expected: dim,
            });
        }
        let norm = member.norm();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroNorm {
                id: member.id.clone(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(&member.values) {
            *a += f64::from(v) / norm;
        }
    }
    let n = members.len() as f64;
    let values = acc.iter().map(|&a| (a / n) as f32).collect();
    Embedding::new(first.id.clone(), values)
}
