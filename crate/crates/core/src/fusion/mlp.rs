//! The trainable embedding-fusion MLP.
//!
//! The network consumes the concatenation
//! `[enroll_spk | test_spk | test_cm]`, applies a stack of fully
//! connected layers with leaky-ReLU activations, and ends in an affine
//! layer with two output units for the target and non-target classes.
//! The decision score is the softmax probability of the target class
//! (index 0), which ranks trials identically to the logit difference.
//!
//! Parameters are stored as f32 — the unit of exchange with the model
//! file — while all arithmetic runs in f64.
//!
//! # Model file format (`SASVMLP1`)
//!
//! ```text
//! magic       8 bytes  "SASVMLP1"
//! version     u8       currently 1
//! layer_count u8       >= 1
//! per layer:
//!   rows      u32 LE   output units
//!   cols      u32 LE   input units
//!   weights   rows*cols x f32 LE, row-major
//!   biases    rows x f32 LE
//! leaky_slope f32 LE
//! ```
//!
//! Consecutive layer shapes must chain (`cols[i] == rows[i-1]`), the last
//! layer must have exactly 2 rows, and every parameter must be finite.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::rng::XorShift64Star;

pub const MODEL_MAGIC: &[u8; 8] = b"SASVMLP1";
const MODEL_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("bad magic bytes (expected SASVMLP1)")]
    BadMagic,
    #[error("unsupported model format version {found}")]
    BadVersion { found: u8 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model file has trailing bytes after the last field")]
    TrailingData,
    #[error("model must contain at least one layer")]
    NoLayers,
    #[error("layer {index} expects {expected} inputs but the previous layer produces {found}")]
    ShapeChain {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("output layer must have exactly 2 units, found {found}")]
    BadOutputWidth { found: usize },
    #[error("layer {index} has a non-finite parameter")]
    NonFiniteParameter { index: usize },
    #[error("layer needs rows >= 1 and cols >= 1, got {rows}x{cols}")]
    EmptyLayer { rows: usize, cols: usize },
    #[error("weight/bias lengths do not match the declared {rows}x{cols} shape")]
    BadParameterLength { rows: usize, cols: usize },
    #[error("model has more than 255 layers")]
    TooManyLayers,
    #[error(
        "input dimensions do not match the model: 2*{spk} + {cm} != {expected} \
         (enrollment and test speaker embeddings must also agree)"
    )]
    InputDimensions { spk: usize, cm: usize, expected: usize },
    #[error("speaker embedding dimensions differ between enrollment ({enroll}) and test ({test})")]
    SpeakerDimMismatch { enroll: usize, test: usize },
    #[error("training data is empty")]
    EmptyTrainingData,
    #[error("training data contains only the {class} class")]
    SingleClassData { class: &'static str },
    #[error("training example {index} has inconsistent dimensions")]
    InconsistentExample { index: usize },
    #[error("training loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {reason}")]
    BadTrainConfig { reason: &'static str },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One fully connected layer; `y = W x + b` with `W` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl DenseLayer {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self, FusionError> {
        if rows == 0 || cols == 0 {
            return Err(FusionError::EmptyLayer { rows, cols });
        }
        if weights.len() != rows * cols || bias.len() != rows {
            return Err(FusionError::BadParameterLength { rows, cols });
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite()) && self.bias.iter().all(|b| b.is_finite())
    }

    /// `out = W x + b` in f64.
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            let mut acc = f64::from(self.bias[r]);
            for (w, v) in row.iter().zip(x) {
                acc += f64::from(*w) * v;
            }
            out.push(acc);
        }
    }
}

/// Forward-pass result: the two output logits (target first) and the
/// target-class softmax probability used as the decision score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOutput {
    pub logits: [f64; 2],
    pub score: f64,
}

/// The embedding-fusion MLP artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpFusionModel {
    layers: Vec<DenseLayer>,
    leaky_slope: f32,
}

impl MlpFusionModel {
    /// Validating constructor from explicit layers.
    pub fn from_layers(layers: Vec<DenseLayer>, leaky_slope: f32) -> Result<Self, FusionError> {
        if layers.is_empty() {
            return Err(FusionError::NoLayers);
        }
        if layers.len() > u8::MAX as usize {
            return Err(FusionError::TooManyLayers);
        }
        for (i, layer) in layers.iter().enumerate() {
            if i > 0 && layer.cols != layers[i - 1].rows {
                return Err(FusionError::ShapeChain {
                    index: i,
                    expected: layer.cols,
                    found: layers[i - 1].rows,
                });
            }
            if !layer.is_finite() {
                return Err(FusionError::NonFiniteParameter { index: i });
            }
        }
        let last = layers.last().unwrap();
        if last.rows != 2 {
            return Err(FusionError::BadOutputWidth { found: last.rows });
        }
        if !leaky_slope.is_finite() || leaky_slope < 0.0 {
            return Err(FusionError::NonFiniteParameter {
                index: layers.len(),
            });
        }
        Ok(Self {
            layers,
            leaky_slope,
        })
    }

    /// Fresh model with Glorot-uniform weights and zero biases.
    ///
    /// Each weight is drawn uniformly from
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]` using the
    /// seeded generator (one draw per weight, layer by layer, row-major)
    /// and rounded to f32.
    pub fn init(
        input_dim: usize,
        hidden: &[usize],
        leaky_slope: f32,
        seed: u64,
    ) -> Result<Self, FusionError> {
        if input_dim == 0 {
            return Err(FusionError::EmptyLayer { rows: 0, cols: 0 });
        }
        let mut rng = XorShift64Star::new(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &width in hidden.iter().chain(std::iter::once(&2usize)) {
            if width == 0 {
                return Err(FusionError::EmptyLayer {
                    rows: width,
                    cols: fan_in,
                });
            }
            let bound = (6.0 / (fan_in + width) as f64).sqrt();
            let weights: Vec<f32> = (0..width * fan_in)
                .map(|_| ((rng.next_f64() * 2.0 - 1.0) * bound) as f32)
                .collect();
            layers.push(DenseLayer::new(width, fan_in, weights, vec![0.0; width])?);
            fan_in = width;
        }
        Self::from_layers(layers, leaky_slope)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn leaky_slope(&self) -> f32 {
        self.leaky_slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    /// Total number of scalar parameters (weights and biases).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.rows * l.cols + l.rows)
            .sum()
    }

    /// Forward pass over the raw concatenated input (length must equal
    /// `input_dim`). Returns the two output logits.
    pub fn forward_input(&self, input: &[f64]) -> [f64; 2] {
        assert_eq!(
            input.len(),
            self.input_dim(),
            "input length does not match the model"
        );
        let slope = f64::from(self.leaky_slope);
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i != last {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v *= slope;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        [cur[0], cur[1]]
    }

    /// Score one trial from its three embeddings.
    pub fn forward(
        &self,
        enroll_spk: &[f32],
        test_spk: &[f32],
        test_cm: &[f32],
    ) -> Result<MlpOutput, FusionError> {
        if enroll_spk.len() != test_spk.len() {
            return Err(FusionError::SpeakerDimMismatch {
                enroll: enroll_spk.len(),
                test: test_spk.len(),
            });
        }
        let expected = self.input_dim();
        if 2 * enroll_spk.len() + test_cm.len() != expected {
            return Err(FusionError::InputDimensions {
                spk: enroll_spk.len(),
                cm: test_cm.len(),
                expected,
            });
        }
        let input: Vec<f64> = enroll_spk
            .iter()
            .chain(test_spk)
            .chain(test_cm)
            .map(|&v| f64::from(v))
            .collect();
        let logits = self.forward_input(&input);
        let score = crate::fusion::softmax_bonafide(logits);
        Ok(MlpOutput { logits, score })
    }

    pub fn save<W: Write>(&self, writer: &mut W) -> Result<(), FusionError> {
        writer.write_all(MODEL_MAGIC)?;
        writer.write_all(&[MODEL_VERSION, self.layers.len() as u8])?;
        for layer in &self.layers {
            writer.write_all(&(layer.rows as u32).to_le_bytes())?;
            writer.write_all(&(layer.cols as u32).to_le_bytes())?;
            for w in &layer.weights {
                writer.write_all(&w.to_le_bytes())?;
            }
            for b in &layer.bias {
                writer.write_all(&b.to_le_bytes())?;
            }
        }
        writer.write_all(&self.leaky_slope.to_le_bytes())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to Vec cannot fail");
        out
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self, FusionError> {
        let mut magic = [0u8; 8];
        read_exact(&mut reader, &mut magic).map_err(|_| FusionError::BadMagic)?;
        if &magic != MODEL_MAGIC {
            return Err(FusionError::BadMagic);
        }
        let mut head = [0u8; 2];
        read_exact(&mut reader, &mut head)?;
        let (version, layer_count) = (head[0], head[1]);
        if version != MODEL_VERSION {
            return Err(FusionError::BadVersion { found: version });
        }
        if layer_count == 0 {
            return Err(FusionError::NoLayers);
        }
        let mut layers = Vec::with_capacity(layer_count as usize);
        let mut u32_buf = [0u8; 4];
        for _ in 0..layer_count {
            read_exact(&mut reader, &mut u32_buf)?;
            let rows = u32::from_le_bytes(u32_buf) as usize;
            read_exact(&mut reader, &mut u32_buf)?;
            let cols = u32::from_le_bytes(u32_buf) as usize;
            if rows == 0 || cols == 0 {
                return Err(FusionError::EmptyLayer { rows, cols });
            }
            let mut weights = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                read_exact(&mut reader, &mut u32_buf)?;
                weights.push(f32::from_le_bytes(u32_buf));
            }
            let mut bias = Vec::with_capacity(rows);
            for _ in 0..rows {
                read_exact(&mut reader, &mut u32_buf)?;
                bias.push(f32::from_le_bytes(u32_buf));
            }
            layers.push(DenseLayer::new(rows, cols, weights, bias)?);
        }
        read_exact(&mut reader, &mut u32_buf)?;
        let leaky_slope = f32::from_le_bytes(u32_buf);
        let mut probe = [0u8; 1];
        if reader.read(&mut probe)? != 0 {
            return Err(FusionError::TrailingData);
        }
        Self::from_layers(layers, leaky_slope)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FusionError> {
        Self::load(bytes)
    }
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), FusionError> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = reader.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(FusionError::Truncated);
        }
        filled += n;
    }
    Ok(())
}
