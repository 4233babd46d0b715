//! Mini-batch SGD training of the embedding-fusion MLP.
//!
//! Training is a two-class problem: target vs non-target, where the
//! non-target class pools bona fide impostors and spoofed trials. The
//! loss is the mean softmax cross-entropy, optimised by stochastic
//! gradient descent with momentum 0.9. Everything is deterministic given
//! the seed: the seed drives both the Glorot initialisation and the
//! per-epoch Fisher-Yates shuffle (the shuffle stream is salted with
//! `SHUFFLE_SALT` so it is independent of the init stream).
//!
//! The optimisation itself runs on [`MlpTrainNet`], an f64 mirror of the
//! f32 model artifact; parameters are narrowed back to f32 once at the
//! end. The f64 view exposes flat parameter access plus batch loss and
//! gradients, which is also what the finite-difference gradient checks
//! drive.

use crate::rng::XorShift64Star;

use super::mlp::{DenseLayer, FusionError, MlpFusionModel};

/// Salt xor-ed into the seed for the shuffle stream.
pub const SHUFFLE_SALT: u64 = 0x5348_5546_464C_4531;

/// Training hyperparameters.
///
/// Defaults: learning rate 0.1, batch size 32, 30 epochs, seed 42, no
/// weight decay, no class weighting. A learning rate of zero is accepted
/// and leaves the parameters at their initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// L2 penalty coefficient, applied to weights (not biases).
    pub weight_decay: f64,
    /// Optional loss weights `[target, nontarget]`.
    pub class_weights: Option<[f64; 2]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size: 32,
            epochs: 30,
            seed: 42,
            weight_decay: 0.0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(FusionError::BadTrainConfig {
                reason: "learning rate must be finite and non-negative",
            });
        }
        if self.batch_size == 0 {
            return Err(FusionError::BadTrainConfig {
                reason: "batch size must be at least 1",
            });
        }
        if self.epochs == 0 {
            return Err(FusionError::BadTrainConfig {
                reason: "epoch count must be at least 1",
            });
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(FusionError::BadTrainConfig {
                reason: "weight decay must be finite and non-negative",
            });
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|&x| !x.is_finite() || x <= 0.0) {
                return Err(FusionError::BadTrainConfig {
                    reason: "class weights must be finite and positive",
                });
            }
        }
        Ok(())
    }
}

/// Network shape for training runs. Hidden widths default to 256/128/64
/// with leaky-ReLU slope 0.01.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpArchitecture {
    pub hidden: Vec<usize>,
    pub leaky_slope: f32,
}

impl Default for MlpArchitecture {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            leaky_slope: 0.01,
        }
    }
}

/// One training tuple: the three embeddings and the binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub enroll: Vec<f32>,
    pub test_spk: Vec<f32>,
    pub test_cm: Vec<f32>,
    pub is_target: bool,
}

/// Outcome of a training run: the final model and the mean cross-entropy
/// per epoch (weight decay excluded from the trace).
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: MlpFusionModel,
    pub epoch_losses: Vec<f64>,
}

struct DenseExample {
    input: Vec<f64>,
    is_target: bool,
}

fn widen(example: &TrainExample) -> DenseExample {
    DenseExample {
        input: example
            .enroll
            .iter()
            .chain(&example.test_spk)
            .chain(&example.test_cm)
            .map(|&v| f64::from(v))
            .collect(),
        is_target: example.is_target,
    }
}

struct LayerF64 {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// f64 mirror of [`MlpFusionModel`] with flat parameter access.
///
/// The flat ordering matches the model file: layer by layer, weights
/// row-major, then biases.
pub struct MlpTrainNet {
    layers: Vec<LayerF64>,
    slope: f64,
}

impl MlpTrainNet {
    pub fn from_model(model: &MlpFusionModel) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| LayerF64 {
                rows: l.rows(),
                cols: l.cols(),
                weights: l.weights().iter().map(|&w| f64::from(w)).collect(),
                bias: l.bias().iter().map(|&b| f64::from(b)).collect(),
            })
            .collect();
        Self {
            layers,
            slope: f64::from(model.leaky_slope()),
        }
    }

    /// Narrow back to the f32 artifact.
    pub fn to_model(&self) -> MlpFusionModel {
        let layers: Vec<DenseLayer> = self
            .layers
            .iter()
            .map(|l| {
                DenseLayer::new(
                    l.rows,
                    l.cols,
                    l.weights.iter().map(|&w| w as f32).collect(),
                    l.bias.iter().map(|&b| b as f32).collect(),
                )
                .expect("shapes preserved")
            })
            .collect();
        MlpFusionModel::from_layers(layers, self.slope as f32)
            .expect("validated at construction")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.rows * l.cols + l.rows).sum()
    }

    pub fn param(&self, index: usize) -> f64 {
        let (layer, offset) = self.locate(index);
        let l = &self.layers[layer];
        if offset < l.weights.len() {
            l.weights[offset]
        } else {
            l.bias[offset - l.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (layer, offset) = self.locate(index);
        let l = &mut self.layers[layer];
        if offset < l.weights.len() {
            l.weights[offset] = value;
        } else {
            l.bias[offset - l.weights.len()] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (i, l) in self.layers.iter().enumerate() {
            let span = l.weights.len() + l.bias.len();
            if index < span {
                return (i, index);
            }
            index -= span;
        }
        panic!("parameter index out of range");
    }

    /// Whether the flat index addresses a weight (true) or a bias.
    fn is_weight(&self, index: usize) -> bool {
        let (layer, offset) = self.locate(index);
        offset < self.layers[layer].weights.len()
    }

    /// Pre-activations of every layer; the last entry holds the logits.
    fn forward_pre_activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut activation = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.rows);
            for r in 0..layer.rows {
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = layer.bias[r];
                for (w, v) in row.iter().zip(&activation) {
                    acc += w * v;
                }
                z.push(acc);
            }
            if i != last {
                activation = z.iter().map(|&v| leaky(v, self.slope)).collect();
            }
            zs.push(z);
        }
        zs
    }

    fn example_loss(&self, ex: &DenseExample) -> f64 {
        let zs = self.forward_pre_activations(&ex.input);
        let logits = zs.last().unwrap();
        cross_entropy(logits[0], logits[1], ex.is_target)
    }

    /// Weighted mean cross-entropy over a batch of examples.
    pub fn batch_loss(&self, batch: &[TrainExample], class_weights: Option<[f64; 2]>) -> f64 {
        let dense: Vec<DenseExample> = batch.iter().map(widen).collect();
        self.batch_loss_dense(&dense, class_weights)
    }

    fn batch_loss_dense(&self, batch: &[DenseExample], class_weights: Option<[f64; 2]>) -> f64 {
        let cw = class_weights.unwrap_or([1.0, 1.0]);
        let mut loss = 0.0;
        let mut weight_sum = 0.0;
        for ex in batch {
            let w = if ex.is_target { cw[0] } else { cw[1] };
            loss += w * self.example_loss(ex);
            weight_sum += w;
        }
        loss / weight_sum
    }

    /// Weighted mean cross-entropy and its gradient with respect to
    /// every parameter, in flat order.
    pub fn batch_grad(
        &self,
        batch: &[TrainExample],
        class_weights: Option<[f64; 2]>,
    ) -> (f64, Vec<f64>) {
        let dense: Vec<DenseExample> = batch.iter().map(widen).collect();
        self.batch_grad_dense(&dense, class_weights)
    }

    fn batch_grad_dense(
        &self,
        batch: &[DenseExample],
        class_weights: Option<[f64; 2]>,
    ) -> (f64, Vec<f64>) {
        self.batch_grad_iter(batch.iter(), class_weights)
    }

    fn batch_grad_iter<'a>(
        &self,
        batch: impl Iterator<Item = &'a DenseExample> + Clone,
        class_weights: Option<[f64; 2]>,
    ) -> (f64, Vec<f64>) {
        let cw = class_weights.unwrap_or([1.0, 1.0]);
        let weight_sum: f64 = batch
            .clone()
            .map(|ex| if ex.is_target { cw[0] } else { cw[1] })
            .sum();

        let mut grads = vec![0.0; self.param_count()];
        let mut loss = 0.0;
        for ex in batch {
            let coef = if ex.is_target { cw[0] } else { cw[1] } / weight_sum;
            loss += coef * self.backprop_example(ex, coef, &mut grads);
        }
        (loss, grads)
    }

    /// Accumulate one example's gradient (scaled by `coef`) into `grads`;
    /// returns the example's unscaled cross-entropy.
    fn backprop_example(&self, ex: &DenseExample, coef: f64, grads: &mut [f64]) -> f64 {
        let zs = self.forward_pre_activations(&ex.input);
        let logits = &zs[zs.len() - 1];
        let ce = cross_entropy(logits[0], logits[1], ex.is_target);

        // softmax gradient: p - y
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let z = e0 + e1;
        let (y0, y1) = if ex.is_target { (1.0, 0.0) } else { (0.0, 1.0) };
        let mut delta = vec![coef * (e0 / z - y0), coef * (e1 / z - y1)];

        // layer parameter offsets in the flat gradient vector
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.weights.len() + l.bias.len();
        }

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let below: Vec<f64> = if li == 0 {
                ex.input.clone()
            } else {
                zs[li - 1].iter().map(|&v| leaky(v, self.slope)).collect()
            };
            let base = offsets[li];
            for (r, &d) in delta.iter().enumerate() {
                let wrow = base + r * layer.cols;
                for (c, a) in below.iter().enumerate() {
                    grads[wrow + c] += d * a;
                }
                grads[base + layer.rows * layer.cols + r] += d;
            }
            if li > 0 {
                let mut next_delta = vec![0.0; layer.cols];
                for (r, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (c, w) in row.iter().enumerate() {
                        next_delta[c] += w * d;
                    }
                }
                for (c, nd) in next_delta.iter_mut().enumerate() {
                    let dz = if zs[li - 1][c] >= 0.0 { 1.0 } else { self.slope };
                    *nd *= dz;
                }
                delta = next_delta;
            }
        }
        ce
    }
}

fn leaky(z: f64, slope: f64) -> f64 {
    if z >= 0.0 {
        z
    } else {
        slope * z
    }
}

/// Numerically stable softmax cross-entropy for two logits.
fn cross_entropy(l0: f64, l1: f64, is_target: bool) -> f64 {
    let m = l0.max(l1);
    let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
    let picked = if is_target { l0 } else { l1 };
    lse - picked
}

fn validate_data(data: &[TrainExample]) -> Result<(usize, usize), FusionError> {
    let first = data.first().ok_or(FusionError::EmptyTrainingData)?;
    let (d_spk, d_cm) = (first.enroll.len(), first.test_cm.len());
    for (i, ex) in data.iter().enumerate() {
        if ex.enroll.len() != d_spk || ex.test_spk.len() != d_spk || ex.test_cm.len() != d_cm {
            return Err(FusionError::InconsistentExample { index: i });
        }
    }
    let targets = data.iter().filter(|ex| ex.is_target).count();
    if targets == 0 {
        return Err(FusionError::SingleClassData { class: "nontarget" });
    }
    if targets == data.len() {
        return Err(FusionError::SingleClassData { class: "target" });
    }
    Ok((d_spk, d_cm))
}

/// Train a fusion MLP on labelled embedding tuples.
///
/// Initialisation uses `cfg.seed` directly (so a zero-learning-rate run
/// returns exactly `MlpFusionModel::init(.., cfg.seed)`); the shuffle
/// stream is seeded with `cfg.seed ^ SHUFFLE_SALT`. Gradient
/// accumulation order inside a batch is fixed, making runs bit-identical
/// for a given seed and data.
pub fn mlp_train(
    data: &[TrainExample],
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<TrainReport, FusionError> {
    cfg.validate()?;
    let (d_spk, d_cm) = validate_data(data)?;
    let input_dim = 2 * d_spk + d_cm;

    let model = MlpFusionModel::init(input_dim, &arch.hidden, arch.leaky_slope, cfg.seed)?;
    let mut net = MlpTrainNet::from_model(&model);
    let dense: Vec<DenseExample> = data.iter().map(widen).collect();

    let mut shuffle_rng = XorShift64Star::new(cfg.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..dense.len()).collect();
    let mut velocity = vec![0.0; net.param_count()];
    let momentum = 0.9;

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_ce = 0.0;
        let mut epoch_weight = 0.0;
        let cw = cfg.class_weights.unwrap_or([1.0, 1.0]);

        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk.iter().map(|&i| &dense[i]);
            let (batch_loss, grads) = net.batch_grad_iter(batch.clone(), cfg.class_weights);
            if !batch_loss.is_finite() {
                return Err(FusionError::NonFiniteLoss { epoch: epoch + 1 });
            }
            let batch_weight: f64 = batch
                .map(|ex| if ex.is_target { cw[0] } else { cw[1] })
                .sum();
            epoch_ce += batch_loss * batch_weight;
            epoch_weight += batch_weight;

            for (i, (v, g)) in velocity.iter_mut().zip(&grads).enumerate() {
                let mut g = *g;
                if cfg.weight_decay > 0.0 && net.is_weight(i) {
                    g += cfg.weight_decay * net.param(i);
                }
                *v = momentum * *v + g;
                if cfg.learning_rate > 0.0 {
                    net.set_param(i, net.param(i) - cfg.learning_rate * *v);
                }
            }
        }
        epoch_losses.push(epoch_ce / epoch_weight);
    }

    Ok(TrainReport {
        model: net.to_model(),
        epoch_losses,
    })
}
