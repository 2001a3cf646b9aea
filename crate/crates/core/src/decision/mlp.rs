//! One-hidden-layer perceptron with a two-way softmax output.
//!
//! Hidden width is fixed at ten times the input width; hidden units are
//! `tanh`. Output 0 is the imposter class, output 1 the genuine class.
//! Training is mini-batch SGD on mean cross-entropy, with optional momentum
//! (off by default).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, LabeledSet, Standardizer};
use crate::error::{invalid, Error, Result};
use crate::metrics::Label;

pub const HIDDEN_WIDTH_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.01,
            batch_size: 32,
            momentum: 0.0,
        }
    }
}

/// Fully connected layer, `weights[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weights: (0..outputs)
                .map(|_| (0..inputs).map(|_| rng.random_range(-limit..limit)).collect())
                .collect(),
            biases: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.biases.len() * (self.weights.first().map_or(0, Vec::len) + 1)
    }

    fn check_shape(&self, inputs: usize, outputs: usize) -> Result<()> {
        if self.biases.len() != outputs
            || self.weights.len() != outputs
            || self.weights.iter().any(|r| r.len() != inputs)
        {
            return Err(invalid(format!("layer is not {inputs} -> {outputs}")));
        }
        if self.weights.iter().flatten().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite layer parameter"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layer1: DenseLayer,
    pub layer2: DenseLayer,
    pub standardizer: Standardizer,
    pub config: MlpConfig,
    pub seed: u64,
}

struct Activations {
    input: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn class_index(label: Label) -> usize {
    usize::from(label.is_genuine())
}

impl MlpModel {
    /// Fresh Glorot-initialized network for `input_dim` features.
    pub fn init(input_dim: usize, standardizer: Standardizer, config: MlpConfig, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("MLP input dimension must be positive"));
        }
        check_dim(input_dim, standardizer.dim())?;
        let hidden_dim = HIDDEN_WIDTH_FACTOR * input_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer1 = DenseLayer::glorot(input_dim, hidden_dim, &mut rng);
        let layer2 = DenseLayer::glorot(hidden_dim, 2, &mut rng);
        Ok(Self {
            input_dim,
            hidden_dim,
            layer1,
            layer2,
            standardizer,
            config,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim != HIDDEN_WIDTH_FACTOR * self.input_dim {
            return Err(invalid(format!(
                "hidden width {} is not {HIDDEN_WIDTH_FACTOR} x input width {}",
                self.hidden_dim, self.input_dim
            )));
        }
        self.standardizer.validate()?;
        check_dim(self.input_dim, self.standardizer.dim())?;
        self.layer1.check_shape(self.input_dim, self.hidden_dim)?;
        self.layer2.check_shape(self.hidden_dim, 2)
    }

    fn forward_standardized(&self, z: Vec<f64>) -> Activations {
        let hidden: Vec<f64> = self.layer1.forward(&z).into_iter().map(f64::tanh).collect();
        let logits = self.layer2.forward(&hidden);
        Activations {
            input: z,
            hidden,
            logits,
        }
    }

    /// `[p(imposter), p(genuine)]`.
    pub fn probabilities(&self, feature: &[f64]) -> Result<[f64; 2]> {
        check_dim(self.input_dim, feature.len())?;
        let a = self.forward_standardized(self.standardizer.apply(feature));
        let p = softmax(&a.logits);
        Ok([p[0], p[1]])
    }

    /// Log-odds of the genuine class.
    pub fn predict_score(&self, feature: &[f64]) -> Result<f64> {
        check_dim(self.input_dim, feature.len())?;
        let a = self.forward_standardized(self.standardizer.apply(feature));
        Ok(a.logits[1] - a.logits[0])
    }

    pub fn param_count(&self) -> usize {
        self.layer1.param_count() + self.layer2.param_count()
    }

    /// All parameters flattened: layer1 weights (row-major), layer1 biases,
    /// layer2 weights, layer2 biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for layer in [&self.layer1, &self.layer2] {
            p.extend(layer.weights.iter().flatten());
            p.extend(&layer.biases);
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for layer in [&mut self.layer1, &mut self.layer2] {
            for row in &mut layer.weights {
                row.iter_mut().for_each(|w| *w = it.next().unwrap());
            }
            layer.biases.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    /// Mean cross-entropy over `rows` and its gradient, flattened in
    /// [`MlpModel::parameters`] order.
    pub fn loss_and_gradient(&self, rows: &[Vec<f64>], labels: &[Label]) -> Result<(f64, Vec<f64>)> {
        let refs: Vec<(Vec<f64>, Label)> = rows
            .iter()
            .zip(labels)
            .map(|(r, l)| {
                check_dim(self.input_dim, r.len())?;
                Ok((self.standardizer.apply(r), *l))
            })
            .collect::<Result<_>>()?;
        Ok(self.batch_gradient(refs.iter().map(|(z, l)| (z.as_slice(), *l))))
    }

    fn batch_gradient<'a>(&self, batch: impl Iterator<Item = (&'a [f64], Label)>) -> (f64, Vec<f64>) {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let mut g1w = vec![0.0; h * d];
        let mut g1b = vec![0.0; h];
        let mut g2w = vec![0.0; 2 * h];
        let mut g2b = vec![0.0; 2];
        let mut loss = 0.0;
        let mut count = 0usize;
        for (z, label) in batch {
            count += 1;
            let a = self.forward_standardized(z.to_vec());
            let p = softmax(&a.logits);
            let target = class_index(label);
            // log-softmax of the target class, stable form.
            let max = a.logits[0].max(a.logits[1]);
            let lse = max + ((a.logits[0] - max).exp() + (a.logits[1] - max).exp()).ln();
            loss += lse - a.logits[target];
            let mut d_out = p;
            d_out[target] -= 1.0;
            for o in 0..2 {
                g2b[o] += d_out[o];
                for j in 0..h {
                    g2w[o * h + j] += d_out[o] * a.hidden[j];
                }
            }
            for j in 0..h {
                let back = d_out[0] * self.layer2.weights[0][j] + d_out[1] * self.layer2.weights[1][j];
                let da = back * (1.0 - a.hidden[j] * a.hidden[j]);
                g1b[j] += da;
                for k in 0..d {
                    g1w[j * d + k] += da * a.input[k];
                }
            }
        }
        let scale = 1.0 / count.max(1) as f64;
        let mut grad = Vec::with_capacity(self.param_count());
        grad.extend(g1w);
        grad.extend(g1b);
        grad.extend(g2w);
        grad.extend(g2b);
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }
}

pub fn train_mlp(data: &LabeledSet, epochs: usize, learning_rate: f64, seed: u64) -> Result<MlpModel> {
    let cfg = MlpConfig {
        epochs,
        learning_rate,
        ..MlpConfig::default()
    };
    train_mlp_with(data, &cfg, seed)
}

pub fn train_mlp_with(data: &LabeledSet, cfg: &MlpConfig, seed: u64) -> Result<MlpModel> {
    data.check_trainable()?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(invalid("MLP needs positive epochs and batch size"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(invalid("MLP learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(invalid("MLP momentum must lie in [0, 1)"));
    }
    let standardizer = Standardizer::fit(data.rows());
    let z: Vec<Vec<f64>> = data.rows().iter().map(|r| standardizer.apply(r)).collect();
    let mut model = MlpModel::init(data.dim(), standardizer, cfg.clone(), seed)?;
    // Shuffling draws from its own stream so initialization is unaffected by
    // the dataset size.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = model.parameters();
    let mut velocity = vec![0.0; params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grad) = model.batch_gradient(
                chunk
                    .iter()
                    .map(|&i| (z[i].as_slice(), data.labels()[i])),
            );
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
            }
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            model.set_parameters(&params)?;
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Divergence("non-finite parameters after training".into()));
    }
    Ok(model)
}
