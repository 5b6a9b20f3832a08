use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Classifier, TrainingConfig};
use crate::dataset::Dataset;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::math::{bce_from_logit, rng, sigmoid, sub_seed};

/// Hidden widths of the default network.
pub const DEFAULT_LAYERS: [usize; 3] = [50, 100, 200];

/// Fully connected layer; `weights` is `out × in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn out_dim(&self) -> usize {
        self.bias.len()
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .iter()
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }
}

/// Feed-forward network: rectifier hidden layers, one sigmoid output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
}

struct Trace {
    /// Inputs to each layer; `inputs[0]` is `x`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    score: f64,
}

impl MlpModel {
    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer sizes must be positive".into()));
        }
        let mut rng = rng(seed);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &out in hidden.iter().chain(std::iter::once(&1)) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..out)
                .map(|_| (0..fan_in).map(|_| rng.random_range(-bound..bound)).collect())
                .collect();
            let bias = (0..out).map(|_| rng.random_range(-bound..bound)).collect();
            layers.push(DenseLayer { weights, bias });
            fan_in = out;
        }
        Ok(Self { layers })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::InvalidConfig("network has no layers".into()))?;
        if last.out_dim() != 1 {
            return Err(Error::InvalidConfig("output layer must have one unit".into()));
        }
        let mut expected_in = self.layers[0].in_dim();
        for layer in &self.layers {
            if layer.in_dim() != expected_in || layer.weights.iter().any(|r| r.len() != expected_in) {
                return Err(Error::InvalidConfig("incompatible layer dimensions".into()));
            }
            if layer.weights.len() != layer.bias.len() {
                return Err(Error::InvalidConfig("bias length differs from layer width".into()));
            }
            for row in &layer.weights {
                check_finite(row, "network weights")?;
            }
            check_finite(&layer.bias, "network biases")?;
            expected_in = layer.out_dim();
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim() * (l.in_dim() + 1)).sum()
    }

    fn forward(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut current = x.to_vec();
        let mut z = Vec::new();
        let (hidden, output) = self.layers.split_at(self.layers.len() - 1);
        for layer in hidden {
            layer.apply(&current, &mut z);
            let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            inputs.push(std::mem::replace(&mut current, a));
            pre.push(z.clone());
        }
        output[0].apply(&current, &mut z);
        inputs.push(current);
        Trace {
            inputs,
            pre,
            score: z[0],
        }
    }

    /// Backpropagates `dL/dscore` through a forward trace. Calls `on_layer`
    /// with each layer index and its output delta (from last to first), and
    /// returns the gradient with respect to the network input.
    fn backward(&self, trace: &Trace, dscore: f64, mut on_layer: impl FnMut(usize, &[f64], &[f64])) -> Vec<f64> {
        let mut delta = vec![dscore];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            on_layer(l, &delta, &trace.inputs[l]);
            let mut back = vec![0.0; layer.in_dim()];
            for (row, d) in layer.weights.iter().zip(&delta) {
                for (b, w) in back.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            if l > 0 {
                // rectifier subgradient is 0 at exactly 0
                for (b, z) in back.iter_mut().zip(&trace.pre[l - 1]) {
                    if *z <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
        delta
    }

    fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            for row in &layer.weights {
                flat.extend_from_slice(row);
            }
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    fn unflatten(&mut self, flat: &[f64]) {
        let mut i = 0;
        for layer in &mut self.layers {
            for row in &mut layer.weights {
                let n = row.len();
                row.copy_from_slice(&flat[i..i + n]);
                i += n;
            }
            let n = layer.bias.len();
            layer.bias.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
    }

    /// Offsets of each layer's block in the flattened parameter vector.
    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            offsets.push(at);
            at += layer.out_dim() * (layer.in_dim() + 1);
        }
        offsets
    }
}

impl Classifier for MlpModel {
    fn dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.forward(x).score)
    }

    fn input_gradient(&self, x: &[f64], target: u8) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let trace = self.forward(x);
        let dscore = sigmoid(trace.score) - f64::from(target);
        Ok(self.backward(&trace, dscore, |_, _, _| {}))
    }
}

/// Mini-batch Adam on binary cross-entropy. Batches are reshuffled every
/// epoch from a stream seeded by `config.seed`; zero epochs returns the
/// initialization.
pub fn train_mlp(data: &Dataset, config: &TrainingConfig, hidden: &[usize]) -> Result<MlpModel> {
    config.validate()?;
    data.check_trainable()?;
    let mut model = MlpModel::init(data.dim(), hidden, sub_seed(config.seed, 1))?;
    let mut shuffle_rng = rng(sub_seed(config.seed, 2));
    let mut params = model.flatten();
    let mut opt = config.optimizer(params.len());
    let offsets = model.offsets();
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = (&data.features[i], data.labels[i]);
                let trace = model.forward(x);
                epoch_loss += bce_from_logit(trace.score, y);
                let dscore = (sigmoid(trace.score) - f64::from(y)) * scale;
                model.backward(&trace, dscore, |l, delta, input| {
                    let layer = &model.layers[l];
                    let in_dim = layer.in_dim();
                    let base = offsets[l];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &mut grad[base + o * in_dim..base + (o + 1) * in_dim];
                        for (g, a) in row.iter_mut().zip(input) {
                            *g += d * a;
                        }
                    }
                    let bias_base = base + layer.out_dim() * in_dim;
                    for (g, d) in grad[bias_base..bias_base + delta.len()].iter_mut().zip(delta) {
                        *g += d;
                    }
                });
            }
            opt.step(&mut params, &grad);
            model.unflatten(&params);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
    }
    Ok(model)
}
