//! A small fully connected classifier with hand-written backpropagation.
//!
//! Parameters live in one flat vector so any optimizer over `R^N` can train
//! the network. Layer `l` occupies a contiguous block: its weight matrix
//! (`out x in`, row-major) followed by its bias vector.

mod data;

pub use data::Dataset;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    // Derivative expressed through the pre-activation; relu'(0) = 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Layer widths from input to output; hidden layers share one activation and
/// the output is a softmax with cross-entropy loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

/// One dense layer in unflattened form.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(invalid("layer_sizes", "need at least input and output layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(invalid("layer_sizes", "layer widths must be positive"));
        }
        Ok(Self {
            layer_sizes,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Total parameter count `sum(n_i * n_{i+1} + n_{i+1})`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Start offsets of each layer block in the flat vector.
    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layer_sizes.len() - 1);
        let mut at = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        offsets
    }

    pub fn unflatten(&self, theta: &[f64]) -> Result<Vec<Layer>> {
        self.check_params(theta)?;
        let mut layers = Vec::with_capacity(self.layer_sizes.len() - 1);
        let mut at = 0;
        for w in self.layer_sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let weights = theta[at..at + inputs * outputs].to_vec();
            at += inputs * outputs;
            let bias = theta[at..at + outputs].to_vec();
            at += outputs;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        Ok(layers)
    }

    pub fn flatten(&self, layers: &[Layer]) -> Result<Vec<f64>> {
        let expected: Vec<(usize, usize)> =
            self.layer_sizes.windows(2).map(|w| (w[0], w[1])).collect();
        let shapes_ok = layers.len() == expected.len()
            && layers.iter().zip(&expected).all(|(l, &(i, o))| {
                l.inputs == i && l.outputs == o && l.weights.len() == i * o && l.bias.len() == o
            });
        if !shapes_ok {
            return Err(invalid("layers", "layer shapes do not match the spec"));
        }
        let mut theta = Vec::with_capacity(self.param_count());
        for l in layers {
            theta.extend_from_slice(&l.weights);
            theta.extend_from_slice(&l.bias);
        }
        Ok(theta)
    }

    /// Uniform Glorot-style initialisation with zero biases.
    pub fn init_params(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_count());
        for w in self.layer_sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            theta.extend((0..w[0] * w[1]).map(|_| rng.gen_range(-limit..limit)));
            theta.extend(std::iter::repeat_n(0.0, w[1]));
        }
        theta
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    fn check_batch(&self, data: &Dataset, indices: &[usize]) -> Result<()> {
        if indices.is_empty() || data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.dim() != self.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs(),
                actual: data.dim(),
            });
        }
        for &i in indices {
            let label = data.label(i);
            if label >= self.classes() {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: self.classes(),
                });
            }
        }
        Ok(())
    }

    // Pre-activations of every layer for one sample (the last entry is the logits).
    fn pre_activations(&self, theta: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
        let offsets = self.offsets();
        let depth = offsets.len();
        let mut pre = Vec::with_capacity(depth);
        let mut act: Vec<f64> = input.to_vec();
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (inputs, outputs) = (w[0], w[1]);
            let base = offsets[l];
            let bias = &theta[base + inputs * outputs..base + inputs * outputs + outputs];
            let z: Vec<f64> = (0..outputs)
                .map(|o| {
                    let row = &theta[base + o * inputs..base + (o + 1) * inputs];
                    row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>() + bias[o]
                })
                .collect();
            if l + 1 < depth {
                act = z.iter().map(|&v| self.activation.apply(v)).collect();
            }
            pre.push(z);
        }
        pre
    }

    /// Smallest |pre-activation| over hidden units for the given samples.
    /// Gradient checks use it to stay away from relu kinks.
    pub fn min_abs_hidden_preactivation(&self, theta: &[f64], data: &Dataset, indices: &[usize]) -> Result<f64> {
        self.check_params(theta)?;
        self.check_batch(data, indices)?;
        let mut smallest = f64::INFINITY;
        for &i in indices {
            let pre = self.pre_activations(theta, data.row(i));
            for z in &pre[..pre.len() - 1] {
                for v in z {
                    smallest = smallest.min(v.abs());
                }
            }
        }
        Ok(smallest)
    }

    /// Mean cross-entropy over the selected samples.
    pub fn loss(&self, theta: &[f64], data: &Dataset, indices: &[usize]) -> Result<f64> {
        self.check_params(theta)?;
        self.check_batch(data, indices)?;
        let total: f64 = indices
            .iter()
            .map(|&i| {
                let pre = self.pre_activations(theta, data.row(i));
                let logits = pre.last().unwrap();
                log_sum_exp(logits) - logits[data.label(i)]
            })
            .sum();
        Ok(total / indices.len() as f64)
    }

    /// Mean cross-entropy and its exact gradient with respect to `theta`.
    pub fn loss_and_grad(&self, theta: &[f64], data: &Dataset, indices: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_params(theta)?;
        self.check_batch(data, indices)?;
        let offsets = self.offsets();
        let depth = offsets.len();
        let mut grad = vec![0.0; theta.len()];
        let mut total = 0.0;
        for &i in indices {
            let input = data.row(i);
            let pre = self.pre_activations(theta, input);
            let logits = &pre[depth - 1];
            let lse = log_sum_exp(logits);
            let label = data.label(i);
            total += lse - logits[label];

            // d loss / d logits = softmax - onehot
            let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
            delta[label] -= 1.0;

            for l in (0..depth).rev() {
                let (inputs, outputs) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let base = offsets[l];
                let prev: Vec<f64> = if l == 0 {
                    input.to_vec()
                } else {
                    pre[l - 1].iter().map(|&z| self.activation.apply(z)).collect()
                };
                for o in 0..outputs {
                    let row = &mut grad[base + o * inputs..base + (o + 1) * inputs];
                    for (g, a) in row.iter_mut().zip(&prev) {
                        *g += delta[o] * a;
                    }
                    grad[base + inputs * outputs + o] += delta[o];
                }
                if l > 0 {
                    delta = (0..inputs)
                        .map(|k| {
                            let back: f64 = (0..outputs)
                                .map(|o| theta[base + o * inputs + k] * delta[o])
                                .sum();
                            back * self.activation.derivative(pre[l - 1][k])
                        })
                        .collect();
                }
            }
        }
        let scale = 1.0 / indices.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, grad))
    }

    /// Predicted class (arg-max logit, lowest index on ties).
    pub fn predict(&self, theta: &[f64], input: &[f64]) -> Result<usize> {
        self.check_params(theta)?;
        if input.len() != self.inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs(),
                actual: input.len(),
            });
        }
        let pre = self.pre_activations(theta, input);
        Ok(argmax(pre.last().unwrap()))
    }
}

/// Mean cross-entropy of the whole dataset.
pub fn forward(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    spec.loss(theta, data, &all)
}

/// Gradient of [`forward`] with respect to `theta`.
pub fn backward(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..data.len()).collect();
    spec.loss_and_grad(theta, data, &all).map(|(_, g)| g)
}

/// Fraction of samples whose arg-max prediction matches the label.
pub fn accuracy(spec: &MlpSpec, theta: &[f64], data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        if spec.predict(theta, data.row(i))? == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(sizes: &[usize]) -> MlpSpec {
        MlpSpec::new(sizes.to_vec(), Activation::Relu).unwrap()
    }

    #[test]
    fn param_count_matches_formula() {
        assert_eq!(net(&[2, 4, 2]).param_count(), 2 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(net(&[2, 16, 16, 2]).param_count(), 354);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(MlpSpec::new(vec![3], Activation::Relu).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2], Activation::Relu).is_err());
    }

    #[test]
    fn zero_params_give_uniform_loss() {
        let spec = net(&[2, 4, 2]);
        let data = Dataset::gaussian_blobs(10, 2, 2, 1.0, 0).unwrap();
        let loss = forward(&spec, &vec![0.0; spec.param_count()], &data).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_have_small_loss() {
        // 1-2 net without hidden layer: logits = W x + b.
        let spec = net(&[1, 2]);
        let data = Dataset::new(vec![1.0], 1, vec![1], 2).unwrap();
        let theta = [0.0, 10.0, 0.0, 0.0];
        let loss = forward(&spec, &theta, &data).unwrap();
        // ln(1 + e^-10)
        assert!(loss < 1e-3);
        assert!((loss - (-10f64).exp().ln_1p()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_sample_batch_matches_single() {
        let spec = net(&[2, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = spec.init_params(&mut rng);
        let data = Dataset::gaussian_blobs(5, 2, 2, 1.0, 1).unwrap();
        let (l1, g1) = spec.loss_and_grad(&theta, &data, &[2]).unwrap();
        let (l10, g10) = spec.loss_and_grad(&theta, &data, &[2; 10]).unwrap();
        assert!((l1 - l10).abs() < 1e-15);
        for (a, b) in g1.iter().zip(&g10) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_input_kills_first_layer_weight_gradient() {
        let spec = net(&[2, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut theta = spec.init_params(&mut rng);
        // positive first-layer biases so relu units are active
        for b in &mut theta[8..12] {
            *b = 0.5;
        }
        let data = Dataset::new(vec![0.0, 0.0], 2, vec![1], 2).unwrap();
        let g = backward(&spec, &theta, &data).unwrap();
        assert!(g[..8].iter().all(|v| *v == 0.0));
        assert!(g[8..12].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn flatten_round_trip() {
        let spec = net(&[4, 16, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = spec.init_params(&mut rng);
        let layers = spec.unflatten(&theta).unwrap();
        assert_eq!(layers[0].weights.len(), 64);
        assert_eq!(spec.flatten(&layers).unwrap(), theta);
    }

    #[test]
    fn label_out_of_range() {
        let spec = net(&[1, 2]);
        let data = Dataset::new(vec![1.0], 1, vec![2], 3).unwrap();
        assert!(matches!(
            forward(&spec, &[0.0; 4], &data),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn empty_dataset_accuracy_errors() {
        let spec = net(&[1, 2]);
        let data = Dataset::new(vec![], 1, vec![], 2).unwrap();
        assert!(matches!(
            accuracy(&spec, &[0.0; 4], &data),
            Err(Error::EmptyDataset)
        ));
    }
}
