use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Objective;
use crate::error::{invalid, Error, Result};
use crate::tinynet::{Dataset, MlpSpec};

/// Mini-batch cross-entropy of a [`MlpSpec`] network over a dataset.
///
/// Batch token `k` selects batch `k % batches_per_epoch` of data epoch
/// `k / batches_per_epoch`. Each data epoch shuffles the sample indices with
/// a ChaCha8 stream keyed by `(seed, epoch)` and cuts them into consecutive
/// batches; a trailing remainder smaller than `batch_size` is skipped.
#[derive(Debug, Clone)]
pub struct MinibatchObjective {
    model: MlpSpec,
    data: Dataset,
    batch_size: usize,
    seed: u64,
}

impl MinibatchObjective {
    pub fn new(model: MlpSpec, data: Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(invalid("batch_size", "must be ≥ 1"));
        }
        if batch_size > data.len() {
            return Err(invalid(
                "batch_size",
                format!("{batch_size} exceeds dataset size {}", data.len()),
            ));
        }
        if data.dim() != model.inputs() {
            return Err(Error::DimensionMismatch {
                expected: model.inputs(),
                actual: data.dim(),
            });
        }
        Ok(Self {
            model,
            data,
            batch_size,
            seed,
        })
    }

    pub fn model(&self) -> &MlpSpec {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len() / self.batch_size
    }

    /// Sample indices for a batch token.
    pub fn batch_indices(&self, token: u64) -> Vec<usize> {
        let m = self.data.len();
        if self.batch_size == m {
            return (0..m).collect();
        }
        let per_epoch = self.batches_per_epoch() as u64;
        let epoch = token / per_epoch;
        let slot = (token % per_epoch) as usize;
        let mut order: Vec<usize> = (0..m).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
        order[slot * self.batch_size..(slot + 1) * self.batch_size].to_vec()
    }

    pub fn loss_and_grad(&self, params: &[f64], token: u64) -> Result<(f64, Vec<f64>)> {
        self.model
            .loss_and_grad(params, &self.data, &self.batch_indices(token))
    }

    /// Loss over every sample.
    pub fn full_loss(&self, params: &[f64]) -> Result<f64> {
        crate::tinynet::forward(&self.model, params, &self.data)
    }

    /// A fixed-batch view that behaves as a deterministic [`Objective`].
    pub fn batch(&self, token: u64) -> BatchView<'_> {
        BatchView {
            source: self,
            indices: self.batch_indices(token),
        }
    }
}

/// Loss and gradient of one selected mini-batch.
pub fn minibatch_loss_and_grad(
    objective: &MinibatchObjective,
    params: &[f64],
    batch_token: u64,
) -> Result<(f64, Vec<f64>)> {
    objective.loss_and_grad(params, batch_token)
}

#[derive(Debug, Clone)]
pub struct BatchView<'a> {
    source: &'a MinibatchObjective,
    indices: Vec<usize>,
}

impl BatchView<'_> {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl Objective for BatchView<'_> {
    fn dim(&self) -> usize {
        self.source.model.param_count()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.source.model.loss(x, &self.source.data, &self.indices)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.value_and_gradient(x).map(|(_, g)| g)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.source
            .model
            .loss_and_grad(x, &self.source.data, &self.indices)
    }
}
