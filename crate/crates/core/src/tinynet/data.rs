//! Seeded synthetic classification sets with CSV import/export.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Features stored row-major (`len x dim`), one integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "feature dimension must be ≥ 1"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                actual: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self {
            features,
            dim,
            labels,
            classes,
        })
    }

    /// Gaussian blobs with unit variance, centres evenly spaced on a circle of
    /// `radius` in the first two feature dimensions. Sample `i` has label
    /// `i % classes`, so class counts differ by at most one.
    pub fn gaussian_blobs(len: usize, dim: usize, classes: usize, radius: f64, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(invalid("classes", "need at least two classes"));
        }
        if dim < 2 {
            return Err(invalid("dim", "blobs need at least two feature dimensions"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(len * dim);
        let mut labels = Vec::with_capacity(len);
        for i in 0..len {
            let label = i % classes;
            let angle = 2.0 * PI * label as f64 / classes as f64;
            for d in 0..dim {
                let centre = match d {
                    0 => radius * angle.cos(),
                    1 => radius * angle.sin(),
                    _ => 0.0,
                };
                let noise: f64 = rng.sample(StandardNormal);
                features.push(centre + noise);
            }
            labels.push(label);
        }
        Self::new(features, dim, labels, classes)
    }

    /// Two interleaved spirals in the plane.
    pub fn two_spirals(len: usize, noise: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(len * 2);
        let mut labels = Vec::with_capacity(len);
        for i in 0..len {
            let label = i % 2;
            let t: f64 = rng.gen_range(0.25..1.0);
            let angle = 3.0 * PI * t + PI * label as f64;
            let r = 3.0 * t;
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            features.push(r * angle.cos() + noise * nx);
            features.push(r * angle.sin() + noise * ny);
            labels.push(label);
        }
        Self::new(features, 2, labels, 2)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Writes `x0,..,x{d-1},label` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        header.push("label".to_string());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut record: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.labels[i].to_string());
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Dataset::write_csv`]. The class count
    /// is `max(label) + 1`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let width = input.headers()?.len();
        if width < 2 {
            return Err(Error::Config("dataset CSV needs feature columns and a label".into()));
        }
        let dim = width - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for record in input.records() {
            let record = record?;
            for field in record.iter().take(dim) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad feature value `{field}`")))?;
                features.push(v);
            }
            let label_field = &record[dim];
            let label: usize = label_field
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad label `{label_field}`")))?;
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(features, dim, labels, classes)
    }
}
