//! Channel-compression harness.
//!
//! A dense autoencoder squeezes flattened channels through a low-dimensional
//! code and reconstructs them. Its only job here is the cross-evaluation
//! protocol: train one compressor per dataset, evaluate every (train, test)
//! pair, and report the NMSE table. A generator that captured its source
//! distribution shows up as low NMSE between the matching real/generated
//! pair and high NMSE elsewhere.

use serde::{Deserialize, Serialize};

use crate::autograd::{adam_step, AdamState, Tape, TensorId};
use crate::datasets::{denormalize, normalize, ChannelDataset};
use crate::error::{Error, Result};
use crate::rng::Rng64;

const INIT_STREAM: u64 = 11;
const SHUFFLE_STREAM: u64 = 12;

/// Autoencoder configuration. The default squeezes a 16x16 channel's 512
/// real values through a 32-dimensional code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressorConfig {
    pub code_dim: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig {
            code_dim: 32,
            hidden: vec![256],
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

/// Trained compression autoencoder.
pub struct Compressor {
    pub config: CompressorConfig,
    input_dim: usize,
    n_r: usize,
    n_t: usize,
    /// Normalization scale of the training dataset.
    pub scale: f64,
    /// Mean squared reconstruction loss per epoch.
    pub loss_history: Vec<f64>,
    /// NMSE on the training dataset after the final epoch.
    pub final_train_nmse: f64,
    weights: Vec<(Vec<usize>, Vec<f64>)>,
}

fn layer_widths(input_dim: usize, config: &CompressorConfig) -> Vec<usize> {
    // Encoder: input -> hidden... -> code; decoder mirrors back to input.
    let mut widths = vec![input_dim];
    widths.extend(&config.hidden);
    widths.push(config.code_dim);
    widths.extend(config.hidden.iter().rev());
    widths.push(input_dim);
    widths
}

fn init_weights(input_dim: usize, config: &CompressorConfig) -> Vec<(Vec<usize>, Vec<f64>)> {
    let widths = layer_widths(input_dim, config);
    let mut rng = Rng64::derive(config.seed, &[INIT_STREAM]);
    let mut weights = Vec::new();
    for pair in widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        weights.push((vec![fan_in, fan_out], w));
        weights.push((vec![fan_out], vec![0.0; fan_out]));
    }
    weights
}

impl Compressor {
    fn insert_params(&self, t: &mut Tape) -> Vec<TensorId> {
        self.weights
            .iter()
            .map(|(shape, values)| t.param(values.clone(), shape.clone()))
            .collect()
    }

    /// Encoder layer count (dense layers up to and including the code head).
    fn encoder_layers(&self) -> usize {
        self.config.hidden.len() + 1
    }

    fn forward(
        &self,
        t: &mut Tape,
        ids: &[TensorId],
        x: TensorId,
        up_to_code: bool,
    ) -> TensorId {
        let total_layers = 2 * (self.config.hidden.len() + 1);
        let stop = if up_to_code {
            self.encoder_layers()
        } else {
            total_layers
        };
        let mut h = x;
        for layer in 0..stop {
            let a = t.affine(h, ids[2 * layer], ids[2 * layer + 1]);
            // Code and output layers stay linear.
            let is_code = layer + 1 == self.encoder_layers();
            let is_out = layer + 1 == total_layers;
            h = if is_code || is_out { a } else { t.relu(a) };
        }
        h
    }

    /// Codes for a batch of channels (training-scale units).
    pub fn compress(&self, ds: &ChannelDataset) -> Vec<Vec<f64>> {
        let rows = self.scaled_rows(ds);
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);
        let x_vals: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = t.constant(x_vals, vec![rows.len(), self.input_dim]);
        let code = self.forward(&mut t, &ids, x, true);
        t.values(code)
            .chunks(self.config.code_dim)
            .map(|c| c.to_vec())
            .collect()
    }

    fn scaled_rows(&self, ds: &ChannelDataset) -> Vec<Vec<f64>> {
        let raw = if ds.scale != 1.0 {
            denormalize(ds)
        } else {
            ds.clone()
        };
        let inv = 1.0 / self.scale;
        raw.samples
            .iter()
            .map(|h| h.to_planes().iter().map(|v| v * inv).collect())
            .collect()
    }

    fn reconstruct_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);
        let x_vals: Vec<f64> = rows.iter().flatten().copied().collect();
        let x = t.constant(x_vals, vec![rows.len(), self.input_dim]);
        let out = self.forward(&mut t, &ids, x, false);
        t.values(out)
            .chunks(self.input_dim)
            .map(|c| c.to_vec())
            .collect()
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|(_, v)| v.clone()).collect()
    }

    /// Zeroes the decoder output layer; reconstructions become exactly zero.
    pub fn zero_output_layer(&mut self) {
        let n = self.weights.len();
        for idx in [n - 2, n - 1] {
            self.weights[idx].1.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_r, self.n_t)
    }
}

/// Trains a compressor on squared-error reconstruction of the (normalized)
/// training set. Deterministic given the config seed.
pub fn train_compressor(
    train_set: &ChannelDataset,
    config: &CompressorConfig,
) -> Result<Compressor> {
    if train_set.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    let (n_r, n_t) = train_set.shape();
    let input_dim = 2 * n_r * n_t;
    if config.code_dim == 0 || config.code_dim >= input_dim {
        return Err(Error::validation(format!(
            "code_dim {} must be in [1, {}) to actually compress",
            config.code_dim, input_dim
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::validation("batch_size must be at least 1"));
    }
    let normalized = normalize(train_set)?;
    let rows: Vec<Vec<f64>> = normalized.samples.iter().map(|h| h.to_planes()).collect();

    let mut compressor = Compressor {
        config: config.clone(),
        input_dim,
        n_r,
        n_t,
        scale: normalized.scale,
        loss_history: Vec::new(),
        final_train_nmse: f64::NAN,
        weights: init_weights(input_dim, config),
    };
    let mut adam = AdamState::new(
        config.learning_rate,
        &compressor
            .weights
            .iter()
            .map(|(_, v)| v.len())
            .collect::<Vec<_>>(),
    );

    let n = rows.len();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng64::derive(config.seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for (batch_idx, window) in order.chunks(config.batch_size).enumerate() {
            let mut t = Tape::new();
            let ids = compressor.insert_params(&mut t);
            let x_vals: Vec<f64> = window.iter().flat_map(|&i| rows[i].clone()).collect();
            let x = t.constant(x_vals, vec![window.len(), input_dim]);
            let out = compressor.forward(&mut t, &ids, x, false);
            let residual = t.sub(x, out);
            let sq = t.square(residual);
            let total = t.sum(sq);
            let loss = t.scale(total, 1.0 / window.len() as f64);

            let loss_value = t.values(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss {loss_value} at epoch {epoch}, batch {batch_idx}"
                )));
            }
            t.backward(loss);
            let grads: Vec<Vec<f64>> = ids.iter().map(|&id| t.grad(id).to_vec()).collect();
            drop(t);
            let mut values: Vec<Vec<f64>> =
                compressor.weights.iter().map(|(_, v)| v.clone()).collect();
            adam_step(&mut adam, &mut values, &grads);
            for ((_, w), v) in compressor.weights.iter_mut().zip(values) {
                *w = v;
            }
            epoch_loss += loss_value * window.len() as f64;
        }
        compressor.loss_history.push(epoch_loss / n as f64);
    }

    compressor.final_train_nmse = eval_nmse(&compressor, train_set)?;
    Ok(compressor)
}

/// Mean per-sample NMSE of compress-then-reconstruct over a test set. The
/// test set is rescaled into the compressor's training units first; NMSE
/// itself is scale-free.
pub fn eval_nmse(compressor: &Compressor, test_set: &ChannelDataset) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::validation("test dataset is empty"));
    }
    if test_set.shape() != compressor.shape() {
        return Err(Error::validation(format!(
            "test shape {:?} does not match compressor shape {:?}",
            test_set.shape(),
            compressor.shape()
        )));
    }
    let rows = compressor.scaled_rows(test_set);
    let mut total = 0.0;
    for block in rows.chunks(1024) {
        let recon = compressor.reconstruct_rows(block);
        for (x, x_hat) in block.iter().zip(&recon) {
            let num: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = x.iter().map(|a| a * a).sum();
            if den == 0.0 {
                return Err(Error::validation("zero channel in NMSE evaluation"));
            }
            total += num / den;
        }
    }
    Ok(total / rows.len() as f64)
}

/// Full cross-evaluation grid: one compressor per training set, NMSE on
/// every test set.
#[derive(Debug, Clone, Serialize)]
pub struct CrossEvalTable {
    pub train_names: Vec<String>,
    pub test_names: Vec<String>,
    /// `nmse[i][j]` is the NMSE of the compressor trained on set `i`
    /// evaluated on set `j`.
    pub nmse: Vec<Vec<f64>>,
}

impl CrossEvalTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train");
        for name in &self.test_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.train_names.iter().zip(&self.nmse) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains one compressor per named training set and fills the NMSE matrix
/// over the named test sets.
pub fn cross_eval(
    train_sets: &[(String, ChannelDataset)],
    test_sets: &[(String, ChannelDataset)],
    config: &CompressorConfig,
) -> Result<CrossEvalTable> {
    if train_sets.is_empty() || test_sets.is_empty() {
        return Err(Error::validation(
            "cross evaluation needs at least one training and one test set",
        ));
    }
    let shape = train_sets[0].1.shape();
    for (name, ds) in train_sets.iter().chain(test_sets) {
        if ds.shape() != shape {
            return Err(Error::validation(format!(
                "dataset {name} has shape {:?}, expected {:?}",
                ds.shape(),
                shape
            )));
        }
    }

    let mut table = CrossEvalTable {
        train_names: train_sets.iter().map(|(n, _)| n.clone()).collect(),
        test_names: test_sets.iter().map(|(n, _)| n.clone()).collect(),
        nmse: Vec::with_capacity(train_sets.len()),
    };
    for (_, train_ds) in train_sets {
        let compressor = train_compressor(train_ds, config)?;
        let mut row = Vec::with_capacity(test_sets.len());
        for (_, test_ds) in test_sets {
            row.push(eval_nmse(&compressor, test_ds)?);
        }
        table.nmse.push(row);
    }
    Ok(table)
}
