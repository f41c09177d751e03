//! Generative channel models.
//!
//! Two VAE pipelines share one encoder architecture and differ in what the
//! decoder predicts:
//!
//! - **direct** — the decoder outputs the `3P` path parameters themselves
//!   (gains plus tanh-squashed angles) and the channel is rebuilt with the
//!   geometric model. The reconstruction loss then depends on the angles
//!   through the steering-vector phases, a heavily multimodal surface that
//!   optimizers rarely escape; the pipeline is kept runnable precisely so
//!   that failure mode can be measured.
//! - **linearized** — the decoder outputs a real gain matrix over the
//!   precomputed array-response dictionary, making the reconstruction loss
//!   linear in the decoder output. An L1 penalty keeps the gain matrix
//!   sparse so its nonzeros stay interpretable as paths.
//!
//! Training is fully deterministic given the config seed: shuffles, noise
//! draws and weight init all derive from it. Checkpoints serialize to the
//! `CKP1` format (JSON header + little-endian `f64` weight blob).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autograd::{adam_step, AdamState, ConstMatrix, CustomOp, Tape, TensorId};
use crate::datasets::{denormalize, normalize, ChannelDataset};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::ppgc::{
    array_response, build_dictionary, ArrayConfig, Dictionary, DictionaryConfig, GainMatrix,
    PathParams,
};
use crate::rng::Rng64;

const CKPT_MAGIC: &[u8; 4] = b"CKP1";

// Stream tags keeping weight init, shuffles, training noise and sampling
// noise on disjoint RNG streams.
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const SAMPLE_STREAM: u64 = 4;

/// Initial bias of the log-variance head. Starting the posterior nearly
/// deterministic (sigma ~ e^{-2}) lets the decoder latch onto the latent
/// before the KL term widens the posterior; a unit-variance start drowns
/// the latent in noise and the decoder collapses to the data mean.
const LOG_VAR_BIAS_INIT: f64 = -4.0;

/// Negative-side slope of the trunk activations.
const LEAKY_SLOPE: f64 = 0.2;

/// Which quantity the decoder predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VaeMode {
    Direct,
    Linearized,
}

impl std::fmt::Display for VaeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VaeMode::Direct => write!(f, "direct"),
            VaeMode::Linearized => write!(f, "linearized"),
        }
    }
}

/// Generative model configuration. Defaults: latent 64, encoder hidden
/// [512, 256] (decoder mirrored), resolution 64, 300 epochs, batch 256,
/// learning rate 1e-3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub mode: VaeMode,
    pub latent_dim: usize,
    /// Encoder hidden layer widths; the decoder mirrors them in reverse.
    pub hidden: Vec<usize>,
    /// KL weight in the loss.
    pub alpha_d: f64,
    /// L1 sparsity weight on the gain matrix (linearized mode only).
    pub alpha_s: f64,
    /// Dictionary resolution (linearized mode only).
    pub resolution: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Number of predicted paths (direct mode only).
    pub paths: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl VaeConfig {
    pub fn linearized(resolution: usize, seed: u64) -> Self {
        VaeConfig {
            mode: VaeMode::Linearized,
            latent_dim: 64,
            hidden: vec![512, 256],
            alpha_d: 1e-3,
            alpha_s: 1e-4,
            resolution,
            theta_min: -std::f64::consts::FRAC_PI_2,
            theta_max: std::f64::consts::FRAC_PI_2,
            paths: None,
            epochs: 300,
            batch_size: 256,
            learning_rate: 1e-3,
            seed,
        }
    }

    pub fn direct(paths: usize, seed: u64) -> Self {
        VaeConfig {
            mode: VaeMode::Direct,
            paths: Some(paths),
            ..VaeConfig::linearized(64, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::validation("latent_dim must be at least 1"));
        }
        if self.alpha_d < 0.0 || self.alpha_s < 0.0 {
            return Err(Error::validation("loss weights must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        match self.mode {
            VaeMode::Direct => {
                if self.paths.unwrap_or(0) == 0 {
                    return Err(Error::validation("direct mode requires paths >= 1"));
                }
            }
            VaeMode::Linearized => {
                if self.resolution == 0 {
                    return Err(Error::validation("linearized mode requires resolution >= 1"));
                }
                if !(self.theta_min < self.theta_max) {
                    return Err(Error::validation(format!(
                        "angle range is empty: [{}, {}]",
                        self.theta_min, self.theta_max
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dictionary_config(&self, array: ArrayConfig) -> DictionaryConfig {
        DictionaryConfig {
            resolution: self.resolution,
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            array,
        }
    }
}

/// Named weight tensor; declaration order is the checkpoint blob order.
#[derive(Debug, Clone)]
struct ParamTensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Indices into the parameter list for each layer of the network.
#[derive(Debug, Clone)]
struct ParamLayout {
    enc_layers: Vec<(usize, usize)>,
    enc_mu: (usize, usize),
    enc_log_var: (usize, usize),
    dec_layers: Vec<(usize, usize)>,
    /// Gain-matrix head (linearized) or gain head (direct).
    head_main: (usize, usize),
    /// Angle head, direct mode only.
    head_angle: Option<(usize, usize)>,
}

/// Differentiable multipath synthesis: maps a `[B, 3P]` parameter block
/// (gains, arrival angles, departure angles) to two-plane channels
/// `[B, 2*n_r*n_t]` through the geometric model, with analytic gradients for
/// all three parameter groups.
#[derive(Debug)]
struct PpgcSynthesize {
    array: ArrayConfig,
    paths: usize,
}

impl CustomOp for PpgcSynthesize {
    fn name(&self) -> &'static str {
        "ppgc_synthesize"
    }

    fn forward(&self, inputs: &[(&[f64], &[usize])]) -> (Vec<f64>, Vec<usize>) {
        let (s, shape) = inputs[0];
        let p = self.paths;
        assert_eq!(shape[1], 3 * p, "parameter block must have 3*{p} columns");
        let batch = shape[0];
        let (n_r, n_t) = (self.array.n_r, self.array.n_t);
        let plane = n_r * n_t;
        let mut out = vec![0.0; batch * 2 * plane];
        for b in 0..batch {
            let row = &s[b * 3 * p..(b + 1) * 3 * p];
            let dst = &mut out[b * 2 * plane..(b + 1) * 2 * plane];
            for k in 0..p {
                let (gain, theta_a, theta_d) = (row[k], row[p + k], row[2 * p + k]);
                let a_r = array_response(theta_a, n_r, self.array.u);
                let a_t = array_response(theta_d, n_t, self.array.u);
                for r in 0..n_r {
                    for c in 0..n_t {
                        let z = a_r[r] * a_t[c].conj();
                        dst[r * n_t + c] += gain * z.re;
                        dst[plane + r * n_t + c] += gain * z.im;
                    }
                }
            }
        }
        (out, vec![batch, 2 * plane])
    }

    fn backward(
        &self,
        inputs: &[(&[f64], &[usize])],
        _out_values: &[f64],
        out_grad: &[f64],
    ) -> Vec<Vec<f64>> {
        let (s, shape) = inputs[0];
        let p = self.paths;
        let batch = shape[0];
        let (n_r, n_t, u) = (self.array.n_r, self.array.n_t, self.array.u);
        let plane = n_r * n_t;
        let mut grad = vec![0.0; s.len()];
        for b in 0..batch {
            let row = &s[b * 3 * p..(b + 1) * 3 * p];
            let g_out = &out_grad[b * 2 * plane..(b + 1) * 2 * plane];
            let g_row = &mut grad[b * 3 * p..(b + 1) * 3 * p];
            for k in 0..p {
                let (gain, theta_a, theta_d) = (row[k], row[p + k], row[2 * p + k]);
                let a_r = array_response(theta_a, n_r, u);
                let a_t = array_response(theta_d, n_t, u);
                // Phase derivatives: d(phase)/d(theta_a) = u*r*cos(theta_a),
                // d(phase)/d(theta_d) = -u*c*cos(theta_d).
                let da = u * theta_a.cos();
                let dd = u * theta_d.cos();
                let (mut d_gain, mut d_ta, mut d_td) = (0.0, 0.0, 0.0);
                for r in 0..n_r {
                    for c in 0..n_t {
                        let z = a_r[r] * a_t[c].conj();
                        let gre = g_out[r * n_t + c];
                        let gim = g_out[plane + r * n_t + c];
                        d_gain += gre * z.re + gim * z.im;
                        let kappa_a = da * r as f64;
                        d_ta += gain * kappa_a * (gim * z.re - gre * z.im);
                        let kappa_d = dd * c as f64;
                        d_td += gain * kappa_d * (gre * z.im - gim * z.re);
                    }
                }
                g_row[k] = d_gain;
                g_row[p + k] = d_ta;
                g_row[2 * p + k] = d_td;
            }
        }
        vec![grad]
    }
}

/// The generative model: config, array geometry, weights, and (in linearized
/// mode) the shared dictionary plus its flattened synthesis matrix.
pub struct Vae {
    config: VaeConfig,
    array: ArrayConfig,
    layout: ParamLayout,
    params: Vec<ParamTensor>,
    dictionary: Option<Dictionary>,
    synthesis: Option<Arc<ConstMatrix>>,
}

/// Flattens every dictionary atom into a `[R^2, 2*n_r*n_t]` matrix so the
/// linear synthesis step becomes one dense multiply.
fn synthesis_matrix(dict: &Dictionary) -> ConstMatrix {
    let array = dict.config().array;
    let cols = 2 * array.n_r * array.n_t;
    let r = dict.resolution();
    let mut data = Vec::with_capacity(r * r * cols);
    for atom in dict.atoms() {
        data.extend(atom.to_planes());
    }
    ConstMatrix::new(r * r, cols, data)
}

fn glorot_init(rng: &mut Rng64, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.uniform(-bound, bound))
        .collect()
}

impl Vae {
    pub fn new(config: VaeConfig, array: ArrayConfig) -> Result<Self> {
        config.validate()?;
        array.validate().map_err(Error::validation)?;
        let input_dim = 2 * array.n_r * array.n_t;
        let mut rng = Rng64::derive(config.seed, &[INIT_STREAM]);
        let mut params = Vec::new();
        let dense = |name: &str,
                     fan_in: usize,
                     fan_out: usize,
                     params: &mut Vec<ParamTensor>,
                     rng: &mut Rng64| {
            params.push(ParamTensor {
                name: format!("{name}.w"),
                shape: vec![fan_in, fan_out],
                values: glorot_init(rng, fan_in, fan_out),
            });
            params.push(ParamTensor {
                name: format!("{name}.b"),
                shape: vec![fan_out],
                values: vec![0.0; fan_out],
            });
            (params.len() - 2, params.len() - 1)
        };

        let mut enc_layers = Vec::new();
        let mut width = input_dim;
        for (i, &h) in config.hidden.iter().enumerate() {
            enc_layers.push(dense(&format!("enc{i}"), width, h, &mut params, &mut rng));
            width = h;
        }
        let enc_mu = dense("enc_mu", width, config.latent_dim, &mut params, &mut rng);
        let enc_log_var = dense("enc_log_var", width, config.latent_dim, &mut params, &mut rng);
        params[enc_log_var.1]
            .values
            .iter_mut()
            .for_each(|b| *b = LOG_VAR_BIAS_INIT);

        let mut dec_layers = Vec::new();
        width = config.latent_dim;
        for (i, &h) in config.hidden.iter().rev().enumerate() {
            dec_layers.push(dense(&format!("dec{i}"), width, h, &mut params, &mut rng));
            width = h;
        }

        let (head_main, head_angle, dictionary, synthesis) = match config.mode {
            VaeMode::Linearized => {
                let r = config.resolution;
                let head = dense("dec_gains", width, r * r, &mut params, &mut rng);
                let dict = build_dictionary(&config.dictionary_config(array));
                let synth = Arc::new(synthesis_matrix(&dict));
                (head, None, Some(dict), Some(synth))
            }
            VaeMode::Direct => {
                let p = config.paths.unwrap();
                let gain = dense("dec_path_gains", width, p, &mut params, &mut rng);
                let angle = dense("dec_path_angles", width, 2 * p, &mut params, &mut rng);
                (gain, Some(angle), None, None)
            }
        };

        Ok(Vae {
            layout: ParamLayout {
                enc_layers,
                enc_mu,
                enc_log_var,
                dec_layers,
                head_main,
                head_angle,
            },
            config,
            array,
            params,
            dictionary,
            synthesis,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn array(&self) -> ArrayConfig {
        self.array
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        self.dictionary.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        2 * self.array.n_r * self.array.n_t
    }

    /// Named weight tensors in declaration order.
    pub fn tensor_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn tensor(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| (p.shape.as_slice(), p.values.as_slice()))
    }

    pub fn set_tensor(&mut self, name: &str, values: Vec<f64>) {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("no tensor named {name}"));
        assert_eq!(
            values.len(),
            p.values.len(),
            "tensor {name}: length {} does not match {}",
            values.len(),
            p.values.len()
        );
        p.values = values;
    }

    /// All weights concatenated in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.values.clone()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let total: usize = self.params.iter().map(|p| p.values.len()).sum();
        assert_eq!(flat.len(), total, "flat parameter length mismatch");
        let mut off = 0;
        for p in &mut self.params {
            let len = p.values.len();
            p.values.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }

    fn insert_params(&self, t: &mut Tape) -> Vec<TensorId> {
        self.params
            .iter()
            .map(|p| t.param(p.values.clone(), p.shape.clone()))
            .collect()
    }

    fn forward_encoder(
        &self,
        t: &mut Tape,
        ids: &[TensorId],
        x: TensorId,
    ) -> (TensorId, TensorId) {
        // Unit-mean-power channels have per-entry magnitude ~1/sqrt(dim);
        // rescaling to O(1) features keeps early gradients alive.
        let mut h = t.scale(x, (self.input_dim() as f64).sqrt());
        for &(w, b) in &self.layout.enc_layers {
            let a = t.affine(h, ids[w], ids[b]);
            h = t.leaky_relu(a, LEAKY_SLOPE);
        }
        let (wm, bm) = self.layout.enc_mu;
        let (wv, bv) = self.layout.enc_log_var;
        let mu = t.affine(h, ids[wm], ids[bm]);
        let log_var = t.affine(h, ids[wv], ids[bv]);
        (mu, log_var)
    }

    /// Decoder trunk plus mode head. Returns the raw decoder output: the
    /// flat gain matrix `[B, R^2]` (linearized) or the parameter block
    /// `[B, 3P]` (direct).
    fn forward_decoder(&self, t: &mut Tape, ids: &[TensorId], z: TensorId) -> TensorId {
        let mut h = z;
        for &(w, b) in &self.layout.dec_layers {
            let a = t.affine(h, ids[w], ids[b]);
            h = t.leaky_relu(a, LEAKY_SLOPE);
        }
        let (wo, bo) = self.layout.head_main;
        match self.config.mode {
            VaeMode::Linearized => t.affine(h, ids[wo], ids[bo]),
            VaeMode::Direct => {
                let gains = t.affine(h, ids[wo], ids[bo]);
                let (wa, ba) = self.layout.head_angle.unwrap();
                let raw = t.affine(h, ids[wa], ids[ba]);
                let squashed = t.tanh(raw);
                let angles = t.scale(squashed, std::f64::consts::PI);
                t.concatenate(&[gains, angles], 1)
            }
        }
    }

    /// Decoder output to two-plane channels `[B, 2*n_r*n_t]`.
    fn forward_synthesis(&self, t: &mut Tape, decoded: TensorId) -> TensorId {
        match self.config.mode {
            VaeMode::Linearized => t.matmul_const(decoded, self.synthesis.clone().unwrap()),
            VaeMode::Direct => t.custom(
                Arc::new(PpgcSynthesize {
                    array: self.array,
                    paths: self.config.paths.unwrap(),
                }),
                &[decoded],
            ),
        }
    }

    /// Full differentiable batch loss. `rows` are two-plane channel vectors,
    /// `noise` one standard-normal vector of length `latent_dim` per row.
    /// Returns the tape, the scalar loss node and the parameter nodes.
    fn build_batch_graph(
        &self,
        rows: &[Vec<f64>],
        noise: &[Vec<f64>],
    ) -> (Tape, TensorId, Vec<TensorId>) {
        assert_eq!(rows.len(), noise.len(), "one noise vector per sample");
        let batch = rows.len();
        let dim = self.input_dim();
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);

        let x_vals: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let x = t.constant(x_vals, vec![batch, dim]);
        let n_vals: Vec<f64> = noise.iter().flat_map(|r| r.iter().copied()).collect();
        let eps = t.constant(n_vals, vec![batch, self.config.latent_dim]);

        let (mu, log_var) = self.forward_encoder(&mut t, &ids, x);
        let z = t.reparameterize(mu, log_var, eps);
        let decoded = self.forward_decoder(&mut t, &ids, z);
        let h_hat = self.forward_synthesis(&mut t, decoded);

        let residual = t.sub(x, h_hat);
        let sq = t.square(residual);
        let recon = t.sum(sq);
        let kl = t.kl_to_standard_normal(mu, log_var);
        let kl_scaled = t.scale(kl, self.config.alpha_d);
        let mut total = t.add(recon, kl_scaled);
        if self.config.mode == VaeMode::Linearized && self.config.alpha_s > 0.0 {
            let abs = t.absolute_value(decoded);
            let l1 = t.sum(abs);
            let l1_scaled = t.scale(l1, self.config.alpha_s);
            total = t.add(total, l1_scaled);
        }
        let loss = t.scale(total, 1.0 / batch as f64);
        (t, loss, ids)
    }

    /// Mean per-sample loss of one batch (values only).
    pub fn batch_loss(&self, rows: &[Vec<f64>], noise: &[Vec<f64>]) -> f64 {
        let (t, loss, _) = self.build_batch_graph(rows, noise);
        t.values(loss)[0]
    }

    /// Mean per-sample loss and its gradient w.r.t. the flattened weights.
    pub fn batch_loss_and_grads(&self, rows: &[Vec<f64>], noise: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let (mut t, loss, ids) = self.build_batch_graph(rows, noise);
        t.backward(loss);
        let grads = ids.iter().flat_map(|&id| t.grad(id).to_vec()).collect();
        (t.values(loss)[0], grads)
    }

    /// Posterior parameters for one channel (deterministic in the input).
    pub fn encode(&self, h: &ComplexMatrix) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(
            (h.rows(), h.cols()),
            (self.array.n_r, self.array.n_t),
            "channel shape {}x{} does not match array {}x{}",
            h.rows(),
            h.cols(),
            self.array.n_r,
            self.array.n_t
        );
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);
        let x = t.constant(h.to_planes(), vec![1, self.input_dim()]);
        let (mu, log_var) = self.forward_encoder(&mut t, &ids, x);
        (t.values(mu).to_vec(), t.values(log_var).to_vec())
    }

    /// Decodes a latent vector to a gain matrix (linearized mode).
    pub fn decode_gains(&self, z: &[f64]) -> GainMatrix {
        assert_eq!(
            self.config.mode,
            VaeMode::Linearized,
            "decode_gains requires linearized mode"
        );
        assert_eq!(z.len(), self.config.latent_dim, "latent length mismatch");
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);
        let zt = t.constant(z.to_vec(), vec![1, z.len()]);
        let w = self.forward_decoder(&mut t, &ids, zt);
        GainMatrix::from_weights(self.config.resolution, t.values(w).to_vec())
    }

    /// Decodes a latent vector to path parameters (direct mode). Angles come
    /// from a `pi * tanh` head, so they always lie in `(-pi, pi)`.
    pub fn decode_params(&self, z: &[f64]) -> Vec<PathParams> {
        assert_eq!(
            self.config.mode,
            VaeMode::Direct,
            "decode_params requires direct mode"
        );
        assert_eq!(z.len(), self.config.latent_dim, "latent length mismatch");
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);
        let zt = t.constant(z.to_vec(), vec![1, z.len()]);
        let s = self.forward_decoder(&mut t, &ids, zt);
        let row = t.values(s);
        let p = self.config.paths.unwrap();
        (0..p)
            .map(|k| PathParams {
                gain: row[k],
                theta_a: row[p + k],
                theta_d: row[2 * p + k],
            })
            .collect()
    }

    /// Deterministic reconstruction (z = posterior mean) of two-plane rows.
    fn reconstruct_planes(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let batch = rows.len();
        let dim = self.input_dim();
        let mut t = Tape::new();
        let ids = self.insert_params(&mut t);
        let x_vals: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let x = t.constant(x_vals, vec![batch, dim]);
        let (mu, _) = self.forward_encoder(&mut t, &ids, x);
        let decoded = self.forward_decoder(&mut t, &ids, mu);
        let h_hat = self.forward_synthesis(&mut t, decoded);
        t.values(h_hat).chunks(dim).map(|c| c.to_vec()).collect()
    }
}

/// Reconstruction loss plus weighted KL term (direct-pipeline objective).
pub fn loss_direct(
    h: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    mu: &[f64],
    log_var: &[f64],
    alpha_d: f64,
) -> f64 {
    let diff = h.sub(h_hat);
    let recon = diff.frobenius_norm().powi(2);
    recon + alpha_d * kl_value(mu, log_var)
}

/// Direct loss plus the L1 sparsity term on the gain matrix.
pub fn loss_linearized(
    h: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    mu: &[f64],
    log_var: &[f64],
    w: &GainMatrix,
    alpha_d: f64,
    alpha_s: f64,
) -> f64 {
    let l1: f64 = w.weights().iter().map(|x| x.abs()).sum();
    loss_direct(h, h_hat, mu, log_var, alpha_d) + alpha_s * l1
}

fn kl_value(mu: &[f64], log_var: &[f64]) -> f64 {
    assert_eq!(mu.len(), log_var.len(), "mu/log_var length mismatch");
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Trained model weights plus everything needed to regenerate channels.
pub struct Checkpoint {
    pub config: VaeConfig,
    pub array: ArrayConfig,
    /// Normalization scale of the training dataset; generated channels are
    /// multiplied back by it.
    pub scale: f64,
    /// Mean per-sample training loss per completed epoch.
    pub loss_history: Vec<f64>,
    params: Vec<ParamTensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: VaeConfig,
    array: ArrayConfig,
    scale: f64,
    loss_history: Vec<f64>,
    tensors: Vec<(String, Vec<usize>)>,
}

impl Checkpoint {
    /// Rebuilds the runnable model (including its dictionary) from the
    /// stored weights.
    pub fn vae(&self) -> Result<Vae> {
        let mut vae = Vae::new(self.config.clone(), self.array)?;
        for p in &self.params {
            vae.set_tensor(&p.name, p.values.clone());
        }
        Ok(vae)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Self::decode(&fs::read(path)?)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            array: self.array,
            scale: self.scale,
            loss_history: self.loss_history.clone(),
            tensors: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.shape.clone()))
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for p in &self.params {
            for v in &p.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 4 || &bytes[..4] != CKPT_MAGIC {
            return Err(Error::format(format!(
                "bad magic: expected \"CKP1\", found {:?}",
                &bytes[..bytes.len().min(4)]
            )));
        }
        if bytes.len() < 8 {
            return Err(Error::format("truncated checkpoint header"));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + header_len {
            return Err(Error::format("truncated checkpoint header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..8 + header_len])?;
        let mut off = 8 + header_len;
        let mut params = Vec::with_capacity(header.tensors.len());
        for (name, shape) in header.tensors {
            let n: usize = shape.iter().product();
            if bytes.len() < off + 8 * n {
                return Err(Error::format(format!(
                    "truncated checkpoint payload in tensor {name}"
                )));
            }
            let values = bytes[off..off + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off += 8 * n;
            params.push(ParamTensor {
                name,
                shape,
                values,
            });
        }
        if off != bytes.len() {
            return Err(Error::format(format!(
                "checkpoint has {} trailing bytes",
                bytes.len() - off
            )));
        }
        Ok(Checkpoint {
            config: header.config,
            array: header.array,
            scale: header.scale,
            loss_history: header.loss_history,
            params,
        })
    }
}

/// Trains a generative model on a channel dataset.
///
/// The dataset is normalized to unit mean power first; the scale is stored
/// in the checkpoint. Each epoch shuffles the sample order and walks batch
/// windows; the reparameterization noise for sample `k` of batch `b` in
/// epoch `e` derives from `(seed, e, b, k)`, so runs reproduce exactly.
pub fn train(dataset: &ChannelDataset, config: &VaeConfig) -> Result<Checkpoint> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    let normalized = normalize(dataset)?;
    let rows: Vec<Vec<f64>> = normalized.samples.iter().map(|h| h.to_planes()).collect();

    let mut vae = Vae::new(config.clone(), dataset.array)?;
    let mut adam = AdamState::new(
        config.learning_rate,
        &vae.params.iter().map(|p| p.values.len()).collect::<Vec<_>>(),
    );

    let n = rows.len();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng64::derive(config.seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for (batch_idx, window) in order.chunks(config.batch_size).enumerate() {
            let batch_rows: Vec<Vec<f64>> = window.iter().map(|&i| rows[i].clone()).collect();
            let noise: Vec<Vec<f64>> = (0..window.len())
                .map(|k| {
                    let mut rng = Rng64::derive(
                        config.seed,
                        &[NOISE_STREAM, epoch as u64, batch_idx as u64, k as u64],
                    );
                    (0..config.latent_dim).map(|_| rng.normal()).collect()
                })
                .collect();

            let (mut tape, loss, ids) = vae.build_batch_graph(&batch_rows, &noise);
            let loss_value = tape.values(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss {loss_value} at epoch {epoch}, batch {batch_idx}"
                )));
            }
            tape.backward(loss);

            let grads: Vec<Vec<f64>> = ids.iter().map(|&id| tape.grad(id).to_vec()).collect();
            drop(tape);
            let mut values: Vec<Vec<f64>> = vae.params.iter().map(|p| p.values.clone()).collect();
            adam_step(&mut adam, &mut values, &grads);
            for (p, v) in vae.params.iter_mut().zip(values) {
                p.values = v;
            }

            epoch_loss += loss_value * window.len() as f64;
        }
        loss_history.push(epoch_loss / n as f64);
    }

    Ok(Checkpoint {
        config: config.clone(),
        array: dataset.array,
        scale: normalized.scale,
        loss_history,
        params: vae.params,
    })
}

/// Draws `count` channels from the trained prior. Latents for sample `i`
/// derive from `(seed, i)`. Outputs are de-normalized to raw channel units;
/// in linearized mode the (equally de-normalized) gain matrices are returned
/// alongside, and each channel is exactly their dictionary synthesis. In
/// direct mode the decoded path parameters land in the dataset's
/// ground-truth slot.
pub fn sample_channels(
    ckpt: &Checkpoint,
    count: usize,
    seed: u64,
) -> Result<(ChannelDataset, Option<Vec<GainMatrix>>)> {
    let vae = ckpt.vae()?;
    let z_dim = ckpt.config.latent_dim;
    let latents: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            let mut rng = Rng64::derive(seed, &[SAMPLE_STREAM, i as u64]);
            (0..z_dim).map(|_| rng.normal()).collect()
        })
        .collect();

    let mut samples = Vec::with_capacity(count);
    let mut gain_matrices = Vec::new();
    let mut all_params = Vec::new();

    // Decode in blocks so tape memory stays bounded at large counts.
    for block in latents.chunks(512) {
        let batch = block.len();
        let mut t = Tape::new();
        let ids = vae.insert_params(&mut t);
        let z_vals: Vec<f64> = block.iter().flat_map(|z| z.iter().copied()).collect();
        let z = t.constant(z_vals, vec![batch, z_dim]);
        let decoded = vae.forward_decoder(&mut t, &ids, z);

        match ckpt.config.mode {
            VaeMode::Linearized => {
                let r = ckpt.config.resolution;
                // De-normalize the weights, then synthesize from them so the
                // emitted gain matrices reproduce the channels exactly.
                let scaled: Vec<f64> =
                    t.values(decoded).iter().map(|w| w * ckpt.scale).collect();
                let ws = t.constant(scaled, vec![batch, r * r]);
                let planes = t.matmul_const(ws, vae.synthesis.clone().unwrap());
                let dim = vae.input_dim();
                for (k, row) in t.values(planes).chunks(dim).enumerate() {
                    samples.push(ComplexMatrix::from_planes(
                        ckpt.array.n_r,
                        ckpt.array.n_t,
                        row,
                    ));
                    let w_row = &t.values(ws)[k * r * r..(k + 1) * r * r];
                    gain_matrices.push(GainMatrix::from_weights(r, w_row.to_vec()));
                }
            }
            VaeMode::Direct => {
                let p = ckpt.config.paths.unwrap();
                for row in t.values(decoded).chunks(3 * p) {
                    let paths: Vec<PathParams> = (0..p)
                        .map(|k| PathParams {
                            gain: row[k] * ckpt.scale,
                            theta_a: row[p + k],
                            theta_d: row[2 * p + k],
                        })
                        .collect();
                    samples.push(crate::ppgc::synthesize_channel(&paths, &ckpt.array));
                    all_params.push(paths);
                }
            }
        }
    }

    let dataset = ChannelDataset {
        array: ckpt.array,
        samples,
        params: if ckpt.config.mode == VaeMode::Direct {
            Some(all_params)
        } else {
            None
        },
        scale: 1.0,
    };
    let gains = if ckpt.config.mode == VaeMode::Linearized {
        Some(gain_matrices)
    } else {
        None
    };
    Ok((dataset, gains))
}

/// Reads paths out of a gain matrix: every entry with magnitude above
/// `threshold * max|W|` becomes a path at its grid angles, sorted by
/// descending gain magnitude. An all-zero matrix yields no paths.
pub fn extract_params(
    w: &GainMatrix,
    config: &DictionaryConfig,
    threshold: f64,
) -> Vec<PathParams> {
    assert!(threshold >= 0.0, "threshold must be non-negative");
    assert_eq!(
        w.resolution(),
        config.resolution,
        "gain matrix resolution {} does not match dictionary config {}",
        w.resolution(),
        config.resolution
    );
    let max = w.weights().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    let cutoff = threshold * max;
    let r = w.resolution();
    let mut paths = Vec::new();
    for i in 0..r {
        for j in 0..r {
            let gain = w.get(i, j);
            if gain.abs() > cutoff {
                paths.push(PathParams {
                    gain,
                    theta_a: config.grid_angle(i),
                    theta_d: config.grid_angle(j),
                });
            }
        }
    }
    paths.sort_by(|a, b| b.gain.abs().partial_cmp(&a.gain.abs()).unwrap());
    paths
}

/// Mean reconstruction NMSE of a dataset under a trained model, with the
/// latent fixed to the posterior mean. The dataset is rescaled to the
/// checkpoint's training units first.
pub fn reconstruction_nmse(ckpt: &Checkpoint, dataset: &ChannelDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot evaluate an empty dataset"));
    }
    let vae = ckpt.vae()?;
    let raw = if dataset.scale != 1.0 {
        denormalize(dataset)
    } else {
        dataset.clone()
    };
    let inv = 1.0 / ckpt.scale;
    let rows: Vec<Vec<f64>> = raw
        .samples
        .iter()
        .map(|h| h.to_planes().iter().map(|v| v * inv).collect())
        .collect();

    let mut total = 0.0;
    for block in rows.chunks(512) {
        let recon = vae.reconstruct_planes(block);
        for (x, x_hat) in block.iter().zip(&recon) {
            let num: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
            let den: f64 = x.iter().map(|a| a * a).sum();
            if den == 0.0 {
                return Err(Error::validation("zero reference channel in NMSE"));
            }
            total += num / den;
        }
    }
    Ok(total / rows.len() as f64)
}
