//! Parametric physics-based geometric channel model for uniform linear
//! arrays.
//!
//! A channel between an `n_t`-element transmit ULA and an `n_r`-element
//! receive ULA is a superposition of per-path propagation matrices: each path
//! contributes `gain * a_r(theta_a) * a_t(theta_d)^H`, where `a_r`/`a_t` are
//! unit-norm steering vectors. The module also provides the discretized
//! array-response dictionary: a grid of precomputed steering outer products
//! over an angle range, so a channel can equivalently be written as a
//! real-weighted sum of dictionary atoms. A sparse weight (gain) matrix over
//! that grid encodes the same information as the path parameters, one nonzero
//! per path.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{outer_product, ComplexMatrix};

fn default_phase_constant() -> f64 {
    PI
}

/// Transmit/receive ULA geometry. `u = 2*pi*d/lambda` is the inter-element
/// phase constant; the default `pi` corresponds to half-wavelength spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_t: usize,
    pub n_r: usize,
    #[serde(default = "default_phase_constant")]
    pub u: f64,
}

impl ArrayConfig {
    pub fn new(n_r: usize, n_t: usize) -> Self {
        ArrayConfig {
            n_t,
            n_r,
            u: default_phase_constant(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_t == 0 || self.n_r == 0 {
            return Err("antenna counts must be at least 1".into());
        }
        if !(self.u > 0.0) {
            return Err(format!("phase constant u must be positive, got {}", self.u));
        }
        Ok(())
    }
}

/// One propagation path: linear amplitude gain plus azimuth angles of arrival
/// and departure in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: f64,
    pub theta_a: f64,
    pub theta_d: f64,
}

/// ULA array response (steering) vector at angle `theta` for `n` elements.
///
/// Element `k` is `exp(j*k*u*sin(theta)) / sqrt(n)`, so the vector always has
/// unit 2-norm.
pub fn array_response(theta: f64, n: usize, u: f64) -> Vec<Complex64> {
    assert!(n >= 1, "array must have at least one element");
    let scale = 1.0 / (n as f64).sqrt();
    let phase_step = u * theta.sin();
    (0..n)
        .map(|k| Complex64::from_polar(scale, k as f64 * phase_step))
        .collect()
}

/// Multipath channel matrix `H = sum_p gain_p * a_r(theta_a) * a_t(theta_d)^H`.
pub fn synthesize_channel(paths: &[PathParams], array: &ArrayConfig) -> ComplexMatrix {
    assert!(!paths.is_empty(), "channel needs at least one path");
    let mut h = ComplexMatrix::zeros(array.n_r, array.n_t);
    for p in paths {
        let a_r = array_response(p.theta_a, array.n_r, array.u);
        let a_t = array_response(p.theta_d, array.n_t, array.u);
        h.add_scaled(&outer_product(&a_r, &a_t), p.gain);
    }
    h
}

fn default_theta_min() -> f64 {
    -PI / 2.0
}

fn default_theta_max() -> f64 {
    PI / 2.0
}

/// Angle grid for the array-response dictionary.
///
/// The range `[theta_min, theta_max]` is divided into `resolution` steps of
/// width `delta = (theta_max - theta_min) / resolution`; bin `b` (0-based)
/// sits at `theta_min + (b + 1) * delta`, so the grid excludes `theta_min`
/// and includes `theta_max`. The default range is the principal branch
/// `[-pi/2, pi/2]`: a ULA cannot distinguish `theta` from `pi - theta`, so a
/// wider grid would only duplicate atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub resolution: usize,
    #[serde(default = "default_theta_min")]
    pub theta_min: f64,
    #[serde(default = "default_theta_max")]
    pub theta_max: f64,
    pub array: ArrayConfig,
}

impl DictionaryConfig {
    pub fn new(resolution: usize, array: ArrayConfig) -> Self {
        DictionaryConfig {
            resolution,
            theta_min: default_theta_min(),
            theta_max: default_theta_max(),
            array,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.resolution == 0 {
            return Err("dictionary resolution must be at least 1".into());
        }
        if !(self.theta_min < self.theta_max) {
            return Err(format!(
                "angle range is empty: [{}, {}]",
                self.theta_min, self.theta_max
            ));
        }
        self.array.validate()
    }

    /// Grid step `delta`.
    pub fn delta(&self) -> f64 {
        (self.theta_max - self.theta_min) / self.resolution as f64
    }

    /// Angle of 0-based grid bin `b`; bin `resolution - 1` is `theta_max`.
    pub fn grid_angle(&self, bin: usize) -> f64 {
        assert!(
            bin < self.resolution,
            "grid bin {bin} out of range (resolution {})",
            self.resolution
        );
        self.theta_min + (bin as f64 + 1.0) * self.delta()
    }
}

/// Precomputed grid of array-response outer products.
///
/// `atom(i, j)` is the `n_r x n_t` matrix `a_r(theta_i) * a_t(theta_j)^H`
/// with `i` indexing the arrival-angle grid and `j` the departure-angle grid.
/// Atoms are stored densely; the whole grid is immutable after construction
/// and freely shareable across threads.
#[derive(Debug, Clone)]
pub struct Dictionary {
    config: DictionaryConfig,
    atoms: Vec<ComplexMatrix>,
}

/// Builds the full `resolution^2` atom grid for `config`.
pub fn build_dictionary(config: &DictionaryConfig) -> Dictionary {
    config
        .validate()
        .unwrap_or_else(|e| panic!("invalid dictionary config: {e}"));
    let r = config.resolution;
    let arrival: Vec<Vec<Complex64>> = (0..r)
        .map(|i| array_response(config.grid_angle(i), config.array.n_r, config.array.u))
        .collect();
    let departure: Vec<Vec<Complex64>> = (0..r)
        .map(|j| array_response(config.grid_angle(j), config.array.n_t, config.array.u))
        .collect();

    let mut atoms = Vec::with_capacity(r * r);
    for a_r in &arrival {
        for a_t in &departure {
            atoms.push(outer_product(a_r, a_t));
        }
    }
    Dictionary {
        config: *config,
        atoms,
    }
}

impl Dictionary {
    pub fn config(&self) -> &DictionaryConfig {
        &self.config
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    /// Atom at arrival bin `i`, departure bin `j` (both 0-based).
    pub fn atom(&self, i: usize, j: usize) -> &ComplexMatrix {
        let r = self.config.resolution;
        assert!(i < r && j < r, "atom index ({i}, {j}) out of range {r}");
        &self.atoms[i * r + j]
    }

    pub fn atoms(&self) -> &[ComplexMatrix] {
        &self.atoms
    }
}

/// Real weights over the dictionary grid; rows index arrival bins, columns
/// departure bins. Sparse nonzeros encode paths.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    resolution: usize,
    weights: Vec<f64>,
}

impl GainMatrix {
    pub fn zeros(resolution: usize) -> Self {
        assert!(resolution > 0, "resolution must be positive");
        GainMatrix {
            resolution,
            weights: vec![0.0; resolution * resolution],
        }
    }

    pub fn from_weights(resolution: usize, weights: Vec<f64>) -> Self {
        assert_eq!(
            weights.len(),
            resolution * resolution,
            "weight length {} does not match resolution {}",
            weights.len(),
            resolution
        );
        GainMatrix {
            resolution,
            weights,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.resolution + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, w: f64) {
        self.weights[i * self.resolution + j] = w;
    }
}

/// Linear channel synthesis `H = sum_{i,j} W[i][j] * D[i][j]`.
///
/// Exact zeros in the weight matrix contribute nothing and are skipped, so
/// synthesis from a sparse gain matrix costs one atom per path.
pub fn synthesize_from_gains(w: &GainMatrix, dict: &Dictionary) -> ComplexMatrix {
    assert_eq!(
        w.resolution,
        dict.config.resolution,
        "gain matrix resolution {} does not match dictionary resolution {}",
        w.resolution,
        dict.config.resolution
    );
    let array = dict.config.array;
    let mut h = ComplexMatrix::zeros(array.n_r, array.n_t);
    for (atom, &weight) in dict.atoms.iter().zip(&w.weights) {
        if weight != 0.0 {
            h.add_scaled(atom, weight);
        }
    }
    h
}
