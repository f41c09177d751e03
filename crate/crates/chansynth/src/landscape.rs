//! Reconstruction-loss surfaces over angle pairs.
//!
//! For a single-path reference channel, the squared Frobenius error of a
//! unit-gain candidate path is evaluated on a dense (arrival, departure)
//! angle grid. The surface exposes why gradient descent through the
//! geometric model struggles: steering-vector periodicity splinters it into
//! lobes whose count grows with the antenna count, while the region far from
//! the optimum flattens out.

use crate::linalg::RealMatrix;
use crate::ppgc::{array_response, synthesize_channel, ArrayConfig, PathParams};

/// Dense loss grid. `values[a][d]` is the squared Frobenius reconstruction
/// error of a unit-gain path at `(axis[a], axis[d])` against the reference
/// channel; both axes share the same angle grid.
#[derive(Debug, Clone)]
pub struct LossSurface {
    pub axis: Vec<f64>,
    pub values: RealMatrix,
    pub reference: PathParams,
    pub array: ArrayConfig,
}

/// Evaluates the loss surface on a `grid_size^2` grid over `theta_range`.
///
/// The grid follows the dictionary convention: point `k` (0-based) sits at
/// `lo + (k + 1) * (hi - lo) / grid_size`, so the upper bound is included
/// and the lower excluded. The loss is computed through the expansion
/// `||H_ref||^2 + ||H(theta)||^2 - 2 Re<H_ref, H(theta)>`, which reduces a
/// grid point to one matrix-vector product; unit-gain single-path channels
/// have `||H(theta)||^2 = 1` exactly.
pub fn compute_surface(
    reference: &PathParams,
    array: &ArrayConfig,
    grid_size: usize,
    theta_range: (f64, f64),
) -> LossSurface {
    assert!(grid_size >= 3, "grid must be at least 3x3");
    let (lo, hi) = theta_range;
    assert!(lo < hi, "empty angle range [{lo}, {hi}]");

    let step = (hi - lo) / grid_size as f64;
    let axis: Vec<f64> = (0..grid_size).map(|k| lo + (k as f64 + 1.0) * step).collect();

    let h_ref = synthesize_channel(&[*reference], array);
    let ref_power = h_ref.frobenius_norm().powi(2);

    let arrival: Vec<Vec<num_complex::Complex64>> = axis
        .iter()
        .map(|&t| array_response(t, array.n_r, array.u))
        .collect();
    let departure: Vec<Vec<num_complex::Complex64>> = axis
        .iter()
        .map(|&t| array_response(t, array.n_t, array.u))
        .collect();

    // v_d = H_ref * a_t(theta_d); then <H_ref, H(theta)> = a_r^H v_d.
    let mut values = RealMatrix::zeros(grid_size, grid_size);
    for (d, a_t) in departure.iter().enumerate() {
        let mut v = vec![num_complex::Complex64::new(0.0, 0.0); array.n_r];
        for r in 0..array.n_r {
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for (t, &at) in a_t.iter().enumerate() {
                acc += h_ref.get(r, t) * at;
            }
            v[r] = acc;
        }
        for (a, a_r) in arrival.iter().enumerate() {
            let mut inner = num_complex::Complex64::new(0.0, 0.0);
            for (r, &ar) in a_r.iter().enumerate() {
                inner += ar.conj() * v[r];
            }
            let loss = (ref_power + 1.0 - 2.0 * inner.re).max(0.0);
            values.set(a, d, loss);
        }
    }

    LossSurface {
        axis,
        values,
        reference: *reference,
        array: *array,
    }
}

/// Counts interior grid points strictly below all eight neighbors. Plateau
/// points never count, so flat far-field regions contribute nothing.
pub fn count_strict_local_minima(surface: &LossSurface) -> usize {
    let g = surface.axis.len();
    let v = &surface.values;
    let mut count = 0;
    for a in 1..g - 1 {
        for d in 1..g - 1 {
            let center = v.get(a, d);
            let mut strict = true;
            'probe: for da in -1i64..=1 {
                for dd in -1i64..=1 {
                    if da == 0 && dd == 0 {
                        continue;
                    }
                    let na = (a as i64 + da) as usize;
                    let nd = (d as i64 + dd) as usize;
                    if v.get(na, nd) <= center {
                        strict = false;
                        break 'probe;
                    }
                }
            }
            if strict {
                count += 1;
            }
        }
    }
    count
}

/// Mean gradient magnitude bucketed by angular distance from the global
/// minimum.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradientBin {
    /// Distance range `[lo, hi)` covered by the bin.
    pub lo: f64,
    pub hi: f64,
    /// Mean central-difference gradient magnitude over the bin.
    pub mean_magnitude: f64,
    /// Same mean normalized by the surface's peak loss.
    pub normalized_mean: f64,
    pub count: usize,
}

/// Central-difference gradient magnitudes over interior grid points, bucketed
/// by Euclidean angle distance to the global minimum into `n_bins` equal-width
/// bins.
pub fn gradient_magnitude_stats(surface: &LossSurface, n_bins: usize) -> Vec<GradientBin> {
    assert!(n_bins >= 1, "need at least one bin");
    let g = surface.axis.len();
    let v = &surface.values;
    let step = surface.axis[1] - surface.axis[0];

    // Global minimum location on the grid.
    let (mut min_a, mut min_d, mut min_v) = (0, 0, f64::INFINITY);
    for a in 0..g {
        for d in 0..g {
            if v.get(a, d) < min_v {
                min_v = v.get(a, d);
                min_a = a;
                min_d = d;
            }
        }
    }
    let peak = (0..g)
        .flat_map(|a| (0..g).map(move |d| (a, d)))
        .fold(0.0f64, |m, (a, d)| m.max(v.get(a, d)));

    let max_dist = {
        let da = surface.axis[if min_a < g / 2 { g - 1 } else { 0 }] - surface.axis[min_a];
        let dd = surface.axis[if min_d < g / 2 { g - 1 } else { 0 }] - surface.axis[min_d];
        (da * da + dd * dd).sqrt()
    };

    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for a in 1..g - 1 {
        for d in 1..g - 1 {
            let gx = (v.get(a + 1, d) - v.get(a - 1, d)) / (2.0 * step);
            let gy = (v.get(a, d + 1) - v.get(a, d - 1)) / (2.0 * step);
            let magnitude = (gx * gx + gy * gy).sqrt();
            let da = surface.axis[a] - surface.axis[min_a];
            let dd = surface.axis[d] - surface.axis[min_d];
            let dist = (da * da + dd * dd).sqrt();
            let bin = ((dist / max_dist) * n_bins as f64).floor() as usize;
            let bin = bin.min(n_bins - 1);
            sums[bin] += magnitude;
            counts[bin] += 1;
        }
    }

    (0..n_bins)
        .map(|b| {
            let mean = if counts[b] > 0 {
                sums[b] / counts[b] as f64
            } else {
                0.0
            };
            GradientBin {
                lo: max_dist * b as f64 / n_bins as f64,
                hi: max_dist * (b + 1) as f64 / n_bins as f64,
                mean_magnitude: mean,
                normalized_mean: if peak > 0.0 { mean / peak } else { 0.0 },
                count: counts[b],
            }
        })
        .collect()
}
