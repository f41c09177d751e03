//! Pointwise and distributional channel metrics.
//!
//! Channel sets are compared as clouds of flattened two-plane vectors:
//! NMSE for paired reconstruction error, a closed-form Gaussian
//! 2-Wasserstein distance for first/second-moment mismatch, and the unbiased
//! RBF-kernel MMD estimator with the median-heuristic bandwidth for general
//! distributional mismatch.

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, ComplexMatrix, RealMatrix};
use crate::datasets::ChannelDataset;

/// Channels flattened row-wise into `[Re-plane .. Im-plane]` vectors.
#[derive(Debug, Clone)]
pub struct VectorizedSet {
    count: usize,
    dim: usize,
    rows: Vec<f64>,
}

impl VectorizedSet {
    pub fn new(count: usize, dim: usize, rows: Vec<f64>) -> Self {
        assert_eq!(rows.len(), count * dim, "row buffer length mismatch");
        VectorizedSet { count, dim, rows }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }
}

/// Flattens the stored samples of a dataset; row `i` is
/// `concat(flatten(Re H_i), flatten(Im H_i))`.
pub fn vectorize(ds: &ChannelDataset) -> VectorizedSet {
    let (n_r, n_t) = ds.shape();
    let dim = 2 * n_r * n_t;
    let mut rows = Vec::with_capacity(ds.len() * dim);
    for h in &ds.samples {
        rows.extend(h.to_planes());
    }
    VectorizedSet::new(ds.len(), dim, rows)
}

/// Rebuilds channel matrices from a vectorized set (inverse of
/// [`vectorize`] given the array shape).
pub fn unvectorize(set: &VectorizedSet, n_r: usize, n_t: usize) -> Vec<ComplexMatrix> {
    assert_eq!(set.dim, 2 * n_r * n_t, "dim does not match 2*{n_r}x{n_t}");
    (0..set.count)
        .map(|i| ComplexMatrix::from_planes(n_r, n_t, set.row(i)))
        .collect()
}

/// Normalized mean squared error `||H - H_hat||_F^2 / ||H||_F^2`.
pub fn nmse(h: &ComplexMatrix, h_hat: &ComplexMatrix) -> Result<f64> {
    if (h.rows(), h.cols()) != (h_hat.rows(), h_hat.cols()) {
        return Err(Error::validation(format!(
            "NMSE shape mismatch: {}x{} vs {}x{}",
            h.rows(),
            h.cols(),
            h_hat.rows(),
            h_hat.cols()
        )));
    }
    let denom = h.frobenius_norm().powi(2);
    if denom == 0.0 {
        return Err(Error::validation("NMSE reference channel is zero"));
    }
    Ok(h.sub(h_hat).frobenius_norm().powi(2) / denom)
}

fn mean_vector(set: &VectorizedSet) -> Vec<f64> {
    let mut mu = vec![0.0; set.dim];
    for i in 0..set.count {
        for (m, x) in mu.iter_mut().zip(set.row(i)) {
            *m += x;
        }
    }
    for m in &mut mu {
        *m /= set.count as f64;
    }
    mu
}

/// Empirical covariance (unbiased, `n - 1` denominator) with `eps` added on
/// the diagonal for numerical stability.
fn covariance(set: &VectorizedSet, mu: &[f64], eps: f64) -> RealMatrix {
    let d = set.dim;
    let mut cov = RealMatrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..set.count {
        for (c, (x, m)) in centered.iter_mut().zip(set.row(i).iter().zip(mu)) {
            *c = x - m;
        }
        // Rank-one update on the upper triangle only.
        for r in 0..d {
            let cr = centered[r];
            if cr == 0.0 {
                continue;
            }
            for c in r..d {
                let v = cov.get(r, c) + cr * centered[c];
                cov.set(r, c, v);
            }
        }
    }
    let denom = (set.count - 1) as f64;
    for r in 0..d {
        for c in r..d {
            let v = cov.get(r, c) / denom;
            cov.set(r, c, v);
            cov.set(c, r, v);
        }
    }
    for r in 0..d {
        cov.set(r, r, cov.get(r, r) + eps);
    }
    cov
}

/// 2-Wasserstein distance between the Gaussian fits of two sets:
/// `sqrt(||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2))`.
pub fn w2_gaussian(a: &VectorizedSet, b: &VectorizedSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::validation(format!(
            "W2 dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    if a.count < 2 || b.count < 2 {
        return Err(Error::validation(
            "W2 needs at least 2 points in each set",
        ));
    }
    const EPS: f64 = 1e-9;
    let mu_a = mean_vector(a);
    let mu_b = mean_vector(b);
    let cov_a = covariance(a, &mu_a, EPS);
    let cov_b = covariance(b, &mu_b, EPS);

    let sqrt_b = psd_sqrt(&cov_b)?;
    let inner = sqrt_b.matmul(&cov_a).matmul(&sqrt_b);
    let cross = psd_sqrt(&inner)?;

    let mean_term: f64 = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace_term).max(0.0).sqrt())
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Unbiased squared MMD with an RBF kernel. The bandwidth `sigma^2` is the
/// median of pairwise squared distances over the pooled sample (falling back
/// to 1 when every point coincides). For equal sample sizes the complete
/// U-statistic is used (cross pairs `i = j` excluded), which is exactly zero
/// when a set is compared with itself; otherwise the three-term unbiased
/// form applies. Either estimator can go slightly negative; the value is
/// reported as-is.
pub fn mmd_rbf(a: &VectorizedSet, b: &VectorizedSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::validation(format!(
            "MMD dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    if a.count < 2 || b.count < 2 {
        return Err(Error::validation(
            "MMD needs at least 2 points in each set",
        ));
    }
    let (m, n) = (a.count, b.count);
    let mut within_a = Vec::with_capacity(m * (m - 1) / 2);
    let mut within_b = Vec::with_capacity(n * (n - 1) / 2);
    let mut cross = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in (i + 1)..m {
            within_a.push(squared_distance(a.row(i), a.row(j)));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            within_b.push(squared_distance(b.row(i), b.row(j)));
        }
    }
    for i in 0..m {
        for j in 0..n {
            cross.push(squared_distance(a.row(i), b.row(j)));
        }
    }

    // Median heuristic over every pooled pair.
    let mut pooled: Vec<f64> = within_a
        .iter()
        .chain(&within_b)
        .chain(&cross)
        .copied()
        .collect();
    let mid = pooled.len() / 2;
    let (_, median, _) = pooled.select_nth_unstable_by(mid, |x, y| x.partial_cmp(y).unwrap());
    let sigma_sq = if *median > 0.0 { *median } else { 1.0 };

    let kernel = |d2: f64| (-d2 / (2.0 * sigma_sq)).exp();
    let kernel_sum = |d2: &[f64]| -> f64 { d2.iter().map(|&d| kernel(d)).sum() };
    // Off-diagonal sums count ordered pairs, hence the factor 2.
    let term_a = 2.0 * kernel_sum(&within_a) / (m * (m - 1)) as f64;
    let term_b = 2.0 * kernel_sum(&within_b) / (n * (n - 1)) as f64;
    let term_cross = if m == n {
        // Complete U-statistic: drop matched pairs, accumulate each (i, j)
        // bracket symmetrically so identical sets cancel exactly.
        let mut sum = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                sum += kernel(cross[i * n + j]) + kernel(cross[j * n + i]);
            }
        }
        2.0 * sum / (m * (m - 1)) as f64
    } else {
        2.0 * kernel_sum(&cross) / (m * n) as f64
    };
    Ok(term_a + term_b - term_cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_dataset, PathRange, ScenarioSpec};
    use crate::ppgc::ArrayConfig;
    use crate::rng::Rng64;
    use num_complex::Complex64;

    fn gaussian_set(count: usize, dim: usize, mean: f64, std: f64, seed: u64) -> VectorizedSet {
        let mut rng = Rng64::new(seed);
        let rows: Vec<f64> = (0..count * dim)
            .map(|_| mean + std * rng.normal())
            .collect();
        VectorizedSet::new(count, dim, rows)
    }

    fn scenario(ranges: [(f64, f64); 2], seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            array: ArrayConfig::new(4, 4),
            seed,
            paths: vec![PathRange {
                gain: (0.5, 1.0),
                theta_a: ranges[0],
                theta_d: ranges[1],
            }],
        }
    }

    #[test]
    fn nmse_identities() {
        let ds = generate_dataset(&scenario([(0.1, 0.9), (0.1, 0.9)], 3), 1).unwrap();
        let h = &ds.samples[0];
        assert_eq!(nmse(h, h).unwrap(), 0.0);

        let zero = ComplexMatrix::zeros(4, 4);
        assert_eq!(nmse(h, &zero).unwrap(), 1.0);

        let mut doubled = ComplexMatrix::zeros(4, 4);
        doubled.add_scaled(h, 2.0);
        assert!((nmse(h, &doubled).unwrap() - 1.0).abs() < 1e-12);

        assert!(nmse(&zero, h).is_err());
    }

    #[test]
    fn vectorize_layout_and_round_trip() {
        let mut m = ComplexMatrix::zeros(1, 1);
        m.set(0, 0, Complex64::new(3.0, 4.0));
        let ds = ChannelDataset {
            array: ArrayConfig::new(1, 1),
            samples: vec![m],
            params: None,
            scale: 1.0,
        };
        let set = vectorize(&ds);
        assert_eq!(set.row(0), &[3.0, 4.0]);

        let ds16 = generate_dataset(
            &ScenarioSpec {
                array: ArrayConfig::new(16, 16),
                seed: 5,
                paths: vec![PathRange {
                    gain: (1.0, 1.0),
                    theta_a: (-1.0, 1.0),
                    theta_d: (-1.0, 1.0),
                }],
            },
            3,
        )
        .unwrap();
        let set16 = vectorize(&ds16);
        assert_eq!(set16.dim(), 512);
        let back = unvectorize(&set16, 16, 16);
        for (a, b) in ds16.samples.iter().zip(&back) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn w2_same_set_is_zero() {
        let a = gaussian_set(200, 8, 0.0, 1.0, 7);
        assert!(w2_gaussian(&a, &a).unwrap() <= 1e-6);
    }

    #[test]
    fn w2_mean_shift_closed_form() {
        let a = gaussian_set(10_000, 1, 0.0, 1.0, 11);
        let b = gaussian_set(10_000, 1, 2.0, 1.0, 13);
        let w2 = w2_gaussian(&a, &b).unwrap();
        assert!((w2 - 2.0).abs() <= 0.04, "w2 = {w2}");
    }

    #[test]
    fn w2_variance_gap_closed_form() {
        let a = gaussian_set(10_000, 1, 0.0, 1.0, 17);
        let b = gaussian_set(10_000, 1, 0.0, 3.0, 19);
        let w2 = w2_gaussian(&a, &b).unwrap();
        assert!((w2 - 2.0).abs() <= 0.04, "w2 = {w2}");
    }

    #[test]
    fn w2_is_symmetric() {
        let a = gaussian_set(300, 4, 0.0, 1.0, 23);
        let b = gaussian_set(300, 4, 1.0, 2.0, 29);
        let ab = w2_gaussian(&a, &b).unwrap();
        let ba = w2_gaussian(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-6 * ab.max(1.0));
    }

    #[test]
    fn mmd_null_hypothesis_is_small() {
        let a = gaussian_set(500, 2, 0.0, 1.0, 31);
        let b = gaussian_set(500, 2, 0.0, 1.0, 37);
        let mmd = mmd_rbf(&a, &b).unwrap();
        assert!(mmd.abs() < 3.0 / (500f64).sqrt(), "mmd = {mmd}");
    }

    #[test]
    fn mmd_separated_clusters_is_large() {
        let a = gaussian_set(500, 1, 0.0, 1.0, 41);
        let b = gaussian_set(500, 1, 5.0, 1.0, 43);
        let mmd = mmd_rbf(&a, &b).unwrap();
        assert!(mmd > 0.5, "mmd = {mmd}");
    }

    #[test]
    fn mmd_swapping_arguments_matches() {
        let a = gaussian_set(120, 3, 0.0, 1.0, 47);
        let b = gaussian_set(130, 3, 0.7, 1.3, 53);
        let ab = mmd_rbf(&a, &b).unwrap();
        let ba = mmd_rbf(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-12, "{ab} vs {ba}");
    }

    #[test]
    fn mmd_identical_points_fall_back_to_unit_bandwidth() {
        let a = VectorizedSet::new(4, 2, vec![1.0; 8]);
        let b = VectorizedSet::new(4, 2, vec![1.0; 8]);
        let mmd = mmd_rbf(&a, &b).unwrap();
        assert!(mmd.abs() < 1e-12);
    }

    #[test]
    fn mmd_of_a_set_with_itself_is_exactly_zero() {
        let a = gaussian_set(150, 4, 0.3, 1.2, 101);
        assert_eq!(mmd_rbf(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let a = gaussian_set(80, 3, 0.0, 1.0, 59);
        let b = gaussian_set(90, 3, 0.5, 1.1, 61);
        let mut perm_rows = Vec::new();
        let mut order: Vec<usize> = (0..a.count()).collect();
        Rng64::new(67).shuffle(&mut order);
        for &i in &order {
            perm_rows.extend_from_slice(a.row(i));
        }
        let a_perm = VectorizedSet::new(a.count(), a.dim(), perm_rows);

        let w2_orig = w2_gaussian(&a, &b).unwrap();
        let w2_perm = w2_gaussian(&a_perm, &b).unwrap();
        assert!((w2_orig - w2_perm).abs() <= 1e-9 * w2_orig.max(1.0));

        let mmd_orig = mmd_rbf(&a, &b).unwrap();
        let mmd_perm = mmd_rbf(&a_perm, &b).unwrap();
        assert!((mmd_orig - mmd_perm).abs() <= 1e-9);
    }

    #[test]
    fn same_scenario_beats_disjoint_scenario() {
        // Two draws from one scenario vs a draw with disjoint angle ranges.
        let same_a = vectorize(&generate_dataset(&scenario([(0.2, 0.8), (0.2, 0.8)], 71), 300).unwrap());
        let same_b = vectorize(&generate_dataset(&scenario([(0.2, 0.8), (0.2, 0.8)], 73), 300).unwrap());
        let diff = vectorize(&generate_dataset(&scenario([(-1.4, -0.9), (-1.4, -0.9)], 79), 300).unwrap());

        let w2_same = w2_gaussian(&same_a, &same_b).unwrap();
        let w2_diff = w2_gaussian(&same_a, &diff).unwrap();
        assert!(w2_same * 5.0 < w2_diff, "same {w2_same} diff {w2_diff}");

        let mmd_same = mmd_rbf(&same_a, &same_b).unwrap();
        let mmd_diff = mmd_rbf(&same_a, &diff).unwrap();
        assert!(mmd_same * 5.0 < mmd_diff, "same {mmd_same} diff {mmd_diff}");
    }
}
