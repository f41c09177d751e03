//! Dense complex and real matrix primitives.
//!
//! Just enough linear algebra for the rest of the crate: outer products and
//! Frobenius norms of complex channel matrices, and a cyclic-Jacobi symmetric
//! eigendecomposition powering the PSD square roots needed by the Gaussian
//! 2-Wasserstein metric. All computation is `f64`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Maximum cyclic Jacobi sweeps before reporting non-convergence.
const MAX_JACOBI_SWEEPS: usize = 100;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        ComplexMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self + scale * other`, used to superpose per-path propagation terms.
    pub fn add_scaled(&mut self, other: &ComplexMatrix, scale: f64) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * scale;
        }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Two-plane real view `[Re(row-major) .. Im(row-major)]`, the layout fed
    /// to networks and distribution metrics.
    pub fn to_planes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.data.len());
        out.extend(self.data.iter().map(|z| z.re));
        out.extend(self.data.iter().map(|z| z.im));
        out
    }

    /// Inverse of [`ComplexMatrix::to_planes`].
    pub fn from_planes(rows: usize, cols: usize, planes: &[f64]) -> Self {
        let n = rows * cols;
        assert_eq!(
            planes.len(),
            2 * n,
            "plane buffer length {} does not match 2*{rows}x{cols}",
            planes.len()
        );
        let data = (0..n)
            .map(|i| Complex64::new(planes[i], planes[n + i]))
            .collect();
        ComplexMatrix::from_data(rows, cols, data)
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        RealMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut out = RealMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        // i-k-j order keeps the inner loop on contiguous rows.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace of non-square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }
}

/// Rank-one outer product `u * v^H` (conjugate transpose of `v`).
pub fn outer_product(u: &[Complex64], v: &[Complex64]) -> ComplexMatrix {
    assert!(!u.is_empty() && !v.is_empty(), "outer product of empty vector");
    let mut out = ComplexMatrix::zeros(u.len(), v.len());
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            out.set(i, j, ui * vj.conj());
        }
    }
    out
}

/// Frobenius norm of a complex matrix (sqrt of summed squared magnitudes).
pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}

/// Result of a symmetric eigendecomposition `A = V diag(λ) V^T`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: RealMatrix,
}

/// Symmetric eigendecomposition by cyclic Jacobi sweeps.
///
/// The input is symmetrized as `(A + A^T)/2` before decomposing. Sweeps stop
/// once every off-diagonal entry falls below `1e-12 * ||A||_F`; exceeding
/// [`MAX_JACOBI_SWEEPS`] reports non-convergence.
pub fn symmetric_eigendecomposition(a: &RealMatrix) -> Result<SymmetricEigen> {
    assert_eq!(a.rows, a.cols, "eigendecomposition of non-square matrix");
    let n = a.rows;

    let mut m = a.clone();
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m.get(r, c) + m.get(c, r));
            m.set(r, c, avg);
            m.set(c, r, avg);
        }
    }

    let mut v = RealMatrix::identity(n);
    let threshold = 1e-12 * m.frobenius_norm();

    let off_diag_max = |m: &RealMatrix| -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                worst = worst.max(m.get(r, c).abs());
            }
        }
        worst
    };

    let mut converged = n < 2 || off_diag_max(&m) <= threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::numeric(format!(
                "Jacobi eigensolver did not converge in {MAX_JACOBI_SWEEPS} sweeps \
                 (n = {n}, residual off-diagonal = {:.3e})",
                off_diag_max(&m)
            )));
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= threshold {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // Rotation angle from Numerical Recipes' stable formulation.
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of the symmetric matrix.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                // Accumulate the rotation into the eigenvector matrix.
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        sweeps += 1;
        converged = off_diag_max(&m) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut eigenvectors = RealMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors.set(r, new_col, v.get(r, old_col));
        }
    }

    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Symmetric square root of a positive semidefinite matrix.
///
/// Eigenvalues in `(-1e-6, 0)` are clamped to zero; anything more negative is
/// reported as a domain error.
pub fn psd_sqrt(a: &RealMatrix) -> Result<RealMatrix> {
    let eig = symmetric_eigendecomposition(a)?;
    let n = a.rows;
    let mut roots = Vec::with_capacity(n);
    for &lambda in &eig.eigenvalues {
        if lambda < -1e-6 {
            return Err(Error::numeric(format!(
                "matrix is not positive semidefinite (eigenvalue {lambda:.3e})"
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    // S = V diag(sqrt λ) V^T
    let v = &eig.eigenvectors;
    let mut scaled = RealMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            scaled.set(r, c, v.get(r, c) * roots[c]);
        }
    }
    Ok(scaled.matmul(&v.transpose()))
}
