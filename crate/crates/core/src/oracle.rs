//! Dense reference implementations used for verification: exact
//! matrix product, symmetric eigendecomposition, and the eigenvector-based
//! density matrix.
//!
//! Everything here is deliberately plain serial code — the point is an
//! independent check of the sparse kernels, not speed. The eigensolver is a
//! cyclic Jacobi iteration, which is slow but self-contained and accurate to
//! near machine precision for the desk-scale sizes it is restricted to.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Largest matrix the eigensolver accepts.
pub const EIGH_MAX_N: usize = 2048;
const MAX_SWEEPS: usize = 50;

pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`; columns are
    /// orthonormal.
    pub eigenvectors: DenseMatrix,
}

impl EigenDecomposition {
    /// `Q diag(lambda) Q^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let q = &self.eigenvectors;
        let mut h = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += q.get(i, k) * self.eigenvalues[k] * q.get(j, k);
                }
                h.set(i, j, s);
            }
        }
        h
    }
}

/// Exact triple-loop product. The loop nest is `i, k, j` with `k` ascending,
/// so per-entry accumulation order matches the ELLPACK row kernel and the
/// two agree bitwise on identical inputs.
pub fn dense_multiply(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            op: "dense_multiply",
            left: a.n(),
            right: b.n(),
        });
    }
    let n = a.n();
    let mut c = DenseMatrix::zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let crow = &mut c.values_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
    Ok(c)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigh(h: &DenseMatrix) -> Result<EigenDecomposition> {
    let n = h.n();
    if n == 0 || n > EIGH_MAX_N {
        return Err(Error::InvalidDimension {
            n,
            reason: "eigh handles 1 <= n <= 2048",
        });
    }
    if !h.is_symmetric() {
        return Err(Error::InvalidParams("eigh requires a symmetric matrix"));
    }

    let mut a: Vec<f64> = h.values().to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let fro = h.frobenius();
    let target = 1e-13 * fro.max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    let mut off = off_norm(&a, n);
    while off > target {
        if sweeps >= MAX_SWEEPS {
            return Err(Error::ConvergenceFailure { sweeps, off });
        }
        // Rotating everything above a per-sweep floor keeps each sweep O(n^3)
        // while still driving the off-norm quadratically once it is small.
        let floor = target / (n as f64);
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= floor {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[p * n + k] = a[k * n + p];
                    a[k * n + q] = s * akp + c * akq;
                    a[q * n + k] = a[k * n + q];
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        off = off_norm(&a, n);
    }

    // Sort ascending, permuting eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i]
            .partial_cmp(&a[j * n + j])
            .expect("eigenvalues are finite")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut q = DenseMatrix::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            q.set(k, new_col, v[k * n + old_col]);
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: q,
    })
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Projector onto the `n_occ` lowest eigenvectors: `D = sum q_k q_k^T`.
/// Requires a clear gap between eigenvalues `n_occ - 1` and `n_occ`.
pub fn exact_density_matrix(h: &DenseMatrix, n_occ: usize) -> Result<DenseMatrix> {
    let n = h.n();
    if n_occ > n {
        return Err(Error::InvalidParams("n_occ exceeds matrix dimension"));
    }
    let decomp = eigh(h)?;
    if n_occ > 0 && n_occ < n {
        let gap = decomp.eigenvalues[n_occ] - decomp.eigenvalues[n_occ - 1];
        if gap <= 1e-10 {
            return Err(Error::DegenerateGap { n_occ, gap });
        }
    }
    let q = &decomp.eigenvectors;
    let mut d = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..n_occ {
                s += q.get(i, k) * q.get(j, k);
            }
            d.set(i, j, s);
            d.set(j, i, s);
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_symmetric(n: usize, rng: &mut SplitMix64) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = rng.next_symmetric();
                d.set(i, j, v);
                d.set(j, i, v);
            }
        }
        d
    }

    #[test]
    fn multiply_identity_and_bilinearity() {
        let mut rng = SplitMix64::new(3);
        let a = random_symmetric(24, &mut rng);
        let id = DenseMatrix::identity(24);
        assert_eq!(dense_multiply(&id, &a).unwrap(), a);
        // (cA)B == c(AB) within rounding.
        let b = random_symmetric(24, &mut rng);
        let mut ca = a.clone();
        for v in ca.values_mut() {
            *v *= 3.0;
        }
        let lhs = dense_multiply(&ca, &b).unwrap();
        let mut rhs = dense_multiply(&a, &b).unwrap();
        for v in rhs.values_mut() {
            *v *= 3.0;
        }
        let rel = lhs.fnorm_diff(&rhs).unwrap() / rhs.frobenius();
        assert!(rel <= 1e-13);
    }

    #[test]
    fn eigh_diagonal_matrix() {
        let d = DenseMatrix::from_diag(&[3.0, 1.0, 2.0]);
        let e = eigh(&d).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((e.eigenvalues[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_two_by_two_exchange() {
        let mut h = DenseMatrix::zeros(2);
        h.set(0, 1, 1.0);
        h.set(1, 0, 1.0);
        let e = eigh(&h).unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_residual_and_orthonormality() {
        let mut rng = SplitMix64::new(11);
        let h = random_symmetric(64, &mut rng);
        let e = eigh(&h).unwrap();
        let rec = e.reconstruct();
        let rel = rec.fnorm_diff(&h).unwrap() / h.frobenius();
        assert!(rel <= 1e-10, "reconstruction residual {rel:e}");
        // Q^T Q == I
        let n = 64;
        let mut qtq = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += e.eigenvectors.get(k, i) * e.eigenvectors.get(k, j);
                }
                qtq.set(i, j, s);
            }
        }
        let err = qtq.fnorm_diff(&DenseMatrix::identity(n)).unwrap();
        assert!(err <= 1e-10, "orthonormality residual {err:e}");
        // Eigenvalue sum equals the trace.
        let sum: f64 = e.eigenvalues.iter().sum();
        assert!((sum - h.trace()).abs() <= 1e-10 * h.trace().abs().max(1.0));
    }

    #[test]
    fn eigh_rejects_asymmetric_and_oversized() {
        let mut m = DenseMatrix::zeros(3);
        m.set(0, 1, 1.0);
        assert!(matches!(eigh(&m), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn density_matrix_diagonal_case() {
        let h = DenseMatrix::from_diag(&[-1.0, 0.0, 1.0]);
        let d = exact_density_matrix(&h, 1).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
        let expected = DenseMatrix::from_diag(&[1.0, 0.0, 0.0]);
        assert!(d.fnorm_diff(&expected).unwrap() <= 1e-12);
        // Full occupation gives the identity.
        let full = exact_density_matrix(&h, 3).unwrap();
        assert!(full.fnorm_diff(&DenseMatrix::identity(3)).unwrap() <= 1e-12);
    }

    #[test]
    fn density_matrix_is_idempotent_and_commutes() {
        let mut rng = SplitMix64::new(23);
        let h = random_symmetric(50, &mut rng);
        let d = exact_density_matrix(&h, 20).unwrap();
        let dd = dense_multiply(&d, &d).unwrap();
        assert!(dd.fnorm_diff(&d).unwrap() <= 1e-10);
        assert!((d.trace() - 20.0).abs() <= 1e-10);
        let dh = dense_multiply(&d, &h).unwrap();
        let hd = dense_multiply(&h, &d).unwrap();
        assert!(dh.fnorm_diff(&hd).unwrap() <= 1e-9 * h.frobenius());
    }

    #[test]
    fn density_matrix_detects_degenerate_gap() {
        let h = DenseMatrix::from_diag(&[0.0, 1.0, 1.0, 2.0]);
        assert!(matches!(
            exact_density_matrix(&h, 2),
            Err(Error::DegenerateGap { .. })
        ));
    }
}
