//! Small deterministic Hermitian eigenvalue kernels.
//!
//! Levi forms here are tiny (n = 2 or 3) and are decomposed millions of
//! times per run, so we use closed forms where they exist and a real
//! symmetric embedding otherwise. Everything is branch-deterministic:
//! the same matrix always yields the same eigenvalue list.

use nalgebra::DMatrix;
use num_complex::Complex;

pub type C64 = Complex<f64>;

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// n = 1 and n = 2 use closed forms. Larger matrices are embedded as the
/// real symmetric 2n x 2n matrix [[X, -Y], [Y, X]] whose spectrum is the
/// complex spectrum doubled; adjacent sorted pairs are averaged back.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigenvalues: square matrix required");
    match n {
        0 => Vec::new(),
        1 => vec![m[(0, 0)].re],
        2 => {
            let a = m[(0, 0)].re;
            let c = m[(1, 1)].re;
            let b = m[(0, 1)];
            let mid = 0.5 * (a + c);
            let half_gap = 0.5 * (a - c);
            let d = (half_gap * half_gap + b.norm_sqr()).sqrt();
            vec![mid - d, mid + d]
        }
        _ => {
            let mut r = DMatrix::<f64>::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    let z = m[(i, j)];
                    r[(i, j)] = z.re;
                    r[(i + n, j + n)] = z.re;
                    r[(i, j + n)] = -z.im;
                    r[(i + n, j)] = z.im;
                }
            }
            let eig = r.symmetric_eigen();
            let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            vals.sort_unstable_by(f64::total_cmp);
            // each eigenvalue appears twice; average the numerical pair
            (0..n).map(|i| 0.5 * (vals[2 * i] + vals[2 * i + 1])).collect()
        }
    }
}

/// Smallest singular value of a complex square matrix, via the smallest
/// eigenvalue of A* A.
pub fn smallest_singular_value(a: &DMatrix<C64>) -> f64 {
    singular_value_range(a).0
}

/// Smallest and largest singular values, via the spectrum of A* A.
pub fn singular_value_range(a: &DMatrix<C64>) -> (f64, f64) {
    let ata = a.adjoint() * a;
    let eigs = hermitian_eigenvalues(&ata);
    let lo = eigs.first().map(|v| v.max(0.0).sqrt()).unwrap_or(0.0);
    let hi = eigs.last().map(|v| v.max(0.0).sqrt()).unwrap_or(0.0);
    (lo, hi)
}

/// Inverse of a complex square matrix. 2 x 2 uses the adjugate closed form
/// so that composing with exact sign/permutation matrices stays bit-exact.
pub fn invert(a: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    let n = a.nrows();
    match n {
        1 => {
            let v = a[(0, 0)];
            if v == C64::new(0.0, 0.0) {
                None
            } else {
                Some(DMatrix::from_element(1, 1, C64::new(1.0, 0.0) / v))
            }
        }
        2 => {
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            if det == C64::new(0.0, 0.0) {
                return None;
            }
            let mut inv = DMatrix::<C64>::zeros(2, 2);
            inv[(0, 0)] = a[(1, 1)] / det;
            inv[(0, 1)] = -a[(0, 1)] / det;
            inv[(1, 0)] = -a[(1, 0)] / det;
            inv[(1, 1)] = a[(0, 0)] / det;
            Some(inv)
        }
        _ => a.clone().try_inverse(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(n: usize, entries: &[(usize, usize, f64, f64)]) -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(n, n);
        for &(i, j, re, im) in entries {
            m[(i, j)] = C64::new(re, im);
            m[(j, i)] = C64::new(re, -im);
        }
        m
    }

    #[test]
    fn diag_eigenvalues() {
        let m = cm(2, &[(0, 0, 1.0, 0.0), (1, 1, -2.0, 0.0)]);
        assert_eq!(hermitian_eigenvalues(&m), vec![-2.0, 1.0]);
    }

    #[test]
    fn offdiag_eigenvalues() {
        // [[0, i], [-i, 0]] has eigenvalues -1, 1
        let m = cm(2, &[(0, 1, 0.0, 1.0)]);
        let e = hermitian_eigenvalues(&m);
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn embedding_matches_closed_form() {
        let m = cm(
            3,
            &[
                (0, 0, 2.0, 0.0),
                (1, 1, -1.0, 0.0),
                (2, 2, 0.5, 0.0),
                (0, 1, 0.3, 0.7),
                (1, 2, -0.2, 0.1),
            ],
        );
        let e3 = hermitian_eigenvalues(&m);
        // spot check: trace and Frobenius norm preserved
        let tr: f64 = e3.iter().sum();
        assert!((tr - 1.5).abs() < 1e-10);
        let fro: f64 = e3.iter().map(|v| v * v).sum();
        let expect: f64 = m.iter().map(|z| z.norm_sqr()).sum();
        assert!((fro - expect).abs() < 1e-9);
    }

    #[test]
    fn invert_roundtrip_2x2() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 2.0),
                C64::new(0.5, -0.3),
                C64::new(-0.2, 0.1),
                C64::new(2.0, 0.0),
            ],
        );
        let inv = invert(&a).unwrap();
        let id = &a * &inv;
        assert!((id[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(id[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn sigma_min_of_scaled_unitary() {
        let mut u = DMatrix::<C64>::zeros(2, 2);
        u[(0, 1)] = C64::new(0.0, 1.0);
        u[(1, 0)] = C64::new(1.0, 0.0);
        let a = u * C64::new(0.25, 0.0);
        assert!((smallest_singular_value(&a) - 0.25).abs() < 1e-12);
    }
}
