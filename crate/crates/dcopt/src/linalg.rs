//! Dense linear-algebra helpers shared by the topology and problem modules.
//!
//! Everything here targets desk-scale matrices (n up to a few hundred), so
//! the routines favor exactness and determinism over asymptotic cleverness:
//! a cyclic Jacobi eigensolver for symmetric matrices and a plain power
//! iteration fallback for larger inputs.

use ndarray::{Array1, Array2};

/// Size threshold above which `spectral_norm` switches from the Jacobi
/// eigensolver to power iteration.
const JACOBI_MAX_DIM: usize = 256;

/// Convergence threshold for the power-iteration fallback.
const POWER_ITER_TOL: f64 = 1e-12;

/// Largest singular value of a square matrix `a`, computed through the
/// symmetric eigendecomposition of `aᵀa` (power iteration above
/// [`JACOBI_MAX_DIM`]).
pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    debug_assert_eq!(a.nrows(), a.ncols());
    let gram = gram_matrix(a);
    let lambda_max = if gram.nrows() <= JACOBI_MAX_DIM {
        symmetric_eigenvalues(&gram).into_iter().fold(0.0, f64::max)
    } else {
        power_iteration_sym(&gram, 10_000, POWER_ITER_TOL)
    };
    lambda_max.max(0.0).sqrt()
}

/// `aᵀa` for a square matrix.
fn gram_matrix(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[[k, i]] * a[[k, j]];
            }
            g[[i, j]] = s;
            g[[j, i]] = s;
        }
    }
    g
}

/// Eigenvalues of a symmetric matrix via the cyclic Jacobi rotation method.
///
/// The input must be symmetric; the routine sweeps until all off-diagonal
/// mass is below `1e-14` relative to the diagonal scale (at most 100 sweeps,
/// far more than small symmetric matrices ever need).
pub fn symmetric_eigenvalues(sym: &Array2<f64>) -> Vec<f64> {
    let n = sym.nrows();
    let mut a = sym.clone();
    if n == 1 {
        return vec![a[[0, 0]]];
    }
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(f64::MIN_POSITIVE, f64::max);
    let tol = 1e-14 * scale.max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[[p, q]].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration with a deterministic start vector.
fn power_iteration_sym(sym: &Array2<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = sym.nrows();
    // Deterministic, non-degenerate start: varying entries so the vector is
    // unlikely to be orthogonal to the dominant eigenvector.
    let mut v: Array1<f64> = Array1::from_iter((0..n).map(|i| 1.0 + (i as f64 + 1.0).sqrt()));
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0f64;
    for _ in 0..max_iter {
        let mut w = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += sym[[i, j]] * v[j];
            }
            w[i] = s;
        }
        let wnorm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            return 0.0;
        }
        let next = w.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
        w.mapv_inplace(|x| x / wnorm);
        let delta = (next - lambda).abs();
        v = w;
        lambda = next;
        if delta <= tol * lambda.abs().max(1.0) {
            break;
        }
    }
    lambda
}

/// Squared Frobenius norm.
pub fn frobenius_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Gossip mixing for agent-major state (row `i` holds agent `i`'s vector):
/// `out_i = Σ_j w_ji x_j`. Written as an explicit loop so every code path
/// that must be bitwise-reproducible shares the same summation order.
pub fn mix_rows(x: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    debug_assert_eq!(w.nrows(), n);
    debug_assert_eq!(w.ncols(), n);
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            let mut s = 0.0;
            for j in 0..n {
                s += x[[j, k]] * w[[j, i]];
            }
            out[[i, k]] = s;
        }
    }
    out
}

/// One mixed row `Σ_j w_ji x_j`, matching [`mix_rows`]' summation order.
pub fn mix_one_row(x: &Array2<f64>, w: &Array2<f64>, i: usize) -> Array1<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut out = Array1::zeros(d);
    for k in 0..d {
        let mut s = 0.0;
        for j in 0..n {
            s += x[[j, k]] * w[[j, i]];
        }
        out[k] = s;
    }
    out
}
