//! Latent low-rank representation solved by inexact augmented Lagrangian
//! (ADMM) iterations:
//!
//! ```text
//! min ||Z||_* + ||L||_* + lambda ||E||_1   s.t.  X = XZ + LX + E
//! ```
//!
//! `Z` and `L` are split into auxiliary copies `J` and `S` so every
//! subproblem is either a singular value threshold, a soft threshold or a
//! linear solve with a fixed matrix.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `U diag(max(sigma - tau, 0)) V^T`; also returns the nuclear norm of the result.
pub fn singular_value_threshold<T: Scalar>(m: DMatrix<T>, tau: T) -> (DMatrix<T>, T) {
    let svd = SVD::new(m, true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let shrunk: Vec<T> = svd
        .singular_values
        .iter()
        .map(|&s| (s - tau).max(T::zero()))
        .collect();
    let norm = shrunk.iter().fold(T::zero(), |a, &b| a + b);
    let kept: Vec<usize> = (0..shrunk.len()).filter(|&k| shrunk[k] > T::zero()).collect();
    if kept.is_empty() {
        return (DMatrix::zeros(u.nrows(), v_t.ncols()), norm);
    }
    let mut us = DMatrix::zeros(u.nrows(), kept.len());
    let mut vt = DMatrix::zeros(kept.len(), v_t.ncols());
    for (dst, &k) in kept.iter().enumerate() {
        us.set_column(dst, &(u.column(k) * shrunk[k]));
        vt.set_row(dst, &v_t.row(k));
    }
    (us * vt, norm)
}

/// Elementwise `sign(x) max(|x| - tau, 0)`.
pub fn soft_threshold<T: Scalar>(m: &DMatrix<T>, tau: T) -> DMatrix<T> {
    m.map(|x| {
        if x > tau {
            x - tau
        } else if x < -tau {
            x + tau
        } else {
            T::zero()
        }
    })
}

/// Sum of singular values.
pub fn nuclear_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    m.singular_values().iter().fold(T::zero(), |a, &b| a + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatLrrOptions {
    /// Weight of the sparse error term.
    pub lambda: f64,
    /// Stop once every constraint residual falls below this (max-abs) value.
    pub tol: f64,
    pub max_iter: usize,
    pub mu: f64,
    pub mu_max: f64,
    pub rho: f64,
}

impl Default for LatLrrOptions {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            tol: 1e-6,
            max_iter: 600,
            mu: 1e-6,
            mu_max: 1e6,
            rho: 1.1,
        }
    }
}

/// Result of one LatLRR solve.
#[derive(Debug, Clone)]
pub struct LatLrrSolution<T: Scalar> {
    pub z: DMatrix<T>,
    pub l: DMatrix<T>,
    pub e: DMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    /// `||X - XZ - LX - E||_F / ||X||_F` at exit.
    pub relative_residual: T,
    /// `||J||_* + ||S||_* + lambda ||E||_1` after every iteration.
    pub objective: Vec<T>,
}

impl<T: Scalar> LatLrrSolution<T> {
    pub fn objective_value(&self, lambda: T) -> T {
        nuclear_norm(&self.z) + nuclear_norm(&self.l) + lambda * self.e.iter().fold(T::zero(), |a, &b| a + b.abs())
    }
}

fn spd_inverse<T: Scalar>(m: DMatrix<T>) -> Result<DMatrix<T>> {
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Data("LatLRR system matrix is not positive definite".into()))
}

fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

/// Solves the LatLRR problem for the data matrix `x` (`p x n`, columns are
/// samples). Non-convergence is reported through the solution, not as an error.
pub fn solve_latlrr<T: Scalar>(x: &DMatrix<T>, opts: &LatLrrOptions) -> Result<LatLrrSolution<T>> {
    let (p, n) = x.shape();
    if p == 0 || n == 0 {
        return Err(Error::Data("LatLRR needs a non-empty data matrix".into()));
    }
    if !(opts.lambda > 0.0) {
        return Err(Error::param("pixel.lambda", "must be positive"));
    }
    if !(opts.rho > 1.0 && opts.mu > 0.0 && opts.mu_max >= opts.mu) {
        return Err(Error::param("latlrr", "need rho > 1 and 0 < mu <= mu_max"));
    }

    let lambda = T::lit(opts.lambda);
    let tol = T::lit(opts.tol);
    let rho = T::lit(opts.rho);
    let mu_max = T::lit(opts.mu_max);
    let mut mu = T::lit(opts.mu);

    let xt = x.transpose();
    let inv_a = spd_inverse(DMatrix::identity(n, n) + &xt * x)?;
    let inv_b = spd_inverse(DMatrix::identity(p, p) + x * &xt)?;

    let mut z = DMatrix::<T>::zeros(n, n);
    let mut l = DMatrix::<T>::zeros(p, p);
    let mut e = DMatrix::<T>::zeros(p, n);
    let mut y1 = DMatrix::<T>::zeros(p, n);
    let mut y2 = DMatrix::<T>::zeros(n, n);
    let mut y3 = DMatrix::<T>::zeros(p, p);
    let x_norm = x.norm();

    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = x.clone();

    for _ in 0..opts.max_iter {
        iterations += 1;
        let inv_mu = T::one() / mu;

        let (j, j_norm) = singular_value_threshold(&z + &y2 * inv_mu, inv_mu);
        let (s, s_norm) = singular_value_threshold(&l + &y3 * inv_mu, inv_mu);

        let lx = &l * x;
        z = &inv_a * (&xt * (x - &lx - &e) + &j + (&xt * &y1 - &y2) * inv_mu);
        let xz = x * &z;
        l = ((x - &xz - &e) * &xt + &s + (&y1 * &xt - &y3) * inv_mu) * &inv_b;
        let lx = &l * x;
        e = soft_threshold(&(x - &xz - &lx + &y1 * inv_mu), lambda * inv_mu);

        residual = x - &xz - &lx - &e;
        let r2 = &z - &j;
        let r3 = &l - &s;
        y1 += &residual * mu;
        y2 += &r2 * mu;
        y3 += &r3 * mu;
        mu = (mu * rho).min(mu_max);

        objective.push(j_norm + s_norm + lambda * e.iter().fold(T::zero(), |a, &b| a + b.abs()));

        let stop = max_abs(&residual).max(max_abs(&r2)).max(max_abs(&r3));
        if stop < tol {
            converged = true;
            break;
        }
    }

    let relative_residual = if x_norm > T::zero() {
        residual.norm() / x_norm
    } else {
        residual.norm()
    };
    Ok(LatLrrSolution {
        z,
        l,
        e,
        iterations,
        converged,
        relative_residual,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svt_shrinks_singular_values() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let (out, norm) = singular_value_threshold::<f64>(m, 0.75);
        assert!((norm - 2.5f64).abs() < 1e-12);
        let sv = out.singular_values();
        let mut got: Vec<f64> = sv.iter().copied().collect();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((got[0] - 2.25).abs() < 1e-12);
        assert!((got[1] - 0.25).abs() < 1e-12);
        assert!(got[2].abs() < 1e-12);

        let (zero, n) = singular_value_threshold(DMatrix::<f64>::identity(2, 2), 5.0);
        assert_eq!(n, 0.0);
        assert_eq!(zero, DMatrix::zeros(2, 2));
    }

    #[test]
    fn soft_threshold_elementwise() {
        let m = DMatrix::from_row_slice(1, 4, &[2.0, -2.0, 0.3, -0.3]);
        assert_eq!(soft_threshold(&m, 0.5), DMatrix::from_row_slice(1, 4, &[1.5, -1.5, 0.0, 0.0]));
    }

    #[test]
    fn nuclear_norm_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((nuclear_norm::<f64>(&m) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_projection() {
        let x = DMatrix::<f64>::zeros(4, 6);
        let sol = solve_latlrr(&x, &LatLrrOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.l, DMatrix::zeros(4, 4));
        assert_eq!(sol.relative_residual, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_latlrr(&DMatrix::<f64>::zeros(0, 3), &LatLrrOptions::default()).is_err());
        let opts = LatLrrOptions {
            lambda: 0.0,
            ..LatLrrOptions::default()
        };
        assert!(solve_latlrr(&DMatrix::<f64>::zeros(2, 3), &opts).is_err());
    }

    #[test]
    fn small_problem_reaches_feasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(12, 30, |_, _| rng.random_range(-1.0..1.0));
        let sol = solve_latlrr(&x, &LatLrrOptions::default()).unwrap();
        assert!(sol.converged, "iterations {}", sol.iterations);
        assert!(sol.relative_residual <= 1e-6);
        // no worse than the trivial feasible point Z = 0, L = 0, E = X
        let trivial = 0.4 * x.iter().map(|v: &f64| v.abs()).sum::<f64>();
        assert!(sol.objective_value(0.4) <= trivial);
    }
}
