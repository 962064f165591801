use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::OperatorSpec;

const COERCIVITY_FLOOR: f64 = 1e-10;

/// Constants of the discrete coercivity bound
/// `2<-A u, u> + lambda |u|_H^2 >= alpha |u|_W^2` on fields vanishing at the
/// boundary, with `|u|_W^2 = |u|_H^2 + |D+ u|_H^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GardingReport {
    pub alpha: f64,
    pub lambda: f64,
    pub satisfied: bool,
}

/// Smallest generalized eigenvalue of `(2 S + lambda I, I + T / h²)` where
/// `S` is the symmetric part of `-A` and `T = tridiag(-1, 2, -1)`.
fn best_alpha(op: &OperatorSpec, grid: &Grid, lambda: f64) -> f64 {
    let n = grid.n_cells;
    let h2 = grid.h * grid.h;
    let a = op.interior_matrix(grid);
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut w = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        m[(i, i)] = -2.0 * a.diag[i] + lambda;
        w[(i, i)] += 2.0 / h2;
        if i + 1 < n {
            // symmetric part of -A, doubled
            let off = -(a.upper[i] + a.lower[i + 1]);
            m[(i, i + 1)] = off;
            m[(i + 1, i)] = off;
            w[(i, i + 1)] = -1.0 / h2;
            w[(i + 1, i)] = -1.0 / h2;
        }
    }
    let chol = w.cholesky().expect("W-norm Gram matrix is positive definite");
    let l = chol.l();
    let l_inv = l.clone().try_inverse().expect("triangular factor is invertible");
    let c = &l_inv * m * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Reports coercivity constants for the assembled operator.
///
/// `lambda = 0` is tried first. Otherwise the drift is absorbed with
/// `2ab <= eps a² + b² / eps`, which gives the candidate
/// `lambda = max|b|² / min(a) + min(a)`; with `min(a) = 0` no candidate exists.
pub fn check_garding(op: &OperatorSpec, grid: &Grid) -> GardingReport {
    let alpha0 = best_alpha(op, grid, 0.0);
    if alpha0 > COERCIVITY_FLOOR {
        return GardingReport { alpha: alpha0, lambda: 0.0, satisfied: true };
    }
    let a_min = op.second_order.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(a_min > 0.0) {
        return GardingReport { alpha: alpha0.max(0.0), lambda: 0.0, satisfied: false };
    }
    let b_max = op.first_order.iter().map(|b| b.abs()).fold(0.0, f64::max);
    let lambda = b_max * b_max / a_min + a_min;
    let alpha = best_alpha(op, grid, lambda);
    GardingReport { alpha, lambda, satisfied: alpha > COERCIVITY_FLOOR }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Draws random interior fields and checks the reported bound holds.
    fn sampled_check(op: &OperatorSpec, grid: &Grid, rep: &GardingReport) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = grid.n_cells;
        let h = grid.h;
        let a = op.interior_matrix(grid);
        for _ in 0..500 {
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let au = a.mul_vec(&u);
            let form: f64 = -au.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>() * h;
            let hn: f64 = u.iter().map(|v| v * v).sum::<f64>() * h;
            let mut grad = 0.0;
            for j in 0..=n {
                let r = if j < n { u[j] } else { 0.0 };
                let l = if j > 0 { u[j - 1] } else { 0.0 };
                grad += ((r - l) / h).powi(2) * h;
            }
            let lhs = 2.0 * form + rep.lambda * hn;
            assert!(lhs >= rep.alpha * (hn + grad) * (1.0 - 1e-9));
        }
    }

    #[test]
    fn pure_diffusion_needs_no_shift() {
        let g = build_grid(0.0, 1.0, 40).unwrap();
        let op = OperatorSpec::constant(&g, 0.5, 0.0, 0.1);
        let rep = check_garding(&op, &g);
        assert!(rep.satisfied);
        assert_eq!(rep.lambda, 0.0);
        // first Dirichlet eigenvalue mu of -Δ_h gives alpha = mu / (1 + mu)
        let mu = 2.0 / (g.h * g.h) * (1.0 - (std::f64::consts::PI * g.h).cos());
        assert!((rep.alpha - mu / (1.0 + mu)).abs() < 1e-8);
        sampled_check(&op, &g, &rep);
    }

    #[test]
    fn zero_operator_fails() {
        let g = build_grid(0.0, 1.0, 20).unwrap();
        let op = OperatorSpec::constant(&g, 0.0, 0.0, 0.1);
        assert!(!check_garding(&op, &g).satisfied);
    }

    #[test]
    fn drift_is_absorbed() {
        let g = build_grid(0.0, 1.0, 30).unwrap();
        let op = OperatorSpec::constant(&g, 0.5, 1.0, 0.1);
        let rep = check_garding(&op, &g);
        assert!(rep.satisfied && rep.alpha > 0.0);
        sampled_check(&op, &g, &rep);

        // variable drift breaks the skew symmetry of the central difference
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = OperatorSpec {
            second_order: vec![0.05; 30],
            first_order: (0..30).map(|_| rng.random_range(-4.0..4.0)).collect(),
            theta: 0.1,
        };
        let rep = check_garding(&op, &g);
        assert!(rep.satisfied);
        sampled_check(&op, &g, &rep);
    }
}
