//! Finite Heisenberg group generators `Q`, `Λ` and the basis `T_α` of
//! `Mat(N, C)`, with the pairing `tr(T_α T_β) = N δ_{α+β}` and the structure
//! constants `κ_{α,β}`.
//!
//! `T_γ` extends to all of `Z²` through the defining formula
//! `T_γ = exp(iπ γ₁γ₂/N) Q^{γ₁} Λ^{γ₂}`; shifting an index by `N` reproduces
//! the representative's matrix up to an exact sign, and all index arithmetic
//! in sums is done in `Z²` so that `T_α T_β = κ_{α,β} T_{α+β}` holds
//! literally.

use crate::linalg::CMat;
use crate::{c64, C64};
use std::f64::consts::PI;

/// `κ_{α,β} = exp(iπ (α₂β₁ − α₁β₂)/N)` on raw integer pairs.
pub fn kappa(n_order: usize, alpha: (i64, i64), beta: (i64, i64)) -> C64 {
    let arg = PI * ((alpha.1 * beta.0 - alpha.0 * beta.1) as f64) / n_order as f64;
    c64(arg.cos(), arg.sin())
}

/// Sign relating `T_γ` to the representative matrix:
/// `T_γ = wrap_sign(γ) T_{γ mod N}`.
pub fn wrap_sign(n_order: usize, gamma: (i64, i64)) -> f64 {
    let n = n_order as i64;
    let r1 = gamma.0.rem_euclid(n);
    let r2 = gamma.1.rem_euclid(n);
    let k = (gamma.0 * gamma.1 - r1 * r2) / n;
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The basis `T_α` of `Mat(N, C)`, precomputed for all `N²` representatives.
#[derive(Clone, Debug)]
pub struct TorusBasis {
    n_order: usize,
    /// Row-major over (α₁, α₂) representatives in `0..N`.
    t_matrices: Vec<CMat>,
}

impl TorusBasis {
    pub fn new(n_order: usize) -> Self {
        assert!(n_order >= 1);
        let n = n_order;
        let q = CMat::from_fn(n, n, |j, k| {
            if j == k {
                let arg = 2.0 * PI * ((k + 1) as f64) / n as f64;
                c64(arg.cos(), arg.sin())
            } else {
                c64(0.0, 0.0)
            }
        });
        let lambda = CMat::from_fn(n, n, |j, k| {
            if (k + n - j) % n == 1 % n {
                c64(1.0, 0.0)
            } else {
                c64(0.0, 0.0)
            }
        });
        let mut t_matrices = Vec::with_capacity(n * n);
        for a1 in 0..n {
            for a2 in 0..n {
                let arg = PI * (a1 * a2) as f64 / n as f64;
                let prefactor = c64(arg.cos(), arg.sin());
                let m = q.pow(a1).matmul(&lambda.pow(a2)).scale(prefactor);
                t_matrices.push(m);
            }
        }
        TorusBasis {
            n_order,
            t_matrices,
        }
    }

    pub fn n_order(&self) -> usize {
        self.n_order
    }

    /// Representative matrix for an index reduced to `0..N`.
    pub fn t_rep(&self, a1: usize, a2: usize) -> &CMat {
        &self.t_matrices[a1 * self.n_order + a2]
    }

    /// `T_γ` for any raw index pair, sign included.
    pub fn t(&self, gamma: (i64, i64)) -> CMat {
        let n = self.n_order as i64;
        let r1 = gamma.0.rem_euclid(n) as usize;
        let r2 = gamma.1.rem_euclid(n) as usize;
        let s = wrap_sign(self.n_order, gamma);
        if s > 0.0 {
            self.t_rep(r1, r2).clone()
        } else {
            self.t_rep(r1, r2).scale(c64(-1.0, 0.0))
        }
    }

    /// All representatives as raw index pairs, row-major.
    pub fn indices(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let n = self.n_order as i64;
        (0..n).flat_map(move |a1| (0..n).map(move |a2| (a1, a2)))
    }

    /// Nonzero representatives.
    pub fn indices_nonzero(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.indices().filter(|&g| g != (0, 0))
    }

    /// Permutation operator `P = (1/N) Σ_α T_α ⊗ T_{−α}` on `C^N ⊗ C^N`.
    pub fn permutation_operator(&self) -> CMat {
        let n = self.n_order;
        let mut p = CMat::zeros(n * n, n * n);
        for g in self.indices() {
            let k = self.t(g).kron(&self.t((-g.0, -g.1)));
            p.add_assign_scaled(&k, c64(1.0 / n as f64, 0.0));
        }
        p
    }

    /// Expansion coefficients `A_α = tr(A T_{−α})/N` over representatives,
    /// returned row-major like [`TorusBasis::t_rep`].
    pub fn to_coeffs(&self, a: &CMat) -> Vec<C64> {
        assert_eq!(
            a.rows(),
            self.n_order,
            "matrix size does not match basis order"
        );
        assert_eq!(
            a.cols(),
            self.n_order,
            "matrix size does not match basis order"
        );
        let n = self.n_order as f64;
        self.indices()
            .map(|g| self.t((-g.0, -g.1)).matmul(a).trace() / n)
            .collect()
    }

    /// Inverse of [`TorusBasis::to_coeffs`].
    pub fn from_coeffs(&self, coeffs: &[C64]) -> CMat {
        assert_eq!(
            coeffs.len(),
            self.n_order * self.n_order,
            "coefficient table size"
        );
        let mut a = CMat::zeros(self.n_order, self.n_order);
        for (g, &c) in self.indices().zip(coeffs.iter()) {
            a.add_assign_scaled(self.t_rep(g.0 as usize, g.1 as usize), c);
        }
        a
    }

    /// Coefficient for a raw index: `A_γ = wrap_sign(γ) A_{γ mod N}`.
    pub fn coeff_raw(coeffs: &[C64], n_order: usize, gamma: (i64, i64)) -> C64 {
        let n = n_order as i64;
        let r1 = gamma.0.rem_euclid(n) as usize;
        let r2 = gamma.1.rem_euclid(n) as usize;
        coeffs[r1 * n_order + r2] * wrap_sign(n_order, gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n1_is_trivial() {
        let b = TorusBasis::new(1);
        assert_eq!(b.t_rep(0, 0), &CMat::identity(1));
        assert_eq!(b.permutation_operator(), CMat::identity(1));
    }

    #[test]
    fn n2_generators_match_hand_computation() {
        let b = TorusBasis::new(2);
        // Q = diag(-1, 1), Λ = [[0,1],[1,0]], T_{(1,1)} = i QΛ.
        let q = b.t_rep(1, 0);
        assert!((q[(0, 0)] - c64(-1.0, 0.0)).norm() < 1e-15);
        assert!((q[(1, 1)] - c64(1.0, 0.0)).norm() < 1e-15);
        let l = b.t_rep(0, 1);
        assert!((l[(0, 1)] - c64(1.0, 0.0)).norm() < 1e-15);
        assert!((l[(1, 0)] - c64(1.0, 0.0)).norm() < 1e-15);
        let t11 = b.t_rep(1, 1);
        let qli = q.matmul(l).scale(c64(0.0, 1.0));
        assert!((t11 - &qli).max_abs() < 1e-15);
    }

    #[test]
    fn generators_have_order_n() {
        for n in 1..=4 {
            let b = TorusBasis::new(n);
            let q = b.t_rep(1 % n, 0);
            let l = b.t_rep(0, 1 % n);
            assert!((&q.pow(n) - &CMat::identity(n)).max_abs() < 1e-13);
            assert!((&l.pow(n) - &CMat::identity(n)).max_abs() < 1e-13);
        }
    }

    #[test]
    fn trace_pairing() {
        for n in 1..=4usize {
            let b = TorusBasis::new(n);
            for a in b.indices() {
                for bb in b.indices() {
                    let tr = b.t(a).matmul(&b.t(bb)).trace();
                    let wraps = (a.0 + bb.0) % n as i64 == 0 && (a.1 + bb.1) % n as i64 == 0;
                    if !wraps {
                        assert!(tr.norm() < 1e-12, "N={n}, α={a:?}, β={bb:?}, tr={tr}");
                    }
                }
                // Normalization against the negated index.
                let tr = b.t(a).matmul(&b.t((-a.0, -a.1))).trace();
                assert!((tr - c64(n as f64, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn n3_trace_example_against_entry_loop() {
        let b = TorusBasis::new(3);
        let x = b.t_rep(1, 2);
        let y = b.t_rep(2, 1);
        // Brute-force trace of the product.
        let mut tr = c64(0.0, 0.0);
        for i in 0..3 {
            for k in 0..3 {
                tr += x[(i, k)] * y[(k, i)];
            }
        }
        assert!((tr - c64(3.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn product_rule_with_raw_index_arithmetic() {
        for n in 2..=4usize {
            let b = TorusBasis::new(n);
            for a in b.indices() {
                for bb in b.indices() {
                    let lhs = b.t(a).matmul(&b.t(bb));
                    let rhs = b.t((a.0 + bb.0, a.1 + bb.1)).scale(kappa(n, a, bb));
                    assert!((&lhs - &rhs).max_abs() < 1e-12, "N={n}, α={a:?}, β={bb:?}");
                }
            }
        }
    }

    #[test]
    fn commutator_rule() {
        for n in 2..=4usize {
            let b = TorusBasis::new(n);
            for a in b.indices() {
                for bb in b.indices() {
                    let lhs = b.t(a).commutator(&b.t(bb));
                    let coeff = kappa(n, a, bb) - kappa(n, bb, a);
                    let rhs = b.t((a.0 + bb.0, a.1 + bb.1)).scale(coeff);
                    assert!((&lhs - &rhs).max_abs() < 1e-12, "N={n}, α={a:?}, β={bb:?}");
                }
            }
        }
    }

    #[test]
    fn kappa_symmetries() {
        for n in 2..=4usize {
            let b = TorusBasis::new(n);
            for a in b.indices() {
                assert!((kappa(n, a, a) - c64(1.0, 0.0)).norm() < 1e-15);
                for bb in b.indices() {
                    let apb = (a.0 + bb.0, a.1 + bb.1);
                    assert!((kappa(n, a, apb) - kappa(n, a, bb)).norm() < 1e-15);
                    assert!((kappa(n, (-a.0, -a.1), bb) - kappa(n, bb, a)).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn kappa_n2_example() {
        let k = kappa(2, (1, 0), (0, 1));
        assert!((k - c64(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn permutation_operator_swaps_and_squares_to_identity() {
        for n in 1..=3usize {
            let b = TorusBasis::new(n);
            let p = b.permutation_operator();
            assert!((&p.matmul(&p) - &CMat::identity(n * n)).max_abs() < 1e-12);
            let a = CMat::from_fn(n, n, |i, j| c64((i * n + j) as f64 * 0.3, 0.7 - j as f64));
            let bm = CMat::from_fn(n, n, |i, j| c64(0.2 - i as f64, (j + i) as f64 * 0.5));
            let lhs = p.matmul(&a.kron(&bm)).matmul(&p);
            let rhs = bm.kron(&a);
            assert!((&lhs - &rhs).max_abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_operator_swaps_basis_vectors_n2() {
        let b = TorusBasis::new(2);
        let p = b.permutation_operator();
        // e1 ⊗ e2 has tensor index 0*2+1 = 1; e2 ⊗ e1 has index 2.
        assert!((p[(1, 2)] - c64(1.0, 0.0)).norm() < 1e-13);
        assert!((p[(2, 1)] - c64(1.0, 0.0)).norm() < 1e-13);
        assert!(p[(1, 1)].norm() < 1e-13);
    }

    #[test]
    fn coefficient_roundtrip() {
        let b = TorusBasis::new(3);
        let a = CMat::from_fn(3, 3, |i, j| {
            c64(0.3 * i as f64 - 0.1, 0.2 * j as f64 + 0.05)
        });
        let coeffs = b.to_coeffs(&a);
        let back = b.from_coeffs(&coeffs);
        assert!((&a - &back).max_abs() < 1e-13);
        // Identity expands to the single coefficient A_0 = 1.
        let coeffs = b.to_coeffs(&CMat::identity(3));
        assert!((coeffs[0] - c64(1.0, 0.0)).norm() < 1e-13);
        assert!(coeffs.iter().skip(1).all(|c| c.norm() < 1e-13));
        // T_β expands to the indicator of β.
        let coeffs = b.to_coeffs(b.t_rep(2, 1));
        for (g, c) in b.indices().zip(coeffs.iter()) {
            if g == (2, 1) {
                assert!((c - c64(1.0, 0.0)).norm() < 1e-13);
            } else {
                assert!(c.norm() < 1e-13);
            }
        }
        // trace coefficient
        let m = CMat::from_fn(3, 3, |i, j| c64((i + j) as f64, 0.0));
        let coeffs = b.to_coeffs(&m);
        assert!((coeffs[0] - m.trace() / 3.0).norm() < 1e-13);
    }

    #[test]
    fn coeff_raw_tracks_wrap_signs() {
        let n = 2usize;
        let b = TorusBasis::new(n);
        let a = CMat::from_fn(n, n, |i, j| c64(1.0 + (i * n + j) as f64, 0.4 - i as f64));
        let coeffs = b.to_coeffs(&a);
        for g in [(3i64, 1i64), (-1, 1), (2, 2), (1, -1), (-2, 3)] {
            let direct = b.t((-g.0, -g.1)).matmul(&a).trace() / n as f64;
            let via = TorusBasis::coeff_raw(&coeffs, n, g);
            assert!((direct - via).norm() < 1e-13, "γ = {g:?}");
        }
    }
}
