//! Dense complex matrices and the small-matrix kernels the models need:
//! Kronecker products, partial traces over tensor factors, characteristic
//! polynomials, polynomial roots and Hermitian eigenvalues.
//!
//! Matrix sizes here are tiny (at most a few dozen rows), so everything is
//! written for clarity and numerical robustness rather than speed.

use crate::C64;
use num_complex::Complex64;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Diagonal matrix from the given entries.
    pub fn diag(entries: &[C64]) -> Self {
        let mut m = CMat::zeros(entries.len(), entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn dagger(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &CMat, s: C64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b * s;
        }
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn commutator(&self, other: &CMat) -> CMat {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Matrix power by repeated multiplication (small exponents only).
    pub fn pow(&self, k: usize) -> CMat {
        assert!(self.is_square());
        let mut out = CMat::identity(self.rows);
        for _ in 0..k {
            out = out.matmul(self);
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Kronecker product, first factor major: `(A ⊗ B)[(a,b),(c,d)] = A[a,c] B[b,d]`
    /// with row index `a * B.rows + b`.
    pub fn kron(&self, other: &CMat) -> CMat {
        let (ra, ca, rb, cb) = (self.rows, self.cols, other.rows, other.cols);
        let mut out = CMat::zeros(ra * rb, ca * cb);
        for a in 0..ra {
            for c in 0..ca {
                let s = self[(a, c)];
                if s == C64::new(0.0, 0.0) {
                    continue;
                }
                for b in 0..rb {
                    for d in 0..cb {
                        out[(a * rb + b, c * cb + d)] = s * other[(b, d)];
                    }
                }
            }
        }
        out
    }

    /// Partial trace over the first factor of an `(n*m) x (n*m)` operator on
    /// `C^n ⊗ C^m`; returns an `m x m` matrix.
    pub fn partial_trace_first(&self, n: usize, m: usize) -> CMat {
        assert_eq!(self.rows, n * m);
        assert_eq!(self.cols, n * m);
        CMat::from_fn(m, m, |b, d| {
            (0..n).map(|a| self[(a * m + b, a * m + d)]).sum()
        })
    }

    /// Partial trace over the second factor of an `(n*m) x (n*m)` operator on
    /// `C^n ⊗ C^m`; returns an `n x n` matrix.
    pub fn partial_trace_second(&self, n: usize, m: usize) -> CMat {
        assert_eq!(self.rows, n * m);
        assert_eq!(self.cols, n * m);
        CMat::from_fn(n, n, |a, c| {
            (0..m).map(|b| self[(a * m + b, c * m + b)]).sum()
        })
    }

    /// Characteristic polynomial coefficients `[c_0 = 1, c_1, ..., c_n]` of a
    /// square matrix, `det(λI − A) = Σ c_k λ^{n−k}`, by the Faddeev-LeVerrier
    /// recursion.
    pub fn charpoly(&self) -> Vec<C64> {
        assert!(self.is_square());
        let n = self.rows;
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        let mut m = CMat::identity(n);
        for k in 1..=n {
            let am = self.matmul(&m);
            let ck = -am.trace() / (k as f64);
            coeffs.push(ck);
            m = am;
            for i in 0..n {
                m[(i, i)] += ck;
            }
        }
        coeffs
    }

    /// Eigenvalues via the characteristic polynomial and Durand-Kerner
    /// iteration. Adequate for the small well-conditioned matrices used here.
    pub fn eigenvalues(&self) -> Vec<C64> {
        polynomial_roots(&self.charpoly())
    }

    /// Singular values in descending order, by one-sided Jacobi: column pairs
    /// are rotated until mutually orthogonal, then the norms are read off.
    /// Accurate for tiny singular values, unlike the Gram-matrix route.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut a = self.clone();
        let (rows, cols) = (a.rows, a.cols);
        for _sweep in 0..60 {
            let mut rotated = false;
            for p in 0..cols {
                for q in (p + 1)..cols {
                    let mut gpp = 0.0;
                    let mut gqq = 0.0;
                    let mut gpq = C64::new(0.0, 0.0);
                    for i in 0..rows {
                        gpp += a[(i, p)].norm_sqr();
                        gqq += a[(i, q)].norm_sqr();
                        gpq += a[(i, p)].conj() * a[(i, q)];
                    }
                    if gpq.norm() <= 1e-30 + 1e-17 * (gpp * gqq).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let phase = gpq / gpq.norm();
                    let theta = 0.5 * (2.0 * gpq.norm()).atan2(gqq - gpp);
                    let (c, s) = (theta.cos(), theta.sin());
                    let sp = phase * s;
                    for i in 0..rows {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = aip * c - aiq * sp.conj();
                        a[(i, q)] = aip * sp + aiq * c;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut sv: Vec<f64> = (0..cols)
            .map(|j| (0..rows).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt())
            .collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        sv
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, other: &CMat) -> CMat {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, other: &CMat) -> CMat {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for &CMat {
    type Output = CMat;
    fn neg(self) -> CMat {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul<&CMat> for &CMat {
    type Output = CMat;
    fn mul(self, other: &CMat) -> CMat {
        self.matmul(other)
    }
}

/// Roots of a monic polynomial with the given coefficients
/// `[c_0 = 1, c_1, ..., c_d]` (so `p(x) = Σ c_k x^{d−k}`), by Durand-Kerner.
pub fn polynomial_roots(coeffs: &[C64]) -> Vec<C64> {
    let d = coeffs.len() - 1;
    if d == 0 {
        return vec![];
    }
    let eval = |x: C64| -> C64 {
        let mut v = C64::new(0.0, 0.0);
        for &c in coeffs {
            v = v * x + c;
        }
        v
    };
    // Radius bound keeps the initial guesses around the root circle.
    let scale = coeffs
        .iter()
        .skip(1)
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    let r = 1.0 + scale;
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<C64> = (0..d)
        .map(|i| seed.powu(i as u32 + 1) * r / scale.max(1.0))
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..d {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..d {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                // Perturb clustered guesses apart.
                roots[i] += C64::new(1e-8, 2e-8);
                continue;
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    #[test]
    fn kron_and_partial_traces_are_inverse_on_factors() {
        let a = CMat::from_fn(2, 2, |i, j| c64((i + 2 * j) as f64, 1.0));
        let b = CMat::from_fn(3, 3, |i, j| c64(i as f64 - j as f64, 0.5 * (i * j) as f64));
        let k = a.kron(&b);
        let tr2 = k.partial_trace_second(2, 3);
        let tr1 = k.partial_trace_first(2, 3);
        let want2 = a.scale(b.trace());
        let want1 = b.scale(a.trace());
        assert!((&tr2 - &want2).max_abs() < 1e-13);
        assert!((&tr1 - &want1).max_abs() < 1e-13);
        assert!((k.trace() - a.trace() * b.trace()).norm() < 1e-13);
    }

    #[test]
    fn charpoly_matches_hand_computation_2x2() {
        // det(λI − A) = λ² − tr λ + det.
        let a = CMat::from_fn(2, 2, |i, j| c64((1 + i + 3 * j) as f64, (i * j) as f64));
        let cp = a.charpoly();
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        assert!((cp[1] + a.trace()).norm() < 1e-13);
        assert!((cp[2] - det).norm() < 1e-13);
    }

    #[test]
    fn eigenvalues_reproduce_trace_power_sums() {
        let a = CMat::from_fn(4, 4, |i, j| {
            c64(
                ((3 * i + j) % 5) as f64 * 0.3 - 0.4,
                ((i + 2 * j) % 7) as f64 * 0.11,
            )
        });
        let ev = a.eigenvalues();
        for k in 1..=4usize {
            let tr = a.pow(k).trace();
            let ps: C64 = ev.iter().map(|l| l.powu(k as u32)).sum();
            assert!((tr - ps).norm() < 1e-10, "power sum {k}: {tr} vs {ps}");
        }
    }

    #[test]
    fn singular_values_of_rank_one_matrix() {
        let u: Vec<C64> = (0..3)
            .map(|i| c64(1.0 + i as f64, -0.3 * i as f64))
            .collect();
        let v: Vec<C64> = (0..3).map(|i| c64(0.5 - i as f64, 0.7)).collect();
        let m = CMat::from_fn(3, 3, |i, j| u[i] * v[j]);
        let sv = m.singular_values();
        assert!(sv[1] / sv[0] < 1e-13);
        assert!(sv[2] / sv[0] < 1e-13);
    }
}
