//! Odd theta function, Eisenstein functions, the Kronecker function and its
//! characteristic-twisted basis variants.
//!
//! All evaluation happens in an [`EllipticContext`] carrying the modular
//! parameter `tau`, the theta series truncation, the pole-exclusion radius
//! and the finite-difference step used by derivative cross-checks.
//!
//! Conventions:
//!
//! - `theta(z) = -Σ_k exp(iπτ(k+1/2)² + 2πi(z+1/2)(k+1/2))`, the odd theta.
//! - `E1 = θ'/θ`, `E2 = -E1'`, `wp = E2 + θ'''(0)/(3θ'(0))`.
//! - `phi(z,u) = θ'(0)θ(z+u)/(θ(z)θ(u))`, `f = ∂_u phi`, `f' = ∂_u² phi`.
//! - `rho(z) = (E1² − wp)/2`, regular at `z = 0` with value `θ'''(0)/(3θ'(0))`.
//! - `phi_alpha(z, ω_α + u) = exp(2πi α₂ z / N) phi(z, ω_α + u)` with
//!   `ω_α = (α₁ + α₂ τ)/N`; the argument passed to the twisted functions is
//!   the offset `u`, the characteristic shift is added internally.
//!
//! Twisted functions accept raw integer index pairs: they are invariant under
//! `α → α + N m`, so representative reduction is never needed on this side.

pub mod identities;

use crate::{c64, two_pi_i, C64};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EllipticError {
    #[error("modular parameter must lie in the upper half plane, got {0}")]
    InvalidModulus(C64),
    #[error("{what} = {point} is within {dist:.3e} of the period lattice (pole_eps = {eps:.3e})")]
    PoleProximity {
        what: String,
        point: C64,
        dist: f64,
        eps: f64,
    },
    #[error("twisted function with zero characteristic evaluated at the lattice point u = 0")]
    ZeroCharacteristicAtPole,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, EllipticError>;

/// Index `α = (α₁, α₂) ∈ Z_N × Z_N` of the twisted basis functions, stored
/// with representatives in `0..N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CharacteristicIndex {
    pub alpha1: usize,
    pub alpha2: usize,
    pub n_order: usize,
}

impl CharacteristicIndex {
    pub fn new(n_order: usize, a1: i64, a2: i64) -> Self {
        assert!(n_order >= 1);
        let n = n_order as i64;
        CharacteristicIndex {
            alpha1: a1.rem_euclid(n) as usize,
            alpha2: a2.rem_euclid(n) as usize,
            n_order,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.alpha1 == 0 && self.alpha2 == 0
    }

    pub fn raw(&self) -> (i64, i64) {
        (self.alpha1 as i64, self.alpha2 as i64)
    }

    /// `ω_α = (α₁ + α₂ τ) / N`.
    pub fn omega(&self, tau: C64) -> C64 {
        (c64(self.alpha1 as f64, 0.0) + tau * self.alpha2 as f64) / self.n_order as f64
    }
}

/// Evaluation environment for all elliptic functions.
#[derive(Clone, Debug)]
pub struct EllipticContext {
    tau: C64,
    trunc: usize,
    pole_eps: f64,
    fd_step: f64,
    /// θ'(0), θ'''(0) and the constant θ'''(0)/θ'(0).
    theta1_0: C64,
    theta3_0: C64,
    ctilde: C64,
}

pub const DEFAULT_TRUNC: usize = 30;
pub const DEFAULT_POLE_EPS: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

impl EllipticContext {
    /// Context with adaptive truncation: the bound doubles until the theta
    /// value is stable to 1e-14 relative on a probe grid.
    pub fn new(tau: C64) -> Result<Self> {
        let mut trunc = DEFAULT_TRUNC;
        loop {
            let ctx = Self::with_params(tau, trunc, DEFAULT_POLE_EPS, DEFAULT_FD_STEP)?;
            let refined = Self::with_params(tau, 2 * trunc, DEFAULT_POLE_EPS, DEFAULT_FD_STEP)?;
            let probes = [
                c64(0.23, 0.0) + tau * 0.11,
                c64(0.57, 0.0) + tau * 0.43,
                c64(0.91, 0.0) + tau * 0.77,
            ];
            let stable = probes.iter().all(|&z| {
                let a = ctx.theta(z);
                let b = refined.theta(z);
                (a - b).norm() <= 1e-14 * b.norm().max(1.0)
            });
            if stable || trunc >= 480 {
                return Ok(ctx);
            }
            trunc *= 2;
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // the negations also reject NaN
    pub fn with_params(tau: C64, trunc: usize, pole_eps: f64, fd_step: f64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.is_finite() {
            return Err(EllipticError::InvalidModulus(tau));
        }
        if trunc == 0 || !(pole_eps > 0.0) || !(fd_step > 0.0) {
            return Err(EllipticError::Invalid(
                "trunc, pole_eps and fd_step must be positive".into(),
            ));
        }
        let mut ctx = EllipticContext {
            tau,
            trunc,
            pole_eps,
            fd_step,
            theta1_0: c64(0.0, 0.0),
            theta3_0: c64(0.0, 0.0),
            ctilde: c64(0.0, 0.0),
        };
        let d0 = ctx.theta_derivs(c64(0.0, 0.0));
        ctx.theta1_0 = d0[1];
        ctx.theta3_0 = d0[3];
        ctx.ctilde = d0[3] / d0[1];
        Ok(ctx)
    }

    /// Same parameters at a different modulus (used by tau finite differences).
    pub fn with_tau(&self, tau: C64) -> Result<Self> {
        Self::with_params(tau, self.trunc, self.pole_eps, self.fd_step)
    }

    pub fn tau(&self) -> C64 {
        self.tau
    }
    pub fn trunc(&self) -> usize {
        self.trunc
    }
    pub fn pole_eps(&self) -> f64 {
        self.pole_eps
    }
    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }
    /// θ'''(0)/θ'(0); `wp = E2 + ctilde/3`.
    pub fn ctilde(&self) -> C64 {
        self.ctilde
    }
    pub fn theta_prime_0(&self) -> C64 {
        self.theta1_0
    }

    /// Distance from `w` to the period lattice `Z + Z tau`.
    pub fn lattice_distance(&self, w: C64) -> f64 {
        let y = w.im / self.tau.im;
        let n0 = y.floor();
        let mut best = f64::INFINITY;
        for dn in 0..=1 {
            let n = n0 + dn as f64;
            let rest = w - self.tau * n;
            let m0 = rest.re.floor();
            for dm in 0..=1 {
                let m = m0 + dm as f64;
                let d = (rest - c64(m, 0.0)).norm();
                best = best.min(d);
            }
        }
        best
    }

    /// Errors with `PoleProximity` if `w` is closer than `pole_eps` to the lattice.
    pub fn check_regular(&self, w: C64, what: &str) -> Result<()> {
        let dist = self.lattice_distance(w);
        if dist < self.pole_eps {
            return Err(EllipticError::PoleProximity {
                what: what.to_string(),
                point: w,
                dist,
                eps: self.pole_eps,
            });
        }
        Ok(())
    }

    /// Reduce `z` to the fundamental cell: `z = z0 + m + n tau` with
    /// `|Im z0| <= Im tau / 2`; returns `(z0, m, n)`.
    fn reduce(&self, z: C64) -> (C64, i64, i64) {
        let n = (z.im / self.tau.im).round();
        let rest = z - self.tau * n;
        let m = rest.re.round();
        (rest - c64(m, 0.0), m as i64, n as i64)
    }

    /// Theta and its first three z-derivatives at `z`, via the truncated
    /// series evaluated in the fundamental cell with the quasi-periodicity
    /// multiplier reapplied exactly.
    pub fn theta_derivs(&self, z: C64) -> [C64; 4] {
        let (z0, m, n) = self.reduce(z);
        let raw = self.theta_series_derivs(z0);
        if n == 0 && m == 0 {
            return raw;
        }
        // theta(z0 + m + n tau) = (-1)^{m+n} exp(-iπτn² - 2πi n z0) theta(z0),
        // so theta^{(k)}(z) = mult * Σ_j C(k,j) (-2πi n)^{k-j} theta^{(j)}(z0).
        let sign = if (m + n) % 2 == 0 { 1.0 } else { -1.0 };
        let nf = n as f64;
        let mult = (-c64(0.0, std::f64::consts::PI) * self.tau * nf * nf - two_pi_i() * nf * z0)
            .exp()
            * sign;
        let a = -two_pi_i() * nf;
        let binom: [[f64; 4]; 4] = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 3.0, 1.0],
        ];
        let mut out = [c64(0.0, 0.0); 4];
        for (k, item) in out.iter_mut().enumerate() {
            let mut acc = c64(0.0, 0.0);
            for (j, rawj) in raw.iter().enumerate().take(k + 1) {
                acc += rawj * a.powu((k - j) as u32) * binom[k][j];
            }
            *item = acc * mult;
        }
        out
    }

    fn theta_series_derivs(&self, z: C64) -> [C64; 4] {
        let ipi = c64(0.0, std::f64::consts::PI);
        let mut out = [c64(0.0, 0.0); 4];
        let kk = self.trunc as i64;
        for k in -kk..=kk {
            let half = k as f64 + 0.5;
            let expo = ipi * self.tau * half * half + two_pi_i() * (z + 0.5) * half;
            let term = -expo.exp();
            let d = two_pi_i() * half;
            let mut pw = c64(1.0, 0.0);
            for item in out.iter_mut() {
                *item += term * pw;
                pw *= d;
            }
        }
        out
    }

    pub fn theta(&self, z: C64) -> C64 {
        self.theta_derivs(z)[0]
    }

    /// k-th z-derivative of theta, k <= 3.
    pub fn theta_deriv(&self, z: C64, k: usize) -> C64 {
        self.theta_derivs(z)[k]
    }

    /// First Eisenstein function `E1 = θ'/θ`, evaluated in the fundamental
    /// cell and shifted back exactly via `E1(z + m + nτ) = E1(z) - 2πi n`,
    /// which keeps large arguments overflow-free.
    pub fn e1(&self, z: C64) -> Result<C64> {
        self.check_regular(z, "E1 argument")?;
        let (z0, _, n) = self.reduce(z);
        let d = self.theta_series_derivs(z0);
        finite(d[1] / d[0] - two_pi_i() * n as f64, "E1")
    }

    /// Second Eisenstein function `E2 = -E1' = E1² - θ''/θ` (double periodic).
    pub fn e2(&self, z: C64) -> Result<C64> {
        self.check_regular(z, "E2 argument")?;
        let (z0, _, _) = self.reduce(z);
        let d = self.theta_series_derivs(z0);
        let e1 = d[1] / d[0];
        finite(e1 * e1 - d[2] / d[0], "E2")
    }

    /// `E2' = -E1''` (double periodic).
    pub fn e2_prime(&self, z: C64) -> Result<C64> {
        self.check_regular(z, "E2' argument")?;
        let (z0, _, _) = self.reduce(z);
        let d = self.theta_series_derivs(z0);
        let e1 = d[1] / d[0];
        let e2 = e1 * e1 - d[2] / d[0];
        finite(-2.0 * e1 * e2 - d[3] / d[0] + (d[2] / d[0]) * e1, "E2'")
    }

    /// Weierstrass p-function, `wp = E2 + θ'''(0)/(3 θ'(0))`.
    pub fn wp(&self, z: C64) -> Result<C64> {
        Ok(self.e2(z)? + self.ctilde / 3.0)
    }

    pub fn wp_prime(&self, z: C64) -> Result<C64> {
        self.e2_prime(z)
    }

    /// `rho = (E1² - wp)/2`.
    pub fn rho(&self, z: C64) -> Result<C64> {
        let e1 = self.e1(z)?;
        let wp = self.wp(z)?;
        Ok((e1 * e1 - wp) / 2.0)
    }

    /// Value of `rho` at the origin, where the double poles cancel:
    /// `rho(0) = θ'''(0)/(3θ'(0))`.
    pub fn rho0(&self) -> C64 {
        self.ctilde / 3.0
    }

    /// `rho' = -E1 E2 - wp'/2`.
    pub fn rho_dz(&self, z: C64) -> Result<C64> {
        let e1 = self.e1(z)?;
        let e2 = self.e2(z)?;
        let wpp = self.e2_prime(z)?;
        Ok(-e1 * e2 - wpp / 2.0)
    }

    /// Kronecker function `phi(z,u) = θ'(0) θ(z+u) / (θ(z) θ(u))`.
    pub fn phi(&self, z: C64, u: C64) -> Result<C64> {
        self.check_regular(z, "phi first argument")?;
        self.check_regular(u, "phi second argument")?;
        self.check_regular(z + u, "phi argument sum")?;
        finite(
            self.theta1_0 * self.theta(z + u) / (self.theta(z) * self.theta(u)),
            "phi",
        )
    }

    /// `f(z,u) = ∂_u phi(z,u) = phi(z,u) (E1(z+u) - E1(u))`; at `z = 0` the
    /// closed form `f(0,u) = -E2(u)` applies.
    pub fn f(&self, z: C64, u: C64) -> Result<C64> {
        if z == c64(0.0, 0.0) {
            return Ok(-self.e2(u)?);
        }
        let phi = self.phi(z, u)?;
        Ok(phi * (self.e1(z + u)? - self.e1(u)?))
    }

    /// `f'(z,u) = ∂_u² phi(z,u)`; at `z = 0` it equals `-wp'(u)`.
    pub fn f_prime(&self, z: C64, u: C64) -> Result<C64> {
        if z == c64(0.0, 0.0) {
            return Ok(-self.e2_prime(u)?);
        }
        let phi = self.phi(z, u)?;
        let g = self.e1(z + u)? - self.e1(u)?;
        let f = phi * g;
        Ok(f * g + phi * (self.e2(u)? - self.e2(z + u)?))
    }

    /// `∂_z phi(z,u) = phi(z,u) (E1(z+u) - E1(z))`.
    pub fn phi_dz(&self, z: C64, u: C64) -> Result<C64> {
        let phi = self.phi(z, u)?;
        Ok(phi * (self.e1(z + u)? - self.e1(z)?))
    }

    /// `∂_z f(z,u) = ∂_z ∂_u phi(z,u)`.
    pub fn f_dz(&self, z: C64, u: C64) -> Result<C64> {
        let phi = self.phi(z, u)?;
        let e1zu = self.e1(z + u)?;
        let g = e1zu - self.e1(u)?;
        let phidz = phi * (e1zu - self.e1(z)?);
        Ok(phidz * g - phi * self.e2(z + u)?)
    }

    /// `∂_z² phi(z,u)`.
    pub fn phi_dz2(&self, z: C64, u: C64) -> Result<C64> {
        let phi = self.phi(z, u)?;
        let g = self.e1(z + u)? - self.e1(z)?;
        Ok(phi * (g * g - self.e2(z + u)? + self.e2(z)?))
    }

    fn twist(&self, n_order: usize, a2: i64, z: C64) -> C64 {
        (two_pi_i() * (a2 as f64 / n_order as f64) * z).exp()
    }

    /// `ω_γ = (γ₁ + γ₂ τ)/N` for a raw integer pair.
    pub fn omega_raw(&self, n_order: usize, gamma: (i64, i64)) -> C64 {
        (c64(gamma.0 as f64, 0.0) + self.tau * gamma.1 as f64) / n_order as f64
    }

    /// `phi_γ(z, ω_γ + u) = exp(2πi γ₂ z/N) phi(z, ω_γ + u)`; `u` is the
    /// offset from the characteristic point.
    pub fn phi_alpha_raw(&self, n_order: usize, gamma: (i64, i64), z: C64, u: C64) -> Result<C64> {
        let w = self.omega_raw(n_order, gamma) + u;
        Ok(self.twist(n_order, gamma.1, z) * self.phi(z, w)?)
    }

    /// `f_γ(z, ω_γ + u) = ∂_u phi_γ`.
    pub fn f_alpha_raw(&self, n_order: usize, gamma: (i64, i64), z: C64, u: C64) -> Result<C64> {
        let w = self.omega_raw(n_order, gamma) + u;
        Ok(self.twist(n_order, gamma.1, z) * self.f(z, w)?)
    }

    /// `f'_γ(z, ω_γ + u) = ∂_u² phi_γ`.
    pub fn f_prime_alpha_raw(
        &self,
        n_order: usize,
        gamma: (i64, i64),
        z: C64,
        u: C64,
    ) -> Result<C64> {
        let w = self.omega_raw(n_order, gamma) + u;
        Ok(self.twist(n_order, gamma.1, z) * self.f_prime(z, w)?)
    }

    /// `∂_z phi_γ(z, ω_γ + u)`.
    pub fn phi_alpha_dz_raw(
        &self,
        n_order: usize,
        gamma: (i64, i64),
        z: C64,
        u: C64,
    ) -> Result<C64> {
        let w = self.omega_raw(n_order, gamma) + u;
        let c = two_pi_i() * (gamma.1 as f64 / n_order as f64);
        Ok(self.twist(n_order, gamma.1, z) * (c * self.phi(z, w)? + self.phi_dz(z, w)?))
    }

    /// `∂_z f_γ(z, ω_γ + u)`.
    pub fn f_alpha_dz_raw(&self, n_order: usize, gamma: (i64, i64), z: C64, u: C64) -> Result<C64> {
        let w = self.omega_raw(n_order, gamma) + u;
        let c = two_pi_i() * (gamma.1 as f64 / n_order as f64);
        Ok(self.twist(n_order, gamma.1, z) * (c * self.f(z, w)? + self.f_dz(z, w)?))
    }

    /// `∂_z² phi_γ(z, ω_γ + u)`.
    pub fn phi_alpha_dz2_raw(
        &self,
        n_order: usize,
        gamma: (i64, i64),
        z: C64,
        u: C64,
    ) -> Result<C64> {
        let w = self.omega_raw(n_order, gamma) + u;
        let c = two_pi_i() * (gamma.1 as f64 / n_order as f64);
        Ok(self.twist(n_order, gamma.1, z)
            * (c * c * self.phi(z, w)? + 2.0 * c * self.phi_dz(z, w)? + self.phi_dz2(z, w)?))
    }

    pub fn phi_alpha(&self, idx: CharacteristicIndex, z: C64, u: C64) -> Result<C64> {
        self.guard_zero_characteristic(idx, u)?;
        self.phi_alpha_raw(idx.n_order, idx.raw(), z, u)
    }

    pub fn f_alpha(&self, idx: CharacteristicIndex, z: C64, u: C64) -> Result<C64> {
        self.guard_zero_characteristic(idx, u)?;
        self.f_alpha_raw(idx.n_order, idx.raw(), z, u)
    }

    pub fn f_prime_alpha(&self, idx: CharacteristicIndex, z: C64, u: C64) -> Result<C64> {
        self.guard_zero_characteristic(idx, u)?;
        self.f_prime_alpha_raw(idx.n_order, idx.raw(), z, u)
    }

    fn guard_zero_characteristic(&self, idx: CharacteristicIndex, u: C64) -> Result<()> {
        if idx.is_zero() && self.lattice_distance(u) < self.pole_eps {
            return Err(EllipticError::ZeroCharacteristicAtPole);
        }
        Ok(())
    }

    /// Residual `|2πi ∂_τ phi - ∂_z ∂_u phi| / max(1, |phi|)` with the
    /// τ-derivative from Richardson-extrapolated centered differences (real
    /// and imaginary steps averaged) and the mixed derivative from a 4-point
    /// stencil of width `fd_step`.
    pub fn heat_residual_phi(&self, z: C64, u: C64) -> Result<f64> {
        let h = self.fd_step;
        let phi_at = |tau: C64| -> Result<C64> { self.with_tau(tau)?.phi(z, u) };
        let centered = |h: f64| -> Result<C64> {
            let dre = (phi_at(self.tau + h)? - phi_at(self.tau - h)?) / (2.0 * h);
            let dim = (phi_at(self.tau + c64(0.0, h))? - phi_at(self.tau - c64(0.0, h))?)
                / c64(0.0, 2.0 * h);
            Ok((dre + dim) / 2.0)
        };
        let dtau = (4.0 * centered(h / 2.0)? - centered(h)?) / 3.0;
        let mixed = (self.phi(z + h, u + h)? - self.phi(z + h, u - h)? - self.phi(z - h, u + h)?
            + self.phi(z - h, u - h)?)
            / (4.0 * h * h);
        let scale = self.phi(z, u)?.norm().max(1.0);
        Ok((two_pi_i() * dtau - mixed).norm() / scale)
    }
}

fn finite(v: C64, what: &'static str) -> Result<C64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EllipticError::NonFinite(what))
    }
}
