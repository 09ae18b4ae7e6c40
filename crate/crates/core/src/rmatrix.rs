//! The Baxter-Belavin kernel in the normalization `R^z(x)` built on the
//! twisted Kronecker functions, the quadratic and classical identity ladder
//! it satisfies, and the rebuilt Lax dynamics with partial-trace
//! contractions.
//!
//! The kernel is `R^z_12(x) = (1/N) Σ_α phi_α(x, z/N + ω_α) T_α ⊗ T_{-α}`
//! acting on `C^N ⊗ C^N`, with classical parts
//! `r_12(x) = (1/N) E1(x) 1⊗1 + (1/N) Σ_{α≠0} phi_α(x, ω_α) T_α ⊗ T_{-α}` and
//! `m_12(x) = (1/N²) rho(x) 1⊗1 + (1/N²) Σ_{α≠0} f_α(x, ω_α) T_α ⊗ T_{-α}`.

use crate::elliptic::{EllipticContext, EllipticError};
use crate::lax::{PhaseTangent, SpectralOperator};
use crate::linalg::CMat;
use crate::state::{ModelSpec, PhaseState};
use crate::torus::TorusBasis;
use crate::{c64, two_pi_i, C64};

type EResult<T> = Result<T, EllipticError>;

/// The normalized Baxter-Belavin kernel together with its derivative and
/// expansion data.
#[derive(Clone)]
pub struct BaxterBelavin {
    pub n_order: usize,
    ctx: EllipticContext,
    basis: TorusBasis,
}

/// Classical expansion data of a kernel at a point `x`.
pub struct ClassicalParts {
    pub r: CMat,
    pub m: CMat,
    /// `F^0(x) = ∂_x r(x)`.
    pub f0: CMat,
}

/// Evaluation surface a quadratic-identity kernel must provide. The checks
/// in this module are written against this trait, so alternative kernels
/// (trigonometric or rational degenerations, say) can be run through the
/// same verification battery.
pub trait SpectralKernel: Send + Sync {
    fn n_order(&self) -> usize;
    /// Permutation operator on the two tensor factors.
    fn permutation(&self) -> CMat;
    /// `R^z(x)`.
    fn eval(&self, z: C64, x: C64) -> EResult<CMat>;
    /// `F^z(x) = ∂_x R^z(x)`, with the classical limit at `z = 0`.
    fn eval_dx(&self, z: C64, x: C64) -> EResult<CMat>;
    /// `∂_x F^z(x)`.
    fn eval_dx2(&self, z: C64, x: C64) -> EResult<CMat>;
    /// Classical part `r(x)` of the z-expansion.
    fn r(&self, x: C64) -> EResult<CMat>;
    /// Subleading part `m(x)` of the z-expansion.
    fn m(&self, x: C64) -> EResult<CMat>;
    /// `m(0)`.
    fn m_at_zero(&self) -> EResult<CMat>;
    /// `∂_x r(x)`.
    fn r_dx(&self, x: C64) -> EResult<CMat>;
    /// `∂_x m(x)`.
    fn m_dx(&self, x: C64) -> EResult<CMat>;
    /// Constant coefficient of the x-expansion of `r`.
    fn r0(&self) -> EResult<CMat>;
    /// Coefficients `(R^{z,(0)}, R^{z,(1)})` of the x-expansion of `R^z`.
    fn x_series(&self, z: C64) -> EResult<(CMat, CMat)>;
}

impl SpectralKernel for BaxterBelavin {
    fn n_order(&self) -> usize {
        self.n_order
    }
    fn permutation(&self) -> CMat {
        BaxterBelavin::permutation(self)
    }
    fn eval(&self, z: C64, x: C64) -> EResult<CMat> {
        BaxterBelavin::eval(self, z, x)
    }
    fn eval_dx(&self, z: C64, x: C64) -> EResult<CMat> {
        BaxterBelavin::kernel_f(self, z, x)
    }
    fn eval_dx2(&self, z: C64, x: C64) -> EResult<CMat> {
        BaxterBelavin::kernel_df(self, z, x)
    }
    fn r(&self, x: C64) -> EResult<CMat> {
        BaxterBelavin::r(self, x)
    }
    fn m(&self, x: C64) -> EResult<CMat> {
        BaxterBelavin::m(self, x)
    }
    fn m_at_zero(&self) -> EResult<CMat> {
        BaxterBelavin::m_at_zero(self)
    }
    fn r_dx(&self, x: C64) -> EResult<CMat> {
        BaxterBelavin::r_dx(self, x)
    }
    fn m_dx(&self, x: C64) -> EResult<CMat> {
        BaxterBelavin::m_dx(self, x)
    }
    fn r0(&self) -> EResult<CMat> {
        BaxterBelavin::r0(self)
    }
    fn x_series(&self, z: C64) -> EResult<(CMat, CMat)> {
        BaxterBelavin::x_series(self, z)
    }
}

impl BaxterBelavin {
    pub fn new(ctx: &EllipticContext, n_order: usize) -> Self {
        BaxterBelavin {
            n_order,
            ctx: ctx.clone(),
            basis: TorusBasis::new(n_order),
        }
    }

    pub fn ctx(&self) -> &EllipticContext {
        &self.ctx
    }

    pub fn permutation(&self) -> CMat {
        self.basis.permutation_operator()
    }

    fn sum_over(
        &self,
        include_zero: bool,
        mut term: impl FnMut(&EllipticContext, (i64, i64)) -> EResult<C64>,
    ) -> EResult<CMat> {
        let n = self.n_order;
        let mut out = CMat::zeros(n * n, n * n);
        for g in self.basis.indices() {
            if !include_zero && g == (0, 0) {
                continue;
            }
            let c = term(&self.ctx, g)?;
            let t = self.basis.t_rep(g.0 as usize, g.1 as usize);
            let tm = self.basis.t((-g.0, -g.1));
            out.add_assign_scaled(&t.kron(&tm), c);
        }
        Ok(out)
    }

    /// `R^z(x)`.
    pub fn eval(&self, z: C64, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        self.sum_over(true, |ctx, g| {
            Ok(ctx.phi_alpha_raw(self.n_order, g, x, z / n)? / n)
        })
    }

    /// `F^z(x) = ∂_x R^z(x)`.
    pub fn eval_dx(&self, z: C64, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        self.sum_over(true, |ctx, g| {
            Ok(ctx.phi_alpha_dz_raw(self.n_order, g, x, z / n)? / n)
        })
    }

    /// `∂_x F^z(x) = ∂_x² R^z(x)`.
    pub fn eval_dx2(&self, z: C64, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        self.sum_over(true, |ctx, g| {
            Ok(ctx.phi_alpha_dz2_raw(self.n_order, g, x, z / n)? / n)
        })
    }

    /// `∂_z R^z(x)` (derivative in the spectral parameter).
    pub fn eval_dz(&self, z: C64, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        self.sum_over(true, |ctx, g| {
            Ok(ctx.f_alpha_raw(self.n_order, g, x, z / n)? / (n * n))
        })
    }

    /// `∂_z ∂_x R^z(x)`.
    pub fn eval_dz_dx(&self, z: C64, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        self.sum_over(true, |ctx, g| {
            Ok(ctx.f_alpha_dz_raw(self.n_order, g, x, z / n)? / (n * n))
        })
    }

    /// Classical r-matrix `r(x)`.
    pub fn r(&self, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            Ok(ctx.phi_alpha_raw(self.n_order, g, x, c64(0.0, 0.0))? / n)
        })?;
        let e1 = self.ctx.e1(x)? / n;
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += e1;
        }
        Ok(out)
    }

    /// Subleading part `m(x)`.
    pub fn m(&self, x: C64) -> EResult<CMat> {
        let n2 = (self.n_order * self.n_order) as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            Ok(ctx.f_alpha_raw(self.n_order, g, x, c64(0.0, 0.0))? / n2)
        })?;
        let rho = self.ctx.rho(x)? / n2;
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += rho;
        }
        Ok(out)
    }

    /// `m(0)`: the double poles cancel, the scalar weight is `rho(0)` and the
    /// twisted weights are `-E2(ω_α)`.
    pub fn m_at_zero(&self) -> EResult<CMat> {
        let n2 = (self.n_order * self.n_order) as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            Ok(-ctx.e2(ctx.omega_raw(self.n_order, g))? / n2)
        })?;
        let rho0 = self.ctx.rho0() / n2;
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += rho0;
        }
        Ok(out)
    }

    /// `F^0(x) = ∂_x r(x)` in closed form.
    pub fn r_dx(&self, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            Ok(ctx.phi_alpha_dz_raw(self.n_order, g, x, c64(0.0, 0.0))? / n)
        })?;
        let de1 = -self.ctx.e2(x)? / n;
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += de1;
        }
        Ok(out)
    }

    /// `∂_x² r(x)`.
    pub fn r_dx2(&self, x: C64) -> EResult<CMat> {
        let n = self.n_order as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            Ok(ctx.phi_alpha_dz2_raw(self.n_order, g, x, c64(0.0, 0.0))? / n)
        })?;
        let d2e1 = -self.ctx.e2_prime(x)? / n;
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += d2e1;
        }
        Ok(out)
    }

    /// `F^z(x)` where the coinciding-pole value `F^0(x)` is the classical
    /// limit `∂_x r(x)` (the singular `1/z` part of the kernel does not
    /// depend on `x`).
    pub fn kernel_f(&self, z: C64, x: C64) -> EResult<CMat> {
        if z == c64(0.0, 0.0) {
            self.r_dx(x)
        } else {
            self.eval_dx(z, x)
        }
    }

    /// `∂_x F^z(x)` with the same classical limit at `z = 0`.
    pub fn kernel_df(&self, z: C64, x: C64) -> EResult<CMat> {
        if z == c64(0.0, 0.0) {
            self.r_dx2(x)
        } else {
            self.eval_dx2(z, x)
        }
    }

    /// `∂_x m(x)`.
    pub fn m_dx(&self, x: C64) -> EResult<CMat> {
        let n2 = (self.n_order * self.n_order) as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            Ok(ctx.f_alpha_dz_raw(self.n_order, g, x, c64(0.0, 0.0))? / n2)
        })?;
        let drho = self.ctx.rho_dz(x)? / n2;
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += drho;
        }
        Ok(out)
    }

    /// Constant term `r^{(0)}` of the x-expansion `r(x) = P/x + r^{(0)} + x r^{(1)}`.
    pub fn r0(&self) -> EResult<CMat> {
        let n = self.n_order as f64;
        self.sum_over(false, |ctx, g| {
            let w = ctx.omega_raw(self.n_order, g);
            Ok((ctx.e1(w)? + two_pi_i() * (g.1 as f64) / n) / n)
        })
    }

    /// Linear term `r^{(1)}` of the same expansion.
    pub fn r1(&self) -> EResult<CMat> {
        let n = self.n_order as f64;
        let mut out = self.sum_over(false, |ctx, g| {
            let w = ctx.omega_raw(self.n_order, g);
            let c = two_pi_i() * (g.1 as f64) / n;
            Ok((ctx.rho(w)? + c * ctx.e1(w)? + c * c / 2.0) / n)
        })?;
        let scalar = self.ctx.rho0() / n; // zero-index slot contributes ctilde/3 / N
        for d in 0..self.n_order * self.n_order {
            out[(d, d)] += scalar;
        }
        Ok(out)
    }

    /// Coefficients `R^{z,(0)}`, `R^{z,(1)}` of the x-expansion
    /// `R^z(x) = P/x + R^{z,(0)} + x R^{z,(1)} + O(x²)`.
    pub fn x_series(&self, z: C64) -> EResult<(CMat, CMat)> {
        let n = self.n_order as f64;
        let r0 = self.sum_over(true, |ctx, g| {
            let v = z / n + ctx.omega_raw(self.n_order, g);
            let c = two_pi_i() * (g.1 as f64) / n;
            Ok((ctx.e1(v)? + c) / n)
        })?;
        let r1 = self.sum_over(true, |ctx, g| {
            let v = z / n + ctx.omega_raw(self.n_order, g);
            let c = two_pi_i() * (g.1 as f64) / n;
            Ok((ctx.rho(v)? + c * ctx.e1(v)? + c * c / 2.0) / n)
        })?;
        Ok((r0, r1))
    }

    /// Classical parts at `x` (cross-checked against the kernel's z-expansion
    /// in the test suite).
    pub fn classical_parts(&self, x: C64) -> EResult<ClassicalParts> {
        Ok(ClassicalParts {
            r: self.r(x)?,
            m: self.m(x)?,
            f0: self.r_dx(x)?,
        })
    }

    /// Residual of the heat equation `2πi ∂_tau R^z(u) = ∂_z ∂_u R^z(u)`,
    /// tau-derivative by Richardson-extrapolated centered differences.
    pub fn heat_residual(&self, z: C64, u: C64) -> EResult<f64> {
        let h = self.ctx.fd_step();
        let at = |tau: C64| -> EResult<CMat> {
            let bb = BaxterBelavin::new(&self.ctx.with_tau(tau)?, self.n_order);
            bb.eval(z, u)
        };
        let tau = self.ctx.tau();
        let centered = |h: f64| -> EResult<CMat> {
            let re = &(&at(tau + h)? - &at(tau - h)?).scale(c64(1.0 / (2.0 * h), 0.0));
            let im = &(&at(tau + c64(0.0, h))? - &at(tau - c64(0.0, h))?)
                .scale(c64(1.0, 0.0) / c64(0.0, 2.0 * h));
            Ok((re + im).scale(c64(0.5, 0.0)))
        };
        let fine = centered(h / 2.0)?;
        let coarse = centered(h)?;
        let dtau = (&fine.scale(c64(4.0, 0.0)) - &coarse).scale(c64(1.0 / 3.0, 0.0));
        // The spectral slot enters as z/N, so the mixed derivative carries a
        // factor N relative to the unnormalized kernel's heat equation.
        let mixed = self.eval_dz_dx(z, u)?.scale(c64(self.n_order as f64, 0.0));
        let scale = self.eval(z, u)?.frobenius_norm().max(1.0);
        Ok((&dtau.scale(two_pi_i()) - &mixed).frobenius_norm() / scale)
    }
}

/// Swap the two tensor factors of an `N² x N²` operator.
pub fn swap_sites(k: &CMat, n: usize) -> CMat {
    CMat::from_fn(n * n, n * n, |rc, cc| {
        let (a, b) = (rc / n, rc % n);
        let (c, d) = (cc / n, cc % n);
        k[(b * n + a, d * n + c)]
    })
}

/// Embed a two-site operator into three sites at the given (zero-based)
/// pair of site positions.
pub fn embed_pair(k: &CMat, n: usize, sites: (usize, usize)) -> CMat {
    let dim = n * n * n;
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut out = CMat::zeros(dim, dim);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for ap in 0..n {
                    for bp in 0..n {
                        for cp in 0..n {
                            let row = [a, b, c];
                            let col = [ap, bp, cp];
                            let (s1, s2) = sites;
                            // Identity on the remaining site.
                            let rest: Vec<usize> =
                                (0..3).filter(|s| *s != s1 && *s != s2).collect();
                            let r0 = rest[0];
                            if row[r0] != col[r0] {
                                continue;
                            }
                            let kr = row[s1] * n + row[s2];
                            let kc = col[s1] * n + col[s2];
                            let v = k[(kr, kc)];
                            if v != c64(0.0, 0.0) {
                                out[(idx(a, b, c), idx(ap, bp, cp))] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn rel(d: &CMat, scale: f64) -> f64 {
    d.frobenius_norm() / scale.max(1.0)
}

/// Associative Yang-Baxter residual
/// `R^z_12(x) R^w_23(y) - R^w_13(x+y) R^{z-w}_12(x) - R^{w-z}_23(y) R^z_13(x+y)`.
pub fn aybe_residual<K: SpectralKernel + ?Sized>(
    bb: &K,
    z: C64,
    w: C64,
    x: C64,
    y: C64,
) -> EResult<f64> {
    let n = bb.n_order();
    let lhs =
        embed_pair(&bb.eval(z, x)?, n, (0, 1)).matmul(&embed_pair(&bb.eval(w, y)?, n, (1, 2)));
    let t1 = embed_pair(&bb.eval(w, x + y)?, n, (0, 2)).matmul(&embed_pair(
        &bb.eval(z - w, x)?,
        n,
        (0, 1),
    ));
    let t2 = embed_pair(&bb.eval(w - z, y)?, n, (1, 2)).matmul(&embed_pair(
        &bb.eval(z, x + y)?,
        n,
        (0, 2),
    ));
    let scale = lhs
        .frobenius_norm()
        .max(t1.frobenius_norm())
        .max(t2.frobenius_norm());
    Ok(rel(&(&(&lhs - &t1) - &t2), scale))
}

/// Quantum Yang-Baxter residual
/// `R^z_12(x) R^z_13(x+y) R^z_23(y) - R^z_23(y) R^z_13(x+y) R^z_12(x)`.
pub fn qybe_residual<K: SpectralKernel + ?Sized>(bb: &K, z: C64, x: C64, y: C64) -> EResult<f64> {
    let n = bb.n_order();
    let r12 = embed_pair(&bb.eval(z, x)?, n, (0, 1));
    let r13 = embed_pair(&bb.eval(z, x + y)?, n, (0, 2));
    let r23 = embed_pair(&bb.eval(z, y)?, n, (1, 2));
    let lhs = r12.matmul(&r13).matmul(&r23);
    let rhs = r23.matmul(&r13).matmul(&r12);
    let scale = lhs.frobenius_norm();
    Ok(rel(&(&lhs - &rhs), scale))
}

/// Unitarity: `R^z_12(x) R^z_21(-x)` is scalar; returns the off-scalar
/// residual together with the scalar value, to be compared against the
/// candidate normalizations `wp(z) - wp(x)` and `wp(z/N) - wp(x)`.
pub fn unitarity_probe<K: SpectralKernel + ?Sized>(bb: &K, z: C64, x: C64) -> EResult<(f64, C64)> {
    let n = bb.n_order();
    let r = bb.eval(z, x)?;
    let r21 = swap_sites(&bb.eval(z, -x)?, n);
    let u = r.matmul(&r21);
    let s = u.trace() / (n * n) as f64;
    let dev = &u - &CMat::identity(n * n).scale(s);
    Ok((dev.frobenius_norm() / u.frobenius_norm().max(1.0), s))
}

/// Fourier symmetry residual `R^z_12(x) P_12 - R^x_12(z)`.
pub fn fourier_residual<K: SpectralKernel + ?Sized>(bb: &K, z: C64, x: C64) -> EResult<f64> {
    let lhs = bb.eval(z, x)?.matmul(&bb.permutation());
    let rhs = bb.eval(x, z)?;
    Ok(rel(&(&lhs - &rhs), lhs.frobenius_norm()))
}

/// Skew-symmetry residual `R^z_12(x) + R^{-z}_21(-x)`.
pub fn skew_residual<K: SpectralKernel + ?Sized>(bb: &K, z: C64, x: C64) -> EResult<f64> {
    let n = bb.n_order();
    let lhs = bb.eval(z, x)?;
    let rhs = swap_sites(&bb.eval(-z, -x)?, n);
    Ok(rel(&(&lhs + &rhs), lhs.frobenius_norm()))
}

/// The nine degenerations of the quadratic identity involving the classical
/// parts and the derivative kernels, as named residuals at one admissible
/// sample `(z, z_a, z_b, x, y)`.
pub fn identity_ladder<K: SpectralKernel + ?Sized>(
    bb: &K,
    z: C64,
    za: C64,
    zb: C64,
    x: C64,
    y: C64,
) -> EResult<Vec<(String, f64)>> {
    let n = bb.n_order();
    let p12 = embed_pair(&bb.permutation(), n, (0, 1));
    let p23 = embed_pair(&bb.permutation(), n, (1, 2));
    let p13 = embed_pair(&bb.permutation(), n, (0, 2));
    let mut out = Vec::new();

    // Classical Yang-Baxter.
    {
        let r12 = embed_pair(&bb.r(x)?, n, (0, 1));
        let r13 = embed_pair(&bb.r(x + y)?, n, (0, 2));
        let r23 = embed_pair(&bb.r(y)?, n, (1, 2));
        let lhs = &(&r12.commutator(&r13) + &r12.commutator(&r23)) + &r13.commutator(&r23);
        out.push((
            "classical-yang-baxter".into(),
            rel(&lhs, r12.frobenius_norm().powi(2)),
        ));
    }
    // Half of the classical identity.
    {
        let r12 = embed_pair(&bb.r(x)?, n, (0, 1));
        let r13 = embed_pair(&bb.r(x + y)?, n, (0, 2));
        let r23 = embed_pair(&bb.r(y)?, n, (1, 2));
        let m12 = embed_pair(&bb.m(x)?, n, (0, 1));
        let m23 = embed_pair(&bb.m(y)?, n, (1, 2));
        let m13 = embed_pair(&bb.m(x + y)?, n, (0, 2));
        let lhs = &(&r12.matmul(&r13) - &r23.matmul(&r12)) + &r13.matmul(&r23);
        let rhs = &(&m12 + &m23) + &m13;
        out.push((
            "half-classical".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    // Coinciding-argument limit of the half identity.
    {
        let r12 = embed_pair(&bb.r(x)?, n, (0, 1));
        let r13 = embed_pair(&bb.r(x)?, n, (0, 2));
        let r0_23 = embed_pair(&bb.r0()?, n, (1, 2));
        let dr13 = embed_pair(&bb.r_dx(x)?, n, (0, 2));
        let m12 = embed_pair(&bb.m(x)?, n, (0, 1));
        let m23_0 = embed_pair(&bb.m_at_zero()?, n, (1, 2));
        let m13 = embed_pair(&bb.m(x)?, n, (0, 2));
        let lhs = &(&(&r12.matmul(&r13) - &r0_23.matmul(&r12)) + &r13.matmul(&r0_23))
            + &dr13.matmul(&p23);
        let rhs = &(&m12 + &m23_0) + &m13;
        out.push((
            "half-classical-coinciding".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    // Commutator identity with m.
    {
        let r12 = embed_pair(&bb.r(x)?, n, (0, 1));
        let m13 = embed_pair(&bb.m(x)?, n, (0, 2));
        let r0_23 = embed_pair(&bb.r0()?, n, (1, 2));
        let m12 = embed_pair(&bb.m(x)?, n, (0, 1));
        let m23_0 = embed_pair(&bb.m_at_zero()?, n, (1, 2));
        let dm12 = embed_pair(&bb.m_dx(x)?, n, (0, 1));
        let lhs = r12.commutator(&m13);
        let rhs = &(&(&r0_23.commutator(&m12) + &r0_23.commutator(&m13)) + &m23_0.commutator(&r12))
            + &dm12.commutator(&p23);
        out.push((
            "commutator-with-m".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()).max(1.0),
            ),
        ));
    }
    // Exchange relations with the constant coefficient R^{z,(0)}.
    let (r0_za, _) = bb.x_series(z - za)?;
    let (r0_zb, _) = bb.x_series(z - zb)?;
    let (r0_ab, r1_ab) = bb.x_series(za - zb)?;
    let (r0_ba, r1_ba) = bb.x_series(zb - za)?;
    {
        let lhs =
            embed_pair(&bb.eval(z - za, x)?, n, (0, 1)).matmul(&embed_pair(&r0_zb, n, (1, 2)));
        let t1 = embed_pair(&bb.eval(z - zb, x)?, n, (0, 2)).matmul(&embed_pair(
            &bb.eval(zb - za, x)?,
            n,
            (0, 1),
        ));
        let t2 = embed_pair(&r0_ab, n, (1, 2)).matmul(&embed_pair(&bb.eval(z - za, x)?, n, (0, 2)));
        let t3 = p23.matmul(&embed_pair(&bb.eval_dx(z - za, x)?, n, (0, 2)));
        let rhs = &(&t1 + &t2) + &t3;
        out.push((
            "exchange-constant-right".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    {
        let lhs =
            embed_pair(&r0_za, n, (0, 1)).matmul(&embed_pair(&bb.eval(z - zb, x)?, n, (1, 2)));
        let t1 = embed_pair(&bb.eval(z - zb, x)?, n, (0, 2)).matmul(&embed_pair(&r0_ba, n, (0, 1)));
        let t2 = embed_pair(&bb.eval(za - zb, x)?, n, (1, 2)).matmul(&embed_pair(
            &bb.eval(z - za, x)?,
            n,
            (0, 2),
        ));
        let t3 = embed_pair(&bb.eval_dx(z - zb, x)?, n, (0, 2)).matmul(&p12);
        let rhs = &(&t1 + &t2) + &t3;
        out.push((
            "exchange-constant-left".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    {
        let lhs = embed_pair(&bb.eval(z - za, x)?, n, (0, 1)).matmul(&embed_pair(
            &bb.eval(z - zb, -x)?,
            n,
            (1, 2),
        ));
        let t1 =
            embed_pair(&r0_zb, n, (0, 2)).matmul(&embed_pair(&bb.eval(zb - za, x)?, n, (0, 1)));
        let t2 =
            embed_pair(&bb.eval(za - zb, -x)?, n, (1, 2)).matmul(&embed_pair(&r0_za, n, (0, 2)));
        let t3 = embed_pair(&bb.eval_dx(zb - za, x)?, n, (2, 1)).matmul(&p13);
        let rhs = &(&t1 + &t2) + &t3;
        out.push((
            "exchange-opposite".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    // Derivative of the opposite-argument exchange.
    {
        let lhs = &embed_pair(&bb.eval_dx(z - za, x)?, n, (0, 1)).matmul(&embed_pair(
            &bb.eval(z - zb, -x)?,
            n,
            (1, 2),
        )) - &embed_pair(&bb.eval(z - za, x)?, n, (0, 1)).matmul(&embed_pair(
            &bb.eval_dx(z - zb, -x)?,
            n,
            (1, 2),
        ));
        let t1 =
            embed_pair(&r0_zb, n, (0, 2)).matmul(&embed_pair(&bb.eval_dx(zb - za, x)?, n, (0, 1)));
        let t2 =
            embed_pair(&bb.eval_dx(za - zb, -x)?, n, (1, 2)).matmul(&embed_pair(&r0_za, n, (0, 2)));
        let t3 = embed_pair(&bb.eval_dx2(zb - za, x)?, n, (2, 1)).matmul(&p13);
        let rhs = &(&t1 - &t2) + &t3;
        out.push((
            "exchange-opposite-derivative".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    // Linear-coefficient limits.
    {
        let (r0_b, r1_b) = bb.x_series(z - zb)?;
        let lhs =
            &embed_pair(&bb.eval(z - za, x)?, n, (0, 1)).matmul(&embed_pair(&r1_b, n, (1, 2)))
                - &embed_pair(&bb.eval_dx(z - za, x)?, n, (0, 1)).matmul(&embed_pair(
                    &r0_b,
                    n,
                    (1, 2),
                ));
        let t1 = embed_pair(&r1_ab, n, (1, 2)).matmul(&embed_pair(&bb.eval(z - za, x)?, n, (0, 2)));
        let t2 = embed_pair(&bb.eval(z - zb, x)?, n, (0, 2)).matmul(&embed_pair(
            &bb.eval_dx(zb - za, x)?,
            n,
            (0, 1),
        ));
        let t3 = p23.matmul(&embed_pair(&bb.eval_dx2(z - za, x)?, n, (0, 2)));
        let rhs = &(&t1 - &t2) - &t3.scale(c64(0.5, 0.0));
        out.push((
            "series-limit-right".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    {
        let (r0_a, r1_a) = bb.x_series(z - za)?;
        let lhs =
            &embed_pair(&r0_a, n, (0, 1)).matmul(&embed_pair(&bb.eval_dx(z - zb, x)?, n, (1, 2)))
                - &embed_pair(&r1_a, n, (0, 1)).matmul(&embed_pair(
                    &bb.eval(z - zb, x)?,
                    n,
                    (1, 2),
                ));
        let t1 = embed_pair(&bb.eval_dx(za - zb, x)?, n, (1, 2)).matmul(&embed_pair(
            &bb.eval(z - za, x)?,
            n,
            (0, 2),
        ));
        let t2 = embed_pair(&bb.eval(z - zb, x)?, n, (0, 2)).matmul(&embed_pair(&r1_ba, n, (0, 1)));
        let t3 = embed_pair(&bb.eval_dx2(z - zb, x)?, n, (0, 2)).matmul(&p12);
        let rhs = &(&t1 - &t2) + &t3.scale(c64(0.5, 0.0));
        out.push((
            "series-limit-left".into(),
            rel(
                &(&lhs - &rhs),
                lhs.frobenius_norm().max(rhs.frobenius_norm()),
            ),
        ));
    }
    Ok(out)
}

// -- Lax dynamics in kernel form -------------------------------------------------

/// `tr_2((1 ⊗ S) K)` for an `N² x N²` operator `K`.
pub fn trace2_with(s: &CMat, k: &CMat) -> CMat {
    let n = s.rows();
    CMat::from_fn(n, n, |a, c| {
        let mut acc = c64(0.0, 0.0);
        for b in 0..n {
            for bp in 0..n {
                acc += s[(b, bp)] * k[(a * n + bp, c * n + b)];
            }
        }
        acc
    })
}

/// `tr_12((A ⊗ B) K)`.
pub fn trace12_with(a: &CMat, b: &CMat, k: &CMat) -> C64 {
    let n = a.rows();
    let mut acc = c64(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            for r in 0..n {
                for s in 0..n {
                    acc += a[(i, r)] * b[(j, s)] * k[(r * n + s, i * n + j)];
                }
            }
        }
    }
    acc
}

/// Lax operator in kernel form: diagonal blocks from the classical r-matrix
/// contraction, off-diagonal blocks from `R^{z-z_a}(q_ij) P`.
pub fn rlax_build(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
) -> EResult<SpectralOperator> {
    rlax_operator(spec, state, bb, RKind::Lax)
}

pub fn rlax_m0(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
) -> EResult<SpectralOperator> {
    rlax_operator(spec, state, bb, RKind::M0)
}

pub fn rlax_m1a(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
    a: usize,
) -> EResult<SpectralOperator> {
    assert!(a < spec.n_poles);
    rlax_operator(spec, state, bb, RKind::M1a(a))
}

#[derive(Clone, Copy)]
enum RKind {
    Lax,
    M0,
    M1a(usize),
}

fn rlax_operator(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
    kind: RKind,
) -> EResult<SpectralOperator> {
    let n = spec.n_inner;
    let m = spec.m_blocks;
    let bb = bb.clone();
    let spec = spec.clone();
    let state = state.clone();
    let p_op = bb.permutation();
    Ok(SpectralOperator::new(
        n * m,
        spec.marked_points.clone(),
        move |z| {
            let mut out = CMat::zeros(n * m, n * m);
            let inv_n = 1.0 / n as f64;
            for i in 0..m {
                for j in 0..m {
                    let mut blk = CMat::zeros(n, n);
                    match kind {
                        RKind::Lax => {
                            if i == j {
                                for a in 0..spec.n_poles {
                                    let k = bb.r(z - spec.marked_points[a])?;
                                    blk = &blk + &trace2_with(state.spin(a, i, i), &k);
                                }
                                for d in 0..n {
                                    blk[(d, d)] += state.p[i];
                                }
                            } else {
                                let q_ij = state.q[i] - state.q[j];
                                for a in 0..spec.n_poles {
                                    let k = bb.eval(z - spec.marked_points[a], q_ij)?.matmul(&p_op);
                                    blk = &blk + &trace2_with(state.spin(a, i, j), &k);
                                }
                            }
                        }
                        RKind::M0 => {
                            if i == j {
                                for a in 0..spec.n_poles {
                                    let k = bb.m(z - spec.marked_points[a])?;
                                    blk = &blk + &trace2_with(state.spin(a, i, i), &k);
                                }
                            } else {
                                let q_ij = state.q[i] - state.q[j];
                                for a in 0..spec.n_poles {
                                    let k =
                                        bb.eval_dx(z - spec.marked_points[a], q_ij)?.matmul(&p_op);
                                    blk = &blk + &trace2_with(state.spin(a, i, j), &k);
                                }
                            }
                        }
                        RKind::M1a(a) => {
                            if i == j {
                                let k = bb.r(z - spec.marked_points[a])?;
                                blk = trace2_with(state.spin(a, i, i), &k).scale(c64(-inv_n, 0.0));
                            } else {
                                let q_ij = state.q[i] - state.q[j];
                                let k = bb.eval(z - spec.marked_points[a], q_ij)?.matmul(&p_op);
                                blk = trace2_with(state.spin(a, i, j), &k).scale(c64(-inv_n, 0.0));
                            }
                        }
                    }
                    for r in 0..n {
                        for c in 0..n {
                            out[(i * n + r, j * n + c)] = blk[(r, c)];
                        }
                    }
                }
            }
            Ok(out)
        },
    ))
}

/// Hamiltonians in kernel form. The `m`-contraction runs over all pole pairs
/// including `a = b` (with `m(0)`), which is what matches both the
/// generating function and the elliptic closed forms.
pub fn rlax_hamiltonians(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
) -> EResult<crate::lax::Hamiltonians> {
    let n = spec.n_inner as f64;
    let m = spec.m_blocks;
    let np = spec.n_poles;
    let zs = &spec.marked_points;
    let p_op = bb.permutation();
    let mut h0: C64 = state.p.iter().map(|p| p * p / 2.0).sum();
    for i in 0..m {
        for a in 0..np {
            for b in 0..np {
                let k = if a == b {
                    bb.m_at_zero()?
                } else {
                    bb.m(zs[a] - zs[b])?
                };
                h0 += 0.5 * trace12_with(state.spin(a, i, i), state.spin(b, i, i), &k);
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let q_ij = state.q[i] - state.q[j];
            for a in 0..np {
                for b in 0..np {
                    let k =
                        swap_sites(&bb.kernel_f(zs[b] - zs[a], q_ij)?, spec.n_inner).matmul(&p_op);
                    h0 += 0.5 * trace12_with(state.spin(a, i, j), state.spin(b, j, i), &k);
                }
            }
        }
    }
    let mut h1 = Vec::with_capacity(np);
    for a in 0..np {
        let mut h = c64(0.0, 0.0);
        for i in 0..m {
            h += state.p[i] * state.spin(a, i, i).trace() / n;
            for b in 0..np {
                if b == a {
                    continue;
                }
                let k = bb.r(zs[a] - zs[b])?;
                h += trace12_with(state.spin(a, i, i), state.spin(b, i, i), &k) / n;
            }
        }
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let q_ji = state.q[j] - state.q[i];
                for b in 0..np {
                    if b == a {
                        continue;
                    }
                    let k = bb.eval(zs[a] - zs[b], q_ji)?.matmul(&p_op);
                    h += trace12_with(state.spin(a, i, j), state.spin(b, j, i), &k) / n;
                }
            }
        }
        h1.push(h);
    }
    let mut h2 = Vec::with_capacity(np);
    for a in 0..np {
        let mut h = c64(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                h += 0.5 / n * trace12_with(state.spin(a, i, j), state.spin(a, j, i), &p_op);
            }
        }
        h2.push(h);
    }
    Ok(crate::lax::Hamiltonians { h0, h1, h2 })
}

/// Kernel-form equations of motion of the `H_0` flow.
pub fn rlax_eom_h0(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
) -> EResult<PhaseTangent> {
    let m = spec.m_blocks;
    let np = spec.n_poles;
    let zs = &spec.marked_points;
    let p_op = bb.permutation();
    let mut tangent = PhaseTangent::zero(spec);
    tangent.qdot = state.p.clone();
    for i in 0..m {
        let mut acc = c64(0.0, 0.0);
        for k in 0..m {
            if k == i {
                continue;
            }
            let q_ik = state.q[i] - state.q[k];
            for a in 0..np {
                for b in 0..np {
                    // ∂_{q_i} F^{z_ba}_21(q_ik) = ∂_x of the swapped kernel.
                    let kern =
                        swap_sites(&bb.kernel_df(zs[b] - zs[a], q_ik)?, spec.n_inner).matmul(&p_op);
                    acc -= trace12_with(state.spin(a, i, k), state.spin(b, k, i), &kern);
                }
            }
        }
        tangent.pdot[i] = acc;
    }
    for a in 0..np {
        for i in 0..m {
            for j in 0..m {
                let mut blk = CMat::zeros(spec.n_inner, spec.n_inner);
                for b in 0..np {
                    let mk = if b == a {
                        bb.m_at_zero()?
                    } else {
                        bb.m(zs[a] - zs[b])?
                    };
                    let gen_j = trace2_with(state.spin(b, j, j), &mk);
                    let gen_i = trace2_with(state.spin(b, i, i), &mk);
                    blk = &blk + &state.spin(a, i, j).matmul(&gen_j);
                    blk = &blk - &gen_i.matmul(state.spin(a, i, j));
                    for k in 0..m {
                        if k != j {
                            let kern = bb
                                .kernel_f(zs[a] - zs[b], state.q[k] - state.q[j])?
                                .matmul(&p_op);
                            let w = trace2_with(state.spin(b, k, j), &kern);
                            blk = &blk + &state.spin(a, i, k).matmul(&w);
                        }
                        if k != i {
                            let kern = bb
                                .kernel_f(zs[a] - zs[b], state.q[i] - state.q[k])?
                                .matmul(&p_op);
                            let w = trace2_with(state.spin(b, i, k), &kern);
                            blk = &blk - &w.matmul(state.spin(a, k, j));
                        }
                    }
                }
                tangent.sdot[a][i][j] = blk;
            }
        }
    }
    Ok(tangent)
}

/// Kernel-form equations of motion of the `H_{1,a}` flow.
pub fn rlax_eom_h1a(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
    a: usize,
) -> EResult<PhaseTangent> {
    let n = spec.n_inner as f64;
    let m = spec.m_blocks;
    let np = spec.n_poles;
    let zs = &spec.marked_points;
    let p_op = bb.permutation();
    let mut tangent = PhaseTangent::zero(spec);
    for i in 0..m {
        tangent.qdot[i] = state.spin(a, i, i).trace() / n;
        let mut acc = c64(0.0, 0.0);
        for k in 0..m {
            if k == i {
                continue;
            }
            let q_ik = state.q[i] - state.q[k];
            for b in 0..np {
                if b == a {
                    continue;
                }
                // First-derivative kernels here: expanding the contraction
                // reproduces the coefficient-form momentum equation, which
                // carries f_α rather than f'_α for this flow.
                let fba =
                    swap_sites(&bb.kernel_f(zs[b] - zs[a], q_ik)?, spec.n_inner).matmul(&p_op);
                let fab =
                    swap_sites(&bb.kernel_f(zs[a] - zs[b], q_ik)?, spec.n_inner).matmul(&p_op);
                acc += trace12_with(state.spin(a, i, k), state.spin(b, k, i), &fba) / n;
                acc -= trace12_with(state.spin(b, i, k), state.spin(a, k, i), &fab) / n;
            }
        }
        tangent.pdot[i] = acc;
    }
    for b in 0..np {
        for i in 0..m {
            for j in 0..m {
                let mut blk = CMat::zeros(spec.n_inner, spec.n_inner);
                if b != a {
                    let rk = bb.r(zs[b] - zs[a])?;
                    let gen_j = trace2_with(state.spin(a, j, j), &rk);
                    let gen_i = trace2_with(state.spin(a, i, i), &rk);
                    blk = &blk - &state.spin(b, i, j).matmul(&gen_j).scale(c64(1.0 / n, 0.0));
                    blk = &blk + &gen_i.matmul(state.spin(b, i, j)).scale(c64(1.0 / n, 0.0));
                    for k in 0..m {
                        if k != i {
                            let kern = bb
                                .eval(zs[b] - zs[a], state.q[i] - state.q[k])?
                                .matmul(&p_op);
                            let w = trace2_with(state.spin(a, i, k), &kern);
                            blk = &blk + &w.matmul(state.spin(b, k, j)).scale(c64(1.0 / n, 0.0));
                        }
                        if k != j {
                            let kern = bb
                                .eval(zs[b] - zs[a], state.q[k] - state.q[j])?
                                .matmul(&p_op);
                            let w = trace2_with(state.spin(a, k, j), &kern);
                            blk = &blk - &state.spin(b, i, k).matmul(&w).scale(c64(1.0 / n, 0.0));
                        }
                    }
                } else {
                    blk.add_assign_scaled(state.spin(a, i, j), -(state.p[i] - state.p[j]) / n);
                    for c in 0..np {
                        if c == a {
                            continue;
                        }
                        let rk = bb.r(zs[a] - zs[c])?;
                        let gen_j = trace2_with(state.spin(c, j, j), &rk);
                        let gen_i = trace2_with(state.spin(c, i, i), &rk);
                        blk = &blk + &state.spin(a, i, j).matmul(&gen_j).scale(c64(1.0 / n, 0.0));
                        blk = &blk - &gen_i.matmul(state.spin(a, i, j)).scale(c64(1.0 / n, 0.0));
                        for k in 0..m {
                            if k != j {
                                let kern = bb
                                    .eval(zs[a] - zs[c], state.q[k] - state.q[j])?
                                    .matmul(&p_op);
                                let w = trace2_with(state.spin(c, k, j), &kern);
                                blk =
                                    &blk + &state.spin(a, i, k).matmul(&w).scale(c64(1.0 / n, 0.0));
                            }
                            if k != i {
                                let kern = bb
                                    .eval(zs[a] - zs[c], state.q[i] - state.q[k])?
                                    .matmul(&p_op);
                                let w = trace2_with(state.spin(c, i, k), &kern);
                                blk =
                                    &blk - &w.matmul(state.spin(a, k, j)).scale(c64(1.0 / n, 0.0));
                            }
                        }
                    }
                }
                tangent.sdot[b][i][j] = blk;
            }
        }
    }
    Ok(tangent)
}

/// Chain-rule time derivative of the kernel-form Lax operator.
pub fn rlax_dt(
    spec: &ModelSpec,
    state: &PhaseState,
    tangent: &PhaseTangent,
    bb: &BaxterBelavin,
) -> EResult<SpectralOperator> {
    let n = spec.n_inner;
    let m = spec.m_blocks;
    let bb = bb.clone();
    let spec = spec.clone();
    let state = state.clone();
    let tangent = tangent.clone();
    let p_op = bb.permutation();
    Ok(SpectralOperator::new(
        n * m,
        spec.marked_points.clone(),
        move |z| {
            let mut out = CMat::zeros(n * m, n * m);
            for i in 0..m {
                for j in 0..m {
                    let mut blk = CMat::zeros(n, n);
                    if i == j {
                        for a in 0..spec.n_poles {
                            let k = bb.r(z - spec.marked_points[a])?;
                            blk = &blk + &trace2_with(&tangent.sdot[a][i][i], &k);
                        }
                        for d in 0..n {
                            blk[(d, d)] += tangent.pdot[i];
                        }
                    } else {
                        let q_ij = state.q[i] - state.q[j];
                        let qdot_ij = tangent.qdot[i] - tangent.qdot[j];
                        for a in 0..spec.n_poles {
                            let k = bb.eval(z - spec.marked_points[a], q_ij)?.matmul(&p_op);
                            blk = &blk + &trace2_with(&tangent.sdot[a][i][j], &k);
                            let f = bb.eval_dx(z - spec.marked_points[a], q_ij)?.matmul(&p_op);
                            blk = &blk + &trace2_with(state.spin(a, i, j), &f).scale(qdot_ij);
                        }
                    }
                    for r in 0..n {
                        for c in 0..n {
                            out[(i * n + r, j * n + c)] = blk[(r, c)];
                        }
                    }
                }
            }
            Ok(out)
        },
    ))
}

/// Correction term of the kernel-form Lax equation for either flow; built
/// from the partial-trace contraction over the third site. The overall sign
/// of both corrections is fixed against the assembled flow (the `H_0` one
/// flips relative to the coefficient form, and the `H_{1,a}` one carries an
/// extra factor `N`).
pub fn rlax_unwanted(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
    flow: Option<usize>,
) -> EResult<SpectralOperator> {
    let n = spec.n_inner;
    let m = spec.m_blocks;
    let bb = bb.clone();
    let spec = spec.clone();
    let state = state.clone();
    let p_op = bb.permutation();
    Ok(SpectralOperator::new(
        n * m,
        spec.marked_points.clone(),
        move |z| {
            let nf = n as f64;
            let mut out = CMat::zeros(n * m, n * m);
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    let q_ij = state.q[i] - state.q[j];
                    // tr_3 of the diagonal-block difference.
                    let defect: C64 = (0..spec.n_poles)
                        .map(|a| state.spin(a, i, i).trace() - state.spin(a, j, j).trace())
                        .sum();
                    let mut blk = CMat::zeros(n, n);
                    match flow {
                        None => {
                            for b in 0..spec.n_poles {
                                let k = bb.eval_dx2(z - spec.marked_points[b], q_ij)?.matmul(&p_op);
                                blk = &blk
                                    + &trace2_with(state.spin(b, i, j), &k).scale(-defect / 2.0);
                            }
                        }
                        Some(a) => {
                            let k = bb.eval_dx(z - spec.marked_points[a], q_ij)?.matmul(&p_op);
                            blk = trace2_with(state.spin(a, i, j), &k).scale(-defect / nf);
                            // Matches the coefficient form with the (ii - jj)
                            // ordering; the tr_3 defect above is N times the
                            // scalar one and carries the (jj - ii) orientation.
                            blk = blk.scale(c64(-1.0, 0.0));
                        }
                    }
                    for r in 0..n {
                        for c in 0..n {
                            out[(i * n + r, j * n + c)] += blk[(r, c)];
                        }
                    }
                }
            }
            Ok(out)
        },
    ))
}

/// Max relative residual of the kernel-form Lax equation for either flow.
pub fn rlax_residual(
    spec: &ModelSpec,
    state: &PhaseState,
    bb: &BaxterBelavin,
    flow: Option<usize>,
    z_samples: &[C64],
    with_correction: bool,
) -> EResult<f64> {
    let tangent = match flow {
        None => rlax_eom_h0(spec, state, bb)?,
        Some(a) => rlax_eom_h1a(spec, state, bb, a)?,
    };
    let dl = rlax_dt(spec, state, &tangent, bb)?;
    let lax = rlax_build(spec, state, bb)?;
    let mm = match flow {
        None => rlax_m0(spec, state, bb)?,
        Some(a) => rlax_m1a(spec, state, bb, a)?,
    };
    let uw = rlax_unwanted(spec, state, bb, flow)?;
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let dlv = dl.eval(z)?;
        let comm = lax.eval(z)?.commutator(&mm.eval(z)?);
        let mut res = &dlv - &comm;
        if with_correction {
            res = &res - &uw.eval(z)?;
        }
        worst = worst.max(res.frobenius_norm() / dlv.frobenius_norm().max(1.0));
    }
    Ok(worst)
}
