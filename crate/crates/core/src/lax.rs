//! The general `gl(NM)` model with `n` marked points: Lax matrix, both
//! accompanying M-matrices, Hamiltonians (closed form and via the trace
//! generating function), equations of motion for the `H_0` and `H_{1,a}`
//! flows, and the Lax-equation residuals with their moment-map correction
//! terms.

use crate::elliptic::{EllipticContext, EllipticError};
use crate::linalg::CMat;
use crate::rng::Rng;
use crate::state::{casimirs, ModelSpec, PhaseState, SpinCoeffs};
use crate::torus::{kappa, TorusBasis};
use crate::{c64, two_pi_i, C64};
use thiserror::Error;

type EResult<T> = Result<T, EllipticError>;

/// A matrix-valued function of the spectral parameter, evaluable anywhere
/// off its pole set.
pub struct SpectralOperator {
    dim: usize,
    poles: Vec<C64>,
    eval: Box<dyn Fn(C64) -> EResult<CMat> + Send + Sync>,
}

impl SpectralOperator {
    pub fn new(
        dim: usize,
        poles: Vec<C64>,
        eval: impl Fn(C64) -> EResult<CMat> + Send + Sync + 'static,
    ) -> Self {
        SpectralOperator {
            dim,
            poles,
            eval: Box::new(eval),
        }
    }

    pub fn eval(&self, z: C64) -> EResult<CMat> {
        (self.eval)(z)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn poles(&self) -> &[C64] {
        &self.poles
    }

    /// Residue at `pole` by averaging `(z - pole) A(z)` over the 8th roots of
    /// unity at radii `r` and `r/2` (the average cancels the regular part to
    /// seventh order). Returns the finer estimate and the spread between the
    /// two radii.
    pub fn residue_probe(&self, pole: C64, r: f64) -> EResult<(CMat, f64)> {
        let probe = |radius: f64| -> EResult<CMat> {
            let mut acc = CMat::zeros(self.dim, self.dim);
            for k in 0..8 {
                let th = std::f64::consts::PI * k as f64 / 4.0;
                let w = c64(radius * th.cos(), radius * th.sin());
                let val = self.eval(pole + w)?;
                acc.add_assign_scaled(&val, w / 8.0);
            }
            Ok(acc)
        };
        let a = probe(r)?;
        let b = probe(r / 2.0)?;
        let spread = (&a - &b).max_abs();
        Ok((b, spread))
    }
}

/// Tangent vector on the phase space: velocities of positions, momenta and
/// spin blocks.
#[derive(Clone, Debug)]
pub struct PhaseTangent {
    pub qdot: Vec<C64>,
    pub pdot: Vec<C64>,
    pub sdot: Vec<Vec<Vec<CMat>>>,
}

impl PhaseTangent {
    pub fn zero(spec: &ModelSpec) -> Self {
        let n = spec.n_inner;
        PhaseTangent {
            qdot: vec![c64(0.0, 0.0); spec.m_blocks],
            pdot: vec![c64(0.0, 0.0); spec.m_blocks],
            sdot: (0..spec.n_poles)
                .map(|_| {
                    (0..spec.m_blocks)
                        .map(|_| (0..spec.m_blocks).map(|_| CMat::zeros(n, n)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in out.qdot.iter_mut().chain(out.pdot.iter_mut()) {
            *v *= s;
        }
        for grid in out.sdot.iter_mut() {
            for row in grid.iter_mut() {
                for blk in row.iter_mut() {
                    *blk = blk.scale(c64(s, 0.0));
                }
            }
        }
        out
    }

    pub fn add(&self, other: &PhaseTangent) -> Self {
        let mut out = self.clone();
        for (a, b) in out.qdot.iter_mut().zip(&other.qdot) {
            *a += b;
        }
        for (a, b) in out.pdot.iter_mut().zip(&other.pdot) {
            *a += b;
        }
        for (ga, gb) in out.sdot.iter_mut().zip(&other.sdot) {
            for (ra, rb) in ga.iter_mut().zip(gb) {
                for (ba, bb) in ra.iter_mut().zip(rb) {
                    ba.add_assign_scaled(bb, c64(1.0, 0.0));
                }
            }
        }
        out
    }

    /// Relative deviation between two tangents, normalized by the larger
    /// magnitude.
    pub fn rel_diff(&self, other: &PhaseTangent) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (a, b) in self.qdot.iter().zip(&other.qdot) {
            num += (a - b).norm_sqr();
            den += a.norm_sqr().max(b.norm_sqr());
        }
        for (a, b) in self.pdot.iter().zip(&other.pdot) {
            num += (a - b).norm_sqr();
            den += a.norm_sqr().max(b.norm_sqr());
        }
        for (ga, gb) in self.sdot.iter().zip(&other.sdot) {
            for (ra, rb) in ga.iter().zip(gb) {
                for (ba, bb) in ra.iter().zip(rb) {
                    let d = ba - bb;
                    num += d.frobenius_norm().powi(2);
                    den += ba.frobenius_norm().powi(2).max(bb.frobenius_norm().powi(2));
                }
            }
        }
        (num / den.max(1.0)).sqrt()
    }
}

impl PhaseState {
    /// `self + dt * tangent`.
    pub fn advanced(&self, tangent: &PhaseTangent, dt: f64) -> PhaseState {
        let mut out = self.clone();
        for (x, v) in out.q.iter_mut().zip(&tangent.qdot) {
            *x += v * dt;
        }
        for (x, v) in out.p.iter_mut().zip(&tangent.pdot) {
            *x += v * dt;
        }
        for (ga, gb) in out.spins.iter_mut().zip(&tangent.sdot) {
            for (ra, rb) in ga.iter_mut().zip(gb) {
                for (ba, bb) in ra.iter_mut().zip(rb) {
                    ba.add_assign_scaled(bb, c64(dt, 0.0));
                }
            }
        }
        out
    }
}

/// Owned evaluation environment shared by all operator builders.
struct Assembler {
    spec: ModelSpec,
    ctx: EllipticContext,
    basis: TorusBasis,
    coeffs: SpinCoeffs,
    q: Vec<C64>,
    p: Vec<C64>,
}

impl Assembler {
    fn new(spec: &ModelSpec, state: &PhaseState) -> EResult<Self> {
        let ctx = spec.context()?;
        let basis = spec.basis();
        let coeffs = SpinCoeffs::build(spec, state, &basis);
        Ok(Assembler {
            spec: spec.clone(),
            ctx,
            basis,
            coeffs,
            q: state.q.clone(),
            p: state.p.clone(),
        })
    }

    /// Offset of the second argument of the twisted functions in block (i,j):
    /// zero on the diagonal, `q_ij / N` off it.
    fn offset(&self, i: usize, j: usize) -> C64 {
        if i == j {
            c64(0.0, 0.0)
        } else {
            (self.q[i] - self.q[j]) / self.spec.n_inner as f64
        }
    }

    fn block_lax(&self, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let mut blk = CMat::zeros(n, n);
        if i == j {
            let mut scalar = self.p[i];
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                scalar += self.coeffs.scalar(a, i) * self.ctx.e1(za)?;
                for g in self.basis.indices_nonzero() {
                    let c = self.coeffs.get(a, i, i, g);
                    let v = self.ctx.phi_alpha_raw(n, g, za, c64(0.0, 0.0))?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
            for d in 0..n {
                blk[(d, d)] += scalar;
            }
        } else {
            let u = self.offset(i, j);
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                for g in self.basis.indices() {
                    let c = self.coeffs.get(a, i, j, g);
                    let v = self.ctx.phi_alpha_raw(n, g, za, u)?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
        }
        Ok(blk)
    }

    fn block_m0(&self, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let inv_n = 1.0 / n as f64;
        let mut blk = CMat::zeros(n, n);
        if i == j {
            let mut scalar = c64(0.0, 0.0);
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                scalar += self.coeffs.scalar(a, i) * self.ctx.rho(za)? * inv_n;
                for g in self.basis.indices_nonzero() {
                    let c = self.coeffs.get(a, i, i, g) * inv_n;
                    let v = self.ctx.f_alpha_raw(n, g, za, c64(0.0, 0.0))?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
            for d in 0..n {
                blk[(d, d)] += scalar;
            }
        } else {
            let u = self.offset(i, j);
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                for g in self.basis.indices() {
                    let c = self.coeffs.get(a, i, j, g) * inv_n;
                    let v = self.ctx.f_alpha_raw(n, g, za, u)?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
        }
        Ok(blk)
    }

    fn block_m1a(&self, a: usize, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let inv_n = 1.0 / n as f64;
        let mut blk = CMat::zeros(n, n);
        let za = z - self.spec.marked_points[a];
        if i == j {
            let scalar = -self.coeffs.scalar(a, i) * self.ctx.e1(za)? * inv_n;
            for g in self.basis.indices_nonzero() {
                let c = -self.coeffs.get(a, i, i, g) * inv_n;
                let v = self.ctx.phi_alpha_raw(n, g, za, c64(0.0, 0.0))?;
                blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
            }
            for d in 0..n {
                blk[(d, d)] += scalar;
            }
        } else {
            let u = self.offset(i, j);
            for g in self.basis.indices() {
                let c = -self.coeffs.get(a, i, j, g) * inv_n;
                let v = self.ctx.phi_alpha_raw(n, g, za, u)?;
                blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
            }
        }
        Ok(blk)
    }

    /// Analytic z-derivative of the Lax blocks.
    fn block_lax_dz(&self, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let mut blk = CMat::zeros(n, n);
        if i == j {
            let mut scalar = c64(0.0, 0.0);
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                scalar -= self.coeffs.scalar(a, i) * self.ctx.e2(za)?;
                for g in self.basis.indices_nonzero() {
                    let c = self.coeffs.get(a, i, i, g);
                    let v = self.ctx.phi_alpha_dz_raw(n, g, za, c64(0.0, 0.0))?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
            for d in 0..n {
                blk[(d, d)] += scalar;
            }
        } else {
            let u = self.offset(i, j);
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                for g in self.basis.indices() {
                    let c = self.coeffs.get(a, i, j, g);
                    let v = self.ctx.phi_alpha_dz_raw(n, g, za, u)?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
        }
        Ok(blk)
    }

    /// Explicit derivative of the Lax blocks in the marked point `z_a`,
    /// which is minus the z-derivative of the single-pole part.
    fn block_lax_dza(&self, a: usize, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let mut blk = CMat::zeros(n, n);
        let za = z - self.spec.marked_points[a];
        if i == j {
            let scalar = self.coeffs.scalar(a, i) * self.ctx.e2(za)?;
            for g in self.basis.indices_nonzero() {
                let c = -self.coeffs.get(a, i, i, g);
                let v = self.ctx.phi_alpha_dz_raw(n, g, za, c64(0.0, 0.0))?;
                blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
            }
            for d in 0..n {
                blk[(d, d)] += scalar;
            }
        } else {
            let u = self.offset(i, j);
            for g in self.basis.indices() {
                let c = -self.coeffs.get(a, i, j, g);
                let v = self.ctx.phi_alpha_dz_raw(n, g, za, u)?;
                blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
            }
        }
        Ok(blk)
    }

    /// Chain-rule derivative of the Lax blocks along a phase-space tangent.
    fn block_lax_dt(
        &self,
        tcoeffs: &SpinCoeffs,
        tangent: &PhaseTangent,
        i: usize,
        j: usize,
        z: C64,
    ) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let mut blk = CMat::zeros(n, n);
        if i == j {
            let mut scalar = tangent.pdot[i];
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                scalar += tcoeffs.scalar(a, i) * self.ctx.e1(za)?;
                for g in self.basis.indices_nonzero() {
                    let c = tcoeffs.get(a, i, i, g);
                    let v = self.ctx.phi_alpha_raw(n, g, za, c64(0.0, 0.0))?;
                    blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), c * v);
                }
            }
            for d in 0..n {
                blk[(d, d)] += scalar;
            }
        } else {
            let u = self.offset(i, j);
            let qdot_ij = (tangent.qdot[i] - tangent.qdot[j]) / n as f64;
            for a in 0..self.spec.n_poles {
                let za = z - self.spec.marked_points[a];
                for g in self.basis.indices() {
                    let t = self.basis.t_rep(g.0 as usize, g.1 as usize);
                    let cdot = tcoeffs.get(a, i, j, g);
                    blk.add_assign_scaled(t, cdot * self.ctx.phi_alpha_raw(n, g, za, u)?);
                    let c = self.coeffs.get(a, i, j, g);
                    blk.add_assign_scaled(t, c * qdot_ij * self.ctx.f_alpha_raw(n, g, za, u)?);
                }
            }
        }
        Ok(blk)
    }

    /// The moment-map defect `D_ij = Σ_a (S^{ii,a}_{0,0} - S^{jj,a}_{0,0})`.
    fn moment_defect(&self, i: usize, j: usize) -> C64 {
        (0..self.spec.n_poles)
            .map(|a| self.coeffs.scalar(a, i) - self.coeffs.scalar(a, j))
            .sum()
    }

    /// Correction term of the Lax equation for the `H_0` flow.
    fn block_unwanted_h0(&self, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let mut blk = CMat::zeros(n, n);
        if i == j {
            return Ok(blk);
        }
        let d = self.moment_defect(i, j);
        if d.norm() < 1e-300 {
            return Ok(blk);
        }
        let u = self.offset(i, j);
        // The defect enters as Σ_a (S^{jj,a}_{0,0} - S^{ii,a}_{0,0}); the
        // opposite ordering fails at order one against the assembled flow.
        let w = -d / (2.0 * n as f64);
        for b in 0..self.spec.n_poles {
            let zb = z - self.spec.marked_points[b];
            for g in self.basis.indices() {
                let c = self.coeffs.get(b, i, j, g);
                let v = self.ctx.f_prime_alpha_raw(n, g, zb, u)?;
                blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), w * c * v);
            }
        }
        Ok(blk)
    }

    /// Correction term of the Lax equation for the `H_{1,a}` flow.
    fn block_unwanted_h1a(&self, a: usize, i: usize, j: usize, z: C64) -> EResult<CMat> {
        let n = self.spec.n_inner;
        let mut blk = CMat::zeros(n, n);
        if i == j {
            return Ok(blk);
        }
        let d = self.moment_defect(i, j);
        if d.norm() < 1e-300 {
            return Ok(blk);
        }
        let u = self.offset(i, j);
        let w = d / n as f64;
        let za = z - self.spec.marked_points[a];
        for g in self.basis.indices() {
            let c = self.coeffs.get(a, i, j, g);
            let v = self.ctx.f_alpha_raw(n, g, za, u)?;
            blk.add_assign_scaled(self.basis.t_rep(g.0 as usize, g.1 as usize), w * c * v);
        }
        Ok(blk)
    }

    fn assemble(&self, f: impl Fn(usize, usize, C64) -> EResult<CMat>, z: C64) -> EResult<CMat> {
        let (n, m) = (self.spec.n_inner, self.spec.m_blocks);
        let mut out = CMat::zeros(n * m, n * m);
        for i in 0..m {
            for j in 0..m {
                let blk = f(i, j, z)?;
                for r in 0..n {
                    for c in 0..n {
                        out[(i * n + r, j * n + c)] = blk[(r, c)];
                    }
                }
            }
        }
        Ok(out)
    }
}

fn operator(
    spec: &ModelSpec,
    state: &PhaseState,
    block: impl Fn(&Assembler, usize, usize, C64) -> EResult<CMat> + Send + Sync + 'static,
) -> EResult<SpectralOperator> {
    let asm = Assembler::new(spec, state)?;
    let dim = spec.total_dim();
    let poles = spec.marked_points.clone();
    Ok(SpectralOperator::new(dim, poles, move |z| {
        asm.assemble(|i, j, zz| block(&asm, i, j, zz), z)
    }))
}

/// The Lax operator of the general model.
pub fn build_lax(spec: &ModelSpec, state: &PhaseState) -> EResult<SpectralOperator> {
    operator(spec, state, |a, i, j, z| a.block_lax(i, j, z))
}

/// The M-matrix generating the `H_0` flow.
pub fn build_m0(spec: &ModelSpec, state: &PhaseState) -> EResult<SpectralOperator> {
    operator(spec, state, |a, i, j, z| a.block_m0(i, j, z))
}

/// The M-matrix generating the `H_{1,a}` flow.
pub fn build_m1a(spec: &ModelSpec, state: &PhaseState, a: usize) -> EResult<SpectralOperator> {
    assert!(a < spec.n_poles);
    operator(spec, state, move |asm, i, j, z| asm.block_m1a(a, i, j, z))
}

/// Analytic z-derivative of the Lax operator.
pub fn build_lax_dz(spec: &ModelSpec, state: &PhaseState) -> EResult<SpectralOperator> {
    operator(spec, state, |a, i, j, z| a.block_lax_dz(i, j, z))
}

/// Analytic derivative of the Lax operator in the marked point `z_a`.
pub fn build_lax_dza(spec: &ModelSpec, state: &PhaseState, a: usize) -> EResult<SpectralOperator> {
    assert!(a < spec.n_poles);
    operator(spec, state, move |asm, i, j, z| {
        asm.block_lax_dza(a, i, j, z)
    })
}

/// Chain-rule time derivative of the Lax operator along a tangent.
pub fn build_lax_dt(
    spec: &ModelSpec,
    state: &PhaseState,
    tangent: &PhaseTangent,
) -> EResult<SpectralOperator> {
    let asm = Assembler::new(spec, state)?;
    let basis = spec.basis();
    let tstate = PhaseState {
        q: state.q.clone(),
        p: state.p.clone(),
        spins: tangent.sdot.clone(),
    };
    let tcoeffs = SpinCoeffs::build(spec, &tstate, &basis);
    let tangent = tangent.clone();
    let dim = spec.total_dim();
    let poles = spec.marked_points.clone();
    Ok(SpectralOperator::new(dim, poles, move |z| {
        asm.assemble(|i, j, zz| asm.block_lax_dt(&tcoeffs, &tangent, i, j, zz), z)
    }))
}

/// The correction ("unwanted") term of the `H_0` Lax equation; it is
/// proportional to the moment-map defects and vanishes on the constraint
/// surface.
pub fn build_unwanted_h0(spec: &ModelSpec, state: &PhaseState) -> EResult<SpectralOperator> {
    operator(spec, state, |a, i, j, z| a.block_unwanted_h0(i, j, z))
}

/// The correction term of the `H_{1,a}` Lax equation.
pub fn build_unwanted_h1a(
    spec: &ModelSpec,
    state: &PhaseState,
    a: usize,
) -> EResult<SpectralOperator> {
    assert!(a < spec.n_poles);
    operator(spec, state, move |asm, i, j, z| {
        asm.block_unwanted_h1a(a, i, j, z)
    })
}

/// Hamiltonians of the model: `H_0`, the residue Hamiltonians `H_{1,a}` and
/// the Casimirs `H_{2,a}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonians {
    pub h0: C64,
    pub h1: Vec<C64>,
    pub h2: Vec<C64>,
}

/// Closed-form Hamiltonians.
pub fn hamiltonians(spec: &ModelSpec, state: &PhaseState) -> EResult<Hamiltonians> {
    let ctx = spec.context()?;
    let basis = spec.basis();
    let coeffs = SpinCoeffs::build(spec, state, &basis);
    let n = spec.n_inner;
    let m = spec.m_blocks;
    let np = spec.n_poles;
    let zs = &spec.marked_points;

    let mut h0: C64 = state.p.iter().map(|p| p * p / 2.0).sum();
    for i in 0..m {
        for a in 0..np {
            for b in 0..np {
                // The scalar sum runs over all pairs; at a = b the double
                // poles of rho cancel and the diagonal weight is rho(0).
                // Only with this term does H_0 match the generating function
                // tr L²/(2N) and does the Lax equation close.
                let rho_ab = if a == b {
                    ctx.rho0()
                } else {
                    ctx.rho(zs[a] - zs[b])?
                };
                h0 += 0.5 * coeffs.scalar(a, i) * coeffs.scalar(b, i) * rho_ab;
                for g in basis.indices_nonzero() {
                    h0 += 0.5
                        * coeffs.get(a, i, i, g)
                        * coeffs.get(b, i, i, (-g.0, -g.1))
                        * ctx.f_alpha_raw(n, g, zs[b] - zs[a], c64(0.0, 0.0))?;
                }
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let u = state.q_diff(i, j) / n as f64;
            for a in 0..np {
                for b in 0..np {
                    for g in basis.indices() {
                        h0 += 0.5
                            * coeffs.get(a, i, j, g)
                            * coeffs.get(b, j, i, (-g.0, -g.1))
                            * ctx.f_alpha_raw(n, g, zs[b] - zs[a], u)?;
                    }
                }
            }
        }
    }

    let mut h1 = Vec::with_capacity(np);
    for a in 0..np {
        let mut h = c64(0.0, 0.0);
        for i in 0..m {
            h += state.p[i] * coeffs.scalar(a, i);
            for b in 0..np {
                if b == a {
                    continue;
                }
                h += coeffs.scalar(a, i) * coeffs.scalar(b, i) * ctx.e1(zs[a] - zs[b])?;
                for g in basis.indices_nonzero() {
                    h -= coeffs.get(a, i, i, g)
                        * coeffs.get(b, i, i, (-g.0, -g.1))
                        * ctx.phi_alpha_raw(n, g, zs[b] - zs[a], c64(0.0, 0.0))?;
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let u = state.q_diff(i, j) / n as f64;
                for b in 0..np {
                    if b == a {
                        continue;
                    }
                    for g in basis.indices() {
                        h -= coeffs.get(a, i, j, g)
                            * coeffs.get(b, j, i, (-g.0, -g.1))
                            * ctx.phi_alpha_raw(n, g, zs[b] - zs[a], u)?;
                    }
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
                for g in basis.indices() {
                    h += 0.5 * coeffs.get(a, i, j, g) * coeffs.get(a, j, i, (-g.0, -g.1));
                }
            }
        }
        h2.push(h);
    }
    Ok(Hamiltonians { h0, h1, h2 })
}

/// Hamiltonians extracted from the generating function `tr L²(z) / (2N)`:
/// `H_{1,a}` and `H_{2,a}` from trapezoidal Cauchy contour integrals around
/// each marked point, `H_0` from the regular remainder after subtracting the
/// pole parts and the non-double-periodic scalar term.
pub fn hamiltonians_via_trace(spec: &ModelSpec, state: &PhaseState) -> EResult<Hamiltonians> {
    let ctx = spec.context()?;
    let lax = build_lax(spec, state)?;
    let n = spec.n_inner as f64;
    let gen = |z: C64| -> EResult<C64> {
        let l = lax.eval(z)?;
        Ok(l.matmul(&l).trace() / (2.0 * n))
    };
    let radius = 0.06;
    let points = 64;
    let mut h1 = Vec::new();
    let mut h2 = Vec::new();
    for a in 0..spec.n_poles {
        let za = spec.marked_points[a];
        let mut res0 = c64(0.0, 0.0);
        let mut res1 = c64(0.0, 0.0);
        for k in 0..points {
            let th = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
            let w = c64(radius * th.cos(), radius * th.sin());
            let g = gen(za + w)?;
            res0 += g * w;
            res1 += g * w * w;
        }
        h1.push(res0 / points as f64);
        h2.push(res1 / points as f64);
    }
    // Scalar weights of the non-double-periodic term.
    let basis = spec.basis();
    let coeffs = SpinCoeffs::build(spec, state, &basis);
    let totals: Vec<C64> = (0..spec.m_blocks)
        .map(|i| (0..spec.n_poles).map(|b| coeffs.scalar(b, i)).sum())
        .collect();
    let rho_term = |z: C64| -> EResult<C64> {
        let mut acc = c64(0.0, 0.0);
        for (i, tot) in totals.iter().enumerate() {
            for a in 0..spec.n_poles {
                acc += tot * coeffs.scalar(a, i) * ctx.rho(z - spec.marked_points[a])?;
            }
        }
        Ok(acc)
    };
    let samples = [
        c64(0.31, 0.0) + spec.tau * 0.69,
        c64(0.47, 0.0) + spec.tau * 0.29,
    ];
    let mut h0 = c64(0.0, 0.0);
    for &z in &samples {
        let mut v = gen(z)? - rho_term(z)?;
        for a in 0..spec.n_poles {
            v -= h1[a] * ctx.e1(z - spec.marked_points[a])?;
            v -= h2[a] * ctx.e2(z - spec.marked_points[a])?;
        }
        h0 += v / samples.len() as f64;
    }
    Ok(Hamiltonians { h0, h1, h2 })
}

/// Equations of motion of the `H_0` flow.
pub fn eom_h0(spec: &ModelSpec, state: &PhaseState) -> EResult<PhaseTangent> {
    let ctx = spec.context()?;
    let basis = spec.basis();
    let coeffs = SpinCoeffs::build(spec, state, &basis);
    let n = spec.n_inner;
    let nf = n as f64;
    let m = spec.m_blocks;
    let np = spec.n_poles;
    let zs = &spec.marked_points;

    let mut tangent = PhaseTangent::zero(spec);
    tangent.qdot = state.p.clone();
    for i in 0..m {
        let mut acc = c64(0.0, 0.0);
        for k in 0..m {
            if k == i {
                continue;
            }
            let u = state.q_diff(k, i) / nf;
            for a in 0..np {
                for b in 0..np {
                    for g in basis.indices() {
                        acc += coeffs.get(a, k, i, g)
                            * coeffs.get(b, i, k, (-g.0, -g.1))
                            * ctx.f_prime_alpha_raw(n, g, zs[b] - zs[a], u)?;
                    }
                }
            }
        }
        tangent.pdot[i] = acc / nf;
    }

    for a in 0..np {
        for i in 0..m {
            for j in 0..m {
                let mut table = vec![c64(0.0, 0.0); n * n];
                for (slot, alpha) in basis.indices().enumerate() {
                    let mut acc = c64(0.0, 0.0);
                    for b in 0..np {
                        // Companion of the full scalar sum in H_0: the b = a
                        // term enters with rho(0).
                        let rho_ba = if b == a {
                            ctx.rho0()
                        } else {
                            ctx.rho(zs[b] - zs[a])?
                        };
                        acc += coeffs.get(a, i, j, alpha)
                            * (coeffs.scalar(b, j) - coeffs.scalar(b, i))
                            * rho_ba;
                        for beta in basis.indices_nonzero() {
                            let diff = (alpha.0 - beta.0, alpha.1 - beta.1);
                            acc += coeffs.get(a, i, j, diff)
                                * (kappa(n, alpha, beta) * coeffs.get(b, j, j, beta)
                                    - kappa(n, beta, alpha) * coeffs.get(b, i, i, beta))
                                * ctx.f_alpha_raw(n, beta, zs[a] - zs[b], c64(0.0, 0.0))?;
                        }
                        for beta in basis.indices() {
                            let diff = (alpha.0 - beta.0, alpha.1 - beta.1);
                            for k in 0..m {
                                if k != j {
                                    let u = state.q_diff(k, j) / nf;
                                    acc += kappa(n, alpha, beta)
                                        * coeffs.get(a, i, k, diff)
                                        * coeffs.get(b, k, j, beta)
                                        * ctx.f_alpha_raw(n, beta, zs[a] - zs[b], u)?;
                                }
                                if k != i {
                                    let u = state.q_diff(i, k) / nf;
                                    acc -= kappa(n, beta, alpha)
                                        * coeffs.get(a, k, j, diff)
                                        * coeffs.get(b, i, k, beta)
                                        * ctx.f_alpha_raw(n, beta, zs[a] - zs[b], u)?;
                                }
                            }
                        }
                    }
                    table[slot] = acc / nf;
                }
                tangent.sdot[a][i][j] = basis.from_coeffs(&table);
            }
        }
    }
    Ok(tangent)
}

/// Equations of motion of the `H_{1,a}` flow.
pub fn eom_h1a(spec: &ModelSpec, state: &PhaseState, a: usize) -> EResult<PhaseTangent> {
    assert!(a < spec.n_poles);
    let ctx = spec.context()?;
    let basis = spec.basis();
    let coeffs = SpinCoeffs::build(spec, state, &basis);
    let n = spec.n_inner;
    let nf = n as f64;
    let m = spec.m_blocks;
    let np = spec.n_poles;
    let zs = &spec.marked_points;

    let mut tangent = PhaseTangent::zero(spec);
    for i in 0..m {
        tangent.qdot[i] = coeffs.scalar(a, i);
        let mut acc = c64(0.0, 0.0);
        for k in 0..m {
            if k == i {
                continue;
            }
            let uik = state.q_diff(i, k) / nf;
            let uki = state.q_diff(k, i) / nf;
            for b in 0..np {
                if b == a {
                    continue;
                }
                for g in basis.indices() {
                    acc += coeffs.get(a, i, k, g)
                        * coeffs.get(b, k, i, (-g.0, -g.1))
                        * ctx.f_alpha_raw(n, g, zs[b] - zs[a], uik)?;
                    acc -= coeffs.get(a, k, i, g)
                        * coeffs.get(b, i, k, (-g.0, -g.1))
                        * ctx.f_alpha_raw(n, g, zs[b] - zs[a], uki)?;
                }
            }
        }
        tangent.pdot[i] = acc / nf;
    }

    for b in 0..np {
        for i in 0..m {
            for j in 0..m {
                let mut table = vec![c64(0.0, 0.0); n * n];
                for (slot, alpha) in basis.indices().enumerate() {
                    let mut acc = c64(0.0, 0.0);
                    if b != a {
                        acc += coeffs.get(b, i, j, alpha)
                            * (coeffs.scalar(a, j) - coeffs.scalar(a, i))
                            * ctx.e1(zs[a] - zs[b])?;
                        for beta in basis.indices_nonzero() {
                            let diff = (alpha.0 - beta.0, alpha.1 - beta.1);
                            acc += coeffs.get(b, i, j, diff)
                                * (kappa(n, beta, alpha) * coeffs.get(a, i, i, beta)
                                    - kappa(n, alpha, beta) * coeffs.get(a, j, j, beta))
                                * ctx.phi_alpha_raw(n, beta, zs[b] - zs[a], c64(0.0, 0.0))?;
                        }
                        for beta in basis.indices() {
                            let diff = (alpha.0 - beta.0, alpha.1 - beta.1);
                            for k in 0..m {
                                if k != i {
                                    let u = state.q_diff(i, k) / nf;
                                    acc += kappa(n, beta, alpha)
                                        * coeffs.get(b, k, j, diff)
                                        * coeffs.get(a, i, k, beta)
                                        * ctx.phi_alpha_raw(n, beta, zs[b] - zs[a], u)?;
                                }
                                if k != j {
                                    let u = state.q_diff(k, j) / nf;
                                    acc -= kappa(n, alpha, beta)
                                        * coeffs.get(b, i, k, diff)
                                        * coeffs.get(a, k, j, beta)
                                        * ctx.phi_alpha_raw(n, beta, zs[b] - zs[a], u)?;
                                }
                            }
                        }
                    } else {
                        acc -= (state.p[i] - state.p[j]) * coeffs.get(a, i, j, alpha);
                        for c in 0..np {
                            if c == a {
                                continue;
                            }
                            acc += coeffs.get(a, i, j, alpha)
                                * (coeffs.scalar(c, j) - coeffs.scalar(c, i))
                                * ctx.e1(zs[a] - zs[c])?;
                            for beta in basis.indices_nonzero() {
                                let diff = (alpha.0 - beta.0, alpha.1 - beta.1);
                                acc += coeffs.get(a, i, j, diff)
                                    * (kappa(n, alpha, beta) * coeffs.get(c, j, j, beta)
                                        - kappa(n, beta, alpha) * coeffs.get(c, i, i, beta))
                                    * ctx.phi_alpha_raw(n, beta, zs[a] - zs[c], c64(0.0, 0.0))?;
                            }
                            for beta in basis.indices() {
                                let diff = (alpha.0 - beta.0, alpha.1 - beta.1);
                                for k in 0..m {
                                    if k != j {
                                        let u = state.q_diff(k, j) / nf;
                                        acc += kappa(n, alpha, beta)
                                            * coeffs.get(a, i, k, diff)
                                            * coeffs.get(c, k, j, beta)
                                            * ctx.phi_alpha_raw(n, beta, zs[a] - zs[c], u)?;
                                    }
                                    if k != i {
                                        let u = state.q_diff(i, k) / nf;
                                        acc -= kappa(n, beta, alpha)
                                            * coeffs.get(a, k, j, diff)
                                            * coeffs.get(c, i, k, beta)
                                            * ctx.phi_alpha_raw(n, beta, zs[a] - zs[c], u)?;
                                    }
                                }
                            }
                        }
                    }
                    table[slot] = acc / nf;
                }
                tangent.sdot[b][i][j] = basis.from_coeffs(&table);
            }
        }
    }
    Ok(tangent)
}

/// Max relative residual of `dL/dt_0 - [L, M_0] - correction` over spectral
/// samples; with `with_correction = false` the pure Lax equation is tested
/// (it holds on the constraint surface).
pub fn lax_residual_h0(
    spec: &ModelSpec,
    state: &PhaseState,
    z_samples: &[C64],
    with_correction: bool,
) -> EResult<f64> {
    let tangent = eom_h0(spec, state)?;
    let dl = build_lax_dt(spec, state, &tangent)?;
    let lax = build_lax(spec, state)?;
    let m0 = build_m0(spec, state)?;
    let uw = build_unwanted_h0(spec, state)?;
    residual_over_samples(
        &dl,
        &lax,
        &m0,
        if with_correction { Some(&uw) } else { None },
        z_samples,
    )
}

/// Analogous residual for the `H_{1,a}` flow.
pub fn lax_residual_h1a(
    spec: &ModelSpec,
    state: &PhaseState,
    a: usize,
    z_samples: &[C64],
    with_correction: bool,
) -> EResult<f64> {
    let tangent = eom_h1a(spec, state, a)?;
    let dl = build_lax_dt(spec, state, &tangent)?;
    let lax = build_lax(spec, state)?;
    let m1a = build_m1a(spec, state, a)?;
    let uw = build_unwanted_h1a(spec, state, a)?;
    residual_over_samples(
        &dl,
        &lax,
        &m1a,
        if with_correction { Some(&uw) } else { None },
        z_samples,
    )
}

fn residual_over_samples(
    dl: &SpectralOperator,
    lax: &SpectralOperator,
    mm: &SpectralOperator,
    uw: Option<&SpectralOperator>,
    z_samples: &[C64],
) -> EResult<f64> {
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let dlv = dl.eval(z)?;
        let comm = lax.eval(z)?.commutator(&mm.eval(z)?);
        let mut res = &dlv - &comm;
        if let Some(u) = uw {
            res = &res - &u.eval(z)?;
        }
        worst = worst.max(res.frobenius_norm() / dlv.frobenius_norm().max(1.0));
    }
    Ok(worst)
}

/// Spectral sample points in the cell interior, rejected near the poles of
/// the Lax operator (marked points modulo the lattice).
pub fn sample_spectral_points(spec: &ModelSpec, seed: u64, count: usize) -> EResult<Vec<C64>> {
    let ctx = spec.context()?;
    let margin = (10.0 * ctx.pole_eps()).max(0.04);
    let mut rng = Rng::new(seed ^ 0x5eed5eed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = rng.in_cell(spec.tau, 0.05, 0.95);
        if spec
            .marked_points
            .iter()
            .all(|&za| ctx.lattice_distance(z - za) >= margin)
        {
            out.push(z);
        }
    }
    Ok(out)
}

/// Quasi-periodicity residuals of the Lax operator under `z -> z + 1` and
/// `z -> z + tau` with the clock/shift transition matrices; both vanish on
/// states with zero moment-map constant.
pub fn quasi_periodicity_residual(
    spec: &ModelSpec,
    state: &PhaseState,
    z: C64,
) -> EResult<(f64, f64)> {
    let lax = build_lax(spec, state)?;
    let basis = spec.basis();
    let n = spec.n_inner;
    let m = spec.m_blocks;
    // g1 = 1_M ⊗ Q^{-1}, and Q^{-1} = T_{(-1,0)}.
    let q_inv = basis.t((-1, 0));
    let q_fwd = basis.t((1, 0));
    let g1 = CMat::identity(m).kron(&q_inv);
    let g1i = CMat::identity(m).kron(&q_fwd);
    // g_tau has blocks exp(-2πi q_k/N) Λ^{-1}.
    let l_inv = basis.t((0, -1));
    let l_fwd = basis.t((0, 1));
    let mut gt = CMat::zeros(n * m, n * m);
    let mut gti = CMat::zeros(n * m, n * m);
    for k in 0..m {
        let ph = (-two_pi_i() * state.q[k] / n as f64).exp();
        let phi_inv = (two_pi_i() * state.q[k] / n as f64).exp();
        for r in 0..n {
            for c in 0..n {
                gt[(k * n + r, k * n + c)] = ph * l_inv[(r, c)];
                gti[(k * n + r, k * n + c)] = phi_inv * l_fwd[(r, c)];
            }
        }
    }
    let l0 = lax.eval(z)?;
    let l1 = lax.eval(z + 1.0)?;
    let lt = lax.eval(z + spec.tau)?;
    let scale = l0.frobenius_norm().max(1.0);
    let r1 = (&l1 - &g1.matmul(&l0).matmul(&g1i)).frobenius_norm() / scale;
    let rt = (&lt - &gt.matmul(&l0).matmul(&gti)).frobenius_norm() / scale;
    Ok((r1, rt))
}

/// Which Hamiltonian drives a flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    H0,
    H1a(usize),
}

#[derive(Error, Debug)]
pub enum FlowError {
    #[error("integration aborted at t = {t}: {source}")]
    Aborted { t: f64, source: EllipticError },
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

/// Conserved quantities sampled along a trajectory.
#[derive(Clone, Debug)]
pub struct ConservedSample {
    pub t: f64,
    pub h0: C64,
    pub h1: Vec<C64>,
    pub casimirs: Vec<Vec<C64>>,
    pub charpoly: Vec<C64>,
    pub trace_powers: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub conserved: Vec<ConservedSample>,
}

impl Trajectory {
    /// Max relative drift of each conserved family against its initial
    /// value: `(H0, H1 over all a, casimirs, charpoly coefficients)`.
    pub fn drifts(&self) -> (f64, f64, f64, f64) {
        let first = &self.conserved[0];
        let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-3);
        let mut dh0: f64 = 0.0;
        let mut dh1: f64 = 0.0;
        let mut dcas: f64 = 0.0;
        let mut dcp: f64 = 0.0;
        for s in &self.conserved[1..] {
            dh0 = dh0.max(rel(s.h0, first.h0));
            for (x, y) in s.h1.iter().zip(&first.h1) {
                dh1 = dh1.max(rel(*x, *y));
            }
            for (cx, cy) in s.casimirs.iter().zip(&first.casimirs) {
                for (x, y) in cx.iter().zip(cy) {
                    dcas = dcas.max(rel(*x, *y));
                }
            }
            for (x, y) in s.charpoly.iter().zip(&first.charpoly) {
                dcp = dcp.max(rel(*x, *y));
            }
        }
        (dh0, dh1, dcas, dcp)
    }

    /// Max relative drift of the trace powers `tr L^k(z*)`, `k = 2, 3`.
    pub fn trace_power_drift(&self) -> f64 {
        let first = &self.conserved[0];
        let rel = |a: C64, b: C64| (a - b).norm() / b.norm().max(1e-3);
        let mut out: f64 = 0.0;
        for s in &self.conserved[1..] {
            for (x, y) in s.trace_powers.iter().zip(&first.trace_powers) {
                out = out.max(rel(*x, *y));
            }
        }
        out
    }
}

/// Fixed-step RK4 integration of a Hamiltonian flow, with pole-exclusion
/// guarding and conserved-quantity sampling at checkpoints.
pub fn integrate_flow(
    spec: &ModelSpec,
    state0: &PhaseState,
    flow: FlowKind,
    t_end: f64,
    dt: f64,
    checkpoints: usize,
) -> Result<Trajectory, FlowError> {
    let ctx = spec.context()?;
    let steps = (t_end / dt).round() as usize;
    let every = (steps / checkpoints.max(1)).max(1);
    let field = |st: &PhaseState| -> EResult<PhaseTangent> {
        match flow {
            FlowKind::H0 => eom_h0(spec, st),
            FlowKind::H1a(a) => eom_h1a(spec, st, a),
        }
    };
    let probe = c64(0.43, 0.0) + spec.tau * 0.37;
    let observe = |t: f64, st: &PhaseState| -> EResult<ConservedSample> {
        let h = hamiltonians(spec, st)?;
        let cas = (0..spec.n_poles)
            .map(|a| casimirs(spec, st, a, 3))
            .collect();
        let l = build_lax(spec, st)?.eval(probe)?;
        let cp = l.charpoly();
        let l2 = l.matmul(&l);
        let tr = vec![l2.trace(), l2.matmul(&l).trace()];
        Ok(ConservedSample {
            t,
            h0: h.h0,
            h1: h.h1,
            casimirs: cas,
            charpoly: cp,
            trace_powers: tr,
        })
    };

    let mut st = state0.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![st.clone()],
        conserved: vec![observe(0.0, &st).map_err(|source| FlowError::Aborted { t: 0.0, source })?],
    };
    for step in 0..steps {
        let t = step as f64 * dt;
        let guard = |e: EllipticError| FlowError::Aborted { t, source: e };
        let k1 = field(&st).map_err(guard)?;
        let k2 = field(&st.advanced(&k1, dt / 2.0)).map_err(guard)?;
        let k3 = field(&st.advanced(&k2, dt / 2.0)).map_err(guard)?;
        let k4 = field(&st.advanced(&k3, dt)).map_err(guard)?;
        let incr = k1.add(&k4).add(&k2.scale(2.0)).add(&k3.scale(2.0));
        st = st.advanced(&incr, dt / 6.0);
        st.validate(spec, &ctx)
            .map_err(|source| FlowError::Aborted { t: t + dt, source })?;
        if (step + 1) % every == 0 || step + 1 == steps {
            let tn = (step + 1) as f64 * dt;
            traj.times.push(tn);
            traj.states.push(st.clone());
            traj.conserved
                .push(observe(tn, &st).map_err(|source| FlowError::Aborted { t: tn, source })?);
        }
    }
    Ok(traj)
}
