//! Standalone builders for every degeneration of the general model:
//! spinless and spin Calogero-Moser, the Gaudin chain, the integrable top,
//! the multispin Calogero-Moser system, the mixed model and the interacting
//! tops, together with the classification-scheme equivalences between them.

use crate::elliptic::{EllipticContext, EllipticError};
use crate::lax::{build_lax, eom_h0, PhaseTangent, SpectralOperator};
use crate::linalg::CMat;
use crate::rng::Rng;
use crate::state::{ModelSpec, PhaseState};
use crate::torus::{kappa, TorusBasis};
use crate::{c64, C64};

type EResult<T> = Result<T, EllipticError>;

// -- spinless Calogero-Moser --------------------------------------------------

/// Lax pair of the spinless model with coupling `nu`: `M x M` operators
/// including the diagonal Dirac term `d_i = Σ_{k≠i} E2(q_ik)` in the second
/// matrix.
pub fn cm_lax(
    ctx: &EllipticContext,
    q: &[C64],
    p: &[C64],
    nu: C64,
) -> EResult<(SpectralOperator, SpectralOperator)> {
    let m = q.len();
    assert_eq!(p.len(), m);
    let (qv, pv) = (q.to_vec(), p.to_vec());
    let ctx1 = ctx.clone();
    let l = SpectralOperator::new(m, vec![c64(0.0, 0.0)], move |z| {
        let mut out = CMat::zeros(qv.len(), qv.len());
        for i in 0..qv.len() {
            for j in 0..qv.len() {
                out[(i, j)] = if i == j {
                    pv[i] + nu * ctx1.e1(z)?
                } else {
                    nu * ctx1.phi(z, qv[i] - qv[j])?
                };
            }
        }
        Ok(out)
    });
    let qv = q.to_vec();
    let ctx2 = ctx.clone();
    let mm = SpectralOperator::new(m, vec![c64(0.0, 0.0)], move |z| {
        let mut out = CMat::zeros(qv.len(), qv.len());
        for i in 0..qv.len() {
            let mut d = c64(0.0, 0.0);
            for k in 0..qv.len() {
                if k != i {
                    d += ctx2.e2(qv[i] - qv[k])?;
                }
            }
            out[(i, i)] = nu * d;
            for j in 0..qv.len() {
                if j != i {
                    out[(i, j)] = nu * ctx2.f(z, qv[i] - qv[j])?;
                }
            }
        }
        Ok(out)
    });
    Ok((l, mm))
}

/// Hamiltonian `Σ p²/2 - ν² Σ_{i>j} wp(q_ij)`.
pub fn cm_hamiltonian(ctx: &EllipticContext, q: &[C64], p: &[C64], nu: C64) -> EResult<C64> {
    let mut h: C64 = p.iter().map(|x| x * x / 2.0).sum();
    for i in 0..q.len() {
        for j in 0..i {
            h -= nu * nu * ctx.wp(q[i] - q[j])?;
        }
    }
    Ok(h)
}

/// Accelerations `q̈_i = ν² Σ_{k≠i} wp'(q_ik)`.
pub fn cm_accelerations(ctx: &EllipticContext, q: &[C64], nu: C64) -> EResult<Vec<C64>> {
    let mut acc = vec![c64(0.0, 0.0); q.len()];
    for i in 0..q.len() {
        for k in 0..q.len() {
            if k != i {
                acc[i] += nu * nu * ctx.wp_prime(q[i] - q[k])?;
            }
        }
    }
    Ok(acc)
}

/// Max relative residual of the Lax equation `dL/dt = [L, M]` along the
/// equations of motion, over spectral samples.
pub fn cm_lax_residual(
    ctx: &EllipticContext,
    q: &[C64],
    p: &[C64],
    nu: C64,
    z_samples: &[C64],
) -> EResult<f64> {
    let m = q.len();
    let (l, mm) = cm_lax(ctx, q, p, nu)?;
    let pdot = cm_accelerations(ctx, q, nu)?;
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        // dL/dt: diagonal pdot, off-diagonal nu (qdot_i - qdot_j) f(z, q_ij).
        let mut dl = CMat::zeros(m, m);
        for i in 0..m {
            dl[(i, i)] = pdot[i];
            for j in 0..m {
                if j != i {
                    dl[(i, j)] = nu * (p[i] - p[j]) * ctx.f(z, q[i] - q[j])?;
                }
            }
        }
        let comm = l.eval(z)?.commutator(&mm.eval(z)?);
        let r = (&dl - &comm).frobenius_norm() / dl.frobenius_norm().max(1.0);
        worst = worst.max(r);
    }
    Ok(worst)
}

// -- spin Calogero-Moser ------------------------------------------------------

/// Lax pair of the spin model on the unreduced orbit; the M-matrix has no
/// diagonal part (the Dirac terms only appear after reduction).
pub fn spin_cm_lax(
    ctx: &EllipticContext,
    q: &[C64],
    p: &[C64],
    s: &CMat,
) -> EResult<(SpectralOperator, SpectralOperator)> {
    let m = q.len();
    assert!(s.rows() == m && s.cols() == m);
    let (qv, pv, sv) = (q.to_vec(), p.to_vec(), s.clone());
    let ctx1 = ctx.clone();
    let l = SpectralOperator::new(m, vec![c64(0.0, 0.0)], move |z| {
        let mut out = CMat::zeros(qv.len(), qv.len());
        for i in 0..qv.len() {
            for j in 0..qv.len() {
                out[(i, j)] = if i == j {
                    pv[i] + sv[(i, i)] * ctx1.e1(z)?
                } else {
                    sv[(i, j)] * ctx1.phi(z, qv[i] - qv[j])?
                };
            }
        }
        Ok(out)
    });
    let (qv, sv) = (q.to_vec(), s.clone());
    let ctx2 = ctx.clone();
    let mm = SpectralOperator::new(m, vec![c64(0.0, 0.0)], move |z| {
        let mut out = CMat::zeros(qv.len(), qv.len());
        for i in 0..qv.len() {
            for j in 0..qv.len() {
                if i != j {
                    out[(i, j)] = sv[(i, j)] * ctx2.f(z, qv[i] - qv[j])?;
                }
            }
        }
        Ok(out)
    });
    Ok((l, mm))
}

/// `H = Σ p²/2 - Σ_{i>j} S_ij S_ji wp(q_ij)`.
pub fn spin_cm_hamiltonian(ctx: &EllipticContext, q: &[C64], p: &[C64], s: &CMat) -> EResult<C64> {
    let mut h: C64 = p.iter().map(|x| x * x / 2.0).sum();
    for i in 0..q.len() {
        for j in 0..i {
            h -= s[(i, j)] * s[(j, i)] * ctx.wp(q[i] - q[j])?;
        }
    }
    Ok(h)
}

/// Equations of motion of the spin model: `(qdot, pdot, Sdot)`.
pub fn spin_cm_eom(
    ctx: &EllipticContext,
    q: &[C64],
    p: &[C64],
    s: &CMat,
) -> EResult<(Vec<C64>, Vec<C64>, CMat)> {
    let m = q.len();
    let qdot = p.to_vec();
    let mut pdot = vec![c64(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            if j != i {
                pdot[i] += s[(i, j)] * s[(j, i)] * ctx.wp_prime(q[i] - q[j])?;
            }
        }
    }
    let mut sdot = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let mut acc = c64(0.0, 0.0);
            for k in 0..m {
                if k != i && k != j {
                    acc += s[(i, k)] * s[(k, j)] * (ctx.wp(q[i] - q[k])? - ctx.wp(q[j] - q[k])?);
                }
            }
            sdot[(i, j)] = acc;
        }
    }
    Ok((qdot, pdot, sdot))
}

/// Max relative residual of
/// `dL/dt = [L, M] - Σ_{ij} E_ij (S_ii - S_jj) S_ij E1(z) f(z, q_ij)`
/// along the spin equations of motion. The correction enters with a minus
/// sign (the opposite sign fails at order one) and vanishes when all `S_ii`
/// coincide.
pub fn spin_cm_lax_residual(
    ctx: &EllipticContext,
    q: &[C64],
    p: &[C64],
    s: &CMat,
    z_samples: &[C64],
) -> EResult<f64> {
    let m = q.len();
    let (l, mm) = spin_cm_lax(ctx, q, p, s)?;
    let (qdot, pdot, sdot) = spin_cm_eom(ctx, q, p, s)?;
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let mut dl = CMat::zeros(m, m);
        for i in 0..m {
            dl[(i, i)] = pdot[i] + sdot[(i, i)] * ctx.e1(z)?;
            for j in 0..m {
                if j != i {
                    dl[(i, j)] = sdot[(i, j)] * ctx.phi(z, q[i] - q[j])?
                        + s[(i, j)] * (qdot[i] - qdot[j]) * ctx.f(z, q[i] - q[j])?;
                }
            }
        }
        let mut rhs = l.eval(z)?.commutator(&mm.eval(z)?);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    rhs[(i, j)] -=
                        (s[(i, i)] - s[(j, j)]) * s[(i, j)] * ctx.e1(z)? * ctx.f(z, q[i] - q[j])?;
                }
            }
        }
        let r = (&dl - &rhs).frobenius_norm() / dl.frobenius_norm().max(1.0);
        worst = worst.max(r);
    }
    Ok(worst)
}

// -- Gaudin chain (M = 1) -----------------------------------------------------

/// Gaudin data: a single `N x N` spin per marked point; scalar (identity)
/// parts are dropped throughout.
pub struct GaudinModel {
    pub n_order: usize,
    pub marked_points: Vec<C64>,
    pub spins: Vec<CMat>,
}

impl GaudinModel {
    /// Project every spin onto the non-scalar part (zero trace coefficient).
    pub fn traceless(&self) -> GaudinModel {
        let n = self.n_order as f64;
        let spins = self
            .spins
            .iter()
            .map(|s| {
                let corr = CMat::identity(self.n_order).scale(s.trace() / n);
                s - &corr
            })
            .collect();
        GaudinModel {
            n_order: self.n_order,
            marked_points: self.marked_points.clone(),
            spins,
        }
    }
}

/// Gaudin Lax matrix `L(z) = Σ_a Σ_{α≠0} S^a_α T_α phi_α(z - z_a, ω_α)`.
pub fn gaudin_lax(ctx: &EllipticContext, model: &GaudinModel) -> EResult<SpectralOperator> {
    gaudin_operator(ctx, model, false, 1.0, None)
}

/// Gaudin M-matrix for the `H_0` flow,
/// `M_0(z) = Σ_a Σ_{α≠0} S^a_α T_α f_α(z - z_a, ω_α)`.
/// The sign is fixed by the Lax equation for the flow of
/// `H_0 = (1/2) Σ_{a,b} Σ_{α≠0} S^a_α S^b_{-α} f_α(z_ab, ω_α)` under the
/// bracket without the `1/N` factor.
pub fn gaudin_m0(ctx: &EllipticContext, model: &GaudinModel) -> EResult<SpectralOperator> {
    gaudin_operator(ctx, model, true, 1.0, None)
}

/// Gaudin M-matrix for the `H_{1,a}` flow,
/// `M_{1,a}(z) = Σ_{α≠0} S^a_α T_α phi_α(z - z_a, ω_α)`.
///
/// Note the chain's residue flow runs opposite to the general model's
/// `H_{1,a}` flow: the chain Hamiltonian carries the α-sum with a plus sign
/// where the block-model one has a minus.
pub fn gaudin_m1a(
    ctx: &EllipticContext,
    model: &GaudinModel,
    a: usize,
) -> EResult<SpectralOperator> {
    gaudin_operator(ctx, model, false, 1.0, Some(a))
}

fn gaudin_operator(
    ctx: &EllipticContext,
    model: &GaudinModel,
    use_f: bool,
    sign: f64,
    only_pole: Option<usize>,
) -> EResult<SpectralOperator> {
    let n = model.n_order;
    let basis = TorusBasis::new(n);
    let coeffs: Vec<Vec<C64>> = model.spins.iter().map(|s| basis.to_coeffs(s)).collect();
    let zs = model.marked_points.clone();
    let ctx = ctx.clone();
    Ok(SpectralOperator::new(n, zs.clone(), move |z| {
        let mut out = CMat::zeros(n, n);
        for (a, table) in coeffs.iter().enumerate() {
            if let Some(only) = only_pole {
                if a != only {
                    continue;
                }
            }
            let za = z - zs[a];
            for g in basis.indices_nonzero() {
                let c = TorusBasis::coeff_raw(table, n, g) * sign;
                let v = if use_f {
                    ctx.f_alpha_raw(n, g, za, c64(0.0, 0.0))?
                } else {
                    ctx.phi_alpha_raw(n, g, za, c64(0.0, 0.0))?
                };
                out.add_assign_scaled(basis.t_rep(g.0 as usize, g.1 as usize), c * v);
            }
        }
        Ok(out)
    }))
}

/// Gaudin Hamiltonians `H_0` and the residue family, with the bracket
/// normalization without `1/N`.
pub fn gaudin_hamiltonians(ctx: &EllipticContext, model: &GaudinModel) -> EResult<(C64, Vec<C64>)> {
    let n = model.n_order;
    let basis = TorusBasis::new(n);
    let coeffs: Vec<Vec<C64>> = model.spins.iter().map(|s| basis.to_coeffs(s)).collect();
    let np = model.marked_points.len();
    let mut h0 = c64(0.0, 0.0);
    for a in 0..np {
        for b in 0..np {
            for g in basis.indices_nonzero() {
                h0 += 0.5
                    * TorusBasis::coeff_raw(&coeffs[a], n, g)
                    * TorusBasis::coeff_raw(&coeffs[b], n, (-g.0, -g.1))
                    * ctx.f_alpha_raw(
                        n,
                        g,
                        model.marked_points[b] - model.marked_points[a],
                        c64(0.0, 0.0),
                    )?;
            }
        }
    }
    let mut h1 = Vec::with_capacity(np);
    for a in 0..np {
        let mut h = c64(0.0, 0.0);
        for b in 0..np {
            if b == a {
                continue;
            }
            for g in basis.indices_nonzero() {
                h += TorusBasis::coeff_raw(&coeffs[a], n, g)
                    * TorusBasis::coeff_raw(&coeffs[b], n, (-g.0, -g.1))
                    * ctx.phi_alpha_raw(
                        n,
                        g,
                        model.marked_points[b] - model.marked_points[a],
                        c64(0.0, 0.0),
                    )?;
            }
        }
        h1.push(h);
    }
    Ok((h0, h1))
}

/// Spin velocities of the Gaudin `H_0` flow:
/// `dS^a/dt = Σ_b Σ_β [S^a, S^b_β T_β f_β(z_ab, ω_β)]`.
pub fn gaudin_eom_h0(ctx: &EllipticContext, model: &GaudinModel) -> EResult<Vec<CMat>> {
    let n = model.n_order;
    let basis = TorusBasis::new(n);
    let coeffs: Vec<Vec<C64>> = model.spins.iter().map(|s| basis.to_coeffs(s)).collect();
    let np = model.marked_points.len();
    let mut out = Vec::with_capacity(np);
    for a in 0..np {
        let mut gen = CMat::zeros(n, n);
        for b in 0..np {
            let zab = model.marked_points[a] - model.marked_points[b];
            for g in basis.indices_nonzero() {
                let c = TorusBasis::coeff_raw(&coeffs[b], n, g)
                    * ctx.f_alpha_raw(n, g, zab, c64(0.0, 0.0))?;
                gen.add_assign_scaled(basis.t_rep(g.0 as usize, g.1 as usize), c);
            }
        }
        out.push(model.spins[a].commutator(&gen));
    }
    Ok(out)
}

/// Spin velocities of the Gaudin `H_{1,a}` flow:
/// `dS^a/dt = -Σ_{b≠a} Σ_β [S^a, S^b_β T_β phi_β(z_ab, ω_β)]` and
/// `dS^b/dt = [S^b, Σ_β S^a_β T_β phi_β(z_ba, ω_β)]` for `b ≠ a`.
pub fn gaudin_eom_h1a(ctx: &EllipticContext, model: &GaudinModel, a: usize) -> EResult<Vec<CMat>> {
    let n = model.n_order;
    let basis = TorusBasis::new(n);
    let coeffs: Vec<Vec<C64>> = model.spins.iter().map(|s| basis.to_coeffs(s)).collect();
    let np = model.marked_points.len();
    let mut out = Vec::with_capacity(np);
    for b in 0..np {
        if b == a {
            let mut gen = CMat::zeros(n, n);
            for c in 0..np {
                if c == a {
                    continue;
                }
                let zac = model.marked_points[a] - model.marked_points[c];
                for g in basis.indices_nonzero() {
                    let w = TorusBasis::coeff_raw(&coeffs[c], n, g)
                        * ctx.phi_alpha_raw(n, g, zac, c64(0.0, 0.0))?;
                    gen.add_assign_scaled(basis.t_rep(g.0 as usize, g.1 as usize), w);
                }
            }
            out.push(model.spins[a].commutator(&gen).scale(c64(-1.0, 0.0)));
        } else {
            let zba = model.marked_points[b] - model.marked_points[a];
            let mut gen = CMat::zeros(n, n);
            for g in basis.indices_nonzero() {
                let w = TorusBasis::coeff_raw(&coeffs[a], n, g)
                    * ctx.phi_alpha_raw(n, g, zba, c64(0.0, 0.0))?;
                gen.add_assign_scaled(basis.t_rep(g.0 as usize, g.1 as usize), w);
            }
            out.push(model.spins[b].commutator(&gen));
        }
    }
    Ok(out)
}

/// Max relative residual of the Gaudin Lax equation `dL/dt = [L, M]` for
/// either flow.
pub fn gaudin_lax_residual(
    ctx: &EllipticContext,
    model: &GaudinModel,
    flow_a: Option<usize>,
    z_samples: &[C64],
) -> EResult<f64> {
    let l = gaudin_lax(ctx, model)?;
    let (sdot, mm) = match flow_a {
        None => (gaudin_eom_h0(ctx, model)?, gaudin_m0(ctx, model)?),
        Some(a) => (gaudin_eom_h1a(ctx, model, a)?, gaudin_m1a(ctx, model, a)?),
    };
    let dmodel = GaudinModel {
        n_order: model.n_order,
        marked_points: model.marked_points.clone(),
        spins: sdot,
    };
    let dl = gaudin_lax(ctx, &dmodel)?;
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let dlv = dl.eval(z)?;
        let comm = l.eval(z)?.commutator(&mm.eval(z)?);
        worst = worst.max((&dlv - &comm).frobenius_norm() / dlv.frobenius_norm().max(1.0));
    }
    Ok(worst)
}

// -- integrable top (M = 1, n = 1) ---------------------------------------------

/// The top Lax pair, inverse inertia tensor and Hamiltonian for a single
/// `N x N` spin; scalar parts of `S` are ignored.
pub struct TopPair {
    pub lax: SpectralOperator,
    pub m: SpectralOperator,
    pub inertia: CMat,
    pub hamiltonian: C64,
}

/// `L(z,S) = Σ_{α≠0} S_α T_α phi_α(z, ω_α)`, `M(z,S) = Σ_{α≠0} S_α T_α f_α(z, ω_α)`,
/// `J(S) = Σ_{α≠0} S_α T_α J_α` with `J_α = -E2(ω_α)`, `H = tr(S J(S))/2`.
pub fn top_pair(ctx: &EllipticContext, n_order: usize, s: &CMat) -> EResult<TopPair> {
    let model = GaudinModel {
        n_order,
        marked_points: vec![c64(0.0, 0.0)],
        spins: vec![s.clone()],
    };
    let lax = gaudin_lax(ctx, &model)?;
    let m = gaudin_operator(ctx, &model, true, 1.0, None)?;
    let basis = TorusBasis::new(n_order);
    let coeffs = basis.to_coeffs(s);
    let mut inertia = CMat::zeros(n_order, n_order);
    for g in basis.indices_nonzero() {
        let j_alpha = -ctx.e2(ctx.omega_raw(n_order, g))?;
        inertia.add_assign_scaled(
            basis.t_rep(g.0 as usize, g.1 as usize),
            TorusBasis::coeff_raw(&coeffs, n_order, g) * j_alpha,
        );
    }
    let hamiltonian = s.matmul(&inertia).trace() / 2.0;
    Ok(TopPair {
        lax,
        m,
        inertia,
        hamiltonian,
    })
}

/// Residual of the top Lax equation `dL/dt = [L, M]` with `Sdot = [S, J(S)]`.
pub fn top_lax_residual(
    ctx: &EllipticContext,
    n_order: usize,
    s: &CMat,
    z_samples: &[C64],
) -> EResult<f64> {
    let pair = top_pair(ctx, n_order, s)?;
    let sdot = s.commutator(&pair.inertia);
    let dmodel = GaudinModel {
        n_order,
        marked_points: vec![c64(0.0, 0.0)],
        spins: vec![sdot],
    };
    let dl = gaudin_lax(ctx, &dmodel)?;
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let dlv = dl.eval(z)?;
        let comm = pair.lax.eval(z)?.commutator(&pair.m.eval(z)?);
        worst = worst.max((&dlv - &comm).frobenius_norm() / dlv.frobenius_norm().max(1.0));
    }
    Ok(worst)
}

// -- multispin Calogero-Moser (N = 1) -------------------------------------------

/// Multispin data: `n` scalar spin matrices of size `M x M` attached to the
/// marked points.
pub struct MultispinModel {
    pub marked_points: Vec<C64>,
    pub q: Vec<C64>,
    pub p: Vec<C64>,
    pub spins: Vec<CMat>,
}

impl MultispinModel {
    fn m(&self) -> usize {
        self.q.len()
    }
}

/// Lax matrix
/// `L_ij = δ_ij (p_i + Σ_a S^a_ii E1(z - z_a)) + (1-δ_ij) Σ_a S^a_ij phi(z - z_a, q_ij)`.
pub fn multispin_lax(ctx: &EllipticContext, model: &MultispinModel) -> EResult<SpectralOperator> {
    let (q, p, zs, spins) = (
        model.q.clone(),
        model.p.clone(),
        model.marked_points.clone(),
        model.spins.clone(),
    );
    let m = model.m();
    let ctx = ctx.clone();
    Ok(SpectralOperator::new(m, zs.clone(), move |z| {
        let mut out = CMat::zeros(m, m);
        for i in 0..m {
            out[(i, i)] = p[i];
            for (a, s) in spins.iter().enumerate() {
                out[(i, i)] += s[(i, i)] * ctx.e1(z - zs[a])?;
            }
            for j in 0..m {
                if j == i {
                    continue;
                }
                for (a, s) in spins.iter().enumerate() {
                    out[(i, j)] += s[(i, j)] * ctx.phi(z - zs[a], q[i] - q[j])?;
                }
            }
        }
        Ok(out)
    }))
}

/// `M_0` of the multispin system: `δ_ij Σ_a S^a_ii rho(z-z_a) + (1-δ_ij) Σ_a S^a_ij f(z-z_a, q_ij)`.
pub fn multispin_m0(ctx: &EllipticContext, model: &MultispinModel) -> EResult<SpectralOperator> {
    let (q, zs, spins) = (
        model.q.clone(),
        model.marked_points.clone(),
        model.spins.clone(),
    );
    let m = model.m();
    let ctx = ctx.clone();
    Ok(SpectralOperator::new(m, zs.clone(), move |z| {
        let mut out = CMat::zeros(m, m);
        for i in 0..m {
            for (a, s) in spins.iter().enumerate() {
                out[(i, i)] += s[(i, i)] * ctx.rho(z - zs[a])?;
            }
            for j in 0..m {
                if j == i {
                    continue;
                }
                for (a, s) in spins.iter().enumerate() {
                    out[(i, j)] += s[(i, j)] * ctx.f(z - zs[a], q[i] - q[j])?;
                }
            }
        }
        Ok(out)
    }))
}

/// `M_{1,a}`: `-δ_ij S^a_ii E1(z-z_a) - (1-δ_ij) S^a_ij phi(z-z_a, q_ij)`.
pub fn multispin_m1a(
    ctx: &EllipticContext,
    model: &MultispinModel,
    a: usize,
) -> EResult<SpectralOperator> {
    let (q, zs) = (model.q.clone(), model.marked_points.clone());
    let s = model.spins[a].clone();
    let m = model.m();
    let ctx = ctx.clone();
    Ok(SpectralOperator::new(m, zs.clone(), move |z| {
        let mut out = CMat::zeros(m, m);
        for i in 0..m {
            out[(i, i)] = -s[(i, i)] * ctx.e1(z - zs[a])?;
            for j in 0..m {
                if j != i {
                    out[(i, j)] = -s[(i, j)] * ctx.phi(z - zs[a], q[i] - q[j])?;
                }
            }
        }
        Ok(out)
    }))
}

/// Multispin Hamiltonians `(H_0, H_{1,a} list)`; the scalar sum in `H_0`
/// includes the `a = b` term with `rho(0)`.
pub fn multispin_hamiltonians(
    ctx: &EllipticContext,
    model: &MultispinModel,
) -> EResult<(C64, Vec<C64>)> {
    let m = model.m();
    let np = model.marked_points.len();
    let zs = &model.marked_points;
    let mut h0: C64 = model.p.iter().map(|x| x * x / 2.0).sum();
    for i in 0..m {
        for a in 0..np {
            for b in 0..np {
                let rho_ab = if a == b {
                    ctx.rho0()
                } else {
                    ctx.rho(zs[a] - zs[b])?
                };
                h0 += 0.5 * model.spins[a][(i, i)] * model.spins[b][(i, i)] * rho_ab;
            }
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            for a in 0..np {
                for b in 0..np {
                    h0 += 0.5
                        * model.spins[a][(i, j)]
                        * model.spins[b][(j, i)]
                        * ctx.f(zs[b] - zs[a], model.q[i] - model.q[j])?;
                }
            }
        }
    }
    let mut h1 = Vec::with_capacity(np);
    for a in 0..np {
        let mut h = c64(0.0, 0.0);
        for i in 0..m {
            h += model.p[i] * model.spins[a][(i, i)];
            for b in 0..np {
                if b == a {
                    continue;
                }
                h += model.spins[a][(i, i)] * model.spins[b][(i, i)] * ctx.e1(zs[a] - zs[b])?;
            }
        }
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                for b in 0..np {
                    if b != a {
                        h += model.spins[b][(i, j)]
                            * model.spins[a][(j, i)]
                            * ctx.phi(zs[a] - zs[b], model.q[i] - model.q[j])?;
                    }
                }
            }
        }
        h1.push(h);
    }
    Ok((h0, h1))
}

/// Moment-map residuals `Σ_a S^a_ii - mean` of the multispin constraint.
pub fn multispin_constraint_residual(model: &MultispinModel) -> Vec<C64> {
    let m = model.m();
    let cs: Vec<C64> = (0..m)
        .map(|i| model.spins.iter().map(|s| s[(i, i)]).sum())
        .collect();
    let mean: C64 = cs.iter().sum::<C64>() / m as f64;
    cs.into_iter().map(|c| c - mean).collect()
}

/// Equations of motion of the multispin `H_0` flow; the scalar rho sum
/// includes the `b = a` term with `rho(0)`.
pub fn multispin_eom_h0(
    ctx: &EllipticContext,
    model: &MultispinModel,
) -> EResult<(Vec<C64>, Vec<C64>, Vec<CMat>)> {
    let m = model.m();
    let np = model.marked_points.len();
    let zs = &model.marked_points;
    let qdot = model.p.clone();
    let mut pdot = vec![c64(0.0, 0.0); m];
    for i in 0..m {
        for k in 0..m {
            if k == i {
                continue;
            }
            for a in 0..np {
                for b in 0..np {
                    pdot[i] += model.spins[a][(k, i)]
                        * model.spins[b][(i, k)]
                        * ctx.f_prime(zs[b] - zs[a], model.q[k] - model.q[i])?;
                }
            }
        }
    }
    let mut sdot = Vec::with_capacity(np);
    for a in 0..np {
        let mut d = CMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut acc = c64(0.0, 0.0);
                for b in 0..np {
                    let rho_ba = if b == a {
                        ctx.rho0()
                    } else {
                        ctx.rho(zs[b] - zs[a])?
                    };
                    acc += model.spins[a][(i, j)]
                        * (model.spins[b][(j, j)] - model.spins[b][(i, i)])
                        * rho_ba;
                    for k in 0..m {
                        if k != j {
                            acc += model.spins[a][(i, k)]
                                * model.spins[b][(k, j)]
                                * ctx.f(zs[a] - zs[b], model.q[k] - model.q[j])?;
                        }
                        if k != i {
                            acc -= model.spins[a][(k, j)]
                                * model.spins[b][(i, k)]
                                * ctx.f(zs[a] - zs[b], model.q[i] - model.q[k])?;
                        }
                    }
                }
                d[(i, j)] = acc;
            }
        }
        sdot.push(d);
    }
    Ok((qdot, pdot, sdot))
}

/// Max relative residual of the multispin Lax equation with the moment-map
/// correction `-(1/2) Σ S^b_ij (Σ_a(S^a_ii - S^a_jj)) E_ij f'(z-z_b, q_ij)`
/// for the `H_0` flow.
pub fn multispin_lax_residual_h0(
    ctx: &EllipticContext,
    model: &MultispinModel,
    z_samples: &[C64],
    with_correction: bool,
) -> EResult<f64> {
    let m = model.m();
    let np = model.marked_points.len();
    let zs = &model.marked_points;
    let l = multispin_lax(ctx, model)?;
    let m0 = multispin_m0(ctx, model)?;
    let (qdot, pdot, sdot) = multispin_eom_h0(ctx, model)?;
    let defect: Vec<Vec<C64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    (0..np)
                        .map(|a| model.spins[a][(i, i)] - model.spins[a][(j, j)])
                        .sum::<C64>()
                })
                .collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let mut dl = CMat::zeros(m, m);
        for i in 0..m {
            dl[(i, i)] = pdot[i];
            for a in 0..np {
                dl[(i, i)] += sdot[a][(i, i)] * ctx.e1(z - zs[a])?;
            }
            for j in 0..m {
                if j == i {
                    continue;
                }
                for a in 0..np {
                    dl[(i, j)] += sdot[a][(i, j)] * ctx.phi(z - zs[a], model.q[i] - model.q[j])?
                        + model.spins[a][(i, j)]
                            * (qdot[i] - qdot[j])
                            * ctx.f(z - zs[a], model.q[i] - model.q[j])?;
                }
            }
        }
        let mut rhs = l.eval(z)?.commutator(&m0.eval(z)?);
        if with_correction {
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    for b in 0..np {
                        rhs[(i, j)] -= 0.5
                            * model.spins[b][(i, j)]
                            * defect[i][j]
                            * ctx.f_prime(z - zs[b], model.q[i] - model.q[j])?;
                    }
                }
            }
        }
        worst = worst.max((&dl - &rhs).frobenius_norm() / dl.frobenius_norm().max(1.0));
    }
    Ok(worst)
}

// -- mixed model and interacting tops (n = 1) -----------------------------------

/// The mixed-model Lax matrix is the general one with a single pole at the
/// origin; this builder assembles it directly from the single-pole formulas
/// for cross-checking against the general assembler.
pub fn mixed_lax(
    ctx: &EllipticContext,
    n_order: usize,
    q: &[C64],
    p: &[C64],
    spins: &[Vec<CMat>],
) -> EResult<SpectralOperator> {
    let m = q.len();
    let basis = TorusBasis::new(n_order);
    let coeffs: Vec<Vec<Vec<C64>>> = spins
        .iter()
        .map(|row| row.iter().map(|s| basis.to_coeffs(s)).collect())
        .collect();
    let (qv, pv) = (q.to_vec(), p.to_vec());
    let ctx = ctx.clone();
    Ok(SpectralOperator::new(
        n_order * m,
        vec![c64(0.0, 0.0)],
        move |z| {
            let n = n_order;
            let basis = TorusBasis::new(n);
            let mut out = CMat::zeros(n * m, n * m);
            for i in 0..m {
                for j in 0..m {
                    let mut blk = CMat::zeros(n, n);
                    if i == j {
                        let scalar = pv[i] + coeffs[i][i][0] * ctx.e1(z)?;
                        for g in basis.indices_nonzero() {
                            let c = TorusBasis::coeff_raw(&coeffs[i][i], n, g);
                            blk.add_assign_scaled(
                                basis.t_rep(g.0 as usize, g.1 as usize),
                                c * ctx.phi_alpha_raw(n, g, z, c64(0.0, 0.0))?,
                            );
                        }
                        for d in 0..n {
                            blk[(d, d)] += scalar;
                        }
                    } else {
                        let u = (qv[i] - qv[j]) / n as f64;
                        for g in basis.indices() {
                            let c = TorusBasis::coeff_raw(&coeffs[i][j], n, g);
                            blk.add_assign_scaled(
                                basis.t_rep(g.0 as usize, g.1 as usize),
                                c * ctx.phi_alpha_raw(n, g, z, u)?,
                            );
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

/// Mixed-model Hamiltonian with the scalar parts dropped:
/// `H = Σ p²/2 - (1/2) Σ_i Σ_{α≠0} S^{ii}_α S^{ii}_{-α} E2(ω_α)
///  - (1/2) Σ_{i≠j} Σ_α S^{ij}_α S^{ji}_{-α} E2(ω_α + q_ij/N)`.
pub fn mixed_hamiltonian(
    ctx: &EllipticContext,
    n_order: usize,
    q: &[C64],
    p: &[C64],
    spins: &[Vec<CMat>],
) -> EResult<C64> {
    let m = q.len();
    let basis = TorusBasis::new(n_order);
    let coeffs: Vec<Vec<Vec<C64>>> = spins
        .iter()
        .map(|row| row.iter().map(|s| basis.to_coeffs(s)).collect())
        .collect();
    let n = n_order;
    let mut h: C64 = p.iter().map(|x| x * x / 2.0).sum();
    for i in 0..m {
        for g in basis.indices_nonzero() {
            h -= 0.5
                * TorusBasis::coeff_raw(&coeffs[i][i], n, g)
                * TorusBasis::coeff_raw(&coeffs[i][i], n, (-g.0, -g.1))
                * ctx.e2(ctx.omega_raw(n, g))?;
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let u = (q[i] - q[j]) / n as f64;
            for g in basis.indices() {
                h -= 0.5
                    * TorusBasis::coeff_raw(&coeffs[i][j], n, g)
                    * TorusBasis::coeff_raw(&coeffs[j][i], n, (-g.0, -g.1))
                    * ctx.e2(ctx.omega_raw(n, g) + u)?;
            }
        }
    }
    Ok(h)
}

/// Residual of the rank-one factorization identity
/// `S^{ij}_α S^{ji}_{-α} = (1/N) Σ_β κ²_{α,β} S^{jj}_β S^{ii}_{-β}` on the
/// given spin grid, maximized over `i ≠ j` and all `α`.
pub fn rank_one_identity_residual(n_order: usize, spins: &[Vec<CMat>]) -> f64 {
    let basis = TorusBasis::new(n_order);
    let m = spins.len();
    let n = n_order;
    let coeffs: Vec<Vec<Vec<C64>>> = spins
        .iter()
        .map(|row| row.iter().map(|s| basis.to_coeffs(s)).collect())
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            for alpha in basis.indices() {
                let lhs = TorusBasis::coeff_raw(&coeffs[i][j], n, alpha)
                    * TorusBasis::coeff_raw(&coeffs[j][i], n, (-alpha.0, -alpha.1));
                let mut rhs = c64(0.0, 0.0);
                for beta in basis.indices() {
                    let k = kappa(n, alpha, beta);
                    rhs += k
                        * k
                        * TorusBasis::coeff_raw(&coeffs[j][j], n, beta)
                        * TorusBasis::coeff_raw(&coeffs[i][i], n, (-beta.0, -beta.1));
                }
                rhs /= n as f64;
                worst = worst.max((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0));
            }
        }
    }
    worst
}

/// Hamiltonian of the interacting tops (rank-one mixed model):
/// `H = Σ p²/2 - (1/2) Σ_i Σ_{α≠0} S^{ii}_α S^{ii}_{-α} E2(ω_α)
///  - (1/2N) Σ_{i≠j} Σ_{α,β} κ²_{α,β} S^{jj}_β S^{ii}_{-β} E2(ω_α + q_ij/N)`.
pub fn interacting_tops_hamiltonian(
    ctx: &EllipticContext,
    n_order: usize,
    q: &[C64],
    p: &[C64],
    spins: &[Vec<CMat>],
) -> EResult<C64> {
    let m = q.len();
    let basis = TorusBasis::new(n_order);
    let n = n_order;
    let coeffs: Vec<Vec<Vec<C64>>> = spins
        .iter()
        .map(|row| row.iter().map(|s| basis.to_coeffs(s)).collect())
        .collect();
    let mut h: C64 = p.iter().map(|x| x * x / 2.0).sum();
    for i in 0..m {
        for g in basis.indices_nonzero() {
            h -= 0.5
                * TorusBasis::coeff_raw(&coeffs[i][i], n, g)
                * TorusBasis::coeff_raw(&coeffs[i][i], n, (-g.0, -g.1))
                * ctx.e2(ctx.omega_raw(n, g))?;
        }
    }
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let u = (q[i] - q[j]) / n as f64;
            for alpha in basis.indices() {
                for beta in basis.indices() {
                    let k = kappa(n, alpha, beta);
                    h -= 0.5 / n as f64
                        * k
                        * k
                        * TorusBasis::coeff_raw(&coeffs[j][j], n, beta)
                        * TorusBasis::coeff_raw(&coeffs[i][i], n, (-beta.0, -beta.1))
                        * ctx.e2(ctx.omega_raw(n, alpha) + u)?;
                }
            }
        }
    }
    Ok(h)
}

/// Equations of motion of the interacting tops: the mixed-model (single
/// pole) flow evaluated on rank-one data.
pub fn interacting_tops_eom(spec: &ModelSpec, state: &PhaseState) -> EResult<PhaseTangent> {
    assert_eq!(spec.n_poles, 1);
    eom_h0(spec, state)
}

// -- classification-scheme equivalences -----------------------------------------

/// Named entrywise residuals of the seven degeneration arrows, each compared
/// on `z_count` random spectral points.
pub fn degeneration_residuals(tau: C64, seed: u64, z_count: usize) -> EResult<Vec<(String, f64)>> {
    let ctx = EllipticContext::new(tau)?;
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();

    let sample_z = |rng: &mut Rng, ctx: &EllipticContext, avoid: &[C64]| -> Vec<C64> {
        let mut pts = Vec::new();
        while pts.len() < z_count {
            let z = rng.in_cell(tau, 0.05, 0.95);
            if avoid.iter().all(|&za| ctx.lattice_distance(z - za) > 0.05) {
                pts.push(z);
            }
        }
        pts
    };

    // 1. general (M = 1) vs Gaudin, non-scalar parts.
    {
        let spec = ModelSpec::desk(2, 1, 2, tau);
        let st = crate::state::random_state(&spec, seed ^ 1, false, false)?;
        let lax = build_lax(&spec, &st)?;
        let gaudin = GaudinModel {
            n_order: 2,
            marked_points: spec.marked_points.clone(),
            spins: (0..2).map(|a| st.spin(a, 0, 0).clone()).collect(),
        };
        let gl = gaudin_lax(&ctx, &gaudin)?;
        let zs = sample_z(&mut rng, &ctx, &spec.marked_points);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            let full = lax.eval(z)?;
            // Drop the scalar (trace) part before comparing.
            let corr = CMat::identity(2).scale(full.trace() / 2.0);
            let lhs = &full - &corr;
            let rhs = gl.eval(z)?;
            worst = worst.max((&lhs - &rhs).max_abs());
        }
        out.push(("general-to-gaudin".into(), worst));
    }

    // 2. general (N = 1) vs multispin.
    {
        let spec = ModelSpec::desk(1, 3, 2, tau);
        let st = crate::state::random_state(&spec, seed ^ 2, false, false)?;
        let lax = build_lax(&spec, &st)?;
        let model = MultispinModel {
            marked_points: spec.marked_points.clone(),
            q: st.q.clone(),
            p: st.p.clone(),
            spins: (0..2)
                .map(|a| CMat::from_fn(3, 3, |i, j| st.spin(a, i, j)[(0, 0)]))
                .collect(),
        };
        let ms = multispin_lax(&ctx, &model)?;
        let zs = sample_z(&mut rng, &ctx, &spec.marked_points);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&lax.eval(z)? - &ms.eval(z)?).max_abs());
        }
        out.push(("general-to-multispin".into(), worst));
    }

    // 3. general (n = 1) vs mixed model.
    {
        let spec = ModelSpec {
            n_inner: 2,
            m_blocks: 2,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau,
        };
        let st = crate::state::random_state(&spec, seed ^ 3, false, false)?;
        let lax = build_lax(&spec, &st)?;
        let mixed = mixed_lax(&ctx, 2, &st.q, &st.p, &st.spins[0])?;
        let zs = sample_z(&mut rng, &ctx, &[c64(0.0, 0.0)]);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&lax.eval(z)? - &mixed.eval(z)?).max_abs());
        }
        out.push(("general-to-mixed".into(), worst));
    }

    // 4. Gaudin (n = 1) vs top.
    {
        let mut s = CMat::from_fn(3, 3, |i, j| {
            c64(0.3 * (i as f64 - j as f64), 0.2 + 0.1 * (i + j) as f64)
        });
        // Kill the scalar part so both sides see the same data.
        let corr = CMat::identity(3).scale(s.trace() / 3.0);
        s = &s - &corr;
        let gaudin = GaudinModel {
            n_order: 3,
            marked_points: vec![c64(0.0, 0.0)],
            spins: vec![s.clone()],
        };
        let gl = gaudin_lax(&ctx, &gaudin)?;
        let pair = top_pair(&ctx, 3, &s)?;
        let zs = sample_z(&mut rng, &ctx, &[c64(0.0, 0.0)]);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&gl.eval(z)? - &pair.lax.eval(z)?).max_abs());
        }
        out.push(("gaudin-to-top".into(), worst));
    }

    // 5. multispin (n = 1) vs spin CM.
    {
        let spec = ModelSpec {
            n_inner: 1,
            m_blocks: 3,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau,
        };
        let st = crate::state::random_state(&spec, seed ^ 5, false, false)?;
        let s = CMat::from_fn(3, 3, |i, j| st.spin(0, i, j)[(0, 0)]);
        let model = MultispinModel {
            marked_points: vec![c64(0.0, 0.0)],
            q: st.q.clone(),
            p: st.p.clone(),
            spins: vec![s.clone()],
        };
        let ms = multispin_lax(&ctx, &model)?;
        let (scm, _) = spin_cm_lax(&ctx, &st.q, &st.p, &s)?;
        let zs = sample_z(&mut rng, &ctx, &[c64(0.0, 0.0)]);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&ms.eval(z)? - &scm.eval(z)?).max_abs());
        }
        out.push(("multispin-to-spin-cm".into(), worst));
    }

    // 6. mixed model at rank one vs interacting tops: the Lax matrices
    // coincide entrywise on rank-one data (independent assemblers), and the
    // Hamiltonians agree through the rank-one factorization.
    {
        let spec = ModelSpec {
            n_inner: 2,
            m_blocks: 2,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau,
        };
        let st = crate::state::random_state(&spec, seed ^ 6, false, true)?;
        let lax = build_lax(&spec, &st)?;
        let mixed = mixed_lax(&ctx, 2, &st.q, &st.p, &st.spins[0])?;
        let zs = sample_z(&mut rng, &ctx, &[c64(0.0, 0.0)]);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&lax.eval(z)? - &mixed.eval(z)?).max_abs());
        }
        let hm = mixed_hamiltonian(&ctx, 2, &st.q, &st.p, &st.spins[0])?;
        let ht = interacting_tops_hamiltonian(&ctx, 2, &st.q, &st.p, &st.spins[0])?;
        out.push(("mixed-to-interacting-tops".into(), worst.max((hm - ht).norm())));
    }

    // 7. spin CM at the trivial rank-one point vs spinless CM.
    {
        let spec = ModelSpec {
            n_inner: 1,
            m_blocks: 3,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau,
        };
        let st = crate::state::random_state(&spec, seed ^ 7, false, false)?;
        let nu = c64(0.7, 0.2);
        let s = CMat::from_fn(3, 3, |_, _| nu);
        let (scm, _) = spin_cm_lax(&ctx, &st.q, &st.p, &s)?;
        let (cm, _) = cm_lax(&ctx, &st.q, &st.p, nu)?;
        let zs = sample_z(&mut rng, &ctx, &[c64(0.0, 0.0)]);
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&scm.eval(z)? - &cm.eval(z)?).max_abs());
        }
        out.push(("spin-cm-to-cm".into(), worst));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lax::eom_h1a;
    use crate::state::{cauchy_derivative, random_state};

    fn ctx() -> EllipticContext {
        EllipticContext::new(c64(0.0, 1.0)).unwrap()
    }

    fn sample_positions(rng: &mut Rng, ctx: &EllipticContext, m: usize) -> Vec<C64> {
        'outer: loop {
            let q: Vec<C64> = (0..m).map(|_| rng.in_cell(ctx.tau(), 0.1, 0.9)).collect();
            for i in 0..m {
                for j in 0..m {
                    if i != j && ctx.lattice_distance(q[i] - q[j]) < 0.1 {
                        continue 'outer;
                    }
                }
            }
            return q;
        }
    }

    fn zpoints(rng: &mut Rng, ctx: &EllipticContext, count: usize) -> Vec<C64> {
        let mut out = Vec::new();
        while out.len() < count {
            let z = rng.in_cell(ctx.tau(), 0.05, 0.95);
            if ctx.lattice_distance(z) > 0.08 {
                out.push(z);
            }
        }
        out
    }

    #[test]
    fn cm_single_particle_is_free() {
        let ctx = ctx();
        let (l, mm) = cm_lax(&ctx, &[c64(0.3, 0.2)], &[c64(0.5, -0.1)], c64(0.8, 0.0)).unwrap();
        let z = c64(0.4, 0.3);
        let lv = l.eval(z).unwrap();
        assert!(
            (lv[(0, 0)] - (c64(0.5, -0.1) + c64(0.8, 0.0) * ctx.e1(z).unwrap())).norm() < 1e-13
        );
        assert!(mm.eval(z).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn cm_lax_equation_closes() {
        let ctx = ctx();
        let mut rng = Rng::new(61);
        let q = sample_positions(&mut rng, &ctx, 3);
        let p: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let zs = zpoints(&mut rng, &ctx, 6);
        let r = cm_lax_residual(&ctx, &q, &p, c64(0.6, 0.3), &zs).unwrap();
        assert!(r < 1e-9, "CM Lax residual {r}");
    }

    #[test]
    fn cm_hamiltonian_from_trace_differences() {
        // tr L²/2 differences between two states reproduce H differences
        // (the z-dependent additive constant cancels).
        let ctx = ctx();
        let mut rng = Rng::new(67);
        let nu = c64(0.5, 0.1);
        let q1 = sample_positions(&mut rng, &ctx, 3);
        let p1: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let q2 = sample_positions(&mut rng, &ctx, 3);
        // Hold the total momentum fixed: tr L²/2 carries a ν E1(z) Σp term
        // on top of H and the z-dependent constant.
        let mut p2: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let ptot1: C64 = p1.iter().sum();
        let ptot2: C64 = p2.iter().sum();
        p2[2] += ptot1 - ptot2;
        let z = c64(0.37, 0.21);
        let half_tr = |q: &[C64], p: &[C64]| {
            let (l, _) = cm_lax(&ctx, q, p, nu).unwrap();
            let lv = l.eval(z).unwrap();
            lv.matmul(&lv).trace() / 2.0
        };
        let lhs = half_tr(&q1, &p1) - half_tr(&q2, &p2);
        let rhs = cm_hamiltonian(&ctx, &q1, &p1, nu).unwrap()
            - cm_hamiltonian(&ctx, &q2, &p2, nu).unwrap();
        assert!(
            (lhs - rhs).norm() < 1e-10,
            "difference oracle: {lhs} vs {rhs}"
        );
    }

    #[test]
    fn spin_cm_reduces_to_cm_at_constant_spin() {
        let ctx = ctx();
        let mut rng = Rng::new(71);
        let q = sample_positions(&mut rng, &ctx, 3);
        let p: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let nu = c64(0.4, 0.7);
        let s = CMat::from_fn(3, 3, |_, _| nu);
        let (l1, _) = spin_cm_lax(&ctx, &q, &p, &s).unwrap();
        let (l2, _) = cm_lax(&ctx, &q, &p, nu).unwrap();
        let z = c64(0.51, 0.23);
        assert!((&l1.eval(z).unwrap() - &l2.eval(z).unwrap()).max_abs() < 1e-13);
    }

    #[test]
    fn spin_cm_lax_equation_with_correction() {
        let ctx = ctx();
        let mut rng = Rng::new(73);
        let q = sample_positions(&mut rng, &ctx, 3);
        let p: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let s = CMat::from_fn(3, 3, |_, _| rng.complex_box(-1.0, 1.0));
        let zs = zpoints(&mut rng, &ctx, 6);
        let r = spin_cm_lax_residual(&ctx, &q, &p, &s, &zs).unwrap();
        assert!(r < 1e-9, "spin CM residual {r}");
        // Equal diagonal: the correction vanishes, so the same residual is
        // the pure Lax equation and still passes.
        let mut s_eq = s.clone();
        let avg = (0..3).map(|i| s_eq[(i, i)]).sum::<C64>() / 3.0;
        for i in 0..3 {
            s_eq[(i, i)] = avg;
        }
        let r = spin_cm_lax_residual(&ctx, &q, &p, &s_eq, &zs).unwrap();
        assert!(r < 1e-9, "constrained spin CM residual {r}");
    }

    #[test]
    fn spin_cm_eom_match_bracket_oracle() {
        // Oracle: Cauchy gradients of H with the Poisson-Lie bracket
        // {S_ij, S_kl} = -S_il δ_kj + S_kj δ_il and canonical {p, q}.
        let ctx = ctx();
        let mut rng = Rng::new(79);
        let m = 3usize;
        let q = sample_positions(&mut rng, &ctx, m);
        let p: Vec<C64> = (0..m).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let s = CMat::from_fn(m, m, |_, _| rng.complex_box(-1.0, 1.0));
        let (qdot, pdot, sdot) = spin_cm_eom(&ctx, &q, &p, &s).unwrap();
        let h = |qq: &[C64], pp: &[C64], ss: &CMat| spin_cm_hamiltonian(&ctx, qq, pp, ss).unwrap();
        for k in 0..m {
            let dq = cauchy_derivative(
                |w| {
                    let mut pp = p.clone();
                    pp[k] += w;
                    h(&q, &pp, &s)
                },
                0.02,
                16,
            );
            assert!((qdot[k] - dq).norm() < 1e-10);
            let dp = cauchy_derivative(
                |w| {
                    let mut qq = q.clone();
                    qq[k] += w;
                    h(&qq, &p, &s)
                },
                0.02,
                16,
            );
            assert!((pdot[k] + dp).norm() < 1e-10);
        }
        let mut grad = CMat::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                grad[(r, c)] = cauchy_derivative(
                    |w| {
                        let mut ss = s.clone();
                        ss[(r, c)] += w;
                        h(&q, &p, &ss)
                    },
                    0.02,
                    16,
                );
            }
        }
        // The closed-form spin equation differs from the bracket flow by the
        // boundary term S_kl (S_ll - S_kk) wp(q_kl), which vanishes exactly on
        // the moment-map surface S_ii = const; assert the sharp relation.
        for k in 0..m {
            for l in 0..m {
                let mut acc = c64(0.0, 0.0);
                for i in 0..m {
                    for j in 0..m {
                        // {S_ij, S_kl} = -S_il δ_kj + S_kj δ_il.
                        if k == j {
                            acc -= grad[(i, j)] * s[(i, l)];
                        }
                        if i == l {
                            acc += grad[(i, j)] * s[(k, j)];
                        }
                    }
                }
                let boundary = if k == l {
                    c64(0.0, 0.0)
                } else {
                    s[(k, l)] * (s[(l, l)] - s[(k, k)]) * ctx.wp(q[k] - q[l]).unwrap()
                };
                assert!(
                    (acc - sdot[(k, l)] - boundary).norm() < 1e-10,
                    "Sdot relation mismatch at ({k},{l})"
                );
            }
        }
        // On the constraint surface the closed-form equations are the bracket
        // flow exactly.
        let mut s_eq = s.clone();
        let avg = (0..m).map(|i| s_eq[(i, i)]).sum::<C64>() / m as f64;
        for i in 0..m {
            s_eq[(i, i)] = avg;
        }
        let (_, _, sdot_eq) = spin_cm_eom(&ctx, &q, &p, &s_eq).unwrap();
        let h_eq =
            |qq: &[C64], pp: &[C64], ss: &CMat| spin_cm_hamiltonian(&ctx, qq, pp, ss).unwrap();
        let mut grad_eq = CMat::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                grad_eq[(r, c)] = cauchy_derivative(
                    |w| {
                        let mut ss = s_eq.clone();
                        ss[(r, c)] += w;
                        h_eq(&q, &p, &ss)
                    },
                    0.02,
                    16,
                );
            }
        }
        for k in 0..m {
            for l in 0..m {
                let mut acc = c64(0.0, 0.0);
                for i in 0..m {
                    for j in 0..m {
                        if k == j {
                            acc -= grad_eq[(i, j)] * s_eq[(i, l)];
                        }
                        if i == l {
                            acc += grad_eq[(i, j)] * s_eq[(k, j)];
                        }
                    }
                }
                assert!((sdot_eq[(k, l)] - acc).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gaudin_matches_general_model_at_m1() {
        let ctx = ctx();
        let spec = ModelSpec::desk(2, 1, 2, c64(0.0, 1.0));
        let st = random_state(&spec, 83, false, false).unwrap();
        let model = GaudinModel {
            n_order: 2,
            marked_points: spec.marked_points.clone(),
            spins: (0..2).map(|a| st.spin(a, 0, 0).clone()).collect(),
        };
        // Spin velocities: the Gaudin flow is N times the general flow
        // (the bracket drops the 1/N factor).
        let fries = gaudin_eom_h0(&ctx, &model).unwrap();
        let general = eom_h0(&spec, &st).unwrap();
        for a in 0..2 {
            let scaled = general.sdot[a][0][0].scale(c64(2.0, 0.0));
            assert!(
                (&fries[a] - &scaled).max_abs() < 1e-11,
                "gaudin H0 flow vs general at pole {a}"
            );
        }
        // The chain's residue Hamiltonians carry the opposite sign of the
        // block model's, so the flows are opposite (times N for the bracket).
        for a in 0..2 {
            let fries = gaudin_eom_h1a(&ctx, &model, a).unwrap();
            let general = eom_h1a(&spec, &st, a).unwrap();
            for b in 0..2 {
                let scaled = general.sdot[b][0][0].scale(c64(-2.0, 0.0));
                assert!(
                    (&fries[b] - &scaled).max_abs() < 1e-11,
                    "gaudin H1,{a} flow vs general at pole {b}"
                );
            }
        }
    }

    #[test]
    fn gaudin_lax_equations_close() {
        let ctx = ctx();
        let mut rng = Rng::new(89);
        let spec = ModelSpec::desk(2, 1, 2, c64(0.0, 1.0));
        let st = random_state(&spec, 89, false, false).unwrap();
        let model = GaudinModel {
            n_order: 2,
            marked_points: spec.marked_points.clone(),
            spins: (0..2).map(|a| st.spin(a, 0, 0).clone()).collect(),
        };
        let mut zs = Vec::new();
        while zs.len() < 5 {
            let z = rng.in_cell(c64(0.0, 1.0), 0.05, 0.95);
            if model
                .marked_points
                .iter()
                .all(|&za| ctx.lattice_distance(z - za) > 0.06)
            {
                zs.push(z);
            }
        }
        let r = gaudin_lax_residual(&ctx, &model, None, &zs).unwrap();
        assert!(r < 1e-9, "gaudin H0 Lax residual {r}");
        for a in 0..2 {
            let r = gaudin_lax_residual(&ctx, &model, Some(a), &zs).unwrap();
            assert!(r < 1e-9, "gaudin H1,{a} Lax residual {r}");
        }
    }

    #[test]
    fn top_commuting_single_coefficient_is_static() {
        let ctx = ctx();
        let basis = TorusBasis::new(2);
        // S proportional to a single T_alpha commutes with J(S).
        let s = basis.t_rep(1, 0).scale(c64(0.4, 0.2));
        let pair = top_pair(&ctx, 2, &s).unwrap();
        let sdot = s.commutator(&pair.inertia);
        assert!(sdot.max_abs() < 1e-13);
    }

    #[test]
    fn top_hamiltonian_matches_coefficient_sum() {
        let ctx = ctx();
        let mut rng = Rng::new(97);
        let s = CMat::from_fn(2, 2, |_, _| rng.complex_box(-1.0, 1.0));
        let pair = top_pair(&ctx, 2, &s).unwrap();
        let basis = TorusBasis::new(2);
        let coeffs = basis.to_coeffs(&s);
        // H = (N/2) Σ_{α≠0} J_α S_α S_{-α} via the pairing
        // tr(T_α T_{-α}) = N.
        let mut want = c64(0.0, 0.0);
        for g in basis.indices_nonzero() {
            let j = -ctx.e2(ctx.omega_raw(2, g)).unwrap();
            want += j
                * TorusBasis::coeff_raw(&coeffs, 2, g)
                * TorusBasis::coeff_raw(&coeffs, 2, (-g.0, -g.1));
        }
        assert!((pair.hamiltonian - want).norm() < 1e-12);
    }

    #[test]
    fn top_lax_equation_and_spectrum_preservation() {
        let ctx = ctx();
        let mut rng = Rng::new(101);
        let mut s = CMat::from_fn(3, 3, |_, _| rng.complex_box(-0.6, 0.6));
        let corr = CMat::identity(3).scale(s.trace() / 3.0);
        s = &s - &corr;
        let zs = zpoints(&mut rng, &ctx, 5);
        let r = top_lax_residual(&ctx, 3, &s, &zs).unwrap();
        assert!(r < 1e-9, "top Lax residual {r}");
        // RK4 on Sdot = [S, J(S)]: the spectrum of S is preserved.
        let ev0 = {
            let mut e = s.eigenvalues();
            e.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
            e
        };
        let mut cur = s.clone();
        let dt = 1e-3;
        for _ in 0..200 {
            let f = |m: &CMat| -> CMat {
                let pair = top_pair(&ctx, 3, m).unwrap();
                m.commutator(&pair.inertia)
            };
            let k1 = f(&cur);
            let mut t2 = cur.clone();
            t2.add_assign_scaled(&k1, c64(dt / 2.0, 0.0));
            let k2 = f(&t2);
            let mut t3 = cur.clone();
            t3.add_assign_scaled(&k2, c64(dt / 2.0, 0.0));
            let k3 = f(&t3);
            let mut t4 = cur.clone();
            t4.add_assign_scaled(&k3, c64(dt, 0.0));
            let k4 = f(&t4);
            cur.add_assign_scaled(&k1, c64(dt / 6.0, 0.0));
            cur.add_assign_scaled(&k2, c64(dt / 3.0, 0.0));
            cur.add_assign_scaled(&k3, c64(dt / 3.0, 0.0));
            cur.add_assign_scaled(&k4, c64(dt / 6.0, 0.0));
        }
        let mut ev1 = cur.eigenvalues();
        ev1.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        for (a, b) in ev0.iter().zip(&ev1) {
            assert!((a - b).norm() < 1e-9, "eigenvalue drift {a} -> {b}");
        }
    }

    #[test]
    fn multispin_matches_general_at_n1() {
        let ctx = ctx();
        let spec = ModelSpec::desk(1, 3, 2, c64(0.0, 1.0));
        let st = random_state(&spec, 103, false, false).unwrap();
        let model = MultispinModel {
            marked_points: spec.marked_points.clone(),
            q: st.q.clone(),
            p: st.p.clone(),
            spins: (0..2)
                .map(|a| CMat::from_fn(3, 3, |i, j| st.spin(a, i, j)[(0, 0)]))
                .collect(),
        };
        // Hamiltonians agree with the general model at N = 1.
        let (h0, h1) = multispin_hamiltonians(&ctx, &model).unwrap();
        let general = crate::lax::hamiltonians(&spec, &st).unwrap();
        assert!((h0 - general.h0).norm() < 1e-11);
        for a in 0..2 {
            assert!((h1[a] - general.h1[a]).norm() < 1e-11);
        }
        // And the equations of motion do too.
        let (qdot, pdot, sdot) = multispin_eom_h0(&ctx, &model).unwrap();
        let tangent = eom_h0(&spec, &st).unwrap();
        for i in 0..3 {
            assert!((qdot[i] - tangent.qdot[i]).norm() < 1e-11);
            assert!((pdot[i] - tangent.pdot[i]).norm() < 1e-11);
            for j in 0..3 {
                for a in 0..2 {
                    assert!((sdot[a][(i, j)] - tangent.sdot[a][i][j][(0, 0)]).norm() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn multispin_lax_with_correction_and_constraint() {
        let ctx = ctx();
        let mut rng = Rng::new(107);
        let spec = ModelSpec::desk(1, 3, 2, c64(0.0, 1.0));
        let st = random_state(&spec, 107, false, false).unwrap();
        let mut model = MultispinModel {
            marked_points: spec.marked_points.clone(),
            q: st.q.clone(),
            p: st.p.clone(),
            spins: (0..2)
                .map(|a| CMat::from_fn(3, 3, |i, j| st.spin(a, i, j)[(0, 0)]))
                .collect(),
        };
        let mut zs = Vec::new();
        while zs.len() < 5 {
            let z = rng.in_cell(c64(0.0, 1.0), 0.05, 0.95);
            if model
                .marked_points
                .iter()
                .all(|&za| ctx.lattice_distance(z - za) > 0.06)
            {
                zs.push(z);
            }
        }
        let r = multispin_lax_residual_h0(&ctx, &model, &zs, true).unwrap();
        assert!(r < 1e-9, "multispin corrected residual {r}");
        // Enforce the moment-map constraint: pure equation holds.
        let excess = multispin_constraint_residual(&model);
        for (i, e) in excess.iter().enumerate() {
            let v = model.spins[1][(i, i)];
            model.spins[1][(i, i)] = v - e;
        }
        let r = multispin_lax_residual_h0(&ctx, &model, &zs, false).unwrap();
        assert!(r < 1e-9, "multispin pure residual {r}");
    }

    #[test]
    fn rank_one_identity_and_tops_hamiltonian() {
        let ctx = ctx();
        let spec = ModelSpec {
            n_inner: 2,
            m_blocks: 2,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau: c64(0.0, 1.0),
        };
        let st = random_state(&spec, 109, false, true).unwrap();
        let r = rank_one_identity_residual(2, &st.spins[0]);
        assert!(r < 1e-11, "rank-one identity residual {r}");
        let hm = mixed_hamiltonian(&ctx, 2, &st.q, &st.p, &st.spins[0]).unwrap();
        let ht = interacting_tops_hamiltonian(&ctx, 2, &st.q, &st.p, &st.spins[0]).unwrap();
        assert!(
            (hm - ht).norm() < 1e-10,
            "tops Hamiltonian mismatch {}",
            (hm - ht).norm()
        );
        // M = 1: no interaction sum, H = p²/2 + internal top energy.
        let spec1 = ModelSpec {
            n_inner: 2,
            m_blocks: 1,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau: c64(0.0, 1.0),
        };
        let st1 = random_state(&spec1, 113, false, true).unwrap();
        let ht = interacting_tops_hamiltonian(&ctx, 2, &st1.q, &st1.p, &st1.spins[0]).unwrap();
        let basis = TorusBasis::new(2);
        let coeffs = basis.to_coeffs(&st1.spins[0][0][0]);
        let mut internal = c64(0.0, 0.0);
        for g in basis.indices_nonzero() {
            internal -= 0.5
                * TorusBasis::coeff_raw(&coeffs, 2, g)
                * TorusBasis::coeff_raw(&coeffs, 2, (-g.0, -g.1))
                * ctx.e2(ctx.omega_raw(2, g)).unwrap();
        }
        let want = st1.p[0] * st1.p[0] / 2.0 + internal;
        assert!((ht - want).norm() < 1e-12);
    }

    #[test]
    fn general_single_pole_traceless_matches_top() {
        // M = 1, n = 1, traceless spin: the general Lax matrix reduces to
        // the top pair entrywise (the momentum scalar aside), and the
        // general M_0 is the top M-matrix over N.
        let ctx = ctx();
        let spec = ModelSpec {
            n_inner: 3,
            m_blocks: 1,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau: c64(0.0, 1.0),
        };
        let mut st = random_state(&spec, 131, false, false).unwrap();
        let tr = st.spins[0][0][0].trace() / 3.0;
        let corr = CMat::identity(3).scale(tr);
        st.spins[0][0][0] = &st.spins[0][0][0] - &corr;
        st.p[0] = c64(0.0, 0.0);
        let pair = top_pair(&ctx, 3, &st.spins[0][0][0]).unwrap();
        let lax = build_lax(&spec, &st).unwrap();
        let m0 = crate::lax::build_m0(&spec, &st).unwrap();
        let mut rng = Rng::new(131);
        for &z in &zpoints(&mut rng, &ctx, 4) {
            let a = lax.eval(z).unwrap();
            let b = pair.lax.eval(z).unwrap();
            assert!((&a - &b).max_abs() < 1e-12, "top Lax mismatch");
            let a = m0.eval(z).unwrap();
            let b = pair.m.eval(z).unwrap().scale(c64(1.0 / 3.0, 0.0));
            assert!((&a - &b).max_abs() < 1e-12, "top M mismatch (1/N factor)");
        }
    }

    #[test]
    fn degeneration_arrows_hold() {
        for tau in [c64(0.0, 1.0), c64(0.3, 0.8)] {
            for (name, r) in degeneration_residuals(tau, 11, 5).unwrap() {
                assert!(r < 1e-11, "degeneration {name} residual {r} at tau={tau}");
            }
        }
    }
}
