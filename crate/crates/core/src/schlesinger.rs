//! Non-autonomous layer: monodromy-preserving (zero-curvature) equations in
//! the modulus and in the marked points, built from the same Lax data, plus
//! the non-autonomous limit of the spinless many-body system.
//!
//! Conventions. The explicit modulus derivative of the Lax operator obeys
//! `2πi ∂_tau L = N ∂_z M_0` (the heat equation of the twisted basis
//! functions; the factor `N` comes from the `1/N` normalization of `M_0`),
//! and the marked-point derivative obeys `∂_{z_a} L = N ∂_z M_{1,a}`. The
//! zero-curvature residuals below therefore scale the transported flow by
//! `N`, which reduces to the literal single-pole statements at `N = 1`.

use crate::elliptic::{EllipticContext, EllipticError};
use crate::lax::{
    build_lax, build_lax_dt, build_lax_dza, build_m0, build_m1a, build_unwanted_h0,
    build_unwanted_h1a, eom_h0, eom_h1a, PhaseTangent, SpectralOperator,
};
use crate::linalg::CMat;
use crate::models::{cm_accelerations, cm_lax};
use crate::state::{ModelSpec, PhaseState};
use crate::{c64, two_pi_i, C64};

type EResult<T> = Result<T, EllipticError>;

/// Finite-difference derivative of the Lax operator in the modulus, by
/// Richardson-extrapolated centered differences with real and imaginary
/// steps averaged.
fn lax_dtau(spec: &ModelSpec, state: &PhaseState, z: C64, h: f64) -> EResult<CMat> {
    let at = |tau: C64| -> EResult<CMat> {
        let mut sp = spec.clone();
        sp.tau = tau;
        build_lax(&sp, state)?.eval(z)
    };
    let centered = |h: f64| -> EResult<CMat> {
        let re = (&at(spec.tau + h)? - &at(spec.tau - h)?).scale(c64(1.0 / (2.0 * h), 0.0));
        let im = (&at(spec.tau + c64(0.0, h))? - &at(spec.tau - c64(0.0, h))?)
            .scale(c64(1.0, 0.0) / c64(0.0, 2.0 * h));
        Ok((&re + &im).scale(c64(0.5, 0.0)))
    };
    let fine = centered(h / 2.0)?;
    let coarse = centered(h)?;
    Ok((&fine.scale(c64(4.0, 0.0)) - &coarse).scale(c64(1.0 / 3.0, 0.0)))
}

fn dz_fd(op: &SpectralOperator, z: C64, h: f64) -> EResult<CMat> {
    Ok((&op.eval(z + h)? - &op.eval(z - h)?).scale(c64(1.0 / (2.0 * h), 0.0)))
}

/// Max relative residual of the modulus-deformation equation
/// `(2πi/N) dL/dtau - ∂_z M_0 = [L, M_0] + correction`, with the dynamical
/// transport along the `H_0` flow and the explicit tau-derivative by finite
/// differences. `ablate_dz` drops the `∂_z M_0` term (negative control).
pub fn monodromy_residual_tau(
    spec: &ModelSpec,
    state: &PhaseState,
    z_samples: &[C64],
    with_correction: bool,
    ablate_dz: bool,
) -> EResult<f64> {
    let ctx = spec.context()?;
    let n = spec.n_inner as f64;
    let tangent = eom_h0(spec, state)?;
    let dl_flow = build_lax_dt(spec, state, &tangent)?;
    let lax = build_lax(spec, state)?;
    let m0 = build_m0(spec, state)?;
    let uw = build_unwanted_h0(spec, state)?;
    let h = ctx.fd_step();
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let dtau = lax_dtau(spec, state, z, h)?.scale(two_pi_i() / n);
        let flow = dl_flow.eval(z)?;
        let comm = lax.eval(z)?.commutator(&m0.eval(z)?);
        let mut rhs = comm;
        if !ablate_dz {
            rhs = &rhs + &dz_fd(&m0, z, h)?;
        }
        if with_correction {
            rhs = &rhs + &uw.eval(z)?;
        }
        let lhs = &dtau + &flow;
        let scale = lhs.frobenius_norm().max(rhs.frobenius_norm()).max(1.0);
        worst = worst.max((&lhs - &rhs).frobenius_norm() / scale);
    }
    Ok(worst)
}

/// Max relative residual of the marked-point deformation equation
/// `(1/N) ∂_{z_a} L + dL along H_{1,a} = ∂_z M_{1,a} + [L, M_{1,a}] + correction`;
/// the explicit `z_a`-derivative is assembled analytically.
pub fn monodromy_residual_za(
    spec: &ModelSpec,
    state: &PhaseState,
    a: usize,
    z_samples: &[C64],
    with_correction: bool,
) -> EResult<f64> {
    let ctx = spec.context()?;
    let n = spec.n_inner as f64;
    let tangent = eom_h1a(spec, state, a)?;
    let dl_flow = build_lax_dt(spec, state, &tangent)?;
    let dl_za = build_lax_dza(spec, state, a)?;
    let lax = build_lax(spec, state)?;
    let m1a = build_m1a(spec, state, a)?;
    let uw = build_unwanted_h1a(spec, state, a)?;
    let h = ctx.fd_step();
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        let lhs = &dl_za.eval(z)?.scale(c64(1.0 / n, 0.0)) + &dl_flow.eval(z)?;
        let mut rhs = lax.eval(z)?.commutator(&m1a.eval(z)?);
        rhs = &rhs + &dz_fd(&m1a, z, h)?;
        if with_correction {
            rhs = &rhs + &uw.eval(z)?;
        }
        let scale = lhs.frobenius_norm().max(rhs.frobenius_norm()).max(1.0);
        worst = worst.max((&lhs - &rhs).frobenius_norm() / scale);
    }
    Ok(worst)
}

/// Residual of the non-autonomous many-body deformation
/// `2πi dL/dtau = ∂_z(M + ν rho(z) 1) + [L, M]` with `dq/dtau = p` and
/// `dp/dtau = ν² Σ wp'`. The accompanying matrix needs the scalar completion
/// `ν rho(z) 1`: identity terms drop out of the commutator but not of the
/// `∂_z` part.
pub fn painleve_cm_residual(
    ctx: &EllipticContext,
    q: &[C64],
    p: &[C64],
    nu: C64,
    z_samples: &[C64],
) -> EResult<f64> {
    let m = q.len();
    let (l, mm) = cm_lax(ctx, q, p, nu)?;
    let pdot = cm_accelerations(ctx, q, nu)?;
    let h = ctx.fd_step();
    let mut worst: f64 = 0.0;
    for &z in z_samples {
        // Explicit tau-derivative of L by centered differences.
        let at = |tau: C64| -> EResult<CMat> {
            let ctx2 = ctx.with_tau(tau)?;
            let (l2, _) = cm_lax(&ctx2, q, p, nu)?;
            l2.eval(z)
        };
        let centered = |h: f64| -> EResult<CMat> {
            let re = (&at(ctx.tau() + h)? - &at(ctx.tau() - h)?).scale(c64(1.0 / (2.0 * h), 0.0));
            let im = (&at(ctx.tau() + c64(0.0, h))? - &at(ctx.tau() - c64(0.0, h))?)
                .scale(c64(1.0, 0.0) / c64(0.0, 2.0 * h));
            Ok((&re + &im).scale(c64(0.5, 0.0)))
        };
        let fine = centered(h / 2.0)?;
        let coarse = centered(h)?;
        let dtau = (&fine.scale(c64(4.0, 0.0)) - &coarse)
            .scale(c64(1.0 / 3.0, 0.0))
            .scale(two_pi_i());
        // Transport along the flow.
        let mut flow = CMat::zeros(m, m);
        for i in 0..m {
            flow[(i, i)] = pdot[i];
            for j in 0..m {
                if j != i {
                    flow[(i, j)] = nu * (p[i] - p[j]) * ctx.f(z, q[i] - q[j])?;
                }
            }
        }
        let lhs = &dtau + &flow;
        // ∂_z of the rho-completed M by centered differences.
        let m_hat = |zz: C64| -> EResult<CMat> {
            let base = mm.eval(zz)?;
            let scalar = nu * ctx.rho(zz)?;
            let mut out = base;
            for d in 0..m {
                out[(d, d)] += scalar;
            }
            Ok(out)
        };
        let dzm = (&m_hat(z + h)? - &m_hat(z - h)?).scale(c64(1.0 / (2.0 * h), 0.0));
        let rhs = &dzm + &l.eval(z)?.commutator(&mm.eval(z)?);
        let scale = lhs.frobenius_norm().max(rhs.frobenius_norm()).max(1.0);
        worst = worst.max((&lhs - &rhs).frobenius_norm() / scale);
    }
    Ok(worst)
}

/// Integrate the modulus deformation along a short path `tau + i s` with
/// non-autonomous RK4 (the vector field is the `H_0` flow scaled by
/// `N/(2πi) * dtau/ds`), and return the monodromy residual at each step.
pub fn tau_path_residuals(
    spec: &ModelSpec,
    state0: &PhaseState,
    steps: usize,
    ds: f64,
    z_samples: &[C64],
) -> EResult<Vec<f64>> {
    let n = spec.n_inner as f64;
    let dtau_ds = c64(0.0, 1.0);
    let field = |sigma: f64, st: &PhaseState| -> EResult<PhaseTangent> {
        let mut sp = spec.clone();
        sp.tau = spec.tau + dtau_ds * sigma;
        let v = eom_h0(&sp, st)?;
        // dX/ds = dtau/ds * (N / 2πi) V.
        let w = dtau_ds * n / two_pi_i();
        let mut out = v.scale(0.0);
        out = out.add(&v);
        let mut scaled = PhaseTangent::zero(&sp);
        for (x, y) in scaled.qdot.iter_mut().zip(&out.qdot) {
            *x = w * y;
        }
        for (x, y) in scaled.pdot.iter_mut().zip(&out.pdot) {
            *x = w * y;
        }
        for (ga, gb) in scaled.sdot.iter_mut().zip(&out.sdot) {
            for (ra, rb) in ga.iter_mut().zip(gb) {
                for (ba, bbk) in ra.iter_mut().zip(rb) {
                    *ba = bbk.scale(w);
                }
            }
        }
        Ok(scaled)
    };
    let mut st = state0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    let mut spec_now = spec.clone();
    out.push(monodromy_residual_tau(
        &spec_now, &st, z_samples, false, false,
    )?);
    for step in 0..steps {
        let s0 = step as f64 * ds;
        let k1 = field(s0, &st)?;
        let k2 = field(s0 + ds / 2.0, &st.advanced(&k1, ds / 2.0))?;
        let k3 = field(s0 + ds / 2.0, &st.advanced(&k2, ds / 2.0))?;
        let k4 = field(s0 + ds, &st.advanced(&k3, ds))?;
        let incr = k1.add(&k4).add(&k2.scale(2.0)).add(&k3.scale(2.0));
        st = st.advanced(&incr, ds / 6.0);
        spec_now.tau = spec.tau + dtau_ds * ((step + 1) as f64 * ds);
        out.push(monodromy_residual_tau(
            &spec_now, &st, z_samples, false, false,
        )?);
    }
    Ok(out)
}
