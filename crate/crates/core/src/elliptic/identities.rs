//! The addition theorem of the Kronecker function and its degenerations,
//! quasi-periodicity relations, twisted-basis addition formulae and the
//! finite Fourier transform, each exposed as a pointwise residual.
//!
//! Residuals are normalized by the largest term entering the identity, so a
//! value of order machine epsilon times a modest condition number indicates
//! the identity holds.

use super::{EllipticContext, Result};
use crate::torus::kappa;
use crate::{two_pi_i, C64};

fn rel(diff: C64, scale: f64) -> f64 {
    diff.norm() / scale.max(1.0)
}

/// Genus-one Fay identity:
/// `phi(z1,u1) phi(z2,u2) = phi(z1,u1+u2) phi(z2-z1,u2) + phi(z2,u1+u2) phi(z1-z2,u1)`.
pub fn fay(ctx: &EllipticContext, z1: C64, u1: C64, z2: C64, u2: C64) -> Result<f64> {
    let lhs = ctx.phi(z1, u1)? * ctx.phi(z2, u2)?;
    let t1 = ctx.phi(z1, u1 + u2)? * ctx.phi(z2 - z1, u2)?;
    let t2 = ctx.phi(z2, u1 + u2)? * ctx.phi(z1 - z2, u1)?;
    Ok(rel(lhs - t1 - t2, lhs.norm().max(t1.norm()).max(t2.norm())))
}

/// Derivative exchange:
/// `f(z1,u1) phi(z2,u2) - phi(z1,u1) f(z2,u2) = phi(z2,u1+u2) f(z1-z2,u1) - phi(z1,u1+u2) f(z2-z1,u2)`.
pub fn derivative_exchange(
    ctx: &EllipticContext,
    z1: C64,
    u1: C64,
    z2: C64,
    u2: C64,
) -> Result<f64> {
    let lhs = ctx.f(z1, u1)? * ctx.phi(z2, u2)? - ctx.phi(z1, u1)? * ctx.f(z2, u2)?;
    let t1 = ctx.phi(z2, u1 + u2)? * ctx.f(z1 - z2, u1)?;
    let t2 = ctx.phi(z1, u1 + u2)? * ctx.f(z2 - z1, u2)?;
    Ok(rel(lhs - t1 + t2, lhs.norm().max(t1.norm()).max(t2.norm())))
}

/// Same-point derivative exchange:
/// `f(z,u1) phi(z,u2) - phi(z,u1) f(z,u2) = phi(z,u1+u2)(E2(u2) - E2(u1))`.
pub fn same_point_exchange(ctx: &EllipticContext, z: C64, u1: C64, u2: C64) -> Result<f64> {
    let lhs = ctx.f(z, u1)? * ctx.phi(z, u2)? - ctx.phi(z, u1)? * ctx.f(z, u2)?;
    let rhs = ctx.phi(z, u1 + u2)? * (ctx.e2(u2)? - ctx.e2(u1)?);
    Ok(rel(lhs - rhs, lhs.norm().max(rhs.norm())))
}

/// `phi(z,u) phi(z,-u) = E2(z) - E2(u) = wp(z) - wp(u)`.
pub fn phi_product(ctx: &EllipticContext, z: C64, u: C64) -> Result<f64> {
    let lhs = ctx.phi(z, u)? * ctx.phi(z, -u)?;
    let rhs = ctx.e2(z)? - ctx.e2(u)?;
    let rhs2 = ctx.wp(z)? - ctx.wp(u)?;
    let r1 = rel(lhs - rhs, lhs.norm().max(rhs.norm()));
    let r2 = rel(lhs - rhs2, lhs.norm().max(rhs2.norm()));
    Ok(r1.max(r2))
}

/// Second-argument addition:
/// `phi(z,u1) phi(z,u2) = phi(z,u1+u2)(E1(z) + E1(u1) + E1(u2) - E1(z+u1+u2))`.
pub fn second_argument_addition(ctx: &EllipticContext, z: C64, u1: C64, u2: C64) -> Result<f64> {
    let lhs = ctx.phi(z, u1)? * ctx.phi(z, u2)?;
    let rhs =
        ctx.phi(z, u1 + u2)? * (ctx.e1(z)? + ctx.e1(u1)? + ctx.e1(u2)? - ctx.e1(z + u1 + u2)?);
    Ok(rel(lhs - rhs, lhs.norm().max(rhs.norm())))
}

/// First-argument addition:
/// `phi(z1,u) phi(z2,u) = phi(z1+z2,u)(E1(z1) + E1(z2)) - f(z1+z2,u)`.
pub fn first_argument_addition(ctx: &EllipticContext, z1: C64, z2: C64, u: C64) -> Result<f64> {
    let lhs = ctx.phi(z1, u)? * ctx.phi(z2, u)?;
    let t1 = ctx.phi(z1 + z2, u)? * (ctx.e1(z1)? + ctx.e1(z2)?);
    let t2 = ctx.f(z1 + z2, u)?;
    Ok(rel(lhs - t1 + t2, lhs.norm().max(t1.norm()).max(t2.norm())))
}

/// Two-point rho relation:
/// `phi(z1,u) rho(z2) - E1(z2) f(z1,u) + phi(z2,u) f(z1-z2,u) - phi(z1,u) rho(z2-z1) = -f'(z1,u)/2`
/// (the derivative term enters with a minus sign; the opposite sign fails at
/// order one).
pub fn rho_two_point(ctx: &EllipticContext, z1: C64, z2: C64, u: C64) -> Result<f64> {
    let t1 = ctx.phi(z1, u)? * ctx.rho(z2)?;
    let t2 = ctx.e1(z2)? * ctx.f(z1, u)?;
    let t3 = ctx.phi(z2, u)? * ctx.f(z1 - z2, u)?;
    let t4 = ctx.phi(z1, u)? * ctx.rho(z2 - z1)?;
    let rhs = -ctx.f_prime(z1, u)? / 2.0;
    let scale = [t1, t2, t3, t4, rhs]
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max);
    Ok(rel(t1 - t2 + t3 - t4 - rhs, scale))
}

/// `(E1(u+v) - E1(u) - E1(v))² = wp(u+v) + wp(u) + wp(v)`.
pub fn e1_square_sum(ctx: &EllipticContext, u: C64, v: C64) -> Result<f64> {
    let s = ctx.e1(u + v)? - ctx.e1(u)? - ctx.e1(v)?;
    let lhs = s * s;
    let rhs = ctx.wp(u + v)? + ctx.wp(u)? + ctx.wp(v)?;
    Ok(rel(lhs - rhs, lhs.norm().max(rhs.norm())))
}

/// One-point rho relation:
/// `phi(z,u) rho(z) - E1(z) f(z,u) - phi(z,u) wp(u) = -f'(z,u)/2`
/// (same sign convention as [`rho_two_point`], to which it degenerates at
/// coinciding first arguments).
pub fn rho_one_point(ctx: &EllipticContext, z: C64, u: C64) -> Result<f64> {
    let t1 = ctx.phi(z, u)? * ctx.rho(z)?;
    let t2 = ctx.e1(z)? * ctx.f(z, u)?;
    let t3 = ctx.phi(z, u)? * ctx.wp(u)?;
    let rhs = -ctx.f_prime(z, u)? / 2.0;
    let scale = [t1, t2, t3, rhs]
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max);
    Ok(rel(t1 - t2 - t3 - rhs, scale))
}

/// The eight quasi-periodicity relations for E1, E2, phi and f on the period
/// lattice, returned in a fixed order:
/// `[E1+1, E1+tau, E2+1, E2+tau, phi+1, phi+tau, f+1, f+tau]`.
pub fn quasi_periodicity(ctx: &EllipticContext, z: C64, u: C64) -> Result<[f64; 8]> {
    let t = ctx.tau();
    let tpi = two_pi_i();
    let e1 = ctx.e1(z)?;
    let e2 = ctx.e2(z)?;
    let phi = ctx.phi(z, u)?;
    let f = ctx.f(z, u)?;
    let bloch = (-tpi * u).exp();
    Ok([
        rel(ctx.e1(z + 1.0)? - e1, e1.norm()),
        rel(ctx.e1(z + t)? - (e1 - tpi), e1.norm()),
        rel(ctx.e2(z + 1.0)? - e2, e2.norm()),
        rel(ctx.e2(z + t)? - e2, e2.norm()),
        rel(ctx.phi(z + 1.0, u)? - phi, phi.norm()),
        rel(ctx.phi(z + t, u)? - bloch * phi, phi.norm()),
        rel(ctx.f(z + 1.0, u)? - f, f.norm()),
        rel(
            ctx.f(z + t, u)? - bloch * (f - tpi * phi),
            f.norm().max(phi.norm()),
        ),
    ])
}

/// Fay-type addition formula for the twisted basis functions. Index sums are
/// taken in Z² (the functions are invariant under shifts of the index by N).
pub fn basis_addition(
    ctx: &EllipticContext,
    n: usize,
    alpha: (i64, i64),
    beta: (i64, i64),
    z1: C64,
    z2: C64,
    u1: C64,
    u2: C64,
) -> Result<f64> {
    let ab = (alpha.0 + beta.0, alpha.1 + beta.1);
    let lhs = ctx.phi_alpha_raw(n, alpha, z1, u1)? * ctx.phi_alpha_raw(n, beta, z2, u2)?;
    let t1 = ctx.phi_alpha_raw(n, alpha, z1 - z2, u1)? * ctx.phi_alpha_raw(n, ab, z2, u1 + u2)?;
    let t2 = ctx.phi_alpha_raw(n, beta, z2 - z1, u2)? * ctx.phi_alpha_raw(n, ab, z1, u1 + u2)?;
    Ok(rel(lhs - t1 - t2, lhs.norm().max(t1.norm()).max(t2.norm())))
}

/// Same-z addition formula for the twisted basis (the Eisenstein form).
pub fn basis_addition_e1(
    ctx: &EllipticContext,
    n: usize,
    alpha: (i64, i64),
    beta: (i64, i64),
    z: C64,
    u1: C64,
    u2: C64,
) -> Result<f64> {
    let ab = (alpha.0 + beta.0, alpha.1 + beta.1);
    let wa = ctx.omega_raw(n, alpha) + u1;
    let wb = ctx.omega_raw(n, beta) + u2;
    let lhs = ctx.phi_alpha_raw(n, alpha, z, u1)? * ctx.phi_alpha_raw(n, beta, z, u2)?;
    let rhs = ctx.phi_alpha_raw(n, ab, z, u1 + u2)?
        * (ctx.e1(z)? + ctx.e1(wa)? + ctx.e1(wb)? - ctx.e1(z + wa + wb)?);
    Ok(rel(lhs - rhs, lhs.norm().max(rhs.norm())))
}

/// Same-index addition formula:
/// `phi_a(z1, w) phi_a(z2, w) = phi_a(z1+z2, w)(E1(z1)+E1(z2)) - f_a(z1+z2, w)`.
pub fn basis_addition_same_index(
    ctx: &EllipticContext,
    n: usize,
    alpha: (i64, i64),
    z1: C64,
    z2: C64,
    u: C64,
) -> Result<f64> {
    let lhs = ctx.phi_alpha_raw(n, alpha, z1, u)? * ctx.phi_alpha_raw(n, alpha, z2, u)?;
    let t1 = ctx.phi_alpha_raw(n, alpha, z1 + z2, u)? * (ctx.e1(z1)? + ctx.e1(z2)?);
    let t2 = ctx.f_alpha_raw(n, alpha, z1 + z2, u)?;
    Ok(rel(lhs - t1 + t2, lhs.norm().max(t1.norm()).max(t2.norm())))
}

/// Finite Fourier transform of the twisted basis:
/// `(1/N) Σ_α κ²_{α,β} phi_α(Nx, ω_α + z/N) = phi_β(z, ω_β + x)`.
pub fn fourier_transform(
    ctx: &EllipticContext,
    n: usize,
    beta: (i64, i64),
    x: C64,
    z: C64,
) -> Result<f64> {
    let nf = n as f64;
    let mut lhs = C64::new(0.0, 0.0);
    let mut scale = 0.0f64;
    for a1 in 0..n as i64 {
        for a2 in 0..n as i64 {
            let k = kappa(n, (a1, a2), beta);
            let term = k * k * ctx.phi_alpha_raw(n, (a1, a2), nf * x, z / nf)?;
            scale = scale.max(term.norm() / nf);
            lhs += term;
        }
    }
    lhs /= nf;
    let rhs = ctx.phi_alpha_raw(n, beta, z, x)?;
    Ok(rel(lhs - rhs, scale.max(rhs.norm())))
}

/// E2 special case of the Fourier transform: `Σ_α E2(ω_α + x) = N² E2(N x)`.
pub fn fourier_e2(ctx: &EllipticContext, n: usize, x: C64) -> Result<f64> {
    let nf = n as f64;
    let mut lhs = C64::new(0.0, 0.0);
    for a1 in 0..n as i64 {
        for a2 in 0..n as i64 {
            lhs += ctx.e2(ctx.omega_raw(n, (a1, a2)) + x)?;
        }
    }
    let rhs = nf * nf * ctx.e2(nf * x)?;
    Ok(rel(lhs - rhs, lhs.norm().max(rhs.norm())))
}

/// Derivative special case of the Fourier transform:
/// `Σ_{α≠0} κ²_{α,β} phi_α(x, ω_α)(E1(x+ω_α) - E1(x) + 2πi α₂/N) - E2(x) = -E2(ω_β + x/N)`.
/// The `-E2(x)` term is the regularized α = 0 summand.
pub fn fourier_derivative(
    ctx: &EllipticContext,
    n: usize,
    beta: (i64, i64),
    x: C64,
) -> Result<f64> {
    let nf = n as f64;
    let mut lhs = -ctx.e2(x)?;
    let mut scale = lhs.norm();
    for a1 in 0..n as i64 {
        for a2 in 0..n as i64 {
            if a1 == 0 && a2 == 0 {
                continue;
            }
            let w = ctx.omega_raw(n, (a1, a2));
            let k = kappa(n, (a1, a2), beta);
            let term = k
                * k
                * ctx.phi_alpha_raw(n, (a1, a2), x, C64::new(0.0, 0.0))?
                * (ctx.e1(x + w)? - ctx.e1(x)? + two_pi_i() * (a2 as f64) / nf);
            scale = scale.max(term.norm());
            lhs += term;
        }
    }
    let rhs = -ctx.e2(ctx.omega_raw(n, beta) + x / nf)?;
    Ok(rel(lhs - rhs, scale.max(rhs.norm())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;
    use crate::rng::Rng;

    fn contexts() -> Vec<EllipticContext> {
        vec![
            EllipticContext::new(c64(0.0, 1.0)).unwrap(),
            EllipticContext::new(c64(0.3, 0.8)).unwrap(),
        ]
    }

    /// Point in the cell interior, at least `margin` from the lattice.
    fn admissible(ctx: &EllipticContext, rng: &mut Rng, margin: f64) -> C64 {
        loop {
            let w = rng.in_cell(ctx.tau(), 0.08, 0.92);
            if ctx.lattice_distance(w) >= margin {
                return w;
            }
        }
    }

    fn admissible_tuple<const K: usize>(ctx: &EllipticContext, rng: &mut Rng) -> [C64; K] {
        'outer: loop {
            let mut pts = [c64(0.0, 0.0); K];
            for p in pts.iter_mut() {
                *p = admissible(ctx, rng, 0.05);
            }
            // Combinations entering the identities must stay off the lattice.
            for i in 0..K {
                for j in 0..K {
                    if i != j && ctx.lattice_distance(pts[i] - pts[j]) < 0.04 {
                        continue 'outer;
                    }
                    if ctx.lattice_distance(pts[i] + pts[j]) < 0.04 {
                        continue 'outer;
                    }
                }
            }
            let total: C64 = pts.iter().sum();
            if K > 2 && ctx.lattice_distance(total) < 0.04 {
                continue;
            }
            return pts;
        }
    }

    #[test]
    fn fay_identity_holds_on_random_points() {
        for ctx in contexts() {
            let mut rng = Rng::new(101);
            for _ in 0..120 {
                let [z1, u1, z2, u2] = admissible_tuple::<4>(&ctx, &mut rng);
                let r = fay(&ctx, z1, u1, z2, u2).unwrap();
                assert!(r < 1e-11, "fay residual {r}");
            }
        }
    }

    #[test]
    fn degenerations_hold_on_random_points() {
        for ctx in contexts() {
            let mut rng = Rng::new(202);
            for _ in 0..40 {
                let [z1, u1, z2, u2] = admissible_tuple::<4>(&ctx, &mut rng);
                assert!(derivative_exchange(&ctx, z1, u1, z2, u2).unwrap() < 1e-10);
                assert!(same_point_exchange(&ctx, z1, u1, u2).unwrap() < 1e-10);
                assert!(phi_product(&ctx, z1, u1).unwrap() < 1e-10);
                assert!(second_argument_addition(&ctx, z1, u1, u2).unwrap() < 1e-10);
                assert!(first_argument_addition(&ctx, z1, z2, u1).unwrap() < 1e-10);
                assert!(rho_two_point(&ctx, z1, z2, u1).unwrap() < 1e-10);
                assert!(e1_square_sum(&ctx, u1, u2).unwrap() < 1e-10);
                assert!(rho_one_point(&ctx, z1, u1).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn quasi_periodicity_table() {
        for ctx in contexts() {
            let mut rng = Rng::new(303);
            for _ in 0..40 {
                let [z, u] = admissible_tuple::<2>(&ctx, &mut rng);
                let rs = quasi_periodicity(&ctx, z, u).unwrap();
                for (i, r) in rs.iter().enumerate() {
                    assert!(*r < 1e-11, "quasi-periodicity relation {i}: residual {r}");
                }
            }
        }
    }

    #[test]
    fn basis_addition_formulas() {
        for ctx in contexts() {
            let mut rng = Rng::new(404);
            for n in [2usize, 3] {
                for _ in 0..25 {
                    let [z1, z2, u1, u2] = admissible_tuple::<4>(&ctx, &mut rng);
                    let pick = |rng: &mut Rng| {
                        (
                            (rng.next_u64() % n as u64) as i64,
                            (rng.next_u64() % n as u64) as i64,
                        )
                    };
                    let alpha = pick(&mut rng);
                    let beta = pick(&mut rng);
                    let r =
                        basis_addition(&ctx, n, alpha, beta, z1, z2, u1 / 3.0, u2 / 3.0).unwrap();
                    assert!(r < 1e-11, "basis addition residual {r} (N={n})");
                    let r =
                        basis_addition_e1(&ctx, n, alpha, beta, z1, u1 / 3.0, u2 / 3.0).unwrap();
                    assert!(r < 1e-10, "basis E1 addition residual {r} (N={n})");
                    let r = basis_addition_same_index(&ctx, n, alpha, z1, z2, u1 / 3.0).unwrap();
                    assert!(r < 1e-11, "same-index addition residual {r} (N={n})");
                }
            }
        }
    }

    #[test]
    fn fourier_transform_family() {
        for ctx in contexts() {
            let mut rng = Rng::new(505);
            for n in [2usize, 3] {
                for _ in 0..15 {
                    let [x, z] = admissible_tuple::<2>(&ctx, &mut rng);
                    // Keep N*x and the shifted arguments admissible.
                    let x = x / (n as f64 + 0.7);
                    for b1 in 0..n as i64 {
                        for b2 in 0..n as i64 {
                            let r = fourier_transform(&ctx, n, (b1, b2), x, z).unwrap();
                            assert!(r < 1e-10, "fourier residual {r} (N={n}, beta=({b1},{b2}))");
                            let r = fourier_derivative(&ctx, n, (b1, b2), x).unwrap();
                            assert!(r < 1e-10, "fourier derivative residual {r} (N={n})");
                        }
                    }
                    assert!(fourier_e2(&ctx, n, x).unwrap() < 1e-10);
                }
            }
        }
    }
}
