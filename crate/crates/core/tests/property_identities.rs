//! Property-based checks of the mathematical invariants: addition theorems,
//! quasi-periodicity, basis algebra and coefficient transforms hold on
//! arbitrary admissible inputs, not just the seeded sample sets.

use gaudin_core::elliptic::{identities, EllipticContext};
use gaudin_core::linalg::CMat;
use gaudin_core::torus::{kappa, wrap_sign, TorusBasis};
use gaudin_core::{c64, C64};
use proptest::prelude::*;

fn ctx() -> EllipticContext {
    EllipticContext::new(c64(0.0, 1.0)).unwrap()
}

/// Strategy for a point in the fundamental cell, expressed by its lattice
/// coordinates.
fn cell_coords() -> impl Strategy<Value = (f64, f64)> {
    (0.08f64..0.92, 0.08f64..0.92)
}

fn to_point(ctx: &EllipticContext, xy: (f64, f64)) -> C64 {
    c64(xy.0, 0.0) + ctx.tau() * xy.1
}

fn admissible(ctx: &EllipticContext, pts: &[C64]) -> bool {
    let mut all = Vec::new();
    for (i, &a) in pts.iter().enumerate() {
        all.push(a);
        for &b in pts.iter().skip(i + 1) {
            all.push(a - b);
            all.push(a + b);
        }
    }
    all.iter().all(|w| ctx.lattice_distance(*w) > 0.05)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fay_identity(a in cell_coords(), b in cell_coords(), c in cell_coords(), d in cell_coords()) {
        let ctx = ctx();
        let (z1, u1, z2, u2) = (
            to_point(&ctx, a),
            to_point(&ctx, b),
            to_point(&ctx, c),
            to_point(&ctx, d),
        );
        prop_assume!(admissible(&ctx, &[z1, u1, z2, u2]));
        let r = identities::fay(&ctx, z1, u1, z2, u2).unwrap();
        prop_assert!(r < 1e-10, "fay residual {r}");
    }

    #[test]
    fn kronecker_function_symmetry(a in cell_coords(), b in cell_coords()) {
        let ctx = ctx();
        let (z, u) = (to_point(&ctx, a), to_point(&ctx, b));
        prop_assume!(admissible(&ctx, &[z, u]));
        let phi = ctx.phi(z, u).unwrap();
        let swapped = ctx.phi(u, z).unwrap();
        prop_assert!((phi - swapped).norm() < 1e-11 * phi.norm().max(1.0));
        let negated = ctx.phi(-z, -u).unwrap();
        prop_assert!((negated + phi).norm() < 1e-11 * phi.norm().max(1.0));
    }

    #[test]
    fn quasi_periodicity(a in cell_coords(), b in cell_coords()) {
        let ctx = ctx();
        let (z, u) = (to_point(&ctx, a), to_point(&ctx, b));
        prop_assume!(admissible(&ctx, &[z, u]));
        let rs = identities::quasi_periodicity(&ctx, z, u).unwrap();
        for r in rs {
            prop_assert!(r < 1e-10, "quasi-periodicity residual {r}");
        }
    }

    #[test]
    fn kappa_pairing_properties(
        n in 1usize..=4,
        a1 in -6i64..6, a2 in -6i64..6,
        b1 in -6i64..6, b2 in -6i64..6,
    ) {
        let alpha = (a1, a2);
        let beta = (b1, b2);
        let sum = (a1 + b1, a2 + b2);
        prop_assert!((kappa(n, alpha, alpha) - c64(1.0, 0.0)).norm() < 1e-14);
        prop_assert!((kappa(n, alpha, sum) - kappa(n, alpha, beta)).norm() < 1e-14);
        prop_assert!(
            (kappa(n, (-a1, -a2), beta) - kappa(n, beta, alpha)).norm() < 1e-14
        );
        // kappa weights close the basis product in Z².
        let basis = TorusBasis::new(n);
        let lhs = basis.t(alpha).matmul(&basis.t(beta));
        let rhs = basis.t(sum).scale(kappa(n, alpha, beta));
        prop_assert!((&lhs - &rhs).max_abs() < 1e-12);
    }

    #[test]
    fn wrap_sign_relates_shifted_indices(
        n in 1usize..=4,
        g1 in -6i64..6, g2 in -6i64..6,
    ) {
        let basis = TorusBasis::new(n);
        let gamma = (g1, g2);
        let reduced = (g1.rem_euclid(n as i64) as usize, g2.rem_euclid(n as i64) as usize);
        let expect = basis.t_rep(reduced.0, reduced.1).scale(c64(wrap_sign(n, gamma), 0.0));
        prop_assert!((&basis.t(gamma) - &expect).max_abs() < 1e-13);
    }

    #[test]
    fn coefficient_transform_roundtrip(
        n in 1usize..=4,
        entries in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
    ) {
        let basis = TorusBasis::new(n);
        let a = CMat::from_fn(n, n, |i, j| {
            let (re, im) = entries[(i * n + j) % entries.len()];
            c64(re, im)
        });
        let coeffs = basis.to_coeffs(&a);
        let back = basis.from_coeffs(&coeffs);
        prop_assert!((&a - &back).max_abs() < 1e-12);
        // The zero coefficient is the normalized trace.
        prop_assert!((coeffs[0] - a.trace() / n as f64).norm() < 1e-12);
    }

    #[test]
    fn twisted_functions_invariant_under_index_shifts(
        a in cell_coords(), b in cell_coords(),
        n in 2usize..=3,
        g1 in 0i64..3, g2 in 0i64..3,
        m1 in -2i64..=2, m2 in -2i64..=2,
    ) {
        let ctx = ctx();
        let (z, u0) = (to_point(&ctx, a), to_point(&ctx, b));
        let u = u0 / 3.0;
        let g = (g1 % n as i64, g2 % n as i64);
        let shifted = (g.0 + m1 * n as i64, g.1 + m2 * n as i64);
        prop_assume!(ctx.lattice_distance(z) > 0.05);
        let w = ctx.omega_raw(n, g) + u;
        prop_assume!(ctx.lattice_distance(w) > 0.04 && ctx.lattice_distance(z + w) > 0.04);
        let base = ctx.phi_alpha_raw(n, g, z, u).unwrap();
        let moved = ctx.phi_alpha_raw(n, shifted, z, u).unwrap();
        prop_assert!((base - moved).norm() < 1e-10 * base.norm().max(1.0));
    }
}
