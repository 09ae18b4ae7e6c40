//! Named verification suites behind the command-line front end and the
//! acceptance gate: each suite runs a battery of identity checks and
//! returns one [`CheckResult`] per identity.

use crate::elliptic::{identities, EllipticContext, EllipticError};
use crate::lax::{
    self, build_lax, eom_h0, eom_h1a, hamiltonians, hamiltonians_via_trace, lax_residual_h0,
    lax_residual_h1a, quasi_periodicity_residual, sample_spectral_points, FlowKind,
};
use crate::linalg::CMat;
use crate::models;
use crate::report::{fnv1a64, CheckResult, Report};
use crate::rmatrix::{self, BaxterBelavin};
use crate::rng::Rng;
use crate::schlesinger;
use crate::state::{
    bracket_flow, constraint_constant, project_to_constraint, random_state, shift_to_zero_constant,
    ModelSpec,
};
use crate::torus::{kappa, TorusBasis};
use crate::{c64, C64};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;

pub const SUITE_NAMES: [&str; 8] = [
    "elliptic-identities",
    "torus-basis",
    "general-lax",
    "special-models",
    "rmatrix",
    "schlesinger",
    "degenerations",
    "flows",
];

/// Full run configuration, JSON-serializable with complex numbers as
/// `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub elliptic: EllipticConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub suites: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub n_inner: usize,
    pub m_blocks: usize,
    pub n_poles: usize,
    pub tau: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marked_points: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EllipticConfig {
    #[serde(default = "default_trunc")]
    pub trunc: usize,
    #[serde(default = "default_pole_eps")]
    pub pole_eps: f64,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig {
            trunc: default_trunc(),
            pole_eps: default_pole_eps(),
            fd_step: default_fd_step(),
        }
    }
}

fn default_trunc() -> usize {
    crate::elliptic::DEFAULT_TRUNC
}
fn default_pole_eps() -> f64 {
    crate::elliptic::DEFAULT_POLE_EPS
}
fn default_fd_step() -> f64 {
    crate::elliptic::DEFAULT_FD_STEP
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FlowConfig {
    /// `"h0"` or `"h1a:<index>"`.
    pub which: String,
    pub t_end: f64,
    pub dt: f64,
}

impl FlowConfig {
    pub fn kind(&self) -> Result<FlowKind, EllipticError> {
        if self.which == "h0" {
            return Ok(FlowKind::H0);
        }
        if let Some(rest) = self.which.strip_prefix("h1a:") {
            if let Ok(a) = rest.parse::<usize>() {
                return Ok(FlowKind::H1a(a));
            }
        }
        Err(EllipticError::Invalid(format!(
            "unknown flow '{}'; expected 'h0' or 'h1a:<index>'",
            self.which
        )))
    }
}

impl RunConfig {
    pub fn model_spec(&self) -> Result<ModelSpec, EllipticError> {
        let tau = c64(self.model.tau[0], self.model.tau[1]);
        match &self.model.marked_points {
            Some(points) => ModelSpec::new(
                self.model.n_inner,
                self.model.m_blocks,
                self.model.n_poles,
                points.iter().map(|p| c64(p[0], p[1])).collect(),
                tau,
            ),
            None => {
                let spec = ModelSpec::desk(
                    self.model.n_inner,
                    self.model.m_blocks,
                    self.model.n_poles,
                    tau,
                );
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn validate(&self) -> Result<(), EllipticError> {
        for s in &self.suites {
            if !SUITE_NAMES.contains(&s.as_str()) {
                return Err(EllipticError::Invalid(format!(
                    "unknown suite '{s}'; expected one of {SUITE_NAMES:?}"
                )));
            }
        }
        self.model_spec()?;
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }
}

fn timed(checks: &mut Vec<CheckResult>, mut check: CheckResult, started: Instant) {
    check.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    checks.push(check);
}

/// Admissible random point in the fundamental cell.
fn cell_point(ctx: &EllipticContext, rng: &mut Rng, margin: f64) -> C64 {
    loop {
        let w = rng.in_cell(ctx.tau(), 0.06, 0.94);
        if ctx.lattice_distance(w) >= margin {
            return w;
        }
    }
}

fn tuple_points<const K: usize>(ctx: &EllipticContext, rng: &mut Rng) -> [C64; K] {
    'outer: loop {
        let mut pts = [c64(0.0, 0.0); K];
        for p in pts.iter_mut() {
            *p = cell_point(ctx, rng, 0.05);
        }
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
        return pts;
    }
}

// -- elliptic identities -----------------------------------------------------

pub fn elliptic_suite(
    tau: C64,
    points: usize,
    seed: u64,
) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "elliptic-identities";
    let ctx = EllipticContext::new(tau)?;
    let params = json!({"tau": [tau.re, tau.im], "points": points});
    let mut checks = Vec::new();
    let mut rng = Rng::new(seed);

    macro_rules! sampled {
        ($name:expr, $anchor:expr, $tol:expr, $body:expr) => {{
            let started = Instant::now();
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                let r: f64 = $body(&ctx, &mut rng)?;
                worst = worst.max(r);
            }
            timed(
                &mut checks,
                CheckResult::new(suite, $name, $anchor, params.clone(), worst, $tol),
                started,
            );
        }};
    }

    sampled!(
        "fay-identity",
        "Fay",
        1e-11,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z1, u1, z2, u2] = tuple_points::<4>(ctx, rng);
            identities::fay(ctx, z1, u1, z2, u2)
        }
    );
    sampled!(
        "derivative-exchange",
        "derdif",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z1, u1, z2, u2] = tuple_points::<4>(ctx, rng);
            identities::derivative_exchange(ctx, z1, u1, z2, u2)
        }
    );
    sampled!(
        "same-point-exchange",
        "a974",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z, u1, u2] = tuple_points::<3>(ctx, rng);
            identities::same_point_exchange(ctx, z, u1, u2)
        }
    );
    sampled!(
        "phi-product",
        "diffsign",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z, u] = tuple_points::<2>(ctx, rng);
            identities::phi_product(ctx, z, u)
        }
    );
    sampled!(
        "second-argument-addition",
        "a975",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z, u1, u2] = tuple_points::<3>(ctx, rng);
            identities::second_argument_addition(ctx, z, u1, u2)
        }
    );
    sampled!(
        "first-argument-addition",
        "a976",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z1, z2, u] = tuple_points::<3>(ctx, rng);
            identities::first_argument_addition(ctx, z1, z2, u)
        }
    );
    sampled!(
        "rho-two-point",
        "sigma1",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z1, z2, u] = tuple_points::<3>(ctx, rng);
            identities::rho_two_point(ctx, z1, z2, u)
        }
    );
    sampled!(
        "eisenstein-square-sum",
        "Ep",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [u, v] = tuple_points::<2>(ctx, rng);
            identities::e1_square_sum(ctx, u, v)
        }
    );
    sampled!(
        "rho-one-point",
        "sigma2",
        1e-10,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z, u] = tuple_points::<2>(ctx, rng);
            identities::rho_one_point(ctx, z, u)
        }
    );
    sampled!(
        "quasi-periodicity",
        "percond",
        1e-11,
        |ctx: &EllipticContext, rng: &mut Rng| {
            let [z, u] = tuple_points::<2>(ctx, rng);
            let rs = identities::quasi_periodicity(ctx, z, u)?;
            Ok::<f64, EllipticError>(rs.iter().cloned().fold(0.0, f64::max))
        }
    );
    sampled!(
        "eisenstein-parity",
        "serE",
        1e-11,
        |ctx: &EllipticContext, rng: &mut Rng| {
            // Observed parity: E1 is odd (and E2 even).
            let [z] = tuple_points::<1>(ctx, rng);
            let odd = (ctx.e1(-z)? + ctx.e1(z)?).norm() / ctx.e1(z)?.norm().max(1.0);
            let even = (ctx.e2(-z)? - ctx.e2(z)?).norm() / ctx.e2(z)?.norm().max(1.0);
            Ok::<f64, EllipticError>(odd.max(even))
        }
    );
    for n in [2usize, 3] {
        let label_phi = format!("basis-addition-n{n}");
        let label_e1 = format!("basis-addition-eisenstein-n{n}");
        let label_same = format!("basis-addition-same-index-n{n}");
        sampled!(
            &label_phi,
            "formulaPhi",
            1e-11,
            |ctx: &EllipticContext, rng: &mut Rng| {
                let [z1, z2, u1, u2] = tuple_points::<4>(ctx, rng);
                let alpha = (
                    (rng.next_u64() % n as u64) as i64,
                    (rng.next_u64() % n as u64) as i64,
                );
                let beta = (
                    (rng.next_u64() % n as u64) as i64,
                    (rng.next_u64() % n as u64) as i64,
                );
                identities::basis_addition(ctx, n, alpha, beta, z1, z2, u1 / 3.0, u2 / 3.0)
            }
        );
        sampled!(
            &label_e1,
            "formulaE",
            1e-10,
            |ctx: &EllipticContext, rng: &mut Rng| {
                let [z, u1, u2] = tuple_points::<3>(ctx, rng);
                let alpha = (
                    (rng.next_u64() % n as u64) as i64,
                    (rng.next_u64() % n as u64) as i64,
                );
                let beta = (
                    (rng.next_u64() % n as u64) as i64,
                    (rng.next_u64() % n as u64) as i64,
                );
                identities::basis_addition_e1(ctx, n, alpha, beta, z, u1 / 3.0, u2 / 3.0)
            }
        );
        sampled!(
            &label_same,
            "formulaEf",
            1e-11,
            |ctx: &EllipticContext, rng: &mut Rng| {
                let [z1, z2, u] = tuple_points::<4>(ctx, rng)[0..3].try_into().unwrap();
                let alpha = (
                    (rng.next_u64() % n as u64) as i64,
                    (rng.next_u64() % n as u64) as i64,
                );
                identities::basis_addition_same_index(ctx, n, alpha, z1, z2, u / 3.0)
            }
        );
        let label_f = format!("fourier-transform-n{n}");
        let label_e2 = format!("fourier-eisenstein-n{n}");
        let label_d = format!("fourier-derivative-n{n}");
        sampled!(
            &label_f,
            "w33",
            1e-10,
            |ctx: &EllipticContext, rng: &mut Rng| {
                let [x0, z] = tuple_points::<2>(ctx, rng);
                let x = x0 / (n as f64 + 0.7);
                let mut worst: f64 = 0.0;
                for b1 in 0..n as i64 {
                    for b2 in 0..n as i64 {
                        worst = worst.max(identities::fourier_transform(ctx, n, (b1, b2), x, z)?);
                    }
                }
                Ok::<f64, EllipticError>(worst)
            }
        );
        sampled!(
            &label_e2,
            "w33",
            1e-10,
            |ctx: &EllipticContext, rng: &mut Rng| {
                let [x0] = tuple_points::<1>(ctx, rng);
                identities::fourier_e2(ctx, n, x0 / (n as f64 + 0.7))
            }
        );
        sampled!(
            &label_d,
            "w33",
            1e-10,
            |ctx: &EllipticContext, rng: &mut Rng| {
                let [x0] = tuple_points::<1>(ctx, rng);
                let x = x0 / (n as f64 + 0.7);
                let mut worst: f64 = 0.0;
                for b1 in 0..n as i64 {
                    for b2 in 0..n as i64 {
                        worst = worst.max(identities::fourier_derivative(ctx, n, (b1, b2), x)?);
                    }
                }
                Ok::<f64, EllipticError>(worst)
            }
        );
    }
    // Heat equation, stencil-limited: sample the moderate subcell.
    {
        let started = Instant::now();
        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < points.min(50) {
            let z = rng.in_cell(tau, 0.1, 0.6);
            let u = rng.in_cell(tau, 0.1, 0.6);
            if ctx.lattice_distance(z) < 0.12
                || ctx.lattice_distance(u) < 0.12
                || ctx.lattice_distance(z + u) < 0.12
            {
                continue;
            }
            worst = worst.max(ctx.heat_residual_phi(z, u)?);
            done += 1;
        }
        timed(
            &mut checks,
            CheckResult::new(suite, "heat-equation", "a142", params.clone(), worst, 1e-5),
            started,
        );
    }
    Ok(checks)
}

// -- torus basis ---------------------------------------------------------------

pub fn torus_suite() -> Vec<CheckResult> {
    let suite = "torus-basis";
    let mut checks = Vec::new();
    for n in 1..=4usize {
        let params = json!({"n": n});
        let basis = TorusBasis::new(n);
        let started = Instant::now();
        let mut t0 = (basis.t_rep(0, 0) - &CMat::identity(n)).max_abs();
        let q = basis.t((1, 0));
        let l = basis.t((0, 1));
        t0 = t0
            .max((&q.pow(n) - &CMat::identity(n)).max_abs())
            .max((&l.pow(n) - &CMat::identity(n)).max_abs());
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("generators-n{n}"),
                "a971",
                params.clone(),
                t0,
                1e-12,
            ),
            started,
        );

        let started = Instant::now();
        let mut prod: f64 = 0.0;
        let mut tr: f64 = 0.0;
        let mut comm: f64 = 0.0;
        let mut sym: f64 = 0.0;
        for a in basis.indices() {
            let tr_aa = basis.t(a).matmul(&basis.t((-a.0, -a.1))).trace();
            tr = tr.max((tr_aa - c64(n as f64, 0.0)).norm());
            for b in basis.indices() {
                let lhs = basis.t(a).matmul(&basis.t(b));
                let rhs = basis.t((a.0 + b.0, a.1 + b.1)).scale(kappa(n, a, b));
                prod = prod.max((&lhs - &rhs).max_abs());
                let lhs = basis.t(a).commutator(&basis.t(b));
                let coeff = kappa(n, a, b) - kappa(n, b, a);
                let rhs = basis.t((a.0 + b.0, a.1 + b.1)).scale(coeff);
                comm = comm.max((&lhs - &rhs).max_abs());
                if (a.0 + b.0) % n as i64 != 0 || (a.1 + b.1) % n as i64 != 0 {
                    tr = tr.max(basis.t(a).matmul(&basis.t(b)).trace().norm());
                }
                let apb = (a.0 + b.0, a.1 + b.1);
                sym = sym.max((kappa(n, a, apb) - kappa(n, a, b)).norm());
                sym = sym.max((kappa(n, (-a.0, -a.1), b) - kappa(n, b, a)).norm());
            }
        }
        let started2 = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("product-rule-n{n}"),
                "Tcond",
                params.clone(),
                prod,
                1e-12,
            ),
            started,
        );
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("trace-pairing-n{n}"),
                "TrT",
                params.clone(),
                tr,
                1e-12,
            ),
            started2,
        );
        let started = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("commutator-rule-n{n}"),
                "braketsT",
                params.clone(),
                comm,
                1e-12,
            ),
            started,
        );
        let started = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("kappa-symmetry-n{n}"),
                "Tcond",
                params.clone(),
                sym,
                1e-12,
            ),
            started,
        );

        let started = Instant::now();
        let p = basis.permutation_operator();
        let mut perm = (&p.matmul(&p) - &CMat::identity(n * n)).max_abs();
        let a = CMat::from_fn(n, n, |i, j| c64(0.3 * i as f64 - 0.2, 0.7 * j as f64));
        let b = CMat::from_fn(n, n, |i, j| c64(0.1 + (i * j) as f64, -0.4 * i as f64));
        perm = perm.max((&p.matmul(&a.kron(&b)).matmul(&p) - &b.kron(&a)).max_abs());
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("permutation-n{n}"),
                "serRx",
                params.clone(),
                perm,
                1e-12,
            ),
            started,
        );

        let started = Instant::now();
        let coeffs = basis.to_coeffs(&a);
        let round = (&basis.from_coeffs(&coeffs) - &a).max_abs();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("coefficient-roundtrip-n{n}"),
                "TrT",
                params.clone(),
                round,
                1e-12,
            ),
            started,
        );
    }
    checks
}

// -- general Lax ---------------------------------------------------------------

pub fn general_lax_suite(tau: C64, seeds: &[u64]) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "general-lax";
    let mut checks = Vec::new();
    for (m_blocks, label) in [(2usize, "(2,2,2)"), (3usize, "(2,3,2)")] {
        let spec = ModelSpec::desk(2, m_blocks, 2, tau);
        let params =
            json!({"n": 2, "m": m_blocks, "poles": 2, "seeds": seeds, "tau": [tau.re, tau.im]});
        let mut generic_h0: f64 = 0.0;
        let mut pure_h0: f64 = 0.0;
        let mut generic_h1: f64 = 0.0;
        let mut pure_h1: f64 = 0.0;
        let started = Instant::now();
        for &seed in seeds {
            let zs = sample_spectral_points(&spec, seed ^ 0xabc, 10)?;
            let st = random_state(&spec, seed, false, false)?;
            generic_h0 = generic_h0.max(lax_residual_h0(&spec, &st, &zs, true)?);
            let mut stc = st.clone();
            project_to_constraint(&spec, &mut stc);
            pure_h0 = pure_h0.max(lax_residual_h0(&spec, &stc, &zs, false)?);
            for a in 0..2 {
                generic_h1 = generic_h1.max(lax_residual_h1a(&spec, &st, a, &zs, true)?);
                pure_h1 = pure_h1.max(lax_residual_h1a(&spec, &stc, a, &zs, false)?);
            }
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("lax-equation-h0-generic-{label}"),
                "nonLax",
                params.clone(),
                generic_h0,
                1e-9,
            ),
            started,
        );
        let t = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("lax-equation-h0-constrained-{label}"),
                "nonLax",
                params.clone(),
                pure_h0,
                1e-9,
            ),
            t,
        );
        let t = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("lax-equation-h1a-generic-{label}"),
                "nonLaxh1a",
                params.clone(),
                generic_h1,
                1e-9,
            ),
            t,
        );
        let t = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &format!("lax-equation-h1a-constrained-{label}"),
                "nonLaxh1a",
                params.clone(),
                pure_h1,
                1e-9,
            ),
            t,
        );
    }

    // Equations of motion against the brute-force Poisson bracket.
    let spec = ModelSpec::desk(2, 2, 2, tau);
    let params = json!({"n": 2, "m": 2, "poles": 2, "tau": [tau.re, tau.im]});
    {
        let started = Instant::now();
        let st = random_state(&spec, seeds[0], false, false)?;
        let analytic = eom_h0(&spec, &st)?;
        let spec2 = spec.clone();
        let oracle = bracket_flow(&spec, &st, &move |s| {
            hamiltonians(&spec2, s).expect("admissible state").h0
        });
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "eom-h0-vs-bracket-oracle",
                "qp",
                params.clone(),
                analytic.rel_diff(&oracle),
                1e-9,
            ),
            started,
        );
        let started = Instant::now();
        let mut worst: f64 = 0.0;
        for a in 0..2 {
            let analytic = eom_h1a(&spec, &st, a)?;
            let spec2 = spec.clone();
            let oracle = bracket_flow(&spec, &st, &move |s| {
                hamiltonians(&spec2, s).expect("admissible state").h1[a]
            });
            worst = worst.max(analytic.rel_diff(&oracle));
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "eom-h1a-vs-bracket-oracle",
                "qpa",
                params.clone(),
                worst,
                1e-9,
            ),
            started,
        );
    }

    // Hamiltonian cross-checks.
    {
        let started = Instant::now();
        let mut worst: f64 = 0.0;
        for &seed in &seeds[..seeds.len().min(3)] {
            let st = random_state(&spec, seed, true, false)?;
            let direct = hamiltonians(&spec, &st)?;
            let via = hamiltonians_via_trace(&spec, &st)?;
            worst = worst.max((direct.h0 - via.h0).norm());
            for a in 0..2 {
                worst = worst.max((direct.h1[a] - via.h1[a]).norm());
                worst = worst.max((direct.h2[a] - via.h2[a]).norm());
            }
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "hamiltonians-two-routes",
                "a45",
                params.clone(),
                worst,
                1e-8,
            ),
            started,
        );

        let started = Instant::now();
        let mut st = random_state(&spec, seeds[0], true, false)?;
        shift_to_zero_constant(&spec, &mut st);
        let h = hamiltonians(&spec, &st)?;
        let total: C64 = h.h1.iter().sum();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "residue-hamiltonian-sum",
                "a49",
                params.clone(),
                total.norm(),
                1e-10,
            ),
            started,
        );

        let started = Instant::now();
        let st = random_state(&spec, seeds[0], true, false)?;
        let mut shifted = st.clone();
        shift_to_zero_constant(&spec, &mut shifted);
        let zs = sample_spectral_points(&spec, 77, 5)?;
        let r1 = lax_residual_h0(&spec, &st, &zs, true)?;
        let r2 = lax_residual_h0(&spec, &shifted, &zs, true)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "shift-covariance",
                "a491",
                params.clone(),
                (r1 - r2).abs(),
                1e-12,
            ),
            started,
        );

        let started = Instant::now();
        let st = random_state(&spec, seeds[0], false, false)?;
        let laxop = build_lax(&spec, &st)?;
        let mut worst: f64 = 0.0;
        for a in 0..2 {
            let (res, spread) = laxop.residue_probe(spec.marked_points[a], 0.01)?;
            worst = worst.max(spread);
            worst = worst.max((&res - &st.residue_block(&spec, a)).max_abs());
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "residue-recovery",
                "a423",
                params.clone(),
                worst,
                1e-8,
            ),
            started,
        );

        let started = Instant::now();
        let mut st = random_state(&spec, seeds[0], true, false)?;
        shift_to_zero_constant(&spec, &mut st);
        let (r1, rt) = quasi_periodicity_residual(&spec, &st, c64(0.41, 0.0) + tau * 0.27)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "lax-quasi-periodicity",
                "a421",
                params.clone(),
                r1.max(rt),
                1e-9,
            ),
            started,
        );
        // The constraint constant is indeed zero on the shifted state.
        let started = Instant::now();
        let c = constraint_constant(&spec, &st).norm();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "moment-map-zero-shift",
                "a48",
                params.clone(),
                c,
                1e-12,
            ),
            started,
        );
    }
    Ok(checks)
}

// -- special models --------------------------------------------------------------

pub fn special_models_suite(tau: C64, seed: u64) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "special-models";
    let ctx = EllipticContext::new(tau)?;
    let mut rng = Rng::new(seed);
    let mut checks = Vec::new();
    let params = json!({"tau": [tau.re, tau.im], "seed": seed});

    let positions = |rng: &mut Rng, m: usize| -> Vec<C64> {
        'outer: loop {
            let q: Vec<C64> = (0..m).map(|_| rng.in_cell(tau, 0.1, 0.9)).collect();
            for i in 0..m {
                for j in 0..m {
                    if i != j && ctx.lattice_distance(q[i] - q[j]) < 0.1 {
                        continue 'outer;
                    }
                }
            }
            return q;
        }
    };
    let zpoints = |rng: &mut Rng, count: usize, avoid: &[C64]| -> Vec<C64> {
        let mut out = Vec::new();
        while out.len() < count {
            let z = rng.in_cell(tau, 0.05, 0.95);
            if avoid.iter().all(|&za| ctx.lattice_distance(z - za) > 0.07) {
                out.push(z);
            }
        }
        out
    };

    // Spinless many-body system.
    {
        let started = Instant::now();
        let q = positions(&mut rng, 3);
        let p: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let zs = zpoints(&mut rng, 6, &[c64(0.0, 0.0)]);
        let r = models::cm_lax_residual(&ctx, &q, &p, c64(0.6, 0.3), &zs)?;
        timed(
            &mut checks,
            CheckResult::new(suite, "cm-lax-equation", "q0001", params.clone(), r, 1e-9),
            started,
        );
    }
    // Spin many-body system with and without the moment-map constraint.
    {
        let started = Instant::now();
        let q = positions(&mut rng, 3);
        let p: Vec<C64> = (0..3).map(|_| rng.complex_box(-1.0, 1.0)).collect();
        let s = CMat::from_fn(3, 3, |_, _| rng.complex_box(-1.0, 1.0));
        let zs = zpoints(&mut rng, 6, &[c64(0.0, 0.0)]);
        let r = models::spin_cm_lax_residual(&ctx, &q, &p, &s, &zs)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "spin-cm-lax-correction",
                "a35",
                params.clone(),
                r,
                1e-9,
            ),
            started,
        );
        let started = Instant::now();
        let mut s_eq = s.clone();
        let avg = (0..3).map(|i| s_eq[(i, i)]).sum::<C64>() / 3.0;
        for i in 0..3 {
            s_eq[(i, i)] = avg;
        }
        let r = models::spin_cm_lax_residual(&ctx, &q, &p, &s_eq, &zs)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "spin-cm-constrained",
                "q0003",
                params.clone(),
                r,
                1e-9,
            ),
            started,
        );
    }
    // Gaudin chain.
    {
        let started = Instant::now();
        let spec = ModelSpec::desk(2, 1, 2, tau);
        let st = random_state(&spec, seed ^ 0x9a, false, false)?;
        let model = models::GaudinModel {
            n_order: 2,
            marked_points: spec.marked_points.clone(),
            spins: (0..2).map(|a| st.spin(a, 0, 0).clone()).collect(),
        };
        let zs = zpoints(&mut rng, 5, &spec.marked_points);
        let mut r = models::gaudin_lax_residual(&ctx, &model, None, &zs)?;
        for a in 0..2 {
            r = r.max(models::gaudin_lax_residual(&ctx, &model, Some(a), &zs)?);
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "gaudin-lax-equations",
                "BigMac",
                params.clone(),
                r,
                1e-9,
            ),
            started,
        );
    }
    // Integrable top.
    {
        let started = Instant::now();
        let mut s = CMat::from_fn(3, 3, |_, _| rng.complex_box(-0.6, 0.6));
        let corr = CMat::identity(3).scale(s.trace() / 3.0);
        s = &s - &corr;
        let zs = zpoints(&mut rng, 5, &[c64(0.0, 0.0)]);
        let r = models::top_lax_residual(&ctx, 3, &s, &zs)?;
        timed(
            &mut checks,
            CheckResult::new(suite, "top-lax-equation", "McD1", params.clone(), r, 1e-9),
            started,
        );
    }
    // Multispin system.
    {
        let started = Instant::now();
        let spec = ModelSpec::desk(1, 3, 2, tau);
        let st = random_state(&spec, seed ^ 0x77, false, false)?;
        let mut model = models::MultispinModel {
            marked_points: spec.marked_points.clone(),
            q: st.q.clone(),
            p: st.p.clone(),
            spins: (0..2)
                .map(|a| CMat::from_fn(3, 3, |i, j| st.spin(a, i, j)[(0, 0)]))
                .collect(),
        };
        let zs = zpoints(&mut rng, 5, &spec.marked_points);
        let r = models::multispin_lax_residual_h0(&ctx, &model, &zs, true)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "multispin-lax-correction",
                "MSCMrest",
                params.clone(),
                r,
                1e-9,
            ),
            started,
        );
        let started = Instant::now();
        let excess = models::multispin_constraint_residual(&model);
        for (i, e) in excess.iter().enumerate() {
            let v = model.spins[1][(i, i)];
            model.spins[1][(i, i)] = v - e;
        }
        let r = models::multispin_lax_residual_h0(&ctx, &model, &zs, false)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "multispin-constrained",
                "MSCMrest",
                params.clone(),
                r,
                1e-9,
            ),
            started,
        );
    }
    // Rank-one reduction and interacting tops.
    {
        let started = Instant::now();
        let spec = ModelSpec {
            n_inner: 2,
            m_blocks: 2,
            n_poles: 1,
            marked_points: vec![c64(0.0, 0.0)],
            tau,
        };
        let st = random_state(&spec, seed ^ 0x33, false, true)?;
        let r = models::rank_one_identity_residual(2, &st.spins[0]);
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "rank-one-factorization",
                "r3",
                params.clone(),
                r,
                1e-11,
            ),
            started,
        );
        let started = Instant::now();
        let hm = models::mixed_hamiltonian(&ctx, 2, &st.q, &st.p, &st.spins[0])?;
        let ht = models::interacting_tops_hamiltonian(&ctx, 2, &st.q, &st.p, &st.spins[0])?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "interacting-tops-hamiltonian",
                "Hamburger",
                params.clone(),
                (hm - ht).norm(),
                1e-10,
            ),
            started,
        );
    }
    Ok(checks)
}

// -- R-matrix --------------------------------------------------------------------

pub fn rmatrix_suite(tau: C64, seed: u64) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "rmatrix";
    let ctx = EllipticContext::new(tau)?;
    let mut checks = Vec::new();

    for n in [2usize, 3] {
        let bb = BaxterBelavin::new(&ctx, n);
        let params = json!({"n": n, "tau": [tau.re, tau.im], "seed": seed});
        let mut rng = Rng::new(seed + n as u64);
        let nf = n as f64;
        let point = |rng: &mut Rng| -> C64 {
            loop {
                let w = rng.in_cell(tau, 0.08, 0.92);
                if ctx.lattice_distance(w) > 0.07 {
                    return w;
                }
            }
        };
        let admissible4 = |rng: &mut Rng| -> (C64, C64, C64, C64) {
            loop {
                let z = point(rng);
                let w = point(rng);
                let x = point(rng);
                let y = point(rng);
                let ok = [x + y, z - w]
                    .iter()
                    .all(|v| ctx.lattice_distance(*v) > 0.06)
                    && [z, w, z - w, w - z]
                        .iter()
                        .all(|v| ctx.lattice_distance(*v / nf) > 0.05);
                if ok {
                    return (z, w, x, y);
                }
            }
        };

        let mut aybe: f64 = 0.0;
        let mut qybe: f64 = 0.0;
        let mut fourier: f64 = 0.0;
        let mut skew: f64 = 0.0;
        let mut unit_shape: f64 = 0.0;
        let mut unit_value: f64 = 0.0;
        let started = Instant::now();
        for _ in 0..6 {
            let (z, w, x, y) = admissible4(&mut rng);
            aybe = aybe.max(rmatrix::aybe_residual(&bb, z, w, x, y)?);
            qybe = qybe.max(rmatrix::qybe_residual(&bb, z, x, y)?);
            fourier = fourier.max(rmatrix::fourier_residual(&bb, z, x)?);
            skew = skew.max(rmatrix::skew_residual(&bb, z, x)?);
            let (off, s) = rmatrix::unitarity_probe(&bb, z, x)?;
            unit_shape = unit_shape.max(off);
            let want = ctx.wp(z)? - ctx.wp(x)?;
            unit_value = unit_value.max((s - want).norm() / want.norm().max(1.0));
        }
        for (name, anchor, val) in [
            ("associative-yang-baxter", "AYB", aybe),
            ("quantum-yang-baxter", "qYB", qybe),
            ("fourier-symmetry", "w33", fourier),
            ("skew-symmetry", "serRz", skew),
            ("unitarity-scalar-shape", "unitarity", unit_shape),
            ("unitarity-weierstrass-value", "unitarity", unit_value),
        ] {
            let t = Instant::now();
            timed(
                &mut checks,
                CheckResult::new(
                    suite,
                    &format!("{name}-n{n}"),
                    anchor,
                    params.clone(),
                    val,
                    1e-9,
                ),
                if name == "associative-yang-baxter" {
                    started
                } else {
                    t
                },
            );
        }

        // Trace normalizations (documented readings).
        {
            let started = Instant::now();
            let (z, x) = (point(&mut rng), point(&mut rng));
            let tr_r = bb.eval(z, x)?.partial_trace_first(n, n);
            let want = ctx.phi(z / nf, x)?;
            let mut worst =
                (&tr_r - &CMat::identity(n).scale(want)).max_abs() / want.norm().max(1.0);
            let tr_cl = bb.r(x)?.partial_trace_first(n, n);
            worst = worst.max((&tr_cl - &CMat::identity(n).scale(ctx.e1(x)?)).max_abs());
            let tr_m = bb.m(x)?.partial_trace_first(n, n);
            worst = worst.max((&tr_m - &CMat::identity(n).scale(ctx.rho(x)? / nf)).max_abs());
            timed(
                &mut checks,
                CheckResult::new(
                    suite,
                    &format!("trace-normalizations-n{n}"),
                    "traceR",
                    params.clone(),
                    worst,
                    1e-9,
                ),
                started,
            );
        }
        // Series coefficient relations.
        {
            let started = Instant::now();
            let z = point(&mut rng);
            let p = bb.permutation();
            let (r0z, r1z) = bb.x_series(z)?;
            let mut worst = (&r0z - &bb.r(z)?.matmul(&p)).max_abs();
            worst = worst.max((&r1z - &bb.m(z)?.matmul(&p)).max_abs());
            let r0 = bb.r0()?;
            worst = worst.max((&r0 - &r0.matmul(&p)).max_abs());
            worst = worst.max((&bb.r1()? - &bb.m_at_zero()?.matmul(&p)).max_abs());
            timed(
                &mut checks,
                CheckResult::new(
                    suite,
                    &format!("series-coefficients-n{n}"),
                    "serRx",
                    params.clone(),
                    worst,
                    1e-9,
                ),
                started,
            );
        }
        // The nine degenerated identities.
        {
            let started = Instant::now();
            let mut worst: f64 = 0.0;
            let mut done = 0;
            while done < 3 {
                let z = point(&mut rng);
                let za = point(&mut rng);
                let zb = point(&mut rng);
                let x = point(&mut rng);
                let y = point(&mut rng);
                let ok = [z - za, z - zb, za - zb, x + y, c64(2.0, 0.0) * x]
                    .iter()
                    .all(|v| ctx.lattice_distance(*v) > 0.06)
                    && [z - za, z - zb, za - zb]
                        .iter()
                        .all(|v| ctx.lattice_distance(*v / nf) > 0.05);
                if !ok {
                    continue;
                }
                for (_, r) in rmatrix::identity_ladder(&bb, z, za, zb, x, y)? {
                    worst = worst.max(r);
                }
                done += 1;
            }
            timed(
                &mut checks,
                CheckResult::new(
                    suite,
                    &format!("degenerated-identity-ladder-n{n}"),
                    "CYB",
                    params.clone(),
                    worst,
                    1e-9,
                ),
                started,
            );
        }
    }

    // Agreement of the kernel-form dynamics with the twisted-function form.
    {
        let spec = ModelSpec::desk(2, 2, 2, tau);
        let bb = BaxterBelavin::new(&ctx, 2);
        let params = json!({"n": 2, "m": 2, "poles": 2, "tau": [tau.re, tau.im]});
        let st = random_state(&spec, seed ^ 0x51, false, false)?;
        let zs = sample_spectral_points(&spec, seed ^ 0x52, 5)?;

        let started = Instant::now();
        let l1 = build_lax(&spec, &st)?;
        let l2 = rmatrix::rlax_build(&spec, &st, &bb)?;
        let m01 = lax::build_m0(&spec, &st)?;
        let m02 = rmatrix::rlax_m0(&spec, &st, &bb)?;
        let mut worst: f64 = 0.0;
        for &z in &zs {
            worst = worst.max((&l1.eval(z)? - &l2.eval(z)?).max_abs());
            worst = worst.max((&m01.eval(z)? - &m02.eval(z)?).max_abs());
            for a in 0..2 {
                let m11 = lax::build_m1a(&spec, &st, a)?;
                let m12 = rmatrix::rlax_m1a(&spec, &st, &bb, a)?;
                worst = worst.max((&m11.eval(z)? - &m12.eval(z)?).max_abs());
            }
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "kernel-lax-agreement",
                "nerL",
                params.clone(),
                worst,
                1e-9,
            ),
            started,
        );

        let started = Instant::now();
        let h1 = hamiltonians(&spec, &st)?;
        let h2 = rmatrix::rlax_hamiltonians(&spec, &st, &bb)?;
        let mut worst = (h1.h0 - h2.h0).norm();
        for a in 0..2 {
            worst = worst.max((h1.h1[a] - h2.h1[a]).norm());
            worst = worst.max((h1.h2[a] - h2.h2[a]).norm());
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "kernel-hamiltonians-agreement",
                "RH0",
                params.clone(),
                worst,
                1e-9,
            ),
            started,
        );

        let started = Instant::now();
        let mut worst = eom_h0(&spec, &st)?.rel_diff(&rmatrix::rlax_eom_h0(&spec, &st, &bb)?);
        for a in 0..2 {
            worst = worst
                .max(eom_h1a(&spec, &st, a)?.rel_diff(&rmatrix::rlax_eom_h1a(&spec, &st, &bb, a)?));
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "kernel-eom-agreement",
                "eqmRS0",
                params.clone(),
                worst,
                1e-9,
            ),
            started,
        );

        let started = Instant::now();
        let r_h0 = rmatrix::rlax_residual(&spec, &st, &bb, None, &zs, true)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "kernel-lax-equation-h0",
                "nonLax22",
                params.clone(),
                r_h0,
                1e-9,
            ),
            started,
        );
        let started = Instant::now();
        let mut r_h1: f64 = 0.0;
        for a in 0..2 {
            r_h1 = r_h1.max(rmatrix::rlax_residual(&spec, &st, &bb, Some(a), &zs, true)?);
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "kernel-lax-equation-h1a",
                "nonLaxh1a22",
                params.clone(),
                r_h1,
                1e-9,
            ),
            started,
        );
        let started = Instant::now();
        let mut stc = st.clone();
        project_to_constraint(&spec, &mut stc);
        let mut pure = rmatrix::rlax_residual(&spec, &stc, &bb, None, &zs, false)?;
        pure = pure.max(rmatrix::rlax_residual(
            &spec,
            &stc,
            &bb,
            Some(1),
            &zs,
            false,
        )?);
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "kernel-lax-equation-constrained",
                "Rconstr",
                params.clone(),
                pure,
                1e-9,
            ),
            started,
        );
    }
    Ok(checks)
}

// -- Schlesinger -------------------------------------------------------------------

pub fn schlesinger_suite(tau: C64, seed: u64) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "schlesinger";
    let ctx = EllipticContext::new(tau)?;
    let mut checks = Vec::new();
    let params = json!({"tau": [tau.re, tau.im], "seed": seed});
    let mut rng = Rng::new(seed);

    // Heat equation for the Kronecker function: residual plus second-order
    // convergence of the stencils.
    {
        let started = Instant::now();
        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < 30 {
            let z = rng.in_cell(tau, 0.1, 0.6);
            let u = rng.in_cell(tau, 0.1, 0.6);
            if ctx.lattice_distance(z) < 0.12
                || ctx.lattice_distance(u) < 0.12
                || ctx.lattice_distance(z + u) < 0.12
            {
                continue;
            }
            worst = worst.max(ctx.heat_residual_phi(z, u)?);
            done += 1;
        }
        timed(
            &mut checks,
            CheckResult::new(suite, "heat-kronecker", "a142", params.clone(), worst, 1e-5),
            started,
        );

        let started = Instant::now();
        let coarse = EllipticContext::with_params(tau, ctx.trunc(), ctx.pole_eps(), 4e-2)?;
        let fine = EllipticContext::with_params(tau, ctx.trunc(), ctx.pole_eps(), 2e-2)?;
        let zi = c64(0.3, 0.0) + tau * 0.1;
        let ui = c64(0.21, 0.0) + tau * 0.15;
        let ratio = coarse.heat_residual_phi(zi, ui)? / fine.heat_residual_phi(zi, ui)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "heat-kronecker-stencil-order",
                "a142",
                params.clone(),
                (ratio - 4.0).abs(),
                2.0,
            ),
            started,
        );
    }
    // Heat equation for the kernel.
    {
        let started = Instant::now();
        let mut worst: f64 = 0.0;
        for n in [2usize, 3] {
            let bb = BaxterBelavin::new(&ctx, n);
            let z = c64(0.31, 0.0) + tau * 0.17;
            let u = c64(0.22, 0.0) + tau * 0.41;
            worst = worst.max(bb.heat_residual(z, u)?);
        }
        timed(
            &mut checks,
            CheckResult::new(suite, "heat-kernel", "a143", params.clone(), worst, 1e-5),
            started,
        );
    }
    // Monodromy preservation in the modulus.
    let spec = ModelSpec::desk(2, 2, 2, tau);
    {
        let started = Instant::now();
        let st = random_state(&spec, seed ^ 0x21, false, false)?;
        let zs = sample_spectral_points(&spec, seed ^ 0x22, 4)?;
        let r = schlesinger::monodromy_residual_tau(&spec, &st, &zs, true, false)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "monodromy-tau-generic",
                "nonLax7",
                params.clone(),
                r,
                1e-5,
            ),
            started,
        );
        let started = Instant::now();
        let mut stc = st.clone();
        project_to_constraint(&spec, &mut stc);
        let r = schlesinger::monodromy_residual_tau(&spec, &stc, &zs, false, false)?;
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "monodromy-tau-constrained",
                "nonLax7",
                params.clone(),
                r,
                1e-5,
            ),
            started,
        );
        let started = Instant::now();
        let r = schlesinger::monodromy_residual_tau(&spec, &stc, &zs, false, true)?;
        timed(
            &mut checks,
            CheckResult::negative_control(
                suite,
                "monodromy-tau-ablation-control",
                "a142",
                params.clone(),
                r,
                1e-2,
            ),
            started,
        );
        let started = Instant::now();
        let mut r: f64 = 0.0;
        for a in 0..2 {
            r = r.max(schlesinger::monodromy_residual_za(
                &spec, &st, a, &zs, true,
            )?);
            r = r.max(schlesinger::monodromy_residual_za(
                &spec, &stc, a, &zs, false,
            )?);
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "monodromy-marked-point",
                "nonLaxh1a7",
                params.clone(),
                r,
                1e-5,
            ),
            started,
        );
    }
    // Single-pole translation identity.
    {
        let started = Instant::now();
        let spec1 = ModelSpec {
            n_inner: 2,
            m_blocks: 2,
            n_poles: 1,
            marked_points: vec![c64(0.13, 0.0) + tau * 0.21],
            tau,
        };
        let st = random_state(&spec1, seed ^ 0x23, false, false)?;
        let dza = lax::build_lax_dza(&spec1, &st, 0)?;
        let dz = lax::build_lax_dz(&spec1, &st)?;
        let mut worst: f64 = 0.0;
        for &z in &sample_spectral_points(&spec1, seed ^ 0x24, 4)? {
            let a = dza.eval(z)?;
            let b = dz.eval(z)?;
            worst = worst.max((&a + &b).frobenius_norm() / b.frobenius_norm().max(1.0));
        }
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "single-pole-translation",
                "w451",
                params.clone(),
                worst,
                1e-9,
            ),
            started,
        );
    }
    // Non-autonomous many-body residual.
    {
        let started = Instant::now();
        let qs: Vec<C64> = loop {
            let cand: Vec<C64> = (0..2).map(|_| rng.in_cell(tau, 0.1, 0.9)).collect();
            if ctx.lattice_distance(cand[0] - cand[1]) > 0.12 {
                break cand;
            }
        };
        let ps: Vec<C64> = (0..2).map(|_| rng.complex_box(-0.7, 0.7)).collect();
        let zs: Vec<C64> = {
            let mut out = Vec::new();
            while out.len() < 3 {
                let z = rng.in_cell(tau, 0.1, 0.9);
                if ctx.lattice_distance(z) > 0.1 {
                    out.push(z);
                }
            }
            out
        };
        let r = schlesinger::painleve_cm_residual(&ctx, &qs, &ps, c64(0.6, 0.2), &zs)?;
        timed(
            &mut checks,
            CheckResult::new(suite, "painleve-many-body", "w45", params.clone(), r, 1e-5),
            started,
        );
    }
    // Short integrated modulus path.
    {
        let started = Instant::now();
        let mut st = random_state(&spec, seed ^ 0x29, false, false)?;
        for a in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    st.spins[a][i][j] = st.spins[a][i][j].scale(c64(0.5, 0.0));
                }
            }
        }
        project_to_constraint(&spec, &mut st);
        let zs = sample_spectral_points(&spec, seed ^ 0x2a, 3)?;
        let rs = schlesinger::tau_path_residuals(&spec, &st, 5, 1e-3, &zs)?;
        let worst = rs.iter().cloned().fold(0.0, f64::max);
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                "monodromy-along-tau-path",
                "nonLax7",
                params.clone(),
                worst,
                1e-5,
            ),
            started,
        );
    }
    Ok(checks)
}

// -- degenerations ------------------------------------------------------------------

pub fn degenerations_suite(tau: C64, seed: u64) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "degenerations";
    let mut checks = Vec::new();
    let started = Instant::now();
    let rs = models::degeneration_residuals(tau, seed, 5)?;
    for (name, r) in rs {
        let anchor = match name.as_str() {
            "general-to-gaudin" => "BigMac",
            "general-to-multispin" => "MSCMrest",
            "general-to-mixed" => "cheeseburger",
            "gaudin-to-top" => "McD0",
            "multispin-to-spin-cm" => "a24",
            "mixed-to-interacting-tops" => "Hamburger",
            "spin-cm-to-cm" => "a11",
            _ => "nerL",
        };
        let t = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(
                suite,
                &name,
                anchor,
                json!({"tau": [tau.re, tau.im], "seed": seed, "z_points": 5}),
                r,
                1e-11,
            ),
            if name == "general-to-gaudin" {
                started
            } else {
                t
            },
        );
    }
    Ok(checks)
}

// -- flows ---------------------------------------------------------------------------

/// The calibrated gentle state used by the conservation checks: moderate
/// spins and small momenta keep the RK4 truncation constant low while the
/// dynamics stays genuinely nonlinear.
pub fn flow_test_state(
    spec: &ModelSpec,
    seed: u64,
) -> Result<crate::state::PhaseState, EllipticError> {
    let mut st = random_state(spec, seed, false, false)?;
    for grid in st.spins.iter_mut() {
        for row in grid.iter_mut() {
            for blk in row.iter_mut() {
                *blk = blk.scale(c64(0.35, 0.0));
            }
        }
    }
    for p in st.p.iter_mut() {
        *p *= 0.1;
    }
    project_to_constraint(spec, &mut st);
    Ok(st)
}

pub fn flows_suite(tau: C64, t_end: f64, dt: f64) -> Result<Vec<CheckResult>, EllipticError> {
    let suite = "flows";
    let mut checks = Vec::new();
    let spec = ModelSpec::desk(2, 2, 2, tau);
    let params = json!({"tau": [tau.re, tau.im], "t_end": t_end, "dt": dt, "seed": 7});
    let st = flow_test_state(&spec, 7)?;

    let started = Instant::now();
    let traj = lax::integrate_flow(&spec, &st, FlowKind::H0, t_end, dt, 10)
        .map_err(|e| EllipticError::Invalid(e.to_string()))?;
    let (dh0, dh1, dcas, dcp) = traj.drifts();
    for (name, val) in [
        ("flow-h0-hamiltonian-drift", dh0),
        ("flow-h0-residue-hamiltonian-drift", dh1),
        ("flow-h0-casimir-drift", dcas),
        ("flow-h0-spectral-coefficient-drift", dcp),
        ("flow-h0-trace-power-drift", traj.trace_power_drift()),
    ] {
        let t = Instant::now();
        timed(
            &mut checks,
            CheckResult::new(suite, name, "a45", params.clone(), val, 1e-8),
            if name == "flow-h0-hamiltonian-drift" {
                started
            } else {
                t
            },
        );
    }

    // Halving the step gains at least a factor ten (fourth-order scheme).
    let started = Instant::now();
    let traj2 = lax::integrate_flow(&spec, &st, FlowKind::H0, t_end, dt / 2.0, 10)
        .map_err(|e| EllipticError::Invalid(e.to_string()))?;
    let (eh0, ..) = traj2.drifts();
    let gain = dh0 / eh0.max(1e-300);
    timed(
        &mut checks,
        CheckResult::negative_control(
            suite,
            "flow-step-halving-gain",
            "a45",
            params.clone(),
            gain,
            10.0,
        ),
        started,
    );

    // Involution evidence: conservation along a residue-Hamiltonian flow.
    let started = Instant::now();
    let traj3 = lax::integrate_flow(&spec, &st, FlowKind::H1a(0), 0.2, 1e-3, 4)
        .map_err(|e| EllipticError::Invalid(e.to_string()))?;
    let (ih0, ih1, icas, icp) = traj3.drifts();
    timed(
        &mut checks,
        CheckResult::new(
            suite,
            "flow-h1a-involution-drift",
            "a46",
            params.clone(),
            ih0.max(ih1).max(icas).max(icp),
            1e-8,
        ),
        started,
    );

    // Free motion is integrated exactly.
    let started = Instant::now();
    let zsp = crate::state::PhaseState::zero_spins(&spec, st.q.clone(), st.p.clone());
    let free = lax::integrate_flow(&spec, &zsp, FlowKind::H0, 0.25, 0.05, 5)
        .map_err(|e| EllipticError::Invalid(e.to_string()))?;
    let last = free.states.last().expect("trajectory has states");
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        worst = worst.max((last.q[i] - (zsp.q[i] + zsp.p[i] * 0.25)).norm());
        worst = worst.max((last.p[i] - zsp.p[i]).norm());
    }
    timed(
        &mut checks,
        CheckResult::new(
            suite,
            "flow-free-motion-exact",
            "qp",
            params.clone(),
            worst,
            1e-13,
        ),
        started,
    );
    Ok(checks)
}

/// Run the suites requested by a configuration and assemble the report.
pub fn run_config(cfg: &RunConfig) -> Result<Report, EllipticError> {
    cfg.validate()?;
    let tau = c64(cfg.model.tau[0], cfg.model.tau[1]);
    let seed = cfg.seeds.first().copied().unwrap_or(1);
    let mut checks = Vec::new();
    for name in &cfg.suites {
        match name.as_str() {
            "elliptic-identities" => checks.extend(elliptic_suite(tau, 100, seed)?),
            "torus-basis" => checks.extend(torus_suite()),
            "general-lax" => checks.extend(general_lax_suite(tau, &cfg.seeds)?),
            "special-models" => checks.extend(special_models_suite(tau, seed)?),
            "rmatrix" => checks.extend(rmatrix_suite(tau, seed)?),
            "schlesinger" => checks.extend(schlesinger_suite(tau, seed)?),
            "degenerations" => checks.extend(degenerations_suite(tau, seed)?),
            "flows" => {
                let (t_end, dt) = match &cfg.flow {
                    Some(f) => (f.t_end, f.dt),
                    None => (1.0, 1e-3),
                };
                checks.extend(flows_suite(tau, t_end, dt)?)
            }
            other => {
                return Err(EllipticError::Invalid(format!("unknown suite '{other}'")));
            }
        }
    }
    Ok(Report::new(cfg.hash(), checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_validation() {
        let cfg = RunConfig {
            model: ModelConfig {
                n_inner: 2,
                m_blocks: 2,
                n_poles: 2,
                tau: [0.0, 1.0],
                marked_points: None,
            },
            elliptic: EllipticConfig::default(),
            seeds: vec![1, 2],
            suites: vec!["torus-basis".into()],
            flow: None,
            output_dir: "out".into(),
        };
        let js = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(cfg, back);
        assert!(cfg.validate().is_ok());
        let mut bad = cfg.clone();
        bad.suites = vec!["no-such-suite".into()];
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("no-such-suite"), "{err}");
    }

    #[test]
    fn empty_suites_give_empty_report() {
        let cfg = RunConfig {
            model: ModelConfig {
                n_inner: 2,
                m_blocks: 2,
                n_poles: 2,
                tau: [0.0, 1.0],
                marked_points: None,
            },
            elliptic: EllipticConfig::default(),
            seeds: vec![1],
            suites: vec![],
            flow: None,
            output_dir: "out".into(),
        };
        let rep = run_config(&cfg).unwrap();
        assert!(rep.checks.is_empty());
        assert!(rep.all_pass());
    }

    #[test]
    fn torus_suite_is_exhaustive_and_passes() {
        let checks = torus_suite();
        assert!(checks.len() >= 6 * 4);
        assert!(
            checks.iter().all(|c| c.pass),
            "{:?}",
            checks.iter().find(|c| !c.pass)
        );
    }
}
