//! Acceptance gate: every criterion the library promises, run end to end at
//! its stated tolerance, one pass/fail line per criterion.
//!
//! The criteria run sequentially inside a single test so the stated runtime
//! bounds are measured without interference.

use gaudin_core::c64;
use gaudin_core::report::CheckResult;
use gaudin_core::suites::{
    self, degenerations_suite, elliptic_suite, flows_suite, general_lax_suite, rmatrix_suite,
    schlesinger_suite, torus_suite, EllipticConfig, ModelConfig, RunConfig,
};
use std::time::Instant;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Gate {
            failures: Vec::new(),
        }
    }

    fn criterion(&mut self, number: u32, label: &str, ok: bool, detail: String) {
        let status = if ok { "PASS" } else { "FAIL" };
        println!("criterion {number:2} [{status}] {label}: {detail}");
        if !ok {
            self.failures
                .push(format!("criterion {number}: {label} ({detail})"));
        }
    }
}

fn taus() -> [num_complex::Complex64; 2] {
    [c64(0.0, 1.0), c64(0.3, 0.8)]
}

fn worst(checks: &[CheckResult]) -> f64 {
    checks.iter().map(|c| c.max_residual).fold(0.0, f64::max)
}

fn all_pass(checks: &[CheckResult]) -> bool {
    checks.iter().all(|c| c.pass)
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();

    // 1. Elliptic identity battery at both moduli, 100 points per identity.
    {
        let started = Instant::now();
        let mut checks = Vec::new();
        for tau in taus() {
            checks.extend(elliptic_suite(tau, 100, 1).expect("elliptic suite runs"));
        }
        let elapsed = started.elapsed().as_secs_f64();
        let algebraic: Vec<&CheckResult> = checks
            .iter()
            .filter(|c| c.name != "heat-equation")
            .collect();
        let worst_algebraic = algebraic.iter().map(|c| c.max_residual).fold(0.0, f64::max);
        let ok = checks.iter().all(|c| c.pass) && worst_algebraic < 1e-10 && elapsed < 10.0;
        gate.criterion(
            1,
            "elliptic identities",
            ok,
            format!(
                "{} checks, worst algebraic residual {worst_algebraic:.2e}, {elapsed:.1} s",
                checks.len()
            ),
        );
    }

    // 2. Torus basis relations, exhaustive for N = 1..4.
    {
        let started = Instant::now();
        let checks = torus_suite();
        let elapsed = started.elapsed().as_secs_f64();
        let ok = all_pass(&checks) && worst(&checks) < 1e-12 && elapsed < 1.0;
        gate.criterion(
            2,
            "torus basis",
            ok,
            format!(
                "{} checks, worst residual {:.2e}, {elapsed:.2} s",
                checks.len(),
                worst(&checks)
            ),
        );
    }

    // 3-5. General model: Lax equations with corrections, bracket oracle,
    // Hamiltonian cross-checks.
    {
        let started = Instant::now();
        let checks = general_lax_suite(c64(0.0, 1.0), &[1, 2, 3, 4, 5]).expect("lax suite runs");
        let elapsed = started.elapsed().as_secs_f64();
        let lax_checks: Vec<&CheckResult> = checks
            .iter()
            .filter(|c| c.name.starts_with("lax-equation-"))
            .collect();
        let ok = lax_checks.iter().all(|c| c.pass && c.max_residual < 1e-9)
            && lax_checks.len() == 8
            && elapsed < 30.0;
        let w = lax_checks
            .iter()
            .map(|c| c.max_residual)
            .fold(0.0, f64::max);
        gate.criterion(
            3,
            "Lax equations with corrections, 2 sizes x 5 seeds x 10 samples",
            ok,
            format!("worst residual {w:.2e}, {elapsed:.1} s"),
        );

        let oracle: Vec<&CheckResult> = checks
            .iter()
            .filter(|c| c.name.contains("bracket-oracle"))
            .collect();
        let w = oracle.iter().map(|c| c.max_residual).fold(0.0, f64::max);
        gate.criterion(
            4,
            "equations of motion match the bracket oracle",
            oracle.len() == 2 && oracle.iter().all(|c| c.pass && c.max_residual < 1e-9),
            format!("worst deviation {w:.2e}"),
        );

        let two_routes = checks
            .iter()
            .find(|c| c.name == "hamiltonians-two-routes")
            .unwrap();
        let sum_rule = checks
            .iter()
            .find(|c| c.name == "residue-hamiltonian-sum")
            .unwrap();
        gate.criterion(
            5,
            "Hamiltonian cross-check and residue sum rule",
            two_routes.pass
                && two_routes.max_residual < 1e-8
                && sum_rule.pass
                && sum_rule.max_residual < 1e-10,
            format!(
                "two-route residual {:.2e}, sum residual {:.2e}",
                two_routes.max_residual, sum_rule.max_residual
            ),
        );

        // The remaining structural checks of the suite must pass as well.
        assert!(
            all_pass(&checks),
            "general-lax suite failures: {:?}",
            checks.iter().filter(|c| !c.pass).collect::<Vec<_>>()
        );
    }

    // 6. Flow conservation at dt = 1e-3 over t in [0, 1], halving gain >= 10.
    {
        let checks = flows_suite(c64(0.0, 1.0), 1.0, 1e-3).expect("flows suite runs");
        let drifts: Vec<&CheckResult> =
            checks.iter().filter(|c| c.name.contains("drift")).collect();
        let gain = checks
            .iter()
            .find(|c| c.name == "flow-step-halving-gain")
            .unwrap();
        let w = drifts.iter().map(|c| c.max_residual).fold(0.0, f64::max);
        gate.criterion(
            6,
            "conserved-quantity drift along the RK4 flow",
            all_pass(&checks) && drifts.iter().all(|c| c.max_residual < 1e-8),
            format!(
                "worst drift {w:.2e}, halving gain {:.1}x",
                gain.max_residual
            ),
        );
    }

    // 7. The seven degeneration arrows at both moduli.
    {
        let mut ok = true;
        let mut w: f64 = 0.0;
        let mut count = 0;
        for tau in taus() {
            let checks = degenerations_suite(tau, 11).expect("degenerations run");
            count += checks.len();
            ok &= all_pass(&checks) && worst(&checks) < 1e-11;
            w = w.max(worst(&checks));
        }
        gate.criterion(
            7,
            "classification-scheme equivalences",
            ok && count == 14,
            format!("{count} arrows, worst entrywise deviation {w:.2e}"),
        );
    }

    // 8. Kernel identities and the kernel-form dynamics at N in {2, 3}.
    {
        let mut ok = true;
        let mut w: f64 = 0.0;
        for tau in taus() {
            let checks = rmatrix_suite(tau, 7).expect("rmatrix suite runs");
            ok &= all_pass(&checks) && worst(&checks) < 1e-9;
            w = w.max(worst(&checks));
        }
        gate.criterion(
            8,
            "quadratic/classical kernel identities and kernel-form dynamics",
            ok,
            format!("worst residual {w:.2e}"),
        );
    }

    // 9. Heat equations and monodromy preservation, with the negative
    // control showing the z-derivative term is load-bearing.
    {
        let checks = schlesinger_suite(c64(0.0, 1.0), 3).expect("schlesinger suite runs");
        let control = checks.iter().find(|c| c.name.contains("ablation")).unwrap();
        let stencil: Vec<&CheckResult> = checks
            .iter()
            .filter(|c| c.name.starts_with("heat") || c.name.contains("monodromy"))
            .collect();
        gate.criterion(
            9,
            "heat equations and monodromy preservation",
            all_pass(&checks) && !stencil.is_empty(),
            format!(
                "{} checks, ablation control residual {:.2e} (must exceed {:.0e})",
                checks.len(),
                control.max_residual,
                control.tolerance
            ),
        );
    }

    // 10. Determinism of the full verification pipeline.
    {
        let cfg = RunConfig {
            model: ModelConfig {
                n_inner: 2,
                m_blocks: 2,
                n_poles: 2,
                tau: [0.0, 1.0],
                marked_points: None,
            },
            elliptic: EllipticConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            suites: suites::SUITE_NAMES.iter().map(|s| s.to_string()).collect(),
            flow: Some(suites::FlowConfig {
                which: "h0".into(),
                t_end: 0.1,
                dt: 1e-3,
            }),
            output_dir: "out".into(),
        };
        let a = suites::run_config(&cfg).expect("first run");
        let b = suites::run_config(&cfg).expect("second run");
        let same = a.without_timings().to_json() == b.without_timings().to_json();
        gate.criterion(
            10,
            "byte-identical reports modulo wall time",
            same && a.all_pass(),
            format!(
                "{} checks compared, all pass: {}",
                a.checks.len(),
                a.all_pass()
            ),
        );
    }

    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
