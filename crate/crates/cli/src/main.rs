//! Command-line front end: run verification suites, integrate flows and run
//! the degeneration cross-checks, emitting machine-readable reports and
//! plot-ready trajectories.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gaudin_core::lax::{integrate_flow, Trajectory};
use gaudin_core::report::Report;
use gaudin_core::suites::{self, RunConfig};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "gaudin",
    about = "Elliptic Lax pairs: verification and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites from a config and write a JSON report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's suite list (repeatable).
        #[arg(long = "suite")]
        suites: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed list (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
    },
    /// Integrate the configured Hamiltonian flow and dump the trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
    },
    /// Run the degeneration cross-checks only.
    Degenerate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse config {}", path.display()))?;
    cfg.validate()
        .map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
    Ok(cfg)
}

fn write_report(report: &Report, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json())?;
    Ok(path)
}

fn print_report(report: &Report) {
    for c in &report.checks {
        let status = if c.pass { "pass" } else { "FAIL" };
        println!(
            "[{status}] {suite}/{name}: residual {res:.3e} (tolerance {tol:.1e}, {ms:.0} ms)",
            suite = c.suite,
            name = c.name,
            res = c.max_residual,
            tol = c.tolerance,
            ms = c.wall_time_ms,
        );
    }
    let failures = report.failures().len();
    println!(
        "{} checks, {} failed, config {}",
        report.checks.len(),
        failures,
        report.manifest.config_hash
    );
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut header = vec!["t".to_string()];
    let m = traj.states[0].q.len();
    for i in 0..m {
        header.push(format!("q{i}_re"));
        header.push(format!("q{i}_im"));
    }
    for i in 0..m {
        header.push(format!("p{i}_re"));
        header.push(format!("p{i}_im"));
    }
    header.push("h0_re".into());
    header.push("h0_im".into());
    let first = &traj.conserved[0];
    for a in 0..first.h1.len() {
        header.push(format!("h1_{a}_re"));
        header.push(format!("h1_{a}_im"));
    }
    for (a, cas) in first.casimirs.iter().enumerate() {
        for k in 0..cas.len() {
            header.push(format!("casimir_{a}_{}_re", k + 1));
            header.push(format!("casimir_{a}_{}_im", k + 1));
        }
    }
    for k in 0..first.charpoly.len() {
        header.push(format!("charpoly_{k}_re"));
        header.push(format!("charpoly_{k}_im"));
    }
    for k in 0..first.trace_powers.len() {
        header.push(format!("trace_power_{}_re", k + 2));
        header.push(format!("trace_power_{}_im", k + 2));
    }
    let mut out = header.join(",");
    out.push_str("\r\n");
    for (idx, sample) in traj.conserved.iter().enumerate() {
        let st = &traj.states[idx];
        let mut row = vec![format!("{}", sample.t)];
        for q in &st.q {
            row.push(format!("{}", q.re));
            row.push(format!("{}", q.im));
        }
        for p in &st.p {
            row.push(format!("{}", p.re));
            row.push(format!("{}", p.im));
        }
        row.push(format!("{}", sample.h0.re));
        row.push(format!("{}", sample.h0.im));
        for v in &sample.h1 {
            row.push(format!("{}", v.re));
            row.push(format!("{}", v.im));
        }
        for cas in &sample.casimirs {
            for v in cas {
                row.push(format!("{}", v.re));
                row.push(format!("{}", v.im));
            }
        }
        for v in &sample.charpoly {
            row.push(format!("{}", v.re));
            row.push(format!("{}", v.im));
        }
        for v in &sample.trace_powers {
            row.push(format!("{}", v.re));
            row.push(format!("{}", v.im));
        }
        out.push_str(&row.join(","));
        out.push_str("\r\n");
    }
    out
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify {
            config,
            suites: suite_override,
            out,
            seeds,
        } => {
            let mut cfg = load_config(&config)?;
            if !suite_override.is_empty() {
                cfg.suites = suite_override;
            }
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if let Some(dir) = &out {
                cfg.output_dir = dir.display().to_string();
            }
            cfg.validate()
                .map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
            let report = suites::run_config(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            print_report(&report);
            let path = write_report(&report, Path::new(&cfg.output_dir))?;
            println!("report written to {}", path.display());
            if !report.all_pass() {
                std::process::exit(1);
            }
        }
        Command::Simulate { config, out, seeds } => {
            let mut cfg = load_config(&config)?;
            if !seeds.is_empty() {
                cfg.seeds = seeds;
            }
            if let Some(dir) = &out {
                cfg.output_dir = dir.display().to_string();
            }
            let Some(flow) = cfg.flow.clone() else {
                bail!("config has no flow section; add {{\"which\": \"h0\", \"t_end\": ..., \"dt\": ...}}");
            };
            let spec = cfg.model_spec().map_err(|e| anyhow::anyhow!("{e}"))?;
            let seed = cfg.seeds.first().copied().unwrap_or(7);
            let state = suites::flow_test_state(&spec, seed).map_err(|e| anyhow::anyhow!("{e}"))?;
            let kind = flow.kind().map_err(|e| anyhow::anyhow!("{e}"))?;
            let traj = integrate_flow(&spec, &state, kind, flow.t_end, flow.dt, 20)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let (dh0, dh1, dcas, dcp) = traj.drifts();
            let dir = Path::new(&cfg.output_dir);
            fs::create_dir_all(dir)?;
            fs::write(dir.join("trajectory.csv"), trajectory_csv(&traj))?;
            let states_json = serde_json::json!({
                "times": traj.times,
                "states": traj.states,
            });
            fs::write(
                dir.join("trajectory.json"),
                serde_json::to_string_pretty(&states_json)?,
            )?;
            let summary = serde_json::json!({
                "H0_drift": dh0,
                "H1_drifts": dh1,
                "casimir_drifts": dcas,
                "specpoly_drifts": dcp,
                "trace_power_drifts": traj.trace_power_drift(),
                "steps": ((flow.t_end / flow.dt).round() as u64),
                "seed": seed,
            });
            fs::write(
                dir.join("summary.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            println!(
                "integrated {} steps; drifts: H0 {dh0:.3e}, H1 {dh1:.3e}, casimirs {dcas:.3e}, spectral {dcp:.3e}",
                (flow.t_end / flow.dt).round()
            );
            println!(
                "trajectory written to {}",
                dir.join("trajectory.csv").display()
            );
        }
        Command::Degenerate { config, out } => {
            let mut cfg = load_config(&config)?;
            cfg.suites = vec!["degenerations".into()];
            if let Some(dir) = &out {
                cfg.output_dir = dir.display().to_string();
            }
            let report = suites::run_config(&cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            print_report(&report);
            let path = write_report(&report, Path::new(&cfg.output_dir))?;
            println!("report written to {}", path.display());
            if !report.all_pass() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
