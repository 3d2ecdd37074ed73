//! Subcommand bodies. Each writes human-readable output to `out`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use samcmc::oracle::{exact_omega, jacobian, mean_field, noise_covariance, theta_star};

use crate::config::{load_config, load_config_unchecked, ExperimentConfig, Mode};
use crate::output::{write_report, write_run_outputs};
use crate::replicate::{run_and_summarize, run_replications, HarnessError, RunSummary};

fn io(out: std::io::Result<()>) -> Result<(), HarnessError> {
    out.map_err(|source| HarnessError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn require(cfg: &ExperimentConfig, command: &'static str, expected: Mode) -> Result<(), HarnessError> {
    if cfg.mode == expected {
        Ok(())
    } else {
        Err(HarnessError::Mode {
            command,
            expected,
            got: cfg.mode,
        })
    }
}

/// Prints every schedule clause; `Ok(true)` iff all pass.
pub fn validate(path: &Path, out: &mut impl Write) -> Result<bool, HarnessError> {
    let cfg = load_config_unchecked(path)?;
    let report = cfg.validation();
    io(writeln!(out, "{report}"))?;
    Ok(report.all_passed())
}

/// Output directory of replication `r`: the configured directory itself for
/// single runs, `rep_NNN` below it otherwise.
pub fn replication_dir(cfg: &ExperimentConfig, r: usize) -> PathBuf {
    if cfg.replications == 1 {
        cfg.output_dir.clone()
    } else {
        cfg.output_dir.join(format!("rep_{r:03}"))
    }
}

fn run_mode(path: &Path, command: &'static str, mode: Mode, out: &mut impl Write) -> Result<Vec<RunSummary>, HarnessError> {
    let cfg = load_config(path)?;
    require(&cfg, command, mode)?;
    let mut summaries = Vec::with_capacity(cfg.replications);
    for r in 0..cfg.replications {
        let seed = cfg.replication_seed(r);
        let (trace, summary) = run_and_summarize(&cfg, seed)?;
        let dir = replication_dir(&cfg, r);
        write_run_outputs(&trace.snapshots, &summary, &dir)?;
        io(writeln!(
            out,
            "seed {seed}: θ̄ = {:?}, θ̄(k0={}) = {:?}, truncations = {}, output in {}",
            summary.theta_bar,
            summary.k0,
            summary.theta_bar_burnin,
            summary.truncations,
            dir.display()
        ))?;
        if let Some(w) = &summary.omega_hat {
            io(writeln!(out, "  ω̂ = {w:?}"))?;
        }
        summaries.push(summary);
    }
    Ok(summaries)
}

pub fn run_samc(path: &Path, out: &mut impl Write) -> Result<Vec<RunSummary>, HarnessError> {
    run_mode(path, "run-samc", Mode::Samc, out)
}

pub fn run_samle(path: &Path, out: &mut impl Write) -> Result<Vec<RunSummary>, HarnessError> {
    run_mode(path, "run-samle", Mode::Samle, out)
}

fn write_matrix(out: &mut impl Write, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "{name} =")?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
        writeln!(out, "  [{}]", cells.join(" "))?;
    }
    Ok(())
}

/// Prints ω, θ*, h(0), F(θ*), Q and Γ for the configured chain.
pub fn oracle(path: &Path, out: &mut impl Write) -> Result<(), HarnessError> {
    let cfg = load_config_unchecked(path)?;
    let chain = &cfg.chain;
    let omega = exact_omega(chain);
    let star = theta_star(&omega, chain.pi())?;
    let h0 = mean_field(&vec![0.0; star.len()], &omega, chain.pi());
    let f = jacobian(&star, &omega, chain.pi());
    let noise = noise_covariance(chain, &star)?;
    io((|| {
        writeln!(out, "ω  = {omega:?}")?;
        writeln!(out, "θ* = {star:?}")?;
        writeln!(out, "h(0) = {:?}", h0.as_slice())?;
        write_matrix(out, "F(θ*)", &f)?;
        write_matrix(out, "Q", &noise.q_matrix)?;
        write_matrix(out, "Γ", &noise.gamma)?;
        writeln!(out, "Poisson residual = {:e}", noise.residual)
    })())
}

pub fn efficiency(path: &Path, out: &mut impl Write) -> Result<crate::EfficiencyReport, HarnessError> {
    let cfg = load_config(path)?;
    let report = run_replications(&cfg)?;
    let file = write_report(&report, &cfg.output_dir)?;
    io((|| {
        writeln!(
            out,
            "R = {}, k = {}, k0 = {}: ‖Σ̂ − Γ‖_F/‖Γ‖_F = {:.4}",
            report.replications, report.k, report.k0, report.frobenius_rel_err
        )?;
        let tr = |m: &[Vec<f64>]| (0..m.len()).map(|i| m[i][i]).sum::<f64>();
        writeln!(
            out,
            "trace: averaged {:.4}, last iterate {:.4}, oracle {:.4}",
            tr(&report.empirical_cov),
            tr(&report.last_iterate_cov),
            tr(&report.oracle_gamma)
        )?;
        writeln!(out, "report written to {}", file.display())
    })())?;
    Ok(report)
}
