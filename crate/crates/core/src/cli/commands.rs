//! Subcommand bodies. Each returns its report as text so the binary and the
//! tests share one code path.

use std::fmt::Write as _;

use super::config::{MuMode, OperatingPoint, RunConfig};
use super::sweep::{format_value, run_sweep, SweepRow};
use crate::error::{Error, Result};
use crate::optimizer::{find_cutoff_loss, optimize_mu, CutoffResult, OptimizeResult};
use crate::protocol::{compare_to_model, run_simulation, Comparison, SimConfig, SimEstimates};
use crate::ratemodel::{secret_key_rate, RateBreakdown, SourceParams};

/// Smallest pulse count `validate` accepts.
pub const MIN_VALIDATE_PULSES: u64 = 100_000;

/// `validate` fails when any `|z|` exceeds this.
pub const VALIDATE_MAX_Z: f64 = 5.0;

fn describe(point: &OperatingPoint) -> String {
    match point {
        OperatingPoint::Distance { km } => format!("distance {km} km"),
        OperatingPoint::Loss { db, convention } => {
            format!("loss {db} dB ({})", convention.as_str())
        }
    }
}

fn row(out: &mut String, label: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{label:<22}{value}");
}

/// Mean photon number for single-point commands, optimized if requested.
fn resolve_mu(cfg: &RunConfig, eta: f64) -> Result<(f64, Option<OptimizeResult>)> {
    match cfg.mu_mode {
        MuMode::Fixed => Ok((cfg.source()?.mu(), None)),
        MuMode::Optimized => {
            let r = optimize_mu(eta, &cfg.detector()?, cfg.mu_range()?, cfg.mu_tol)?;
            Ok((r.mu_star, Some(r)))
        }
    }
}

pub fn keyrate(cfg: &RunConfig) -> Result<(RateBreakdown, String)> {
    let det = cfg.detector()?;
    let (point, eta) = cfg.operating_point()?;
    let (mu, optimized) = resolve_mu(cfg, eta)?;
    let r = secret_key_rate(SourceParams::new(mu)?, eta, &det)?;

    let mut out = String::new();
    row(&mut out, "point", describe(&point));
    row(&mut out, "mu_mode", cfg.mu_mode.as_str());
    if optimized.is_some() {
        row(&mut out, "mu*", format_value(mu));
    }
    for (label, v) in [
        ("mu", r.mu),
        ("eta", r.eta),
        ("eta_1", r.eta_1),
        ("eta_2", r.eta_2),
        ("y_1", r.y_1),
        ("y_2", r.y_2),
        ("e_1", r.e_1),
        ("e_2", r.e_2),
        ("q_1", r.q_1),
        ("q_2", r.q_2),
        ("q_mu", r.q_mu),
        ("e_mu", r.e_mu),
        ("f_ec", r.f_ec),
        ("skr_raw", r.skr),
        ("skr_clamped", r.skr_clamped()),
    ] {
        row(&mut out, label, format_value(v));
    }
    Ok((r, out))
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    run_sweep(cfg)
}

pub fn optimize(cfg: &RunConfig) -> Result<(OptimizeResult, String)> {
    let det = cfg.detector()?;
    let (point, eta) = cfg.operating_point()?;
    let range = cfg.mu_range()?;
    let r = optimize_mu(eta, &det, range, cfg.mu_tol)?;

    let mut out = String::new();
    row(&mut out, "point", describe(&point));
    row(&mut out, "eta", format_value(eta));
    row(
        &mut out,
        "mu_range",
        format!("[{}, {}]", range.lo(), range.hi()),
    );
    row(&mut out, "mu*", format_value(r.mu_star));
    row(&mut out, "skr*", format_value(r.skr_star));
    row(&mut out, "evaluations", r.evaluations);
    Ok((r, out))
}

pub fn cutoff(cfg: &RunConfig) -> Result<(CutoffResult, String)> {
    let det = cfg.detector()?;
    let c = find_cutoff_loss(
        &det,
        cfg.loss_model()?,
        (cfg.cutoff_lo_db, cfg.cutoff_hi_db),
        cfg.mu_range()?,
        cfg.cutoff_tol_db,
    )?;

    let mut out = String::new();
    row(&mut out, "convention", c.convention.as_str());
    row(&mut out, "cutoff_db", format!("{:.4}", c.loss_db_cutoff));
    row(
        &mut out,
        "cutoff_excl_eta_bob",
        format!("{:.4}", c.excluding_eta_bob()),
    );
    row(
        &mut out,
        "cutoff_incl_eta_bob",
        format!("{:.4}", c.including_eta_bob()),
    );
    row(&mut out, "eta_bob_db", format!("{:.4}", c.eta_bob_db));
    row(
        &mut out,
        "bracket_width_db",
        format_value(c.bracket_width_db),
    );
    row(&mut out, "mu*_at_cutoff", format_value(c.mu_star));
    row(&mut out, "evaluations", c.evaluations);
    Ok((c, out))
}

fn sim_config(cfg: &RunConfig) -> Result<(SimConfig, OperatingPoint)> {
    let det = cfg.detector()?;
    let (point, eta) = cfg.operating_point()?;
    let (mu, _) = resolve_mu(cfg, eta)?;
    let mut sim = SimConfig::new(mu, eta, det, cfg.pulses, cfg.seed);
    sim.batch_size = cfg.batch_size;
    Ok((sim, point))
}

fn estimate_cell(e: Option<crate::protocol::Estimate>) -> String {
    match e {
        Some(e) => format!(
            "{} +- {}  ({}/{})",
            format_value(e.value),
            format_value(e.std_err),
            e.successes,
            e.trials
        ),
        None => "n/a".to_string(),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<(SimEstimates, String)> {
    let (sim, point) = sim_config(cfg)?;
    let est = run_simulation(&sim)?;

    let mut out = String::new();
    row(&mut out, "point", describe(&point));
    row(&mut out, "mu", format_value(sim.mu));
    row(&mut out, "eta", format_value(sim.eta));
    row(&mut out, "pulses", est.pulses);
    row(&mut out, "seed", est.seed);
    row(&mut out, "batch_size", sim.batch_size);
    row(&mut out, "detected", est.tally.detected);
    row(&mut out, "dark_counts", est.tally.dark_counts);
    row(&mut out, "conclusive", est.tally.all.conclusive);
    row(&mut out, "errors", est.tally.all.errors);
    row(&mut out, "q_mu", estimate_cell(Some(est.q_mu)));
    row(&mut out, "e_mu", estimate_cell(est.e_mu));
    row(&mut out, "y_1", estimate_cell(est.y_1));
    row(&mut out, "y_2", estimate_cell(est.y_2));
    row(&mut out, "e_1", estimate_cell(est.e_1));
    row(&mut out, "e_2", estimate_cell(est.e_2));
    Ok((est, out))
}

/// Outcome of `validate`.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub comparisons: Vec<Comparison>,
    pub passed: bool,
    pub text: String,
}

pub fn validate(cfg: &RunConfig) -> Result<ValidationReport> {
    if cfg.pulses < MIN_VALIDATE_PULSES {
        return Err(Error::TooFewSamples {
            got: cfg.pulses,
            min: MIN_VALIDATE_PULSES,
        });
    }
    let (sim, point) = sim_config(cfg)?;
    let est = run_simulation(&sim)?;
    let comparisons = compare_to_model(&est, sim.mu, sim.eta, &sim.det)?;
    let passed = comparisons.iter().all(|c| c.within(VALIDATE_MAX_Z));

    let mut text = String::new();
    let _ = writeln!(
        text,
        "# {}  mu = {}  eta = {}  pulses = {}  seed = {}",
        describe(&point),
        format_value(sim.mu),
        format_value(sim.eta),
        est.pulses,
        est.seed
    );
    let _ = writeln!(
        text,
        "{:<6}{:>18}{:>18}{:>18}{:>10}",
        "qty", "analytic", "monte_carlo", "std_err", "z"
    );
    for c in &comparisons {
        let fmt = |v: Option<f64>| v.map(format_value).unwrap_or_else(|| "n/a".into());
        let se = match (c.estimate, c.analytic) {
            (Some(e), Some(p)) => Some(e.std_err_at(p)),
            _ => None,
        };
        let z = c
            .z_score()
            .map(|z| format!("{z:.3}"))
            .unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            text,
            "{:<6}{:>18}{:>18}{:>18}{:>10}",
            c.name,
            fmt(c.analytic),
            fmt(c.estimate.map(|e| e.value)),
            fmt(se),
            z
        );
    }
    let _ = writeln!(
        text,
        "{} (|z| <= {VALIDATE_MAX_Z})",
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(ValidationReport {
        comparisons,
        passed,
        text,
    })
}
