//! Distance and loss sweeps, and their CSV form.

use std::io::Write;

use rayon::prelude::*;

use super::config::{MuMode, RunConfig, SweepAxis};
use crate::channel::{overall_transmittance, LinkPoint};
use crate::error::{Error, Result};
use crate::optimizer::optimize_mu;
use crate::ratemodel::{secret_key_rate, DetectorParams, RateBreakdown, SourceParams};

pub const CSV_HEADER: &str =
    "axis,mu,eta,eta_1,eta_2,y_1,y_2,e_1,e_2,q_1,q_2,q_mu,e_mu,skr_raw,skr_clamped";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// Distance (km) or loss (dB), depending on the sweep axis.
    pub axis: f64,
    pub rate: RateBreakdown,
}

impl SweepRow {
    pub fn skr_clamped(&self) -> f64 {
        self.rate.skr_clamped()
    }
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i + 1 == n {
                stop
            } else {
                start + (stop - start) * i as f64 / last
            }
        })
        .collect()
}

/// Evaluates the rate at a given transmittance under the configured mu mode.
pub fn evaluate_point(cfg: &RunConfig, det: &DetectorParams, eta: f64) -> Result<RateBreakdown> {
    let mu = match cfg.mu_mode {
        MuMode::Fixed => cfg.mu,
        MuMode::Optimized => optimize_mu(eta, det, cfg.mu_range()?, cfg.mu_tol)?.mu_star,
    };
    secret_key_rate(SourceParams::new(mu)?, eta, det)
}

/// Runs the configured sweep. Rows come back ordered by axis value.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate_sweep()?;
    let det = cfg.detector()?;
    if cfg.mu_mode == MuMode::Fixed {
        cfg.source()?;
    } else {
        cfg.mu_range()?;
    }

    let transmittance: Box<dyn Fn(f64) -> Result<f64> + Sync> = match cfg.sweep_axis {
        SweepAxis::LossDb => {
            let model = cfg.loss_model()?;
            Box::new(move |db| model.transmittance(db))
        }
        SweepAxis::DistanceKm => {
            let ch = cfg.channel()?;
            Box::new(move |km| {
                let eta = overall_transmittance(&ch, LinkPoint::new(km)?)?;
                if eta > 1.0 {
                    return Err(Error::invalid(
                        "clamp_geometry",
                        format!("unclamped geometry gives eta = {eta} > 1 at {km} km"),
                    ));
                }
                Ok(eta)
            })
        }
    };

    linspace(cfg.sweep_start, cfg.sweep_stop, cfg.sweep_steps)
        .into_par_iter()
        .map(|axis| {
            let eta = transmittance(axis)?;
            Ok(SweepRow {
                axis,
                rate: evaluate_point(cfg, &det, eta)?,
            })
        })
        .collect()
}

/// Ten significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn write_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in rows {
        let r = &row.rate;
        let fields = [
            row.axis,
            r.mu,
            r.eta,
            r.eta_1,
            r.eta_2,
            r.y_1,
            r.y_2,
            r.e_1,
            r.e_2,
            r.q_1,
            r.q_2,
            r.q_mu,
            r.e_mu,
            r.skr,
            r.skr_clamped(),
        ];
        let line: Vec<String> = fields.iter().map(|v| format_value(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn to_csv_string(rows: &[SweepRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}
