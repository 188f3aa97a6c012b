//! Mean-photon-number optimization and loss-budget search.
//!
//! `optimize_mu` scans a log-spaced grid, then refines the best grid cell by
//! golden-section search in `ln(mu)`. The refined point is only accepted if
//! it beats the grid maximum, so a multi-modal objective degrades to the grid
//! argmax rather than to a wrong local optimum.
//!
//! `find_cutoff_loss` bisects on channel loss in dB, re-optimizing `mu` at
//! every probe.

use crate::channel::{db_to_transmittance, transmittance_to_db};
use crate::error::{Error, Result};
use crate::ratemodel::{secret_key_rate, DetectorParams, SourceParams};

/// Grid points of the coarse scan in [`optimize_mu`].
pub const DEFAULT_GRID_POINTS: usize = 64;

/// Default relative tolerance on `mu*`.
pub const DEFAULT_MU_TOL: f64 = 1e-10;

const MAX_GOLDEN_ITERATIONS: usize = 200;

/// Search interval for the mean photon number, `0 < lo < hi <= 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuRange {
    lo: f64,
    hi: f64,
}

impl Default for MuRange {
    fn default() -> Self {
        MuRange { lo: 1e-4, hi: 1.0 }
    }
}

impl MuRange {
    pub const MAX_MU: f64 = 2.0;

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi <= Self::MAX_MU) {
            return Err(Error::invalid(
                "mu_range",
                format!("need 0 < lo < hi <= {}, got [{lo}, {hi}]", Self::MAX_MU),
            ));
        }
        Ok(MuRange { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// `points` log-spaced values from `lo` to `hi` inclusive.
    pub fn log_grid(&self, points: usize) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let last = points.saturating_sub(1).max(1) as f64;
        (0..points)
            .map(|i| match i {
                0 => self.lo,
                _ if i + 1 == points => self.hi,
                _ => (a + (b - a) * i as f64 / last).exp(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeResult {
    pub mu_star: f64,
    /// Raw key rate at `mu_star` (bits/pulse).
    pub skr_star: f64,
    /// Number of key-rate evaluations spent.
    pub evaluations: usize,
}

/// Whether the loss axis counts the receiver efficiency `eta_bob`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossConvention {
    /// Loss is the channel only; `eta = eta_bob * 10^(-dB/10)`.
    #[default]
    ExcludeEtaBob,
    /// Loss is the whole budget including the receiver;
    /// `eta = 10^(-dB/10)`.
    IncludeEtaBob,
}

impl LossConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossConvention::ExcludeEtaBob => "exclude_eta_bob",
            LossConvention::IncludeEtaBob => "include_eta_bob",
        }
    }
}

impl std::str::FromStr for LossConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude_eta_bob" => Ok(LossConvention::ExcludeEtaBob),
            "include_eta_bob" => Ok(LossConvention::IncludeEtaBob),
            other => Err(Error::invalid(
                "loss_convention",
                format!("expected exclude_eta_bob or include_eta_bob, got `{other}`"),
            )),
        }
    }
}

/// Maps a loss in dB to the overall transmittance under a convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub eta_bob: f64,
    pub convention: LossConvention,
}

impl LossModel {
    pub fn new(eta_bob: f64, convention: LossConvention) -> Result<Self> {
        if !(eta_bob > 0.0 && eta_bob <= 1.0) {
            return Err(Error::invalid(
                "eta_bob",
                format!("must lie in (0, 1], got {eta_bob}"),
            ));
        }
        Ok(LossModel {
            eta_bob,
            convention,
        })
    }

    pub fn transmittance(&self, loss_db: f64) -> Result<f64> {
        let t = db_to_transmittance(loss_db)?;
        Ok(match self.convention {
            LossConvention::ExcludeEtaBob => self.eta_bob * t,
            LossConvention::IncludeEtaBob => t,
        })
    }

    /// `eta_bob` expressed as a loss in dB.
    pub fn eta_bob_db(&self) -> f64 {
        // eta_bob is validated to (0, 1].
        transmittance_to_db(self.eta_bob).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffResult {
    /// Loss at which the optimized key rate crosses zero, in the
    /// convention of `convention`.
    pub loss_db_cutoff: f64,
    pub bracket_width_db: f64,
    pub convention: LossConvention,
    pub eta_bob_db: f64,
    /// Optimal `mu` at the last positive probe.
    pub mu_star: f64,
    pub evaluations: usize,
}

impl CutoffResult {
    /// Cutoff counted on the channel alone.
    pub fn excluding_eta_bob(&self) -> f64 {
        match self.convention {
            LossConvention::ExcludeEtaBob => self.loss_db_cutoff,
            LossConvention::IncludeEtaBob => self.loss_db_cutoff - self.eta_bob_db,
        }
    }

    /// Cutoff counted on the whole budget, receiver efficiency included.
    pub fn including_eta_bob(&self) -> f64 {
        match self.convention {
            LossConvention::ExcludeEtaBob => self.loss_db_cutoff + self.eta_bob_db,
            LossConvention::IncludeEtaBob => self.loss_db_cutoff,
        }
    }
}

/// Maximizes the raw key rate over `mu` at fixed transmittance.
pub fn optimize_mu(
    eta: f64,
    det: &DetectorParams,
    mu_range: MuRange,
    tol: f64,
) -> Result<OptimizeResult> {
    optimize_mu_with_grid(eta, det, mu_range, tol, DEFAULT_GRID_POINTS)
}

pub fn optimize_mu_with_grid(
    eta: f64,
    det: &DetectorParams,
    mu_range: MuRange,
    tol: f64,
    grid_points: usize,
) -> Result<OptimizeResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    if grid_points < 3 {
        return Err(Error::invalid("grid_points", "need at least 3"));
    }
    let mut evaluations = 0usize;
    let mut skr = |mu: f64| -> Result<f64> {
        evaluations += 1;
        Ok(secret_key_rate(SourceParams::new(mu)?, eta, det)?.skr)
    };

    let grid = mu_range.log_grid(grid_points);
    let mut values = Vec::with_capacity(grid.len());
    for &mu in &grid {
        values.push(skr(mu)?);
    }
    // First maximum wins ties, keeping the scan deterministic.
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });

    let left = grid[best.saturating_sub(1)].ln();
    let right = grid[(best + 1).min(grid.len() - 1)].ln();
    let (ln_mu, refined) = golden_section_max(|x| skr(x.exp()), left, right, tol)?;

    let (mu_star, skr_star) = if refined > values[best] {
        (ln_mu.exp().clamp(mu_range.lo, mu_range.hi), refined)
    } else {
        (grid[best], values[best])
    };
    Ok(OptimizeResult {
        mu_star,
        skr_star,
        evaluations,
    })
}

/// Golden-section maximization on `[a, b]` until the bracket is narrower
/// than `tol`. Returns the best evaluated point.
fn golden_section_max<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..MAX_GOLDEN_ITERATIONS {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Bisects on loss for the point where the optimized key rate reaches zero.
///
/// The optimized rate must be positive at `loss_range_db.0` and
/// non-positive at `loss_range_db.1`.
pub fn find_cutoff_loss(
    det: &DetectorParams,
    loss_model: LossModel,
    loss_range_db: (f64, f64),
    mu_range: MuRange,
    tol_db: f64,
) -> Result<CutoffResult> {
    let (mut lo, mut hi) = loss_range_db;
    if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::invalid(
            "loss_range_db",
            format!("need 0 <= lo < hi, got [{lo}, {hi}]"),
        ));
    }
    if tol_db.is_nan() || tol_db <= 0.0 {
        return Err(Error::invalid(
            "tol_db",
            format!("must be > 0, got {tol_db}"),
        ));
    }

    let mut evaluations = 0usize;
    let mut probe = |loss_db: f64| -> Result<OptimizeResult> {
        let eta = loss_model.transmittance(loss_db)?;
        let r = optimize_mu(eta, det, mu_range, DEFAULT_MU_TOL)?;
        evaluations += r.evaluations;
        Ok(r)
    };

    let at_lo = probe(lo)?;
    let at_hi = probe(hi)?;
    if !(at_lo.skr_star > 0.0 && at_hi.skr_star <= 0.0) {
        return Err(Error::NoSignChange {
            lo_db: lo,
            hi_db: hi,
            skr_lo: at_lo.skr_star,
            skr_hi: at_hi.skr_star,
        });
    }

    let mut mu_star = at_lo.mu_star;
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        let r = probe(mid)?;
        if r.skr_star > 0.0 {
            lo = mid;
            mu_star = r.mu_star;
        } else {
            hi = mid;
        }
    }

    Ok(CutoffResult {
        loss_db_cutoff: 0.5 * (lo + hi),
        bracket_width_db: hi - lo,
        convention: loss_model.convention,
        eta_bob_db: loss_model.eta_bob_db(),
        mu_star,
        evaluations,
    })
}
