//! Pulse-level Monte Carlo of the SARG04 prepare, measure and sift steps.
//!
//! Alice sends one of four polarization states. Bob measures in a random
//! basis. Alice then announces one of the two state pairs that contain the
//! sent state, and Bob keeps the event only if his outcome is orthogonal to
//! exactly one member of the pair, which identifies the other member.
//!
//! Noise model per pulse:
//!
//! - photon number `n ~ Poisson(mu)`, detected with probability
//!   `1 - (1 - eta)^n`;
//! - a detected state is replaced by its orthogonal partner with probability
//!   `e_det`;
//! - an undetected pulse produces a dark count with probability `p_dark`,
//!   giving a uniformly random outcome in Bob's basis.
//!
//! Under this model a detected pulse is conclusive with probability
//! `1/4 + e_det/2` and wrong with probability `e_det/2`, and a dark count is
//! conclusive with probability 1/2 and wrong with probability 1/4, which is
//! exactly what the closed-form yields in [`crate::ratemodel`] assume.
//!
//! # Random streams
//!
//! Pulses are grouped into batches of `batch_size`. Batch `b` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with its stream set to `b`, so the
//! counts depend only on `(seed, batch_size, pulses)` and never on thread
//! scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ratemodel::DetectorParams;

pub const DEFAULT_BATCH_SIZE: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Rectilinear, {H, V}.
    Z,
    /// Diagonal, {+45, -45}.
    X,
}

impl Basis {
    pub fn states(self) -> [Polarization; 2] {
        match self {
            Basis::Z => [Polarization::H, Polarization::V],
            Basis::X => [Polarization::P45, Polarization::M45],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    P45,
    M45,
}

impl Polarization {
    pub const ALL: [Polarization; 4] = [
        Polarization::H,
        Polarization::V,
        Polarization::P45,
        Polarization::M45,
    ];

    pub fn basis(self) -> Basis {
        match self {
            Polarization::H | Polarization::V => Basis::Z,
            Polarization::P45 | Polarization::M45 => Basis::X,
        }
    }

    pub fn orthogonal(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::P45 => Polarization::M45,
            Polarization::M45 => Polarization::P45,
        }
    }

    pub fn is_orthogonal_to(self, other: Polarization) -> bool {
        self.orthogonal() == other
    }

    /// Born-rule probability of projecting `self` onto `outcome`.
    pub fn overlap(self, outcome: Polarization) -> f64 {
        if self == outcome {
            1.0
        } else if self.is_orthogonal_to(outcome) {
            0.0
        } else {
            0.5
        }
    }
}

/// The four public announcements, each pairing a Z state with an X state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnnouncementSet {
    /// {H, +45}
    S1,
    /// {V, +45}
    S2,
    /// {H, -45}
    S3,
    /// {V, -45}
    S4,
}

impl AnnouncementSet {
    pub const ALL: [AnnouncementSet; 4] = [
        AnnouncementSet::S1,
        AnnouncementSet::S2,
        AnnouncementSet::S3,
        AnnouncementSet::S4,
    ];

    pub fn members(self) -> [Polarization; 2] {
        use Polarization::*;
        match self {
            AnnouncementSet::S1 => [H, P45],
            AnnouncementSet::S2 => [V, P45],
            AnnouncementSet::S3 => [H, M45],
            AnnouncementSet::S4 => [V, M45],
        }
    }

    pub fn contains(self, state: Polarization) -> bool {
        self.members().contains(&state)
    }

    /// The two announcements Alice may make after sending `state`.
    pub fn containing(state: Polarization) -> [AnnouncementSet; 2] {
        use AnnouncementSet::*;
        match state {
            Polarization::H => [S1, S3],
            Polarization::V => [S2, S4],
            Polarization::P45 => [S1, S2],
            Polarization::M45 => [S3, S4],
        }
    }
}

/// Bob's decision for one measured event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sift {
    pub conclusive: bool,
    pub inferred: Option<Polarization>,
}

/// Applies the SARG04 sifting rule.
pub fn sift(
    sent: Polarization,
    announced: AnnouncementSet,
    basis: Basis,
    outcome: Polarization,
) -> Result<Sift> {
    if !announced.contains(sent) {
        return Err(Error::ProtocolViolation(format!(
            "announced {announced:?} does not contain sent state {sent:?}"
        )));
    }
    if outcome.basis() != basis {
        return Err(Error::ProtocolViolation(format!(
            "outcome {outcome:?} is not a {basis:?}-basis state"
        )));
    }
    Ok(sift_pair(announced, outcome))
}

#[inline]
fn sift_pair(announced: AnnouncementSet, outcome: Polarization) -> Sift {
    let [a, b] = announced.members();
    let inferred = match (outcome.is_orthogonal_to(a), outcome.is_orthogonal_to(b)) {
        (true, false) => Some(b),
        (false, true) => Some(a),
        _ => None,
    };
    Sift {
        conclusive: inferred.is_some(),
        inferred,
    }
}

/// Result of one simulated pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiftOutcome {
    /// Photons Alice emitted.
    pub photons: u32,
    pub detected: bool,
    pub dark_count: bool,
    pub conclusive: bool,
    pub inferred_state: Option<Polarization>,
    /// Conclusive but inferred the wrong state.
    pub error: bool,
}

/// Per-pulse sampler for a fixed operating point.
#[derive(Debug, Clone)]
pub struct PulseSimulator {
    eta: f64,
    det: DetectorParams,
    photons: Poisson<f64>,
}

impl PulseSimulator {
    pub fn new(mu: f64, eta: f64, det: DetectorParams) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(
                "mu",
                format!("must be finite and > 0, got {mu}"),
            ));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid(
                "eta",
                format!("must lie in [0, 1], got {eta}"),
            ));
        }
        det.validate()?;
        let photons = Poisson::new(mu).map_err(|e| Error::invalid("mu", e.to_string()))?;
        Ok(PulseSimulator { eta, det, photons })
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> SiftOutcome {
        let sent = Polarization::ALL[rng.gen_range(0..4)];
        let photons = self.photons.sample(rng) as u32;

        let detected = photons > 0 && {
            let eta_n = crate::channel::n_photon_transmittance_unchecked(self.eta, photons);
            rng.gen::<f64>() < eta_n
        };
        let dark_count = !detected && rng.gen::<f64>() < self.det.p_dark;

        let basis = if rng.gen::<bool>() {
            Basis::Z
        } else {
            Basis::X
        };
        let outcome = if detected {
            let arriving = if rng.gen::<f64>() < self.det.e_det {
                sent.orthogonal()
            } else {
                sent
            };
            if arriving.basis() == basis {
                arriving
            } else {
                basis.states()[rng.gen_range(0..2)]
            }
        } else if dark_count {
            basis.states()[rng.gen_range(0..2)]
        } else {
            return SiftOutcome {
                photons,
                detected: false,
                dark_count: false,
                conclusive: false,
                inferred_state: None,
                error: false,
            };
        };

        let announced = AnnouncementSet::containing(sent)[rng.gen_range(0..2)];
        let s = sift_pair(announced, outcome);
        SiftOutcome {
            photons,
            detected,
            dark_count,
            conclusive: s.conclusive,
            inferred_state: s.inferred,
            error: s.inferred.is_some_and(|p| p != sent),
        }
    }
}

/// Pulse, conclusive and error counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub pulses: u64,
    pub conclusive: u64,
    pub errors: u64,
}

impl Counts {
    fn record(&mut self, o: &SiftOutcome) {
        self.pulses += 1;
        self.conclusive += o.conclusive as u64;
        self.errors += o.error as u64;
    }

    fn merge(self, other: Counts) -> Counts {
        Counts {
            pulses: self.pulses + other.pulses,
            conclusive: self.conclusive + other.conclusive,
            errors: self.errors + other.errors,
        }
    }
}

/// Aggregated counts of a run; merging is plain addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub all: Counts,
    /// Counts restricted to pulses that emitted exactly 0, 1 and 2 photons.
    pub by_photons: [Counts; 3],
    pub detected: u64,
    pub dark_counts: u64,
}

impl Tally {
    pub fn record(&mut self, o: &SiftOutcome) {
        self.all.record(o);
        if let Some(c) = self.by_photons.get_mut(o.photons as usize) {
            c.record(o);
        }
        self.detected += o.detected as u64;
        self.dark_counts += o.dark_count as u64;
    }

    pub fn merge(self, other: Tally) -> Tally {
        let mut by_photons = self.by_photons;
        for (a, b) in by_photons.iter_mut().zip(other.by_photons) {
            *a = a.merge(b);
        }
        Tally {
            all: self.all.merge(other.all),
            by_photons,
            detected: self.detected + other.detected,
            dark_counts: self.dark_counts + other.dark_counts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub mu: f64,
    pub eta: f64,
    pub det: DetectorParams,
    pub pulses: u64,
    pub seed: u64,
    pub batch_size: u64,
}

impl SimConfig {
    pub fn new(mu: f64, eta: f64, det: DetectorParams, pulses: u64, seed: u64) -> Self {
        SimConfig {
            mu,
            eta,
            det,
            pulses,
            seed,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn batches(&self) -> u64 {
        self.pulses.div_ceil(self.batch_size)
    }

    fn validate(&self) -> Result<PulseSimulator> {
        if self.pulses == 0 {
            return Err(Error::TooFewSamples { got: 0, min: 1 });
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        PulseSimulator::new(self.mu, self.eta, self.det)
    }
}

/// RNG for batch `batch` of a run seeded with `seed`.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

fn run_batch(sim: &PulseSimulator, cfg: &SimConfig, batch: u64) -> Tally {
    let start = batch * cfg.batch_size;
    let len = cfg.batch_size.min(cfg.pulses - start);
    let mut rng = batch_rng(cfg.seed, batch);
    let mut tally = Tally::default();
    for _ in 0..len {
        tally.record(&sim.simulate(&mut rng));
    }
    tally
}

/// Runs all batches in parallel.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimEstimates> {
    let sim = cfg.validate()?;
    let tally = (0..cfg.batches())
        .into_par_iter()
        .map(|b| run_batch(&sim, cfg, b))
        .reduce(Tally::default, Tally::merge);
    Ok(SimEstimates::from_tally(tally, cfg.seed))
}

/// Runs all batches in order on the calling thread. Produces the same
/// estimates as [`run_simulation`].
pub fn run_simulation_sequential(cfg: &SimConfig) -> Result<SimEstimates> {
    let sim = cfg.validate()?;
    let tally = (0..cfg.batches())
        .map(|b| run_batch(&sim, cfg, b))
        .fold(Tally::default(), Tally::merge);
    Ok(SimEstimates::from_tally(tally, cfg.seed))
}

/// Binomial proportion estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub value: f64,
    /// `sqrt(p (1 - p) / n)` at the estimated `p`.
    pub std_err: f64,
}

impl Estimate {
    /// `None` when there were no trials.
    pub fn from_counts(successes: u64, trials: u64) -> Option<Estimate> {
        if trials == 0 {
            return None;
        }
        let value = successes as f64 / trials as f64;
        Some(Estimate {
            successes,
            trials,
            value,
            std_err: (value * (1.0 - value) / trials as f64).sqrt(),
        })
    }

    /// Binomial standard error if the true proportion were `expected`.
    pub fn std_err_at(&self, expected: f64) -> f64 {
        (expected * (1.0 - expected) / self.trials as f64).sqrt()
    }

    /// Deviation from `expected` in units of [`Self::std_err_at`].
    pub fn z_score(&self, expected: f64) -> f64 {
        let diff = self.value - expected;
        let se = self.std_err_at(expected);
        if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }
}

/// Empirical counterparts of the closed-form gain, QBER, yields and error
/// rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimates {
    pub pulses: u64,
    pub seed: u64,
    pub tally: Tally,
    /// Conclusive events per pulse.
    pub q_mu: Estimate,
    /// Errors per conclusive event; absent without conclusive events.
    pub e_mu: Option<Estimate>,
    /// Conclusive fraction of single-photon pulses.
    pub y_1: Option<Estimate>,
    pub y_2: Option<Estimate>,
    pub e_1: Option<Estimate>,
    pub e_2: Option<Estimate>,
}

impl SimEstimates {
    pub fn from_tally(tally: Tally, seed: u64) -> SimEstimates {
        let c = |k: Counts| Estimate::from_counts(k.conclusive, k.pulses);
        let e = |k: Counts| Estimate::from_counts(k.errors, k.conclusive);
        let [_, one, two] = tally.by_photons;
        SimEstimates {
            pulses: tally.all.pulses,
            seed,
            tally,
            q_mu: c(tally.all).expect("run has at least one pulse"),
            e_mu: e(tally.all),
            y_1: c(one),
            y_2: c(two),
            e_1: e(one),
            e_2: e(two),
        }
    }
}

/// One closed-form quantity next to its Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub name: &'static str,
    /// `None` when the closed form has a vanishing denominator.
    pub analytic: Option<f64>,
    pub estimate: Option<Estimate>,
}

impl Comparison {
    /// z-score of the estimate under the closed-form proportion. `None` if
    /// either side is undefined.
    pub fn z_score(&self) -> Option<f64> {
        Some(self.estimate?.z_score(self.analytic?))
    }

    /// True unless both sides are defined and disagree by more than
    /// `max_z` standard errors.
    pub fn within(&self, max_z: f64) -> bool {
        self.z_score().is_none_or(|z| z.abs() <= max_z)
    }
}

/// Pairs each simulated estimate with its closed-form value: `Q_mu`,
/// `E_mu`, `Y_1`, `Y_2`, `e_1`, `e_2`.
pub fn compare_to_model(
    est: &SimEstimates,
    mu: f64,
    eta: f64,
    det: &DetectorParams,
) -> Result<Vec<Comparison>> {
    use crate::channel::n_photon_transmittance;
    use crate::ratemodel::{error_n, overall_gain, overall_qber, yield_n};

    let source = crate::ratemodel::SourceParams::new(mu)?;
    let eta_1 = n_photon_transmittance(eta, 1)?;
    let eta_2 = n_photon_transmittance(eta, 2)?;
    Ok(vec![
        Comparison {
            name: "Q_mu",
            analytic: Some(overall_gain(source, eta, det)),
            estimate: Some(est.q_mu),
        },
        Comparison {
            name: "E_mu",
            analytic: overall_qber(source, eta, det).ok(),
            estimate: est.e_mu,
        },
        Comparison {
            name: "Y_1",
            analytic: Some(yield_n(eta_1, det)),
            estimate: est.y_1,
        },
        Comparison {
            name: "Y_2",
            analytic: Some(yield_n(eta_2, det)),
            estimate: est.y_2,
        },
        Comparison {
            name: "e_1",
            analytic: error_n(eta_1, det).ok(),
            estimate: est.e_1,
        },
        Comparison {
            name: "e_2",
            analytic: error_n(eta_2, det).ok(),
            estimate: est.e_2,
        },
    ])
}
