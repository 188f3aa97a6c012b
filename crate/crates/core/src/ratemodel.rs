//! Asymptotic SARG04 key rate for a weak coherent source.
//!
//! Key is distilled from single- and two-photon pulses:
//!
//! ```text
//! SKR = -Q_mu f H2(E_mu) + Q_1 [1 - H2(e_1)] + Q_2 [1 - H2(e_2)]
//! ```
//!
//! Yields and error rates come directly from the channel model. A detected
//! photon yields a conclusive bit with probability `e_det/2 + 1/4`, of which
//! `e_det/2` are errors; a dark count in an otherwise empty gate is conclusive
//! with probability 1/2 and wrong half of that time.

use crate::channel::n_photon_transmittance_unchecked;
use crate::error::{Error, Result};

/// Probabilities below this are treated as zero denominators.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// Largest photon number [`poisson_pn`] is tuned for.
pub const MAX_POISSON_N: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    mu: f64,
}

impl SourceParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(
                "mu",
                format!("must be finite and > 0, got {mu}"),
            ));
        }
        Ok(SourceParams { mu })
    }

    /// Mean photon number per pulse.
    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Detector noise and post-processing cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Background/dark count probability per gate.
    pub p_dark: f64,
    /// Misalignment error probability.
    pub e_det: f64,
    /// Error-correction inefficiency, a constant multiplier on the
    /// Shannon limit.
    pub f_ec: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            p_dark: 1e-6,
            e_det: 0.033,
            f_ec: 1.22,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_dark) {
            return Err(Error::invalid(
                "p_dark",
                format!("must lie in [0, 1), got {}", self.p_dark),
            ));
        }
        if !(0.0..0.5).contains(&self.e_det) {
            return Err(Error::invalid(
                "e_det",
                format!("must lie in [0, 0.5), got {}", self.e_det),
            ));
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(Error::invalid(
                "f_ec",
                format!("must be >= 1, got {}", self.f_ec),
            ));
        }
        Ok(())
    }

    /// Conclusive probability of a gate in which a photon arrived.
    fn photon_click(&self) -> f64 {
        self.e_det / 2.0 + 0.25
    }
}

/// Every intermediate quantity of one key-rate evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    pub mu: f64,
    pub eta: f64,
    pub eta_1: f64,
    pub eta_2: f64,
    pub y_1: f64,
    pub y_2: f64,
    pub e_1: f64,
    pub e_2: f64,
    pub q_1: f64,
    pub q_2: f64,
    pub q_mu: f64,
    pub e_mu: f64,
    pub f_ec: f64,
    /// Raw key rate in bits per pulse. Negative past the cutoff.
    pub skr: f64,
}

impl RateBreakdown {
    /// `max(0, skr)`.
    pub fn skr_clamped(&self) -> f64 {
        self.skr.max(0.0)
    }

    /// Re-evaluates the key-rate formula from the stored fields.
    pub fn recompose_skr(&self) -> f64 {
        -self.q_mu * self.f_ec * entropy(self.e_mu)
            + self.q_1 * (1.0 - entropy(self.e_1))
            + self.q_2 * (1.0 - entropy(self.e_2))
    }
}

/// Poisson probability `e^-mu mu^n / n!`, evaluated in log space.
pub fn poisson_pn(mu: f64, n: u32) -> f64 {
    if n == 0 {
        return (-mu).exp();
    }
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    (n as f64 * mu.ln() - mu - ln_fact).exp()
}

/// Binary Shannon entropy in bits, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid("x", format!("must lie in [0, 1], got {x}")));
    }
    Ok(entropy(x))
}

#[inline]
fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Conditional probability of a conclusive event given an `n`-photon pulse
/// with transmittance `eta_n`.
pub fn yield_n(eta_n: f64, det: &DetectorParams) -> f64 {
    eta_n * det.photon_click() + (1.0 - eta_n) * det.p_dark * 0.5
}

/// Bit error rate of the conclusive events of `n`-photon pulses.
pub fn error_n(eta_n: f64, det: &DetectorParams) -> Result<f64> {
    let y = yield_n(eta_n, det);
    if y < PROBABILITY_FLOOR {
        return Err(Error::UndefinedRate("e_n (yield Y_n)"));
    }
    Ok((eta_n * det.e_det / 2.0 + (1.0 - eta_n) * det.p_dark * 0.25) / y)
}

/// Gain of `n`-photon pulses, `Y_n` weighted by the Poisson probability.
pub fn gain_n(source: SourceParams, n: u32, y_n: f64) -> f64 {
    y_n * poisson_pn(source.mu, n)
}

/// `1 - e^(-eta mu)` and `e^(-eta mu)`.
#[inline]
fn detect_and_vacuum(source: SourceParams, eta: f64) -> (f64, f64) {
    let x = eta * source.mu;
    (-(-x).exp_m1(), (-x).exp())
}

/// Overall gain `Q_mu` summed over all photon numbers.
pub fn overall_gain(source: SourceParams, eta: f64, det: &DetectorParams) -> f64 {
    let (detect, vacuum) = detect_and_vacuum(source, eta);
    0.5 * det.p_dark * vacuum + det.photon_click() * detect
}

/// Overall QBER `E_mu`.
pub fn overall_qber(source: SourceParams, eta: f64, det: &DetectorParams) -> Result<f64> {
    let q = overall_gain(source, eta, det);
    if q < PROBABILITY_FLOOR {
        return Err(Error::UndefinedRate("E_mu (overall gain Q_mu)"));
    }
    let (detect, vacuum) = detect_and_vacuum(source, eta);
    Ok((0.25 * det.p_dark * vacuum + det.e_det / 2.0 * detect) / q)
}

/// Full key-rate pipeline for one operating point.
pub fn secret_key_rate(
    source: SourceParams,
    eta: f64,
    det: &DetectorParams,
) -> Result<RateBreakdown> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(
            "eta",
            format!("must lie in [0, 1], got {eta}"),
        ));
    }
    det.validate()?;

    let eta_1 = n_photon_transmittance_unchecked(eta, 1);
    let eta_2 = n_photon_transmittance_unchecked(eta, 2);
    let y_1 = yield_n(eta_1, det);
    let y_2 = yield_n(eta_2, det);
    let e_1 = error_n(eta_1, det)?;
    let e_2 = error_n(eta_2, det)?;
    let q_1 = gain_n(source, 1, y_1);
    let q_2 = gain_n(source, 2, y_2);
    let q_mu = overall_gain(source, eta, det);
    let e_mu = overall_qber(source, eta, det)?;

    let mut out = RateBreakdown {
        mu: source.mu,
        eta,
        eta_1,
        eta_2,
        y_1,
        y_2,
        e_1,
        e_2,
        q_1,
        q_2,
        q_mu,
        e_mu,
        f_ec: det.f_ec,
        skr: 0.0,
    };
    out.skr = out.recompose_skr();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn src(mu: f64) -> SourceParams {
        SourceParams::new(mu).unwrap()
    }

    fn paper() -> DetectorParams {
        DetectorParams::default()
    }

    #[test]
    fn poisson_values() {
        assert!((poisson_pn(0.5, 0) - 0.6065306597126334).abs() < 1e-15);
        assert!((poisson_pn(1.0, 1) - 0.36787944117144233).abs() < 1e-15);
        let total: f64 = (0..=MAX_POISSON_N).map(|n| poisson_pn(0.5, n)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11).unwrap() - 0.499915958164528).abs() < 1e-12);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.01).is_err());
    }

    #[test]
    fn yield_examples() {
        let det = paper();
        assert!((yield_n(0.0, &det) - 5e-7).abs() < 1e-20);
        assert!((yield_n(1.0, &det) - 0.2665).abs() < 1e-15);
        let ideal = DetectorParams {
            p_dark: 0.0,
            e_det: 0.0,
            f_ec: 1.22,
        };
        assert_eq!(yield_n(0.5, &ideal), 0.125);
    }

    #[test]
    fn error_examples() {
        let det = paper();
        assert_eq!(error_n(0.0, &det).unwrap(), 0.5);
        assert!((error_n(1.0, &det).unwrap() - 0.06191369606003752).abs() < 1e-15);
        let aligned = DetectorParams { e_det: 0.0, ..det };
        assert_eq!(error_n(1.0, &aligned).unwrap(), 0.0);
        let silent = DetectorParams {
            p_dark: 0.0,
            e_det: 0.0,
            f_ec: 1.0,
        };
        assert_eq!(
            error_n(0.0, &silent),
            Err(Error::UndefinedRate("e_n (yield Y_n)"))
        );
    }

    #[test]
    fn gain_examples() {
        assert!((gain_n(src(0.5), 1, 0.2665) - 0.0808202104067084).abs() < 1e-15);
        assert!(gain_n(src(1e-12), 1, 0.3) < 1e-12);
        let mu = 0.37;
        let y = 0.01;
        let two = gain_n(src(mu), 2, y);
        assert!((two * 2.0 - y * (-mu).exp() * mu * mu).abs() < 1e-18);
    }

    #[test]
    fn overall_gain_examples() {
        let det = paper();
        assert_eq!(overall_gain(src(0.5), 0.0, &det), 5e-7);
        let q = overall_gain(src(0.5), 0.045, &det);
        assert!((q / 0.005929784163594461 - 1.0).abs() < 1e-12);
        assert!((overall_gain(src(1.0), 1e3, &det) - 0.2665).abs() < 1e-15);
    }

    #[test]
    fn overall_qber_limits() {
        let det = paper();
        assert!((overall_qber(src(1e-12), 0.045, &det).unwrap() - 0.5).abs() < 1e-6);
        assert_eq!(overall_qber(src(0.5), 0.0, &det).unwrap(), 0.5);
        let far = overall_qber(src(1.0), 1e3, &det).unwrap();
        assert!((far - 0.06191369606003752).abs() < 1e-12);
        let clean = DetectorParams {
            p_dark: 1e-300,
            e_det: 0.0,
            f_ec: 1.0,
        };
        assert!(overall_qber(src(0.5), 0.1, &clean).unwrap() < 1e-290);
    }

    #[test]
    fn noiseless_rate_is_gain_sum() {
        let det = DetectorParams {
            p_dark: 0.0,
            e_det: 0.0,
            f_ec: 1.22,
        };
        for (mu, eta) in [(0.1, 0.5), (0.7, 1e-4), (1.5, 1.0)] {
            let r = secret_key_rate(src(mu), eta, &det).unwrap();
            assert_eq!(r.e_mu, 0.0);
            assert_eq!(r.skr, r.q_1 + r.q_2);
        }
    }

    #[test]
    fn dead_channel_rate_is_negative() {
        let det = paper();
        let r = secret_key_rate(src(0.5), 0.0, &det).unwrap();
        assert_eq!(r.e_mu, 0.5);
        assert_eq!(r.e_1, 0.5);
        assert_eq!(r.e_2, 0.5);
        assert!((r.skr + det.f_ec * det.p_dark / 2.0).abs() < 1e-18);
        assert_eq!(r.skr_clamped(), 0.0);
    }

    #[test]
    fn regression_at_zero_distance() {
        // Independent end-to-end evaluation at eta = 0.045, mu = 0.5.
        let r = secret_key_rate(src(0.5), 0.045, &paper()).unwrap();
        assert!((r.skr / 0.0011759531829744854 - 1.0).abs() < 1e-12);
        assert!((r.e_1 - 0.06193113845164805).abs() < 1e-14);
        assert!((r.e_2 - 0.06192221668573394).abs() < 1e-14);
        assert!((r.q_1 - 0.003637054277496888).abs() < 1e-16);
        assert!((r.q_2 - 0.0017775740758278512).abs() < 1e-16);
        assert!((r.e_mu - 0.06194981368370287).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(SourceParams::new(0.0).is_err());
        assert!(SourceParams::new(f64::NAN).is_err());
        let bad = DetectorParams {
            e_det: 0.5,
            ..paper()
        };
        assert!(secret_key_rate(src(0.5), 0.1, &bad).is_err());
        assert!(secret_key_rate(src(0.5), 1.1, &paper()).is_err());
        let bad = DetectorParams {
            f_ec: 0.9,
            ..paper()
        };
        assert!(bad.validate().is_err());
    }

    fn detector() -> impl Strategy<Value = DetectorParams> {
        (1e-9f64..1e-2, 0.0f64..0.2, 1.0f64..2.0).prop_map(|(p_dark, e_det, f_ec)| DetectorParams {
            p_dark,
            e_det,
            f_ec,
        })
    }

    proptest! {
        #[test]
        fn breakdown_invariants(det in detector(), log_eta in -6.0f64..=0.0, mu in 1e-3f64..2.0) {
            let eta = 10f64.powf(log_eta);
            let r = secret_key_rate(src(mu), eta, &det).unwrap();
            for p in [r.eta_1, r.eta_2, r.y_1, r.y_2, r.q_1, r.q_2, r.q_mu] {
                prop_assert!((0.0..=1.0).contains(&p));
            }
            for e in [r.e_1, r.e_2, r.e_mu] {
                prop_assert!((0.0..=0.5 + 1e-15).contains(&e));
            }
            prop_assert!(r.e_2 <= r.e_1 + 1e-15);
            prop_assert!(r.y_1 >= det.p_dark / 2.0 * (1.0 - r.eta_1));
            prop_assert!(r.y_2 >= det.p_dark / 2.0 * (1.0 - r.eta_2));
            let re = r.recompose_skr();
            prop_assert!((re - r.skr).abs() <= 1e-12 * r.skr.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn entropy_symmetric_and_bounded(x in 0.0f64..=1.0) {
            let h = binary_entropy(x).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert!((h - binary_entropy(1.0 - x).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn poisson_normalized(mu in 1e-4f64..=2.0) {
            let total: f64 = (0..=MAX_POISSON_N).map(|n| poisson_pn(mu, n)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn clamped_rate_stays_zero_past_cutoff(det in detector(), mu in 1e-3f64..1.0) {
            let mut seen_zero = false;
            for step in 0..=120 {
                let eta = 10f64.powf(-(step as f64) / 2.0 / 10.0);
                let r = secret_key_rate(src(mu), eta, &det).unwrap();
                if seen_zero {
                    prop_assert_eq!(r.skr_clamped(), 0.0);
                }
                seen_zero |= r.skr_clamped() == 0.0;
            }
        }
    }
}
