//! Free-space link transmittance.
//!
//! The overall transmittance seen by the receiver is
//!
//! ```text
//! eta = eta_bob * (d_r / (d_t + D * L))^2 * exp(-alpha * L)
//! ```
//!
//! with apertures in mm, divergence `D` in mrad and `L` in km, so the beam
//! spread `D * L` comes out in metres and is scaled by 1000 to mm. Attenuation
//! is configured in dB/km and converted to a natural-log coefficient
//! internally.

use crate::error::{Error, Result};

/// Loss reported for a transmittance of exactly zero.
pub const INFINITE_LOSS_DB: f64 = f64::INFINITY;

/// Geometry, attenuation and receiver efficiency of a free-space link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Receiver aperture diameter (mm).
    pub d_r_mm: f64,
    /// Transmitter aperture diameter (mm).
    pub d_t_mm: f64,
    /// Full beam divergence (mrad).
    pub divergence_mrad: f64,
    /// Atmospheric attenuation (dB/km).
    pub alpha_db_per_km: f64,
    /// Receiver-side optical and detector efficiency.
    pub eta_bob: f64,
    /// Cap the aperture ratio term at 1. A passive link cannot have gain, but
    /// the raw formula exceeds 1 at short range whenever `d_r > d_t`.
    pub clamp_geometry: bool,
}

impl Default for ChannelParams {
    /// Receiver and transmitter values used throughout the analysis:
    /// 70 mm / 10 mm apertures, 0.025 mrad divergence, 4.5 % receiver
    /// efficiency. No atmospheric attenuation is assumed.
    fn default() -> Self {
        ChannelParams {
            d_r_mm: 70.0,
            d_t_mm: 10.0,
            divergence_mrad: 0.025,
            alpha_db_per_km: 0.0,
            eta_bob: 0.045,
            clamp_geometry: true,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_r_mm > 0.0 && self.d_r_mm.is_finite()) {
            return Err(Error::invalid(
                "d_r_mm",
                format!("must be > 0, got {}", self.d_r_mm),
            ));
        }
        if !(self.d_t_mm > 0.0 && self.d_t_mm.is_finite()) {
            return Err(Error::invalid(
                "d_t_mm",
                format!("must be > 0, got {}", self.d_t_mm),
            ));
        }
        if !(self.divergence_mrad >= 0.0 && self.divergence_mrad.is_finite()) {
            return Err(Error::invalid(
                "divergence_mrad",
                format!("must be >= 0, got {}", self.divergence_mrad),
            ));
        }
        if !(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(Error::invalid(
                "alpha_db_per_km",
                format!("must be >= 0, got {}", self.alpha_db_per_km),
            ));
        }
        if !(self.eta_bob > 0.0 && self.eta_bob <= 1.0) {
            return Err(Error::invalid(
                "eta_bob",
                format!("must lie in (0, 1], got {}", self.eta_bob),
            ));
        }
        Ok(())
    }

    /// Attenuation coefficient in natural-log units per km.
    pub fn alpha_per_km(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0
    }
}

/// Link length.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LinkPoint {
    distance_km: f64,
}

impl LinkPoint {
    pub fn new(distance_km: f64) -> Result<Self> {
        if !(distance_km >= 0.0 && distance_km.is_finite()) {
            return Err(Error::invalid(
                "distance_km",
                format!("must be finite and >= 0, got {distance_km}"),
            ));
        }
        Ok(LinkPoint { distance_km })
    }

    pub fn distance_km(&self) -> f64 {
        self.distance_km
    }
}

/// Squared aperture ratio `(d_r / (d_t + spread))^2`, capped at 1 unless
/// `clamp_geometry` is off.
pub fn geometric_factor(ch: &ChannelParams, link: LinkPoint) -> Result<f64> {
    ch.validate()?;
    let spread_mm = ch.divergence_mrad * link.distance_km * 1000.0;
    let ratio = ch.d_r_mm / (ch.d_t_mm + spread_mm);
    let raw = ratio * ratio;
    Ok(if ch.clamp_geometry { raw.min(1.0) } else { raw })
}

/// `exp(-alpha * L)` with `alpha` converted from dB/km.
pub fn atmospheric_factor(ch: &ChannelParams, link: LinkPoint) -> Result<f64> {
    ch.validate()?;
    Ok((-ch.alpha_per_km() * link.distance_km).exp())
}

/// Overall transmittance `eta_bob * geometric * atmospheric`.
pub fn overall_transmittance(ch: &ChannelParams, link: LinkPoint) -> Result<f64> {
    Ok(ch.eta_bob * geometric_factor(ch, link)? * atmospheric_factor(ch, link)?)
}

/// Probability that at least one of `n` photons survives a channel of
/// single-photon transmittance `eta`: `1 - (1 - eta)^n`.
pub fn n_photon_transmittance(eta: f64, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "photon count must be >= 1"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(
            "eta",
            format!("must lie in [0, 1], got {eta}"),
        ));
    }
    Ok(n_photon_transmittance_unchecked(eta, n))
}

#[inline]
pub(crate) fn n_photon_transmittance_unchecked(eta: f64, n: u32) -> f64 {
    if n == 1 {
        return eta;
    }
    // 1 - (1-eta)^n without cancellation for small eta.
    -(n as f64 * (-eta).ln_1p()).exp_m1()
}

/// Loss in dB, `-10 log10(eta)`. A zero transmittance maps to
/// [`INFINITE_LOSS_DB`].
pub fn transmittance_to_db(eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(
            "eta",
            format!("must lie in [0, 1], got {eta}"),
        ));
    }
    if eta == 0.0 {
        return Ok(INFINITE_LOSS_DB);
    }
    Ok(-10.0 * eta.log10())
}

/// Inverse of [`transmittance_to_db`].
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if loss_db.is_nan() || loss_db < 0.0 {
        return Err(Error::invalid(
            "loss_db",
            format!("must be >= 0, got {loss_db}"),
        ));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}
