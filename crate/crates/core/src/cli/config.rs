//! Flat `key = value` run configuration.
//!
//! ```text
//! # detector
//! p_dark = 1e-6
//! e_det = 0.033      # misalignment
//! loss_db = 20
//! ```
//!
//! Every key can also be given on the command line as `--key value`, which
//! overrides the file.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::channel::{overall_transmittance, ChannelParams, LinkPoint};
use crate::error::{Error, Result};
use crate::optimizer::{LossConvention, LossModel, MuRange, DEFAULT_MU_TOL};
use crate::protocol::DEFAULT_BATCH_SIZE;
use crate::ratemodel::{DetectorParams, SourceParams};

/// Every recognised key, in serialization order.
pub const KEYS: &[&str] = &[
    "d_r_mm",
    "d_t_mm",
    "divergence_mrad",
    "alpha_db_per_km",
    "eta_bob",
    "clamp_geometry",
    "p_dark",
    "e_det",
    "f_ec",
    "mu",
    "mu_mode",
    "mu_min",
    "mu_max",
    "mu_tol",
    "distance_km",
    "loss_db",
    "loss_convention",
    "sweep_axis",
    "sweep_start",
    "sweep_stop",
    "sweep_steps",
    "cutoff_lo_db",
    "cutoff_hi_db",
    "cutoff_tol_db",
    "pulses",
    "batch_size",
    "seed",
    "out",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuMode {
    #[default]
    Fixed,
    Optimized,
}

impl FromStr for MuMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed" => Ok(MuMode::Fixed),
            "optimized" => Ok(MuMode::Optimized),
            _ => Err(format!("expected fixed or optimized, got `{s}`")),
        }
    }
}

impl MuMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MuMode::Fixed => "fixed",
            MuMode::Optimized => "optimized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepAxis {
    DistanceKm,
    #[default]
    LossDb,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "distance_km" => Ok(SweepAxis::DistanceKm),
            "loss_db" => Ok(SweepAxis::LossDb),
            _ => Err(format!("expected distance_km or loss_db, got `{s}`")),
        }
    }
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::DistanceKm => "distance_km",
            SweepAxis::LossDb => "loss_db",
        }
    }
}

/// How the evaluation point's transmittance was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatingPoint {
    Distance { km: f64 },
    Loss { db: f64, convention: LossConvention },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d_r_mm: f64,
    pub d_t_mm: f64,
    pub divergence_mrad: f64,
    /// No default: required whenever a distance enters the calculation.
    pub alpha_db_per_km: Option<f64>,
    pub eta_bob: f64,
    pub clamp_geometry: bool,

    pub p_dark: f64,
    pub e_det: f64,
    pub f_ec: f64,

    pub mu: f64,
    pub mu_mode: MuMode,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_tol: f64,

    pub distance_km: Option<f64>,
    pub loss_db: Option<f64>,
    pub loss_convention: LossConvention,

    pub sweep_axis: SweepAxis,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_steps: usize,

    pub cutoff_lo_db: f64,
    pub cutoff_hi_db: f64,
    pub cutoff_tol_db: f64,

    pub pulses: u64,
    pub batch_size: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ch = ChannelParams::default();
        let det = DetectorParams::default();
        let mu = MuRange::default();
        RunConfig {
            d_r_mm: ch.d_r_mm,
            d_t_mm: ch.d_t_mm,
            divergence_mrad: ch.divergence_mrad,
            alpha_db_per_km: None,
            eta_bob: ch.eta_bob,
            clamp_geometry: ch.clamp_geometry,
            p_dark: det.p_dark,
            e_det: det.e_det,
            f_ec: det.f_ec,
            mu: 0.5,
            mu_mode: MuMode::Fixed,
            mu_min: mu.lo(),
            mu_max: mu.hi(),
            mu_tol: DEFAULT_MU_TOL,
            distance_km: None,
            loss_db: None,
            loss_convention: LossConvention::default(),
            sweep_axis: SweepAxis::default(),
            sweep_start: 0.0,
            sweep_stop: 60.0,
            sweep_steps: 61,
            cutoff_lo_db: 0.0,
            cutoff_hi_db: 80.0,
            cutoff_tol_db: 0.01,
            pulses: 1_000_000,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
            out: None,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_u64(value: &str) -> std::result::Result<u64, String> {
    // Accept `1e7` style counts as long as they are exact integers.
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = parse(value)?;
    if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(format!("`{value}` is not a non-negative integer"))
    }
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn from_text(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                reason: format!("expected `key = value`, got `{body}`"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    reason: format!("duplicate key `{key}`"),
                });
            }
            cfg.set(key, value.trim())
                .map_err(|reason| Error::Config { line, reason })?;
        }
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let with_key = |e: String| format!("{key}: {e}");
        match key {
            "d_r_mm" => self.d_r_mm = parse(value).map_err(with_key)?,
            "d_t_mm" => self.d_t_mm = parse(value).map_err(with_key)?,
            "divergence_mrad" => self.divergence_mrad = parse(value).map_err(with_key)?,
            "alpha_db_per_km" => self.alpha_db_per_km = Some(parse(value).map_err(with_key)?),
            "eta_bob" => self.eta_bob = parse(value).map_err(with_key)?,
            "clamp_geometry" => self.clamp_geometry = parse(value).map_err(with_key)?,
            "p_dark" => self.p_dark = parse(value).map_err(with_key)?,
            "e_det" => self.e_det = parse(value).map_err(with_key)?,
            "f_ec" => self.f_ec = parse(value).map_err(with_key)?,
            "mu" => self.mu = parse(value).map_err(with_key)?,
            "mu_mode" => self.mu_mode = parse(value).map_err(with_key)?,
            "mu_min" => self.mu_min = parse(value).map_err(with_key)?,
            "mu_max" => self.mu_max = parse(value).map_err(with_key)?,
            "mu_tol" => self.mu_tol = parse(value).map_err(with_key)?,
            "distance_km" => self.distance_km = Some(parse(value).map_err(with_key)?),
            "loss_db" => self.loss_db = Some(parse(value).map_err(with_key)?),
            "loss_convention" => {
                self.loss_convention = value.parse().map_err(|e: Error| e.to_string())?
            }
            "sweep_axis" => self.sweep_axis = parse(value).map_err(with_key)?,
            "sweep_start" => self.sweep_start = parse(value).map_err(with_key)?,
            "sweep_stop" => self.sweep_stop = parse(value).map_err(with_key)?,
            "sweep_steps" => self.sweep_steps = parse_u64(value).map_err(with_key)? as usize,
            "cutoff_lo_db" => self.cutoff_lo_db = parse(value).map_err(with_key)?,
            "cutoff_hi_db" => self.cutoff_hi_db = parse(value).map_err(with_key)?,
            "cutoff_tol_db" => self.cutoff_tol_db = parse(value).map_err(with_key)?,
            "pulses" => self.pulses = parse_u64(value).map_err(with_key)?,
            "batch_size" => self.batch_size = parse_u64(value).map_err(with_key)?,
            "seed" => self.seed = parse_u64(value).map_err(with_key)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Serializes every key, omitting unset optional ones. Parsing the
    /// result reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("d_r_mm", self.d_r_mm.to_string());
        put("d_t_mm", self.d_t_mm.to_string());
        put("divergence_mrad", self.divergence_mrad.to_string());
        if let Some(a) = self.alpha_db_per_km {
            put("alpha_db_per_km", a.to_string());
        }
        put("eta_bob", self.eta_bob.to_string());
        put("clamp_geometry", self.clamp_geometry.to_string());
        put("p_dark", self.p_dark.to_string());
        put("e_det", self.e_det.to_string());
        put("f_ec", self.f_ec.to_string());
        put("mu", self.mu.to_string());
        put("mu_mode", self.mu_mode.as_str().to_string());
        put("mu_min", self.mu_min.to_string());
        put("mu_max", self.mu_max.to_string());
        put("mu_tol", self.mu_tol.to_string());
        if let Some(d) = self.distance_km {
            put("distance_km", d.to_string());
        }
        if let Some(l) = self.loss_db {
            put("loss_db", l.to_string());
        }
        put("loss_convention", self.loss_convention.as_str().to_string());
        put("sweep_axis", self.sweep_axis.as_str().to_string());
        put("sweep_start", self.sweep_start.to_string());
        put("sweep_stop", self.sweep_stop.to_string());
        put("sweep_steps", self.sweep_steps.to_string());
        put("cutoff_lo_db", self.cutoff_lo_db.to_string());
        put("cutoff_hi_db", self.cutoff_hi_db.to_string());
        put("cutoff_tol_db", self.cutoff_tol_db.to_string());
        put("pulses", self.pulses.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        if let Some(o) = &self.out {
            put("out", o.display().to_string());
        }
        s
    }

    pub fn detector(&self) -> Result<DetectorParams> {
        let det = DetectorParams {
            p_dark: self.p_dark,
            e_det: self.e_det,
            f_ec: self.f_ec,
        };
        det.validate()?;
        Ok(det)
    }

    /// Channel parameters; fails if `alpha_db_per_km` was never given.
    pub fn channel(&self) -> Result<ChannelParams> {
        let alpha = self.alpha_db_per_km.ok_or_else(|| {
            Error::invalid(
                "alpha_db_per_km",
                "required for distance-based evaluation (no default)",
            )
        })?;
        self.channel_with_alpha(alpha)
    }

    fn channel_with_alpha(&self, alpha_db_per_km: f64) -> Result<ChannelParams> {
        let ch = ChannelParams {
            d_r_mm: self.d_r_mm,
            d_t_mm: self.d_t_mm,
            divergence_mrad: self.divergence_mrad,
            alpha_db_per_km,
            eta_bob: self.eta_bob,
            clamp_geometry: self.clamp_geometry,
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn loss_model(&self) -> Result<LossModel> {
        LossModel::new(self.eta_bob, self.loss_convention)
    }

    pub fn mu_range(&self) -> Result<MuRange> {
        MuRange::new(self.mu_min, self.mu_max)
    }

    pub fn source(&self) -> Result<SourceParams> {
        SourceParams::new(self.mu)
    }

    /// Transmittance of the configured single evaluation point: `loss_db`
    /// if given, otherwise `distance_km` (default 0).
    pub fn operating_point(&self) -> Result<(OperatingPoint, f64)> {
        match (self.loss_db, self.distance_km) {
            (Some(_), Some(_)) => Err(Error::invalid(
                "loss_db",
                "set either loss_db or distance_km, not both",
            )),
            (Some(db), None) => {
                let eta = self.loss_model()?.transmittance(db)?;
                Ok((
                    OperatingPoint::Loss {
                        db,
                        convention: self.loss_convention,
                    },
                    eta,
                ))
            }
            (None, distance) => {
                let km = distance.unwrap_or(0.0);
                let link = LinkPoint::new(km)?;
                // Attenuation is irrelevant at zero length.
                let ch = if km == 0.0 {
                    self.channel_with_alpha(self.alpha_db_per_km.unwrap_or(0.0))?
                } else {
                    self.channel()?
                };
                let eta = overall_transmittance(&ch, link)?;
                if eta > 1.0 {
                    return Err(Error::invalid(
                        "clamp_geometry",
                        format!("unclamped geometry gives eta = {eta} > 1 at {km} km"),
                    ));
                }
                Ok((OperatingPoint::Distance { km }, eta))
            }
        }
    }

    /// Checks the sweep settings.
    pub fn validate_sweep(&self) -> Result<()> {
        if self.sweep_start.partial_cmp(&self.sweep_stop) != Some(std::cmp::Ordering::Less) {
            return Err(Error::invalid(
                "sweep_start",
                format!(
                    "sweep_start ({}) must be < sweep_stop ({})",
                    self.sweep_start, self.sweep_stop
                ),
            ));
        }
        if self.sweep_start < 0.0 {
            return Err(Error::invalid("sweep_start", "must be >= 0"));
        }
        if self.sweep_steps < 2 {
            return Err(Error::invalid("sweep_steps", "must be >= 2"));
        }
        if self.sweep_axis == SweepAxis::DistanceKm {
            self.channel()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let cfg = RunConfig::from_text(
            "# header\n\n  p_dark=2e-6  # trailing\n e_det = 0.01\nmu_mode = optimized\npulses = 1e7\n",
        )
        .unwrap();
        assert_eq!(cfg.p_dark, 2e-6);
        assert_eq!(cfg.e_det, 0.01);
        assert_eq!(cfg.mu_mode, MuMode::Optimized);
        assert_eq!(cfg.pulses, 10_000_000);
        assert_eq!(cfg.f_ec, 1.22);
    }

    #[test]
    fn reports_line_numbers() {
        let err = RunConfig::from_text("mu = 0.5\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err:?}");
        let err = RunConfig::from_text("mu = 0.5\nmu = 0.4\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        let err = RunConfig::from_text("mu 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
        let err = RunConfig::from_text("pulses = 1.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_text(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn key_list_matches_serializer() {
        let cfg = RunConfig {
            alpha_db_per_km: Some(0.2),
            distance_km: Some(1.0),
            loss_db: Some(3.0),
            out: Some("x.csv".into()),
            ..RunConfig::default()
        };
        let keys: Vec<String> = cfg
            .to_config_string()
            .lines()
            .map(|l| l.split(" = ").next().unwrap().to_string())
            .collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn operating_point_rules() {
        let cfg = RunConfig::default();
        let (p, eta) = cfg.operating_point().unwrap();
        assert_eq!(p, OperatingPoint::Distance { km: 0.0 });
        assert!((eta - 0.045).abs() < 1e-17);

        let far = RunConfig {
            distance_km: Some(5.0),
            ..RunConfig::default()
        };
        assert!(matches!(
            far.operating_point(),
            Err(Error::InvalidParameter {
                field: "alpha_db_per_km",
                ..
            })
        ));

        let both = RunConfig {
            distance_km: Some(5.0),
            loss_db: Some(10.0),
            ..RunConfig::default()
        };
        assert!(both.operating_point().is_err());

        let loss = RunConfig {
            loss_db: Some(10.0),
            loss_convention: LossConvention::IncludeEtaBob,
            ..RunConfig::default()
        };
        assert!((loss.operating_point().unwrap().1 - 0.1).abs() < 1e-16);

        let raw = RunConfig {
            clamp_geometry: false,
            eta_bob: 1.0,
            ..RunConfig::default()
        };
        assert!(raw.operating_point().is_err());
    }

    #[test]
    fn sweep_validation() {
        let mut cfg = RunConfig::default();
        cfg.validate_sweep().unwrap();
        cfg.sweep_steps = 1;
        assert!(cfg.validate_sweep().is_err());
        cfg.sweep_steps = 5;
        cfg.sweep_stop = cfg.sweep_start;
        assert!(cfg.validate_sweep().is_err());
        cfg.sweep_stop = 50.0;
        cfg.sweep_axis = SweepAxis::DistanceKm;
        assert!(cfg.validate_sweep().is_err());
        cfg.alpha_db_per_km = Some(0.1);
        cfg.validate_sweep().unwrap();
    }

    proptest! {
        #[test]
        fn round_trip(
            p_dark in 0.0f64..1e-3,
            e_det in 0.0f64..0.4,
            mu in 1e-4f64..1.0,
            alpha in proptest::option::of(0.0f64..3.0),
            loss in proptest::option::of(0.0f64..80.0),
            seed in any::<u64>(),
            steps in 2usize..1000,
            optimized in any::<bool>(),
        ) {
            let cfg = RunConfig {
                p_dark, e_det, mu,
                alpha_db_per_km: alpha,
                loss_db: loss,
                seed,
                sweep_steps: steps,
                mu_mode: if optimized { MuMode::Optimized } else { MuMode::Fixed },
                ..RunConfig::default()
            };
            prop_assert_eq!(RunConfig::from_text(&cfg.to_config_string()).unwrap(), cfg);
        }
    }
}
