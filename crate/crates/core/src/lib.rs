//! SARG04 quantum key distribution over free-space links.
//!
//! The crate evaluates the asymptotic secret key rate of a weak-coherent-pulse
//! SARG04 system from a closed-form channel and detector model, searches the
//! mean photon number that maximizes it, locates the loss budget at which the
//! key rate vanishes, and cross-checks the closed-form yields and error rates
//! against a pulse-by-pulse Monte Carlo run of the prepare/measure/sift
//! procedure.
//!
//! Module map:
//!
//! - [`channel`]: transmittance of the free-space link (aperture geometry and
//!   atmospheric attenuation) and dB conversions.
//! - [`ratemodel`]: Poisson source statistics, yields, error rates, gains and
//!   the key rate itself.
//! - [`optimizer`]: optimal mean photon number and loss cutoff search.
//! - [`protocol`]: polarization states, the sifting rule and the Monte Carlo
//!   simulator.
//! - [`cli`]: configuration files, sweeps, CSV output and the command
//!   implementations behind the `sarg04` binary.

pub mod channel;
pub mod cli;
pub mod error;
pub mod optimizer;
pub mod protocol;
pub mod ratemodel;

pub use error::{Error, Result};
