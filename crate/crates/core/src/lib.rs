//! Achievable outage rate regions of the two-user MISO interference channel.
//!
//! Four regions are supported: common or individual outage, with either
//! instantaneous or statistical channel state information at the
//! transmitters.
//!
//! * [`channel`] holds the Gaussian fading model and a reproducible sampler.
//! * [`rate`] has the per-realization rate expressions, the per-transmitter
//!   power frontier and the exact feasibility oracle for a rate pair.
//! * [`outage`] classifies realizations into cases and estimates their
//!   probabilities, and simulates the randomized on/off policy.
//! * [`regions`] decides region membership and traces boundaries.
//! * [`stat`] covers the statistical-CSI regions with closed-form success
//!   probabilities for fixed beamformers.
//! * [`config`] and [`run`] drive batch runs from a JSON config file.

pub mod channel;
pub mod config;
mod error;
pub mod optimize;
pub mod outage;
pub mod rate;
pub mod regions;
pub mod run;
pub mod stat;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Complex column vector used for channels and beamformers.
pub type CVector = nalgebra::DVector<Complex64>;
/// Complex square matrix used for covariances.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Receiver noise variances of the two links.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Noise {
    pub link1: f64,
    pub link2: f64,
}

impl Noise {
    pub fn new(link1: f64, link2: f64) -> Self {
        Noise { link1, link2 }
    }

    pub fn uniform(sigma_sq: f64) -> Self {
        Noise::new(sigma_sq, sigma_sq)
    }

    pub fn get(&self, link: Link) -> f64 {
        match link {
            Link::One => self.link1,
            Link::Two => self.link2,
        }
    }

    pub fn swapped(&self) -> Self {
        Noise::new(self.link2, self.link1)
    }

    pub fn validate(&self) -> Result<()> {
        for (link, value) in [(1, self.link1), (2, self.link2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveNoise { link, value });
            }
        }
        Ok(())
    }
}

/// One of the two transmitter/receiver pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Link {
    One,
    Two,
}

impl Link {
    pub fn other(self) -> Link {
        match self {
            Link::One => Link::Two,
            Link::Two => Link::One,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Link::One => 0,
            Link::Two => 1,
        }
    }
}
