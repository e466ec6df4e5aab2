//! Link physics: free-space loss, light time, achievable data rates.
//!
//! Free-space loss for an isotropic pair at range R and wavelength
//! lambda = c / f:
//!
//! ```text
//! L_s = (lambda / (4 * pi * R))^2          (dimensionless, (0, 1] far field)
//! path loss = -10 * log10(L_s)             (dB)
//! ```
//!
//! One-way light time is R / c. Achievable rate scales from a per-band
//! reference point by the inverse square of range:
//!
//! ```text
//! forward = reference_rate * (reference_range / range)^2
//! return  = forward / asymmetry_ratio
//! ```
//!
//! Antenna gains, coding, and weather are deliberately absorbed into the
//! per-band reference rate and a scalar atmospheric margin reported in link
//! budgets; they never perturb the rate law above.
//!
//! Units: meters, seconds, Hz, bits/s, dB.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::SPEED_OF_LIGHT_M_S;

// --------------------------------------------------------------------- bands

/// A named RF or optical band with its rate reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub frequency_hz: f64,
    /// Forward-direction rate achieved at `reference_range_m`.
    pub reference_rate_bps: f64,
    pub reference_range_m: f64,
    /// Forward:return rate ratio, >= 1.
    pub asymmetry_ratio: f64,
    /// Scalar weather/pointing margin folded into reported budgets, dB.
    pub atmospheric_margin_db: f64,
    /// Dead time at the start of every contact before bits can flow
    /// (pointing and acquisition; 60 s is typical for optical, 0 for RF).
    pub acquisition_delay_s: f64,
    /// Hardware ceiling on the forward rate; inverse-square scaling can
    /// otherwise produce absurd rates at proximity ranges.
    pub max_rate_bps: Option<f64>,
    /// Forward rates below this floor count as no link at all.
    pub min_rate_bps: f64,
}

impl BandSpec {
    /// Validates physical plausibility, including the conventional RF
    /// allocations when a band is actually named "X" or "Ka".
    pub fn validate(&self) -> Result<(), LinkModelError> {
        if self.frequency_hz <= 0.0 {
            return Err(LinkModelError::InvalidBand(
                self.name.clone(),
                format!("frequency must be positive, got {}", self.frequency_hz),
            ));
        }
        if self.reference_rate_bps <= 0.0 || self.reference_range_m <= 0.0 {
            return Err(LinkModelError::InvalidBand(
                self.name.clone(),
                "reference rate and range must be positive".into(),
            ));
        }
        if self.asymmetry_ratio < 1.0 {
            return Err(LinkModelError::InvalidBand(
                self.name.clone(),
                format!("asymmetry ratio must be >= 1, got {}", self.asymmetry_ratio),
            ));
        }
        if self.acquisition_delay_s < 0.0 || self.atmospheric_margin_db < 0.0 {
            return Err(LinkModelError::InvalidBand(
                self.name.clone(),
                "acquisition delay and margin must be non-negative".into(),
            ));
        }
        let ghz = self.frequency_hz / 1e9;
        match self.name.to_ascii_lowercase().as_str() {
            "x" if !(8.0..=12.4).contains(&ghz) => Err(LinkModelError::InvalidBand(
                self.name.clone(),
                format!("X band must lie in 8-12.4 GHz, got {ghz} GHz"),
            )),
            "ka" if !(26.5..=40.0).contains(&ghz) => Err(LinkModelError::InvalidBand(
                self.name.clone(),
                format!("Ka band must lie in 26.5-40 GHz, got {ghz} GHz"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum LinkModelError {
    #[error("band \"{0}\": {1}")]
    InvalidBand(String, String),
    #[error("range must be positive, got {0} m")]
    NonPositiveRange(f64),
}

// ------------------------------------------------------------------- physics

/// Carrier wavelength c / f, meters.
pub fn wavelength_m(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT_M_S / frequency_hz
}

/// Free-space loss (lambda / (4 pi R))^2. Dimensionless; (0, 1] in the far
/// field (R >= lambda / 4 pi).
pub fn free_space_loss(range_m: f64, frequency_hz: f64) -> Result<f64, LinkModelError> {
    if range_m <= 0.0 {
        return Err(LinkModelError::NonPositiveRange(range_m));
    }
    let x = wavelength_m(frequency_hz) / (4.0 * std::f64::consts::PI * range_m);
    Ok(x * x)
}

/// Path loss in dB: -10 log10(L_s).
pub fn path_loss_db(free_space_loss: f64) -> f64 {
    -10.0 * free_space_loss.log10()
}

/// One-way light time R / c, seconds.
pub fn owlt_s(range_m: f64) -> f64 {
    range_m / SPEED_OF_LIGHT_M_S
}

/// Forward and return achievable rates at `range_m`, bits/s.
///
/// The forward rate follows the inverse-square law from the band's
/// reference point, clipped by the band's hardware ceiling; rates below the
/// band's floor collapse to (0, 0). The return rate is always
/// forward / asymmetry_ratio, so the directional ratio is exact wherever a
/// link exists at all.
pub fn achievable_rate(band: &BandSpec, range_m: f64) -> Result<(f64, f64), LinkModelError> {
    if range_m <= 0.0 {
        return Err(LinkModelError::NonPositiveRange(range_m));
    }
    let scale = band.reference_range_m / range_m;
    let mut forward = band.reference_rate_bps * (scale * scale);
    if let Some(cap) = band.max_rate_bps {
        forward = forward.min(cap);
    }
    if forward < band.min_rate_bps {
        return Ok((0.0, 0.0));
    }
    Ok((forward, forward / band.asymmetry_ratio))
}

// -------------------------------------------------------------- link budgets

/// A point link budget at a single range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkBudget {
    pub range_m: f64,
    pub wavelength_m: f64,
    pub free_space_loss: f64,
    /// -10 log10(L_s), before margin.
    pub path_loss_db: f64,
    /// Path loss plus the band's scalar atmospheric margin.
    pub total_loss_db: f64,
    pub owlt_s: f64,
    pub forward_rate_bps: f64,
    pub return_rate_bps: f64,
}

/// Evaluates the full budget for `band` at `range_m`.
pub fn link_budget(band: &BandSpec, range_m: f64) -> Result<LinkBudget, LinkModelError> {
    let fsl = free_space_loss(range_m, band.frequency_hz)?;
    let (forward, ret) = achievable_rate(band, range_m)?;
    let loss_db = path_loss_db(fsl);
    Ok(LinkBudget {
        range_m,
        wavelength_m: wavelength_m(band.frequency_hz),
        free_space_loss: fsl,
        path_loss_db: loss_db,
        total_loss_db: loss_db + band.atmospheric_margin_db,
        owlt_s: owlt_s(range_m),
        forward_rate_bps: forward,
        return_rate_bps: ret,
    })
}

// --------------------------------------------------------------------- tests
