//! Resolution and sampling calculators.

use serde::Serialize;

use super::ImagingError;
use crate::geometry::SPEED_OF_LIGHT;

/// Relative slack applied to the sampling rules so that configurations sitting
/// exactly on a limit (up to the rounding in quoted parameters) pass.
const RULE_SLACK: f64 = 1e-3;

/// Cross-range resolution `c sqrt(R^2 + D^2) / (2 f_c D)` for an aperture of
/// size `r` observing at range `d`.
pub fn azimuth_resolution(f_c: f64, r: f64, d: f64) -> Result<f64, ImagingError> {
    if !(d > 0.0) {
        return Err(ImagingError::InvalidInput(format!("range must be positive, got {d}")));
    }
    if !(f_c > 0.0) {
        return Err(ImagingError::InvalidInput(format!("center frequency must be positive, got {f_c}")));
    }
    Ok(SPEED_OF_LIGHT * (r * r + d * d).sqrt() / (2.0 * f_c * d))
}

/// Range resolution `c / (f_K - f_1)`.
pub fn range_resolution(f1: f64, f_k: f64) -> Result<f64, ImagingError> {
    if !(f_k > f1) {
        return Err(ImagingError::InvalidInput(format!("need f_K > f_1, got {f_k} <= {f1}")));
    }
    Ok(SPEED_OF_LIGHT / (f_k - f1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingReport {
    pub spacing_x: f64,
    pub spacing_y: f64,
    /// `c / (2 f_c)`
    pub spacing_limit: f64,
    pub spatial_pass: bool,
    /// `spacing_limit / max(spacing)`; below 1 means undersampled.
    pub spatial_margin: f64,
    pub delta: f64,
    /// `c / R_max`
    pub delta_limit: f64,
    pub frequency_pass: bool,
    pub frequency_margin: f64,
}

impl SamplingReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !self.spatial_pass {
            w.push(format!(
                "aperture spacing {:.4} m x {:.4} m exceeds the spatial Nyquist limit {:.4} m ({:.1}x undersampled); expect grating lobes",
                self.spacing_x,
                self.spacing_y,
                self.spacing_limit,
                1.0 / self.spatial_margin
            ));
        }
        if !self.frequency_pass {
            w.push(format!(
                "frequency step {:.4e} Hz exceeds c / R_max = {:.4e} Hz; range ambiguity inside the scene",
                self.delta, self.delta_limit
            ));
        }
        w
    }
}

/// Checks the spatial rule `dx, dy <= c / (2 f_c)` and the frequency rule
/// `delta <= c / R_max`. Violations are reported, never rejected.
pub fn check_sampling(dx: f64, dy: f64, f_c: f64, delta: f64, r_max: f64) -> SamplingReport {
    let spacing_limit = SPEED_OF_LIGHT / (2.0 * f_c);
    let worst = dx.max(dy);
    let spatial_margin = if worst > 0.0 { spacing_limit / worst } else { f64::INFINITY };
    let delta_limit = SPEED_OF_LIGHT / r_max;
    let frequency_margin = delta_limit / delta;
    SamplingReport {
        spacing_x: dx,
        spacing_y: dy,
        spacing_limit,
        spatial_pass: spatial_margin >= 1.0 - RULE_SLACK,
        spatial_margin,
        delta,
        delta_limit,
        frequency_pass: frequency_margin >= 1.0 - RULE_SLACK,
        frequency_margin,
    }
}
