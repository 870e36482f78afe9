//! Scenario files: JSON schema, validation and `key=value` overrides.
//!
//! ```json
//! {
//!   "sv_aperture": {"origin": [0, 0, 0], "width_m": 1.0, "height_m": 1.0, "nx": 16, "ny": 16},
//!   "tv": {"center": [10, 0, 0.5], "size_m": [3, 1, 0.6], "lattice_pitch_m": 0.2,
//!          "lattice_counts": [16, 4, 4], "rep_a": 0, "rep_b": null},
//!   "mirrors": [{"a": 1.02, "b": 3.0, "gamma_mag": 1.0, "gamma_phase": 0.0},
//!               {"vertical_x": 20.0}],
//!   "sigma_s": 1e-9, "phase_noise_std_rad": 0.0, "seed": 1,
//!   "sfcw": {"f1_hz": 57e9, "num_freqs": 512, "delta_hz": 5.86e6},
//!   "sw": null, "los": false,
//!   "imaging": {"engine": "auto", "voxel_m": null, "margin_m": 0.6, "nu": 0.5, "max_extent_m": 8.0}
//! }
//! ```
//!
//! `origin` is the lower-left corner of the receive aperture, which lies in
//! the plane `z = origin.z`. `rep_b: null` picks the last TV antenna. `sw:
//! null` places the two signature tones just below the SFCW band.
//! `voxel_m: null` uses half the finer of the azimuth and range resolutions
//! at the TV distance.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{AntennaArray, MirrorPlane, Scenario, Vec3, SPEED_OF_LIGHT};
use crate::imaging::{azimuth_resolution, range_resolution};
use crate::signal::{SfcwSpec, SwSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("invalid override `{0}`: expected key=value")]
    OverrideSyntax(String),
    #[error("unknown field `{0}` in override")]
    UnknownField(String),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureConfig {
    pub origin: [f64; 3],
    pub width_m: f64,
    pub height_m: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvConfig {
    pub center: [f64; 3],
    pub size_m: [f64; 3],
    pub lattice_pitch_m: f64,
    /// Explicit per-axis lattice counts; overrides `lattice_pitch_m`.
    #[serde(default)]
    pub lattice_counts: Option<[usize; 3]>,
    pub rep_a: usize,
    #[serde(default)]
    pub rep_b: Option<usize>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MirrorConfig {
    /// `z = a x + b`.
    Sloped {
        a: f64,
        b: f64,
        #[serde(default = "one")]
        gamma_mag: f64,
        #[serde(default)]
        gamma_phase: f64,
    },
    Vertical {
        vertical_x: f64,
        #[serde(default = "one")]
        gamma_mag: f64,
        #[serde(default)]
        gamma_phase: f64,
    },
}

impl MirrorConfig {
    pub fn to_plane(&self) -> MirrorPlane {
        match *self {
            MirrorConfig::Sloped { a, b, gamma_mag, gamma_phase } => {
                MirrorPlane::sloped(a, b, Complex64::from_polar(gamma_mag, gamma_phase))
            }
            MirrorConfig::Vertical { vertical_x, gamma_mag, gamma_phase } => {
                MirrorPlane::vertical(vertical_x, Complex64::from_polar(gamma_mag, gamma_phase))
            }
        }
    }

    fn gamma_mag(&self) -> f64 {
        match *self {
            MirrorConfig::Sloped { gamma_mag, .. } | MirrorConfig::Vertical { gamma_mag, .. } => gamma_mag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfcwConfig {
    pub f1_hz: f64,
    pub num_freqs: usize,
    pub delta_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwConfig {
    pub f_a_hz: f64,
    pub f_b_hz: f64,
    pub delta_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Range migration when the aperture is sampled finely enough, back-projection otherwise.
    Auto,
    Fourier,
    Backprojection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    #[serde(default = "ImagingConfig::default_engine")]
    pub engine: Engine,
    #[serde(default)]
    pub voxel_m: Option<f64>,
    #[serde(default = "ImagingConfig::default_margin")]
    pub margin_m: f64,
    #[serde(default = "ImagingConfig::default_nu")]
    pub nu: f64,
    #[serde(default = "ImagingConfig::default_max_extent")]
    pub max_extent_m: f64,
}

impl ImagingConfig {
    fn default_engine() -> Engine {
        Engine::Auto
    }
    fn default_margin() -> f64 {
        0.6
    }
    fn default_nu() -> f64 {
        0.5
    }
    fn default_max_extent() -> f64 {
        8.0
    }
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            engine: Self::default_engine(),
            voxel_m: None,
            margin_m: Self::default_margin(),
            nu: Self::default_nu(),
            max_extent_m: Self::default_max_extent(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sv_aperture: ApertureConfig,
    pub tv: TvConfig,
    pub mirrors: Vec<MirrorConfig>,
    pub sigma_s: f64,
    pub phase_noise_std_rad: f64,
    pub seed: u64,
    pub sfcw: SfcwConfig,
    #[serde(default)]
    pub sw: Option<SwConfig>,
    #[serde(default)]
    pub los: bool,
    #[serde(default)]
    pub imaging: ImagingConfig,
}

/// Short names accepted in overrides.
const ALIASES: &[(&str, &str)] = &[
    ("sigma", "sigma_s"),
    ("phase_noise_std", "phase_noise_std_rad"),
];

fn resolve_alias(key: &str) -> String {
    let mut parts: Vec<&str> = key.split('.').collect();
    if let Some((_, full)) = ALIASES.iter().find(|(short, _)| *short == parts[0]) {
        parts[0] = full;
    }
    parts.join(".")
}

/// Sets `key` (dotted path, numeric segments index arrays) to `value`, parsed
/// as JSON when possible and as a string otherwise. Only existing keys, or
/// keys that the schema knows with a default, may be set.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::OverrideSyntax(assignment.to_string()))?;
    let key = resolve_alias(key.trim());
    let raw = raw.trim();
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                if !map.contains_key(*part) || map[*part].is_null() {
                    map.insert(part.to_string(), Value::Object(Default::default()));
                }
                map.get_mut(*part).expect("just inserted")
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| ConfigError::UnknownField(key.clone()))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| field_err(key.clone(), format!("index {idx} out of range ({len} entries)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(ConfigError::UnknownField(key.clone())),
        };
    }
    Ok(())
}

/// Reads, overrides and validates a scenario file.
pub fn load(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text, overrides)
}

pub fn from_str(text: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: ScenarioConfig = serde_json::from_value(doc).map_err(|e| {
        let msg = e.to_string();
        match msg.strip_prefix("unknown field `") {
            Some(rest) => ConfigError::UnknownField(rest.split('`').next().unwrap_or(rest).to_string()),
            None => ConfigError::Parse(msg),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_err(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(field: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(field_err(field, "must be finite"))
    }
}

impl ScenarioConfig {
    pub fn sfcw_spec(&self) -> SfcwSpec {
        SfcwSpec {
            f1: self.sfcw.f1_hz,
            num_freqs: self.sfcw.num_freqs,
            delta: self.sfcw.delta_hz,
        }
    }

    pub fn sw_spec(&self) -> SwSpec {
        match &self.sw {
            Some(sw) => SwSpec {
                f_a: sw.f_a_hz,
                f_b: sw.f_b_hz,
                delta: sw.delta_hz,
            },
            None => SwSpec::below(&self.sfcw_spec()),
        }
    }

    pub fn aperture(&self) -> AntennaArray {
        let a = &self.sv_aperture;
        let center = Vec3::from(a.origin) + Vec3::new(0.5 * a.width_m, 0.5 * a.height_m, 0.0);
        AntennaArray::planar_grid(center, a.width_m, a.height_m, a.nx, a.ny)
    }

    pub fn tv_counts(&self) -> [usize; 3] {
        self.tv
            .lattice_counts
            .unwrap_or_else(|| AntennaArray::lattice_counts(self.tv.size_m, self.tv.lattice_pitch_m))
    }

    pub fn tv_array(&self) -> AntennaArray {
        AntennaArray::box_surface(Vec3::from(self.tv.center), self.tv.size_m, self.tv_counts())
    }

    pub fn scenario(&self) -> Scenario {
        let tv = self.tv_array();
        let rep_b = self.tv.rep_b.unwrap_or(tv.len().saturating_sub(1));
        Scenario {
            sv: self.aperture(),
            tv,
            rep_a: self.tv.rep_a,
            rep_b,
            include_los: self.los,
            mirrors: self.mirrors.iter().map(MirrorConfig::to_plane).collect(),
            sigma: self.sigma_s,
            phase_noise_std: self.phase_noise_std_rad,
        }
    }

    /// Distance from the aperture center to the TV center.
    pub fn tv_range(&self) -> f64 {
        let a = &self.sv_aperture;
        let center = Vec3::from(a.origin) + Vec3::new(0.5 * a.width_m, 0.5 * a.height_m, 0.0);
        (Vec3::from(self.tv.center) - center).norm()
    }

    /// Configured voxel pitch, or half the finer resolution at the TV range.
    pub fn voxel_pitch(&self) -> f64 {
        if let Some(v) = self.imaging.voxel_m {
            return v;
        }
        let spec = self.sfcw_spec();
        let d = self.sv_aperture.width_m.max(self.sv_aperture.height_m);
        let az = azimuth_resolution(spec.center(), self.tv_range(), d).unwrap_or(f64::INFINITY);
        let rg = range_resolution(spec.f1, spec.f_last()).unwrap_or(f64::INFINITY);
        0.5 * az.min(rg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.sv_aperture;
        finite("sv_aperture.origin", &a.origin)?;
        positive("sv_aperture.width_m", a.width_m)?;
        positive("sv_aperture.height_m", a.height_m)?;
        if a.nx < 2 || a.ny < 2 {
            return Err(field_err("sv_aperture.nx", "nx and ny must both be >= 2"));
        }

        let tv = &self.tv;
        finite("tv.center", &tv.center)?;
        for (i, s) in tv.size_m.iter().enumerate() {
            positive(&format!("tv.size_m.{i}"), *s)?;
        }
        positive("tv.lattice_pitch_m", tv.lattice_pitch_m)?;
        if let Some(c) = tv.lattice_counts {
            if c.iter().any(|&n| n < 2) {
                return Err(field_err("tv.lattice_counts", "every count must be >= 2"));
            }
        }
        let tv_arr = self.tv_array();
        if tv.rep_a >= tv_arr.len() {
            return Err(field_err("tv.rep_a", format!("index {} out of range ({} antennas)", tv.rep_a, tv_arr.len())));
        }
        let rep_b = tv.rep_b.unwrap_or(tv_arr.len() - 1);
        if rep_b >= tv_arr.len() {
            return Err(field_err("tv.rep_b", format!("index {rep_b} out of range ({} antennas)", tv_arr.len())));
        }
        let (pa, pb) = (tv_arr.points[tv.rep_a], tv_arr.points[rep_b]);
        if (pa.x - pb.x).hypot(pa.z - pb.z) < 1e-9 {
            return Err(field_err("tv.rep_b", "representative antennas must differ in the XZ plane"));
        }

        for (i, m) in self.mirrors.iter().enumerate() {
            let field = format!("mirrors.{i}");
            match *m {
                MirrorConfig::Sloped { a, b, gamma_phase, .. } => finite(&field, &[a, b, gamma_phase])?,
                MirrorConfig::Vertical { vertical_x, gamma_phase, .. } => finite(&field, &[vertical_x, gamma_phase])?,
            }
            positive(&format!("{field}.gamma_mag"), m.gamma_mag())?;
        }
        let paths = self.mirrors.len() + usize::from(self.los);
        if paths < 3 {
            return Err(field_err("mirrors", format!("position mapping needs at least 3 paths, got {paths}")));
        }

        finite("sigma_s", &[self.sigma_s])?;
        if !(self.phase_noise_std_rad >= 0.0 && self.phase_noise_std_rad.is_finite()) {
            return Err(field_err("phase_noise_std_rad", "must be finite and >= 0"));
        }
        let spec = self.sfcw_spec();
        spec.validate().map_err(|e| field_err("sfcw", e.to_string()))?;
        let sw = self.sw_spec();
        sw.validate(&spec).map_err(|e| field_err("sw", e.to_string()))?;

        let im = &self.imaging;
        if let Some(v) = im.voxel_m {
            positive("imaging.voxel_m", v)?;
        }
        positive("imaging.max_extent_m", im.max_extent_m)?;
        if !(im.margin_m >= 0.0 && im.margin_m.is_finite()) {
            return Err(field_err("imaging.margin_m", "must be finite and >= 0"));
        }
        if !(im.nu > 0.0 && im.nu <= 1.0) {
            return Err(field_err("imaging.nu", format!("must lie in (0, 1], got {}", im.nu)));
        }

        let scn = self.scenario();
        scn.validate().map_err(|e| field_err("scenario", e.to_string()))?;
        self.check_path_geometry(&scn, &sw)
    }

    /// Every image must lie in front of the aperture, and every signature
    /// delay must satisfy `0 <= tau - sigma < 1 / delta` so that absolute
    /// phase differences unwrap uniquely.
    fn check_path_geometry(&self, scn: &Scenario, sw: &SwSpec) -> Result<(), ConfigError> {
        let z0 = self.sv_aperture.origin[2];
        let window = 1.0 / sw.delta;
        let (pa, pb) = scn.rep_points();
        for (l, path) in scn.paths().iter().enumerate() {
            for p in [pa, pb] {
                let image = path.image_of(&p);
                if image.z <= z0 {
                    return Err(field_err(
                        format!("paths.{l}"),
                        format!("image of a representative antenna at z = {:.3} lies behind the aperture", image.z),
                    ));
                }
                for rx in &scn.sv.points {
                    let lag = path.delay(&p, rx) - self.sigma_s;
                    if !(0.0..window).contains(&lag) {
                        return Err(field_err(
                            "sigma_s",
                            format!(
                                "path {l}: tau - sigma = {lag:.4e} s outside [0, {window:.4e}) s ({:.1} m unambiguous range)",
                                window * SPEED_OF_LIGHT
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
