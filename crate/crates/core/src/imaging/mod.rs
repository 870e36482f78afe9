//! 3-D reflectivity imaging from synchronized SFCW phasors.
//!
//! Two engines produce the same continuous image: [`fourier`] implements
//! range-migration (plane-wave decomposition, Stolt resampling and an inverse
//! transform) and needs a regular, well-sampled aperture; [`backprojection`]
//! correlates the data against the point-target model directly and works for
//! any receive layout, including sparse apertures that alias the Fourier
//! engine.

pub mod backprojection;
pub mod fourier;
pub mod resolution;

use std::io::{self, Write};

use ndarray::{Array3, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::signal::{cis_cycles, DemodulatedSignal, SfcwSpec};

pub use backprojection::{backprojection_image, backprojection_oracle};
pub use fourier::{reconstruct_image, stolt_resample};
pub use resolution::{azimuth_resolution, check_sampling, range_resolution, SamplingReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("aperture must be regular grid")]
    NotRegularGrid,
    #[error("reflection coefficient has zero magnitude")]
    ZeroGamma,
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("frequency axis is not strictly increasing")]
    NonMonotone,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Regular voxel lattice: voxel `(i, j, k)` sits at `origin + (i, j, k) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3]) -> Result<Self, ImagingError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(ImagingError::InvalidInput("voxel grid has an empty axis".into()));
        }
        if !spacing.iter().all(|s| *s > 0.0 && s.is_finite()) || !origin.iter().all(|v| v.is_finite()) {
            return Err(ImagingError::InvalidInput("voxel spacing must be positive and finite".into()));
        }
        Ok(Self { origin, spacing, dims })
    }

    /// Cubic-voxel grid covering `[lo, hi]`, centered on the box.
    pub fn covering(lo: Vec3, hi: Vec3, pitch: f64) -> Result<Self, ImagingError> {
        if !(pitch > 0.0) {
            return Err(ImagingError::InvalidInput(format!("voxel pitch must be positive, got {pitch}")));
        }
        let mut dims = [0usize; 3];
        let mut origin = Vec3::zeros();
        for a in 0..3 {
            let extent = (hi[a] - lo[a]).max(0.0);
            let n = (extent / pitch - 1e-9).ceil().max(0.0) as usize + 1;
            dims[a] = n;
            origin[a] = 0.5 * (lo[a] + hi[a]) - 0.5 * pitch * (n - 1) as f64;
        }
        Self::new(origin, Vec3::repeat(pitch), dims)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, a: usize) -> Vec<f64> {
        (0..self.dims[a])
            .map(|i| self.origin[a] + i as f64 * self.spacing[a])
            .collect()
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing)
    }

    pub fn max_corner(&self) -> Vec3 {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Nearest voxel index to `p`, if `p` falls inside the grid (half a voxel of slack).
    pub fn index_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing[a]).round();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = f as usize;
        }
        Some(idx)
    }
}

/// Continuous complex image on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelImage {
    pub grid: VoxelGrid,
    pub values: Array3<Complex64>,
}

impl VoxelImage {
    pub fn zeros(grid: VoxelGrid) -> Self {
        Self {
            values: Array3::zeros((grid.dims[0], grid.dims[1], grid.dims[2])),
            grid,
        }
    }

    /// `|I| / max |I|`, all zeros for an empty image.
    pub fn normalized(&self) -> Array3<f64> {
        let mag = self.values.mapv(|v| v.norm());
        let max = mag.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            mag / max
        } else {
            mag
        }
    }

    /// Index and position of the largest-magnitude voxel (first in row-major order on ties).
    pub fn argmax(&self) -> ([usize; 3], Vec3) {
        let mut best = (0.0, [0usize; 3]);
        for ((i, j, k), v) in self.values.indexed_iter() {
            let m = v.norm();
            if m > best.0 {
                best = (m, [i, j, k]);
            }
        }
        let [i, j, k] = best.1;
        (best.1, self.grid.point(i, j, k))
    }
}

/// Thresholded occupancy `|I_norm| >= nu`, together with the normalized magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub grid: VoxelGrid,
    pub nu: f64,
    pub magnitude: Array3<f64>,
    pub occupied: Array3<bool>,
}

impl BinaryImage {
    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|b| **b).count()
    }

    /// Voxel centers of occupied voxels with their normalized magnitude.
    pub fn points(&self) -> Vec<(Vec3, f64)> {
        self.occupied
            .indexed_iter()
            .filter(|(_, o)| **o)
            .map(|((i, j, k), _)| (self.grid.point(i, j, k), self.magnitude[[i, j, k]]))
            .collect()
    }
}

pub fn threshold_image(img: &VoxelImage, nu: f64) -> Result<BinaryImage, ImagingError> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(ImagingError::InvalidThreshold(nu));
    }
    let magnitude = img.normalized();
    let occupied = magnitude.mapv(|m| m >= nu);
    Ok(BinaryImage {
        grid: img.grid,
        nu,
        magnitude,
        occupied,
    })
}

/// Re-references SFCW phasors demodulated against `sigma_tilde_used` to `sigma_hat`.
pub fn resync_phasors(sig: &DemodulatedSignal, spec: &SfcwSpec, sigma_hat: f64) -> DemodulatedSignal {
    let shift = sigma_hat - sig.sigma_tilde_used;
    let rot: Vec<Complex64> = spec.freqs().iter().map(|f| cis_cycles(-f, shift)).collect();
    let mut out = sig.clone();
    for mut lane in out.sfcw.lanes_mut(Axis(2)) {
        Zip::from(&mut lane).and(&rot[..]).for_each(|v, r| *v *= r);
    }
    out.sigma_tilde_used = sigma_hat;
    out
}

/// One path's `[rx][freq]` slab of the SFCW tensor.
pub fn path_slab(sig: &DemodulatedSignal, path: usize) -> ArrayView2<'_, Complex64> {
    sig.sfcw.index_axis(Axis(0), path)
}

/// Writes `x y z value` lines.
pub fn write_point_cloud<W: Write>(mut w: W, points: &[(Vec3, f64)]) -> io::Result<()> {
    for (p, v) in points {
        writeln!(w, "{:.6} {:.6} {:.6} {:.6}", p.x, p.y, p.z, v)?;
    }
    Ok(())
}

pub fn read_point_cloud(text: &str) -> Result<Vec<(Vec3, f64)>, ImagingError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ImagingError::InvalidInput(format!("bad point-cloud line {line:?}: {e}")))?;
            match vals[..] {
                [x, y, z, v] => Ok((Vec3::new(x, y, z), v)),
                _ => Err(ImagingError::InvalidInput(format!("expected 4 columns: {line:?}"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AntennaArray, Scenario};
    use crate::signal::{simulate_sfcw, SfcwSpec};

    fn grid() -> VoxelGrid {
        VoxelGrid::new(Vec3::zeros(), Vec3::repeat(0.1), [3, 4, 5]).unwrap()
    }

    #[test]
    fn covering_grid_is_centered() {
        let g = VoxelGrid::covering(Vec3::new(-1.0, 0.0, 2.0), Vec3::new(1.0, 0.5, 2.0), 0.25).unwrap();
        assert_eq!(g.dims, [9, 3, 1]);
        assert!((g.origin - Vec3::new(-1.0, 0.0, 2.0)).norm() < 1e-12);
        assert!((g.max_corner() - Vec3::new(1.0, 0.5, 2.0)).norm() < 1e-12);
        assert_eq!(g.index_of(&Vec3::new(0.01, 0.26, 2.0)), Some([4, 1, 0]));
        assert_eq!(g.index_of(&Vec3::new(5.0, 0.0, 2.0)), None);
    }

    #[test]
    fn threshold_edges() {
        let mut img = VoxelImage::zeros(grid());
        img.values[[1, 2, 3]] = Complex64::new(0.0, 4.0);
        img.values[[0, 0, 0]] = Complex64::new(2.0, 0.0);
        let all = threshold_image(&img, 0.0).unwrap();
        assert_eq!(all.count(), grid().len());
        let top = threshold_image(&img, 1.0).unwrap();
        assert_eq!(top.count(), 1);
        assert!(top.occupied[[1, 2, 3]]);
        let half = threshold_image(&img, 0.5).unwrap();
        assert_eq!(half.count(), 2);
        assert!(threshold_image(&img, 1.5).is_err());
        assert_eq!(img.argmax().0, [1, 2, 3]);
    }

    #[test]
    fn empty_image_normalizes_to_zero() {
        let img = VoxelImage::zeros(grid());
        assert!(img.normalized().iter().all(|v| *v == 0.0));
    }

    fn signal() -> (DemodulatedSignal, SfcwSpec, Scenario) {
        let spec = SfcwSpec::new(57e9, 16, 20e6).unwrap();
        let scn = Scenario {
            sv: AntennaArray::planar_grid(Vec3::zeros(), 0.1, 0.1, 2, 2),
            tv: AntennaArray::new(vec![Vec3::new(0.2, 0.1, 3.0), Vec3::new(0.0, 0.0, 3.5)]),
            rep_a: 0,
            rep_b: 1,
            include_los: true,
            mirrors: vec![],
            sigma: 4e-9,
            phase_noise_std: 0.0,
        };
        let sfcw = simulate_sfcw(&scn, &spec, 1e-9);
        let sig = DemodulatedSignal {
            sw_alpha: Array3::zeros((1, 4, 2)),
            sw_beta: Array3::zeros((1, 4, 2)),
            sfcw,
            sigma_tilde_used: 1e-9,
        };
        (sig, spec, scn)
    }

    #[test]
    fn resync_identity_and_inverse() {
        let (sig, spec, _) = signal();
        let same = resync_phasors(&sig, &spec, 1e-9);
        for (a, b) in same.sfcw.iter().zip(sig.sfcw.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let there = resync_phasors(&sig, &spec, 7e-9);
        let back = resync_phasors(&there, &spec, 1e-9);
        for (a, b) in back.sfcw.iter().zip(sig.sfcw.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn resync_to_true_gap_leaves_flight_phase() {
        let (sig, spec, mut scn) = signal();
        scn.tv.points.truncate(1);
        let one = DemodulatedSignal {
            sfcw: simulate_sfcw(&scn, &spec, 1e-9),
            ..sig
        };
        let synced = resync_phasors(&one, &spec, scn.sigma);
        for m in 0..4 {
            let tau = (scn.tv.points[0] - scn.sv.points[m]).norm() / crate::geometry::SPEED_OF_LIGHT;
            for k in 0..spec.num_freqs {
                let expected = cis_cycles(-spec.freq(k), tau);
                assert!((synced.sfcw[[0, m, k]] - expected).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn point_cloud_round_trip() {
        let pts = vec![(Vec3::new(1.0, -2.5, 3.25), 0.75), (Vec3::new(0.0, 0.0, 0.0), 1.0)];
        let mut buf = Vec::new();
        write_point_cloud(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "1.000000 -2.500000 3.250000 0.750000");
        let back = read_point_cloud(&text).unwrap();
        assert_eq!(back, pts);
        assert!(read_point_cloud("1 2 3").is_err());
    }
}
