//! Matched-filter back-projection: correlate each voxel against the
//! point-target phase history `exp(+j 2 pi f_k |v - p_m| / c)`.

use ndarray::ArrayView2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::{ImagingError, VoxelGrid, VoxelImage};
use crate::geometry::{AntennaArray, SPEED_OF_LIGHT};
use crate::signal::{cis_cycles, SfcwSpec};

fn check_inputs(data: &ArrayView2<'_, Complex64>, rx: &AntennaArray, spec: &SfcwSpec, gamma: Complex64) -> Result<(), ImagingError> {
    if gamma.norm() == 0.0 {
        return Err(ImagingError::ZeroGamma);
    }
    if data.dim() != (rx.len(), spec.num_freqs) {
        return Err(ImagingError::InvalidInput(format!(
            "data shape {:?} does not match {} rx x {} freqs",
            data.dim(),
            rx.len(),
            spec.num_freqs
        )));
    }
    Ok(())
}

fn fill(grid: &VoxelGrid, voxel: impl Fn(crate::geometry::Vec3) -> Complex64 + Sync) -> VoxelImage {
    let [nx, ny, nz] = grid.dims;
    let values: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let (i, rest) = (flat / (ny * nz), flat % (ny * nz));
            let (j, k) = (rest / nz, rest % nz);
            voxel(grid.point(i, j, k))
        })
        .collect();
    VoxelImage {
        grid: *grid,
        values: ndarray::Array3::from_shape_vec((nx, ny, nz), values).expect("grid length"),
    }
}

/// Exact direct sum over every receive antenna and tone. Slow; used as the
/// reference for both fast engines.
pub fn backprojection_oracle(
    data: ArrayView2<'_, Complex64>,
    rx: &AntennaArray,
    spec: &SfcwSpec,
    gamma: Complex64,
    grid: &VoxelGrid,
) -> Result<VoxelImage, ImagingError> {
    check_inputs(&data, rx, spec, gamma)?;
    let freqs = spec.freqs();
    let inv_gamma = gamma.inv();
    Ok(fill(grid, |v| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, p) in rx.points.iter().enumerate() {
            let t = (v - p).norm() / SPEED_OF_LIGHT;
            for (k, f) in freqs.iter().enumerate() {
                acc += data[[m, k]] * cis_cycles(*f, t);
            }
        }
        acc * inv_gamma
    }))
}

/// Receive antennas are split into at most this many fixed chunks; partial
/// images are summed in chunk order so the result does not depend on the
/// number of worker threads.
const RX_CHUNKS: usize = 8;

/// Back-projection through interpolated range profiles.
///
/// Each antenna's tones are inverse-transformed once, zero-padded by
/// `oversample`, and voxels read the profile by linear interpolation, so the
/// cost per voxel no longer scales with the number of tones. The profile is
/// referenced to the band center before interpolation; referenced to `f1` it
/// would carry a phase ramp of half the bandwidth across each main lobe.
pub fn backprojection_image(
    data: ArrayView2<'_, Complex64>,
    rx: &AntennaArray,
    spec: &SfcwSpec,
    gamma: Complex64,
    grid: &VoxelGrid,
    oversample: usize,
) -> Result<VoxelImage, ImagingError> {
    check_inputs(&data, rx, spec, gamma)?;
    let len = spec.num_freqs.next_power_of_two() * oversample.max(1);
    let bins_per_meter = spec.delta * len as f64 / SPEED_OF_LIGHT;
    let half_span = 0.5 * (spec.num_freqs - 1) as f64;
    let carrier = (spec.f1 + half_span * spec.delta) / SPEED_OF_LIGHT;
    let demod: Vec<Complex64> = (0..len)
        .map(|i| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * half_span * i as f64 / len as f64))
        .collect();
    // the demodulated profile flips sign from one period to the next when the
    // tone count is even
    let flips = spec.num_freqs % 2 == 0;
    let [nx, ny, nz] = grid.dims;
    let voxels: Vec<crate::geometry::Vec3> = (0..grid.len())
        .map(|flat| {
            let (i, rest) = (flat / (ny * nz), flat % (ny * nz));
            grid.point(i, rest / nz, rest % nz)
        })
        .collect();
    let chunk = rx.len().div_ceil(RX_CHUNKS).max(1);
    let fft = FftPlanner::new().plan_fft_inverse(len);
    let partials: Vec<Vec<Complex64>> = (0..rx.len().div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Complex64::new(0.0, 0.0); voxels.len()];
            let mut profile = vec![Complex64::new(0.0, 0.0); len];
            for m in (c * chunk)..((c + 1) * chunk).min(rx.len()) {
                profile.fill(Complex64::new(0.0, 0.0));
                for (k, v) in data.row(m).iter().enumerate() {
                    profile[k] = *v;
                }
                fft.process(&mut profile);
                for (g, w) in profile.iter_mut().zip(&demod) {
                    *g *= w;
                }
                let sample = |n: usize| {
                    let v = profile[n % len];
                    if flips && (n / len) % 2 == 1 {
                        -v
                    } else {
                        v
                    }
                };
                let p = rx.points[m];
                for (a, v) in acc.iter_mut().zip(&voxels) {
                    let d = (v - p).norm();
                    let t = d * bins_per_meter;
                    let base = t.floor();
                    let frac = t - base;
                    let n = base as usize;
                    let g = sample(n) * (1.0 - frac) + sample(n + 1) * frac;
                    let cycles = carrier * d;
                    let (sin, cos) = (2.0 * std::f64::consts::PI * (cycles - cycles.round())).sin_cos();
                    *a += g * Complex64::new(cos, sin);
                }
            }
            acc
        })
        .collect();
    let inv_gamma = gamma.inv();
    let mut total = vec![Complex64::new(0.0, 0.0); voxels.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    Ok(VoxelImage {
        grid: *grid,
        values: ndarray::Array3::from_shape_vec((nx, ny, nz), total.into_iter().map(|v| v * inv_gamma).collect())
            .expect("grid length"),
    })
}
