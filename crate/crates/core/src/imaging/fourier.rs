//! Range-migration imaging over a regular planar aperture.
//!
//! Per tone, a 2-D spatial DFT across the aperture decomposes the received
//! field into plane waves `(kx, ky)`. Each component is compensated for the
//! reflection coefficient and the aperture depth, its axial wavenumber
//! `kz = sqrt(k^2 - kx^2 - ky^2)` is resampled onto a uniform axis, and the
//! image is obtained by an inverse transform. The inverse is evaluated
//! separably and directly at the requested voxel centers, so arbitrary grids
//! (off-aperture, non-power-of-two) cost no extra padding.
//!
//! Summed over the plane-wave spectrum, the uniform-`kz` inverse weights each
//! antenna and tone by about `k / R` relative to a matched filter. The phasors
//! carry no spreading loss, so each tone is scaled by `k_c / k` and each voxel
//! by its distance `R` from the aperture center, which brings the image back
//! in line with back-projection.

use std::f64::consts::PI;

use ndarray::{Array3, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::{ImagingError, VoxelGrid, VoxelImage};
use crate::geometry::{AntennaArray, GridLayout, SPEED_OF_LIGHT};
use crate::signal::SfcwSpec;

/// Linear interpolation of a complex spectrum sampled on a strictly
/// increasing `kz` axis onto `targets`. Targets outside the sampled range map to zero.
pub fn stolt_resample(kz: &[f64], values: &[Complex64], targets: &[f64]) -> Result<Vec<Complex64>, ImagingError> {
    if kz.len() != values.len() {
        return Err(ImagingError::InvalidInput("axis and spectrum lengths differ".into()));
    }
    if kz.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ImagingError::NonMonotone);
    }
    let zero = Complex64::new(0.0, 0.0);
    if kz.is_empty() {
        return Ok(vec![zero; targets.len()]);
    }
    let (lo, hi) = (kz[0], kz[kz.len() - 1]);
    Ok(targets
        .iter()
        .map(|&t| {
            if t < lo || t > hi {
                return zero;
            }
            // index of the last sample <= t
            let i = kz.partition_point(|&k| k <= t).saturating_sub(1);
            if i + 1 >= kz.len() {
                return values[kz.len() - 1];
            }
            let w = (t - kz[i]) / (kz[i + 1] - kz[i]);
            values[i] * (1.0 - w) + values[i + 1] * w
        })
        .collect())
}

/// Angular wavenumbers of an `n`-point DFT with sample spacing `d`, in FFT order.
fn fft_wavenumbers(n: usize, d: f64) -> Vec<f64> {
    (0..n)
        .map(|p| {
            let signed = if p < n.div_ceil(2) { p as f64 } else { p as f64 - n as f64 };
            2.0 * PI * signed / (n as f64 * d)
        })
        .collect()
}

/// Shifts undersampled wavenumbers by multiples of the sampling period so they
/// straddle the direction from the aperture toward the imaged region instead
/// of broadside.
fn unwrap_toward(k: &mut [f64], d: f64, center_k: f64) {
    let period = 2.0 * PI / d;
    for v in k.iter_mut() {
        *v -= period * ((*v - center_k) / period).round();
    }
}

/// Cross-range resolution cells of clearance kept on each side of the grid
/// when padding the aperture.
const GUARD_CELLS: f64 = 2.0;

fn padded_len(n: usize, d: f64, span: f64) -> usize {
    if n <= 1 {
        return 1;
    }
    let needed = (2 * n).max((span / d).ceil() as usize + 1);
    needed.next_power_of_two()
}

/// Direction cosines `(kx / k, ky / k)` that connect some aperture point to
/// some voxel, widened by the main-lobe width of the aperture window.
/// Components outside carry only window leakage and the periodic images of
/// the padded aperture, so they are dropped.
struct AngularSupport {
    x: (f64, f64),
    y: (f64, f64),
    length_x: f64,
    length_y: f64,
}

impl AngularSupport {
    fn new(layout: &GridLayout, grid: &VoxelGrid, nx: usize, ny: usize) -> Self {
        let lo = grid.origin;
        let hi = grid.max_corner();
        let ax = [layout.x0, layout.x0 + layout.dx * (nx - 1) as f64];
        let ay = [layout.y0, layout.y0 + layout.dy * (ny - 1) as f64];
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for gx in [lo.x, hi.x] {
            for gy in [lo.y, hi.y] {
                for gz in [lo.z, hi.z] {
                    for px in ax {
                        for py in ay {
                            let d = crate::geometry::Vec3::new(gx - px, gy - py, gz - layout.z0);
                            let n = d.norm();
                            x = (x.0.min(d.x / n), x.1.max(d.x / n));
                            y = (y.0.min(d.y / n), y.1.max(d.y / n));
                        }
                    }
                }
            }
        }
        Self {
            x,
            y,
            length_x: layout.dx * nx as f64,
            length_y: layout.dy * ny as f64,
        }
    }

    fn contains(&self, sx: f64, sy: f64, k: f64) -> bool {
        let mx = 2.0 * PI / (k * self.length_x);
        let my = 2.0 * PI / (k * self.length_y);
        sx >= self.x.0 - mx && sx <= self.x.1 + mx && sy >= self.y.0 - my && sy <= self.y.1 + my
    }
}

/// Stolt-resampled spectrum column: values at uniform indices `start..start+len`.
struct Column {
    start: usize,
    values: Vec<Complex64>,
}

/// Range-migration reconstruction of one path.
///
/// `data` is the `[rx][freq]` slab after re-synchronization. `rx` must be an
/// X-major regular planar grid.
pub fn reconstruct_image(
    data: ArrayView2<'_, Complex64>,
    rx: &AntennaArray,
    spec: &SfcwSpec,
    gamma: Complex64,
    grid: &VoxelGrid,
) -> Result<VoxelImage, ImagingError> {
    let layout = rx.as_regular_grid().ok_or(ImagingError::NotRegularGrid)?;
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
    let far_z = grid.max_corner().z;
    if !(far_z > layout.z0) {
        return Err(ImagingError::InvalidInput("voxel grid must lie in front of the aperture".into()));
    }
    let GridLayout { nx, ny, dx, dy, .. } = layout;
    let dx = if nx > 1 { dx } else { 1.0 };
    let dy = if ny > 1 { dy } else { 1.0 };
    // the padded aperture repeats periodically; its copies must sit far
    // enough away that their blurred images miss the grid
    let far = (0..8)
        .map(|c| {
            let corner = |a: usize, lo: f64, hi: f64| if c >> a & 1 == 0 { lo } else { hi };
            let (lo, hi) = (grid.origin, grid.max_corner());
            (crate::geometry::Vec3::new(corner(0, lo.x, hi.x), corner(1, lo.y, hi.y), corner(2, lo.z, hi.z)) - layout.center()).norm()
        })
        .fold(0.0, f64::max);
    let cell = |d: f64, n: usize| GUARD_CELLS * SPEED_OF_LIGHT / spec.f1 * far / (d * n as f64);
    let span_x = (grid.max_corner().x - grid.origin.x) + dx * (nx - 1) as f64 + 2.0 * cell(dx, nx);
    let span_y = (grid.max_corner().y - grid.origin.y) + dy * (ny - 1) as f64 + 2.0 * cell(dy, ny);
    let big_nx = padded_len(nx, dx, span_x);
    let big_ny = padded_len(ny, dy, span_y);

    let k_of = |f: f64| 2.0 * PI * f / SPEED_OF_LIGHT;
    let ks: Vec<f64> = spec.freqs().into_iter().map(k_of).collect();
    let k_max = ks[ks.len() - 1];
    let k_c = k_of(spec.center());

    let mut kx = fft_wavenumbers(big_nx, dx);
    let mut ky = fft_wavenumbers(big_ny, dy);
    let aperture_center = layout.center();
    let grid_center = 0.5 * (grid.origin + grid.max_corner());
    let look = grid_center - aperture_center;
    let range = look.norm();
    if nx > 1 && 2.0 * PI / dx < 2.0 * k_max {
        unwrap_toward(&mut kx, dx, k_c * look.x / range);
    }
    if ny > 1 && 2.0 * PI / dy < 2.0 * k_max {
        unwrap_toward(&mut ky, dy, k_c * look.y / range);
    }

    // plane-wave spectrum, [k][p * big_ny + q]
    let spectrum = aperture_spectrum(&data, nx, ny, big_nx, big_ny);

    // uniform kz axis
    let dk = if ks.len() > 1 { ks[1] - ks[0] } else { k_max };
    let dkz = dk.min(2.0 * PI / (far_z - layout.z0));
    let mut kz_min = f64::INFINITY;
    for &a in &kx {
        for &b in &ky {
            let r = ks[0] * ks[0] - a * a - b * b;
            let lowest = if r > 0.0 {
                r.sqrt()
            } else {
                // first propagating tone in this column, if any
                match ks.iter().find(|&&k| k * k > a * a + b * b) {
                    Some(k) => (k * k - a * a - b * b).sqrt(),
                    None => continue,
                }
            };
            kz_min = kz_min.min(lowest);
        }
    }
    let inv_gamma = gamma.inv();
    let zero = Complex64::new(0.0, 0.0);
    let support = AngularSupport::new(&layout, grid, nx, ny);
    if !kz_min.is_finite() {
        return Ok(VoxelImage::zeros(*grid));
    }
    let nz = ((k_max - kz_min) / dkz).ceil() as usize + 1;
    let z_mid = grid_center.z;

    let columns: Vec<Column> = (0..big_nx * big_ny)
        .into_par_iter()
        .map(|flat| {
            let (p, q) = (flat / big_ny, flat % big_ny);
            let (a, b) = (kx[p], ky[q]);
            let shift = Complex64::from_polar(1.0, -(a * layout.x0 + b * layout.y0));
            let mut kz_col = Vec::with_capacity(ks.len());
            let mut vals = Vec::with_capacity(ks.len());
            for (k_idx, &k) in ks.iter().enumerate() {
                let r = k * k - a * a - b * b;
                if r <= 0.0 || !support.contains(a / k, b / k, k) {
                    continue;
                }
                let kz = r.sqrt();
                // the extra `+kz * z_mid` basebands the column so interpolation
                // sees a slowly varying phase; the z transform below undoes it
                let reference = Complex64::from_polar(1.0, kz * (z_mid - layout.z0));
                kz_col.push(kz);
                vals.push(spectrum[k_idx][flat] * shift * inv_gamma * reference * (k_c / k));
            }
            if kz_col.len() < 2 {
                return Column { start: 0, values: Vec::new() };
            }
            let first = ((kz_col[0] - kz_min) / dkz).ceil().max(0.0) as usize;
            let last = (((kz_col[kz_col.len() - 1] - kz_min) / dkz).floor() as usize).min(nz - 1);
            if last < first {
                return Column { start: 0, values: Vec::new() };
            }
            let targets: Vec<f64> = (first..=last).map(|n| kz_min + n as f64 * dkz).collect();
            let values = stolt_resample(&kz_col, &vals, &targets).expect("kz increases with frequency");
            Column { start: first, values }
        })
        .collect();

    // inverse transform evaluated at voxel centers, one axis at a time
    let gx = grid.axis(0);
    let gy = grid.axis(1);
    let gz = grid.axis(2);
    let ez: Vec<Vec<Complex64>> = (0..nz)
        .map(|n| {
            let kz = kz_min + n as f64 * dkz;
            gz.iter().map(|z| Complex64::from_polar(1.0, kz * (z - z_mid))).collect()
        })
        .collect();
    let along_z: Vec<Vec<Complex64>> = columns
        .par_iter()
        .map(|col| {
            let mut out = vec![zero; gz.len()];
            for (off, v) in col.values.iter().enumerate() {
                for (o, e) in out.iter_mut().zip(&ez[col.start + off]) {
                    *o += v * e;
                }
            }
            out
        })
        .collect();
    let ey: Vec<Vec<Complex64>> = ky
        .iter()
        .map(|b| gy.iter().map(|y| Complex64::from_polar(1.0, b * y)).collect())
        .collect();
    // [p][iy][iz]
    let along_y: Vec<Array3<Complex64>> = (0..big_nx)
        .into_par_iter()
        .map(|p| {
            let mut out = Array3::<Complex64>::zeros((1, gy.len(), gz.len()));
            for q in 0..big_ny {
                let t = &along_z[p * big_ny + q];
                if t.iter().all(|v| *v == zero) {
                    continue;
                }
                for (iy, e) in ey[q].iter().enumerate() {
                    for (iz, tv) in t.iter().enumerate() {
                        out[[0, iy, iz]] += tv * e;
                    }
                }
            }
            out
        })
        .collect();
    let ex: Vec<Vec<Complex64>> = kx
        .iter()
        .map(|a| gx.iter().map(|x| Complex64::from_polar(1.0, a * x)).collect())
        .collect();
    let planes: Vec<Vec<Complex64>> = (0..gx.len())
        .into_par_iter()
        .map(|ix| {
            let mut plane = vec![zero; gy.len() * gz.len()];
            for (p, u) in along_y.iter().enumerate() {
                let e = ex[p][ix];
                for (o, v) in plane.iter_mut().zip(u.iter()) {
                    *o += v * e;
                }
            }
            plane
        })
        .collect();
    let mut values = Array3::from_shape_vec((gx.len(), gy.len(), gz.len()), planes.concat()).expect("image shape");
    for ((i, j, k), v) in values.indexed_iter_mut() {
        *v *= (grid.point(i, j, k) - aperture_center).norm();
    }
    Ok(VoxelImage { grid: *grid, values })
}

/// Zero-padded 2-D DFT of every tone across the aperture, one `[p][q]`
/// buffer per tone.
fn aperture_spectrum(data: &ArrayView2<'_, Complex64>, nx: usize, ny: usize, big_nx: usize, big_ny: usize) -> Vec<Vec<Complex64>> {
    let mut planner = FftPlanner::new();
    let fft_x = planner.plan_fft_forward(big_nx);
    let fft_y = planner.plan_fft_forward(big_ny);
    (0..data.ncols())
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![Complex64::new(0.0, 0.0); big_nx * big_ny];
            for i in 0..nx {
                for j in 0..ny {
                    buf[i * big_ny + j] = data[[i * ny + j, k]];
                }
            }
            // rows past the aperture are zero and stay zero
            for row in buf.chunks_exact_mut(big_ny).take(nx) {
                fft_y.process(row);
            }
            let mut col = vec![Complex64::new(0.0, 0.0); big_nx];
            for q in 0..big_ny {
                for p in 0..big_nx {
                    col[p] = buf[p * big_ny + q];
                }
                fft_x.process(&mut col);
                for p in 0..big_nx {
                    buf[p * big_ny + q] = col[p];
                }
            }
            buf
        })
        .collect()
}
