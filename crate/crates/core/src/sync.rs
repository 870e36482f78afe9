//! Clock-gap synchronization and representative-antenna localization from
//! phase differences of arrival.
//!
//! Each representative antenna transmits two tones `delta` apart. The phase
//! difference between them is proportional to `tau - sigma`, so differencing
//! against a reference receive antenna cancels the clock gap and leaves a
//! hyperbolic range-difference system, solved here by damped Gauss-Newton.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{wrap_angle, AntennaArray, Vec3, SPEED_OF_LIGHT};
use crate::signal::DemodulatedSignal;

/// Largest accepted condition number of `G^T G`.
pub const MAX_CONDITION: f64 = 1e12;
pub const GN_MAX_ITERATIONS: usize = 50;
pub const GN_STEP_TOLERANCE: f64 = 1e-9;
const NEWTON_MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("degenerate phasor at path {path}, rx {rx}")]
    DegeneratePhasor { path: usize, rx: usize },
    #[error("underdetermined: {0} receive antennas, need at least 4")]
    Underdetermined(usize),
    #[error("degenerate aperture geometry (condition number {0:.3e})")]
    DegenerateGeometry(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("path index {0} out of range")]
    PathOutOfRange(usize),
}

/// Wrapped two-tone phase differences `eta[path][rx]`, nominally
/// `2 pi delta (tau - sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdoaMeasurement {
    pub eta: Array2<f64>,
    pub delta: f64,
}

/// `eta = arg(tone0 * conj(tone1))` for every path and receive antenna.
pub fn extract_eta(tones: &Array3<Complex64>, delta: f64) -> Result<PdoaMeasurement, SyncError> {
    let (paths, rx, _) = tones.dim();
    let mut eta = Array2::zeros((paths, rx));
    for l in 0..paths {
        for m in 0..rx {
            let t0 = tones[[l, m, 0]];
            let t1 = tones[[l, m, 1]];
            if t0.norm() == 0.0 || t1.norm() == 0.0 {
                return Err(SyncError::DegeneratePhasor { path: l, rx: m });
            }
            eta[[l, m]] = wrap_angle((t0 * t1.conj()).arg());
        }
    }
    Ok(PdoaMeasurement { eta, delta })
}

/// Range differences `d_m - d_0` for `m = 1..M`, in meters.
pub fn tdoa_rhs(meas: &PdoaMeasurement, path: usize) -> Result<Vec<f64>, SyncError> {
    if path >= meas.eta.nrows() {
        return Err(SyncError::PathOutOfRange(path));
    }
    let row = meas.eta.index_axis(Axis(0), path);
    if row.len() < 4 {
        return Err(SyncError::Underdetermined(row.len()));
    }
    let scale = SPEED_OF_LIGHT / (2.0 * PI * meas.delta);
    Ok(row.iter().skip(1).map(|e| scale * wrap_angle(e - row[0])).collect())
}

#[inline]
fn unit(x: &Vec3, p: &Vec3) -> Vec3 {
    let d = x - p;
    let n = d.norm();
    if n > 0.0 {
        d / n
    } else {
        Vec3::zeros()
    }
}

/// Residual `F_m(x) = |x - p_m| - |x - p_0| - rhs_m`.
fn residual(rhs: &[f64], rx: &[Vec3], x: &Vec3) -> Vec<f64> {
    let d0 = (x - rx[0]).norm();
    rhs.iter()
        .zip(&rx[1..])
        .map(|(r, p)| (x - p).norm() - d0 - r)
        .collect()
}

fn cost(rhs: &[f64], rx: &[Vec3], x: &Vec3) -> f64 {
    residual(rhs, rx, x).iter().map(|f| f * f).sum()
}

/// Normal-equation pieces `(G^T G, G^T F)` with rows `u_m - u_0`.
fn normal_equations(rhs: &[f64], rx: &[Vec3], x: &Vec3) -> (Matrix3<f64>, Vec3) {
    let u0 = unit(x, &rx[0]);
    let f = residual(rhs, rx, x);
    let mut gtg = Matrix3::zeros();
    let mut gtf = Vec3::zeros();
    for (p, fm) in rx[1..].iter().zip(&f) {
        let g = unit(x, p) - u0;
        gtg += g * g.transpose();
        gtf += g * *fm;
    }
    (gtg, gtf)
}

/// Spectral condition number of a symmetric positive semidefinite matrix.
pub fn condition_number(m: &Matrix3<f64>) -> f64 {
    let eig = SymmetricEigen::new(*m).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `G^T G` at `x` for the full range-difference system.
pub fn gram(x: &Vec3, rx: &AntennaArray) -> Matrix3<f64> {
    let zeros = vec![0.0; rx.len().saturating_sub(1)];
    normal_equations(&zeros, &rx.points, x).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialGuess {
    pub point: Vec3,
    /// `false` when the three-equation Newton solve failed and `point` is the
    /// boresight seed.
    pub converged: bool,
}

/// Outward unit normal of the aperture plane (the `+z` side).
fn boresight(rx: &AntennaArray) -> (Vec3, Vec3) {
    (rx.centroid(), Vec3::new(0.0, 0.0, 1.0))
}

fn aperture_diagonal(rx: &AntennaArray) -> f64 {
    let mut lo = rx.points[0];
    let mut hi = rx.points[0];
    for p in &rx.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

/// Indices (into `rhs`, i.e. rx minus one) of a small, spatially spread pool.
fn candidate_pool(rx: &AntennaArray) -> Vec<usize> {
    let n = rx.len() - 1;
    let mut pool: Vec<usize> = Vec::new();
    let push = |pool: &mut Vec<usize>, i: usize| {
        if !pool.contains(&i) {
            pool.push(i);
        }
    };
    // extremes along a few directions in the aperture plane
    let dirs = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)];
    for (a, b) in dirs {
        let key = |i: &usize| a * rx.points[i + 1].x + b * rx.points[i + 1].y;
        let lo = (0..n).min_by(|i, j| key(i).total_cmp(&key(j))).unwrap();
        let hi = (0..n).max_by(|i, j| key(i).total_cmp(&key(j))).unwrap();
        push(&mut pool, lo);
        push(&mut pool, hi);
    }
    let stride = (n / 16).max(1);
    for i in (0..n).step_by(stride) {
        push(&mut pool, i);
    }
    pool
}

/// Triple of equations maximizing `|det G3|` at `x`.
fn best_triple(rx: &AntennaArray, x: &Vec3) -> Option<[usize; 3]> {
    let pool = candidate_pool(rx);
    let u0 = unit(x, &rx.points[0]);
    let rows: Vec<Vec3> = pool.iter().map(|&i| unit(x, &rx.points[i + 1]) - u0).collect();
    let mut best = None;
    let mut best_det = 0.0;
    for a in 0..rows.len() {
        for b in (a + 1)..rows.len() {
            let ab = rows[a].cross(&rows[b]);
            for c in (b + 1)..rows.len() {
                let det = ab.dot(&rows[c]).abs();
                if det > best_det {
                    best_det = det;
                    best = Some([pool[a], pool[b], pool[c]]);
                }
            }
        }
    }
    best
}

/// Starting point for Gauss-Newton from a three-equation subsystem.
pub fn initial_guess(rhs: &[f64], rx: &AntennaArray) -> Result<InitialGuess, SyncError> {
    if rx.len() < 4 || rhs.len() + 1 != rx.len() {
        return Err(SyncError::Underdetermined(rx.len()));
    }
    if rhs.iter().any(|r| !r.is_finite()) {
        return Err(SyncError::NonFinite("range differences"));
    }
    let (center, normal) = boresight(rx);
    let z0 = center.z;
    let reach = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs())) + aperture_diagonal(rx);
    let seed = center + normal * reach;
    let fallback = InitialGuess { point: seed, converged: false };
    let Some(triple) = best_triple(rx, &seed) else {
        return Ok(fallback);
    };
    let sub_rx: Vec<Vec3> = std::iter::once(rx.points[0])
        .chain(triple.iter().map(|&i| rx.points[i + 1]))
        .collect();
    let sub_rhs: Vec<f64> = triple.iter().map(|&i| rhs[i]).collect();

    let mut x = seed;
    let mut c = cost(&sub_rhs, &sub_rx, &x);
    for _ in 0..NEWTON_MAX_ITERATIONS {
        let f = residual(&sub_rhs, &sub_rx, &x);
        let u0 = unit(&x, &sub_rx[0]);
        let rows: Vec<Vec3> = sub_rx[1..].iter().map(|p| unit(&x, p) - u0).collect();
        let jac = Matrix3::from_rows(&[rows[0].transpose(), rows[1].transpose(), rows[2].transpose()]);
        let Some(inv) = jac.try_inverse() else {
            return Ok(fallback);
        };
        let step = -(inv * Vec3::new(f[0], f[1], f[2]));
        if !step.iter().all(|v| v.is_finite()) {
            return Ok(fallback);
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = x + step * t;
            if cand.z > z0 {
                let cc = cost(&sub_rhs, &sub_rx, &cand);
                if cc < c {
                    x = cand;
                    c = cc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if step.norm() * t < GN_STEP_TOLERANCE || c < 1e-24 {
            return Ok(settle(x, rx, fallback));
        }
        if !accepted {
            break;
        }
    }
    if c.sqrt() < 1e-6 {
        Ok(settle(x, rx, fallback))
    } else {
        Ok(fallback)
    }
}

/// Accepts a subsystem solution unless the full system is ill-conditioned
/// there (a far-field branch of the hyperbolae), in which case the seed is used.
fn settle(x: Vec3, rx: &AntennaArray, fallback: InitialGuess) -> InitialGuess {
    if condition_number(&gram(&x, rx)) <= MAX_CONDITION {
        InitialGuess { point: x, converged: true }
    } else {
        fallback
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonResult {
    pub point: Vec3,
    pub iterations: usize,
    /// `|F(x)|` in meters.
    pub residual: f64,
    pub converged: bool,
}

/// Damped Gauss-Newton on the full range-difference system.
///
/// An ill-conditioned system at the starting point is an error. If the
/// iterate later drifts somewhere ill-conditioned, the search stops and the
/// last accepted point comes back with `converged = false`.
pub fn gauss_newton_locate(rhs: &[f64], rx: &AntennaArray, init: Vec3) -> Result<GaussNewtonResult, SyncError> {
    if rx.len() < 4 || rhs.len() + 1 != rx.len() {
        return Err(SyncError::Underdetermined(rx.len()));
    }
    if !init.iter().all(|v| v.is_finite()) {
        return Err(SyncError::NonFinite("initial point"));
    }
    let pts = &rx.points;
    let mut x = init;
    let mut c = cost(rhs, pts, &x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < GN_MAX_ITERATIONS {
        let (gtg, gtf) = normal_equations(rhs, pts, &x);
        let cond = condition_number(&gtg);
        if !(cond <= MAX_CONDITION) {
            if iterations == 0 {
                return Err(SyncError::DegenerateGeometry(cond));
            }
            // the iterate has wandered where the system is singular; keep the best one so far
            break;
        }
        let Some(inv) = gtg.try_inverse() else {
            if iterations == 0 {
                return Err(SyncError::DegenerateGeometry(f64::INFINITY));
            }
            break;
        };
        let h = -(inv * gtf);
        iterations += 1;
        if h.norm() < GN_STEP_TOLERANCE {
            x += h;
            c = cost(rhs, pts, &x);
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = x + h * t;
            let cc = cost(rhs, pts, &cand);
            if cc <= c {
                x = cand;
                c = cc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || (h * t).norm() < GN_STEP_TOLERANCE {
            // no descent left along the Gauss-Newton direction
            converged = true;
            break;
        }
    }
    Ok(GaussNewtonResult {
        point: x,
        iterations,
        residual: c.sqrt(),
        converged,
    })
}

/// Clock gap from a located antenna: mean over rx of `|p_m - x| / c - eta_m / (2 pi delta)`.
///
/// The wrapped phases are unwrapped around the first antenna, whose phase is
/// taken in `[0, 2 pi)`, i.e. `tau - sigma` is assumed to lie in `[0, 1 / delta)`.
pub fn estimate_sigma(x_hat: &Vec3, eta: &[f64], delta: f64, rx: &AntennaArray) -> f64 {
    let reference = eta[0].rem_euclid(2.0 * PI);
    let sum: f64 = eta
        .iter()
        .zip(&rx.points)
        .map(|(e, p)| {
            let unwrapped = reference + wrap_angle(e - reference);
            (p - x_hat).norm() / SPEED_OF_LIGHT - unwrapped / (2.0 * PI * delta)
        })
        .sum();
    sum / eta.len() as f64
}

/// Analytic estimator covariance `(G^T G)^-1 sigma_z^2 (c / (2 pi delta))^2`
/// for i.i.d. phase errors on the range-difference equations.
pub fn sync_covariance(x_hat: &Vec3, rx: &AntennaArray, sigma_z: f64, delta: f64) -> Result<Matrix3<f64>, SyncError> {
    if sigma_z == 0.0 {
        return Ok(Matrix3::zeros());
    }
    let g = gram(x_hat, rx);
    let inv = g.try_inverse().ok_or(SyncError::DegenerateGeometry(f64::INFINITY))?;
    let scale = sigma_z * SPEED_OF_LIGHT / (2.0 * PI * delta);
    Ok(inv * scale * scale)
}

/// One located representative antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaFix {
    pub position: Vec3,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub init_fallback: bool,
    pub covariance: Matrix3<f64>,
    pub sigma: f64,
}

/// Initial guess followed by Gauss-Newton for one path of one measurement.
pub fn locate(meas: &PdoaMeasurement, path: usize, rx: &AntennaArray, sigma_z: f64) -> Result<AntennaFix, SyncError> {
    let rhs = tdoa_rhs(meas, path)?;
    let init = initial_guess(&rhs, rx)?;
    let gn = gauss_newton_locate(&rhs, rx, init.point)?;
    let eta: Vec<f64> = meas.eta.index_axis(Axis(0), path).to_vec();
    Ok(AntennaFix {
        position: gn.point,
        iterations: gn.iterations,
        residual: gn.residual,
        converged: gn.converged,
        init_fallback: !init.converged,
        covariance: match sync_covariance(&gn.point, rx, sigma_z, meas.delta) {
            Err(SyncError::DegenerateGeometry(_)) if !gn.converged => Matrix3::repeat(f64::INFINITY),
            other => other?,
        },
        sigma: estimate_sigma(&gn.point, &eta, meas.delta, rx),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSync {
    pub rep_a: AntennaFix,
    pub rep_b: AntennaFix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncEstimate {
    pub paths: Vec<PathSync>,
    /// Mean of the per-antenna clock-gap estimates over every path.
    pub sigma_hat: f64,
}

impl SyncEstimate {
    pub fn positions_a(&self) -> Vec<Vec3> {
        self.paths.iter().map(|p| p.rep_a.position).collect()
    }

    pub fn positions_b(&self) -> Vec<Vec3> {
        self.paths.iter().map(|p| p.rep_b.position).collect()
    }
}

/// Locates both representative antennas on every path and estimates the clock gap.
pub fn synchronize(sig: &DemodulatedSignal, sw_delta: f64, rx: &AntennaArray, sigma_z: f64) -> Result<SyncEstimate, SyncError> {
    let meas_a = extract_eta(&sig.sw_alpha, sw_delta)?;
    let meas_b = extract_eta(&sig.sw_beta, sw_delta)?;
    let paths = (0..sig.num_paths())
        .into_par_iter()
        .map(|l| {
            Ok(PathSync {
                rep_a: locate(&meas_a, l, rx, sigma_z)?,
                rep_b: locate(&meas_b, l, rx, sigma_z)?,
            })
        })
        .collect::<Result<Vec<_>, SyncError>>()?;
    let sigma_hat = paths.iter().map(|p| p.rep_a.sigma + p.rep_b.sigma).sum::<f64>() / (2 * paths.len()) as f64;
    Ok(SyncEstimate { paths, sigma_hat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MirrorPlane, Scenario};
    use crate::signal::{simulate, SfcwSpec, SwSpec};
    use approx::assert_relative_eq;
    use ndarray::Array3;

    const DELTA: f64 = 5.86e6;

    fn aperture(n: usize, width: f64) -> AntennaArray {
        AntennaArray::planar_grid(Vec3::zeros(), width, width, n, n)
    }

    fn exact_rhs(x: &Vec3, rx: &AntennaArray) -> Vec<f64> {
        let d0 = (x - rx.points[0]).norm();
        rx.points[1..].iter().map(|p| (x - p).norm() - d0).collect()
    }

    fn tones_for(tau_minus_sigma: f64) -> Array3<Complex64> {
        let f0 = 57e9;
        let mut t = Array3::zeros((1, 1, 2));
        t[[0, 0, 0]] = crate::signal::cis_cycles(-f0, tau_minus_sigma);
        t[[0, 0, 1]] = crate::signal::cis_cycles(-(f0 + DELTA), tau_minus_sigma);
        t
    }

    #[test]
    fn eta_examples() {
        let mut t = Array3::zeros((1, 1, 2));
        t[[0, 0, 0]] = Complex64::new(1.0, 0.0);
        t[[0, 0, 1]] = Complex64::new(-1.0, 0.0);
        assert_relative_eq!(extract_eta(&t, DELTA).unwrap().eta[[0, 0]], PI, epsilon = 1e-15);

        let e = extract_eta(&tones_for(100e-9), DELTA).unwrap().eta[[0, 0]];
        let oracle = {
            let raw = 2.0 * PI * DELTA * 100e-9;
            raw - 2.0 * PI
        };
        assert_relative_eq!(e, oracle, epsilon = 1e-9);
        assert_relative_eq!(e, -2.6012, epsilon = 1e-4);

        assert!(extract_eta(&tones_for(0.0), DELTA).unwrap().eta[[0, 0]].abs() < 1e-12);

        t[[0, 0, 1]] = Complex64::new(0.0, 0.0);
        assert_eq!(extract_eta(&t, DELTA), Err(SyncError::DegeneratePhasor { path: 0, rx: 0 }));
    }

    fn meas_from_geometry(x: &Vec3, rx: &AntennaArray, sigma: f64, delta: f64) -> PdoaMeasurement {
        let eta = Array2::from_shape_fn((1, rx.len()), |(_, m)| {
            wrap_angle(2.0 * PI * delta * ((x - rx.points[m]).norm() / SPEED_OF_LIGHT - sigma))
        });
        PdoaMeasurement { eta, delta }
    }

    #[test]
    fn rhs_matches_geometry_and_ignores_sigma_and_delta() {
        let rx = aperture(2, 1.0);
        let x = Vec3::new(0.0, 1.0, 10.0);
        let rhs = tdoa_rhs(&meas_from_geometry(&x, &rx, 3e-9, DELTA), 0).unwrap();
        for (a, b) in rhs.iter().zip(exact_rhs(&x, &rx)) {
            assert!((a - b).abs() < 1e-9);
        }
        let other_sigma = tdoa_rhs(&meas_from_geometry(&x, &rx, 47e-9, DELTA), 0).unwrap();
        let doubled = tdoa_rhs(&meas_from_geometry(&x, &rx, 3e-9, 2.0 * DELTA), 0).unwrap();
        for ((a, b), c) in rhs.iter().zip(&other_sigma).zip(&doubled) {
            assert!((a - b).abs() < 1e-9);
            assert!((a - c).abs() < 1e-9);
        }
        let flat = PdoaMeasurement {
            eta: Array2::from_elem((1, 4), 0.7),
            delta: DELTA,
        };
        assert!(tdoa_rhs(&flat, 0).unwrap().iter().all(|v| *v == 0.0));
        let small = PdoaMeasurement {
            eta: Array2::zeros((1, 3)),
            delta: DELTA,
        };
        assert_eq!(tdoa_rhs(&small, 0), Err(SyncError::Underdetermined(3)));
    }

    #[test]
    fn initial_guess_examples() {
        let rx = aperture(16, 1.0);
        let x = Vec3::new(0.0, 0.5, 8.0);
        let g = initial_guess(&exact_rhs(&x, &rx), &rx).unwrap();
        assert!(g.converged);
        assert!((g.point - x).norm() < 0.5, "{:?}", g.point);

        let on_axis = Vec3::new(0.0, 0.0, 6.0);
        let g = initial_guess(&exact_rhs(&on_axis, &rx), &rx).unwrap();
        assert!(g.point.x.abs() < 1e-3 && g.point.y.abs() < 1e-3);

        let zeros = vec![0.0; rx.len() - 1];
        let g = initial_guess(&zeros, &rx).unwrap();
        assert!(g.point.z > 0.0);
        assert!(g.point.x.abs() < 1e-9 && g.point.y.abs() < 1e-9);
    }

    #[test]
    fn gauss_newton_recovers_exact_position() {
        let rx = aperture(16, 1.0);
        for x in [
            Vec3::new(0.0, 0.5, 8.0),
            Vec3::new(3.0, -0.3, 12.0),
            Vec3::new(-6.0, 0.2, 25.0),
            Vec3::new(9.0, 0.0, 4.0),
        ] {
            let rhs = exact_rhs(&x, &rx);
            let init = initial_guess(&rhs, &rx).unwrap();
            let r = gauss_newton_locate(&rhs, &rx, init.point).unwrap();
            assert!((r.point - x).norm() < 1e-6, "{x:?} -> {:?}", r.point);
            assert!(r.converged);
        }
    }

    #[test]
    fn gauss_newton_fixed_point() {
        let rx = aperture(4, 1.0);
        let x = Vec3::new(0.4, 0.1, 7.0);
        let r = gauss_newton_locate(&exact_rhs(&x, &rx), &rx, x).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.residual < 1e-12);
        assert!((r.point - x).norm() < 1e-12);
    }

    #[test]
    fn collinear_aperture_is_degenerate() {
        let rx = AntennaArray::new((0..6).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect());
        let x = Vec3::new(0.2, 0.3, 5.0);
        let err = gauss_newton_locate(&exact_rhs(&x, &rx), &rx, x).unwrap_err();
        assert!(matches!(err, SyncError::DegenerateGeometry(_)));
    }

    #[test]
    fn sigma_examples() {
        let rx = aperture(4, 1.0);
        let x = Vec3::new(0.3, 0.0, 9.0);
        let sigma = 17e-9;
        let meas = meas_from_geometry(&x, &rx, sigma, DELTA);
        let eta = meas.eta.row(0).to_vec();
        assert!((estimate_sigma(&x, &eta, DELTA, &rx) - sigma).abs() < 1e-15);

        let eps = 0.01;
        let shifted: Vec<f64> = eta.iter().map(|e| e + eps).collect();
        let expected = sigma - eps / (2.0 * PI * DELTA);
        assert!((estimate_sigma(&x, &shifted, DELTA, &rx) - expected).abs() < 1e-15);

        let zero = meas_from_geometry(&x, &rx, 0.0, DELTA);
        assert!(estimate_sigma(&x, &zero.eta.row(0).to_vec(), DELTA, &rx).abs() < 1e-15);
    }

    #[test]
    fn covariance_examples() {
        let rx = aperture(8, 1.0);
        let x = Vec3::new(0.1, 0.2, 2.0);
        assert_eq!(sync_covariance(&x, &rx, 0.0, DELTA).unwrap(), Matrix3::zeros());
        let c = sync_covariance(&x, &rx, 0.1, DELTA).unwrap();
        assert!((c - c.transpose()).norm() < 1e-9 * c.norm());
        assert!(SymmetricEigen::new(c).eigenvalues.iter().all(|v| *v > 0.0));

        // doubling M on the same aperture roughly halves the trace
        let small = sync_covariance(&x, &aperture(16, 1.0), 0.1, DELTA).unwrap().trace();
        let large = sync_covariance(&x, &AntennaArray::planar_grid(Vec3::zeros(), 1.0, 1.0, 32, 16), 0.1, DELTA)
            .unwrap()
            .trace();
        let ratio = large / small;
        assert!((ratio - 255.0 / 511.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn noiseless_pipeline_recovers_reps_and_sigma_on_every_path() {
        let sfcw = SfcwSpec::new(57e9, 4, DELTA).unwrap();
        let sw = SwSpec::below(&sfcw);
        let tv = AntennaArray::box_surface(Vec3::new(10.0, 0.0, 0.5), [3.0, 1.0, 0.6], [4, 2, 2]);
        let scn = Scenario {
            sv: aperture(16, 1.0),
            rep_a: 0,
            rep_b: tv.len() - 1,
            tv,
            include_los: true,
            mirrors: vec![
                MirrorPlane::ideal(1.02, 3.0),
                MirrorPlane::ideal(0.25, 3.25),
                MirrorPlane::ideal(3.0, 4.0),
            ],
            sigma: 12e-9,
            phase_noise_std: 0.0,
        };
        let sig = simulate(&scn, &sfcw, &sw, 0.0).unwrap();
        let est = synchronize(&sig, sw.delta, &scn.sv, 0.0).unwrap();
        let (a, b) = scn.rep_points();
        for (l, path) in scn.paths().iter().enumerate() {
            let ps = &est.paths[l];
            assert!((ps.rep_a.position - path.image_of(&a)).norm() < 1e-6, "path {l} a");
            assert!((ps.rep_b.position - path.image_of(&b)).norm() < 1e-6, "path {l} b");
            assert!((ps.rep_a.sigma - scn.sigma).abs() < 1e-12);
            assert!((ps.rep_a.sigma - est.paths[0].rep_a.sigma).abs() < 1e-12);
        }
        assert!((est.sigma_hat - scn.sigma).abs() < 1e-12);
    }
}
