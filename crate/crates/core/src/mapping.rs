//! Virtual-to-real position mapping.
//!
//! A path reflected off a vertical mirror shows the target at its mirror
//! image (the virtual position). The segment from the real antenna to its
//! image is perpendicular to the mirror, so every real antenna lies on a line
//! through its image with direction `theta_l`, the mirror-normal angle. The
//! angles of different paths are tied together through the orientation `phi`
//! of each image, leaving a one-dimensional search over `theta_1`: at the true
//! value all pairwise line intersections coincide at the real antenna.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{observed_angle, reflect_across_line, wrap_angle, GeometryError, MirrorLine, Vec3};

/// Grid step of the coarse `theta_1` search.
pub const SEARCH_STEP: f64 = 0.25 * PI / 180.0;
/// Bracket width at which golden-section refinement stops.
pub const REFINE_TOLERANCE: f64 = 1e-13;
/// Two back-projection lines with `|sin(theta_p - theta_q)|` below this are
/// treated as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-6;
/// Largest `y` disagreement accepted by [`triangulate_point`].
pub const Y_TOLERANCE: f64 = 1e-6;
/// Image-to-real displacement below which a path is treated as line of sight.
pub const LOS_TOLERANCE: f64 = 1e-9;

/// Number of coarse local minima that get refined.
const REFINED_MINIMA: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("parallel back-projections")]
    ParallelBackProjections,
    #[error("non-vertical mirror detected (y mismatch {0:.3e} m)")]
    NonVerticalMirror(f64),
    #[error("need at least 3 virtual positions, got {0}")]
    TooFewPaths(usize),
    #[error("unresolvable geometry")]
    UnresolvableGeometry,
    #[error("zero displacement, mirror undefined")]
    ZeroDisplacement,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One path's image of the target as seen by the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPosition {
    pub path: usize,
    pub rep_a: Vec3,
    pub rep_b: Vec3,
    /// Orientation of the `rep_a -> rep_b` segment in the XZ plane.
    pub phi: f64,
}

impl VirtualPosition {
    pub fn new(path: usize, rep_a: Vec3, rep_b: Vec3) -> Result<Self, MappingError> {
        Ok(Self {
            path,
            rep_a,
            rep_b,
            phi: observed_angle(&rep_a, &rep_b)?,
        })
    }
}

/// `theta_l = theta_1 + (phi_l - phi_1) / 2`, wrapped.
pub fn theta_chain(theta1: f64, phis: &[f64]) -> Vec<f64> {
    let Some(&phi1) = phis.first() else {
        return Vec::new();
    };
    phis.iter().map(|phi| wrap_angle(theta1 + 0.5 * (phi - phi1))).collect()
}

/// XZ intersection of the line through `p1` with direction `theta1` and the
/// line through `p2` with direction `theta2`; `y` is the mean of the two.
fn intersect(p1: &Vec3, p2: &Vec3, theta1: f64, theta2: f64) -> Option<Vec3> {
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    let det = s2 * c1 - c2 * s1;
    if det.abs() < PARALLEL_TOLERANCE {
        return None;
    }
    // p1 + u (c1, s1) = p2 + v (c2, s2)
    let (dx, dz) = (p2.x - p1.x, p2.z - p1.z);
    let u = (dx * s2 - dz * c2) / det;
    Some(Vec3::new(p1.x + u * c1, 0.5 * (p1.y + p2.y), p1.z + u * s1))
}

/// Intersection of the back-projection lines through two images of the same antenna.
///
/// In slope form, `x = ((z1 - z2) + (x2 tan t2 - x1 tan t1)) / (tan t2 - tan t1)`
/// and `z = z1 + tan t1 (x - x1)`; this evaluates the same point from
/// direction vectors so vertical lines need no special case.
pub fn triangulate_point(xa_l1: &Vec3, xa_l2: &Vec3, theta1: f64, theta2: f64) -> Result<Vec3, MappingError> {
    let dy = (xa_l1.y - xa_l2.y).abs();
    if dy > Y_TOLERANCE {
        return Err(MappingError::NonVerticalMirror(dy));
    }
    intersect(xa_l1, xa_l2, theta1, theta2).ok_or(MappingError::ParallelBackProjections)
}

/// Result of the `theta_1` search.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedPosition {
    pub theta1_star: f64,
    /// Mirror-normal angle per virtual position, in input order.
    pub thetas: Vec<f64>,
    pub rep_a_star: Vec3,
    pub rep_b_star: Vec3,
    /// Sum of pairwise distances between the candidate points, in meters.
    pub objective: f64,
}

struct Candidates {
    za: Vec<Vec3>,
    zb: Vec<Vec3>,
}

fn candidates(vps: &[VirtualPosition], thetas: &[f64]) -> Candidates {
    let first = &vps[0];
    let mut za = Vec::with_capacity(vps.len() - 1);
    let mut zb = Vec::with_capacity(vps.len() - 1);
    for (vp, th) in vps.iter().zip(thetas).skip(1) {
        let a = candidate(&first.rep_a, &vp.rep_a, thetas[0], *th);
        let b = candidate(&first.rep_b, &vp.rep_b, thetas[0], *th);
        if let (Some(a), Some(b)) = (a, b) {
            za.push(a);
            zb.push(b);
        }
    }
    Candidates { za, zb }
}

/// Line intersection, or the shared point itself when both images coincide
/// (a line-of-sight-only scene, where every direction is consistent).
fn candidate(p1: &Vec3, p2: &Vec3, theta1: f64, theta2: f64) -> Option<Vec3> {
    if (p1 - p2).norm() < LOS_TOLERANCE {
        return Some(0.5 * (p1 + p2));
    }
    intersect(p1, p2, theta1, theta2)
}

fn spread(points: &[Vec3]) -> f64 {
    let mut total = 0.0;
    for p in 0..points.len() {
        for q in (p + 1)..points.len() {
            total += (points[q] - points[p]).norm();
        }
    }
    total
}

/// Objective at `theta1`; infinite when fewer than two candidate pairs survive.
pub fn objective(vps: &[VirtualPosition], theta1: f64) -> f64 {
    let phis: Vec<f64> = vps.iter().map(|v| v.phi).collect();
    let c = candidates(vps, &theta_chain(theta1, &phis));
    if c.za.len() < 2 {
        return f64::INFINITY;
    }
    spread(&c.za) + spread(&c.zb)
}

fn mean(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Golden-section minimization of `f` on `[lo, hi]`.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > REFINE_TOLERANCE {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
        if x1 >= x2 {
            break;
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coarse grid over `theta_1 in (-pi, pi]`, golden-section refinement of the
/// most promising local minima, ties broken toward the smallest `|theta_1|`.
pub fn search_theta1(vps: &[VirtualPosition]) -> Result<MappedPosition, MappingError> {
    if vps.len() < 3 {
        return Err(MappingError::TooFewPaths(vps.len()));
    }
    let steps = (2.0 * PI / SEARCH_STEP).round() as usize;
    let thetas: Vec<f64> = (0..steps).map(|i| -PI + (i + 1) as f64 * SEARCH_STEP).collect();
    let values: Vec<f64> = thetas.par_iter().map(|&t| objective(vps, t)).collect();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(MappingError::UnresolvableGeometry);
    }

    let n = values.len();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let (prev, next) = (values[(i + n - 1) % n], values[(i + 1) % n]);
            values[i].is_finite() && values[i] <= prev && values[i] <= next
        })
        .collect();
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(thetas[a].abs().total_cmp(&thetas[b].abs())));
    minima.truncate(REFINED_MINIMA);

    let refined: Vec<(f64, f64)> = minima
        .par_iter()
        .map(|&i| {
            let (lo, hi) = (thetas[i] - SEARCH_STEP, thetas[i] + SEARCH_STEP);
            let (t, v) = golden_section(|t| objective(vps, t), lo, hi);
            if v < values[i] {
                (wrap_angle(t), v)
            } else {
                (thetas[i], values[i])
            }
        })
        .collect();
    let best_value = refined.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let tie = 1e-12 + 1e-9 * best_value;
    let (theta1, value) = refined
        .iter()
        .filter(|r| r.1 <= best_value + tie)
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .copied()
        .ok_or(MappingError::UnresolvableGeometry)?;

    let phis: Vec<f64> = vps.iter().map(|v| v.phi).collect();
    let chain = theta_chain(theta1, &phis);
    let c = candidates(vps, &chain);
    Ok(MappedPosition {
        theta1_star: theta1,
        thetas: chain,
        rep_a_star: mean(&c.za),
        rep_b_star: mean(&c.zb),
        objective: value,
    })
}

/// Perpendicular bisector (in XZ) of an image point and its real position,
/// with normal direction `theta_star`.
pub fn reflection_line(theta_star: f64, xa_l: &Vec3, xa_star: &Vec3) -> Result<MirrorLine, MappingError> {
    let disp = Vec3::new(xa_l.x - xa_star.x, 0.0, xa_l.z - xa_star.z);
    if disp.norm() < LOS_TOLERANCE {
        return Err(MappingError::ZeroDisplacement);
    }
    let (mx, mz) = (0.5 * (xa_l.x + xa_star.x), 0.5 * (xa_l.z + xa_star.z));
    let t = theta_star.tan();
    if t.abs() < 1e-12 {
        return Ok(MirrorLine::Vertical { x: mx });
    }
    let slope = -1.0 / t;
    Ok(MirrorLine::Sloped {
        slope,
        intercept: mz - slope * mx,
    })
}

/// Closed-form image-to-real map: `dx = t / (1 + t^2) * ((xa_l + xa* - 2x) / t + za_l + za* - 2z)`,
/// `x* = x + dx`, `y* = y`, `z* = z + t dx`, with `t = tan(theta_star)`.
pub fn map_point_closed_form(p: &Vec3, theta_star: f64, xa_l: &Vec3, xa_star: &Vec3) -> Vec3 {
    let t = theta_star.tan();
    let sx = xa_l.x + xa_star.x - 2.0 * p.x;
    let sz = xa_l.z + xa_star.z - 2.0 * p.z;
    let dx = (sx + t * sz) / (1.0 + t * t);
    Vec3::new(p.x + dx, p.y, p.z + t * dx)
}

/// Maps an image point set to real positions by reflecting across the
/// recovered mirror line. A path whose image coincides with the real
/// position (line of sight) maps to itself.
pub fn map_vp_to_rp(points: &[Vec3], theta_star: f64, xa_l: &Vec3, xa_star: &Vec3) -> Result<Vec<Vec3>, MappingError> {
    match reflection_line(theta_star, xa_l, xa_star) {
        Ok(line) => Ok(points.iter().map(|p| reflect_across_line(p, &line)).collect()),
        Err(MappingError::ZeroDisplacement) => Ok(points.to_vec()),
        Err(e) => Err(e),
    }
}

/// Union of mapped point sets, keeping the first point that falls in each
/// `pitch`-sized cell. Output is ordered by cell.
pub fn fuse_mapped(sets: &[Vec<Vec3>], pitch: f64) -> Vec<Vec3> {
    let mut cells: std::collections::BTreeMap<(i64, i64, i64), Vec3> = std::collections::BTreeMap::new();
    for p in sets.iter().flatten() {
        let key = (
            (p.x / pitch).round() as i64,
            (p.y / pitch).round() as i64,
            (p.z / pitch).round() as i64,
        );
        cells.entry(key).or_insert(*p);
    }
    cells.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{reflect_point, AntennaArray, MirrorPlane};
    use approx::assert_relative_eq;
    use crate::metrics::directed_hausdorff;
    use proptest::prelude::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn theta_chain_examples() {
        assert_eq!(theta_chain(0.3, &[1.0, 1.0]), vec![0.3, 0.3]);
        let t = theta_chain(deg(10.0), &[deg(60.0), deg(20.0)]);
        assert_relative_eq!(t[1], deg(-10.0), epsilon = 1e-12);
    }

    /// Mirror-normal angle of a vertical mirror.
    fn normal_angle(m: &MirrorPlane) -> f64 {
        m.line.normal_angle()
    }

    #[test]
    fn theta_chain_matches_mirror_normals() {
        let tv = AntennaArray::box_surface(Vec3::new(10.0, 0.0, 0.5), [3.0, 1.0, 0.6], [4, 2, 2]);
        let (a, b) = (tv.points[0], tv.points[tv.len() - 1]);
        let mirrors = [MirrorPlane::ideal(1.02, 3.0), MirrorPlane::ideal(0.25, 3.25), MirrorPlane::ideal(3.0, 4.0)];
        let phis: Vec<f64> = mirrors
            .iter()
            .map(|m| observed_angle(&reflect_point(&a, m), &reflect_point(&b, m)).unwrap())
            .collect();
        let chain = theta_chain(normal_angle(&mirrors[0]), &phis);
        for (th, m) in chain.iter().zip(&mirrors) {
            // directions are equivalent modulo pi
            let d = wrap_angle(2.0 * (th - normal_angle(m))) / 2.0;
            assert!(d.abs() < 1e-9, "{th} vs {}", normal_angle(m));
        }
    }

    #[test]
    fn triangulation_examples() {
        let p = triangulate_point(&Vec3::new(0.0, 1.0, 0.0), &Vec3::new(2.0, 1.0, 0.0), PI / 4.0, -PI / 4.0).unwrap();
        assert!((p - Vec3::new(1.0, 1.0, 1.0)).norm() < 1e-12);
        let q = Vec3::new(1.0, 0.0, 1.0);
        assert_eq!(triangulate_point(&q, &q, 0.4, 0.4), Err(MappingError::ParallelBackProjections));
        assert!(matches!(
            triangulate_point(&q, &Vec3::new(3.0, 0.5, 0.0), 0.1, 1.0),
            Err(MappingError::NonVerticalMirror(_))
        ));
    }

    #[test]
    fn triangulation_matches_slope_form() {
        let (x1, z1, x2, z2) = (1.5, -0.3, 4.0, 2.0);
        let (t1, t2) = (0.7f64, -1.3f64);
        let (tan1, tan2) = (t1.tan(), t2.tan());
        let x = ((z1 - z2) + (x2 * tan2 - x1 * tan1)) / (tan2 - tan1);
        let z = z1 + tan1 * (x - x1);
        let p = triangulate_point(&Vec3::new(x1, 0.0, z1), &Vec3::new(x2, 0.0, z2), t1, t2).unwrap();
        assert!((p - Vec3::new(x, 0.0, z)).norm() < 1e-12);
    }

    #[test]
    fn triangulation_inverts_reflection() {
        let p = Vec3::new(3.2, 0.4, -1.1);
        let m1 = MirrorPlane::ideal(0.8, 4.0);
        let m2 = MirrorPlane::vertical(9.0, num_complex::Complex64::new(1.0, 0.0));
        let r = triangulate_point(&reflect_point(&p, &m1), &reflect_point(&p, &m2), m1.line.normal_angle(), m2.line.normal_angle()).unwrap();
        assert!((r - p).norm() < 1e-9);
    }

    fn sec4_vps(include_los: bool) -> (Vec<VirtualPosition>, Vec3, Vec3, Vec<MirrorPlane>) {
        let tv = AntennaArray::box_surface(Vec3::new(10.0, 0.0, 0.5), [3.0, 1.0, 0.6], [16, 4, 4]);
        let (a, b) = (tv.points[0], tv.points[tv.len() - 1]);
        let mirrors = vec![MirrorPlane::ideal(1.02, 3.0), MirrorPlane::ideal(0.25, 3.25), MirrorPlane::ideal(3.0, 4.0)];
        let mut vps = Vec::new();
        if include_los {
            vps.push(VirtualPosition::new(0, a, b).unwrap());
        }
        for m in &mirrors {
            vps.push(VirtualPosition::new(vps.len(), reflect_point(&a, m), reflect_point(&b, m)).unwrap());
        }
        (vps, a, b, mirrors)
    }

    #[test]
    fn noiseless_search_recovers_reps_and_mirrors() {
        for los in [false, true] {
            let (vps, a, b, mirrors) = sec4_vps(los);
            let m = search_theta1(&vps).unwrap();
            assert!(m.objective < 1e-9, "objective {}", m.objective);
            assert!((m.rep_a_star - a).norm() < 1e-6);
            assert!((m.rep_b_star - b).norm() < 1e-6);
            let offset = usize::from(los);
            for (i, mirror) in mirrors.iter().enumerate() {
                let vp = &vps[i + offset];
                let line = reflection_line(m.thetas[i + offset], &vp.rep_a, &m.rep_a_star).unwrap();
                let (MirrorLine::Sloped { slope, intercept }, MirrorLine::Sloped { slope: s0, intercept: b0 }) = (line, mirror.line) else {
                    panic!("expected sloped lines");
                };
                assert!((slope - s0).abs() < 1e-6 && (intercept - b0).abs() < 1e-6, "{slope} {intercept}");
            }
        }
    }

    #[test]
    fn too_few_paths_rejected() {
        let (vps, ..) = sec4_vps(false);
        assert_eq!(search_theta1(&vps[..2]), Err(MappingError::TooFewPaths(2)));
    }

    #[test]
    fn identical_images_break_ties_toward_zero() {
        let a = Vec3::new(1.0, 0.0, 5.0);
        let b = Vec3::new(3.0, 0.0, 5.5);
        let vps: Vec<VirtualPosition> = (0..3).map(|i| VirtualPosition::new(i, a, b).unwrap()).collect();
        let m = search_theta1(&vps).unwrap();
        assert_eq!(m.objective, 0.0);
        assert!(m.theta1_star.abs() < 1e-12, "{}", m.theta1_star);
        assert_eq!((m.rep_a_star, m.rep_b_star), (a, b));
    }

    #[test]
    fn parallel_everywhere_is_unresolvable() {
        // images spread along one line with a common orientation: every
        // back-projection pair is parallel for every theta_1
        let vps: Vec<VirtualPosition> = (0..3)
            .map(|i| {
                let o = Vec3::new(i as f64, 0.0, 0.0);
                VirtualPosition::new(i, o + Vec3::new(0.0, 0.0, 5.0), o + Vec3::new(0.0, 0.0, 6.0)).unwrap()
            })
            .collect();
        assert_eq!(search_theta1(&vps), Err(MappingError::UnresolvableGeometry));
    }

    #[test]
    fn reflection_line_examples() {
        let z = reflection_line(PI / 2.0, &Vec3::new(0.0, 0.0, 2.0), &Vec3::zeros()).unwrap();
        match z {
            MirrorLine::Sloped { slope, intercept } => {
                assert!(slope.abs() < 1e-12);
                assert!((intercept - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            reflection_line(0.0, &Vec3::new(2.0, 0.0, 0.0), &Vec3::zeros()).unwrap(),
            MirrorLine::Vertical { x: 1.0 }
        );
        assert_eq!(
            reflection_line(0.3, &Vec3::new(1.0, 2.0, 3.0), &Vec3::new(1.0, 0.0, 3.0)),
            Err(MappingError::ZeroDisplacement)
        );
    }

    #[test]
    fn mapping_inverts_reflection_and_fixes_the_line() {
        let m = MirrorPlane::ideal(3.0, 4.0);
        let xa = Vec3::new(8.5, -0.5, 0.2);
        let xa_l = reflect_point(&xa, &m);
        let theta = m.line.normal_angle();
        let pts = vec![Vec3::new(10.0, 0.3, 1.0), Vec3::new(9.0, -0.2, 0.5)];
        let images: Vec<Vec3> = pts.iter().map(|p| reflect_point(p, &m)).collect();
        let back = map_vp_to_rp(&images, theta, &xa_l, &xa).unwrap();
        for (p, q) in pts.iter().zip(&back) {
            assert!((p - q).norm() < 1e-9);
        }
        let on_line = Vec3::new(1.0, 0.7, 7.0);
        let same = map_vp_to_rp(&[on_line], theta, &xa_l, &xa).unwrap();
        assert!((same[0] - on_line).norm() < 1e-9);
        for p in &pts {
            assert!((map_point_closed_form(p, theta, &xa_l, &xa) - reflect_point(p, &m)).norm() < 1e-9);
        }
    }

    #[test]
    fn los_path_maps_to_itself() {
        let a = Vec3::new(1.0, 0.0, 4.0);
        let pts = vec![Vec3::new(1.2, 0.1, 4.1)];
        assert_eq!(map_vp_to_rp(&pts, 0.7, &a, &a).unwrap(), pts);
    }

    #[test]
    fn fusion_examples() {
        let s = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let one = fuse_mapped(std::slice::from_ref(&s), 0.1);
        assert_eq!(one.len(), 2);
        let two = fuse_mapped(&[s.clone(), s.clone()], 0.1);
        assert_eq!(two, one);
        let near = vec![Vec3::new(0.01, 0.0, 0.0)];
        assert_eq!(fuse_mapped(&[s, near], 0.1).len(), 2);
    }

    fn sloped_mirror() -> impl Strategy<Value = MirrorPlane> {
        (-5.0..5.0f64, 2.0..8.0f64).prop_map(|(a, b)| MirrorPlane::ideal(a, b))
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -1.0..1.0f64, -1.0..1.5f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn closed_form_matches_reflection(m in sloped_mirror(), xa in point(), p in point()) {
            let theta = m.line.normal_angle();
            prop_assume!(theta.tan().abs() > 1e-3 && theta.cos().abs() > 1e-3);
            let xa_l = reflect_point(&xa, &m);
            prop_assume!((xa_l - xa).norm() > 1e-6);
            let closed = map_point_closed_form(&p, theta, &xa_l, &xa);
            let line = reflection_line(theta, &xa_l, &xa).unwrap();
            prop_assert!((closed - reflect_across_line(&p, &line)).norm() < 1e-9);
            prop_assert!((closed - reflect_point(&p, &m)).norm() < 1e-8);
        }

        #[test]
        fn mirror_angle_identity(m1 in sloped_mirror(), m2 in sloped_mirror(), a in point(), b in point()) {
            prop_assume!((a.x - b.x).hypot(a.z - b.z) > 1e-3);
            let phi1 = observed_angle(&reflect_point(&a, &m1), &reflect_point(&b, &m1)).unwrap();
            let phi2 = observed_angle(&reflect_point(&a, &m2), &reflect_point(&b, &m2)).unwrap();
            let lhs = m1.line.normal_angle() - m2.line.normal_angle() - 0.5 * (phi1 - phi2);
            // the normal angles are defined modulo pi
            prop_assert!(wrap_angle(2.0 * lhs).abs() < 1e-9);
        }

        #[test]
        fn triangulation_recovers_point(m1 in sloped_mirror(), m2 in sloped_mirror(), p in point()) {
            let (t1, t2) = (m1.line.normal_angle(), m2.line.normal_angle());
            prop_assume!((t1 - t2).sin().abs() > 1e-2);
            let r = triangulate_point(&reflect_point(&p, &m1), &reflect_point(&p, &m2), t1, t2).unwrap();
            prop_assert!((r - p).norm() < 1e-9 * (1.0 + 1.0 / (t1 - t2).sin().abs()));
        }

        #[test]
        fn fusion_distance_bounds(
            truth in prop::collection::vec(point(), 1..30),
            sets in prop::collection::vec(prop::collection::vec(point(), 1..30), 1..4),
        ) {
            let pitch = 0.1;
            let fused = fuse_mapped(&sets, pitch);
            let dropped = pitch * 3f64.sqrt();
            let worst_out = sets.iter().map(|s| directed_hausdorff(s, &truth).unwrap()).fold(0.0, f64::max);
            let best_in = sets.iter().map(|s| directed_hausdorff(&truth, s).unwrap()).fold(f64::INFINITY, f64::min);
            prop_assert!(directed_hausdorff(&fused, &truth).unwrap() <= worst_out + 1e-12);
            prop_assert!(directed_hausdorff(&truth, &fused).unwrap() <= best_in + dropped + 1e-12);
        }
    }
}
