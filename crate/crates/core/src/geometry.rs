//! Scene geometry: antenna point sets, vertical mirror planes and the
//! specular virtual-source construction.
//!
//! Coordinates follow the sensing vehicle frame: `x` is the direction of
//! travel, `y` is height and `z` is lateral depth away from the receive
//! aperture. Mirror surfaces are vertical, so every mirror is fully described
//! by a line in the XZ plane and reflection never touches `y`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cartesian position in meters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Propagation speed used throughout the crate, in meters per second.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("undefined orientation: representative points share the same XZ projection")]
    UndefinedOrientation,
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("antenna points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("invalid mirror: {0}")]
    InvalidMirror(String),
    #[error("invalid array layout: {0}")]
    InvalidLayout(String),
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Trace of a vertical reflector in the XZ plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MirrorLine {
    /// `z = slope * x + intercept`.
    Sloped { slope: f64, intercept: f64 },
    /// `x = x`; kept separate so the infinite-slope case stays exact.
    Vertical { x: f64 },
}

impl MirrorLine {
    /// Unit normal `(n_x, n_z)` and offset `c` with `n_x x + n_z z = c` on the line.
    pub fn normal_form(&self) -> (f64, f64, f64) {
        match *self {
            MirrorLine::Sloped { slope, intercept } => {
                let norm = (slope * slope + 1.0).sqrt();
                (slope / norm, -1.0 / norm, -intercept / norm)
            }
            MirrorLine::Vertical { x } => (1.0, 0.0, x),
        }
    }

    /// Signed distance of `p` from the line, measured along the unit normal.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let (nx, nz, c) = self.normal_form();
        nx * p.x + nz * p.z - c
    }

    /// Directed angle of the line normal from the +X axis. Defined modulo pi.
    pub fn normal_angle(&self) -> f64 {
        let (nx, nz, _) = self.normal_form();
        nz.atan2(nx)
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            MirrorLine::Sloped { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            MirrorLine::Vertical { x } => x.is_finite(),
        }
    }
}

/// A vertical specular reflector with a constant complex reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorPlane {
    pub line: MirrorLine,
    pub gamma: Complex64,
}

impl MirrorPlane {
    pub fn sloped(slope: f64, intercept: f64, gamma: Complex64) -> Self {
        Self {
            line: MirrorLine::Sloped { slope, intercept },
            gamma,
        }
    }

    pub fn vertical(x: f64, gamma: Complex64) -> Self {
        Self {
            line: MirrorLine::Vertical { x },
            gamma,
        }
    }

    /// Perfect reflector along `z = slope * x + intercept`.
    pub fn ideal(slope: f64, intercept: f64) -> Self {
        Self::sloped(slope, intercept, Complex64::new(1.0, 0.0))
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.line.is_finite() {
            return Err(GeometryError::InvalidMirror("non-finite line parameters".into()));
        }
        let mag = self.gamma.norm();
        if !(mag > 0.0 && mag <= 1.0 + 1e-12) {
            return Err(GeometryError::InvalidMirror(format!(
                "reflection coefficient magnitude {mag} outside (0, 1]"
            )));
        }
        Ok(())
    }
}

/// Mirror image of `p` across the vertical plane; `y` is untouched.
pub fn reflect_point(p: &Vec3, plane: &MirrorPlane) -> Vec3 {
    reflect_across_line(p, &plane.line)
}

pub fn reflect_across_line(p: &Vec3, line: &MirrorLine) -> Vec3 {
    let (nx, nz, _) = line.normal_form();
    let d = line.signed_distance(p);
    Vec3::new(p.x - 2.0 * d * nx, p.y, p.z - 2.0 * d * nz)
}

/// Ordered set of antenna positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AntennaArray {
    pub points: Vec<Vec3>,
}

/// Regular receive-grid layout: point `i * ny + j` sits at
/// `(x0 + i * dx, y0 + j * dy, z0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLayout {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub z0: f64,
}

impl GridLayout {
    pub fn position(&self, i: usize, j: usize) -> Vec3 {
        Vec3::new(self.x0 + i as f64 * self.dx, self.y0 + j as f64 * self.dy, self.z0)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            self.x0 + 0.5 * (self.nx - 1) as f64 * self.dx,
            self.y0 + 0.5 * (self.ny - 1) as f64 * self.dy,
            self.z0,
        )
    }
}

impl AntennaArray {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Edge-inclusive `nx` by `ny` grid on the plane `z = center.z`, spanning
    /// `width` along X and `height` along Y. Points are ordered X-major.
    pub fn planar_grid(center: Vec3, width: f64, height: f64, nx: usize, ny: usize) -> Self {
        let step = |extent: f64, n: usize| if n > 1 { extent / (n - 1) as f64 } else { 0.0 };
        let (dx, dy) = (step(width, nx), step(height, ny));
        let x0 = center.x - 0.5 * dx * (nx.max(1) - 1) as f64;
        let y0 = center.y - 0.5 * dy * (ny.max(1) - 1) as f64;
        let mut points = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                points.push(Vec3::new(x0 + i as f64 * dx, y0 + j as f64 * dy, center.z));
            }
        }
        Self { points }
    }

    /// Points of an `nx * ny * nz` lattice that lie on the surface of an
    /// axis-aligned box, sorted lexicographically by `(x, y, z)`.
    pub fn box_surface(center: Vec3, size: [f64; 3], counts: [usize; 3]) -> Self {
        let axis = |k: usize| -> Vec<f64> {
            let n = counts[k].max(2);
            (0..n)
                .map(|i| -0.5 * size[k] + size[k] * i as f64 / (n - 1) as f64)
                .collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut points = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                for (k, &z) in zs.iter().enumerate() {
                    let on_surface = i == 0
                        || i + 1 == xs.len()
                        || j == 0
                        || j + 1 == ys.len()
                        || k == 0
                        || k + 1 == zs.len();
                    if on_surface {
                        points.push(center + Vec3::new(x, y, z));
                    }
                }
            }
        }
        Self { points }
    }

    /// Lattice counts per axis for a target pitch: `round(size / pitch) + 1`, at least 2.
    pub fn lattice_counts(size: [f64; 3], pitch: f64) -> [usize; 3] {
        let c = |s: f64| ((s / pitch).round() as usize + 1).max(2);
        [c(size[0]), c(size[1]), c(size[2])]
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.points.len().max(1) as f64
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| p + offset).collect(),
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<(), GeometryError> {
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(name));
        }
        // quadratic, but arrays here stay in the low thousands
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                if (self.points[i] - self.points[j]).norm() < 1e-12 {
                    return Err(GeometryError::DuplicatePoint(i, j));
                }
            }
        }
        Ok(())
    }

    /// Recovers the regular grid layout of a planar X-major array, if it is one.
    pub fn as_regular_grid(&self) -> Option<GridLayout> {
        let pts = &self.points;
        if pts.len() < 2 {
            return None;
        }
        let z0 = pts[0].z;
        let tol = 1e-9;
        if pts.iter().any(|p| (p.z - z0).abs() > tol) {
            return None;
        }
        // ny = length of the leading run sharing the first x coordinate
        let ny = pts.iter().take_while(|p| (p.x - pts[0].x).abs() <= tol).count();
        if ny == 0 || pts.len() % ny != 0 {
            return None;
        }
        let nx = pts.len() / ny;
        let dx = if nx > 1 { pts[ny].x - pts[0].x } else { 0.0 };
        let dy = if ny > 1 { pts[1].y - pts[0].y } else { 0.0 };
        if (nx > 1 && dx <= 0.0) || (ny > 1 && dy <= 0.0) {
            return None;
        }
        let layout = GridLayout {
            nx,
            ny,
            x0: pts[0].x,
            y0: pts[0].y,
            dx,
            dy,
            z0,
        };
        for i in 0..nx {
            for j in 0..ny {
                if (pts[i * ny + j] - layout.position(i, j)).norm() > 1e-9 {
                    return None;
                }
            }
        }
        Some(layout)
    }
}

/// Virtual-source point set of `tv` seen through `plane`.
pub fn virtual_positions(tv: &AntennaArray, plane: &MirrorPlane) -> AntennaArray {
    AntennaArray {
        points: tv.points.iter().map(|p| reflect_point(p, plane)).collect(),
    }
}

/// One-way flight time from `tx` to `rx`, directly or via a specular bounce.
pub fn path_delay(tx: &Vec3, rx: &Vec3, plane: Option<&MirrorPlane>) -> f64 {
    let source = match plane {
        Some(m) => reflect_point(tx, m),
        None => *tx,
    };
    (source - rx).norm() / SPEED_OF_LIGHT
}

/// Directed angle from +X of the segment `a -> b` projected on the XZ plane,
/// in `(-pi, pi]`.
pub fn observed_angle(a: &Vec3, b: &Vec3) -> Result<f64, GeometryError> {
    let dx = b.x - a.x;
    let dz = b.z - a.z;
    if dx.hypot(dz) < 1e-12 {
        return Err(GeometryError::UndefinedOrientation);
    }
    Ok(wrap_angle(dz.atan2(dx)))
}

/// One propagation path of a scenario: the LoS path or a single mirror bounce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath {
    pub mirror: Option<MirrorPlane>,
}

impl PropagationPath {
    pub fn los() -> Self {
        Self { mirror: None }
    }

    pub fn gamma(&self) -> Complex64 {
        self.mirror
            .map(|m| m.gamma)
            .unwrap_or_else(|| Complex64::new(1.0, 0.0))
    }

    pub fn is_los(&self) -> bool {
        self.mirror.is_none()
    }

    /// Where a transmitter at `p` appears to the receiver along this path.
    pub fn image_of(&self, p: &Vec3) -> Vec3 {
        match &self.mirror {
            Some(m) => reflect_point(p, m),
            None => *p,
        }
    }

    pub fn delay(&self, tx: &Vec3, rx: &Vec3) -> f64 {
        path_delay(tx, rx, self.mirror.as_ref())
    }
}

/// Full scene: receive aperture, transmit array, reflectors and clock gap.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sv: AntennaArray,
    pub tv: AntennaArray,
    pub rep_a: usize,
    pub rep_b: usize,
    pub include_los: bool,
    pub mirrors: Vec<MirrorPlane>,
    /// True TV-to-SV clock gap, seconds.
    pub sigma: f64,
    /// Phase jitter standard deviation, radians.
    pub phase_noise_std: f64,
}

impl Scenario {
    /// Paths in emission order: LoS first when present, then mirrors.
    pub fn paths(&self) -> Vec<PropagationPath> {
        let mut paths = Vec::with_capacity(self.mirrors.len() + 1);
        if self.include_los {
            paths.push(PropagationPath::los());
        }
        paths.extend(self.mirrors.iter().map(|m| PropagationPath { mirror: Some(*m) }));
        paths
    }

    pub fn rep_points(&self) -> (Vec3, Vec3) {
        (self.tv.points[self.rep_a], self.tv.points[self.rep_b])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.sv.validate("sv")?;
        self.tv.validate("tv")?;
        if self.sv.len() < 4 {
            return Err(GeometryError::InvalidLayout("receive aperture needs at least 4 antennas".into()));
        }
        if self.rep_a == self.rep_b || self.rep_a >= self.tv.len() || self.rep_b >= self.tv.len() {
            return Err(GeometryError::InvalidLayout(format!(
                "representative indices ({}, {}) must be distinct and below {}",
                self.rep_a,
                self.rep_b,
                self.tv.len()
            )));
        }
        if !self.sigma.is_finite() {
            return Err(GeometryError::NonFinite("sigma"));
        }
        if !(self.phase_noise_std >= 0.0 && self.phase_noise_std.is_finite()) {
            return Err(GeometryError::InvalidLayout("phase noise std must be finite and >= 0".into()));
        }
        for m in &self.mirrors {
            m.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    /// Rotate the XZ plane so the line becomes the X axis, flip z, rotate back.
    fn rotate_flip_reflect(p: &Vec3, slope: f64, intercept: f64) -> Vec3 {
        let angle = slope.atan();
        let (s, c) = angle.sin_cos();
        let (x, z) = (p.x, p.z - intercept);
        let (u, v) = (c * x + s * z, -s * x + c * z);
        let v = -v;
        Vec3::new(c * u - s * v, p.y, s * u + c * v + intercept)
    }

    #[test]
    fn reflect_across_coordinate_plane() {
        let r = reflect_point(&Vec3::new(1.0, 5.0, 2.0), &MirrorPlane::ideal(0.0, 0.0));
        assert!(close(&r, &Vec3::new(1.0, 5.0, -2.0), 1e-15));
    }

    #[test]
    fn reflect_across_diagonal_swaps_x_and_z() {
        let r = reflect_point(&Vec3::new(1.0, 0.0, 0.0), &MirrorPlane::ideal(1.0, 0.0));
        assert!(close(&r, &Vec3::new(0.0, 0.0, 1.0), 1e-15));
    }

    #[test]
    fn reflect_matches_rotate_flip_construction() {
        let p = Vec3::new(2.0, 1.0, 7.0);
        let r = reflect_point(&p, &MirrorPlane::ideal(1.02, 3.0));
        let expected = rotate_flip_reflect(&p, 1.02, 3.0);
        assert!(close(&r, &expected, 1e-12), "{r:?} vs {expected:?}");
    }

    #[test]
    fn vertical_mirror_reflects_x() {
        let r = reflect_point(&Vec3::new(3.0, 1.0, 2.0), &MirrorPlane::vertical(1.0, Complex64::new(1.0, 0.0)));
        assert!(close(&r, &Vec3::new(-1.0, 1.0, 2.0), 1e-15));
    }

    #[test]
    fn virtual_positions_preserve_pairwise_distances() {
        let tv = AntennaArray::box_surface(Vec3::new(5.0, 0.0, 2.0), [3.0, 1.0, 0.6], [16, 4, 4]);
        assert_eq!(tv.len(), 200);
        let vp = virtual_positions(&tv, &MirrorPlane::ideal(3.0, 4.0));
        assert_eq!(vp.len(), 200);
        for i in 0..tv.len() {
            for j in (i + 1)..tv.len() {
                let d0 = (tv.points[i] - tv.points[j]).norm();
                let d1 = (vp.points[i] - vp.points[j]).norm();
                assert!((d0 - d1).abs() <= 1e-12 * d0.max(1.0));
            }
        }
    }

    #[test]
    fn reflected_centroid_is_centroid_of_reflection() {
        let tv = AntennaArray::box_surface(Vec3::new(5.0, 0.0, 2.0), [3.0, 1.0, 0.6], [16, 4, 4]);
        let plane = MirrorPlane::ideal(-0.4, 6.0);
        let vp = virtual_positions(&tv, &plane);
        assert!(close(&vp.centroid(), &reflect_point(&tv.centroid(), &plane), 1e-12));
    }

    #[test]
    fn los_delay_is_distance_over_c() {
        let d = path_delay(&Vec3::new(0.0, 0.0, 30.0), &Vec3::zeros(), None);
        assert_relative_eq!(d, 1e-7, max_relative = 1e-15);
        assert_eq!(path_delay(&Vec3::new(1.0, 2.0, 3.0), &Vec3::new(1.0, 2.0, 3.0), None), 0.0);
    }

    #[test]
    fn reflected_delay_equals_broken_path() {
        let tx = Vec3::new(1.0, 0.0, -2.0);
        let rx = Vec3::new(0.0, 0.0, 2.0);
        let plane = MirrorPlane::ideal(0.0, 0.0);
        let d = path_delay(&tx, &rx, Some(&plane));
        assert_relative_eq!(d, 1.0 / SPEED_OF_LIGHT, max_relative = 1e-12);
    }

    #[test]
    fn observed_angle_examples() {
        let o = Vec3::zeros();
        assert_relative_eq!(observed_angle(&o, &Vec3::new(1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert_relative_eq!(observed_angle(&o, &Vec3::new(0.0, 0.0, 1.0)).unwrap(), PI / 2.0);
        assert_relative_eq!(observed_angle(&o, &Vec3::new(1.0, 0.0, 1.0)).unwrap(), PI / 4.0);
        assert_eq!(
            observed_angle(&o, &Vec3::new(0.0, 3.0, 0.0)),
            Err(GeometryError::UndefinedOrientation)
        );
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
    }

    #[test]
    fn grid_layout_round_trip() {
        let a = AntennaArray::planar_grid(Vec3::zeros(), 1.0, 1.0, 16, 16);
        let g = a.as_regular_grid().unwrap();
        assert_eq!((g.nx, g.ny), (16, 16));
        assert_relative_eq!(g.dx, 1.0 / 15.0, max_relative = 1e-12);
        assert!(close(&g.center(), &Vec3::zeros(), 1e-12));
        let mut shuffled = a.clone();
        shuffled.points.swap(3, 40);
        assert!(shuffled.as_regular_grid().is_none());
    }

    #[test]
    fn duplicate_points_rejected() {
        let a = AntennaArray::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::zeros()]);
        assert_eq!(a.validate("tv"), Err(GeometryError::DuplicatePoint(0, 2)));
    }
}
