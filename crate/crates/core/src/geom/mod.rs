//! Spherical geometry primitives.
//!
//! Everything here is immutable after construction and safe to share across
//! worker threads; all operations are pure functions.

mod shape;
mod window;

pub use shape::{solve_ellipsoid_axis, StarShape, SurfaceShape};
pub use window::{GridMaskWindow, SphericalWindow};

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;
use thiserror::Error;

/// Full sphere surface area, 4π steradians.
pub const SPHERE_AREA: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("cannot normalize a zero or non-finite vector ({0}, {1}, {2})")]
    Degenerate(f64, f64, f64),
    #[error("matrix is not a proper rotation: {0}")]
    NotARotation(String),
    #[error("radius {0} outside [0, pi]")]
    RadiusOutOfRange(f64),
    #[error("point ({0:?}) is not on the surface: level-set residual {1:.3e}")]
    OffSurface(Vector3<f64>, f64),
    #[error("ellipsoid semi-axes must be strictly positive, got ({0}, {1}, {2})")]
    BadEllipsoid(f64, f64, f64),
    #[error("star-shape radial function must be strictly positive, got {0} at grid node {1}")]
    BadStarShape(f64, usize),
    #[error("no ellipsoid axis in bracket [{0}, {1}] reaches area {2}")]
    NoRootInBracket(f64, f64, f64),
    #[error("eroding by {r} leaves window `{window}` empty")]
    ErosionEmpty { window: String, r: f64 },
    #[error("window must have positive area, got {0}")]
    EmptyWindow(f64),
}

/// A point on the unit sphere. Inputs are normalized at construction; the
/// stored coordinates satisfy `x^2 + y^2 + z^2 = 1` within 1e-12.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector(Vector3<f64>);

impl UnitVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        Self::from_vector(Vector3::new(x, y, z))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self, GeomError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(GeomError::Degenerate(v.x, v.y, v.z));
        }
        Ok(UnitVector(v / n))
    }

    /// The North pole (0, 0, 1), the reference origin on the sphere.
    pub fn north_pole() -> Self {
        UnitVector(Vector3::new(0.0, 0.0, 1.0))
    }

    /// From longitude/latitude in degrees (astronomy convention).
    pub fn from_lonlat_deg(lon_deg: f64, lat_deg: f64) -> Self {
        let lon = lon_deg.to_radians();
        let lat = lat_deg.to_radians();
        UnitVector(Vector3::new(
            lat.cos() * lon.cos(),
            lat.cos() * lon.sin(),
            lat.sin(),
        ))
    }

    /// Longitude/latitude in degrees; longitude in (-180, 180].
    pub fn lonlat_deg(&self) -> (f64, f64) {
        let lat = self.0.z.clamp(-1.0, 1.0).asin();
        let lon = self.0.y.atan2(self.0.x);
        (lon.to_degrees(), lat.to_degrees())
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn cross(&self, other: &UnitVector) -> Vector3<f64> {
        self.0.cross(&other.0)
    }
}

/// Geodesic (great-circle) distance in radians, in [0, pi].
///
/// Uses the `atan2` form rather than `acos` of the dot product for stability
/// near 0 and pi.
pub fn geodesic_distance(u: &UnitVector, v: &UnitVector) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Area of the spherical cap of geodesic radius `r`: `2*pi*(1 - cos r)`.
pub fn cap_area(r: f64) -> Result<f64, GeomError> {
    if !(0.0..=std::f64::consts::PI).contains(&r) {
        return Err(GeomError::RadiusOutOfRange(r));
    }
    Ok(2.0 * std::f64::consts::PI * (1.0 - r.cos()))
}

/// A proper rotation of the sphere (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `R^T R = I` within 1e-10 and `det R = +1` within 1e-10.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeomError> {
        let gram = m.transpose() * m;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > 1e-10 {
            return Err(GeomError::NotARotation(format!(
                "R^T R deviates from identity by {dev:.3e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(GeomError::NotARotation(format!("det = {det}")));
        }
        Ok(Rotation(m))
    }

    /// Rodrigues rotation about `axis` by `angle` radians.
    pub fn from_axis_angle(axis: &UnitVector, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let k = axis.as_vector();
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Rotation(Matrix3::identity() + kx * s + kx * kx * (1.0 - c))
    }

    /// Unit-quaternion (w, x, y, z) to rotation matrix.
    fn from_unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        Rotation(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    pub fn apply(&self, u: &UnitVector) -> UnitVector {
        // Rotations preserve the norm; renormalize anyway to hold the
        // 1e-12 construction invariant under long compositions.
        UnitVector::from_vector(self.0 * u.0).expect("rotation of a unit vector")
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// The inverse rotation (transpose).
    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Composition: `self * other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// The rotation `O_x` carrying the North pole to `x` along their common
/// geodesic, with rotation axis orthogonal to the pole–`x` plane.
///
/// At `x` equal to the South pole the geodesic is not unique; the fixed
/// convention is a rotation by pi about the (1, 0, 0) axis.
pub fn rotation_to_pole(x: &UnitVector) -> Rotation {
    let o = UnitVector::north_pole();
    let axis_raw = o.cross(x);
    let n = axis_raw.norm();
    if n < 1e-14 {
        return if x.z() > 0.0 {
            Rotation::identity()
        } else {
            Rotation::from_axis_angle(&UnitVector::new(1.0, 0.0, 0.0).unwrap(), std::f64::consts::PI)
        };
    }
    let axis = UnitVector::from_vector(axis_raw).expect("nonzero cross product");
    Rotation::from_axis_angle(&axis, geodesic_distance(&o, x))
}

/// Haar-uniform random rotation, sampled through a uniform unit quaternion
/// (four iid standard normals, normalized). Deterministic for a fixed seed.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let w: f64 = StandardNormal.sample(rng);
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n > 1e-6 {
            return Rotation::from_unit_quaternion(w / n, x / n, y / n, z / n);
        }
    }
}

/// Quasi-uniform deterministic grid of `n` points on the sphere via the
/// golden-spiral (Fibonacci) lattice.
pub fn fibonacci_grid(n: usize) -> Vec<UnitVector> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let theta = golden_angle * i as f64;
            UnitVector(Vector3::new(r * theta.cos(), r * theta.sin(), z))
        })
        .collect()
}

/// A shared Fibonacci grid with equal-area quadrature weights and
/// nearest-node lookup.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    points: Arc<Vec<UnitVector>>,
}

impl SphereGrid {
    pub fn new(n: usize) -> Self {
        SphereGrid {
            points: Arc::new(fibonacci_grid(n)),
        }
    }

    /// Wrap an existing node set (e.g. a grid read back from a file). The
    /// quadrature weight still assumes the nodes are equal-area.
    pub fn from_points(points: Vec<UnitVector>) -> Self {
        SphereGrid {
            points: Arc::new(points),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[UnitVector] {
        &self.points
    }

    /// Quadrature weight per node: 4π / n.
    pub fn node_weight(&self) -> f64 {
        SPHERE_AREA / self.points.len() as f64
    }

    /// Index of the node nearest to `x` (maximal dot product).
    pub fn nearest(&self, x: &UnitVector) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = p.dot(x);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }
}
