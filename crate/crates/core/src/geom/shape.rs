//! Closed surfaces with a bijection to the unit sphere.
//!
//! Each shape carries the radial bijection `f` to the sphere and the ratio of
//! area elements `|J_f|` needed to transport intensity functions across the
//! mapping. Only shapes star-shaped at the origin are representable; the
//! general implicit level-set case is out of scope.

use super::{fibonacci_grid, GeomError, UnitVector, SPHERE_AREA};
use nalgebra::Vector3;
use std::fmt;
use std::sync::Arc;

/// Radial function of a star-shaped surface: distance from the origin to the
/// surface along each direction. Strictly positive.
#[derive(Clone)]
pub struct StarShape {
    radial: Arc<dyn Fn(&UnitVector) -> f64 + Send + Sync>,
}

impl fmt::Debug for StarShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StarShape").finish_non_exhaustive()
    }
}

impl StarShape {
    pub fn radius(&self, s: &UnitVector) -> f64 {
        (self.radial)(s)
    }
}

/// A parametrized closed surface admitting the bijection to the sphere.
#[derive(Debug, Clone)]
pub enum SurfaceShape {
    Sphere,
    Ellipsoid { a: f64, b: f64, c: f64 },
    StarShape(StarShape),
}

/// Validation grid size for star-shape positivity and for sup/area scans.
const VALIDATION_GRID: usize = 2_000;

/// Default quadrature grid for `surface_area`.
const AREA_GRID: usize = 20_000;

/// Finite-difference step for the star-shape area-element ratio.
const FD_STEP: f64 = 1e-5;

impl SurfaceShape {
    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self, GeomError> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(GeomError::BadEllipsoid(a, b, c));
        }
        Ok(SurfaceShape::Ellipsoid { a, b, c })
    }

    /// A surface star-shaped at the origin, given by its radial function.
    /// Positivity is checked on a validation grid.
    pub fn star<F>(radial: F) -> Result<Self, GeomError>
    where
        F: Fn(&UnitVector) -> f64 + Send + Sync + 'static,
    {
        for (i, s) in fibonacci_grid(VALIDATION_GRID).iter().enumerate() {
            let r = radial(s);
            if !(r.is_finite() && r > 0.0) {
                return Err(GeomError::BadStarShape(r, i));
            }
        }
        Ok(SurfaceShape::StarShape(StarShape {
            radial: Arc::new(radial),
        }))
    }

    /// Signed residual of the shape's level-set equation at `p`; zero on the
    /// surface.
    pub fn level_residual(&self, p: &Vector3<f64>) -> f64 {
        match self {
            SurfaceShape::Sphere => p.norm() - 1.0,
            SurfaceShape::Ellipsoid { a, b, c } => {
                Vector3::new(p.x / a, p.y / b, p.z / c).norm() - 1.0
            }
            SurfaceShape::StarShape(star) => match UnitVector::from_vector(*p) {
                Ok(dir) => p.norm() / star.radius(&dir) - 1.0,
                Err(_) => -1.0,
            },
        }
    }

    /// The bijection `f` from the surface to the sphere. `p` must satisfy the
    /// shape's level-set equation within 1e-8.
    pub fn map_to_sphere(&self, p: &Vector3<f64>) -> Result<UnitVector, GeomError> {
        let resid = self.level_residual(p);
        if resid.abs() > 1e-8 {
            return Err(GeomError::OffSurface(*p, resid));
        }
        let image = match self {
            SurfaceShape::Sphere => *p,
            SurfaceShape::Ellipsoid { a, b, c } => Vector3::new(p.x / a, p.y / b, p.z / c),
            SurfaceShape::StarShape(_) => *p,
        };
        UnitVector::from_vector(image)
    }

    /// Inverse of `map_to_sphere`: the surface point in direction class `s`.
    pub fn inverse_map(&self, s: &UnitVector) -> Vector3<f64> {
        let v = s.as_vector();
        match self {
            SurfaceShape::Sphere => *v,
            SurfaceShape::Ellipsoid { a, b, c } => Vector3::new(a * v.x, b * v.y, c * v.z),
            SurfaceShape::StarShape(star) => v * star.radius(s),
        }
    }

    /// Ratio of area elements `d(lambda_D) / d(lambda_S2)` at `f^{-1}(s)`,
    /// so that integrating `h(s) * J(s)` over the sphere equals integrating
    /// `h(f(p))` over the surface.
    ///
    /// Analytic for the sphere and ellipsoid; central finite differences
    /// (step 1e-5) on a local tangent parametrization for star-shapes.
    pub fn surface_jacobian(&self, s: &UnitVector) -> f64 {
        match self {
            SurfaceShape::Sphere => 1.0,
            SurfaceShape::Ellipsoid { a, b, c } => {
                // From the spherical-angle parametrization of both surfaces:
                // |r_theta x r_phi| / sin(theta) = sqrt(b^2c^2 x^2 + a^2c^2 y^2 + a^2b^2 z^2).
                let v = s.as_vector();
                ((b * c * v.x).powi(2) + (a * c * v.y).powi(2) + (a * b * v.z).powi(2)).sqrt()
            }
            SurfaceShape::StarShape(_) => self.jacobian_fd(s),
        }
    }

    /// Finite-difference area-element ratio on a local tangent frame at `s`.
    fn jacobian_fd(&self, s: &UnitVector) -> f64 {
        let v = s.as_vector();
        let helper = if v.z.abs() < 0.9 {
            Vector3::new(0.0, 0.0, 1.0)
        } else {
            Vector3::new(1.0, 0.0, 0.0)
        };
        let e1 = v.cross(&helper).normalize();
        let e2 = v.cross(&e1).normalize();
        let at = |du: f64, dv: f64| -> (Vector3<f64>, Vector3<f64>) {
            let dir = UnitVector::from_vector(v + e1 * du + e2 * dv).expect("small perturbation");
            (self.inverse_map(&dir), *dir.as_vector())
        };
        let (p_up, s_up) = at(FD_STEP, 0.0);
        let (p_un, s_un) = at(-FD_STEP, 0.0);
        let (p_vp, s_vp) = at(0.0, FD_STEP);
        let (p_vn, s_vn) = at(0.0, -FD_STEP);
        let dp_u = (p_up - p_un) / (2.0 * FD_STEP);
        let dp_v = (p_vp - p_vn) / (2.0 * FD_STEP);
        let ds_u = (s_up - s_un) / (2.0 * FD_STEP);
        let ds_v = (s_vp - s_vn) / (2.0 * FD_STEP);
        dp_u.cross(&dp_v).norm() / ds_u.cross(&ds_v).norm()
    }

    /// Total surface area by quadrature of the area-element ratio on a
    /// Fibonacci grid (default 20,000 nodes).
    pub fn surface_area(&self) -> f64 {
        self.surface_area_with(AREA_GRID)
    }

    pub fn surface_area_with(&self, nodes: usize) -> f64 {
        match self {
            SurfaceShape::Sphere => SPHERE_AREA,
            _ => {
                let w = SPHERE_AREA / nodes as f64;
                fibonacci_grid(nodes)
                    .iter()
                    .map(|s| self.surface_jacobian(s))
                    .sum::<f64>()
                    * w
            }
        }
    }

    /// Largest area-element ratio over the sphere; exact for the sphere and
    /// ellipsoid, a safety-factored grid scan for star-shapes.
    pub(crate) fn jacobian_sup(&self) -> f64 {
        match self {
            SurfaceShape::Sphere => 1.0,
            SurfaceShape::Ellipsoid { a, b, c } => (b * c).max(a * c).max(a * b),
            SurfaceShape::StarShape(_) => {
                let sup = fibonacci_grid(VALIDATION_GRID)
                    .iter()
                    .map(|s| self.surface_jacobian(s))
                    .fold(0.0, f64::max);
                sup * 1.05
            }
        }
    }
}

/// Solve for the third ellipsoid semi-axis `c` such that the surface area of
/// `Ellipsoid(a, b, c)` matches `target_area`, by bisection on
/// `[1e-3, 1e3]` to a relative tolerance of 1e-6.
pub fn solve_ellipsoid_axis(a: f64, b: f64, target_area: f64) -> Result<f64, GeomError> {
    let (lo, hi) = (1e-3, 1e3);
    let area = |c: f64| SurfaceShape::Ellipsoid { a, b, c }.surface_area();
    if area(lo) > target_area || area(hi) < target_area {
        return Err(GeomError::NoRootInBracket(lo, hi, target_area));
    }
    let tol = 1e-6 * target_area;
    let (mut lo, mut hi) = (lo, hi);
    loop {
        let mid = 0.5 * (lo + hi);
        let val = area(mid);
        if (val - target_area).abs() < tol || (hi - lo) < 1e-12 {
            return Ok(mid);
        }
        if val < target_area {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SphereGrid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn map_to_sphere_poles_and_axes() {
        let e = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        let img = e.map_to_sphere(&Vector3::new(0.0, 0.0, 1.44)).unwrap();
        assert!(img.as_vector().relative_eq(&Vector3::new(0.0, 0.0, 1.0), 1e-12, 1e-12));
        let img = e.map_to_sphere(&Vector3::new(0.8, 0.0, 0.0)).unwrap();
        assert!(img.as_vector().relative_eq(&Vector3::new(1.0, 0.0, 0.0), 1e-12, 1e-12));
    }

    #[test]
    fn map_to_sphere_rejects_off_surface() {
        let e = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        let err = e.map_to_sphere(&Vector3::new(0.0, 0.0, 1.3)).unwrap_err();
        match err {
            GeomError::OffSurface(_, resid) => assert!(resid.abs() > 1e-8),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn star_shape_maps_radially() {
        let s = SurfaceShape::star(|_| 2.0).unwrap();
        let img = s.map_to_sphere(&Vector3::new(0.0, 2.0, 0.0)).unwrap();
        assert!(img.as_vector().relative_eq(&Vector3::new(0.0, 1.0, 0.0), 1e-12, 1e-12));
    }

    #[test]
    fn star_shape_rejects_nonpositive_radial() {
        assert!(SurfaceShape::star(|s: &UnitVector| s.z()).is_err());
    }

    #[test]
    fn inverse_map_round_trip() {
        let shapes = [
            SurfaceShape::Sphere,
            SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap(),
            SurfaceShape::star(|s: &UnitVector| 1.5 + 0.3 * s.z()).unwrap(),
        ];
        for shape in &shapes {
            for s in fibonacci_grid(200) {
                let p = shape.inverse_map(&s);
                assert!(shape.level_residual(&p).abs() < 1e-10);
                let back = shape.map_to_sphere(&p).unwrap();
                assert!((back.as_vector() - s.as_vector()).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn unit_jacobians() {
        let sphere = SurfaceShape::Sphere;
        let degenerate = SurfaceShape::ellipsoid(1.0, 1.0, 1.0).unwrap();
        for s in fibonacci_grid(50) {
            assert_eq!(sphere.surface_jacobian(&s), 1.0);
            assert_abs_diff_eq!(degenerate.surface_jacobian(&s), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ellipsoid_fd_jacobian_matches_analytic() {
        let e = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        for s in fibonacci_grid(100) {
            assert_abs_diff_eq!(e.jacobian_fd(&s), e.surface_jacobian(&s), epsilon = 1e-6);
        }
    }

    #[test]
    fn ellipsoid_jacobian_integrates_to_area() {
        // with the solved axis the quadrature hits 4 pi tightly; the rounded
        // c = 1.44 carries its 3-s.f. truncation into the area
        let c = solve_ellipsoid_axis(0.8, 0.8, SPHERE_AREA).unwrap();
        let grid = SphereGrid::new(20_000);
        let total = |shape: &SurfaceShape| -> f64 {
            grid.points().iter().map(|s| shape.surface_jacobian(s)).sum::<f64>()
                * grid.node_weight()
        };
        let solved = SurfaceShape::ellipsoid(0.8, 0.8, c).unwrap();
        assert_abs_diff_eq!(total(&solved), SPHERE_AREA, epsilon = 1e-3);
        let rounded = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        assert!((total(&rounded) - SPHERE_AREA).abs() / SPHERE_AREA < 1e-3);
    }

    #[test]
    fn surface_areas() {
        assert_abs_diff_eq!(SurfaceShape::Sphere.surface_area(), SPHERE_AREA, epsilon = 1e-6);
        let e = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        assert_abs_diff_eq!(e.surface_area(), SPHERE_AREA, epsilon = 5e-3);
        let big = SurfaceShape::ellipsoid(2.0, 2.0, 2.0).unwrap();
        assert_abs_diff_eq!(big.surface_area(), 4.0 * SPHERE_AREA, epsilon = 1e-3);
    }

    #[test]
    fn star_shape_area_consistency() {
        // constant radial 2 is the radius-2 sphere: area 16 pi
        let s = SurfaceShape::star(|_| 2.0).unwrap();
        assert_abs_diff_eq!(s.surface_area_with(5_000), 4.0 * SPHERE_AREA, epsilon = 1e-2);
    }

    #[test]
    fn solve_axis_unit_sphere() {
        let c = solve_ellipsoid_axis(1.0, 1.0, SPHERE_AREA).unwrap();
        assert_abs_diff_eq!(c, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn solve_axis_paper_ellipsoid() {
        let c = solve_ellipsoid_axis(0.8, 0.8, SPHERE_AREA).unwrap();
        assert!((c - 1.44).abs() < 0.005, "c = {c}");
    }

    #[test]
    fn solve_axis_round_trip() {
        let c = solve_ellipsoid_axis(0.5, 0.5, SPHERE_AREA).unwrap();
        let area = SurfaceShape::Ellipsoid { a: 0.5, b: 0.5, c }.surface_area();
        assert!((area - SPHERE_AREA).abs() < 1e-6 * SPHERE_AREA);
    }
}
