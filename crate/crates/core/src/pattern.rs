//! Marked point-pattern data model.
//!
//! Patterns are immutable; every transform returns a new pattern, which makes
//! them safe to share across parallel envelope simulation.

use crate::geom::{
    geodesic_distance, GeomError, Rotation, SphericalWindow, SurfaceShape, UnitVector,
};
use nalgebra::Vector3;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("unknown mark label `{0}`")]
    UnknownMark(String),
    #[error("point {index} at ({x}, {y}, {z}) lies outside the observation window")]
    OutsideWindow { index: usize, x: f64, y: f64, z: f64 },
    #[error("points {0} and {1} coincide within 1e-12; pass jitter_duplicates to perturb")]
    DuplicateLocation(usize, usize),
    #[error("pattern is empty")]
    Empty,
    #[error("point {index} is not on the source surface (residual {residual:.3e})")]
    OffSurface { index: usize, residual: f64 },
    #[error("rotation requires a pattern observed over the full sphere")]
    PartialWindowRotation,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// One event: a location on the unit sphere and a mark index into the
/// pattern's mark set.
#[derive(Debug, Clone, Copy)]
pub struct MarkedPoint {
    pub location: UnitVector,
    pub mark: usize,
}

/// A finite simple marked point pattern on the sphere.
#[derive(Debug, Clone)]
pub struct MarkedPattern {
    points: Vec<MarkedPoint>,
    mark_set: Vec<String>,
    window: SphericalWindow,
    source_shape: Option<SurfaceShape>,
    source_points: Option<Vec<Vector3<f64>>>,
}

/// A region argument for counting: a window or a geodesic cap.
#[derive(Debug, Clone)]
pub enum Region {
    Window(SphericalWindow),
    Cap { center: UnitVector, radius: f64 },
}

impl Region {
    pub fn contains(&self, x: &UnitVector) -> bool {
        match self {
            Region::Window(w) => w.contains(x),
            Region::Cap { center, radius } => geodesic_distance(x, center) <= *radius,
        }
    }
}

impl MarkedPattern {
    /// Build a pattern from `(location, label)` pairs. All labels must be in
    /// `mark_set`, all locations in `window`, and locations must be pairwise
    /// distinct within 1e-12 (the process is simple).
    pub fn new(
        points: Vec<(UnitVector, String)>,
        mark_set: Vec<String>,
        window: SphericalWindow,
    ) -> Result<Self, PatternError> {
        Self::with_options(points, mark_set, window, false)
    }

    /// As [`MarkedPattern::new`], but with `jitter_duplicates` coincident
    /// locations are perturbed by 1e-9 radians instead of rejected.
    pub fn with_options(
        points: Vec<(UnitVector, String)>,
        mark_set: Vec<String>,
        window: SphericalWindow,
        jitter_duplicates: bool,
    ) -> Result<Self, PatternError> {
        let index_of = |label: &str| -> Result<usize, PatternError> {
            mark_set
                .iter()
                .position(|m| m == label)
                .ok_or_else(|| PatternError::UnknownMark(label.to_string()))
        };
        let mut out: Vec<MarkedPoint> = Vec::with_capacity(points.len());
        for (i, (loc, label)) in points.into_iter().enumerate() {
            let mark = index_of(&label)?;
            let mut loc = loc;
            if !window.contains(&loc) {
                return Err(PatternError::OutsideWindow {
                    index: i,
                    x: loc.x(),
                    y: loc.y(),
                    z: loc.z(),
                });
            }
            let mut attempts = 0;
            while let Some(j) = out
                .iter()
                .position(|p| geodesic_distance(&p.location, &loc) < 1e-12)
            {
                if !jitter_duplicates {
                    return Err(PatternError::DuplicateLocation(j, i));
                }
                attempts += 1;
                loc = jitter(&loc, attempts);
            }
            out.push(MarkedPoint { location: loc, mark });
        }
        Ok(MarkedPattern {
            points: out,
            mark_set,
            window,
            source_shape: None,
            source_points: None,
        })
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mark_set(&self) -> &[String] {
        &self.mark_set
    }

    pub fn window(&self) -> &SphericalWindow {
        &self.window
    }

    pub fn source_shape(&self) -> Option<&SurfaceShape> {
        self.source_shape.as_ref()
    }

    /// Original on-surface coordinates when the pattern was mapped from a
    /// shape.
    pub fn source_points(&self) -> Option<&[Vector3<f64>]> {
        self.source_points.as_deref()
    }

    pub fn mark_index(&self, label: &str) -> Result<usize, PatternError> {
        self.mark_set
            .iter()
            .position(|m| m == label)
            .ok_or_else(|| PatternError::UnknownMark(label.to_string()))
    }

    pub fn label(&self, mark: usize) -> &str {
        &self.mark_set[mark]
    }

    /// Locations of all points carrying `label`.
    pub fn component_points(&self, label: &str) -> Result<Vec<UnitVector>, PatternError> {
        let idx = self.mark_index(label)?;
        Ok(self
            .points
            .iter()
            .filter(|p| p.mark == idx)
            .map(|p| p.location)
            .collect())
    }

    /// Number of points with location in `region` and mark in `marks`.
    pub fn count(&self, region: &Region, marks: &[&str]) -> Result<usize, PatternError> {
        let mut want = vec![false; self.mark_set.len()];
        for label in marks {
            want[self.mark_index(label)?] = true;
        }
        Ok(self
            .points
            .iter()
            .filter(|p| want[p.mark] && region.contains(&p.location))
            .count())
    }

    /// Windowed fraction of points with mark in `marks`:
    /// `N(W x C) / N(W x M)`.
    pub fn mark_fraction(&self, marks: &[&str]) -> Result<f64, PatternError> {
        if self.points.is_empty() {
            return Err(PatternError::Empty);
        }
        let region = Region::Window(self.window.clone());
        let c = self.count(&region, marks)? as f64;
        Ok(c / self.points.len() as f64)
    }

    /// Split into one single-mark pattern per label, preserving order,
    /// window and source shape. Labels with no points map to empty patterns.
    pub fn split_components(&self) -> BTreeMap<String, MarkedPattern> {
        let mut out = BTreeMap::new();
        for (idx, label) in self.mark_set.iter().enumerate() {
            let select: Vec<usize> = (0..self.points.len())
                .filter(|&i| self.points[i].mark == idx)
                .collect();
            let points = select
                .iter()
                .map(|&i| MarkedPoint {
                    location: self.points[i].location,
                    mark: 0,
                })
                .collect();
            out.insert(
                label.clone(),
                MarkedPattern {
                    points,
                    mark_set: vec![label.clone()],
                    window: self.window.clone(),
                    source_shape: self.source_shape.clone(),
                    source_points: self
                        .source_points
                        .as_ref()
                        .map(|src| select.iter().map(|&i| src[i]).collect()),
                },
            );
        }
        out
    }

    /// Rotate every location by `o`. Only full-sphere patterns can be
    /// rotated: a partial window would no longer cover the moved points.
    pub fn rotate(&self, o: &Rotation) -> Result<MarkedPattern, PatternError> {
        if !self.window.is_full_sphere() {
            return Err(PatternError::PartialWindowRotation);
        }
        Ok(MarkedPattern {
            points: self
                .points
                .iter()
                .map(|p| MarkedPoint {
                    location: o.apply(&p.location),
                    mark: p.mark,
                })
                .collect(),
            mark_set: self.mark_set.clone(),
            window: SphericalWindow::FullSphere,
            source_shape: self.source_shape.clone(),
            source_points: self
                .source_points
                .as_ref()
                .map(|src| src.iter().map(|v| o.apply_vector(v)).collect()),
        })
    }

    /// Rotate only the points carrying `label`; other components untouched.
    pub fn rotate_component(&self, label: &str, o: &Rotation) -> Result<MarkedPattern, PatternError> {
        if !self.window.is_full_sphere() {
            return Err(PatternError::PartialWindowRotation);
        }
        let idx = self.mark_index(label)?;
        Ok(MarkedPattern {
            points: self
                .points
                .iter()
                .map(|p| {
                    if p.mark == idx {
                        MarkedPoint {
                            location: o.apply(&p.location),
                            mark: p.mark,
                        }
                    } else {
                        *p
                    }
                })
                .collect(),
            mark_set: self.mark_set.clone(),
            window: SphericalWindow::FullSphere,
            source_shape: self.source_shape.clone(),
            source_points: None,
        })
    }
}

/// Deterministic tangential perturbation by `1e-9 * n` radians.
fn jitter(loc: &UnitVector, n: u32) -> UnitVector {
    let v = loc.as_vector();
    let helper = if v.z.abs() < 0.9 {
        Vector3::new(0.0, 0.0, 1.0)
    } else {
        Vector3::new(1.0, 0.0, 0.0)
    };
    let tangent = v.cross(&helper).normalize();
    let eps = 1e-9 * n as f64;
    UnitVector::from_vector(v + tangent * eps).expect("jittered unit vector")
}

/// A marked pattern on a surface, before mapping to the sphere.
#[derive(Debug, Clone)]
pub struct ShapePattern {
    shape: SurfaceShape,
    points: Vec<(Vector3<f64>, usize)>,
    mark_set: Vec<String>,
}

impl ShapePattern {
    /// Points must satisfy the shape's level-set equation within 1e-8.
    pub fn new(
        shape: SurfaceShape,
        points: Vec<(Vector3<f64>, String)>,
        mark_set: Vec<String>,
    ) -> Result<Self, PatternError> {
        let mut out = Vec::with_capacity(points.len());
        for (i, (p, label)) in points.into_iter().enumerate() {
            let mark = mark_set
                .iter()
                .position(|m| m == &label)
                .ok_or_else(|| PatternError::UnknownMark(label.clone()))?;
            let residual = shape.level_residual(&p);
            if residual.abs() > 1e-8 {
                return Err(PatternError::OffSurface { index: i, residual });
            }
            out.push((p, mark));
        }
        Ok(ShapePattern {
            shape,
            points: out,
            mark_set,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn shape(&self) -> &SurfaceShape {
        &self.shape
    }

    pub fn points(&self) -> &[(Vector3<f64>, usize)] {
        &self.points
    }

    pub fn mark_set(&self) -> &[String] {
        &self.mark_set
    }

    /// Map the whole pattern through the shape's bijection onto the sphere.
    /// Marks and cardinality are preserved; the original coordinates are
    /// retained on the result. The observation window maps to the full
    /// sphere.
    pub fn to_sphere(&self) -> Result<MarkedPattern, PatternError> {
        let mut mapped = Vec::with_capacity(self.points.len());
        let mut source = Vec::with_capacity(self.points.len());
        for (i, (p, mark)) in self.points.iter().enumerate() {
            let loc = self
                .shape
                .map_to_sphere(p)
                .map_err(|e| match e {
                    GeomError::OffSurface(_, residual) => {
                        PatternError::OffSurface { index: i, residual }
                    }
                    other => PatternError::Geom(other),
                })?;
            mapped.push(MarkedPoint {
                location: loc,
                mark: *mark,
            });
            source.push(*p);
        }
        Ok(MarkedPattern {
            points: mapped,
            mark_set: self.mark_set.clone(),
            window: SphericalWindow::FullSphere,
            source_shape: Some(self.shape.clone()),
            source_points: Some(source),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{fibonacci_grid, random_rotation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_pattern(n_a: usize, n_b: usize, seed: u64) -> MarkedPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = UnitVector::north_pole();
        let mut pts = Vec::new();
        for _ in 0..n_a {
            pts.push((random_rotation(&mut rng).apply(&o), "a".to_string()));
        }
        for _ in 0..n_b {
            pts.push((random_rotation(&mut rng).apply(&o), "b".to_string()));
        }
        MarkedPattern::new(
            pts,
            vec!["a".to_string(), "b".to_string()],
            SphericalWindow::FullSphere,
        )
        .unwrap()
    }

    #[test]
    fn count_cases() {
        let empty = MarkedPattern::new(
            vec![],
            vec!["a".to_string()],
            SphericalWindow::FullSphere,
        )
        .unwrap();
        let region = Region::Window(SphericalWindow::FullSphere);
        assert_eq!(empty.count(&region, &["a"]).unwrap(), 0);

        let p = sample_pattern(5, 0, 1);
        assert_eq!(p.count(&region, &["a"]).unwrap(), 5);
        assert!(p.count(&region, &["zebra"]).is_err());

        // cap of radius 0.01 around one point of a small pattern
        let q = sample_pattern(4, 0, 2);
        let cap = Region::Cap {
            center: q.points()[2].location,
            radius: 0.01,
        };
        assert_eq!(q.count(&cap, &["a"]).unwrap(), 1);
    }

    #[test]
    fn count_additive_over_disjoint_marks() {
        let p = sample_pattern(7, 11, 3);
        let region = Region::Window(SphericalWindow::FullSphere);
        let a = p.count(&region, &["a"]).unwrap();
        let b = p.count(&region, &["b"]).unwrap();
        assert_eq!(a + b, p.count(&region, &["a", "b"]).unwrap());
        assert_eq!(a + b, p.len());
    }

    #[test]
    fn mark_fraction_cases() {
        let p = sample_pattern(5, 0, 4);
        assert_eq!(p.mark_fraction(&["a"]).unwrap(), 1.0);
        let q = sample_pattern(3, 9, 5);
        assert_eq!(q.mark_fraction(&["a", "b"]).unwrap(), 1.0);
        // galaxy-sized ratio
        let g = sample_pattern(6674, 1231, 6);
        let f = g.mark_fraction(&["a"]).unwrap();
        assert!((f - 6674.0 / 7905.0).abs() < 1e-15);
        let empty =
            MarkedPattern::new(vec![], vec!["a".into()], SphericalWindow::FullSphere).unwrap();
        assert!(empty.mark_fraction(&["a"]).is_err());
    }

    #[test]
    fn split_and_merge_round_trip() {
        let p = sample_pattern(3, 4, 7);
        let parts = p.split_components();
        assert_eq!(parts["a"].len(), 3);
        assert_eq!(parts["b"].len(), 4);
        let total: usize = parts.values().map(|c| c.len()).sum();
        assert_eq!(total, p.len());
        // multiset equality via sorted coordinates
        let mut orig: Vec<_> = p
            .points()
            .iter()
            .map(|pt| {
                (
                    p.label(pt.mark).to_string(),
                    format!("{:.15e},{:.15e},{:.15e}", pt.location.x(), pt.location.y(), pt.location.z()),
                )
            })
            .collect();
        let mut merged: Vec<_> = parts
            .iter()
            .flat_map(|(label, comp)| {
                comp.points().iter().map(move |pt| {
                    (
                        label.clone(),
                        format!("{:.15e},{:.15e},{:.15e}", pt.location.x(), pt.location.y(), pt.location.z()),
                    )
                })
            })
            .collect();
        orig.sort();
        merged.sort();
        assert_eq!(orig, merged);
    }

    #[test]
    fn single_mark_split_is_identity() {
        let p = sample_pattern(6, 0, 8);
        let parts = p.split_components();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts["a"].len(), 6);
        assert!(parts["b"].is_empty());
    }

    #[test]
    fn rotation_identity_and_inverse() {
        let p = sample_pattern(10, 5, 9);
        let id = Rotation::identity();
        let same = p.rotate(&id).unwrap();
        for (x, y) in p.points().iter().zip(same.points()) {
            assert!(geodesic_distance(&x.location, &y.location) < 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let o = random_rotation(&mut rng);
        let back = p.rotate(&o).unwrap().rotate(&o.transpose()).unwrap();
        for (x, y) in p.points().iter().zip(back.points()) {
            assert!(geodesic_distance(&x.location, &y.location) < 1e-12);
        }
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let p = sample_pattern(8, 8, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let o = random_rotation(&mut rng);
        let q = p.rotate(&o).unwrap();
        for i in 0..p.len() {
            for j in (i + 1)..p.len() {
                let d0 = geodesic_distance(&p.points()[i].location, &p.points()[j].location);
                let d1 = geodesic_distance(&q.points()[i].location, &q.points()[j].location);
                assert!((d0 - d1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rotation_rejected_on_partial_window() {
        let w = SphericalWindow::band_exclusion(0.2).unwrap();
        let p = MarkedPattern::new(
            vec![(UnitVector::north_pole(), "a".to_string())],
            vec!["a".to_string()],
            w,
        )
        .unwrap();
        assert!(matches!(
            p.rotate(&Rotation::identity()),
            Err(PatternError::PartialWindowRotation)
        ));
    }

    #[test]
    fn duplicates_rejected_then_jittered() {
        let o = UnitVector::north_pole();
        let pts = vec![(o, "a".to_string()), (o, "a".to_string())];
        let err = MarkedPattern::new(pts.clone(), vec!["a".into()], SphericalWindow::FullSphere)
            .unwrap_err();
        assert!(matches!(err, PatternError::DuplicateLocation(0, 1)));
        let ok = MarkedPattern::with_options(
            pts,
            vec!["a".into()],
            SphericalWindow::FullSphere,
            true,
        )
        .unwrap();
        let d = geodesic_distance(&ok.points()[0].location, &ok.points()[1].location);
        assert!(d >= 1e-12 && d < 1e-8);
    }

    #[test]
    fn window_membership_enforced() {
        let w = SphericalWindow::band_exclusion(0.3).unwrap();
        let equator = UnitVector::new(1.0, 0.0, 0.0).unwrap();
        let err = MarkedPattern::new(
            vec![(equator, "a".to_string())],
            vec!["a".to_string()],
            w,
        )
        .unwrap_err();
        assert!(matches!(err, PatternError::OutsideWindow { index: 0, .. }));
    }

    #[test]
    fn shape_pattern_maps_to_sphere() {
        let shape = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        let raw: Vec<(Vector3<f64>, String)> = fibonacci_grid(20)
            .iter()
            .map(|s| (shape.inverse_map(s), "a".to_string()))
            .collect();
        let sp = ShapePattern::new(shape.clone(), raw, vec!["a".to_string()]).unwrap();
        let mapped = sp.to_sphere().unwrap();
        assert_eq!(mapped.len(), 20);
        assert!(mapped.window().is_full_sphere());
        assert!(mapped.source_shape().is_some());
        assert_eq!(mapped.source_points().unwrap().len(), 20);
        for p in mapped.points() {
            assert!((p.location.as_vector().norm() - 1.0).abs() < 1e-12);
        }
        // pole maps to pole
        let pole = ShapePattern::new(
            shape.clone(),
            vec![(Vector3::new(0.0, 0.0, 1.44), "a".to_string())],
            vec!["a".to_string()],
        )
        .unwrap()
        .to_sphere()
        .unwrap();
        assert!(geodesic_distance(&pole.points()[0].location, &UnitVector::north_pole()) < 1e-9);
    }

    #[test]
    fn shape_pattern_sphere_is_identity() {
        let raw: Vec<(Vector3<f64>, String)> = fibonacci_grid(10)
            .iter()
            .map(|s| (*s.as_vector(), "a".to_string()))
            .collect();
        let sp = ShapePattern::new(SurfaceShape::Sphere, raw.clone(), vec!["a".to_string()]).unwrap();
        let mapped = sp.to_sphere().unwrap();
        for ((v, _), p) in raw.iter().zip(mapped.points()) {
            assert!((v - p.location.as_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn shape_pattern_rejects_off_surface_with_index() {
        let shape = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        let good = shape.inverse_map(&UnitVector::north_pole());
        let bad = Vector3::new(0.5, 0.5, 0.5);
        let err = ShapePattern::new(
            shape,
            vec![(good, "a".to_string()), (bad, "a".to_string())],
            vec!["a".to_string()],
        )
        .unwrap_err();
        assert!(matches!(err, PatternError::OffSurface { index: 1, .. }));
    }
}
