//! Intensity models and estimators.
//!
//! An [`IntensityModel`] evaluates the intensity of a single mark's component
//! process anywhere on the sphere. Models are immutable after fit and
//! evaluation is pure, so they can be shared across parallel workers. Where a
//! family of marks is needed the estimators take a map from label to model.

use crate::geom::{Rotation, SphereGrid, SphericalWindow, SurfaceShape, UnitVector};
use crate::pattern::{MarkedPattern, Region};
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntensityError {
    #[error("intensity must be strictly positive; minimum over the evaluation grid is {0}")]
    NonPositive(f64),
    #[error("no `{0}` points: a positive intensity cannot be estimated from an empty component")]
    EmptyComponent(String),
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("grid field needs one value per node: {values} values for {nodes} nodes")]
    GridMismatch { values: usize, nodes: usize },
    #[error("no intensity model provided for mark `{0}`")]
    MissingModel(String),
    #[error(transparent)]
    Pattern(#[from] crate::pattern::PatternError),
}

/// Grid used for positivity validation and infimum bounds of analytic fields.
const INF_GRID: usize = 10_000;

/// Undershoot guard for grid infima of analytic fields.
const ANALYTIC_SAFETY: f64 = 0.999;

#[derive(Clone)]
enum Kind {
    Constant(f64),
    GridField {
        grid: SphereGrid,
        values: Arc<Vec<f64>>,
    },
    Analytic(Arc<dyn Fn(&Vector3<f64>) -> f64 + Send + Sync>),
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Constant(v) => write!(f, "Constant({v})"),
            Kind::GridField { grid, .. } => write!(f, "GridField({} nodes)", grid.len()),
            Kind::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

/// Evaluable intensity of one component process over the sphere.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    kind: Kind,
    /// Applied to the query point before evaluation; composing here keeps
    /// full-sphere infimum bounds exact under rotation.
    pre_rotation: Option<Rotation>,
    /// Infimum bound over the full sphere, fixed at construction.
    inf_full: f64,
}

impl IntensityModel {
    pub fn constant(rho: f64) -> Result<Self, IntensityError> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(IntensityError::NonPositive(rho));
        }
        Ok(IntensityModel {
            kind: Kind::Constant(rho),
            pre_rotation: None,
            inf_full: rho,
        })
    }

    /// A closed-form intensity as a function of the (x, y, z) location.
    /// Positivity is validated on the evaluation grid.
    pub fn analytic<F>(f: F) -> Result<Self, IntensityError>
    where
        F: Fn(&Vector3<f64>) -> f64 + Send + Sync + 'static,
    {
        let f = Arc::new(f);
        let mut min = f64::INFINITY;
        for s in crate::geom::fibonacci_grid(INF_GRID) {
            let v = f(s.as_vector());
            if !v.is_finite() || v <= 0.0 {
                return Err(IntensityError::NonPositive(v));
            }
            min = min.min(v);
        }
        Ok(IntensityModel {
            kind: Kind::Analytic(f),
            pre_rotation: None,
            inf_full: min * ANALYTIC_SAFETY,
        })
    }

    /// A field given by values on a grid, interpolated to the nearest node.
    pub fn grid_field(grid: SphereGrid, values: Vec<f64>) -> Result<Self, IntensityError> {
        if values.len() != grid.len() {
            return Err(IntensityError::GridMismatch {
                values: values.len(),
                nodes: grid.len(),
            });
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !min.is_finite() || min <= 0.0 {
            return Err(IntensityError::NonPositive(min));
        }
        Ok(IntensityModel {
            kind: Kind::GridField {
                grid,
                values: Arc::new(values),
            },
            pre_rotation: None,
            inf_full: min,
        })
    }

    /// Intensity at a point of the sphere.
    pub fn eval(&self, x: &UnitVector) -> f64 {
        self.eval_raw(x.as_vector())
    }

    /// Intensity at a raw 3-vector; used when the model lives on a surface
    /// whose points are not unit vectors. Grid fields interpolate along the
    /// direction of `p`.
    pub fn eval_raw(&self, p: &Vector3<f64>) -> f64 {
        let q = match &self.pre_rotation {
            Some(o) => o.apply_vector(p),
            None => *p,
        };
        match &self.kind {
            Kind::Constant(v) => *v,
            Kind::GridField { grid, values } => {
                let dir = UnitVector::from_vector(q).expect("nonzero query point");
                values[grid.nearest(&dir)]
            }
            Kind::Analytic(f) => f(&q),
        }
    }

    /// Lower bound for the intensity over `window`: exact for constants,
    /// the node minimum for grid fields, and a safety-factored grid minimum
    /// for analytic fields.
    pub fn infimum_bound(&self, window: &SphericalWindow) -> Result<f64, IntensityError> {
        // Full-sphere infima are rotation invariant, so use the bound fixed
        // at construction; under partial windows scan the rotated field.
        let bound = if window.is_full_sphere() {
            self.inf_full
        } else {
            match &self.kind {
                Kind::Constant(v) => *v,
                Kind::GridField { grid, values } => {
                    let mut min = f64::INFINITY;
                    for (node, v) in grid.points().iter().zip(values.iter()) {
                        let q = match &self.pre_rotation {
                            Some(o) => o.transpose().apply(node),
                            None => *node,
                        };
                        if window.contains(&q) {
                            min = min.min(*v);
                        }
                    }
                    if min.is_finite() {
                        min
                    } else {
                        self.inf_full
                    }
                }
                Kind::Analytic(_) => {
                    let mut min = f64::INFINITY;
                    for s in crate::geom::fibonacci_grid(INF_GRID) {
                        if window.contains(&s) {
                            min = min.min(self.eval(&s));
                        }
                    }
                    if min.is_finite() {
                        min * ANALYTIC_SAFETY
                    } else {
                        self.inf_full
                    }
                }
            }
        };
        if bound > 0.0 {
            Ok(bound)
        } else {
            Err(IntensityError::NonPositive(bound))
        }
    }

    /// The rotated field `x -> rho(O x)`. The full-sphere infimum bound is
    /// unchanged.
    pub fn rotated(&self, o: &Rotation) -> IntensityModel {
        let pre_rotation = match &self.pre_rotation {
            Some(existing) => Some(existing.compose(o)),
            None => Some(*o),
        };
        IntensityModel {
            kind: self.kind.clone(),
            pre_rotation,
            inf_full: self.inf_full,
        }
    }

    /// Grid and node values when this model is an (unrotated) grid field.
    pub fn as_grid_field(&self) -> Option<(&SphereGrid, &[f64])> {
        match (&self.kind, &self.pre_rotation) {
            (Kind::GridField { grid, values }, None) => Some((grid, values)),
            _ => None,
        }
    }

    /// Transport onto the sphere through a shape's bijection: the pointwise
    /// product with the shape's area-element ratio,
    /// `rho*(x) = rho(f^{-1}(x)) |J_f(x)|`.
    pub fn mapped(&self, shape: &SurfaceShape) -> Result<IntensityModel, IntensityError> {
        if matches!(shape, SurfaceShape::Sphere) {
            return Ok(self.clone());
        }
        let inner = self.clone();
        let shape = shape.clone();
        IntensityModel::analytic(move |p: &Vector3<f64>| {
            let dir = UnitVector::from_vector(*p).expect("nonzero query point");
            inner.eval_raw(p) * shape.surface_jacobian(&dir)
        })
    }
}

/// Free-function alias for [`IntensityModel::rotated`].
pub fn rotate_intensity(model: &IntensityModel, o: &Rotation) -> IntensityModel {
    model.rotated(o)
}

/// Free-function alias for [`IntensityModel::mapped`].
pub fn mapped_intensity(
    model: &IntensityModel,
    shape: &SurfaceShape,
) -> Result<IntensityModel, IntensityError> {
    model.mapped(shape)
}

/// Homogeneous rate of one component: count over window area.
pub fn homogeneous_estimate(
    pattern: &MarkedPattern,
    mark: &str,
) -> Result<IntensityModel, IntensityError> {
    let n = pattern.count(&Region::Window(pattern.window().clone()), &[mark])?;
    if n == 0 {
        return Err(IntensityError::EmptyComponent(mark.to_string()));
    }
    IntensityModel::constant(n as f64 / pattern.window().area())
}

/// Mean-spacing bandwidth rule of thumb, `(4 pi / n)^(1/2)`.
pub fn default_bandwidth(n: usize) -> f64 {
    (crate::geom::SPHERE_AREA / n.max(1) as f64).sqrt()
}

/// Kernel intensity estimate of one component on a spherical grid.
///
/// Uses the von Mises–Fisher-shaped kernel `exp((cos d - 1)/h)` with a
/// per-event edge normalization `c_h(y)` computed by quadrature over the
/// observation window, which makes the estimate integrate to the component
/// count over the window exactly up to quadrature error:
///
/// `rho_hat(x) = sum_y k_h(d(x, y)) / c_h(y)`.
pub fn kernel_estimate(
    pattern: &MarkedPattern,
    mark: &str,
    bandwidth: Option<f64>,
    grid_size: usize,
) -> Result<IntensityModel, IntensityError> {
    let data = pattern.component_points(mark)?;
    if data.is_empty() {
        return Err(IntensityError::EmptyComponent(mark.to_string()));
    }
    let h = bandwidth.unwrap_or_else(|| default_bandwidth(data.len()));
    if !(h.is_finite() && h > 0.0) {
        return Err(IntensityError::BadBandwidth(h));
    }
    let grid = SphereGrid::new(grid_size);
    let weight = grid.node_weight();
    let in_window: Vec<bool> = grid
        .points()
        .iter()
        .map(|p| pattern.window().contains(p))
        .collect();

    // kernel as a function of cos(distance); the -1 shift guards overflow
    let kappa = |cosd: f64| ((cosd - 1.0) / h).exp();

    let norms: Vec<f64> = data
        .iter()
        .map(|y| {
            grid.points()
                .iter()
                .zip(&in_window)
                .filter(|(_, inside)| **inside)
                .map(|(u, _)| kappa(y.dot(u)))
                .sum::<f64>()
                * weight
        })
        .collect();

    let values: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| {
            data.iter()
                .zip(&norms)
                .map(|(y, c)| kappa(x.dot(y)) / c)
                .sum()
        })
        .collect();

    IntensityModel::grid_field(grid, values)
}

/// The reciprocal-intensity mass of a region and mark set:
/// `sum over (x, m) in X ∩ (B x C) of 1 / rho_m(x)`,
/// an unbiased estimator of `area(B) * nu(C)` under a known intensity.
pub fn stoyan_mass(
    pattern: &MarkedPattern,
    models: &BTreeMap<String, IntensityModel>,
    region: &Region,
    marks: &[&str],
) -> Result<f64, IntensityError> {
    let mut selected = Vec::with_capacity(marks.len());
    for label in marks {
        let idx = pattern.mark_index(label)?;
        let model = models
            .get(*label)
            .ok_or_else(|| IntensityError::MissingModel(label.to_string()))?;
        selected.push((idx, model));
    }
    let mut total = 0.0;
    for p in pattern.points() {
        if let Some((_, model)) = selected.iter().find(|(idx, _)| *idx == p.mark) {
            if region.contains(&p.location) {
                total += 1.0 / model.eval(&p.location);
            }
        }
    }
    Ok(total)
}
