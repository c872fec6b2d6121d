//! Pattern generators: Poisson processes on surfaces, bivariate Gaussian
//! random fields with exponential cross-covariance, and log-Gaussian Cox
//! processes.
//!
//! Every generator takes an explicit random source; replicate-level
//! parallelism is achieved with independently seeded streams, so outputs are
//! deterministic given (seed, replicate).

use crate::geom::{SphereGrid, SphericalWindow, SurfaceShape, UnitVector};
use crate::intensity::IntensityModel;
use crate::pattern::{MarkedPattern, PatternError, ShapePattern};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid field specification: {0}")]
    BadSpec(String),
    #[error("locations {0} and {1} coincide; the covariance would be singular")]
    DuplicateLocations(usize, usize),
    #[error("covariance factorization failed even after eigenvalue clipping")]
    Factorization,
    #[error("intensity is not positive and bounded on the surface (sup = {0})")]
    UnusableIntensity(f64),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Intensity(#[from] crate::intensity::IntensityError),
}

pub type MeanFn = Arc<dyn Fn(&Vector3<f64>) -> f64 + Send + Sync>;

/// Bivariate Gaussian random field specification with exponential
/// auto-covariance `sigma^2 exp(-r/gamma^2)` and cross-covariance
/// `a12 sigma^2 exp(-r/gamma^2)`, `r` the Euclidean distance in R^3.
#[derive(Clone)]
pub struct GrfSpec {
    pub mean1: MeanFn,
    pub mean2: MeanFn,
    pub sigma2: f64,
    pub gamma2: f64,
    pub a12: f64,
}

impl fmt::Debug for GrfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrfSpec")
            .field("sigma2", &self.sigma2)
            .field("gamma2", &self.gamma2)
            .field("a12", &self.a12)
            .finish_non_exhaustive()
    }
}

impl GrfSpec {
    pub fn new(
        mean1: MeanFn,
        mean2: MeanFn,
        sigma2: f64,
        gamma2: f64,
        a12: f64,
    ) -> Result<Self, SimError> {
        if !(sigma2 > 0.0 && gamma2 > 0.0) {
            return Err(SimError::BadSpec(format!(
                "sigma2 and gamma2 must be positive, got {sigma2}, {gamma2}"
            )));
        }
        if !(-1.0..=1.0).contains(&a12) {
            return Err(SimError::BadSpec(format!(
                "|a12| <= 1 required for positive semi-definiteness, got {a12}"
            )));
        }
        Ok(GrfSpec {
            mean1,
            mean2,
            sigma2,
            gamma2,
            a12,
        })
    }

    /// Constant means for both components.
    pub fn with_constant_means(
        mu1: f64,
        mu2: f64,
        sigma2: f64,
        gamma2: f64,
        a12: f64,
    ) -> Result<Self, SimError> {
        Self::new(
            Arc::new(move |_| mu1),
            Arc::new(move |_| mu2),
            sigma2,
            gamma2,
            a12,
        )
    }

    /// Covariance between components `i` and `j` at Euclidean distance `d`.
    pub fn covariance(&self, d: f64, i: usize, j: usize) -> f64 {
        let factor = if i == j { 1.0 } else { self.a12 };
        factor * self.sigma2 * (-d / self.gamma2).exp()
    }
}

/// Log-Gaussian Cox process on a surface: conditional on the exponentiated
/// field, the pattern is bivariate Poisson.
#[derive(Debug, Clone)]
pub struct LgcpSpec {
    pub grf: GrfSpec,
    pub shape: SurfaceShape,
    pub resolution: usize,
}

impl LgcpSpec {
    pub fn new(grf: GrfSpec, shape: SurfaceShape, resolution: usize) -> Result<Self, SimError> {
        if resolution < 500 {
            return Err(SimError::BadSpec(format!(
                "field grid resolution must be at least 500, got {resolution}"
            )));
        }
        Ok(LgcpSpec {
            grf,
            shape,
            resolution,
        })
    }
}

/// Reusable joint sampler for a bivariate GRF at fixed locations.
///
/// The joint covariance is the Kronecker product of the 2x2 coregionalization
/// block with the spatial correlation matrix, so one Cholesky factor of the
/// spatial part serves both components; the 2x2 factor handles `a12`,
/// including the degenerate `|a12| = 1` cases. Jitter of 1e-8 is added to
/// the spatial diagonal, with an eigenvalue-clipping fallback (values below
/// 1e-10 clipped to zero) if the factorization still fails.
pub struct GrfSampler {
    spatial_factor: DMatrix<f64>,
    lb: [f64; 3], // l11, l21, l22 of the 2x2 coregionalization factor
    means: (Vec<f64>, Vec<f64>),
}

impl GrfSampler {
    pub fn new(spec: &GrfSpec, locations: &[Vector3<f64>]) -> Result<Self, SimError> {
        let n = locations.len();
        let mut corr = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let d = (locations[i] - locations[j]).norm();
                if i != j && d == 0.0 {
                    return Err(SimError::DuplicateLocations(j, i));
                }
                let c = (-d / spec.gamma2).exp();
                corr[(i, j)] = c;
                corr[(j, i)] = c;
            }
        }
        for i in 0..n {
            corr[(i, i)] += 1e-8;
        }
        let spatial_factor = match corr.clone().cholesky() {
            Some(chol) => chol.unpack(),
            None => {
                let eig = corr.symmetric_eigen();
                let vals = eig.eigenvalues.map(|v| if v < 1e-10 { 0.0 } else { v.sqrt() });
                let factor = &eig.eigenvectors * DMatrix::from_diagonal(&vals);
                if factor.iter().any(|v| !v.is_finite()) {
                    return Err(SimError::Factorization);
                }
                factor
            }
        };
        let s = spec.sigma2.sqrt();
        let lb = [s, s * spec.a12, s * (1.0 - spec.a12 * spec.a12).max(0.0).sqrt()];
        let means = (
            locations.iter().map(|p| (spec.mean1)(p)).collect(),
            locations.iter().map(|p| (spec.mean2)(p)).collect(),
        );
        Ok(GrfSampler {
            spatial_factor,
            lb,
            means,
        })
    }

    /// One joint draw: the two component fields at the fixed locations.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let n = self.means.0.len();
        let xi1 = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let xi2 = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let z1 = &self.spatial_factor * xi1;
        let z2 = &self.spatial_factor * xi2;
        let u1 = (0..n)
            .map(|i| self.means.0[i] + self.lb[0] * z1[i])
            .collect();
        let u2 = (0..n)
            .map(|i| self.means.1[i] + self.lb[1] * z1[i] + self.lb[2] * z2[i])
            .collect();
        (u1, u2)
    }
}

/// Joint bivariate Gaussian draw at the given distinct locations.
pub fn sample_grf<R: Rng + ?Sized>(
    spec: &GrfSpec,
    locations: &[Vector3<f64>],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    Ok(GrfSampler::new(spec, locations)?.sample(rng))
}

fn poisson_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
    draw as u64
}

/// Uniform direction on the sphere (three normals, normalized).
fn uniform_direction<R: Rng + ?Sized>(rng: &mut R) -> UnitVector {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if let Ok(u) = UnitVector::from_vector(v) {
            return u;
        }
    }
}

/// A point uniform with respect to surface measure on the shape: uniform
/// directions are rejected against the area-element ratio.
fn uniform_on_shape<R: Rng + ?Sized>(
    shape: &SurfaceShape,
    j_sup: f64,
    rng: &mut R,
) -> UnitVector {
    loop {
        let s = uniform_direction(rng);
        let u: f64 = rng.random();
        if u * j_sup <= shape.surface_jacobian(&s) {
            return s;
        }
    }
}

/// Independent inhomogeneous Poisson components on a surface, one per mark,
/// by thinning a dominating uniform Poisson process.
///
/// Returns the union pattern mapped onto the sphere; for non-spherical
/// shapes the original surface coordinates travel along.
pub fn sample_poisson<R: Rng + ?Sized>(
    shape: &SurfaceShape,
    models: &BTreeMap<String, IntensityModel>,
    rng: &mut R,
) -> Result<MarkedPattern, SimError> {
    let area = shape.surface_area();
    let j_sup = shape.jacobian_sup();
    let mark_set: Vec<String> = models.keys().cloned().collect();
    let mut points: Vec<(Vector3<f64>, String)> = Vec::new();
    for (label, model) in models {
        // dominating rate: exact for constants, safety-factored grid scan
        // over the surface otherwise
        let rho_max = {
            let scan = crate::geom::fibonacci_grid(2_000)
                .iter()
                .map(|s| model.eval_raw(&shape.inverse_map(s)))
                .fold(0.0f64, f64::max);
            if !scan.is_finite() || scan <= 0.0 {
                return Err(SimError::UnusableIntensity(scan));
            }
            let uniform = crate::geom::fibonacci_grid(2_000)
                .iter()
                .map(|s| model.eval_raw(&shape.inverse_map(s)))
                .fold(f64::INFINITY, f64::min);
            if (scan - uniform).abs() <= 1e-12 * scan {
                scan
            } else {
                scan * 1.05
            }
        };
        let n = poisson_count(rho_max * area, rng);
        for _ in 0..n {
            let dir = uniform_on_shape(shape, j_sup, rng);
            let p = shape.inverse_map(&dir);
            let keep: f64 = rng.random();
            if keep * rho_max <= model.eval_raw(&p) {
                points.push((p, label.clone()));
            }
        }
    }
    Ok(ShapePattern::new(shape.clone(), points, mark_set)?.to_sphere()?)
}

/// Reusable LGCP sampler: the spatial factorization of the field grid is
/// computed once and shared across replicates.
pub struct LgcpSampler {
    spec: LgcpSpec,
    grid: SphereGrid,
    surface_nodes: Vec<Vector3<f64>>,
    grf: GrfSampler,
    area: f64,
    j_sup: f64,
}

impl LgcpSampler {
    pub fn new(spec: LgcpSpec) -> Result<Self, SimError> {
        let grid = SphereGrid::new(spec.resolution);
        let surface_nodes: Vec<Vector3<f64>> = grid
            .points()
            .iter()
            .map(|s| spec.shape.inverse_map(s))
            .collect();
        let grf = GrfSampler::new(&spec.grf, &surface_nodes)?;
        let area = spec.shape.surface_area();
        let j_sup = spec.shape.jacobian_sup();
        Ok(LgcpSampler {
            spec,
            grid,
            surface_nodes,
            grf,
            area,
            j_sup,
        })
    }

    /// Draw one bivariate pattern; fields are exponentiated on the grid and
    /// interpolated to the nearest node, with a 1.05 safety factor on the
    /// dominating rate.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        labels: (&str, &str),
        rng: &mut R,
    ) -> Result<MarkedPattern, SimError> {
        let (u1, u2) = self.grf.sample(rng);
        let fields: [Vec<f64>; 2] = [
            u1.iter().map(|v| v.exp()).collect(),
            u2.iter().map(|v| v.exp()).collect(),
        ];
        let mark_set = vec![labels.0.to_string(), labels.1.to_string()];
        let mut points: Vec<(Vector3<f64>, String)> = Vec::new();
        for (field, label) in fields.iter().zip([labels.0, labels.1]) {
            let max = field.iter().cloned().fold(0.0f64, f64::max);
            if !max.is_finite() {
                return Err(SimError::UnusableIntensity(max));
            }
            let rate = 1.05 * max;
            let n = poisson_count(rate * self.area, rng);
            for _ in 0..n {
                let dir = uniform_on_shape(&self.spec.shape, self.j_sup, rng);
                let z = field[self.grid.nearest(&dir)];
                let keep: f64 = rng.random();
                if keep * rate <= z {
                    points.push((self.spec.shape.inverse_map(&dir), label.to_string()));
                }
            }
        }
        Ok(ShapePattern::new(self.spec.shape.clone(), points, mark_set)?.to_sphere()?)
    }

    /// The field grid locations on the surface.
    pub fn surface_nodes(&self) -> &[Vector3<f64>] {
        &self.surface_nodes
    }
}

/// One LGCP draw; see [`LgcpSampler`] for replicate reuse.
pub fn sample_lgcp<R: Rng + ?Sized>(
    spec: &LgcpSpec,
    labels: (&str, &str),
    rng: &mut R,
) -> Result<MarkedPattern, SimError> {
    LgcpSampler::new(spec.clone())?.sample(labels, rng)
}

/// Closed-form LGCP intensities: `rho_i(x) = exp(mu_i(x) + c_ii(x,x)/2)`.
pub fn lgcp_intensity_oracle(spec: &LgcpSpec, x: &Vector3<f64>) -> (f64, f64) {
    let half_var = spec.grf.sigma2 / 2.0;
    (
        ((spec.grf.mean1)(x) + half_var).exp(),
        ((spec.grf.mean2)(x) + half_var).exp(),
    )
}

/// Closed-form LGCP pair correlation: `g_ij(x, y) = exp(c_ij(x, y))` at the
/// Euclidean distance between `x` and `y`. Components are indexed 0 and 1.
pub fn lgcp_pcf_oracle(
    spec: &LgcpSpec,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
    i: usize,
    j: usize,
) -> f64 {
    assert!(i < 2 && j < 2, "component index out of range");
    spec.grf.covariance((x - y).norm(), i, j).exp()
}

/// Restrict a full-sphere pattern to a window, dropping outside points.
pub(crate) fn restrict_to_window(
    pattern: &MarkedPattern,
    window: &SphericalWindow,
) -> Result<MarkedPattern, PatternError> {
    let pts = pattern
        .points()
        .iter()
        .filter(|p| window.contains(&p.location))
        .map(|p| (p.location, pattern.label(p.mark).to_string()))
        .collect();
    MarkedPattern::new(pts, pattern.mark_set().to_vec(), window.clone())
}
