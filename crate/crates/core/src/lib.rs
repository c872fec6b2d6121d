//! Exploratory analysis of marked (multi-type) point patterns on the sphere
//! and on convex or star-shaped surfaces.
//!
//! The crate is organised around a small pipeline:
//!
//! 1. [`geom`] — spherical geometry: unit vectors, rotations, observation
//!    windows with erosion, and bijective mappings from closed surfaces to
//!    the unit sphere together with their area-element Jacobians.
//! 2. [`pattern`] — the marked point-pattern data model.
//! 3. [`intensity`] — intensity models and estimators (homogeneous rates,
//!    kernel estimates on a spherical grid, mapped intensities).
//! 4. [`summaries`] — the functional summary statistics `K`, `F`, `D`, `J`
//!    and the `P` transform, in isotropic and intensity-reweighted forms.
//! 5. [`sim`] — pattern generators: Poisson processes on surfaces, bivariate
//!    Gaussian random fields and log-Gaussian Cox processes.
//! 6. [`infer`] — Monte-Carlo independence tests between component patterns
//!    with pointwise simulation envelopes.

pub mod geom;
pub mod infer;
pub mod intensity;
pub mod pattern;
pub mod sim;
pub mod summaries;

pub use geom::{
    cap_area, fibonacci_grid, geodesic_distance, random_rotation, rotation_to_pole,
    solve_ellipsoid_axis, GeomError, Rotation, SphereGrid, SphericalWindow, SurfaceShape,
    UnitVector,
};
pub use infer::{
    envelopes, null_sample_poisson, null_sample_rotation, run_independence_test, EnvelopeResult,
    InferError, NullMethod, RotateTarget, TestConfig, TestReport,
};
pub use intensity::{
    homogeneous_estimate, kernel_estimate, stoyan_mass, IntensityError, IntensityModel,
};
pub use pattern::{MarkedPattern, MarkedPoint, PatternError, Region, ShapePattern};
pub use sim::{
    sample_grf, sample_lgcp, sample_poisson, GrfSampler, GrfSpec, LgcpSpec, SimError,
};
pub use summaries::{
    dhat_inhom, dhat_iso, fhat_inhom, fhat_iso, jhat_inhom, jhat_iso, k_baseline, khat_inhom,
    khat_iso, p_transform, EstimatorVariant, RadiusGrid, Statistic, SummaryCurve, SummaryError,
};
