//! Independence testing between two component patterns.
//!
//! Null samples come either from random rotation (of one or both component
//! patterns together with their intensity models) or from independent
//! Poisson simulation. Pointwise envelopes are rank-based: the k-th smallest
//! and k-th largest replicate values with `k = ceil(alpha (nsim + 1) / 2)`.
//!
//! Replicates are computed in parallel on independently seeded streams, so
//! identical inputs and seed give bit-identical results.

use crate::geom::{random_rotation, Rotation, SphericalWindow};
use crate::intensity::{homogeneous_estimate, kernel_estimate, IntensityError, IntensityModel};
use crate::pattern::{MarkedPattern, PatternError};
use crate::sim::{restrict_to_window, sample_poisson, SimError};
use crate::summaries::{
    dhat_inhom, fhat_inhom, jhat_inhom, khat_inhom, p_transform, RadiusGrid, SummaryCurve,
    SummaryError,
};
use crate::geom::SurfaceShape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Radii closer than this to pi are flagged under rotation nulls: every
/// rotation replicate reproduces the observed K(pi) exactly, so envelopes
/// there understate the estimator's variance.
pub const PI_CAVEAT_MARGIN: f64 = 0.2;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("random rotation nulls require a pattern observed over the full sphere")]
    RotationNeedsFullSphere,
    #[error("independence tests need two distinct marks, got `{0}` twice")]
    MarksEqual(String),
    #[error("nsim = {nsim} is too few for level {level}: need at least {needed}")]
    TooFewReplicates { nsim: usize, level: f64, needed: usize },
    #[error("coverage level must lie strictly between 0 and 1, got {0}")]
    BadLevel(f64),
    #[error("replicate curve is on a different radius grid than the observed curve")]
    GridMismatch,
    #[error("no intensity model for mark `{0}`")]
    MissingModel(String),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Which component pattern the rotation null rotates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotateTarget {
    /// Rotate the first-listed component only (the default).
    First,
    Second,
    Both,
}

/// Null-sampling scheme for the independence hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullMethod {
    /// Haar-rotate component pattern(s) together with their intensity.
    /// Requires a full-sphere window; marginals are preserved exactly.
    RandomRotation { target: RotateTarget },
    /// Independent Poisson components with the intensity models in use.
    PoissonSimulation,
}

impl NullMethod {
    pub fn describe(&self) -> String {
        match self {
            NullMethod::RandomRotation { target } => format!(
                "random-rotation ({})",
                match target {
                    RotateTarget::First => "first",
                    RotateTarget::Second => "second",
                    RotateTarget::Both => "both",
                }
            ),
            NullMethod::PoissonSimulation => "poisson-simulation".to_string(),
        }
    }
}

/// Rotate one component and its intensity model by a fixed rotation. The
/// rotated model composed with the rotated points reproduces the original
/// reciprocal-intensity weights.
pub fn null_sample_rotation_with(
    pattern: &MarkedPattern,
    models: &BTreeMap<String, IntensityModel>,
    rotate_label: &str,
    o: &Rotation,
) -> Result<(MarkedPattern, BTreeMap<String, IntensityModel>), InferError> {
    if !pattern.window().is_full_sphere() {
        return Err(InferError::RotationNeedsFullSphere);
    }
    let rotated = pattern.rotate_component(rotate_label, o)?;
    let mut out = models.clone();
    if let Some(model) = models.get(rotate_label) {
        out.insert(rotate_label.to_string(), model.rotated(&o.transpose()));
    }
    Ok((rotated, out))
}

/// One rotation-null draw: Haar rotation applied to `rotate_label`'s points
/// and intensity model; all other components untouched.
pub fn null_sample_rotation<R: rand::Rng + ?Sized>(
    pattern: &MarkedPattern,
    models: &BTreeMap<String, IntensityModel>,
    rotate_label: &str,
    rng: &mut R,
) -> Result<(MarkedPattern, BTreeMap<String, IntensityModel>), InferError> {
    let o = random_rotation(rng);
    null_sample_rotation_with(pattern, models, rotate_label, &o)
}

/// One Poisson-null draw: independent inhomogeneous Poisson components on
/// the sphere, restricted to `window`.
pub fn null_sample_poisson<R: rand::Rng + ?Sized>(
    models: &BTreeMap<String, IntensityModel>,
    window: &SphericalWindow,
    rng: &mut R,
) -> Result<MarkedPattern, InferError> {
    let full = sample_poisson(&SurfaceShape::Sphere, models, rng)?;
    if window.is_full_sphere() {
        Ok(full)
    } else {
        Ok(restrict_to_window(&full, window)?)
    }
}

/// Direction of an envelope exceedance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exceedance {
    Above,
    Below,
}

/// A contiguous run of radii where the observed curve leaves the envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceRegion {
    pub r_start: f64,
    pub r_end: f64,
    pub direction: Exceedance,
}

/// Pointwise simulation envelope around an observed curve.
#[derive(Debug, Clone)]
pub struct EnvelopeResult {
    pub observed: SummaryCurve,
    /// k-th smallest replicate value per radius; `None` where fewer than `k`
    /// replicates are defined.
    pub lower: Vec<Option<f64>>,
    /// k-th largest replicate value per radius.
    pub upper: Vec<Option<f64>>,
    /// Number of replicates with a defined value, per radius.
    pub defined_counts: Vec<usize>,
    pub nsim: usize,
    pub level: f64,
    /// Rank depth: `ceil(alpha (nsim + 1) / 2)`.
    pub k: usize,
    pub method: String,
    pub seed: u64,
    /// Per-radius exceedance flag where observed and bounds are defined.
    pub exceedance: Vec<Option<Exceedance>>,
    pub exceedance_regions: Vec<ExceedanceRegion>,
}

impl EnvelopeResult {
    pub fn has_exceedance(&self, direction: Exceedance) -> bool {
        self.exceedance_regions
            .iter()
            .any(|reg| reg.direction == direction)
    }

    /// Exceedance regions intersected with an open radius interval.
    pub fn exceedance_in(&self, lo: f64, hi: f64, direction: Exceedance) -> bool {
        self.observed
            .grid
            .values()
            .iter()
            .zip(&self.exceedance)
            .any(|(&r, e)| r > lo && r < hi && *e == Some(direction))
    }
}

pub(crate) fn rank_depth(nsim: usize, level: f64) -> usize {
    let alpha = 1.0 - level;
    // the relative shrink keeps ceil() from overshooting when alpha picks up
    // floating-point noise (1 - 0.95 is slightly above 0.05)
    let x = alpha * (nsim + 1) as f64 / 2.0;
    ((x * (1.0 - 1e-12)).ceil() as usize).max(1)
}

fn check_envelope_params(nsim: usize, level: f64) -> Result<usize, InferError> {
    if !(0.0 < level && level < 1.0) {
        return Err(InferError::BadLevel(level));
    }
    let alpha = 1.0 - level;
    let needed = (2.0 / alpha).ceil() as usize - 1;
    if nsim < needed {
        return Err(InferError::TooFewReplicates { nsim, level, needed });
    }
    Ok(rank_depth(nsim, level))
}

/// Assemble the rank envelope from replicate curves already computed on the
/// observed curve's grid.
fn envelope_from_replicates(
    observed: &SummaryCurve,
    replicates: &[SummaryCurve],
    nsim: usize,
    level: f64,
    k: usize,
    method: String,
    seed: u64,
) -> Result<EnvelopeResult, InferError> {
    for rep in replicates {
        if rep.grid != observed.grid {
            return Err(InferError::GridMismatch);
        }
    }
    let n_r = observed.grid.len();
    let mut lower = Vec::with_capacity(n_r);
    let mut upper = Vec::with_capacity(n_r);
    let mut defined_counts = Vec::with_capacity(n_r);
    for ri in 0..n_r {
        let mut vals: Vec<f64> = replicates.iter().filter_map(|c| c.values[ri]).collect();
        defined_counts.push(vals.len());
        if vals.len() < k {
            lower.push(None);
            upper.push(None);
        } else {
            vals.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            lower.push(Some(vals[k - 1]));
            upper.push(Some(vals[vals.len() - k]));
        }
    }
    let exceedance: Vec<Option<Exceedance>> = (0..n_r)
        .map(|ri| match (observed.values[ri], lower[ri], upper[ri]) {
            (Some(obs), Some(lo), Some(hi)) => {
                if obs < lo {
                    Some(Exceedance::Below)
                } else if obs > hi {
                    Some(Exceedance::Above)
                } else {
                    None
                }
            }
            _ => None,
        })
        .collect();
    let mut exceedance_regions = Vec::new();
    let radii = observed.grid.values();
    let mut run: Option<(usize, Exceedance)> = None;
    for ri in 0..=n_r {
        let current = if ri < n_r { exceedance[ri] } else { None };
        match (run, current) {
            (None, Some(dir)) => run = Some((ri, dir)),
            (Some((start, dir)), Some(cur)) if cur == dir => {
                let _ = start;
            }
            (Some((start, dir)), other) => {
                exceedance_regions.push(ExceedanceRegion {
                    r_start: radii[start],
                    r_end: radii[ri - 1],
                    direction: dir,
                });
                run = other.map(|d| (ri, d));
            }
            (None, None) => {}
        }
    }
    Ok(EnvelopeResult {
        observed: observed.clone(),
        lower,
        upper,
        defined_counts,
        nsim,
        level,
        k,
        method,
        seed,
        exceedance,
        exceedance_regions,
    })
}

/// Pointwise rank envelope for a single statistic.
///
/// `null_stat` computes the statistic of one null replicate; it receives the
/// replicate index and a ChaCha stream seeded by `(seed, index)`, so the
/// result is deterministic and independent of evaluation order.
pub fn envelopes<F>(
    observed: &SummaryCurve,
    null_stat: F,
    nsim: usize,
    level: f64,
    seed: u64,
) -> Result<EnvelopeResult, InferError>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<SummaryCurve, InferError> + Sync,
{
    let k = check_envelope_params(nsim, level)?;
    let replicates: Vec<SummaryCurve> = (0..nsim)
        .into_par_iter()
        .map(|idx| {
            let mut rng = replicate_rng(seed, idx);
            null_stat(idx, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    envelope_from_replicates(
        observed,
        &replicates,
        nsim,
        level,
        k,
        "custom".to_string(),
        seed,
    )
}

/// Independent ChaCha stream for replicate `idx` of a run seeded by `seed`.
pub fn replicate_rng(seed: u64, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx as u64 + 1);
    rng
}

/// How the per-mark intensities entering the test are obtained.
#[derive(Debug, Clone)]
pub enum IntensitySpec {
    /// Constant rates from windowed counts.
    Homogeneous,
    /// Kernel estimates on a spherical grid.
    Kernel {
        bandwidth: Option<f64>,
        grid_size: usize,
    },
    /// Caller-supplied models.
    Provided(BTreeMap<String, IntensityModel>),
}

/// Configuration of [`run_independence_test`].
#[derive(Debug, Clone)]
pub struct TestConfig {
    pub intensity: IntensitySpec,
    pub null: NullMethod,
    /// Under the Poisson null, re-estimate kernel intensities from each
    /// replicate instead of reusing the observed fit (sensitivity option;
    /// the default reuses the observed fit).
    pub reestimate_per_replicate: bool,
    /// Evaluation radii; defaults to the window's standard grid.
    pub grid: Option<RadiusGrid>,
    /// Number of spherical grid nodes for the empty-space estimates.
    pub f_grid_points: usize,
    pub nsim: usize,
    pub level: f64,
    pub seed: u64,
}

impl TestConfig {
    pub fn new(null: NullMethod, nsim: usize, level: f64, seed: u64) -> Self {
        TestConfig {
            intensity: IntensitySpec::Homogeneous,
            null,
            reestimate_per_replicate: false,
            grid: None,
            f_grid_points: 10_000,
            nsim,
            level,
            seed,
        }
    }
}

/// Qualitative read of the envelope exceedances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpretation {
    /// P above its upper envelope with J below its lower one.
    Attraction,
    /// P below its lower envelope with J above its upper one.
    Repulsion,
}

/// Full output of an independence test between two components.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub marks: (String, String),
    pub p: EnvelopeResult,
    pub j_ij: EnvelopeResult,
    pub j_ji: EnvelopeResult,
    pub interpretations: Vec<Interpretation>,
    /// Set when a rotation null was used and the radius grid reaches within
    /// [`PI_CAVEAT_MARGIN`] of pi, where rotation envelopes collapse.
    pub caveat_near_pi: bool,
    pub caveat_region: Option<(f64, f64)>,
    pub method: String,
    pub nsim: usize,
    pub level: f64,
    pub seed: u64,
}

struct StatTriple {
    p: SummaryCurve,
    j_ij: SummaryCurve,
    j_ji: SummaryCurve,
}

fn stat_triple(
    pattern: &MarkedPattern,
    i: &str,
    j: &str,
    grid: &RadiusGrid,
    model_i: &IntensityModel,
    model_j: &IntensityModel,
    f_grid_points: usize,
) -> Result<StatTriple, InferError> {
    let k = khat_inhom(pattern, i, j, grid, model_i, model_j)?;
    let p = p_transform(&k)?;
    let d_ij = dhat_inhom(pattern, i, j, grid, model_i, model_j)?;
    let f_j = fhat_inhom(pattern, j, grid, model_j, f_grid_points)?;
    let j_ij = jhat_inhom(&d_ij, &f_j)?;
    let d_ji = dhat_inhom(pattern, j, i, grid, model_j, model_i)?;
    let f_i = fhat_inhom(pattern, i, grid, model_i, f_grid_points)?;
    let j_ji = jhat_inhom(&d_ji, &f_i)?;
    Ok(StatTriple { p, j_ij, j_ji })
}

fn estimate_models(
    pattern: &MarkedPattern,
    marks: (&str, &str),
    spec: &IntensitySpec,
) -> Result<BTreeMap<String, IntensityModel>, InferError> {
    let mut models = BTreeMap::new();
    for label in [marks.0, marks.1] {
        let model = match spec {
            IntensitySpec::Homogeneous => homogeneous_estimate(pattern, label)?,
            IntensitySpec::Kernel {
                bandwidth,
                grid_size,
            } => kernel_estimate(pattern, label, *bandwidth, *grid_size)?,
            IntensitySpec::Provided(map) => map
                .get(label)
                .cloned()
                .ok_or_else(|| InferError::MissingModel(label.to_string()))?,
        };
        models.insert(label.to_string(), model);
    }
    Ok(models)
}

/// Run the full pipeline for one mark pair: estimate intensities, compute
/// `P`, `J_ij` and `J_ji`, and build envelopes for each from a shared set of
/// null replicates.
pub fn run_independence_test(
    pattern: &MarkedPattern,
    i: &str,
    j: &str,
    config: &TestConfig,
) -> Result<TestReport, InferError> {
    if i == j {
        return Err(InferError::MarksEqual(i.to_string()));
    }
    pattern.mark_index(i)?;
    pattern.mark_index(j)?;
    if matches!(config.null, NullMethod::RandomRotation { .. })
        && !pattern.window().is_full_sphere()
    {
        return Err(InferError::RotationNeedsFullSphere);
    }
    let k = check_envelope_params(config.nsim, config.level)?;
    let grid = config
        .grid
        .clone()
        .unwrap_or_else(|| RadiusGrid::default_for(pattern.window()));
    let models = estimate_models(pattern, (i, j), &config.intensity)?;
    let model_i = models[i].clone();
    let model_j = models[j].clone();

    let observed = stat_triple(pattern, i, j, &grid, &model_i, &model_j, config.f_grid_points)?;

    let replicates: Vec<StatTriple> = (0..config.nsim)
        .into_par_iter()
        .map(|idx| -> Result<StatTriple, InferError> {
            let mut rng = replicate_rng(config.seed, idx);
            match config.null {
                NullMethod::RandomRotation { target } => {
                    let (pat, mods) = match target {
                        RotateTarget::First => {
                            null_sample_rotation(pattern, &models, i, &mut rng)?
                        }
                        RotateTarget::Second => {
                            null_sample_rotation(pattern, &models, j, &mut rng)?
                        }
                        RotateTarget::Both => {
                            let (p1, m1) = null_sample_rotation(pattern, &models, i, &mut rng)?;
                            null_sample_rotation(&p1, &m1, j, &mut rng)?
                        }
                    };
                    stat_triple(&pat, i, j, &grid, &mods[i], &mods[j], config.f_grid_points)
                }
                NullMethod::PoissonSimulation => {
                    let pat = null_sample_poisson(&models, pattern.window(), &mut rng)?;
                    if config.reestimate_per_replicate {
                        let mods = estimate_models(&pat, (i, j), &config.intensity)?;
                        stat_triple(
                            &pat,
                            i,
                            j,
                            &grid,
                            &mods[i],
                            &mods[j],
                            config.f_grid_points,
                        )
                    } else {
                        stat_triple(&pat, i, j, &grid, &model_i, &model_j, config.f_grid_points)
                    }
                }
            }
        })
        .collect::<Result<_, _>>()?;

    let method = config.null.describe();
    let build = |obs: &SummaryCurve, pick: fn(&StatTriple) -> &SummaryCurve| {
        let reps: Vec<SummaryCurve> = replicates.iter().map(|t| pick(t).clone()).collect();
        envelope_from_replicates(
            obs,
            &reps,
            config.nsim,
            config.level,
            k,
            method.clone(),
            config.seed,
        )
    };
    let p_env = build(&observed.p, |t| &t.p)?;
    let j_ij_env = build(&observed.j_ij, |t| &t.j_ij)?;
    let j_ji_env = build(&observed.j_ji, |t| &t.j_ji)?;

    let mut interpretations = Vec::new();
    let j_below = j_ij_env.has_exceedance(Exceedance::Below)
        || j_ji_env.has_exceedance(Exceedance::Below);
    let j_above = j_ij_env.has_exceedance(Exceedance::Above)
        || j_ji_env.has_exceedance(Exceedance::Above);
    if p_env.has_exceedance(Exceedance::Above) && j_below {
        interpretations.push(Interpretation::Attraction);
    }
    if p_env.has_exceedance(Exceedance::Below) && j_above {
        interpretations.push(Interpretation::Repulsion);
    }

    let (caveat_near_pi, caveat_region) = match config.null {
        NullMethod::RandomRotation { .. } => {
            let r_max = *grid.values().last().unwrap();
            if r_max > PI - PI_CAVEAT_MARGIN {
                (true, Some((PI - PI_CAVEAT_MARGIN, r_max)))
            } else {
                (false, None)
            }
        }
        NullMethod::PoissonSimulation => (false, None),
    };

    Ok(TestReport {
        marks: (i.to_string(), j.to_string()),
        p: p_env,
        j_ij: j_ij_env,
        j_ji: j_ji_env,
        interpretations,
        caveat_near_pi,
        caveat_region,
        method,
        nsim: config.nsim,
        level: config.level,
        seed: config.seed,
    })
}
