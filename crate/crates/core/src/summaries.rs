//! Functional summary statistics for marked patterns on the sphere.
//!
//! The four statistics `K`, `F`, `D`, `J` and the `P` transform are provided
//! in two estimator variants: the isotropic form for homogeneous processes
//! and the intensity-reweighted form for inhomogeneous ones. With constant
//! intensity models the reweighted estimators reduce to the isotropic ones
//! within floating-point noise.
//!
//! Undefined values (empty eroded window, or `F = 1` in a `J` ratio) are
//! carried as explicit `None`s, never as NaN arithmetic.

use crate::geom::{geodesic_distance, SphereGrid, SphericalWindow, UnitVector};
use crate::intensity::{IntensityError, IntensityModel};
use crate::pattern::{MarkedPattern, PatternError};
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("radius grid must be strictly increasing within [0, pi]: {0}")]
    BadRadiusGrid(String),
    #[error("cross statistics need two distinct marks, got `{0}` twice")]
    MarksEqual(String),
    #[error("expected a {expected} curve, got {got}")]
    WrongStatistic { expected: Statistic, got: Statistic },
    #[error("curves are on different radius grids")]
    GridMismatch,
    #[error("K must be nonnegative for the P transform, got {value} at r = {r}")]
    NegativeK { r: f64, value: f64 },
    #[error("intensity infimum bound violated: product factor {0} below -1e-9")]
    InfimumViolated(f64),
    #[error("rate must be strictly positive, got {0}")]
    NonPositiveRate(f64),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Intensity(#[from] IntensityError),
}

/// Ordered evaluation radii in radians, each in [0, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusGrid {
    values: Vec<f64>,
}

impl RadiusGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, SummaryError> {
        if values.is_empty() {
            return Err(SummaryError::BadRadiusGrid("empty".to_string()));
        }
        if values[0] < 0.0 || *values.last().unwrap() > PI {
            return Err(SummaryError::BadRadiusGrid(format!(
                "range [{}, {}]",
                values[0],
                values.last().unwrap()
            )));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SummaryError::BadRadiusGrid("not strictly increasing".to_string()));
        }
        Ok(RadiusGrid { values })
    }

    /// `n` equally spaced radii on `[0, r_max]`, endpoints included.
    pub fn uniform(n: usize, r_max: f64) -> Result<Self, SummaryError> {
        if n < 2 {
            return Err(SummaryError::BadRadiusGrid("need at least 2 radii".to_string()));
        }
        let values = (0..n)
            .map(|i| r_max * i as f64 / (n - 1) as f64)
            .collect();
        Self::new(values)
    }

    /// 200 radii on [0, pi] for full-sphere patterns, [0, pi/2] otherwise
    /// (large radii are uninformative once erosion shrinks the window).
    pub fn default_for(window: &SphericalWindow) -> Self {
        let r_max = if window.is_full_sphere() { PI } else { PI / 2.0 };
        Self::uniform(200, r_max).expect("static grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    K,
    F,
    D,
    J,
    P,
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Statistic::K => "K",
            Statistic::F => "F",
            Statistic::D => "D",
            Statistic::J => "J",
            Statistic::P => "P",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorVariant {
    Isotropic,
    Inhomogeneous,
}

impl std::fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorVariant::Isotropic => write!(f, "isotropic"),
            EstimatorVariant::Inhomogeneous => write!(f, "inhomogeneous"),
        }
    }
}

/// One estimated statistic over a radius grid. `None` marks radii where the
/// estimator is undefined.
#[derive(Debug, Clone)]
pub struct SummaryCurve {
    pub statistic: Statistic,
    /// The "from" mark (`i` in cross statistics); absent for `F`.
    pub first_mark: Option<String>,
    /// The "to" mark (`j`); absent for theoretical baselines.
    pub second_mark: Option<String>,
    pub variant: EstimatorVariant,
    pub grid: RadiusGrid,
    pub values: Vec<Option<f64>>,
    /// Window description for file metadata.
    pub window: String,
    /// Whether window erosion was applied (false on the full sphere).
    pub erosion: bool,
}

impl SummaryCurve {
    pub fn defined_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Chunk size for deterministic parallel reductions: partial sums are
/// combined in chunk order so results do not depend on thread scheduling.
const PAR_CHUNK: usize = 64;

fn component(pattern: &MarkedPattern, label: &str) -> Result<Vec<UnitVector>, SummaryError> {
    Ok(pattern.component_points(label)?)
}

fn eroded_areas(window: &SphericalWindow, grid: &RadiusGrid) -> Vec<Option<f64>> {
    grid.values().iter().map(|&r| window.eroded_area(r)).collect()
}

/// Cross K estimator, isotropic form:
/// `K(r) = [rho_i rho_j area(W_-r)]^-1 sum_{x in X_i ∩ W_-r} #{y in X_j : d(x,y) <= r}`.
pub fn khat_iso(
    pattern: &MarkedPattern,
    i: &str,
    j: &str,
    grid: &RadiusGrid,
    rho_i: f64,
    rho_j: f64,
) -> Result<SummaryCurve, SummaryError> {
    if i == j {
        return Err(SummaryError::MarksEqual(i.to_string()));
    }
    if !(rho_i > 0.0) {
        return Err(SummaryError::NonPositiveRate(rho_i));
    }
    if !(rho_j > 0.0) {
        return Err(SummaryError::NonPositiveRate(rho_j));
    }
    let xs = component(pattern, i)?;
    let ys = component(pattern, j)?;
    let window = pattern.window();
    let radii = grid.values();

    let partials: Vec<Vec<u64>> = xs
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut counts = vec![0u64; radii.len()];
            for x in chunk {
                let margin = window.erosion_margin(x);
                let mut dists: Vec<f64> = ys.iter().map(|y| geodesic_distance(x, y)).collect();
                dists.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                for (ri, &r) in radii.iter().enumerate() {
                    if margin >= r {
                        counts[ri] += dists.partition_point(|&d| d <= r) as u64;
                    }
                }
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; radii.len()];
    for p in partials {
        for (c, v) in counts.iter_mut().zip(p) {
            *c += v;
        }
    }

    let areas = eroded_areas(window, grid);
    let values = counts
        .iter()
        .zip(&areas)
        .map(|(&c, area)| area.map(|a| c as f64 / (rho_i * rho_j * a)))
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::K,
        first_mark: Some(i.to_string()),
        second_mark: Some(j.to_string()),
        variant: EstimatorVariant::Isotropic,
        grid: grid.clone(),
        values,
        window: window.describe(),
        erosion: !window.is_full_sphere(),
    })
}

/// Cross K estimator, intensity-reweighted form:
/// `K(r) = area(W_-r)^-1 sum_{x in X_i ∩ W_-r} sum_{y in X_j : d <= r} 1/(rho_i(x) rho_j(y))`.
pub fn khat_inhom(
    pattern: &MarkedPattern,
    i: &str,
    j: &str,
    grid: &RadiusGrid,
    model_i: &IntensityModel,
    model_j: &IntensityModel,
) -> Result<SummaryCurve, SummaryError> {
    if i == j {
        return Err(SummaryError::MarksEqual(i.to_string()));
    }
    let xs = component(pattern, i)?;
    let ys = component(pattern, j)?;
    let y_weights: Vec<f64> = ys.iter().map(|y| 1.0 / model_j.eval(y)).collect();
    let window = pattern.window();
    let radii = grid.values();

    let partials: Vec<Vec<f64>> = xs
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut sums = vec![0.0; radii.len()];
            for x in chunk {
                let margin = window.erosion_margin(x);
                let w_x = 1.0 / model_i.eval(x);
                let mut pairs: Vec<(f64, f64)> = ys
                    .iter()
                    .zip(&y_weights)
                    .map(|(y, &w)| (geodesic_distance(x, y), w))
                    .collect();
                pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut prefix = Vec::with_capacity(pairs.len() + 1);
                prefix.push(0.0);
                for (_, w) in &pairs {
                    prefix.push(prefix.last().unwrap() + w);
                }
                for (ri, &r) in radii.iter().enumerate() {
                    if margin >= r {
                        let k = pairs.partition_point(|&(d, _)| d <= r);
                        sums[ri] += w_x * prefix[k];
                    }
                }
            }
            sums
        })
        .collect();
    let mut sums = vec![0.0; radii.len()];
    for p in partials {
        for (s, v) in sums.iter_mut().zip(p) {
            *s += v;
        }
    }

    let areas = eroded_areas(window, grid);
    let values = sums
        .iter()
        .zip(&areas)
        .map(|(&s, area)| area.map(|a| s / a))
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::K,
        first_mark: Some(i.to_string()),
        second_mark: Some(j.to_string()),
        variant: EstimatorVariant::Inhomogeneous,
        grid: grid.clone(),
        values,
        window: window.describe(),
        erosion: !window.is_full_sphere(),
    })
}

/// Empty-space function estimate, isotropic form: the fraction of grid nodes
/// in the eroded window with an `X_j` point within distance `r`.
pub fn fhat_iso(
    pattern: &MarkedPattern,
    j: &str,
    grid: &RadiusGrid,
    grid_points: usize,
) -> Result<SummaryCurve, SummaryError> {
    let ys = component(pattern, j)?;
    let window = pattern.window();
    let nodes = SphereGrid::new(grid_points);
    let radii = grid.values();

    let stats: Vec<(f64, f64)> = nodes
        .points()
        .par_iter()
        .map(|p| {
            let margin = window.erosion_margin(p);
            let nn = ys
                .iter()
                .map(|y| geodesic_distance(p, y))
                .fold(f64::INFINITY, f64::min);
            (margin, nn)
        })
        .collect();

    let values = radii
        .iter()
        .map(|&r| {
            let mut denom = 0u64;
            let mut numer = 0u64;
            for &(margin, nn) in &stats {
                if margin >= r {
                    denom += 1;
                    if nn <= r {
                        numer += 1;
                    }
                }
            }
            if denom == 0 {
                None
            } else {
                Some(numer as f64 / denom as f64)
            }
        })
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::F,
        first_mark: None,
        second_mark: Some(j.to_string()),
        variant: EstimatorVariant::Isotropic,
        grid: grid.clone(),
        values,
        window: window.describe(),
        erosion: !window.is_full_sphere(),
    })
}

/// Per-point reweighting factors `1 - rho_bar/rho(y)` for the inhomogeneous
/// product estimators. Factors in `[-1e-9, 0)` are clamped to zero; anything
/// lower means the infimum bound was violated.
fn product_factors(
    ys: &[UnitVector],
    model: &IntensityModel,
    rho_bar: f64,
) -> Result<Vec<f64>, SummaryError> {
    ys.iter()
        .map(|y| {
            let f = 1.0 - rho_bar / model.eval(y);
            if f < -1e-9 {
                Err(SummaryError::InfimumViolated(f))
            } else {
                Ok(f.max(0.0))
            }
        })
        .collect()
}

/// Empty-space function estimate, intensity-reweighted form.
pub fn fhat_inhom(
    pattern: &MarkedPattern,
    j: &str,
    grid: &RadiusGrid,
    model_j: &IntensityModel,
    grid_points: usize,
) -> Result<SummaryCurve, SummaryError> {
    let ys = component(pattern, j)?;
    let window = pattern.window();
    let rho_bar = model_j.infimum_bound(window)?;
    let factors = product_factors(&ys, model_j, rho_bar)?;
    let nodes = SphereGrid::new(grid_points);
    let radii = grid.values();

    let partials: Vec<(Vec<f64>, Vec<u64>)> = nodes
        .points()
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut sums = vec![0.0; radii.len()];
            let mut denoms = vec![0u64; radii.len()];
            for p in chunk {
                let margin = window.erosion_margin(p);
                let mut pairs: Vec<(f64, f64)> = ys
                    .iter()
                    .zip(&factors)
                    .map(|(y, &f)| (geodesic_distance(p, y), f))
                    .collect();
                pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut prefix = Vec::with_capacity(pairs.len() + 1);
                prefix.push(1.0);
                for (_, f) in &pairs {
                    prefix.push(prefix.last().unwrap() * f);
                }
                for (ri, &r) in radii.iter().enumerate() {
                    if margin >= r {
                        let k = pairs.partition_point(|&(d, _)| d <= r);
                        sums[ri] += prefix[k];
                        denoms[ri] += 1;
                    }
                }
            }
            (sums, denoms)
        })
        .collect();
    let mut sums = vec![0.0; radii.len()];
    let mut denoms = vec![0u64; radii.len()];
    for (s, d) in partials {
        for ((acc, cnt), (v, c)) in sums.iter_mut().zip(denoms.iter_mut()).zip(s.into_iter().zip(d))
        {
            *acc += v;
            *cnt += c;
        }
    }

    let values = sums
        .iter()
        .zip(&denoms)
        .map(|(&s, &d)| {
            if d == 0 {
                None
            } else {
                Some(1.0 - s / d as f64)
            }
        })
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::F,
        first_mark: None,
        second_mark: Some(j.to_string()),
        variant: EstimatorVariant::Inhomogeneous,
        grid: grid.clone(),
        values,
        window: window.describe(),
        erosion: !window.is_full_sphere(),
    })
}

/// Cross nearest-neighbour distribution estimate, isotropic form. Note the
/// strict inequality `d < r` in the survival product, as opposed to the
/// `d <= r` used by `K` and `F`.
pub fn dhat_iso(
    pattern: &MarkedPattern,
    i: &str,
    j: &str,
    grid: &RadiusGrid,
    rho_i: f64,
) -> Result<SummaryCurve, SummaryError> {
    if i == j {
        return Err(SummaryError::MarksEqual(i.to_string()));
    }
    if !(rho_i > 0.0) {
        return Err(SummaryError::NonPositiveRate(rho_i));
    }
    let xs = component(pattern, i)?;
    let ys = component(pattern, j)?;
    let window = pattern.window();
    let radii = grid.values();

    let stats: Vec<(f64, f64)> = xs
        .par_iter()
        .map(|x| {
            let margin = window.erosion_margin(x);
            let nn = ys
                .iter()
                .map(|y| geodesic_distance(x, y))
                .fold(f64::INFINITY, f64::min);
            (margin, nn)
        })
        .collect();

    let areas = eroded_areas(window, grid);
    let values = radii
        .iter()
        .zip(&areas)
        .map(|(&r, area)| {
            area.map(|a| {
                let survivors = stats
                    .iter()
                    .filter(|&&(margin, nn)| margin >= r && nn >= r)
                    .count() as f64;
                1.0 - survivors / (rho_i * a)
            })
        })
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::D,
        first_mark: Some(i.to_string()),
        second_mark: Some(j.to_string()),
        variant: EstimatorVariant::Isotropic,
        grid: grid.clone(),
        values,
        window: window.describe(),
        erosion: !window.is_full_sphere(),
    })
}

/// Cross nearest-neighbour distribution estimate, intensity-reweighted form.
pub fn dhat_inhom(
    pattern: &MarkedPattern,
    i: &str,
    j: &str,
    grid: &RadiusGrid,
    model_i: &IntensityModel,
    model_j: &IntensityModel,
) -> Result<SummaryCurve, SummaryError> {
    if i == j {
        return Err(SummaryError::MarksEqual(i.to_string()));
    }
    let xs = component(pattern, i)?;
    let ys = component(pattern, j)?;
    let window = pattern.window();
    let rho_bar = model_j.infimum_bound(window)?;
    let factors = product_factors(&ys, model_j, rho_bar)?;
    let radii = grid.values();

    let partials: Vec<Vec<f64>> = xs
        .par_chunks(PAR_CHUNK)
        .map(|chunk| {
            let mut sums = vec![0.0; radii.len()];
            for x in chunk {
                let margin = window.erosion_margin(x);
                let w_x = 1.0 / model_i.eval(x);
                let mut pairs: Vec<(f64, f64)> = ys
                    .iter()
                    .zip(&factors)
                    .map(|(y, &f)| (geodesic_distance(x, y), f))
                    .collect();
                pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut prefix = Vec::with_capacity(pairs.len() + 1);
                prefix.push(1.0);
                for (_, f) in &pairs {
                    prefix.push(prefix.last().unwrap() * f);
                }
                for (ri, &r) in radii.iter().enumerate() {
                    if margin >= r {
                        // strict: only neighbours with d < r enter the product
                        let k = pairs.partition_point(|&(d, _)| d < r);
                        sums[ri] += w_x * prefix[k];
                    }
                }
            }
            sums
        })
        .collect();
    let mut sums = vec![0.0; radii.len()];
    for p in partials {
        for (s, v) in sums.iter_mut().zip(p) {
            *s += v;
        }
    }

    let areas = eroded_areas(window, grid);
    let values = sums
        .iter()
        .zip(&areas)
        .map(|(&s, area)| area.map(|a| 1.0 - s / a))
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::D,
        first_mark: Some(i.to_string()),
        second_mark: Some(j.to_string()),
        variant: EstimatorVariant::Inhomogeneous,
        grid: grid.clone(),
        values,
        window: window.describe(),
        erosion: !window.is_full_sphere(),
    })
}

fn jhat(dcurve: &SummaryCurve, fcurve: &SummaryCurve) -> Result<SummaryCurve, SummaryError> {
    if dcurve.statistic != Statistic::D {
        return Err(SummaryError::WrongStatistic {
            expected: Statistic::D,
            got: dcurve.statistic,
        });
    }
    if fcurve.statistic != Statistic::F {
        return Err(SummaryError::WrongStatistic {
            expected: Statistic::F,
            got: fcurve.statistic,
        });
    }
    if dcurve.grid != fcurve.grid {
        return Err(SummaryError::GridMismatch);
    }
    let values = dcurve
        .values
        .iter()
        .zip(&fcurve.values)
        .map(|(d, f)| match (d, f) {
            (Some(d), Some(f)) if *f < 1.0 => Some((1.0 - d) / (1.0 - f)),
            _ => None,
        })
        .collect();
    Ok(SummaryCurve {
        statistic: Statistic::J,
        first_mark: dcurve.first_mark.clone(),
        second_mark: dcurve.second_mark.clone(),
        variant: dcurve.variant,
        grid: dcurve.grid.clone(),
        values,
        window: dcurve.window.clone(),
        erosion: dcurve.erosion,
    })
}

/// `J = (1 - D) / (1 - F)`, undefined where `F = 1` or either input is
/// undefined.
pub fn jhat_iso(dcurve: &SummaryCurve, fcurve: &SummaryCurve) -> Result<SummaryCurve, SummaryError> {
    jhat(dcurve, fcurve)
}

/// Inhomogeneous counterpart of [`jhat_iso`]; same ratio on reweighted inputs.
pub fn jhat_inhom(
    dcurve: &SummaryCurve,
    fcurve: &SummaryCurve,
) -> Result<SummaryCurve, SummaryError> {
    jhat(dcurve, fcurve)
}

/// `P(r) = sqrt(K(r)) - sqrt(2 pi (1 - cos r))`: zero under independence.
pub fn p_transform(kcurve: &SummaryCurve) -> Result<SummaryCurve, SummaryError> {
    if kcurve.statistic != Statistic::K {
        return Err(SummaryError::WrongStatistic {
            expected: Statistic::K,
            got: kcurve.statistic,
        });
    }
    let mut values = Vec::with_capacity(kcurve.values.len());
    for (&r, v) in kcurve.grid.values().iter().zip(&kcurve.values) {
        match v {
            Some(k) if *k < 0.0 => return Err(SummaryError::NegativeK { r, value: *k }),
            Some(k) => values.push(Some(k.sqrt() - (2.0 * PI * (1.0 - r.cos())).sqrt())),
            None => values.push(None),
        }
    }
    Ok(SummaryCurve {
        statistic: Statistic::P,
        first_mark: kcurve.first_mark.clone(),
        second_mark: kcurve.second_mark.clone(),
        variant: kcurve.variant,
        grid: kcurve.grid.clone(),
        values,
        window: kcurve.window.clone(),
        erosion: kcurve.erosion,
    })
}

/// Theoretical cross K under independence: `2 pi (1 - cos r)`.
pub fn k_baseline(grid: &RadiusGrid) -> SummaryCurve {
    let values = grid
        .values()
        .iter()
        .map(|&r| Some(2.0 * PI * (1.0 - r.cos())))
        .collect();
    SummaryCurve {
        statistic: Statistic::K,
        first_mark: None,
        second_mark: None,
        variant: EstimatorVariant::Isotropic,
        grid: grid.clone(),
        values,
        window: "full-sphere".to_string(),
        erosion: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{random_rotation, SphericalWindow};
    use crate::pattern::MarkedPattern;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SPHERE: f64 = 4.0 * PI;

    fn two_mark_pattern(xs: Vec<UnitVector>, ys: Vec<UnitVector>) -> MarkedPattern {
        let mut pts: Vec<(UnitVector, String)> =
            xs.into_iter().map(|p| (p, "a".to_string())).collect();
        pts.extend(ys.into_iter().map(|p| (p, "b".to_string())));
        MarkedPattern::new(
            pts,
            vec!["a".to_string(), "b".to_string()],
            SphericalWindow::FullSphere,
        )
        .unwrap()
    }

    fn random_two_mark(n_a: usize, n_b: usize, seed: u64) -> MarkedPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = UnitVector::north_pole();
        let xs = (0..n_a).map(|_| random_rotation(&mut rng).apply(&o)).collect();
        let ys = (0..n_b).map(|_| random_rotation(&mut rng).apply(&o)).collect();
        two_mark_pattern(xs, ys)
    }

    #[test]
    fn radius_grid_validation() {
        assert!(RadiusGrid::new(vec![]).is_err());
        assert!(RadiusGrid::new(vec![0.0, 0.0]).is_err());
        assert!(RadiusGrid::new(vec![-0.1, 0.2]).is_err());
        assert!(RadiusGrid::new(vec![0.1, 3.2]).is_err());
        let g = RadiusGrid::uniform(5, 1.0).unwrap();
        assert_eq!(g.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn khat_antipodal_single_pair() {
        let north = UnitVector::north_pole();
        let south = UnitVector::new(0.0, 0.0, -1.0).unwrap();
        let p = two_mark_pattern(vec![north], vec![south]);
        let grid = RadiusGrid::new(vec![0.5, 3.0, PI]).unwrap();
        let rho = 1.0 / SPHERE;
        let k = khat_iso(&p, "a", "b", &grid, rho, rho).unwrap();
        assert_eq!(k.values[0], Some(0.0));
        assert_eq!(k.values[1], Some(0.0));
        assert_abs_diff_eq!(
            k.values[2].unwrap(),
            1.0 / (rho * rho * SPHERE),
            epsilon = 1e-9
        );
    }

    #[test]
    fn khat_zero_at_r_zero() {
        let p = random_two_mark(10, 12, 1);
        let grid = RadiusGrid::new(vec![0.0, 0.1]).unwrap();
        let k = khat_iso(&p, "a", "b", &grid, 1.0, 1.0).unwrap();
        assert_eq!(k.values[0], Some(0.0));
    }

    #[test]
    fn khat_symmetric_in_marks_on_full_sphere() {
        let p = random_two_mark(15, 9, 2);
        let grid = RadiusGrid::uniform(30, PI).unwrap();
        let kij = khat_iso(&p, "a", "b", &grid, 2.0, 3.0).unwrap();
        let kji = khat_iso(&p, "b", "a", &grid, 3.0, 2.0).unwrap();
        for (x, y) in kij.values.iter().zip(&kji.values) {
            assert_eq!(x, y); // integer pair counts make this exact
        }
    }

    #[test]
    fn khat_rejects_equal_marks_and_bad_rates() {
        let p = random_two_mark(3, 3, 3);
        let grid = RadiusGrid::uniform(3, 1.0).unwrap();
        assert!(khat_iso(&p, "a", "a", &grid, 1.0, 1.0).is_err());
        assert!(khat_iso(&p, "a", "b", &grid, 0.0, 1.0).is_err());
    }

    #[test]
    fn dhat_single_pair_step() {
        // one a-point, one b-point at distance 0.4; plug-in rho_a = 1/(4 pi)
        let x = UnitVector::north_pole();
        let y = UnitVector::new(0.4f64.sin(), 0.0, 0.4f64.cos()).unwrap();
        assert_abs_diff_eq!(geodesic_distance(&x, &y), 0.4, epsilon = 1e-15);
        let p = two_mark_pattern(vec![x], vec![y]);
        let grid = RadiusGrid::new(vec![0.1, 0.4, 0.400001, 1.0]).unwrap();
        let d = dhat_iso(&p, "a", "b", &grid, 1.0 / SPHERE).unwrap();
        assert_abs_diff_eq!(d.values[0].unwrap(), 0.0, epsilon = 1e-12);
        // at exactly r = 0.4 the strict inequality keeps the survivor
        assert_abs_diff_eq!(d.values[1].unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.values[2].unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.values[3].unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dhat_empty_target_is_zero_with_plugin_rate() {
        let p = two_mark_pattern(
            vec![UnitVector::north_pole(), UnitVector::new(1.0, 0.0, 0.0).unwrap()],
            vec![],
        );
        let grid = RadiusGrid::uniform(5, 2.0).unwrap();
        let d = dhat_iso(&p, "a", "b", &grid, 2.0 / SPHERE).unwrap();
        for v in &d.values {
            assert_abs_diff_eq!(v.unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fhat_cases() {
        // empty component: F = 0 everywhere
        let p = two_mark_pattern(vec![UnitVector::north_pole()], vec![]);
        let grid = RadiusGrid::uniform(4, 2.0).unwrap();
        let f = fhat_iso(&p, "b", &grid, 500).unwrap();
        for v in &f.values {
            assert_eq!(*v, Some(0.0));
        }
        // any nonempty component at r = pi: everything is within pi
        let q = random_two_mark(2, 3, 4);
        let grid = RadiusGrid::new(vec![0.5, PI]).unwrap();
        let f = fhat_iso(&q, "b", &grid, 500).unwrap();
        assert_eq!(f.values[1], Some(1.0));
    }

    #[test]
    fn jhat_arithmetic() {
        let grid = RadiusGrid::uniform(3, 1.0).unwrap();
        let mk = |stat, vals: Vec<Option<f64>>| SummaryCurve {
            statistic: stat,
            first_mark: Some("a".to_string()),
            second_mark: Some("b".to_string()),
            variant: EstimatorVariant::Isotropic,
            grid: grid.clone(),
            values: vals,
            window: "full-sphere".to_string(),
            erosion: false,
        };
        let d = mk(Statistic::D, vec![Some(0.5), Some(0.5), Some(0.2)]);
        let f = mk(Statistic::F, vec![Some(0.5), Some(0.75), Some(1.0)]);
        let j = jhat_iso(&d, &f).unwrap();
        assert_eq!(j.values[0], Some(1.0));
        assert_eq!(j.values[1], Some(2.0));
        assert_eq!(j.values[2], None); // F = 1 leaves J undefined
        assert!(jhat_iso(&f, &d).is_err());
    }

    #[test]
    fn p_transform_zero_on_baseline() {
        let grid = RadiusGrid::uniform(50, PI).unwrap();
        let k = k_baseline(&grid);
        let p = p_transform(&k).unwrap();
        for v in &p.values {
            assert_abs_diff_eq!(v.unwrap(), 0.0, epsilon = 1e-12);
        }
        // endpoints: r = 0 and r = pi both sit on the baseline
        assert_abs_diff_eq!(p.values[0].unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.values[49].unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn p_transform_rejects_negative_k() {
        let grid = RadiusGrid::uniform(2, 1.0).unwrap();
        let k = SummaryCurve {
            statistic: Statistic::K,
            first_mark: None,
            second_mark: None,
            variant: EstimatorVariant::Isotropic,
            grid: grid.clone(),
            values: vec![Some(-0.1), Some(1.0)],
            window: "full-sphere".to_string(),
            erosion: false,
        };
        assert!(matches!(p_transform(&k), Err(SummaryError::NegativeK { .. })));
    }

    #[test]
    fn k_baseline_values() {
        let grid = RadiusGrid::new(vec![0.0, PI / 2.0, PI]).unwrap();
        let k = k_baseline(&grid);
        assert_eq!(k.values[0], Some(0.0));
        assert_abs_diff_eq!(k.values[1].unwrap(), 2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(k.values[2].unwrap(), SPHERE, epsilon = 1e-14);
    }

    #[test]
    fn constant_models_reduce_to_isotropic() {
        let p = random_two_mark(20, 25, 5);
        let grid = RadiusGrid::uniform(40, PI).unwrap();
        let rho_a = 20.0 / SPHERE;
        let rho_b = 25.0 / SPHERE;
        let ma = IntensityModel::constant(rho_a).unwrap();
        let mb = IntensityModel::constant(rho_b).unwrap();

        let k0 = khat_iso(&p, "a", "b", &grid, rho_a, rho_b).unwrap();
        let k1 = khat_inhom(&p, "a", "b", &grid, &ma, &mb).unwrap();
        for (x, y) in k0.values.iter().zip(&k1.values) {
            assert_abs_diff_eq!(x.unwrap(), y.unwrap(), epsilon = 1e-12);
        }

        let d0 = dhat_iso(&p, "a", "b", &grid, rho_a).unwrap();
        let d1 = dhat_inhom(&p, "a", "b", &grid, &ma, &mb).unwrap();
        for (x, y) in d0.values.iter().zip(&d1.values) {
            assert_abs_diff_eq!(x.unwrap(), y.unwrap(), epsilon = 1e-12);
        }

        let f0 = fhat_iso(&p, "b", &grid, 1_000).unwrap();
        let f1 = fhat_inhom(&p, "b", &grid, &mb, 1_000).unwrap();
        for (x, y) in f0.values.iter().zip(&f1.values) {
            assert_abs_diff_eq!(x.unwrap(), y.unwrap(), epsilon = 1e-12);
        }

        let j0 = jhat_iso(&d0, &f0).unwrap();
        let j1 = jhat_inhom(&d1, &f1).unwrap();
        for (x, y) in j0.values.iter().zip(&j1.values) {
            match (x, y) {
                (Some(x), Some(y)) => assert_abs_diff_eq!(x, y, epsilon = 1e-12),
                (a, b) => assert_eq!(a.is_some(), b.is_some()),
            }
        }
    }

    #[test]
    fn fhat_inhom_stays_below_one_with_slack_bound() {
        // strictly varying intensity: rho_bar < rho everywhere keeps every
        // product factor positive, so F stays strictly below 1 even at pi
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let o = UnitVector::north_pole();
        let ys: Vec<UnitVector> = (0..30).map(|_| random_rotation(&mut rng).apply(&o)).collect();
        let p = two_mark_pattern(vec![o], ys);
        let grid = RadiusGrid::new(vec![1.0, PI]).unwrap();
        let model = IntensityModel::analytic(|v| (2.0 + v.z).exp()).unwrap();
        let f = fhat_inhom(&p, "b", &grid, &model, 500).unwrap();
        let v = f.values[1].unwrap();
        assert!(v < 1.0, "F(pi) = {v}");
        assert!(v > 0.0);
    }

    #[test]
    fn inhom_rotation_equivariance() {
        // rotating pattern and intensity together leaves the reweighted
        // estimators invariant
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_two_mark(18, 22, 8);
        let grid = RadiusGrid::uniform(25, PI).unwrap();
        let ma = IntensityModel::analytic(|v| (ln6() + v.z).exp()).unwrap();
        let mb = IntensityModel::analytic(|v| (ln6() + 2.0 * v.x).exp()).unwrap();
        let o = random_rotation(&mut rng);
        let p_rot = p.rotate(&o).unwrap();
        let ma_rot = ma.rotated(&o.transpose());
        let mb_rot = mb.rotated(&o.transpose());

        let k0 = khat_inhom(&p, "a", "b", &grid, &ma, &mb).unwrap();
        let k1 = khat_inhom(&p_rot, "a", "b", &grid, &ma_rot, &mb_rot).unwrap();
        for (x, y) in k0.values.iter().zip(&k1.values) {
            assert_abs_diff_eq!(x.unwrap(), y.unwrap(), epsilon = 1e-10);
        }
        let d0 = dhat_inhom(&p, "a", "b", &grid, &ma, &mb).unwrap();
        let d1 = dhat_inhom(&p_rot, "a", "b", &grid, &ma_rot, &mb_rot).unwrap();
        for (x, y) in d0.values.iter().zip(&d1.values) {
            assert_abs_diff_eq!(x.unwrap(), y.unwrap(), epsilon = 1e-10);
        }
    }

    fn ln6() -> f64 {
        6f64.ln()
    }

    #[test]
    fn undefined_radii_with_partial_window() {
        // band-excluded window: radii past the erosion limit are undefined
        let h = 0.3;
        let w = SphericalWindow::band_exclusion(h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let o = UnitVector::north_pole();
        let mut pts = Vec::new();
        while pts.len() < 30 {
            let x = random_rotation(&mut rng).apply(&o);
            if w.contains(&x) {
                let label = if pts.len() % 2 == 0 { "a" } else { "b" };
                pts.push((x, label.to_string()));
            }
        }
        let p = MarkedPattern::new(pts, vec!["a".into(), "b".into()], w).unwrap();
        let limit = PI / 2.0 - h;
        let grid = RadiusGrid::new(vec![0.2, limit - 0.05, limit + 0.05]).unwrap();
        let k = khat_iso(&p, "a", "b", &grid, 1.0, 1.0).unwrap();
        assert!(k.values[0].is_some());
        assert!(k.values[1].is_some());
        assert!(k.values[2].is_none());
        assert!(k.erosion);
    }
}
