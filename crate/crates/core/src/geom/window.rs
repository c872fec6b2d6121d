//! Observation windows on the sphere and their erosion.

use super::{cap_area, geodesic_distance, GeomError, SphereGrid, UnitVector, SPHERE_AREA};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

/// A window defined by membership flags on a spherical grid; membership of
/// arbitrary points is decided by the nearest grid node.
#[derive(Clone)]
pub struct GridMaskWindow {
    grid: Arc<SphereGrid>,
    mask: Arc<Vec<bool>>,
}

impl fmt::Debug for GridMaskWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridMaskWindow")
            .field("nodes", &self.grid.len())
            .field("inside", &self.mask.iter().filter(|m| **m).count())
            .finish()
    }
}

impl GridMaskWindow {
    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Region of the sphere over which a pattern is observed.
#[derive(Debug, Clone)]
pub enum SphericalWindow {
    /// The whole sphere; no erosion is ever needed.
    FullSphere,
    /// Complement of the cap of geodesic radius `radius` around `center`.
    CapComplement { center: UnitVector, radius: f64 },
    /// Latitudes within `half_width` radians of the equator are excluded.
    LatitudeBandExclusion { half_width: f64 },
    /// Arbitrary region given as flags on a grid.
    GridMask(GridMaskWindow),
}

impl SphericalWindow {
    pub fn cap_complement(center: UnitVector, radius: f64) -> Result<Self, GeomError> {
        if !(0.0..=PI).contains(&radius) {
            return Err(GeomError::RadiusOutOfRange(radius));
        }
        let w = SphericalWindow::CapComplement { center, radius };
        w.check_nonempty()?;
        Ok(w)
    }

    pub fn band_exclusion(half_width: f64) -> Result<Self, GeomError> {
        if !(0.0..=FRAC_PI_2).contains(&half_width) {
            return Err(GeomError::RadiusOutOfRange(half_width));
        }
        let w = SphericalWindow::LatitudeBandExclusion { half_width };
        w.check_nonempty()?;
        Ok(w)
    }

    pub fn grid_mask(grid: Arc<SphereGrid>, mask: Vec<bool>) -> Result<Self, GeomError> {
        assert_eq!(grid.len(), mask.len(), "mask length must match grid");
        let w = SphericalWindow::GridMask(GridMaskWindow {
            grid,
            mask: Arc::new(mask),
        });
        w.check_nonempty()?;
        Ok(w)
    }

    fn check_nonempty(&self) -> Result<(), GeomError> {
        let a = self.area();
        if a > 0.0 {
            Ok(())
        } else {
            Err(GeomError::EmptyWindow(a))
        }
    }

    pub fn is_full_sphere(&self) -> bool {
        matches!(self, SphericalWindow::FullSphere)
    }

    /// Window area in steradians.
    pub fn area(&self) -> f64 {
        match self {
            SphericalWindow::FullSphere => SPHERE_AREA,
            SphericalWindow::CapComplement { radius, .. } => {
                SPHERE_AREA - cap_area(*radius).expect("validated radius")
            }
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                // two polar caps of angular radius pi/2 - h
                SPHERE_AREA * (1.0 - half_width.sin())
            }
            SphericalWindow::GridMask(g) => {
                g.mask.iter().filter(|m| **m).count() as f64 * g.grid.node_weight()
            }
        }
    }

    /// Deterministic membership test.
    pub fn contains(&self, x: &UnitVector) -> bool {
        match self {
            SphericalWindow::FullSphere => true,
            SphericalWindow::CapComplement { center, radius } => {
                geodesic_distance(x, center) >= *radius
            }
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                x.z().abs() >= half_width.sin()
            }
            SphericalWindow::GridMask(g) => g.mask[g.grid.nearest(x)],
        }
    }

    /// Distance from `x` to the window complement: `x` lies in the erosion
    /// `W_{-r}` exactly when `erosion_margin(x) >= r`. Negative outside the
    /// window; infinite on the full sphere. Grid-approximate for masks.
    pub fn erosion_margin(&self, x: &UnitVector) -> f64 {
        match self {
            SphericalWindow::FullSphere => f64::INFINITY,
            SphericalWindow::CapComplement { center, radius } => {
                geodesic_distance(x, center) - radius
            }
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                x.z().clamp(-1.0, 1.0).asin().abs() - half_width
            }
            SphericalWindow::GridMask(g) => {
                if g.mask.iter().all(|m| *m) {
                    return f64::INFINITY;
                }
                let mut margin = f64::INFINITY;
                for (p, inside) in g.grid.points().iter().zip(g.mask.iter()) {
                    if !inside {
                        margin = margin.min(geodesic_distance(x, p));
                    }
                }
                if self.contains(x) {
                    margin
                } else {
                    -margin
                }
            }
        }
    }

    /// Area of the erosion `W_{-r}`, or `None` when the erosion is empty.
    pub fn eroded_area(&self, r: f64) -> Option<f64> {
        match self {
            SphericalWindow::FullSphere => Some(SPHERE_AREA),
            SphericalWindow::CapComplement { radius, .. } => {
                let total = radius + r;
                if total >= PI {
                    None
                } else {
                    Some(SPHERE_AREA - cap_area(total).expect("radius < pi"))
                }
            }
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                let total = half_width + r;
                if total >= FRAC_PI_2 {
                    None
                } else {
                    Some(SPHERE_AREA * (1.0 - total.sin()))
                }
            }
            SphericalWindow::GridMask(g) => {
                let count = g
                    .grid
                    .points()
                    .iter()
                    .zip(g.mask.iter())
                    .filter(|(p, inside)| **inside && self.erosion_margin(p) > r)
                    .count();
                if count == 0 {
                    None
                } else {
                    Some(count as f64 * g.grid.node_weight())
                }
            }
        }
    }

    /// The erosion `W_{-r}` as a window: the subset whose distance-`r` ball
    /// stays inside `W`. The full sphere is unchanged.
    pub fn erode(&self, r: f64) -> Result<SphericalWindow, GeomError> {
        if !(0.0..=PI).contains(&r) {
            return Err(GeomError::RadiusOutOfRange(r));
        }
        let empty = || GeomError::ErosionEmpty {
            window: self.describe(),
            r,
        };
        match self {
            SphericalWindow::FullSphere => Ok(SphericalWindow::FullSphere),
            SphericalWindow::CapComplement { center, radius } => {
                let total = radius + r;
                if total >= PI {
                    Err(empty())
                } else {
                    Ok(SphericalWindow::CapComplement {
                        center: *center,
                        radius: total,
                    })
                }
            }
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                let total = half_width + r;
                if total >= FRAC_PI_2 {
                    Err(empty())
                } else {
                    Ok(SphericalWindow::LatitudeBandExclusion { half_width: total })
                }
            }
            SphericalWindow::GridMask(g) => {
                let mask: Vec<bool> = g
                    .grid
                    .points()
                    .iter()
                    .zip(g.mask.iter())
                    .map(|(p, inside)| *inside && self.erosion_margin(p) > r)
                    .collect();
                if mask.iter().any(|m| *m) {
                    Ok(SphericalWindow::GridMask(GridMaskWindow {
                        grid: Arc::clone(&g.grid),
                        mask: Arc::new(mask),
                    }))
                } else {
                    Err(empty())
                }
            }
        }
    }

    /// Short human/machine-readable description used in file metadata.
    pub fn describe(&self) -> String {
        match self {
            SphericalWindow::FullSphere => "full-sphere".to_string(),
            SphericalWindow::CapComplement { center, radius } => format!(
                "cap-complement {:.9},{:.9},{:.9},{:.9}",
                center.x(),
                center.y(),
                center.z(),
                radius
            ),
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                format!("band-exclusion {half_width:.9}")
            }
            SphericalWindow::GridMask(g) => format!("grid-mask {}", g.grid.len()),
        }
    }
}
