//! Run configuration: flag values merged over a key-value config file.
//!
//! The config file holds `key = value` lines (`#` starts a comment); keys
//! mirror the long flag names and flags always win.

use crate::CliError;
use spheremark::geom::{SphericalWindow, SurfaceShape, UnitVector};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

/// Parsed config file contents.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("config line {}: expected `key = value`", lineno + 1))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Flag value if present, else the config-file entry parsed as `T`.
    pub fn resolve<T: FromStr + Clone>(
        &self,
        flag: &Option<T>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if let Some(v) = flag {
            return Ok(Some(v.clone()));
        }
        match self.entries.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::config(format!("config key `{key}`: cannot parse `{raw}`"))),
            None => Ok(None),
        }
    }
}

/// Shape specification: `sphere`, `ellipsoid:a,b,c`, or `star:<table.csv>`
/// with per-direction radii (`x,y,z,radius` rows; nearest-direction lookup).
pub fn parse_shape(spec: &str) -> Result<SurfaceShape, CliError> {
    if spec == "sphere" {
        return Ok(SurfaceShape::Sphere);
    }
    if let Some(rest) = spec.strip_prefix("ellipsoid:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::config(format!(
                "ellipsoid shape needs `ellipsoid:a,b,c`, got `{spec}`"
            )));
        }
        let axis = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad ellipsoid axis `{s}`")))
        };
        return Ok(SurfaceShape::ellipsoid(
            axis(parts[0])?,
            axis(parts[1])?,
            axis(parts[2])?,
        )?);
    }
    if let Some(path) = spec.strip_prefix("star:") {
        return load_star_shape(Path::new(path));
    }
    Err(CliError::config(format!(
        "unknown shape `{spec}` (expected sphere | ellipsoid:a,b,c | star:file)"
    )))
}

/// Star-shape radial function tabulated as `x,y,z,radius` rows; lookups use
/// the nearest tabulated direction.
fn load_star_shape(path: &Path) -> Result<SurfaceShape, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read star table {}: {e}", path.display())))?;
    let mut dirs: Vec<UnitVector> = Vec::new();
    let mut radii: Vec<f64> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::data(format!(
                "star table line {}: expected x,y,z,radius",
                lineno + 1
            )));
        }
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                CliError::data(format!("star table line {}: bad number `{s}`", lineno + 1))
            })
        };
        let dir = UnitVector::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
            .map_err(|e| CliError::data(format!("star table line {}: {e}", lineno + 1)))?;
        dirs.push(dir);
        radii.push(num(parts[3])?);
    }
    if dirs.is_empty() {
        return Err(CliError::data("star table has no rows".to_string()));
    }
    Ok(SurfaceShape::star(move |s: &UnitVector| {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in dirs.iter().enumerate() {
            let dot = d.dot(s);
            if dot > best_dot {
                best_dot = dot;
                best = i;
            }
        }
        radii[best]
    })?)
}

/// Window specification: `full`, `band:DEGREES` (excluded latitude
/// half-width), or `cap:x,y,z,radius` (complement of the cap, radians).
pub fn parse_window(spec: &str) -> Result<SphericalWindow, CliError> {
    if spec == "full" {
        return Ok(SphericalWindow::FullSphere);
    }
    if let Some(deg) = spec.strip_prefix("band:") {
        let half_width: f64 = deg
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("bad band half-width `{deg}`")))?;
        return Ok(SphericalWindow::band_exclusion(half_width.to_radians())?);
    }
    if let Some(rest) = spec.strip_prefix("cap:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 4 {
            return Err(CliError::config(format!(
                "cap window needs `cap:x,y,z,radius`, got `{spec}`"
            )));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad cap number `{s}`")))
        };
        let center = UnitVector::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
            .map_err(|e| CliError::config(e.to_string()))?;
        return Ok(SphericalWindow::cap_complement(center, num(parts[3])?)?);
    }
    Err(CliError::config(format!(
        "unknown window `{spec}` (expected full | band:deg | cap:x,y,z,r)"
    )))
}

/// Pattern file coordinate convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternFormat {
    LonLat,
    Xyz,
    Shape,
}

impl FromStr for PatternFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lonlat" => Ok(PatternFormat::LonLat),
            "xyz" => Ok(PatternFormat::Xyz),
            "shape" => Ok(PatternFormat::Shape),
            other => Err(format!("unknown format `{other}` (lonlat | xyz | shape)")),
        }
    }
}

impl std::fmt::Display for PatternFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PatternFormat::LonLat => write!(f, "lonlat"),
            PatternFormat::Xyz => write!(f, "xyz"),
            PatternFormat::Shape => write!(f, "shape"),
        }
    }
}

/// Short deterministic digest of the resolved configuration, recorded in
/// every output file so a run can be reproduced bit-identically.
pub fn config_hash(entries: &[(&str, String)]) -> String {
    use sha2::{Digest, Sha256};
    let mut canonical = String::new();
    let mut sorted: Vec<&(&str, String)> = entries.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    for (k, v) in sorted {
        let _ = writeln!(canonical, "{k}={v}");
    }
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let cfg = FileConfig::parse("nsim = 99\n# comment\nlevel=0.9\n").unwrap();
        assert_eq!(cfg.get("nsim"), Some("99"));
        assert_eq!(cfg.get("level"), Some("0.9"));
        assert!(FileConfig::parse("not a kv line\n").is_err());
    }

    #[test]
    fn resolve_prefers_flag() {
        let cfg = FileConfig::parse("nsim = 99\n").unwrap();
        assert_eq!(cfg.resolve(&Some(5u64), "nsim").unwrap(), Some(5));
        assert_eq!(cfg.resolve(&None::<u64>, "nsim").unwrap(), Some(99));
        assert_eq!(cfg.resolve(&None::<u64>, "missing").unwrap(), None);
    }

    #[test]
    fn shape_parsing() {
        assert!(matches!(parse_shape("sphere").unwrap(), SurfaceShape::Sphere));
        assert!(matches!(
            parse_shape("ellipsoid:0.8,0.8,1.44").unwrap(),
            SurfaceShape::Ellipsoid { .. }
        ));
        assert!(parse_shape("ellipsoid:1,2").is_err());
        assert!(parse_shape("doughnut").is_err());
    }

    #[test]
    fn window_parsing() {
        assert!(parse_window("full").unwrap().is_full_sphere());
        let band = parse_window("band:12").unwrap();
        match band {
            SphericalWindow::LatitudeBandExclusion { half_width } => {
                assert!((half_width - 12f64.to_radians()).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_window("cap:0,0,1,0.5").is_ok());
        assert!(parse_window("cap:0,0,1").is_err());
    }

    #[test]
    fn hash_is_order_independent_and_stable() {
        let a = config_hash(&[("x", "1".to_string()), ("y", "2".to_string())]);
        let b = config_hash(&[("y", "2".to_string()), ("x", "1".to_string())]);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        let c = config_hash(&[("x", "1".to_string()), ("y", "3".to_string())]);
        assert_ne!(a, c);
    }
}
