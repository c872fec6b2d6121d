//! File formats: comma-separated tables with `#`-prefixed metadata headers.
//!
//! Every output carries a provenance header (command line, config hash,
//! seed, version) sufficient to re-run it bit-identically. Floats are
//! written in Rust's shortest round-trip form, so files read back exactly.

use crate::config::PatternFormat;
use crate::CliError;
use nalgebra::Vector3;
use spheremark::geom::{SphereGrid, SphericalWindow, SurfaceShape, UnitVector};
use spheremark::infer::{Exceedance, EnvelopeResult, TestReport};
use spheremark::intensity::IntensityModel;
use spheremark::pattern::{MarkedPattern, ShapePattern};
use spheremark::summaries::{EstimatorVariant, RadiusGrid, Statistic, SummaryCurve};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Reproducibility metadata stamped on every output file.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn header(&self, kind: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# spheremark {kind}");
        let _ = writeln!(s, "# version: {VERSION}");
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config-hash: {}", self.config_hash);
        let _ = writeln!(s, "# seed: {}", self.seed);
        s
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Split a file into `# key: value` metadata and the CSV body.
fn split_metadata(text: &str) -> (BTreeMap<String, String>, String) {
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    (meta, body)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

// ---------------------------------------------------------------------------
// pattern files
// ---------------------------------------------------------------------------

/// Read a pattern file in the given coordinate convention. Mark labels are
/// collected in order of first appearance.
pub fn read_pattern(
    path: &Path,
    format: PatternFormat,
    shape: &SurfaceShape,
    window: &SphericalWindow,
) -> Result<MarkedPattern, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let expected_header: &[&str] = match format {
        PatternFormat::LonLat => &["lon_deg", "lat_deg", "mark"],
        PatternFormat::Xyz | PatternFormat::Shape => &["x", "y", "z", "mark"],
    };
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected_header {
        return Err(CliError::data(format!(
            "{}: expected header `{}` for format {format}, got `{}`",
            path.display(),
            expected_header.join(","),
            got.join(",")
        )));
    }

    let mut mark_set: Vec<String> = Vec::new();
    let mut note_mark = |label: &str| {
        if !mark_set.iter().any(|m| m == label) {
            mark_set.push(label.to_string());
        }
    };

    let mut sphere_points: Vec<(UnitVector, String)> = Vec::new();
    let mut shape_points: Vec<(Vector3<f64>, String)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or_default();
        let num = |idx: usize| -> Result<f64, CliError> {
            record
                .get(idx)
                .ok_or_else(|| CliError::data(format!("line {line}: missing field {idx}")))?
                .parse::<f64>()
                .map_err(|_| {
                    CliError::data(format!(
                        "line {line}: cannot parse `{}` as a number",
                        record.get(idx).unwrap_or("")
                    ))
                })
        };
        match format {
            PatternFormat::LonLat => {
                if record.len() != 3 {
                    return Err(CliError::data(format!(
                        "line {line}: expected 3 fields, got {}",
                        record.len()
                    )));
                }
                let lon = num(0)?;
                let lat = num(1)?;
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(CliError::data(format!(
                        "line {line}: latitude {lat} outside [-90, 90]"
                    )));
                }
                let mark = record.get(2).unwrap_or("").to_string();
                if mark.is_empty() {
                    return Err(CliError::data(format!("line {line}: empty mark")));
                }
                note_mark(&mark);
                sphere_points.push((UnitVector::from_lonlat_deg(lon, lat), mark));
            }
            PatternFormat::Xyz | PatternFormat::Shape => {
                if record.len() != 4 {
                    return Err(CliError::data(format!(
                        "line {line}: expected 4 fields, got {}",
                        record.len()
                    )));
                }
                let v = Vector3::new(num(0)?, num(1)?, num(2)?);
                let mark = record.get(3).unwrap_or("").to_string();
                if mark.is_empty() {
                    return Err(CliError::data(format!("line {line}: empty mark")));
                }
                note_mark(&mark);
                if format == PatternFormat::Xyz {
                    let norm = v.norm();
                    if (norm - 1.0).abs() > 1e-6 {
                        return Err(CliError::data(format!(
                            "line {line}: |(x,y,z)| = {norm} deviates from 1 by more than 1e-6"
                        )));
                    }
                    let u = UnitVector::from_vector(v)
                        .map_err(|e| CliError::data(format!("line {line}: {e}")))?;
                    sphere_points.push((u, mark));
                } else {
                    shape_points.push((v, mark));
                }
            }
        }
    }

    match format {
        PatternFormat::Shape => {
            let sp = ShapePattern::new(shape.clone(), shape_points, mark_set)?;
            Ok(sp.to_sphere()?)
        }
        _ => Ok(MarkedPattern::new(
            sphere_points,
            mark_set,
            window.clone(),
        )?),
    }
}

/// Write a pattern file. `Shape` format requires the original surface
/// coordinates to be present on the pattern.
pub fn write_pattern(
    path: &Path,
    pattern: &MarkedPattern,
    format: PatternFormat,
    prov: &Provenance,
) -> Result<(), CliError> {
    let mut s = prov.header("pattern");
    let _ = writeln!(s, "# format: {format}");
    match format {
        PatternFormat::LonLat => {
            let _ = writeln!(s, "lon_deg,lat_deg,mark");
            for p in pattern.points() {
                let (lon, lat) = p.location.lonlat_deg();
                let _ = writeln!(s, "{lon},{lat},{}", pattern.label(p.mark));
            }
        }
        PatternFormat::Xyz => {
            let _ = writeln!(s, "x,y,z,mark");
            for p in pattern.points() {
                let v = p.location.as_vector();
                let _ = writeln!(s, "{},{},{},{}", v.x, v.y, v.z, pattern.label(p.mark));
            }
        }
        PatternFormat::Shape => {
            let src = pattern.source_points().ok_or_else(|| {
                CliError::config("pattern has no surface coordinates to write in shape format")
            })?;
            let _ = writeln!(s, "x,y,z,mark");
            for (v, p) in src.iter().zip(pattern.points()) {
                let _ = writeln!(s, "{},{},{},{}", v.x, v.y, v.z, pattern.label(p.mark));
            }
        }
    }
    write_file(path, &s)
}

// ---------------------------------------------------------------------------
// curve files
// ---------------------------------------------------------------------------

/// Write one summary curve as `r,value,defined` rows with metadata.
pub fn write_curve(path: &Path, curve: &SummaryCurve, prov: &Provenance) -> Result<(), CliError> {
    let mut s = prov.header("curve");
    let _ = writeln!(s, "# statistic: {}", curve.statistic);
    let _ = writeln!(
        s,
        "# marks: {},{}",
        curve.first_mark.as_deref().unwrap_or("-"),
        curve.second_mark.as_deref().unwrap_or("-")
    );
    let _ = writeln!(s, "# variant: {}", curve.variant);
    let _ = writeln!(s, "# window: {}", curve.window);
    let _ = writeln!(s, "# erosion: {}", curve.erosion);
    let _ = writeln!(s, "r,value,defined");
    for (r, v) in curve.grid.values().iter().zip(&curve.values) {
        let _ = writeln!(s, "{r},{},{}", fmt_opt(*v), u8::from(v.is_some()));
    }
    write_file(path, &s)
}

/// Read a curve file written by [`write_curve`]; values round-trip exactly.
pub fn read_curve(path: &Path) -> Result<SummaryCurve, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let (meta, body) = split_metadata(&text);
    let statistic = match meta.get("statistic").map(|s| s.as_str()) {
        Some("K") => Statistic::K,
        Some("F") => Statistic::F,
        Some("D") => Statistic::D,
        Some("J") => Statistic::J,
        Some("P") => Statistic::P,
        other => {
            return Err(CliError::data(format!(
                "curve file missing or unknown statistic: {other:?}"
            )))
        }
    };
    let variant = match meta.get("variant").map(|s| s.as_str()) {
        Some("isotropic") => EstimatorVariant::Isotropic,
        Some("inhomogeneous") => EstimatorVariant::Inhomogeneous,
        other => {
            return Err(CliError::data(format!(
                "curve file missing or unknown variant: {other:?}"
            )))
        }
    };
    let (first_mark, second_mark) = match meta.get("marks") {
        Some(pair) => {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| CliError::data("curve file marks must be `i,j`".to_string()))?;
            let opt = |s: &str| {
                if s == "-" {
                    None
                } else {
                    Some(s.to_string())
                }
            };
            (opt(a.trim()), opt(b.trim()))
        }
        None => (None, None),
    };

    let mut radii = Vec::new();
    let mut values = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(e.to_string()))?;
        let r: f64 = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|_| CliError::data("bad radius in curve file".to_string()))?;
        radii.push(r);
        let defined = record.get(2).unwrap_or("0") == "1";
        if defined {
            let v: f64 = record
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|_| CliError::data("bad value in curve file".to_string()))?;
            values.push(Some(v));
        } else {
            values.push(None);
        }
    }
    Ok(SummaryCurve {
        statistic,
        first_mark,
        second_mark,
        variant,
        grid: RadiusGrid::new(radii).map_err(|e| CliError::data(e.to_string()))?,
        values,
        window: meta.get("window").cloned().unwrap_or_default(),
        erosion: meta.get("erosion").map(|s| s == "true").unwrap_or(false),
    })
}

// ---------------------------------------------------------------------------
// envelope tables and test reports
// ---------------------------------------------------------------------------

/// Write one envelope as `r,obs,lo,hi,defined,exceed` rows; `defined` is the
/// number of defined replicates per radius and `exceed` is -1/0/1 for
/// below/inside/above.
pub fn write_envelope(
    path: &Path,
    env: &EnvelopeResult,
    caveat_region: Option<(f64, f64)>,
    prov: &Provenance,
) -> Result<(), CliError> {
    let mut s = prov.header("envelope");
    let _ = writeln!(s, "# statistic: {}", env.observed.statistic);
    let _ = writeln!(
        s,
        "# marks: {},{}",
        env.observed.first_mark.as_deref().unwrap_or("-"),
        env.observed.second_mark.as_deref().unwrap_or("-")
    );
    let _ = writeln!(s, "# method: {}", env.method);
    let _ = writeln!(s, "# nsim: {}", env.nsim);
    let _ = writeln!(s, "# level: {}", env.level);
    let _ = writeln!(s, "# k: {}", env.k);
    let _ = writeln!(s, "# window: {}", env.observed.window);
    if let Some((lo, hi)) = caveat_region {
        let _ = writeln!(s, "# caveat-region: {lo},{hi}");
    }
    let _ = writeln!(s, "r,obs,lo,hi,defined,exceed");
    for (ri, r) in env.observed.grid.values().iter().enumerate() {
        let exceed = match env.exceedance[ri] {
            Some(Exceedance::Above) => 1,
            Some(Exceedance::Below) => -1,
            None => 0,
        };
        let _ = writeln!(
            s,
            "{r},{},{},{},{},{exceed}",
            fmt_opt(env.observed.values[ri]),
            fmt_opt(env.lower[ri]),
            fmt_opt(env.upper[ri]),
            env.defined_counts[ri],
        );
    }
    write_file(path, &s)
}

/// Write the human-readable summary of an independence test.
pub fn write_report(path: &Path, report: &TestReport, prov: &Provenance) -> Result<(), CliError> {
    let mut s = prov.header("test-report");
    let _ = writeln!(s, "marks = {},{}", report.marks.0, report.marks.1);
    let _ = writeln!(s, "method = {}", report.method);
    let _ = writeln!(s, "nsim = {}", report.nsim);
    let _ = writeln!(s, "level = {}", report.level);
    let _ = writeln!(s, "k = {}", report.p.k);
    for (name, env) in [
        ("P", &report.p),
        ("J_ij", &report.j_ij),
        ("J_ji", &report.j_ji),
    ] {
        if env.exceedance_regions.is_empty() {
            let _ = writeln!(s, "{name}: inside envelope at all defined radii");
        }
        for reg in &env.exceedance_regions {
            let dir = match reg.direction {
                Exceedance::Above => "above",
                Exceedance::Below => "below",
            };
            let _ = writeln!(
                s,
                "{name}: {dir} envelope on r in [{}, {}]",
                reg.r_start, reg.r_end
            );
        }
    }
    for tag in &report.interpretations {
        let _ = writeln!(s, "interpretation = {tag:?}");
    }
    if report.caveat_near_pi {
        let (lo, hi) = report.caveat_region.unwrap_or((0.0, 0.0));
        let _ = writeln!(
            s,
            "caveat = rotation-null envelopes collapse towards r = pi; treat radii in [{lo}, {hi}] with caution"
        );
    }
    write_file(path, &s)
}

// ---------------------------------------------------------------------------
// manifests and intensity fields
// ---------------------------------------------------------------------------

/// Write a simulation manifest as config-style `key = value` lines.
pub fn write_manifest(
    path: &Path,
    entries: &[(&str, String)],
    prov: &Provenance,
) -> Result<(), CliError> {
    let mut s = prov.header("manifest");
    for (k, v) in entries {
        let _ = writeln!(s, "{k} = {v}");
    }
    write_file(path, &s)
}

/// Dump grid-field intensities: node coordinates plus one `rho_<mark>`
/// column per mark.
pub fn write_intensity_field(
    path: &Path,
    grid: &SphereGrid,
    fields: &[(String, Vec<f64>)],
    prov: &Provenance,
) -> Result<(), CliError> {
    let mut s = prov.header("intensity-field");
    let marks: Vec<&str> = fields.iter().map(|(m, _)| m.as_str()).collect();
    let _ = writeln!(s, "# marks: {}", marks.join(","));
    let _ = writeln!(s, "# grid: {}", grid.len());
    let cols: Vec<String> = fields.iter().map(|(m, _)| format!("rho_{m}")).collect();
    let _ = writeln!(s, "x,y,z,{}", cols.join(","));
    for (i, p) in grid.points().iter().enumerate() {
        let vals: Vec<String> = fields.iter().map(|(_, v)| format!("{}", v[i])).collect();
        let _ = writeln!(s, "{},{},{},{}", p.x(), p.y(), p.z(), vals.join(","));
    }
    write_file(path, &s)
}

/// Read back a dumped intensity field as one grid-backed model per mark.
pub fn read_intensity_field(path: &Path) -> Result<BTreeMap<String, IntensityModel>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let (_, body) = split_metadata(&text);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(e.to_string()))?
        .clone();
    let mut marks = Vec::new();
    for h in headers.iter().skip(3) {
        let mark = h
            .strip_prefix("rho_")
            .ok_or_else(|| CliError::data(format!("unexpected intensity column `{h}`")))?;
        marks.push(mark.to_string());
    }
    if marks.is_empty() {
        return Err(CliError::data("intensity field has no rho_ columns".to_string()));
    }
    let mut points = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); marks.len()];
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(e.to_string()))?;
        let num = |idx: usize| -> Result<f64, CliError> {
            record
                .get(idx)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|_| CliError::data("bad number in intensity field".to_string()))
        };
        points.push(
            UnitVector::new(num(0)?, num(1)?, num(2)?)
                .map_err(|e| CliError::data(e.to_string()))?,
        );
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(num(3 + c)?);
        }
    }
    let grid = SphereGrid::from_points(points);
    let mut out = BTreeMap::new();
    for (mark, values) in marks.into_iter().zip(columns) {
        out.insert(
            mark,
            IntensityModel::grid_field(grid.clone(), values)
                .map_err(|e| CliError::data(e.to_string()))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spheremark::geom::SphericalWindow;

    fn prov() -> Provenance {
        Provenance {
            command: "spheremark test-fixture".to_string(),
            config_hash: "0123456789abcdef".to_string(),
            seed: 7,
        }
    }

    #[test]
    fn lonlat_pattern_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pat.csv");
        std::fs::write(&path, "# comment\nlon_deg,lat_deg,mark\n0,90,a\n0,0,a\n45,45,b\n").unwrap();
        let pat = read_pattern(
            &path,
            PatternFormat::LonLat,
            &SurfaceShape::Sphere,
            &SphericalWindow::FullSphere,
        )
        .unwrap();
        assert_eq!(pat.len(), 3);
        assert_eq!(pat.mark_set(), &["a".to_string(), "b".to_string()]);
        // row 0,90 is the north pole; row 0,0 is (1,0,0)
        assert!((pat.points()[0].location.z() - 1.0).abs() < 1e-12);
        assert!((pat.points()[1].location.x() - 1.0).abs() < 1e-12);

        let out = dir.path().join("out.csv");
        write_pattern(&out, &pat, PatternFormat::LonLat, &prov()).unwrap();
        let back = read_pattern(
            &out,
            PatternFormat::LonLat,
            &SurfaceShape::Sphere,
            &SphericalWindow::FullSphere,
        )
        .unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in pat.points().iter().zip(back.points()) {
            assert!(
                spheremark::geom::geodesic_distance(&a.location, &b.location) < 1e-9,
                "round-trip moved a point"
            );
        }
    }

    #[test]
    fn xyz_pattern_norm_tolerance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pat.csv");
        std::fs::write(&path, "x,y,z,mark\n0,0,1.00001,a\n").unwrap();
        let err = read_pattern(
            &path,
            PatternFormat::Xyz,
            &SurfaceShape::Sphere,
            &SphericalWindow::FullSphere,
        )
        .unwrap_err();
        assert!(err.message.contains("deviates"), "{}", err.message);
        assert_eq!(err.kind, crate::ErrorKind::Data);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pat.csv");
        std::fs::write(&path, "lon_deg,lat_deg,mark\n1,2,a\nnot-a-number,3,b\n").unwrap();
        let err = read_pattern(
            &path,
            PatternFormat::LonLat,
            &SurfaceShape::Sphere,
            &SphericalWindow::FullSphere,
        )
        .unwrap_err();
        assert!(err.message.contains("line 3"), "{}", err.message);
    }

    #[test]
    fn shape_pattern_reads_onto_sphere() {
        let shape = SurfaceShape::ellipsoid(0.8, 0.8, 1.44).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pat.csv");
        std::fs::write(&path, "x,y,z,mark\n0,0,1.44,a\n0.8,0,0,b\n").unwrap();
        let pat = read_pattern(
            &path,
            PatternFormat::Shape,
            &shape,
            &SphericalWindow::FullSphere,
        )
        .unwrap();
        assert!((pat.points()[0].location.z() - 1.0).abs() < 1e-12);
        assert!(pat.source_shape().is_some());
        // shape-format write preserves the original coordinates exactly
        let out = dir.path().join("out.csv");
        write_pattern(&out, &pat, PatternFormat::Shape, &prov()).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.contains("0,0,1.44,a"), "{text}");
    }

    #[test]
    fn curve_file_round_trips_bit_exactly() {
        let grid = RadiusGrid::uniform(7, std::f64::consts::PI).unwrap();
        let mut curve = spheremark::summaries::k_baseline(&grid);
        curve.values[3] = None;
        curve.first_mark = Some("a".into());
        curve.second_mark = Some("b".into());
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("c1.csv");
        let p2 = dir.path().join("c2.csv");
        write_curve(&p1, &curve, &prov()).unwrap();
        let back = read_curve(&p1).unwrap();
        write_curve(&p2, &back, &prov()).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p1).unwrap(),
            std::fs::read_to_string(&p2).unwrap()
        );
        assert_eq!(back.statistic, Statistic::K);
        assert_eq!(back.values[3], None);
        assert_eq!(back.values[2], curve.values[2]);
    }

    #[test]
    fn intensity_field_round_trip() {
        let grid = SphereGrid::new(64);
        let vals: Vec<f64> = (0..64).map(|i| 1.0 + i as f64 / 7.0).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        write_intensity_field(
            &path,
            &grid,
            &[("spiral".to_string(), vals.clone())],
            &prov(),
        )
        .unwrap();
        let models = read_intensity_field(&path).unwrap();
        let model = &models["spiral"];
        for (i, p) in grid.points().iter().enumerate().step_by(9) {
            assert!((model.eval(p) - vals[i]).abs() < 1e-12);
        }
    }
}
