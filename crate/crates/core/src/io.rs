//! Reading and writing profiles, sampled functions and report documents.
//!
//! Floats in CSV files are written with 17 significant digits, which is
//! enough for an exact round trip of every `f64`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{SampledFunction, SpectralGrid};
use crate::error::{Error, Result};
use crate::geometry::{GeometryKind, MetricProfile, ProfileGeometry};

/// Renders a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV row from already-rendered fields, quoting where needed.
pub fn csv_row(fields: &[String]) -> String {
    let mut line = fields
        .iter()
        .map(|f| csv_field(f))
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

/// CSV with one column per slice. All slices must have the same length.
pub fn columns_to_csv(headers: &[&str], columns: &[&[f64]]) -> Result<String> {
    if headers.len() != columns.len() {
        return Err(Error::InvalidInput("header/column count mismatch".into()));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("columns differ in length".into()));
    }
    let mut out = headers.join(",");
    out.push('\n');
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format_float(c[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses a numeric CSV with a header line. Returns the header and columns.
pub fn csv_to_columns(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Parse(format!(
                "row {}: expected {} fields, found {}",
                lineno + 2,
                header.len(),
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number `{f}`", lineno + 2)))?;
            cols[c].push(v);
        }
    }
    Ok((header, cols))
}

pub fn profile_to_csv(profile: &MetricProfile) -> String {
    columns_to_csv(
        &["x", "theta"],
        &[profile.geometry().nodes(), profile.theta().values()],
    )
    .expect("profile columns have equal length")
}

fn check_nodes(geom: &ProfileGeometry, xs: &[f64]) -> Result<()> {
    if xs.len() != geom.len() {
        return Err(Error::InvalidInput(format!(
            "profile has {} nodes, geometry has {}",
            xs.len(),
            geom.len()
        )));
    }
    let scale = geom.x_hi() - geom.x_lo();
    for (i, (&a, &b)) in xs.iter().zip(geom.nodes()).enumerate() {
        if (a - b).abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "node {i} at x = {a} does not match the grid node {b}"
            )));
        }
    }
    Ok(())
}

/// Reads an `x,theta` CSV written for the same grid.
pub fn profile_from_csv(geom: &Arc<ProfileGeometry>, text: &str) -> Result<MetricProfile> {
    let (header, mut cols) = csv_to_columns(text)?;
    if header != ["x", "theta"] {
        return Err(Error::Parse(format!(
            "expected header `x,theta`, found `{}`",
            header.join(",")
        )));
    }
    let theta = cols.pop().expect("two columns");
    check_nodes(geom, &cols[0])?;
    MetricProfile::new(geom.clone(), SampledFunction::new(theta))
}

/// How a geometry is chosen on the command line or in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeometrySelector {
    Cp1,
    Cpm(u32),
    Custom(PathBuf),
}

impl fmt::Display for GeometrySelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometrySelector::Cp1 => write!(f, "cp1"),
            GeometrySelector::Cpm(m) => write!(f, "cpm:{m}"),
            GeometrySelector::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl FromStr for GeometrySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "cp1" {
            return Ok(GeometrySelector::Cp1);
        }
        if let Some(m) = s.strip_prefix("cpm:") {
            let m: u32 = m
                .parse()
                .map_err(|_| Error::Parse(format!("bad CPᵐ dimension in `{s}`")))?;
            if m < 2 {
                return Err(Error::Parse(format!("CPᵐ needs m ≥ 2, got {m}")));
            }
            return Ok(GeometrySelector::Cpm(m));
        }
        if let Some(p) = s.strip_prefix("custom:") {
            if p.is_empty() {
                return Err(Error::Parse("custom geometry needs a file path".into()));
            }
            return Ok(GeometrySelector::Custom(PathBuf::from(p)));
        }
        Err(Error::Parse(format!(
            "unknown geometry `{s}` (expected cp1, cpm:<m> or custom:<file>)"
        )))
    }
}

impl GeometrySelector {
    pub fn build(&self, nodes: usize) -> Result<Arc<ProfileGeometry>> {
        match self {
            GeometrySelector::Cp1 => ProfileGeometry::cp1(nodes),
            GeometrySelector::Cpm(m) => ProfileGeometry::cpm(*m, nodes),
            GeometrySelector::Custom(path) => {
                let doc: CustomGeometryDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
                if doc.weight.len() != nodes {
                    return Err(Error::InvalidInput(format!(
                        "custom geometry has {} samples but the grid has {nodes} nodes",
                        doc.weight.len()
                    )));
                }
                doc.build().map(Arc::new)
            }
        }
    }
}

fn default_dim() -> u32 {
    1
}

fn default_vol_const() -> f64 {
    2.0 * std::f64::consts::PI
}

/// A user-supplied geometry: weight and base term sampled on the
/// Chebyshev–Gauss–Lobatto nodes of `[x_lo, x_hi]` in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomGeometryDocument {
    pub x_lo: f64,
    pub x_hi: f64,
    pub weight: Vec<f64>,
    pub base_term: Vec<f64>,
    pub slope_lo: f64,
    pub slope_hi: f64,
    #[serde(default = "default_dim")]
    pub dim: u32,
    #[serde(default = "default_vol_const")]
    pub vol_const: f64,
}

impl CustomGeometryDocument {
    pub fn build(&self) -> Result<ProfileGeometry> {
        let grid = SpectralGrid::new(self.weight.len(), self.x_lo, self.x_hi)?;
        ProfileGeometry::from_parts(
            GeometryKind::Custom,
            grid,
            SampledFunction::new(self.weight.clone()),
            SampledFunction::new(self.base_term.clone()),
            self.slope_lo,
            self.slope_hi,
            self.dim,
            self.vol_const,
        )
    }
}

/// Structured form of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    pub geometry: GeometryKind,
    pub nodes: usize,
    pub theta_values: Vec<f64>,
}

impl ProfileDocument {
    pub fn from_profile(profile: &MetricProfile) -> Self {
        ProfileDocument {
            geometry: profile.geometry().kind(),
            nodes: profile.geometry().len(),
            theta_values: profile.theta().values().to_vec(),
        }
    }

    pub fn into_profile(self, geom: &Arc<ProfileGeometry>) -> Result<MetricProfile> {
        if self.geometry != geom.kind() {
            return Err(Error::InvalidInput(format!(
                "profile was written for {:?}, not {:?}",
                self.geometry,
                geom.kind()
            )));
        }
        if self.nodes != geom.len() || self.theta_values.len() != geom.len() {
            return Err(Error::InvalidInput(format!(
                "profile has {} nodes ({} values), geometry has {}",
                self.nodes,
                self.theta_values.len(),
                geom.len()
            )));
        }
        MetricProfile::new(geom.clone(), SampledFunction::new(self.theta_values))
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

/// Loads a profile from `.csv` or `.json`.
pub fn read_profile(path: &Path, geom: &Arc<ProfileGeometry>) -> Result<MetricProfile> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str::<ProfileDocument>(&text)?.into_profile(geom),
        _ => profile_from_csv(geom, &text),
    }
}

/// `x, psi_re, psi_im, s` columns.
pub fn potential_csv(
    geom: &ProfileGeometry,
    psi: &crate::potentials::ComplexSampledFunction,
    s: &SampledFunction,
) -> Result<String> {
    columns_to_csv(
        &["x", "psi_re", "psi_im", "s"],
        &[geom.nodes(), psi.re.values(), psi.im.values(), s.values()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::random_admissible_profile;
    use crate::geometry::make_cp1_geometry;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = make_cp1_geometry();
        let p = random_admissible_profile(&g, 11, 0.3).unwrap();
        let text = profile_to_csv(&p);
        let back = profile_from_csv(&g, &text).unwrap();
        for (a, b) in p.theta().values().iter().zip(back.theta().values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let g = make_cp1_geometry();
        let p = random_admissible_profile(&g, 4, 0.2).unwrap();
        let text = to_json(&ProfileDocument::from_profile(&p)).unwrap();
        let doc: ProfileDocument = serde_json::from_str(&text).unwrap();
        let back = doc.into_profile(&g).unwrap();
        assert_eq!(p.theta(), back.theta());
    }

    #[test]
    fn wrong_grid_is_rejected() {
        let g = make_cp1_geometry();
        let small = ProfileGeometry::cp1(33).unwrap();
        let p = crate::geometry::round_profile(&small).unwrap();
        assert!(profile_from_csv(&g, &profile_to_csv(&p)).is_err());
    }

    #[test]
    fn selectors_parse_and_render() {
        for s in ["cp1", "cpm:3", "custom:geo.json"] {
            assert_eq!(s.parse::<GeometrySelector>().unwrap().to_string(), s);
        }
        assert!("cpm:1".parse::<GeometrySelector>().is_err());
        assert!("torus".parse::<GeometrySelector>().is_err());
    }

    #[test]
    fn quoting() {
        assert_eq!(
            csv_row(&["sum(id,exp)".into(), "1".into()]),
            "\"sum(id,exp)\",1\n"
        );
    }
}
