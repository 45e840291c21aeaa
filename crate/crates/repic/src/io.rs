//! Event and region ingestion, and output files with metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use repic_core::{build_basis, build_quadrature, BasisFamily, BasisLayout, BasisSystem, Point, PointPattern, Region};

use crate::error::{CliError, Result};

/// Version of every JSON document written.
pub const FORMAT_VERSION: u32 = 1;

/// Serializable region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionSpec {
    Interval([f64; 2]),
    Polygon(Vec<[f64; 2]>),
}

impl RegionSpec {
    pub fn build(&self) -> Result<Region> {
        Ok(match self {
            RegionSpec::Interval([l, u]) => Region::interval(*l, *u)?,
            RegionSpec::Polygon(v) => Region::polygon(v.iter().map(|&[x, y]| Point::new(x, y)).collect())?,
        })
    }

    pub fn dim(&self) -> u8 {
        match self {
            RegionSpec::Interval(_) => 1,
            RegionSpec::Polygon(_) => 2,
        }
    }
}

/// Serializable basis layout, enough to rebuild the basis exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BasisSpec {
    Bspline { spans: usize, quadrature: usize },
    Rbf { rows: usize, cols: usize, bandwidth: Option<f64>, quadrature: usize },
}

impl BasisSpec {
    pub fn build(&self, region: &Region) -> Result<BasisSystem> {
        let (family, layout, res) = match *self {
            BasisSpec::Bspline { spans, quadrature } => {
                (BasisFamily::CubicBSpline, BasisLayout::EquispacedKnots { spans }, quadrature)
            }
            BasisSpec::Rbf { rows, cols, bandwidth, quadrature } => {
                (BasisFamily::GaussianRbf, BasisLayout::CenterGrid { rows, cols, bandwidth }, quadrature)
            }
        };
        let quad = build_quadrature(region, res)?;
        Ok(build_basis(family, region, &layout, &quad)?)
    }
}

pub fn read_region_file(path: &Path) -> Result<RegionSpec> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Parse { path: path.into(), message: e.to_string() })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| CliError::Parse {
            path: path.into(),
            message: format!("missing column {name:?}"),
        })
    };
    let (cx, cy) = (col("x")?, col("y")?);
    let mut vertices = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse().map_err(|_| CliError::Parse { path: path.into(), message: format!("line {line}: bad number {s:?}") })
        };
        vertices.push([num(cx)?, num(cy)?]);
    }
    let spec = RegionSpec::Polygon(vertices);
    spec.build()?;
    Ok(spec)
}

/// Replications read from an event file, with coordinates echoed verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct Events {
    pub patterns: Vec<PointPattern>,
    /// Coordinate strings of every point as they appeared in the file.
    pub raw: Vec<Vec<Vec<String>>>,
}

impl Events {
    pub fn id_index(&self, id: &str) -> Option<usize> {
        self.patterns.iter().position(|p| p.id == id)
    }
}

/// Read events grouped by replication in order of first appearance. A row whose coordinate
/// fields are all empty declares a replication without points.
pub fn read_events(path: &Path, region: &Region) -> Result<Events> {
    let dim = region.dimension();
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Parse { path: path.into(), message: e.to_string() })?;
    let headers = rdr.headers()?.clone();
    let names: &[&str] = if dim == 1 { &["replication_id", "t"] } else { &["replication_id", "x", "y"] };
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h.trim() == *n).ok_or_else(|| CliError::Parse {
                path: path.into(),
                message: format!("line 1: missing column {n:?} (expected {})", names.join(",")),
            })
        })
        .collect::<Result<_>>()?;
    let mut events = Events { patterns: Vec::new(), raw: Vec::new() };
    let mut errors = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {}: {e}", e.position().map_or(0, |p| p.line())));
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(cols[0]).unwrap_or("").trim();
        if id.is_empty() {
            errors.push(format!("line {line}: empty replication_id"));
            continue;
        }
        let fields: Vec<&str> = cols[1..].iter().map(|&c| rec.get(c).unwrap_or("").trim()).collect();
        let k = match events.id_index(id) {
            Some(k) => k,
            None => {
                events.patterns.push(PointPattern::new(id, Vec::new()));
                events.raw.push(Vec::new());
                events.patterns.len() - 1
            }
        };
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let coords = match parsed {
            Ok(v) if v.iter().all(|x| x.is_finite()) => v,
            _ => {
                errors.push(format!("line {line}: bad coordinates {:?}", fields.join(",")));
                continue;
            }
        };
        let pt = if dim == 1 { Point::line(coords[0]) } else { Point::new(coords[0], coords[1]) };
        if !region.contains(pt) {
            errors.push(format!("line {line}: point ({}) outside the region", fields.join(", ")));
            continue;
        }
        events.patterns[k].points.push(pt);
        events.raw[k].push(fields.iter().map(|s| s.to_string()).collect());
    }
    if !errors.is_empty() {
        return Err(CliError::Ingest { path: path.into(), errors });
    }
    if events.patterns.is_empty() {
        return Err(CliError::Parse { path: path.into(), message: "no replications".into() });
    }
    Ok(events)
}

/// Header and rows in the ingestion format.
pub fn event_rows(patterns: &[PointPattern], dim: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let header = if dim == 1 { vec!["replication_id", "t"] } else { vec!["replication_id", "x", "y"] };
    let mut rows = Vec::new();
    for p in patterns {
        if p.points.is_empty() {
            rows.push(std::iter::once(p.id.clone()).chain((0..dim).map(|_| String::new())).collect());
        }
        for pt in &p.points {
            let mut r = vec![p.id.clone(), pt.x.to_string()];
            if dim == 2 {
                r.push(pt.y.to_string());
            }
            rows.push(r);
        }
    }
    (header.into_iter().map(String::from).collect(), rows)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

/// Provenance written next to every output file as `<file>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub file: String,
    pub command: String,
    pub version: String,
    pub format_version: u32,
    pub seed: u64,
    /// SHA-256 of the resolved configuration, with input files replaced by their content hashes.
    pub config_hash: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Output directory writer.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub dir: PathBuf,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub warnings: Vec<String>,
}

impl OutDir {
    pub fn create(dir: PathBuf, command: &str, seed: u64, config_hash: String) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self { dir, command: command.into(), seed, config_hash, warnings: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        let meta = Meta {
            file: name.into(),
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            format_version: FORMAT_VERSION,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            warnings: self.warnings.clone(),
        };
        let meta_path = self.path(&format!("{name}.meta.json"));
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        fs::write(&meta_path, text).map_err(|e| CliError::io(&meta_path, e))
    }

    pub fn csv<S: AsRef<str>>(&self, name: &str, header: &[S], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(false).from_writer(Vec::new());
        w.write_record(header.iter().map(|s| s.as_ref()))?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Format a float for CSV output; non-finite values become empty fields.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}
