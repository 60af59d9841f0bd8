//! Persistence diagrams, their projected (death, lifetime) form, and file formats.
//!
//! Diagrams follow the upper-level-set convention: every finite point has
//! `birth > death`. The projected diagram maps `(b, d)` to `(d, b - d)` so the
//! diagonal lands on the horizontal axis and all points sit in the closed upper
//! half-plane.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// A point of the plane, `[x1, x2]`.
pub type Point = [f64; 2];

/// One (birth, death) pair. `death == None` marks a class that never dies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagramPoint {
    pub birth: f64,
    pub death: Option<f64>,
}

impl DiagramPoint {
    pub fn finite(birth: f64, death: f64) -> Self {
        Self { birth, death: Some(death) }
    }

    pub fn infinite(birth: f64) -> Self {
        Self { birth, death: None }
    }

    pub fn is_finite(&self) -> bool {
        self.death.is_some()
    }

    /// `b - d`, or `None` for an infinite point.
    pub fn lifetime(&self) -> Option<f64> {
        self.death.map(|d| self.birth - d)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PersistenceDiagram {
    pub degree: usize,
    pub points: Vec<DiagramPoint>,
    pub metadata: BTreeMap<String, String>,
}

impl PersistenceDiagram {
    pub fn new(degree: usize, points: Vec<DiagramPoint>) -> Self {
        Self { degree, points, metadata: BTreeMap::new() }
    }

    /// Builds a diagram of finite points from `(birth, death)` pairs.
    pub fn from_pairs(degree: usize, pairs: &[(f64, f64)]) -> Self {
        Self::new(degree, pairs.iter().map(|&(b, d)| DiagramPoint::finite(b, d)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn finite_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_finite()).count()
    }

    /// Checks `birth > death` for every finite point.
    pub fn validate(&self) -> Result<()> {
        for (index, p) in self.points.iter().enumerate() {
            if let Some(death) = p.death {
                if !(p.birth > death) {
                    return Err(Error::BirthNotAboveDeath { index, birth: p.birth, death });
                }
            }
        }
        Ok(())
    }
}

/// Points of a projected persistence diagram, `(death, lifetime)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[axis]).collect()
    }

    /// Per-coordinate sample means and standard deviations (divisor `n - 1`).
    pub fn moments(&self) -> ([f64; 2], [f64; 2]) {
        let c0 = self.coordinate(0);
        let c1 = self.coordinate(1);
        (
            [stats::mean(&c0), stats::mean(&c1)],
            [stats::sample_sd(&c0), stats::sample_sd(&c1)],
        )
    }
}

/// Maps `(b, d)` to `(d, b - d)`. Point order is preserved.
pub fn to_ppd(diagram: &PersistenceDiagram) -> Result<PointSet> {
    let mut points = Vec::with_capacity(diagram.len());
    for (index, p) in diagram.points.iter().enumerate() {
        let death = p.death.ok_or(Error::InfinitePoint { index })?;
        if !(p.birth > death) {
            return Err(Error::BirthNotAboveDeath { index, birth: p.birth, death });
        }
        points.push([death, p.birth - death]);
    }
    Ok(PointSet { points })
}

/// Inverse of [`to_ppd`]: `(x1, x2) -> (b = x1 + x2, d = x1)`.
///
/// A point on the horizontal axis maps to a diagonal point `b == d`, which
/// is accepted here even though it is not a proper persistence pair.
pub fn from_ppd(ps: &PointSet, degree: usize) -> Result<PersistenceDiagram> {
    let mut points = Vec::with_capacity(ps.len());
    for (index, p) in ps.points.iter().enumerate() {
        if !(p[1] >= 0.0) {
            return Err(Error::NegativeLifetime { index, value: p[1] });
        }
        points.push(DiagramPoint::finite(p[0] + p[1], p[0]));
    }
    Ok(PersistenceDiagram::new(degree, points))
}

/// Removes infinite points, returning the finite diagram and how many were dropped.
pub fn strip_infinite(diagram: &PersistenceDiagram) -> (PersistenceDiagram, usize) {
    let points: Vec<DiagramPoint> = diagram.points.iter().copied().filter(|p| p.is_finite()).collect();
    let removed = diagram.len() - points.len();
    let out = PersistenceDiagram { degree: diagram.degree, points, metadata: diagram.metadata.clone() };
    (out, removed)
}

/// Indices of finite points whose lifetime is at least `Q3 + multiplier * (Q3 - Q1)`.
///
/// Quartiles are type-7 (linear interpolation) over all finite lifetimes.
pub fn vertical_outliers(diagram: &PersistenceDiagram, multiplier: f64) -> Result<Vec<usize>> {
    let finite: Vec<(usize, f64)> = diagram
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.lifetime().map(|l| (i, l)))
        .collect();
    if finite.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: finite.len() });
    }
    let mut sorted: Vec<f64> = finite.iter().map(|&(_, l)| l).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = stats::quantile_sorted(&sorted, 0.25);
    let q3 = stats::quantile_sorted(&sorted, 0.75);
    let threshold = q3 + multiplier * (q3 - q1);
    Ok(finite.into_iter().filter(|&(_, l)| l >= threshold).map(|(i, _)| i).collect())
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Serializes as CSV with header `birth,death`; infinite deaths are written `inf`.
pub fn to_csv(diagram: &PersistenceDiagram) -> String {
    let mut out = String::from("birth,death\n");
    for p in &diagram.points {
        match p.death {
            Some(d) => writeln!(out, "{},{}", p.birth, d).unwrap(),
            None => writeln!(out, "{},inf", p.birth).unwrap(),
        }
    }
    out
}

pub fn from_csv(text: &str, degree: usize) -> Result<PersistenceDiagram> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "birth,death" => {}
        Some((i, header)) => {
            return Err(Error::Parse { line: i + 1, message: format!("expected header `birth,death`, found `{header}`") })
        }
        None => return Ok(PersistenceDiagram::new(degree, Vec::new())),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let mut fields = line.split(',').map(str::trim);
        let (Some(b), Some(d), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse { line: i + 1, message: "expected two fields".into() });
        };
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, message: format!("`{s}`: {e}") })
        };
        let birth = parse(b)?;
        let death = if d.eq_ignore_ascii_case("inf") || d.eq_ignore_ascii_case("-inf") {
            None
        } else {
            Some(parse(d)?)
        };
        points.push(DiagramPoint { birth, death });
    }
    Ok(PersistenceDiagram::new(degree, points))
}

/// Concatenates labeled diagrams into one CSV `source,birth,death`.
pub fn superpose(diagrams: &[(String, PersistenceDiagram)]) -> String {
    let mut out = String::from("source,birth,death\n");
    for (label, d) in diagrams {
        for p in &d.points {
            match p.death {
                Some(x) => writeln!(out, "{label},{},{x}", p.birth).unwrap(),
                None => writeln!(out, "{label},{},inf", p.birth).unwrap(),
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DiagramJson {
    degree: usize,
    points: Vec<[f64; 2]>,
    #[serde(default)]
    infinite: Vec<[f64; 1]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

/// JSON form `{ "degree": k, "points": [[b,d],...], "infinite": [[b],...] }`.
///
/// Finite and infinite points are stored in separate arrays, so a JSON round
/// trip groups infinite points after the finite ones.
pub fn to_json(diagram: &PersistenceDiagram) -> Result<String> {
    let doc = DiagramJson {
        degree: diagram.degree,
        points: diagram.points.iter().filter_map(|p| p.death.map(|d| [p.birth, d])).collect(),
        infinite: diagram.points.iter().filter(|p| !p.is_finite()).map(|p| [p.birth]).collect(),
        metadata: diagram.metadata.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> Result<PersistenceDiagram> {
    let doc: DiagramJson = serde_json::from_str(text)?;
    let mut points: Vec<DiagramPoint> = doc.points.iter().map(|&[b, d]| DiagramPoint::finite(b, d)).collect();
    points.extend(doc.infinite.iter().map(|&[b]| DiagramPoint::infinite(b)));
    Ok(PersistenceDiagram { degree: doc.degree, points, metadata: doc.metadata })
}

/// Loads a diagram from a `.json` or CSV file (anything not ending in `.json`).
pub fn load(path: &Path) -> Result<PersistenceDiagram> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        from_json(&text)
    } else {
        from_csv(&text, 0)
    }
}

pub fn save(diagram: &PersistenceDiagram, path: &Path) -> Result<()> {
    let text = if path.extension().is_some_and(|e| e == "json") { to_json(diagram)? } else { to_csv(diagram) };
    std::fs::write(path, text)?;
    Ok(())
}
