//! Text file formats: shape files, solution and contour dumps, search history.
//!
//! Floats are written in shortest round-trip form, so loading a saved file
//! reproduces every value bit for bit.

use crate::error::{Error, Result};
use crate::fem::{LevelCurve, TorsionSolution};
use crate::geom::Vec2;
use crate::optimizer::HistoryEntry;
use crate::shape::{polygon_from_support, ConvexPolygon, SupportVector};
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;

/// `{"kind": "support", "n", "h"}` or `{"kind": "polygon", "vertices"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeFile {
    Support { n: usize, h: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl ShapeFile {
    pub fn from_support(sv: &SupportVector) -> Self {
        ShapeFile::Support { n: sv.n(), h: sv.values().to_vec() }
    }

    pub fn from_polygon(p: &ConvexPolygon) -> Self {
        ShapeFile::Polygon { vertices: p.vertices().iter().map(|v| [v.x, v.y]).collect() }
    }

    /// Contours are closed point loops; they are stored as polygons.
    pub fn from_level_curve(c: &LevelCurve) -> Self {
        ShapeFile::Polygon { vertices: c.points.iter().map(|v| [v.x, v.y]).collect() }
    }

    pub fn support(&self) -> Option<Result<SupportVector>> {
        match self {
            ShapeFile::Support { n, h } => Some(if *n != h.len() {
                Err(Error::InvalidInput(format!("n = {n} but {} support values", h.len())))
            } else {
                SupportVector::new(h.clone())
            }),
            ShapeFile::Polygon { .. } => None,
        }
    }

    pub fn to_polygon(&self) -> Result<ConvexPolygon> {
        match self {
            ShapeFile::Support { .. } => polygon_from_support(&self.support().expect("support variant")?),
            ShapeFile::Polygon { vertices } => {
                ConvexPolygon::new(vertices.iter().map(|&[x, y]| Vec2::new(x, y)).collect())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Node table `x y u`, one node per line after a header comment.
pub fn write_solution(sol: &TorsionSolution, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "# x y u")?;
    for (p, u) in sol.mesh().nodes().iter().zip(sol.u()) {
        writeln!(w, "{} {} {}", p.x, p.y, u)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `eval,objective,best`.
pub fn write_history(history: &[HistoryEntry], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in history {
        out.serialize(e).map_err(std::io::Error::from)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history(r: impl std::io::Read) -> Result<Vec<HistoryEntry>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Io(e.into())))
        .collect()
}

/// Any report wrapped with the program version and the fully resolved
/// configuration that produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport<C, R> {
    pub version: String,
    pub config: C,
    pub result: R,
}

impl<C: Serialize, R: Serialize> RunReport<C, R> {
    pub fn new(config: C, result: R) -> Self {
        RunReport { version: version_string(), config, result }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn version_string() -> String {
    format!("torsion {}", env!("CARGO_PKG_VERSION"))
}
