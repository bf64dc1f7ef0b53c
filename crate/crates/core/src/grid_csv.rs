//! CSV exchange for sampled potentials.
//!
//! ```text
//! # manifold=torus n=2 p=1.5 shape=256x256
//! x1,x2,value
//! -5.0000000000000000e-1,-5.0000000000000000e-1,3.1415926535897931e-1
//! ```
//!
//! Sphere grids use angle columns (`theta`, or `polar,azimuth`). Rows may come
//! in any order; each is placed on the grid node its coordinates name. Without
//! the metadata line the manifold and `p` must be supplied and the shape is
//! inferred from the distinct coordinate values.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, ManifoldKind};
use crate::potential::{GridLayout, SampledPotential};

/// Allowed offset from a node, in grid cells.
const NODE_TOL: f64 = 1e-6;

fn parse_err(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("line {line}: {msg}"))
}

struct Meta {
    manifold: Option<Manifold>,
    p: Option<f64>,
    shape: Option<Vec<usize>>,
}

fn read_meta(text: &str) -> Result<Meta> {
    let mut meta = Meta { manifold: None, p: None, shape: None };
    let mut kind = None;
    let mut n = None;
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.trim_start().strip_prefix('#') else {
            if line.trim().is_empty() {
                continue;
            }
            break;
        };
        let lineno = i as u64 + 1;
        for tok in body.split_whitespace() {
            let Some((k, v)) = tok.split_once('=') else { continue };
            match k {
                "manifold" => {
                    kind = Some(match v {
                        "torus" => ManifoldKind::Torus,
                        "sphere" => ManifoldKind::Sphere,
                        _ => return Err(parse_err(lineno, format!("unknown manifold '{v}'"))),
                    })
                }
                "n" => n = Some(v.parse::<usize>().map_err(|e| parse_err(lineno, format!("bad n '{v}': {e}")))?),
                "p" => meta.p = Some(v.parse::<f64>().map_err(|e| parse_err(lineno, format!("bad p '{v}': {e}")))?),
                "shape" => {
                    meta.shape = Some(
                        v.split('x')
                            .map(|s| s.parse::<usize>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e| parse_err(lineno, format!("bad shape '{v}': {e}")))?,
                    )
                }
                _ => {}
            }
        }
    }
    if let (Some(k), Some(n)) = (kind, n) {
        meta.manifold = Some(Manifold::new(k, n).map_err(|e| parse_err(1, e))?);
    }
    Ok(meta)
}

fn layout_from_shape(m: &Manifold, shape: &[usize]) -> Result<GridLayout> {
    let bad = || Error::Parse(format!("shape {shape:?} does not fit {m:?}"));
    match (m.kind(), m.n()) {
        (ManifoldKind::Torus, n) if shape.len() == n => Ok(GridLayout::Torus { shape: shape.to_vec() }),
        (ManifoldKind::Sphere, 1) if shape.len() == 1 => Ok(GridLayout::Circle { size: shape[0] }),
        (ManifoldKind::Sphere, 2) if shape.len() == 2 => Ok(GridLayout::LatLong { polar: shape[0], azimuth: shape[1] }),
        _ => Err(bad()),
    }
    .and_then(|l| {
        if l.node_count() == 0 || shape.iter().any(|&s| s < 2) {
            Err(bad())
        } else {
            Ok(l)
        }
    })
}

fn shape_of(layout: &GridLayout) -> Vec<usize> {
    match layout {
        GridLayout::Torus { shape } => shape.clone(),
        GridLayout::Circle { size } => vec![*size],
        GridLayout::LatLong { polar, azimuth } => vec![*polar, *azimuth],
    }
}

/// Index along one axis for coordinate `c` on `count` nodes starting at
/// `start` with spacing `step`, periodic when `wrap`.
fn node_index(c: f64, start: f64, step: f64, count: usize, wrap: bool) -> Option<usize> {
    let t = (c - start) / step;
    let i = t.round();
    if (t - i).abs() > NODE_TOL {
        return None;
    }
    let i = i as i64;
    if wrap {
        Some(i.rem_euclid(count as i64) as usize)
    } else if (0..count as i64).contains(&i) {
        Some(i as usize)
    } else {
        None
    }
}

fn place(layout: &GridLayout, c: &[f64]) -> Option<usize> {
    match layout {
        GridLayout::Torus { shape } => {
            let mut idx = 0;
            for (k, &nk) in shape.iter().enumerate() {
                idx = idx * nk + node_index(c[k], -0.5, 1.0 / nk as f64, nk, true)?;
            }
            Some(idx)
        }
        GridLayout::Circle { size } => node_index(c[0], -PI, 2.0 * PI / *size as f64, *size, true),
        GridLayout::LatLong { polar, azimuth } => {
            let a = node_index(c[0], PI / (2.0 * *polar as f64), PI / *polar as f64, *polar, false)?;
            let b = node_index(c[1], -PI, 2.0 * PI / *azimuth as f64, *azimuth, true)?;
            Some(a * azimuth + b)
        }
    }
}

impl SampledPotential {
    /// CSV with a metadata comment, a header row and one row per node.
    pub fn to_csv(&self) -> String {
        let m = self.manifold();
        let shape: Vec<String> = shape_of(self.layout()).iter().map(|s| s.to_string()).collect();
        let mut s = format!("# manifold={} n={} p={} shape={}\n", m.kind(), m.n(), self.p(), shape.join("x"));
        let mut header = self.layout().coord_names();
        header.push("value".into());
        s.push_str(&header.join(","));
        s.push('\n');
        for (i, v) in self.values().iter().enumerate() {
            for c in self.layout().node_coords(i) {
                let _ = write!(s, "{c:.16e},");
            }
            let _ = writeln!(s, "{v:.16e}");
        }
        s
    }

    /// Parses [`SampledPotential::to_csv`] output, or a plain
    /// `coordinates..., value` table when `fallback` supplies the manifold and `p`.
    pub fn from_csv(text: &str, fallback: Option<(Manifold, f64)>) -> Result<SampledPotential> {
        let meta = read_meta(text)?;
        let (m, p) = match (meta.manifold, meta.p, fallback) {
            (Some(m), Some(p), _) => (m, p),
            (Some(m), None, Some((_, p))) => (m, p),
            (None, _, Some((m, p))) => (m, meta.p.unwrap_or(p)),
            _ => return Err(Error::Parse("no '# manifold=.. n=.. p=..' metadata line and no manifold/p given".into())),
        };
        let width = match (m.kind(), m.n()) {
            (ManifoldKind::Torus, n) => n,
            (ManifoldKind::Sphere, n @ (1 | 2)) => n,
            (ManifoldKind::Sphere, n) => {
                return Err(Error::UnsupportedDimension(format!("sampled sphere grids need n = 1 or 2, got {n}")))
            }
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header_line = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.len();
        if header_line != width + 1 {
            return Err(Error::Parse(format!(
                "header has {header_line} columns, expected {} coordinates and a value",
                width
            )));
        }
        let mut rows: Vec<(u64, Vec<f64>, f64)> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e)
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let nums = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| parse_err(line, format!("'{f}' is not a number"))))
                .collect::<Result<Vec<f64>>>()?;
            if nums.len() != width + 1 {
                return Err(parse_err(line, format!("expected {} fields, found {}", width + 1, nums.len())));
            }
            rows.push((line, nums[..width].to_vec(), nums[width]));
        }
        let shape = match meta.shape {
            Some(s) => s,
            None => (0..width)
                .map(|k| {
                    rows.iter()
                        .map(|r| (r.1[k] * 1e9).round() as i64)
                        .collect::<BTreeSet<_>>()
                        .len()
                })
                .collect(),
        };
        let layout = layout_from_shape(&m, &shape)?;
        let mut values = vec![f64::NAN; layout.node_count()];
        for (line, c, v) in &rows {
            let idx = place(&layout, c).ok_or_else(|| parse_err(*line, format!("{c:?} is not a node of shape {shape:?}")))?;
            if !values[idx].is_nan() {
                return Err(parse_err(*line, format!("node {c:?} appears twice")));
            }
            values[idx] = *v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse(format!(
                "grid node {:?} has no row ({} of {} nodes present)",
                layout.node_coords(i),
                rows.len(),
                values.len()
            )));
        }
        SampledPotential::new(m, p, layout, values)
    }
}
