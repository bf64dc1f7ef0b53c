//! Wasserstein potentials `x ↦ W_p(μ, δ_x)^p = Σ_k w_k d(x, x_k)^p` and their
//! sampled (gridded) counterparts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifold::{wrap_unit, Manifold, ManifoldKind, Point};
use crate::measure::DiscreteMeasure;

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("p must be a finite real >= 1, got {p}")))
    }
}

/// Potential of `mu` at `x`.
pub fn potential_eval(mu: &DiscreteMeasure, p: f64, x: &Point) -> Result<f64> {
    check_p(p)?;
    mu.manifold().check(x)?;
    Ok(potential_unchecked(mu, p, x))
}

pub(crate) fn potential_unchecked(mu: &DiscreteMeasure, p: f64, x: &Point) -> f64 {
    let m = mu.manifold();
    if p == 1.0 {
        mu.atoms().map(|(y, w)| w * m.dist(x, y)).sum()
    } else if p == 2.0 {
        mu.atoms()
            .map(|(y, w)| {
                let d = m.dist(x, y);
                w * d * d
            })
            .sum()
    } else {
        mu.atoms().map(|(y, w)| w * m.dist(x, y).powf(p)).sum()
    }
}

/// Node layout of a sampled potential.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridLayout {
    /// Periodic tensor grid on `T^n`; axis `k` has nodes `-1/2 + i / shape[k]`.
    Torus { shape: Vec<usize> },
    /// `S^1` sampled at angles `-pi + 2 pi i / size`.
    Circle { size: usize },
    /// `S^2` on a latitude-longitude grid: polar angles `pi (a + 1/2) / polar`,
    /// azimuths `-pi + 2 pi b / azimuth`.
    LatLong { polar: usize, azimuth: usize },
}

impl GridLayout {
    /// The natural layout with `per_axis` nodes along each axis.
    pub fn uniform(m: &Manifold, per_axis: usize) -> Result<Self> {
        if per_axis < 4 {
            return Err(invalid("grids need at least 4 nodes per axis"));
        }
        match (m.kind(), m.n()) {
            (ManifoldKind::Torus, n) => Ok(GridLayout::Torus { shape: vec![per_axis; n] }),
            (ManifoldKind::Sphere, 1) => Ok(GridLayout::Circle { size: per_axis }),
            (ManifoldKind::Sphere, 2) => Ok(GridLayout::LatLong { polar: per_axis, azimuth: per_axis }),
            (ManifoldKind::Sphere, n) => Err(Error::UnsupportedDimension(format!(
                "sampled sphere potentials support n = 1, 2 only (got n = {n})"
            ))),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            GridLayout::Torus { shape } => shape.iter().product(),
            GridLayout::Circle { size } => *size,
            GridLayout::LatLong { polar, azimuth } => polar * azimuth,
        }
    }

    fn fits(&self, m: &Manifold) -> bool {
        match self {
            GridLayout::Torus { shape } => m.is_torus() && shape.len() == m.n(),
            GridLayout::Circle { .. } => m.is_sphere() && m.n() == 1,
            GridLayout::LatLong { .. } => m.is_sphere() && m.n() == 2,
        }
    }

    /// Grid coordinates of node `idx`: torus coordinates, or angles on the sphere.
    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        match self {
            GridLayout::Torus { shape } => {
                let mut rest = idx;
                let mut c = vec![0.0; shape.len()];
                for k in (0..shape.len()).rev() {
                    c[k] = -0.5 + (rest % shape[k]) as f64 / shape[k] as f64;
                    rest /= shape[k];
                }
                c
            }
            GridLayout::Circle { size } => vec![-PI + 2.0 * PI * idx as f64 / *size as f64],
            GridLayout::LatLong { polar, azimuth } => {
                let (a, b) = (idx / azimuth, idx % azimuth);
                vec![PI * (a as f64 + 0.5) / *polar as f64, -PI + 2.0 * PI * b as f64 / *azimuth as f64]
            }
        }
    }

    /// Manifold point of node `idx`.
    pub fn node_point(&self, idx: usize) -> Point {
        let c = self.node_coords(idx);
        Point::from_canonical(match self {
            GridLayout::Torus { .. } => c,
            GridLayout::Circle { .. } => angle_to_circle(c[0]),
            GridLayout::LatLong { .. } => angles_to_sphere(c[0], c[1]),
        })
    }

    /// Converts grid coordinates (as written in CSV files) to a point.
    pub fn coords_to_point(&self, c: &[f64]) -> Point {
        Point::from_canonical(match self {
            GridLayout::Torus { .. } => c.iter().map(|&v| wrap_unit(v)).collect(),
            GridLayout::Circle { .. } => angle_to_circle(c[0]),
            GridLayout::LatLong { .. } => angles_to_sphere(c[0], c[1]),
        })
    }

    pub fn coord_names(&self) -> Vec<String> {
        match self {
            GridLayout::Torus { shape } => (1..=shape.len()).map(|k| format!("x{k}")).collect(),
            GridLayout::Circle { .. } => vec!["theta".into()],
            GridLayout::LatLong { .. } => vec!["polar".into(), "azimuth".into()],
        }
    }
}

fn angle_to_circle(theta: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin()]
}

fn angles_to_sphere(polar: f64, azimuth: f64) -> Vec<f64> {
    let (st, ct) = polar.sin_cos();
    let (sp, cp) = azimuth.sin_cos();
    vec![st * cp, st * sp, ct]
}

/// A potential known through its values on a grid, interpolated multilinearly.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPotential {
    manifold: Manifold,
    p: f64,
    layout: GridLayout,
    values: Vec<f64>,
}

impl SampledPotential {
    pub fn new(manifold: Manifold, p: f64, layout: GridLayout, values: Vec<f64>) -> Result<Self> {
        check_p(p)?;
        if !layout.fits(&manifold) {
            return Err(invalid(format!("grid layout {layout:?} does not fit {manifold:?}")));
        }
        if values.len() != layout.node_count() {
            return Err(invalid(format!(
                "grid has {} nodes but {} values were given",
                layout.node_count(),
                values.len()
            )));
        }
        let cap = manifold.diameter().powf(p) * (1.0 + 1e-9) + 1e-12;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < -1e-12 || **v > cap) {
            return Err(Error::Validation(format!(
                "potential value {v} at node {i} is outside [0, diameter^p = {cap}]"
            )));
        }
        Ok(SampledPotential { manifold, p, layout, values })
    }

    /// Samples the potential of `mu` at every node of `layout`.
    pub fn from_measure(mu: &DiscreteMeasure, p: f64, layout: GridLayout) -> Result<Self> {
        check_p(p)?;
        if !layout.fits(mu.manifold()) {
            return Err(invalid(format!("grid layout {layout:?} does not fit {:?}", mu.manifold())));
        }
        let values = (0..layout.node_count())
            .map(|i| potential_unchecked(mu, p, &layout.node_point(i)))
            .collect();
        Self::new(*mu.manifold(), p, layout, values)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Multilinear interpolation; periodic along torus axes, circle and azimuth,
    /// clamped in the polar angle.
    pub fn eval(&self, x: &Point) -> f64 {
        match &self.layout {
            GridLayout::Torus { shape } => {
                let n = shape.len();
                let mut base = vec![0usize; n];
                let mut frac = vec![0.0; n];
                for k in 0..n {
                    let t = (x[k] + 0.5) * shape[k] as f64;
                    let f = t.floor();
                    base[k] = (f as i64).rem_euclid(shape[k] as i64) as usize;
                    frac[k] = t - f;
                }
                let mut acc = 0.0;
                for corner in 0..(1usize << n) {
                    let mut w = 1.0;
                    let mut idx = 0;
                    for k in 0..n {
                        let up = (corner >> k) & 1 == 1;
                        w *= if up { frac[k] } else { 1.0 - frac[k] };
                        let i = if up { (base[k] + 1) % shape[k] } else { base[k] };
                        idx = idx * shape[k] + i;
                    }
                    if w != 0.0 {
                        acc += w * self.values[idx];
                    }
                }
                acc
            }
            GridLayout::Circle { size } => {
                let theta = x[1].atan2(x[0]);
                let t = (theta + PI) / (2.0 * PI) * *size as f64;
                let f = t.floor();
                let i0 = (f as i64).rem_euclid(*size as i64) as usize;
                let a = t - f;
                (1.0 - a) * self.values[i0] + a * self.values[(i0 + 1) % size]
            }
            GridLayout::LatLong { polar, azimuth } => {
                let rho = x[0].hypot(x[1]);
                let theta = rho.atan2(x[2]);
                let phi = x[1].atan2(x[0]);
                let ta = (theta / PI * *polar as f64 - 0.5).clamp(0.0, (*polar - 1) as f64);
                let a0 = (ta.floor() as usize).min(polar - 2);
                let fa = ta - a0 as f64;
                let tb = (phi + PI) / (2.0 * PI) * *azimuth as f64;
                let fbf = tb.floor();
                let b0 = (fbf as i64).rem_euclid(*azimuth as i64) as usize;
                let fb = tb - fbf;
                let b1 = (b0 + 1) % azimuth;
                let v = |a: usize, b: usize| self.values[a * azimuth + b];
                (1.0 - fa) * ((1.0 - fb) * v(a0, b0) + fb * v(a0, b1)) + fa * ((1.0 - fb) * v(a0 + 1, b0) + fb * v(a0 + 1, b1))
            }
        }
    }
}

/// A queryable potential: either exact from a known measure, or sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialOracle {
    ClosedForm { measure: DiscreteMeasure, p: f64 },
    Sampled(SampledPotential),
}

impl PotentialOracle {
    pub fn closed_form(measure: DiscreteMeasure, p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(PotentialOracle::ClosedForm { measure, p })
    }

    pub fn manifold(&self) -> &Manifold {
        match self {
            PotentialOracle::ClosedForm { measure, .. } => measure.manifold(),
            PotentialOracle::Sampled(s) => s.manifold(),
        }
    }

    pub fn p(&self) -> f64 {
        match self {
            PotentialOracle::ClosedForm { p, .. } => *p,
            PotentialOracle::Sampled(s) => s.p(),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            PotentialOracle::ClosedForm { measure, p } => potential_unchecked(measure, *p, x),
            PotentialOracle::Sampled(s) => s.eval(x),
        }
    }
}
