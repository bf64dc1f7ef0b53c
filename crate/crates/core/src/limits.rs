//! One-sided second-difference limits `lim (T(x+s) - 2T(x) + T(x-s)) / s`.
//!
//! Closed-form values, extrapolation from finite steps, and a local singular
//! least-squares fit for gridded potentials (whose interpolant is flat below the
//! grid spacing, so finite steps cannot be shrunk).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::manifold::{circle_gap, wrap_unit, Manifold, Point};
use crate::measure::DiscreteMeasure;
use crate::potential::{GridLayout, PotentialOracle, SampledPotential};

/// Tolerance for atom and hyperplane membership in the closed-form limits.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Steps used by [`richardson_limit`].
pub const RICHARDSON_STEPS: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

/// Displacement direction for a second difference.
#[derive(Clone, Debug, PartialEq)]
pub enum Direction {
    /// Torus coordinate axis (0-based).
    Axis(usize),
    /// Unit tangent vector at the base point on the sphere.
    Tangent(Point),
}

fn displaced(m: &Manifold, x: &Point, dir: &Direction, s: f64) -> Result<(Point, Point)> {
    match (m.is_torus(), dir) {
        (true, Direction::Axis(j)) => {
            if *j >= m.n() {
                return Err(invalid(format!("axis {j} out of range for {m:?}")));
            }
            Ok((m.torus_shift(x, *j, s), m.torus_shift(x, *j, -s)))
        }
        (false, Direction::Tangent(z)) => {
            m.check(z)?;
            let dot: f64 = x.coords().iter().zip(z.coords()).map(|(a, b)| a * b).sum();
            let norm: f64 = z.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
            if dot.abs() > 1e-8 || (norm - 1.0).abs() > 1e-8 {
                return Err(invalid(format!("tangent direction is not a unit vector orthogonal to x (dot {dot:e})")));
            }
            let (sn, cs) = s.sin_cos();
            let step = |sign: f64| {
                let c: Vec<f64> = x.coords().iter().zip(z.coords()).map(|(a, b)| cs * a + sign * sn * b).collect();
                m.point(&c)
            };
            Ok((step(1.0)?, step(-1.0)?))
        }
        (true, _) => Err(invalid("torus second differences take a coordinate axis")),
        (false, _) => Err(invalid("sphere second differences take a tangent vector")),
    }
}

/// `(T(x+s) - 2T(x) + T(x-s)) / s` with the manifold's displacement.
pub fn second_difference_ratio(t: &PotentialOracle, x: &Point, dir: &Direction, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid(format!("step must be positive, got {s}")));
    }
    let m = t.manifold();
    m.check(x)?;
    let (plus, minus) = displaced(m, x, dir, s)?;
    Ok((t.eval(&plus) - 2.0 * t.eval(x) + t.eval(&minus)) / s)
}

/// Polynomial extrapolation to `s = 0` (Neville) of the ratios at
/// [`RICHARDSON_STEPS`].
pub fn richardson_limit(t: &PotentialOracle, x: &Point, dir: &Direction) -> Result<f64> {
    let vals = RICHARDSON_STEPS
        .iter()
        .map(|&s| second_difference_ratio(t, x, dir, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(extrapolate_to_zero(&RICHARDSON_STEPS, &vals))
}

pub(crate) fn extrapolate_to_zero(s: &[f64], v: &[f64]) -> f64 {
    let mut p = v.to_vec();
    let n = s.len();
    for level in 1..n {
        for i in 0..n - level {
            let k = i + level;
            p[i] = (s[i] * p[i + 1] - s[k] * p[i]) / (s[i] - s[k]);
        }
    }
    p[0]
}

/// Closed-form limit on `T^n`, `n >= 2`, along axis `j`.
pub fn torus_limit_analytic(mu: &DiscreteMeasure, p: f64, x: &Point, j: usize) -> Result<f64> {
    let m = mu.manifold();
    if !m.is_torus() {
        return Err(invalid("torus limit requested for a sphere measure"));
    }
    m.check(x)?;
    if m.n() == 1 {
        return Err(Error::UnsupportedDimension(
            "the hyperplane limit needs n >= 2; use circle_limit_analytic on T^1".into(),
        ));
    }
    if j >= m.n() {
        return Err(invalid(format!("axis {j} out of range for n = {}", m.n())));
    }
    if p < 1.0 {
        return Err(invalid(format!("p must be >= 1, got {p}")));
    }
    let mut hyper = 0.0;
    for (y, w) in mu.atoms() {
        if circle_gap(y[j], x[j] + 0.5) > MEMBERSHIP_TOL {
            continue;
        }
        if p == 2.0 {
            hyper += w;
            continue;
        }
        let rho2: f64 = (0..m.n()).filter(|&k| k != j).map(|k| circle_gap(x[k], y[k]).powi(2)).sum();
        hyper += w * (0.25 + rho2).powf((p - 2.0) / 2.0);
    }
    Ok(if p == 1.0 {
        2.0 * mu.mass_at(x, MEMBERSHIP_TOL) - hyper
    } else if p == 2.0 {
        -2.0 * hyper
    } else {
        -p * hyper
    })
}

/// Closed-form limit on `S^n` (any unit tangent; the value does not depend on it).
pub fn sphere_limit_analytic(mu: &DiscreteMeasure, p: f64, x: &Point) -> Result<f64> {
    let m = mu.manifold();
    if !m.is_sphere() {
        return Err(invalid("sphere limit requested for a torus measure"));
    }
    m.check(x)?;
    if p < 1.0 {
        return Err(invalid(format!("p must be >= 1, got {p}")));
    }
    let anti = mu.mass_at(&m.antipode(x), MEMBERSHIP_TOL);
    Ok(if p == 1.0 {
        -2.0 * anti + 2.0 * mu.mass_at(x, MEMBERSHIP_TOL)
    } else {
        -2.0 * p * PI.powf(p - 1.0) * anti
    })
}

/// Closed-form limit on the unit-circumference circle `T^1`.
pub fn circle_limit_analytic(mu: &DiscreteMeasure, p: f64, x: &Point) -> Result<f64> {
    let m = mu.manifold();
    if !m.is_torus() || m.n() != 1 {
        return Err(invalid("circle limit requires a measure on T^1"));
    }
    m.check(x)?;
    if p < 1.0 {
        return Err(invalid(format!("p must be >= 1, got {p}")));
    }
    let anti = mu.mass_at(&m.antipode(x), MEMBERSHIP_TOL);
    Ok(if p == 1.0 {
        2.0 * mu.mass_at(x, MEMBERSHIP_TOL) - 2.0 * anti
    } else {
        -2.0 * p * 0.5f64.powf(p - 1.0) * anti
    })
}

/// Shape of the non-smooth part of a sampled potential near the base point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Singularity {
    /// Kink across the hyperplane through the base point orthogonal to the axis.
    Planar,
    /// Cone `|y - x|` centred at the base point.
    Conical,
}

/// Nodes on each side of the base point used by [`sampled_kink_limit`].
pub const FIT_HALF_WIDTH: usize = 8;

/// Estimates the second-difference limit of a sampled potential by fitting, on
/// the raw nodes near `x`, a smooth cubic plus the singular terms of the given
/// shape. The limit is twice the coefficient of the first-order singular term.
///
/// Other singular sets must stay outside the fitting window (about
/// `FIT_HALF_WIDTH` grid cells).
pub fn sampled_kink_limit(grid: &SampledPotential, x: &Point, axis: usize, shape: Singularity) -> Result<f64> {
    let m = grid.manifold();
    m.check(x)?;
    let samples = match grid.layout() {
        GridLayout::Torus { shape: dims } => {
            if axis >= dims.len() {
                return Err(invalid(format!("axis {axis} out of range")));
            }
            torus_window(grid.values(), dims, x)
        }
        GridLayout::Circle { size } => circle_window(grid.values(), *size, x),
        GridLayout::LatLong { polar, azimuth } => sphere_window(grid, *polar, *azimuth, x),
    };
    fit_singular(&samples, axis, shape)
}

struct Window {
    dim: usize,
    radius: f64,
    offsets: Vec<Vec<f64>>,
    values: Vec<f64>,
}

fn torus_window(values: &[f64], dims: &[usize], x: &Point) -> Window {
    let n = dims.len();
    let w = FIT_HALF_WIDTH as i64;
    let centre: Vec<i64> = (0..n).map(|k| ((x[k] + 0.5) * dims[k] as f64).round() as i64).collect();
    let side = (2 * w + 1) as usize;
    let mut offsets = Vec::new();
    let mut vals = Vec::new();
    for flat in 0..side.pow(n as u32) {
        let mut rest = flat;
        let mut idx = 0usize;
        let mut off = vec![0.0; n];
        for k in 0..n {
            let o = (rest % side) as i64 - w;
            rest /= side;
            let i = centre[k] + o;
            let node = -0.5 + i as f64 / dims[k] as f64;
            off[k] = wrap_unit(node - x[k]);
            idx = idx * dims[k] + i.rem_euclid(dims[k] as i64) as usize;
        }
        offsets.push(off);
        vals.push(values[idx]);
    }
    let h = dims.iter().map(|&d| 1.0 / d as f64).fold(0.0, f64::max);
    Window { dim: n, radius: (w as f64 + 0.5) * h, offsets, values: vals }
}

fn circle_window(values: &[f64], size: usize, x: &Point) -> Window {
    let theta = x[1].atan2(x[0]);
    let h = 2.0 * PI / size as f64;
    let c = ((theta + PI) / h).round() as i64;
    let w = FIT_HALF_WIDTH as i64;
    let mut offsets = Vec::new();
    let mut vals = Vec::new();
    for o in -w..=w {
        let i = c + o;
        let node = -PI + i as f64 * h;
        offsets.push(vec![2.0 * PI * wrap_unit((node - theta) / (2.0 * PI))]);
        vals.push(values[i.rem_euclid(size as i64) as usize]);
    }
    Window { dim: 1, radius: (w as f64 + 0.5) * h, offsets, values: vals }
}

fn sphere_window(grid: &SampledPotential, polar: usize, azimuth: usize, x: &Point) -> Window {
    let c = x.coords();
    // orthonormal tangent frame at x
    let pick = (0..3).min_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs())).unwrap_or(0);
    let mut e1 = [0.0; 3];
    e1[pick] = 1.0;
    let d: f64 = e1.iter().zip(c).map(|(a, b)| a * b).sum();
    for k in 0..3 {
        e1[k] -= d * c[k];
    }
    let n1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
    e1.iter_mut().for_each(|v| *v /= n1);
    let e2 = [c[1] * e1[2] - c[2] * e1[1], c[2] * e1[0] - c[0] * e1[2], c[0] * e1[1] - c[1] * e1[0]];

    let radius = (FIT_HALF_WIDTH as f64 + 0.5) * PI / polar as f64;
    let mut offsets = Vec::new();
    let mut vals = Vec::new();
    let theta_x = c[0].hypot(c[1]).atan2(c[2]);
    for a in 0..polar {
        let theta = PI * (a as f64 + 0.5) / polar as f64;
        if (theta - theta_x).abs() > radius {
            continue;
        }
        for b in 0..azimuth {
            let idx = a * azimuth + b;
            let y = grid.layout().node_point(idx);
            let yc = y.coords();
            let r = crate::manifold::unit_angle(c, yc);
            if r > radius {
                continue;
            }
            let dot: f64 = yc.iter().zip(c).map(|(a, b)| a * b).sum();
            let tang: Vec<f64> = (0..3).map(|k| yc[k] - dot * c[k]).collect();
            let tn = tang.iter().map(|v| v * v).sum::<f64>().sqrt();
            let (u1, u2) = if tn > 0.0 {
                let p1: f64 = tang.iter().zip(&e1).map(|(a, b)| a * b).sum();
                let p2: f64 = tang.iter().zip(&e2).map(|(a, b)| a * b).sum();
                (r * p1 / tn, r * p2 / tn)
            } else {
                (0.0, 0.0)
            };
            offsets.push(vec![u1, u2]);
            vals.push(grid.values()[idx]);
        }
    }
    Window { dim: 2, radius, offsets, values: vals }
}

/// Exponent tuples of total degree `<= deg` in `dim` variables, skipping `skip`.
fn monomials(dim: usize, deg: usize, skip: Option<usize>) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    for _ in 0..deg {
        let mut next = Vec::new();
        for e in &out {
            let start = e.iter().rposition(|&v| v > 0).unwrap_or(0);
            for k in start..dim {
                if Some(k) == skip {
                    continue;
                }
                let mut f = e.clone();
                f[k] += 1;
                next.push(f);
            }
        }
        out.extend(next.into_iter().filter(|e| e.iter().sum::<usize>() <= deg));
        out.sort();
        out.dedup();
    }
    out
}

fn mono(e: &[usize], u: &[f64]) -> f64 {
    e.iter().zip(u).map(|(&k, &v)| v.powi(k as i32)).product()
}

const FIT_DEGREE: usize = 4;

fn fit_singular(win: &Window, axis: usize, shape: Singularity) -> Result<f64> {
    let smooth = monomials(win.dim, FIT_DEGREE, None);
    let axis = if shape == Singularity::Planar { Some(axis.min(win.dim - 1)) } else { None };
    // Planar kinks have a jump that varies along the hyperplane.
    let kink_mod = match axis {
        Some(a) => monomials(win.dim, 2, Some(a)),
        None => vec![vec![0; win.dim]],
    };
    let cols = smooth.len() + kink_mod.len() + 1;
    let rows = win.values.len();
    if rows < cols + 4 {
        return Err(Error::Resource(format!("fitting window has {rows} nodes, needs more than {cols}")));
    }
    let mut a = DMatrix::zeros(rows, cols);
    for (r, off) in win.offsets.iter().enumerate() {
        let u: Vec<f64> = off.iter().map(|v| v / win.radius).collect();
        let sigma = match axis {
            Some(ax) => u[ax].abs(),
            None => u.iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        let mut c = 0;
        for e in &kink_mod {
            a[(r, c)] = sigma * mono(e, &u);
            c += 1;
        }
        a[(r, c)] = sigma.powi(3);
        c += 1;
        for e in &smooth {
            a[(r, c)] = mono(e, &u);
            c += 1;
        }
    }
    let b = DVector::from_column_slice(&win.values);
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Resource(format!("least-squares fit failed: {e}")))?;
    Ok(2.0 * coef[0] / win.radius)
}
