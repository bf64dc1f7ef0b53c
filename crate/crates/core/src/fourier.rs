//! Fourier coefficients of the torus cost `c_p(x) = d(0, x)^p`, measure and
//! potential transforms, and measure recovery on `T^1` by deconvolution.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::manifold::{wrap_unit, Point};
use crate::measure::DiscreteMeasure;
use crate::potential::{potential_unchecked, GridLayout, SampledPotential};
use crate::quadrature::Rule;

pub const DEFAULT_RESOLUTION: usize = 1 << 14;
pub const ZERO_THRESHOLD: f64 = 1e-12;

fn check_resolution(resolution: usize, min: usize) -> Result<()> {
    if resolution.is_power_of_two() && resolution >= min {
        Ok(())
    } else {
        Err(invalid(format!("resolution must be a power of two >= {min}, got {resolution}")))
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("p must be a finite real >= 1, got {p}")))
    }
}

fn half_period_rule(resolution: usize) -> Rule {
    Rule::composite(0.0, 0.5, resolution, true, false)
}

/// `ĉ_p(j) = 2 ∫_0^{1/2} x^p cos(2πjx) dx` on `T^1` by graded composite
/// Gauss-Legendre quadrature with `resolution` panels.
pub fn cost_coeff_quadrature(p: f64, j: i64, resolution: usize) -> Result<f64> {
    check_p(p)?;
    check_resolution(resolution, 1 << 10)?;
    let rule = half_period_rule(resolution);
    let f = 2.0 * PI * j as f64;
    Ok(2.0 * rule.integrate(|x| x.powf(p) * (f * x).cos()))
}

/// `ĉ_p(j)` for `j = 0..=jmax` sharing one quadrature rule.
pub fn cost_coeffs_quadrature(p: f64, jmax: usize, resolution: usize) -> Result<Vec<f64>> {
    check_p(p)?;
    check_resolution(resolution, 1 << 10)?;
    let rule = half_period_rule(resolution);
    let mut out = vec![0.0; jmax + 1];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let base = 2.0 * w * x.powf(p);
        for (j, acc) in out.iter_mut().enumerate() {
            *acc += base * (2.0 * PI * j as f64 * x).cos();
        }
    }
    Ok(out)
}

/// `ĉ_p(j_1, j_2)` on `T^2` by tensor-product quadrature over `[0, 1/2]^2`.
pub fn cost_coeff_quadrature_2d(p: f64, j: [i64; 2], resolution: usize) -> Result<f64> {
    check_p(p)?;
    check_resolution(resolution, 1 << 4)?;
    let rule = half_period_rule(resolution);
    let cx: Vec<f64> = rule.nodes.iter().map(|&x| (2.0 * PI * j[0] as f64 * x).cos()).collect();
    let cy: Vec<f64> = rule.nodes.iter().map(|&y| (2.0 * PI * j[1] as f64 * y).cos()).collect();
    let mut acc = 0.0;
    for (a, (&x, &wx)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let mut row = 0.0;
        for (b, (&y, &wy)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            row += wy * (x * x + y * y).powf(p / 2.0) * cy[b];
        }
        acc += wx * cx[a] * row;
    }
    Ok(4.0 * acc)
}

fn closed_1d(p: f64, j: i64) -> f64 {
    let jf = j as f64;
    if p == 2.0 {
        if j == 0 {
            1.0 / 12.0
        } else {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign / (2.0 * jf * jf * PI * PI)
        }
    } else if j == 0 {
        0.25
    } else if j % 2 == 0 {
        0.0
    } else {
        -1.0 / (jf * jf * PI * PI)
    }
}

/// Exact `ĉ_p` for `p ∈ {1, 2}` on `T^1` and `p = 2` on `T^2`.
pub fn cost_coeff_closed(p: f64, j: &[i64]) -> Result<f64> {
    match (j.len(), p) {
        (1, p) if p == 1.0 || p == 2.0 => Ok(closed_1d(p, j[0])),
        (2, p) if p == 2.0 => Ok(match (j[0], j[1]) {
            (0, 0) => 1.0 / 6.0,
            (k, 0) | (0, k) => closed_1d(2.0, k),
            _ => 0.0,
        }),
        (n, p) => Err(invalid(format!("no closed form for p = {p} in dimension {n}"))),
    }
}

/// `μ̂(j) = Σ_k w_k exp(-2πi j·x_k)`.
pub fn measure_transform(mu: &DiscreteMeasure, j: &[i64]) -> Result<Complex64> {
    let m = mu.manifold();
    if !m.is_torus() {
        return Err(invalid("Fourier transforms are defined for torus measures"));
    }
    if j.len() != m.n() {
        return Err(invalid(format!("frequency has {} components, measure lives on T^{}", j.len(), m.n())));
    }
    if j.iter().all(|&k| k == 0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(mu
        .atoms()
        .map(|(x, w)| {
            let phase: f64 = j.iter().zip(x.coords()).map(|(&k, &c)| k as f64 * c).sum();
            Complex64::from_polar(w, -2.0 * PI * phase)
        })
        .sum())
}

/// Maximum over `|j| <= jmax` of `|T̂(j) - ĉ_p(j) μ̂(j)|`, with `T̂` integrated
/// from the exact potential on panels of width about `1/gridsize`, split at the
/// atoms and their antipodes.
pub fn convolution_identity_check(mu: &DiscreteMeasure, p: f64, jmax: usize, gridsize: usize) -> Result<f64> {
    check_p(p)?;
    let m = mu.manifold();
    if !m.is_torus() || m.n() != 1 {
        return Err(invalid("the convolution check runs on T^1"));
    }
    if gridsize < 16 {
        return Err(invalid("gridsize must be at least 16"));
    }
    let mut cuts = vec![-0.5, 0.5];
    for (x, _) in mu.atoms() {
        cuts.push(x[0]);
        cuts.push(wrap_unit(x[0] + 0.5));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let jm = jmax as i64;
    let mut that = vec![Complex64::new(0.0, 0.0); 2 * jmax + 1];
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let panels = ((b - a) * gridsize as f64).ceil().max(1.0) as usize;
        let rule = Rule::composite(a, b, panels, true, true);
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = w * potential_unchecked(mu, p, &Point::from_canonical(vec![wrap_unit(x)]));
            for (k, acc) in that.iter_mut().enumerate() {
                let j = k as i64 - jm;
                *acc += Complex64::from_polar(v, -2.0 * PI * j as f64 * x);
            }
        }
    }
    let chat = cost_coeffs_quadrature(p, jmax, DEFAULT_RESOLUTION)?;
    let mut worst: f64 = 0.0;
    for (k, t) in that.iter().enumerate() {
        let j = k as i64 - jm;
        let predicted = measure_transform(mu, &[j])? * chat[j.unsigned_abs() as usize];
        worst = worst.max((t - predicted).norm());
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierCoefficient {
    pub j: i64,
    /// Real: the cost is even, so its coefficients have no imaginary part.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub p: f64,
    pub jmax: usize,
    pub threshold: f64,
    /// Quadrature panels, absent for closed-form spectra.
    pub resolution: Option<usize>,
    /// Largest change of any coefficient when the resolution is halved.
    pub error_budget: f64,
    pub values: Vec<FourierCoefficient>,
    pub zeros: Vec<i64>,
}

impl SpectrumReport {
    fn assemble(p: f64, jmax: usize, threshold: f64, resolution: Option<usize>, error_budget: f64, half: &[f64]) -> Self {
        let jm = jmax as i64;
        let values: Vec<FourierCoefficient> =
            (-jm..=jm).map(|j| FourierCoefficient { j, value: half[j.unsigned_abs() as usize] }).collect();
        let zeros = values.iter().filter(|c| c.value.abs() <= threshold).map(|c| c.j).collect();
        SpectrumReport { p, jmax, threshold, resolution, error_budget, values, zeros }
    }

    pub fn value(&self, j: i64) -> Option<f64> {
        self.values.iter().find(|c| c.j == j).map(|c| c.value)
    }

    /// CSV with header `j,value,is_zero`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,value,is_zero\n");
        for c in &self.values {
            s.push_str(&format!("{},{:.16e},{}\n", c.j, c.value, c.value.abs() <= self.threshold));
        }
        s
    }
}

/// Quadrature spectrum for `|j| <= jmax` at the default resolution.
pub fn nonvanishing_scan(p: f64, jmax: usize, threshold: f64) -> Result<SpectrumReport> {
    nonvanishing_scan_at(p, jmax, threshold, DEFAULT_RESOLUTION)
}

pub fn nonvanishing_scan_at(p: f64, jmax: usize, threshold: f64, resolution: usize) -> Result<SpectrumReport> {
    if !(threshold >= 0.0) {
        return Err(invalid("threshold must be nonnegative"));
    }
    check_resolution(resolution, 1 << 11)?;
    let fine = cost_coeffs_quadrature(p, jmax, resolution)?;
    let coarse = cost_coeffs_quadrature(p, jmax, resolution / 2)?;
    let budget = fine.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(SpectrumReport::assemble(p, jmax, threshold, Some(resolution), budget, &fine))
}

/// Spectrum from the exact formulas (`p ∈ {1, 2}`).
pub fn closed_form_spectrum(p: f64, jmax: usize, threshold: f64) -> Result<SpectrumReport> {
    let half = (0..=jmax as i64).map(|j| cost_coeff_closed(p, &[j])).collect::<Result<Vec<_>>>()?;
    Ok(SpectrumReport::assemble(p, jmax, threshold, None, 0.0, &half))
}

/// `μ̂(j) = T̂(j) / ĉ_p(j)` for `|j| <= jmax`, with `T̂` the discrete Fourier
/// transform of the grid values. Aliasing makes the error grow like
/// `(j / grid size)^2`; fine grids are needed.
pub fn fourier_recover(grid: &SampledPotential, jmax: usize) -> Result<Vec<(i64, Complex64)>> {
    let GridLayout::Torus { shape } = grid.layout() else {
        return Err(invalid("Fourier recovery needs a sampled potential on T^1"));
    };
    if shape.len() != 1 {
        return Err(invalid("Fourier recovery needs a sampled potential on T^1"));
    }
    let n = shape[0];
    if jmax >= n / 2 {
        return Err(invalid(format!("jmax {jmax} is beyond the grid's Nyquist frequency")));
    }
    let scan = nonvanishing_scan(grid.p(), jmax, ZERO_THRESHOLD)?;
    if !scan.zeros.is_empty() {
        return Err(Error::UnrecoverableFrequency(scan.zeros));
    }
    let jm = jmax as i64;
    let mut out = Vec::with_capacity(2 * jmax + 1);
    for j in -jm..=jm {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &v) in grid.values().iter().enumerate() {
            let t = -0.5 + i as f64 / n as f64;
            acc += Complex64::from_polar(v, -2.0 * PI * j as f64 * t);
        }
        acc /= n as f64;
        out.push((j, acc / scan.value(j).unwrap_or(f64::NAN)));
    }
    Ok(out)
}
