//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes and returns plain numbers, slices or strings, so the
//! same functions run in native tests. Errors come back as strings.

use wasm_bindgen::prelude::*;

use wpot::fourier::{closed_form_spectrum, nonvanishing_scan_at};
use wpot::manifold::Manifold;
use wpot::measure::DiscreteMeasure;
use wpot::potential::{GridLayout, SampledPotential};
use wpot::transport::solve_transport;

/// Panel count for the browser spectrum; coarser than the library default to stay interactive.
const DEMO_RESOLUTION: usize = 1 << 11;

fn torus_measure(coords: &[f64], weights: &[f64]) -> Result<DiscreteMeasure, String> {
    if coords.len() != 2 * weights.len() {
        return Err(format!("{} coordinates for {} weights", coords.len(), weights.len()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err("weights must have positive total".into());
    }
    let pts: Vec<Vec<f64>> = coords.chunks(2).map(|c| c.to_vec()).collect();
    let w = weights.iter().map(|v| v / total).collect();
    DiscreteMeasure::from_coords(Manifold::torus(2), &pts, w).map_err(|e| e.to_string())
}

/// Potential of a measure on `T^2` sampled on a `size x size` grid, row-major
/// with `x1` along rows. `coords` holds `x1, x2` pairs; weights are normalized.
#[wasm_bindgen]
pub fn torus_potential(coords: &[f64], weights: &[f64], p: f64, size: usize) -> Result<Vec<f64>, String> {
    let mu = torus_measure(coords, weights)?;
    let layout = GridLayout::uniform(mu.manifold(), size).map_err(|e| e.to_string())?;
    let grid = SampledPotential::from_measure(&mu, p, layout).map_err(|e| e.to_string())?;
    Ok(grid.values().to_vec())
}

/// Coefficients `c_p(j)` of the circle cost for `j = 0..=jmax`.
#[wasm_bindgen]
pub fn cost_spectrum(p: f64, jmax: usize, closed_form: bool) -> Result<Vec<f64>, String> {
    let report = if closed_form {
        closed_form_spectrum(p, jmax, 0.0)
    } else {
        nonvanishing_scan_at(p, jmax, 0.0, DEMO_RESOLUTION)
    }
    .map_err(|e| e.to_string())?;
    Ok((0..=jmax as i64).map(|j| report.value(j).unwrap_or(f64::NAN)).collect())
}

/// Optimal transport between two measures on `T^2`, as JSON
/// `{"distance", "cost", "p", "coupling": {"rows", "cols", "entries": [[i, j, mass], ..]}}`.
#[wasm_bindgen]
pub fn torus_transport(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64], p: f64) -> Result<String, String> {
    let r = solve_transport(&torus_measure(a, wa)?, &torus_measure(b, wb)?, p).map_err(|e| e.to_string())?;
    serde_json::to_string(&r).map_err(|e| e.to_string())
}
