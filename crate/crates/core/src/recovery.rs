//! Reading a measure back off its potential.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::limits::{
    circle_limit_analytic, sampled_kink_limit, sphere_limit_analytic, torus_limit_analytic, Singularity,
};
use crate::manifold::{wrap_unit, Manifold, Point};
use crate::measure::{DiscreteMeasure, PositionPredicate};
use crate::potential::{GridLayout, PotentialOracle};

/// Default number of scan points per axis for closed-form marginal recovery.
pub const MARGINAL_RESOLUTION: usize = 1 << 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RecoveryMethod {
    TorusP1,
    TorusPGeneral,
    TorusP2Marginals,
    SphereP1,
    SpherePGeneral,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub sites: Vec<Point>,
    pub masses: Vec<f64>,
    pub method: RecoveryMethod,
    /// `|1 - Σ masses|` plus any negative mass clipped to zero.
    pub residual: f64,
}

impl RecoveryResult {
    fn assemble(sites: &[Point], raw: Vec<f64>, method: RecoveryMethod) -> Self {
        let clipped: f64 = raw.iter().filter(|&&m| m < 0.0).map(|m| -m).sum();
        let masses: Vec<f64> = raw.into_iter().map(|m| m.max(0.0)).collect();
        let total: f64 = masses.iter().sum();
        RecoveryResult { sites: sites.to_vec(), masses, method, residual: (1.0 - total).abs() + clipped }
    }
}

fn check_sites(m: &Manifold, sites: &[Point], predicate: PositionPredicate) -> Result<()> {
    if sites.is_empty() {
        return Err(invalid("no candidate sites given"));
    }
    for x in sites {
        m.check(x)?;
    }
    let probe = DiscreteMeasure::uniform(*m, sites.to_vec())
        .map_err(|e| Error::Precondition(format!("candidate sites are not distinct points: {e}")))?;
    let report = probe.check_position(predicate)?;
    if report.holds {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "candidate sites violate {predicate:?}; offending index pairs {:?}",
            report.witnesses
        )))
    }
}

fn shifted(x: &Point, axis: usize, step: f64) -> Point {
    let mut c = x.coords().to_vec();
    c[axis] = wrap_unit(c[axis] + step);
    Point::from_canonical(c)
}

/// Weights of a torus measure at the candidate sites.
///
/// `p = 1` reads the atom term at each site, `p ∉ {1, 2}` the hyperplane term
/// half a period away along the first axis. On `T^1` the antipodal point is used
/// for every `p`.
pub fn recover_torus_weights(t: &PotentialOracle, sites: &[Point]) -> Result<RecoveryResult> {
    let m = *t.manifold();
    if !m.is_torus() {
        return Err(invalid("recover_torus_weights needs a torus potential"));
    }
    let p = t.p();
    if m.n() == 1 {
        check_sites(&m, sites, PositionPredicate::NoAntipodalPairs)?;
        let masses = sites
            .iter()
            .map(|x| {
                let at = m.antipode(x);
                let lim = match t {
                    PotentialOracle::ClosedForm { measure, .. } => circle_limit_analytic(measure, p, &at)?,
                    PotentialOracle::Sampled(g) => sampled_kink_limit(g, &at, 0, Singularity::Planar)?,
                };
                Ok(if p == 1.0 { -lim / 2.0 } else { lim / (-2.0 * p * 0.5f64.powf(p - 1.0)) })
            })
            .collect::<Result<Vec<_>>>()?;
        let method = if p == 1.0 { RecoveryMethod::SphereP1 } else { RecoveryMethod::SpherePGeneral };
        return Ok(RecoveryResult::assemble(sites, masses, method));
    }
    if p == 2.0 {
        return Err(Error::Precondition(
            "for p = 2 the potential only determines the one-dimensional marginals".into(),
        ));
    }
    let (predicate, method) = if p == 1.0 {
        (PositionPredicate::AvoidsAntipodalHyperplanes, RecoveryMethod::TorusP1)
    } else {
        (PositionPredicate::DistinctFirstCoordinates, RecoveryMethod::TorusPGeneral)
    };
    check_sites(&m, sites, predicate)?;
    let constant = if p == 1.0 { 2.0 } else { -p * 4f64.powf((2.0 - p) / 2.0) };
    let masses = sites
        .iter()
        .map(|x| {
            let (at, shape) = if p == 1.0 {
                (x.clone(), Singularity::Conical)
            } else {
                (shifted(x, 0, 0.5), Singularity::Planar)
            };
            let lim = match t {
                PotentialOracle::ClosedForm { measure, .. } => torus_limit_analytic(measure, p, &at, 0)?,
                PotentialOracle::Sampled(g) => sampled_kink_limit(g, &at, 0, shape)?,
            };
            Ok(lim / constant)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryResult::assemble(sites, masses, method))
}

/// Weights of a sphere measure at the candidate sites, read at their antipodes.
pub fn recover_sphere_weights(t: &PotentialOracle, sites: &[Point]) -> Result<RecoveryResult> {
    let m = *t.manifold();
    if !m.is_sphere() {
        return Err(invalid("recover_sphere_weights needs a sphere potential"));
    }
    check_sites(&m, sites, PositionPredicate::NoAntipodalPairs)?;
    let p = t.p();
    let masses = sites
        .iter()
        .map(|x| {
            let at = m.antipode(x);
            let lim = match t {
                PotentialOracle::ClosedForm { measure, .. } => sphere_limit_analytic(measure, p, &at)?,
                PotentialOracle::Sampled(g) => sampled_kink_limit(g, &at, 0, Singularity::Conical)?,
            };
            Ok(if p == 1.0 { -lim / 2.0 } else { lim / (-2.0 * p * PI.powf(p - 1.0)) })
        })
        .collect::<Result<Vec<_>>>()?;
    let method = if p == 1.0 { RecoveryMethod::SphereP1 } else { RecoveryMethod::SpherePGeneral };
    Ok(RecoveryResult::assemble(sites, masses, method))
}

/// The one-dimensional marginals of a torus measure from its `p = 2` potential.
///
/// Along a line in direction `j`, `g(t) - t²` is concave and piecewise linear
/// with a slope drop of `2μ(H)` where `t` crosses the hyperplane antipodal to an
/// atom's `j`-th coordinate. Kinks are flagged by second differences on a scan
/// grid and located by intersecting the linear pieces on either side.
/// Closed-form oracles are scanned at `resolution` points per axis; sampled
/// oracles use their own nodes.
pub fn recover_torus_marginals_p2(t: &PotentialOracle, resolution: usize) -> Result<Vec<DiscreteMeasure>> {
    let m = *t.manifold();
    if !m.is_torus() {
        return Err(invalid("marginal recovery needs a torus potential"));
    }
    if t.p() != 2.0 {
        return Err(Error::Precondition(format!("marginal recovery needs p = 2, got {}", t.p())));
    }
    let mut out = Vec::with_capacity(m.n());
    for j in 0..m.n() {
        let kinks = match t {
            PotentialOracle::ClosedForm { .. } => {
                if resolution < 16 {
                    return Err(invalid("marginal scan resolution must be at least 16"));
                }
                let line = |s: f64| {
                    let mut c = vec![0.0; m.n()];
                    c[j] = wrap_unit(s);
                    t.eval(&Point::from_canonical(c))
                };
                // offset by an irrational fraction of a cell so atoms on dyadic
                // coordinates do not sit on scan nodes
                let h = 1.0 / resolution as f64;
                let t0 = -0.5 + 0.381_966_011_250_105_2 * h;
                let nodes: Vec<f64> = (0..resolution).map(|i| line(t0 + i as f64 * h)).collect();
                scan_kinks(&nodes, t0, h, Some(&line))
            }
            PotentialOracle::Sampled(g) => {
                let GridLayout::Torus { shape } = g.layout() else {
                    return Err(invalid("sampled torus potential has a non-torus layout"));
                };
                let len = shape[j];
                let stride: usize = shape[j + 1..].iter().product();
                let nodes: Vec<f64> = (0..len).map(|i| g.values()[i * stride]).collect();
                scan_kinks(&nodes, -0.5, 1.0 / len as f64, None)
            }
        };
        out.push(kinks_to_marginal(kinks)?);
    }
    Ok(out)
}

fn kinks_to_marginal(kinks: Vec<(f64, f64)>) -> Result<DiscreteMeasure> {
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (pos, mass) in kinks {
        let y = wrap_unit(pos - 0.5);
        match atoms.iter_mut().find(|(a, _)| crate::manifold::circle_gap(*a, y) <= 1e-10) {
            Some(a) => a.1 += mass,
            None => atoms.push((y, mass)),
        }
    }
    atoms.retain(|&(_, w)| w > 1e-12);
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if atoms.is_empty() || (total - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("recovered marginal carries mass {total}, expected 1")));
    }
    let coords: Vec<Vec<f64>> = atoms.iter().map(|a| vec![a.0]).collect();
    let weights = atoms.iter().map(|a| a.1 / total).collect();
    DiscreteMeasure::from_coords(Manifold::torus(1), &coords, weights)
}

/// Returns `(position, mass)` of every slope drop of `r(t) = g(t) - t²`, with
/// `g` sampled as `nodes[i] = g(t0 + i h)` over one period.
fn scan_kinks(nodes: &[f64], t0: f64, h: f64, refine: Option<&dyn Fn(f64) -> f64>) -> Vec<(f64, f64)> {
    let n = nodes.len();
    let scale = nodes.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * scale;
    let g = |i: i64| nodes[i.rem_euclid(n as i64) as usize];
    let second = |i: i64| g(i + 1) - 2.0 * g(i) + g(i - 1) - 2.0 * h * h;
    let flagged: Vec<bool> = (0..n as i64).map(|i| second(i).abs() > tol).collect();
    let Some(start) = (0..n).find(|&i| !flagged[i]) else {
        return Vec::new();
    };
    // r at an unwrapped node index
    let r = |i: i64| {
        let t = t0 + i as f64 * h;
        g(i) - t * t
    };
    let mut kinks = Vec::new();
    let mut i = start as i64 + 1;
    let end = start as i64 + n as i64;
    while i < end {
        if !flagged[i.rem_euclid(n as i64) as usize] {
            i += 1;
            continue;
        }
        let a = i;
        while flagged[i.rem_euclid(n as i64) as usize] {
            i += 1;
        }
        let b = i - 1;
        // kinks lie in (t_{a-1}, t_{b+1}); nodes a-2..a-1 and b+1..b+2 are clean
        let left = (t0 + (a - 1) as f64 * h, r(a - 1), (r(a - 1) - r(a - 2)) / h);
        let right = (t0 + (b + 1) as f64 * h, r(b + 1), (r(b + 2) - r(b + 1)) / h);
        match refine {
            Some(f) => refine_bracket(f, left, right, &mut kinks, 0),
            None => {
                if let Some(k) = intersect(left, right) {
                    kinks.push(k);
                }
            }
        }
    }
    kinks
}

type Line = (f64, f64, f64);

fn intersect(left: Line, right: Line) -> Option<(f64, f64)> {
    let (ta, ra, sl) = left;
    let (tb, rb, sr) = right;
    let drop = sl - sr;
    if drop <= 0.0 {
        return None;
    }
    let t = (rb - ra + sl * ta - sr * tb) / drop;
    Some((t.clamp(ta, tb), drop / 2.0))
}

/// Resolves the kinks of a concave piecewise-linear `r = g - t²` inside a
/// bracket. The supporting lines at both ends meet on the graph exactly when the
/// bracket holds a single kink; otherwise the bracket is rescanned on a finer
/// grid and each flagged cluster is resolved in turn.
fn refine_bracket(g: &dyn Fn(f64) -> f64, left: Line, right: Line, out: &mut Vec<(f64, f64)>, depth: usize) {
    const SUB: usize = 16;
    let r = |t: f64| g(t) - t * t;
    let Some((t, mass)) = intersect(left, right) else {
        return;
    };
    if mass <= 1e-13 {
        return;
    }
    let (a, b) = (left.0, right.0);
    let line_val = left.1 + left.2 * (t - a);
    if (r(t) - line_val).abs() <= 1e-14 || depth > 40 || b - a < 1e-12 {
        out.push((t, mass));
        return;
    }
    let h = (b - a) / SUB as f64;
    // r at nodes -1..=SUB+1, the outer two on the known lines
    let mut v = Vec::with_capacity(SUB + 3);
    v.push(left.1 - left.2 * h);
    v.extend((0..=SUB).map(|i| r(a + i as f64 * h)));
    v.push(right.1 + right.2 * h);
    let at = |i: i64| v[(i + 1) as usize];
    let flagged: Vec<bool> = (0..=SUB as i64).map(|i| (at(i + 1) - 2.0 * at(i) + at(i - 1)).abs() > 1e-14).collect();
    let mut i = 0usize;
    let mut found = false;
    while i <= SUB {
        if !flagged[i] {
            i += 1;
            continue;
        }
        let lo = i;
        while i <= SUB && flagged[i] {
            i += 1;
        }
        let hi = i - 1;
        found = true;
        let sub_left = if lo == 0 {
            left
        } else {
            let k = lo as i64 - 1;
            (a + k as f64 * h, at(k), (at(k) - at(k - 1)) / h)
        };
        let sub_right = if hi == SUB {
            right
        } else {
            let k = hi as i64 + 1;
            (a + k as f64 * h, at(k), (at(k + 1) - at(k)) / h)
        };
        refine_bracket(g, sub_left, sub_right, out, depth + 1);
    }
    if !found {
        out.push((t, mass));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::SampledPotential;

    fn torus_mu() -> DiscreteMeasure {
        DiscreteMeasure::from_coords(Manifold::torus(2), &[vec![0.0, 0.0], vec![0.2, 0.1]], vec![0.3, 0.7]).unwrap()
    }

    #[test]
    fn closed_form_torus_round_trip() {
        let mu = torus_mu();
        for p in [1.0, 1.5, 2.5] {
            let t = PotentialOracle::closed_form(mu.clone(), p).unwrap();
            let res = recover_torus_weights(&t, mu.support()).unwrap();
            assert!((res.masses[0] - 0.3).abs() < 1e-9 && (res.masses[1] - 0.7).abs() < 1e-9, "{res:?}");
            assert!(res.residual < 1e-9);
        }
        let t = PotentialOracle::closed_form(mu.clone(), 2.0).unwrap();
        assert!(matches!(recover_torus_weights(&t, mu.support()), Err(Error::Precondition(_))));
    }

    #[test]
    fn predicate_violation_is_reported() {
        let mu = DiscreteMeasure::from_coords(Manifold::torus(2), &[vec![0.1, 0.0], vec![0.1, 0.3]], vec![0.5, 0.5]).unwrap();
        let t = PotentialOracle::closed_form(mu.clone(), 1.5).unwrap();
        match recover_torus_weights(&t, mu.support()) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("(0, 1)"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sampled_torus_round_trip() {
        let mu = torus_mu();
        let m = *mu.manifold();
        for p in [1.0, 1.5, 2.5] {
            let grid = SampledPotential::from_measure(&mu, p, GridLayout::uniform(&m, 256).unwrap()).unwrap();
            let res = recover_torus_weights(&PotentialOracle::Sampled(grid), mu.support()).unwrap();
            assert!((res.masses[0] - 0.3).abs() < 1e-3 && (res.masses[1] - 0.7).abs() < 1e-3, "p={p}: {res:?}");
        }
    }

    #[test]
    fn sphere_round_trip() {
        let s = Manifold::sphere(2);
        let mu = DiscreteMeasure::from_coords(s, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.4, 0.6]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let t = PotentialOracle::closed_form(mu.clone(), p).unwrap();
            let res = recover_sphere_weights(&t, mu.support()).unwrap();
            assert!((res.masses[0] - 0.4).abs() < 1e-9 && (res.masses[1] - 0.6).abs() < 1e-9);
        }
        let x = s.point(&[0.2, 0.3, 0.9]).unwrap();
        let dirac = PotentialOracle::closed_form(DiscreteMeasure::dirac(s, x.clone()).unwrap(), 3.0).unwrap();
        assert!((recover_sphere_weights(&dirac, &[x]).unwrap().masses[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn circle_round_trip_all_p() {
        let c = Manifold::torus(1);
        let mu = DiscreteMeasure::from_coords(c, &[vec![0.1], vec![-0.27], vec![0.33]], vec![0.2, 0.5, 0.3]).unwrap();
        for p in [1.0, 1.5, 2.0, 2.5] {
            let t = PotentialOracle::closed_form(mu.clone(), p).unwrap();
            let res = recover_torus_weights(&t, mu.support()).unwrap();
            for (a, b) in res.masses.iter().zip(mu.weights()) {
                assert!((a - b).abs() < 1e-9);
            }
            let grid = SampledPotential::from_measure(&mu, p, GridLayout::uniform(&c, 512).unwrap()).unwrap();
            let res = recover_torus_weights(&PotentialOracle::Sampled(grid), mu.support()).unwrap();
            for (a, b) in res.masses.iter().zip(mu.weights()) {
                assert!((a - b).abs() < 1e-3, "p={p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn marginals_closed_and_sampled() {
        let m = Manifold::torus(2);
        let mu = DiscreteMeasure::from_coords(m, &[vec![0.0, 0.0], vec![0.25, 0.1]], vec![0.5, 0.5]).unwrap();
        let t = PotentialOracle::closed_form(mu.clone(), 2.0).unwrap();
        let got = recover_torus_marginals_p2(&t, MARGINAL_RESOLUTION).unwrap();
        let want = mu.marginal(0).unwrap();
        assert_eq!(got[0].len(), 2);
        for (i, (x, w)) in want.atoms().enumerate() {
            assert!(Manifold::torus(1).dist(x, &got[0].support()[i]) < 1e-8);
            assert!((w - got[0].weights()[i]).abs() < 1e-8);
        }
        let grid = SampledPotential::from_measure(&mu, 2.0, GridLayout::uniform(&m, 128).unwrap()).unwrap();
        let got = recover_torus_marginals_p2(&PotentialOracle::Sampled(grid), 0).unwrap();
        assert_eq!(got[1].len(), 2);
        assert!((got[1].weights()[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn close_marginal_atoms_are_separated() {
        let m = Manifold::torus(2);
        let mu = DiscreteMeasure::from_coords(m, &[vec![0.1, 0.0], vec![0.1 + 3e-5, 0.3], vec![-0.3, 0.2]], vec![0.2, 0.3, 0.5])
            .unwrap();
        let t = PotentialOracle::closed_form(mu.clone(), 2.0).unwrap();
        let got = recover_torus_marginals_p2(&t, MARGINAL_RESOLUTION).unwrap();
        let want = mu.marginal(0).unwrap();
        assert_eq!(got[0].len(), 3, "{:?}", got[0]);
        let mut w: Vec<(f64, f64)> = want.atoms().map(|(x, w)| (x[0], w)).collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0));
        for ((x, wt), (gx, gw)) in w.iter().zip(got[0].atoms()) {
            assert!((x - gx[0]).abs() < 1e-8 && (wt - gw).abs() < 1e-8, "{x} {wt} vs {gx:?} {gw}");
        }
    }
}
