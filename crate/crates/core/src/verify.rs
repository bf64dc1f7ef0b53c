//! Randomized property suites and the geometric helpers they exercise.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fourier::{
    convolution_identity_check, cost_coeff_closed, cost_coeffs_quadrature, nonvanishing_scan, DEFAULT_RESOLUTION,
    ZERO_THRESHOLD,
};
use crate::manifold::{circle_gap, wrap_unit, BisectorSide, Isometry, Manifold, Point, TorusIsometry};
use crate::measure::{DiscreteMeasure, PositionPredicate};
use crate::potential::{potential_unchecked, GridLayout, PotentialOracle};
use crate::recovery::{recover_sphere_weights, recover_torus_marginals_p2, recover_torus_weights, MARGINAL_RESOLUTION};
use crate::transport::solve_transport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Suite {
    IsometryInvariance,
    PotentialInjectivity,
    Diameter,
    MarginalsP2,
    RecoveryRoundTrip,
    SegmentProjection,
    Fourier,
    CenterOfMass,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::IsometryInvariance,
        Suite::PotentialInjectivity,
        Suite::Diameter,
        Suite::MarginalsP2,
        Suite::RecoveryRoundTrip,
        Suite::SegmentProjection,
        Suite::Fourier,
        Suite::CenterOfMass,
    ];

    /// Short name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Suite::IsometryInvariance => "isometry",
            Suite::PotentialInjectivity => "injectivity",
            Suite::Diameter => "diameter",
            Suite::MarginalsP2 => "marginals",
            Suite::RecoveryRoundTrip => "recovery",
            Suite::SegmentProjection => "segment",
            Suite::Fourier => "fourier",
            Suite::CenterOfMass => "center",
        }
    }

    pub fn parse(name: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| invalid(format!("unknown suite '{name}'")))
    }

    /// Named tolerances the suite checks, with their defaults.
    pub fn default_tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            Suite::IsometryInvariance => &[("deviation", 1e-9)],
            Suite::PotentialInjectivity => &[("gap", 1e-6), ("mass", 1e-9)],
            Suite::Diameter => &[("bound", 1e-12)],
            Suite::MarginalsP2 => &[("marginal", 1e-8)],
            Suite::RecoveryRoundTrip => &[("weight", 1e-9), ("marginal", 1e-8)],
            Suite::SegmentProjection => &[("alpha", 1e-3)],
            Suite::Fourier => &[("identity", 1e-7), ("closed_form", 1e-9)],
            Suite::CenterOfMass => &[("invariance", 1e-10)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub suite: Suite,
    /// Base manifold; suites fall back to `T^2` (recovery runs on `T^2` and
    /// `S^2`) when absent.
    pub manifold: Option<Manifold>,
    pub p: f64,
    pub trials: usize,
    pub seed: u64,
    /// Overrides of the suite's named tolerances.
    pub tolerances: BTreeMap<String, f64>,
}

impl SuiteConfig {
    pub fn new(suite: Suite, seed: u64) -> Self {
        SuiteConfig { suite, manifold: None, p: 1.0, trials: 20, seed, tolerances: BTreeMap::new() }
    }

    fn tol(&self, key: &str) -> f64 {
        self.tolerances.get(key).copied().unwrap_or_else(|| {
            self.suite
                .default_tolerances()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .expect("tolerance key is declared for the suite")
        })
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be a finite real >= 1, got {}", self.p)));
        }
        for (k, v) in &self.tolerances {
            if !self.suite.default_tolerances().iter().any(|(name, _)| name == k) {
                return Err(invalid(format!("suite {} has no tolerance named '{k}'", self.suite.name())));
            }
            if !(*v > 0.0) {
                return Err(invalid(format!("tolerance '{k}' must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub trial_seed: u64,
    pub description: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub failures: Vec<Failure>,
    /// Summary statistics (worst errors, margins).
    pub metrics: BTreeMap<String, f64>,
    pub passed: bool,
}

impl SuiteReport {
    /// Plain-text table for terminals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let status = if self.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(s, "{:<12} {} ({} trials, {} failures)", self.suite.name(), status, self.trials, self.failures.len());
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "  {k:<28} {v:.6e}");
        }
        for f in self.failures.iter().take(20) {
            let _ = writeln!(
                s,
                "  seed {:<20} {}: observed {:.6e}, expected {:.6e}, tol {:.1e}",
                f.trial_seed, f.description, f.observed, f.expected, f.tolerance
            );
        }
        if self.failures.len() > 20 {
            let _ = writeln!(s, "  ... {} more", self.failures.len() - 20);
        }
        s
    }
}

/// Per-trial seed derived from the suite seed (SplitMix64 finalizer).
pub fn trial_seed(seed: u64, suite: Suite, trial: usize) -> u64 {
    let mut z = seed
        .wrapping_add((suite as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((trial as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform support, symmetric Dirichlet(1) weights, `atoms` points.
pub fn random_measure<R: Rng + ?Sized>(m: &Manifold, atoms: usize, rng: &mut R) -> DiscreteMeasure {
    loop {
        let support: Vec<Point> = (0..atoms).map(|_| m.random_point(rng)).collect();
        let raw: Vec<f64> = (0..atoms).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        if let Ok(mu) = DiscreteMeasure::new(*m, support, weights) {
            return mu;
        }
    }
}

/// Random measure with 2 to 8 atoms satisfying every position predicate that
/// applies to the manifold.
pub fn random_generic_measure<R: Rng + ?Sized>(m: &Manifold, rng: &mut R) -> Result<DiscreteMeasure> {
    let atoms = rng.random_range(2..=8);
    let mut mu = random_measure(m, atoms, rng);
    let predicates: &[PositionPredicate] = if m.is_torus() {
        &[
            PositionPredicate::NoAntipodalPairs,
            PositionPredicate::AvoidsAntipodalHyperplanes,
            PositionPredicate::DistinctFirstCoordinates,
        ]
    } else {
        &[PositionPredicate::NoAntipodalPairs]
    };
    for &pred in predicates {
        mu = mu.perturb_to_generic(pred, rng.random())?;
    }
    Ok(mu)
}

/// Unwraps each axis of a torus support into an interval of length `<= 1/2`.
/// Returns unwrapped coordinates per atom, or `None` if some axis does not fit.
fn unwrap_into_cube(mu: &DiscreteMeasure) -> Option<Vec<Vec<f64>>> {
    let n = mu.manifold().n();
    let mut out: Vec<Vec<f64>> = mu.support().iter().map(|x| x.coords().to_vec()).collect();
    for k in 0..n {
        let mut vals: Vec<f64> = mu.support().iter().map(|x| x[k]).collect();
        vals.sort_by(f64::total_cmp);
        // the largest circular gap marks where the axis is cut open
        let mut best = (vals[0] + 1.0 - vals[vals.len() - 1], 0usize);
        for i in 1..vals.len() {
            let g = vals[i] - vals[i - 1];
            if g > best.0 {
                best = (g, i);
            }
        }
        if 1.0 - best.0 > 0.5 + 1e-12 {
            return None;
        }
        let start = vals[best.1];
        for row in out.iter_mut() {
            let mut v = row[k];
            if v < start {
                v += 1.0;
            }
            row[k] = v;
        }
    }
    Some(out)
}

/// Barycentre and standard deviation of a measure confined to a coordinate cube
/// of side at most `1/2`.
pub fn center_of_mass_and_deviation(mu: &DiscreteMeasure) -> Result<(Point, f64)> {
    let m = *mu.manifold();
    if !m.is_torus() {
        return Err(invalid("centre of mass is defined for torus measures"));
    }
    let coords = unwrap_into_cube(mu).ok_or_else(|| invalid("support does not fit a coordinate cube of side 1/2"))?;
    let n = m.n();
    let mut centre = vec![0.0; n];
    for (row, w) in coords.iter().zip(mu.weights()) {
        for k in 0..n {
            centre[k] += w * row[k];
        }
    }
    let var: f64 = coords
        .iter()
        .zip(mu.weights())
        .map(|(row, w)| w * row.iter().zip(&centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok((m.point(&centre)?, var.sqrt()))
}

/// Minimizers of `α ↦ W_p(η, α δ_x + (1-α) δ_y)`: the interval from the mass
/// strictly closer to `x` to the mass weakly closer to `x`.
pub fn dirac_segment_alpha_interval(eta: &DiscreteMeasure, x: &Point, y: &Point) -> Result<(f64, f64)> {
    let m = eta.manifold();
    let (mut lo, mut hi) = (0.0, 0.0);
    for (z, w) in eta.atoms() {
        match m.bisector_side(x, y, z)? {
            BisectorSide::CloserToX => {
                lo += w;
                hi += w;
            }
            BisectorSide::Equidistant => hi += w,
            BisectorSide::CloserToY => {}
        }
    }
    Ok((lo.min(1.0), hi.min(1.0)))
}

/// `α δ_x + (1-α) δ_y`, collapsing to a Dirac at the ends.
pub fn two_point_measure(m: &Manifold, x: &Point, y: &Point, alpha: f64) -> Result<DiscreteMeasure> {
    if alpha >= 1.0 {
        DiscreteMeasure::dirac(*m, x.clone())
    } else if alpha <= 0.0 {
        DiscreteMeasure::dirac(*m, y.clone())
    } else {
        DiscreteMeasure::new(*m, vec![x.clone(), y.clone()], vec![alpha, 1.0 - alpha])
    }
}

/// Random isometry of `T^n` mapping the cube `corner + [0, 1/2]^n` onto itself.
pub fn random_cube_isometry<R: Rng + ?Sized>(corner: &[f64], rng: &mut R) -> TorusIsometry {
    let n = corner.len();
    let mut sigma: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        sigma.swap(i, rng.random_range(0..=i));
    }
    let eps: Vec<i8> = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    let u = (0..n)
        .map(|k| {
            let a = corner[k];
            let b = corner[sigma[k]];
            if eps[k] == 1 {
                a - b
            } else {
                a + b + 0.5
            }
        })
        .collect();
    TorusIsometry::new(sigma, eps, u).expect("cube isometry is well formed")
}

struct Run<'a> {
    cfg: &'a SuiteConfig,
    failures: Vec<Failure>,
    metrics: BTreeMap<String, f64>,
}

impl Run<'_> {
    fn check(&mut self, seed: u64, what: impl Into<String>, observed: f64, expected: f64, tol: f64) -> bool {
        let ok = (observed - expected).abs() <= tol;
        if !ok {
            self.fail(seed, what, observed, expected, tol);
        }
        ok
    }

    fn fail(&mut self, seed: u64, what: impl Into<String>, observed: f64, expected: f64, tol: f64) {
        self.failures.push(Failure { trial_seed: seed, description: what.into(), observed, expected, tolerance: tol });
    }

    fn error(&mut self, seed: u64, e: Error) {
        self.fail(seed, format!("error: {e}"), f64::NAN, f64::NAN, 0.0);
    }

    fn worst(&mut self, key: &str, v: f64) {
        let e = self.metrics.entry(key.to_string()).or_insert(0.0);
        *e = e.max(v);
    }

    fn least(&mut self, key: &str, v: f64) {
        let e = self.metrics.entry(key.to_string()).or_insert(f64::INFINITY);
        *e = e.min(v);
    }
}

/// Runs one suite. Deterministic for a fixed configuration.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let mut run = Run { cfg, failures: Vec::new(), metrics: BTreeMap::new() };
    for trial in 0..cfg.trials {
        let seed = trial_seed(cfg.seed, cfg.suite, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = match cfg.suite {
            Suite::IsometryInvariance => isometry_trial(&mut run, seed, &mut rng),
            Suite::PotentialInjectivity => injectivity_trial(&mut run, seed, &mut rng),
            Suite::Diameter => diameter_trial(&mut run, seed, &mut rng),
            Suite::MarginalsP2 => marginals_trial(&mut run, seed, &mut rng),
            Suite::RecoveryRoundTrip => recovery_trial(&mut run, seed, &mut rng),
            Suite::SegmentProjection => segment_trial(&mut run, seed, trial, &mut rng),
            Suite::Fourier => fourier_trial(&mut run, seed, trial, &mut rng),
            Suite::CenterOfMass => center_trial(&mut run, seed, &mut rng),
        };
        if let Err(e) = outcome {
            run.error(seed, e);
        }
    }
    let Run { failures, metrics, .. } = run;
    Ok(SuiteReport { suite: cfg.suite, trials: cfg.trials, passed: failures.is_empty(), failures, metrics })
}

fn base_manifold(cfg: &SuiteConfig) -> Manifold {
    cfg.manifold.unwrap_or(Manifold::torus(2))
}

fn isometry_trial(run: &mut Run, seed: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = base_manifold(run.cfg);
    let p = run.cfg.p;
    let mu = random_generic_measure(&m, rng)?;
    let nu = random_generic_measure(&m, rng)?;
    let psi = Isometry::random_with(&m, rng);
    let before = solve_transport(&mu, &nu, p)?.distance;
    let after = solve_transport(&mu.pushforward(&psi)?, &nu.pushforward(&psi)?, p)?.distance;
    run.worst("max_deviation", (after - before).abs());
    let tol = run.cfg.tol("deviation");
    run.check(seed, "W_p changes under push-forward", after, before, tol);
    Ok(())
}

/// Evaluation points for grid-based comparisons: a `64^n` grid where one exists,
/// otherwise 4096 random points.
fn probe_points(m: &Manifold, rng: &mut ChaCha8Rng) -> Vec<Point> {
    match GridLayout::uniform(m, 64) {
        Ok(layout) => (0..layout.node_count()).map(|i| layout.node_point(i)).collect(),
        Err(_) => (0..4096).map(|_| m.random_point(rng)).collect(),
    }
}

fn injectivity_trial(run: &mut Run, seed: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = base_manifold(run.cfg);
    let p = run.cfg.p;
    let mu = random_generic_measure(&m, rng)?;
    let mut nu = random_generic_measure(&m, rng)?;
    // keep the two measures apart and their supports jointly generic
    let joint_ok = |mu: &DiscreteMeasure, nu: &DiscreteMeasure| -> Result<bool> {
        if solve_transport(mu, nu, 1.0)?.distance < 1e-2 {
            return Ok(false);
        }
        let mut all = mu.support().to_vec();
        all.extend_from_slice(nu.support());
        let Ok(joint) = DiscreteMeasure::uniform(m, all) else {
            return Ok(false);
        };
        let preds: &[PositionPredicate] = if m.is_torus() {
            &[PositionPredicate::AvoidsAntipodalHyperplanes, PositionPredicate::DistinctFirstCoordinates]
        } else {
            &[PositionPredicate::NoAntipodalPairs]
        };
        for &pr in preds {
            if !joint.check_position(pr)?.holds {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut tries = 0;
    while !joint_ok(&mu, &nu)? {
        tries += 1;
        if tries > 100 {
            return Err(Error::Resource("could not draw a separated generic pair".into()));
        }
        nu = random_generic_measure(&m, rng)?;
    }
    let gap = probe_points(&m, rng)
        .iter()
        .map(|x| (potential_unchecked(&mu, p, x) - potential_unchecked(&nu, p, x)).abs())
        .fold(0.0, f64::max);
    run.least("min_gap", gap);
    let gap_tol = run.cfg.tol("gap");
    if gap <= gap_tol {
        run.fail(seed, "potentials agree on the grid", gap, gap_tol, gap_tol);
    }

    let t_nu = PotentialOracle::closed_form(nu.clone(), p)?;
    let mass_tol = run.cfg.tol("mass");
    if m.is_torus() && p == 2.0 && m.n() >= 2 {
        let got = recover_torus_marginals_p2(&t_nu, MARGINAL_RESOLUTION)?;
        for (j, g) in got.iter().enumerate() {
            let err = marginal_error(g, &nu.marginal(j)?);
            run.worst("max_mass_error", err);
            run.check(seed, format!("marginal {j} of T_nu differs from nu's"), err, 0.0, mass_tol);
        }
        return Ok(());
    }
    let mut sites = mu.support().to_vec();
    sites.extend_from_slice(nu.support());
    let rec = if m.is_torus() { recover_torus_weights(&t_nu, &sites)? } else { recover_sphere_weights(&t_nu, &sites)? };
    for (x, got) in sites.iter().zip(&rec.masses) {
        let want = nu.mass_at(x, 1e-10);
        run.worst("max_mass_error", (got - want).abs());
        run.check(seed, "recovered mass of T_nu", *got, want, mass_tol);
    }
    Ok(())
}

fn diameter_trial(run: &mut Run, seed: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = base_manifold(run.cfg);
    let p = run.cfg.p;
    let bound = m.diameter();
    let x = m.random_point(rng);
    let a = DiscreteMeasure::dirac(m, x.clone())?;
    let b = DiscreteMeasure::dirac(m, m.antipode(&x))?;
    let d = solve_transport(&a, &b, p)?.distance;
    run.worst("antipodal_error", (d - bound).abs());
    let tol = run.cfg.tol("bound");
    run.check(seed, "antipodal Diracs miss the diameter", d, bound, tol);

    let mu = random_generic_measure(&m, rng)?;
    let mut probes: Vec<Point> = (0..2048).map(|_| m.random_point(rng)).collect();
    probes.extend(mu.support().iter().map(|y| m.antipode(y)));
    let sup = probes.iter().map(|z| potential_unchecked(&mu, p, z)).fold(0.0, f64::max).powf(1.0 / p);
    run.least("margin", bound - sup);
    if sup >= bound - tol {
        run.fail(seed, "non-Dirac measure reaches the diameter", sup, bound, tol);
    }
    Ok(())
}

/// Largest position/weight discrepancy between two measures on `T^1`
/// (infinite when the atom counts differ).
fn marginal_error(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let sorted = |m: &DiscreteMeasure| {
        let mut v: Vec<(f64, f64)> = m.atoms().map(|(x, w)| (x[0], w)).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    sorted(a)
        .iter()
        .zip(sorted(b))
        .map(|(p, q)| circle_gap(p.0, q.0).max((p.1 - q.1).abs()))
        .fold(0.0, f64::max)
}

fn marginals_trial(run: &mut Run, seed: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = base_manifold(run.cfg);
    if !m.is_torus() {
        return Err(invalid("the marginal suite runs on the torus"));
    }
    let mu = random_generic_measure(&m, rng)?;
    let got = recover_torus_marginals_p2(&PotentialOracle::closed_form(mu.clone(), 2.0)?, MARGINAL_RESOLUTION)?;
    let tol = run.cfg.tol("marginal");
    for (j, g) in got.iter().enumerate() {
        let err = marginal_error(g, &mu.marginal(j)?);
        run.worst("max_error", err);
        run.check(seed, format!("marginal {j}"), err, 0.0, tol);
    }
    Ok(())
}

fn recovery_trial(run: &mut Run, seed: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let manifolds = match run.cfg.manifold {
        Some(m) => vec![m],
        None => vec![Manifold::torus(2), Manifold::sphere(2)],
    };
    let (wtol, mtol) = (run.cfg.tol("weight"), run.cfg.tol("marginal"));
    for m in manifolds {
        for p in [1.0, 1.5, 2.0, 2.5] {
            let mu = random_generic_measure(&m, rng)?;
            let t = PotentialOracle::closed_form(mu.clone(), p)?;
            if m.is_torus() && p == 2.0 && m.n() >= 2 {
                for (j, g) in recover_torus_marginals_p2(&t, MARGINAL_RESOLUTION)?.iter().enumerate() {
                    let err = marginal_error(g, &mu.marginal(j)?);
                    run.worst("max_marginal_error", err);
                    run.check(seed, format!("{m:?} p=2 marginal {j}"), err, 0.0, mtol);
                }
                continue;
            }
            let rec = if m.is_torus() {
                recover_torus_weights(&t, mu.support())?
            } else {
                recover_sphere_weights(&t, mu.support())?
            };
            for (got, want) in rec.masses.iter().zip(mu.weights()) {
                run.worst("max_weight_error", (got - want).abs());
                run.check(seed, format!("{m:?} p={p} weight"), *got, *want, wtol);
            }
        }
    }
    Ok(())
}

fn segment_trial(run: &mut Run, seed: u64, trial: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let m = base_manifold(run.cfg);
    let x = m.random_point(rng);
    let mut y = m.random_point(rng);
    while m.dist(&x, &y) < 1e-3 {
        y = m.random_point(rng);
    }
    let mut eta = random_generic_measure(&m, rng)?;
    // every other trial puts an atom on the bisector
    if trial % 2 == 1 {
        let mid = if m.is_torus() {
            let c: Vec<f64> = x.coords().iter().zip(y.coords()).map(|(a, b)| a + wrap_unit(b - a) / 2.0).collect();
            m.point(&c)?
        } else {
            let c: Vec<f64> = x.coords().iter().zip(y.coords()).map(|(a, b)| a + b).collect();
            m.point(&c).unwrap_or_else(|_| m.random_point(rng))
        };
        if m.bisector_side(&x, &y, &mid)? == BisectorSide::Equidistant {
            let mut support = eta.support().to_vec();
            let mut weights: Vec<f64> = eta.weights().iter().map(|w| w * 0.6).collect();
            support.push(mid);
            weights.push(0.4);
            if let Ok(e) = DiscreteMeasure::new(m, support, weights) {
                eta = e;
            }
        }
    }
    let (lo, hi) = dirac_segment_alpha_interval(&eta, &x, &y)?;
    let costs = (0..=1000)
        .map(|i| {
            let a = i as f64 / 1000.0;
            Ok((a, solve_transport(&eta, &two_point_measure(&m, &x, &y, a)?, 2.0)?.cost))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let minimizers: Vec<f64> = costs.iter().filter(|c| c.1 <= best + 1e-12).map(|c| c.0).collect();
    let (glo, ghi) = (minimizers[0], minimizers[minimizers.len() - 1]);
    let tol = run.cfg.tol("alpha");
    run.worst("max_endpoint_error", (glo - lo).abs().max((ghi - hi).abs()));
    run.check(seed, "lower endpoint vs grid search", lo, glo, tol);
    run.check(seed, "upper endpoint vs grid search", hi, ghi, tol);
    Ok(())
}

fn fourier_trial(run: &mut Run, seed: u64, trial: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let p = run.cfg.p;
    let circle = Manifold::torus(1);
    let mu = random_measure(&circle, rng.random_range(1..=5), rng);
    let err = convolution_identity_check(&mu, p, 16, 1 << 12)?;
    run.worst("max_identity_error", err);
    let tol = run.cfg.tol("identity");
    run.check(seed, "convolution identity", err, 0.0, tol);
    if trial > 0 {
        return Ok(());
    }
    // spectrum checks once per run
    let scan = nonvanishing_scan(p, 64, ZERO_THRESHOLD)?;
    let expected: Vec<i64> = if p == 1.0 { (-64..=64).filter(|j| j % 2 == 0 && *j != 0).collect() } else { Vec::new() };
    if scan.zeros != expected {
        run.fail(seed, format!("zero set {:?}", scan.zeros), scan.zeros.len() as f64, expected.len() as f64, 0.0);
    }
    if p == 1.0 || p == 2.0 {
        let ctol = run.cfg.tol("closed_form");
        let q = cost_coeffs_quadrature(p, 64, DEFAULT_RESOLUTION)?;
        for (j, v) in q.iter().enumerate() {
            let exact = cost_coeff_closed(p, &[j as i64])?;
            run.worst("max_closed_form_error", (v - exact).abs());
            run.check(seed, format!("coefficient {j}"), *v, exact, ctol);
        }
    }
    Ok(())
}

/// Measure inside the cube `corner + [0, 1/2]^n`, with the corner.
pub fn random_cube_measure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(DiscreteMeasure, Vec<f64>)> {
    let m = Manifold::torus(n);
    let corner: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let atoms = rng.random_range(1..=6);
    let coords: Vec<Vec<f64>> =
        (0..atoms).map(|_| corner.iter().map(|c| c + 0.5 * rng.random_range(0.01..0.99)).collect()).collect();
    let raw: Vec<f64> = (0..atoms).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let mu = DiscreteMeasure::from_coords(m, &coords, raw.iter().map(|w| w / total).collect())?;
    Ok((mu, corner))
}

fn center_trial(run: &mut Run, seed: u64, rng: &mut ChaCha8Rng) -> Result<()> {
    let n = match run.cfg.manifold {
        Some(m) if m.is_torus() => m.n(),
        Some(_) => return Err(invalid("the centre-of-mass suite runs on the torus")),
        None => 2,
    };
    let m = Manifold::torus(n);
    let (mu, corner) = random_cube_measure(n, rng)?;
    let (centre, sigma) = center_of_mass_and_deviation(&mu)?;

    // grid search of z ↦ W_2(δ_z, μ)² over the cube
    let cells = 64usize;
    let step = 0.5 / cells as f64;
    let mut best = (f64::INFINITY, Vec::new());
    for flat in 0..cells.pow(n as u32) {
        let mut rest = flat;
        let z: Vec<f64> = (0..n)
            .map(|k| {
                let i = rest % cells;
                rest /= cells;
                corner[k] + (i as f64 + 0.5) * step
            })
            .collect();
        let v = potential_unchecked(&mu, 2.0, &m.point(&z)?);
        if v < best.0 {
            best = (v, z);
        }
    }
    let off = best.1.iter().zip(centre.coords()).map(|(a, b)| circle_gap(*a, *b)).fold(0.0, f64::max);
    run.worst("max_grid_offset_cells", off / step);
    if off > step {
        run.fail(seed, "grid minimizer further than one cell from the barycentre", off, 0.0, step);
    }

    let psi = Isometry::Torus(random_cube_isometry(&corner, rng));
    let pushed = mu.pushforward(&psi)?;
    let (c2, s2) = center_of_mass_and_deviation(&pushed)?;
    let moved = psi.apply(&m, &centre)?;
    let tol = run.cfg.tol("invariance");
    let dc = m.dist(&c2, &moved);
    run.worst("max_centre_error", dc);
    run.worst("max_deviation_error", (s2 - sigma).abs());
    run.check(seed, "centre of the push-forward", dc, 0.0, tol);
    run.check(seed, "deviation of the push-forward", s2, sigma, tol);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_examples() {
        let t = Manifold::torus(2);
        let x = t.point(&[0.45, -0.2]).unwrap();
        let (c, s) = center_of_mass_and_deviation(&DiscreteMeasure::dirac(t, x.clone()).unwrap()).unwrap();
        assert!(t.dist(&c, &x) < 1e-15 && s == 0.0);
        // straddles the wrap on the first axis
        let mu = DiscreteMeasure::from_coords(t, &[vec![0.45, 0.0], vec![-0.35, 0.2]], vec![0.5, 0.5]).unwrap();
        let (c, s) = center_of_mass_and_deviation(&mu).unwrap();
        assert!(t.dist(&c, &t.point(&[-0.45, 0.1]).unwrap()) < 1e-12, "{c:?}");
        let half = t.dist(&mu.support()[0], &mu.support()[1]) / 2.0;
        assert!((s - half).abs() < 1e-12);
        let spread =
            DiscreteMeasure::from_coords(t, &[vec![0.0, 0.0], vec![0.3, 0.0], vec![-0.3, 0.0]], vec![0.3, 0.3, 0.4]).unwrap();
        assert!(center_of_mass_and_deviation(&spread).is_err());
    }

    #[test]
    fn alpha_interval_examples() {
        let t = Manifold::torus(1);
        let x = t.point(&[0.0]).unwrap();
        let y = t.point(&[0.2]).unwrap();
        let near_x = DiscreteMeasure::from_coords(t, &[vec![-0.05]], vec![1.0]).unwrap();
        assert_eq!(dirac_segment_alpha_interval(&near_x, &x, &y).unwrap(), (1.0, 1.0));
        let split = DiscreteMeasure::from_coords(t, &[vec![-0.05], vec![0.25]], vec![0.5, 0.5]).unwrap();
        assert_eq!(dirac_segment_alpha_interval(&split, &x, &y).unwrap(), (0.5, 0.5));
        let tie = DiscreteMeasure::from_coords(t, &[vec![0.1], vec![-0.4]], vec![0.5, 0.5]).unwrap();
        assert_eq!(dirac_segment_alpha_interval(&tie, &x, &y).unwrap(), (0.0, 1.0));
        assert!(dirac_segment_alpha_interval(&tie, &x, &x).is_err());
    }

    #[test]
    fn cube_isometries_fix_the_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let corner: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let psi = random_cube_isometry(&corner, &mut rng);
            let t = Manifold::torus(3);
            let inside: Vec<f64> = corner.iter().map(|c| c + 0.5 * rng.random::<f64>()).collect();
            let img = Isometry::Torus(psi).apply(&t, &t.point(&inside).unwrap()).unwrap();
            for k in 0..3 {
                assert!(wrap_unit(img[k] - corner[k]).rem_euclid(1.0) <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn suites_are_deterministic_and_pass() {
        for suite in Suite::ALL {
            let mut cfg = SuiteConfig::new(suite, 7);
            cfg.trials = 3;
            if suite == Suite::MarginalsP2 {
                cfg.p = 2.0;
            }
            let a = run_suite(&cfg).unwrap();
            let b = run_suite(&cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.passed, "{}", a.to_text());
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SuiteConfig::new(Suite::Diameter, 1);
        cfg.trials = 0;
        assert!(run_suite(&cfg).is_err());
        cfg.trials = 1;
        cfg.tolerances.insert("nonsense".into(), 1.0);
        assert!(run_suite(&cfg).is_err());
        assert!(Suite::parse("bogus").is_err());
        assert_eq!(Suite::parse("segment").unwrap(), Suite::SegmentProjection);
    }
}
