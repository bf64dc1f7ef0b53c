//! Finitely supported probability measures on a torus or sphere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::manifold::{circle_gap, wrap_unit, Isometry, Manifold, ManifoldKind, Point};

/// Minimal separation between support points.
pub const SUPPORT_TOL: f64 = 1e-10;
/// Tolerance of the generic-position predicates.
pub const PREDICATE_TOL: f64 = 1e-10;
/// Tolerance on the total mass.
pub const MASS_TOL: f64 = 1e-12;

/// Largest jitter applied by [`DiscreteMeasure::perturb_to_generic`].
pub const PERTURB_RADIUS: f64 = 1e-4;
const PERTURB_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    manifold: Manifold,
    support: Vec<Point>,
    weights: Vec<f64>,
}

/// Checks every invariant of a discrete measure.
///
/// Points must already be canonical for `manifold`.
pub fn validate_measure(manifold: &Manifold, support: &[Point], weights: &[f64]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::Validation("measure has empty support".into()));
    }
    if support.len() != weights.len() {
        return Err(Error::Validation(format!(
            "{} support points but {} weights",
            support.len(),
            weights.len()
        )));
    }
    for (i, x) in support.iter().enumerate() {
        manifold
            .check(x)
            .map_err(|e| Error::Validation(format!("support point {i}: {e}")))?;
        if manifold.is_sphere() {
            let r = x.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
            if (r - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("support point {i} is not a unit vector (norm {r})")));
            }
        } else if x.coords().iter().any(|&c| !(-0.5..0.5).contains(&c)) {
            return Err(Error::Validation(format!("support point {i} is not in the canonical box")));
        }
    }
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Validation(format!("weight {i} is negative or not finite ({w})")));
        }
        if w == 0.0 {
            return Err(Error::Validation(format!("weight {i} is zero")));
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::Validation(format!("weights sum {total}")));
    }
    let mut dups = Vec::new();
    for i in 0..support.len() {
        for k in i + 1..support.len() {
            if manifold.dist(&support[i], &support[k]) <= SUPPORT_TOL {
                dups.push((i, k));
            }
        }
    }
    if !dups.is_empty() {
        return Err(Error::Validation(format!("duplicate support points at indices {dups:?}")));
    }
    Ok(())
}

impl DiscreteMeasure {
    pub fn new(manifold: Manifold, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        validate_measure(&manifold, &support, &weights)?;
        Ok(DiscreteMeasure { manifold, support, weights })
    }

    /// Builds a measure from raw coordinates, canonicalizing each point.
    pub fn from_coords(manifold: Manifold, coords: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let support = coords
            .iter()
            .map(|c| manifold.point(c))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Validation(e.to_string()))?;
        Self::new(manifold, support, weights)
    }

    pub fn dirac(manifold: Manifold, x: Point) -> Result<Self> {
        Self::new(manifold, vec![x], vec![1.0])
    }

    /// Equal weights on the given points.
    pub fn uniform(manifold: Manifold, support: Vec<Point>) -> Result<Self> {
        let w = 1.0 / support.len().max(1) as f64;
        let weights = vec![w; support.len()];
        Self::new(manifold, support, weights)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    /// Mass of the atom at `x` (0 if `x` is not in the support), atoms matched
    /// up to `tol` in coordinates.
    pub fn mass_at(&self, x: &Point, tol: f64) -> f64 {
        self.atoms()
            .filter(|(y, _)| self.manifold.same_point(x, y, tol))
            .map(|(_, w)| w)
            .sum()
    }

    /// Image measure under an isometry: support mapped pointwise, weights kept.
    pub fn pushforward(&self, psi: &Isometry) -> Result<Self> {
        psi.check(&self.manifold)?;
        let support = self.support.iter().map(|x| psi.apply_unchecked(x)).collect();
        Ok(DiscreteMeasure { manifold: self.manifold, support, weights: self.weights.clone() })
    }

    /// One-dimensional marginal along coordinate `axis` (0-based) of a torus measure.
    ///
    /// Atoms whose coordinates agree up to [`SUPPORT_TOL`] on the circle are merged.
    pub fn marginal(&self, axis: usize) -> Result<Self> {
        if !self.manifold.is_torus() {
            return Err(invalid("marginals are defined for torus measures only"));
        }
        if axis >= self.manifold.n() {
            return Err(invalid(format!("axis {axis} out of range for T^{}", self.manifold.n())));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.support[a][axis].total_cmp(&self.support[b][axis]));

        // clusters of consecutive sorted coordinates, then glue across the wrap
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            match clusters.last_mut() {
                Some(c) if circle_gap(self.support[*c.last().unwrap()][axis], self.support[i][axis]) <= SUPPORT_TOL => {
                    c.push(i)
                }
                _ => clusters.push(vec![i]),
            }
        }
        if clusters.len() > 1 {
            let first = self.support[clusters[0][0]][axis];
            let last_cluster = clusters.last().unwrap();
            let last = self.support[*last_cluster.last().unwrap()][axis];
            if circle_gap(first, last) <= SUPPORT_TOL {
                let tail = clusters.pop().unwrap();
                clusters[0].extend(tail);
            }
        }
        let circle = Manifold::torus(1);
        let mut support = Vec::with_capacity(clusters.len());
        let mut weights = Vec::with_capacity(clusters.len());
        for c in clusters {
            let rep = *c.iter().min().unwrap();
            support.push(Point::from_canonical(vec![self.support[rep][axis]]));
            weights.push(c.iter().map(|&i| self.weights[i]).sum());
        }
        DiscreteMeasure::new(circle, support, weights)
    }

    /// Evaluates one of the generic-position predicates.
    pub fn check_position(&self, predicate: PositionPredicate) -> Result<PositionPredicateReport> {
        let m = &self.manifold;
        let k = self.len();
        let mut witnesses = Vec::new();
        match predicate {
            PositionPredicate::NoAntipodalPairs => {
                for a in 0..k {
                    let anti = m.antipode(&self.support[a]);
                    for b in a + 1..k {
                        if m.dist(&anti, &self.support[b]) <= PREDICATE_TOL {
                            witnesses.push((a, b));
                        }
                    }
                }
            }
            PositionPredicate::AvoidsAntipodalHyperplanes => {
                if !m.is_torus() {
                    return Err(invalid("antipodal hyperplanes are a torus notion"));
                }
                for a in 0..k {
                    for b in a + 1..k {
                        let hit = (0..m.n()).any(|j| {
                            let d = wrap_unit(self.support[b][j] - self.support[a][j] - 0.5);
                            d.abs() <= PREDICATE_TOL
                        });
                        if hit {
                            witnesses.push((a, b));
                        }
                    }
                }
            }
            PositionPredicate::DistinctFirstCoordinates => {
                if !m.is_torus() {
                    return Err(invalid("first coordinates are a torus notion"));
                }
                for a in 0..k {
                    for b in a + 1..k {
                        if circle_gap(self.support[a][0], self.support[b][0]) < PREDICATE_TOL {
                            witnesses.push((a, b));
                        }
                    }
                }
            }
        }
        Ok(PositionPredicateReport { predicate, holds: witnesses.is_empty(), witnesses })
    }

    /// Jitters offending support points by at most [`PERTURB_RADIUS`] until the
    /// predicate holds. Weights are unchanged; a generic input is returned as is.
    pub fn perturb_to_generic(&self, predicate: PositionPredicate, seed: u64) -> Result<Self> {
        let report = self.check_position(predicate)?;
        if report.holds {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offenders: Vec<usize> = report.witnesses.iter().map(|&(_, b)| b).collect();
        offenders.sort_unstable();
        offenders.dedup();
        for _ in 0..PERTURB_ATTEMPTS {
            let mut support = self.support.clone();
            for &i in &offenders {
                support[i] = jitter(&self.manifold, &self.support[i], PERTURB_RADIUS, &mut rng);
            }
            if validate_measure(&self.manifold, &support, &self.weights).is_err() {
                continue;
            }
            let candidate = DiscreteMeasure { manifold: self.manifold, support, weights: self.weights.clone() };
            if candidate.check_position(predicate)?.holds {
                return Ok(candidate);
            }
        }
        Err(Error::Resource(format!(
            "could not reach {predicate:?} within {PERTURB_ATTEMPTS} perturbation attempts"
        )))
    }
}

/// Random displacement of geodesic length at most `radius`.
fn jitter<R: Rng + ?Sized>(m: &Manifold, x: &Point, radius: f64, rng: &mut R) -> Point {
    let len = m.coord_len();
    let mut g: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    if m.is_sphere() {
        let a: f64 = g.iter().zip(x.coords()).map(|(u, v)| u * v).sum();
        for (gi, xi) in g.iter_mut().zip(x.coords()) {
            *gi -= a * xi;
        }
    }
    let r = g.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
    // shrink slightly so renormalization on the sphere stays within radius
    let step = 0.99 * radius * rng.random::<f64>().max(0.05);
    let coords: Vec<f64> = x.coords().iter().zip(&g).map(|(c, d)| c + step * d / r).collect();
    m.point(&coords).expect("jittered point stays finite")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PositionPredicate {
    NoAntipodalPairs,
    AvoidsAntipodalHyperplanes,
    DistinctFirstCoordinates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionPredicateReport {
    pub predicate: PositionPredicate,
    pub holds: bool,
    /// Offending pairs of 0-based support indices.
    pub witnesses: Vec<(usize, usize)>,
}

/// JSON exchange form `{"manifold": "torus"|"sphere", "n": .., "support": [[..]], "weights": [..]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    pub manifold: ManifoldKind,
    pub n: usize,
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl MeasureJson {
    /// Removes zero-weight atoms, returning how many were dropped.
    pub fn drop_zero_weights(&mut self) -> usize {
        let before = self.weights.len();
        let keep: Vec<bool> = self.weights.iter().map(|&w| w != 0.0).collect();
        let mut it = keep.iter();
        self.support.retain(|_| *it.next().unwrap());
        self.weights.retain(|&w| w != 0.0);
        before - self.weights.len()
    }

    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        let m = Manifold::new(self.manifold, self.n)?;
        if self.support.len() != self.weights.len() {
            return Err(Error::Validation(format!(
                "{} support points but {} weights",
                self.support.len(),
                self.weights.len()
            )));
        }
        DiscreteMeasure::from_coords(m, &self.support, self.weights)
    }
}

impl From<&DiscreteMeasure> for MeasureJson {
    fn from(mu: &DiscreteMeasure) -> Self {
        MeasureJson {
            manifold: mu.manifold.kind(),
            n: mu.manifold.n(),
            support: mu.support.iter().map(|p| p.coords().to_vec()).collect(),
            weights: mu.weights.clone(),
        }
    }
}

impl Serialize for DiscreteMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        MeasureJson::deserialize(d)?
            .into_measure()
            .map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}
