//! Geometry of the flat torus `T^n = R^n / Z^n` and the round sphere `S^n`.
//!
//! Torus points are stored in the canonical box `[-1/2, 1/2)^n`; sphere points
//! are unit vectors of `R^{n+1}`. Every constructor normalizes its input, so two
//! points are equal when their coordinates agree to [`POINT_TOL`].

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coordinate tolerance for point equality.
pub const POINT_TOL: f64 = 1e-12;

/// Absolute tolerance used to declare a point equidistant from two others.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Torus,
    Sphere,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::Torus => f.write_str("torus"),
            ManifoldKind::Sphere => f.write_str("sphere"),
        }
    }
}

/// A manifold together with its intrinsic dimension `n >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Manifold {
    kind: ManifoldKind,
    n: usize,
}

/// A point of a [`Manifold`], already in canonical form.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub(crate) fn from_canonical(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Result of comparing a point against the bisector of two others.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BisectorSide {
    CloserToX,
    Equidistant,
    CloserToY,
}

/// Reduces a real number to the canonical circle representative in `[-1/2, 1/2)`.
pub fn wrap_unit(t: f64) -> f64 {
    let mut v = t - (t + 0.5).floor();
    if v >= 0.5 {
        v -= 1.0;
    }
    if v < -0.5 {
        v += 1.0;
    }
    if v == 0.0 {
        // fold -0.0
        0.0
    } else {
        v
    }
}

/// Length of the shorter arc between two points of the unit-circumference circle.
pub fn circle_gap(a: f64, b: f64) -> f64 {
    wrap_unit(a - b).abs()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two unit vectors, `2 atan2(|x - y|, |x + y|)`.
///
/// Agrees with `arccos <x, y>` but keeps full precision near `0` and `pi`.
pub fn unit_angle(x: &[f64], y: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut sum = 0.0;
    for (a, b) in x.iter().zip(y) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

impl Manifold {
    pub fn new(kind: ManifoldKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("manifold dimension must be at least 1"));
        }
        Ok(Manifold { kind, n })
    }

    /// # Panics
    /// If `n == 0`.
    pub fn torus(n: usize) -> Self {
        Self::new(ManifoldKind::Torus, n).expect("torus dimension must be at least 1")
    }

    /// # Panics
    /// If `n == 0`.
    pub fn sphere(n: usize) -> Self {
        Self::new(ManifoldKind::Sphere, n).expect("sphere dimension must be at least 1")
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_torus(&self) -> bool {
        self.kind == ManifoldKind::Torus
    }

    pub fn is_sphere(&self) -> bool {
        self.kind == ManifoldKind::Sphere
    }

    /// Number of coordinates of a point: `n` on the torus, `n + 1` on the sphere.
    pub fn coord_len(&self) -> usize {
        match self.kind {
            ManifoldKind::Torus => self.n,
            ManifoldKind::Sphere => self.n + 1,
        }
    }

    /// Largest possible distance: `sqrt(n)/2` on the torus, `pi` on the sphere.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            ManifoldKind::Torus => (self.n as f64).sqrt() / 2.0,
            ManifoldKind::Sphere => PI,
        }
    }

    /// Builds a canonical point: torus coordinates are reduced mod 1, sphere
    /// vectors are renormalized.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.coord_len() {
            return Err(invalid(format!(
                "{} of dimension {} expects {} coordinates, got {}",
                self.kind,
                self.n,
                self.coord_len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        match self.kind {
            ManifoldKind::Torus => Ok(Point(coords.iter().map(|&c| wrap_unit(c)).collect())),
            ManifoldKind::Sphere => {
                let r = norm(coords);
                if r < 1e-300 {
                    return Err(invalid("sphere point must be a nonzero vector"));
                }
                Ok(Point(coords.iter().map(|c| c / r).collect()))
            }
        }
    }

    pub(crate) fn check(&self, x: &Point) -> Result<()> {
        if x.len() != self.coord_len() {
            return Err(invalid(format!(
                "point has {} coordinates, {} of dimension {} expects {}",
                x.len(),
                self.kind,
                self.n,
                self.coord_len()
            )));
        }
        Ok(())
    }

    /// Geodesic distance. Fails on a dimension mismatch.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.dist(x, y))
    }

    /// Geodesic distance without the dimension check.
    pub fn dist(&self, x: &Point, y: &Point) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.kind {
            ManifoldKind::Torus => torus_dist(x.coords(), y.coords()),
            ManifoldKind::Sphere => unit_angle(x.coords(), y.coords()),
        }
    }

    pub fn antipode(&self, x: &Point) -> Point {
        match self.kind {
            ManifoldKind::Torus => Point(x.0.iter().map(|&c| wrap_unit(c + 0.5)).collect()),
            ManifoldKind::Sphere => Point(x.0.iter().map(|&c| -c).collect()),
        }
    }

    /// True when the two points coincide up to `tol` in coordinates (torus
    /// coordinates compared on the circle).
    pub fn same_point(&self, x: &Point, y: &Point, tol: f64) -> bool {
        match self.kind {
            ManifoldKind::Torus => x.0.iter().zip(&y.0).all(|(&a, &b)| circle_gap(a, b) <= tol),
            ManifoldKind::Sphere => x.0.iter().zip(&y.0).all(|(a, b)| (a - b).abs() <= tol),
        }
    }

    /// Classifies `z` against the bisector of `x` and `y`.
    pub fn bisector_side(&self, x: &Point, y: &Point, z: &Point) -> Result<BisectorSide> {
        let dxy = self.distance(x, y)?;
        self.check(z)?;
        if dxy <= POINT_TOL {
            return Err(invalid("bisector of a point with itself is undefined"));
        }
        let gap = self.dist(x, z) - self.dist(y, z);
        Ok(if gap.abs() <= TIE_TOL {
            BisectorSide::Equidistant
        } else if gap < 0.0 {
            BisectorSide::CloserToX
        } else {
            BisectorSide::CloserToY
        })
    }

    /// Uniformly distributed point (Haar measure).
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self.kind {
            ManifoldKind::Torus => Point((0..self.n).map(|_| rng.random::<f64>() - 0.5).map(wrap_unit).collect()),
            ManifoldKind::Sphere => loop {
                let g: Vec<f64> = (0..=self.n).map(|_| rng.sample(StandardNormal)).collect();
                let r = norm(&g);
                if r > 1e-8 {
                    break Point(g.into_iter().map(|c| c / r).collect());
                }
            },
        }
    }

    /// Moves `x` along coordinate axis `axis` by `step` (torus only).
    pub(crate) fn torus_shift(&self, x: &Point, axis: usize, step: f64) -> Point {
        let mut c = x.0.clone();
        c[axis] = wrap_unit(c[axis] + step);
        Point(c)
    }
}

fn torus_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = circle_gap(a, b);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Point on the great circle through `x` with unit tangent `z`: `cos s x + sin s z`.
pub fn sphere_geodesic(x: &Point, z: &Point, s: f64) -> Point {
    let (sn, cs) = s.sin_cos();
    let v: Vec<f64> = x.0.iter().zip(&z.0).map(|(a, b)| cs * a + sn * b).collect();
    let r = norm(&v);
    Point(v.into_iter().map(|c| c / r).collect())
}

/// A unit vector orthogonal to the sphere point `x`, deterministic per seed.
pub fn sphere_tangent_direction(x: &Point, seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut g: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        // two Gram-Schmidt passes keep |<x, z>| at roundoff level
        for _ in 0..2 {
            let a = dot(&g, x.coords());
            for (gi, xi) in g.iter_mut().zip(x.coords()) {
                *gi -= a * xi;
            }
        }
        let r = norm(&g);
        if r > 1e-6 {
            return Point(g.into_iter().map(|c| c / r).collect());
        }
    }
}

/// Signed coordinate permutation followed by a translation:
/// `psi(x)_k = eps_k * x_{sigma(k)} + u_k (mod 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusIsometry {
    sigma: Vec<usize>,
    eps: Vec<i8>,
    u: Vec<f64>,
}

impl TorusIsometry {
    pub fn new(sigma: Vec<usize>, eps: Vec<i8>, u: Vec<f64>) -> Result<Self> {
        let n = sigma.len();
        if n == 0 || eps.len() != n || u.len() != n {
            return Err(invalid("sigma, eps and u must have the same positive length"));
        }
        let mut seen = vec![false; n];
        for &s in &sigma {
            if s >= n || seen[s] {
                return Err(invalid(format!("sigma {sigma:?} is not a permutation of 0..{n}")));
            }
            seen[s] = true;
        }
        if eps.iter().any(|&e| e != 1 && e != -1) {
            return Err(invalid("every eps entry must be +1 or -1"));
        }
        if u.iter().any(|c| !c.is_finite()) {
            return Err(invalid("translation must be finite"));
        }
        let u = u.into_iter().map(wrap_unit).collect();
        Ok(TorusIsometry { sigma, eps, u })
    }

    pub fn identity(n: usize) -> Self {
        TorusIsometry { sigma: (0..n).collect(), eps: vec![1; n], u: vec![0.0; n] }
    }

    pub fn translation(u: &[f64]) -> Self {
        let n = u.len();
        TorusIsometry { sigma: (0..n).collect(), eps: vec![1; n], u: u.iter().map(|&c| wrap_unit(c)).collect() }
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn eps(&self) -> &[i8] {
        &self.eps
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    fn apply_coords(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| wrap_unit(f64::from(self.eps[k]) * x[self.sigma[k]] + self.u[k]))
            .collect()
    }

    pub fn inverse(&self) -> Self {
        let n = self.dim();
        let mut sigma = vec![0; n];
        let mut eps = vec![1; n];
        let mut u = vec![0.0; n];
        for k in 0..n {
            let m = self.sigma[k];
            sigma[m] = k;
            eps[m] = self.eps[k];
            u[m] = wrap_unit(-f64::from(self.eps[k]) * self.u[k]);
        }
        TorusIsometry { sigma, eps, u }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &TorusIsometry) -> Self {
        let n = self.dim();
        let mut sigma = vec![0; n];
        let mut eps = vec![1; n];
        let mut u = vec![0.0; n];
        for k in 0..n {
            let m = self.sigma[k];
            sigma[k] = inner.sigma[m];
            eps[k] = self.eps[k] * inner.eps[m];
            u[k] = wrap_unit(f64::from(self.eps[k]) * inner.u[m] + self.u[k]);
        }
        TorusIsometry { sigma, eps, u }
    }
}

/// Restriction of an orthogonal map of `R^{n+1}` to the sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereIsometry {
    q: DMatrix<f64>,
}

impl SphereIsometry {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() < 2 {
            return Err(invalid("orthogonal map must be a square matrix of size at least 2"));
        }
        let defect = (q.transpose() * &q - DMatrix::identity(q.nrows(), q.ncols())).amax();
        if defect > 1e-10 {
            return Err(invalid(format!("matrix is not orthogonal: max |Q^T Q - I| = {defect:e}")));
        }
        Ok(SphereIsometry { q })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(invalid("orthogonal map must be square"));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        SphereIsometry { q: DMatrix::identity(n + 1, n + 1) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.q.nrows()).map(|i| self.q.row(i).iter().copied().collect()).collect()
    }

    pub fn dim(&self) -> usize {
        self.q.nrows() - 1
    }

    fn apply_coords(&self, x: &[f64]) -> Vec<f64> {
        let m = self.q.nrows();
        let v: Vec<f64> = (0..m).map(|i| (0..m).map(|j| self.q[(i, j)] * x[j]).sum()).collect();
        let r = norm(&v);
        v.into_iter().map(|c| c / r).collect()
    }

    pub fn inverse(&self) -> Self {
        SphereIsometry { q: self.q.transpose() }
    }

    pub fn compose(&self, inner: &SphereIsometry) -> Self {
        SphereIsometry { q: &self.q * &inner.q }
    }
}

/// An isometry of the torus or of the sphere.
#[derive(Clone, Debug, PartialEq)]
pub enum Isometry {
    Torus(TorusIsometry),
    Sphere(SphereIsometry),
}

impl Isometry {
    pub fn identity(m: &Manifold) -> Self {
        match m.kind() {
            ManifoldKind::Torus => Isometry::Torus(TorusIsometry::identity(m.n())),
            ManifoldKind::Sphere => Isometry::Sphere(SphereIsometry::identity(m.n())),
        }
    }

    /// Draws an isometry from a seeded generator: uniform signed permutation and
    /// translation on the torus, Haar-distributed orthogonal matrix on the sphere.
    pub fn random(m: &Manifold, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(m, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(m: &Manifold, rng: &mut R) -> Self {
        let n = m.n();
        match m.kind() {
            ManifoldKind::Torus => {
                let mut sigma: Vec<usize> = (0..n).collect();
                sigma.shuffle(rng);
                let eps = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
                let u = (0..n).map(|_| wrap_unit(rng.random::<f64>() - 0.5)).collect();
                Isometry::Torus(TorusIsometry { sigma, eps, u })
            }
            ManifoldKind::Sphere => {
                let g = DMatrix::from_fn(n + 1, n + 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                let qr = g.qr();
                let r = qr.r();
                let mut q = qr.q();
                for j in 0..=n {
                    if r[(j, j)] < 0.0 {
                        q.column_mut(j).neg_mut();
                    }
                }
                Isometry::Sphere(SphereIsometry { q })
            }
        }
    }

    pub fn manifold_kind(&self) -> ManifoldKind {
        match self {
            Isometry::Torus(_) => ManifoldKind::Torus,
            Isometry::Sphere(_) => ManifoldKind::Sphere,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Isometry::Torus(t) => t.dim(),
            Isometry::Sphere(s) => s.dim(),
        }
    }

    pub(crate) fn check(&self, m: &Manifold) -> Result<()> {
        if self.manifold_kind() != m.kind() || self.dim() != m.n() {
            return Err(invalid(format!(
                "isometry of {} of dimension {} applied on {} of dimension {}",
                self.manifold_kind(),
                self.dim(),
                m.kind(),
                m.n()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, m: &Manifold, x: &Point) -> Result<Point> {
        self.check(m)?;
        m.check(x)?;
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &Point) -> Point {
        match self {
            Isometry::Torus(t) => Point(t.apply_coords(x.coords())),
            Isometry::Sphere(s) => Point(s.apply_coords(x.coords())),
        }
    }

    pub fn inverse(&self) -> Self {
        match self {
            Isometry::Torus(t) => Isometry::Torus(t.inverse()),
            Isometry::Sphere(s) => Isometry::Sphere(s.inverse()),
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Isometry) -> Result<Self> {
        match (self, inner) {
            (Isometry::Torus(a), Isometry::Torus(b)) if a.dim() == b.dim() => Ok(Isometry::Torus(a.compose(b))),
            (Isometry::Sphere(a), Isometry::Sphere(b)) if a.dim() == b.dim() => Ok(Isometry::Sphere(a.compose(b))),
            _ => Err(invalid("cannot compose isometries of different manifolds")),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum IsometryRepr {
    Torus { sigma: Vec<usize>, eps: Vec<i8>, u: Vec<f64> },
    Sphere {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
}

impl Serialize for Isometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Isometry::Torus(t) => IsometryRepr::Torus { sigma: t.sigma.clone(), eps: t.eps.clone(), u: t.u.clone() },
            Isometry::Sphere(q) => IsometryRepr::Sphere { q: q.rows() },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Isometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = IsometryRepr::deserialize(d)?;
        let iso = match repr {
            IsometryRepr::Torus { sigma, eps, u } => TorusIsometry::new(sigma, eps, u).map(Isometry::Torus),
            IsometryRepr::Sphere { q } => SphereIsometry::from_rows(&q).map(Isometry::Sphere),
        };
        iso.map_err(|e: Error| serde::de::Error::custom(e.to_string()))
    }
}
