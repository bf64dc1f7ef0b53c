//! Exact optimal transport between discrete measures.
//!
//! The solver is a transportation simplex (network simplex specialised to the
//! complete bipartite graph): a north-west corner spanning tree, dual potentials
//! from the tree, Dantzig pricing, and Bland's lowest-index rule once a run of
//! degenerate pivots is detected. A brute-force vertex enumerator is provided as
//! an independent oracle for tiny instances.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;

/// Tolerance on coupling marginals accepted by [`coupling_cost`].
pub const COUPLING_TOL: f64 = 1e-8;

const DEGENERATE_RUN: usize = 30;

/// A nonnegative `rows x cols` mass matrix, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

impl Coupling {
    pub fn new(rows: usize, cols: usize, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != rows * cols {
            return Err(Error::InvalidCoupling(format!(
                "expected {} entries, got {}",
                rows * cols,
                mass.len()
            )));
        }
        if let Some(v) = mass.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidCoupling(format!("entry {v} is negative or not finite")));
        }
        Ok(Coupling { rows, cols, mass })
    }

    /// Independent coupling `a ⊗ b`.
    pub fn product(a: &[f64], b: &[f64]) -> Self {
        let mass = a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
        Coupling { rows: a.len(), cols: b.len(), mass }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.mass.chunks(self.cols) {
            for (acc, v) in s.iter_mut().zip(r) {
                *acc += v;
            }
        }
        s
    }

    /// Nonzero entries as `(row, col, mass)` triples.
    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let v = self.get(i, j);
                if v > 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// Largest deviation of the marginals from `a` and `b`.
    pub fn marginal_defect(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.row_sums().iter().zip(a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let c = self.col_sums().iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        r.max(c)
    }
}

#[derive(Serialize, Deserialize)]
struct CouplingJson {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Serialize for Coupling {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CouplingJson { rows: self.rows, cols: self.cols, entries: self.triples() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coupling {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = CouplingJson::deserialize(d)?;
        let mut mass = vec![0.0; raw.rows * raw.cols];
        for (i, j, v) in raw.entries {
            if i >= raw.rows || j >= raw.cols {
                return Err(serde::de::Error::custom(format!("entry ({i}, {j}) out of range")));
            }
            mass[i * raw.cols + j] += v;
        }
        Coupling::new(raw.rows, raw.cols, mass).map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    /// `cost^(1/p)`.
    pub distance: f64,
    /// Optimal value of `sum pi_ij d(x_i, y_j)^p`.
    pub cost: f64,
    pub p: f64,
    pub coupling: Coupling,
}

impl TransportResult {
    fn from_plan(cost: f64, p: f64, coupling: Coupling) -> Self {
        let cost = cost.max(0.0);
        TransportResult { distance: cost.powf(1.0 / p), cost, p, coupling }
    }
}

fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<()> {
    if mu.manifold() != nu.manifold() {
        return Err(invalid(format!(
            "measures live on different manifolds ({:?} vs {:?})",
            mu.manifold(),
            nu.manifold()
        )));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be a finite real >= 1, got {p}")));
    }
    Ok(())
}

/// Dense row-major matrix of `d(x_i, y_j)^p`.
pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Vec<f64> {
    let m = mu.manifold();
    let mut c = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.support() {
        for y in nu.support() {
            c.push(m.dist(x, y).powf(p));
        }
    }
    c
}

/// Transport cost of a given coupling.
pub fn coupling_cost(pi: &Coupling, mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    check_pair(mu, nu, p)?;
    if pi.rows != mu.len() || pi.cols != nu.len() {
        return Err(Error::InvalidCoupling(format!(
            "coupling is {}x{}, supports have sizes {} and {}",
            pi.rows,
            pi.cols,
            mu.len(),
            nu.len()
        )));
    }
    let defect = pi.marginal_defect(mu.weights(), nu.weights());
    if defect > COUPLING_TOL {
        return Err(Error::InvalidCoupling(format!("marginals violated by {defect:e}")));
    }
    let c = cost_matrix(mu, nu, p);
    Ok(c.iter().zip(&pi.mass).map(|(a, b)| a * b).sum())
}

/// Exact `W_p` and an optimal coupling.
pub fn solve_transport(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<TransportResult> {
    check_pair(mu, nu, p)?;
    let cost = cost_matrix(mu, nu, p);
    let (plan, value) = transport_simplex(mu.weights(), nu.weights(), &cost)?;
    Ok(TransportResult::from_plan(value, p, plan))
}

/// Solves `min <C, P>` over couplings of `supply` and `demand` (both summing to
/// the same total). Returns an optimal basic plan and its cost.
pub fn transport_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<(Coupling, f64)> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 || cost.len() != n * m {
        return Err(invalid("transport problem needs nonempty supply, demand and an n x m cost"));
    }
    let mut tree = SpanningTree::north_west(supply, demand);
    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-13 * scale.max(1e-300);
    let max_pivots = 50 * (n * m) + 10_000;
    let mut degenerate = 0usize;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];

    for _ in 0..max_pivots {
        tree.duals(cost, &mut u, &mut v);
        let bland = degenerate >= DEGENERATE_RUN;
        let mut entering = None;
        let mut best = -tol;
        'scan: for i in 0..n {
            for j in 0..m {
                if tree.is_basic[i * m + j] {
                    continue;
                }
                let r = cost[i * m + j] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let plan = tree.plan();
            let value = plan.mass.iter().zip(cost).map(|(a, b)| a * b).sum();
            return Ok((plan, value));
        };
        let theta = tree.pivot(ei, ej);
        if theta > 0.0 {
            degenerate = 0;
        } else {
            degenerate += 1;
        }
    }
    Err(Error::Resource(format!("transport simplex did not converge within {max_pivots} pivots")))
}

/// Basis of the transportation simplex: `n + m - 1` cells forming a spanning
/// tree of the bipartite graph rows ∪ cols.
struct SpanningTree {
    n: usize,
    m: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    is_basic: Vec<bool>,
}

impl SpanningTree {
    fn north_west(supply: &[f64], demand: &[f64]) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut cells = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let q = a[i].min(b[j]).max(0.0);
            cells.push((i, j));
            a[i] -= q;
            b[j] -= q;
            if i == n - 1 && j == m - 1 {
                // absorb rounding residue so the marginals close exactly
                flow.push(q + a[i].max(b[j]).max(0.0));
                break;
            }
            flow.push(q);
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || a[i] < b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut is_basic = vec![false; n * m];
        for &(i, j) in &cells {
            is_basic[i * m + j] = true;
        }
        SpanningTree { n, m, cells, flow, is_basic }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push(k);
            adj[self.n + j].push(k);
        }
        adj
    }

    fn duals(&self, cost: &[f64], u: &mut [f64], v: &mut [f64]) {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n + self.m];
        let mut stack = vec![0usize];
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &k in &adj[node] {
                let (i, j) = self.cells[k];
                let c = cost[i * self.m + j];
                if node < self.n {
                    let other = self.n + j;
                    if !seen[other] {
                        v[j] = c - u[i];
                        seen[other] = true;
                        stack.push(other);
                    }
                } else if !seen[i] {
                    u[i] = c - v[j];
                    seen[i] = true;
                    stack.push(i);
                }
            }
        }
    }

    /// Brings cell `(ei, ej)` into the basis and returns the step length.
    fn pivot(&mut self, ei: usize, ej: usize) -> f64 {
        let adj = self.adjacency();
        let total = self.n + self.m;
        // parent edges on the tree path from column node `ej` to row node `ei`
        let start = self.n + ej;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; total];
        let mut seen = vec![false; total];
        seen[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == ei {
                break;
            }
            for &k in &adj[node] {
                let (i, j) = self.cells[k];
                let other = if node < self.n { self.n + j } else { i };
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = Some((node, k));
                    queue.push_back(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = ei;
        while node != start {
            let (prev, k) = parent[node].expect("basis is a spanning tree");
            path.push(k);
            node = prev;
        }
        path.reverse();
        // path[0] touches column ej and loses flow; signs alternate from there
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let f = self.flow[k];
                let (i, j) = self.cells[k];
                let better = f < theta
                    || (f == theta && {
                        let (li, lj) = self.cells[leave];
                        i * self.m + j < li * self.m + lj
                    });
                if better {
                    theta = f;
                    leave = k;
                }
            }
        }
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                self.flow[k] -= theta;
            } else {
                self.flow[k] += theta;
            }
        }
        self.flow[leave] = 0.0;
        let (li, lj) = self.cells[leave];
        self.is_basic[li * self.m + lj] = false;
        self.cells[leave] = (ei, ej);
        self.flow[leave] = theta;
        self.is_basic[ei * self.m + ej] = true;
        theta
    }

    fn plan(&self) -> Coupling {
        let mut mass = vec![0.0; self.n * self.m];
        for (&(i, j), &f) in self.cells.iter().zip(&self.flow) {
            mass[i * self.m + j] += f.max(0.0);
        }
        Coupling { rows: self.n, cols: self.m, mass }
    }
}

/// Exhaustive optimum for tiny instances: permutation couplings when both
/// measures carry `N <= 6` equal weights, otherwise all basic feasible
/// solutions when `N * M <= 12`.
pub fn brute_force_transport(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<TransportResult> {
    check_pair(mu, nu, p)?;
    let (n, m) = (mu.len(), nu.len());
    let cost = cost_matrix(mu, nu, p);
    let equal = |w: &[f64]| w.iter().all(|&x| (x - w[0]).abs() <= 1e-12);
    if n == m && n <= 6 && equal(mu.weights()) && equal(nu.weights()) {
        let (perm, value) = best_permutation(n, &cost);
        let w = 1.0 / n as f64;
        let mut mass = vec![0.0; n * n];
        for (i, &j) in perm.iter().enumerate() {
            mass[i * n + j] = w;
        }
        return Ok(TransportResult::from_plan(value * w, p, Coupling { rows: n, cols: n, mass }));
    }
    if n * m <= 12 {
        let (plan, value) = best_vertex(mu.weights(), nu.weights(), &cost);
        return Ok(TransportResult::from_plan(value, p, plan));
    }
    Err(Error::Resource(format!(
        "brute force handles N = M <= 6 equal weights or N * M <= 12, got {n} x {m}"
    )))
}

fn best_permutation(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    fn rec(k: usize, n: usize, cost: &[f64], cur: &mut Vec<usize>, used: &mut [bool], acc: f64, best: &mut (Vec<usize>, f64)) {
        if k == n {
            if acc < best.1 {
                *best = (cur.clone(), acc);
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(k + 1, n, cost, cur, used, acc + cost[k * n + j], best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (Vec::new(), f64::INFINITY);
    rec(0, n, cost, &mut Vec::with_capacity(n), &mut vec![false; n], 0.0, &mut best);
    best
}

fn best_vertex(a: &[f64], b: &[f64], cost: &[f64]) -> (Coupling, f64) {
    let (n, m) = (a.len(), b.len());
    let k = n + m - 1;
    let cells = n * m;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if let Some(flow) = tree_flow(n, m, a, b, &idx) {
            if flow.iter().all(|&f| f >= -1e-12) {
                let value: f64 = idx.iter().zip(&flow).map(|(&c, f)| cost[c] * f.max(0.0)).sum();
                if best.as_ref().is_none_or(|(_, v)| value < *v) {
                    let mut mass = vec![0.0; cells];
                    for (&c, f) in idx.iter().zip(&flow) {
                        mass[c] = f.max(0.0);
                    }
                    best = Some((mass, value));
                }
            }
        }
        // next k-combination of 0..cells in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                let (mass, value) = best.expect("a transportation polytope has a vertex");
                return (Coupling { rows: n, cols: m, mass }, value);
            }
            i -= 1;
            if idx[i] < cells - k + i {
                break;
            }
        }
        idx[i] += 1;
        for t in i + 1..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

/// Flows on a candidate basis, or `None` when the cells do not form a spanning tree.
fn tree_flow(n: usize, m: usize, a: &[f64], b: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for &c in basis {
        let (ra, rb) = (find(&mut parent, c / m), find(&mut parent, n + c % m));
        if ra == rb {
            return None;
        }
        parent[ra] = rb;
    }
    let mut rest: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut degree = vec![0usize; n + m];
    for &c in basis {
        degree[c / m] += 1;
        degree[n + c % m] += 1;
    }
    let mut flow = vec![0.0; basis.len()];
    let mut done = vec![false; basis.len()];
    for _ in 0..basis.len() {
        let (e, leaf) = basis.iter().enumerate().filter(|(e, _)| !done[*e]).find_map(|(e, &c)| {
            let (r, col) = (c / m, n + c % m);
            if degree[r] == 1 {
                Some((e, r))
            } else if degree[col] == 1 {
                Some((e, col))
            } else {
                None
            }
        })?;
        let c = basis[e];
        let other = if leaf == c / m { n + c % m } else { c / m };
        flow[e] = rest[leaf];
        rest[other] -= rest[leaf];
        rest[leaf] = 0.0;
        degree[leaf] -= 1;
        degree[other] -= 1;
        done[e] = true;
    }
    Some(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Manifold;

    fn circle(coords: &[f64], w: &[f64]) -> DiscreteMeasure {
        let m = Manifold::torus(1);
        DiscreteMeasure::from_coords(m, &coords.iter().map(|&c| vec![c]).collect::<Vec<_>>(), w.to_vec()).unwrap()
    }

    #[test]
    fn dirac_pair_gives_geodesic_distance() {
        let mu = circle(&[0.1], &[1.0]);
        let nu = circle(&[-0.3], &[1.0]);
        let r = solve_transport(&mu, &nu, 2.0).unwrap();
        assert!((r.distance - 0.4).abs() < 1e-15);
        assert!((r.cost - 0.16).abs() < 1e-15);
    }

    #[test]
    fn split_to_single_point() {
        let mu = circle(&[0.1, 0.3], &[0.5, 0.5]);
        let nu = circle(&[-0.2], &[1.0]);
        let p = 1.5;
        let expect = (0.5 * 0.3f64.powf(p) + 0.5 * 0.5f64.powf(p)).powf(1.0 / p);
        assert!((solve_transport(&mu, &nu, p).unwrap().distance - expect).abs() < 1e-14);
    }

    #[test]
    fn costs_of_trivial_couplings() {
        let mu = circle(&[0.1], &[1.0]);
        let nu = circle(&[0.35], &[1.0]);
        let pi = Coupling::product(&[1.0], &[1.0]);
        assert!((coupling_cost(&pi, &mu, &nu, 3.0).unwrap() - 0.25f64.powi(3)).abs() < 1e-16);

        let mu = circle(&[0.1, 0.2, 0.4], &[0.2, 0.3, 0.5]);
        let diag = Coupling::new(3, 3, vec![0.2, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(coupling_cost(&diag, &mu, &mu, 2.0).unwrap(), 0.0);
        let bad = Coupling::new(3, 3, vec![0.3, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.5]).unwrap();
        assert!(matches!(coupling_cost(&bad, &mu, &mu, 2.0), Err(Error::InvalidCoupling(_))));
    }

    #[test]
    fn two_point_pairing_is_minimum_of_two() {
        let mu = circle(&[0.0, 0.25], &[0.5, 0.5]);
        let nu = circle(&[0.3, -0.1], &[0.5, 0.5]);
        let d = |a: f64, b: f64| crate::manifold::circle_gap(a, b);
        let straight = 0.5 * (d(0.0, 0.3) + d(0.25, -0.1));
        let crossed = 0.5 * (d(0.0, -0.1) + d(0.25, 0.3));
        let bf = brute_force_transport(&mu, &nu, 1.0).unwrap();
        assert!((bf.cost - straight.min(crossed)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ties_are_reproducible() {
        // every plan has the same cost; the pivoting must still terminate deterministically
        let mu = circle(&[0.0, 0.5 - 1e-3], &[0.5, 0.5]);
        let nu = circle(&[0.25, -0.25 - 1e-3], &[0.5, 0.5]);
        let a = solve_transport(&mu, &nu, 1.0).unwrap();
        let b = solve_transport(&mu, &nu, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.coupling.marginal_defect(mu.weights(), nu.weights()) < 1e-15);
    }

    #[test]
    fn manifold_mismatch() {
        let mu = circle(&[0.0], &[1.0]);
        let s = Manifold::sphere(1);
        let nu = DiscreteMeasure::dirac(s, s.point(&[1.0, 0.0]).unwrap()).unwrap();
        assert!(matches!(solve_transport(&mu, &nu, 1.0), Err(Error::InvalidArgument(_))));
        assert!(solve_transport(&mu, &mu, 0.5).is_err());
    }

    #[test]
    fn brute_force_size_limit() {
        let w = vec![1.0 / 7.0; 7];
        let pts: Vec<f64> = (0..7).map(|i| i as f64 / 7.0 - 0.5).collect();
        let mu = circle(&pts, &w);
        assert!(matches!(brute_force_transport(&mu, &mu, 1.0), Err(Error::Resource(_))));
    }

    #[test]
    fn coupling_json_is_sparse() {
        let pi = Coupling::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let js = serde_json::to_string(&pi).unwrap();
        assert_eq!(js, r#"{"rows":2,"cols":2,"entries":[[0,0,0.5],[1,1,0.5]]}"#);
        assert_eq!(serde_json::from_str::<Coupling>(&js).unwrap(), pi);
    }
}
