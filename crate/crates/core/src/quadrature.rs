//! Composite Gauss-Legendre rules with geometric grading toward endpoint
//! singularities.

use std::ops::{AddAssign, Mul};

pub const GL_ORDER: usize = 8;

/// Refinement levels toward a graded endpoint; the innermost cell is
/// `2^-GRADE_LEVELS` of a panel.
pub const GRADE_LEVELS: usize = 40;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let step = pn / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Node/weight list of a composite rule on `[a, b]` with `panels` equal panels,
/// optionally grading the first and/or last panel geometrically toward the
/// endpoint.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn composite(a: f64, b: f64, panels: usize, grade_left: bool, grade_right: bool) -> Rule {
        let (gx, gw) = gauss_legendre(GL_ORDER);
        let mut nodes = Vec::with_capacity(panels * GL_ORDER + 2 * GRADE_LEVELS * GL_ORDER);
        let mut weights = Vec::with_capacity(nodes.capacity());
        let mut push = |lo: f64, hi: f64| {
            let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        };
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        for i in 0..panels {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == panels { b } else { lo + h };
            let left_end = i == 0 && grade_left;
            let right_end = i + 1 == panels && grade_right;
            if !left_end && !right_end {
                push(lo, hi);
                continue;
            }
            // split [lo, hi] into cells shrinking toward the graded end(s)
            let mut cuts = vec![lo, hi];
            if left_end {
                let mid = if right_end { (lo + hi) / 2.0 } else { hi };
                let mut t = mid - lo;
                for _ in 0..GRADE_LEVELS {
                    t /= 2.0;
                    cuts.push(lo + t);
                }
                cuts.push(mid);
            }
            if right_end {
                let mid = if left_end { (lo + hi) / 2.0 } else { lo };
                let mut t = hi - mid;
                for _ in 0..GRADE_LEVELS {
                    t /= 2.0;
                    cuts.push(hi - t);
                }
                cuts.push(mid);
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for c in cuts.windows(2) {
                push(c[0], c[1]);
            }
        }
        Rule { nodes, weights }
    }

    pub fn integrate<T, F>(&self, f: F) -> T
    where
        T: Default + AddAssign + Mul<f64, Output = T>,
        F: Fn(f64) -> T,
    {
        let mut acc = T::default();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += f(x) * w;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_to_degree_15() {
        let (x, w) = gauss_legendre(GL_ORDER);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for k in 0..16 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - want).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn grading_handles_endpoint_powers() {
        let rule = Rule::composite(0.0, 0.5, 64, true, true);
        let got = rule.integrate(|x| x.powf(0.25) + (0.5 - x).sqrt());
        let want = 0.5f64.powf(1.25) / 1.25 + 0.5f64.powf(1.5) / 1.5;
        assert!((got - want).abs() < 1e-13);
        let plain = Rule::composite(0.0, 1.0, 3, false, false).integrate(|x| x * x);
        assert!((plain - 1.0 / 3.0).abs() < 1e-15);
    }
}
