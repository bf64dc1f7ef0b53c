use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wpot::manifold::{Isometry, Manifold, Point};
use wpot::measure::DiscreteMeasure;
use wpot::potential::potential_eval;
use wpot::transport::{coupling_cost, solve_transport};
use wpot::verify::dirac_segment_alpha_interval;

fn manifold() -> impl Strategy<Value = Manifold> {
    prop_oneof![(1..=4usize).prop_map(Manifold::torus), (1..=3usize).prop_map(Manifold::sphere)]
}

fn point(m: Manifold) -> impl Strategy<Value = Point> {
    prop::collection::vec(-0.5..0.5f64, m.coord_len())
        .prop_filter("sphere points need a usable direction", move |c| {
            m.is_torus() || c.iter().map(|v| v * v).sum::<f64>() > 0.01
        })
        .prop_map(move |c| m.point(&c).unwrap())
}

fn measure(m: Manifold, max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_atoms)
        .prop_flat_map(move |k| (prop::collection::vec(point(m), k), prop::collection::vec(0.05..1.0f64, k)))
        .prop_filter_map("support points must be distinct", move |(pts, raw)| {
            let total: f64 = raw.iter().sum();
            DiscreteMeasure::new(m, pts, raw.iter().map(|w| w / total).collect()).ok()
        })
}

fn with_points(k: usize) -> impl Strategy<Value = (Manifold, Vec<Point>)> {
    manifold().prop_flat_map(move |m| (Just(m), prop::collection::vec(point(m), k)))
}

fn with_measures(k: usize, atoms: usize) -> impl Strategy<Value = (Manifold, Vec<DiscreteMeasure>)> {
    manifold().prop_flat_map(move |m| (Just(m), prop::collection::vec(measure(m, atoms), k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distance_is_a_bounded_metric((m, pts) in with_points(3)) {
        let (x, y, z) = (&pts[0], &pts[1], &pts[2]);
        let dxy = m.dist(x, y);
        prop_assert_eq!(m.dist(x, x), 0.0);
        prop_assert!((dxy - m.dist(y, x)).abs() <= 1e-15);
        prop_assert!(dxy <= m.dist(x, z) + m.dist(z, y) + 1e-12);
        prop_assert!((0.0..=m.diameter() + 1e-15).contains(&dxy));
        prop_assert!((m.dist(x, &m.antipode(x)) - m.diameter()).abs() <= 1e-12 || m.is_torus() && m.n() > 1);
    }

    #[test]
    fn torus_distance_ignores_integer_shifts(
        n in 1..=4usize,
        c in prop::collection::vec(-0.5..0.5f64, 4),
        d in prop::collection::vec(-0.5..0.5f64, 4),
        k in prop::collection::vec(-3i32..=3, 4),
    ) {
        let m = Manifold::torus(n);
        let x = m.point(&c[..n]).unwrap();
        let y = m.point(&d[..n]).unwrap();
        let shifted: Vec<f64> = c[..n].iter().zip(&k).map(|(a, s)| a + *s as f64).collect();
        prop_assert!((m.dist(&m.point(&shifted).unwrap(), &y) - m.dist(&x, &y)).abs() <= 1e-12);
    }

    #[test]
    fn isometries_preserve_distance_and_invert((m, pts) in with_points(2), s1 in any::<u64>(), s2 in any::<u64>()) {
        let psi = Isometry::random(&m, s1);
        let phi = Isometry::random(&m, s2);
        let (x, y) = (&pts[0], &pts[1]);
        let px = psi.apply(&m, x).unwrap();
        let py = psi.apply(&m, y).unwrap();
        prop_assert!((m.dist(&px, &py) - m.dist(x, y)).abs() <= 1e-10);
        let back = psi.inverse().apply(&m, &px).unwrap();
        prop_assert!(m.dist(&back, x) <= 1e-10);
        let composed = psi.compose(&phi).unwrap().apply(&m, x).unwrap();
        let stepwise = psi.apply(&m, &phi.apply(&m, x).unwrap()).unwrap();
        prop_assert!(m.dist(&composed, &stepwise) <= 1e-10);
    }

    #[test]
    fn pushforward_is_functorial((m, mus) in with_measures(1, 5), s1 in any::<u64>(), s2 in any::<u64>()) {
        let mu = &mus[0];
        let psi = Isometry::random(&m, s1);
        let phi = Isometry::random(&m, s2);
        let a = mu.pushforward(&psi.compose(&phi).unwrap()).unwrap();
        let b = mu.pushforward(&phi).unwrap().pushforward(&psi).unwrap();
        for ((x, w), (y, v)) in a.atoms().zip(b.atoms()) {
            prop_assert!(m.dist(x, y) <= 1e-10);
            prop_assert_eq!(w, v);
        }
    }

    #[test]
    fn potential_is_equivariant((m, mus) in with_measures(1, 6), x in any::<u64>(), s in any::<u64>(), p in 1.0..3.0f64) {
        let mu = &mus[0];
        let psi = Isometry::random(&m, s);
        let z = m.random_point(&mut ChaCha8Rng::seed_from_u64(x));
        let lhs = potential_eval(&mu.pushforward(&psi).unwrap(), p, &psi.apply(&m, &z).unwrap()).unwrap();
        let rhs = potential_eval(mu, p, &z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn potential_is_transport_to_a_dirac((m, mus) in with_measures(1, 6), x in any::<u64>(), p in 1.0..3.0f64) {
        let mu = &mus[0];
        let z = m.random_point(&mut ChaCha8Rng::seed_from_u64(x));
        let w = solve_transport(mu, &DiscreteMeasure::dirac(m, z.clone()).unwrap(), p).unwrap();
        prop_assert!((w.cost - potential_eval(mu, p, &z).unwrap()).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_bounded_metric((m, ms) in with_measures(3, 5), p in 1.0..3.0f64) {
        let w = |a: &DiscreteMeasure, b: &DiscreteMeasure| solve_transport(a, b, p).unwrap().distance;
        let (a, b, c) = (&ms[0], &ms[1], &ms[2]);
        prop_assert!(w(a, a) <= 1e-7);
        prop_assert!((w(a, b) - w(b, a)).abs() <= 1e-9);
        prop_assert!(w(a, b) <= w(a, c) + w(c, b) + 1e-9);
        prop_assert!(w(a, b) <= m.diameter() + 1e-12);
    }

    #[test]
    fn wasserstein_grows_with_p((_m, ms) in with_measures(2, 5)) {
        let (a, b) = (&ms[0], &ms[1]);
        let w1 = solve_transport(a, b, 1.0).unwrap().distance;
        let w2 = solve_transport(a, b, 2.0).unwrap().distance;
        let w3 = solve_transport(a, b, 3.0).unwrap().distance;
        prop_assert!(w1 <= w2 + 1e-9 && w2 <= w3 + 1e-9, "{} {} {}", w1, w2, w3);
    }

    #[test]
    fn solver_output_is_a_feasible_plan((_m, ms) in with_measures(2, 8), p in 1.0..3.0f64) {
        let (a, b) = (&ms[0], &ms[1]);
        let r = solve_transport(a, b, p).unwrap();
        prop_assert!(r.coupling.marginal_defect(a.weights(), b.weights()) <= 1e-8);
        prop_assert!(r.coupling.triples().iter().all(|t| t.2 >= 0.0));
        prop_assert!((coupling_cost(&r.coupling, a, b, p).unwrap() - r.cost).abs() <= 1e-12);
    }

    #[test]
    fn wasserstein_is_isometry_invariant((m, ms) in with_measures(2, 5), s in any::<u64>(), p in 1.0..3.0f64) {
        let psi = Isometry::random(&m, s);
        let before = solve_transport(&ms[0], &ms[1], p).unwrap().distance;
        let after = solve_transport(&ms[0].pushforward(&psi).unwrap(), &ms[1].pushforward(&psi).unwrap(), p).unwrap().distance;
        prop_assert!((before - after).abs() <= 1e-9);
    }

    #[test]
    fn alpha_interval_is_ordered((m, ms) in with_measures(1, 6), pts in any::<(u64, u64)>()) {
        let x = m.random_point(&mut ChaCha8Rng::seed_from_u64(pts.0));
        let y = m.random_point(&mut ChaCha8Rng::seed_from_u64(pts.1));
        prop_assume!(m.dist(&x, &y) > 1e-6);
        let (lo, hi) = dirac_segment_alpha_interval(&ms[0], &x, &y).unwrap();
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    }
}
