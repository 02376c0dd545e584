use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use switchopt::dynamics::{project_feasible, DampingBounds, Method, OptState};
use switchopt::graph::{LaplacianPair, Topology};
use switchopt::hybrid::{automaton_admits, generate_schedule, validate_times};
use switchopt::integrate::integrate_mode;
use switchopt::objectives::{sample_family, SmoothObjective, DEFAULT_CURVATURE, DEFAULT_LINEAR};
use switchopt::omega::{distance_to_cloud, CloudPoint, PointCloud};

const BUDGET: f64 = 100.0;

fn topology() -> impl Strategy<Value = Topology> {
    prop_oneof![Just(Topology::Path), Just(Topology::Complete)]
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

fn sized_vector(scale: f64) -> impl Strategy<Value = DVector<f64>> {
    (2usize..30).prop_flat_map(move |n| vector(n, scale))
}

fn centered(v: &DVector<f64>) -> DVector<f64> {
    v.add_scalar(-v.mean())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_inverse_acts_as_inverse_on_zero_sum_vectors(topo in topology(), v in sized_vector(10.0)) {
        let lap = LaplacianPair::build(&topo, v.len()).unwrap();
        let c = centered(&v);
        let back = lap.apply(&lap.apply_pinv(&v));
        prop_assert!((back - &c).amax() <= 1e-9 * (1.0 + c.amax()));
        prop_assert!(lap.apply_pinv(&DVector::repeat(v.len(), 1.0)).amax() <= 1e-10);
    }

    #[test]
    fn laplacian_quadratic_form_is_positive_on_zero_sum_vectors(topo in topology(), v in sized_vector(10.0)) {
        let lap = LaplacianPair::build(&topo, v.len()).unwrap();
        let c = centered(&v);
        prop_assume!(c.norm() > 1e-6);
        prop_assert!(c.dot(&lap.apply(&c)) > 0.0);
        prop_assert!(lap.pinv_quadratic(&c) > 0.0);
    }

    #[test]
    fn kkt_point_is_the_feasible_minimizer(seed in any::<u64>(), n in 2usize..25, dir in sized_vector(1.0)) {
        let family = sample_family(seed, n, 1, DEFAULT_CURVATURE, DEFAULT_LINEAR, BUDGET).unwrap();
        let obj = family.mode(0);
        let sol = obj.kkt_solve(BUDGET);
        prop_assert!((sol.q_star.sum() - BUDGET).abs() <= 1e-9);
        // The gradient at q* is μ* 1, so it is invariant under any Laplacian.
        let g = obj.gradient(&sol.q_star);
        prop_assert!(g.add_scalar(-g[0]).amax() <= 1e-9 * (1.0 + g[0].abs()));
        let mut d = DVector::zeros(n);
        for i in 0..n {
            d[i] = dir[i % dir.len()];
        }
        let d = centered(&d);
        prop_assume!(d.norm() > 1e-3);
        prop_assert!(obj.value(&(&sol.q_star + &d)) > obj.value(&sol.q_star));
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), q in vector(8, 50.0)) {
        let family = sample_family(seed, 8, 1, DEFAULT_CURVATURE, DEFAULT_LINEAR, BUDGET).unwrap();
        let obj = family.mode(0);
        let g = obj.gradient(&q);
        for i in 0..8 {
            let h = 1e-3 * q[i].abs().max(1.0);
            let mut up = q.clone();
            let mut down = q.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            assert_relative_eq!(fd, g[i], epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn projection_lands_on_the_flow_set_and_is_idempotent(q in sized_vector(1e3), shift in -1e3f64..1e3) {
        let p = q.add_scalar(shift);
        let once = project_feasible(&OptState::new(q, p), BUDGET);
        let (rq, rp) = once.feasibility_residual(BUDGET);
        prop_assert!(rq.abs() <= 1e-9 && rp.abs() <= 1e-9);
        prop_assert_eq!(project_feasible(&once, BUDGET), once);
    }

    #[test]
    fn validation_agrees_with_the_token_automaton(
        times in prop::collection::vec(0.0f64..50.0, 0..20),
        delta in 0.0f64..0.5,
        n0 in 1u32..4,
    ) {
        let mut times = times;
        times.sort_by(f64::total_cmp);
        times.dedup();
        let valid = validate_times(&times, delta, n0).is_valid();
        let admitted = automaton_admits(&times, delta, n0, f64::from(n0)).is_ok();
        prop_assert_eq!(valid, admitted);
    }

    #[test]
    fn generated_schedules_are_valid(seed in any::<u64>(), delta in 0.0f64..0.5, n0 in 1u32..4, modes in 2usize..5) {
        let s = generate_schedule(seed, delta, n0, 100.0, modes, 0).unwrap();
        prop_assert!(s.validate().is_valid());
        let mut current = 0;
        for e in s.events() {
            prop_assert!(e.target != current && e.target < modes);
            current = e.target;
        }
    }

    #[test]
    fn cloud_distance_is_monotone_and_satisfies_the_triangle_inequality(
        pts in prop::collection::vec(vector(6, 10.0), 1..12),
        extra in vector(6, 10.0),
        x in vector(6, 10.0),
        y in vector(6, 10.0),
    ) {
        let state = |v: &DVector<f64>| OptState::new(v.rows(0, 3).into_owned(), v.rows(3, 3).into_owned());
        let cloud = |vs: &[DVector<f64>]| {
            PointCloud::from_points(vs.iter().map(|v| CloudPoint { sigma: 0, state: state(v) }).collect())
        };
        let small = cloud(&pts);
        let mut more = pts.clone();
        more.push(extra);
        let large = cloud(&more);
        let (sx, sy) = (state(&x), state(&y));
        let dx = distance_to_cloud(&sx, &small).unwrap();
        prop_assert!(distance_to_cloud(&sx, &large).unwrap() <= dx);
        let dy = distance_to_cloud(&sy, &small).unwrap();
        prop_assert!(dx <= sx.distance(&sy) + dy + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flows_conserve_budget_and_zero_momentum_sum(seed in any::<u64>(), kind in 0usize..3, start in vector(10, 30.0)) {
        let family = sample_family(seed, 10, 1, DEFAULT_CURVATURE, DEFAULT_LINEAR, BUDGET).unwrap();
        let lap = LaplacianPair::build(&Topology::Path, 10).unwrap();
        let method = match kind {
            0 => Method::Gradient,
            1 => Method::heavy_ball(5.0).unwrap(),
            _ => Method::hybrid(DampingBounds::new(0.01, 35.5).unwrap()),
        };
        let x0 = project_feasible(&OptState::new(start.add_scalar(10.0), start.clone()), BUDGET);
        let mut worst: f64 = 0.0;
        integrate_mode(&x0, &method, family.mode(0), &lap, BUDGET, 5.0, 1e-3, |_, x| {
            let (rq, rp) = x.feasibility_residual(BUDGET);
            worst = worst.max(rq.abs()).max(rp.abs());
        });
        prop_assert!(worst <= 1e-6);
    }
}

#[test]
fn explicit_two_node_pseudo_inverse() {
    let lap = LaplacianPair::build(&Topology::Path, 2).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
    assert!((lap.pseudo_inverse() - expected).amax() <= 1e-15);
}
