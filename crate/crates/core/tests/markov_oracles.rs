mod common;

use common::{q, three_class_closed_form, to_f64, Q};
use dynres::markov::{
    analyze, blocking_report, build_chain, erlang_b, quasi_stationary_curve, steady_state,
    steady_state_oracle, BirthDeathChain,
};
use dynres::traffic::{
    availability_thresholds, ClassMix, LoadCondition, RateVector, SystemParams, ThresholdVector,
};
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()) || a == b
}

#[test]
fn benchmark_case_matches_exact_closed_form() {
    let exact = three_class_closed_form(4, 3, 2, [q(1, 1); 3], q(1, 1));
    assert_eq!(exact.blocking, [q(3, 49), q(15, 49), q(33, 49)]);
    assert_eq!(exact.mean_occupancy, q(96, 49));
    assert_eq!(exact.probabilities[0], q(4, 49));

    let t = ThresholdVector::fixed(vec![4, 3, 2]).unwrap();
    let r = RateVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    let chain = build_chain(&t, &r, 1.0).unwrap();
    let fast = steady_state(&chain);
    let dense = steady_state_oracle(&chain).unwrap();
    for i in 0..=4 {
        let e = to_f64(exact.probabilities[i]);
        assert!((fast.probabilities()[i] - e).abs() < 1e-15);
        assert!((dense.probabilities()[i] - e).abs() < 1e-12);
    }
}

#[test]
fn recursion_equals_closed_form_on_small_grid() {
    let values = [q(0, 1), q(1, 2), q(1, 1), q(3, 1)];
    for capacity in 1..=6usize {
        for n2 in 0..=capacity {
            for n3 in 0..=n2 {
                for &l1 in &values {
                    for &l2 in &values {
                        for &l3 in &values {
                            let mu = q(3, 2);
                            let exact = three_class_closed_form(capacity, n2, n3, [l1, l2, l3], mu);
                            let t = ThresholdVector::fixed(vec![capacity, n2, n3]).unwrap();
                            let r = RateVector::new(vec![to_f64(l1), to_f64(l2), to_f64(l3)]).unwrap();
                            let report = analyze(&t, &r, 1.5).unwrap();
                            for m in 0..3 {
                                let e = to_f64(exact.blocking[m]);
                                assert!(
                                    (report.blocking[m] - e).abs() < 1e-13,
                                    "N={capacity} N2={n2} N3={n3} class {m}: {} vs {e}",
                                    report.blocking[m]
                                );
                            }
                            let occ = to_f64(exact.mean_occupancy);
                            assert!((report.mean_occupancy - occ).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn erlang_b_recursion_matches_uniform_chain() {
    for capacity in 1..=30 {
        for &a in &[0.1f64, 1.0, 3.0, 12.5, 40.0] {
            let chain = BirthDeathChain::erlang(capacity, a, 1.0).unwrap();
            let dense = steady_state_oracle(&chain).unwrap();
            let last = dense.probabilities()[capacity];
            assert!((erlang_b(capacity, a) - last).abs() < 1e-12);
        }
    }
    let exact: Q = q(27, 131);
    assert!((erlang_b(4, 3.0_f64) - to_f64(exact)).abs() < 1e-15);
}

#[test]
fn high_point_of_uniform_mix() {
    let params = SystemParams::new(10, 5, 0.9, 1.0, 3).unwrap();
    let mix = ClassMix::<f64>::uniform(3).unwrap();
    let point = &quasi_stationary_curve(&params, &mix, &[12.0]).unwrap()[0];
    assert_eq!(point.load, LoadCondition::High);
    assert_eq!(point.thresholds.as_slice(), &[10, 9, 7]);

    let exact = three_class_closed_form(10, 9, 7, [q(4, 1); 3], q(1, 1));
    let chain = build_chain(&point.thresholds, &mix.rates(12.0).unwrap(), 1.0).unwrap();
    let dense = steady_state_oracle(&chain).unwrap();
    let dense_report =
        blocking_report(&dense, &point.thresholds, &mix.rates(12.0).unwrap(), 1.0).unwrap();
    for m in 0..3 {
        let e = to_f64(exact.blocking[m]);
        assert!((point.report.blocking[m] - e).abs() < 1e-12);
        assert!((dense_report.blocking[m] - e).abs() < 1e-10);
    }
}

fn config() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, f64)> {
    (1usize..=64, 1usize..=4, 0.2f64..5.0).prop_flat_map(|(capacity, classes, mu)| {
        (
            proptest::collection::vec(0..=capacity, classes - 1),
            proptest::collection::vec(
                prop_oneof![Just(0.0), 0.0f64..(3.0 * capacity as f64 * mu)],
                classes,
            ),
            Just(mu),
            Just(capacity),
        )
            .prop_map(|(mut lower, rates, mu, capacity)| {
                lower.sort_unstable_by(|a, b| b.cmp(a));
                let mut thresholds = vec![capacity];
                thresholds.extend(lower);
                (thresholds, rates, mu)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn recursion_agrees_with_dense_solve((thresholds, rates, mu) in config()) {
        let t = ThresholdVector::fixed(thresholds).unwrap();
        let r = RateVector::new(rates).unwrap();
        let chain = build_chain(&t, &r, mu).unwrap();
        let fast = steady_state(&chain);
        let dense = steady_state_oracle(&chain).unwrap();
        for (a, b) in fast.probabilities().iter().zip(dense.probabilities()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn solution_properties((thresholds, rates, mu) in config()) {
        let t = ThresholdVector::fixed(thresholds).unwrap();
        let r = RateVector::new(rates).unwrap();
        let chain = build_chain(&t, &r, mu).unwrap();
        let dist = steady_state(&chain);

        let total: f64 = dist.probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);

        for i in 0..chain.capacity() {
            let up = chain.birth_rate(i) * dist.probabilities()[i];
            let down = chain.death_rate(i + 1) * dist.probabilities()[i + 1];
            prop_assert!(rel_close(up, down, 1e-10), "state {}: {} vs {}", i, up, down);
        }

        let report = blocking_report(&dist, &t, &r, mu).unwrap();
        for w in report.blocking.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(rel_close(report.mean_occupancy, report.carried_load, 1e-9));
        prop_assert!((0.0..=1.0).contains(&report.utilization));
    }

    #[test]
    fn dimensionless_load((thresholds, rates, mu) in config(), factor in 0.01f64..100.0) {
        let t = ThresholdVector::fixed(thresholds).unwrap();
        let r = RateVector::new(rates).unwrap();
        let base = analyze(&t, &r, mu).unwrap();
        let scaled = analyze(&t, &r.scaled(factor).unwrap(), mu * factor).unwrap();
        for (a, b) in base.blocking.iter().zip(&scaled.blocking) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((base.utilization - scaled.utilization).abs() < 1e-12);
    }

    #[test]
    fn shared_pool_is_erlang_b(capacity in 1usize..=150, rates in proptest::collection::vec(0.0f64..60.0, 1..5), mu in 0.5f64..2.0) {
        let classes = rates.len();
        let r = RateVector::new(rates).unwrap();
        let t = ThresholdVector::uniform(capacity, classes).unwrap();
        let report = analyze(&t, &r, mu).unwrap();
        let eb = erlang_b(capacity, r.total() / mu);
        for b in &report.blocking {
            prop_assert!((b - eb).abs() < 1e-12);
        }
    }

    #[test]
    fn top_class_beats_shared_pool_under_high_load(
        capacity in 2usize..=80,
        floor_share in 0.0f64..0.95,
        shares in proptest::collection::vec(0.05f64..1.0, 2..5),
        overload in 1.0f64..3.0,
    ) {
        let sum: f64 = shares.iter().sum();
        let mix = ClassMix::new(shares.iter().map(|s| s / sum).collect()).unwrap();
        let floor = ((capacity as f64 * floor_share) as usize).min(capacity - 1);
        let params = SystemParams::with_default_threshold(capacity, floor, 1.0, mix.len()).unwrap();
        let total = params.high_load_rate() * overload;
        let rates = mix.rates(total).unwrap();
        let thresholds = availability_thresholds(&rates, &params).unwrap();
        let report = analyze(&thresholds, &rates, 1.0).unwrap();
        let eb = erlang_b(capacity, total);
        if thresholds.as_slice().iter().any(|&n| n < capacity) {
            prop_assert!(report.blocking[0] < eb);
        } else {
            prop_assert!((report.blocking[0] - eb).abs() < 1e-12);
        }
    }
}
