use etrc_core::analysis::{compute_metrics, read_csv, write_csv};
use etrc_core::apetm::{saturate, Decision, TriggerMode, TriggerParams, TriggerState};
use etrc_core::config::ScenarioConfig;
use etrc_core::eid::ShapingFilter;
use etrc_core::numerics::{care_residual, left_pseudo_inverse, matrix_exponential, solve_care, HistoryBuffer, Mat, Vector};
use etrc_core::observer::estimation_error;
use etrc_core::plant::LtiPlant;
use etrc_core::sim::{Trace, TraceDims, TraceRecord};
use etrc_core::synthesis::{feedback_law, GainSet};
use proptest::collection::vec;
use proptest::prelude::*;

fn nominal_plant() -> LtiPlant {
    ScenarioConfig::nominal().plant().unwrap()
}

fn matrix(rows: usize, cols: usize, lim: f64) -> impl Strategy<Value = Mat> {
    vec(-lim..lim, rows * cols).prop_map(move |v| Mat::from_row_slice(rows, cols, &v))
}

fn vector(n: usize, lim: f64) -> impl Strategy<Value = Vector> {
    vec(-lim..lim, n).prop_map(Vector::from_vec)
}

fn trigger(mode: TriggerMode, kappa: f64, rho0: f64) -> TriggerState {
    TriggerState::new(
        TriggerParams {
            period: 0.5,
            rho_lo: 0.01,
            rho_hi: 0.99,
            rho0,
            kappa,
            psi1: Mat::identity(3, 3),
            psi2: Mat::identity(3, 3),
            mode,
        },
        3,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn care_solution_is_symmetric_psd(
        a in matrix(4, 4, 3.0),
        b in matrix(4, 2, 2.0),
        qd in vec(0.1f64..10.0, 4),
        rd in vec(0.1f64..5.0, 2),
    ) {
        let q = Mat::from_diagonal(&Vector::from_vec(qd));
        let r = Mat::from_diagonal(&Vector::from_vec(rd));
        // random pairs are controllable with probability one; skip the rare failures
        if let Ok(sol) = solve_care(&a, &b, &q, &r) {
            prop_assert!((&sol.k - sol.k.transpose()).norm() < 1e-10 * sol.k.norm().max(1.0));
            let min = sol.k.clone().symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10, "min eigenvalue {}", min);
            prop_assert!(care_residual(&a, &b, &q, &r, &sol.k).unwrap() < 1e-9);
        }
    }

    #[test]
    fn pseudo_inverse_is_left_inverse(rows in 3usize..=10, cols in 1usize..=3, seed in vec(-1.0f64..1.0, 30)) {
        let mut b = Mat::from_fn(rows, cols, |i, j| seed[(i * 3 + j) % 30]);
        for j in 0..cols {
            b[(j, j)] += 3.0;
        }
        let bp = left_pseudo_inverse(&b).unwrap();
        prop_assert!((&bp * &b - Mat::identity(cols, cols)).amax() < 1e-12);
    }

    #[test]
    fn expm_semigroup(m in matrix(4, 4, 1.0), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        // shift into the left half plane, then bound the norm by 5
        let mut a = &m - Mat::identity(4, 4) * (m.norm() + 0.1);
        let norm = a.norm();
        if norm > 5.0 {
            a *= 5.0 / norm;
        }
        let lhs = matrix_exponential(&a, t1 + t2).unwrap();
        let rhs = matrix_exponential(&a, t1).unwrap() * matrix_exponential(&a, t2).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn history_round_trip(values in vec(vector(2, 1e6), 1..50)) {
        let mut h = HistoryBuffer::for_delay(1e-3, 0.1, 0.0, Vector::zeros(2)).unwrap();
        for (k, v) in values.iter().enumerate() {
            h.push(v.clone());
            let t = k as f64 * 1e-3;
            prop_assert_eq!(h.sample(t).unwrap(), v);
        }
    }

    #[test]
    fn reference_is_periodic(t in -50.0f64..50.0) {
        let r = ScenarioConfig::nominal().reference();
        prop_assert!((r.eval(t)[0] - r.eval(t + 2.0)[0]).abs() < 1e-12);
    }

    #[test]
    fn disturbance_zero_outside_windows(t in -5.0f64..30.0) {
        prop_assume!(!(6.0..=8.0).contains(&t) && !(12.0..=18.0).contains(&t));
        prop_assert_eq!(ScenarioConfig::nominal().disturbance().eval(t)[0], 0.0);
    }

    #[test]
    fn plant_derivative_is_linear(
        x1 in vector(3, 10.0), x2 in vector(3, 10.0),
        u1 in vector(1, 10.0), u2 in vector(1, 10.0),
        w1 in vector(1, 10.0), w2 in vector(1, 10.0),
    ) {
        let p = nominal_plant();
        let sum = p.derivative(&(&x1 + &x2), &(&u1 + &u2), &(&w1 + &w2)).unwrap();
        let parts = p.derivative(&x1, &u1, &w1).unwrap() + p.derivative(&x2, &u2, &w2).unwrap();
        prop_assert!((sum - parts).amax() < 1e-12 * 3e4 * 20.0);
    }

    #[test]
    fn estimation_error_antisymmetric(x in vector(3, 100.0), xh in vector(3, 100.0)) {
        prop_assert_eq!(estimation_error(&x, &xh).unwrap(), -estimation_error(&xh, &x).unwrap());
    }

    #[test]
    fn filter_has_unit_dc_gain(w_f in 0.01f64..1e4) {
        let f = ShapingFilter::low_pass(w_f).unwrap();
        prop_assert!((f.dc_gain() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_stays_confined(
        steps in vec(vector(3, 5.0), 1..80),
        kappa in 0.0f64..2.0,
        rho0 in 0.01f64..0.99,
    ) {
        let mut trig = trigger(TriggerMode::Adaptive, kappa, rho0);
        let mut x = Vector::zeros(3);
        for (k, s) in steps.iter().enumerate() {
            x += s;
            trig.check_and_update(&x, k as f64 * 0.5).unwrap();
            prop_assert!((0.01..=0.99).contains(&trig.threshold()));
        }
    }

    #[test]
    fn trigger_soundness(steps in vec(vector(3, 1.0), 1..80), kappa in 0.0f64..1.0) {
        let mut trig = trigger(TriggerMode::Adaptive, kappa, 0.5);
        let mut x = Vector::from_element(3, 1.0);
        for (k, s) in steps.iter().enumerate() {
            x += s * 0.1;
            let rho_before = trig.threshold();
            let held_before = trig.held_value().cloned();
            match trig.check_and_update(&x, k as f64 * 0.5).unwrap() {
                Decision::Transmit => prop_assert_eq!(trig.error_form(&x), 0.0),
                Decision::Hold => {
                    let e = held_before.unwrap() - &x;
                    prop_assert!(e.dot(&e) <= rho_before * x.dot(&x));
                }
            }
        }
    }

    #[test]
    fn frozen_threshold_matches_static(steps in vec(vector(3, 1.0), 1..80), rho0 in 0.01f64..0.99) {
        let mut adaptive = trigger(TriggerMode::Adaptive, 0.0, rho0);
        let mut fixed = trigger(TriggerMode::Static, 0.0, rho0);
        let mut x = Vector::from_element(3, 0.5);
        for (k, s) in steps.iter().enumerate() {
            x += s * 0.2;
            let t = k as f64 * 0.5;
            prop_assert_eq!(adaptive.check_and_update(&x, t).unwrap(), fixed.check_and_update(&x, t).unwrap());
        }
        prop_assert_eq!(adaptive.event_log(), fixed.event_log());
    }

    #[test]
    fn saturate_is_idempotent(x in -10.0f64..10.0, lo in -5.0f64..0.0, span in 0.0f64..5.0) {
        let once = saturate(x, lo, lo + span).unwrap();
        prop_assert_eq!(saturate(once, lo, lo + span).unwrap(), once);
        prop_assert!(once >= lo && once <= lo + span);
    }

    #[test]
    fn feedback_law_is_linear(
        kp in matrix(1, 3, 100.0), kc in matrix(1, 1, 100.0),
        x1 in vector(3, 10.0), x2 in vector(3, 10.0),
        v1 in vector(1, 10.0), v2 in vector(1, 10.0),
        f1 in vector(1, 10.0), f2 in vector(1, 10.0),
    ) {
        let g = GainSet::fixed(kp, kc, Mat::zeros(5, 5), Mat::zeros(3, 1));
        let sum = feedback_law(&g, &(&x1 + &x2), &(&v1 + &v2), &(&f1 + &f2)).unwrap();
        let parts = feedback_law(&g, &x1, &v1, &f1).unwrap() + feedback_law(&g, &x2, &v2, &f2).unwrap();
        prop_assert!((sum - parts).amax() < 1e-12 * 1e4);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(values in vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 40)) {
        let trace = synthetic_trace(&values);
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.records.len(), trace.records.len());
        for (a, b) in back.records.iter().zip(&trace.records) {
            prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
            for (x, y) in a.eps.iter().zip(b.eps.iter()).chain(a.x.iter().zip(b.x.iter())) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(a.rho.to_bits(), b.rho.to_bits());
            prop_assert_eq!(a.event, b.event);
        }
    }

    #[test]
    fn config_overrides_round_trip(kappa in 0.0f64..1.0, w_a in 1.0f64..500.0, eid in any::<bool>()) {
        let cfg = ScenarioConfig::with_overrides(
            ScenarioConfig::bundled_text(),
            &[format!("kappa={kappa:e}"), format!("w_a={w_a:e}"), format!("eid={}", if eid { "on" } else { "off" })],
        )
        .unwrap();
        prop_assert_eq!(cfg.trigger.kappa, kappa);
        prop_assert_eq!(cfg.mrc.w_a, w_a);
        prop_assert_eq!(cfg.eid.enabled, eid);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

fn synthetic_trace(values: &[f64]) -> Trace {
    let records = values
        .chunks(4)
        .enumerate()
        .map(|(k, c)| {
            let one = |v: f64| Vector::from_element(1, v);
            TraceRecord {
                t: k as f64 * 1e-3,
                y: one(c[0]),
                y_r: one(c[1]),
                eps: one(c[1] - c[0]),
                u: one(c[2]),
                u_f: one(c[2]),
                w: one(0.0),
                w_hat: one(c[3]),
                w_tilde: one(-c[3]),
                x: Vector::from_vec(vec![c[0], c[1], c[2]]),
                x_hat: Vector::from_vec(vec![c[3], c[2], c[1]]),
                x_held: Vector::zeros(3),
                x_a: one(c[3]),
                v: one(c[0]),
                rho: c[3].abs(),
                event: k % 2 == 0,
            }
        })
        .collect();
    Trace { dims: TraceDims { states: 3, inputs: 1, outputs: 1, disturbances: 1 }, step: 1e-3, records, event_log: vec![] }
}

/// Direct summation in a different order from the library.
fn brute_force(errors: &[f64]) -> (f64, f64, f64) {
    let n = errors.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for e in errors.iter().rev() {
        sq += e * e;
        abs += e.abs();
    }
    ((sq / n).sqrt(), sq / n, abs / n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn metrics_match_brute_force(errors in vec(-1.0f64..1.0, 10_000)) {
        let trace = synthetic_trace(&errors.iter().flat_map(|e| [0.0, *e, 0.0, 0.0]).collect::<Vec<_>>());
        let m = compute_metrics(&trace, [0.0, 100.0]).unwrap();
        let (rmse, mse, mae) = brute_force(&errors);
        prop_assert!((m.rmse - rmse).abs() < 1e-12);
        prop_assert!((m.mse - mse).abs() < 1e-12);
        prop_assert!((m.mae - mae).abs() < 1e-12);
        prop_assert!((m.rmse * m.rmse - m.mse).abs() < 1e-12);
        prop_assert!(m.mae <= m.rmse);
    }
}
