use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use arolc::control::{adapt_gain, switching_control, ArolcConfig, ArolcState};
use arolc::linalg::{
    invert, lyapunov_residual, max_entry, solve_lyapunov, spectral_norm, symmetric_eigenvalues,
};
use arolc::metrics::{total_variation, MetricsReport};
use arolc::stability::{
    bound_formula, build_error_system, delay_margin, BoundCase, BoundParams, GainSet,
};

fn matrix(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0f64..1.0, m * m).prop_map(move |v| DMatrix::from_vec(m, m, v))
}

fn sized_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=6).prop_flat_map(matrix)
}

fn cfg(alpha: f64, eps: f64) -> ArolcConfig {
    let g = GainSet::scalar(2, 1.0, 1.0, 1.0, 1.1, 1.0);
    let sys = build_error_system(&g).unwrap();
    ArolcConfig::from_error_system(
        g.k1.clone(),
        g.k2.clone(),
        &sys,
        alpha,
        eps,
        0.001,
        None,
        0.01,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn lyapunov_residual_is_small(r in sized_matrix(), delta in 0.1f64..2.0) {
        let m = r.nrows();
        let a = -(r.transpose() * &r + DMatrix::identity(m, m) * delta);
        let q = DMatrix::identity(m, m) + r.transpose() * &r;
        let p = solve_lyapunov(&a, &q).unwrap();
        prop_assert!(lyapunov_residual(&a, &p, &q) <= 1e-10 * max_entry(&q));
    }

    #[test]
    fn spectral_norm_transpose_invariant(m in sized_matrix()) {
        let a = spectral_norm(&m);
        let b = spectral_norm(&m.transpose());
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn double_inversion(r in sized_matrix()) {
        let m = r.nrows();
        let a = &r * r.transpose() + DMatrix::identity(m, m);
        let back = invert(&invert(&a).unwrap()).unwrap();
        prop_assert!((back - &a).amax() <= 1e-9 * a.amax());
    }

    #[test]
    fn eigenvalues_scale(r in sized_matrix(), k in 0.1f64..10.0) {
        let s = &r + r.transpose();
        let base = symmetric_eigenvalues(&s).unwrap();
        let scaled = symmetric_eigenvalues(&(&s * k)).unwrap();
        for (x, y) in base.iter().zip(&scaled) {
            prop_assert!((x * k - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn margin_invariant_to_q_scaling(k1 in 0.5f64..4.0, k2 in 0.5f64..4.0, scale in 0.1f64..10.0) {
        let g = GainSet::scalar(1, k1, k2, 1.0, 1.1, 1.0);
        let gs = GainSet::scalar(1, k1, k2, scale, 1.1, 1.0);
        let (a, b) = (delay_margin(&g).unwrap(), delay_margin(&gs).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn margin_independent_of_joint_count(k1 in 0.5f64..4.0, k2 in 0.5f64..4.0, n in 2usize..5) {
        let one = delay_margin(&GainSet::scalar(1, k1, k2, 1.0, 1.1, 1.0)).unwrap();
        let many = delay_margin(&GainSet::scalar(n, k1, k2, 1.0, 1.1, 1.0)).unwrap();
        prop_assert!((one - many).abs() <= 1e-9 * one);
    }

    #[test]
    fn bounds_shrink_as_psi_grows(lam in 0.01f64..5.0, bump in 0.01f64..5.0, c in 0.0f64..2.0, c_hat in 0.01f64..2.0) {
        let bp = BoundParams { c, big_gamma: 0.05, theta_norm: 0.1, alpha: 2.0, epsilon: 0.1, gamma: 0.001, c_hat, h: 0.05 };
        for case in BoundCase::ALL {
            let lo = bound_formula(case, lam, 1.2, &bp);
            let hi = bound_formula(case, lam + bump, 1.2, &bp);
            prop_assert!(hi <= lo * (1.0 + 1e-12), "{case:?}");
        }
    }

    #[test]
    fn gain_never_below_gamma(steps in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..200), c0 in 0.001f64..3.0) {
        let cfg = cfg(2.0, 0.1);
        let mut st = ArolcState { c_hat: c0, s_prev: None, t_prev: 0.0 };
        for (k, (a, b)) in steps.iter().enumerate() {
            st = adapt_gain(&st, &DVector::from_vec(vec![*a, *b]), (k + 1) as f64 * 0.01, &cfg);
            prop_assert!(st.c_hat >= cfg.gamma);
        }
    }

    #[test]
    fn switching_term_bounded_and_continuous(a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.001f64..5.0, eps in 0.01f64..1.0) {
        let cfg = cfg(2.0, eps);
        let s = DVector::from_vec(vec![a, b]);
        let du = switching_control(&s, c, &cfg);
        prop_assert!(du.norm() <= cfg.alpha * c * (1.0 + 1e-12));
        if s.norm() > 1e-9 {
            let dir = s.normalize();
            let inside = switching_control(&(&dir * (eps * (1.0 - 1e-13))), c, &cfg);
            let edge = switching_control(&(&dir * eps), c, &cfg);
            prop_assert!((inside - edge).norm() < 1e-11 * (1.0 + cfg.alpha * c));
        }
    }

    #[test]
    fn total_variation_properties(u in proptest::collection::vec(-10.0f64..10.0, 2..50), shift in -5.0f64..5.0) {
        let zeros = vec![0.0; u.len()];
        let base = total_variation(&u, &zeros).unwrap();
        let shifted: Vec<f64> = u.iter().map(|x| x + shift).collect();
        prop_assert!((total_variation(&shifted, &zeros).unwrap() - base).abs() <= 1e-9 * (1.0 + base));
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        prop_assert!((total_variation(&neg, &zeros).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
        let mid = u.len() / 2;
        let left = total_variation(&u[..=mid], &zeros[..=mid]).unwrap();
        let right = total_variation(&u[mid..], &zeros[mid..]).unwrap();
        prop_assert!((left + right - base).abs() <= 1e-9 * (1.0 + base));
        prop_assert!(total_variation(&u, &u).unwrap() == 2.0 * base);
    }

    #[test]
    fn metrics_json_roundtrip(ae in proptest::collection::vec(-1e6f64..1e6, 0..4), tv in 0.0f64..1e9, rt in 0.0f64..100.0, hash in "[0-9a-f]{0,64}") {
        let r = MetricsReport { pct_ae_per_dim: ae.iter().map(|x| x * 40.0).collect(), ae_per_dim: ae, tv, sup_error_tail: tv / 3.0, runtime_s: rt, scenario_hash: hash };
        prop_assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
    }
}
