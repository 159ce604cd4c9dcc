mod common;

use common::{linear, random_spd, rng};
use l1ac::certificate::bounds::alpha_bars_with;
use l1ac::certificate::{
    alpha_bars, analysis_matrices, compute_nu, dwell_time, extract_q, find_mode_lyapunov, max_ts,
    verify_reference_lyapunov, BoundInputs, CertifyOptions,
};
use l1ac::linalg::{self, Matrix, Vector};
use l1ac::model::{Mode, ModeSet};
use l1ac::reference::build_closedloop_matrices;
use l1ac::sim::{bounds_sweep, certify_scenario};
use proptest::prelude::*;
use rand::Rng;

fn scalar_modes(values: &[f64]) -> ModeSet {
    let s = |v| Matrix::from_element(1, 1, v);
    ModeSet::new(values.iter().map(|&a| Mode::new(s(a), s(1.0), s(1.0), s(1.0)).unwrap()).collect()).unwrap()
}

/// Largest eigenvalue of the symmetric part of `ĀᵀP̄ + P̄Ā + λP̄`.
fn decrease_margin(abar: &Matrix, p: &Matrix, lambda: f64) -> f64 {
    linalg::sym_max_eig(&(abar.transpose() * p + p * abar + p * lambda))
}

#[test]
fn diagonal_mode_certificate() {
    let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, -2.0]));
    let mode = Mode::new(a, Matrix::from_row_slice(2, 1, &[0.0, 1.0]), Matrix::from_row_slice(1, 2, &[1.0, 0.0]), Matrix::identity(1, 1)).unwrap();
    let c = find_mode_lyapunov(&ModeSet::new(vec![mode]).unwrap(), None).unwrap();
    // P = diag(1/2, 1/4) scaled to diag(2, 1), so -(AᵀP + PA) = 4I and λ = 4/2.
    assert!((&c.p[0] - Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]))).norm() < 1e-12);
    assert!((c.lambda - 2.0).abs() < 1e-12);
    assert_eq!(c.mu, 1.0);
    assert!(find_mode_lyapunov(&scalar_modes(&[-1.0]), Some(2.5)).is_err());
}

#[test]
fn benchmark_reference_certificate_holds_at_vertices_and_inside() {
    let scn = linear("benchmark");
    let refl = verify_reference_lyapunov(&scn.modes, &scn.sets, &scn.filter, None).unwrap();
    assert!(refl.feasible, "{:?}", refl.violation);
    assert!(refl.lambda > 0.0 && refl.mu >= 1.0);
    for (i, mode) in scn.modes.iter().enumerate() {
        let p = &refl.pbar[i];
        assert!(linalg::sym_min_eig(p) >= 1.0 - 1e-9);
        for theta in &scn.sets.theta {
            for omega in &scn.sets.omega {
                let cl = build_closedloop_matrices(mode, theta, omega, &scn.filter).unwrap();
                assert!(decrease_margin(&cl.abar, p, refl.lambda) <= 1e-9 * linalg::norm2(p));
            }
        }
        for (j, q) in refl.pbar.iter().enumerate() {
            if i != j {
                assert!(linalg::sym_min_eig(&(q * refl.mu - p)) >= -1e-9 * refl.mu);
            }
        }
    }
    // Convex combinations of the vertices inherit the decrease.
    let mut r = rng(4);
    for _ in 0..50 {
        let wt: Vec<f64> = scn.sets.theta.iter().map(|_| r.random_range(0.0..1.0)).collect();
        let wo: Vec<f64> = scn.sets.omega.iter().map(|_| r.random_range(0.0..1.0)).collect();
        let (st, so): (f64, f64) = (wt.iter().sum(), wo.iter().sum());
        let theta = scn.sets.theta.iter().zip(&wt).fold(Matrix::zeros(2, 1), |acc, (v, w)| acc + v * (w / st));
        let omega = scn.sets.omega.iter().zip(&wo).fold(Matrix::zeros(1, 1), |acc, (v, w)| acc + v * (w / so));
        for (i, mode) in scn.modes.iter().enumerate() {
            let cl = build_closedloop_matrices(mode, &theta, &omega, &scn.filter).unwrap();
            assert!(decrease_margin(&cl.abar, &refl.pbar[i], refl.lambda) <= 1e-9 * linalg::norm2(&refl.pbar[i]));
        }
    }
}

#[test]
fn dwell_time_bounds_simulated_lyapunov_decay() {
    let scn = linear("benchmark");
    let cert = find_mode_lyapunov(&scn.modes, None).unwrap();
    let a_star = 0.5;
    let tau = dwell_time(cert.lambda, cert.mu, a_star).unwrap();
    assert!(tau > 0.0);
    let h = 1e-3;
    let steps = (tau / h).ceil() as usize;
    let mut r = rng(9);
    for _ in 0..5 {
        let mut x = Vector::from_vec(vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
        let v = |x: &Vector, i: usize| (x.transpose() * &cert.p[i] * x)[(0, 0)];
        let v0 = v(&x, 0);
        let mut t = 0.0;
        for k in 0..8 {
            let mode = k % 2;
            let e = linalg::expm(&scn.modes.get(mode).a, h).unwrap();
            for _ in 0..steps {
                let before = v(&x, mode);
                x = &e * &x;
                // Along a flow V decays at least at rate λ.
                assert!(v(&x, mode) <= before * (-cert.lambda * h).exp() * (1.0 + 1e-9));
            }
            t += steps as f64 * h;
            let next = (k + 1) % 2;
            assert!(v(&x, next) <= v0 * (-a_star * cert.lambda * t).exp() * (1.0 + 1e-9));
        }
    }
}

#[test]
fn dwell_time_closed_form() {
    assert!((dwell_time(1.0, std::f64::consts::E, 0.5).unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(dwell_time(0.7, 1.0, 0.5).unwrap(), 0.0);
    assert!(dwell_time(0.0, 2.0, 0.5).is_err());
    assert!(dwell_time(1.0, 2.0, 1.0).is_err());
}

#[test]
fn scalar_alpha3() {
    let ab = alpha_bars(&scalar_modes(&[-1.0]), 0.1).unwrap();
    assert!((ab.alpha3 - 0.0951626).abs() < 1e-6);
}

#[test]
fn lemma_gain_grows_with_ts() {
    let scn = linear("benchmark");
    let mut prev = 0.0;
    for ts in [2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2] {
        let g = alpha_bars(&scn.modes, ts).unwrap().lemma_gain();
        assert!(g > prev, "gain {g} at Ts={ts} not above {prev}");
        prev = g;
    }
}

#[test]
fn max_ts_matches_grid_scan() {
    let scn = linear("benchmark");
    let inputs = BoundInputs { d_omega: 1e-4, d_theta: 2.8e-4, d_d: 0.5, rho: 1.0, rho_u: 5.0 };
    let delta0 = 5e-3;
    let found = max_ts(&scn.modes, &inputs, delta0, 0.01).unwrap();
    let mut best = 0.0;
    for i in 1..=400 {
        let ts = 0.01 * i as f64 / 400.0;
        let (a1, a2, a3) = alpha_bars_with(&scn.modes, ts, 200).unwrap();
        if (a1 + a2 + 1.0) * a3 * inputs.drive() < delta0 {
            best = ts;
        }
    }
    assert!(best > 0.0 && best < 0.01);
    assert!((found - best).abs() <= 0.01 * best, "bisection {found} vs grid {best}");
}

#[test]
fn schur_block_against_inverse_oracle() {
    let mut r = rng(6);
    let p = random_spd(&mut r, 6, 0.3);
    let parts = extract_q(&p, 2).unwrap();
    let inv = p.clone().try_inverse().unwrap();
    let want = inv.view((2, 2), (4, 4)).into_owned().try_inverse().unwrap();
    assert!(common::rel_err(&parts.q, &want) < 1e-10);
    assert!(linalg::is_spd(&parts.q));
    assert_eq!(parts.r.shape(), (2, 4));
}

#[test]
fn nu_makes_the_block_matrix_negative_definite() {
    let scn = linear("benchmark");
    let refl = verify_reference_lyapunov(&scn.modes, &scn.sets, &scn.filter, None).unwrap();
    let a = 0.25;
    let la = refl.lambda * a;
    for (i, mode) in scn.modes.iter().enumerate() {
        let pbar = &refl.pbar[i];
        let q = extract_q(pbar, 2).unwrap().q;
        let am = analysis_matrices(mode, &scn.sets.omega[0], &scn.filter).unwrap();
        let nu = compute_nu(&[(pbar, &q, &am.hbar)], refl.lambda, a).unwrap();
        let block = |nu: f64| {
            let (big, small) = (pbar.nrows(), q.nrows());
            let ph = pbar * &am.hbar;
            let mut mm = Matrix::zeros(big + small, big + small);
            mm.view_mut((0, 0), (big, big)).copy_from(&(-la * pbar));
            mm.view_mut((0, big), (big, small)).copy_from(&ph);
            mm.view_mut((big, 0), (small, big)).copy_from(&ph.transpose());
            mm.view_mut((big, big), (small, small)).copy_from(&(-nu * la * &q));
            linalg::sym_max_eig(&mm)
        };
        assert!(block(nu) < 0.0);
        // Just below the unmargined threshold the block loses definiteness.
        assert!(block(nu / 1.05 * 0.99) > 0.0);
    }
}

#[test]
fn deltas_scale_with_delta0() {
    let scn = linear("benchmark");
    let at = |d0: f64| {
        let opts = CertifyOptions { delta0: Some(d0), ..CertifyOptions::default() };
        certify_scenario(&scn, opts).unwrap().constants.unwrap()
    };
    let (c1, c2) = (at(0.01), at(0.03));
    assert!((c2.delta1 / c1.delta1 - 3.0).abs() < 1e-9);
    assert!((c2.delta2 / c1.delta2 - 3.0).abs() < 1e-9);
    assert!((c1.delta1_over_delta0 - c2.delta1_over_delta0).abs() < 1e-12 * c1.delta1_over_delta0);
    // A δ0 far below the achievable lhs fails the Ts condition.
    let tight = at(1e-6);
    assert!(!tight.ts_condition.satisfied);
}

#[test]
fn large_ts_is_flagged() {
    let scn = linear("ts_too_large");
    let rep = certify_scenario(&scn, CertifyOptions::default()).unwrap();
    assert!(!rep.feasible);
    assert!(rep.first_violation().unwrap().starts_with("Ts condition"), "{:?}", rep.violations);
    let ok = certify_scenario(&linear("benchmark"), CertifyOptions::default()).unwrap();
    assert!(ok.feasible, "{:?}", ok.violations);
    let c = ok.constants.unwrap();
    assert!(c.ts_condition.satisfied && c.ts_condition.lhs < c.delta0);
    assert!(c.Ts <= c.ts_condition.max_ts);
}

#[test]
fn bounds_sweep_single_point_matches_certificate() {
    let scn = linear("benchmark");
    let (rep, rows) = bounds_sweep(&scn, CertifyOptions::default(), &[scn.schedule.ts]).unwrap();
    let c = rep.constants.unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].delta0 - c.delta0).abs() <= 1e-12 * c.delta0);
    assert!((rows[0].delta1 - c.delta1).abs() <= 1e-12 * c.delta1);
    assert!((rows[0].lhs - c.ts_condition.lhs).abs() <= 1e-12 * c.ts_condition.lhs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dwell_time_monotone(lambda in 0.05f64..5.0, mu in 1.001f64..10.0, a_star in 0.05f64..0.9, f in 1.01f64..2.0) {
        let base = dwell_time(lambda, mu, a_star).unwrap();
        prop_assert!(dwell_time(lambda * f, mu, a_star).unwrap() < base);
        prop_assert!(dwell_time(lambda, mu * f, a_star).unwrap() > base);
        prop_assert!(dwell_time(lambda, mu, (a_star * f).min(0.99)).unwrap() >= base);
    }
}
