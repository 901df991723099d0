#[path = "support/oracles.rs"]
mod oracles;

use oracles::{t1_reference, t3_reference, t4_reference};
use proxcmo::dynamics::DynamicsVariant;
use proxcmo::experiments::{default_gains, seeded_rng, Experiment};
use proxcmo::gains::{
    k2_critical, theorem1_certify, theorem1_epsilon_bound, theorem3_certify, theorem4_certify,
};
use rand::Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn theorem1_matches_closed_forms() {
    let mut rng = seeded_rng(21, 0);
    let mut feasible = 0;
    for _ in 0..1000 {
        let m_f = rng.random_range(0.01..2.0);
        let l_f = m_f * rng.random_range(1.0..10.0);
        let mu = rng.random_range(0.05..5.0);
        let k_i = rng.random_range(0.1..10.0);
        let bound = theorem1_epsilon_bound(m_f, l_f, mu);
        let eps = bound * rng.random_range(0.01..1.2);
        let a1 = rng.random_range(0.01..5.0);
        let cert = theorem1_certify(m_f, l_f, mu, k_i, eps, a1);
        let (ok, rate, kp, rho) = t1_reference(m_f, l_f, mu, k_i, eps, a1);
        assert_eq!(cert.feasible, ok);
        assert!(close(cert.rate_r, rate));
        assert!(close(cert.kp.unwrap(), kp));
        assert!(close(cert.lyapunov_weights.rho.unwrap(), rho));
        if ok {
            feasible += 1;
            assert!(cert.rate_r > 0.0 && rho > 0.0);
        } else {
            assert!(!cert.violated_conditions.is_empty());
        }
    }
    assert!(feasible > 300, "{feasible}");
}

#[test]
fn theorem3_matches_closed_forms() {
    let mut rng = seeded_rng(22, 0);
    for _ in 0..1000 {
        let m_f = rng.random_range(0.01..2.0);
        let l_f = m_f * rng.random_range(1.0..10.0);
        let mu = rng.random_range(0.05..5.0);
        let k1 = rng.random_range(-1.0..5.0);
        let k3 = rng.random_range(-1.0..5.0);
        let k2 = rng.random_range(-200.0..1.0);
        let cert = theorem3_certify(k1, k2, k3, mu, m_f, l_f);
        let (ok, rate, crit) = t3_reference(k1, k2, k3, mu, m_f, l_f);
        assert_eq!(cert.feasible, ok);
        assert!(close(cert.rate_r, rate));
        if k1 > 0.0 && k3 > 0.0 {
            assert!(close(cert.k2_crit.unwrap(), crit));
        }
    }
}

#[test]
fn theorem4_matches_grid_scan() {
    let mut rng = seeded_rng(23, 0);
    let mut feasible = 0;
    for i in 0..1000 {
        let m_f = rng.random_range(0.1..2.0);
        let l_f = m_f * rng.random_range(1.0..3.0);
        let mu = rng.random_range(0.2..3.0);
        let k1 = rng.random_range(0.1..3.0);
        // most tuples honour the k1 = k3 coupling
        let k3 = if i % 10 == 0 { k1 * 1.5 } else { k1 };
        let k_i = rng.random_range(0.1..5.0);
        let k_p = rng.random_range(0.01..2.0);
        let a1 = rng.random_range(0.1..3.0);
        let k2 = -rng.random_range(0.5..100.0);
        let cert = theorem4_certify(k1, k2, k3, mu, m_f, l_f, a1, k_i, k_p);
        let (ok, rate) = t4_reference(k1, k2, k3, mu, m_f, l_f, a1, k_i, k_p);
        assert_eq!(cert.feasible, ok, "{cert:?}");
        assert!(close(cert.rate_r, rate), "{} vs {rate}", cert.rate_r);
        if k3 != k1 {
            assert!(cert.violates("proof coupling k1=k3"));
        }
        feasible += usize::from(ok);
    }
    assert!(feasible > 50, "{feasible}");
}

#[test]
fn reference_tuple_for_theorem4() {
    let cert = theorem4_certify(1.0, -25.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1);
    assert!(cert.feasible);
    assert!(close(cert.k2_crit.unwrap(), -1.5));
    assert!(cert.rate_r > 0.0);
    let (_, rate) = t4_reference(1.0, -25.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1);
    assert!(close(cert.rate_r, rate));
}

#[test]
fn lasso_gains_fail_theorem3_by_sign() {
    let g = default_gains(Experiment::Lasso, DynamicsVariant::DynamicProxCmo, None).unwrap();
    let cert = theorem3_certify(g.k1, g.k2, g.k3, g.mu, 0.5, 2.0);
    assert!(!cert.feasible);
    assert!(cert.violates("k1>0"));
    assert!(cert.violates("k3>0"));
    assert_eq!(cert.rate_r, 0.0);
}

#[test]
fn theorem4_feasible_implies_theorem3_feasible() {
    let mut rng = seeded_rng(24, 0);
    for _ in 0..500 {
        let m_f = rng.random_range(0.1..2.0);
        let l_f = m_f * rng.random_range(1.0..3.0);
        let mu = rng.random_range(0.2..3.0);
        let k1 = rng.random_range(0.1..3.0);
        let k2 = -rng.random_range(0.5..100.0);
        let t4 = theorem4_certify(k1, k2, k1, mu, m_f, l_f, 1.0, 1.0, 0.5);
        if t4.feasible {
            assert!(theorem3_certify(k1, k2, k1, mu, m_f, l_f).feasible);
        }
    }
}

#[test]
fn theorem3_rate_is_monotone_in_k2() {
    let (k1, k3, mu, m_f, l_f) = (1.5, 0.7, 0.8, 0.4, 1.9);
    let crit = k2_critical(k1, k3, mu, m_f, l_f);
    let mut last = f64::INFINITY;
    for j in 0..200 {
        let k2 = crit - 5.0 + 5.0 * j as f64 / 200.0;
        let r = theorem3_certify(k1, k2, k3, mu, m_f, l_f).rate_r;
        assert!(r <= last + 1e-15);
        last = r;
    }
    assert!(!theorem3_certify(k1, crit, k3, mu, m_f, l_f).feasible);
}
