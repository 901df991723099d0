use proxcmo::dynamics::{ClosedLoop, DynamicsVariant};
use proxcmo::experiments::lasso::{build_lasso, run_lasso_method};
use proxcmo::experiments::shidoku::{
    initial_cells, problem_for, run_shidoku_from, ShidokuInstance, SOLUTION,
};
use proxcmo::experiments::sysid::{build_sysid_noise_free, run_sysid};
use proxcmo::experiments::{default_gains, default_integrator, Experiment};
use proxcmo::integrate::IntegratorConfig;

#[test]
fn lasso_dynamic_and_pi_pgd_agree() {
    let (inst, p) = build_lasso(8, 12, 3, 1.0, 3).unwrap();
    let cfg = IntegratorConfig {
        t_end: 3000.0,
        max_step: 1.0,
        stop_residual: Some(1e-10),
        record_stride: 100,
        ..IntegratorConfig::default()
    };
    let gamma = 1.0 / p.constants().unwrap().l_f;
    let mut finals = Vec::new();
    for method in [DynamicsVariant::DynamicProxCmo, DynamicsVariant::PiPgd] {
        let g = default_gains(Experiment::Lasso, method, Some(gamma)).unwrap();
        let run = run_lasso_method(&inst, &p, method, g, &cfg)
            .unwrap()
            .unwrap();
        assert!(run.final_kkt.max() < 1e-6, "{method}: {:?}", run.final_kkt);
        finals.push(run.final_x);
    }
    assert!((&finals[0] - &finals[1]).amax() < 1e-5);
    assert!((&finals[0] - &inst.x_true).amax() < 1e-5);
}

#[test]
fn pi_pgd_is_at_rest_on_a_kkt_point() {
    // a converged dynamic run supplies the KKT pair (x, λ)
    let (inst, p) = build_lasso(6, 10, 2, 1.0, 8).unwrap();
    let g = default_gains(Experiment::Lasso, DynamicsVariant::DynamicProxCmo, None).unwrap();
    let cfg = IntegratorConfig {
        t_end: 3000.0,
        max_step: 1.0,
        stop_residual: Some(1e-11),
        ..IntegratorConfig::default()
    };
    let run = run_lasso_method(&inst, &p, DynamicsVariant::DynamicProxCmo, g, &cfg)
        .unwrap()
        .unwrap();
    let s = run.trajectory.final_state();
    let probe = proxcmo::problem::SystemState::new(s.x.clone(), None, s.lambda.clone());
    let pg = proxcmo::dynamics::GainSet::pi_pgd(g.mu, 1.0, 1.0);
    let cl = ClosedLoop::new(&p, DynamicsVariant::PiPgd, pg).unwrap();
    assert!(cl.rhs(&probe).unwrap().to_flat().amax() < 1e-8);
}

#[test]
fn shidoku_static_solves_from_one_start() {
    let inst = ShidokuInstance::default();
    let method = DynamicsVariant::StaticProxCmo;
    let p = problem_for(&inst, method).unwrap();
    let g = default_gains(Experiment::Shidoku, method, None).unwrap();
    let run = run_shidoku_from(
        &inst,
        &p,
        method,
        g,
        initial_cells(0, 0),
        &default_integrator(Experiment::Shidoku),
        0,
    )
    .unwrap();
    assert!(run.success);
    assert_eq!(run.grid.unwrap(), SOLUTION);
}

#[test]
fn sysid_noise_free_bounds_collapse_on_least_squares() {
    let (inst, theta) = build_sysid_noise_free(5, 1e-6).unwrap();
    let method = DynamicsVariant::StaticProxCmo;
    let g = default_gains(Experiment::Sysid, method, None).unwrap();
    let r = run_sysid(&inst, method, g, &default_integrator(Experiment::Sysid)).unwrap();
    assert_eq!(r.failures(), 0);
    for i in 0..theta.len() {
        assert!(r.theta_lower[i] <= r.theta_hat[i] && r.theta_hat[i] <= r.theta_upper[i]);
        assert!((r.theta_hat[i] - theta[i]).abs() < 1e-4);
    }
    assert!(r.max_constraint_residual < 1e-5);
}
