mod common;

use common::{max_abs_diff, random_instance, rng};
use ndarray::{array, Array2};
use nested_distance::ot::{
    entropy, gamma_heuristic, gibbs_kernel, reg_ot, sinkhorn, solve_exact, SinkhornResult,
};
use nested_distance::{CostMatrix, DiscreteDistribution, Error, RegOtConfig, SinkhornConfig};
use proptest::prelude::*;

fn dist(w: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::new(w.to_vec()).unwrap()
}

fn cfg(gamma: f64, log_domain: bool) -> SinkhornConfig {
    SinkhornConfig {
        gamma,
        tol: 1e-9,
        max_iter: 100_000,
        log_domain,
    }
}

/// Largest relative gap between the plan and `u_i G_ij v_j` rebuilt from the
/// returned scalings.
fn factorization_gap(res: &SinkhornResult, c: &CostMatrix, gamma: f64) -> f64 {
    let g = gibbs_kernel(c, gamma);
    let (u, v) = (res.u(), res.v());
    let rebuilt = Array2::from_shape_fn(g.dim(), |(i, j)| u[i] * g[[i, j]] * v[j]);
    res.plan
        .entries
        .iter()
        .zip(&rebuilt)
        .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn l1_marginal_violation(plan: &Array2<f64>, p: &[f64], q: &[f64]) -> f64 {
    let rows: f64 = plan
        .rows()
        .into_iter()
        .zip(p)
        .map(|(r, pi)| (r.sum() - pi).abs())
        .sum();
    let cols: f64 = plan
        .columns()
        .into_iter()
        .zip(q)
        .map(|(c, qj)| (c.sum() - qj).abs())
        .sum();
    rows + cols
}

#[test]
fn entropy_examples() {
    assert_eq!(entropy(&dist(&[1.0])), 0.0);
    assert!((entropy(&dist(&[0.5, 0.5])) - 2f64.ln()).abs() < 1e-15);
    assert!((entropy(&dist(&[0.5, 0.25, 0.25])) - 1.5 * 2f64.ln()).abs() < 1e-15);
}

#[test]
fn gibbs_kernel_examples() {
    let zeros = CostMatrix::new(Array2::zeros((2, 3))).unwrap();
    assert!(gibbs_kernel(&zeros, 0.7).iter().all(|&g| g == 1.0));
    let flat = CostMatrix::new(Array2::from_elem((2, 2), 0.3)).unwrap();
    assert!(gibbs_kernel(&flat, 0.3)
        .iter()
        .all(|&g| (g - (-1f64).exp()).abs() < 1e-16));
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let e = (-1f64).exp();
    assert!(max_abs_diff(&gibbs_kernel(&c, 1.0), &array![[1.0, e], [e, 1.0]]) < 1e-16);
}

#[test]
fn gamma_heuristic_examples() {
    let c = CostMatrix::from_rows(&[vec![30.0, 1.0]]).unwrap();
    assert_eq!(gamma_heuristic(&c, 30.0), Some(1.0));
    let c = CostMatrix::from_rows(&[vec![3.0, 1.0]]).unwrap();
    assert!((gamma_heuristic(&c, 30.0).unwrap() - 0.1).abs() < 1e-16);
    let zeros = CostMatrix::new(Array2::zeros((2, 2))).unwrap();
    assert_eq!(gamma_heuristic(&zeros, 30.0), None);
}

/// Symmetric 2x2 instance: by symmetry `u = v = s(1, 1)`, and the row
/// constraint `s^2 (1 + e^-1) = 1/2` gives the plan in closed form.
#[test]
fn symmetric_two_by_two_closed_form() {
    let e = (-1f64).exp();
    let a = 0.5 / (1.0 + e);
    let b = 0.5 * e / (1.0 + e);
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let half = dist(&[0.5, 0.5]);
    for log_domain in [true, false] {
        let res = sinkhorn(&half, &half, &c, &cfg(1.0, log_domain)).unwrap();
        assert!(max_abs_diff(&res.plan.entries, &array![[a, b], [b, a]]) <= 1e-12);
        assert!((res.reg_cost - e / (1.0 + e)).abs() <= 1e-12);
        assert!((res.reg_cost - 0.26894).abs() < 1e-5);
    }
}

#[test]
fn constant_cost_gives_product_plan() {
    let p = dist(&[0.2, 0.3, 0.5]);
    let q = dist(&[0.6, 0.4]);
    let c = CostMatrix::new(Array2::from_elem((3, 2), 2.5)).unwrap();
    let res = sinkhorn(&p, &q, &c, &cfg(0.1, true)).unwrap();
    let product = Array2::from_shape_fn((3, 2), |(i, j)| p.weights()[i] * q.weights()[j]);
    assert!(max_abs_diff(&res.plan.entries, &product) <= 1e-12);
    assert!((res.reg_cost - 2.5).abs() <= 1e-12);
}

#[test]
fn zero_cost_short_circuits() {
    let p = dist(&[0.2, 0.8]);
    let q = dist(&[0.5, 0.25, 0.25]);
    let zeros = CostMatrix::new(Array2::zeros((2, 3))).unwrap();
    let res = reg_ot(&p, &q, &zeros, &RegOtConfig::default()).unwrap();
    assert_eq!(res.value, 0.0);
    assert_eq!(res.gamma, None);
    assert_eq!(res.iterations, 0);
    assert!(res.plan.marginal_err() <= 1e-15);
}

#[test]
fn reg_ot_dominates_on_two_by_two() {
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let (p, q) = (dist(&[0.7, 0.3]), dist(&[0.4, 0.6]));
    let exact = solve_exact(&p, &q, &c).unwrap().value;
    let reg = reg_ot(&p, &q, &c, &RegOtConfig::default()).unwrap();
    assert!(reg.value >= exact - 1e-12);
    assert!((reg.gamma.unwrap() - 1.0 / 30.0).abs() < 1e-16);
}

#[test]
fn small_gamma_approaches_exact_value() {
    let inst = random_instance(&mut rng(5), 5, 5, 10.0);
    let exact = solve_exact(&inst.p, &inst.q, &inst.c).unwrap().value;
    let cfg = RegOtConfig {
        gamma_divisor: 1000.0,
        ..RegOtConfig::default()
    };
    let reg = reg_ot(&inst.p, &inst.q, &inst.c, &cfg).unwrap();
    assert!(reg.iterations <= 10_000);
    assert!((reg.value - exact).abs() <= 1e-3 * inst.c.max());
}

#[test]
fn non_convergence_is_reported() {
    let inst = random_instance(&mut rng(9), 4, 4, 10.0);
    let tight = SinkhornConfig {
        max_iter: 2,
        ..cfg(0.05, true)
    };
    match sinkhorn(&inst.p, &inst.q, &inst.c, &tight) {
        Err(Error::NotConverged {
            iterations,
            marginal_err,
        }) => {
            assert_eq!(iterations, 2);
            assert!(marginal_err > 1e-9);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn plain_mode_underflow_is_reported() {
    let c = CostMatrix::from_rows(&[vec![0.0, 2000.0], vec![2000.0, 0.0]]).unwrap();
    let (p, q) = (dist(&[0.7, 0.3]), dist(&[0.4, 0.6]));
    let err = sinkhorn(&p, &q, &c, &cfg(1.0, false)).unwrap_err();
    assert!(matches!(err, Error::Numerical(_)), "{err}");
    assert!(err.to_string().contains("log_domain"));
    assert!(sinkhorn(&p, &q, &c, &cfg(1.0, true)).is_ok());
}

#[test]
fn invalid_configs_are_rejected() {
    let inst = random_instance(&mut rng(1), 2, 2, 1.0);
    for bad in [
        cfg(0.0, true),
        cfg(-1.0, true),
        cfg(f64::NAN, true),
        SinkhornConfig {
            tol: 0.0,
            ..cfg(1.0, true)
        },
        SinkhornConfig {
            max_iter: 0,
            ..cfg(1.0, true)
        },
    ] {
        assert!(matches!(
            sinkhorn(&inst.p, &inst.q, &inst.c, &bad),
            Err(Error::InvalidConfig(_))
        ));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn contract_holds(seed in any::<u64>(), n in 1usize..=10, m in 1usize..=10, log_domain in any::<bool>()) {
        let inst = random_instance(&mut rng(seed), n, m, 5.0);
        let gamma = inst.c.max() / 30.0;
        let res = sinkhorn(&inst.p, &inst.q, &inst.c, &cfg(gamma, log_domain)).unwrap();
        prop_assert!(l1_marginal_violation(&res.plan.entries, inst.p.weights(), inst.q.weights()) <= 1e-9);
        prop_assert!(res.marginal_err <= 1e-9);
        prop_assert!(factorization_gap(&res, &inst.c, gamma) <= 1e-12);
        let exact = solve_exact(&inst.p, &inst.q, &inst.c).unwrap().value;
        prop_assert!(res.reg_cost >= exact - 1e-12);
    }

    #[test]
    fn joint_scaling_of_cost_and_gamma(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8, lambda in 0.1f64..10.0) {
        let inst = random_instance(&mut rng(seed), n, m, 5.0);
        let gamma = inst.c.max() / 30.0;
        let base = sinkhorn(&inst.p, &inst.q, &inst.c, &cfg(gamma, true)).unwrap();
        let scaled_c = inst.c.scaled(lambda).unwrap();
        let scaled = sinkhorn(&inst.p, &inst.q, &scaled_c, &cfg(lambda * gamma, true)).unwrap();
        prop_assert!(max_abs_diff(&base.plan.entries, &scaled.plan.entries) <= 1e-10);
        prop_assert!((scaled.reg_cost - lambda * base.reg_cost).abs() <= 1e-10 * lambda.max(1.0));
    }

    #[test]
    fn plain_and_log_agree(seed in any::<u64>(), n in 1usize..=10, m in 1usize..=10, divisor in 1.0f64..60.0) {
        let inst = random_instance(&mut rng(seed), n, m, 5.0);
        let gamma = inst.c.max() / divisor;
        let log = sinkhorn(&inst.p, &inst.q, &inst.c, &cfg(gamma, true)).unwrap();
        let plain = sinkhorn(&inst.p, &inst.q, &inst.c, &cfg(gamma, false)).unwrap();
        prop_assert!(max_abs_diff(&log.plan.entries, &plain.plan.entries) <= 1e-8);
        prop_assert!((log.reg_cost - plain.reg_cost).abs() <= 1e-8);
    }

    #[test]
    fn reg_ot_uses_the_heuristic(seed in any::<u64>(), n in 1usize..=6, m in 1usize..=6) {
        let inst = random_instance(&mut rng(seed), n, m, 5.0);
        // nearly equal marginals can need more than the default budget
        let budget = RegOtConfig { max_iter: 1_000_000, ..RegOtConfig::default() };
        let reg = reg_ot(&inst.p, &inst.q, &inst.c, &budget).unwrap();
        let gamma = gamma_heuristic(&inst.c, 30.0).unwrap();
        prop_assert_eq!(reg.gamma, Some(gamma));
        let direct = sinkhorn(&inst.p, &inst.q, &inst.c, &budget.sinkhorn(gamma)).unwrap();
        prop_assert_eq!(reg.value, direct.reg_cost);
    }
}
