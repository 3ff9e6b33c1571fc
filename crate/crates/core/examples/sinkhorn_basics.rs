// Entropic transport with Sinkhorn scaling: the closed-form 2x2 case, the
// factorized plan, plain versus log-domain updates, and the approach to the
// exact cost as gamma shrinks.
//
//     cargo run --example sinkhorn_basics

use nested_distance::ot::{gibbs_kernel, reg_ot, sinkhorn, solve_exact};
use nested_distance::{CostMatrix, DiscreteDistribution, RegOtConfig, SinkhornConfig};

fn main() {
    let half = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let res = sinkhorn(&half, &half, &c, &SinkhornConfig::new(1.0)).unwrap();
    let e = (-1f64).exp();
    println!("gamma = 1 plan\n{:.6}", res.plan.entries);
    println!(
        "closed form: diagonal {:.6}, off-diagonal {:.6}, cost {:.6}",
        0.5 / (1.0 + e),
        0.5 * e / (1.0 + e),
        e / (1.0 + e)
    );
    println!(
        "sinkhorn cost {:.6} after {} iterations",
        res.reg_cost, res.iterations
    );

    // the plan is diag(u) G diag(v)
    let g = gibbs_kernel(&c, 1.0);
    let (u, v) = (res.u(), res.v());
    println!(
        "u0 G00 v0 = {:.6}, plan[0][0] = {:.6}",
        u[0] * g[[0, 0]] * v[0],
        res.plan.entries[[0, 0]]
    );

    let p = DiscreteDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
    let q = DiscreteDistribution::new(vec![0.45, 0.15, 0.4]).unwrap();
    let c = CostMatrix::from_rows(&[
        vec![0.0, 2.0, 4.0],
        vec![1.0, 0.5, 3.0],
        vec![3.0, 1.0, 0.2],
    ])
    .unwrap();
    let exact = solve_exact(&p, &q, &c).unwrap().value;
    println!("\nexact cost {exact:.6}");
    println!("divisor      gamma   reg cost    gap        iterations");
    for divisor in [3.0, 30.0, 300.0, 3000.0] {
        let cfg = RegOtConfig {
            gamma_divisor: divisor,
            ..RegOtConfig::default()
        };
        let reg = reg_ot(&p, &q, &c, &cfg).unwrap();
        println!(
            "{divisor:>7} {:>10.5} {:>10.6} {:>10.2e} {:>8}",
            reg.gamma.unwrap(),
            reg.value,
            reg.value - exact,
            reg.iterations
        );
    }

    let gamma = c.max() / 30.0;
    let log = sinkhorn(&p, &q, &c, &SinkhornConfig::new(gamma)).unwrap();
    let plain = sinkhorn(
        &p,
        &q,
        &c,
        &SinkhornConfig {
            log_domain: false,
            ..SinkhornConfig::new(gamma)
        },
    )
    .unwrap();
    println!(
        "\nlog-domain cost {:.12}, plain cost {:.12}",
        log.reg_cost, plain.reg_cost
    );

    // plain scaling underflows once c / gamma is large; log-domain does not
    let steep = SinkhornConfig {
        log_domain: false,
        ..SinkhornConfig::new(c.max() / 1000.0)
    };
    match sinkhorn(&p, &q, &c, &steep) {
        Ok(res) => println!("plain mode at divisor 1000: {:.6}", res.reg_cost),
        Err(e) => println!("plain mode at divisor 1000: {e}"),
    }
}
