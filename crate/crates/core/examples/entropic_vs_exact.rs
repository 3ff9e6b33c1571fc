// Exact and entropic nested distances on a pair of random trees: value,
// relative error and time, for several choices of the gamma divisor.
//
//     cargo run --release --example entropic_vs_exact

use nested_distance::{entropic_nested_distance, generate, nested_distance, GenSpec, RegOtConfig};

fn main() {
    let spec = |seed| GenSpec {
        depth: 5,
        max_children: 3,
        value_dim: 2,
        seed,
        increment_scale: 1.0,
    };
    let x = generate(&spec(1)).unwrap();
    let y = generate(&spec(2)).unwrap();
    println!(
        "trees with {} and {} leaves",
        x.leaf_count(),
        y.leaf_count()
    );

    let exact = nested_distance(&x, &y, 2.0).unwrap();
    println!(
        "ND_2  = {:.9} ({} subproblems, {:.3} ms)",
        exact.value,
        exact.subproblem_count,
        exact.wall_time.as_secs_f64() * 1e3
    );

    println!(
        "\n{:>8} {:>8} {:>14} {:>12} {:>10}",
        "divisor", "domain", "END_2", "rel. err %", "ms"
    );
    for divisor in [10.0, 30.0, 100.0] {
        for log_domain in [true, false] {
            let cfg = RegOtConfig {
                gamma_divisor: divisor,
                log_domain,
                ..RegOtConfig::default()
            };
            let domain = if log_domain { "log" } else { "plain" };
            match entropic_nested_distance(&x, &y, 2.0, &cfg) {
                Ok(res) => println!(
                    "{divisor:>8} {domain:>8} {:>14.9} {:>12.4} {:>10.3}",
                    res.value,
                    100.0 * (res.value - exact.value) / res.value,
                    res.wall_time.as_secs_f64() * 1e3
                ),
                Err(e) => println!("{divisor:>8} {domain:>8} {e}"),
            }
        }
    }
}
