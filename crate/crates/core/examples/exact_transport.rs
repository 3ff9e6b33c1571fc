// Exact optimal transport between two discrete laws and the Wasserstein
// distance built on it.
//
//     cargo run --example exact_transport

use nested_distance::ot::{solve_exact, wasserstein};
use nested_distance::{CostMatrix, DiscreteDistribution};

fn main() {
    let p = DiscreteDistribution::new(vec![0.7, 0.3]).unwrap();
    let q = DiscreteDistribution::new(vec![0.4, 0.6]).unwrap();
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();

    let sol = solve_exact(&p, &q, &c).unwrap();
    println!("optimal cost {:.6}", sol.value);
    println!("optimal plan\n{:.4}", sol.plan.entries);
    println!("marginal error {:.1e}", sol.plan.marginal_err());

    // points on a line: ground distances |x_i - y_j|
    let xs: [f64; 4] = [0.0, 1.0, 2.0, 5.0];
    let ys = [0.5, 1.5, 4.0];
    let d = CostMatrix::from_rows(
        &xs.iter()
            .map(|x| ys.iter().map(|y| (x - y).abs()).collect())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let px = DiscreteDistribution::uniform(xs.len()).unwrap();
    let py = DiscreteDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
    for r in [1.0, 2.0, 3.0] {
        let w = wasserstein(&px, &py, &d, r).unwrap();
        println!("W_{r} = {w:.6}");
    }
}
