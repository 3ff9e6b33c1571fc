// How the regularized plan between two point clouds sharpens as gamma
// shrinks: per gamma, the number of edges carrying at least 30% (and 20%)
// of their source point's mass. Writes plan and edge CSVs to the system
// temp directory.
//
//     cargo run --example plan_sparsity

use std::path::Path;

use nested_distance::plan::{
    read_point_cloud, threshold_edges, write_edges_csv, write_plan_csv, PlanInstance,
};
use nested_distance::SinkhornConfig;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let red = read_point_cloud(&fixtures.join("red.csv")).unwrap();
    let blue = read_point_cloud(&fixtures.join("blue.csv")).unwrap();
    let inst = PlanInstance::from_clouds(&red, &blue, 2.0).unwrap();
    println!(
        "{} source and {} target points, squared distances up to {:.3}",
        red.len(),
        blue.len(),
        inst.cost.max()
    );

    let dir = std::env::temp_dir();
    println!(
        "{:>8} {:>10} {:>10} {:>12}",
        "gamma", "edges 30%", "edges 20%", "iterations"
    );
    for gamma in [0.05, 0.02, 0.008, 0.005, 0.003] {
        let cfg = SinkhornConfig {
            max_iter: 100_000,
            ..SinkhornConfig::new(gamma)
        };
        let res = inst.solve(&cfg).unwrap();
        let edges = threshold_edges(&res.plan.entries, inst.p.weights(), &[0.3, 0.2]);
        let count = |t: f64| edges.iter().filter(|e| e.threshold == t).count();
        println!(
            "{gamma:>8} {:>10} {:>10} {:>12}",
            count(0.3),
            count(0.2),
            res.iterations
        );
        write_plan_csv(&dir.join(format!("plan_{gamma}.csv")), &res.plan.entries).unwrap();
        write_edges_csv(&dir.join(format!("edges_{gamma}.csv")), &edges).unwrap();
    }
    println!("plans and edge lists written to {}", dir.display());
}
