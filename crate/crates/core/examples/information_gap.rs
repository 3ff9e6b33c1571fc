// Two processes with almost the same scenarios but different information
// flow. In the early tree a small move at stage 2 reveals where the price
// goes at stage 3; in the late tree stage 2 is flat and the outcome is a
// surprise. The Wasserstein distance between path laws stays at eps, while
// the nested distance sees the information gap and grows with the jump a.
//
//     cargo run --example information_gap

use nested_distance::tree::early_vs_late_information;
use nested_distance::{entropic_nested_distance, nested_distance, wasserstein_paths, RegOtConfig};

fn main() {
    let eps = 0.1;
    println!(
        "{:>8} {:>12} {:>12} {:>12}",
        "a", "W_1 paths", "ND_1", "END_1"
    );
    for a in [1.0, 2.0, 5.0, 10.0, 100.0] {
        let (early, late) = early_vs_late_information(a, eps);
        let w = wasserstein_paths(&early, &late, 1.0).unwrap();
        let nd = nested_distance(&early, &late, 1.0).unwrap();
        let end = entropic_nested_distance(&early, &late, 1.0, &RegOtConfig::default()).unwrap();
        println!("{a:>8} {w:>12.6} {:>12.6} {:>12.6}", nd.value, end.value);
    }

    let (early, late) = early_vs_late_information(1.0, eps);
    let nd = nested_distance(&early, &late, 1.0).unwrap();
    println!("\nstage costs for a = 1 (rows: early-tree nodes, columns: late-tree nodes)");
    for t in 1..=early.depth() {
        println!(
            "stage {t}: x {:?} y {:?}\n{:.4}",
            nd.stage_costs.x_nodes[t - 1],
            nd.stage_costs.y_nodes[t - 1],
            nd.stage_costs.stage(t)
        );
    }
}
