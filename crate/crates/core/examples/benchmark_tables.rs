// Exact versus entropic nested distance on random tree pairs, aggregated
// per depth, for r = 2 and r = 1 on the same pairs. Writes the per-depth
// and per-pair CSVs to the system temp directory.
//
//     cargo run --release --example benchmark_tables

use nested_distance::bench::{run_bench, write_pairs_csv, write_rows_csv, BenchConfig};

fn main() {
    let dir = std::env::temp_dir();
    for r in [2.0, 1.0] {
        let cfg = BenchConfig {
            r,
            ..BenchConfig::default()
        };
        let report = run_bench(&cfg).unwrap();
        println!(
            "r = {r}: {} runs per depth, at most {} children",
            cfg.runs, cfg.max_children
        );
        println!(
            "{:>3} {:>14} {:>14} {:>9} {:>12}",
            "T", "ND (ms)", "END (ms)", "speedup", "rel. err %"
        );
        for row in &report.rows {
            println!(
                "{:>3} {:>14.4} {:>14.4} {:>9.2} {:>12.3}",
                row.depth,
                row.mean_time_nd_ms,
                row.mean_time_end_ms,
                row.speedup,
                row.relative_error_pct
            );
        }
        for failed in report.failures() {
            println!(
                "excluded: depth {} run {}: {}",
                failed.depth, failed.run, failed.status
            );
        }
        let rows = dir.join(format!("nested_bench_r{r}.csv"));
        let pairs = dir.join(format!("nested_bench_r{r}.pairs.csv"));
        write_rows_csv(&rows, &report.rows).unwrap();
        write_pairs_csv(&pairs, &report.pairs).unwrap();
        println!("wrote {} and {}\n", rows.display(), pairs.display());
    }
}
