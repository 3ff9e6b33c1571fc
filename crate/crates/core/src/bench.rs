//! Speed/accuracy comparison of the exact and entropic nested distances on
//! random tree pairs, aggregated per horizon.
//!
//! For each depth, `runs` independent pairs are generated from seeds derived
//! from the base seed, so the tree sequence is reproducible and identical for
//! different orders `r`. One untimed warm-up pair precedes the timed runs of
//! every depth. Times cover only the distance computations.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nested::{entropic_nested_distance, nested_distance};
use crate::ot::RegOtConfig;
use crate::tree::{generate, GenSpec, ScenarioTree};

pub const ROWS_HEADER: &str = "depth,mean_time_nd_ms,mean_time_end_ms,speedup,relative_error_pct";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub depths: Vec<usize>,
    pub runs: usize,
    pub max_children: usize,
    pub r: f64,
    pub seed: u64,
    pub value_dim: usize,
    pub increment_scale: f64,
    pub entropic: RegOtConfig,
    /// Minimum timing window per pair and solver, in ms.
    pub min_time_ms: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            depths: vec![2, 4, 6],
            runs: 10,
            max_children: 3,
            r: 2.0,
            seed: 0,
            value_dim: 2,
            increment_scale: 1.0,
            // the default gamma rule keeps kernel entries >= exp(-30), so
            // plain scaling cannot underflow and avoids log-sum-exp costs
            entropic: RegOtConfig {
                log_domain: false,
                ..RegOtConfig::default()
            },
            min_time_ms: 5.0,
        }
    }
}

impl BenchConfig {
    fn check(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::InvalidConfig(
                "depths must be a nonempty list of positive integers".into(),
            ));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if !(self.min_time_ms >= 0.0 && self.min_time_ms.is_finite()) {
            return Err(Error::InvalidConfig(
                "min_time_ms must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One aggregated line per depth. `relative_error_pct` is the mean of
/// `(END - ND) / END` over successful pairs, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub depth: usize,
    pub mean_time_nd_ms: f64,
    pub mean_time_end_ms: f64,
    pub speedup: f64,
    pub relative_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub depth: usize,
    pub run: usize,
    pub seed_x: u64,
    pub seed_y: u64,
    pub nd: Option<f64>,
    pub end: Option<f64>,
    pub time_nd_ms: Option<f64>,
    pub time_end_ms: Option<f64>,
    pub relative_error_pct: Option<f64>,
    /// `ok`, or the error that excluded the pair from the means.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub pairs: Vec<PairRecord>,
}

impl BenchReport {
    pub fn failures(&self) -> impl Iterator<Item = &PairRecord> + '_ {
        self.pairs.iter().filter(|p| p.status != "ok")
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator seeds of the two trees of pair `run` at `depth`.
pub fn pair_seeds(seed: u64, depth: usize, run: usize) -> (u64, u64) {
    let base = splitmix64(seed ^ splitmix64((depth as u64) << 32 | run as u64));
    (splitmix64(base), splitmix64(base ^ 0xA5A5_A5A5_A5A5_A5A5))
}

pub fn bench_pair(
    cfg: &BenchConfig,
    depth: usize,
    run: usize,
) -> Result<(ScenarioTree, ScenarioTree)> {
    let (sx, sy) = pair_seeds(cfg.seed, depth, run);
    let spec = |seed| GenSpec {
        depth,
        max_children: cfg.max_children,
        value_dim: cfg.value_dim,
        seed,
        increment_scale: cfg.increment_scale,
    };
    Ok((generate(&spec(sx))?, generate(&spec(sy))?))
}

fn relative_error_pct(nd: f64, end: f64) -> f64 {
    if end > 0.0 {
        100.0 * (end - nd) / end
    } else {
        0.0
    }
}

/// Mean wall time of `f` in ms. `f` runs once untimed, then repeatedly
/// until at least `min_ms` have elapsed, so that sub-millisecond runs are
/// not dominated by timer resolution or a single scheduling hiccup.
fn timed<T>(min_ms: f64, mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let value = f()?;
    let start = Instant::now();
    let mut reps = 0u32;
    loop {
        std::hint::black_box(f()?);
        reps += 1;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        if elapsed >= min_ms {
            return Ok((value, elapsed / f64::from(reps)));
        }
    }
}

fn measure(x: &ScenarioTree, y: &ScenarioTree, cfg: &BenchConfig) -> Result<(f64, f64, f64, f64)> {
    let (nd, time_nd) = timed(cfg.min_time_ms, || Ok(nested_distance(x, y, cfg.r)?.value))?;
    let (end, time_end) = timed(cfg.min_time_ms, || {
        Ok(entropic_nested_distance(x, y, cfg.r, &cfg.entropic)?.value)
    })?;
    Ok((nd, end, time_nd, time_end))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.check()?;
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for &depth in &cfg.depths {
        let (wx, wy) = bench_pair(cfg, depth, 0)?;
        let _ = measure(&wx, &wy, cfg);

        let mut ok = Vec::new();
        for run in 0..cfg.runs {
            let (seed_x, seed_y) = pair_seeds(cfg.seed, depth, run);
            let (x, y) = bench_pair(cfg, depth, run)?;
            let record = match measure(&x, &y, cfg) {
                Ok((nd, end, tn, te)) => {
                    let rel = relative_error_pct(nd, end);
                    ok.push((tn, te, rel));
                    PairRecord {
                        depth,
                        run,
                        seed_x,
                        seed_y,
                        nd: Some(nd),
                        end: Some(end),
                        time_nd_ms: Some(tn),
                        time_end_ms: Some(te),
                        relative_error_pct: Some(rel),
                        status: "ok".into(),
                    }
                }
                Err(e) => PairRecord {
                    depth,
                    run,
                    seed_x,
                    seed_y,
                    nd: None,
                    end: None,
                    time_nd_ms: None,
                    time_end_ms: None,
                    relative_error_pct: None,
                    status: e.to_string(),
                },
            };
            pairs.push(record);
        }
        if ok.is_empty() {
            continue;
        }
        let k = ok.len() as f64;
        let mean_nd = ok.iter().map(|o| o.0).sum::<f64>() / k;
        let mean_end = ok.iter().map(|o| o.1).sum::<f64>() / k;
        rows.push(BenchRow {
            depth,
            mean_time_nd_ms: mean_nd,
            mean_time_end_ms: mean_end,
            speedup: mean_nd / mean_end,
            relative_error_pct: ok.iter().map(|o| o.2).sum::<f64>() / k,
        });
    }
    Ok(BenchReport { rows, pairs })
}

fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for rec in records {
        w.serialize(rec).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<Result<_, _>>().map_err(wrap)
}

/// Writes the per-depth table under [`ROWS_HEADER`].
pub fn write_rows_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    if rows.is_empty() {
        return std::fs::write(path, format!("{ROWS_HEADER}\n")).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        });
    }
    write_csv(path, rows)
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<BenchRow>> {
    read_csv(path)
}

pub fn write_pairs_csv(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    write_csv(path, pairs)
}

pub fn read_pairs_csv(path: &Path) -> Result<Vec<PairRecord>> {
    read_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_all_inputs() {
        let a = pair_seeds(0, 2, 0);
        assert_ne!(a.0, a.1);
        assert_ne!(a, pair_seeds(0, 2, 1));
        assert_ne!(a, pair_seeds(0, 3, 0));
        assert_ne!(a, pair_seeds(1, 2, 0));
        assert_eq!(a, pair_seeds(0, 2, 0));
    }

    #[test]
    fn single_row_bench() {
        let cfg = BenchConfig {
            depths: vec![2],
            runs: 1,
            ..Default::default()
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.pairs.len(), 1);
        let row = &report.rows[0];
        assert!(row.relative_error_pct >= 0.0);
        assert!(row.speedup > 0.0);
    }

    #[test]
    fn empty_config_rejected() {
        let cfg = BenchConfig {
            depths: vec![],
            ..Default::default()
        };
        assert!(run_bench(&cfg).is_err());
        let cfg = BenchConfig {
            runs: 0,
            ..Default::default()
        };
        assert!(run_bench(&cfg).is_err());
    }

    #[test]
    fn csv_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = vec![BenchRow {
            depth: 4,
            mean_time_nd_ms: 1.5,
            mean_time_end_ms: 0.5,
            speedup: 3.0,
            relative_error_pct: 0.25,
        }];
        write_rows_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), ROWS_HEADER);
        assert_eq!(read_rows_csv(&path).unwrap(), rows);

        let path = dir.path().join("empty.csv");
        write_rows_csv(&path, &[]).unwrap();
        assert!(read_rows_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn failed_pair_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.csv");
        let pairs = vec![PairRecord {
            depth: 3,
            run: 1,
            seed_x: 1,
            seed_y: 2,
            nd: None,
            end: None,
            time_nd_ms: None,
            time_end_ms: None,
            relative_error_pct: None,
            status: "sinkhorn did not converge".into(),
        }];
        write_pairs_csv(&path, &pairs).unwrap();
        assert_eq!(read_pairs_csv(&path).unwrap(), pairs);
    }
}
