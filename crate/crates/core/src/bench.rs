//! Wall-clock timing of one likelihood evaluation on the fast and dense paths.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{dense_loglik, MAX_DENSE_SITES};
use crate::error::Result;
use crate::grid::SiteGrid;
use crate::kernel::KernelSpec;
use crate::model::{component_log_density, ComponentParams};
use crate::simulate::simulate_component;

const GAMMA: f64 = 10.0;
const SIGMA2: f64 = 1.0;
const ETA: f64 = 0.01;

/// One benchmark row; dense timings are absent above the dense cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub fast_seconds: f64,
    pub dense_seconds: Option<f64>,
}

fn problem(n: usize, seed: u64) -> Result<(SiteGrid, Vec<f64>)> {
    let grid = SiteGrid::regular(0.0, 1.0, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = 5f64.sqrt() / GAMMA;
    let values = simulate_component(&grid, lambda, SIGMA2, SIGMA2 * ETA, &mut rng);
    Ok((grid, values))
}

/// Median of `reps` timed runs after one untimed warm-up run.
fn median_time(reps: usize, mut f: impl FnMut() -> Result<f64>) -> Result<f64> {
    std::hint::black_box(f()?);
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        std::hint::black_box(f()?);
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Seconds for one state-space likelihood evaluation at `n` sites.
pub fn time_fast_loglik(n: usize, reps: usize, seed: u64) -> Result<f64> {
    let (grid, values) = problem(n, seed)?;
    let params = ComponentParams::matern52(GAMMA, SIGMA2, ETA)?;
    median_time(reps, || component_log_density(&grid, &values, &params))
}

/// Seconds for one dense Cholesky likelihood evaluation at `n` sites.
pub fn time_dense_loglik(n: usize, reps: usize, seed: u64) -> Result<f64> {
    let (grid, values) = problem(n, seed)?;
    let spec = KernelSpec::matern52(GAMMA)?;
    median_time(reps, || dense_loglik(&values, &grid, &spec, SIGMA2, ETA))
}

/// Times both paths over `sizes`; the dense path only up to `dense_max`
/// (never above the dense oracle's own limit).
pub fn run_benchmark(
    sizes: &[usize],
    dense_max: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let cap = dense_max.min(MAX_DENSE_SITES);
    sizes
        .iter()
        .map(|&n| {
            let fast_seconds = time_fast_loglik(n, reps, seed)?;
            let dense_seconds = if n <= cap {
                Some(time_dense_loglik(n, reps, seed)?)
            } else {
                None
            };
            log::info!("n={n}: fast {fast_seconds:.3e}s, dense {dense_seconds:?}");
            Ok(BenchRow {
                n,
                fast_seconds,
                dense_seconds,
            })
        })
        .collect()
}

/// Plot data with raw and log10 columns; absent dense timings print as `NA`.
pub fn plot_data(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("n\tfast_seconds\tdense_seconds\tlog10_n\tlog10_fast\tlog10_dense\n");
    for r in rows {
        let (d, ld) = match r.dense_seconds {
            Some(d) => (format!("{d:.6e}"), format!("{:.6}", d.log10())),
            None => ("NA".into(), "NA".into()),
        };
        out.push_str(&format!(
            "{}\t{:.6e}\t{}\t{:.6}\t{:.6}\t{}\n",
            r.n,
            r.fast_seconds,
            d,
            (r.n as f64).log10(),
            r.fast_seconds.log10(),
            ld
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_benchmark_shape() {
        let rows = run_benchmark(&[50, 100, 200], 100, 1, 0).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].dense_seconds.is_some() && rows[2].dense_seconds.is_none());
        let text = plot_data(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].split('\t').nth(2) == Some("NA"));
        assert!(lines.iter().all(|l| l.split('\t').count() == 6));
    }

    #[test]
    fn paths_agree_on_benchmark_problem() {
        let (grid, values) = problem(300, 3).unwrap();
        let params = ComponentParams::matern52(GAMMA, SIGMA2, ETA).unwrap();
        let fast = component_log_density(&grid, &values, &params).unwrap();
        let spec = KernelSpec::matern52(GAMMA).unwrap();
        let dense = dense_loglik(&values, &grid, &spec, SIGMA2, ETA).unwrap();
        assert!((fast - dense).abs() < 1e-8);
    }
}
