//! Comparator predictors for held-out cells and the evaluation metrics shared
//! by every method.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{GaspError, Result};
use crate::linalg::cholesky_with_jitter;
use crate::model::{
    condition_all, credible_intervals, predict_joint, FittedModel, FunctionalDataset,
};

/// One held-out cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCell {
    /// Caller's sample index.
    pub sample: usize,
    pub column: usize,
    pub site: f64,
    pub prediction: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub truth: Option<f64>,
}

/// Predictions of one method over all held-out cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    pub method: String,
    /// Nominal level of the intervals, when the method produces any.
    pub level: Option<f64>,
    pub cells: Vec<PredictionCell>,
}

impl PredictionTable {
    /// Fills `truth` from a lookup by (sample, column).
    pub fn attach_truth(&mut self, truth: impl Fn(usize, usize) -> Option<f64>) {
        for c in &mut self.cells {
            c.truth = truth(c.sample, c.column);
        }
    }
}

/// Summary metrics of a prediction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub rmse: f64,
    /// Empirical coverage; absent when the method has no intervals.
    pub coverage: Option<f64>,
    /// Mean interval length; absent when the method has no intervals.
    pub mean_length: Option<f64>,
    pub accuracy: f64,
    pub level: Option<f64>,
    pub threshold: f64,
    pub n_cells: usize,
}

fn cells_for(dataset: &FunctionalDataset) -> Result<Vec<(usize, usize)>> {
    if dataset.k_star() == 0 {
        return Err(GaspError::NothingToImpute);
    }
    let mut cells = Vec::with_capacity(dataset.k_star() * dataset.held_out_columns().len());
    for r in dataset.k()..dataset.n_samples() {
        for &j in dataset.held_out_columns() {
            cells.push((r, j));
        }
    }
    Ok(cells)
}

/// Copies the value at the closest `s^D` site of the same sample; ties go left.
pub fn nearest_neighbor_predict(dataset: &FunctionalDataset) -> Result<PredictionTable> {
    let cells = cells_for(dataset)?;
    let obs = dataset.observed_columns();
    if obs.is_empty() {
        return Err(GaspError::Precondition(format!(
            "sample {} has no observed sites",
            dataset.row_order()[dataset.k()]
        )));
    }
    let grid = dataset.grid();
    let out = cells
        .into_iter()
        .map(|(r, j)| {
            let s = grid[j];
            let pos = obs.partition_point(|&c| grid[c] < s);
            let pick = match (pos.checked_sub(1), obs.get(pos)) {
                (Some(l), Some(&right)) => {
                    if s - grid[obs[l]] <= grid[right] - s {
                        obs[l]
                    } else {
                        right
                    }
                }
                (Some(l), None) => obs[l],
                (None, Some(&right)) => right,
                (None, None) => unreachable!(),
            };
            PredictionCell {
                sample: dataset.row_order()[r],
                column: j,
                site: s,
                prediction: dataset.value(r, pick).expect("observed column"),
                lower: None,
                upper: None,
                truth: None,
            }
        })
        .collect();
    Ok(PredictionTable {
        method: "nearest-neighbor".into(),
        level: None,
        cells: out,
    })
}

/// Least-squares fit with its pieces needed for prediction intervals.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    /// `(XᵀX)⁻¹`, regularized if `XᵀX` was singular.
    pub xtx_inv: DMatrix<f64>,
    pub residual_variance: f64,
    pub df: usize,
}

impl OlsFit {
    /// Mean and variance of a new response at covariates `x0`.
    pub fn predict(&self, x0: &DVector<f64>) -> (f64, f64) {
        let lev = (x0.transpose() * &self.xtx_inv * x0)[(0, 0)];
        (self.beta.dot(x0), self.residual_variance * (1.0 + lev))
    }
}

/// Ordinary least squares through the normal equations; a singular design
/// gets a small ridge.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>, df: usize) -> Result<OlsFit> {
    let xtx = x.transpose() * x;
    let (chol, jitter) = cholesky_with_jitter(&xtx, 1e-10, 1e-4)?;
    if jitter > 0.0 {
        log::warn!("rank-deficient design; ridge {jitter:e} added");
    }
    let beta = chol.solve(&(x.transpose() * y));
    let resid = y - x * &beta;
    let residual_variance = if df > 0 {
        resid.norm_squared() / df as f64
    } else {
        0.0
    };
    Ok(OlsFit {
        xtx_inv: chol.inverse(),
        beta,
        residual_variance,
        df,
    })
}

fn t_quantile_half(level: f64, df: usize) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GaspError::Domain(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let t = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| GaspError::Domain(e.to_string()))?;
    Ok(t.inverse_cdf(0.5 + 0.5 * level))
}

/// `flank` nearest observed columns to site `s`, ties going left.
fn flanking_columns(dataset: &FunctionalDataset, s: f64, flank: usize) -> Vec<usize> {
    let obs = dataset.observed_columns();
    let grid = dataset.grid();
    let pos = obs.partition_point(|&c| grid[c] < s);
    let (mut l, mut r) = (pos, pos);
    let mut out = Vec::with_capacity(flank);
    while out.len() < flank && (l > 0 || r < obs.len()) {
        let take_left = match (l > 0, r < obs.len()) {
            (true, true) => s - grid[obs[l - 1]] <= grid[obs[r]] - s,
            (left, _) => left,
        };
        if take_left {
            l -= 1;
            out.push(obs[l]);
        } else {
            out.push(obs[r]);
            r += 1;
        }
    }
    out
}

/// Per-site regression on the values of the same sample at the `flank_count`
/// nearest observed sites, fitted across the fully observed samples.
pub fn lm_by_site_predict(
    dataset: &FunctionalDataset,
    flank_count: usize,
    level: f64,
) -> Result<PredictionTable> {
    let k = dataset.k();
    let p = flank_count + 1;
    if k < flank_count + 2 {
        return Err(GaspError::Precondition(format!(
            "{k} fully observed samples cannot fit {flank_count} flanking covariates plus an intercept"
        )));
    }
    if dataset.observed_columns().len() < flank_count {
        return Err(GaspError::Precondition(format!(
            "fewer than {flank_count} observed sites"
        )));
    }
    cells_for(dataset)?;
    let q = t_quantile_half(level, k - p)?;
    let grid = dataset.grid();
    let mut cells = Vec::new();
    for &j in dataset.held_out_columns() {
        let cols = flanking_columns(dataset, grid[j], flank_count);
        let x = DMatrix::from_fn(k, p, |r, c| {
            if c == 0 {
                1.0
            } else {
                dataset.value(r, cols[c - 1]).unwrap()
            }
        });
        let y = dataset.complete_column(j);
        let fit = ols(&x, &y, k - p)?;
        for r in k..dataset.n_samples() {
            let x0 = DVector::from_fn(p, |c, _| {
                if c == 0 {
                    1.0
                } else {
                    dataset.value(r, cols[c - 1]).unwrap()
                }
            });
            let (m, v) = fit.predict(&x0);
            let half = q * v.max(0.0).sqrt();
            cells.push(PredictionCell {
                sample: dataset.row_order()[r],
                column: j,
                site: grid[j],
                prediction: m,
                lower: Some(m - half),
                upper: Some(m + half),
                truth: None,
            });
        }
    }
    sort_cells(&mut cells);
    Ok(PredictionTable {
        method: "lm-by-site".into(),
        level: Some(level),
        cells,
    })
}

fn sort_cells(cells: &mut [PredictionCell]) {
    cells.sort_by(|a, b| a.sample.cmp(&b.sample).then(a.column.cmp(&b.column)));
}

/// Per-sample regression of a partially observed sample on the fully
/// observed samples over `s^D`, after removing each sample's mean.
pub fn lm_by_sample_predict(dataset: &FunctionalDataset, level: f64) -> Result<PredictionTable> {
    let k = dataset.k();
    let n = dataset.observed_columns().len();
    if n < k + 2 {
        return Err(GaspError::Precondition(format!(
            "{n} observed sites cannot fit {k} sample covariates after centering"
        )));
    }
    cells_for(dataset)?;
    let block = dataset.observed_block();
    let (centered, means) = crate::model::center_rows(&block);
    let y = centered.rows(0, k).into_owned();
    let x = y.transpose();
    let df = n - k - 1;
    let q = t_quantile_half(level, df)?;
    let mut cells = Vec::new();
    for r in k..dataset.n_samples() {
        let target = centered.row(r).transpose();
        let fit = ols(&x, &target, df)?;
        for &j in dataset.held_out_columns() {
            let x0 = dataset.complete_column(j) - means.rows(0, k);
            let (m, v) = fit.predict(&x0);
            let m = m + means[r];
            let half = q * v.max(0.0).sqrt();
            cells.push(PredictionCell {
                sample: dataset.row_order()[r],
                column: j,
                site: dataset.grid()[j],
                prediction: m,
                lower: Some(m - half),
                upper: Some(m + half),
                truth: None,
            });
        }
    }
    sort_cells(&mut cells);
    Ok(PredictionTable {
        method: "lm-by-sample".into(),
        level: Some(level),
        cells,
    })
}

/// Conditional predictions of a fitted model on the held-out cells.
pub fn model_predict(
    dataset: &FunctionalDataset,
    fitted: &FittedModel,
    level: f64,
) -> Result<PredictionTable> {
    cells_for(dataset)?;
    let pred = predict_joint(fitted, &dataset.held_out_sites())?;
    let observed: Vec<DVector<f64>> = dataset
        .held_out_columns()
        .iter()
        .map(|&j| dataset.complete_column(j))
        .collect();
    let cond = condition_all(&pred, &observed)?;
    let iv = credible_intervals(&cond, level)?;
    let mut cells = Vec::new();
    for (t, &j) in dataset.held_out_columns().iter().enumerate() {
        for (q, r) in (dataset.k()..dataset.n_samples()).enumerate() {
            let i = iv[t][q];
            cells.push(PredictionCell {
                sample: dataset.row_order()[r],
                column: j,
                site: dataset.grid()[j],
                prediction: i.mean,
                lower: Some(i.lower),
                upper: Some(i.upper),
                truth: None,
            });
        }
    }
    sort_cells(&mut cells);
    Ok(PredictionTable {
        method: "nonseparable-gasp".into(),
        level: Some(level),
        cells,
    })
}

/// RMSE, interval coverage and length, and thresholded accuracy.
pub fn compute_metrics(table: &PredictionTable, threshold: f64) -> Result<MetricsReport> {
    if table.cells.is_empty() {
        return Err(GaspError::Precondition("empty prediction table".into()));
    }
    let mut sq = 0.0;
    let mut hits = 0usize;
    let mut covered = 0usize;
    let mut length = 0.0;
    let mut with_interval = 0usize;
    for c in &table.cells {
        let y = c.truth.ok_or_else(|| {
            GaspError::Precondition(format!(
                "no truth for sample {} at site {}",
                c.sample, c.site
            ))
        })?;
        sq += (c.prediction - y).powi(2);
        if (c.prediction > threshold) == (y > threshold) {
            hits += 1;
        }
        if let (Some(lo), Some(hi)) = (c.lower, c.upper) {
            with_interval += 1;
            if lo <= y && y <= hi {
                covered += 1;
            }
            length += hi - lo;
        }
    }
    let n = table.cells.len();
    let all_intervals = with_interval == n;
    Ok(MetricsReport {
        method: table.method.clone(),
        rmse: (sq / n as f64).sqrt(),
        coverage: all_intervals.then(|| covered as f64 / n as f64),
        mean_length: all_intervals.then(|| length / n as f64),
        accuracy: hits as f64 / n as f64,
        level: table.level,
        threshold,
        n_cells: n,
    })
}
