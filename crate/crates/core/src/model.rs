//! The nonseparable model: data layout, SVD basis, projected weights,
//! factorized likelihood and the predictive distribution of unobserved
//! samples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{GaspError, Result};
use crate::estimate::ComponentEstimate;
use crate::filter::{likelihood_terms, predict_latent, ComponentSeries, LatentPrediction};
use crate::grid::{check_nondecreasing, SiteGrid};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky_with_jitter, ln_2pi, symmetrize};
use crate::statespace::build_system;

/// K×N outcomes on a common site grid, with some samples only partially
/// observed.
///
/// Rows are kept internally with the fully observed samples first. Columns
/// split into `s^D` (observed for every sample) and `s*` (missing for every
/// partially observed sample).
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    /// Values in internal row order; `NaN` marks a missing cell.
    y: DMatrix<f64>,
    grid: SiteGrid,
    observed_columns: Vec<usize>,
    held_out_columns: Vec<usize>,
    /// `row_order[r]` is the caller's index of internal row `r`.
    row_order: Vec<usize>,
    k: usize,
}

impl FunctionalDataset {
    /// Builds a dataset from rows of optional values, one row per sample.
    pub fn from_masked(grid: SiteGrid, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_cols = grid.len();
        let mut y = DMatrix::from_element(rows.len(), n_cols, f64::NAN);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(GaspError::Mask(format!(
                    "sample {i} has {} values for {n_cols} sites",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    y[(i, j)] = *v;
                }
            }
        }
        Self::from_matrix(y, grid)
    }

    /// Builds a dataset from a K×N matrix where `NaN` marks a missing value.
    pub fn from_matrix(y: DMatrix<f64>, grid: SiteGrid) -> Result<Self> {
        let (n_rows, n_cols) = y.shape();
        if n_cols != grid.len() {
            return Err(GaspError::Mask(format!(
                "{n_cols} columns for a grid of {} sites",
                grid.len()
            )));
        }
        if n_rows == 0 {
            return Err(GaspError::Mask("no samples".into()));
        }
        if y.iter().any(|v| v.is_infinite()) {
            return Err(GaspError::Domain("values must be finite or missing".into()));
        }
        let partial: Vec<bool> = (0..n_rows)
            .map(|i| y.row(i).iter().any(|v| v.is_nan()))
            .collect();
        let full_rows: Vec<usize> = (0..n_rows).filter(|&i| !partial[i]).collect();
        let partial_rows: Vec<usize> = (0..n_rows).filter(|&i| partial[i]).collect();
        if full_rows.is_empty() {
            return Err(GaspError::Mask("no fully observed sample".into()));
        }
        let mut observed_columns = Vec::new();
        let mut held_out_columns = Vec::new();
        for j in 0..n_cols {
            let n_missing_partial = partial_rows.iter().filter(|&&i| y[(i, j)].is_nan()).count();
            if n_missing_partial == 0 {
                observed_columns.push(j);
            } else if n_missing_partial == partial_rows.len() {
                held_out_columns.push(j);
            } else {
                return Err(GaspError::Mask(format!(
                    "site {} is missing for some but not all partially observed samples",
                    grid[j]
                )));
            }
        }
        let row_order: Vec<usize> = full_rows.iter().chain(&partial_rows).copied().collect();
        let y = DMatrix::from_fn(n_rows, n_cols, |r, j| y[(row_order[r], j)]);
        Ok(Self {
            y,
            grid,
            observed_columns,
            held_out_columns,
            row_order,
            k: full_rows.len(),
        })
    }

    /// Total number of samples `K`.
    pub fn n_samples(&self) -> usize {
        self.y.nrows()
    }

    /// Number of fully observed samples.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of partially observed samples.
    pub fn k_star(&self) -> usize {
        self.y.nrows() - self.k
    }

    pub fn grid(&self) -> &SiteGrid {
        &self.grid
    }

    /// Column indices of `s^D`.
    pub fn observed_columns(&self) -> &[usize] {
        &self.observed_columns
    }

    /// Column indices of `s*`.
    pub fn held_out_columns(&self) -> &[usize] {
        &self.held_out_columns
    }

    /// Caller's sample index of each internal row.
    pub fn row_order(&self) -> &[usize] {
        &self.row_order
    }

    /// The `s^D` sites as a grid.
    pub fn observed_grid(&self) -> Result<SiteGrid> {
        SiteGrid::new(
            self.observed_columns
                .iter()
                .map(|&j| self.grid[j])
                .collect(),
        )
    }

    pub fn held_out_sites(&self) -> Vec<f64> {
        self.held_out_columns
            .iter()
            .map(|&j| self.grid[j])
            .collect()
    }

    /// `Y(s^D)`, K×n in internal row order.
    pub fn observed_block(&self) -> DMatrix<f64> {
        self.y.select_columns(&self.observed_columns)
    }

    /// Values of the fully observed samples at column `j`.
    pub fn complete_column(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(self.k, (0..self.k).map(|r| self.y[(r, j)]))
    }

    /// Value at internal row `r`, column `j`.
    pub fn value(&self, r: usize, j: usize) -> Option<f64> {
        let v = self.y[(r, j)];
        (!v.is_nan()).then_some(v)
    }
}

/// Column-wise basis `A` and the Gram diagonal `aᵢᵀaᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    a: DMatrix<f64>,
    column_norms: Vec<f64>,
    orthogonal: bool,
}

impl Basis {
    /// Wraps an arbitrary square basis; columns need not be orthogonal.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(GaspError::Domain(format!(
                "basis must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let gram = a.transpose() * &a;
        let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
        let mut orthogonal = true;
        for i in 0..gram.nrows() {
            for j in 0..i {
                if gram[(i, j)].abs() > 1e-10 * scale {
                    orthogonal = false;
                }
            }
        }
        Ok(Self {
            column_norms: gram.diagonal().iter().copied().collect(),
            a,
            orthogonal,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `aᵢᵀaᵢ` for each column.
    pub fn column_norms(&self) -> &[f64] {
        &self.column_norms
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Columns with zero norm; their components carry no information.
    pub fn frozen(&self) -> Vec<bool> {
        let scale = self.column_norms.iter().copied().fold(0.0, f64::max);
        self.column_norms
            .iter()
            .map(|&c| c <= 1e-24 * scale || c == 0.0)
            .collect()
    }

    /// `-½ log|A_vᵀA_v|` for `n` sites, over the non-frozen columns.
    pub fn log_jacobian(&self, n: usize) -> f64 {
        let n = n as f64;
        if self.orthogonal {
            let frozen = self.frozen();
            -0.5 * n
                * self
                    .column_norms
                    .iter()
                    .zip(&frozen)
                    .filter(|(_, f)| !**f)
                    .map(|(c, _)| c.ln())
                    .sum::<f64>()
        } else {
            let det = self.a.clone().lu().determinant();
            -n * det.abs().ln()
        }
    }
}

/// SVD basis `A = U D / √n` of a centered K×n block.
pub fn estimate_basis(y_obs: &DMatrix<f64>) -> Result<Basis> {
    let (k, n) = y_obs.shape();
    if n < k {
        return Err(GaspError::RankDeficient { n, k });
    }
    for i in 0..k {
        if y_obs.row(i).iter().all(|v| *v == 0.0) {
            return Err(GaspError::DegenerateSample(i));
        }
    }
    let svd = y_obs.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let d_max = svd.singular_values.max();
    let tiny = d_max * 1e-12 * n.max(k) as f64;
    let sqrt_n = (n as f64).sqrt();
    let mut a = DMatrix::zeros(k, k);
    for (c, &src) in order.iter().enumerate() {
        let d = svd.singular_values[src];
        if d <= tiny {
            log::warn!("basis column {c} has a zero singular value; component frozen");
            continue;
        }
        a.set_column(c, &(u.column(src) * (d / sqrt_n)));
    }
    let column_norms = (0..k).map(|c| a.column(c).norm_squared()).collect();
    Ok(Basis {
        a,
        column_norms,
        orthogonal: true,
    })
}

/// Least-squares weights `v̂ = (AᵀA)⁻¹AᵀY`; rows of frozen components are zero.
pub fn project_weights(y_obs: &DMatrix<f64>, basis: &Basis) -> Result<DMatrix<f64>> {
    if y_obs.nrows() != basis.dim() {
        return Err(GaspError::Domain(format!(
            "{} rows of data for a basis of dimension {}",
            y_obs.nrows(),
            basis.dim()
        )));
    }
    let frozen = basis.frozen();
    if basis.orthogonal {
        let mut v = basis.a.transpose() * y_obs;
        for (i, &f) in frozen.iter().enumerate() {
            if f {
                v.row_mut(i).fill(0.0);
            } else {
                v.row_mut(i).unscale_mut(basis.column_norms[i]);
            }
        }
        return Ok(v);
    }
    if let Some(lu) = Some(basis.a.clone().lu()).filter(|lu| lu.is_invertible()) {
        return lu
            .solve(y_obs)
            .ok_or_else(|| GaspError::Singular("basis".into()));
    }
    log::warn!("basis is singular; using the pseudo-inverse");
    let pinv = basis
        .a
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| GaspError::Singular(e.to_string()))?;
    Ok(pinv * y_obs)
}

/// Correlation family of one latent component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentKernel {
    Matern(KernelSpec),
    /// `c(d) = 1{d = 0}`: no correlation across distinct sites.
    WhiteNoise,
}

impl ComponentKernel {
    pub fn corr(&self, d: f64) -> f64 {
        match self {
            ComponentKernel::Matern(spec) => spec.corr_unchecked(d.abs()),
            ComponentKernel::WhiteNoise => f64::from(d == 0.0),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            ComponentKernel::Matern(spec) => Some(spec.gamma()),
            ComponentKernel::WhiteNoise => None,
        }
    }
}

/// Hyperparameters of one latent component: `ṽᵢ ~ GaSP(0, σ²c) + N(0, σ²η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentParams {
    pub kernel: ComponentKernel,
    pub sigma2: f64,
    pub eta: f64,
}

impl ComponentParams {
    pub fn new(kernel: ComponentKernel, sigma2: f64, eta: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(GaspError::Domain(format!(
                "variance must be positive, got {sigma2}"
            )));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(GaspError::Domain(format!(
                "nugget ratio must be nonnegative, got {eta}"
            )));
        }
        Ok(Self {
            kernel,
            sigma2,
            eta,
        })
    }

    pub fn matern52(gamma: f64, sigma2: f64, eta: f64) -> Result<Self> {
        Self::new(
            ComponentKernel::Matern(KernelSpec::matern52(gamma)?),
            sigma2,
            eta,
        )
    }

    /// Observation-noise variance `τ = σ²η`.
    pub fn tau(&self) -> f64 {
        self.sigma2 * self.eta
    }
}

/// Log-density of one component series `N(v; 0, σ²R̃)`.
pub fn component_log_density(
    sites: &SiteGrid,
    values: &[f64],
    params: &ComponentParams,
) -> Result<f64> {
    let n = values.len() as f64;
    match params.kernel {
        ComponentKernel::Matern(spec) => {
            build_system(&spec, params.sigma2)?;
            let (log_det, quad) =
                likelihood_terms(sites, values, spec.lambda(), params.sigma2, params.tau())?;
            Ok(-0.5 * (n * ln_2pi() + log_det + quad))
        }
        ComponentKernel::WhiteNoise => {
            let var = params.sigma2 * (1.0 + params.eta);
            let ss: f64 = values.iter().map(|v| v * v).sum();
            Ok(-0.5 * (n * ln_2pi() + n * var.ln() + ss / var))
        }
    }
}

/// A fitted model; immutable after construction.
#[derive(Debug, Clone)]
pub struct FittedModel {
    basis: Basis,
    params: Vec<ComponentParams>,
    weights: DMatrix<f64>,
    grid: SiteGrid,
    row_means: DVector<f64>,
    estimates: Vec<Option<ComponentEstimate>>,
}

/// Removes per-row means; returns the centered block and the means.
pub fn center_rows(y: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let means = DVector::from_iterator(y.nrows(), y.row_iter().map(|r| r.mean()));
    let mut c = y.clone();
    for (i, mut row) in c.row_iter_mut().enumerate() {
        row.add_scalar_mut(-means[i]);
    }
    (c, means)
}

impl FittedModel {
    /// Assembles a model from its parts.
    pub fn new(
        basis: Basis,
        params: Vec<ComponentParams>,
        weights: DMatrix<f64>,
        grid: SiteGrid,
        row_means: DVector<f64>,
    ) -> Result<Self> {
        let k = basis.dim();
        if params.len() != k || weights.shape() != (k, grid.len()) || row_means.len() != k {
            return Err(GaspError::Domain(format!(
                "inconsistent shapes: basis {k}, {} parameter sets, weights {:?}, grid {}, means {}",
                params.len(),
                weights.shape(),
                grid.len(),
                row_means.len()
            )));
        }
        for p in &params {
            ComponentParams::new(p.kernel, p.sigma2, p.eta)?;
        }
        Ok(Self {
            basis,
            params,
            weights,
            grid,
            row_means,
            estimates: vec![None; k],
        })
    }

    /// Centers `y_obs` (optionally), estimates the SVD basis and projects.
    pub fn from_observed(
        y_obs: &DMatrix<f64>,
        grid: SiteGrid,
        params: Vec<ComponentParams>,
        center: bool,
    ) -> Result<Self> {
        let (y, means) = if center {
            center_rows(y_obs)
        } else {
            (y_obs.clone(), DVector::zeros(y_obs.nrows()))
        };
        let basis = estimate_basis(&y)?;
        let weights = project_weights(&y, &basis)?;
        Self::new(basis, params, weights, grid, means)
    }

    /// Like [`FittedModel::from_observed`] with a caller-supplied basis.
    pub fn with_basis(
        y_obs: &DMatrix<f64>,
        grid: SiteGrid,
        basis: Basis,
        params: Vec<ComponentParams>,
        center: bool,
    ) -> Result<Self> {
        let (y, means) = if center {
            center_rows(y_obs)
        } else {
            (y_obs.clone(), DVector::zeros(y_obs.nrows()))
        };
        let weights = project_weights(&y, &basis)?;
        Self::new(basis, params, weights, grid, means)
    }

    pub(crate) fn set_estimates(&mut self, estimates: Vec<Option<ComponentEstimate>>) {
        self.estimates = estimates;
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn params(&self) -> &[ComponentParams] {
        &self.params
    }

    /// Projected weights `v̂(s^D)`, K×n.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn grid(&self) -> &SiteGrid {
        &self.grid
    }

    pub fn row_means(&self) -> &DVector<f64> {
        &self.row_means
    }

    /// Optimizer diagnostics per component, when the model came from `fit`.
    pub fn estimates(&self) -> &[Option<ComponentEstimate>] {
        &self.estimates
    }

    pub fn n_components(&self) -> usize {
        self.params.len()
    }

    fn component_series(&self, i: usize) -> Vec<f64> {
        self.weights.row(i).iter().copied().collect()
    }
}

/// Factorized marginal log-likelihood of the centered observed block.
///
/// Frozen components (zero basis column) are excluded.
pub fn marginal_log_likelihood(fitted: &FittedModel) -> Result<f64> {
    let frozen = fitted.basis.frozen();
    let parts: Vec<f64> = (0..fitted.n_components())
        .into_par_iter()
        .map(|i| {
            if frozen[i] {
                return Ok(0.0);
            }
            component_log_density(&fitted.grid, &fitted.component_series(i), &fitted.params[i])
                .map_err(|e| e.in_component(i))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>() + fitted.basis.log_jacobian(fitted.grid.len()))
}

/// Predictive distribution of a full K-vector at each new site.
#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub sites: Vec<f64>,
    /// `μ̂(s*ⱼ)` including the row means.
    pub means: Vec<DVector<f64>>,
    /// `Σ̂(s*ⱼ) = A D* Aᵀ`.
    pub covs: Vec<DMatrix<f64>>,
    /// Diagonal of `D*` at each site.
    pub component_variances: Vec<DVector<f64>>,
}

fn white_noise_predict(
    grid: &SiteGrid,
    values: &[f64],
    p: &ComponentParams,
    new_sites: &[f64],
) -> LatentPrediction {
    let scale = 1.0 + p.eta;
    let mut means = Vec::with_capacity(new_sites.len());
    let mut variances = Vec::with_capacity(new_sites.len());
    for &s in new_sites {
        match grid.binary_search_by(|t| t.total_cmp(&s)) {
            Ok(l) => {
                means.push(values[l] / scale);
                variances.push(p.sigma2 * (scale - 1.0 / scale));
            }
            Err(_) => {
                means.push(0.0);
                variances.push(p.sigma2 * scale);
            }
        }
    }
    LatentPrediction {
        sites: new_sites.to_vec(),
        means,
        variances,
    }
}

/// Joint predictive mean and covariance of `Y(s*)` at sorted new sites.
pub fn predict_joint(fitted: &FittedModel, new_sites: &[f64]) -> Result<PredictiveDistribution> {
    check_nondecreasing(new_sites)?;
    let k = fitted.n_components();
    let frozen = fitted.basis.frozen();
    let latent: Vec<LatentPrediction> = (0..k)
        .into_par_iter()
        .map(|i| {
            let p = &fitted.params[i];
            if frozen[i] {
                return Ok(LatentPrediction {
                    sites: new_sites.to_vec(),
                    means: vec![0.0; new_sites.len()],
                    variances: vec![p.sigma2 * (1.0 + p.eta); new_sites.len()],
                });
            }
            let values = fitted.component_series(i);
            match p.kernel {
                ComponentKernel::Matern(spec) => {
                    let sys = build_system(&spec, p.sigma2)?;
                    let series = ComponentSeries::new(fitted.grid.clone(), values, p.tau())?;
                    predict_latent(&series, &sys, new_sites)
                }
                ComponentKernel::WhiteNoise => {
                    Ok(white_noise_predict(&fitted.grid, &values, p, new_sites))
                }
            }
            .map_err(|e| e.in_component(i))
        })
        .collect::<Result<_>>()?;
    let a = &fitted.basis.a;
    let mut out = PredictiveDistribution {
        sites: new_sites.to_vec(),
        means: Vec::with_capacity(new_sites.len()),
        covs: Vec::with_capacity(new_sites.len()),
        component_variances: Vec::with_capacity(new_sites.len()),
    };
    for j in 0..new_sites.len() {
        let v = DVector::from_iterator(k, latent.iter().map(|l| l.means[j]));
        let d = DVector::from_iterator(k, latent.iter().map(|l| l.variances[j]));
        let mut cov = a * DMatrix::from_diagonal(&d) * a.transpose();
        symmetrize(&mut cov);
        out.means.push(a * v + &fitted.row_means);
        out.covs.push(cov);
        out.component_variances.push(d);
    }
    Ok(out)
}

/// Gaussian conditioning of the last `K - k` coordinates on the first `k`.
///
/// Returns `(μ̂_{*|0}, Σ̂_{*|0})`.
pub fn condition_on_observed(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    y_obs: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let big_k = mean.len();
    let k = y_obs.len();
    if cov.shape() != (big_k, big_k) || k > big_k || k == 0 {
        return Err(GaspError::Domain(format!(
            "cannot condition {k} coordinates of a {big_k}-dimensional normal"
        )));
    }
    let ks = big_k - k;
    if ks == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let s00 = cov.view((0, 0), (k, k)).into_owned();
    let s0s = cov.view((0, k), (k, ks)).into_owned();
    let sss = cov.view((k, k), (ks, ks)).into_owned();
    let (chol, jitter) = cholesky_with_jitter(&s00, 1e-10, 1e-6)?;
    if jitter > 0.0 {
        log::warn!("observed-block covariance regularized with jitter {jitter:e}");
    }
    let resid = y_obs - mean.rows(0, k);
    let w = chol.solve(&s0s);
    let m = mean.rows(k, ks) + w.transpose() * resid;
    let mut c = sss - s0s.transpose() * &w;
    symmetrize(&mut c);
    Ok((m, c))
}

/// Conditional predictive of the partially observed samples at each new site.
#[derive(Debug, Clone)]
pub struct ConditionalPrediction {
    pub sites: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

/// Conditions every site of `pred` on the matching column of `observed`.
pub fn condition_all(
    pred: &PredictiveDistribution,
    observed: &[DVector<f64>],
) -> Result<ConditionalPrediction> {
    if observed.len() != pred.sites.len() {
        return Err(GaspError::Domain(format!(
            "{} observed columns for {} sites",
            observed.len(),
            pred.sites.len()
        )));
    }
    let mut out = ConditionalPrediction {
        sites: pred.sites.clone(),
        means: Vec::with_capacity(observed.len()),
        covs: Vec::with_capacity(observed.len()),
    };
    for j in 0..observed.len() {
        let (m, c) = condition_on_observed(&pred.means[j], &pred.covs[j], &observed[j])?;
        out.means.push(m);
        out.covs.push(c);
    }
    Ok(out)
}

/// A central interval around a predictive mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

/// Central normal intervals at `level`, indexed `[site][sample]`.
pub fn credible_intervals(cond: &ConditionalPrediction, level: f64) -> Result<Vec<Vec<Interval>>> {
    let z = normal_quantile_half(level)?;
    Ok(cond
        .means
        .iter()
        .zip(&cond.covs)
        .map(|(m, c)| {
            (0..m.len())
                .map(|r| {
                    let half = z * c[(r, r)].max(0.0).sqrt();
                    Interval {
                        lower: m[r] - half,
                        mean: m[r],
                        upper: m[r] + half,
                    }
                })
                .collect()
        })
        .collect())
}

/// `z_{(1+level)/2}` of the standard normal.
pub(crate) fn normal_quantile_half(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GaspError::Domain(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + 0.5 * level))
}
