//! Exact `O(n)` inference for one Matérn-5/2 component observed with noise.
//!
//! The component is `ṽ(s) = f(s) + ε`, `f ~ GaSP(0, σ² c)`, `ε ~ N(0, τ)`.
//! A Kalman filter started from the stationary law gives the exact
//! likelihood through the one-step-ahead decomposition; a Rauch–Tung–Striebel
//! pass gives the exact posterior moments. Prediction at new sites runs both
//! passes on the merged grid of observed and new sites, with the new sites
//! carrying no observation.
//!
//! All recursions run in the rescaled state coordinates described in
//! [`crate::statespace`], so the numerics depend on the gaps only through
//! `λd`. Covariance updates use the Joseph form and are symmetrized after
//! every step.

use nalgebra::{Matrix3, Vector3};

use crate::error::{GaspError, Result};
use crate::grid::{check_nondecreasing, SiteGrid};
use crate::linalg::ln_2pi;
use crate::statespace::{
    unit_process_noise, unit_stationary_cov, unit_transition, StateSpaceSystem,
};

/// Observed values of one component on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSeries {
    grid: SiteGrid,
    values: Vec<f64>,
    tau: f64,
}

impl ComponentSeries {
    pub fn new(grid: SiteGrid, values: Vec<f64>, tau: f64) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(GaspError::Contract(format!(
                "{} sites but {} values",
                grid.len(),
                values.len()
            )));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(GaspError::Domain(format!(
                "noise variance must be nonnegative, got {tau}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GaspError::Domain(format!("value {i} is not finite")));
        }
        Ok(Self { grid, values, tau })
    }

    pub fn grid(&self) -> &SiteGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything the forward pass produces.
///
/// Moments are stored in rescaled coordinates; the accessors return them in
/// physical coordinates `(f, f', f'')`.
#[derive(Debug, Clone)]
pub struct FilterRun {
    lambda: f64,
    sigma2: f64,
    tau: f64,
    sites: Vec<f64>,
    observed: Vec<bool>,
    predicted_mean: Vec<Vector3<f64>>,
    predicted_cov: Vec<Matrix3<f64>>,
    filtered_mean: Vec<Vector3<f64>>,
    filtered_cov: Vec<Matrix3<f64>>,
    innovations: Vec<f64>,
    innovation_variances: Vec<f64>,
    log_likelihood: f64,
    log_det: f64,
    quad: f64,
    n_obs: usize,
}

impl FilterRun {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    /// Observation-noise variance used by the run.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Whether site `j` carried an observation.
    pub fn is_observed(&self, j: usize) -> bool {
        self.observed[j]
    }

    /// Exact log-likelihood `Σ log N(e_j; 0, S_j)` over observed sites.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// `Σ log S_j`, which equals `log|σ²R̃|` for a run over observed sites.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `Σ e_j² / S_j`, the generalized quadratic form `ṽᵀ(σ²R̃)⁻¹ṽ`.
    pub fn quadratic_form(&self) -> f64 {
        self.quad
    }

    pub fn n_observed(&self) -> usize {
        self.n_obs
    }

    /// Innovations `e_j = ṽ_j - F m⁻_j` (NaN at unobserved sites).
    pub fn innovations(&self) -> &[f64] {
        &self.innovations
    }

    /// One-step predictive variances `S_j = F P⁻_j Fᵀ + τ` of the observation.
    pub fn innovation_variances(&self) -> &[f64] {
        &self.innovation_variances
    }

    /// One-step predictive mean of the observation at site `j`.
    pub fn predicted_observation_mean(&self, j: usize) -> f64 {
        self.predicted_mean[j][0]
    }

    pub fn filtered_state(&self, j: usize) -> (Vector3<f64>, Matrix3<f64>) {
        let scale = physical_scale(self.lambda);
        (
            scale_mean(&self.filtered_mean[j], &scale),
            scale_cov(&self.filtered_cov[j], &scale),
        )
    }

    pub fn predicted_state(&self, j: usize) -> (Vector3<f64>, Matrix3<f64>) {
        let scale = physical_scale(self.lambda);
        (
            scale_mean(&self.predicted_mean[j], &scale),
            scale_cov(&self.predicted_cov[j], &scale),
        )
    }
}

/// Posterior state moments from the backward pass, in physical coordinates.
#[derive(Debug, Clone)]
pub struct SmoothedStates {
    pub sites: Vec<f64>,
    pub means: Vec<Vector3<f64>>,
    pub covs: Vec<Matrix3<f64>>,
}

impl SmoothedStates {
    /// Posterior mean of `f` at site `j`.
    pub fn f_mean(&self, j: usize) -> f64 {
        self.means[j][0]
    }

    /// Posterior variance of `f` at site `j`.
    pub fn f_var(&self, j: usize) -> f64 {
        self.covs[j][(0, 0)]
    }
}

/// Predictive moments of a new noisy observation `ṽ(s*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrediction {
    pub sites: Vec<f64>,
    pub means: Vec<f64>,
    /// Posterior variance of `f(s*)` plus the nugget `τ`.
    pub variances: Vec<f64>,
}

fn physical_scale(lambda: f64) -> [f64; 3] {
    [1.0, lambda, lambda * lambda]
}

fn scale_mean(m: &Vector3<f64>, t: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(m[0] * t[0], m[1] * t[1], m[2] * t[2])
}

fn scale_cov(p: &Matrix3<f64>, t: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| p[(i, j)] * t[i] * t[j])
}

#[inline]
fn symmetrize3(p: &mut Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..i {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Scalar-observation measurement update in Joseph form.
///
/// Returns `(innovation, innovation variance)`.
#[inline]
fn joseph_update(
    m: &mut Vector3<f64>,
    p: &mut Matrix3<f64>,
    y: f64,
    tau: f64,
    site: usize,
) -> Result<(f64, f64)> {
    let s = p[(0, 0)] + tau;
    if !(s.is_finite() && s > 0.0) {
        return Err(GaspError::NumericalInstability {
            site,
            detail: format!("one-step predictive variance {s:e} is not positive"),
        });
    }
    let e = y - m[0];
    let k = p.column(0) / s;
    *m += k * e;
    let mut a = Matrix3::identity();
    a.column_mut(0).axpy(-1.0, &k, 1.0);
    *p = a * *p * a.transpose() + k * k.transpose() * tau;
    symmetrize3(p);
    Ok((e, s))
}

/// Kalman filter on a sorted grid where some sites may carry no observation.
fn forward(
    sites: &[f64],
    obs: &[Option<f64>],
    lambda: f64,
    sigma2: f64,
    tau: f64,
) -> Result<FilterRun> {
    let n = sites.len();
    let mut run = FilterRun {
        lambda,
        sigma2,
        tau,
        sites: sites.to_vec(),
        observed: obs.iter().map(Option::is_some).collect(),
        predicted_mean: Vec::with_capacity(n),
        predicted_cov: Vec::with_capacity(n),
        filtered_mean: Vec::with_capacity(n),
        filtered_cov: Vec::with_capacity(n),
        innovations: Vec::with_capacity(n),
        innovation_variances: Vec::with_capacity(n),
        log_likelihood: 0.0,
        log_det: 0.0,
        quad: 0.0,
        n_obs: 0,
    };
    let mut m = Vector3::zeros();
    let mut p = unit_stationary_cov() * sigma2;
    for j in 0..n {
        if j > 0 {
            let x = lambda * (sites[j] - sites[j - 1]);
            let g = unit_transition(x);
            m = g * m;
            p = g * p * g.transpose() + unit_process_noise(x) * sigma2;
            symmetrize3(&mut p);
        }
        run.predicted_mean.push(m);
        run.predicted_cov.push(p);
        match obs[j] {
            Some(y) => {
                let (e, s) = joseph_update(&mut m, &mut p, y, tau, j)?;
                run.innovations.push(e);
                run.innovation_variances.push(s);
                run.log_det += s.ln();
                run.quad += e * e / s;
                run.n_obs += 1;
            }
            None => {
                run.innovations.push(f64::NAN);
                run.innovation_variances.push(p[(0, 0)] + tau);
            }
        }
        run.filtered_mean.push(m);
        run.filtered_cov.push(p);
    }
    run.log_likelihood = -0.5 * (run.n_obs as f64 * ln_2pi() + run.log_det + run.quad);
    Ok(run)
}

/// Forward pass returning only `(Σ log S_j, Σ e_j²/S_j)` with no storage.
///
/// This is the hot loop of hyperparameter estimation.
pub(crate) fn likelihood_terms(
    sites: &[f64],
    values: &[f64],
    lambda: f64,
    sigma2: f64,
    tau: f64,
) -> Result<(f64, f64)> {
    let mut m = Vector3::zeros();
    let mut p = unit_stationary_cov() * sigma2;
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for j in 0..sites.len() {
        if j > 0 {
            let x = lambda * (sites[j] - sites[j - 1]);
            let g = unit_transition(x);
            m = g * m;
            p = g * p * g.transpose() + unit_process_noise(x) * sigma2;
            symmetrize3(&mut p);
        }
        let (e, s) = joseph_update(&mut m, &mut p, values[j], tau, j)?;
        log_det += s.ln();
        quad += e * e / s;
    }
    Ok((log_det, quad))
}

/// Forward filter over the observed series.
pub fn kalman_filter(series: &ComponentSeries, sys: &StateSpaceSystem) -> Result<FilterRun> {
    let obs: Vec<Option<f64>> = series.values.iter().copied().map(Some).collect();
    forward(
        series.grid.as_slice(),
        &obs,
        sys.lambda(),
        sys.sigma2(),
        series.tau,
    )
}

/// Rauch–Tung–Striebel backward pass over a completed filter run.
pub fn rts_smooth(run: &FilterRun, sys: &StateSpaceSystem) -> Result<SmoothedStates> {
    if run.lambda != sys.lambda() || run.sigma2 != sys.sigma2() {
        return Err(GaspError::Contract(format!(
            "filter run was produced with (λ={}, σ²={}) but smoothing with (λ={}, σ²={})",
            run.lambda,
            run.sigma2,
            sys.lambda(),
            sys.sigma2()
        )));
    }
    let n = run.len();
    if run.filtered_mean.len() != n || run.predicted_cov.len() != n {
        return Err(GaspError::Contract("incomplete filter run".into()));
    }
    let mut means = run.filtered_mean.clone();
    let mut covs = run.filtered_cov.clone();
    for j in (0..n.saturating_sub(1)).rev() {
        let d = run.sites[j + 1] - run.sites[j];
        if d == 0.0 {
            // identical states: the posterior at j is the posterior at j+1
            means[j] = means[j + 1];
            covs[j] = covs[j + 1];
            continue;
        }
        let g = unit_transition(run.lambda * d);
        let p_pred = &run.predicted_cov[j + 1];
        // gain C = P_j Gᵀ P⁻_{j+1}^{-1}, from P⁻ Cᵀ = G P_j
        let rhs = g * run.filtered_cov[j];
        let gain_t = match p_pred.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => p_pred
                .lu()
                .solve(&rhs)
                .or_else(|| p_pred.pseudo_inverse(1e-300).ok().map(|pi| pi * rhs))
                .ok_or_else(|| GaspError::NumericalInstability {
                    site: j + 1,
                    detail: "singular one-step state covariance in smoother".into(),
                })?,
        };
        let gain = gain_t.transpose();
        means[j] = run.filtered_mean[j] + gain * (means[j + 1] - run.predicted_mean[j + 1]);
        let mut p = run.filtered_cov[j] + gain * (covs[j + 1] - p_pred) * gain.transpose();
        symmetrize3(&mut p);
        covs[j] = p;
    }
    let scale = physical_scale(run.lambda);
    Ok(SmoothedStates {
        sites: run.sites.clone(),
        means: means.iter().map(|m| scale_mean(m, &scale)).collect(),
        covs: covs.iter().map(|p| scale_cov(p, &scale)).collect(),
    })
}

/// Merges observed and new sites; a new site tied with an observed one is
/// placed right after it. Returns the merged sites, their observations and
/// the merged index of each new site.
fn merge_grid(
    series: &ComponentSeries,
    new_sites: &[f64],
) -> (Vec<f64>, Vec<Option<f64>>, Vec<usize>) {
    let obs_sites = series.grid.as_slice();
    let total = obs_sites.len() + new_sites.len();
    let mut sites = Vec::with_capacity(total);
    let mut obs = Vec::with_capacity(total);
    let mut new_index = Vec::with_capacity(new_sites.len());
    let (mut a, mut b) = (0, 0);
    while a < obs_sites.len() || b < new_sites.len() {
        let take_obs =
            b == new_sites.len() || (a < obs_sites.len() && obs_sites[a] <= new_sites[b]);
        if take_obs {
            sites.push(obs_sites[a]);
            obs.push(Some(series.values[a]));
            a += 1;
        } else {
            new_index.push(sites.len());
            sites.push(new_sites[b]);
            obs.push(None);
            b += 1;
        }
    }
    (sites, obs, new_index)
}

/// Predictive mean and variance of a new noisy observation at each new site.
///
/// Cost is `O(n + n*)`.
pub fn predict_latent(
    series: &ComponentSeries,
    sys: &StateSpaceSystem,
    new_sites: &[f64],
) -> Result<LatentPrediction> {
    if new_sites.is_empty() {
        return Ok(LatentPrediction {
            sites: vec![],
            means: vec![],
            variances: vec![],
        });
    }
    check_nondecreasing(new_sites)?;
    let (sites, obs, new_index) = merge_grid(series, new_sites);
    let run = forward(&sites, &obs, sys.lambda(), sys.sigma2(), series.tau)?;
    let smoothed = rts_smooth(&run, sys)?;
    let tau = series.tau;
    Ok(LatentPrediction {
        sites: new_sites.to_vec(),
        means: new_index.iter().map(|&j| smoothed.f_mean(j)).collect(),
        variances: new_index
            .iter()
            .map(|&j| smoothed.f_var(j).max(0.0) + tau)
            .collect(),
    })
}
