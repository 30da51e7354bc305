//! Posterior-mode estimation of the per-component range and nugget under the
//! jointly robust prior, with the variance integrated out.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::filter::likelihood_terms;
use crate::grid::SiteGrid;
use crate::model::{
    center_rows, estimate_basis, project_weights, ComponentKernel, ComponentParams, FittedModel,
    FunctionalDataset,
};

/// Jointly robust prior `π(ζ, η) ∝ (Cζ + η)^a exp(-b(Cζ + η))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PriorSpec {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > -1.0 && b > 0.0 && c > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(GaspError::Domain(format!(
                "prior needs a > -1, b > 0, C > 0; got a={a}, b={b}, C={c}"
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Defaults `a = 1/2`, `b = 1`, `C = span / n`.
    pub fn for_grid(grid: &SiteGrid) -> Result<Self> {
        Self::new(0.5, 1.0, grid.span() / grid.len() as f64)
    }
}

/// `a·log(Cζ + η) − b·(Cζ + η)`; `-∞` when `Cζ + η = 0`.
pub fn jr_prior_log(zeta: f64, eta: f64, prior: &PriorSpec) -> f64 {
    let t = prior.c * zeta + eta;
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    prior.a * t.ln() - prior.b * t
}

/// Divisor used to turn `S² = v̂ᵀR̃⁻¹v̂` into a variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceEstimate {
    /// `S²/(n+1)`.
    #[default]
    PosteriorMode,
    /// `S²/n`, the plug-in maximum likelihood value.
    Mle,
    /// `S²/(n−1)`.
    PosteriorMean,
}

impl VarianceEstimate {
    pub fn apply(self, s2: f64, n: usize) -> f64 {
        let n = n as f64;
        match self {
            VarianceEstimate::PosteriorMode => s2 / (n + 1.0),
            VarianceEstimate::Mle => s2 / n,
            VarianceEstimate::PosteriorMean => s2 / (n - 1.0),
        }
    }
}

/// Pieces of the profiled objective at one `(ζ, η)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileTerms {
    pub objective: f64,
    /// `log|R̃|`.
    pub log_det: f64,
    /// `S² = v̂ᵀR̃⁻¹v̂`.
    pub s2: f64,
}

/// `-½ log|R̃| − (n/2) log S² + log π(ζ, η)` from one unit-variance filter pass.
pub fn profile_terms(
    values: &[f64],
    grid: &SiteGrid,
    zeta: f64,
    eta: f64,
    prior: &PriorSpec,
) -> Result<ProfileTerms> {
    if values.len() != grid.len() {
        return Err(GaspError::Domain(format!(
            "{} values for {} sites",
            values.len(),
            grid.len()
        )));
    }
    if !(zeta > 0.0 && zeta.is_finite() && eta >= 0.0 && eta.is_finite()) {
        return Err(GaspError::Domain(format!(
            "need ζ > 0 and η ≥ 0, got ζ={zeta}, η={eta}"
        )));
    }
    let lambda = 5f64.sqrt() * zeta;
    let (log_det, s2) = likelihood_terms(grid, values, lambda, 1.0, eta)?;
    assert!(s2 >= 0.0, "quadratic form must be nonnegative");
    let n = values.len() as f64;
    Ok(ProfileTerms {
        objective: -0.5 * log_det - 0.5 * n * s2.ln() + jr_prior_log(zeta, eta, prior),
        log_det,
        s2,
    })
}

pub fn profile_log_posterior(
    values: &[f64],
    grid: &SiteGrid,
    zeta: f64,
    eta: f64,
    prior: &PriorSpec,
) -> Result<f64> {
    profile_terms(values, grid, zeta, eta, prior).map(|t| t.objective)
}

/// Settings of the multi-start simplex search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Starting `Cζ` values.
    pub zeta_starts: Vec<f64>,
    pub eta_starts: Vec<f64>,
    /// Stop when the simplex objective spread falls below `tol·max(1, |f|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Box on `Cζ`.
    pub zeta_bounds: (f64, f64),
    pub eta_bounds: (f64, f64),
    pub variance: VarianceEstimate,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            zeta_starts: vec![0.1, 1.0, 10.0],
            eta_starts: vec![1e-4, 1e-2, 1.0],
            tolerance: 1e-8,
            max_iterations: 500,
            zeta_bounds: (1e-8, 1e4),
            eta_bounds: (1e-12, 1e6),
            variance: VarianceEstimate::PosteriorMode,
        }
    }
}

/// Posterior mode of one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub zeta: f64,
    pub eta: f64,
    pub sigma2: f64,
    /// `S²` at the optimum.
    pub s2: f64,
    pub n: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl ComponentEstimate {
    pub fn gamma(&self) -> f64 {
        1.0 / self.zeta
    }
}

struct SimplexResult {
    x: [f64; 2],
    f: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

/// Nelder–Mead minimization in two dimensions, with vertices projected into
/// a box.
fn nelder_mead(
    f: &mut dyn FnMut([f64; 2]) -> f64,
    start: [f64; 2],
    step: f64,
    lo: [f64; 2],
    hi: [f64; 2],
    tol: f64,
    max_iter: usize,
) -> SimplexResult {
    let clamp = |x: [f64; 2]| [x[0].clamp(lo[0], hi[0]), x[1].clamp(lo[1], hi[1])];
    let mut evaluations = 0;
    let mut eval = |x: [f64; 2], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let start = clamp(start);
    let mut pts = [
        start,
        clamp([start[0] + step, start[1]]),
        clamp([start[0], start[1] + step]),
    ];
    // a start on the box corner collapses the simplex; step inward instead
    for (i, p) in pts.iter_mut().enumerate().skip(1) {
        if *p == start {
            p[i - 1] = (start[i - 1] - step).clamp(lo[i - 1], hi[i - 1]);
        }
    }
    let mut vals = pts.map(|p| eval(p, &mut evaluations));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        if vals[2].is_finite() && (vals[2] - vals[0]).abs() <= tol * vals[0].abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let c = [0.5 * (pts[0][0] + pts[1][0]), 0.5 * (pts[0][1] + pts[1][1])];
        let toward = |t: f64| clamp([c[0] + t * (pts[2][0] - c[0]), c[1] + t * (pts[2][1] - c[1])]);
        let xr = toward(-1.0);
        let fr = eval(xr, &mut evaluations);
        if fr < vals[0] {
            let xe = toward(-2.0);
            let fe = eval(xe, &mut evaluations);
            (pts[2], vals[2]) = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < vals[1] {
            (pts[2], vals[2]) = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < vals[2] {
            let x = toward(-0.5);
            (x, eval(x, &mut evaluations))
        } else {
            let x = toward(0.5);
            (x, eval(x, &mut evaluations))
        };
        if fc < vals[2].min(fr) {
            (pts[2], vals[2]) = (xc, fc);
            continue;
        }
        for i in 1..3 {
            pts[i] = [
                pts[0][0] + 0.5 * (pts[i][0] - pts[0][0]),
                pts[0][1] + 0.5 * (pts[i][1] - pts[0][1]),
            ];
            vals[i] = eval(pts[i], &mut evaluations);
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    SimplexResult {
        x: pts[best],
        f: vals[best],
        iterations,
        evaluations,
        converged,
    }
}

/// Maximizes the profiled objective over `(log ζ, log η)` from every lattice
/// start and keeps the best point. Never fails on non-convergence.
pub fn optimize_component(
    values: &[f64],
    grid: &SiteGrid,
    prior: &PriorSpec,
    config: &OptimizerConfig,
) -> Result<ComponentEstimate> {
    let n = values.len();
    if n < 3 {
        return Err(GaspError::Precondition(format!(
            "need at least 3 sites, got {n}"
        )));
    }
    if values.len() != grid.len() {
        return Err(GaspError::Domain(format!(
            "{n} values for {} sites",
            grid.len()
        )));
    }
    if config.zeta_starts.is_empty() || config.eta_starts.is_empty() {
        return Err(GaspError::Domain("empty start lattice".into()));
    }
    let ln_c = prior.c.ln();
    let lo = [config.zeta_bounds.0.ln() - ln_c, config.eta_bounds.0.ln()];
    let hi = [config.zeta_bounds.1.ln() - ln_c, config.eta_bounds.1.ln()];
    let mut objective = |x: [f64; 2]| -> f64 {
        match profile_log_posterior(values, grid, x[0].exp(), x[1].exp(), prior) {
            Ok(v) => -v,
            Err(_) => f64::INFINITY,
        }
    };
    let mut best: Option<SimplexResult> = None;
    let (mut iterations, mut evaluations) = (0, 0);
    for &z in &config.zeta_starts {
        for &e in &config.eta_starts {
            let start = [z.ln() - ln_c, e.ln()];
            let r = nelder_mead(
                &mut objective,
                start,
                1.0,
                lo,
                hi,
                config.tolerance,
                config.max_iterations,
            );
            iterations += r.iterations;
            evaluations += r.evaluations;
            if best.as_ref().is_none_or(|b| r.f < b.f) {
                best = Some(r);
            }
        }
    }
    let best = best.expect("nonempty lattice");
    if !best.f.is_finite() {
        return Err(GaspError::NumericalInstability {
            site: 0,
            detail: "objective is not finite anywhere on the start lattice".into(),
        });
    }
    if !best.converged {
        log::warn!(
            "simplex search stopped after {} iterations without converging",
            best.iterations
        );
    }
    let (zeta, eta) = (best.x[0].exp(), best.x[1].exp());
    let terms = profile_terms(values, grid, zeta, eta, prior)?;
    Ok(ComponentEstimate {
        zeta,
        eta,
        sigma2: config.variance.apply(terms.s2, n),
        s2: terms.s2,
        n,
        iterations,
        evaluations,
        converged: best.converged,
        objective: terms.objective,
    })
}

/// End-to-end fitting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub optimizer: OptimizerConfig,
    /// Remove per-sample means over `s^D` before fitting.
    pub center: bool,
    /// Worker threads for the per-component searches; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            center: true,
            threads: None,
        }
    }
}

/// Fits the basis, the weights and every component's hyperparameters.
pub fn fit(
    dataset: &FunctionalDataset,
    prior: &PriorSpec,
    config: &FitConfig,
) -> Result<FittedModel> {
    let grid = dataset.observed_grid()?;
    let y = dataset.observed_block();
    let (y, means) = if config.center {
        center_rows(&y)
    } else {
        let k = y.nrows();
        (y, nalgebra::DVector::zeros(k))
    };
    let basis = estimate_basis(&y)?;
    let weights = project_weights(&y, &basis)?;
    let frozen = basis.frozen();
    let k = basis.dim();
    let run = || -> Vec<Result<Option<ComponentEstimate>>> {
        (0..k)
            .into_par_iter()
            .map(|i| {
                if frozen[i] {
                    return Ok(None);
                }
                let v: Vec<f64> = weights.row(i).iter().copied().collect();
                optimize_component(&v, &grid, prior, &config.optimizer)
                    .map(Some)
                    .map_err(|e| e.in_component(i))
            })
            .collect()
    };
    let results = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| GaspError::Domain(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut estimates = Vec::with_capacity(k);
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(e) => estimates.push(e),
            Err(e) => errors.push(e),
        }
    }
    if let Some(first) = errors.into_iter().reduce(|first, other| {
        log::error!("{other}");
        first
    }) {
        return Err(first);
    }
    let params = estimates
        .iter()
        .map(|e| match e {
            Some(e) => ComponentParams::matern52(e.gamma(), e.sigma2, e.eta),
            None => ComponentParams::new(ComponentKernel::WhiteNoise, 1.0, 0.0),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = FittedModel::new(basis, params, weights, grid, means)?;
    model.set_estimates(estimates);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{corr_matrix, KernelSpec};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn default_prior() -> PriorSpec {
        PriorSpec::new(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn prior_values() {
        assert_relative_eq!(
            jr_prior_log(1.0, 0.0, &default_prior()),
            -1.0,
            epsilon = 1e-15
        );
        let p = PriorSpec::new(0.5, 1.0, 2.0).unwrap();
        assert_eq!(jr_prior_log(0.5, 1.0, &p), jr_prior_log(0.25, 1.5, &p));
        assert_eq!(jr_prior_log(0.0, 0.0, &p), f64::NEG_INFINITY);
        assert!(jr_prior_log(1e-300, 0.0, &p) < -300.0);
        assert!(jr_prior_log(1e6, 0.0, &p) < -1e6);
    }

    #[test]
    fn prior_mode_on_grid() {
        let p = PriorSpec::new(1.5, 0.7, 1.0).unwrap();
        let (mut best_t, mut best) = (0.0, f64::NEG_INFINITY);
        for i in 1..200_000 {
            let t = i as f64 * 1e-4;
            let v = jr_prior_log(t, 0.0, &p);
            if v > best {
                (best_t, best) = (t, v);
            }
        }
        assert_relative_eq!(best_t, 1.5 / 0.7, epsilon = 1e-4);
    }

    #[test]
    fn prior_rejects_bad_hyperparameters() {
        assert!(PriorSpec::new(-1.0, 1.0, 1.0).is_err());
        assert!(PriorSpec::new(0.5, 0.0, 1.0).is_err());
        assert!(PriorSpec::new(0.5, 1.0, 0.0).is_err());
    }

    fn dense_objective(
        values: &[f64],
        grid: &SiteGrid,
        zeta: f64,
        eta: f64,
        prior: &PriorSpec,
    ) -> f64 {
        let spec = KernelSpec::matern52(1.0 / zeta).unwrap();
        let r = corr_matrix(grid, &spec, eta).unwrap().into_matrix();
        let chol = r.cholesky().unwrap();
        let v = DVector::from_column_slice(values);
        let quad = v.dot(&chol.solve(&v));
        let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let n = values.len() as f64;
        -0.5 * log_det - 0.5 * n * quad.ln() + jr_prior_log(zeta, eta, prior)
    }

    fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> SiteGrid {
        let mut s = 0.0;
        SiteGrid::new(
            (0..n)
                .map(|_| {
                    s += rng.random_range(0.2..1.8);
                    s
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn profile_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [20, 35, 50] {
            let grid = random_grid(&mut rng, n);
            let prior = PriorSpec::for_grid(&grid).unwrap();
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for _ in 0..5 {
                let zeta = rng.random_range(0.1..3.0);
                let eta = rng.random_range(1e-3..1.0);
                let got = profile_log_posterior(&values, &grid, zeta, eta, &prior).unwrap();
                let want = dense_objective(&values, &grid, zeta, eta, &prior);
                assert!((got - want).abs() < 1e-6, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn profile_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = random_grid(&mut rng, 30);
        let prior = PriorSpec::for_grid(&grid).unwrap();
        let values: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = values.iter().map(|v| 3.0 * v).collect();
        let a = profile_log_posterior(&values, &grid, 0.7, 0.05, &prior).unwrap();
        let b = profile_log_posterior(&scaled, &grid, 0.7, 0.05, &prior).unwrap();
        assert_relative_eq!(b - a, -30.0 * 3f64.ln(), epsilon = 1e-9);
    }

    /// Smooth series from a dense Cholesky draw.
    fn smooth_draw(rng: &mut ChaCha8Rng, grid: &SiteGrid, gamma: f64, eta: f64) -> Vec<f64> {
        let spec = KernelSpec::matern52(gamma).unwrap();
        let r = corr_matrix(grid, &spec, eta + 1e-10).unwrap().into_matrix();
        let l = r.cholesky().unwrap().l();
        let z = DVector::from_fn(grid.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (l * z).iter().copied().collect()
    }

    fn grid_argmax(values: &[f64], grid: &SiteGrid, prior: &PriorSpec) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..25 {
            for j in 0..25 {
                let zeta = 10f64.powf(-2.0 + 3.0 * i as f64 / 24.0);
                let eta = 10f64.powf(-5.0 + 6.0 * j as f64 / 24.0);
                let v = profile_log_posterior(values, grid, zeta, eta, prior).unwrap();
                if v > best.0 {
                    best = (v, zeta, eta);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn added_noise_pushes_nugget_up() {
        // Pure white noise is matched equally well by a vanishing range, so
        // the comparison adds the noise on top of a smooth signal.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = SiteGrid::regular(0.0, 1.0, 150).unwrap();
        let prior = PriorSpec::for_grid(&grid).unwrap();
        let smooth = smooth_draw(&mut rng, &grid, 10.0, 1e-4);
        let noisy: Vec<f64> = smooth
            .iter()
            .map(|v| v + 0.7 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (_, eta_noisy) = grid_argmax(&noisy, &grid, &prior);
        let (_, eta_smooth) = grid_argmax(&smooth, &grid, &prior);
        assert!(eta_noisy > eta_smooth, "{eta_noisy} vs {eta_smooth}");
        let cfg = OptimizerConfig::default();
        let a = optimize_component(&noisy, &grid, &prior, &cfg).unwrap();
        let b = optimize_component(&smooth, &grid, &prior, &cfg).unwrap();
        assert!(a.eta > b.eta);
    }

    #[test]
    fn optimizer_beats_every_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = SiteGrid::regular(0.0, 1.0, 200).unwrap();
        let prior = PriorSpec::for_grid(&grid).unwrap();
        let values = smooth_draw(&mut rng, &grid, 8.0, 0.01);
        let cfg = OptimizerConfig::default();
        let est = optimize_component(&values, &grid, &prior, &cfg).unwrap();
        for &z in &cfg.zeta_starts {
            for &e in &cfg.eta_starts {
                let v = profile_log_posterior(&values, &grid, z / prior.c, e, &prior).unwrap();
                assert!(est.objective >= v);
            }
        }
        assert!(est.converged);
        assert_eq!(est.sigma2, est.s2 / 201.0);
    }

    #[test]
    fn argmax_invariant_to_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = SiteGrid::regular(0.0, 1.0, 120).unwrap();
        let prior = PriorSpec::for_grid(&grid).unwrap();
        let values = smooth_draw(&mut rng, &grid, 5.0, 0.05);
        let scaled: Vec<f64> = values.iter().map(|v| v * 7.5).collect();
        let cfg = OptimizerConfig::default();
        let a = optimize_component(&values, &grid, &prior, &cfg).unwrap();
        let b = optimize_component(&scaled, &grid, &prior, &cfg).unwrap();
        assert!((a.zeta.ln() - b.zeta.ln()).abs() < 1e-3);
        assert!((a.eta.ln() - b.eta.ln()).abs() < 1e-3);
        assert_relative_eq!(b.sigma2, a.sigma2 * 56.25, max_relative = 1e-3);
    }

    #[test]
    fn variance_estimates_bracket() {
        let (s2, n) = (12.5, 40);
        let mode = VarianceEstimate::PosteriorMode.apply(s2, n);
        let mle = VarianceEstimate::Mle.apply(s2, n);
        let mean = VarianceEstimate::PosteriorMean.apply(s2, n);
        assert!(mode < mle && mle < mean);
        assert_eq!(mode, s2 / 41.0);
    }

    #[test]
    fn nelder_mead_quadratic() {
        let mut f = |x: [f64; 2]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let r = nelder_mead(&mut f, [5.0, 5.0], 1.0, [-10.0; 2], [10.0; 2], 1e-14, 500);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5);
        // optimum outside the box lands on the boundary
        let r = nelder_mead(&mut f, [5.0, 5.0], 1.0, [2.0, -10.0], [10.0; 2], 1e-14, 500);
        assert!((r.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn short_series_rejected() {
        let grid = SiteGrid::regular(0.0, 1.0, 2).unwrap();
        let err = optimize_component(
            &[1.0, 2.0],
            &grid,
            &default_prior(),
            &OptimizerConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.kind(), "precondition");
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let grid = SiteGrid::regular(0.0, 1.0, 60).unwrap();
        let a = smooth_draw(&mut rng, &grid, 6.0, 0.01);
        let b = smooth_draw(&mut rng, &grid, 3.0, 0.05);
        let y = DMatrix::from_fn(2, 60, |i, j| {
            if i == 0 {
                a[j] + 0.3 * b[j]
            } else {
                b[j] - 0.2 * a[j]
            }
        });
        let data = FunctionalDataset::from_matrix(y, grid.clone()).unwrap();
        let prior = PriorSpec::for_grid(&grid).unwrap();
        let m1 = fit(&data, &prior, &FitConfig::default()).unwrap();
        let m2 = fit(&data, &prior, &FitConfig::default()).unwrap();
        assert_eq!(m1.params(), m2.params());
        for p in m1.params() {
            assert!(p.sigma2 > 0.0 && p.eta >= 0.0 && p.kernel.gamma().unwrap() > 0.0);
        }
        assert_eq!(m1.weights().shape(), (2, 60));
        assert!(m1.estimates().iter().all(Option::is_some));
    }
}
