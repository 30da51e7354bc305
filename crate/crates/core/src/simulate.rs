//! Synthetic data from the generative model, drawn with the state-space
//! recursion so that simulation scales like inference.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::grid::SiteGrid;
use crate::io::DataFile;
use crate::model::ComponentParams;
use crate::statespace::{unit_process_noise, unit_stationary_cov, unit_transition};

/// Parameters of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub k: usize,
    pub n: usize,
    /// Per-component range; a single value is broadcast.
    pub gamma: Vec<f64>,
    /// Per-component nugget ratio; a single value is broadcast.
    pub eta: Vec<f64>,
    /// Per-component variance; a single value is broadcast.
    pub sigma2: Vec<f64>,
    /// Draw gaps uniformly in `[0.5, 1.5]` instead of a unit grid.
    pub irregular_sites: bool,
    /// Constant added to every sample.
    pub offset: f64,
    pub k_star: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            k: 4,
            n: 500,
            gamma: vec![20.0],
            eta: vec![0.01],
            sigma2: vec![0.04],
            irregular_sites: true,
            offset: 0.5,
            k_star: 1,
            holdout_fraction: 0.5,
            seed: 0,
        }
    }
}

fn broadcast(v: &[f64], k: usize, name: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; k]),
        l if l == k => Ok(v.to_vec()),
        l => Err(GaspError::Domain(format!(
            "{name} has {l} entries for {k} components"
        ))),
    }
}

impl SimulationConfig {
    /// Component parameters after broadcasting.
    pub fn component_params(&self) -> Result<Vec<ComponentParams>> {
        let g = broadcast(&self.gamma, self.k, "gamma")?;
        let e = broadcast(&self.eta, self.k, "eta")?;
        let s = broadcast(&self.sigma2, self.k, "sigma2")?;
        (0..self.k)
            .map(|i| ComponentParams::matern52(g[i], s[i], e[i]))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(GaspError::Domain(
                "need at least one sample and one site".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(GaspError::Domain(format!(
                "hold-out fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.k_star >= self.k {
            return Err(GaspError::Domain(format!(
                "k* = {} leaves no fully observed sample among {}",
                self.k_star, self.k
            )));
        }
        Ok(())
    }
}

/// A simulated truth, its masked copy and the generating quantities.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub truth: DataFile,
    pub masked: DataFile,
    /// Mixing matrix with orthonormal columns.
    pub mixing: DMatrix<f64>,
    pub params: Vec<ComponentParams>,
    /// Noisy component series `ṽ`, K×N.
    pub components: DMatrix<f64>,
    /// Sample indices that were masked.
    pub masked_samples: Vec<usize>,
    /// Column indices that were masked.
    pub masked_columns: Vec<usize>,
}

/// Symmetric square root of a 3×3 PSD matrix, tolerating tiny negative
/// eigenvalues from rounding.
fn psd_factor(m: &Matrix3<f64>) -> Matrix3<f64> {
    if let Some(c) = m.cholesky() {
        return c.l();
    }
    let e = m.symmetric_eigen();
    let d = Matrix3::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    e.eigenvectors * d
}

fn std_normal3(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Exact draw of `f + ε` at `sites` for a Matérn-5/2 process with variance
/// `sigma2` and nugget variance `tau`.
pub fn simulate_component(
    sites: &[f64],
    lambda: f64,
    sigma2: f64,
    tau: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let scale = sigma2.sqrt();
    let mut x = psd_factor(unit_stationary_cov()) * std_normal3(rng) * scale;
    let mut out = Vec::with_capacity(sites.len());
    for j in 0..sites.len() {
        if j > 0 {
            let d = lambda * (sites[j] - sites[j - 1]);
            x = unit_transition(d) * x
                + psd_factor(&unit_process_noise(d)) * std_normal3(rng) * scale;
        }
        let eps: f64 = rng.sample(StandardNormal);
        out.push(x[0] + tau.sqrt() * eps);
    }
    out
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix.
pub fn random_orthogonal(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Simulates `Y = A ṽ + offset`, then masks `k*` samples on a random
/// `holdout_fraction` of sites. Deterministic in `config.seed`.
pub fn simulate(config: &SimulationConfig) -> Result<SimulatedData> {
    config.validate()?;
    let params = config.component_params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut s = 0.0;
    let sites: Vec<f64> = (0..config.n)
        .map(|j| {
            if j > 0 {
                s += if config.irregular_sites {
                    rng.random_range(0.5..1.5)
                } else {
                    1.0
                };
            }
            s
        })
        .collect();
    let grid = SiteGrid::new(sites)?;
    let mixing = random_orthogonal(config.k, &mut rng);
    let mut components = DMatrix::zeros(config.k, config.n);
    for (i, p) in params.iter().enumerate() {
        let lambda = 5f64.sqrt() / p.kernel.gamma().expect("Matérn component");
        let v = simulate_component(&grid, lambda, p.sigma2, p.tau(), &mut rng);
        components.row_mut(i).copy_from_slice(&v);
    }
    let y = (&mixing * &components).add_scalar(config.offset);
    let n_hold =
        ((config.holdout_fraction * config.n as f64).round() as usize).clamp(1, config.n - 1);
    if config.n - n_hold < config.k {
        return Err(GaspError::RankDeficient {
            n: config.n - n_hold,
            k: config.k,
        });
    }
    let mut masked_samples = sample(&mut rng, config.k, config.k_star).into_vec();
    masked_samples.sort_unstable();
    let mut masked_columns = sample(&mut rng, config.n, n_hold).into_vec();
    masked_columns.sort_unstable();
    let mut ym = y.clone();
    for &r in &masked_samples {
        for &c in &masked_columns {
            ym[(r, c)] = f64::NAN;
        }
    }
    let ids: Vec<String> = (0..config.k).map(|i| format!("sample{i}")).collect();
    Ok(SimulatedData {
        truth: DataFile::from_matrix(ids.clone(), grid.clone(), &y)?,
        masked: DataFile::from_matrix(ids, grid, &ym)?,
        mixing,
        params,
        components,
        masked_samples,
        masked_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{matern_corr, KernelSpec};

    #[test]
    fn deterministic_per_seed() {
        let cfg = SimulationConfig {
            n: 200,
            seed: 42,
            ..Default::default()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.truth.to_csv_string(), b.truth.to_csv_string());
        assert_eq!(a.masked.to_csv_string(), b.masked.to_csv_string());
        let c = simulate(&SimulationConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.truth.to_csv_string(), c.truth.to_csv_string());
    }

    #[test]
    fn mask_shape() {
        let cfg = SimulationConfig {
            k: 5,
            n: 100,
            k_star: 2,
            holdout_fraction: 0.3,
            seed: 1,
            ..Default::default()
        };
        let sim = simulate(&cfg).unwrap();
        let data = sim.masked.to_dataset().unwrap();
        assert_eq!((data.k(), data.k_star()), (3, 2));
        assert_eq!(data.held_out_columns(), sim.masked_columns.as_slice());
        let q = &sim.mixing;
        assert!((q.transpose() * q - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SimulationConfig {
            holdout_fraction: 1.0,
            ..Default::default()
        };
        assert!(simulate(&bad).is_err());
        let bad = SimulationConfig {
            k_star: 4,
            ..Default::default()
        };
        assert!(simulate(&bad).is_err());
    }

    #[test]
    fn lag_correlation_matches_kernel() {
        let gamma = 3.0;
        let spec = KernelSpec::matern52(gamma).unwrap();
        let sites: Vec<f64> = (0..8).map(|j| j as f64 * 0.75).collect();
        let reps = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<Vec<f64>> = (0..reps)
            .map(|_| simulate_component(&sites, spec.lambda(), 1.0, 0.0, &mut rng))
            .collect();
        // sample correlation on the Fisher scale, standard error 1/sqrt(reps - 3)
        let se = 1.0 / ((reps - 3) as f64).sqrt();
        for lag in 1..8 {
            let sxy: f64 = draws.iter().map(|d| d[0] * d[lag]).sum();
            let sxx: f64 = draws.iter().map(|d| d[0] * d[0]).sum();
            let syy: f64 = draws.iter().map(|d| d[lag] * d[lag]).sum();
            let r = sxy / (sxx * syy).sqrt();
            let want = matern_corr(sites[lag], &spec).unwrap();
            assert!(
                (r.atanh() - want.atanh()).abs() < 3.0 * se,
                "lag {lag}: {r} vs {want}"
            );
        }
    }
}
