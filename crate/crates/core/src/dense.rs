//! Reference `O(n³)` implementations used as oracles for the fast path and as
//! the slow side of the benchmark.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GaspError, Result};
use crate::grid::SiteGrid;
use crate::kernel::{corr_matrix, cross_corr, KernelSpec};
use crate::linalg::{chol_logdet, cholesky_with_jitter, gaussian_logpdf};
use crate::model::{Basis, ComponentKernel, ComponentParams};

/// Largest site count accepted by the single-component oracles.
pub const MAX_DENSE_SITES: usize = 5000;
/// Largest `K·n` accepted by the joint oracles.
pub const MAX_JOINT_DIM: usize = 200;

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;

/// A factored dense covariance `σ²R̃`.
pub struct DenseGp {
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    jitter: f64,
}

impl DenseGp {
    pub fn new(grid: &SiteGrid, spec: &KernelSpec, sigma2: f64, eta: f64) -> Result<Self> {
        guard(grid.len(), MAX_DENSE_SITES)?;
        let cov = corr_matrix(grid, spec, eta)?.into_matrix() * sigma2;
        Self::from_cov(cov)
    }

    pub fn from_cov(cov: DMatrix<f64>) -> Result<Self> {
        let (chol, jitter) = cholesky_with_jitter(&cov, JITTER_START, JITTER_MAX)?;
        let log_det = chol_logdet(&chol);
        Ok(Self {
            cov,
            chol,
            log_det,
            jitter,
        })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal jitter that the factorization needed, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_pdf(&self, values: &DVector<f64>) -> f64 {
        gaussian_logpdf(&self.chol, values)
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

fn guard(size: usize, limit: usize) -> Result<()> {
    if size > limit {
        return Err(GaspError::TooLarge { size, limit });
    }
    Ok(())
}

/// Log-density of `values` under `N(0, σ²(R + ηI))`.
pub fn dense_loglik(
    values: &[f64],
    grid: &SiteGrid,
    spec: &KernelSpec,
    sigma2: f64,
    eta: f64,
) -> Result<f64> {
    check_len(values, grid)?;
    let gp = DenseGp::new(grid, spec, sigma2, eta)?;
    Ok(gp.log_pdf(&DVector::from_column_slice(values)))
}

fn check_len(values: &[f64], grid: &SiteGrid) -> Result<()> {
    if values.len() != grid.len() {
        return Err(GaspError::Domain(format!(
            "{} values for {} sites",
            values.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Kriging mean and variance of a new noisy observation at each new site.
///
/// The variance is `σ²(1 + η − rᵀR̃⁻¹r)`.
pub fn dense_predict(
    values: &[f64],
    grid: &SiteGrid,
    new_sites: &[f64],
    spec: &KernelSpec,
    sigma2: f64,
    eta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(values, grid)?;
    let gp = DenseGp::new(grid, spec, 1.0, eta)?;
    let alpha = gp.solve(&DVector::from_column_slice(values));
    let mut means = Vec::with_capacity(new_sites.len());
    let mut vars = Vec::with_capacity(new_sites.len());
    for &s in new_sites {
        let r = DVector::from_vec(cross_corr(grid, s, spec));
        means.push(r.dot(&alpha));
        let w = gp.solve(&r);
        vars.push(sigma2 * (1.0 + eta - r.dot(&w)));
    }
    Ok((means, vars))
}

fn component_cov(grid: &[f64], p: &ComponentParams) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |l, m| {
        let c = p.kernel.corr(grid[l] - grid[m]);
        p.sigma2 * (c + if l == m { p.eta } else { 0.0 })
    })
}

/// `A_v = [I_n ⊗ a₁, …, I_n ⊗ a_K]`, mapping stacked component series to
/// the column-major `vec(Y)`.
fn stacked_basis(basis: &Basis, n: usize) -> DMatrix<f64> {
    let a = basis.matrix();
    let k = a.nrows();
    let mut av = DMatrix::zeros(k * n, k * n);
    for i in 0..k {
        for j in 0..n {
            for r in 0..k {
                av[(j * k + r, i * n + j)] = a[(r, i)];
            }
        }
    }
    av
}

fn stacked_cov(basis: &Basis, params: &[ComponentParams], grid: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    let k = basis.dim();
    let mut sv = DMatrix::zeros(k * n, k * n);
    for (i, p) in params.iter().enumerate() {
        sv.view_mut((i * n, i * n), (n, n))
            .copy_from(&component_cov(grid, p));
    }
    let av = stacked_basis(basis, n);
    &av * sv * av.transpose()
}

fn check_joint(
    y_obs: &DMatrix<f64>,
    basis: &Basis,
    params: &[ComponentParams],
    grid: &SiteGrid,
) -> Result<()> {
    let (k, n) = y_obs.shape();
    guard(k * n, MAX_JOINT_DIM)?;
    if basis.dim() != k || params.len() != k || grid.len() != n {
        return Err(GaspError::Domain(format!(
            "inconsistent shapes: data {k}x{n}, basis {}, {} parameter sets, grid {}",
            basis.dim(),
            params.len(),
            grid.len()
        )));
    }
    Ok(())
}

/// Log-density of `vec(Y)` under `N(0, A_v Σ_v A_vᵀ)`, assembled explicitly.
pub fn dense_joint_loglik(
    y_obs: &DMatrix<f64>,
    basis: &Basis,
    params: &[ComponentParams],
    grid: &SiteGrid,
) -> Result<f64> {
    check_joint(y_obs, basis, params, grid)?;
    let gp = DenseGp::from_cov(stacked_cov(basis, params, grid))?;
    Ok(gp.log_pdf(&DVector::from_column_slice(y_obs.as_slice())))
}

/// Predictive mean and covariance of `Y(s)` at one new site, by brute-force
/// conditioning of the joint `K(n+1)`-dimensional normal.
pub fn dense_joint_predict(
    y_obs: &DMatrix<f64>,
    basis: &Basis,
    params: &[ComponentParams],
    grid: &SiteGrid,
    new_site: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_joint(y_obs, basis, params, grid)?;
    let (k, n) = y_obs.shape();
    let a = basis.matrix();
    let cov_oo = stacked_cov(basis, params, grid);
    // Cov(vec Y(s^D), Y(s)) and Var(Y(s)).
    let mut cross = DMatrix::zeros(k * n, k);
    let mut var = DMatrix::zeros(k, k);
    for (i, p) in params.iter().enumerate() {
        let ai = a.column(i);
        let outer = ai * ai.transpose();
        for j in 0..n {
            let c = p.sigma2 * p.kernel.corr(grid[j] - new_site);
            let mut block = cross.view_mut((j * k, 0), (k, k));
            block += &outer * c;
        }
        var += outer * (p.sigma2 * (1.0 + p.eta));
    }
    let gp = DenseGp::from_cov(cov_oo)?;
    let y = DVector::from_column_slice(y_obs.as_slice());
    let alpha = gp.solve(&y);
    let mean = cross.transpose() * alpha;
    let w = gp.chol.solve(&cross);
    let cov = var - cross.transpose() * w;
    Ok((mean, cov))
}

/// Matrix-normal log-density of a K×n matrix with row covariance `Σ` and
/// column covariance `Λ`, i.e. `vec(Y) ~ N(0, Λ ⊗ Σ)`.
pub fn dense_separable_loglik(
    y: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
) -> Result<f64> {
    let (k, n) = y.shape();
    if sigma.shape() != (k, k) || lambda.shape() != (n, n) {
        return Err(GaspError::Domain(
            "covariance shapes do not match the data".into(),
        ));
    }
    let cs = DenseGp::from_cov(sigma.clone())?;
    let cl = DenseGp::from_cov(lambda.clone())?;
    // tr(Σ⁻¹ Y Λ⁻¹ Yᵀ)
    let li = cl.chol.solve(&y.transpose());
    let si = cs.chol.solve(&(y * li));
    let kn = (k * n) as f64;
    Ok(-0.5
        * (kn * crate::linalg::ln_2pi()
            + k as f64 * cl.log_det
            + n as f64 * cs.log_det
            + si.trace()))
}

/// Convenience: the white-noise/Matérn kernel of a component as a spec.
pub fn matern_spec(p: &ComponentParams) -> Option<KernelSpec> {
    match p.kernel {
        ComponentKernel::Matern(s) => Some(s),
        ComponentKernel::WhiteNoise => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_site() {
        let grid = SiteGrid::new(vec![1.0]).unwrap();
        let spec = KernelSpec::matern52(1.0).unwrap();
        let got = dense_loglik(&[0.5], &grid, &spec, 2.0, 0.5).unwrap();
        let var: f64 = 3.0;
        let want = -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + 0.25 / var);
        assert_relative_eq!(got, want, max_relative = 1e-14);
    }

    #[test]
    fn variance_scaling_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = SiteGrid::regular(0.0, 0.7, 15).unwrap();
        let spec = KernelSpec::matern52(2.0).unwrap();
        let values: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gp = DenseGp::new(&grid, &spec, 1.3, 0.1).unwrap();
        let quad = values
            .iter()
            .zip(gp.solve(&DVector::from_column_slice(&values)).iter())
            .map(|(a, b)| a * b)
            .sum::<f64>();
        let l1 = dense_loglik(&values, &grid, &spec, 1.3, 0.1).unwrap();
        let l2 = dense_loglik(&values, &grid, &spec, 2.6, 0.1).unwrap();
        assert_relative_eq!(l2 - l1, -7.5 * 2f64.ln() + quad / 4.0, epsilon = 1e-10);
    }

    #[test]
    fn prediction_edge_cases() {
        let grid = SiteGrid::regular(0.0, 1.0, 6).unwrap();
        let spec = KernelSpec::matern52(1.5).unwrap();
        let values = [0.3, -0.2, 0.9, 0.1, 0.0, 0.4];
        let (m, v) = dense_predict(&values, &grid, &[2.0, 1e4], &spec, 1.7, 0.0).unwrap();
        assert_relative_eq!(m[0], 0.9, epsilon = 1e-10);
        assert!(v[0].abs() < 1e-10);
        assert!(m[1].abs() < 1e-12);
        assert_relative_eq!(v[1], 1.7, max_relative = 1e-12);
        let (_, v) = dense_predict(&values, &grid, &[1e4], &spec, 1.7, 0.2).unwrap();
        assert_relative_eq!(v[0], 1.7 * 1.2, max_relative = 1e-12);
    }

    #[test]
    fn guards() {
        let grid = SiteGrid::regular(0.0, 1.0, MAX_DENSE_SITES + 1).unwrap();
        let spec = KernelSpec::matern52(1.0).unwrap();
        let values = vec![0.0; grid.len()];
        assert_eq!(
            dense_loglik(&values, &grid, &spec, 1.0, 0.1)
                .unwrap_err()
                .kind(),
            "too-large"
        );
        let grid = SiteGrid::regular(0.0, 1.0, 70).unwrap();
        let basis = Basis::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let params = vec![ComponentParams::matern52(1.0, 1.0, 0.1).unwrap(); 3];
        let y = DMatrix::zeros(3, 70);
        assert_eq!(
            dense_joint_loglik(&y, &basis, &params, &grid)
                .unwrap_err()
                .kind(),
            "too-large"
        );
    }

    fn random_case(
        rng: &mut ChaCha8Rng,
        k: usize,
        n: usize,
    ) -> (DMatrix<f64>, Basis, Vec<ComponentParams>, SiteGrid) {
        let y = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
        let basis =
            Basis::from_matrix(DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let params = (0..k)
            .map(|_| {
                ComponentParams::matern52(
                    rng.random_range(0.5..3.0),
                    rng.random_range(0.3..2.0),
                    rng.random_range(0.01..0.3),
                )
                .unwrap()
            })
            .collect();
        (y, basis, params, SiteGrid::regular(0.0, 0.8, n).unwrap())
    }

    #[test]
    fn joint_k1_reduces_to_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (y, _, params, grid) = random_case(&mut rng, 1, 12);
        let basis = Basis::from_matrix(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let joint = dense_joint_loglik(&y, &basis, &params, &grid).unwrap();
        let spec = matern_spec(&params[0]).unwrap();
        let single =
            dense_loglik(y.as_slice(), &grid, &spec, params[0].sigma2, params[0].eta).unwrap();
        assert_relative_eq!(joint, single, max_relative = 1e-12);
    }

    #[test]
    fn joint_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (y, basis, params, grid) = random_case(&mut rng, 3, 10);
        let l = dense_joint_loglik(&y, &basis, &params, &grid).unwrap();
        let perm = [2, 0, 1];
        let a = basis.matrix().select_columns(&perm);
        let p2: Vec<_> = perm.iter().map(|&i| params[i]).collect();
        let l2 = dense_joint_loglik(&y, &Basis::from_matrix(a).unwrap(), &p2, &grid).unwrap();
        assert_relative_eq!(l, l2, max_relative = 1e-12);
    }

    #[test]
    fn separable_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (k, n) = (3, 8);
        let y = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &b * b.transpose() + DMatrix::identity(k, k) * 0.2;
        let grid = SiteGrid::regular(0.0, 1.0, n).unwrap();
        let lambda = corr_matrix(&grid, &KernelSpec::matern52(1.2).unwrap(), 0.05)
            .unwrap()
            .into_matrix();
        let kron = lambda.kronecker(&sigma);
        let want = DenseGp::from_cov(kron)
            .unwrap()
            .log_pdf(&DVector::from_column_slice(y.as_slice()));
        assert_relative_eq!(
            dense_separable_loglik(&y, &sigma, &lambda).unwrap(),
            want,
            max_relative = 1e-12
        );
    }
}
