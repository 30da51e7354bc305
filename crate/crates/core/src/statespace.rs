//! State-space form of the Matérn-5/2 process.
//!
//! The state is `θ(s) = (f(s), f'(s), f''(s))` and obeys
//! `dθ/ds = J θ + L z(s)` with `J` the companion matrix of `(∂ + λ)³`,
//! `L = (0, 0, 1)ᵀ` and white noise of intensity `q = 16/3 · σ² λ⁵`.
//!
//! Internally every quantity is evaluated in the rescaled coordinates
//! `θ̃ = T⁻¹θ`, `T = diag(1, λ, λ²)`, where the system no longer depends on
//! `λ` except through the dimensionless gap `x = λd`:
//!
//! ```text
//! G(d)  = T G₁(λd) T⁻¹        G₁(x) = e^{-x} (I + xN + x²N²/2),  N = J₁ + I
//! Q(d)  = σ² T Q₁(λd) T       Q₁(x) = 16/3 ∫₀^x e^{J₁u} e₃e₃ᵀ e^{J₁ᵀu} du
//! P∞    = σ² T P₁ T           J₁P₁ + P₁J₁ᵀ + 16/3 e₃e₃ᵀ = 0
//! ```
//!
//! `G₁` is exact because `N` is nilpotent. `Q₁` is integrated in closed form
//! through incomplete-gamma moments, which stays accurate for gaps that are
//! tiny relative to the range, where `P∞ - G P∞ Gᵀ` cancels catastrophically.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3, RowVector3, SMatrix, SVector, Vector3};

use crate::error::{GaspError, Result};
use crate::grid::SiteGrid;
use crate::kernel::{KernelSpec, Roughness};
use crate::linalg::lower_gamma_regularized;

/// Continuous-time system quantities for one Matérn-5/2 component.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    lambda: f64,
    sigma2: f64,
    drift: Matrix3<f64>,
    noise_input: Vector3<f64>,
    observation: RowVector3<f64>,
    noise_intensity: f64,
    stationary_cov: Matrix3<f64>,
}

/// Discrete-time transition and process noise over one gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapMatrices {
    pub d: f64,
    pub transition: Matrix3<f64>,
    pub process_noise: Matrix3<f64>,
}

/// Builds the state-space system of a Matérn-5/2 GaSP with variance `sigma2`.
pub fn build_system(spec: &KernelSpec, sigma2: f64) -> Result<StateSpaceSystem> {
    if spec.roughness() != Roughness::FiveHalves {
        return Err(GaspError::UnsupportedKernel(spec.nu()));
    }
    StateSpaceSystem::new(spec.lambda(), sigma2)
}

impl StateSpaceSystem {
    /// System with rate `lambda = √5/γ` and variance `sigma2`.
    pub fn new(lambda: f64, sigma2: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(GaspError::Domain(format!(
                "rate must be positive, got {lambda}"
            )));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(GaspError::Domain(format!(
                "variance must be positive, got {sigma2}"
            )));
        }
        let l2 = lambda * lambda;
        let drift = Matrix3::new(
            0.0,
            1.0,
            0.0, //
            0.0,
            0.0,
            1.0, //
            -l2 * lambda,
            -3.0 * l2,
            -3.0 * lambda,
        );
        let stationary_cov = to_physical_cov(unit_stationary_cov(), lambda, sigma2);
        Ok(Self {
            lambda,
            sigma2,
            drift,
            noise_input: Vector3::new(0.0, 0.0, 1.0),
            observation: RowVector3::new(1.0, 0.0, 0.0),
            noise_intensity: 16.0 / 3.0 * sigma2 * l2 * l2 * lambda,
            stationary_cov,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Drift matrix `J`.
    pub fn drift(&self) -> &Matrix3<f64> {
        &self.drift
    }

    /// Noise loading `L = (0, 0, 1)ᵀ`.
    pub fn noise_input(&self) -> &Vector3<f64> {
        &self.noise_input
    }

    /// Observation row `F = (1, 0, 0)`.
    pub fn observation(&self) -> &RowVector3<f64> {
        &self.observation
    }

    /// White-noise intensity `q = 16/3 σ² λ⁵`.
    pub fn noise_intensity(&self) -> f64 {
        self.noise_intensity
    }

    /// Stationary state covariance `P∞`.
    pub fn stationary_cov(&self) -> &Matrix3<f64> {
        &self.stationary_cov
    }

    /// `G(d) = e^{J d}`.
    pub fn transition(&self, d: f64) -> Result<Matrix3<f64>> {
        check_gap(d)?;
        Ok(to_physical_transition(
            &unit_transition(self.lambda * d),
            self.lambda,
        ))
    }

    /// `Q(d) = ∫₀^d e^{Jt} L q Lᵀ e^{Jᵀt} dt`.
    pub fn process_noise(&self, d: f64) -> Result<Matrix3<f64>> {
        check_gap(d)?;
        Ok(to_physical_cov(
            &unit_process_noise(self.lambda * d),
            self.lambda,
            self.sigma2,
        ))
    }

    pub fn gap(&self, d: f64) -> Result<GapMatrices> {
        Ok(GapMatrices {
            d,
            transition: self.transition(d)?,
            process_noise: self.process_noise(d)?,
        })
    }
}

/// Free-function form of [`StateSpaceSystem::transition`].
pub fn transition(sys: &StateSpaceSystem, d: f64) -> Result<Matrix3<f64>> {
    sys.transition(d)
}

/// Free-function form of [`StateSpaceSystem::process_noise`].
pub fn process_noise(sys: &StateSpaceSystem, d: f64) -> Result<Matrix3<f64>> {
    sys.process_noise(d)
}

fn check_gap(d: f64) -> Result<()> {
    if d.is_nan() || d < 0.0 {
        return Err(GaspError::Domain(format!(
            "gap must be nonnegative, got {d}"
        )));
    }
    Ok(())
}

fn to_physical_transition(g: &Matrix3<f64>, lambda: f64) -> Matrix3<f64> {
    let t = [1.0, lambda, lambda * lambda];
    Matrix3::from_fn(|i, j| g[(i, j)] * t[i] / t[j])
}

fn to_physical_cov(p: &Matrix3<f64>, lambda: f64, sigma2: f64) -> Matrix3<f64> {
    let t = [1.0, lambda, lambda * lambda];
    Matrix3::from_fn(|i, j| sigma2 * p[(i, j)] * t[i] * t[j])
}

/// `J₁ + I` for the unit-rate companion matrix `J₁`.
const NILPOTENT: [[f64; 3]; 3] = [[1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [-1.0, -3.0, -2.0]];

/// Unit-rate transition `G₁(x) = e^{J₁ x}`.
#[inline]
pub(crate) fn unit_transition(x: f64) -> Matrix3<f64> {
    let n = Matrix3::from_fn(|i, j| NILPOTENT[i][j]);
    let n2 = n * n;
    let e = (-x).exp();
    (Matrix3::identity() + n * x + n2 * (0.5 * x * x)) * e
}

/// Coefficients (in powers of u) of `e^{u} e^{J₁u} e₃`.
const LOADING_POLY: [[f64; 3]; 3] = [[0.0, 0.0, 0.5], [0.0, 1.0, -0.5], [1.0, -2.0, 0.5]];

/// Unit-variance, unit-rate process noise `Q₁(x)`.
#[inline]
pub(crate) fn unit_process_noise(x: f64) -> Matrix3<f64> {
    if x == 0.0 {
        return Matrix3::zeros();
    }
    // moments I_k = ∫₀^x u^k e^{-2u} du = k!/2^{k+1} P(k+1, 2x)
    let mut moments = [0.0; 5];
    let mut fact = 1.0;
    let mut pow2 = 2.0;
    for (k, m) in moments.iter_mut().enumerate() {
        if k > 0 {
            fact *= k as f64;
            pow2 *= 2.0;
        }
        *m = fact / pow2 * lower_gamma_regularized(k as u32 + 1, 2.0 * x);
    }
    let mut q = Matrix3::zeros();
    for a in 0..3 {
        for b in a..3 {
            let mut acc = 0.0;
            for (i, ca) in LOADING_POLY[a].iter().enumerate() {
                for (j, cb) in LOADING_POLY[b].iter().enumerate() {
                    acc += ca * cb * moments[i + j];
                }
            }
            let v = 16.0 / 3.0 * acc;
            q[(a, b)] = v;
            q[(b, a)] = v;
        }
    }
    q
}

/// Unit-variance, unit-rate stationary covariance `P₁`, solved once from the
/// Lyapunov equation.
pub(crate) fn unit_stationary_cov() -> &'static Matrix3<f64> {
    static P1: OnceLock<Matrix3<f64>> = OnceLock::new();
    P1.get_or_init(|| {
        let j1 = Matrix3::from_fn(|i, j| NILPOTENT[i][j] - if i == j { 1.0 } else { 0.0 });
        let mut c = Matrix3::zeros();
        c[(2, 2)] = 16.0 / 3.0;
        solve_lyapunov(&j1, &c).expect("unit Matérn drift is Hurwitz")
    })
}

/// Solves `A P + P Aᵀ + C = 0` for `P` through the 9×9 Kronecker-sum system
/// `(I ⊗ A + A ⊗ I) vec(P) = -vec(C)`. The result is symmetrized.
pub fn solve_lyapunov(a: &Matrix3<f64>, c: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let mut k = SMatrix::<f64, 9, 9>::zeros();
    let eye = Matrix3::<f64>::identity();
    // vec is column-major: index (i, j) -> i + 3j
    for i in 0..3 {
        for j in 0..3 {
            let row = i + 3 * j;
            for p in 0..3 {
                for r in 0..3 {
                    let col = p + 3 * r;
                    k[(row, col)] += a[(i, p)] * eye[(r, j)] + eye[(i, p)] * a[(j, r)];
                }
            }
        }
    }
    let rhs = SVector::<f64, 9>::from_fn(|idx, _| -c[(idx % 3, idx / 3)]);
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| GaspError::Singular("Lyapunov operator".into()))?;
    let p = Matrix3::from_fn(|i, j| sol[i + 3 * j]);
    Ok((p + p.transpose()) * 0.5)
}

/// Block-tridiagonal precision of the stacked states `θ(s_1), ..., θ(s_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    /// Diagonal blocks, one per site.
    pub diag: Vec<Matrix3<f64>>,
    /// Blocks `(j, j+1)`, one per gap; the `(j+1, j)` block is the transpose.
    pub upper: Vec<Matrix3<f64>>,
}

impl BlockTridiagonal {
    pub fn n_sites(&self) -> usize {
        self.diag.len()
    }

    /// Count of structurally nonzero 3×3 blocks, `3n - 2`.
    pub fn nonzero_blocks(&self) -> usize {
        self.diag.len() + 2 * self.upper.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(3 * n, 3 * n);
        for (j, b) in self.diag.iter().enumerate() {
            m.fixed_view_mut::<3, 3>(3 * j, 3 * j).copy_from(b);
        }
        for (j, b) in self.upper.iter().enumerate() {
            m.fixed_view_mut::<3, 3>(3 * j, 3 * j + 3).copy_from(b);
            m.fixed_view_mut::<3, 3>(3 * j + 3, 3 * j)
                .copy_from(&b.transpose());
        }
        m
    }
}

/// Precision of the Markov chain `θ_1 ~ N(0, P∞)`, `θ_{j+1} = G_j θ_j + w_j`,
/// `w_j ~ N(0, Q_j)`:
///
/// ```text
/// D_1 = P∞⁻¹ + G_1ᵀQ_1⁻¹G_1,  D_j = Q_{j-1}⁻¹ + G_jᵀQ_j⁻¹G_j,  D_n = Q_{n-1}⁻¹
/// U_j = -G_jᵀ Q_j⁻¹
/// ```
pub fn joint_precision_structure(
    grid: &SiteGrid,
    sys: &StateSpaceSystem,
) -> Result<BlockTridiagonal> {
    let n = grid.len();
    if n < 2 {
        return Err(GaspError::Precondition(format!(
            "joint precision needs at least two sites, got {n}"
        )));
    }
    let inv = |m: &Matrix3<f64>, what: &str| {
        m.try_inverse()
            .ok_or_else(|| GaspError::Singular(what.to_string()))
    };
    let mut diag = vec![Matrix3::zeros(); n];
    let mut upper = Vec::with_capacity(n - 1);
    diag[0] = inv(sys.stationary_cov(), "stationary covariance")?;
    for j in 0..n - 1 {
        let gap = sys.gap(grid[j + 1] - grid[j])?;
        let q_inv = inv(&gap.process_noise, "process noise")?;
        let gt_qinv = gap.transition.transpose() * q_inv;
        diag[j] += gt_qinv * gap.transition;
        diag[j + 1] += q_inv;
        upper.push(-gt_qinv);
    }
    Ok(BlockTridiagonal { diag, upper })
}
