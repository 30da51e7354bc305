//! Small dense linear-algebra helpers shared by the fast path and the oracles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GaspError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub(crate) fn ln_2pi() -> f64 {
    LN_2PI
}

/// Cholesky factorization with an escalating diagonal jitter.
///
/// Tries the matrix as given, then adds `rel·trace/n` for
/// `rel = start_rel, 10·start_rel, ...` up to `max_rel`. Returns the factor
/// and the jitter actually added.
pub fn cholesky_with_jitter(
    mat: &DMatrix<f64>,
    start_rel: f64,
    max_rel: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(mat.clone()) {
        return Ok((chol, 0.0));
    }
    let n = mat.nrows().max(1);
    let scale = (mat.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = start_rel;
    while rel <= max_rel * (1.0 + 1e-9) {
        let jitter = rel * scale;
        let mut m = mat.clone();
        for i in 0..mat.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            log::warn!("cholesky needed a diagonal jitter of {jitter:e}");
            return Ok((chol, jitter));
        }
        rel *= 10.0;
    }
    Err(GaspError::Singular(format!(
        "{}x{} matrix is not positive definite even with jitter {:e}·trace/n",
        mat.nrows(),
        mat.ncols(),
        max_rel
    )))
}

/// `log|Σ|` from a Cholesky factor.
pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
}

/// Zero-mean Gaussian log-density `log N(x; 0, Σ)` given the factor of `Σ`.
pub fn gaussian_logpdf(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let n = x.len() as f64;
    let z = chol
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("nonsingular factor");
    -0.5 * (n * LN_2PI + chol_logdet(chol) + z.norm_squared())
}

/// Regularized lower incomplete gamma `P(m, y)` for integer `m >= 1`, `y >= 0`.
///
/// Uses the power series for small `y` (no cancellation) and the finite
/// complement `1 - e^{-y} Σ_{j<m} y^j/j!` otherwise.
pub(crate) fn lower_gamma_regularized(m: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let mf = m as f64;
    if y < 2.0 {
        // P(m, y) = e^{-y} y^m / m! * Σ_j y^j / ((m+1)...(m+j))
        let mut lead = (-y).exp();
        for j in 1..=m {
            lead *= y / j as f64;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut j = 1.0;
        loop {
            term *= y / (mf + j);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            j += 1.0;
        }
        lead * sum
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..m {
            term *= y / j as f64;
            sum += term;
        }
        1.0 - (-y).exp() * sum
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
