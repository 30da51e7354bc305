//! Half-integer Matérn correlation functions.
//!
//! Only the closed polynomial-times-exponential forms are implemented:
//!
//! | ν   | `c(d)`                              | `λ`      |
//! |-----|-------------------------------------|----------|
//! | 1/2 | `exp(-λd)`                          | `1/γ`    |
//! | 3/2 | `(1 + λd) exp(-λd)`                 | `√3/γ`   |
//! | 5/2 | `(1 + λd + λ²d²/3) exp(-λd)`        | `√5/γ`   |
//!
//! Distances are used in raw site units; `γ` carries the scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GaspError, Result};
use crate::grid::SiteGrid;

/// Matérn roughness parameter ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Roughness {
    Half,
    ThreeHalves,
    #[default]
    FiveHalves,
}

impl Roughness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            x if x == 0.5 => Ok(Roughness::Half),
            x if x == 1.5 => Ok(Roughness::ThreeHalves),
            x if x == 2.5 => Ok(Roughness::FiveHalves),
            other => Err(GaspError::UnsupportedKernel(other)),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Roughness::Half => 0.5,
            Roughness::ThreeHalves => 1.5,
            Roughness::FiveHalves => 2.5,
        }
    }
}

/// Matérn kernel with roughness `nu` and range `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    nu: Roughness,
    gamma: f64,
}

impl KernelSpec {
    pub fn new(nu: Roughness, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(GaspError::Domain(format!(
                "range parameter must be finite and positive, got {gamma}"
            )));
        }
        let spec = Self { nu, gamma };
        let lambda = spec.lambda();
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(GaspError::Domain(format!(
                "range parameter {gamma} gives a degenerate rate {lambda}"
            )));
        }
        Ok(spec)
    }

    /// Matérn-5/2 kernel with range `gamma`.
    pub fn matern52(gamma: f64) -> Result<Self> {
        Self::new(Roughness::FiveHalves, gamma)
    }

    /// Kernel from a numeric ν; anything outside {1/2, 3/2, 5/2} is rejected.
    pub fn from_nu(nu: f64, gamma: f64) -> Result<Self> {
        Self::new(Roughness::from_nu(nu)?, gamma)
    }

    pub fn roughness(&self) -> Roughness {
        self.nu
    }

    pub fn nu(&self) -> f64 {
        self.nu.nu()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `λ = √(2ν)/γ`.
    pub fn lambda(&self) -> f64 {
        (2.0 * self.nu()).sqrt() / self.gamma
    }

    /// Correlation at distance `d`, without input validation.
    #[inline]
    pub(crate) fn corr_unchecked(&self, d: f64) -> f64 {
        let x = self.lambda() * d;
        let poly = match self.nu {
            Roughness::Half => 1.0,
            Roughness::ThreeHalves => 1.0 + x,
            Roughness::FiveHalves => 1.0 + x + x * x / 3.0,
        };
        poly * (-x).exp()
    }
}

/// Matérn correlation at nonnegative distance `d`.
pub fn matern_corr(d: f64, spec: &KernelSpec) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(GaspError::Domain(format!(
            "distance must be nonnegative, got {d}"
        )));
    }
    Ok(spec.corr_unchecked(d))
}

/// Correlation matrix on a site grid with an optional nugget on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    nugget: f64,
}

impl CorrelationMatrix {
    /// The matrix including the nugget, `R + ηI`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

/// `R̃ = R + ηI` with `R[l, m] = c(|s_l - s_m|)`.
pub fn corr_matrix(sites: &SiteGrid, spec: &KernelSpec, eta: f64) -> Result<CorrelationMatrix> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(GaspError::Domain(format!(
            "nugget ratio must be nonnegative, got {eta}"
        )));
    }
    let n = sites.len();
    let mut entries = DMatrix::zeros(n, n);
    for l in 0..n {
        entries[(l, l)] = 1.0 + eta;
        for m in 0..l {
            let c = spec.corr_unchecked(sites[l] - sites[m]);
            entries[(l, m)] = c;
            entries[(m, l)] = c;
        }
    }
    Ok(CorrelationMatrix {
        entries,
        nugget: eta,
    })
}

/// Cross-correlation vector `r(s) = (c(|s - s_1|), ..., c(|s - s_n|))`.
pub(crate) fn cross_corr(sites: &[f64], s: f64, spec: &KernelSpec) -> Vec<f64> {
    sites
        .iter()
        .map(|&t| spec.corr_unchecked((s - t).abs()))
        .collect()
}

/// Unnormalized spectral density `(λ² + t²)^-(ν + 1/2)`.
pub fn spectral_density(t: f64, spec: &KernelSpec) -> f64 {
    let lambda = spec.lambda();
    (lambda * lambda + t * t).powf(-(spec.nu() + 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    #[test]
    fn unit_at_zero_distance() {
        for nu in [0.5, 1.5, 2.5] {
            let spec = KernelSpec::from_nu(nu, 3.7).unwrap();
            assert_eq!(matern_corr(0.0, &spec).unwrap(), 1.0);
        }
    }

    #[test]
    fn decays_to_zero() {
        let spec = KernelSpec::matern52(1.0).unwrap();
        for d in [50.0, 80.0, 1e3] {
            assert!(matern_corr(d, &spec).unwrap() < 1e-12);
        }
    }

    #[test]
    fn matern52_at_unit_distance() {
        // (1 + √5 + 5/3) e^{-√5}, frozen from a 40-digit mpmath evaluation.
        let expected = 0.523_994_108_831_820_310_592_713_250_760_495_7;
        let spec = KernelSpec::matern52(1.0).unwrap();
        assert_relative_eq!(
            matern_corr(1.0, &spec).unwrap(),
            expected,
            max_relative = 1e-15
        );
    }

    #[test]
    fn errors() {
        let spec = KernelSpec::matern52(1.0).unwrap();
        assert!(matches!(
            matern_corr(-0.1, &spec),
            Err(GaspError::Domain(_))
        ));
        assert!(matches!(
            KernelSpec::from_nu(2.0, 1.0),
            Err(GaspError::UnsupportedKernel(_))
        ));
        assert!(KernelSpec::matern52(0.0).is_err());
        assert!(KernelSpec::matern52(-1.0).is_err());
    }

    #[test]
    fn corr_matrix_shapes() {
        let spec = KernelSpec::matern52(2.0).unwrap();
        let one = SiteGrid::new(vec![3.0]).unwrap();
        let r = corr_matrix(&one, &spec, 0.25).unwrap();
        assert_eq!(r.matrix()[(0, 0)], 1.25);

        let grid = SiteGrid::regular(0.0, 0.7, 4).unwrap();
        let r = corr_matrix(&grid, &spec, 0.0).unwrap();
        for l in 0..4 {
            assert_eq!(r.matrix()[(l, l)], 1.0);
            for m in 0..4 {
                let d = (grid[l] - grid[m]).abs();
                assert_eq!(r.matrix()[(l, m)], matern_corr(d, &spec).unwrap());
            }
        }
    }

    #[test]
    fn corr_matrix_rejects_bad_nugget() {
        let spec = KernelSpec::matern52(2.0).unwrap();
        let grid = SiteGrid::regular(0.0, 1.0, 3).unwrap();
        assert!(corr_matrix(&grid, &spec, -1e-3).is_err());
    }

    #[test]
    fn nugget_bounds_smallest_eigenvalue() {
        let spec = KernelSpec::matern52(5.0).unwrap();
        let grid = SiteGrid::new((0..50).map(|i| (i as f64).powf(1.3)).collect()).unwrap();
        for eta in [1e-3, 0.1, 1.0] {
            let r = corr_matrix(&grid, &spec, eta).unwrap();
            let eig = SymmetricEigen::new(r.into_matrix());
            assert!(eig.eigenvalues.min() >= eta - 1e-10);
        }
    }

    #[test]
    fn smooth_at_origin() {
        // finite second difference as h -> 0 for ν = 5/2: c''(0) = -λ²/3
        let spec = KernelSpec::matern52(1.3).unwrap();
        let lam = spec.lambda();
        let mut prev = f64::NAN;
        for h in [1e-2, 1e-3, 1e-4] {
            let second = 2.0 * (spec.corr_unchecked(h) - 1.0) / (h * h);
            assert!((second + lam * lam / 3.0).abs() < 10.0 * h);
            prev = second;
        }
        assert!(prev.is_finite());
    }

    #[test]
    fn spectral_density_basics() {
        let spec = KernelSpec::matern52(0.8).unwrap();
        let lam = spec.lambda();
        assert_relative_eq!(
            spectral_density(0.0, &spec),
            lam.powi(-6),
            max_relative = 1e-14
        );
        for t in [0.1, 1.0, 7.5] {
            assert_eq!(spectral_density(t, &spec), spectral_density(-t, &spec));
            assert!(spectral_density(t, &spec) < spectral_density(t * 0.9, &spec));
        }
    }

    /// Cosine transform of the correlation by composite Simpson quadrature,
    /// compared with the spectral density up to a constant.
    #[test]
    fn spectral_density_matches_fourier_transform() {
        for nu in [0.5, 1.5, 2.5] {
            let spec = KernelSpec::from_nu(nu, 1.0).unwrap();
            let upper = 400.0 / spec.lambda();
            let m = 2_000_000usize;
            let h = upper / m as f64;
            let ft = |t: f64| {
                let mut acc = 0.0;
                for i in 0..=m {
                    let d = i as f64 * h;
                    let w = if i == 0 || i == m {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    acc += w * spec.corr_unchecked(d) * (t * d).cos();
                }
                2.0 * acc * h / 3.0
            };
            let ratios: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|&t| ft(t) / spectral_density(t, &spec))
                .collect();
            for r in &ratios[1..] {
                assert!(
                    ((r - ratios[0]) / ratios[0]).abs() <= 1e-3,
                    "nu={nu} {ratios:?}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn strictly_decreasing(gamma in 0.01f64..100.0, a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let spec = KernelSpec::matern52(gamma).unwrap();
            let (d1, d2) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(d2 - d1 > 1e-9 * gamma);
            let (c1, c2) = (spec.corr_unchecked(d1), spec.corr_unchecked(d2));
            // once both values underflow the ordering is not observable
            prop_assume!(c1 > 1e-300);
            prop_assert!(c1 > c2);
        }

        #[test]
        fn in_unit_interval(gamma in 0.01f64..100.0, d in 0.0f64..1e4) {
            for nu in [0.5, 1.5, 2.5] {
                let c = matern_corr(d, &KernelSpec::from_nu(nu, gamma).unwrap()).unwrap();
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }
}
