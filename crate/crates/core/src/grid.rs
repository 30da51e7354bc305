use std::ops::Deref;

use crate::error::{GaspError, Result};

/// Strictly increasing, finite, one-dimensional input locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGrid(Vec<f64>);

impl SiteGrid {
    pub fn new(sites: Vec<f64>) -> Result<Self> {
        if let Some(i) = sites.iter().position(|s| !s.is_finite()) {
            return Err(GaspError::Grid(format!("site {i} is not finite")));
        }
        if let Some(i) = sites.windows(2).position(|w| w[1] <= w[0]) {
            return Err(GaspError::Grid(format!(
                "sites must be strictly increasing: s[{}]={} >= s[{}]={}",
                i,
                sites[i],
                i + 1,
                sites[i + 1]
            )));
        }
        Ok(Self(sites))
    }

    /// Evenly spaced grid `start, start+step, ...` with `n` points.
    pub fn regular(start: f64, step: f64, n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| start + step * i as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Length of the covered interval, `s_n - s_1` (zero for fewer than two sites).
    pub fn span(&self) -> f64 {
        match (self.0.first(), self.0.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn mean_gap(&self) -> f64 {
        if self.0.len() < 2 {
            0.0
        } else {
            self.span() / (self.0.len() - 1) as f64
        }
    }
}

impl Deref for SiteGrid {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks that `sites` is nondecreasing (ties allowed), as required of
/// prediction locations.
pub(crate) fn check_nondecreasing(sites: &[f64]) -> Result<()> {
    if let Some(i) = sites.iter().position(|s| !s.is_finite()) {
        return Err(GaspError::Grid(format!(
            "prediction site {i} is not finite"
        )));
    }
    if let Some(i) = sites.windows(2).position(|w| w[1] < w[0]) {
        return Err(GaspError::Grid(format!(
            "prediction sites must be sorted: s[{}]={} > s[{}]={}",
            i,
            sites[i],
            i + 1,
            sites[i + 1]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_and_duplicates() {
        assert!(SiteGrid::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(SiteGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(SiteGrid::new(vec![0.0, f64::NAN]).is_err());
        assert!(SiteGrid::new(vec![]).is_ok());
    }

    #[test]
    fn span_and_gap() {
        let g = SiteGrid::regular(10.0, 2.5, 5).unwrap();
        assert_eq!(g.span(), 10.0);
        assert_eq!(g.mean_gap(), 2.5);
        assert_eq!(g.len(), 5);
    }
}
