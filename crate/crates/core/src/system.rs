//! System description shared by every model: one shared server with rate
//! `mu_shared`, one dedicated server per source, and per-source weights.

use crate::error::{check_probability, check_rate, AoiError, Result};

/// Tolerance on `sum(weights) == 1` and `sum(p) == 1`.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    mu_shared: f64,
    mu_dedicated: Vec<f64>,
    weights: Vec<f64>,
}

impl SystemSpec {
    /// Strict constructor: weights must already sum to one.
    pub fn new(mu_shared: f64, mu_dedicated: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let spec = Self::checked(mu_shared, mu_dedicated, weights)?;
        let total: f64 = spec.weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(AoiError::InvalidWeights(format!(
                "weights sum to {total}, expected 1 (use SystemSpec::relaxed to normalize)"
            )));
        }
        Ok(spec)
    }

    /// Accept any positive weights and normalize them to sum to one.
    pub fn relaxed(mu_shared: f64, mu_dedicated: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut spec = Self::checked(mu_shared, mu_dedicated, weights)?;
        let total: f64 = spec.weights.iter().sum();
        spec.weights.iter_mut().for_each(|w| *w /= total);
        Ok(spec)
    }

    /// Equal weights `1/N`.
    pub fn equal_weights(mu_shared: f64, mu_dedicated: Vec<f64>) -> Result<Self> {
        let n = mu_dedicated.len();
        Self::relaxed(mu_shared, mu_dedicated, vec![1.0; n])
    }

    fn checked(mu_shared: f64, mu_dedicated: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if mu_dedicated.is_empty() {
            return Err(AoiError::InvalidWeights(
                "system needs at least one source".into(),
            ));
        }
        if weights.len() != mu_dedicated.len() {
            return Err(AoiError::DimensionMismatch {
                expected: mu_dedicated.len(),
                got: weights.len(),
            });
        }
        check_rate("mu_shared", mu_shared)?;
        for &mu in &mu_dedicated {
            check_rate("mu_dedicated", mu)?;
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(AoiError::InvalidWeights(format!(
                "weight {w} is not strictly positive"
            )));
        }
        Ok(Self {
            mu_shared,
            mu_dedicated,
            weights,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.mu_dedicated.len()
    }

    pub fn mu_shared(&self) -> f64 {
        self.mu_shared
    }

    pub fn mu_dedicated(&self) -> &[f64] {
        &self.mu_dedicated
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_n w_n * values[n]`.
    pub fn weighted_sum(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Shared-server scheduling probabilities of a probabilistic scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    p: Vec<f64>,
}

impl Pmf {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(AoiError::InvalidPmf("pmf is empty".into()));
        }
        for &x in &p {
            check_probability("p_n", x)?;
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(AoiError::InvalidPmf(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { p })
    }

    /// Uniform pmf `p_n = 1/N`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(AoiError::InvalidPmf("pmf is empty".into()));
        }
        Ok(Self {
            p: vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub(crate) fn ensure_len(&self, n: usize) -> Result<()> {
        if self.p.len() == n {
            Ok(())
        } else {
            Err(AoiError::DimensionMismatch {
                expected: n,
                got: self.p.len(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_rejects_unnormalized_weights() {
        let err = SystemSpec::new(8.0, vec![1.0, 2.0, 3.0], vec![0.3, 0.5, 0.3]);
        assert!(matches!(err, Err(AoiError::InvalidWeights(_))));
    }

    #[test]
    fn relaxed_normalizes() {
        let spec = SystemSpec::relaxed(8.0, vec![1.0, 2.0, 3.0], vec![0.3, 0.5, 0.3]).unwrap();
        let w = spec.weights();
        assert!((w[0] - 3.0 / 11.0).abs() < 1e-15);
        assert!((w[1] - 5.0 / 11.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rates_and_shapes() {
        assert!(SystemSpec::new(0.0, vec![1.0], vec![1.0]).is_err());
        assert!(SystemSpec::new(1.0, vec![-1.0], vec![1.0]).is_err());
        assert!(SystemSpec::new(1.0, vec![f64::NAN], vec![1.0]).is_err());
        assert!(SystemSpec::new(1.0, vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(SystemSpec::new(1.0, vec![], vec![]).is_err());
        assert!(SystemSpec::relaxed(1.0, vec![1.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.5]).is_ok());
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![1.2, -0.2]).is_err());
        assert!(Pmf::new(vec![]).is_err());
        assert_eq!(Pmf::uniform(4).unwrap().probs(), &[0.25; 4]);
        assert_eq!(Pmf::uniform(1).unwrap().probs(), &[1.0]);
    }
}
