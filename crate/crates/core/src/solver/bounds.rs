//! Closed-form diagnostics: smoothness constant, optimization rate and excess-risk bound.

use crate::error::{Error, Result};
use crate::objective::ConstraintSet;

/// `L = (1/T) sum_t ||A_t||_F^2`, using `||x d^T||_F^2 = ||x||^2 ||d||^2`.
pub fn lipschitz_constant(cs: &ConstraintSet<'_>) -> f64 {
    if cs.is_empty() {
        return 0.0;
    }
    (0..cs.len()).map(|t| cs.frobenius_sq(t)).sum::<f64>() / cs.len() as f64
}

/// Suboptimality after `k` iterations: `16 L lambda^2 / (k + 2)`.
pub fn convergence_bound(lambda: f64, lipschitz: f64, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("convergence bound needs k >= 1".into()));
    }
    Ok(16.0 * lipschitz * lambda * lambda / (k as f64 + 2.0))
}

/// Inputs of [`excess_risk_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBoundParams {
    pub lambda: f64,
    pub lipschitz: f64,
    /// Bound on `||x (x' - x'')^T||` in the primal norm (1 for data in `[0, 1]^d`
    /// with the max-entry norm).
    pub data_bound: f64,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
    /// Bound on the dual norm of any model; `4 lambda` for the entrywise L1 norm.
    pub model_bound: Option<f64>,
}

/// Excess risk of the `k`-th iterate relative to the expected-risk minimizer:
///
/// `16 L lambda^2/(k+2) + 16 lambda B_X sqrt(2 ln k / floor(n/3)) + 5 B_X B_D sqrt(ln(4/delta)/n)`.
pub fn excess_risk_bound(p: RiskBoundParams) -> Result<f64> {
    if p.n < 3 {
        return Err(Error::Domain(format!("need n >= 3 samples, got {}", p.n)));
    }
    if !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {}", p.delta)));
    }
    if !(p.lambda > 0.0) || p.lipschitz < 0.0 || p.data_bound < 0.0 {
        return Err(Error::Domain("lambda must be positive and bounds non-negative".into()));
    }
    let model_bound = p.model_bound.unwrap_or(4.0 * p.lambda);
    let optimization = convergence_bound(p.lambda, p.lipschitz, p.k)?;
    let thirds = (p.n / 3) as f64;
    let complexity = 16.0 * p.lambda * p.data_bound * (2.0 * (p.k as f64).ln() / thirds).sqrt();
    let deviation = 5.0 * p.data_bound * model_bound * ((4.0 / p.delta).ln() / p.n as f64).sqrt();
    Ok(optimization + complexity + deviation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse_data::{Dataset, SparseVector, TripletConstraint};

    #[test]
    fn lipschitz_example() {
        let pts = vec![
            SparseVector::from_dense(&[1.0, 1.0]),
            SparseVector::from_dense(&[1.0, 0.0]),
            SparseVector::from_dense(&[0.0, 1.0]),
        ];
        let ds = Dataset::new(pts, None, 2).unwrap();
        let cs = ConstraintSet::new(&ds, vec![TripletConstraint::new(0, 1, 2)]).unwrap();
        assert_eq!(lipschitz_constant(&cs), 4.0);

        let zero = Dataset::new(
            vec![SparseVector::zeros(2), SparseVector::unit(2, 0), SparseVector::unit(2, 1)],
            None,
            2,
        )
        .unwrap();
        let cs = ConstraintSet::new(&zero, vec![TripletConstraint::new(0, 1, 2)]).unwrap();
        assert_eq!(lipschitz_constant(&cs), 0.0);
    }

    #[test]
    fn convergence_bound_examples() {
        assert_eq!(convergence_bound(1.0, 4.0, 2).unwrap(), 16.0);
        let a = convergence_bound(1.5, 2.0, 10).unwrap();
        let b = convergence_bound(3.0, 2.0, 10).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12);
        assert!(convergence_bound(1.0, 1.0, 0).is_err());
        let seq: Vec<f64> = (1..100).map(|k| convergence_bound(1.0, 1.0, k).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
    }

    fn params(k: usize, n: usize) -> RiskBoundParams {
        RiskBoundParams {
            lambda: 1.0,
            lipschitz: 1.0,
            data_bound: 1.0,
            k,
            n,
            delta: 0.05,
            model_bound: None,
        }
    }

    #[test]
    fn excess_risk_middle_term_vanishes_at_k1() {
        let p = params(1, 300);
        let expected = 16.0 / 3.0 + 5.0 * 4.0 * ((4.0f64 / 0.05).ln() / 300.0).sqrt();
        assert!((excess_risk_bound(p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn excess_risk_decreases_in_n() {
        let vals: Vec<f64> = [30, 300, 3000, 30000]
            .iter()
            .map(|&n| excess_risk_bound(params(10, n)).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn excess_risk_domain_errors() {
        assert!(excess_risk_bound(params(10, 2)).is_err());
        assert!(excess_risk_bound(params(0, 30)).is_err());
        assert!(excess_risk_bound(RiskBoundParams { delta: 1.0, ..params(10, 30) }).is_err());
    }
}
