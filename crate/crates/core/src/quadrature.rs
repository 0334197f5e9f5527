//! Gaussian quadrature rules via the Golub-Welsch eigenvalue method.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature rule needs at least one node, got {0}")]
    EmptyRule(usize),
    #[error("quadrature failed to converge: |coarse - fine| = {defect:.3e} exceeds {tolerance:.3e}")]
    NotConverged { defect: f64, tolerance: f64 },
}

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Nodes and weights from the symmetric tridiagonal Jacobi matrix of a
/// three-term recurrence. `offdiag[k]` couples nodes k and k+1; `mu0` is the
/// total mass of the weight function.
fn golub_welsch(offdiag: &[f64], mu0: f64) -> Rule {
    let n = offdiag.len() + 1;
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for (k, &b) in offdiag.iter().enumerate() {
        jacobi[(k, k + 1)] = b;
        jacobi[(k + 1, k)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let first = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on [a, b]. Exact for polynomials up to degree 2n-1.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Rule, QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::EmptyRule(n));
    }
    let offdiag: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let mut rule = golub_welsch(&offdiag, 2.0);
    // map from [-1, 1]
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for x in rule.nodes.iter_mut() {
        *x = mid + half * *x;
    }
    for w in rule.weights.iter_mut() {
        *w *= half;
    }
    Ok(rule)
}

/// Gauss-Hermite rule for the weight exp(-x^2) on the real line.
pub fn gauss_hermite(n: usize) -> Result<Rule, QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::EmptyRule(n));
    }
    let offdiag: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    Ok(golub_welsch(&offdiag, std::f64::consts::PI.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn integrate(rule: &Rule, f: impl Fn(f64) -> f64) -> f64 {
        rule.iter().map(|(x, w)| w * f(x)).sum()
    }

    #[test]
    fn legendre_is_exact_on_polynomials() {
        let rule = gauss_legendre(5, 0.0, 2.0).unwrap();
        // exact through degree 9: compare against the primitive x^{d+1}/(d+1)
        for degree in 0..=9u32 {
            let got = integrate(&rule, |x| x.powi(degree as i32));
            let want = 2.0f64.powi(degree as i32 + 1) / f64::from(degree + 1);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "degree {degree}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn legendre_handles_oscillation() {
        let rule = gauss_legendre(40, 0.0, PI).unwrap();
        let got = integrate(&rule, f64::sin);
        assert!((got - 2.0).abs() < 1e-13);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(20).unwrap();
        let mass = integrate(&rule, |_| 1.0);
        let second = integrate(&rule, |x| x * x);
        let fourth = integrate(&rule, |x| x.powi(4));
        assert!((mass - PI.sqrt()).abs() < 1e-12);
        assert!((second - PI.sqrt() / 2.0).abs() < 1e-12);
        assert!((fourth - 0.75 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hermite_oscillatory_closed_form() {
        // int exp(-x^2) cos(a x) dx = sqrt(pi) exp(-a^2/4)
        let rule = gauss_hermite(48).unwrap();
        let a = 6.0;
        let got = integrate(&rule, |x| (a * x).cos());
        let want = PI.sqrt() * (-a * a / 4.0).exp();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}
