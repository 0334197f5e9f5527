//! Coherent-state algebra: basis evaluation, overlaps, and initial amplitudes.

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::grid::SpatialGrid;
use crate::trajectory::PhaseSpacePoint;
use crate::Complex;

#[derive(Debug, Error)]
pub enum CoherentError {
    #[error("quadrature of the initial amplitude did not converge: |coarse - fine| = {defect:.3e}")]
    QuadratureFailure { defect: f64 },
}

/// Fixed-width Gaussian wavepacket g^eps[q, p], the FGA basis element.
///
/// g(x) = (pi eps)^(-d/4) exp(-|x-q|^2 / (2 eps) + i p.(x-q) / eps),
/// normalized to unit L2 norm.
#[derive(Debug, Clone)]
pub struct GaussianWavepacket {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
    pub epsilon: f64,
}

impl GaussianWavepacket {
    pub fn new(q: DVector<f64>, p: DVector<f64>, epsilon: f64) -> Self {
        assert_eq!(q.len(), p.len());
        assert!(epsilon > 0.0);
        Self { q, p, epsilon }
    }

    pub fn from_phase_point(z: &PhaseSpacePoint, epsilon: f64) -> Self {
        Self::new(z.q.clone(), z.p.clone(), epsilon)
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn center(&self) -> PhaseSpacePoint {
        PhaseSpacePoint::new(self.q.clone(), self.p.clone())
    }

    /// Pointwise evaluation of the coherent state.
    pub fn eval(&self, x: &DVector<f64>) -> Complex {
        let eps = self.epsilon;
        let d = self.dim() as f64;
        let norm = (std::f64::consts::PI * eps).powf(-d / 4.0);
        let mut dist_sq = 0.0;
        let mut phase = 0.0;
        for k in 0..self.dim() {
            let dx = x[k] - self.q[k];
            dist_sq += dx * dx;
            phase += self.p[k] * dx;
        }
        let (sin, cos) = (phase / eps).sin_cos();
        norm * (-dist_sq / (2.0 * eps)).exp() * Complex::new(cos, sin)
    }
}

/// Overlap <g[z1], g[z2]> = exp(-|z1-z2|^2/(4 eps) + i (p1+p2).(q1-q2)/(2 eps)).
pub fn coherent_inner(z1: &PhaseSpacePoint, z2: &PhaseSpacePoint, epsilon: f64) -> Complex {
    let dist_sq = z1.dist_squared(z2);
    let phase = (&z1.p + &z2.p).dot(&(&z1.q - &z2.q)) / (2.0 * epsilon);
    let (sin, cos) = phase.sin_cos();
    (-dist_sq / (4.0 * epsilon)).exp() * Complex::new(cos, sin)
}

/// Initial wavefunction handed to the estimators: either a Gaussian wavepacket
/// (closed-form amplitudes) or an arbitrary profile integrated numerically.
#[derive(Clone)]
pub enum InitialData {
    Gaussian(GaussianWavepacket),
    Custom {
        dim: usize,
        /// support radius around `center` used to window the fallback quadrature
        center: DVector<f64>,
        radius: f64,
        f: Arc<dyn Fn(&DVector<f64>) -> Complex + Send + Sync>,
    },
}

impl InitialData {
    pub fn dim(&self) -> usize {
        match self {
            InitialData::Gaussian(g) => g.dim(),
            InitialData::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Complex {
        match self {
            InitialData::Gaussian(g) => g.eval(x),
            InitialData::Custom { f, .. } => f(x),
        }
    }
}

/// Initial FGA amplitude at the phase-space point z = (q, p):
///
/// A0(z) = 2^(d/2) int u_in(y) exp((i/eps)(-p.(y-q) + (i/2)|y-q|^2)) dy.
///
/// For a Gaussian u_in = g^eps[z0] this is closed form,
/// A0(z) = 2^(d/2) (pi eps)^(d/4) <g[z], g[z0]>; the quadrature fallback
/// handles general profiles and doubles as the validation oracle.
pub fn initial_amplitude(
    u_in: &InitialData,
    z: &PhaseSpacePoint,
    epsilon: f64,
) -> Result<Complex, CoherentError> {
    match u_in {
        InitialData::Gaussian(g) => {
            let d = g.dim() as f64;
            let z0 = g.center();
            let scale = 2f64.powf(d / 2.0) * (std::f64::consts::PI * epsilon).powf(d / 4.0);
            Ok(scale * coherent_inner(z, &z0, epsilon))
        }
        InitialData::Custom { center, radius, .. } => {
            let coarse = amplitude_quadrature(u_in, z, epsilon, center, *radius, 1024);
            let fine = amplitude_quadrature(u_in, z, epsilon, center, *radius, 2048);
            let defect = (coarse - fine).norm();
            if defect > 1e-10 {
                return Err(CoherentError::QuadratureFailure { defect });
            }
            Ok(fine)
        }
    }
}

/// Modulus of the initial amplitude at the sampling center, 2^(d/2) (pi eps)^(d/4).
pub fn initial_amplitude_peak(dim: usize, epsilon: f64) -> f64 {
    let d = dim as f64;
    2f64.powf(d / 2.0) * (std::f64::consts::PI * epsilon).powf(d / 4.0)
}

/// Direct grid quadrature of the A0 integral. The window covers both the
/// evaluation center q and the initial-data support, padded by 10 sqrt(eps)
/// where Gaussian tails are below 1e-21.
pub fn amplitude_quadrature(
    u_in: &InitialData,
    z: &PhaseSpacePoint,
    epsilon: f64,
    support_center: &DVector<f64>,
    support_radius: f64,
    points_per_dim: usize,
) -> Complex {
    let d = z.dim();
    let pad = 10.0 * epsilon.sqrt() + support_radius;
    let mins: Vec<f64> = (0..d)
        .map(|k| z.q[k].min(support_center[k]) - pad)
        .collect();
    let maxs: Vec<f64> = (0..d)
        .map(|k| z.q[k].max(support_center[k]) + pad)
        .collect();
    let grid = SpatialGrid::uniform(&mins, &maxs, &vec![points_per_dim; d]);

    let mut y = DVector::zeros(d);
    let mut sum = Complex::new(0.0, 0.0);
    for i in 0..grid.len() {
        grid.node_into(i, &mut y);
        let mut dist_sq = 0.0;
        let mut phase = 0.0;
        for k in 0..d {
            let dy = y[k] - z.q[k];
            dist_sq += dy * dy;
            phase -= z.p[k] * dy;
        }
        let (sin, cos) = (phase / epsilon).sin_cos();
        let kernel = (-dist_sq / (2.0 * epsilon)).exp() * Complex::new(cos, sin);
        sum += u_in.eval(&y) * kernel;
    }
    2f64.powf(d as f64 / 2.0) * sum * grid.cell_volume()
}

/// FGA phase Theta = S + P.(x - Q) + (i/2)|x - Q|^2; Im Theta >= 0.
pub fn fga_phase(action: f64, p: &DVector<f64>, q: &DVector<f64>, x: &DVector<f64>) -> Complex {
    let mut dist_sq = 0.0;
    let mut momentum_term = 0.0;
    for k in 0..q.len() {
        let dx = x[k] - q[k];
        dist_sq += dx * dx;
        momentum_term += p[k] * dx;
    }
    Complex::new(action + momentum_term, 0.5 * dist_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(q: f64, p: f64) -> PhaseSpacePoint {
        PhaseSpacePoint::new(DVector::from_vec(vec![q]), DVector::from_vec(vec![p]))
    }

    #[test]
    fn eval_peak_value() {
        let g = GaussianWavepacket::new(
            DVector::from_vec(vec![0.3]),
            DVector::from_vec(vec![-1.0]),
            0.1,
        );
        let got = g.eval(&DVector::from_vec(vec![0.3]));
        let want = (std::f64::consts::PI * 0.1f64).powf(-0.25);
        assert!((got.re - want).abs() < 1e-15 && got.im.abs() < 1e-15);
    }

    #[test]
    fn eval_matches_extended_precision_reference() {
        // frozen reference computed with mpmath at 50 digits:
        // (pi*eps)^(-1/4) * exp(-(x-q)^2/(2 eps)) * exp(i p (x-q)/eps)
        // for eps = 0.1, q = 0, p = 1, x = 0.5
        let g = GaussianWavepacket::new(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
            0.1,
        );
        let got = g.eval(&DVector::from_vec(vec![0.5]));
        let want = Complex::new(0.10855401075945669, -0.36696846236059664);
        assert!((got - want).norm() < 1e-15, "{got}");
    }

    #[test]
    fn eval_is_normalized() {
        let eps = 0.07;
        let g = GaussianWavepacket::new(
            DVector::from_vec(vec![0.4]),
            DVector::from_vec(vec![2.0]),
            eps,
        );
        let half = 10.0 * eps.sqrt();
        let grid = SpatialGrid::uniform(&[0.4 - half], &[0.4 + half], &[2048]);
        let mut x = DVector::zeros(1);
        let mass = grid.integrate(|i| {
            grid.node_into(i, &mut x);
            g.eval(&x).norm_sqr()
        });
        assert!((mass - 1.0).abs() < 1e-10, "mass = {mass}");
    }

    #[test]
    fn inner_product_identity_and_formula() {
        let eps = 0.1;
        let a = z(0.0, 0.0);
        assert!((coherent_inner(&a, &a, eps) - Complex::new(1.0, 0.0)).norm() < 1e-15);

        let b = z(0.3, -0.2);
        let got = coherent_inner(&a, &b, eps);
        let want_mod = (-0.13f64 / 0.4).exp();
        assert!((got.norm() - want_mod).abs() < 1e-15);
    }

    #[test]
    fn inner_product_matches_grid_quadrature() {
        let eps = 0.1;
        let z1 = z(0.0, 0.0);
        let z2 = z(0.3, -0.2);
        let g1 = GaussianWavepacket::from_phase_point(&z1, eps);
        let g2 = GaussianWavepacket::from_phase_point(&z2, eps);
        let half = 10.0 * eps.sqrt();
        let grid = SpatialGrid::uniform(&[-half], &[0.3 + half], &[4096]);
        let mut x = DVector::zeros(1);
        let mut sum = Complex::new(0.0, 0.0);
        for i in 0..grid.len() {
            grid.node_into(i, &mut x);
            sum += g1.eval(&x).conj() * g2.eval(&x);
        }
        let quadrature = sum * grid.cell_volume();
        let formula = coherent_inner(&z1, &z2, eps);
        assert!((quadrature - formula).norm() < 1e-10);
    }

    #[test]
    fn initial_amplitude_closed_form_against_quadrature() {
        let eps = 0.1;
        let z0 = z(-0.2, 0.5);
        let u_in = InitialData::Gaussian(GaussianWavepacket::from_phase_point(&z0, eps));
        for (dq, dp) in [(0.0, 0.0), (0.3, -0.4), (-0.5, 0.2)] {
            let zz = z(-0.2 + dq, 0.5 + dp);
            let closed = initial_amplitude(&u_in, &zz, eps).unwrap();
            let quad = amplitude_quadrature(&u_in, &zz, eps, &z0.q, 0.0, 2048);
            assert!(
                (closed - quad).norm() < 1e-10,
                "offset ({dq},{dp}): {closed} vs {quad}"
            );
        }
    }

    #[test]
    fn initial_amplitude_peak_and_falloff() {
        let eps = 0.05;
        let z0 = z(0.1, -0.3);
        let u_in = InitialData::Gaussian(GaussianWavepacket::from_phase_point(&z0, eps));
        let at_center = initial_amplitude(&u_in, &z0, eps).unwrap();
        assert!((at_center.norm() - initial_amplitude_peak(1, eps)).abs() < 1e-13);

        for (dq, dp) in [(0.1, 0.0), (0.0, 0.2), (-0.15, 0.1), (0.2, -0.2)] {
            let zz = z(0.1 + dq, -0.3 + dp);
            let got = initial_amplitude(&u_in, &zz, eps).unwrap();
            let want_ratio = (-(dq * dq + dp * dp) / (4.0 * eps)).exp();
            assert!((got.norm() / at_center.norm() - want_ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_amplitude_of_zero_function_vanishes() {
        let u_in = InitialData::Custom {
            dim: 1,
            center: DVector::zeros(1),
            radius: 1.0,
            f: Arc::new(|_| Complex::new(0.0, 0.0)),
        };
        let got = initial_amplitude(&u_in, &z(0.2, 0.4), 0.1).unwrap();
        assert_eq!(got, Complex::new(0.0, 0.0));
    }

    #[test]
    fn custom_initial_data_matches_gaussian_closed_form() {
        // feed the Gaussian through the numerical fallback path
        let eps = 0.1;
        let g = GaussianWavepacket::from_phase_point(&z(0.0, 0.4), eps);
        let g2 = g.clone();
        let u_num = InitialData::Custom {
            dim: 1,
            center: DVector::zeros(1),
            radius: 0.5,
            f: Arc::new(move |x| g2.eval(x)),
        };
        let u_formula = InitialData::Gaussian(g);
        let probe = z(0.25, 0.1);
        let a = initial_amplitude(&u_num, &probe, eps).unwrap();
        let b = initial_amplitude(&u_formula, &probe, eps).unwrap();
        assert!((a - b).norm() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn fga_phase_examples() {
        let q = DVector::from_vec(vec![0.5]);
        let p = DVector::from_vec(vec![1.0]);
        // x = Q collapses to the action
        let at_center = fga_phase(0.2, &p, &q, &q);
        assert_eq!(at_center, Complex::new(0.2, 0.0));
        // S = 0, P = 0 leaves the pure Gaussian term
        let zero_p = DVector::from_vec(vec![0.0]);
        let x = DVector::from_vec(vec![1.3]);
        let pure = fga_phase(0.0, &zero_p, &q, &x);
        assert!((pure - Complex::new(0.0, 0.5 * 0.8 * 0.8)).norm() < 1e-15);
        // arithmetic spot check
        let x1 = DVector::from_vec(vec![1.0]);
        let got = fga_phase(0.2, &p, &q, &x1);
        assert!((got - Complex::new(0.7, 0.125)).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn inner_product_conjugate_symmetry(
            q1 in -2.0f64..2.0, p1 in -2.0f64..2.0,
            q2 in -2.0f64..2.0, p2 in -2.0f64..2.0,
            eps in 0.02f64..0.5,
        ) {
            let a = z(q1, p1);
            let b = z(q2, p2);
            let ab = coherent_inner(&a, &b, eps);
            let ba = coherent_inner(&b, &a, eps);
            prop_assert!((ab - ba.conj()).norm() < 1e-14);
            prop_assert!(ab.norm() <= 1.0 + 1e-14);
            // equality only at coincident points
            if (q1 - q2).abs() + (p1 - p2).abs() > 1e-3 {
                prop_assert!(ab.norm() < 1.0);
            }
        }

        #[test]
        fn fga_phase_has_nonnegative_imaginary_part(
            s in -3.0f64..3.0, p in -3.0f64..3.0, q in -3.0f64..3.0, x in -3.0f64..3.0,
        ) {
            let phase = fga_phase(
                s,
                &DVector::from_vec(vec![p]),
                &DVector::from_vec(vec![q]),
                &DVector::from_vec(vec![x]),
            );
            prop_assert!(phase.im >= 0.0);
        }
    }
}
