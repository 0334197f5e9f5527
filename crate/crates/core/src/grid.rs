//! Uniform tensor-product evaluation grids on R^d.

use nalgebra::DVector;

/// Uniform grid with per-dimension origin, step, and point count.
///
/// Node `i = (i_1, ..., i_d)` sits at `origin[k] + i_k * step[k]`. Flat
/// indexing is row-major with the last dimension fastest. Integrals are
/// Riemann sums weighted by the cell volume, which is spectrally accurate
/// for the Gaussian-decaying integrands used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    origin: Vec<f64>,
    step: Vec<f64>,
    counts: Vec<usize>,
}

impl SpatialGrid {
    /// Grid of `counts[k]` cells covering [min, max) per dimension, with the
    /// node at the left edge of each cell (matches the periodic spectral grid).
    pub fn uniform(min: &[f64], max: &[f64], counts: &[usize]) -> Self {
        assert_eq!(min.len(), max.len());
        assert_eq!(min.len(), counts.len());
        assert!(counts.iter().all(|&m| m >= 2), "need at least 2 nodes per dim");
        let step = min
            .iter()
            .zip(max)
            .zip(counts)
            .map(|((&a, &b), &m)| {
                assert!(b > a, "empty extent");
                (b - a) / m as f64
            })
            .collect();
        Self {
            origin: min.to_vec(),
            step,
            counts: counts.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn max(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.step)
            .zip(&self.counts)
            .map(|((&a, &h), &m)| a + h * m as f64)
            .collect()
    }

    /// Volume element of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.step.iter().product()
    }

    /// Writes the coordinates of the flat node index into `out`.
    pub fn node_into(&self, mut flat: usize, out: &mut DVector<f64>) {
        debug_assert_eq!(out.len(), self.dim());
        for k in (0..self.dim()).rev() {
            let i = flat % self.counts[k];
            flat /= self.counts[k];
            out[k] = self.origin[k] + self.step[k] * i as f64;
        }
    }

    pub fn node(&self, flat: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.node_into(flat, &mut out);
        out
    }

    /// Axis coordinates of one dimension.
    pub fn axis(&self, k: usize) -> Vec<f64> {
        (0..self.counts[k])
            .map(|i| self.origin[k] + self.step[k] * i as f64)
            .collect()
    }

    /// Riemann-sum integral of a node-indexed function.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        let vol = self.cell_volume();
        (0..self.len()).map(f).sum::<f64>() * vol
    }

    /// L2 norm of a complex field sampled on the grid.
    pub fn l2_norm(&self, values: &[num_complex::Complex<f64>]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.integrate(|i| values[i].norm_sqr()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_mass_in_2d() {
        let grid = SpatialGrid::uniform(&[-8.0, -8.0], &[8.0, 8.0], &[128, 128]);
        let mut x = DVector::zeros(2);
        let mass = grid.integrate(|i| {
            grid.node_into(i, &mut x);
            (-x.norm_squared()).exp()
        });
        assert!((mass - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn node_roundtrip_matches_axes() {
        let grid = SpatialGrid::uniform(&[0.0, 1.0], &[1.0, 3.0], &[4, 8]);
        assert_eq!(grid.len(), 32);
        let ax0 = grid.axis(0);
        let ax1 = grid.axis(1);
        let node = grid.node(2 * 8 + 5);
        assert_eq!(node[0], ax0[2]);
        assert_eq!(node[1], ax1[5]);
    }
}
