//! Forward models for indirect observations: additive noise `Z = X + ε` and a
//! self-adjoint spectral operator on `[0, 1]` with cosine eigenbasis.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::{Axis, Grid};
use crate::kernels::NoiseModel;

pub const DEFAULT_K_MAX: usize = 64;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `φ_0 = 1`, `φ_k(x) = √2 cos(πkx)`: orthonormal on `[0, 1]`.
pub fn cosine_basis(k: usize, x: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        SQRT_2 * (PI * k as f64 * x).cos()
    }
}

/// Self-adjoint operator `A φ_k = b_k φ_k` with `b_k = k^{-β}`, `b_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralOperator {
    pub beta: f64,
    pub k_max: usize,
    pub singular_values: Vec<f64>,
}

impl SpectralOperator {
    pub fn new(beta: f64, k_max: usize) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return config(format!("operator exponent beta must be >= 0, got {beta}"));
        }
        if k_max == 0 {
            return config("k_max must be >= 1");
        }
        let singular_values = (0..=k_max)
            .map(|k| if k == 0 { 1.0 } else { (k as f64).powf(-beta) })
            .collect();
        Ok(SpectralOperator {
            beta,
            k_max,
            singular_values,
        })
    }

    pub fn singular_value(&self, k: usize) -> f64 {
        self.singular_values[k]
    }
}

/// Coefficients `θ_k`, `k = 0..=k_max`, in the cosine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub theta: Vec<f64>,
}

impl CoefficientVector {
    pub fn uniform(k_max: usize) -> Self {
        let mut theta = vec![0.0; k_max + 1];
        theta[0] = 1.0;
        CoefficientVector { theta }
    }

    /// Cosine coefficients of `2x` (`increasing`) or `2(1 - x)` on `[0, 1]`, truncated at `k_max`.
    pub fn linear_density(increasing: bool, k_max: usize) -> Self {
        let sign = if increasing { 1.0 } else { -1.0 };
        let theta = (0..=k_max)
            .map(|k| {
                if k == 0 {
                    1.0
                } else if k % 2 == 1 {
                    -sign * 4.0 * SQRT_2 / (PI * k as f64).powi(2)
                } else {
                    0.0
                }
            })
            .collect();
        CoefficientVector { theta }
    }

    pub fn k_max(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.theta
            .iter()
            .enumerate()
            .map(|(k, t)| t * cosine_basis(k, x))
            .sum()
    }

    pub fn tabulate(&self, axis: &Axis) -> Vec<f64> {
        axis.nodes().iter().map(|&x| self.evaluate(x)).collect()
    }

    /// Density admissibility: `θ_0 = 1` and `Σ_{k>=1} √2|θ_k| <= 1`.
    pub fn check_density(&self) -> Result<()> {
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Model("non-finite coefficient".into()));
        }
        if (self.theta[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!(
                "density coefficient theta_0 must be 1, got {}",
                self.theta[0]
            )));
        }
        let l1: f64 = self.theta[1..].iter().map(|t| SQRT_2 * t.abs()).sum();
        if l1 > 1.0 + 1e-12 {
            return Err(Error::Model(format!(
                "positivity guard violated: sum sqrt2|theta_k| = {l1} > 1"
            )));
        }
        Ok(())
    }

    /// Quadrature projection of nodal values onto the first `k_max + 1` basis functions.
    pub fn project(values: &[f64], axis: &Axis, k_max: usize) -> Self {
        let w = axis.weights();
        let nodes = axis.nodes();
        let theta = (0..=k_max)
            .map(|k| {
                values
                    .iter()
                    .zip(&w)
                    .zip(&nodes)
                    .map(|((v, w), &x)| v * w * cosine_basis(k, x))
                    .sum()
            })
            .collect();
        CoefficientVector { theta }
    }
}

/// `Z_i = X_i + ε_i` for scalar inputs, reproducible from `seed`.
pub fn contaminate(x_draws: &[f64], noise: &NoiseModel, seed: u64) -> Result<Vec<f64>> {
    if noise.dim() != 1 {
        return config("scalar contamination needs one-dimensional noise");
    }
    let mut rng = rng_from_seed(seed);
    Ok(contaminate_with(x_draws, noise, &mut rng))
}

pub(crate) fn contaminate_with<R: Rng + ?Sized>(
    x_draws: &[f64],
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec<f64> {
    if noise.is_dirac() {
        return x_draws.to_vec();
    }
    x_draws.iter().map(|x| x + noise.sample(rng)[0]).collect()
}

/// Vector-valued version of [`contaminate`].
pub fn contaminate_vectors(
    x_draws: &[Vec<f64>],
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng_from_seed(seed);
    x_draws
        .iter()
        .map(|x| {
            if x.len() != noise.dim() {
                return config("draw and noise dimensions differ");
            }
            Ok(x.iter()
                .zip(noise.sample(&mut rng))
                .map(|(a, e)| a + e)
                .collect())
        })
        .collect()
}

/// `(Af)(z) = Σ_k b_k θ_k φ_k(z)` tabulated on a one-dimensional grid in `[0, 1]`.
pub fn apply_operator(
    f: &CoefficientVector,
    op: &SpectralOperator,
    grid: &Grid,
) -> Result<Vec<f64>> {
    f.check_density()?;
    if f.k_max() > op.k_max {
        return config("coefficient vector longer than the operator truncation");
    }
    let axis = grid.axis_1d()?;
    let image = CoefficientVector {
        theta: f
            .theta
            .iter()
            .enumerate()
            .map(|(k, t)| op.singular_value(k) * t)
            .collect(),
    };
    let values = image.tabulate(&axis);
    if let Some(v) = values.iter().find(|v| **v < -1e-12) {
        return Err(Error::Model(format!("Af is negative on the grid ({v})")));
    }
    Ok(values)
}

/// Inverse-CDF sampler for a piecewise-linear density given by nodal values.
#[derive(Debug, Clone)]
pub struct DensitySampler {
    axis: Axis,
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DensitySampler {
    pub fn new(values: &[f64], axis: Axis) -> Result<Self> {
        if values.len() != axis.len {
            return config("density values do not match the grid");
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Model(format!("density has a negative value ({v})")));
        }
        let mut cumulative = Vec::with_capacity(axis.len);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * axis.step * (w[0] + w[1]);
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::Model("density has zero mass".into()));
        }
        Ok(DensitySampler {
            axis,
            values: values.to_vec(),
            cumulative,
        })
    }

    pub fn mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>() * self.mass();
        let cell = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&target).unwrap())
        {
            Ok(i) => i.min(self.axis.len - 2),
            Err(i) => (i - 1).min(self.axis.len - 2),
        };
        let r = (target - self.cumulative[cell]) / self.axis.step;
        let v0 = self.values[cell];
        let a = 0.5 * (self.values[cell + 1] - v0);
        // solve a s^2 + v0 s = r on [0, 1]
        let disc = (v0 * v0 + 4.0 * a * r).max(0.0);
        let denom = v0 + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.axis.node(cell) + s.clamp(0.0, 1.0) * self.axis.step
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// `n` i.i.d. draws from the piecewise-linear density with the given nodal values.
pub fn sample_density(values: &[f64], grid: &Grid, n: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = DensitySampler::new(values, grid.axis_1d()?)?;
    let mut rng = rng_from_seed(seed);
    Ok(sampler.sample_n(n, &mut rng))
}

/// `θ̂_k = (1/n) Σ_i b_k^{-1} φ_k(Z_i)` for `k = 0..=cutoff`.
pub fn estimate_svd_coefficients(
    z_draws: &[f64],
    op: &SpectralOperator,
    cutoff: usize,
) -> Result<CoefficientVector> {
    if z_draws.is_empty() {
        return Err(Error::Data("no draws to estimate coefficients from".into()));
    }
    if cutoff > op.k_max {
        return config(format!("cutoff {cutoff} exceeds k_max {}", op.k_max));
    }
    let n = z_draws.len() as f64;
    let theta = (0..=cutoff)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            let s: f64 = z_draws.iter().map(|&z| cosine_basis(k, z)).sum();
            s / (n * op.singular_value(k))
        })
        .collect();
    Ok(CoefficientVector { theta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operator_validation() {
        assert!(SpectralOperator::new(-1.0, 8).is_err());
        assert!(SpectralOperator::new(1.0, 0).is_err());
        let op = SpectralOperator::new(1.0, 8).unwrap();
        assert!(op
            .singular_values
            .windows(2)
            .all(|w| w[1] <= w[0] && w[1] > 0.0));
        assert!((op.singular_value(3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gram_matrix_is_identity() {
        let axis = Grid::unit(1024).unwrap().axis(0);
        let w = axis.weights();
        let nodes = axis.nodes();
        for j in 0..12 {
            for k in 0..12 {
                let g: f64 = nodes
                    .iter()
                    .zip(&w)
                    .map(|(&x, w)| w * cosine_basis(j, x) * cosine_basis(k, x))
                    .sum();
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((g - expected).abs() < 1e-6, "({j},{k}) -> {g}");
            }
        }
    }

    #[test]
    fn operator_on_uniform_and_single_mode() {
        let grid = Grid::unit(256).unwrap();
        let op = SpectralOperator::new(1.0, DEFAULT_K_MAX).unwrap();
        let af = apply_operator(&CoefficientVector::uniform(DEFAULT_K_MAX), &op, &grid).unwrap();
        assert!(af.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let mut f = CoefficientVector::uniform(DEFAULT_K_MAX);
        f.theta[3] = 0.1;
        let af = apply_operator(&f, &op, &grid).unwrap();
        let coeffs = CoefficientVector::project(&af, &grid.axis(0), 6);
        assert!((coeffs.theta[3] - 0.1 / 3.0).abs() < 1e-10);
        assert!((grid.axis(0).trapezoid(&af) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn positivity_guard() {
        let grid = Grid::unit(64).unwrap();
        let op = SpectralOperator::new(0.0, 8).unwrap();
        let mut f = CoefficientVector::uniform(8);
        f.theta[1] = 0.8;
        assert!(matches!(
            apply_operator(&f, &op, &grid),
            Err(Error::Model(_))
        ));
        let lin = CoefficientVector::linear_density(true, 64);
        lin.check_density().unwrap();
    }

    #[test]
    fn linear_density_coefficients_match_projection() {
        let axis = Grid::unit(2048).unwrap().axis(0);
        let values: Vec<f64> = axis.nodes().iter().map(|x| 2.0 * x).collect();
        let proj = CoefficientVector::project(&values, &axis, 9);
        let exact = CoefficientVector::linear_density(true, 9);
        for k in 0..=9 {
            assert!((proj.theta[k] - exact.theta[k]).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn svd_coefficient_edge_cases() {
        let op = SpectralOperator::new(0.0, 4).unwrap();
        let c = estimate_svd_coefficients(&[0.5], &op, 1).unwrap();
        assert_eq!(c.theta[0], 1.0);
        assert!(c.theta[1].abs() < 1e-15);
        assert!(matches!(
            estimate_svd_coefficients(&[], &op, 1),
            Err(Error::Data(_))
        ));
        assert!(estimate_svd_coefficients(&[0.1], &op, 5).is_err());
    }

    #[test]
    fn dirac_contamination_is_identity() {
        let x = vec![0.1, 0.5, 0.9];
        let z = contaminate(&x, &NoiseModel::dirac(1), 7).unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn sampler_rejects_negative_and_handles_spike() {
        let grid = Grid::unit(64).unwrap();
        let mut v = vec![0.0; 64];
        v[10] = -1.0;
        assert!(matches!(
            sample_density(&v, &grid, 10, 1),
            Err(Error::Model(_))
        ));
        v[10] = 63.0;
        let axis = grid.axis(0);
        let draws = sample_density(&v, &grid, 1000, 3).unwrap();
        assert!(draws
            .iter()
            .all(|&x| x >= axis.node(9) && x <= axis.node(11)));
    }
}
