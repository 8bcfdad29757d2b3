//! Uniform grids and the quadrature rules used for every integral over the input domain.
//!
//! Integrals of tabulated functions use the trapezoid rule, which is the exact
//! integral of the piecewise-linear interpolant. Integrals that involve a
//! classifier's loss, which jumps at the classifier's breakpoints, are split at
//! those breakpoints and evaluated with Gauss-Legendre on each piece.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Uniform tensor grid over a box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_dim: usize,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points_per_dim: usize) -> Result<Self> {
        let grid = Grid {
            lower,
            upper,
            points_per_dim,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// The unit interval `[0, 1]` with `points` nodes.
    pub fn unit(points: usize) -> Result<Self> {
        Self::new(vec![0.0], vec![1.0], points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return config("grid bounds must be nonempty and of equal dimension");
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l))
        {
            return config("grid requires finite bounds with upper > lower in every dimension");
        }
        if self.points_per_dim < 16 || !self.points_per_dim.is_power_of_two() {
            return config(format!(
                "points_per_dim must be a power of two >= 16, got {}",
                self.points_per_dim
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / (self.points_per_dim - 1) as f64)
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn axis(&self, dim: usize) -> Axis {
        Axis {
            start: self.lower[dim],
            step: self.spacing()[dim],
            len: self.points_per_dim,
        }
    }

    /// The single axis of a one-dimensional grid.
    pub fn axis_1d(&self) -> Result<Axis> {
        if self.dim() != 1 {
            return config(format!(
                "this operation is implemented for one-dimensional domains, got d = {}",
                self.dim()
            ));
        }
        Ok(self.axis(0))
    }

    /// Tensor-product trapezoid weights in row-major order (last dimension fastest).
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim()).map(|d| self.axis(d).weights()).collect();
        let mut out = vec![1.0];
        for w in &per_axis {
            out = out
                .iter()
                .flat_map(|a| w.iter().map(move |b| a * b))
                .collect();
        }
        out
    }
}

/// A uniform one-dimensional axis `start + i * step`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.node(i)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.step; self.len];
        w[0] *= 0.5;
        w[self.len - 1] *= 0.5;
        w
    }

    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let inner: f64 = values[1..self.len - 1].iter().sum();
        self.step * (inner + 0.5 * (values[0] + values[self.len - 1]))
    }

    /// Cell index and fractional position of `x`, or `None` outside the axis.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let s = (x - self.start) / self.step;
        if !(s >= 0.0 && s <= (self.len - 1) as f64) {
            return None;
        }
        let i = (s.floor() as usize).min(self.len - 2);
        Some((i, s - i as f64))
    }

    /// Like [`Axis::locate`] but clamps to the boundary; the flag reports clamping.
    pub fn locate_clamped(&self, x: f64) -> (usize, f64, bool) {
        match self.locate(x) {
            Some((i, t)) => (i, t, false),
            None if x < self.start || x.is_nan() => (0, 0.0, true),
            None => (self.len - 2, 1.0, true),
        }
    }

    /// Linear interpolation of nodal values; zero outside the axis.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => values[i] * (1.0 - t) + values[i + 1] * t,
            None => 0.0,
        }
    }
}

const GL_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// Sub-intervals of `[a, b]` cut at every grid node and every breakpoint.
///
/// Yields `(cell, lo, hi)` where `cell` is the grid cell containing the piece.
pub(crate) fn pieces(axis: &Axis, a: f64, b: f64, breakpoints: &[f64]) -> Vec<(usize, f64, f64)> {
    let lo = a.max(axis.start);
    let hi = b.min(axis.end());
    let mut out = Vec::new();
    if hi <= lo {
        return out;
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&c| c > lo && c < hi)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let first = ((lo - axis.start) / axis.step).floor() as usize;
    let last = (((hi - axis.start) / axis.step).ceil() as usize).min(axis.len - 1);
    let mut k = 0;
    for cell in first.min(axis.len - 2)..last.max(first + 1).min(axis.len - 1) {
        let c0 = axis.node(cell).max(lo);
        let c1 = axis.node(cell + 1).min(hi);
        if c1 <= c0 {
            continue;
        }
        let mut left = c0;
        while k < cuts.len() && cuts[k] <= left {
            k += 1;
        }
        while k < cuts.len() && cuts[k] < c1 {
            out.push((cell, left, cuts[k]));
            left = cuts[k];
            k += 1;
        }
        out.push((cell, left, c1));
    }
    out
}

/// Gauss-Legendre nodes and weights for `∫_a^b`, split at grid nodes and `breakpoints`.
pub fn gauss_points(axis: &Axis, a: f64, b: f64, breakpoints: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (_, lo, hi) in pieces(axis, a, b, breakpoints) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (u, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            out.push((mid + half * u, half * w));
        }
    }
    out
}

/// `∫_a^b f(x) dx` over the axis range, split at `breakpoints`.
pub fn integrate_piecewise(
    axis: &Axis,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    f: impl Fn(f64) -> f64,
) -> f64 {
    gauss_points(axis, a, b, breakpoints)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

/// Moments `a_i = ∫_a^b f(x) h_i(x) dx` against the piecewise-linear hat basis of the axis.
///
/// For a piecewise-linear `g` with nodal values `g_i`, `Σ a_i g_i = ∫_a^b f g`.
pub fn hat_moments(
    axis: &Axis,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    f: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; axis.len];
    for (cell, lo, hi) in pieces(axis, a, b, breakpoints) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let x0 = axis.node(cell);
        for (u, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let x = mid + half * u;
            let v = half * w * f(x);
            let t = (x - x0) / axis.step;
            out[cell] += v * (1.0 - t);
            out[cell + 1] += v * t;
        }
    }
    out
}
