//! Base kernels with compactly supported Fourier transforms, noise models, and
//! deconvolution kernels obtained by Fourier inversion.
//!
//! Fourier convention: `F[f](t) = ∫ f(x) e^{itx} dx`, so that
//! `f(u) = (1/2π) ∫ F[f](t) e^{-itu} dt`.
//!
//! A [`TabulatedKernel`] stores the *scaled* kernel `k(u) = (1/λ) K_η(u/λ)` on
//! the symmetric offset grid `u = j·step`, `|j| <= half_len`. The step is the
//! spacing of the input grid, so a table can be convolved directly against
//! functions sampled on that grid.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::{Axis, Grid};

/// Base kernels `K` with `F[K]` supported in `[-1, 1]` and `F[K](0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKernelKind {
    /// `F[K] = 1_{[-1,1]}`, `K(u) = sin(u) / (πu)`.
    Sinc,
    /// `F[K] ≡ 1` on `[-1/2, 1/2]` with an infinitely smooth taper to zero at `±1`.
    /// All moments vanish, so the kernel has every finite order.
    OrderMFlatTop,
}

impl BaseKernelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sinc" => Ok(Self::Sinc),
            "order_m_flat_top" | "flat_top" => Ok(Self::OrderMFlatTop),
            other => config(format!("unknown base kernel kind '{other}'")),
        }
    }

    pub fn fourier(self, t: f64) -> f64 {
        let a = t.abs();
        match self {
            Self::Sinc => {
                if a <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::OrderMFlatTop => {
                if a <= 0.5 {
                    1.0
                } else if a >= 1.0 {
                    0.0
                } else {
                    let s = 2.0 * (a - 0.5);
                    let up = smooth_bump(1.0 - s);
                    up / (up + smooth_bump(s))
                }
            }
        }
    }
}

fn smooth_bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Noise families with closed-form Fourier transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// No contamination; `d` is the input dimension.
    Dirac {
        #[serde(default = "one")]
        d: usize,
    },
    /// Per-dimension k-fold convolutions of the standard Laplace law,
    /// `F[η_i](t) = (1 + t²)^{-β_i/2}` with `β_i ∈ {2, 4, 6}`.
    Laplace { beta: Vec<f64> },
}

fn one() -> usize {
    1
}

const DENSITY_HALF_WIDTH: f64 = 40.0;
const DENSITY_STEP: f64 = 1.0 / 512.0;
const FOURIER_HALF_WIDTH: f64 = 64.0;
const FOURIER_STEP: f64 = 1.0 / 16.0;

/// Contamination law `η = Π η_i` with tabulated density and Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    spec: NoiseSpec,
    /// `β_i` per dimension (zero for the Dirac model).
    pub decay_exponents: Vec<f64>,
    /// Per-dimension density on `density_axis`.
    pub density_values: Vec<Vec<f64>>,
    pub density_axis: Axis,
    /// Per-dimension `F[η_i]` on `fourier_axis`.
    pub fourier_values: Vec<Vec<f64>>,
    pub fourier_axis: Axis,
}

impl NoiseModel {
    pub fn dirac(d: usize) -> Self {
        Self::from_spec(NoiseSpec::Dirac { d }).expect("dirac noise is always valid")
    }

    pub fn laplace(beta: &[f64]) -> Result<Self> {
        Self::from_spec(NoiseSpec::Laplace {
            beta: beta.to_vec(),
        })
    }

    pub fn from_spec(spec: NoiseSpec) -> Result<Self> {
        let decay_exponents = match &spec {
            NoiseSpec::Dirac { d } => {
                if *d == 0 {
                    return config("noise dimension must be >= 1");
                }
                vec![0.0; *d]
            }
            NoiseSpec::Laplace { beta } => {
                if beta.is_empty() {
                    return config("laplace noise needs at least one decay exponent");
                }
                for &b in beta {
                    if !(b > 0.5) {
                        return config(format!("decay exponent {b} violates beta > 1/2"));
                    }
                    if ![2.0, 4.0, 6.0].contains(&b) {
                        return config(format!(
                            "laplace-type noise supports beta in {{2, 4, 6}}, got {b}"
                        ));
                    }
                }
                beta.clone()
            }
        };
        let density_axis = symmetric_axis(DENSITY_HALF_WIDTH, DENSITY_STEP);
        let fourier_axis = symmetric_axis(FOURIER_HALF_WIDTH, FOURIER_STEP);
        let mut model = NoiseModel {
            spec,
            decay_exponents,
            density_values: Vec::new(),
            density_axis,
            fourier_values: Vec::new(),
            fourier_axis,
        };
        if !model.is_dirac() {
            for dim in 0..model.dim() {
                let dens: Vec<f64> = density_axis
                    .nodes()
                    .iter()
                    .map(|&x| model.density(dim, x))
                    .collect();
                let mass = density_axis.trapezoid(&dens);
                if dens.iter().any(|&v| v < 0.0) || (mass - 1.0).abs() > 1e-6 {
                    return Err(Error::Model(format!(
                        "noise density in dimension {dim} integrates to {mass}"
                    )));
                }
                let four: Vec<f64> = fourier_axis
                    .nodes()
                    .iter()
                    .map(|&t| model.fourier(dim, t))
                    .collect();
                if four.iter().any(|v| v.abs() == 0.0) {
                    return Err(Error::Model("noise Fourier transform vanishes".into()));
                }
                model.density_values.push(dens);
                model.fourier_values.push(four);
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self.spec, NoiseSpec::Dirac { .. })
    }

    pub fn dim(&self) -> usize {
        self.decay_exponents.len()
    }

    /// `β̄ = Σ β_i`.
    pub fn beta_bar(&self) -> f64 {
        self.decay_exponents.iter().sum()
    }

    fn folds(&self, dim: usize) -> u32 {
        (self.decay_exponents[dim] / 2.0).round() as u32
    }

    /// Standard deviation of the noise in one dimension.
    pub fn scale(&self, dim: usize) -> f64 {
        (2.0 * self.folds(dim) as f64).sqrt()
    }

    pub fn fourier(&self, dim: usize, t: f64) -> f64 {
        if self.is_dirac() {
            return 1.0;
        }
        (1.0 + t * t).powi(-(self.folds(dim) as i32))
    }

    /// Density of the k-fold Laplace convolution (Dirac: not a function, returns 0).
    pub fn density(&self, dim: usize, x: f64) -> f64 {
        if self.is_dirac() {
            return 0.0;
        }
        let a = x.abs();
        let e = (-a).exp();
        match self.folds(dim) {
            1 => 0.5 * e,
            2 => 0.25 * (1.0 + a) * e,
            3 => (3.0 + 3.0 * a + a * a) * e / 16.0,
            k => unreachable!("unsupported fold count {k}"),
        }
    }

    /// One draw of `ε ∈ R^d`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|dim| {
                if self.is_dirac() {
                    return 0.0;
                }
                (0..self.folds(dim))
                    .map(|_| {
                        let e: f64 = Exp1.sample(rng);
                        if rng.random::<bool>() {
                            e
                        } else {
                            -e
                        }
                    })
                    .sum()
            })
            .collect()
    }
}

fn symmetric_axis(half_width: f64, step: f64) -> Axis {
    let m = (half_width / step).round() as usize;
    Axis {
        start: -(m as f64) * step,
        step,
        len: 2 * m + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Base,
    Deconvolved,
}

/// One-dimensional factor of a product kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelAxis {
    pub bandwidth: f64,
    /// Offset spacing in input units.
    pub step: f64,
    pub half_len: usize,
    /// `(1/λ) K_η(u/λ)` at `u = (j - half_len)·step`.
    pub values: Vec<f64>,
}

impl KernelAxis {
    pub fn offset(&self, index: usize) -> f64 {
        (index as f64 - self.half_len as f64) * self.step
    }

    /// Scaled value at integer offset `j`; zero beyond the table.
    pub fn at(&self, j: isize) -> f64 {
        let idx = j + self.half_len as isize;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    /// Unscaled `K_η(t)` at `t = j·step/λ`.
    pub fn unscaled_at(&self, j: isize) -> f64 {
        self.bandwidth * self.at(j)
    }

    /// Piecewise-linear interpolant of the scaled kernel at offset `u`.
    pub fn eval(&self, u: f64) -> f64 {
        let s = u / self.step;
        let j = s.floor();
        let frac = s - j;
        let j = j as isize;
        self.at(j) * (1.0 - frac) + self.at(j + 1) * frac
    }

    pub fn integral(&self) -> f64 {
        let axis = Axis {
            start: self.offset(0),
            step: self.step,
            len: self.values.len(),
        };
        axis.trapezoid(&self.values)
    }
}

/// Tabulated product kernel `Π_i (1/λ_i) K_{η,i}(u_i/λ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedKernel {
    pub kind: KernelKind,
    pub base: BaseKernelKind,
    pub axes: Vec<KernelAxis>,
}

impl TabulatedKernel {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn bandwidth(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.bandwidth).collect()
    }

    pub fn axis(&self, dim: usize) -> &KernelAxis {
        &self.axes[dim]
    }

    pub fn integral(&self) -> f64 {
        self.axes.iter().map(KernelAxis::integral).product()
    }

    pub fn is_finite(&self) -> bool {
        self.axes
            .iter()
            .all(|a| a.values.iter().all(|v| v.is_finite()))
    }

    /// Writes `offset,value` rows for the first axis (all axes for `d > 1`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        if self.dim() == 1 {
            writeln!(out, "offset,value")?;
        } else {
            writeln!(out, "axis,offset,value")?;
        }
        for (d, axis) in self.axes.iter().enumerate() {
            for (i, v) in axis.values.iter().enumerate() {
                if self.dim() == 1 {
                    writeln!(out, "{},{}", axis.offset(i), v)?;
                } else {
                    writeln!(out, "{},{},{}", d, axis.offset(i), v)?;
                }
            }
        }
        Ok(())
    }
}

/// Base kernel (λ = 1) tabulated over offsets spanning the grid width.
pub fn build_base_kernel(kind: BaseKernelKind, grid: &Grid) -> Result<TabulatedKernel> {
    grid.validate()?;
    build_base_kernel_with_span(kind, &grid.spacing(), grid.points_per_dim - 1)
}

/// Base kernel (λ = 1) on offsets `|j| <= half_len` with per-dimension `steps`.
pub fn build_base_kernel_with_span(
    kind: BaseKernelKind,
    steps: &[f64],
    half_len: usize,
) -> Result<TabulatedKernel> {
    let noise = NoiseModel::dirac(steps.len());
    let lambda = vec![1.0; steps.len()];
    tabulate(kind, KernelKind::Base, &noise, &lambda, steps, half_len)
}

/// Deconvolution kernel with `F[K_η](t) = F[K](t) / F[η](t/λ)`, scaled by λ and
/// tabulated on the base kernel's offset grid.
pub fn build_deconvolution_kernel(
    base: &TabulatedKernel,
    noise: &NoiseModel,
    lambda: &[f64],
) -> Result<TabulatedKernel> {
    if noise.dim() != base.dim() || lambda.len() != base.dim() {
        return config(format!(
            "dimension mismatch: kernel d={}, noise d={}, bandwidth d={}",
            base.dim(),
            noise.dim(),
            lambda.len()
        ));
    }
    let steps: Vec<f64> = base.axes.iter().map(|a| a.step).collect();
    let half_len = base.axes[0].half_len;
    let kind = if noise.is_dirac() {
        KernelKind::Base
    } else {
        KernelKind::Deconvolved
    };
    let mut out = tabulate(base.base, kind, noise, lambda, &steps, half_len)?;
    out.kind = KernelKind::Deconvolved;
    Ok(out)
}

fn tabulate(
    base: BaseKernelKind,
    kind: KernelKind,
    noise: &NoiseModel,
    lambda: &[f64],
    steps: &[f64],
    half_len: usize,
) -> Result<TabulatedKernel> {
    let mut axes = Vec::with_capacity(lambda.len());
    for (dim, (&lam, &step)) in lambda.iter().zip(steps).enumerate() {
        if !(lam.is_finite() && lam > 0.0) {
            return config(format!("bandwidth must be positive, got {lam}"));
        }
        if lam <= step {
            return config(format!(
                "bandwidth {lam} does not exceed the grid spacing {step}; it would alias"
            ));
        }
        axes.push(invert_axis(base, noise, dim, lam, step, half_len)?);
    }
    let out = TabulatedKernel { kind, base, axes };
    if !out.is_finite() {
        return Err(Error::Model(
            "kernel table contains non-finite values".into(),
        ));
    }
    Ok(out)
}

/// Gregory end-corrected trapezoid weights (fourth order) for `P + 1` nodes.
fn gregory_weights(p: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; p + 1];
    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for (k, e) in ends.iter().enumerate() {
        w[k] = e * h;
        w[p - k] = e * h;
    }
    w
}

/// Discrete Fourier inversion of one kernel factor:
/// `k(u) = (1/(πλ)) ∫_0^1 F[K](t)/F[η](t/λ) cos(t u/λ) dt`.
fn invert_axis(
    base: BaseKernelKind,
    noise: &NoiseModel,
    dim: usize,
    lambda: f64,
    step: f64,
    half_len: usize,
) -> Result<KernelAxis> {
    let t_max = half_len as f64 * step / lambda;
    let p = (32.0 * t_max).ceil().max(4096.0) as usize;
    let dt = 1.0 / p as f64;
    let weights = gregory_weights(p, dt);
    let mut spectrum = Vec::with_capacity(p + 1);
    for (m, w) in weights.iter().enumerate() {
        let t = m as f64 * dt;
        let fk = base.fourier(t);
        let fe = noise.fourier(dim, t / lambda);
        if fk != 0.0 && fe.abs() < 1e-12 {
            return Err(Error::IllPosed {
                frequency: t / lambda,
                magnitude: fe.abs(),
            });
        }
        spectrum.push(if fk == 0.0 { 0.0 } else { w * fk / fe });
    }
    let mut values = vec![0.0; 2 * half_len + 1];
    for j in 0..=half_len {
        let v = cosine_sum(&spectrum, j as f64 * step / lambda * dt) / (PI * lambda);
        values[half_len + j] = v;
        values[half_len - j] = v;
    }
    Ok(KernelAxis {
        bandwidth: lambda,
        step,
        half_len,
        values,
    })
}

/// `Σ_m c_m cos(m a)` by a rotation recurrence reseeded every 128 terms.
fn cosine_sum(coeffs: &[f64], a: f64) -> f64 {
    let (rs, rc) = a.sin_cos();
    let mut acc = 0.0;
    for (block, chunk) in coeffs.chunks(128).enumerate() {
        let (mut s, mut c) = ((block * 128) as f64 * a).sin_cos();
        for &coef in chunk {
            acc += coef * c;
            let c_next = c * rc - s * rs;
            s = s * rc + c * rs;
            c = c_next;
        }
    }
    acc
}

/// `sup_t |F[K](tλ) / F[η](t)|` over `|t| <= 8 / min(λ)`, multiplied across dimensions.
pub fn kernel_fourier_sup(
    base: &TabulatedKernel,
    noise: &NoiseModel,
    lambda: &[f64],
) -> Result<f64> {
    if noise.dim() != lambda.len() {
        return config("bandwidth and noise dimensions differ");
    }
    let lam_min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lam_min > 0.0) {
        return config("bandwidth must be positive");
    }
    let range = 8.0 / lam_min;
    let samples = 20_000usize;
    let mut total = 1.0;
    for (dim, &lam) in lambda.iter().enumerate() {
        let mut best: f64 = 0.0;
        let mut consider = |t: f64| {
            let fk = base.base.fourier(t * lam);
            if fk != 0.0 {
                best = best.max((fk / noise.fourier(dim, t)).abs());
            }
        };
        for i in 0..=samples {
            consider(range * i as f64 / samples as f64);
        }
        // the support edge of F[K](·λ) is where the ratio peaks for the sinc kernel
        consider(1.0 / lam);
        total *= best;
    }
    Ok(total)
}

/// Forward-then-inverse discrete Fourier transform of a kernel factor's values.
pub fn fft_round_trip(values: &[f64]) -> Vec<f64> {
    use rustfft::{num_complex::Complex, FftPlanner};
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}
