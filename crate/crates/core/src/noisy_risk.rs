//! Modified losses over the observation space and the empirical risks built on them.
//!
//! A deconvolution table is the discrete convolution of the hat-basis moments of
//! `x ↦ ℓ(g(x), y)` with the tabulated kernel, so the table is exactly
//! `Σ_i a_i k̃(z - x_i)` where `k̃` is the piecewise-linear kernel interpolant.
//! The plug-in density uses the same `k̃`, which makes both forms of the
//! empirical risk agree up to rounding.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::{gauss_points, Axis, Grid};
use crate::hypotheses::{loss_moments, Classifier, HypothesisClass, LossSpec};
use crate::kernels::{
    build_base_kernel_with_span, build_deconvolution_kernel, BaseKernelKind, NoiseModel,
    TabulatedKernel,
};
use crate::operators::{estimate_svd_coefficients, SpectralOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Deconvolution,
    Svd,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    Bandwidth(Vec<f64>),
    Cutoff(usize),
}

/// `z ↦ ℓ_λ(g, (z, y))` for every label of one classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedLossTable {
    pub classifier: Classifier,
    pub backend: Backend,
    pub smoothing: Smoothing,
    /// Integration window in `x`.
    pub window: (f64, f64),
    pub axis: Axis,
    /// `values[y][j]` is the modified loss at `(axis.node(j), y)`.
    pub values: Vec<Vec<f64>>,
    /// `b_k^{-1} c_k(g, y)` for spectral tables; lookups then sum the series exactly.
    pub spectral: Option<Vec<Vec<f64>>>,
}

impl ModifiedLossTable {
    pub fn num_labels(&self) -> usize {
        self.values.len()
    }

    /// Value at `(z, label)` and whether `z` was clamped onto the table.
    pub fn lookup(&self, z: f64, label: usize) -> Result<(f64, bool)> {
        let Some(row) = self.values.get(label) else {
            return Err(Error::Data(format!(
                "no modified-loss table for label {label}"
            )));
        };
        if let Some(coefs) = &self.spectral {
            return Ok((cosine_series(&coefs[label], z), false));
        }
        let (i, t, clamped) = self.axis.locate_clamped(z);
        Ok((row[i] * (1.0 - t) + row[i + 1] * t, clamped))
    }

    pub fn value(&self, z: f64, label: usize) -> Result<f64> {
        self.lookup(z, label).map(|(v, _)| v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "z,label,value")?;
        for (y, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writeln!(out, "{},{},{}", self.axis.node(j), y, v)?;
            }
        }
        Ok(())
    }
}

/// `Σ_k c_k φ_k(z)` for the cosine basis on `[0, 1]`.
fn cosine_series(coefs: &[f64], z: f64) -> f64 {
    let Some((&c0, rest)) = coefs.split_first() else {
        return 0.0;
    };
    let c = (std::f64::consts::PI * z).cos();
    // cos(kθ) by the three-term recurrence
    let (mut prev, mut cur) = (1.0, c);
    let mut acc = 0.0;
    for ck in rest {
        acc += ck * cur;
        let next = 2.0 * c * cur - prev;
        prev = cur;
        cur = next;
    }
    c0 + std::f64::consts::SQRT_2 * acc
}

/// Observed pairs `(z_i, y_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisySample {
    pub z: Vec<f64>,
    pub y: Vec<usize>,
    pub num_labels: usize,
}

impl NoisySample {
    pub fn new(z: Vec<f64>, y: Vec<usize>, num_labels: usize) -> Result<Self> {
        if z.is_empty() || z.len() != y.len() {
            return Err(Error::Data(format!(
                "sample needs n >= 1 matching pairs, got {} z and {} y",
                z.len(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&l| l >= num_labels) {
            return Err(Error::Data(format!(
                "label {bad} out of range 0..{num_labels}"
            )));
        }
        Ok(NoisySample { z, y, num_labels })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `n_y` for every label.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_labels];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }

    /// `p̂(y) = n_y / n`.
    pub fn priors_hat(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.counts().iter().map(|&c| c as f64 / n).collect()
    }

    /// Observations carrying `label`.
    pub fn draws(&self, label: usize) -> Vec<f64> {
        self.z
            .iter()
            .zip(&self.y)
            .filter(|(_, &y)| y == label)
            .map(|(&z, _)| z)
            .collect()
    }
}

/// `R_n^λ(g) = (1/n) Σ ℓ_λ(g, (Z_i, Y_i))`; observations outside the table are clamped.
pub fn empirical_risk(table: &ModifiedLossTable, sample: &NoisySample) -> Result<f64> {
    let mut clamped = 0usize;
    let mut acc = 0.0;
    for (&z, &y) in sample.z.iter().zip(&sample.y) {
        let (v, c) = table.lookup(z, y)?;
        clamped += c as usize;
        acc += v;
    }
    if clamped > 0 {
        log::warn!(
            "{clamped} of {} observations fell outside the loss table and were clamped",
            sample.len()
        );
    }
    Ok(acc / sample.len() as f64)
}

fn clip_window(domain: &Axis, window: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let (lo, hi) = window.unwrap_or((domain.start, domain.end()));
    let lo = lo.max(domain.start);
    let hi = hi.min(domain.end());
    if !(hi > lo) {
        return config(format!(
            "integration window [{lo}, {hi}] has empty interior"
        ));
    }
    Ok((lo, hi))
}

/// Deconvolution backend: a kernel table wide enough to cover the padded
/// observation window plus a cached kernel spectrum for FFT convolution.
#[derive(Clone)]
pub struct DeconvolutionSmoother {
    kernel: TabulatedKernel,
    domain: Axis,
    observation: Axis,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_spectrum: Vec<Complex<f64>>,
}

impl fmt::Debug for DeconvolutionSmoother {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeconvolutionSmoother")
            .field("bandwidth", &self.kernel.bandwidth())
            .field("domain", &self.domain)
            .field("observation", &self.observation)
            .field("fft_len", &self.fft_len)
            .finish()
    }
}

impl DeconvolutionSmoother {
    /// Observation window: the domain padded by `4λ + 6σ_η` on each side.
    pub fn new(
        base: BaseKernelKind,
        noise: &NoiseModel,
        bandwidth: f64,
        grid: &Grid,
    ) -> Result<Self> {
        let domain = grid.axis_1d()?;
        if noise.dim() != 1 {
            return config("noise dimension does not match the one-dimensional grid");
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return config(format!("bandwidth must be positive, got {bandwidth}"));
        }
        let reach = 4.0 * bandwidth + 6.0 * noise.scale(0);
        let pad = (reach / domain.step).ceil() as usize;
        let span = build_base_kernel_with_span(base, &[domain.step], pad + domain.len - 1)?;
        let kernel = build_deconvolution_kernel(&span, noise, &[bandwidth])?;
        Self::from_kernel(kernel, grid)
    }

    /// Uses `kernel` as is; the observation window is whatever its span covers
    /// beyond the domain.
    pub fn from_kernel(kernel: TabulatedKernel, grid: &Grid) -> Result<Self> {
        let domain = grid.axis_1d()?;
        if kernel.dim() != 1 {
            return config("kernel dimension does not match the one-dimensional grid");
        }
        let ax = kernel.axis(0);
        if (ax.step - domain.step).abs() > 1e-12 * domain.step {
            return config(format!(
                "kernel offset step {} differs from grid spacing {}",
                ax.step, domain.step
            ));
        }
        if ax.half_len + 1 < domain.len {
            return config("kernel table is narrower than the grid");
        }
        let pad = ax.half_len + 1 - domain.len;
        let observation = Axis {
            start: domain.start - pad as f64 * domain.step,
            step: domain.step,
            len: domain.len + 2 * pad,
        };
        let fft_len = (domain.len + ax.values.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut kernel_spectrum = vec![Complex::new(0.0, 0.0); fft_len];
        for (slot, v) in kernel_spectrum.iter_mut().zip(&ax.values) {
            slot.re = *v;
        }
        forward.process(&mut kernel_spectrum);
        Ok(DeconvolutionSmoother {
            kernel,
            domain,
            observation,
            fft_len,
            forward,
            inverse,
            kernel_spectrum,
        })
    }

    pub fn kernel(&self) -> &TabulatedKernel {
        &self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.kernel.axis(0).bandwidth
    }

    pub fn domain_axis(&self) -> Axis {
        self.domain
    }

    pub fn observation_axis(&self) -> Axis {
        self.observation
    }

    /// `out_j = Σ_i a_i k_{j - pad - i}` on the observation axis.
    fn convolve(&self, moments: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (slot, a) in buf.iter_mut().zip(moments) {
            slot.re = *a;
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        let shift = self.domain.len - 1;
        (0..self.observation.len)
            .map(|j| buf[j + shift].re * scale)
            .collect()
    }

    pub fn table(
        &self,
        g: &Classifier,
        loss: &LossSpec,
        num_labels: usize,
        window: Option<(f64, f64)>,
    ) -> Result<ModifiedLossTable> {
        let clipped = clip_window(&self.domain, window)?;
        let values = (0..num_labels)
            .map(|y| self.convolve(&loss_moments(g, y, loss, &self.domain, clipped)))
            .collect();
        Ok(ModifiedLossTable {
            classifier: *g,
            backend: if window.is_some() {
                Backend::Restricted
            } else {
                Backend::Deconvolution
            },
            smoothing: Smoothing::Bandwidth(self.kernel.bandwidth()),
            window: clipped,
            axis: self.observation,
            values,
            spectral: None,
        })
    }
}

/// Spectral-cutoff backend on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct SvdSmoother {
    operator: SpectralOperator,
    cutoff: usize,
    domain: Axis,
    /// `basis[k][j] = φ_k(x_j)`.
    basis: Vec<Vec<f64>>,
}

impl SvdSmoother {
    pub fn new(operator: SpectralOperator, cutoff: usize, grid: &Grid) -> Result<Self> {
        let domain = grid.axis_1d()?;
        if domain.start != 0.0 || (domain.end() - 1.0).abs() > 1e-12 {
            return config("the spectral backend is defined on the unit interval");
        }
        if cutoff > operator.k_max {
            return config(format!("cutoff {cutoff} exceeds k_max {}", operator.k_max));
        }
        let basis = (0..=cutoff)
            .map(|k| {
                let mut e = vec![0.0; cutoff + 1];
                e[k] = 1.0;
                domain
                    .nodes()
                    .iter()
                    .map(|&x| cosine_series(&e, x))
                    .collect()
            })
            .collect();
        Ok(SvdSmoother {
            operator,
            cutoff,
            domain,
            basis,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.operator
    }

    pub fn domain_axis(&self) -> Axis {
        self.domain
    }

    /// `c_k(g, y) = ∫_window φ_k ℓ(g, y)` for `k ≤ N`.
    pub fn loss_coefficients(
        &self,
        g: &Classifier,
        label: usize,
        loss: &LossSpec,
        window: (f64, f64),
    ) -> Vec<f64> {
        let mut c = vec![0.0; self.cutoff + 1];
        for (x, w) in gauss_points(&self.domain, window.0, window.1, &g.breakpoints()) {
            let lw = w * loss.value(g.predict(x), label);
            if lw == 0.0 {
                continue;
            }
            let cos1 = (std::f64::consts::PI * x).cos();
            let (mut prev, mut cur) = (1.0, cos1);
            c[0] += lw;
            for ck in c.iter_mut().skip(1) {
                *ck += lw * std::f64::consts::SQRT_2 * cur;
                let next = 2.0 * cos1 * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        c
    }

    pub fn table(
        &self,
        g: &Classifier,
        loss: &LossSpec,
        num_labels: usize,
        window: Option<(f64, f64)>,
    ) -> Result<ModifiedLossTable> {
        let clipped = clip_window(&self.domain, window)?;
        let spectral: Vec<Vec<f64>> = (0..num_labels)
            .map(|y| {
                self.loss_coefficients(g, y, loss, clipped)
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c / self.operator.singular_value(k))
                    .collect()
            })
            .collect();
        let values = spectral
            .iter()
            .map(|coefs| {
                (0..self.domain.len)
                    .map(|j| coefs.iter().zip(&self.basis).map(|(c, b)| c * b[j]).sum())
                    .collect()
            })
            .collect();
        Ok(ModifiedLossTable {
            classifier: *g,
            backend: if window.is_some() {
                Backend::Restricted
            } else {
                Backend::Svd
            },
            smoothing: Smoothing::Cutoff(self.cutoff),
            window: clipped,
            axis: self.domain,
            values,
            spectral: Some(spectral),
        })
    }
}

/// Either backend behind one interface.
#[derive(Debug, Clone)]
pub enum Smoother {
    Deconvolution(DeconvolutionSmoother),
    Svd(SvdSmoother),
}

impl Smoother {
    pub fn smoothing(&self) -> Smoothing {
        match self {
            Smoother::Deconvolution(s) => Smoothing::Bandwidth(vec![s.bandwidth()]),
            Smoother::Svd(s) => Smoothing::Cutoff(s.cutoff()),
        }
    }

    pub fn domain_axis(&self) -> Axis {
        match self {
            Smoother::Deconvolution(s) => s.domain_axis(),
            Smoother::Svd(s) => s.domain_axis(),
        }
    }

    /// Axis on which tables are stored (the padded observation window for deconvolution).
    pub fn observation_axis(&self) -> Axis {
        match self {
            Smoother::Deconvolution(s) => s.observation_axis(),
            Smoother::Svd(s) => s.domain_axis(),
        }
    }

    /// `window = None` integrates over the whole domain; `Some(K)` gives `ℓ_{λ,K}`.
    pub fn table(
        &self,
        g: &Classifier,
        loss: &LossSpec,
        num_labels: usize,
        window: Option<(f64, f64)>,
    ) -> Result<ModifiedLossTable> {
        match self {
            Smoother::Deconvolution(s) => s.table(g, loss, num_labels, window),
            Smoother::Svd(s) => s.table(g, loss, num_labels, window),
        }
    }

    /// Tables for every classifier of `class`, in class order.
    pub fn tables(
        &self,
        class: &HypothesisClass,
        loss: &LossSpec,
        window: Option<(f64, f64)>,
    ) -> Result<Vec<ModifiedLossTable>> {
        class
            .classifiers
            .par_iter()
            .map(|g| self.table(g, loss, class.num_labels, window))
            .collect()
    }
}

/// `ℓ_λ` from a prebuilt deconvolution kernel whose step matches the grid.
pub fn modified_loss_deconv(
    g: &Classifier,
    loss: &LossSpec,
    kernel: &TabulatedKernel,
    grid: &Grid,
    num_labels: usize,
) -> Result<ModifiedLossTable> {
    DeconvolutionSmoother::from_kernel(kernel.clone(), grid)?.table(g, loss, num_labels, None)
}

/// `ℓ_N(g, z, y) = Σ_{k≤N} b_k^{-1} c_k(g, y) φ_k(z)`.
pub fn modified_loss_svd(
    g: &Classifier,
    loss: &LossSpec,
    op: &SpectralOperator,
    cutoff: usize,
    grid: &Grid,
    num_labels: usize,
) -> Result<ModifiedLossTable> {
    SvdSmoother::new(op.clone(), cutoff, grid)?.table(g, loss, num_labels, None)
}

/// `ℓ_{λ,K}` (or its spectral analogue) with the integral restricted to `window`.
pub fn restricted_loss(
    g: &Classifier,
    loss: &LossSpec,
    smoother: &Smoother,
    window: (f64, f64),
    num_labels: usize,
) -> Result<ModifiedLossTable> {
    smoother.table(g, loss, num_labels, Some(window))
}

/// `f̂(x_i) = (1/n) Σ_j k̃(Z_j - x_i)` on the grid nodes; values may be negative.
pub fn plug_in_density(z_draws: &[f64], kernel: &TabulatedKernel, grid: &Grid) -> Result<Vec<f64>> {
    if z_draws.is_empty() {
        return Err(Error::Data("no draws for the density estimate".into()));
    }
    let domain = grid.axis_1d()?;
    if kernel.dim() != 1 {
        return config("kernel dimension does not match the one-dimensional grid");
    }
    let ax = kernel.axis(0);
    let n = z_draws.len() as f64;
    Ok(domain
        .nodes()
        .par_iter()
        .map(|&x| z_draws.iter().map(|&z| ax.eval(z - x)).sum::<f64>() / n)
        .collect())
}

/// Spectral estimate `Σ_{k≤N} θ̂_k φ_k` on the grid nodes.
pub fn plug_in_density_svd(
    z_draws: &[f64],
    op: &SpectralOperator,
    cutoff: usize,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let theta = estimate_svd_coefficients(z_draws, op, cutoff)?;
    Ok(grid
        .axis_1d()?
        .nodes()
        .iter()
        .map(|&x| cosine_series(&theta.theta, x))
        .collect())
}

/// `Σ_y p̂(y) ∫ ℓ(g(x), y) f̂_y(x) dx` with `f̂_y` from [`plug_in_density`].
pub fn plug_in_risk(
    g: &Classifier,
    loss: &LossSpec,
    sample: &NoisySample,
    kernel: &TabulatedKernel,
    grid: &Grid,
) -> Result<f64> {
    let domain = grid.axis_1d()?;
    let priors = sample.priors_hat();
    let mut risk = 0.0;
    for (y, p) in priors.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        let f = plug_in_density(&sample.draws(y), kernel, grid)?;
        let a = loss_moments(g, y, loss, &domain, (domain.start, domain.end()));
        risk += p * a.iter().zip(&f).map(|(a, f)| a * f).sum::<f64>();
    }
    Ok(risk)
}
