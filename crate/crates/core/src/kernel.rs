//! Pointwise evaluation of the regularized fundamental solution
//!
//! ```text
//! e(x, t) = (ε+i) H(t) (4π(ε+i)t)^{−n/2} exp(−(ε+i)|x|² / (4(ε²+1)t))
//! ```
//!
//! and its ε → 0 limit `i H(t) (4πit)^{−n/2} exp(−i|x|²/(4t))`. Both are
//! implemented exactly as written. The exponent rate `(ε+i)/(ε²+1)` equals
//! `κ`, so `e` is annihilated by `Δ − κ∂ₜ` away from `t = 0`; the prefactor
//! `(ε+i)` only rescales it, which is why `∫e dx` is the constant
//! [`mass_constant`] rather than 1.
//!
//! Complex powers use the principal branch. For `ε > 0, t > 0` the base
//! `4π(ε+i)t` has argument in `(0, π/2)`, well away from the cut.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegKernelParams {
    epsilon: f64,
    dim: usize,
}

impl RegKernelParams {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        if dim < 1 {
            return Err(Error::InvalidDimension);
        }
        Ok(Self { epsilon, dim })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `κ = (ε+i)/(ε²+1)`.
    pub fn kappa(&self) -> Complex64 {
        let d = self.epsilon * self.epsilon + 1.0;
        Complex64::new(self.epsilon / d, 1.0 / d)
    }

    /// `1/κ = ε − i`, exact.
    pub fn inv_kappa(&self) -> Complex64 {
        Complex64::new(self.epsilon, -1.0)
    }

    /// Gaussian decay rate `ε/(4(ε²+1)t)` of `|e(·, t)|`.
    pub fn decay_rate(&self, t: f64) -> f64 {
        self.epsilon / (4.0 * (self.epsilon * self.epsilon + 1.0) * t)
    }

    /// `|ε+i| · |4π(ε+i)t|^{−n/2}`, the modulus of the prefactor.
    pub fn prefactor_modulus(&self, t: f64) -> f64 {
        let a = Complex64::new(self.epsilon, 1.0).norm();
        a * (4.0 * PI * a * t).powf(-(self.dim as f64) / 2.0)
    }

    /// Time slice of the kernel with the prefactor and exponent rate
    /// precomputed; `None` for `t ≤ 0`.
    pub fn at(&self, t: f64) -> Option<KernelSlice> {
        if !(t > 0.0) {
            return None;
        }
        let shift = Complex64::new(self.epsilon, 1.0);
        let base = shift * (4.0 * PI * t);
        let prefactor = shift * (-(self.dim as f64) / 2.0 * base.ln()).exp();
        let rate = self.kappa() / (4.0 * t);
        Some(KernelSlice {
            prefactor,
            rate,
            dim: self.dim,
        })
    }
}

/// Convenience constructor mirroring [`RegKernelParams::new`].
pub fn make_params(epsilon: f64, dim: usize) -> Result<RegKernelParams> {
    RegKernelParams::new(epsilon, dim)
}

/// `e(·, t)` for a fixed `t > 0`: `prefactor · exp(−rate · |x|²)`.
#[derive(Debug, Clone, Copy)]
pub struct KernelSlice {
    pub prefactor: Complex64,
    pub rate: Complex64,
    pub dim: usize,
}

impl KernelSlice {
    #[inline]
    pub fn eval_r2(&self, r2: f64) -> Complex64 {
        self.prefactor * (-self.rate * r2).exp()
    }

    /// `∂^α e` at `x`; the kernel factorizes over coordinates, so this is the
    /// prefactor times `Πⱼ Pⱼ(xⱼ) exp(−rate·xⱼ²)` with `Pⱼ` from
    /// [`gaussian_derivative_poly`].
    pub fn derivative(&self, x: &[f64], alpha: &MultiIndex) -> Complex64 {
        let mut acc = self.prefactor;
        let mut r2 = 0.0;
        for (&xj, &m) in x.iter().zip(alpha.orders()) {
            r2 += xj * xj;
            if m > 0 {
                acc *= eval_poly(&gaussian_derivative_poly(self.rate, m), xj);
            }
        }
        acc * (-self.rate * r2).exp()
    }
}

/// Polynomial `P_m` with `dᵐ/dyᵐ exp(−b y²) = P_m(y) exp(−b y²)`, built by
/// `P_{m+1} = P_m' − 2b y P_m`. Coefficients in ascending degree.
pub fn gaussian_derivative_poly(b: Complex64, m: u32) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for _ in 0..m {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (k, &c) in p.iter().enumerate().skip(1) {
            next[k - 1] += c * k as f64;
        }
        for (k, &c) in p.iter().enumerate() {
            next[k + 1] -= c * b * 2.0;
        }
        p = next;
    }
    p
}

pub(crate) fn eval_poly(p: &[Complex64], y: f64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * y + c)
}

/// Per-coordinate derivative orders `(m₁, …, mₙ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(orders: Vec<u32>) -> Self {
        Self(orders)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `eⱼ` scaled by `m`.
    pub fn axis(dim: usize, j: usize, m: u32) -> Self {
        let mut v = vec![0; dim];
        v[j] = m;
        Self(v)
    }

    pub fn orders(&self) -> &[u32] {
        &self.0
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn finite(z: Complex64, context: &str) -> Result<Complex64> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
        })
    }
}

pub fn eval_regularized(x: &[f64], t: f64, params: &RegKernelParams) -> Result<Complex64> {
    check_dim(params.dim, x.len())?;
    match params.at(t) {
        None => Ok(Complex64::new(0.0, 0.0)),
        Some(slice) => finite(slice.eval_r2(norm_sq(x)), "regularized kernel"),
    }
}

/// The ε → 0 kernel `i H(t) (4πit)^{−n/2} exp(−i|x|²/(4t))`.
pub fn eval_limit(x: &[f64], t: f64, dim: usize) -> Result<Complex64> {
    check_dim(dim, x.len())?;
    let r2 = norm_sq(x);
    if t == 0.0 && r2 == 0.0 {
        return Err(Error::Singular("limit kernel at x = 0, t = 0".into()));
    }
    if !(t > 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let base = I * (4.0 * PI * t);
    let pre = I * (-(dim as f64) / 2.0 * base.ln()).exp();
    finite(pre * (-I * r2 / (4.0 * t)).exp(), "limit kernel")
}

/// Exact `∂^α e(x, t)`; zero for `t ≤ 0`.
pub fn kernel_derivative(
    x: &[f64],
    t: f64,
    params: &RegKernelParams,
    alpha: &MultiIndex,
) -> Result<Complex64> {
    check_dim(params.dim, x.len())?;
    check_dim(params.dim, alpha.dim())?;
    match params.at(t) {
        None => Ok(Complex64::new(0.0, 0.0)),
        Some(slice) => finite(slice.derivative(x, alpha), "kernel derivative"),
    }
}

/// `c(ε, n) = ∫_{ℝⁿ} e(x, t) dx = (ε+i) (ε−i)^{n/2} (ε+i)^{−n/2}`,
/// independent of `t`. Dividing by it turns the kernel into a propagator
/// that reproduces initial data as `t → 0`.
pub fn mass_constant(params: &RegKernelParams) -> Complex64 {
    let plus = Complex64::new(params.epsilon, 1.0);
    let minus = Complex64::new(params.epsilon, -1.0);
    let half_n = params.dim as f64 / 2.0;
    plus * (half_n * minus.ln()).exp() * (-half_n * plus.ln()).exp()
}

/// Centered-difference approximation of `(Δ − κ∂ₜ)F` at `(x, t)` with the
/// same step `h` in every spatial direction and in time.
pub fn pde_residual<F>(
    f: F,
    x: &[f64],
    t: f64,
    params: &RegKernelParams,
    h: f64,
) -> Result<Complex64>
where
    F: Fn(&[f64], f64) -> Result<Complex64>,
{
    check_dim(params.dim, x.len())?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if !(t - h > 0.0) {
        return Err(Error::Stencil(format!(
            "time stencil [{}, {}] crosses t = 0",
            t - h,
            t + h
        )));
    }
    let center = f(x, t)?;
    let mut lap = Complex64::new(0.0, 0.0);
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let plus = f(&probe, t)?;
        probe[j] = x[j] - h;
        let minus = f(&probe, t)?;
        probe[j] = x[j];
        lap += (plus - center * 2.0 + minus) / (h * h);
    }
    let dt = (f(x, t + h)? - f(x, t - h)?) / (2.0 * h);
    finite(lap - params.kappa() * dt, "pde residual")
}
