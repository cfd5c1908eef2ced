//! Grid functions on flat manifolds and the evolution `Γ_t = e^{−tλ/κ}`.
//!
//! On a torus the evolution is applied spectrally: a function with sign
//! character `χ_S` is expanded in the plane waves `e^{2πi⟨k*+δ_S, x⟩}`,
//! `δ_S = ½Σ_{i∈S} wᵢ`, which are the eigenfunctions of `−Σ∂²` with that
//! (anti-)periodicity, eigenvalue `λ = 4π²|k*+δ_S|²`. The second path,
//! [`apply_convolution`], integrates against the periodized kernel divided by
//! the mass constant and works on every manifold kind.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dot, for_each_in_box, ManifoldKind, ManifoldSpec};
use crate::kernel::{mass_constant, RegKernelParams};
use crate::periodize::{can_flip, half_series, lattice_series, radius_for, TruncationPolicy};
use crate::sum::{sum_f64, CompensatedSum};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Bounded box `[−half_width, half_width]` along the directions orthogonal to
/// the lattice, sampled at `resolution` midpoints per direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransverseBox {
    pub half_width: f64,
    pub resolution: usize,
}

impl TransverseBox {
    pub fn new(half_width: f64, resolution: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "transverse box needs half_width > 0 and resolution >= 2, got {half_width}, {resolution}"
            )));
        }
        Ok(Self {
            half_width,
            resolution,
        })
    }
}

/// Orthonormal complement of the lattice span, built by Gram–Schmidt from
/// `eₙ, e₁, …, eₙ₋₁` so that `eₙ` comes first whenever it is orthogonal to
/// the lattice (always the case for Möbius specs).
fn transverse_directions(spec: &ManifoldSpec) -> Vec<Vec<f64>> {
    let n = spec.dim();
    let k = spec.lattice().rank();
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(n);
    let push = |v: &[f64], ortho: &mut Vec<Vec<f64>>| -> bool {
        let mut u = v.to_vec();
        for _ in 0..2 {
            for q in ortho.iter() {
                let c = dot(&u, q);
                for (a, b) in u.iter_mut().zip(q) {
                    *a -= c * b;
                }
            }
        }
        let norm = dot(&u, &u).sqrt();
        if norm > 1e-8 {
            ortho.push(u.into_iter().map(|a| a / norm).collect());
            true
        } else {
            false
        }
    };
    for v in spec.lattice().basis() {
        push(v, &mut ortho);
    }
    let mut out = Vec::new();
    let candidates = std::iter::once(n - 1).chain(0..n - 1);
    for j in candidates {
        if out.len() == n - k {
            break;
        }
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if push(&e, &mut ortho) {
            out.push(ortho.last().unwrap().clone());
        }
    }
    out
}

/// Complex samples over a fundamental domain.
///
/// Lattice directions are sampled at lattice coordinates `j/N`, `j < N`;
/// Cylinder and Möbius specs add a [`TransverseBox`] for the non-compact
/// directions. Row-major layout, last axis fastest, lattice axes first.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: ManifoldSpec,
    resolution: usize,
    transverse: Option<TransverseBox>,
    directions: Vec<Vec<f64>>,
    shape: Vec<usize>,
    weight: f64,
    samples: Vec<Complex64>,
}

impl GridFunction {
    fn layout(
        spec: &ManifoldSpec,
        resolution: usize,
        transverse: Option<TransverseBox>,
    ) -> Result<(Vec<Vec<f64>>, Vec<usize>, f64)> {
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        let k = spec.lattice().rank();
        let n = spec.dim();
        let directions = if k < n {
            if transverse.is_none() {
                return Err(Error::InvalidArgument(format!(
                    "a {} grid needs a transverse box for its {} non-compact direction(s)",
                    spec.kind(),
                    n - k
                )));
            }
            transverse_directions(spec)
        } else {
            if transverse.is_some() {
                return Err(Error::InvalidArgument(format!(
                    "a {} is compact; no transverse box applies",
                    spec.kind()
                )));
            }
            Vec::new()
        };
        let mut shape = vec![resolution; k];
        let mut weight = spec.lattice().volume() / (resolution as f64).powi(k as i32);
        if let Some(b) = transverse {
            shape.extend(std::iter::repeat_n(b.resolution, n - k));
            weight *= (2.0 * b.half_width / b.resolution as f64).powi((n - k) as i32);
        }
        Ok((directions, shape, weight))
    }

    fn build(
        spec: &ManifoldSpec,
        resolution: usize,
        transverse: Option<TransverseBox>,
        samples: Vec<Complex64>,
    ) -> Result<Self> {
        let (directions, shape, weight) = Self::layout(spec, resolution, transverse)?;
        let len: usize = shape.iter().product();
        if samples.len() != len {
            return Err(Error::GridMismatch(format!(
                "expected {len} samples, got {}",
                samples.len()
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            resolution,
            transverse,
            directions,
            shape,
            weight,
            samples,
        })
    }

    pub fn from_samples(
        spec: &ManifoldSpec,
        resolution: usize,
        transverse: Option<TransverseBox>,
        samples: Vec<Complex64>,
    ) -> Result<Self> {
        Self::build(spec, resolution, transverse, samples)
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn transverse(&self) -> Option<TransverseBox> {
        self.transverse
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Uniform quadrature weight; the weights sum to the domain volume.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            idx[d] = flat % self.shape[d];
            flat /= self.shape[d];
        }
        idx
    }

    /// Coordinates of grid node `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        let k = self.spec.lattice().rank();
        let coords: Vec<f64> = idx[..k]
            .iter()
            .map(|&j| j as f64 / self.resolution as f64)
            .collect();
        let mut x = self.spec.lattice().point_from_coordinates(&coords);
        if let Some(b) = self.transverse {
            let h = 2.0 * b.half_width / b.resolution as f64;
            for (dir, &j) in self.directions.iter().zip(&idx[k..]) {
                let s = -b.half_width + (j as f64 + 0.5) * h;
                for (xi, di) in x.iter_mut().zip(dir) {
                    *xi += s * di;
                }
            }
        }
        x
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape || self.spec != other.spec || self.transverse != other.transverse {
            return Err(Error::GridMismatch("grids have different layouts".into()));
        }
        Ok(())
    }

    fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            ..self.clone()
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.with_samples(self.samples.iter().map(|&z| z * c).collect())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Result<Self> {
        self.same_layout(other)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(Complex64::new(1.0, 0.0), other, Complex64::new(-1.0, 0.0))
    }

    /// `(Σ w |uᵢ|^p)^{1/p}`, without the Clifford `2ⁿ` factor.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Samples `sampler` at every grid node of a torus or Klein bottle.
pub fn make_grid<F>(spec: &ManifoldSpec, resolution: usize, sampler: F) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    make_grid_with_box(spec, resolution, None, sampler)
}

pub fn make_grid_with_box<F>(
    spec: &ManifoldSpec,
    resolution: usize,
    transverse: Option<TransverseBox>,
    sampler: F,
) -> Result<GridFunction>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let len: usize = GridFunction::layout(spec, resolution, transverse)?.1.iter().product();
    let mut grid = GridFunction::build(spec, resolution, transverse, vec![ZERO; len])?;
    let samples: Vec<Complex64> = (0..len)
        .into_par_iter()
        .map(|i| sampler(&grid.point(i)))
        .collect();
    if let Some(i) = samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFiniteSample {
            point: grid.point(i),
        });
    }
    grid.samples = samples;
    Ok(grid)
}

pub fn lp_norm(u: &GridFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("L_p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(u.sup_norm());
    }
    let s = sum_f64(u.samples.iter().map(|z| u.weight * z.norm().powf(p)));
    Ok(s.powf(1.0 / p))
}

/// Eigenvalues `λ = 4π²|k* + δ_S|²` of `−Σ∂²` for every FFT mode of a torus
/// grid, in FFT index order.
#[derive(Debug, Clone)]
pub struct SpectralData {
    shape: Vec<usize>,
    lambdas: Vec<f64>,
}

/// FFT index `j` as a signed frequency in `[−N/2, N/2)`.
fn signed_frequency(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl SpectralData {
    pub fn new(spec: &ManifoldSpec, resolution: usize) -> Result<Self> {
        if spec.kind() != ManifoldKind::Torus {
            return Err(Error::Unsupported(format!(
                "the spectral path is defined on tori only, not a {}; use the convolution path",
                spec.kind()
            )));
        }
        let n = spec.dim();
        let shape = vec![resolution; n];
        let len = resolution.pow(n as u32);
        let dual = spec.lattice().dual_basis();
        let spin = spec.spin();
        let lambdas = (0..len)
            .map(|mut flat| {
                let mut freq = vec![0.0; n];
                let mut idx = vec![0usize; n];
                for d in (0..n).rev() {
                    idx[d] = flat % resolution;
                    flat /= resolution;
                }
                for (i, w) in dual.iter().enumerate() {
                    let mut c = signed_frequency(idx[i], resolution) as f64;
                    if spin.contains(i) {
                        c += 0.5;
                    }
                    for (f, wj) in freq.iter_mut().zip(w) {
                        *f += c * wj;
                    }
                }
                4.0 * PI * PI * dot(&freq, &freq)
            })
            .collect();
        Ok(Self { shape, lambdas })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    /// `e^{−tλ/κ} = e^{−tλ(ε−i)}` for every mode.
    pub fn multipliers(&self, t: f64, params: &RegKernelParams) -> Vec<Complex64> {
        multipliers_with(&self.lambdas, t, params.inv_kappa())
    }
}

fn multipliers_with(lambdas: &[f64], t: f64, inv_kappa: Complex64) -> Vec<Complex64> {
    lambdas.iter().map(|&l| (-inv_kappa * (t * l)).exp()).collect()
}

/// In-place n-dimensional FFT over a row-major array; the inverse is
/// normalized.
fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    let total = data.len();
    let mut stride = 1;
    for d in (0..shape.len()).rev() {
        let len = shape[d];
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let mut line = vec![ZERO; len];
        let block = len * stride;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (j, l) in line.iter_mut().enumerate() {
                    *l = data[base + j * stride];
                }
                fft.process(&mut line);
                for (j, l) in line.iter().enumerate() {
                    data[base + j * stride] = *l;
                }
            }
        }
        stride *= len;
    }
    if inverse {
        let s = 1.0 / total as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }
}

/// `e^{−iπ Σ_{i∈S} jᵢ/N}` at each node: strips the spin offset so the rest is
/// periodic.
fn twist_factors(u: &GridFunction) -> Vec<Complex64> {
    let spin = *u.spec.spin();
    let n = u.resolution as f64;
    (0..u.len())
        .map(|flat| {
            let idx = u.multi_index(flat);
            let phase: f64 = idx
                .iter()
                .enumerate()
                .filter(|(i, _)| spin.contains(*i))
                .map(|(_, &j)| j as f64 / n)
                .sum();
            Complex64::from_polar(1.0, -PI * phase)
        })
        .collect()
}

/// Fourier coefficients of `u` in the spin-adapted plane-wave basis, in FFT
/// index order (unnormalized forward transform).
pub fn fourier_coefficients(u: &GridFunction) -> Result<Vec<Complex64>> {
    SpectralData::new(&u.spec, u.resolution)?;
    let mut data: Vec<Complex64> = u
        .samples
        .iter()
        .zip(twist_factors(u))
        .map(|(&z, w)| z * w)
        .collect();
    fft_nd(&mut data, &u.shape, false);
    Ok(data)
}

/// Multiplies each spin-adapted Fourier mode by `mult[mode]`.
pub fn apply_multipliers(u: &GridFunction, mult: &[Complex64]) -> Result<GridFunction> {
    let twist = twist_factors(u);
    let mut data = fourier_coefficients(u)?;
    if mult.len() != data.len() {
        return Err(Error::GridMismatch(format!(
            "{} multipliers for {} modes",
            mult.len(),
            data.len()
        )));
    }
    for (z, m) in data.iter_mut().zip(mult) {
        *z *= m;
    }
    fft_nd(&mut data, &u.shape, true);
    for (z, w) in data.iter_mut().zip(twist) {
        *z *= w.conj();
    }
    Ok(u.with_samples(data))
}

/// `Γ_t u₀` on a torus by spectral multiplication; `t = 0` returns `u₀`
/// unchanged.
pub fn apply_spectral(u0: &GridFunction, t: f64, params: &RegKernelParams) -> Result<GridFunction> {
    apply_spectral_with(u0, t, params.inv_kappa(), params)
}

/// As [`apply_spectral`] with an arbitrary `1/κ` in the multiplier.
pub fn apply_spectral_with(
    u0: &GridFunction,
    t: f64,
    inv_kappa: Complex64,
    params: &RegKernelParams,
) -> Result<GridFunction> {
    check_dim(params.dim(), u0.spec.dim())?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "evolution time must be finite and >= 0, got {t}"
        )));
    }
    let data = SpectralData::new(&u0.spec, u0.resolution)?;
    if t == 0.0 {
        return Ok(u0.clone());
    }
    apply_multipliers(u0, &multipliers_with(&data.lambdas, t, inv_kappa))
}

/// `Σ∂²u` via the spectral symbol `−λ`.
pub fn spectral_laplacian(u: &GridFunction) -> Result<GridFunction> {
    let data = SpectralData::new(&u.spec, u.resolution)?;
    let mult: Vec<Complex64> = data.lambdas.iter().map(|&l| Complex64::new(-l, 0.0)).collect();
    apply_multipliers(u, &mult)
}

/// `Γ_t u₀(x) = c⁻¹ Σ_y w K(x, y) u₀(y)` with the periodized kernel `K` of
/// the grid's manifold and `c` the mass constant.
pub fn apply_convolution(
    u0: &GridFunction,
    t: f64,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<GridFunction> {
    check_dim(params.dim(), u0.spec.dim())?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "convolution needs t > 0, got {t}"
        )));
    }
    let scale = u0.weight / mass_constant(params);
    let samples = if u0.spec.kind() == ManifoldKind::Torus {
        torus_convolution(u0, t, params, policy)?
    } else {
        general_convolution(u0, t, params, policy)?
    };
    Ok(u0.with_samples(samples.into_iter().map(|z| z * scale).collect()))
}

/// Torus path: the kernel depends on `x − y` only, so it is tabulated on the
/// `Nⁿ` grid differences reduced into the cell; each coordinate that wrapped
/// contributes the generator's character.
fn torus_convolution(
    u0: &GridFunction,
    t: f64,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Vec<Complex64>> {
    let spec = &u0.spec;
    let n = spec.dim();
    let origin = vec![0.0; n];
    let table: Vec<Complex64> = (0..u0.len())
        .into_par_iter()
        .map(|d| lattice_series(spec, &u0.point(d), &origin, t, params, policy, None))
        .collect::<Result<_>>()?;
    let res = u0.resolution;
    let chi: Vec<f64> = (0..n)
        .map(|i| if spec.spin().contains(i) { -1.0 } else { 1.0 })
        .collect();
    let indices: Vec<Vec<usize>> = (0..u0.len()).map(|i| u0.multi_index(i)).collect();
    Ok((0..u0.len())
        .into_par_iter()
        .map(|i| {
            let xi = &indices[i];
            let mut acc = CompensatedSum::new();
            for (j, yj) in indices.iter().enumerate() {
                let mut flat = 0;
                let mut sign = 1.0;
                for d in 0..n {
                    let diff = if xi[d] >= yj[d] {
                        xi[d] - yj[d]
                    } else {
                        sign *= chi[d];
                        xi[d] + res - yj[d]
                    };
                    flat = flat * res + diff;
                }
                acc.add(table[flat] * u0.samples[j] * sign);
            }
            acc.value()
        })
        .collect())
}

fn general_convolution(
    u0: &GridFunction,
    t: f64,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Vec<Complex64>> {
    match tabulated_convolution(u0, t, params, policy)? {
        Some(v) => Ok(v),
        None => direct_convolution(u0, t, params, policy),
    }
}

/// `K(x, y) = K₀(x − y) + K₁(Fx − y)` with `F` the `xₙ` flip. When every grid
/// step is fixed or negated by `F`, both arguments depend only on integer
/// index offsets, so `K₀` and `K₁` are tabulated once per offset.
fn tabulated_convolution(
    u0: &GridFunction,
    t: f64,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Option<Vec<Complex64>>> {
    let spec = &u0.spec;
    let n = spec.dim();
    let Some(slice) = params.at(t) else {
        return Ok(Some(vec![ZERO; u0.len()]));
    };
    let flipping = can_flip(spec);
    let radius = radius_for(params, t, policy, spec.lattice(), None, if flipping { 2 } else { 1 })?;

    let res = u0.resolution as f64;
    let mut steps: Vec<Vec<f64>> = spec
        .lattice()
        .basis()
        .iter()
        .map(|v| v.iter().map(|a| a / res).collect())
        .collect();
    let mut origin = vec![0.0; n];
    if let Some(b) = u0.transverse {
        let h = 2.0 * b.half_width / b.resolution as f64;
        for dir in &u0.directions {
            steps.push(dir.iter().map(|a| a * h).collect());
            for (o, d) in origin.iter_mut().zip(dir) {
                *o += (-b.half_width + 0.5 * h) * d;
            }
        }
    }
    // F s = σ s for every step, or no tabulation.
    let mut sigma = vec![1i64; steps.len()];
    if flipping {
        for (s, sg) in steps.iter().zip(sigma.iter_mut()) {
            let scale = dot(s, s).sqrt();
            let rest = s[..n - 1].iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if s[n - 1].abs() <= 1e-12 * scale {
                *sg = 1;
            } else if rest <= 1e-12 * scale {
                *sg = -1;
            } else {
                return Ok(None);
            }
        }
    }

    // Offsets kᵢ − jᵢ (or −iᵢ − jᵢ along negated steps) stored from `lo`.
    let shape = u0.shape.clone();
    let dims: Vec<usize> = shape.iter().map(|&m| 2 * m - 1).collect();
    let size: usize = dims.iter().product();
    let lo_plain: Vec<i64> = shape.iter().map(|&m| m as i64 - 1).collect();
    let lo_flip: Vec<i64> = shape
        .iter()
        .zip(&sigma)
        .map(|(&m, &sg)| if sg < 0 { 2 * (m as i64 - 1) } else { m as i64 - 1 })
        .collect();
    let offset_of = |flat: usize, lo: &[i64]| -> Vec<i64> {
        let mut f = flat;
        let mut k = vec![0i64; dims.len()];
        for d in (0..dims.len()).rev() {
            k[d] = (f % dims[d]) as i64 - lo[d];
            f /= dims[d];
        }
        k
    };
    let center_of = |k: &[i64], base: &[f64]| -> Vec<f64> {
        let mut c = base.to_vec();
        for (kd, s) in k.iter().zip(&steps) {
            for (ci, si) in c.iter_mut().zip(s) {
                *ci += *kd as f64 * si;
            }
        }
        c
    };
    let plain: Vec<Complex64> = (0..size)
        .into_par_iter()
        .map(|f| half_series(spec, &center_of(&offset_of(f, &lo_plain), &vec![0.0; n]), false, &slice, radius))
        .collect::<Result<_>>()?;
    let flipped: Vec<Complex64> = if flipping {
        // F o − o
        let mut base = vec![0.0; n];
        base[n - 1] = -2.0 * origin[n - 1];
        (0..size)
            .into_par_iter()
            .map(|f| half_series(spec, &center_of(&offset_of(f, &lo_flip), &base), true, &slice, radius))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let indices: Vec<Vec<usize>> = (0..u0.len()).map(|i| u0.multi_index(i)).collect();
    let out = (0..u0.len())
        .into_par_iter()
        .map(|i| {
            let xi = &indices[i];
            let mut acc = CompensatedSum::new();
            for (yj, &uy) in indices.iter().zip(&u0.samples) {
                if uy == ZERO {
                    continue;
                }
                let mut fp = 0usize;
                let mut ff = 0usize;
                for d in 0..dims.len() {
                    let (a, b) = (xi[d] as i64, yj[d] as i64);
                    fp = fp * dims[d] + (a - b + lo_plain[d]) as usize;
                    ff = ff * dims[d] + (sigma[d] * a - b + lo_flip[d]) as usize;
                }
                let mut k = plain[fp];
                if flipping {
                    k += flipped[ff];
                }
                acc.add(k * uy);
            }
            acc.value()
        })
        .collect();
    Ok(Some(out))
}

fn direct_convolution(
    u0: &GridFunction,
    t: f64,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Vec<Complex64>> {
    let pts = u0.points();
    (0..u0.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = CompensatedSum::new();
            for (y, &uy) in pts.iter().zip(&u0.samples) {
                if uy != ZERO {
                    acc.add(lattice_series(&u0.spec, &pts[i], y, t, params, policy, None)? * uy);
                }
            }
            Ok(acc.value())
        })
        .collect()
}

/// Real test function with closed-form gradient and Laplacian.
pub trait TestFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn laplacian(&self, x: &[f64]) -> f64;
}

/// `(c₀ + ⟨b, y⟩ + yᵀAy) · exp(−|y|²/(2σ²))`, `y = x − center`, `A`
/// symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub sigma: f64,
    pub c0: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<Vec<f64>>,
}

impl GaussianBump {
    pub fn new(center: Vec<f64>, sigma: f64, c0: f64, linear: Vec<f64>, quadratic: Vec<Vec<f64>>) -> Result<Self> {
        let n = center.len();
        check_dim(n, linear.len())?;
        check_dim(n, quadratic.len())?;
        for row in &quadratic {
            check_dim(n, row.len())?;
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("bump width must be positive".into()));
        }
        let mut quadratic = quadratic;
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (quadratic[i][j] + quadratic[j][i]);
                quadratic[i][j] = s;
                quadratic[j][i] = s;
            }
        }
        Ok(Self {
            center,
            sigma,
            c0,
            linear,
            quadratic,
        })
    }

    /// Plain Gaussian `exp(−|x−c|²/(2σ²))`.
    pub fn gaussian(center: Vec<f64>, sigma: f64) -> Result<Self> {
        let n = center.len();
        Self::new(center, sigma, 1.0, vec![0.0; n], vec![vec![0.0; n]; n])
    }

    fn parts(&self, x: &[f64]) -> (Vec<f64>, f64, f64) {
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let ay: Vec<f64> = self.quadratic.iter().map(|row| dot(row, &y)).collect();
        let p = self.c0 + dot(&self.linear, &y) + dot(&y, &ay);
        let g = (-dot(&y, &y) / (2.0 * self.sigma * self.sigma)).exp();
        (y, p, g)
    }
}

impl TestFunction for GaussianBump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (_, p, g) = self.parts(x);
        p * g
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (y, p, g) = self.parts(x);
        let s2 = self.sigma * self.sigma;
        (0..y.len())
            .map(|j| {
                let dp = self.linear[j] + 2.0 * dot(&self.quadratic[j], &y);
                (dp - p * y[j] / s2) * g
            })
            .collect()
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let (y, p, g) = self.parts(x);
        let n = y.len() as f64;
        let s2 = self.sigma * self.sigma;
        let trace: f64 = (0..y.len()).map(|j| self.quadratic[j][j]).sum();
        let grad_p_dot_y: f64 = (0..y.len())
            .map(|j| (self.linear[j] + 2.0 * dot(&self.quadratic[j], &y)) * y[j])
            .sum();
        let r2 = dot(&y, &y);
        (2.0 * trace - 2.0 * grad_p_dot_y / s2 + p * (r2 / (s2 * s2) - n / s2)) * g
    }
}

/// Open box `Π [lowerⱼ, upperⱼ]` in `ℝⁿ` with a midpoint rule.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
}

impl FlatBox {
    pub fn cube(dim: usize, half_width: f64, resolution: usize) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
            resolution,
        }
    }

    fn nodes(&self) -> Result<(Vec<Vec<f64>>, f64)> {
        check_dim(self.lower.len(), self.upper.len())?;
        if self.resolution < 1 || self.lower.iter().zip(&self.upper).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidArgument("degenerate integration box".into()));
        }
        let h: Vec<f64> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| (b - a) / self.resolution as f64)
            .collect();
        let bounds = vec![(0i64, self.resolution as i64 - 1); self.lower.len()];
        let mut nodes = Vec::new();
        for_each_in_box(&bounds, |m| {
            nodes.push(
                m.iter()
                    .enumerate()
                    .map(|(d, &j)| self.lower[d] + (j as f64 + 0.5) * h[d])
                    .collect(),
            );
        });
        Ok((nodes, h.iter().product()))
    }
}

/// `Re⟨|u|^{p−2}u, Σ∂²u⟩` over a flat box by the midpoint rule; for real `u`
/// this equals `−(p−1)∫|u|^{p−2}|∇u|² ≤ 0` when `u` vanishes near the box
/// boundary.
pub fn dissipativity_pairing(u: &dyn TestFunction, p: f64, domain: &FlatBox) -> Result<f64> {
    if !(p > 1.0 && p < 3.0) {
        return Err(Error::InvalidArgument(format!(
            "dissipativity holds for 1 < p < 3, got p = {p}"
        )));
    }
    check_dim(u.dim(), domain.lower.len())?;
    let (nodes, w) = domain.nodes()?;
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|x| {
            let v = u.value(x);
            if v == 0.0 {
                0.0
            } else {
                v.abs().powf(p - 2.0) * v * u.laplacian(x) * w
            }
        })
        .collect();
    Ok(sum_f64(terms))
}

/// Pairings `∫∫ ℘^{ε_k}(x, t) φ(x, t) dx dt` and their successive differences.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakLimitReport {
    pub pairings: Vec<Complex64>,
    /// `|Δ_k| = |pairing_{k+1} − pairing_k|`.
    pub differences: Vec<f64>,
}

impl WeakLimitReport {
    /// Ratios of the last three consecutive differences.
    pub fn tail_ratios(&self) -> Vec<f64> {
        let d = &self.differences;
        let start = d.len().saturating_sub(3);
        d[start..].windows(2).map(|w| w[1] / w[0]).collect()
    }

    pub fn is_contracting(&self) -> bool {
        let r = self.tail_ratios();
        !r.is_empty() && r.iter().all(|&q| q < 1.0)
    }
}

/// Quadrature: `x` at the torus grid nodes (resolution `grid`), `t` by the
/// trapezoid rule on `window` with `time_steps` intervals; `φ` should vanish
/// with all derivatives at the window ends.
pub fn weak_limit_pairings<F>(
    spec: &ManifoldSpec,
    phi: F,
    eps_sequence: &[f64],
    window: (f64, f64),
    grid: usize,
    time_steps: usize,
    policy: &TruncationPolicy,
) -> Result<WeakLimitReport>
where
    F: Fn(&[f64], f64) -> f64 + Sync,
{
    if eps_sequence.windows(2).any(|w| !(w[1] < w[0])) || eps_sequence.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "epsilon sequence must be positive and strictly decreasing".into(),
        ));
    }
    let (t0, t1) = window;
    if !(t0 > 0.0 && t1 > t0) || time_steps < 1 {
        return Err(Error::InvalidArgument(format!(
            "time window must satisfy 0 < t0 < t1, got ({t0}, {t1})"
        )));
    }
    let shape = make_grid(spec, grid, |_| ZERO)?;
    let dt = (t1 - t0) / time_steps as f64;
    let mut nodes = Vec::new();
    for s in 0..=time_steps {
        let t = t0 + s as f64 * dt;
        let tw = if s == 0 || s == time_steps { 0.5 * dt } else { dt };
        for i in 0..shape.len() {
            let x = shape.point(i);
            let w = phi(&x, t) * tw * shape.weight();
            if w != 0.0 {
                nodes.push((x, t, w));
            }
        }
    }
    let origin = vec![0.0; spec.dim()];
    let mut pairings = Vec::with_capacity(eps_sequence.len());
    for &eps in eps_sequence {
        let params = RegKernelParams::new(eps, spec.dim())?;
        let terms: Vec<Complex64> = nodes
            .par_iter()
            .map(|(x, t, w)| Ok(lattice_series(spec, x, &origin, *t, &params, policy, None)? * *w))
            .collect::<Result<_>>()?;
        pairings.push(terms.into_iter().collect::<CompensatedSum>().value());
    }
    let differences = pairings.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    Ok(WeakLimitReport {
        pairings,
        differences,
    })
}

/// Fit of `‖v(·, t)‖ ≤ a e^{−|κ| b t}` over a computed trajectory: `b` from
/// least squares on `log‖v‖`, then `a` raised until the bound holds at every
/// sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
}

pub fn fit_decay(times: &[f64], norms: &[f64], params: &RegKernelParams) -> Result<DecayFit> {
    check_dim(times.len(), norms.len())?;
    if times.len() < 2 || norms.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(
            "decay fit needs at least two samples with positive norms".into(),
        ));
    }
    let k = params.kappa().norm();
    let m = times.len() as f64;
    let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let tm = times.iter().sum::<f64>() / m;
    let lm = logs.iter().sum::<f64>() / m;
    let sxx: f64 = times.iter().map(|t| (t - tm) * (t - tm)).sum();
    let sxy: f64 = times.iter().zip(&logs).map(|(t, l)| (t - tm) * (l - lm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("decay fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    let b = -slope / k;
    let a = times
        .iter()
        .zip(norms)
        .map(|(&t, &v)| v * (k * b * t).exp())
        .fold(0.0, f64::max);
    Ok(DecayFit { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lattice_from_basis, Lattice, SpinStructure};
    use crate::kernel::make_params;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_torus(n: usize, spin: &[usize]) -> ManifoldSpec {
        ManifoldSpec::torus(
            Lattice::cubic(n, 1.0).unwrap(),
            SpinStructure::from_indices(n, spin).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_grid_and_weights() {
        let spec = ManifoldSpec::torus(
            lattice_from_basis(vec![vec![2.0, 0.0], vec![0.5, 1.5]]).unwrap(),
            SpinStructure::trivial(2),
        )
        .unwrap();
        let u = make_grid(&spec, 8, |_| c(1.0, 0.0)).unwrap();
        assert!(u.samples().iter().all(|&z| z == c(1.0, 0.0)));
        assert!((u.weight() * u.len() as f64 - 3.0).abs() < 1e-14);
        assert!(make_grid(&spec, 1, |_| c(1.0, 0.0)).is_err());
    }

    #[test]
    fn non_finite_sample_reports_point() {
        let spec = unit_torus(1, &[]);
        let err = make_grid(&spec, 4, |x| if x[0] == 0.5 { c(f64::NAN, 0.0) } else { c(1.0, 0.0) }).unwrap_err();
        assert_eq!(err, Error::NonFiniteSample { point: vec![0.5] });
    }

    #[test]
    fn lp_norm_basics() {
        let spec = unit_torus(2, &[]);
        let one = make_grid(&spec, 6, |_| c(1.0, 0.0)).unwrap();
        for p in [1.0, 1.6, 2.0, 2.9] {
            assert!((lp_norm(&one, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let u = make_grid(&spec, 6, |x| c(x[0].sin(), x[1])).unwrap();
        let s = c(-2.0, 1.5);
        for p in [1.0, 2.5] {
            let a = lp_norm(&u.scale(s), p).unwrap();
            let b = s.norm() * lp_norm(&u, p).unwrap();
            assert!((a - b).abs() < 1e-13 * b);
        }
        assert!(lp_norm(&u, 0.5).is_err());
    }

    #[test]
    fn constant_is_stationary_for_trivial_spin() {
        let spec = unit_torus(2, &[]);
        let p = make_params(1.0, 2).unwrap();
        let u = make_grid(&spec, 8, |_| c(2.0, -1.0)).unwrap();
        let v = apply_spectral(&u, 0.7, &p).unwrap();
        for (a, b) in u.samples().iter().zip(v.samples()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn plane_wave_eigenfunction() {
        let spec = unit_torus(1, &[]);
        let p = make_params(1.0, 1).unwrap();
        let u = make_grid(&spec, 16, |x| Complex64::from_polar(1.0, 2.0 * PI * x[0])).unwrap();
        let t = 0.01;
        let factor = (-(c(1.0, -1.0)) * (4.0 * PI * PI * t)).exp();
        let v = apply_spectral(&u, t, &p).unwrap();
        for (a, b) in u.samples().iter().zip(v.samples()) {
            assert!((a * factor - b).norm() < 1e-14);
        }
    }

    #[test]
    fn antiperiodic_half_mode() {
        let spec = unit_torus(1, &[0]);
        let p = make_params(0.5, 1).unwrap();
        let u = make_grid(&spec, 16, |x| Complex64::from_polar(1.0, PI * x[0])).unwrap();
        let t = 0.2;
        let factor = (-(c(0.5, -1.0)) * (PI * PI * t)).exp();
        let v = apply_spectral(&u, t, &p).unwrap();
        for (a, b) in u.samples().iter().zip(v.samples()) {
            assert!((a * factor - b).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let spec = unit_torus(2, &[1]);
        let p = make_params(1.0, 2).unwrap();
        let u = make_grid(&spec, 8, |x| c(x[0] * x[1], x[0])).unwrap();
        assert_eq!(apply_spectral(&u, 0.0, &p).unwrap(), u);
    }

    #[test]
    fn spectral_rejects_non_torus() {
        let spec = ManifoldSpec::new(
            ManifoldKind::Klein,
            Lattice::cubic(2, 1.0).unwrap(),
            SpinStructure::trivial(2),
        )
        .unwrap();
        let u = make_grid(&spec, 4, |_| c(1.0, 0.0)).unwrap();
        let p = make_params(1.0, 2).unwrap();
        assert!(matches!(apply_spectral(&u, 0.1, &p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn multiplier_modulus() {
        let spec = ManifoldSpec::torus(
            lattice_from_basis(vec![vec![1.0, 0.2], vec![0.0, 0.8]]).unwrap(),
            SpinStructure::from_indices(2, &[0]).unwrap(),
        )
        .unwrap();
        let p = make_params(0.7, 2).unwrap();
        let data = SpectralData::new(&spec, 8).unwrap();
        for (m, &l) in data.multipliers(0.3, &p).iter().zip(data.eigenvalues()) {
            assert!(l >= 0.0);
            assert!((m.norm() - (-0.7 * l * 0.3).exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn fft_roundtrip() {
        let mut data: Vec<Complex64> = (0..24).map(|i| c(i as f64, (i * i) as f64 * 0.1)).collect();
        let orig = data.clone();
        fft_nd(&mut data, &[2, 3, 4], false);
        fft_nd(&mut data, &[2, 3, 4], true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tabulated_convolution_matches_direct_sum() {
        let params = RegKernelParams::new(0.8, 2).unwrap();
        let policy = TruncationPolicy::default();
        let line = lattice_from_basis(vec![vec![1.0, 0.0]]).unwrap();
        let cases = [
            (ManifoldSpec::new(ManifoldKind::Klein, Lattice::cubic(2, 1.0).unwrap(), SpinStructure::from_indices(2, &[1]).unwrap()).unwrap(), None),
            (ManifoldSpec::new(ManifoldKind::Moebius, line.clone(), SpinStructure::from_indices(1, &[0]).unwrap()).unwrap(), Some(TransverseBox::new(1.2, 5).unwrap())),
            (ManifoldSpec::new(ManifoldKind::Cylinder, line, SpinStructure::trivial(1)).unwrap(), Some(TransverseBox::new(1.0, 4).unwrap())),
        ];
        for (spec, b) in cases {
            let u = make_grid_with_box(&spec, 6, b, |x| Complex64::new((x[0] * 3.0).sin() + x[1], (x[1] * x[0]).cos())).unwrap();
            let fast = tabulated_convolution(&u, 0.15, &params, &policy).unwrap().unwrap();
            let slow = direct_convolution(&u, 0.15, &params, &policy).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()), "{}: {a} vs {b}", spec.kind());
            }
        }
    }

    #[test]
    fn convolution_matches_spectral_1d() {
        let spec = ManifoldSpec::torus(Lattice::cubic(1, 2.0 * PI).unwrap(), SpinStructure::trivial(1)).unwrap();
        let p = make_params(1.0, 1).unwrap();
        let u = make_grid(&spec, 32, |x| c(1.0 + 0.3 * x[0].cos(), 0.2 * (2.0 * x[0]).sin())).unwrap();
        let pol = TruncationPolicy::default();
        let a = apply_spectral(&u, 0.05, &p).unwrap();
        let b = apply_convolution(&u, 0.05, &p, &pol).unwrap();
        let diff = a.sub(&b).unwrap().sup_norm() / a.sup_norm();
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn transverse_box_layout() {
        let spec = ManifoldSpec::new(
            ManifoldKind::Moebius,
            lattice_from_basis(vec![vec![1.0, 0.0]]).unwrap(),
            SpinStructure::trivial(1),
        )
        .unwrap();
        assert!(make_grid(&spec, 4, |_| c(1.0, 0.0)).is_err());
        let b = TransverseBox::new(1.0, 4).unwrap();
        let u = make_grid_with_box(&spec, 4, Some(b), |_| c(1.0, 0.0)).unwrap();
        assert_eq!(u.shape(), &[4, 4]);
        assert!((u.weight() * u.len() as f64 - 2.0).abs() < 1e-14);
        assert_eq!(u.point(1), vec![0.0, -0.25]);
        assert_eq!(u.point(0), vec![0.0, -0.75]);
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let b = GaussianBump::new(
            vec![0.1, -0.2],
            0.4,
            0.5,
            vec![0.3, -0.7],
            vec![vec![1.0, 0.2], vec![0.4, -0.5]],
        )
        .unwrap();
        let x = [0.25, 0.05];
        let h = 1e-4;
        let g = b.gradient(&x);
        let mut lap = 0.0;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (b.value(&xp), b.value(&xm));
            assert!(((fp - fm) / (2.0 * h) - g[j]).abs() < 1e-6);
            lap += (fp - 2.0 * b.value(&x) + fm) / (h * h);
        }
        assert!((lap - b.laplacian(&x)).abs() < 1e-5);
    }

    #[test]
    fn dissipativity_examples() {
        let g = GaussianBump::gaussian(vec![0.0], 0.5).unwrap();
        let dom = FlatBox::cube(1, 5.0, 4000);
        let v = dissipativity_pairing(&g, 2.0, &dom).unwrap();
        // −∫|u′|² = −√π/(2σ).
        let exact = -PI.sqrt() / (2.0 * 0.5);
        assert!((v - exact).abs() < 1e-10);
        let zero = GaussianBump::new(vec![0.0], 1.0, 0.0, vec![0.0], vec![vec![0.0]]).unwrap();
        assert_eq!(dissipativity_pairing(&zero, 1.5, &dom).unwrap(), 0.0);
        assert!(dissipativity_pairing(&g, 3.0, &dom).is_err());
        assert!(dissipativity_pairing(&g, 1.0, &dom).is_err());
    }

    #[test]
    fn decay_fit_holds_on_samples() {
        let p = make_params(1.0, 1).unwrap();
        let times = [0.0f64, 0.5, 1.0, 2.0];
        let norms: Vec<f64> = times.iter().map(|&t| 3.0 * (-0.8 * t).exp()).collect();
        let fit = fit_decay(&times, &norms, &p).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-12);
        assert!((fit.b * p.kappa().norm() - 0.8).abs() < 1e-12);
    }
}
