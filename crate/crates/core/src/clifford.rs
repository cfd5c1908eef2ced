//! Complexified Clifford algebra `Cl₀,ₙ` with generators `e₁..eₙ`,
//! `eᵢeⱼ + eⱼeᵢ = −2δᵢⱼ`.
//!
//! Blades are indexed by bitmask: bit `i` set means generator `e_{i+1}` is a
//! factor, always written in ascending order. A multivector stores one complex
//! coefficient per blade (`2ⁿ` entries), zero meaning absent.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};

/// Largest supported dimension; keeps `2ⁿ`-sized storage reasonable.
pub const MAX_DIM: usize = 12;

/// Product of basis blades `e_a e_b = sign · e_{a△b}`.
///
/// The sign counts the transpositions needed to bring the concatenated
/// generator word into ascending order, times `(−1)` per repeated generator
/// (each `eᵢ² = −1`).
pub fn blade_product(a: u32, b: u32) -> (u32, i8) {
    let mut swaps = 0u32;
    let mut rest = a >> 1;
    while rest != 0 {
        swaps += (rest & b).count_ones();
        rest >>= 1;
    }
    swaps += (a & b).count_ones();
    let sign = if swaps % 2 == 0 { 1 } else { -1 };
    (a ^ b, sign)
}

/// Grade of a blade.
pub fn grade(blade: u32) -> u32 {
    blade.count_ones()
}

/// Precomputed blade products for dimension `n`.
#[derive(Debug, Clone)]
pub struct BladeProductTable {
    dim: usize,
    entries: Vec<(u32, i8)>,
}

impl BladeProductTable {
    pub fn new(dim: usize) -> Result<Self> {
        validate_dim(dim)?;
        let size = 1usize << dim;
        let mut entries = Vec::with_capacity(size * size);
        for a in 0..size as u32 {
            for b in 0..size as u32 {
                entries.push(blade_product(a, b));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookup(&self, a: u32, b: u32) -> (u32, i8) {
        let size = 1usize << self.dim;
        self.entries[a as usize * size + b as usize]
    }
}

fn validate_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "Clifford dimension must be in 1..={MAX_DIM}, got {dim}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multivector {
    dim: usize,
    coeffs: Vec<Complex64>,
}

impl Multivector {
    pub fn zero(dim: usize) -> Result<Self> {
        validate_dim(dim)?;
        Ok(Self {
            dim,
            coeffs: vec![Complex64::new(0.0, 0.0); 1 << dim],
        })
    }

    pub fn scalar(dim: usize, value: Complex64) -> Result<Self> {
        Self::blade(dim, 0, value)
    }

    /// `value · e_A` for the blade with bitmask `mask`.
    pub fn blade(dim: usize, mask: u32, value: Complex64) -> Result<Self> {
        let mut m = Self::zero(dim)?;
        m.set(mask, value)?;
        Ok(m)
    }

    /// Generator `e_{i+1}` (0-based `i`).
    pub fn generator(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::InvalidArgument(format!(
                "generator index {i} out of range for dimension {dim}"
            )));
        }
        Self::blade(dim, 1 << i, Complex64::new(1.0, 0.0))
    }

    /// Vector `Σ cᵢ eᵢ`.
    pub fn vector(components: &[Complex64]) -> Result<Self> {
        let mut m = Self::zero(components.len())?;
        for (i, &c) in components.iter().enumerate() {
            m.coeffs[1 << i] = c;
        }
        Ok(m)
    }

    pub fn from_coeffs(dim: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        validate_dim(dim)?;
        check_dim(1 << dim, coeffs.len())?;
        Ok(Self { dim, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, mask: u32) -> Complex64 {
        self.coeffs
            .get(mask as usize)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn set(&mut self, mask: u32, value: Complex64) -> Result<()> {
        let slot = self.coeffs.get_mut(mask as usize).ok_or_else(|| {
            Error::InvalidArgument(format!("blade {mask:#b} outside dimension {}", self.dim))
        })?;
        *slot = value;
        Ok(())
    }

    pub fn scalar_part(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    pub fn geometric_product(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if cb == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let (blade, sign) = blade_product(a as u32, b as u32);
                out[blade as usize] += ca * cb * f64::from(sign);
            }
        }
        Ok(Self {
            dim: self.dim,
            coeffs: out,
        })
    }

    /// Clifford conjugation combined with complex conjugation of the
    /// coefficients: `ē_A = (−1)^{k(k+1)/2} e_A` for a grade-`k` blade, so
    /// that `e_A ē_A = 1`.
    pub fn conjugate(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(mask, c)| {
                let k = grade(mask as u32);
                let sign = if (k * (k + 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                c.conj() * sign
            })
            .collect();
        Self {
            dim: self.dim,
            coeffs,
        }
    }

    /// `|a|² = 2ⁿ Σ_A |a_A|²`.
    pub fn modulus_sq(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        s * (1u64 << self.dim) as f64
    }

    /// Scalar part of `a b̄`, i.e. `Σ_A a_A conj(b_A)`.
    pub fn scalar_pairing(&self, other: &Self) -> Result<Complex64> {
        check_dim(self.dim, other.dim)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

pub fn geometric_product(a: &Multivector, b: &Multivector) -> Result<Multivector> {
    a.geometric_product(b)
}

pub fn modulus_sq(a: &Multivector) -> f64 {
    a.modulus_sq()
}

/// Discrete `⟨u, v⟩ = 2ⁿ Σᵢ wᵢ [uᵢ v̄ᵢ]₀` over sampled fields.
pub fn inner_product(u: &[Multivector], v: &[Multivector], weights: &[f64]) -> Result<Complex64> {
    if u.len() != v.len() || u.len() != weights.len() {
        return Err(Error::GridMismatch(format!(
            "{} / {} samples against {} weights",
            u.len(),
            v.len(),
            weights.len()
        )));
    }
    let Some(first) = u.first() else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let dim = first.dim;
    let mut acc = crate::sum::CompensatedSum::new();
    for ((a, b), &w) in u.iter().zip(v).zip(weights) {
        check_dim(dim, a.dim)?;
        acc.add(a.scalar_pairing(b)? * w);
    }
    Ok(acc.value() * (1u64 << dim) as f64)
}

impl Add for &Multivector {
    type Output = Multivector;
    fn add(self, rhs: Self) -> Multivector {
        assert_eq!(self.dim, rhs.dim, "multivector dimension mismatch");
        Multivector {
            dim: self.dim,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Multivector {
    type Output = Multivector;
    fn sub(self, rhs: Self) -> Multivector {
        assert_eq!(self.dim, rhs.dim, "multivector dimension mismatch");
        Multivector {
            dim: self.dim,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Multivector {
    type Output = Multivector;
    fn neg(self) -> Multivector {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

/// Panics on dimension mismatch; use [`Multivector::geometric_product`] for
/// a checked product.
impl Mul for &Multivector {
    type Output = Multivector;
    fn mul(self, rhs: Self) -> Multivector {
        self.geometric_product(rhs).expect("multivector dimension mismatch")
    }
}

/// Multivector samples on a regular Cartesian grid, row-major with the last
/// axis fastest.
#[derive(Debug, Clone)]
pub struct MultivectorGrid {
    shape: Vec<usize>,
    origin: Vec<f64>,
    spacing: f64,
    values: Vec<Multivector>,
}

impl MultivectorGrid {
    /// Samples a scalar function at `origin + h·j` for every multi-index `j`.
    pub fn sample_scalar<F>(shape: &[usize], origin: &[f64], spacing: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let dim = shape.len();
        check_dim(dim, origin.len())?;
        validate_dim(dim)?;
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument("grid spacing must be positive".into()));
        }
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut x = vec![0.0; dim];
        for flat in 0..total {
            let idx = unflatten(flat, shape);
            for d in 0..dim {
                x[d] = origin[d] + spacing * idx[d] as f64;
            }
            values.push(Multivector::scalar(dim, f(&x))?);
        }
        Ok(Self {
            shape: shape.to_vec(),
            origin: origin.to_vec(),
            spacing,
            values,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[Multivector] {
        &self.values
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.origin)
            .map(|(&i, &o)| o + self.spacing * i as f64)
            .collect()
    }

    pub fn get(&self, idx: &[usize]) -> &Multivector {
        &self.values[flatten(idx, &self.shape)]
    }
}

fn unflatten(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        idx[d] = flat % shape[d];
        flat /= shape[d];
    }
    idx
}

fn flatten(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &s)| acc * s + i)
}

/// Finite-difference Dirac operator `D = Σⱼ eⱼ ∂ⱼ` with second-order centered
/// differences. The result lives on the interior nodes (one node trimmed on
/// every side).
pub fn dirac_fd(u: &MultivectorGrid) -> Result<MultivectorGrid> {
    let dim = u.shape.len();
    if u.shape.iter().any(|&s| s < 3) {
        return Err(Error::Stencil(format!(
            "grid shape {:?} too small for a centered stencil",
            u.shape
        )));
    }
    let inner: Vec<usize> = u.shape.iter().map(|s| s - 2).collect();
    let gens: Vec<Multivector> = (0..dim)
        .map(|j| Multivector::generator(dim, j))
        .collect::<Result<_>>()?;
    let inv_2h = 1.0 / (2.0 * u.spacing);
    let total: usize = inner.iter().product();
    let mut values = Vec::with_capacity(total);
    for flat in 0..total {
        let base: Vec<usize> = unflatten(flat, &inner).iter().map(|i| i + 1).collect();
        let mut acc = Multivector::zero(dim)?;
        for (j, e) in gens.iter().enumerate() {
            let mut plus = base.clone();
            plus[j] += 1;
            let mut minus = base.clone();
            minus[j] -= 1;
            let diff = (u.get(&plus) - u.get(&minus)).scale(Complex64::new(inv_2h, 0.0));
            acc = &acc + &(e * &diff);
        }
        values.push(acc);
    }
    Ok(MultivectorGrid {
        shape: inner,
        origin: u.origin.iter().map(|o| o + u.spacing).collect(),
        spacing: u.spacing,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn generators_square_to_minus_one() {
        for n in 1..=4 {
            for i in 0..n {
                let e = Multivector::generator(n, i).unwrap();
                let sq = &e * &e;
                assert_eq!(sq, Multivector::scalar(n, c(-1.0, 0.0)).unwrap());
            }
        }
    }

    #[test]
    fn distinct_generators_anticommute() {
        let e1 = Multivector::generator(2, 0).unwrap();
        let e2 = Multivector::generator(2, 1).unwrap();
        let e12 = Multivector::blade(2, 0b11, c(1.0, 0.0)).unwrap();
        assert_eq!(&e1 * &e2, e12);
        assert_eq!(&e2 * &e1, -&e12);
    }

    #[test]
    fn unit_is_neutral() {
        let one = Multivector::scalar(3, c(1.0, 0.0)).unwrap();
        let u = Multivector::from_coeffs(3, (0..8).map(|k| c(k as f64, -0.5 * k as f64)).collect())
            .unwrap();
        assert_eq!(&one * &u, u);
        assert_eq!(&u * &one, u);
    }

    #[test]
    fn product_rejects_dimension_mismatch() {
        let a = Multivector::zero(2).unwrap();
        let b = Multivector::zero(3).unwrap();
        assert!(matches!(
            a.geometric_product(&b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn modulus_examples() {
        assert_eq!(Multivector::zero(2).unwrap().modulus_sq(), 0.0);
        let mut a = Multivector::scalar(2, c(1.0, 0.0)).unwrap();
        a.set(0b01, c(1.0, 0.0)).unwrap();
        assert_eq!(a.modulus_sq(), 8.0);
        let b = Multivector::blade(2, 0b11, c(1.0, 1.0)).unwrap();
        assert_relative_eq!(b.modulus_sq(), 8.0, epsilon = 1e-15);
    }

    #[test]
    fn conjugate_blade_times_blade_is_one() {
        for mask in 0..16u32 {
            let e = Multivector::blade(4, mask, c(1.0, 0.0)).unwrap();
            assert_eq!(&e * &e.conjugate(), Multivector::scalar(4, c(1.0, 0.0)).unwrap());
        }
    }

    #[test]
    fn inner_product_constant_one_on_unit_volume() {
        let one = Multivector::scalar(1, c(1.0, 0.0)).unwrap();
        let u = vec![one; 4];
        let w = vec![0.25; 4];
        assert_relative_eq!(inner_product(&u, &u, &w).unwrap().re, 2.0, epsilon = 1e-15);
        let zero = vec![Multivector::zero(1).unwrap(); 4];
        assert_eq!(inner_product(&u, &zero, &w).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn inner_product_rejects_grid_mismatch() {
        let one = Multivector::scalar(1, c(1.0, 0.0)).unwrap();
        assert!(matches!(
            inner_product(std::slice::from_ref(&one), &[one.clone(), one.clone()], &[1.0]),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn dirac_of_linear_function_is_constant_vector() {
        let g = MultivectorGrid::sample_scalar(&[5, 5], &[-1.0, -1.0], 0.5, |x| c(x[0], 0.0)).unwrap();
        let d = dirac_fd(&g).unwrap();
        let e1 = Multivector::generator(2, 0).unwrap();
        for v in d.values() {
            assert!((v - &e1).max_abs() < 1e-14);
        }
    }

    #[test]
    fn dirac_of_constant_vanishes() {
        let g = MultivectorGrid::sample_scalar(&[4, 4, 4], &[0.0; 3], 0.1, |_| c(2.5, -1.0)).unwrap();
        for v in dirac_fd(&g).unwrap().values() {
            assert_eq!(v.max_abs(), 0.0);
        }
    }

    #[test]
    fn dirac_squared_of_paraboloid_is_minus_laplacian() {
        // u = x₁² + x₂², Δu = 4; centered differences are exact on quadratics.
        let g = MultivectorGrid::sample_scalar(&[9, 9], &[-1.0, -1.0], 0.25, |x| {
            c(x[0] * x[0] + x[1] * x[1], 0.0)
        })
        .unwrap();
        let dd = dirac_fd(&dirac_fd(&g).unwrap()).unwrap();
        for v in dd.values() {
            assert!((v.scalar_part() - c(-4.0, 0.0)).norm() < 1e-12);
            assert!(v.coeffs()[1..].iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn dirac_rejects_small_grid() {
        let g = MultivectorGrid::sample_scalar(&[2, 5], &[0.0, 0.0], 0.1, |_| c(1.0, 0.0)).unwrap();
        assert!(matches!(dirac_fd(&g), Err(Error::Stencil(_))));
    }

    #[test]
    fn table_matches_direct_product() {
        let t = BladeProductTable::new(4).unwrap();
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(t.lookup(a, b), blade_product(a, b));
            }
        }
    }

    fn integer_multivector(dim: usize) -> impl Strategy<Value = Multivector> {
        prop::collection::vec((-4i32..=4, -4i32..=4), 1 << dim).prop_map(move |v| {
            Multivector::from_coeffs(
                dim,
                v.into_iter().map(|(a, b)| c(a as f64, b as f64)).collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn product_is_associative(
            (a, b, cc) in (1usize..=4).prop_flat_map(|n| {
                (integer_multivector(n), integer_multivector(n), integer_multivector(n))
            })
        ) {
            // Small integer coefficients keep every intermediate exact.
            prop_assert_eq!(&(&a * &b) * &cc, &a * &(&b * &cc));
        }

        #[test]
        fn modulus_equals_unit_weight_self_inner_product(
            a in (1usize..=4).prop_flat_map(integer_multivector)
        ) {
            let ip = inner_product(std::slice::from_ref(&a), std::slice::from_ref(&a), &[1.0]).unwrap();
            prop_assert!((ip.re - a.modulus_sq()).abs() <= 1e-12 * (1.0 + a.modulus_sq()));
            prop_assert!(ip.im.abs() < 1e-12);
            prop_assert!(a.modulus_sq() >= 0.0);
        }
    }
}
