//! Truncated lattice sums of the regularized kernel.
//!
//! Every series here has the form `Σ_m χ(m) s_m^{αₙ} ∂^α e(g_m(x) − y, t)`
//! where `g_m` is the deck transformation of the manifold (see
//! [`ManifoldSpec::act`]), `s_m = ±1` records whether `g_m` flips `xₙ` and
//! `y` is the pole. Terms with `|g_m(x) − y| ≤ R` are summed in order of
//! increasing distance with compensated accumulation; `R` comes from
//! [`truncation_radius`] and bounds the discarded tail by `abs_tol`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{enumerate_shifted, Lattice, ManifoldKind, ManifoldSpec};
use crate::kernel::{gaussian_derivative_poly, KernelSlice, MultiIndex, RegKernelParams};
use crate::sum::CompensatedSum;

/// Largest supported total derivative order in the derivative series.
pub const MAX_DERIVATIVE_ORDER: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Bound on the discarded tail.
    pub abs_tol: f64,
    /// Radii beyond this are refused.
    pub max_radius: f64,
    /// Re-sum at twice the radius and fail if the value moves by more than
    /// `abs_tol`.
    pub validate: bool,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_radius: 1e3,
            validate: false,
        }
    }
}

impl TruncationPolicy {
    pub fn new(abs_tol: f64, max_radius: f64, validate: bool) -> Result<Self> {
        let p = Self {
            abs_tol,
            max_radius,
            validate,
        };
        p.check()?;
        Ok(p)
    }

    pub fn with_tol(abs_tol: f64) -> Result<Self> {
        Self::new(abs_tol, Self::default().max_radius, false)
    }

    fn check(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "abs_tol must be positive, got {}",
                self.abs_tol
            )));
        }
        if !(self.max_radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max_radius must be positive, got {}",
                self.max_radius
            )));
        }
        Ok(())
    }
}

fn unit_ball_volume(k: usize) -> f64 {
    let mut v = if k % 2 == 0 { 1.0 } else { 2.0 };
    let mut d = if k % 2 == 0 { 2 } else { 3 };
    while d <= k {
        v *= 2.0 * PI / d as f64;
        d += 2;
    }
    v
}

/// Ingredients of the tail bound `Σ_{r > R} N(shell) f(r)` with
/// `f(r) = C (1+r)^q e^{−a r²}` and `N(ρ) ≤ mult · ω_k (ρ+d)^k / V`.
struct TailModel {
    c: f64,
    q: i32,
    a: f64,
    mult: f64,
    omega: f64,
    diam: f64,
    vol: f64,
    rank: i32,
}

impl TailModel {
    fn f(&self, r: f64) -> f64 {
        self.c * (1.0 + r).powi(self.q) * (-self.a * r * r).exp()
    }

    fn count(&self, rho: f64) -> f64 {
        self.mult * self.omega * (rho + self.diam).powi(self.rank) / self.vol
    }

    /// Point where `f` starts decreasing.
    fn start(&self) -> f64 {
        if self.q == 0 {
            return 0.0;
        }
        let (a, q) = (self.a, self.q as f64);
        (-2.0 * a + (4.0 * a * a + 8.0 * a * q).sqrt()) / (4.0 * a)
    }

    /// Tail bound for radius `r ≥ start()`, shells of unit width.
    fn bound(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..1_000_000 {
            let rj = r + j as f64;
            let term = self.count(rj + 1.0) * self.f(rj);
            acc += term;
            if term <= acc * 1e-17 || term == 0.0 {
                break;
            }
        }
        acc
    }
}

fn tail_model(
    params: &RegKernelParams,
    t: f64,
    lattice: &Lattice,
    alpha: Option<&MultiIndex>,
    mult: usize,
) -> TailModel {
    let (s, q) = match alpha {
        None => (1.0, 0),
        Some(alpha) => {
            let b = params.kappa() / (4.0 * t);
            let s: f64 = alpha
                .orders()
                .iter()
                .map(|&m| gaussian_derivative_poly(b, m).iter().map(|c| c.norm()).sum::<f64>())
                .product();
            (s, alpha.order() as i32)
        }
    };
    TailModel {
        c: params.prefactor_modulus(t) * s,
        q,
        a: params.decay_rate(t),
        mult: mult as f64,
        omega: unit_ball_volume(lattice.rank()),
        diam: lattice.cell_diameter(),
        vol: lattice.volume(),
        rank: lattice.rank() as i32,
    }
}

/// Radius `R` such that the terms of the plain lattice series with
/// `|x + v| > R` sum in modulus to at most `policy.abs_tol`, for any `x`.
pub fn truncation_radius(
    params: &RegKernelParams,
    t: f64,
    policy: &TruncationPolicy,
    lattice: &Lattice,
) -> Result<f64> {
    radius_for(params, t, policy, lattice, None, 1)
}

/// As [`truncation_radius`] for the `∂^α` series, with `mult` enumerations
/// (2 when the deck group flips `xₙ`).
pub(crate) fn radius_for(
    params: &RegKernelParams,
    t: f64,
    policy: &TruncationPolicy,
    lattice: &Lattice,
    alpha: Option<&MultiIndex>,
    mult: usize,
) -> Result<f64> {
    policy.check()?;
    check_dim(params.dim(), lattice.dim())?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "truncation radius needs t > 0, got {t}"
        )));
    }
    let model = tail_model(params, t, lattice, alpha, mult);
    let tol = policy.abs_tol;
    let lo = model.start();
    if !model.bound(lo).is_finite() {
        return Err(Error::NonFinite {
            context: "truncation tail bound".into(),
        });
    }
    if model.bound(lo) <= tol {
        return Ok(lo);
    }
    if lo >= policy.max_radius || model.bound(policy.max_radius) > tol {
        let mut required = policy.max_radius.max(lo).max(1.0);
        while model.bound(required) > tol && required < 1e12 {
            required *= 2.0;
        }
        return Err(Error::TruncationRadius {
            required,
            max_radius: policy.max_radius,
        });
    }
    let (mut lo, mut hi) = (lo, policy.max_radius);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if model.bound(mid) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn check_alpha(dim: usize, alpha: &MultiIndex) -> Result<()> {
    check_dim(dim, alpha.dim())?;
    if alpha.order() > MAX_DERIVATIVE_ORDER {
        return Err(Error::DerivativeOrder {
            order: alpha.order(),
            max: MAX_DERIVATIVE_ORDER,
        });
    }
    Ok(())
}

pub(crate) fn can_flip(spec: &ManifoldSpec) -> bool {
    matches!(spec.kind(), ManifoldKind::Moebius | ManifoldKind::Klein)
}

/// One term of a lattice series: `weight · ∂^α e(point)`.
#[derive(Debug, Clone)]
pub struct SeriesTerm {
    pub coeffs: Vec<i64>,
    pub point: Vec<f64>,
    pub distance: f64,
    pub weight: f64,
}

/// Terms with `|g_m(x) − pole| ≤ radius`, sorted by distance with
/// lexicographic ties.
pub fn series_terms(
    spec: &ManifoldSpec,
    x: &[f64],
    pole: &[f64],
    radius: f64,
    alpha: Option<&MultiIndex>,
) -> Result<Vec<SeriesTerm>> {
    let n = spec.dim();
    check_dim(n, x.len())?;
    check_dim(n, pole.len())?;
    let alpha_n = alpha.map_or(0, |a| a.orders()[n - 1]);
    let flips: &[bool] = if can_flip(spec) { &[false, true] } else { &[false] };
    let mut terms = Vec::new();
    for &flip in flips {
        let mut center: Vec<f64> = x.iter().zip(pole).map(|(a, b)| a - b).collect();
        if flip {
            center[n - 1] = -x[n - 1] - pole[n - 1];
        }
        for p in enumerate_shifted(spec.lattice(), &center, radius)? {
            if spec.flips(&p.coeffs) != flip {
                continue;
            }
            let mut weight = spec.spin().character_unchecked(&p.coeffs) as f64;
            if flip && alpha_n % 2 == 1 {
                weight = -weight;
            }
            let point = center.iter().zip(&p.vector).map(|(a, b)| a + b).collect();
            terms.push(SeriesTerm {
                coeffs: p.coeffs,
                point,
                distance: p.distance,
                weight,
            });
        }
    }
    terms.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.coeffs.cmp(&b.coeffs))
    });
    Ok(terms)
}

fn sum_terms(slice: &KernelSlice, terms: &[SeriesTerm], alpha: Option<&MultiIndex>) -> Complex64 {
    let mut acc = CompensatedSum::new();
    for term in terms {
        let v = match alpha {
            None => slice.eval_r2(term.distance * term.distance),
            Some(a) => slice.derivative(&term.point, a),
        };
        acc.add(v * term.weight);
    }
    acc.value()
}

/// `Σ_m χ(m) s_m^{αₙ} ∂^α e(g_m(x) − pole, t)` for any manifold kind.
pub fn lattice_series(
    spec: &ManifoldSpec,
    x: &[f64],
    pole: &[f64],
    t: f64,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
    alpha: Option<&MultiIndex>,
) -> Result<Complex64> {
    let n = spec.dim();
    check_dim(params.dim(), n)?;
    check_dim(n, x.len())?;
    check_dim(n, pole.len())?;
    if let Some(a) = alpha {
        check_alpha(n, a)?;
    }
    let alpha = alpha.filter(|a| a.order() > 0);
    let Some(slice) = params.at(t) else {
        return Ok(Complex64::new(0.0, 0.0));
    };
    let mult = if can_flip(spec) { 2 } else { 1 };
    let radius = radius_for(params, t, policy, spec.lattice(), alpha, mult)?;
    let value = sum_terms(&slice, &series_terms(spec, x, pole, radius, alpha)?, alpha);
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonFinite {
            context: "lattice series".into(),
        });
    }
    if policy.validate {
        let wide = sum_terms(&slice, &series_terms(spec, x, pole, 2.0 * radius, alpha)?, alpha);
        let change = (wide - value).norm();
        if change > policy.abs_tol {
            return Err(Error::TruncationUnsound {
                change,
                abs_tol: policy.abs_tol,
            });
        }
    }
    Ok(value)
}

/// The part of the plain series whose deck maps do (`flip`) or do not flip
/// `xₙ`, as a function of the shifted center `g(x) − pole` with `g` the
/// identity or the flip: `Σ_{m: flips(m) = flip} χ(m) e(center + Σ mᵢvᵢ)`.
pub(crate) fn half_series(
    spec: &ManifoldSpec,
    center: &[f64],
    flip: bool,
    slice: &KernelSlice,
    radius: f64,
) -> Result<Complex64> {
    let mut acc = CompensatedSum::new();
    for p in enumerate_shifted(spec.lattice(), center, radius)? {
        if spec.flips(&p.coeffs) == flip {
            let w = spec.spin().character_unchecked(&p.coeffs) as f64;
            acc.add(slice.eval_r2(p.distance * p.distance) * w);
        }
    }
    Ok(acc.value())
}

fn require_kind(spec: &ManifoldSpec, allowed: &[ManifoldKind], op: &str) -> Result<()> {
    if allowed.contains(&spec.kind()) {
        Ok(())
    } else {
        Err(Error::InvalidManifold(format!(
            "{op} is not defined for a {} specification",
            spec.kind()
        )))
    }
}

fn origin(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

/// `℘(x, t) = Σ_m χ(m) e(x + Σ mᵢvᵢ, t)` on a torus.
pub fn torus_kernel(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    require_kind(spec, &[ManifoldKind::Torus], "torus_kernel")?;
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, None)
}

/// Subseries over a sublattice; also accepts a full-rank torus spec, where it
/// coincides with [`torus_kernel`].
pub fn cylinder_kernel(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    require_kind(spec, &[ManifoldKind::Cylinder, ManifoldKind::Torus], "cylinder_kernel")?;
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, None)
}

/// `Σ_m χ(m) e(x̲ + v, x_{k+1}, …, sgn(m)xₙ; t)`.
pub fn moebius_kernel(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    require_kind(spec, &[ManifoldKind::Moebius], "moebius_kernel")?;
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, None)
}

/// `Σ_m χ(m) e(x̲ + v̲, (−1)^{mₙ}xₙ + mₙ; t)`.
pub fn klein_kernel(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    require_kind(spec, &[ManifoldKind::Klein], "klein_kernel")?;
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, None)
}

/// Dispatches on `spec.kind()`.
pub fn manifold_kernel(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, None)
}

/// Termwise `∂^α` of [`torus_kernel`], `|α| ≤ 4`.
pub fn torus_kernel_derivative(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
    alpha: &MultiIndex,
) -> Result<Complex64> {
    require_kind(spec, &[ManifoldKind::Torus], "torus_kernel_derivative")?;
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, Some(alpha))
}

/// Termwise `∂^α` of [`manifold_kernel`]; flipped terms pick up `(−1)^{αₙ}`.
pub fn manifold_kernel_derivative(
    x: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
    alpha: &MultiIndex,
) -> Result<Complex64> {
    lattice_series(spec, x, &origin(spec.dim()), t, params, policy, Some(alpha))
}

/// `K(x, y) = Σ_m χ(m) e(g_m(x) − y, t)`, the kernel with its pole at `y`.
/// Satisfies `K(g_j(x), y) = χ(j) K(x, y)`.
pub fn two_point_kernel(
    x: &[f64],
    y: &[f64],
    t: f64,
    spec: &ManifoldSpec,
    params: &RegKernelParams,
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    lattice_series(spec, x, y, t, params, policy, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lattice_from_basis, SpinStructure};
    use crate::kernel::{eval_regularized, make_params};

    fn torus(basis: Vec<Vec<f64>>, spin: &[usize]) -> ManifoldSpec {
        let l = lattice_from_basis(basis).unwrap();
        let k = l.rank();
        ManifoldSpec::torus(l, SpinStructure::from_indices(k, spin).unwrap()).unwrap()
    }

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(0), 1.0);
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn radius_monotone_in_tolerance_and_time() {
        let p = make_params(1.0, 2).unwrap();
        let l = crate::geometry::Lattice::cubic(2, 1.0).unwrap();
        let mut prev = 0.0;
        for k in 4..14 {
            let pol = TruncationPolicy::with_tol(10f64.powi(-k)).unwrap();
            let r = truncation_radius(&p, 0.3, &pol, &l).unwrap();
            assert!(r >= prev);
            prev = r;
        }
        let pol = TruncationPolicy::default();
        let mut prev = f64::INFINITY;
        for t in [2.0, 1.0, 0.5, 0.1, 0.01] {
            let r = truncation_radius(&p, t, &pol, &l).unwrap();
            assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn radius_cap_is_reported() {
        let p = make_params(1e-3, 1).unwrap();
        let l = crate::geometry::Lattice::cubic(1, 1.0).unwrap();
        let pol = TruncationPolicy::new(1e-12, 5.0, false).unwrap();
        let err = truncation_radius(&p, 10.0, &pol, &l).unwrap_err();
        assert!(matches!(err, Error::TruncationRadius { .. }));
        assert!(err.to_string().contains("epsilon * t"));
        assert!(truncation_radius(&p, 0.0, &pol, &l).is_err());
    }

    #[test]
    fn tail_bound_dominates_actual_tail() {
        let p = make_params(0.5, 1).unwrap();
        let spec = torus(vec![vec![1.0]], &[]);
        let pol = TruncationPolicy::with_tol(1e-9).unwrap();
        let t = 0.4;
        let r = truncation_radius(&p, t, &pol, spec.lattice()).unwrap();
        let x = 0.37;
        let tail: f64 = (-400i64..=400)
            .map(|m| x + m as f64)
            .filter(|y| y.abs() > r)
            .map(|y| eval_regularized(&[y], t, &p).unwrap().norm())
            .sum();
        assert!(tail <= 1e-9, "tail {tail}");
    }

    #[test]
    fn nonpositive_time_gives_zero() {
        let p = make_params(1.0, 2).unwrap();
        let spec = torus(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[0]);
        let pol = TruncationPolicy::default();
        for t in [0.0, -1.0] {
            assert_eq!(torus_kernel(&[0.2, 0.1], t, &spec, &p, &pol).unwrap(), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn antiperiodic_in_flagged_generator() {
        let p = make_params(1.0, 2).unwrap();
        let spec = torus(vec![vec![1.0, 0.0], vec![0.3, 1.2]], &[0]);
        let pol = TruncationPolicy::default();
        let x = [0.21, -0.4];
        let v = torus_kernel(&x, 0.3, &spec, &p, &pol).unwrap();
        let s1 = torus_kernel(&[x[0] + 1.0, x[1]], 0.3, &spec, &p, &pol).unwrap();
        let s2 = torus_kernel(&[x[0] + 0.3, x[1] + 1.2], 0.3, &spec, &p, &pol).unwrap();
        assert!((s1 + v).norm() <= 2e-12);
        assert!((s2 - v).norm() <= 2e-12);
    }

    #[test]
    fn alpha_zero_derivative_is_kernel() {
        let p = make_params(0.7, 2).unwrap();
        let spec = torus(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[1]);
        let pol = TruncationPolicy::default();
        let a = torus_kernel(&[0.1, 0.2], 0.2, &spec, &p, &pol).unwrap();
        let b = torus_kernel_derivative(&[0.1, 0.2], 0.2, &spec, &p, &pol, &MultiIndex::zero(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn derivative_order_cap() {
        let p = make_params(1.0, 1).unwrap();
        let spec = torus(vec![vec![1.0]], &[]);
        let pol = TruncationPolicy::default();
        let err = torus_kernel_derivative(&[0.1], 0.2, &spec, &p, &pol, &MultiIndex::new(vec![5])).unwrap_err();
        assert!(matches!(err, Error::DerivativeOrder { order: 5, max: 4 }));
    }

    #[test]
    fn kind_checks() {
        let p = make_params(1.0, 2).unwrap();
        let pol = TruncationPolicy::default();
        let spec = torus(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[]);
        assert!(moebius_kernel(&[0.1, 0.2], 0.2, &spec, &p, &pol).is_err());
        assert!(klein_kernel(&[0.1, 0.2], 0.2, &spec, &p, &pol).is_err());
        assert_eq!(
            cylinder_kernel(&[0.1, 0.2], 0.2, &spec, &p, &pol).unwrap(),
            torus_kernel(&[0.1, 0.2], 0.2, &spec, &p, &pol).unwrap()
        );
    }

    #[test]
    fn validation_accepts_sound_radius() {
        let p = make_params(1.0, 2).unwrap();
        let spec = torus(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 1]);
        let pol = TruncationPolicy::new(1e-12, 1e3, true).unwrap();
        torus_kernel(&[0.3, 0.6], 0.5, &spec, &p, &pol).unwrap();
    }

    #[test]
    fn summation_is_deterministic_across_threads() {
        let p = make_params(0.5, 2).unwrap();
        let spec = torus(vec![vec![1.0, 0.0], vec![0.3, 1.2]], &[1]);
        let pol = TruncationPolicy::default();
        let x = [0.25, 0.4];
        let base = torus_kernel(&x, 0.2, &spec, &p, &pol).unwrap();
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let spec = spec.clone();
                std::thread::spawn(move || torus_kernel(&x, 0.2, &spec, &p, &pol).unwrap())
            })
            .collect();
        for h in handles {
            let v = h.join().unwrap();
            assert_eq!(v.re.to_bits(), base.re.to_bits());
            assert_eq!(v.im.to_bits(), base.im.to_bits());
        }
    }
}
