//! Lattices, spin/pin sign characters and the four flat manifold kinds.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Bases with condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Lattice `Ω = ℤv₁ + ⋯ + ℤv_k` in `ℝⁿ`, `k ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    dim: usize,
    basis: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
    dual: Vec<Vec<f64>>,
    volume: f64,
}

impl Lattice {
    pub fn from_basis(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let rank = vectors.len();
        let Some(first) = vectors.first() else {
            return Err(Error::InvalidLattice("empty basis".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidLattice("zero-dimensional vectors".into()));
        }
        for v in &vectors {
            check_dim(dim, v.len())?;
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidLattice("non-finite basis entry".into()));
            }
        }
        if rank > dim {
            return Err(Error::InvalidLattice(format!(
                "{rank} vectors in dimension {dim} cannot be independent"
            )));
        }
        let b = DMatrix::from_fn(rank, dim, |i, j| vectors[i][j]);
        let sv = b.clone().svd(false, false).singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 0.0) || smax / smin > MAX_CONDITION {
            return Err(Error::InvalidLattice(format!(
                "basis is singular or ill-conditioned (condition number {:e})",
                if smin > 0.0 { smax / smin } else { f64::INFINITY }
            )));
        }
        let g = &b * b.transpose();
        let g_inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidLattice("singular Gram matrix".into()))?;
        let w = &g_inv * &b;
        let volume = g.determinant().sqrt();
        let to_rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        Ok(Self {
            dim,
            gram: to_rows(&g),
            dual: to_rows(&w),
            basis: vectors,
            volume,
        })
    }

    /// Standard lattice `ℤⁿ` scaled by `side`.
    pub fn cubic(dim: usize, side: f64) -> Result<Self> {
        Self::from_basis(
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { side } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    /// Dual vectors `wᵢ` in the span, `⟨wᵢ, vⱼ⟩ = δᵢⱼ`.
    pub fn dual_basis(&self) -> &[Vec<f64>] {
        &self.dual
    }

    /// `k`-dimensional volume of the fundamental cell.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Upper bound on the diameter of the fundamental cell.
    pub fn cell_diameter(&self) -> f64 {
        self.basis.iter().map(|v| norm(v)).sum()
    }

    /// `Σ mᵢ vᵢ`.
    pub fn vector(&self, m: &[i64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (v, &mi) in self.basis.iter().zip(m) {
            if mi != 0 {
                for (o, &c) in out.iter_mut().zip(v) {
                    *o += mi as f64 * c;
                }
            }
        }
        out
    }

    /// `⟨wᵢ, x⟩`: exact lattice coordinates for `x` in the span.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.dual.iter().map(|w| dot(w, x)).collect()
    }

    /// Point with lattice coordinates `c`: `Σ cᵢ vᵢ`.
    pub fn point_from_coordinates(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (v, &ci) in self.basis.iter().zip(c) {
            for (o, &vj) in out.iter_mut().zip(v) {
                *o += ci * vj;
            }
        }
        out
    }

    /// Inclusive coefficient box containing every `m` with `|x + Σ mᵢvᵢ| ≤ radius`.
    ///
    /// If `|x + v| ≤ R` then `|⟨wᵢ, x + v⟩| ≤ R|wᵢ|`, and `⟨wᵢ, v⟩ = mᵢ`.
    pub fn coefficient_box(&self, x: &[f64], radius: f64) -> Vec<(i64, i64)> {
        self.dual
            .iter()
            .map(|w| {
                let center = -dot(w, x);
                let half = radius * norm(w);
                ((center - half).floor() as i64, (center + half).ceil() as i64)
            })
            .collect()
    }
}

pub fn lattice_from_basis(vectors: Vec<Vec<f64>>) -> Result<Lattice> {
    Lattice::from_basis(vectors)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Visits every integer tuple in an inclusive box, lexicographic order.
pub(crate) fn for_each_in_box(bounds: &[(i64, i64)], mut f: impl FnMut(&[i64])) {
    if bounds.iter().any(|(lo, hi)| lo > hi) {
        return;
    }
    let mut m: Vec<i64> = bounds.iter().map(|b| b.0).collect();
    loop {
        f(&m);
        let mut d = bounds.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            if m[d] < bounds[d].1 {
                m[d] += 1;
                for (k, mk) in m.iter_mut().enumerate().skip(d + 1) {
                    *mk = bounds[k].0;
                }
                break;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub coeffs: Vec<i64>,
    pub vector: Vec<f64>,
    /// `|x + vector|` for the query center `x`.
    pub distance: f64,
}

/// Orders by distance, ties broken lexicographically on the coefficients.
pub(crate) fn distance_order(a: &LatticePoint, b: &LatticePoint) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.coeffs.cmp(&b.coeffs))
}

/// All lattice vectors `v` with `|x + v| ≤ radius`, sorted by `|x + v|` with
/// lexicographic ties on the coefficients.
pub fn enumerate_shifted(lattice: &Lattice, x: &[f64], radius: f64) -> Result<Vec<LatticePoint>> {
    check_dim(lattice.dim, x.len())?;
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument("radius must be non-negative".into()));
    }
    let bounds = lattice.coefficient_box(x, radius);
    let mut out = Vec::new();
    for_each_in_box(&bounds, |m| {
        let v = lattice.vector(m);
        let d = norm(&x.iter().zip(&v).map(|(a, b)| a + b).collect::<Vec<_>>());
        if d <= radius {
            out.push(LatticePoint {
                coeffs: m.to_vec(),
                vector: v,
                distance: d,
            });
        }
    });
    out.sort_by(distance_order);
    Ok(out)
}

/// Coordinates within this distance of an integer are snapped to it before
/// flooring, which makes [`reduce`] idempotent on its own output.
const SNAP: f64 = 1e-12;

/// Representative of `x mod Ω` with lattice coordinates in `[0, 1)ⁿ` (up to
/// the snapping tolerance) and the coefficients `m` with
/// `x = representative + Σ mᵢvᵢ`.
pub fn reduce(x: &[f64], lattice: &Lattice) -> Result<(Vec<f64>, Vec<i64>)> {
    check_dim(lattice.dim, x.len())?;
    if lattice.rank() != lattice.dim {
        return Err(Error::Unsupported(format!(
            "reduction needs a full-rank lattice, got rank {} in dimension {}",
            lattice.rank(),
            lattice.dim
        )));
    }
    let m: Vec<i64> = lattice
        .coordinates(x)
        .into_iter()
        .map(|c| {
            let r = c.round();
            let c = if (c - r).abs() <= SNAP * (1.0 + c.abs()) { r } else { c };
            c.floor() as i64
        })
        .collect();
    let shift = lattice.vector(&m);
    let rep = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
    Ok((rep, m))
}

/// Choice of sign character: the generators in `mask` carry `−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinStructure {
    rank: usize,
    mask: u32,
}

impl SpinStructure {
    pub fn trivial(rank: usize) -> Self {
        Self { rank, mask: 0 }
    }

    pub fn from_mask(rank: usize, mask: u32) -> Result<Self> {
        if rank > 31 || (mask >> rank) != 0 {
            return Err(Error::InvalidSpin(format!(
                "mask {mask:#b} references generators beyond rank {rank}"
            )));
        }
        Ok(Self { rank, mask })
    }

    /// From 0-based generator indices.
    pub fn from_indices(rank: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= rank {
                return Err(Error::InvalidSpin(format!(
                    "generator {i} out of range for rank {rank}"
                )));
            }
            mask |= 1 << i;
        }
        Ok(Self { rank, mask })
    }

    /// All `2^rank` structures.
    pub fn all(rank: usize) -> impl Iterator<Item = SpinStructure> {
        (0..1u32 << rank).map(move |mask| SpinStructure { rank, mask })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.rank && self.mask & (1 << i) != 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.rank).filter(|&i| self.contains(i)).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.mask == 0
    }

    /// `(−1)^{Σ_{i∈S} mᵢ}`.
    pub fn character(&self, m: &[i64]) -> Result<i32> {
        check_dim(self.rank, m.len())?;
        Ok(self.character_unchecked(m))
    }

    #[inline]
    pub(crate) fn character_unchecked(&self, m: &[i64]) -> i32 {
        let odd = m
            .iter()
            .enumerate()
            .filter(|(i, &mi)| self.mask & (1 << i) != 0 && mi & 1 != 0)
            .count();
        if odd % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

pub fn character(spin: &SpinStructure, m: &[i64]) -> Result<i32> {
    spin.character(m)
}

/// `+1` iff `Σ mᵢvᵢ ∈ 2Ω`, i.e. every coefficient is even.
pub fn sgn_moebius(m: &[i64]) -> i32 {
    if m.iter().all(|mi| mi % 2 == 0) {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Torus,
    Cylinder,
    Moebius,
    Klein,
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "torus" => Ok(Self::Torus),
            "cylinder" => Ok(Self::Cylinder),
            "moebius" | "mobius" | "möbius" => Ok(Self::Moebius),
            "klein" => Ok(Self::Klein),
            other => Err(Error::InvalidManifold(format!("unknown manifold kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Torus => "torus",
            Self::Cylinder => "cylinder",
            Self::Moebius => "moebius",
            Self::Klein => "klein",
        })
    }
}

/// A flat manifold `ℝⁿ/∼` together with its sign character.
///
/// * Torus: full-rank lattice, translations.
/// * Cylinder: rank `k < n` lattice, translations.
/// * Moebius: rank `k < n` lattice orthogonal to `eₙ`; the translation by
///   `Σ mᵢvᵢ` also flips `xₙ` unless every `mᵢ` is even.
/// * Klein: lattice `Ω_{n−1} + ℤeₙ` with `Ω_{n−1} ⊂ ℝⁿ⁻¹`; the shift by `mₙeₙ`
///   is paired with `xₙ ↦ (−1)^{mₙ} xₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    lattice: Lattice,
    spin: SpinStructure,
}

const NORMALIZED_TOL: f64 = 1e-12;

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, lattice: Lattice, spin: SpinStructure) -> Result<Self> {
        let n = lattice.dim();
        let k = lattice.rank();
        if spin.rank() != k {
            return Err(Error::InvalidSpin(format!(
                "spin structure has rank {} but the lattice has rank {k}",
                spin.rank()
            )));
        }
        match kind {
            ManifoldKind::Torus => {
                if k != n {
                    return Err(Error::InvalidManifold(format!(
                        "a torus needs a rank-{n} lattice, got rank {k}"
                    )));
                }
            }
            ManifoldKind::Cylinder | ManifoldKind::Moebius => {
                if k == 0 || k >= n {
                    return Err(Error::InvalidManifold(format!(
                        "{kind} needs lattice rank in 1..{n}, got {k}"
                    )));
                }
                if kind == ManifoldKind::Moebius
                    && lattice.basis().iter().any(|v| v[n - 1].abs() > NORMALIZED_TOL)
                {
                    return Err(Error::InvalidManifold(
                        "moebius lattice vectors must have zero last component (the flipped direction)"
                            .into(),
                    ));
                }
            }
            ManifoldKind::Klein => {
                if n < 2 || k != n {
                    return Err(Error::InvalidManifold(format!(
                        "klein needs a full-rank lattice in dimension >= 2, got rank {k} in dimension {n}"
                    )));
                }
                let last = &lattice.basis()[n - 1];
                let normalized = last
                    .iter()
                    .enumerate()
                    .all(|(j, &c)| (c - if j == n - 1 { 1.0 } else { 0.0 }).abs() <= NORMALIZED_TOL)
                    && lattice.basis()[..n - 1]
                        .iter()
                        .all(|v| v[n - 1].abs() <= NORMALIZED_TOL);
                if !normalized {
                    return Err(Error::InvalidManifold(
                        "klein needs the normalized lattice Ω_{n-1} + Z e_n (first n-1 vectors \
                         orthogonal to e_n, last vector e_n); bring a general lattice to this \
                         form by applying a rotation and a dilation"
                            .into(),
                    ));
                }
            }
        }
        Ok(Self {
            kind,
            lattice,
            spin,
        })
    }

    pub fn torus(lattice: Lattice, spin: SpinStructure) -> Result<Self> {
        Self::new(ManifoldKind::Torus, lattice, spin)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn spin(&self) -> &SpinStructure {
        &self.spin
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Same manifold with a different sign character.
    pub fn with_spin(&self, spin: SpinStructure) -> Result<Self> {
        Self::new(self.kind, self.lattice.clone(), spin)
    }

    /// Whether the deck transformation labelled `m` flips `xₙ`.
    pub fn flips(&self, m: &[i64]) -> bool {
        match self.kind {
            ManifoldKind::Torus | ManifoldKind::Cylinder => false,
            ManifoldKind::Moebius => sgn_moebius(m) < 0,
            ManifoldKind::Klein => m[m.len() - 1] & 1 != 0,
        }
    }

    /// Deck transformation `g_m` applied to `x`:
    /// translations for torus/cylinder, `(x̲+v, …, sgn(m)xₙ)` for Möbius and
    /// `(x̲+v̲, (−1)^{mₙ}xₙ + mₙ)` for Klein.
    pub fn act(&self, m: &[i64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let flip = self.flips(m);
        let mut y = x.to_vec();
        if flip {
            y[n - 1] = -y[n - 1];
        }
        for (v, &mi) in self.lattice.basis().iter().zip(m) {
            if mi != 0 {
                for (yj, &vj) in y.iter_mut().zip(v) {
                    *yj += mi as f64 * vj;
                }
            }
        }
        y
    }
}

/// Maps the point `x = g_m(y)` back to `y` for Möbius and Klein manifolds:
/// subtract `Σ mᵢvᵢ`, then undo the `xₙ` flip if `g_m` carries one.
pub fn identify(spec: &ManifoldSpec, x: &[f64], m: &[i64]) -> Result<Vec<f64>> {
    check_dim(spec.dim(), x.len())?;
    check_dim(spec.lattice.rank(), m.len())?;
    if !matches!(spec.kind, ManifoldKind::Moebius | ManifoldKind::Klein) {
        return Err(Error::Unsupported(format!(
            "identify is defined for moebius and klein manifolds, not {}",
            spec.kind
        )));
    }
    let shift = spec.lattice.vector(m);
    let mut y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a - b).collect();
    if spec.flips(m) {
        let n = y.len();
        y[n - 1] = -y[n - 1];
    }
    Ok(y)
}
