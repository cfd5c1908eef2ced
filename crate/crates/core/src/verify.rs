//! Verification suites behind `flatkern verify`.
//!
//! Each suite turns one family of numerical claims into a list of
//! [`CaseResult`]s. A config section left out of the JSON skips its suite, so
//! an empty config yields an empty, passing report. Cases whose measured
//! value is a convergence ratio pass when `|measured − 4| ≤ tolerance`; all
//! others pass when `measured ≤ tolerance`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clifford::{dirac_fd, Multivector, MultivectorGrid};
use crate::error::{Error, Result};
use crate::geometry::{lattice_from_basis, Lattice, ManifoldKind, ManifoldSpec, SpinStructure};
use crate::guenter::{guenter_derivative, guenter_gradient, guenter_laplacian, AmbientFunction};
use crate::kernel::{eval_regularized, mass_constant, pde_residual, RegKernelParams};
use crate::periodize::{manifold_kernel, TruncationPolicy};
use crate::semigroup::{
    apply_convolution, apply_spectral, apply_spectral_with, dissipativity_pairing, fit_decay,
    lp_norm, make_grid, spectral_laplacian, weak_limit_pairings, FlatBox, GaussianBump,
    GridFunction, SpectralData,
};

pub const SUITES: [&str; 11] = [
    "pde",
    "mass",
    "periodicity",
    "crossval",
    "contraction",
    "semigroup",
    "dissipativity",
    "recovery",
    "limit",
    "clifford",
    "guenter",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub suite: String,
    pub case: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pass: bool,
    pub seed: u64,
    pub config_hash: String,
    pub cases: Vec<CaseResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub points: usize,
    pub t_range: (f64, f64),
    pub max_radius: f64,
    pub dims: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub step: f64,
    pub ratio_halfwidth: f64,
    pub periodized_points: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            points: 100,
            t_range: (0.1, 1.0),
            max_radius: 2.0,
            dims: vec![1, 2, 3],
            epsilons: vec![0.5, 1.0],
            step: 0.02,
            ratio_halfwidth: 0.5,
            periodized_points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassConfig {
    /// `(ε, n)` pairs.
    pub cases: Vec<(f64, usize)>,
    pub times: Vec<f64>,
    pub rel_tol: f64,
}

impl Default for MassConfig {
    fn default() -> Self {
        Self {
            cases: vec![(1.0, 1), (1.0, 2), (0.5, 3), (3.0, 1), (0.5, 1)],
            times: vec![0.1, 1.0, 10.0],
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicityConfig {
    pub dims: Vec<usize>,
    pub points: usize,
    pub epsilon: f64,
    pub t: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for PeriodicityConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            points: 20,
            epsilon: 1.0,
            t: 0.3,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    pub dims: Vec<usize>,
    pub grid: usize,
    pub times: Vec<f64>,
    pub epsilon: f64,
    pub rel_tol: f64,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2],
            grid: 64,
            times: vec![0.05, 0.5],
            epsilon: 1.0,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionConfig {
    pub functions: usize,
    pub p_values: Vec<f64>,
    pub times: Vec<f64>,
    pub epsilon: f64,
    pub rel_tol: f64,
    pub modulus_tol: f64,
    /// Use `1/κ = −ε − i` in the multiplier; the suite must then fail.
    pub corrupt_multiplier: bool,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            functions: 50,
            p_values: vec![1.6, 2.0, 2.9],
            times: vec![0.05, 0.5],
            epsilon: 1.0,
            rel_tol: 1e-6,
            modulus_tol: 1e-12,
            corrupt_multiplier: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemigroupConfig {
    pub times: Vec<f64>,
    pub epsilon: f64,
    pub grid: usize,
    pub rel_tol: f64,
    pub commutation_tol: f64,
}

impl Default for SemigroupConfig {
    fn default() -> Self {
        Self {
            times: vec![0.1, 0.3],
            epsilon: 1.0,
            grid: 32,
            rel_tol: 1e-10,
            commutation_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipativityConfig {
    pub functions: usize,
    pub p_values: Vec<f64>,
    pub tol: f64,
}

impl Default for DissipativityConfig {
    fn default() -> Self {
        Self {
            functions: 20,
            p_values: vec![1.2, 2.0, 2.9],
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub times: Vec<f64>,
    pub p_values: Vec<f64>,
    pub epsilon: f64,
    pub grid: usize,
    pub amplitude: f64,
    pub tol: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            times: vec![1e-1, 1e-2, 1e-3],
            p_values: vec![1.6, 2.0, 2.9],
            epsilon: 1.0,
            grid: 64,
            amplitude: 0.2,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitConfig {
    pub levels: u32,
    pub grid: usize,
    pub time_steps: usize,
    pub window: (f64, f64),
    pub abs_tol: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            grid: 64,
            time_steps: 64,
            window: (0.25, 0.75),
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliffordConfig {
    pub max_dim: usize,
    pub samples: usize,
    pub grid: usize,
    pub ratio_halfwidth: f64,
}

impl Default for CliffordConfig {
    fn default() -> Self {
        Self {
            max_dim: 4,
            samples: 20,
            grid: 17,
            ratio_halfwidth: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuenterConfig {
    pub points: usize,
    pub step: f64,
    pub rel_tol: f64,
    pub extension_tol: f64,
}

impl Default for GuenterConfig {
    fn default() -> Self {
        Self {
            points: 100,
            step: 1e-3,
            rel_tol: 1e-4,
            extension_tol: 1e-6,
        }
    }
}

/// Per-suite settings; an absent section skips its suite.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<MassConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodicity: Option<PeriodicityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossval: Option<CrossvalConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semigroup: Option<SemigroupConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipativity: Option<DissipativityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clifford: Option<CliffordConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guenter: Option<GuenterConfig>,
}

impl VerifyConfig {
    /// Every suite with its default settings.
    pub fn standard() -> Self {
        Self {
            pde: Some(PdeConfig::default()),
            mass: Some(MassConfig::default()),
            periodicity: Some(PeriodicityConfig::default()),
            crossval: Some(CrossvalConfig::default()),
            contraction: Some(ContractionConfig::default()),
            semigroup: Some(SemigroupConfig::default()),
            dissipativity: Some(DissipativityConfig::default()),
            recovery: Some(RecoveryConfig::default()),
            limit: Some(LimitConfig::default()),
            clifford: Some(CliffordConfig::default()),
            guenter: Some(GuenterConfig::default()),
        }
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Runs one suite (or `"all"`, in [`SUITES`] order).
pub fn run_verification(suite: &str, config: &VerifyConfig, seed: u64) -> Result<Report> {
    let names: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&suite) {
        vec![suite]
    } else {
        return Err(Error::UnknownSuite(suite.to_string()));
    };
    let mut cases = Vec::new();
    for name in names {
        cases.extend(run_suite(name, config, seed)?);
    }
    Ok(Report {
        pass: cases.iter().all(|c| c.pass),
        seed,
        config_hash: config.hash(),
        cases,
    })
}

pub fn run_suite(name: &str, config: &VerifyConfig, seed: u64) -> Result<Vec<CaseResult>> {
    let index = SUITES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::UnknownSuite(name.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index as u64);
    let rng = &mut rng;
    match name {
        "pde" => config.pde.as_ref().map_or(Ok(vec![]), |c| pde_suite(c, rng)),
        "mass" => config.mass.as_ref().map_or(Ok(vec![]), mass_suite),
        "periodicity" => config
            .periodicity
            .as_ref()
            .map_or(Ok(vec![]), |c| periodicity_suite(c, rng)),
        "crossval" => config.crossval.as_ref().map_or(Ok(vec![]), |c| crossval_suite(c, rng)),
        "contraction" => config
            .contraction
            .as_ref()
            .map_or(Ok(vec![]), |c| contraction_suite(c, rng)),
        "semigroup" => config.semigroup.as_ref().map_or(Ok(vec![]), |c| semigroup_suite(c, rng)),
        "dissipativity" => config
            .dissipativity
            .as_ref()
            .map_or(Ok(vec![]), |c| dissipativity_suite(c, rng)),
        "recovery" => config.recovery.as_ref().map_or(Ok(vec![]), recovery_suite),
        "limit" => config.limit.as_ref().map_or(Ok(vec![]), limit_suite),
        "clifford" => config.clifford.as_ref().map_or(Ok(vec![]), |c| clifford_suite(c, rng)),
        "guenter" => config.guenter.as_ref().map_or(Ok(vec![]), |c| guenter_suite(c, rng)),
        _ => unreachable!(),
    }
}

fn case(suite: &str, name: String, measured: f64, tolerance: f64) -> CaseResult {
    CaseResult {
        suite: suite.to_string(),
        case: name,
        measured,
        tolerance,
        pass: measured <= tolerance,
    }
}

fn ratio_case(suite: &str, name: String, ratio: f64, halfwidth: f64) -> CaseResult {
    CaseResult {
        suite: suite.to_string(),
        case: name,
        measured: ratio,
        tolerance: halfwidth,
        pass: (ratio - 4.0).abs() <= halfwidth,
    }
}

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Uniform point in the ball of radius `r` in `ℝⁿ`.
pub fn random_in_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-r..r)).collect();
        if x.iter().map(|v| v * v).sum::<f64>() <= r * r {
            return x;
        }
    }
}

/// The fixed, mildly skewed bases used by the periodicity checks.
pub fn reference_basis(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0]],
        2 => vec![vec![1.0, 0.0], vec![0.3, 1.2]],
        3 => vec![vec![1.0, 0.0, 0.0], vec![0.2, 0.9, 0.0], vec![0.1, -0.3, 1.1]],
        _ => (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect(),
    }
}

/// Torus `ℝⁿ/(2πℤ)ⁿ` with spin mask `mask`.
pub fn torus_2pi(n: usize, mask: u32) -> Result<ManifoldSpec> {
    ManifoldSpec::torus(Lattice::cubic(n, 2.0 * PI)?, SpinStructure::from_mask(n, mask)?)
}

/// Trigonometric polynomial `Σ c_k e^{i⟨k + δ, x⟩}` on the `2π`-torus, with
/// `δ` having `½` in the masked coordinates and `|kᵢ| ≤ max_k`.
pub fn random_trig_poly(
    rng: &mut ChaCha8Rng,
    n: usize,
    mask: u32,
    max_k: i64,
) -> impl Fn(&[f64]) -> Complex64 + Sync {
    let bounds = vec![(-max_k, max_k); n];
    let mut modes = Vec::new();
    crate::geometry::for_each_in_box(&bounds, |k| {
        let freq: Vec<f64> = k
            .iter()
            .enumerate()
            .map(|(i, &ki)| ki as f64 + if mask & (1 << i) != 0 { 0.5 } else { 0.0 })
            .collect();
        modes.push(freq);
    });
    let terms: Vec<(Vec<f64>, Complex64)> = modes
        .into_iter()
        .map(|f| (f, c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        .collect();
    move |x: &[f64]| {
        terms
            .iter()
            .map(|(f, c)| c * Complex64::from_polar(1.0, f.iter().zip(x).map(|(a, b)| a * b).sum()))
            .sum()
    }
}

fn pde_suite(cfg: &PdeConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    let h = cfg.step;
    for i in 0..cfg.points {
        let n = cfg.dims[i % cfg.dims.len()];
        let eps = cfg.epsilons[(i / cfg.dims.len()) % cfg.epsilons.len()];
        let params = RegKernelParams::new(eps, n)?;
        let t = rng.gen_range(cfg.t_range.0..cfg.t_range.1);
        let x = random_in_ball(rng, n, cfg.max_radius);
        let f = |y: &[f64], s: f64| eval_regularized(y, s, &params);
        let r1 = pde_residual(f, &x, t, &params, h)?.norm();
        let r2 = pde_residual(f, &x, t, &params, h / 2.0)?.norm();
        out.push(ratio_case(
            "pde",
            format!("kernel n={n} eps={eps} t={t:.4} |x|={:.3}", crate::geometry::norm(&x)),
            r1 / r2,
            cfg.ratio_halfwidth,
        ));
    }
    let policy = TruncationPolicy::with_tol(1e-13)?;
    let specs = [
        ("torus", torus_like(ManifoldKind::Torus, 2, &[0])?),
        ("moebius", moebius_spec(&[0])?),
        ("klein", torus_like(ManifoldKind::Klein, 2, &[1])?),
    ];
    for (label, spec) in &specs {
        let params = RegKernelParams::new(1.0, spec.dim())?;
        for _ in 0..cfg.periodized_points {
            let t = rng.gen_range(cfg.t_range.0.max(2.0 * h)..cfg.t_range.1);
            let x: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(0.05..0.95)).collect();
            let f = |y: &[f64], s: f64| manifold_kernel(y, s, spec, &params, &policy);
            let r1 = pde_residual(f, &x, t, &params, h)?.norm();
            let r2 = pde_residual(f, &x, t, &params, h / 2.0)?.norm();
            out.push(ratio_case(
                "pde",
                format!("{label} t={t:.4} x={x:.3?}"),
                r1 / r2,
                cfg.ratio_halfwidth,
            ));
        }
    }
    Ok(out)
}

/// Torus or Klein spec on the unit square/cube lattice.
fn torus_like(kind: ManifoldKind, n: usize, spin: &[usize]) -> Result<ManifoldSpec> {
    ManifoldSpec::new(kind, Lattice::cubic(n, 1.0)?, SpinStructure::from_indices(n, spin)?)
}

fn moebius_spec(pin: &[usize]) -> Result<ManifoldSpec> {
    ManifoldSpec::new(
        ManifoldKind::Moebius,
        lattice_from_basis(vec![vec![1.0, 0.0]])?,
        SpinStructure::from_indices(1, pin)?,
    )
}

/// `∫_ℝⁿ e(x, t) dx` by the trapezoid rule on one axis, using that the
/// kernel is a product of one-dimensional Gaussians.
pub fn quadrature_mass(params: &RegKernelParams, t: f64) -> Result<Complex64> {
    let n = params.dim();
    let mut y = vec![0.0; n];
    let peak = eval_regularized(&y, t, params)?;
    let half = (60.0 / params.decay_rate(t)).sqrt();
    let steps = 6000;
    let h = 2.0 * half / steps as f64;
    let mut acc = crate::sum::CompensatedSum::new();
    for j in 0..=steps {
        y[0] = -half + j as f64 * h;
        let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
        acc.add(eval_regularized(&y, t, params)? / peak * (w * h));
    }
    Ok(peak * acc.value().powu(n as u32))
}

fn mass_suite(cfg: &MassConfig) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for &(eps, n) in &cfg.cases {
        let params = RegKernelParams::new(eps, n)?;
        let closed = mass_constant(&params);
        let mut values = Vec::new();
        for &t in &cfg.times {
            let q = quadrature_mass(&params, t)?;
            out.push(case(
                "mass",
                format!("eps={eps} n={n} t={t} quadrature vs closed form"),
                (q - closed).norm() / closed.norm(),
                cfg.rel_tol,
            ));
            values.push(q);
        }
        let spread = values
            .iter()
            .map(|v| (v - values[0]).norm() / values[0].norm())
            .fold(0.0, f64::max);
        out.push(case("mass", format!("eps={eps} n={n} t-independence"), spread, cfg.rel_tol));
    }
    Ok(out)
}

fn periodicity_suite(cfg: &PeriodicityConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let policy = TruncationPolicy::with_tol(cfg.abs_tol)?;
    let mut out = Vec::new();
    for &n in &cfg.dims {
        let lattice = lattice_from_basis(reference_basis(n))?;
        let params = RegKernelParams::new(cfg.epsilon, n)?;
        for spin in SpinStructure::all(n) {
            let spec = ManifoldSpec::torus(lattice.clone(), spin)?;
            let mut worst: f64 = 0.0;
            for _ in 0..cfg.points {
                let coords: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let x = lattice.point_from_coordinates(&coords);
                let base = manifold_kernel(&x, cfg.t, &spec, &params, &policy)?;
                for (j, v) in lattice.basis().iter().enumerate() {
                    let shifted: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
                    let chi = if spin.contains(j) { -1.0 } else { 1.0 };
                    let moved = manifold_kernel(&shifted, cfg.t, &spec, &params, &policy)?;
                    worst = worst.max((moved - base * chi).norm() / (1.0 + base.norm()));
                }
            }
            out.push(case(
                "periodicity",
                format!("torus n={n} spin={:?}", spin.indices()),
                worst,
                cfg.rel_tol,
            ));
        }
    }
    // Deck-transformation relations P(g_m x) = χ(m) P(x) on the twisted kinds.
    let twisted = [
        ("moebius", moebius_spec(&[])?),
        ("moebius", moebius_spec(&[0])?),
        ("klein", torus_like(ManifoldKind::Klein, 2, &[])?),
        ("klein", torus_like(ManifoldKind::Klein, 2, &[0, 1])?),
        ("klein", torus_like(ManifoldKind::Klein, 3, &[2])?),
    ];
    for (label, spec) in &twisted {
        let n = spec.dim();
        let k = spec.lattice().rank();
        let params = RegKernelParams::new(cfg.epsilon, n)?;
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.points {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let m: Vec<i64> = (0..k).map(|_| rng.gen_range(-2..=2)).collect();
            let chi = spec.spin().character(&m)? as f64;
            let base = manifold_kernel(&x, cfg.t, spec, &params, &policy)?;
            let moved = manifold_kernel(&spec.act(&m, &x), cfg.t, spec, &params, &policy)?;
            worst = worst.max((moved - base * chi).norm() / (1.0 + base.norm()));
        }
        out.push(case(
            "periodicity",
            format!("{label} n={n} pin={:?} identification", spec.spin().indices()),
            worst,
            cfg.rel_tol,
        ));
    }
    Ok(out)
}

fn crossval_suite(cfg: &CrossvalConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let policy = TruncationPolicy::default();
    let mut out = Vec::new();
    for &n in &cfg.dims {
        let params = RegKernelParams::new(cfg.epsilon, n)?;
        for mask in [0u32, 1] {
            let spec = torus_2pi(n, mask)?;
            let u0 = make_grid(&spec, cfg.grid, random_trig_poly(rng, n, mask, 2))?;
            for &t in &cfg.times {
                let a = apply_spectral(&u0, t, &params)?;
                let b = apply_convolution(&u0, t, &params, &policy)?;
                out.push(case(
                    "crossval",
                    format!("n={n} spin_mask={mask:#b} t={t}"),
                    a.sub(&b)?.sup_norm() / a.sup_norm(),
                    cfg.rel_tol,
                ));
            }
        }
    }
    Ok(out)
}

fn contraction_suite(cfg: &ContractionConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let mut inputs: Vec<GridFunction> = Vec::new();
    for i in 0..cfg.functions {
        let (n, grid) = if i % 2 == 0 { (1, 64) } else { (2, 32) };
        let mask = ((i / 2) % 2) as u32;
        let spec = torus_2pi(n, mask)?;
        inputs.push(make_grid(&spec, grid, random_trig_poly(rng, n, mask, 3))?);
    }
    let mut out = Vec::new();
    for &t in &cfg.times {
        for &p in &cfg.p_values {
            let mut worst: f64 = 0.0;
            for u in &inputs {
                let params = RegKernelParams::new(cfg.epsilon, u.spec().dim())?;
                let inv_kappa = if cfg.corrupt_multiplier {
                    c64(-cfg.epsilon, -1.0)
                } else {
                    params.inv_kappa()
                };
                let v = apply_spectral_with(u, t, inv_kappa, &params)?;
                worst = worst.max(lp_norm(&v, p)? / lp_norm(u, p)?);
            }
            out.push(case(
                "contraction",
                format!("max ||G_t u||_p/||u||_p p={p} t={t}"),
                worst,
                1.0 + cfg.rel_tol,
            ));
        }
        let mut worst: f64 = 0.0;
        for (n, mask) in [(1usize, 0u32), (1, 1), (2, 0), (2, 1)] {
            let params = RegKernelParams::new(cfg.epsilon, n)?;
            let data = SpectralData::new(&torus_2pi(n, mask)?, if n == 1 { 64 } else { 32 })?;
            let mults: Vec<Complex64> = if cfg.corrupt_multiplier {
                data.eigenvalues()
                    .iter()
                    .map(|&l| (-c64(-cfg.epsilon, -1.0) * (t * l)).exp())
                    .collect()
            } else {
                data.multipliers(t, &params)
            };
            for (m, &l) in mults.iter().zip(data.eigenvalues()) {
                worst = worst.max((m.norm() - (-cfg.epsilon * l * t).exp()).abs());
            }
        }
        out.push(case(
            "contraction",
            format!("multiplier modulus identity t={t}"),
            worst,
            cfg.modulus_tol,
        ));
    }
    Ok(out)
}

fn semigroup_suite(cfg: &SemigroupConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let spec = torus_2pi(2, 0b10)?;
    let params = RegKernelParams::new(cfg.epsilon, 2)?;
    let u = make_grid(&spec, cfg.grid, random_trig_poly(rng, 2, 0b10, 3))?;
    let norm = lp_norm(&u, 2.0)?;
    let mut out = Vec::new();
    for &s in &cfg.times {
        for &t in &cfg.times {
            let direct = apply_spectral(&u, s + t, &params)?;
            let composed = apply_spectral(&apply_spectral(&u, t, &params)?, s, &params)?;
            out.push(case(
                "semigroup",
                format!("G_(s+t) = G_s G_t s={s} t={t}"),
                lp_norm(&direct.sub(&composed)?, 2.0)? / norm,
                cfg.rel_tol,
            ));
        }
    }
    let t = cfg.times[0];
    let a = spectral_laplacian(&apply_spectral(&u, t, &params)?)?;
    let b = apply_spectral(&spectral_laplacian(&u)?, t, &params)?;
    out.push(case(
        "semigroup",
        format!("Laplacian commutes with G_t t={t}"),
        a.sub(&b)?.sup_norm() / a.sup_norm(),
        cfg.commutation_tol,
    ));
    // κ ∂ₜ Γ_t u = Σ∂² Γ_t u, centered difference in t.
    let lap = spectral_laplacian(&apply_spectral(&u, t, &params)?)?;
    let err = |dt: f64| -> Result<f64> {
        let plus = apply_spectral(&u, t + dt, &params)?;
        let minus = apply_spectral(&u, t - dt, &params)?;
        let dtv = plus.sub(&minus)?.scale(params.kappa() / (2.0 * dt));
        Ok(dtv.sub(&lap)?.sup_norm())
    };
    let dt = 1e-2;
    out.push(ratio_case(
        "semigroup",
        format!("kappa d/dt G_t u = Laplacian G_t u, step ratio t={t}"),
        err(dt)? / err(dt / 2.0)?,
        0.5,
    ));
    Ok(out)
}

/// Random real bump `(c₀ + ⟨b,y⟩ + yᵀAy)·exp(−|y|²/(2σ²))` near the origin.
pub fn random_bump(rng: &mut ChaCha8Rng, n: usize) -> Result<GaussianBump> {
    let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let sigma = rng.gen_range(0.3..0.6);
    let c0 = rng.gen_range(-1.0..1.0);
    let linear: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let quadratic: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    GaussianBump::new(center, sigma, c0, linear, quadratic)
}

fn dissipativity_suite(cfg: &DissipativityConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let bumps: Vec<GaussianBump> = (0..cfg.functions)
        .map(|i| random_bump(rng, 1 + i % 2))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &p in &cfg.p_values {
        let mut worst = f64::NEG_INFINITY;
        for b in &bumps {
            let dom = if b.center.len() == 1 {
                FlatBox::cube(1, 6.0, 4000)
            } else {
                FlatBox::cube(2, 6.0, 300)
            };
            worst = worst.max(dissipativity_pairing(b, p, &dom)?);
        }
        out.push(case(
            "dissipativity",
            format!("max Re<|u|^(p-2)u, Laplacian u> p={p}"),
            worst,
            cfg.tol,
        ));
    }
    Ok(out)
}

fn recovery_suite(cfg: &RecoveryConfig) -> Result<Vec<CaseResult>> {
    let spec = torus_2pi(1, 0)?;
    let params = RegKernelParams::new(cfg.epsilon, 1)?;
    let amp = cfg.amplitude;
    let u0 = make_grid(&spec, cfg.grid, |x| c64(1.0 + amp * x[0].cos(), 0.0))?;
    let mut out = Vec::new();
    for &p in &cfg.p_values {
        let gaps: Vec<f64> = cfg
            .times
            .iter()
            .map(|&t| lp_norm(&apply_spectral(&u0, t, &params)?.sub(&u0)?, p))
            .collect::<Result<_>>()?;
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        let last = *gaps.last().unwrap_or(&f64::INFINITY);
        out.push(CaseResult {
            suite: "recovery".into(),
            case: format!("||G_t u0 - u0||_p decreasing over {:?}, final p={p}", cfg.times),
            measured: last,
            tolerance: cfg.tol,
            pass: decreasing && last <= cfg.tol,
        });
    }
    // Decay diagnostic: ‖v(t)‖₂ ≤ a e^{−|κ| b t} fitted on a trajectory of
    // the mean-free part.
    let v0 = make_grid(&spec, cfg.grid, |x| c64(amp * x[0].cos(), 0.0))?;
    let times: Vec<f64> = (0..6).map(|k| 0.2 * k as f64).collect();
    let norms: Vec<f64> = times
        .iter()
        .map(|&t| lp_norm(&apply_spectral(&v0, t, &params)?, 2.0))
        .collect::<Result<_>>()?;
    let fit = fit_decay(&times, &norms, &params)?;
    out.push(CaseResult {
        suite: "recovery".into(),
        case: format!("decay fit a={:.6e} (diagnostic, reports b)", fit.a),
        measured: fit.b,
        tolerance: f64::MAX,
        pass: fit.a.is_finite() && fit.b.is_finite(),
    });
    Ok(out)
}

/// `exp(−1/(1−s²))` on `|s| < 1`.
pub fn smooth_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Space-time test function `φ(x, t)`.
pub type SpaceTimeFn = Box<dyn Fn(&[f64], f64) -> f64 + Sync>;

/// Test functions for the weak-limit study: products of a spatial bump
/// inside the unit cell and a temporal bump filling `window`.
pub fn limit_test_functions(window: (f64, f64)) -> Vec<SpaceTimeFn> {
    let (t0, t1) = window;
    let tc = 0.5 * (t0 + t1);
    let tw = 0.5 * (t1 - t0);
    let specs = [(0.5, 0.3, 0.0), (0.4, 0.25, 1.0), (0.6, 0.35, 2.0)];
    specs
        .iter()
        .map(|&(xc, xw, tilt)| {
            Box::new(move |x: &[f64], t: f64| {
                smooth_bump((x[0] - xc) / xw) * smooth_bump((t - tc) / tw) * (1.0 + tilt * (x[0] - xc))
            }) as SpaceTimeFn
        })
        .collect()
}

fn limit_suite(cfg: &LimitConfig) -> Result<Vec<CaseResult>> {
    let spec = torus_like(ManifoldKind::Torus, 1, &[])?;
    let eps: Vec<f64> = (1..=cfg.levels).map(|k| 2f64.powi(-(k as i32))).collect();
    let policy = TruncationPolicy::with_tol(cfg.abs_tol)?;
    let mut out = Vec::new();
    for (i, phi) in limit_test_functions(cfg.window).iter().enumerate() {
        let report = weak_limit_pairings(&spec, phi, &eps, cfg.window, cfg.grid, cfg.time_steps, &policy)?;
        let worst = report.tail_ratios().into_iter().fold(0.0, f64::max);
        out.push(CaseResult {
            suite: "limit".into(),
            case: format!("test function {i}: last |D_k| ratios < 1"),
            measured: worst,
            tolerance: 1.0,
            pass: report.is_contracting(),
        });
    }
    Ok(out)
}

fn random_integer_multivector(rng: &mut ChaCha8Rng, n: usize) -> Result<Multivector> {
    let coeffs = (0..1usize << n)
        .map(|_| c64(rng.gen_range(-5..=5) as f64, rng.gen_range(-5..=5) as f64))
        .collect();
    Multivector::from_coeffs(n, coeffs)
}

type ScalarField = (fn(&[f64]) -> Complex64, fn(&[f64]) -> Complex64);

/// Smooth scalar fields on `ℝ²` with their Laplacians.
pub fn dirac_test_fields() -> Vec<(&'static str, ScalarField)> {
    vec![
        (
            "sin(2x)cos(3y)",
            (
                |x: &[f64]| c64((2.0 * x[0]).sin() * (3.0 * x[1]).cos(), 0.0),
                |x: &[f64]| c64(-13.0 * (2.0 * x[0]).sin() * (3.0 * x[1]).cos(), 0.0),
            ),
        ),
        (
            "exp(x + y/2)",
            (
                |x: &[f64]| c64((x[0] + 0.5 * x[1]).exp(), 0.0),
                |x: &[f64]| c64(1.25 * (x[0] + 0.5 * x[1]).exp(), 0.0),
            ),
        ),
        (
            "sin(xy) + i cos(x)",
            (
                |x: &[f64]| c64((x[0] * x[1]).sin(), x[0].cos()),
                |x: &[f64]| c64(-(x[0] * x[0] + x[1] * x[1]) * (x[0] * x[1]).sin(), -x[0].cos()),
            ),
        ),
    ]
}

/// `sup |D_h(D_h u) + Δu|` over the nodes of the coarse result, on grids with
/// `points` and `2·points − 1` nodes over `[0, 1]²`; returns the ratio.
pub fn dirac_halving_ratio(field: ScalarField, points: usize) -> Result<f64> {
    let (f, lap) = field;
    let err = |m: usize, stride: usize| -> Result<f64> {
        let h = 1.0 / (m - 1) as f64;
        let g = MultivectorGrid::sample_scalar(&[m, m], &[0.0, 0.0], h, f)?;
        let dd = dirac_fd(&dirac_fd(&g)?)?;
        let shape = dd.shape().to_vec();
        let mut worst: f64 = 0.0;
        // dd node r sits at original node r + 2; keep the nodes of the coarse
        // result only.
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                let on_coarse = |o: usize| o % stride == 0 && (2..=points - 3).contains(&(o / stride));
                if !on_coarse(i + 2) || !on_coarse(j + 2) {
                    continue;
                }
                let v = dd.get(&[i, j]);
                let x = dd.point(&[i, j]);
                let mut residual = v.clone();
                residual.set(0, v.scalar_part() + lap(&x))?;
                worst = worst.max(residual.max_abs());
            }
        }
        Ok(worst)
    };
    Ok(err(points, 1)? / err(2 * points - 1, 2)?)
}

fn clifford_suite(cfg: &CliffordConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for n in 1..=cfg.max_dim {
        let mut anti: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let ei = Multivector::generator(n, i)?;
                let ej = Multivector::generator(n, j)?;
                let mut s = &(&ei * &ej) + &(&ej * &ei);
                if i == j {
                    s = &s + &Multivector::scalar(n, c64(2.0, 0.0))?;
                }
                anti = anti.max(s.max_abs());
            }
        }
        out.push(case("clifford", format!("n={n} e_i e_j + e_j e_i = -2 delta_ij"), anti, 0.0));
        let mut assoc: f64 = 0.0;
        for _ in 0..cfg.samples {
            let a = random_integer_multivector(rng, n)?;
            let b = random_integer_multivector(rng, n)?;
            let c = random_integer_multivector(rng, n)?;
            assoc = assoc.max((&(&(&a * &b) * &c) - &(&a * &(&b * &c))).max_abs());
        }
        out.push(case("clifford", format!("n={n} associativity (ab)c = a(bc)"), assoc, 0.0));
    }
    for (label, field) in dirac_test_fields() {
        out.push(ratio_case(
            "clifford",
            format!("D_h D_h u + Laplacian u halving ratio, u = {label}"),
            dirac_halving_ratio(field, cfg.grid)?,
            cfg.ratio_halfwidth,
        ));
    }
    Ok(out)
}

fn random_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let x = random_in_ball(rng, n, 1.0);
        let r = crate::geometry::norm(&x);
        if r > 0.1 {
            return x.into_iter().map(|v| v / r).collect();
        }
    }
}

/// Degree-`l` spherical harmonics on `S²`, polynomial extension and
/// 0-homogeneous extension, with `max |Y|` on the sphere.
pub fn sphere_harmonics() -> Vec<(u32, AmbientFunction, AmbientFunction, f64)> {
    let homog = |f: fn(&[f64]) -> f64| {
        move |x: &[f64]| {
            let r = crate::geometry::norm(x);
            let y: Vec<f64> = x.iter().map(|v| v / r).collect();
            c64(f(&y), 0.0)
        }
    };
    let y1: fn(&[f64]) -> f64 = |x| x[0];
    let y2: fn(&[f64]) -> f64 = |x| x[0] * x[1];
    vec![
        (
            1,
            AmbientFunction::new(3, move |x| c64(y1(x), 0.0)),
            AmbientFunction::new(3, homog(y1)),
            1.0,
        ),
        (
            2,
            AmbientFunction::new(3, move |x| c64(y2(x), 0.0)),
            AmbientFunction::new(3, homog(y2)),
            0.5,
        ),
    ]
}

fn guenter_suite(cfg: &GuenterConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CaseResult>> {
    let points: Vec<Vec<f64>> = (0..cfg.points).map(|_| random_unit_vector(rng, 3)).collect();
    let mut out = Vec::new();
    for (l, poly, homog, max_y) in sphere_harmonics() {
        let eig = (l * (l + 1)) as f64;
        let mut worst: f64 = 0.0;
        let mut ext: f64 = 0.0;
        let mut tangential: f64 = 0.0;
        for x in &points {
            let lap = guenter_laplacian(&poly, x, cfg.step)?;
            worst = worst.max((lap + poly.eval(x) * eig).norm() / max_y);
            for j in 0..3 {
                let a = guenter_derivative(j, &poly, x, cfg.step)?;
                let b = guenter_derivative(j, &homog, x, cfg.step)?;
                ext = ext.max((a - b).norm());
            }
            let g = guenter_gradient(&homog, x, cfg.step)?;
            let radial: Complex64 = g.iter().zip(x).map(|(d, v)| d * v).sum();
            tangential = tangential.max(radial.norm());
        }
        out.push(case(
            "guenter",
            format!("n=3 l={l} |Delta_G Y + l(l+1) Y| / max|Y|"),
            worst,
            cfg.rel_tol,
        ));
        out.push(case(
            "guenter",
            format!("n=3 l={l} polynomial vs 0-homogeneous extension"),
            ext,
            cfg.extension_tol,
        ));
        out.push(case(
            "guenter",
            format!("n=3 l={l} tangentiality sum nu_j D_j f"),
            tangential,
            1e-12,
        ));
    }
    Ok(out)
}
