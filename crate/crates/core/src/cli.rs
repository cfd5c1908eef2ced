//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a computation fails (or a verification
//! report does not pass), 2 for usage and configuration errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lattice_from_basis, ManifoldKind, ManifoldSpec, SpinStructure};
use crate::kernel::{eval_limit, eval_regularized, RegKernelParams};
use crate::periodize::{manifold_kernel, TruncationPolicy};
use crate::semigroup::{
    apply_convolution, apply_spectral, lp_norm, make_grid_with_box, GridFunction,
    TransverseBox,
};
use crate::verify::{run_verification, VerifyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spectral,
    Kernel,
}

/// Initial data for `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `exp(−|x − center|²/(2·width²))`; the center defaults to the middle of
    /// the fundamental domain.
    Gaussian {
        #[serde(default)]
        center: Option<Vec<f64>>,
        width: f64,
    },
    /// Samples read from a grid CSV in node order.
    Csv { path: PathBuf },
}

/// JSON run configuration; every field is optional and command-line flags
/// take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    /// 1-based generator indices carrying the sign `−1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spin: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transverse_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transverse_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "flatkern", version, about = "Regularized Schrödinger kernels on flat manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the regularized kernel on R^n.
    Kernel(CommonArgs),
    /// Evaluate a periodized kernel on a torus, cylinder, Möbius strip or Klein bottle.
    Periodize(CommonArgs),
    /// Evolve initial data and write the solution grid as CSV.
    Solve(CommonArgs),
    /// Run verification suites and write a JSON report.
    Verify(VerifyArgs),
    /// Kernel values along eps = 2^-k, k = 1..levels, followed by the eps -> 0 kernel.
    Limit(LimitArgs),
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// Spatial dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Regularization parameter epsilon > 0.
    #[arg(long)]
    eps: Option<f64>,
    /// Evaluation time.
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// Evaluation point, comma-separated; repeat for several points.
    #[arg(long, allow_hyphen_values = true)]
    x: Vec<String>,
    #[arg(long)]
    manifold: Option<ManifoldKind>,
    /// Lattice basis rows, e.g. "1,0;0,1".
    #[arg(long, allow_hyphen_values = true)]
    basis: Option<String>,
    /// 1-based generator indices with sign -1, comma-separated.
    #[arg(long)]
    spin: Option<String>,
    /// Truncation tolerance for lattice sums.
    #[arg(long)]
    tol: Option<f64>,
    /// Grid resolution per lattice direction.
    #[arg(long)]
    grid: Option<usize>,
    /// L_p exponents reported by `solve`, comma-separated.
    #[arg(long)]
    p: Option<String>,
    /// Output times, comma-separated.
    #[arg(long)]
    times: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct LimitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of epsilon levels.
    #[arg(long, default_value_t = 8)]
    levels: u32,
}

impl clap::ValueEnum for ManifoldKind {
    fn value_variants<'a>() -> &'a [Self] {
        &[Self::Torus, Self::Cylinder, Self::Moebius, Self::Klein]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Self::Torus => "torus",
            Self::Cylinder => "cylinder",
            Self::Moebius => "moebius",
            Self::Klein => "klein",
        }))
    }
}

/// Failure of a command, tagged with its exit code.
#[derive(Debug)]
enum Failure {
    Usage(Error),
    Compute(Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Usage(e) | Failure::Compute(e) => e,
        }
    }
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn compute<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Compute)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("cannot parse `{v}` as a number: {e}")))
        })
        .collect()
}

/// `"1,0;0,1"` → rows.
pub fn parse_basis(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_list).collect()
}

/// 1-based indices → 0-based.
pub fn parse_spin(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|v| match v.trim().parse::<usize>() {
            Ok(i) if i >= 1 => Ok(i),
            _ => Err(Error::Config(format!(
                "spin indices are 1-based positive integers, got `{v}`"
            ))),
        })
        .collect()
}

/// Shortest round-trip decimal rendering.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_header(n: usize) -> String {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    cols.extend(["t", "re", "im"].map(String::from));
    cols.join(",")
}

pub fn csv_row(x: &[f64], t: f64, z: Complex64) -> String {
    let mut cols: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
    cols.push(fmt_f64(t));
    cols.push(fmt_f64(z.re));
    cols.push(fmt_f64(z.im));
    cols.join(",")
}

/// A parsed grid CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub dim: usize,
    pub rows: Vec<(Vec<f64>, f64, Complex64)>,
}

impl CsvTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: vec![] }
    }

    pub fn push(&mut self, x: &[f64], t: f64, z: Complex64) {
        self.rows.push((x.to_vec(), t, z));
    }

    pub fn render(&self) -> String {
        let mut s = csv_header(self.dim);
        s.push('\n');
        for (x, t, z) in &self.rows {
            s.push_str(&csv_row(x, *t, *z));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 4 {
            return Err(Error::Config(format!("CSV header `{header}` has too few columns")));
        }
        let dim = cols.len() - 3;
        if header != csv_header(dim) {
            return Err(Error::Config(format!(
                "CSV header `{header}` does not match `{}`",
                csv_header(dim)
            )));
        }
        let mut table = Self::new(dim);
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let vals = parse_list(line).map_err(|e| Error::Config(format!("CSV line {}: {e}", i + 2)))?;
            if vals.len() != dim + 3 {
                return Err(Error::Config(format!(
                    "CSV line {}: expected {} columns, got {}",
                    i + 2,
                    dim + 3,
                    vals.len()
                )));
            }
            table.push(&vals[..dim], vals[dim], Complex64::new(vals[dim + 1], vals[dim + 2]));
        }
        Ok(table)
    }
}

/// Fully resolved settings for the evaluation commands.
struct Resolved {
    config: RunConfig,
    n: usize,
}

fn resolve(args: &CommonArgs) -> Result<Resolved> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if args.n.is_some() {
        config.dimension = args.n;
    }
    if args.eps.is_some() {
        config.epsilon = args.eps;
    }
    if args.t.is_some() {
        config.t = args.t;
    }
    if !args.x.is_empty() {
        config.points = Some(args.x.iter().map(|s| parse_list(s)).collect::<Result<_>>()?);
    }
    if args.manifold.is_some() {
        config.manifold = args.manifold;
    }
    if let Some(b) = &args.basis {
        config.basis = Some(parse_basis(b)?);
    }
    if let Some(s) = &args.spin {
        config.spin = Some(parse_spin(s)?);
    }
    if args.tol.is_some() {
        config.tolerance = args.tol;
    }
    if args.grid.is_some() {
        config.grid = args.grid;
    }
    if let Some(p) = &args.p {
        config.p_values = Some(parse_list(p)?);
    }
    if let Some(t) = &args.times {
        config.times = Some(parse_list(t)?);
    }
    if args.method.is_some() {
        config.method = args.method;
    }
    if args.out.is_some() {
        config.output = args.out.clone();
    }
    let n = config
        .dimension
        .or_else(|| config.basis.as_ref().and_then(|b| b.first().map(|r| r.len())))
        .or_else(|| config.points.as_ref().and_then(|p| p.first().map(|r| r.len())))
        .ok_or_else(|| Error::Config("dimension not given (use --n)".into()))?;
    if n == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    Ok(Resolved { config, n })
}

impl Resolved {
    fn params(&self) -> Result<RegKernelParams> {
        let eps = self
            .config
            .epsilon
            .ok_or_else(|| Error::Config("epsilon not given (use --eps)".into()))?;
        RegKernelParams::new(eps, self.n)
    }

    fn policy(&self) -> Result<TruncationPolicy> {
        TruncationPolicy::with_tol(self.config.tolerance.unwrap_or(TruncationPolicy::default().abs_tol))
    }

    fn spec(&self) -> Result<ManifoldSpec> {
        let n = self.n;
        let kind = self.config.manifold.unwrap_or(ManifoldKind::Torus);
        let basis = match &self.config.basis {
            Some(b) => b.clone(),
            None => {
                let k = match kind {
                    ManifoldKind::Torus | ManifoldKind::Klein => n,
                    ManifoldKind::Cylinder | ManifoldKind::Moebius => n.saturating_sub(1),
                };
                (0..k)
                    .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect()
            }
        };
        for row in &basis {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "basis row {row:?} has {} entries, dimension is {n}",
                    row.len()
                )));
            }
        }
        let lattice = lattice_from_basis(basis)?;
        let k = lattice.rank();
        let spin: Vec<usize> = self
            .config
            .spin
            .clone()
            .unwrap_or_default()
            .into_iter()
            .map(|i| i.checked_sub(1).ok_or_else(|| Error::Config("spin indices are 1-based".into())))
            .collect::<Result<_>>()?;
        ManifoldSpec::new(kind, lattice, SpinStructure::from_indices(k, &spin)?)
    }

    fn points(&self) -> Result<Vec<Vec<f64>>> {
        let pts = self
            .config
            .points
            .clone()
            .ok_or_else(|| Error::Config("no evaluation point given (use --x)".into()))?;
        for p in &pts {
            if p.len() != self.n {
                return Err(Error::Config(format!(
                    "point {p:?} has {} coordinates, dimension is {}",
                    p.len(),
                    self.n
                )));
            }
        }
        Ok(pts)
    }

    fn times(&self) -> Result<Vec<f64>> {
        match (&self.config.times, self.config.t) {
            (Some(ts), _) => Ok(ts.clone()),
            (None, Some(t)) => Ok(vec![t]),
            (None, None) => Err(Error::Config("no time given (use --t or --times)".into())),
        }
    }

    fn transverse(&self, spec: &ManifoldSpec, grid: usize) -> Result<Option<TransverseBox>> {
        if spec.lattice().rank() == spec.dim() {
            return Ok(None);
        }
        Ok(Some(TransverseBox::new(
            self.config.transverse_half_width.unwrap_or(2.0),
            self.config.transverse_grid.unwrap_or(grid),
        )?))
    }
}

fn write_output(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => stdout.write_all(text.as_bytes()).map_err(Error::from),
    }
}

fn cmd_kernel(args: &CommonArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let r = usage(resolve(args))?;
    let params = usage(r.params())?;
    let points = usage(r.points())?;
    let times = usage(r.times())?;
    let mut table = CsvTable::new(r.n);
    for &t in &times {
        for x in &points {
            table.push(x, t, compute(eval_regularized(x, t, &params))?);
        }
    }
    compute(write_output(r.config.output.as_deref(), &table.render(), stdout))
}

fn periodize_points(r: &Resolved, spec: &ManifoldSpec) -> Result<Vec<Vec<f64>>> {
    if r.config.points.is_some() {
        return r.points();
    }
    let grid = r
        .config
        .grid
        .ok_or_else(|| Error::Config("give evaluation points with --x or a grid with --grid".into()))?;
    let box_ = r.transverse(spec, grid)?;
    Ok(make_grid_with_box(spec, grid, box_, |_| Complex64::new(0.0, 0.0))?.points())
}

fn cmd_periodize(args: &CommonArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let r = usage(resolve(args))?;
    let params = usage(r.params())?;
    let policy = usage(r.policy())?;
    let spec = usage(r.spec())?;
    let points = usage(periodize_points(&r, &spec))?;
    let times = usage(r.times())?;
    let mut table = CsvTable::new(r.n);
    for &t in &times {
        for x in &points {
            table.push(x, t, compute(manifold_kernel(x, t, &spec, &params, &policy))?);
        }
    }
    compute(write_output(r.config.output.as_deref(), &table.render(), stdout))
}

fn initial_grid(r: &Resolved, spec: &ManifoldSpec, grid: usize) -> Result<GridFunction> {
    let box_ = r.transverse(spec, grid)?;
    let shortest = spec
        .lattice()
        .basis()
        .iter()
        .map(|v| crate::geometry::norm(v))
        .fold(f64::INFINITY, f64::min);
    let initial = r.config.initial.clone().unwrap_or(InitialData::Gaussian {
        center: None,
        width: 0.1 * shortest,
    });
    match initial {
        InitialData::Gaussian { center, width } => {
            if !(width > 0.0) {
                return Err(Error::Config("initial.width must be positive".into()));
            }
            let center = match center {
                Some(c) if c.len() == spec.dim() => c,
                Some(c) => {
                    return Err(Error::Config(format!(
                        "initial.center has {} coordinates, dimension is {}",
                        c.len(),
                        spec.dim()
                    )))
                }
                None => spec
                    .lattice()
                    .point_from_coordinates(&vec![0.5; spec.lattice().rank()]),
            };
            make_grid_with_box(spec, grid, box_, |x| {
                let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                Complex64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
            })
        }
        InitialData::Csv { path } => {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let table = CsvTable::parse(&text)?;
            let shape = make_grid_with_box(spec, grid, box_, |_| Complex64::new(0.0, 0.0))?;
            if table.dim != spec.dim() || table.rows.len() != shape.len() {
                return Err(Error::Config(format!(
                    "{}: expected {} rows in dimension {}, got {} rows in dimension {}",
                    path.display(),
                    shape.len(),
                    spec.dim(),
                    table.rows.len(),
                    table.dim
                )));
            }
            for (i, (x, _, _)) in table.rows.iter().enumerate() {
                let node = shape.point(i);
                if x.iter().zip(&node).any(|(a, b)| (a - b).abs() > 1e-9) {
                    return Err(Error::Config(format!(
                        "{}: row {} is at {x:?}, expected grid node {node:?}",
                        path.display(),
                        i + 2
                    )));
                }
            }
            let samples = table.rows.iter().map(|r| r.2).collect();
            GridFunction::from_samples(spec, grid, box_, samples)
        }
    }
}

fn cmd_solve(
    args: &CommonArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let r = usage(resolve(args))?;
    let params = usage(r.params())?;
    let policy = usage(r.policy())?;
    let spec = usage(r.spec())?;
    let grid = r.config.grid.unwrap_or(32);
    let times = usage(r.times())?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Failure::Usage(Error::Config(format!("solve times must be >= 0, got {t}"))));
    }
    let method = r.config.method.unwrap_or(if spec.kind() == ManifoldKind::Torus {
        Method::Spectral
    } else {
        Method::Kernel
    });
    if method == Method::Spectral && spec.kind() != ManifoldKind::Torus {
        return Err(Failure::Usage(Error::Config(format!(
            "--method spectral needs a torus, got a {}; use --method kernel",
            spec.kind()
        ))));
    }
    let p_values = r.config.p_values.clone().unwrap_or_default();
    for &p in &p_values {
        if !(p >= 1.0) {
            return Err(Failure::Usage(Error::Config(format!("p must be >= 1, got {p}"))));
        }
    }
    let u0 = usage(initial_grid(&r, &spec, grid))?;
    let points = u0.points();
    let mut table = CsvTable::new(r.n);
    for &t in &times {
        let u = if t == 0.0 {
            u0.clone()
        } else {
            match method {
                Method::Spectral => compute(apply_spectral(&u0, t, &params))?,
                Method::Kernel => compute(apply_convolution(&u0, t, &params, &policy))?,
            }
        };
        for (x, &z) in points.iter().zip(u.samples()) {
            table.push(x, t, z);
        }
        for &p in &p_values {
            let norm = compute(lp_norm(&u, p))?;
            let _ = writeln!(stderr, "t={} p={} norm={}", fmt_f64(t), fmt_f64(p), fmt_f64(norm));
        }
    }
    compute(write_output(r.config.output.as_deref(), &table.render(), stdout))
}

fn cmd_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let (verify, seed) = match &args.config {
        Some(p) => {
            let c = usage(RunConfig::load(p))?;
            (c.verify.unwrap_or_default(), c.seed)
        }
        None => (VerifyConfig::standard(), None),
    };
    let seed = args.seed.or(seed).unwrap_or(0);
    let report = match run_verification(&args.suite, &verify, seed) {
        Ok(r) => r,
        Err(e @ Error::UnknownSuite(_)) => return Err(Failure::Usage(e)),
        Err(e) => return Err(Failure::Compute(e)),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    compute(write_output(args.out.as_deref(), &text, stdout))?;
    if report.pass {
        Ok(())
    } else {
        let failed = report.cases.iter().filter(|c| !c.pass).count();
        Err(Failure::Compute(Error::InvalidArgument(format!(
            "{failed} of {} verification cases failed",
            report.cases.len()
        ))))
    }
}

fn cmd_limit(args: &LimitArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let r = usage(resolve(&args.common))?;
    let points = usage(r.points())?;
    let times = usage(r.times())?;
    let policy = usage(r.policy())?;
    let periodic = r.config.manifold.is_some() || r.config.basis.is_some();
    let spec = if periodic { Some(usage(r.spec())?) } else { None };
    let mut text = format!("eps,{}\n", csv_header(r.n));
    for k in 1..=args.levels {
        let eps = 2f64.powi(-(k as i32));
        let params = usage(RegKernelParams::new(eps, r.n))?;
        for &t in &times {
            for x in &points {
                let z = match &spec {
                    Some(s) => compute(manifold_kernel(x, t, s, &params, &policy))?,
                    None => compute(eval_regularized(x, t, &params))?,
                };
                text.push_str(&format!("{},{}\n", fmt_f64(eps), csv_row(x, t, z)));
            }
        }
    }
    if spec.is_none() {
        for &t in &times {
            for x in &points {
                let z = compute(eval_limit(x, t, r.n))?;
                text.push_str(&format!("0.0,{}\n", csv_row(x, t, z)));
            }
        }
    }
    compute(write_output(r.config.output.as_deref(), &text, stdout))
}

/// Runs the command line `args` (including the program name) and returns
/// the exit code.
pub fn dispatch_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(rendered.as_bytes());
            } else {
                let _ = stderr.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Kernel(a) => cmd_kernel(a, stdout),
        Command::Periodize(a) => cmd_periodize(a, stdout),
        Command::Solve(a) => cmd_solve(a, stdout, stderr),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Limit(a) => cmd_limit(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.error());
            f.code()
        }
    }
}

pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    dispatch_with(args, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["flatkern"];
        full.extend_from_slice(args);
        let code = dispatch_with(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_list("0.5, -1,2e-3").unwrap(), vec![0.5, -1.0, 2e-3]);
        assert!(parse_list("0.5,a").is_err());
        assert_eq!(parse_basis("1,0;0,2").unwrap(), vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(parse_spin("1,3").unwrap(), vec![1, 3]);
        assert!(parse_spin("0").is_err());
        assert_eq!(parse_spin("").unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let mut t = CsvTable::new(2);
        t.push(&[0.1, 1.0 / 3.0], 0.25, Complex64::new(1e-300, -2.5e17));
        t.push(&[-0.0, 7.0], 1e-3, Complex64::new(f64::MIN_POSITIVE, std::f64::consts::PI));
        let text = t.render();
        assert!(text.starts_with("x1,x2,t,re,im\n"));
        assert!(!text.contains('\r'));
        let back = CsvTable::parse(&text).unwrap();
        assert_eq!(back.rows.len(), 2);
        for (a, b) in t.rows.iter().zip(&back.rows) {
            assert_eq!(a.1.to_bits(), b.1.to_bits());
            assert_eq!(a.2.re.to_bits(), b.2.re.to_bits());
            assert_eq!(a.2.im.to_bits(), b.2.im.to_bits());
            for (p, q) in a.0.iter().zip(&b.0) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(CsvTable::parse("").is_err());
        assert!(CsvTable::parse("a,b,c,d\n").is_err());
        assert!(CsvTable::parse("x1,t,re,im\n1,2,3\n").is_err());
    }

    #[test]
    fn kernel_command_matches_library() {
        let (code, out, _) = run(&["kernel", "--n", "1", "--eps", "1", "--x", "0", "--t", "0.0795775"]);
        assert_eq!(code, 0);
        let table = CsvTable::parse(&out).unwrap();
        let p = RegKernelParams::new(1.0, 1).unwrap();
        assert_eq!(table.rows[0].2, eval_regularized(&[0.0], 0.0795775, &p).unwrap());
    }

    #[test]
    fn negative_time_periodize_prints_zeros() {
        let (code, out, _) = run(&[
            "periodize", "--manifold", "torus", "--n", "2", "--eps", "1", "--t", "-1", "--x", "0.1,0.2", "--x",
            "0.5,0.5",
        ]);
        assert_eq!(code, 0);
        let table = CsvTable::parse(&out).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.2 == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(&["kernel", "--bogus"]).0, 2);
        assert_eq!(run(&["kernel", "--n", "1", "--eps", "0", "--x", "0", "--t", "1"]).0, 2);
        assert_eq!(run(&["kernel", "--n", "1", "--eps", "1", "--t", "1"]).0, 2);
        assert_eq!(run(&["verify", "--suite", "nope"]).0, 2);
        assert_eq!(
            run(&["periodize", "--manifold", "klein", "--basis", "1,0;0.5,1", "--eps", "1", "--t", "1", "--x", "0,0"]).0,
            2
        );
        // Radius cap exceeded: a computation failure.
        assert_eq!(
            run(&["periodize", "--n", "1", "--eps", "1e-6", "--t", "1e6", "--x", "0", "--tol", "1e-15"]).0,
            1
        );
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn run_config_rejects_unknown_fields_with_location() {
        let err = RunConfig::from_json("{\n  \"epsilon\": 1,\n  \"epsilonn\": 2\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
