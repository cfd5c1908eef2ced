//! Günter derivatives `𝒟ⱼ = ∂ⱼ − νⱼ∂_ν`, `ν(x) = x/|x|`, and the Günter
//! Laplacian `Δ_G = Σⱼ 𝒟ⱼ²` through the ambient formulation. On the unit
//! sphere `Δ_G` is the Laplace–Beltrami operator.

use num_complex::Complex64;

use crate::error::{check_dim, Error, Result};

type Evaluator = Box<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
type GradientEvaluator = Box<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>;

/// A function on a neighbourhood of the unit sphere in `ℝⁿ`, optionally with
/// its analytic gradient.
pub struct AmbientFunction {
    dim: usize,
    eval: Evaluator,
    grad: Option<GradientEvaluator>,
}

impl std::fmt::Debug for AmbientFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AmbientFunction")
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl AmbientFunction {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Box::new(eval),
            grad: None,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'static,
    {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        (self.eval)(x)
    }

    /// Same evaluator with the analytic gradient dropped, forcing the
    /// finite-difference path.
    pub fn gradient_free(self) -> Self {
        Self { grad: None, ..self }
    }
}

fn normal(x: &[f64]) -> Result<Vec<f64>> {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(r > 0.0) {
        return Err(Error::Singular(
            "the normal x/|x| is undefined at the origin".into(),
        ));
    }
    Ok(x.iter().map(|v| v / r).collect())
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step must be positive, got {h}")))
    }
}

fn fd_gradient<F: Fn(&[f64]) -> Complex64>(f: F, x: &[f64], h: f64) -> Vec<Complex64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let plus = f(&probe);
            probe[j] = x[j] - h;
            let minus = f(&probe);
            probe[j] = x[j];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `(𝒟₁f, …, 𝒟ₙf)` from a gradient.
fn project(grad: &[Complex64], nu: &[f64]) -> Vec<Complex64> {
    let dnu: Complex64 = grad.iter().zip(nu).map(|(g, v)| g * v).sum();
    grad.iter().zip(nu).map(|(g, v)| g - dnu * v).collect()
}

fn gradient(f: &AmbientFunction, x: &[f64], h: f64) -> Vec<Complex64> {
    match &f.grad {
        Some(g) => g(x),
        None => fd_gradient(|y| f.eval(y), x, h),
    }
}

/// All Günter derivatives at `x`.
pub fn guenter_gradient(f: &AmbientFunction, x: &[f64], h: f64) -> Result<Vec<Complex64>> {
    check_dim(f.dim, x.len())?;
    check_step(h)?;
    let nu = normal(x)?;
    Ok(project(&gradient(f, x, h), &nu))
}

/// `𝒟ⱼf(x) = ∂ⱼf(x) − νⱼ(x)∂_νf(x)`, `j` 0-based; uses the analytic gradient
/// when present, centered differences with step `h` otherwise.
pub fn guenter_derivative(j: usize, f: &AmbientFunction, x: &[f64], h: f64) -> Result<Complex64> {
    if j >= f.dim {
        return Err(Error::InvalidArgument(format!(
            "derivative index {j} out of range for dimension {}",
            f.dim
        )));
    }
    Ok(guenter_gradient(f, x, h)?[j])
}

/// `Σⱼ 𝒟ⱼ(𝒟ⱼf)(x)`; the outer derivatives are centered differences of the
/// inner ones.
pub fn guenter_laplacian(f: &AmbientFunction, x: &[f64], h: f64) -> Result<Complex64> {
    check_dim(f.dim, x.len())?;
    check_step(h)?;
    let nu = normal(x)?;
    let n = f.dim;
    let mut probe = x.to_vec();
    // jac[k][j] = ∂ₖ(𝒟ⱼf)(x)
    let mut jac = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for k in 0..n {
        probe[k] = x[k] + h;
        let plus = project(&gradient(f, &probe, h), &normal(&probe)?);
        probe[k] = x[k] - h;
        let minus = project(&gradient(f, &probe, h), &normal(&probe)?);
        probe[k] = x[k];
        for j in 0..n {
            jac[k][j] = (plus[j] - minus[j]) / (2.0 * h);
        }
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let dnu: Complex64 = (0..n).map(|k| jac[k][j] * nu[k]).sum();
        acc += jac[j][j] - dnu * nu[j];
    }
    Ok(acc)
}
