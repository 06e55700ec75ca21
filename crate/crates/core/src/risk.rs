//! Empirical risk `f(x) = ½‖A G(x) − y‖²` and its explicit step direction.

use crate::error::{Error, Result};
use crate::generator::{ForwardPass, GeneratorNetwork};
use crate::numerics::{dot, Matrix, Vector};

/// Measurements `y = A G(x_*) + e` of a signal in the range of a generator.
#[derive(Clone, Debug)]
pub struct RecoveryProblem {
    net: GeneratorNetwork,
    a: Matrix,
    y: Vector,
    ground_truth: Option<Vector>,
    noise: Option<Vector>,
}

impl RecoveryProblem {
    /// Problem from raw observations with no known ground truth.
    pub fn new(net: GeneratorNetwork, a: Matrix, y: Vector) -> Result<Self> {
        if a.cols() != net.output_dim() {
            return Err(Error::invalid(format!(
                "measurement matrix has {} columns, generator output has dimension {}",
                a.cols(),
                net.output_dim()
            )));
        }
        if y.dim() != a.rows() {
            return Err(Error::invalid(format!(
                "observation has dimension {}, measurement matrix has {} rows",
                y.dim(),
                a.rows()
            )));
        }
        Ok(RecoveryProblem { net, a, y, ground_truth: None, noise: None })
    }

    /// Builds `y = A G(x_star) + noise` and records both for diagnostics.
    pub fn from_ground_truth(
        net: GeneratorNetwork,
        a: Matrix,
        x_star: Vector,
        noise: Option<Vector>,
    ) -> Result<Self> {
        let (signal, _) = net.forward(&x_star)?;
        let clean = a.matvec(&signal)?;
        let y = match &noise {
            Some(e) if e.dim() != clean.dim() => {
                return Err(Error::invalid(format!(
                    "noise has dimension {}, expected {}",
                    e.dim(),
                    clean.dim()
                )))
            }
            Some(e) => clean.add(e),
            None => clean,
        };
        let mut p = Self::new(net, a, y)?;
        p.ground_truth = Some(x_star);
        p.noise = noise;
        Ok(p)
    }

    pub fn net(&self) -> &GeneratorNetwork {
        &self.net
    }

    pub fn measurement(&self) -> &Matrix {
        &self.a
    }

    pub fn observation(&self) -> &Vector {
        &self.y
    }

    pub fn ground_truth(&self) -> Option<&Vector> {
        self.ground_truth.as_ref()
    }

    pub fn noise(&self) -> Option<&Vector> {
        self.noise.as_ref()
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn num_measurements(&self) -> usize {
        self.a.rows()
    }

    /// `‖x − x_*‖ / ‖x_*‖` when the ground truth is known.
    pub fn relative_error(&self, x: &Vector) -> Option<f64> {
        self.ground_truth.as_ref().map(|xs| x.distance(xs) / xs.norm())
    }

    fn check_latent(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.latent_dim() {
            return Err(Error::invalid(format!(
                "latent vector has dimension {}, expected {}",
                x.dim(),
                self.latent_dim()
            )));
        }
        Ok(())
    }
}

/// Buffers for repeated objective and direction evaluations on one problem.
#[derive(Clone, Debug)]
pub(crate) struct Evaluator {
    pass: ForwardPass,
    residual: Vec<f64>,
}

impl Evaluator {
    pub(crate) fn new(p: &RecoveryProblem) -> Self {
        Evaluator {
            pass: ForwardPass::new(&p.net),
            residual: vec![0.0; p.a.rows()],
        }
    }

    /// Runs the forward pass at `x`, stores the residual, and returns `f(x)`.
    pub(crate) fn objective(&mut self, p: &RecoveryProblem, x: &[f64]) -> f64 {
        self.pass.run(&p.net, x);
        p.a.matvec_into(self.pass.output(), &mut self.residual);
        for (r, y) in self.residual.iter_mut().zip(p.y.as_slice()) {
            *r -= y;
        }
        0.5 * dot(&self.residual, &self.residual)
    }

    /// `Λ_xᵀ Aᵀ (A Λ_x x − y)` for the point of the last `objective` call.
    pub(crate) fn direction(&self, p: &RecoveryProblem, out: &mut [f64]) {
        let mut u = vec![0.0; p.a.cols()];
        p.a.matvec_t_into(&self.residual, &mut u);
        self.pass.backward(&p.net, &mut u, out);
    }
}

/// `½‖A G(x) − y‖²`
pub fn risk_value(p: &RecoveryProblem, x: &Vector) -> Result<f64> {
    p.check_latent(x)?;
    Ok(Evaluator::new(p).objective(p, x.as_slice()))
}

/// The gradient of the active quadratic piece at `x`,
/// `ṽ_x = Λ_xᵀ Aᵀ (A Λ_x x − y)`.
///
/// At points where some pre-activation is exactly zero this is the
/// strict-mask direction, which need not be a Clarke subgradient.
pub fn step_direction(p: &RecoveryProblem, x: &Vector) -> Result<Vector> {
    p.check_latent(x)?;
    if x.is_zero() {
        return Err(Error::invalid("step direction is undefined at x = 0"));
    }
    let mut ev = Evaluator::new(p);
    ev.objective(p, x.as_slice());
    let mut out = vec![0.0; x.dim()];
    ev.direction(p, &mut out);
    Ok(Vector::from_raw(out))
}

/// Coordinate-wise central differences of [`risk_value`] with step `h`.
pub fn finite_difference_gradient(p: &RecoveryProblem, x: &Vector, h: f64) -> Result<Vector> {
    p.check_latent(x)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut ev = Evaluator::new(p);
    let mut probe = x.as_slice().to_vec();
    let grad = (0..x.dim())
        .map(|i| {
            let xi = probe[i];
            probe[i] = xi + h;
            let plus = ev.objective(p, &probe);
            probe[i] = xi - h;
            let minus = ev.objective(p, &probe);
            probe[i] = xi;
            (plus - minus) / (2.0 * h)
        })
        .collect();
    Ok(Vector::from_raw(grad))
}
