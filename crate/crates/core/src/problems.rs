//! ODE test problems with entropy functionals and, where available, exact solutions.

use crate::error::{Error, Result};

const UNDERFLOW: f64 = 1e-300;

/// An autonomous or non-autonomous ODE `y' = f(t, y)` with an entropy functional.
///
/// Implementations must be reentrant: integrators may call `rhs` from independent runs.
pub trait OdeProblem {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    fn entropy(&self, y: &[f64]) -> f64;
    fn entropy_derivative(&self, y: &[f64], out: &mut [f64]);

    /// Exact solution started from `initial_state()` at `t = 0`.
    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// Whether `<grad eta, f> = 0` holds identically.
    fn is_conservative(&self) -> bool {
        false
    }
}

fn rotate(y: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * y[0] - s * y[1], s * y[0] + c * y[1]]
}

fn norm2(y: &[f64]) -> f64 {
    y[0].hypot(y[1])
}

/// `u' = (-u2/n, u1/n)` with `n = |u|`; rotates with angular speed `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearOscillator {
    pub y0: [f64; 2],
}

pub fn nonlinear_oscillator(u1_0: f64, u2_0: f64) -> Result<NonlinearOscillator> {
    if u1_0 == 0.0 && u2_0 == 0.0 {
        return Err(Error::InvalidArgument("oscillator needs a nonzero initial state".into()));
    }
    Ok(NonlinearOscillator { y0: [u1_0, u2_0] })
}

impl OdeProblem for NonlinearOscillator {
    fn name(&self) -> &str {
        "oscillator"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        self.y0.to_vec()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = norm2(y);
        if !(n >= UNDERFLOW) {
            return Err(if n.is_finite() { Error::Underflow(n) } else { Error::NonFinite("oscillator state") });
        }
        dy[0] = -y[1] / n;
        dy[1] = y[0] / n;
        Ok(())
    }

    fn entropy(&self, y: &[f64]) -> f64 {
        0.5 * (y[0] * y[0] + y[1] * y[1])
    }

    fn entropy_derivative(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&y[..2]);
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let n = norm2(&self.y0);
        Some(rotate(self.y0, t / n).to_vec())
    }

    fn is_conservative(&self) -> bool {
        true
    }
}

/// Oscillator with linear damping `-alpha u`; energy decays like `exp(-2 alpha t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DampedOscillator {
    pub y0: [f64; 2],
    pub alpha: f64,
}

pub const DEFAULT_DAMPING: f64 = 0.01;

pub fn damped_oscillator(u1_0: f64, u2_0: f64, alpha: f64) -> Result<DampedOscillator> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("damping must be positive, got {alpha}")));
    }
    if u1_0 == 0.0 && u2_0 == 0.0 {
        return Err(Error::InvalidArgument("oscillator needs a nonzero initial state".into()));
    }
    Ok(DampedOscillator { y0: [u1_0, u2_0], alpha })
}

impl OdeProblem for DampedOscillator {
    fn name(&self) -> &str {
        "damped"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        self.y0.to_vec()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = norm2(y);
        if !(n >= UNDERFLOW) {
            return Err(if n.is_finite() { Error::Underflow(n) } else { Error::NonFinite("oscillator state") });
        }
        dy[0] = -y[1] / n - self.alpha * y[0];
        dy[1] = y[0] / n - self.alpha * y[1];
        Ok(())
    }

    fn entropy(&self, y: &[f64]) -> f64 {
        0.5 * (y[0] * y[0] + y[1] * y[1])
    }

    fn entropy_derivative(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&y[..2]);
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        let n0 = norm2(&self.y0);
        let a = self.alpha;
        let theta = (a * t).exp_m1() / (a * n0);
        let scale = (-a * t).exp();
        let r = rotate(self.y0, theta);
        Some(vec![scale * r[0], scale * r[1]])
    }
}

/// Nonlinear pendulum `u' = (-sin u2, u1)` with entropy `u1^2/2 - cos u2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub y0: [f64; 2],
}

pub fn pendulum() -> Pendulum {
    Pendulum { y0: [1.5, 0.0] }
}

impl OdeProblem for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_state(&self) -> Vec<f64> {
        self.y0.to_vec()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy[0] = -y[1].sin();
        dy[1] = y[0];
        Ok(())
    }

    fn entropy(&self, y: &[f64]) -> f64 {
        0.5 * y[0] * y[0] - y[1].cos()
    }

    fn entropy_derivative(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0];
        out[1] = y[1].sin();
    }

    fn is_conservative(&self) -> bool {
        true
    }
}

/// Looks up a problem by its CLI name.
pub fn problem_by_name(name: &str, u0: Option<[f64; 2]>, alpha: Option<f64>) -> Result<Box<dyn OdeProblem>> {
    let [a, b] = u0.unwrap_or([1.0, 0.0]);
    match name {
        "oscillator" | "nonlinear-oscillator" => Ok(Box::new(nonlinear_oscillator(a, b)?)),
        "damped" | "damped-oscillator" => Ok(Box::new(damped_oscillator(a, b, alpha.unwrap_or(DEFAULT_DAMPING))?)),
        "pendulum" => {
            let mut p = pendulum();
            if let Some(y0) = u0 {
                p.y0 = y0;
            }
            Ok(Box::new(p))
        }
        other => Err(Error::InvalidArgument(format!("unknown problem '{other}'"))),
    }
}
