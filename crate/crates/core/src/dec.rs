//! The deferred correction integrator, with optional relaxation of the final update.

use crate::coeffs::{make_coefficients, CoefficientSet, NodeFamily};
use crate::error::{Error, Result};
use crate::problems::OdeProblem;
use crate::relax::{gamma_energy_from_direction, gamma_entropy_root, GammaResult, RootSolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationMode {
    None,
    /// Scale the update but advance time by the unscaled step.
    Idt,
    /// Scale the update and advance time by `gamma * dt`.
    Relaxation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    /// `eta = 1/2 |y|^2`, closed-form gamma.
    Energy,
    /// The problem's own entropy, gamma from a scalar root solve.
    General,
}

impl std::str::FromStr for RelaxationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(RelaxationMode::None),
            "idt" => Ok(RelaxationMode::Idt),
            "relaxation" | "relax" | "on" => Ok(RelaxationMode::Relaxation),
            other => Err(Error::InvalidArgument(format!("unknown relaxation mode '{other}'"))),
        }
    }
}

impl std::str::FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Ok(EntropyMode::Energy),
            "general" | "entropy" => Ok(EntropyMode::General),
            other => Err(Error::InvalidArgument(format!("unknown entropy mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecConfig {
    pub subintervals: usize,
    pub corrections: usize,
    pub family: NodeFamily,
    pub relaxation: RelaxationMode,
    pub entropy: EntropyMode,
    pub root_solver: RootSolverConfig,
}

impl DecConfig {
    /// DeC of order `order`: `M = order - 1` subintervals, `K = order` corrections.
    pub fn with_order(order: usize, family: NodeFamily) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        Ok(Self {
            subintervals: (order - 1).max(1),
            corrections: order,
            family,
            relaxation: RelaxationMode::None,
            entropy: EntropyMode::Energy,
            root_solver: RootSolverConfig::default(),
        })
    }

    pub fn relaxed(mut self, mode: RelaxationMode, entropy: EntropyMode) -> Self {
        self.relaxation = mode;
        self.entropy = entropy;
        self
    }

    pub fn design_order(&self) -> usize {
        self.corrections.min(self.subintervals + 1)
    }
}

/// A deferred correction scheme with precomputed coefficients.
#[derive(Debug, Clone)]
pub struct Dec {
    pub config: DecConfig,
    pub coeffs: CoefficientSet,
}

/// Per-subtimestep vectors, indexed by node.
pub type Stages = Vec<Vec<f64>>;

/// Output of a single step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecStep {
    pub y_end: Vec<f64>,
    pub gamma: GammaResult,
    /// Unrelaxed increment `dt sum_r theta_r^M f(y^{r,(K-1)})`.
    pub direction: Vec<f64>,
    /// Subtimestep states `y^{r,(K-1)}`, `r = 0..M`.
    pub stages: Vec<Vec<f64>>,
    /// `f(y^{r,(K-1)})`.
    pub derivatives: Vec<Vec<f64>>,
}

impl Dec {
    pub fn new(config: DecConfig) -> Result<Self> {
        if config.corrections < 1 {
            return Err(Error::InvalidArgument("at least one correction is required".into()));
        }
        config.root_solver.validate()?;
        let coeffs = make_coefficients(config.subintervals, config.family)?;
        Ok(Self { config, coeffs })
    }

    /// Stage recursion `y^{m,(k)} = y^n + dt sum_r theta_r^m f(y^{r,(k-1)})`, shared by the
    /// ODE integrator and tests; returns the last subtimestep's states and derivatives.
    pub fn corrections<F>(&self, mut f: F, tn: f64, yn: &[f64], dt: f64) -> Result<(Stages, Stages)>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let m = self.coeffs.m;
        let n = yn.len();
        let nodes = &self.coeffs.nodes;
        let mut states: Vec<Vec<f64>> = vec![yn.to_vec(); m + 1];
        let mut derivs: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
        // y^{r,(0)} = y^n for every r, evaluated once at the step start
        f(tn, yn, &mut derivs[0])?;
        for r in 1..=m {
            derivs[r] = derivs[0].clone();
        }
        for _ in 1..self.config.corrections {
            for (row, state) in states.iter_mut().enumerate().skip(1) {
                state.copy_from_slice(yn);
                for (th, fr) in self.coeffs.theta[row - 1].iter().zip(&derivs) {
                    for (s, v) in state.iter_mut().zip(fr) {
                        *s += dt * th * v;
                    }
                }
            }
            for r in 1..=m {
                f(tn + nodes[r] * dt, &states[r], &mut derivs[r])?;
            }
        }
        Ok((states, derivs))
    }

    pub fn step(&self, problem: &dyn OdeProblem, tn: f64, yn: &[f64], dt: f64) -> Result<DecStep> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
        }
        let (stages, derivatives) = self.corrections(|t, y, dy| problem.rhs(t, y, dy), tn, yn, dt)?;
        let mut direction = vec![0.0; yn.len()];
        for (th, fr) in self.coeffs.last_row().iter().zip(&derivatives) {
            for (d, v) in direction.iter_mut().zip(fr) {
                *d += dt * th * v;
            }
        }
        let gamma = match self.config.relaxation {
            RelaxationMode::None => GammaResult { gamma: 1.0, residual: 0.0, iterations: 0, fallback_used: false },
            RelaxationMode::Idt | RelaxationMode::Relaxation => {
                self.relaxation_gamma(problem, yn, &direction, &stages, &derivatives, dt)?
            }
        };
        let y_end: Vec<f64> = yn.iter().zip(&direction).map(|(y, d)| y + gamma.gamma * d).collect();
        if y_end.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(DecStep { y_end, gamma, direction, stages, derivatives })
    }

    /// Entropy change predicted by the semidiscrete problem: `dt sum_r theta_r^M <v(y^r), f(y^r)>`.
    fn entropy_estimate(
        &self,
        stages: &[Vec<f64>],
        derivatives: &[Vec<f64>],
        dt: f64,
        v: impl Fn(&[f64], &mut [f64]),
    ) -> f64 {
        let mut buf = vec![0.0; stages[0].len()];
        self.coeffs
            .last_row()
            .iter()
            .zip(stages.iter().zip(derivatives))
            .map(|(th, (y, f))| {
                v(y, &mut buf);
                th * buf.iter().zip(f).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum::<f64>()
            * dt
    }

    fn relaxation_gamma(
        &self,
        problem: &dyn OdeProblem,
        yn: &[f64],
        direction: &[f64],
        stages: &[Vec<f64>],
        derivatives: &[Vec<f64>],
        dt: f64,
    ) -> Result<GammaResult> {
        match self.config.entropy {
            EntropyMode::Energy => {
                let production = self.entropy_estimate(stages, derivatives, dt, |y, out| out.copy_from_slice(y));
                gamma_energy_from_direction(yn, direction, -production, None)
            }
            EntropyMode::General => {
                let production =
                    self.entropy_estimate(stages, derivatives, dt, |y, out| problem.entropy_derivative(y, out));
                gamma_entropy_root(|y| problem.entropy(y), yn, direction, production, &self.config.root_solver)
            }
        }
    }

    /// Integrates from `t0` to `t_final`, clipping the last step to land on `t_final`.
    pub fn integrate(&self, problem: &dyn OdeProblem, t0: f64, y0: &[f64], dt: f64, t_final: f64) -> Result<Trajectory> {
        if !(dt > 0.0) || !(t_final > t0) {
            return Err(Error::InvalidArgument(format!("need dt > 0 and t_final > t0 (dt={dt}, t0={t0}, t_final={t_final})")));
        }
        let mut records = vec![Record { t: t0, y: y0.to_vec(), gamma: 1.0, eta: problem.entropy(y0) }];
        let (mut t, mut y) = (t0, y0.to_vec());
        let eps = 1e-12 * t_final.abs().max(1.0);
        loop {
            let remaining = t_final - t;
            if remaining <= eps {
                break;
            }
            let clipped = dt >= remaining - eps;
            let h = if clipped { remaining } else { dt };
            let step = self.step(problem, t, &y, h)?;
            let gamma = step.gamma.gamma;
            if !(gamma > 0.0) {
                return Err(Error::NonPositiveGamma { gamma, t });
            }
            t += match self.config.relaxation {
                RelaxationMode::Relaxation => gamma * h,
                RelaxationMode::None | RelaxationMode::Idt => h,
            };
            y = step.y_end;
            records.push(Record { t, y: y.clone(), gamma, eta: problem.entropy(&y) });
            if clipped {
                break;
            }
        }
        let step_count = records.len() - 1;
        Ok(Trajectory { records, step_count })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub y: Vec<f64>,
    pub gamma: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub step_count: usize,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory holds the initial record")
    }

    /// Per-step relaxation coefficients (the initial record is excluded).
    pub fn gammas(&self) -> Vec<f64> {
        self.records[1..].iter().map(|r| r.gamma).collect()
    }

    pub fn max_entropy_deviation(&self) -> f64 {
        let eta0 = self.records[0].eta;
        self.records.iter().map(|r| (r.eta - eta0).abs()).fold(0.0, f64::max)
    }
}
