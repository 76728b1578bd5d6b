//! Explicit Runge–Kutta tableaux, their Shu–Osher form, and the RK form of deferred correction.

use std::fmt::Write as _;

use crate::coeffs::CoefficientSet;
use crate::error::{Error, Result};

/// Explicit Butcher tableau `(A, b, c)` with `c_i = sum_j A_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl ButcherTableau {
    /// Validates `a` as strictly lower triangular and derives `c` from its row sums.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidArgument("tableau dimensions mismatch".into()));
        }
        for (i, row) in a.iter().enumerate() {
            if row[i..].iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidArgument(format!("row {i} of A is not strictly lower triangular")));
            }
        }
        let bsum: f64 = b.iter().sum();
        if (bsum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {bsum}, expected 1")));
        }
        let c = a.iter().map(|row| row.iter().sum()).collect();
        Ok(Self { a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Aligned plain-text rendering: `c | A` rows, then the `b` row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (ci, row) in self.c.iter().zip(&self.a) {
            let _ = write!(out, "{ci:>12.8} |");
            for v in row {
                let _ = write!(out, " {v:>12.8}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{:->13}+{}\n{:>12} |", "", "-".repeat(13 * self.stages()), "");
        for v in &self.b {
            let _ = write!(out, " {v:>12.8}");
        }
        out.push('\n');
        out
    }

    /// CSV rendering: one row per stage `c,a_1..a_s`, followed by `b,b_1..b_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,c");
        for j in 0..self.stages() {
            let _ = write!(out, ",a{}", j + 1);
        }
        out.push('\n');
        for (i, (ci, row)) in self.c.iter().zip(&self.a).enumerate() {
            let _ = write!(out, "{},{ci:.16e}", i + 1);
            for v in row {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out.push_str("b,");
        for v in &self.b {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
        out
    }
}

/// Classical explicit methods used for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedMethod {
    Ssprk22,
    Ssprk33,
    Rk44,
}

impl NamedMethod {
    pub fn tableau(self) -> ButcherTableau {
        let (a, b) = match self {
            NamedMethod::Ssprk22 => (vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5]),
            NamedMethod::Ssprk33 => (
                vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.25, 0.25, 0.0]],
                vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
            ),
            NamedMethod::Rk44 => (
                vec![
                    vec![0.0, 0.0, 0.0, 0.0],
                    vec![0.5, 0.0, 0.0, 0.0],
                    vec![0.0, 0.5, 0.0, 0.0],
                    vec![0.0, 0.0, 1.0, 0.0],
                ],
                vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            ),
        };
        ButcherTableau::new(a, b).expect("literature tableau is valid")
    }
}

impl std::str::FromStr for NamedMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssprk22" => Ok(NamedMethod::Ssprk22),
            "ssprk33" => Ok(NamedMethod::Ssprk33),
            "rk44" | "rk4" => Ok(NamedMethod::Rk44),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Stage index of `y^{r,(k)}` in the RK form of deferred correction.
///
/// Stage 0 is `y^0`; all `y^{r,(0)}` coincide with it, as does `y^{0,(k)}`.
fn dec_stage(m: usize, r: usize, k: usize) -> usize {
    if r == 0 || k == 0 {
        0
    } else {
        1 + (k - 1) * m + (r - 1)
    }
}

/// Butcher tableau of the simplified deferred correction method with `k` corrections.
///
/// The intermediate subtimesteps of the last correction are never needed, so the
/// tableau has `1 + M (K - 1)` stages, i.e. `(d - 1)^2 + 1` for `K = M + 1 = d`.
pub fn dec_to_butcher(coeffs: &CoefficientSet, k: usize) -> Result<ButcherTableau> {
    if k < 1 {
        return Err(Error::InvalidArgument("at least one correction is required".into()));
    }
    let m = coeffs.m;
    let s = 1 + m * (k - 1);
    let mut a = vec![vec![0.0; s]; s];
    for corr in 1..k {
        for row in 1..=m {
            let i = dec_stage(m, row, corr);
            for (r, &th) in coeffs.theta[row - 1].iter().enumerate() {
                a[i][dec_stage(m, r, corr - 1)] += th;
            }
        }
    }
    let mut b = vec![0.0; s];
    for (r, &th) in coeffs.last_row().iter().enumerate() {
        b[dec_stage(m, r, k - 1)] += th;
    }
    ButcherTableau::new(a, b)
}

/// Shu–Osher coefficients `(alpha, beta)`, both `(s + 1) x s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuOsherForm {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

/// Direct read-off: every stage is a convex combination with weight one on `y^n`,
/// and `beta` stacks `A` above `b`.
pub fn butcher_to_shu_osher(t: &ButcherTableau) -> ShuOsherForm {
    let s = t.stages();
    let alpha = (0..=s)
        .map(|i| {
            let mut row = vec![0.0; s];
            if i > 0 {
                row[0] = 1.0;
            }
            row
        })
        .collect();
    let mut beta = t.a.clone();
    beta.push(t.b.clone());
    ShuOsherForm { alpha, beta }
}

impl ShuOsherForm {
    /// Evaluates one step in Shu–Osher form:
    /// `u_0 = y^n`, `u_i = sum_k alpha_ik u_k + dt beta_ik f(u_k)`.
    pub fn step<F>(&self, mut f: F, tn: f64, yn: &[f64], dt: f64) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let s = self.alpha[0].len();
        let n = yn.len();
        let mut u: Vec<Vec<f64>> = vec![yn.to_vec()];
        let mut fu: Vec<Vec<f64>> = Vec::with_capacity(s);
        let c: Vec<f64> = self.beta.iter().map(|row| row.iter().sum()).collect();
        for i in 1..=s {
            let mut dy = vec![0.0; n];
            f(tn + c[i - 1] * dt, &u[i - 1], &mut dy)?;
            fu.push(dy);
            let mut next = vec![0.0; n];
            for k in 0..i {
                let (al, be) = (self.alpha[i][k], self.beta[i][k]);
                for q in 0..n {
                    next[q] += al * u[k][q] + dt * be * fu[k][q];
                }
            }
            u.push(next);
        }
        Ok(u.pop().unwrap())
    }
}

/// Result of one explicit RK step.
#[derive(Debug, Clone, PartialEq)]
pub struct RkStep {
    pub stages: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub y_next: Vec<f64>,
}

pub fn rk_step<F>(t: &ButcherTableau, mut f: F, tn: f64, yn: &[f64], dt: f64) -> Result<RkStep>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    let s = t.stages();
    let n = yn.len();
    let mut stages = Vec::with_capacity(s);
    let mut derivatives: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut u = yn.to_vec();
        for (j, fj) in derivatives.iter().enumerate() {
            let aij = t.a[i][j];
            if aij != 0.0 {
                for q in 0..n {
                    u[q] += dt * aij * fj[q];
                }
            }
        }
        let mut fi = vec![0.0; n];
        f(tn + t.c[i] * dt, &u, &mut fi)?;
        stages.push(u);
        derivatives.push(fi);
    }
    let mut y_next = yn.to_vec();
    for (bj, fj) in t.b.iter().zip(&derivatives) {
        for q in 0..n {
            y_next[q] += dt * bj * fj[q];
        }
    }
    Ok(RkStep { stages, derivatives, y_next })
}
