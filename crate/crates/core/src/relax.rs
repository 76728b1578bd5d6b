//! Relaxation coefficients: closed forms for the quadratic energy and a scalar root
//! solve for general convex entropies.

use crate::error::{Error, Result};

/// Relative threshold on squared norms below which an update counts as zero.
pub const DEGENERATE_EPS: f64 = 1e-28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMethod {
    Bisection,
    Brent,
    Newton,
}

impl std::str::FromStr for RootMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bisection" => Ok(RootMethod::Bisection),
            "brent" => Ok(RootMethod::Brent),
            "newton" => Ok(RootMethod::Newton),
            other => Err(Error::InvalidArgument(format!("unknown root solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSolverConfig {
    pub method: RootMethod,
    /// Initial bracket is `[1 - radius, 1 + radius]`.
    pub bracket_radius: f64,
    /// Tolerance on `|r(gamma)|`, relative to `|eta(y0)| + 1`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RootSolverConfig {
    fn default() -> Self {
        Self { method: RootMethod::Brent, bracket_radius: 0.5, tol: 1e-13, max_iter: 100 }
    }
}

impl RootSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("root tolerance must be positive".into()));
        }
        if !(self.bracket_radius > 0.0 && self.bracket_radius < 1.0) {
            return Err(Error::InvalidArgument("bracket radius must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaResult {
    pub gamma: f64,
    pub residual: f64,
    pub iterations: usize,
    pub fallback_used: bool,
}

impl GammaResult {
    pub fn closed_form(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::NonFinite("relaxation coefficient"));
        }
        Ok(Self { gamma, residual: 0.0, iterations: 0, fallback_used: false })
    }

    pub fn fallback() -> Self {
        Self { gamma: 1.0, residual: 0.0, iterations: 0, fallback_used: true }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn wdot(a: &[f64], b: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => a.iter().zip(b).zip(w).map(|((x, y), wi)| wi * x * y).sum(),
        None => dot(a, b),
    }
}

/// Energy relaxation from the stage derivatives of an explicit RK step:
/// `gamma = 2 sum_ij b_i a_ij <f_i, f_j> / |sum_i b_i f_i|^2`.
pub fn gamma_energy(a: &[Vec<f64>], b: &[f64], f: &[Vec<f64>]) -> Result<GammaResult> {
    let s = b.len();
    let n = f.first().map_or(0, Vec::len);
    let mut num = 0.0;
    for i in 0..s {
        for j in 0..i {
            if a[i][j] != 0.0 && b[i] != 0.0 {
                num += b[i] * a[i][j] * dot(&f[i], &f[j]);
            }
        }
    }
    num *= 2.0;
    let mut sum = vec![0.0; n];
    for (bi, fi) in b.iter().zip(f) {
        for (acc, v) in sum.iter_mut().zip(fi) {
            *acc += bi * v;
        }
    }
    let den = dot(&sum, &sum);
    let scale = f.iter().map(|fi| dot(fi, fi)).fold(0.0, f64::max);
    if !num.is_finite() || !den.is_finite() {
        return Err(Error::NonFinite("stage derivative inner products"));
    }
    if den <= DEGENERATE_EPS * scale {
        return Ok(GammaResult::fallback());
    }
    GammaResult::closed_form(num / den)
}

/// Solves `1/2 g^2 <d,d>_W + g <y0,d>_W + g * estimate = 0` for the nonzero root.
///
/// `estimate` is the dissipation rate of the space operator integrated over the step,
/// i.e. minus the expected entropy change; zero enforces exact conservation.
pub fn gamma_energy_from_direction(
    y0: &[f64],
    d: &[f64],
    estimate: f64,
    weight: Option<&[f64]>,
) -> Result<GammaResult> {
    let dd = wdot(d, d, weight);
    let yd = wdot(y0, d, weight);
    let yy = wdot(y0, y0, weight);
    if !dd.is_finite() || !yd.is_finite() || !estimate.is_finite() {
        return Err(Error::NonFinite("relaxation inner products"));
    }
    if dd == 0.0 || dd <= DEGENERATE_EPS * yy {
        return Ok(GammaResult::fallback());
    }
    GammaResult::closed_form(-2.0 * (yd + estimate) / dd)
}

/// Relaxation for a general entropy: root of `eta(y0 + g d) - eta(y0) - g * estimate`
/// near `g = 1`, where `estimate` is the expected entropy change over the step.
pub fn gamma_entropy_root<E>(
    eta: E,
    y0: &[f64],
    d: &[f64],
    estimate: f64,
    cfg: &RootSolverConfig,
) -> Result<GammaResult>
where
    E: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let eta0 = eta(y0);
    if !eta0.is_finite() {
        return Err(Error::NonFinite("entropy at the step start"));
    }
    let dnorm2 = dot(d, d);
    if dnorm2 <= DEGENERATE_EPS * dot(y0, y0) && estimate.abs() <= DEGENERATE_EPS.sqrt() * (eta0.abs() + 1.0) {
        return Ok(GammaResult::fallback());
    }
    let mut work = vec![0.0; y0.len()];
    let mut residual = |g: f64| {
        for ((w, a), b) in work.iter_mut().zip(y0).zip(d) {
            *w = a + g * b;
        }
        eta(&work) - eta0 - g * estimate
    };
    let tol = cfg.tol * (eta0.abs() + 1.0);

    let r1 = residual(1.0);
    if !r1.is_finite() {
        return Err(Error::NonFinite("relaxation residual"));
    }
    if r1.abs() <= tol {
        return Ok(GammaResult { gamma: 1.0, residual: r1.abs(), iterations: 0, fallback_used: false });
    }

    let result = match cfg.method {
        RootMethod::Newton => newton(&mut residual, 1.0, tol, cfg.max_iter)?,
        RootMethod::Brent | RootMethod::Bisection => {
            let (lo, hi, flo, fhi) = bracket(&mut residual, cfg.bracket_radius)?;
            if cfg.method == RootMethod::Brent {
                brent(&mut residual, lo, hi, flo, fhi, tol, cfg.max_iter)?
            } else {
                bisection(&mut residual, lo, hi, flo, tol, cfg.max_iter)?
            }
        }
    };
    let (gamma, iterations) = result;
    let res = residual(gamma).abs();
    if !(res <= tol) {
        return Err(Error::NoConvergence { iterations, residual: res });
    }
    Ok(GammaResult { gamma, residual: res, iterations, fallback_used: false })
}

/// Searches `[1 - r, 1 + r]`, then widens up to four times keeping the lower end positive.
fn bracket(f: &mut impl FnMut(f64) -> f64, radius: f64) -> Result<(f64, f64, f64, f64)> {
    let (mut lo, mut hi) = (1.0 - radius, 1.0 + radius);
    for expansion in 0..=4 {
        if expansion > 0 {
            lo *= 0.5;
            hi = 1.0 + radius * f64::from(1u32 << expansion);
        }
        let (flo, fhi) = (f(lo), f(hi));
        if !flo.is_finite() || !fhi.is_finite() {
            return Err(Error::NonFinite("relaxation residual"));
        }
        if flo == 0.0 || fhi == 0.0 || flo.signum() != fhi.signum() {
            return Ok((lo, hi, flo, fhi));
        }
    }
    Err(Error::NoBracket { lo, hi })
}

fn bisection(
    f: &mut impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    for it in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol && (hi - lo) <= 4.0 * f64::EPSILON * mid.abs() || fm == 0.0 {
            return Ok((mid, it));
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * mid.abs() {
            return Ok((mid, it));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: f(0.5 * (lo + hi)).abs() })
}

/// Brent's method (inverse quadratic interpolation with bisection safeguard),
/// run until the bracket collapses to a few ulps.
fn brent(
    f: &mut impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    flo: f64,
    fhi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, flo, fhi);
    if fa == 0.0 {
        return Ok((a, 0));
    }
    if fb == 0.0 {
        return Ok((b, 0));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let xtol = 2.0 * f64::EPSILON * b.abs();
        let m = 0.5 * (c - b);
        if fb == 0.0 || (m.abs() <= xtol && fb.abs() <= tol) {
            return Ok((b, it));
        }
        if m.abs() <= xtol {
            // bracket exhausted; the caller checks the residual
            return Ok((b, it));
        }
        if e.abs() >= xtol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (xtol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > xtol { d } else { xtol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::NonFinite("relaxation residual"));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: fb.abs() })
}

fn newton(f: &mut impl FnMut(f64) -> f64, mut g: f64, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let mut fg = f(g);
    for it in 1..=max_iter {
        let h = 1e-7 * (1.0 + g.abs());
        let slope = (f(g + h) - f(g - h)) / (2.0 * h);
        if slope == 0.0 || !slope.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: fg.abs() });
        }
        let step = fg / slope;
        g -= step;
        fg = f(g);
        if !fg.is_finite() {
            return Err(Error::NonFinite("relaxation residual"));
        }
        if fg.abs() <= tol && step.abs() <= 1e-12 * (1.0 + g.abs()) || fg == 0.0 {
            return Ok((g, it));
        }
    }
    if fg.abs() <= tol {
        return Ok((g, max_iter));
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: fg.abs() })
}
