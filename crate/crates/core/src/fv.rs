//! Entropy conservative flux differencing for periodic 1D Burgers' equation.

use crate::error::{Error, Result};
use crate::problems::OdeProblem;

/// Uniform periodic grid on [-1, 1] with `n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FvGrid {
    pub n: usize,
    pub x: Vec<f64>,
    pub dx: f64,
}

impl FvGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 cells, got {n}")));
        }
        let dx = 2.0 / n as f64;
        let x = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * dx).collect();
        Ok(Self { n, x, dx })
    }
}

/// Symmetric two-point flux `(a^2 + a b + b^2) / 6`, consistent with `u^2 / 2`.
#[inline]
pub fn ec_flux(a: f64, b: f64) -> f64 {
    (a * a + a * b + b * b) / 6.0
}

/// `rhs_i = -(F_{i+1/2} - F_{i-1/2}) / dx` with periodic wraparound.
pub fn burgers_ec_rhs(grid: &FvGrid, u: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = grid.n;
    if u.len() != n || rhs.len() != n {
        return Err(Error::InvalidArgument("state length does not match the grid".into()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Burgers state"));
    }
    let mut left = ec_flux(u[n - 1], u[0]);
    for i in 0..n {
        let right = ec_flux(u[i], u[(i + 1) % n]);
        rhs[i] = -(right - left) / grid.dx;
        left = right;
    }
    Ok(())
}

/// Burgers' equation with `u(0, x) = exp(-30 x^2)` sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersProblem {
    pub grid: FvGrid,
    pub u0: Vec<f64>,
}

pub const CFL: f64 = 0.3;
pub const FINAL_TIME: f64 = 0.2;

pub fn burgers_problem(n: usize) -> Result<BurgersProblem> {
    let grid = FvGrid::new(n)?;
    let u0 = grid.x.iter().map(|x| (-30.0 * x * x).exp()).collect();
    Ok(BurgersProblem { grid, u0 })
}

impl BurgersProblem {
    /// Step size for a given CFL number based on the initial maximum speed.
    pub fn cfl_step(&self, cfl: f64) -> f64 {
        let umax = self.u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        cfl * self.grid.dx / umax
    }
}

impl OdeProblem for BurgersProblem {
    fn name(&self) -> &str {
        "burgers"
    }

    fn dim(&self) -> usize {
        self.grid.n
    }

    fn initial_state(&self) -> Vec<f64> {
        self.u0.clone()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        burgers_ec_rhs(&self.grid, y, dy)
    }

    /// Discrete energy `dx/2 sum u_i^2`.
    fn entropy(&self, y: &[f64]) -> f64 {
        0.5 * self.grid.dx * y.iter().map(|v| v * v).sum::<f64>()
    }

    fn entropy_derivative(&self, y: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(y) {
            *o = self.grid.dx * v;
        }
    }

    fn is_conservative(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_spacing() {
        let g = FvGrid::new(100).unwrap();
        assert_eq!(g.dx, 0.02);
        assert!(FvGrid::new(2).is_err());
    }

    #[test]
    fn constant_state_is_steady() {
        let g = FvGrid::new(7).unwrap();
        let mut rhs = vec![1.0; 7];
        burgers_ec_rhs(&g, &[0.3; 7], &mut rhs).unwrap();
        assert!(rhs.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn three_cell_hand_computation() {
        // F(0,1) = 1/6, F(1,-1) = 1/6, F(-1,0) = 1/6: all interface fluxes coincide
        let g = FvGrid::new(3).unwrap();
        let u = [0.0, 1.0, -1.0];
        assert_eq!(ec_flux(0.0, 1.0), 1.0 / 6.0);
        assert_eq!(ec_flux(1.0, -1.0), 1.0 / 6.0);
        assert_eq!(ec_flux(-1.0, 0.0), 1.0 / 6.0);
        let mut rhs = vec![0.0; 3];
        burgers_ec_rhs(&g, &u, &mut rhs).unwrap();
        assert_eq!(u.iter().zip(&rhs).map(|(a, b)| a * b).sum::<f64>(), 0.0);
    }

    #[test]
    fn consistent_with_burgers_flux() {
        assert_eq!(ec_flux(0.7, 0.7), 0.5 * 0.7 * 0.7);
    }

    #[test]
    fn rejects_non_finite_input() {
        let g = FvGrid::new(3).unwrap();
        assert!(burgers_ec_rhs(&g, &[0.0, f64::NAN, 1.0], &mut [0.0; 3]).is_err());
    }

    #[test]
    fn mass_and_energy_identities() {
        let g = FvGrid::new(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rhs = vec![0.0; 100];
        for _ in 0..200 {
            let u: Vec<f64> = (0..100).map(|_| rng.gen_range(-2.0..2.0)).collect();
            burgers_ec_rhs(&g, &u, &mut rhs).unwrap();
            let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let rmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(rhs.iter().sum::<f64>().abs() <= 1e-14 * rmax * 100.0);
            let energy: f64 = u.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            assert!(energy.abs() <= 1e-14 * umax * rmax * 100.0);
        }
    }

    #[test]
    fn gaussian_initial_data() {
        let p = burgers_problem(100).unwrap();
        let mut rhs = vec![0.0; 100];
        p.rhs(0.0, &p.u0, &mut rhs).unwrap();
        let umax = p.u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let energy: f64 = p.u0.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        assert!(energy.abs() <= 1e-14 * umax * rmax * 100.0);
        assert!((p.cfl_step(CFL) - 0.3 * 0.02 / umax).abs() < 1e-18);
    }
}
