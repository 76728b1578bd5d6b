//! Legendre polynomials, Gauss rules and Lagrange bases on [0, 1].

use std::f64::consts::PI;

/// Returns `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Gauss–Legendre rule with `n` points mapped to [0, 1]; exact for degree 2n-1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        // ascending order on [0, 1]
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Gauss–Lobatto points (n+1 of them) on [0, 1]: endpoints plus roots of P_n'.
pub fn gauss_lobatto(n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let mut pts = vec![0.0; n + 1];
    pts[n] = 1.0;
    for j in 1..n {
        let mut z = -(PI * j as f64 / n as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            // (1 - z^2) P'' = 2 z P' - n (n + 1) P
            let ddp = (2.0 * z * dp - (n * (n + 1)) as f64 * p) / (1.0 - z * z);
            let dz = dp / ddp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        pts[j] = 0.5 * (1.0 + z);
    }
    // symmetric roots: average mirrored pairs to kill round-off asymmetry
    for j in 1..n {
        let s = 0.5 * (pts[j] + 1.0 - pts[n - j]);
        pts[j] = s;
        pts[n - j] = 1.0 - s;
    }
    pts
}

/// Lagrange basis on a fixed set of interpolation nodes.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
    denom: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(nodes: &[f64]) -> Self {
        let denom = (0..nodes.len())
            .map(|i| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &xj)| nodes[i] - xj)
                    .product()
            })
            .collect();
        Self { nodes: nodes.to_vec(), denom }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Value of the `i`-th basis polynomial at `x`.
    pub fn value(&self, i: usize, x: f64) -> f64 {
        let num: f64 = self
            .nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &xj)| x - xj)
            .product();
        num / self.denom[i]
    }

    /// Derivative of the `i`-th basis polynomial at `x`.
    pub fn derivative(&self, i: usize, x: f64) -> f64 {
        let n = self.nodes.len();
        let mut sum = 0.0;
        for k in 0..n {
            if k == i {
                continue;
            }
            let mut prod = 1.0;
            for j in 0..n {
                if j != i && j != k {
                    prod *= x - self.nodes[j];
                }
            }
            sum += prod;
        }
        sum / self.denom[i]
    }
}
