//! Subtimestep nodes and the quadrature coefficients of the deferred correction operators.
//!
//! Everything lives on the reference interval [0, 1]; integrators scale by the step size.

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_lobatto, LagrangeBasis};

/// Distribution of the subtimesteps inside one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeFamily {
    Equispaced,
    GaussLobatto,
}

impl std::str::FromStr for NodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equispaced" | "eq" | "equi" => Ok(NodeFamily::Equispaced),
            "gausslobatto" | "gauss-lobatto" | "gl" | "lobatto" => Ok(NodeFamily::GaussLobatto),
            other => Err(Error::InvalidArgument(format!("unknown node family '{other}'"))),
        }
    }
}

impl std::fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeFamily::Equispaced => write!(f, "equispaced"),
            NodeFamily::GaussLobatto => write!(f, "gauss-lobatto"),
        }
    }
}

/// `M + 1` sorted nodes on [0, 1], both endpoints included.
pub fn make_nodes(m: usize, family: NodeFamily) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("subinterval count M must be at least 1".into()));
    }
    let nodes = match family {
        NodeFamily::Equispaced => (0..=m).map(|i| i as f64 / m as f64).collect(),
        NodeFamily::GaussLobatto => gauss_lobatto(m),
    };
    Ok(nodes)
}

/// Quadrature data of a deferred correction scheme with `M` subintervals.
///
/// `theta[m - 1][r]` is the integral over `[0, nodes[m]]` of the `r`-th Lagrange
/// basis polynomial on `nodes`; `beta[m - 1] = nodes[m]` are the forward Euler weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub m: usize,
    pub family: NodeFamily,
    pub nodes: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

impl CoefficientSet {
    /// θ row of the last subtimestep, the weights of the final update.
    pub fn last_row(&self) -> &[f64] {
        &self.theta[self.m - 1]
    }
}

pub fn make_coefficients(m: usize, family: NodeFamily) -> Result<CoefficientSet> {
    let nodes = make_nodes(m, family)?;
    from_nodes(&nodes, family)
}

/// Builds the coefficient set for an arbitrary strictly increasing node vector on [0, 1].
pub fn from_nodes(nodes: &[f64], family: NodeFamily) -> Result<CoefficientSet> {
    if nodes.len() < 2 {
        return Err(Error::InvalidArgument("at least two nodes are required".into()));
    }
    if !nodes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument("nodes must be strictly increasing".into()));
    }
    let m = nodes.len() - 1;
    let basis = LagrangeBasis::new(nodes);
    // degree-M integrands; M + 1 Gauss points are exact through degree 2M + 1
    let (qx, qw) = gauss_legendre(m + 1);
    let theta = (1..=m)
        .map(|row| {
            let upper = nodes[row] - nodes[0];
            (0..=m)
                .map(|r| {
                    qx.iter()
                        .zip(&qw)
                        .map(|(&x, &w)| w * basis.value(r, nodes[0] + upper * x))
                        .sum::<f64>()
                        * upper
                })
                .collect()
        })
        .collect();
    let beta = nodes[1..].iter().map(|&t| t - nodes[0]).collect();
    Ok(CoefficientSet { m, family, nodes: nodes.to_vec(), theta, beta })
}
