use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 32;
pub const MAX_NODES: usize = 1024;
/// Largest change tolerated when the node count is doubled.
pub const DOUBLING_TOL: f64 = 1e-8;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    let deriv = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, deriv)
}

impl GaussLegendre {
    /// Roots by Newton iteration from the Tricomi initial guess.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        if n == 1 {
            return Self { nodes, weights: vec![2.0] };
        }
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * d * d);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.points(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Evaluates `eval` with 32, 64, ... nodes until two successive results
/// differ by at most [`DOUBLING_TOL`] elementwise; returns the finer one.
pub fn converged<F>(mut eval: F) -> Result<Vec<f64>>
where
    F: FnMut(&GaussLegendre) -> Result<Vec<f64>>,
{
    let mut nodes = MIN_NODES;
    let mut coarse = eval(&GaussLegendre::new(nodes))?;
    while nodes < MAX_NODES {
        nodes *= 2;
        let fine = eval(&GaussLegendre::new(nodes))?;
        let change = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change <= DOUBLING_TOL {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::Quadrature(format!("no convergence to {DOUBLING_TOL:e} with {MAX_NODES} nodes")))
}
