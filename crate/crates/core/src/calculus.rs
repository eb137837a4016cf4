//! Discrete radial operators and the quadratic forms built from them.
//!
//! The radial Laplacian is assembled in conservative (finite-volume) form on
//! the shells of the grid: zero flux through the origin and a homogeneous
//! Dirichlet condition at `R_max` for `u` and for every `Delta^k u`. The last
//! node is the boundary; functions are treated as vanishing there.
//!
//! `|nabla^m u|_2^2` is the composition the continuous definition uses:
//! `Delta` applied `floor(m/2)` times, then either the mass-weighted square
//! (even `m`) or the edge-gradient energy (odd `m`).

use std::sync::Arc;

use crate::banded::{BandCholesky, BandMatrix};
use crate::error::Result;
use crate::grid::{RadialFunction, RadialGrid};

#[derive(Debug, Clone)]
pub struct OperatorSet {
    grid: Arc<RadialGrid>,
    /// Edge lengths `r_{i+1} - r_i`.
    edge_len: Vec<f64>,
    /// Edge quadrature weights: surface of the midpoint sphere times length.
    edge_weight: Vec<f64>,
    /// Full `n x n` Laplacian; the boundary row is zero.
    laplacian: BandMatrix,
    /// Free-node block of the Laplacian.
    lap_free: BandMatrix,
    /// Free-node block of `-Delta`'s stiffness `D^T E D` (symmetric).
    stiffness_free: BandMatrix,
    /// Matrix of the quadratic form `|nabla^m u|_2^2` on free nodes.
    poly_free: BandMatrix,
    /// `w_i / r_i^{2m}`, the Hardy weights.
    hardy_weight: Vec<f64>,
}

impl OperatorSet {
    pub fn new(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        let m = grid.m();
        let nodes = grid.nodes();
        let omega = grid.surface_measure();
        let edge_len: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let edge_weight: Vec<f64> = nodes
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                omega * mid.powi(2 * m as i32 - 1) * (w[1] - w[0])
            })
            .collect();
        // conductance S_e / h_e of each edge
        let cond: Vec<f64> = edge_weight.iter().zip(&edge_len).map(|(e, h)| e / (h * h)).collect();

        let mut stiffness = BandMatrix::zeros(n, 1, 1);
        for (e, &c) in cond.iter().enumerate() {
            stiffness.add(e, e, c);
            stiffness.add(e + 1, e + 1, c);
            stiffness.add(e, e + 1, -c);
            stiffness.add(e + 1, e, -c);
        }
        let w = grid.weights();
        let mut laplacian = BandMatrix::zeros(n, 1, 1);
        for i in 0..n - 1 {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                laplacian.set(i, j, -stiffness.get(i, j) / w[i]);
            }
        }
        let nf = n - 1;
        let lap_free = laplacian.leading(nf);
        let stiffness_free = stiffness.leading(nf);
        let w_free = BandMatrix::diagonal(&w[..nf]);

        let half = m / 2;
        let mut power = BandMatrix::diagonal(&vec![1.0; nf]);
        for _ in 0..half {
            power = lap_free.mul(&power);
        }
        let core = if m.is_multiple_of(2) { &w_free } else { &stiffness_free };
        let poly_free = power.transpose().mul(core).mul(&power).symmetrized();

        let hardy_weight =
            w.iter().zip(nodes).map(|(w, r)| w / r.powi(2 * m as i32)).collect();
        OperatorSet { grid, edge_len, edge_weight, laplacian, lap_free, stiffness_free, poly_free, hardy_weight }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    /// Number of free (non-boundary) nodes.
    pub fn free(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn laplacian(&self) -> &BandMatrix {
        &self.laplacian
    }

    /// Matrix of `u -> |nabla^m u|_2^2` acting on the free nodes.
    pub fn polyharmonic_form(&self) -> &BandMatrix {
        &self.poly_free
    }

    pub fn hardy_weights(&self) -> &[f64] {
        &self.hardy_weight
    }

    /// `u'` on the edges `(r_i + r_{i+1})/2`.
    pub fn first_derivative(&self, u: &[f64]) -> Vec<f64> {
        u.windows(2).zip(&self.edge_len).map(|(w, h)| (w[1] - w[0]) / h).collect()
    }

    /// Discrete `Delta u` at the nodes (zero in the boundary row).
    pub fn apply_laplacian(&self, u: &RadialFunction) -> Result<Vec<f64>> {
        u.ensure_grid(&self.grid)?;
        Ok(self.laplacian.matvec(u.values()))
    }

    /// `|nabla^m u|_2^2`, evaluated through the factor chain.
    pub fn grad_m_norm_sq(&self, u: &RadialFunction) -> Result<f64> {
        u.ensure_grid(&self.grid)?;
        Ok(self.grad_m_values(u.values()))
    }

    pub(crate) fn grad_m_values(&self, u: &[f64]) -> f64 {
        let nf = self.free();
        let mut v = u[..nf].to_vec();
        for _ in 0..self.m() / 2 {
            v = self.lap_free.matvec(&v);
        }
        if self.m().is_multiple_of(2) {
            v.iter().zip(self.grid.weights()).map(|(x, w)| w * x * x).sum()
        } else {
            v.push(0.0);
            let d = self.first_derivative(&v);
            d.iter().zip(&self.edge_weight).map(|(g, e)| e * g * g).sum()
        }
    }

    pub(crate) fn hardy_values(&self, u: &[f64], mu: f64) -> f64 {
        if mu == 0.0 {
            return 0.0;
        }
        let nf = self.free();
        mu * u[..nf].iter().zip(&self.hardy_weight).map(|(v, h)| h * v * v).sum::<f64>()
    }

    /// Euclidean gradient of `[u]_mu^2` with respect to the nodal values
    /// (boundary component zero).
    pub(crate) fn bracket_gradient(&self, u: &[f64], mu: f64) -> Vec<f64> {
        let nf = self.free();
        let mut g = self.poly_free.matvec(&u[..nf]);
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = 2.0 * (*gi + mu * self.hardy_weight[i] * u[i]);
        }
        g.push(0.0);
        g
    }

    /// Cholesky factor of `W + A + mu * Hardy` on the free nodes, the Sobolev
    /// metric used to precondition gradients.
    pub fn sobolev_metric(&self, mu: f64) -> Result<BandCholesky> {
        let nf = self.free();
        let w = self.grid.weights();
        let mut diag: Vec<f64> = w[..nf].to_vec();
        for (d, h) in diag.iter_mut().zip(&self.hardy_weight) {
            *d += mu * h;
        }
        BandCholesky::factor(&self.poly_free.plus(1.0, &BandMatrix::diagonal(&diag)))
    }

    pub fn stiffness(&self) -> &BandMatrix {
        &self.stiffness_free
    }
}

/// `mu * int u^2 / |x|^{2m} dx`.
pub fn hardy_term(ops: &OperatorSet, u: &RadialFunction, mu: f64) -> Result<f64> {
    u.ensure_grid(ops.grid())?;
    Ok(ops.hardy_values(u.values(), mu))
}

/// `[u]_mu^2 = |nabla^m u|_2^2 + mu int u^2/|x|^{2m}`.
pub fn bracket_mu(ops: &OperatorSet, u: &RadialFunction, mu: f64) -> Result<f64> {
    Ok(ops.grad_m_norm_sq(u)? + hardy_term(ops, u, mu)?)
}

/// `||u||_mu^2 = [u]_mu^2 + |u|_2^2`.
pub fn norm_mu_sq(ops: &OperatorSet, u: &RadialFunction, mu: f64) -> Result<f64> {
    Ok(bracket_mu(ops, u, mu)? + u.mass())
}

pub fn grad_m_norm_sq(ops: &OperatorSet, u: &RadialFunction) -> Result<f64> {
    ops.grad_m_norm_sq(u)
}

/// Behaviour of the Hardy integrand near the origin.
///
/// The contribution of the innermost two decades `[r_1, 10 r_1)` and
/// `[10 r_1, 100 r_1)` is compared; a profile with `u(0) != 0` contributes
/// the same amount per decade, so a ratio near one means the discrete value
/// keeps growing as the grid is extended toward the origin.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HardyDiagnostic {
    pub value: f64,
    pub decade_ratio: Option<f64>,
    pub singular_at_origin: bool,
}

pub fn hardy_diagnostic(ops: &OperatorSet, u: &RadialFunction, mu: f64) -> Result<HardyDiagnostic> {
    let value = hardy_term(ops, u, mu)?;
    let nodes = ops.grid().nodes();
    let r1 = nodes[0];
    let nf = ops.free();
    let mut decades = [0.0_f64; 2];
    let mut reached = false;
    for i in 0..nf {
        let d = (nodes[i] / r1).log10().floor() as usize;
        if d >= 2 {
            reached = true;
            break;
        }
        decades[d] += ops.hardy_weight[i] * u.values()[i].powi(2);
    }
    let decade_ratio = if reached && decades[1] > 0.0 { Some(decades[0] / decades[1]) } else { None };
    let singular_at_origin = mu > 0.0 && decade_ratio.is_some_and(|q| q > 0.5);
    Ok(HardyDiagnostic { value, decade_ratio, singular_at_origin })
}
