//! Chebyshev-difference basis on (-1, 1).
//!
//! The trial functions are `psi_j = T_{j+2} - T_j`, `j = 0..n_modes`, which
//! vanish at both walls. Nothing else is imposed on them: the slip conditions
//! on the second derivative come out of the weak form.
//!
//! Derivatives are exact. Basis tables use the differentiated three-term
//! recurrence `T_{m+1}^(d) = 2x T_m^(d) + 2d T_m^(d-1) - T_{m-1}^(d)`, and
//! expansions are differentiated in coefficient space before Clenshaw
//! summation.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Highest derivative order carried by the basis tables.
pub const MAX_DERIVATIVE: usize = 4;

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    n_modes: usize,
    quad_nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    /// `tables[d][(j, q)] = psi_j^(d)(x_q)`.
    tables: [DMatrix<f64>; MAX_DERIVATIVE + 1],
    trace_d1_minus: DVector<f64>,
    trace_d1_plus: DVector<f64>,
    trace_d2_minus: DVector<f64>,
    trace_d2_plus: DVector<f64>,
}

/// Builds the basis with `n_modes` functions and its Gauss-Legendre rule.
pub fn build_basis(n_modes: usize) -> Result<SpectralBasis> {
    if n_modes < 4 {
        return Err(invalid(format!("n_modes must be at least 4, got {n_modes}")));
    }
    let n_nodes = quadrature_nodes_for(n_modes);
    let rule = GaussLegendre::new(NonZeroUsize::new(n_nodes).expect("positive node count"));
    let mut pairs: Vec<(f64, f64)> = rule.nodes().copied().zip(rule.weights().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (quad_nodes, quad_weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();

    let tables = std::array::from_fn(|_| DMatrix::zeros(n_modes, n_nodes));
    let mut basis = SpectralBasis {
        n_modes,
        quad_nodes,
        quad_weights,
        tables,
        trace_d1_minus: DVector::zeros(n_modes),
        trace_d1_plus: DVector::zeros(n_modes),
        trace_d2_minus: DVector::zeros(n_modes),
        trace_d2_plus: DVector::zeros(n_modes),
    };

    for q in 0..n_nodes {
        let cheb = chebyshev_derivatives(n_modes + 1, basis.quad_nodes[q]);
        for j in 0..n_modes {
            for (d, table) in basis.tables.iter_mut().enumerate() {
                table[(j, q)] = cheb[j + 2][d] - cheb[j][d];
            }
        }
    }
    for j in 0..n_modes {
        let (m, p) = ((j + 2) as f64, j as f64);
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        basis.trace_d1_plus[j] = m * m - p * p;
        basis.trace_d1_minus[j] = sign * (m * m - p * p);
        // T_m''(1) = m^2 (m^2 - 1) / 3, T_m''(-1) = (-1)^m T_m''(1); psi_j shares the parity of j.
        let d2 = (m * m * (m * m - 1.0) - p * p * (p * p - 1.0)) / 3.0;
        basis.trace_d2_plus[j] = d2;
        basis.trace_d2_minus[j] = -sign * d2;
    }
    Ok(basis)
}

/// Gauss-Legendre node count used for a basis of `n_modes` functions.
pub fn quadrature_nodes_for(n_modes: usize) -> usize {
    2 * n_modes + 4
}

/// Values of `T_0..=T_max_degree` and their first four derivatives at `x`.
pub fn chebyshev_derivatives(max_degree: usize, x: f64) -> Vec<[f64; MAX_DERIVATIVE + 1]> {
    let mut t = vec![[0.0; MAX_DERIVATIVE + 1]; max_degree + 1];
    t[0][0] = 1.0;
    if max_degree == 0 {
        return t;
    }
    t[1][0] = x;
    t[1][1] = 1.0;
    for m in 1..max_degree {
        for d in 0..=MAX_DERIVATIVE {
            let lower = if d > 0 { 2.0 * d as f64 * t[m][d - 1] } else { 0.0 };
            t[m + 1][d] = 2.0 * x * t[m][d] + lower - t[m - 1][d];
        }
    }
    t
}

impl SpectralBasis {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn quad_nodes(&self) -> &[f64] {
        &self.quad_nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Table of `psi_j^(order)` at the quadrature nodes (rows: basis index).
    pub fn table(&self, order: usize) -> &DMatrix<f64> {
        &self.tables[order]
    }

    pub fn basis_values(&self) -> &DMatrix<f64> {
        &self.tables[0]
    }

    pub fn trace_d1_minus(&self) -> &DVector<f64> {
        &self.trace_d1_minus
    }

    pub fn trace_d1_plus(&self) -> &DVector<f64> {
        &self.trace_d1_plus
    }

    pub fn trace_d2_minus(&self) -> &DVector<f64> {
        &self.trace_d2_minus
    }

    pub fn trace_d2_plus(&self) -> &DVector<f64> {
        &self.trace_d2_plus
    }

    /// `sum_q w_q f(x_q)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.quad_nodes
            .iter()
            .zip(&self.quad_weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Weighted Gram matrix `G_ij = int w(x) psi_i^(a) psi_j^(b)` over the quadrature grid.
    pub fn weighted_gram<F: Fn(f64) -> f64>(&self, a: usize, b: usize, weight: F) -> DMatrix<f64> {
        let scaled: Vec<f64> = self
            .quad_nodes
            .iter()
            .zip(&self.quad_weights)
            .map(|(&x, &w)| w * weight(x))
            .collect();
        let left = &self.tables[a];
        let right = &self.tables[b];
        let mut weighted = left.clone();
        for (q, s) in scaled.iter().enumerate() {
            weighted.column_mut(q).scale_mut(*s);
        }
        let gram = &weighted * right.transpose();
        // Symmetrize exactly when both sides use the same derivative order.
        if a == b {
            (&gram + gram.transpose()) * 0.5
        } else {
            gram
        }
    }

    /// Values of the expansion at the quadrature nodes.
    pub fn expansion_at_nodes(&self, coeffs: &DVector<f64>, order: usize) -> Result<DVector<f64>> {
        self.check_coeffs(coeffs)?;
        if order > MAX_DERIVATIVE {
            return Err(invalid(format!("derivative order {order} exceeds {MAX_DERIVATIVE}")));
        }
        Ok(self.tables[order].tr_mul(coeffs))
    }

    /// L2(-1,1) norm of an expansion.
    pub fn l2_norm(&self, coeffs: &DVector<f64>) -> f64 {
        let v = self.tables[0].tr_mul(coeffs);
        v.iter()
            .zip(&self.quad_weights)
            .map(|(f, w)| w * f * f)
            .sum::<f64>()
            .sqrt()
    }

    fn check_coeffs(&self, coeffs: &DVector<f64>) -> Result<()> {
        if coeffs.len() != self.n_modes {
            return Err(invalid(format!(
                "coefficient vector has length {}, basis has {} modes",
                coeffs.len(),
                self.n_modes
            )));
        }
        Ok(())
    }
}

/// Pointwise values of `sum_j c_j psi_j^(order)` at `points`.
pub fn evaluate_expansion(
    basis: &SpectralBasis,
    coeffs: &DVector<f64>,
    points: &[f64],
    derivative_order: usize,
) -> Result<Vec<f64>> {
    basis.check_coeffs(coeffs)?;
    if derivative_order > MAX_DERIVATIVE {
        return Err(invalid(format!(
            "derivative order {derivative_order} exceeds {MAX_DERIVATIVE}"
        )));
    }
    if let Some(x) = points.iter().find(|x| !(-1.0..=1.0).contains(*x)) {
        return Err(invalid(format!("evaluation point {x} outside [-1, 1]")));
    }
    let mut cheb = to_chebyshev(coeffs.as_slice());
    for _ in 0..derivative_order {
        cheb = differentiate_chebyshev(&cheb);
    }
    Ok(points.iter().map(|&x| clenshaw(&cheb, x)).collect())
}

/// Chebyshev coefficients `a_m` of `sum_j c_j (T_{j+2} - T_j)`.
pub fn to_chebyshev(coeffs: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; coeffs.len() + 2];
    for (j, c) in coeffs.iter().enumerate() {
        a[j + 2] += c;
        a[j] -= c;
    }
    a
}

/// Coefficients of the derivative of a Chebyshev series.
pub fn differentiate_chebyshev(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut b = vec![0.0; n];
    for m in (1..n).rev() {
        let next = if m + 1 < n { b[m + 1] } else { 0.0 };
        b[m - 1] = next + 2.0 * m as f64 * a[m];
    }
    b[0] *= 0.5;
    b.truncate(n - 1);
    b
}

/// Clenshaw summation of a Chebyshev series.
pub fn clenshaw(a: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in a.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    a.first().copied().unwrap_or(0.0) + x * b1 - b2
}

/// Least-squares coefficients of a function sampled at the quadrature nodes,
/// projected onto the basis in the L2 inner product.
pub fn project(basis: &SpectralBasis, values_at_nodes: &[f64]) -> Result<DVector<f64>> {
    if values_at_nodes.len() != basis.quad_nodes.len() {
        return Err(invalid("sample count does not match quadrature nodes"));
    }
    let mass = basis.weighted_gram(0, 0, |_| 1.0);
    let rhs = DVector::from_iterator(
        basis.n_modes,
        (0..basis.n_modes).map(|j| {
            (0..values_at_nodes.len())
                .map(|q| basis.quad_weights[q] * basis.tables[0][(j, q)] * values_at_nodes[q])
                .sum::<f64>()
        }),
    );
    mass.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| crate::error::Error::Numerical("basis mass matrix not positive definite".into()))
}
