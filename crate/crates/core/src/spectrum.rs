//! Eigenvalues gamma_n(k, lambda, mu) of the compact self-adjoint operator
//! behind `gamma B_{k,lambda,mu}(phi, .) = int rho0' phi .`.
//!
//! Discretely this is the symmetric-definite pencil `M phi = gamma B phi`,
//! with `B` positive definite in the coercive regime.

use nalgebra::DVector;

use crate::critical::mu_c_closed_form;
use crate::error::{invalid, Error, Result};
use crate::forms::{AssembledOperators, SymmetricPencil};

/// Relative gap below which two eigenvalues count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpectrumSlice {
    pub k: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Descending, all positive.
    pub gammas: Vec<f64>,
    /// Coefficient vectors with unit L2 norm.
    pub eigenvectors: Vec<DVector<f64>>,
}

fn subcritical(ops: &AssembledOperators, mu: f64) -> Error {
    let mu_c = mu_c_closed_form(ops.k().abs(), ops.slip()).unwrap_or(f64::NAN);
    Error::SubcriticalViscosity { k: ops.k(), mu, mu_c }
}

/// Rejects viscosities at or below mu_c(k, Xi).
pub fn ensure_supercritical(ops: &AssembledOperators, mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid(format!("viscosity must be positive, got {mu}")));
    }
    let mu_c = mu_c_closed_form(ops.k().abs(), ops.slip())?;
    if mu <= mu_c {
        return Err(Error::SubcriticalViscosity { k: ops.k(), mu, mu_c });
    }
    Ok(())
}

/// The `m` largest gamma_n with their eigenfunctions.
pub fn gamma_spectrum(ops: &AssembledOperators, lambda: f64, mu: f64, m: usize) -> Result<SpectrumSlice> {
    if m == 0 || m > ops.n_modes() {
        return Err(invalid(format!(
            "number of eigenpairs must be in 1..={}, got {m}",
            ops.n_modes()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    ensure_supercritical(ops, mu)?;
    let b = ops.b_matrix(lambda, mu);
    let pencil = SymmetricPencil::new(&b).map_err(|_| subcritical(ops, mu))?;
    let eig = pencil.eigen(ops.m_rho_prime());

    let basis = ops.basis();
    let mut pairs: Vec<(f64, usize, DVector<f64>)> = eig
        .values
        .iter()
        .enumerate()
        .rev()
        .map(|(i, &gamma)| {
            let mut v = eig.vectors.column(i).into_owned();
            let norm = basis.l2_norm(&v);
            v /= norm;
            let d = ops.t_minus().dot(&v);
            let d_scale: f64 = ops.t_minus().iter().zip(v.iter()).map(|(t, c)| (t * c).abs()).sum();
            let flip = if d.abs() > 1e-12 * d_scale {
                d < 0.0
            } else {
                value_at_zero(&v) < 0.0
            };
            if flip {
                v = -v;
            }
            let changes = sign_changes(&basis.expansion_at_nodes(&v, 0).expect("matching length"));
            (gamma, changes, v)
        })
        .collect();
    let top = pairs.first().map(|p| p.0.abs()).unwrap_or(1.0);
    pairs.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= TIE_TOLERANCE * top {
            a.1.cmp(&b.1)
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    pairs.truncate(m);
    if let Some(bad) = pairs.iter().find(|p| !(p.0 > 0.0)) {
        return Err(Error::Numerical(format!("non-positive eigenvalue gamma = {}", bad.0)));
    }
    Ok(SpectrumSlice {
        k: ops.k(),
        lambda,
        mu,
        gammas: pairs.iter().map(|p| p.0).collect(),
        eigenvectors: pairs.into_iter().map(|p| p.2).collect(),
    })
}

/// Value at x = 0 of `sum c_j (T_{j+2} - T_j)`: T_m(0) vanishes for odd m and
/// alternates for even m, so psi_j(0) = 2 (-1)^{j/2 + 1} for even j.
fn value_at_zero(c: &DVector<f64>) -> f64 {
    c.iter()
        .enumerate()
        .filter(|(j, _)| j % 2 == 0)
        .map(|(j, v)| if (j / 2) % 2 == 0 { -2.0 * v } else { 2.0 * v })
        .sum()
}

fn sign_changes(values: &DVector<f64>) -> usize {
    let scale = values.amax();
    let mut last = 0.0;
    let mut count = 0;
    for &v in values.iter() {
        if v.abs() <= 1e-12 * scale {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Relative defect of `gamma_n B(phi_n, phi_n) = int rho0' phi_n^2`.
pub fn eigen_identity_residual(ops: &AssembledOperators, slice: &SpectrumSlice, index: usize) -> Result<f64> {
    let phi = slice
        .eigenvectors
        .get(index)
        .ok_or_else(|| invalid(format!("eigenpair {index} not in slice")))?;
    let lhs = slice.gammas[index] * crate::forms::bilinear_value(ops, slice.lambda, slice.mu, phi, phi)?;
    let rhs = phi.dot(&(ops.m_rho_prime() * phi));
    Ok((lhs - rhs).abs() / rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityFinding {
    /// 1-based eigenvalue index.
    pub n: usize,
    pub lambda_from: f64,
    pub lambda_to: f64,
    pub gamma_from: f64,
    pub gamma_to: f64,
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub holds: bool,
    pub findings: Vec<MonotonicityFinding>,
}

/// Checks that each of the first `m` gamma_n strictly decreases along an increasing lambda grid.
pub fn gamma_monotonicity_check(
    ops: &AssembledOperators,
    mu: f64,
    lambda_grid: &[f64],
    m: usize,
) -> Result<MonotonicityReport> {
    if lambda_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("lambda grid must be strictly increasing"));
    }
    if lambda_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(invalid("lambda grid must be nonnegative"));
    }
    let slices = lambda_grid
        .iter()
        .map(|&l| gamma_spectrum(ops, l, mu, m))
        .collect::<Result<Vec<_>>>()?;
    let mut findings = Vec::new();
    for pair in slices.windows(2) {
        for n in 0..m {
            let (a, b) = (pair[0].gammas[n], pair[1].gammas[n]);
            findings.push(MonotonicityFinding {
                n: n + 1,
                lambda_from: pair[0].lambda,
                lambda_to: pair[1].lambda,
                gamma_from: a,
                gamma_to: b,
                decreasing: a > b,
            });
        }
    }
    Ok(MonotonicityReport {
        holds: findings.iter().all(|f| f.decreasing),
        findings,
    })
}
