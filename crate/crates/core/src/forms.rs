//! Matrices of the bilinear form B_{k,lambda,mu}, the rho0'-weighted mass form
//! and the wall trace functionals.
//!
//! With `psi_j` the basis functions,
//!
//! ```text
//! K_visc = int psi_i'' psi_j'' + 2 k^2 psi_i' psi_j' + k^4 psi_i psi_j
//! K_dens = int rho0 (k^2 psi_i psi_j + psi_i' psi_j')
//! M      = int rho0' psi_i psi_j
//! B(lambda, mu) = lambda K_dens + mu K_visc - xi_- t_- t_-^T - xi_+ t_+ t_+^T
//! ```
//!
//! where `t_-`, `t_+` hold the basis slopes at the walls. The boundary part is
//! kept as two rank-one factors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::SpectralBasis;
use crate::error::{invalid, Error, Result};
use crate::profile::DensityProfile;

/// Navier-slip coefficients at the lower and upper walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipCoefficients {
    pub xi_minus: f64,
    pub xi_plus: f64,
}

impl SlipCoefficients {
    pub fn new(xi_minus: f64, xi_plus: f64) -> Result<Self> {
        for (name, v) in [("xi_minus", xi_minus), ("xi_plus", xi_plus)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be a finite nonnegative number, got {v}")));
            }
        }
        Ok(Self { xi_minus, xi_plus })
    }

    /// No slip at either wall.
    pub fn none() -> Self {
        Self { xi_minus: 0.0, xi_plus: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.xi_minus == 0.0 && self.xi_plus == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct AssembledOperators {
    k: f64,
    k_visc: DMatrix<f64>,
    k_dens: DMatrix<f64>,
    m_rho_prime: DMatrix<f64>,
    t_minus: DVector<f64>,
    t_plus: DVector<f64>,
    slip: SlipCoefficients,
    profile: DensityProfile,
    basis: Arc<SpectralBasis>,
}

/// Assembles all form matrices for wave number `k`.
pub fn assemble(
    basis: Arc<SpectralBasis>,
    profile: &DensityProfile,
    k: f64,
    slip: SlipCoefficients,
) -> Result<AssembledOperators> {
    if k == 0.0 || !k.is_finite() {
        return Err(invalid(format!("wave number must be finite and nonzero, got {k}")));
    }
    SlipCoefficients::new(slip.xi_minus, slip.xi_plus)?;
    let k2 = k * k;
    let k_visc = viscous_matrix(&basis, k);
    let r00 = basis.weighted_gram(0, 0, |x| profile.rho(x));
    let r11 = basis.weighted_gram(1, 1, |x| profile.rho(x));
    let k_dens = symmetrize(r00 * k2 + r11);
    let m_rho_prime = basis.weighted_gram(0, 0, |x| profile.rho_prime(x));
    Ok(AssembledOperators {
        k,
        k_visc,
        k_dens,
        m_rho_prime,
        t_minus: basis.trace_d1_minus().clone(),
        t_plus: basis.trace_d1_plus().clone(),
        slip,
        profile: profile.clone(),
        basis,
    })
}

/// `int psi_i'' psi_j'' + 2 k^2 psi_i' psi_j' + k^4 psi_i psi_j`; `k = 0` leaves the curvature term.
pub fn viscous_matrix(basis: &SpectralBasis, k: f64) -> DMatrix<f64> {
    let k2 = k * k;
    let g22 = basis.weighted_gram(2, 2, |_| 1.0);
    if k2 == 0.0 {
        return g22;
    }
    let g00 = basis.weighted_gram(0, 0, |_| 1.0);
    let g11 = basis.weighted_gram(1, 1, |_| 1.0);
    symmetrize(g22 + g11 * (2.0 * k2) + g00 * (k2 * k2))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl AssembledOperators {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn k_visc(&self) -> &DMatrix<f64> {
        &self.k_visc
    }

    pub fn k_dens(&self) -> &DMatrix<f64> {
        &self.k_dens
    }

    pub fn m_rho_prime(&self) -> &DMatrix<f64> {
        &self.m_rho_prime
    }

    pub fn t_minus(&self) -> &DVector<f64> {
        &self.t_minus
    }

    pub fn t_plus(&self) -> &DVector<f64> {
        &self.t_plus
    }

    pub fn slip(&self) -> SlipCoefficients {
        self.slip
    }

    pub fn profile(&self) -> &DensityProfile {
        &self.profile
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    /// `xi_- t_- t_-^T + xi_+ t_+ t_+^T`.
    pub fn boundary_matrix(&self) -> DMatrix<f64> {
        &self.t_minus * self.t_minus.transpose() * self.slip.xi_minus
            + &self.t_plus * self.t_plus.transpose() * self.slip.xi_plus
    }

    /// Dense matrix of B_{k,lambda,mu}.
    pub fn b_matrix(&self, lambda: f64, mu: f64) -> DMatrix<f64> {
        &self.k_dens * lambda + &self.k_visc * mu - self.boundary_matrix()
    }

    /// Boundary quadratic form `xi_- phi'(-1)^2 + xi_+ phi'(1)^2`.
    pub fn boundary_form(&self, u: &DVector<f64>) -> f64 {
        let a = self.t_minus.dot(u);
        let b = self.t_plus.dot(u);
        self.slip.xi_minus * a * a + self.slip.xi_plus * b * b
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.n_modes() {
            return Err(invalid(format!(
                "coefficient vector has length {}, expected {}",
                v.len(),
                self.n_modes()
            )));
        }
        Ok(())
    }
}

/// `u^T B(lambda, mu) v`.
pub fn bilinear_value(
    ops: &AssembledOperators,
    lambda: f64,
    mu: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    ops.check_len(u)?;
    ops.check_len(v)?;
    let interior = lambda * u.dot(&(&ops.k_dens * v)) + mu * u.dot(&(&ops.k_visc * v));
    let boundary = ops.slip.xi_minus * ops.t_minus.dot(u) * ops.t_minus.dot(v)
        + ops.slip.xi_plus * ops.t_plus.dot(u) * ops.t_plus.dot(v);
    Ok(interior - boundary)
}

/// Smallest generalized eigenvalue of the pencil (B(lambda, mu), K_visc).
///
/// Positive exactly when the discrete form is coercive. At `lambda = 0` it
/// equals `mu` minus the discrete critical viscosity.
pub fn coercivity_margin(ops: &AssembledOperators, lambda: f64, mu: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !(mu > 0.0) {
        return Err(invalid(format!(
            "coercivity margin needs lambda >= 0 and mu > 0, got lambda = {lambda}, mu = {mu}"
        )));
    }
    let b = ops.b_matrix(lambda, mu);
    let pencil = SymmetricPencil::new(&ops.k_visc)?;
    let eig = pencil.eigen(&b);
    Ok(eig.values.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Eigen-decomposition of a symmetric-definite pencil.
pub(crate) struct PencilEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns are the pencil eigenvectors, in the original coordinates.
    pub vectors: DMatrix<f64>,
}

/// Reduction of `A x = eta P x` with `P` symmetric positive definite to a
/// standard symmetric problem through the Cholesky factor of the
/// Jacobi-scaled `P`.
pub(crate) struct SymmetricPencil {
    scale: DVector<f64>,
    factor: DMatrix<f64>,
}

impl SymmetricPencil {
    pub fn new(p: &DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        let mut scale = DVector::zeros(n);
        for i in 0..n {
            let d = p[(i, i)];
            if !(d > 0.0) {
                return Err(Error::Numerical("pencil matrix has a nonpositive diagonal".into()));
            }
            scale[i] = 1.0 / d.sqrt();
        }
        let scaled = Self::scale_matrix(p, &scale);
        let chol = scaled
            .cholesky()
            .ok_or_else(|| Error::Numerical("pencil matrix is not positive definite".into()))?;
        Ok(Self { scale, factor: chol.l() })
    }

    fn scale_matrix(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out[(i, j)] *= s[i] * s[j];
            }
        }
        out
    }

    /// `P^-1 rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = rhs.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        let y = self
            .factor
            .solve_lower_triangular(&scaled)
            .expect("Cholesky factor has a positive diagonal");
        let mut z = self
            .factor
            .transpose()
            .solve_upper_triangular(&y)
            .expect("Cholesky factor has a positive diagonal");
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        z
    }

    pub fn eigen(&self, a: &DMatrix<f64>) -> PencilEigen {
        let scaled = Self::scale_matrix(a, &self.scale);
        let l = &self.factor;
        // C = L^-1 (S A S) L^-T
        let half = l
            .solve_lower_triangular(&scaled)
            .expect("Cholesky factor has a positive diagonal");
        let c = l
            .solve_lower_triangular(&half.transpose())
            .expect("Cholesky factor has a positive diagonal");
        let c = symmetrize(c);
        let eig = c.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let n = a.nrows();
        let mut vectors = DMatrix::zeros(n, n);
        let lt = l.transpose();
        for (col, &i) in order.iter().enumerate() {
            let y = eig.eigenvectors.column(i).into_owned();
            let z = lt
                .solve_upper_triangular(&y)
                .expect("Cholesky factor has a positive diagonal");
            vectors.set_column(col, &z.component_mul(&self.scale));
        }
        PencilEigen { values, vectors }
    }
}
