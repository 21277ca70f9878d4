//! Critical viscosity mu_c(k, Xi): the supremum over phi in H^2 with
//! phi(+-1) = 0 of
//!
//! ```text
//!   xi_- phi'(-1)^2 + xi_+ phi'(1)^2
//!   --------------------------------------------
//!   int phi''^2 + 2 k^2 phi'^2 + k^4 phi^2
//! ```
//!
//! Closed forms, a Galerkin maximization, the k -> 0 and k -> infinity
//! asymptotics, the suprema, and the extremal functions.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::SpectralBasis;
use crate::error::{invalid, Error, Result};
use crate::forms::{viscous_matrix, SlipCoefficients, SymmetricPencil};

/// Beyond this wave number the closed form switches to e^{-4k}-scaled ratios.
pub const SCALED_FORM_THRESHOLD: f64 = 20.0;

/// Largest wave number for which extremal functions are built; their
/// normalizations involve sinh(4k) sinh^2(2k).
pub const EXTREMAL_K_MAX: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalMethod {
    ClosedForm,
    Numeric,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalViscosityResult {
    pub value: f64,
    /// Basis coefficients of the maximizer, scaled so the boundary form is 1.
    /// Empty when both slip coefficients vanish.
    pub maximizer_coeffs: DVector<f64>,
    pub method: CriticalMethod,
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(invalid(format!("wave number k must be positive (use mu_c(-k) = mu_c(k)), got {k}")));
    }
    Ok(())
}

/// sinh(z) - z without cancellation for small z.
fn sinh_minus_x(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        return z.sinh() - z;
    }
    let z2 = z * z;
    let mut term = z * z2 / 6.0;
    let mut sum = 0.0_f64;
    let mut n = 1.0;
    while term.abs() > 1e-18 * sum.abs() {
        sum += term;
        term *= z2 / ((2.0 * n + 2.0) * (2.0 * n + 3.0));
        n += 1.0;
    }
    sum
}

/// sinh(z) - z cosh(z) without cancellation for small z.
fn sinh_minus_x_cosh(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        return z.sinh() - z * z.cosh();
    }
    // -sum_{n>=1} 2n z^{2n+1} / (2n+1)!
    let z2 = z * z;
    let mut power = z * z2 / 6.0;
    let mut sum = 0.0_f64;
    let mut n = 1.0;
    loop {
        let term = 2.0 * n * power;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        sum -= term;
        power *= z2 / ((2.0 * n + 2.0) * (2.0 * n + 3.0));
        n += 1.0;
    }
    sum
}

/// Closed-form critical viscosity.
pub fn mu_c_closed_form(k: f64, slip: SlipCoefficients) -> Result<f64> {
    check_k(k)?;
    SlipCoefficients::new(slip.xi_minus, slip.xi_plus)?;
    if slip.is_zero() {
        return Ok(0.0);
    }
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    if xp == 0.0 || xm == 0.0 {
        return Ok((xp + xm) * one_sided_factor(k));
    }
    let (sum, diff) = (xp + xm, xp - xm);
    if k <= SCALED_FORM_THRESHOLD {
        let z = 2.0 * k;
        let s = z.sinh();
        let a = sinh_minus_x(2.0 * z) / 2.0;
        let b = sinh_minus_x_cosh(z);
        let e = sinh_minus_x(z) * (s + z);
        let root = (b * b * sum * sum + s * s * e * diff * diff).sqrt();
        Ok((a * sum + root) / (4.0 * k * s * s))
    } else {
        let r = (-4.0 * k).exp();
        let em = (-2.0 * k).exp();
        let om = 1.0 - r;
        let c_over_s = (1.0 + r) / om;
        let two_k_over_s2 = 8.0 * k * r / (om * om);
        let b_over_s2 = 2.0 * em / om - 4.0 * k * em * (1.0 + r) / (om * om);
        let e_over_s2 = 1.0 - 16.0 * k * k * r / (om * om);
        let root = (b_over_s2 * b_over_s2 * sum * sum + e_over_s2 * diff * diff).sqrt();
        Ok(((c_over_s - two_k_over_s2) * sum + root) / (4.0 * k))
    }
}

/// (sinh 4k - 4k) / (4k sinh^2 2k), the one-sided critical viscosity per unit slip.
fn one_sided_factor(k: f64) -> f64 {
    if k <= SCALED_FORM_THRESHOLD {
        let s = (2.0 * k).sinh();
        sinh_minus_x(4.0 * k) / (4.0 * k * s * s)
    } else {
        let r = (-4.0 * k).exp();
        let om = 1.0 - r;
        (2.0 * (1.0 + r) / om - 16.0 * k * r / (om * om)) / (4.0 * k)
    }
}

/// Critical viscosity of the Galerkin space spanned by `basis`.
///
/// The pencil (A, K_visc) with A of rank at most two is reduced to the 2x2
/// matrix `G = W^T K_visc^-1 W`, `W = [sqrt(xi_-) t_-, sqrt(xi_+) t_+]`.
pub fn mu_c_numeric(basis: &SpectralBasis, k: f64, slip: SlipCoefficients) -> Result<CriticalViscosityResult> {
    check_k(k)?;
    numeric_quotient_max(basis, k, slip)
}

fn numeric_quotient_max(basis: &SpectralBasis, k: f64, slip: SlipCoefficients) -> Result<CriticalViscosityResult> {
    SlipCoefficients::new(slip.xi_minus, slip.xi_plus)?;
    if slip.is_zero() {
        return Ok(CriticalViscosityResult {
            value: 0.0,
            maximizer_coeffs: DVector::zeros(0),
            method: CriticalMethod::Numeric,
        });
    }
    let columns: Vec<DVector<f64>> = [
        (slip.xi_minus, basis.trace_d1_minus()),
        (slip.xi_plus, basis.trace_d1_plus()),
    ]
    .iter()
    .filter(|(xi, _)| *xi > 0.0)
    .map(|(xi, t)| *t * xi.sqrt())
    .collect();
    let w = DMatrix::from_columns(&columns);
    let kv = viscous_matrix(basis, k);
    let pencil = SymmetricPencil::new(&kv)
        .map_err(|e| Error::Numerical(format!("viscous matrix factorization failed: {e}")))?;
    let z = pencil.solve(&w);
    let g = w.transpose() * &z;
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty reduced matrix");
    let value = eig.eigenvalues[top];
    let y = eig.eigenvectors.column(top).into_owned();
    let mut phi = z * y;
    let a = basis.trace_d1_minus().dot(&phi);
    let b = basis.trace_d1_plus().dot(&phi);
    let form = slip.xi_minus * a * a + slip.xi_plus * b * b;
    if !(form > 0.0) {
        return Err(Error::Numerical("maximizer has a vanishing boundary form".into()));
    }
    phi /= form.sqrt();
    let lead = if slip.xi_plus > 0.0 { b } else { a };
    if lead < 0.0 {
        phi = -phi;
    }
    Ok(CriticalViscosityResult {
        value,
        maximizer_coeffs: phi,
        method: CriticalMethod::Numeric,
    })
}

/// Supremum over real k > 0, attained as k -> 0.
pub fn mu_c_sup(slip: SlipCoefficients) -> f64 {
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    (xp + xm + (xp * xp - xp * xm + xm * xm).sqrt()) / 3.0
}

/// Supremum over the wave-number lattice (1/L) Z \ {0}; mu_c decreases in k,
/// so this is mu_c(1/L).
pub fn mu_c_lattice(period_l: f64, slip: SlipCoefficients) -> Result<f64> {
    if !(period_l > 0.0) || !period_l.is_finite() {
        return Err(invalid(format!("period L must be positive, got {period_l}")));
    }
    mu_c_closed_form(1.0 / period_l, slip)
}

/// Coefficient c of the expansion mu_c(k) = mu_c_sup + c k^2 + O(k^4):
/// -(2/45) (4 (xi_+ + xi_-) + (4 xi_+^2 - xi_+ xi_- + 4 xi_-^2) / sqrt(xi_+^2 - xi_+ xi_- + xi_-^2)).
///
/// mu_c is even in k, so the remainder has no k^3 term.
pub fn small_k_coefficient(slip: SlipCoefficients) -> f64 {
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    if xp == 0.0 && xm == 0.0 {
        return 0.0;
    }
    let d = (xp * xp - xp * xm + xm * xm).sqrt();
    -(2.0 / 45.0) * (4.0 * (xp + xm) + (4.0 * xp * xp - xp * xm + 4.0 * xm * xm) / d)
}

/// Two-term small-k value; error O(k^4).
pub fn mu_c_small_k(k: f64, slip: SlipCoefficients) -> f64 {
    if slip.is_zero() {
        return 0.0;
    }
    mu_c_sup(slip) + small_k_coefficient(slip) * k * k
}

/// sqrt(2 (xi_+^2 + xi_-^2)) / k, an upper bound for mu_c(k).
pub fn mu_c_high_k_bound(k: f64, slip: SlipCoefficients) -> Result<f64> {
    check_k(k)?;
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    Ok((2.0 * (xp * xp + xm * xm)).sqrt() / k)
}

/// Relative residual of the quadratic satisfied by mu = 1/beta at k > 0:
/// (sinh^2 2k - 4k^2) xi_+ xi_- - 2k (sinh 2k cosh 2k - 2k)(xi_+ + xi_-) mu
/// + 4k^2 (cosh^2 2k - 1) mu^2.
pub fn quadratic_residual(k: f64, slip: SlipCoefficients, mu: f64) -> Result<f64> {
    check_k(k)?;
    if k > SCALED_FORM_THRESHOLD {
        return Err(invalid("quadratic residual is only evaluated for k <= 20"));
    }
    let z = 2.0 * k;
    let s = z.sinh();
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    let t0 = sinh_minus_x(z) * (s + z) * xp * xm;
    let t1 = -2.0 * k * (sinh_minus_x(2.0 * z) / 2.0) * (xp + xm) * mu;
    let t2 = 4.0 * k * k * s * s * mu * mu;
    let scale = t0.abs() + t1.abs() + t2.abs();
    Ok(if scale == 0.0 { 0.0 } else { (t0 + t1 + t2).abs() / scale })
}

/// Relative residual of xi_- xi_+ beta^2 - 2 (xi_+ + xi_-) beta + 3 at k = 0.
pub fn quadratic_residual_zero(slip: SlipCoefficients, beta: f64) -> f64 {
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    let terms = [xm * xp * beta * beta, -2.0 * (xp + xm) * beta, 3.0];
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    terms.iter().sum::<f64>().abs() / scale
}

/// Rayleigh quotient of a basis expansion; at k = 0 the denominator is int phi''^2.
pub fn rayleigh_quotient(basis: &SpectralBasis, k: f64, slip: SlipCoefficients, trial: &DVector<f64>) -> Result<f64> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(invalid(format!("wave number must be nonnegative, got {k}")));
    }
    if trial.len() != basis.n_modes() {
        return Err(invalid(format!(
            "trial has length {}, basis has {} modes",
            trial.len(),
            basis.n_modes()
        )));
    }
    if trial.iter().all(|c| *c == 0.0) {
        return Err(invalid("zero trial function"));
    }
    let a = basis.trace_d1_minus().dot(trial);
    let b = basis.trace_d1_plus().dot(trial);
    let num = slip.xi_minus * a * a + slip.xi_plus * b * b;
    let den = trial.dot(&(viscous_matrix(basis, k) * trial));
    Ok(num / den)
}

/// Extremal functions of the quotient.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtremalFunction {
    /// (a x + b) sinh(k x) + (c x + d) cosh(k x), k > 0.
    Hyperbolic { k: f64, a: f64, b: f64, c: f64, d: f64 },
    /// Cubic polynomial with ascending coefficients, k = 0.
    Cubic { coeffs: [f64; 4] },
}

impl ExtremalFunction {
    pub fn k(&self) -> f64 {
        match self {
            ExtremalFunction::Hyperbolic { k, .. } => *k,
            ExtremalFunction::Cubic { .. } => 0.0,
        }
    }

    /// Derivative of the given order (0..=4) at x.
    pub fn eval(&self, x: f64, order: usize) -> f64 {
        match self {
            ExtremalFunction::Hyperbolic { k, a, b, c, d } => {
                // d/dx maps (a, b, c, d) to (k c, k d + a, k a, k b + c).
                let (mut a, mut b, mut c, mut d) = (*a, *b, *c, *d);
                for _ in 0..order {
                    (a, b, c, d) = (k * c, k * d + a, k * a, k * b + c);
                }
                let (sh, ch) = ((k * x).sinh(), (k * x).cosh());
                (a * x + b) * sh + (c * x + d) * ch
            }
            ExtremalFunction::Cubic { coeffs } => {
                let mut p = coeffs.to_vec();
                for _ in 0..order {
                    p = p.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
                }
                p.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
        }
    }

    /// `xi_- phi'(-1)^2 + xi_+ phi'(1)^2`.
    pub fn boundary_form(&self, slip: SlipCoefficients) -> f64 {
        let a = self.eval(-1.0, 1);
        let b = self.eval(1.0, 1);
        slip.xi_minus * a * a + slip.xi_plus * b * b
    }

    /// `int phi''^2 + 2 k^2 phi'^2 + k^4 phi^2` by a 200-point Gauss rule.
    pub fn interior_energy(&self) -> f64 {
        let k2 = self.k() * self.k();
        let rule = GaussLegendre::new(NonZeroUsize::new(200).expect("nonzero"));
        rule.nodes()
            .zip(rule.weights())
            .map(|(&x, &w)| {
                let (p0, p1, p2) = (self.eval(x, 0), self.eval(x, 1), self.eval(x, 2));
                w * (p2 * p2 + 2.0 * k2 * p1 * p1 + k2 * k2 * p0 * p0)
            })
            .sum()
    }

    pub fn quotient(&self, slip: SlipCoefficients) -> f64 {
        self.boundary_form(slip) / self.interior_energy()
    }

    fn negate(self) -> Self {
        match self {
            ExtremalFunction::Hyperbolic { k, a, b, c, d } => ExtremalFunction::Hyperbolic {
                k,
                a: -a,
                b: -b,
                c: -c,
                d: -d,
            },
            ExtremalFunction::Cubic { coeffs } => ExtremalFunction::Cubic {
                coeffs: coeffs.map(|c| -c),
            },
        }
    }

    /// Sign convention: phi'(1) >= 0, or phi'(-1) >= 0 when xi_+ = 0.
    fn oriented(self, slip: SlipCoefficients) -> Self {
        let at = if slip.xi_plus > 0.0 { 1.0 } else { -1.0 };
        if self.eval(at, 1) < 0.0 {
            self.negate()
        } else {
            self
        }
    }
}

/// Closed-form extremal attaining mu_c(k, Xi), normalized so the boundary
/// form equals 1. `k = 0` gives the cubic extremal of the k -> 0 problem.
pub fn extremal_closed_form(k: f64, slip: SlipCoefficients) -> Result<ExtremalFunction> {
    SlipCoefficients::new(slip.xi_minus, slip.xi_plus)?;
    if slip.is_zero() {
        return Err(Error::NoExtremal);
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(invalid(format!("wave number must be nonnegative, got {k}")));
    }
    if k > EXTREMAL_K_MAX {
        return Err(invalid(format!(
            "extremal functions are built for k <= {EXTREMAL_K_MAX}, got {k}"
        )));
    }
    let (xp, xm) = (slip.xi_plus, slip.xi_minus);
    let f = if k == 0.0 {
        cubic_extremal(xp, xm)
    } else if xm == 0.0 {
        one_sided_extremal(k, xp)
    } else if xp == 0.0 {
        // mirror image x -> -x of the upper-wall extremal
        match one_sided_extremal(k, xm) {
            ExtremalFunction::Hyperbolic { k, a, b, c, d } => ExtremalFunction::Hyperbolic {
                k,
                a,
                b: -b,
                c: -c,
                d,
            },
            other => other,
        }
    } else {
        two_sided_extremal(k, xp, xm)?
    };
    Ok(f.oriented(slip))
}

fn one_sided_extremal(k: f64, xi: f64) -> ExtremalFunction {
    let t = k.tanh();
    let t2 = t * t;
    let b = 1.0 / (xi.sqrt() * k.cosh() * (k * (t2 - 1.0).powi(2) - t * (t2 + 1.0)));
    ExtremalFunction::Hyperbolic {
        k,
        a: -b * t2,
        b,
        c: -b * t,
        d: b * t2 * t,
    }
}

fn two_sided_extremal(k: f64, xp: f64, xm: f64) -> Result<ExtremalFunction> {
    // The direct expressions for a_{k,Xi}, its denominator and the
    // normalization Q cancel catastrophically once k is moderately large.
    // Substituting 4k s^2 mu_c = (c-1)(s+2k) Sigma + delta, with
    // delta = s^2 e D^2 / (R + |b| Sigma), turns each into a sum of terms of
    // one sign. Here s = sinh 2k, c = cosh 2k, b = s - 2k c < 0,
    // e = s^2 - 4k^2, Sigma = xi_+ + xi_-, D = xi_+ - xi_-,
    // R = sqrt(b^2 Sigma^2 + s^2 e D^2).
    let z = 2.0 * k;
    let s = z.sinh();
    let b = sinh_minus_x_cosh(z);
    let e = sinh_minus_x(z) * (s + z);
    let s4m = sinh_minus_x(2.0 * z);
    let cm1 = 2.0 * k.sinh().powi(2);
    let cp1 = 2.0 * k.cosh().powi(2);
    let (sum, diff) = (xp + xm, (xp - xm).abs());
    let xi = xp.min(xm);
    let r = (b * b * sum * sum + s * s * e * diff * diff).sqrt();
    let delta = s * s * e * diff * diff / (r - b * sum);
    let p = cm1 * (s + z) * diff;
    let mu = (cm1 * (s + z) * sum + delta) / (4.0 * k * s * s);
    let beta = 1.0 / mu;
    // 2k(c-1) - beta xi (s - 2k) and the ratio a_{k,Xi}
    let denom = beta * (p - 4.0 * b * xi + delta) / (2.0 * cp1);
    let ratio = (cp1 / cm1) * (p + delta) / (p - 4.0 * b * xi + delta);
    // (sinh 4k - 4k)^2 - 4 e s^2 = 4 b^2 completes the square in Q
    let q = (e * beta * beta * (2.0 * b * xi - p - delta).powi(2) + 16.0 * k * k * s * s * b * b) / s4m;
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::Numerical(format!("extremal normalization is not finite and positive at k = {k}")));
    }
    let a = beta.sqrt() * k.cosh() * denom / (k * q).sqrt();
    let bb = if xp <= xm { a * ratio } else { -a * ratio };
    let t = k.tanh();
    Ok(ExtremalFunction::Hyperbolic {
        k,
        a,
        b: bb,
        c: -bb * t,
        d: -a * t,
    })
}

fn cubic_extremal(xp: f64, xm: f64) -> ExtremalFunction {
    // (x^2 - 1)(p x + q) = -q - p x + q x^2 + p x^3
    let from = |p: f64, q: f64| ExtremalFunction::Cubic { coeffs: [-q, -p, q, p] };
    if xm == 0.0 {
        let s = 1.0 / (8.0 * xp.sqrt());
        from(s, 3.0 * s)
    } else if xp == 0.0 {
        let s = 1.0 / (8.0 * xm.sqrt());
        from(s, -3.0 * s)
    } else {
        let beta = 1.0 / mu_c_sup(SlipCoefficients { xi_minus: xm, xi_plus: xp });
        let bx = beta * xm;
        let a = (1.0 - bx) / (3.0 - bx);
        let b = beta.sqrt() * (3.0 - bx) / (4.0 * 2f64.sqrt() * (bx * bx - 3.0 * bx + 3.0).sqrt());
        from(b * a, b)
    }
}

/// L2 cosine similarity between a basis expansion and an extremal function,
/// sampled on the basis quadrature rule.
pub fn cosine_similarity(basis: &SpectralBasis, coeffs: &DVector<f64>, f: &ExtremalFunction) -> Result<f64> {
    let u = basis.expansion_at_nodes(coeffs, 0)?;
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for ((&x, &w), ui) in basis.quad_nodes().iter().zip(basis.quad_weights()).zip(u.iter()) {
        let vi = f.eval(x, 0);
        uv += w * ui * vi;
        uu += w * ui * ui;
        vv += w * vi * vi;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(invalid("cosine similarity of a zero function"));
    }
    Ok(uv / (uu * vv).sqrt())
}
