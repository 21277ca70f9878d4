//! Characteristic growth rates: roots of `g k^2 gamma_n(k, lambda, mu) = lambda`,
//! and the normal modes built on them.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::basis::evaluate_expansion;
use crate::error::{invalid, Error, Result};
use crate::forms::{bilinear_value, AssembledOperators};
use crate::profile::lambda_upper_bound;
use crate::spectrum::{ensure_supercritical, gamma_spectrum};

/// Upper-bracket doublings tried before giving up.
pub const MAX_DOUBLINGS: usize = 10;

const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone)]
pub struct GrowthMode {
    /// 1-based index.
    pub n: usize,
    pub lambda_n: f64,
    /// phi_n in the basis, unit L2 norm.
    pub phi_coeffs: DVector<f64>,
    pub fixed_point_residual: f64,
    pub ode_residual: f64,
    pub bc_residual: f64,
    pub g: f64,
    pub mu: f64,
    ops: Arc<AssembledOperators>,
}

impl GrowthMode {
    pub fn k(&self) -> f64 {
        self.ops.k()
    }

    pub fn operators(&self) -> &Arc<AssembledOperators> {
        &self.ops
    }

    /// phi^(order) at the given points.
    pub fn phi(&self, points: &[f64], order: usize) -> Result<Vec<f64>> {
        evaluate_expansion(self.ops.basis(), &self.phi_coeffs, points, order)
    }

    /// Density amplitude omega = -rho0' phi / lambda.
    pub fn omega(&self, points: &[f64]) -> Result<Vec<f64>> {
        let phi = self.phi(points, 0)?;
        let profile = self.ops.profile();
        Ok(points
            .iter()
            .zip(phi)
            .map(|(&x, p)| -profile.rho_prime(x) * p / self.lambda_n)
            .collect())
    }

    /// Horizontal velocity amplitude theta = -phi' / k.
    pub fn theta(&self, points: &[f64]) -> Result<Vec<f64>> {
        Ok(self.phi(points, 1)?.into_iter().map(|d| -d / self.k()).collect())
    }

    /// Pressure amplitude q = -(lambda rho0 phi' + mu (k^2 phi' - phi''')) / k^2.
    pub fn q(&self, points: &[f64]) -> Result<Vec<f64>> {
        let d1 = self.phi(points, 1)?;
        let d3 = self.phi(points, 3)?;
        let k2 = self.k() * self.k();
        let profile = self.ops.profile();
        Ok(points
            .iter()
            .zip(d1.iter().zip(&d3))
            .map(|(&x, (a, c))| -(self.lambda_n * profile.rho(x) * a + self.mu * (k2 * a - c)) / k2)
            .collect())
    }
}

/// Finds lambda_n for the n-th eigenvalue branch (n >= 1).
pub fn solve_growth_rate(ops: Arc<AssembledOperators>, g: f64, mu: f64, n: usize, tol: f64) -> Result<GrowthMode> {
    if n == 0 || n > ops.n_modes() {
        return Err(invalid(format!("mode index must be in 1..={}, got {n}", ops.n_modes())));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let upper = lambda_upper_bound(ops.profile(), g)?;
    ensure_supercritical(&ops, mu)?;
    let k2 = ops.k() * ops.k();
    let f = |lambda: f64| -> Result<(f64, f64, DVector<f64>)> {
        let slice = gamma_spectrum(&ops, lambda, mu, n)?;
        let gamma = slice.gammas[n - 1];
        let phi = slice.eigenvectors.into_iter().nth(n - 1).expect("n pairs");
        Ok((g * k2 * gamma - lambda, gamma, phi))
    };

    let (mut lo, mut hi) = (0.0, upper);
    let mut f_lo = f(lo)?.0;
    let mut f_hi = f(hi)?.0;
    let mut doublings = 0;
    while f_hi >= 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NoRoot(format!(
                "g k^2 gamma_{n} - lambda stays nonnegative up to lambda = {hi}"
            )));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi)?.0;
        doublings += 1;
    }
    if !(f_lo > 0.0) {
        return Err(Error::NoRoot(format!("g k^2 gamma_{n} - lambda is not positive at lambda = {lo}")));
    }
    // Relative bracket: higher branches have lambda_n far below 1.
    let mut steps = 0;
    while hi - lo > tol * lo.max(f64::MIN_POSITIVE) || lo == 0.0 {
        if steps == MAX_BISECTIONS {
            return Err(Error::NoRoot(format!("bisection for lambda_{n} did not converge")));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?.0;
        if v > 0.0 {
            lo = mid;
            f_lo = v;
        } else {
            hi = mid;
            f_hi = v;
        }
        steps += 1;
    }
    let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
    let lambda = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
    let (_, gamma, phi) = f(lambda)?;
    let target = lambda / (g * k2);
    let mut mode = GrowthMode {
        n,
        lambda_n: lambda,
        phi_coeffs: phi,
        fixed_point_residual: (gamma - target).abs() / target,
        ode_residual: 0.0,
        bc_residual: 0.0,
        g,
        mu,
        ops,
    };
    let nodes = mode.ops.basis().quad_nodes().to_vec();
    mode.ode_residual = strong_form_residual(&mode, &nodes)?;
    mode.bc_residual = boundary_residual(&mode)?;
    Ok(mode)
}

#[derive(Debug, Clone)]
pub struct GrowthSequence {
    pub modes: Vec<GrowthMode>,
    /// lambda_{n_max} / lambda_1.
    pub decay_ratio: f64,
}

/// lambda_1 .. lambda_{n_max}, solved in parallel and returned in order.
pub fn growth_sequence(ops: Arc<AssembledOperators>, g: f64, mu: f64, n_max: usize, tol: f64) -> Result<GrowthSequence> {
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    let modes = (1..=n_max)
        .into_par_iter()
        .map(|n| solve_growth_rate(Arc::clone(&ops), g, mu, n, tol))
        .collect::<Result<Vec<_>>>()?;
    if let Some(w) = modes.windows(2).find(|w| !(w[1].lambda_n < w[0].lambda_n)) {
        return Err(Error::Numerical(format!(
            "growth rates not strictly decreasing: lambda_{} = {} <= lambda_{} = {}",
            w[0].n, w[0].lambda_n, w[1].n, w[1].lambda_n
        )));
    }
    let decay_ratio = modes.last().expect("nonempty").lambda_n / modes[0].lambda_n;
    Ok(GrowthSequence { modes, decay_ratio })
}

/// `|lambda B(phi, phi) - g k^2 int rho0' phi^2| / (g k^2 int rho0' phi^2)` with B at `lambda`.
pub fn characteristic_identity_residual(
    ops: &AssembledOperators,
    g: f64,
    mu: f64,
    lambda: f64,
    phi: &DVector<f64>,
) -> Result<f64> {
    let k2 = ops.k() * ops.k();
    let rhs = g * k2 * phi.dot(&(ops.m_rho_prime() * phi));
    if !(rhs > 0.0) {
        return Err(invalid("identity residual of a zero function"));
    }
    let lhs = lambda * bilinear_value(ops, lambda, mu, phi, phi)?;
    Ok((lhs - rhs).abs() / rhs)
}

/// Energy-identity defect of a solved mode.
pub fn verify_characteristic_identity(mode: &GrowthMode) -> Result<f64> {
    characteristic_identity_residual(&mode.ops, mode.g, mode.mu, mode.lambda_n, &mode.phi_coeffs)
}

/// L2-normalized residual of
/// `lambda^2 [rho0 k^2 phi - (rho0' phi' + rho0 phi'')] + lambda mu (phi'''' - 2k^2 phi'' + k^4 phi) - g k^2 rho0' phi`
/// over interior points, each point weighted by the basis quadrature rule when
/// the points are its nodes and uniformly otherwise.
pub fn strong_form_residual(mode: &GrowthMode, sample_points: &[f64]) -> Result<f64> {
    if mode.phi_coeffs.iter().all(|c| *c == 0.0) {
        return Err(invalid("residual of the zero function is undefined"));
    }
    if sample_points.is_empty() {
        return Err(invalid("no sample points"));
    }
    let basis = mode.ops.basis();
    let weights: Vec<f64> = if sample_points == basis.quad_nodes() {
        basis.quad_weights().to_vec()
    } else {
        vec![1.0; sample_points.len()]
    };
    let d: Vec<Vec<f64>> = (0..=4).map(|o| mode.phi(sample_points, o)).collect::<Result<_>>()?;
    let (k2, lambda, mu, g) = (mode.k() * mode.k(), mode.lambda_n, mode.mu, mode.g);
    let profile = mode.ops.profile();
    let (mut res, mut scale) = (0.0, 0.0);
    for (i, (&x, w)) in sample_points.iter().zip(&weights).enumerate() {
        let (rho, drho) = (profile.rho(x), profile.rho_prime(x));
        let inertia = lambda * lambda * (rho * k2 * d[0][i] - (drho * d[1][i] + rho * d[2][i]));
        let viscous = lambda * mu * (d[4][i] - 2.0 * k2 * d[2][i] + k2 * k2 * d[0][i]);
        let buoyancy = g * k2 * drho * d[0][i];
        let r = inertia + viscous - buoyancy;
        res += w * r * r;
        scale += w * (inertia.abs() + viscous.abs() + buoyancy.abs()).powi(2);
    }
    Ok((res / scale).sqrt())
}

/// max(|mu phi''(1) - xi_+ phi'(1)|, |mu phi''(-1) + xi_- phi'(-1)|) relative to sup |mu phi''|.
pub fn boundary_residual(mode: &GrowthMode) -> Result<f64> {
    let ends = [-1.0, 1.0];
    let d1 = mode.phi(&ends, 1)?;
    let d2 = mode.phi(&ends, 2)?;
    let slip = mode.ops.slip();
    let lower = (mode.mu * d2[0] + slip.xi_minus * d1[0]).abs();
    let upper = (mode.mu * d2[1] - slip.xi_plus * d1[1]).abs();
    let mut pts = mode.ops.basis().quad_nodes().to_vec();
    pts.extend_from_slice(&ends);
    let sup = mode.phi(&pts, 2)?.iter().fold(0.0_f64, |m, v| m.max((mode.mu * v).abs()));
    Ok(lower.max(upper) / sup)
}

/// One row of a mode amplitude table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeRow {
    pub x2: f64,
    pub phi: f64,
    pub dphi: f64,
    pub omega: f64,
    pub theta: f64,
    pub q: f64,
}

/// 2D velocity field on the periodic strip, sampled pointwise.
pub trait VelocityField: Sync {
    /// (u1, u2) at (x1, x2).
    fn velocity(&self, x1: f64, x2: f64) -> [f64; 2];
    /// [[d1 u1, d2 u1], [d1 u2, d2 u2]] at (x1, x2).
    fn gradient(&self, x1: f64, x2: f64) -> [[f64; 2]; 2];
    /// Largest |k| among the Fourier components in x1.
    fn max_wavenumber(&self) -> f64;
}

/// Normal-mode field `e^{lambda t} (sin(k x1) theta, cos(k x1) phi)` and its
/// density and pressure companions, for one phi expansion at wave number k.
#[derive(Debug, Clone)]
pub struct NormalModeField {
    k: f64,
    lambda: f64,
    mu: f64,
    amplitude: f64,
    phi: DVector<f64>,
    ops: Arc<AssembledOperators>,
}

impl NormalModeField {
    /// Field whose vertical velocity profile is `sum_j c_j phi_j` over modes at
    /// one wave number, with per-mode time factors already folded into `c`.
    pub fn combination(modes: &[&GrowthMode], weights: &[f64]) -> Result<Self> {
        let first = *modes.first().ok_or_else(|| invalid("no modes in combination"))?;
        if modes.len() != weights.len() {
            return Err(invalid("one weight per mode is required"));
        }
        if modes.iter().any(|m| !Arc::ptr_eq(&m.ops, &first.ops)) {
            return Err(invalid("combined modes must share assembled operators (same k)"));
        }
        let phi = modes
            .iter()
            .zip(weights)
            .fold(DVector::zeros(first.phi_coeffs.len()), |acc, (m, w)| acc + &m.phi_coeffs * *w);
        Ok(Self {
            k: first.k(),
            lambda: first.lambda_n,
            mu: first.mu,
            amplitude: 1.0,
            phi,
            ops: Arc::clone(&first.ops),
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn phi_coeffs(&self) -> &DVector<f64> {
        &self.phi
    }

    fn profiles(&self, x2: f64) -> [f64; 3] {
        let d = |o| {
            evaluate_expansion(self.ops.basis(), &self.phi, &[x2], o).expect("x2 in [-1, 1]")[0]
        };
        [d(0), d(1), d(2)]
    }

    /// (sigma, u1, u2, q) at (t, x1, x2).
    pub fn sample(&self, t: f64, x1: f64, x2: f64) -> [f64; 4] {
        let growth = self.amplitude * (self.lambda * t).exp();
        let [p0, p1, _] = self.profiles(x2);
        let p3 = evaluate_expansion(self.ops.basis(), &self.phi, &[x2], 3).expect("x2 in [-1, 1]")[0];
        let profile = self.ops.profile();
        let k2 = self.k * self.k;
        let omega = -profile.rho_prime(x2) * p0 / self.lambda;
        let theta = -p1 / self.k;
        let q = -(self.lambda * profile.rho(x2) * p1 + self.mu * (k2 * p1 - p3)) / k2;
        let (s, c) = (self.k * x1).sin_cos();
        [growth * c * omega, growth * s * theta, growth * c * p0, growth * c * q]
    }
}

impl VelocityField for NormalModeField {
    fn velocity(&self, x1: f64, x2: f64) -> [f64; 2] {
        let [p0, p1, _] = self.profiles(x2);
        let (s, c) = (self.k * x1).sin_cos();
        [-s * p1 / self.k * self.amplitude, c * p0 * self.amplitude]
    }

    fn gradient(&self, x1: f64, x2: f64) -> [[f64; 2]; 2] {
        let [p0, p1, p2] = self.profiles(x2);
        let (s, c) = (self.k * x1).sin_cos();
        let a = self.amplitude;
        [
            [-c * p1 * a, -s * p2 / self.k * a],
            [-self.k * s * p0 * a, c * p1 * a],
        ]
    }

    fn max_wavenumber(&self) -> f64 {
        self.k.abs()
    }
}

/// Amplitude table (x2, phi, phi', omega, theta, q) of a solved mode plus its 2D field.
pub fn assemble_mode(mode: &GrowthMode, points: &[f64]) -> Result<(Vec<AmplitudeRow>, NormalModeField)> {
    if !(mode.lambda_n > 0.0) {
        return Err(invalid("mode has a non-positive growth rate"));
    }
    let phi = mode.phi(points, 0)?;
    let dphi = mode.phi(points, 1)?;
    let omega = mode.omega(points)?;
    let theta = mode.theta(points)?;
    let q = mode.q(points)?;
    let rows = (0..points.len())
        .map(|i| AmplitudeRow {
            x2: points[i],
            phi: phi[i],
            dphi: dphi[i],
            omega: omega[i],
            theta: theta[i],
            q: q[i],
        })
        .collect();
    let field = NormalModeField {
        k: mode.k(),
        lambda: mode.lambda_n,
        mu: mode.mu,
        amplitude: 1.0,
        phi: mode.phi_coeffs.clone(),
        ops: Arc::clone(&mode.ops),
    };
    Ok((rows, field))
}
