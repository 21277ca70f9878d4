//! Equilibrium density profiles rho0 on [-1, 1].

use crate::error::{invalid, Error, Result};

/// Number of points of the uniform grid used to certify positivity.
pub const VALIDATION_POINTS: usize = 2001;

const GOLDEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// rho0 = a + b x
    Linear { a: f64, b: f64 },
    /// rho0 = a exp(b x)
    Exponential { a: f64, b: f64 },
    /// rho0 = sum_i c_i x^i
    Polynomial { coeffs: Vec<f64> },
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Linear { .. } => "linear",
            ProfileKind::Exponential { .. } => "exponential",
            ProfileKind::Polynomial { .. } => "polynomial",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            ProfileKind::Linear { a, b } | ProfileKind::Exponential { a, b } => vec![*a, *b],
            ProfileKind::Polynomial { coeffs } => coeffs.clone(),
        }
    }

    /// Builds a kind from its name and flat parameter list.
    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self> {
        let pair = |label: &str| -> Result<(f64, f64)> {
            match params {
                [a, b] => Ok((*a, *b)),
                _ => Err(invalid(format!(
                    "{label} profile takes exactly 2 parameters, got {}",
                    params.len()
                ))),
            }
        };
        match name {
            "linear" => pair("linear").map(|(a, b)| ProfileKind::Linear { a, b }),
            "exponential" => pair("exponential").map(|(a, b)| ProfileKind::Exponential { a, b }),
            "polynomial" if !params.is_empty() => Ok(ProfileKind::Polynomial {
                coeffs: params.to_vec(),
            }),
            "polynomial" => Err(invalid("polynomial profile needs at least one coefficient")),
            other => Err(invalid(format!(
                "unknown profile kind '{other}' (expected linear, exponential or polynomial)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    kind: ProfileKind,
    rho_minus: f64,
    rho_plus: f64,
    l0_inverse: f64,
}

/// Validates `kind` on the certification grid and computes the derived scalars.
pub fn make_profile(kind: ProfileKind) -> Result<DensityProfile> {
    if kind.params().iter().any(|p| !p.is_finite()) {
        return Err(invalid("profile parameters must be finite"));
    }
    let mut profile = DensityProfile {
        kind,
        rho_minus: 0.0,
        rho_plus: 0.0,
        l0_inverse: 0.0,
    };
    let grid = validation_grid();
    for &x in &grid {
        let (rho, drho) = (profile.rho(x), profile.rho_prime(x));
        if !(rho > 0.0) {
            return Err(Error::ProfileInvalid {
                x,
                reason: format!("rho0 = {rho} is not positive"),
            });
        }
        if !(drho > 0.0) {
            return Err(Error::ProfileInvalid {
                x,
                reason: format!("rho0' = {drho} is not positive"),
            });
        }
    }
    profile.rho_minus = profile.rho(-1.0);
    profile.rho_plus = profile.rho(1.0);
    profile.l0_inverse = profile.refine_log_slope_max(&grid);
    Ok(profile)
}

fn validation_grid() -> Vec<f64> {
    let step = 2.0 / (VALIDATION_POINTS - 1) as f64;
    (0..VALIDATION_POINTS)
        .map(|i| if i + 1 == VALIDATION_POINTS { 1.0 } else { -1.0 + step * i as f64 })
        .collect()
}

/// sqrt(g / L0): upper bound on every characteristic growth rate.
pub fn lambda_upper_bound(profile: &DensityProfile, g: f64) -> Result<f64> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(invalid(format!("gravity g must be positive, got {g}")));
    }
    Ok((g * profile.l0_inverse).sqrt())
}

impl DensityProfile {
    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    pub fn rho_plus(&self) -> f64 {
        self.rho_plus
    }

    /// sup |rho0' / rho0| over [-1, 1].
    pub fn l0_inverse(&self) -> f64 {
        self.l0_inverse
    }

    pub fn rho(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Linear { a, b } => a + b * x,
            ProfileKind::Exponential { a, b } => a * (b * x).exp(),
            ProfileKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    pub fn rho_prime(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Linear { b, .. } => *b,
            ProfileKind::Exponential { a, b } => a * b * (b * x).exp(),
            ProfileKind::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c),
        }
    }

    /// Minimum of rho0, attained at x = -1 since rho0 is increasing.
    pub fn rho_min(&self) -> f64 {
        self.rho_minus
    }

    fn log_slope(&self, x: f64) -> f64 {
        self.rho_prime(x) / self.rho(x)
    }

    fn refine_log_slope_max(&self, grid: &[f64]) -> f64 {
        let (imax, vmax) = grid
            .iter()
            .map(|&x| self.log_slope(x))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        let lo = grid[imax.saturating_sub(1)];
        let hi = grid[(imax + 1).min(grid.len() - 1)];
        let refined = golden_section_max(|x| self.log_slope(x), lo, hi, GOLDEN_TOL);
        vmax.max(refined)
    }
}

/// Maximum value of a unimodal function on [lo, hi] by golden-section search.
fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2).max(f(lo)).max(f(hi))
}
