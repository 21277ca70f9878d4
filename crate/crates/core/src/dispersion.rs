//! Dispersion curves over wave numbers, the constant Lambda, the constants of
//! the nonlinear-instability argument, multi-mode combinations and the
//! maximal-mode inequality checks.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::basis::{evaluate_expansion, SpectralBasis};
use crate::critical::{mu_c_closed_form, mu_c_lattice, mu_c_sup};
use crate::error::{invalid, Error, Result};
use crate::forms::{assemble, SlipCoefficients};
use crate::growth::{growth_sequence, GrowthMode, GrowthSequence, NormalModeField, VelocityField};
use crate::profile::{lambda_upper_bound, DensityProfile};

/// Relative tolerance of the escape-time root.
pub const T_DELTA_TOL: f64 = 1e-12;

/// Physical parameters shared by every wave number.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub profile: DensityProfile,
    pub g: f64,
    pub mu: f64,
    pub slip: SlipCoefficients,
}

impl Problem {
    pub fn new(profile: DensityProfile, g: f64, mu: f64, slip: SlipCoefficients) -> Result<Self> {
        lambda_upper_bound(&profile, g)?;
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(invalid(format!("viscosity mu must be positive, got {mu}")));
        }
        Ok(Self { profile, g, mu, slip })
    }
}

/// Wave numbers to sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum KSpec {
    /// k = j / L for j = 1..=j_max.
    Lattice { period_l: f64, j_max: usize },
    Grid(Vec<f64>),
}

impl KSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let ks = match self {
            KSpec::Lattice { period_l, j_max } => {
                if !(*period_l > 0.0) || !period_l.is_finite() {
                    return Err(invalid(format!("period L must be positive, got {period_l}")));
                }
                (1..=*j_max).map(|j| j as f64 / period_l).collect()
            }
            KSpec::Grid(ks) => ks.clone(),
        };
        if ks.is_empty() {
            return Err(invalid("empty set of wave numbers"));
        }
        if let Some(bad) = ks.iter().find(|k| !(**k > 0.0) || !k.is_finite()) {
            return Err(invalid(format!("wave number must satisfy k > 0, got {bad}")));
        }
        Ok(ks)
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            KSpec::Lattice { period_l, .. } => Some(*period_l),
            KSpec::Grid(_) => None,
        }
    }
}

/// Growth rates at one wave number, or `None` when mu <= mu_c(k).
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionColumn {
    pub k: f64,
    pub mu_c: f64,
    pub lambdas: Option<Vec<f64>>,
}

impl DispersionColumn {
    pub fn skipped(&self) -> bool {
        self.lambdas.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionCurve {
    pub columns: Vec<DispersionColumn>,
    pub m_modes: usize,
    pub problem: Problem,
    pub period_l: Option<f64>,
}

impl DispersionCurve {
    pub fn k_values(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.k).collect()
    }

    pub fn mu_c_values(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.mu_c).collect()
    }

    /// CSV with header `k,mu_c,lambda_1..lambda_m,skipped`; skipped rows leave
    /// the rate fields empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mu_c");
        for n in 1..=self.m_modes {
            out.push_str(&format!(",lambda_{n}"));
        }
        out.push_str(",skipped\n");
        for c in &self.columns {
            out.push_str(&format_sig17(c.k));
            out.push(',');
            out.push_str(&format_sig17(c.mu_c));
            for n in 0..self.m_modes {
                out.push(',');
                if let Some(l) = &c.lambdas {
                    out.push_str(&format_sig17(l[n]));
                }
            }
            out.push_str(if c.skipped() { ",true\n" } else { ",false\n" });
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let p = &self.problem;
        json!({
            "config": {
                "profile": { "kind": p.profile.kind().name(), "params": p.profile.kind().params() },
                "g": p.g,
                "mu": p.mu,
                "xi_minus": p.slip.xi_minus,
                "xi_plus": p.slip.xi_plus,
                "L": self.period_l,
                "m_modes": self.m_modes,
            },
            "columns": self.columns.iter().map(|c| json!({
                "k": c.k,
                "mu_c": c.mu_c,
                "skipped": c.skipped(),
                "lambdas": c.lambdas,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Growth sequence at one wave number; `None` when mu <= mu_c(k).
pub fn solve_column(
    problem: &Problem,
    basis: Arc<SpectralBasis>,
    k: f64,
    m_modes: usize,
    tol: f64,
) -> Result<Option<GrowthSequence>> {
    let mu_c = mu_c_closed_form(k, problem.slip)?;
    if problem.mu <= mu_c {
        return Ok(None);
    }
    let ops = Arc::new(assemble(basis, &problem.profile, k, problem.slip)?);
    growth_sequence(ops, problem.g, problem.mu, m_modes, tol).map(Some)
}

/// First `m_modes` growth rates at each wave number, in parallel with the
/// columns returned in k order.
pub fn sweep(
    problem: &Problem,
    basis: Arc<SpectralBasis>,
    k_spec: &KSpec,
    m_modes: usize,
    tol: f64,
) -> Result<DispersionCurve> {
    let ks = k_spec.values()?;
    if m_modes == 0 {
        return Err(invalid("m_modes must be at least 1"));
    }
    let columns = ks
        .par_iter()
        .map(|&k| {
            let mu_c = mu_c_closed_form(k, problem.slip)?;
            let seq = solve_column(problem, Arc::clone(&basis), k, m_modes, tol)?;
            Ok(DispersionColumn {
                k,
                mu_c,
                lambdas: seq.map(|s| s.modes.iter().map(|m| m.lambda_n).collect()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionCurve {
        columns,
        m_modes,
        problem: problem.clone(),
        period_l: k_spec.period(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapitalLambda {
    pub value: f64,
    pub argmax_k: f64,
    /// Largest tabulated k: the supremum is taken over this window only.
    pub window_k_max: f64,
}

impl CapitalLambda {
    pub fn disclaimer(&self) -> String {
        format!(
            "supremum over the tabulated wave numbers k <= {}; the lattice beyond is not sampled",
            self.window_k_max
        )
    }
}

/// Largest leading growth rate over the unskipped columns.
pub fn capital_lambda(curve: &DispersionCurve) -> Result<CapitalLambda> {
    let best = curve
        .columns
        .iter()
        .filter_map(|c| c.lambdas.as_ref().map(|l| (c.k, l[0])))
        .fold(None, |best: Option<(f64, f64)>, (k, l)| match best {
            Some((_, b)) if b >= l => best,
            _ => Some((k, l)),
        });
    let (argmax_k, value) = best.ok_or_else(|| invalid("every wave number was skipped as subcritical"))?;
    let window_k_max = curve.columns.iter().map(|c| c.k).fold(f64::NEG_INFINITY, f64::max);
    Ok(CapitalLambda { value, argmax_k, window_k_max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearConstants {
    pub capital_lambda: f64,
    pub argmax_k: f64,
    pub mu_c_lattice: f64,
    pub mu_c_sup: f64,
    pub varpi0: f64,
    pub nu0: f64,
    pub m1: f64,
    pub m2: f64,
    pub k0: Option<f64>,
    pub n_split: Option<usize>,
}

impl NonlinearConstants {
    /// |m1 + 1/m1 - 2 nu0| / (2 nu0).
    pub fn m1_identity_residual(&self) -> f64 {
        (self.m1 + 1.0 / self.m1 - 2.0 * self.nu0).abs() / (2.0 * self.nu0)
    }

    /// Relative defect of Lambda m1 (mu/m1 + m2)^2 / (2 (mu - mu_c)) = 2 nu0 Lambda m2.
    pub fn m2_identity_residual(&self, mu: f64) -> f64 {
        m2_identity_residual(self.capital_lambda, mu, self.mu_c_lattice, self.nu0, self.m1, self.m2)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "capital_lambda": self.capital_lambda,
            "argmax_k": self.argmax_k,
            "mu_c_lattice": self.mu_c_lattice,
            "mu_c_sup": self.mu_c_sup,
            "varpi0": self.varpi0,
            "nu0": self.nu0,
            "m1": self.m1,
            "m2": self.m2,
            "k0": self.k0,
            "n_split": self.n_split,
        })
    }
}

/// (varpi0, nu0, m1, m2) for viscosity mu against the lattice critical viscosity.
pub fn viscosity_constants(mu: f64, mu_c: f64) -> Result<(f64, f64, f64, f64)> {
    if !(mu > 3.0 * mu_c) {
        return Err(Error::ThresholdViolation { mu, threshold: 3.0 * mu_c });
    }
    let varpi0 = if mu_c > 0.0 { (mu / mu_c - 3.0) / 2.0 } else { 1.0 };
    let nu0 = (3.0 + varpi0) / (2.0 + varpi0);
    let m1 = nu0 + (nu0 * nu0 - 1.0).sqrt();
    let p = mu * (m1 * m1 - m1 + 1.0) - mu_c * (m1 * m1 + 1.0);
    let disc = (p * p - mu * mu * m1 * m1).max(0.0);
    let m2 = (p + disc.sqrt()) / (m1 * m1);
    Ok((varpi0, nu0, m1, m2))
}

pub fn m2_identity_residual(capital_lambda: f64, mu: f64, mu_c: f64, nu0: f64, m1: f64, m2: f64) -> f64 {
    let lhs = capital_lambda * m1 * (mu / m1 + m2).powi(2) / (2.0 * (mu - mu_c));
    let rhs = 2.0 * nu0 * capital_lambda * m2;
    (lhs - rhs).abs() / rhs.abs()
}

/// Index N with lambda_N > threshold > lambda_{N+1}, if any.
fn split_index(lambdas: &[f64], threshold: f64) -> Option<usize> {
    lambdas
        .windows(2)
        .position(|w| w[0] > threshold && threshold > w[1])
        .map(|i| i + 1)
}

/// Constants of the nonlinear argument. k0 is the Lambda-achieving column when
/// it splits the rates, otherwise the first splitting column in k order.
pub fn nonlinear_constants(curve: &DispersionCurve, period_l: f64) -> Result<NonlinearConstants> {
    let mu = curve.problem.mu;
    let slip = curve.problem.slip;
    let mu_c = mu_c_lattice(period_l, slip)?;
    let (varpi0, nu0, m1, m2) = viscosity_constants(mu, mu_c)?;
    let cap = capital_lambda(curve)?;
    let threshold = 2.0 * nu0 / 3.0 * cap.value;
    let splits = |c: &DispersionColumn| c.lambdas.as_deref().and_then(|l| split_index(l, threshold)).map(|n| (c.k, n));
    let preferred = curve.columns.iter().find(|c| c.k == cap.argmax_k).and_then(splits);
    let (k0, n_split) = match preferred.or_else(|| curve.columns.iter().find_map(splits)) {
        Some((k, n)) => (Some(k), Some(n)),
        None => (None, None),
    };
    Ok(NonlinearConstants {
        capital_lambda: cap.value,
        argmax_k: cap.argmax_k,
        mu_c_lattice: mu_c,
        mu_c_sup: mu_c_sup(slip),
        varpi0,
        nu0,
        m1,
        m2,
        k0,
        n_split,
    })
}

/// delta sum_j C_j e^{lambda_j t} U_j over modes at one wave number.
#[derive(Debug, Clone)]
pub struct ModeCombination {
    modes: Vec<GrowthMode>,
    coefficients: Vec<f64>,
    norms: Vec<f64>,
    period_l: f64,
    normalized: bool,
}

/// L2 norm over one period of the strip of the velocity of a mode:
/// sqrt(pi L int (theta^2 + phi^2) dx2).
pub fn mode_velocity_norm(mode: &GrowthMode, period_l: f64) -> Result<f64> {
    let basis = mode.operators().basis();
    let nodes = basis.quad_nodes();
    let phi = mode.phi(nodes, 0)?;
    let theta = mode.theta(nodes)?;
    let s: f64 = basis
        .quad_weights()
        .iter()
        .zip(phi.iter().zip(&theta))
        .map(|(w, (p, t))| w * (p * p + t * t))
        .sum();
    Ok((PI * period_l * s).sqrt())
}

pub fn make_mode_combination(modes: Vec<GrowthMode>, coefficients: Vec<f64>, period_l: f64) -> Result<ModeCombination> {
    if modes.len() < 2 {
        return Err(Error::NormalizationUnverifiable(format!(
            "at least 2 modes are required, got {}",
            modes.len()
        )));
    }
    if modes.len() != coefficients.len() {
        return Err(invalid("one coefficient per mode is required"));
    }
    if !(period_l > 0.0) || !period_l.is_finite() {
        return Err(invalid(format!("period L must be positive, got {period_l}")));
    }
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(invalid("coefficients must be finite"));
    }
    if modes.iter().any(|m| !Arc::ptr_eq(m.operators(), modes[0].operators())) {
        return Err(invalid("combined modes must share assembled operators (same k)"));
    }
    let norms = modes.iter().map(|m| mode_velocity_norm(m, period_l)).collect::<Result<Vec<_>>>()?;
    let head = coefficients[0].abs() * norms[0];
    let tail: f64 = coefficients.iter().zip(&norms).skip(1).map(|(c, n)| c.abs() * n).sum();
    if !(tail > 0.0) {
        return Err(Error::NormalizationUnverifiable(
            "every coefficient beyond the first vanishes".into(),
        ));
    }
    Ok(ModeCombination {
        normalized: head > 0.5 * tail,
        modes,
        coefficients,
        norms,
        period_l,
    })
}

impl ModeCombination {
    pub fn modes(&self) -> &[GrowthMode] {
        &self.modes
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// ||u_j|| for each mode.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// |C_1| ||u_1|| > (1/2) sum_{j>=2} |C_j| ||u_j||.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn envelope(&self) -> Envelope {
        Envelope {
            terms: self.modes.iter().zip(&self.coefficients).map(|(m, c)| (m.lambda_n, c.abs())).collect(),
        }
    }

    /// F_M(t) = sum_j |C_j| e^{lambda_j t}.
    pub fn f_m(&self, t: f64) -> f64 {
        self.envelope().eval(t)
    }

    /// Velocity field of delta sum_j C_j e^{lambda_j t} u_j.
    pub fn field_at(&self, t: f64, delta: f64) -> Result<NormalModeField> {
        let refs: Vec<&GrowthMode> = self.modes.iter().collect();
        let weights: Vec<f64> = self
            .modes
            .iter()
            .zip(&self.coefficients)
            .map(|(m, c)| delta * c * (m.lambda_n * t).exp())
            .collect();
        NormalModeField::combination(&refs, &weights)
    }

    /// ||u^M(t)|| for the combination scaled by delta.
    pub fn norm_at(&self, t: f64, delta: f64) -> Result<f64> {
        let field = self.field_at(t, delta)?;
        let basis = self.modes[0].operators().basis();
        let nodes = basis.quad_nodes();
        let k = field.k();
        let phi = evaluate_expansion(basis, field.phi_coeffs(), nodes, 0)?;
        let dphi = evaluate_expansion(basis, field.phi_coeffs(), nodes, 1)?;
        let s: f64 = basis
            .quad_weights()
            .iter()
            .zip(phi.iter().zip(&dphi))
            .map(|(w, (p, d))| w * (p * p + d * d / (k * k)))
            .sum();
        Ok((PI * self.period_l * s).sqrt())
    }

    /// ||u^M(t)||^2 - (1/4) delta^2 C_1^2 e^{2 lambda_1 t} ||u_1||^2.
    pub fn lower_bound_margin(&self, t: f64, delta: f64) -> Result<f64> {
        let n = self.norm_at(t, delta)?;
        let a = delta * self.coefficients[0] * (self.modes[0].lambda_n * t).exp() * self.norms[0];
        Ok(n * n - 0.25 * a * a)
    }

    /// (sup_x |sum_j C_j omega_j(x2)|, (1/2) min rho0): the two sides of the
    /// smallness condition on delta, reported without choosing its direction.
    pub fn density_smallness_quantities(&self, samples: usize) -> Result<(f64, f64)> {
        if samples < 2 {
            return Err(invalid("at least 2 samples are required"));
        }
        let pts: Vec<f64> = (0..samples).map(|i| -1.0 + 2.0 * i as f64 / (samples - 1) as f64).collect();
        let mut total = vec![0.0; samples];
        for (m, c) in self.modes.iter().zip(&self.coefficients) {
            for (t, o) in total.iter_mut().zip(m.omega(&pts)?) {
                *t += c * o;
            }
        }
        let sup = total.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Ok((sup, 0.5 * self.modes[0].operators().profile().rho_min()))
    }
}

/// F(t) = sum_j a_j e^{lambda_j t} with a_j >= 0 and lambda_j > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    /// (lambda_j, a_j) pairs.
    pub terms: Vec<(f64, f64)>,
}

impl Envelope {
    pub fn new(terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.iter().any(|(l, a)| !(*l > 0.0) || !(*a >= 0.0) || !l.is_finite() || !a.is_finite()) {
            return Err(invalid("envelope terms need lambda > 0 and a >= 0"));
        }
        if !terms.iter().any(|(_, a)| *a > 0.0) {
            return Err(invalid("envelope has no nonzero term"));
        }
        Ok(Self { terms })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|(l, a)| a * (l * t).exp()).sum()
    }

    /// Unique T >= 0 with delta F(T) = epsilon0; 0 when delta F(0) >= epsilon0.
    pub fn escape_time(&self, delta: f64, epsilon0: f64) -> Result<f64> {
        if !(delta > 0.0) || !(epsilon0 > 0.0) || !delta.is_finite() || !epsilon0.is_finite() {
            return Err(invalid("delta and epsilon0 must be positive"));
        }
        let h = |t: f64| delta * self.eval(t) - epsilon0;
        if h(0.0) >= 0.0 {
            return Ok(0.0);
        }
        let active = self.terms.iter().filter(|(_, a)| *a > 0.0).map(|(l, _)| *l);
        let lambda_max = active.clone().fold(0.0, f64::max);
        let lambda_min = active.fold(f64::INFINITY, f64::min);
        // F(0) e^{lambda_min t} <= F(t) <= F(0) e^{lambda_max t}
        let log_ratio = (epsilon0 / (delta * self.eval(0.0))).ln();
        let (mut lo, mut hi) = (log_ratio / lambda_max, log_ratio / lambda_min);
        if h(lo) >= 0.0 {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= T_DELTA_TOL * hi || mid <= lo || mid >= hi {
                break;
            }
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (hl, hh) = (h(lo), h(hi));
        let t = if hh > hl { lo - hl * (hi - lo) / (hh - hl) } else { hi };
        Ok(t.clamp(lo, hi))
    }
}

/// Escape time T with delta F_M(T) = epsilon0; 0 when delta F_M(0) >= epsilon0.
pub fn solve_t_delta(comb: &ModeCombination, delta: f64, epsilon0: f64) -> Result<f64> {
    comb.envelope().escape_time(delta, epsilon0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    /// int g rho0' w2^2 + Lambda * boundary integral.
    pub lhs: f64,
    /// Lambda^2 int rho0 |w|^2 + Lambda mu int |grad w|^2.
    pub rhs: f64,
    /// rhs - lhs.
    pub slack: f64,
    /// int (xi_+ w1(x1, 1)^2 + xi_- w1(x1, -1)^2) dx1.
    pub boundary_integral: f64,
    /// int |grad w|^2.
    pub gradient_energy: f64,
    /// mu_c_sup ||grad w||^2 - boundary integral.
    pub sup_bound_slack: f64,
    /// mu_c_lattice ||grad w||^2 - boundary integral.
    pub lattice_bound_slack: f64,
}

/// Both sides of the maximal-mode inequality over one period of the strip,
/// with the trapezoid rule in x1 and the Gauss rule of `quad` in x2.
pub fn maximal_mode_inequality_check(
    w: &dyn VelocityField,
    quad: &SpectralBasis,
    problem: &Problem,
    capital_lambda: f64,
    period_l: f64,
) -> Result<InequalityReport> {
    if !(period_l > 0.0) || !period_l.is_finite() {
        return Err(invalid(format!("period L must be positive, got {period_l}")));
    }
    let n1 = 4 * (w.max_wavenumber() * period_l).ceil() as usize + 8;
    let h1 = 2.0 * PI * period_l / n1 as f64;
    let x1s: Vec<f64> = (0..n1).map(|i| i as f64 * h1).collect();
    let (profile, slip) = (&problem.profile, problem.slip);
    let (mut buoyancy, mut inertia, mut grad) = (0.0, 0.0, 0.0);
    for (&x2, &w2) in quad.quad_nodes().iter().zip(quad.quad_weights()) {
        for &x1 in &x1s {
            let v = w.velocity(x1, x2);
            let d = w.gradient(x1, x2);
            let wt = h1 * w2;
            buoyancy += wt * problem.g * profile.rho_prime(x2) * v[1] * v[1];
            inertia += wt * profile.rho(x2) * (v[0] * v[0] + v[1] * v[1]);
            grad += wt * (d[0][0].powi(2) + d[0][1].powi(2) + d[1][0].powi(2) + d[1][1].powi(2));
        }
    }
    let boundary: f64 = x1s
        .iter()
        .map(|&x1| h1 * (slip.xi_plus * w.velocity(x1, 1.0)[0].powi(2) + slip.xi_minus * w.velocity(x1, -1.0)[0].powi(2)))
        .sum();
    let lhs = buoyancy + capital_lambda * boundary;
    let rhs = capital_lambda * capital_lambda * inertia + capital_lambda * problem.mu * grad;
    Ok(InequalityReport {
        lhs,
        rhs,
        slack: rhs - lhs,
        boundary_integral: boundary,
        gradient_energy: grad,
        sup_bound_slack: mu_c_sup(slip) * grad - boundary,
        lattice_bound_slack: mu_c_lattice(period_l, slip)? * grad - boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::growth::solve_growth_rate;
    use crate::profile::{make_profile, ProfileKind};

    fn problem(mu: f64, xm: f64, xp: f64) -> Problem {
        let profile = make_profile(ProfileKind::Linear { a: 2.0, b: 1.0 }).unwrap();
        Problem::new(profile, 1.0, mu, SlipCoefficients::new(xm, xp).unwrap()).unwrap()
    }

    fn basis(n: usize) -> Arc<SpectralBasis> {
        Arc::new(build_basis(n).unwrap())
    }

    fn lattice(j_max: usize) -> KSpec {
        KSpec::Lattice { period_l: 1.0, j_max }
    }

    #[test]
    fn canonical_lattice_is_fully_populated() {
        let p = problem(1.0, 0.0, 0.0);
        let curve = sweep(&p, basis(32), &lattice(8), 3, 1e-10).unwrap();
        assert_eq!(curve.k_values(), (1..=8).map(f64::from).collect::<Vec<_>>());
        for c in &curve.columns {
            assert_eq!(c.mu_c, 0.0);
            let l = c.lambdas.as_ref().unwrap();
            assert!(l[0] > l[1] && l[1] > l[2] && l[2] > 0.0);
            assert!(l[0] <= 1.0 + 1e-10);
        }
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "k,mu_c,lambda_1,lambda_2,lambda_3,skipped");
    }

    #[test]
    fn subcritical_wave_numbers_are_skipped() {
        let p = problem(0.55, 1.0, 1.0);
        let mu_c1 = mu_c_closed_form(1.0, p.slip).unwrap();
        assert!(mu_c1 > 0.55);
        let curve = sweep(&p, basis(24), &KSpec::Grid(vec![1.0, 2.0]), 2, 1e-10).unwrap();
        assert!(curve.columns[0].skipped());
        assert!(!curve.columns[1].skipped());
        assert_eq!(curve.columns[0].mu_c, mu_c1);
        assert!(curve.to_csv().lines().nth(1).unwrap().ends_with(",,,true"));
        let mu_c = curve.mu_c_values();
        assert!(mu_c[0] > mu_c[1]);
    }

    #[test]
    fn empty_and_invalid_k_sets_are_rejected() {
        let p = problem(1.0, 0.0, 0.0);
        assert!(sweep(&p, basis(8), &KSpec::Grid(vec![]), 1, 1e-10).is_err());
        assert!(sweep(&p, basis(8), &KSpec::Grid(vec![1.0, -1.0]), 1, 1e-10).is_err());
        assert!(sweep(&p, basis(8), &lattice(0), 1, 1e-10).is_err());
    }

    #[test]
    fn capital_lambda_of_single_column_and_all_skipped() {
        let p = problem(1.0, 0.0, 0.0);
        let curve = sweep(&p, basis(24), &KSpec::Grid(vec![1.5]), 1, 1e-10).unwrap();
        let cap = capital_lambda(&curve).unwrap();
        assert_eq!(cap.value, curve.columns[0].lambdas.as_ref().unwrap()[0]);
        assert_eq!(cap.argmax_k, 1.5);
        let sub = problem(0.1, 1.0, 1.0);
        let curve = sweep(&sub, basis(16), &KSpec::Grid(vec![1.0, 2.0]), 1, 1e-10).unwrap();
        assert!(capital_lambda(&curve).is_err());
    }

    #[test]
    fn capital_lambda_saturates_on_the_window() {
        let p = problem(1.0, 0.0, 0.0);
        let a = capital_lambda(&sweep(&p, basis(32), &lattice(8), 1, 1e-10).unwrap()).unwrap();
        let b = capital_lambda(&sweep(&p, basis(32), &lattice(16), 1, 1e-10).unwrap()).unwrap();
        assert!((a.value - b.value).abs() <= 1e-8 * b.value);
        assert_eq!(a.argmax_k, b.argmax_k);
        assert!(b.value <= 1.0);
        assert!(b.disclaimer().contains("16"));
    }

    #[test]
    fn constants_from_direct_formulas() {
        let (varpi0, nu0, m1, m2) = viscosity_constants(4.0, 1.0).unwrap();
        assert_eq!(varpi0, 0.5);
        assert!((nu0 - 1.4).abs() < 1e-15);
        assert!((m1 - (1.4 + 0.96f64.sqrt())).abs() < 1e-15);
        assert!((m1 + 1.0 / m1 - 2.8).abs() < 1e-12);
        for lambda in [0.3, 1.0, 7.0] {
            assert!(m2_identity_residual(lambda, 4.0, 1.0, nu0, m1, m2) < 1e-10);
        }
        let (varpi0, nu0, ..) = viscosity_constants(1.0, 0.0).unwrap();
        assert_eq!(varpi0, 1.0);
        assert!((nu0 - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(viscosity_constants(3.0, 1.0), Err(Error::ThresholdViolation { .. })));
    }

    #[test]
    fn canonical_constants_find_a_split() {
        let p = problem(1.0, 0.0, 0.0);
        let curve = sweep(&p, basis(32), &lattice(8), 8, 1e-10).unwrap();
        let c = nonlinear_constants(&curve, 1.0).unwrap();
        assert!(c.nu0 > 1.0 && c.nu0 < 1.5);
        assert!(c.m1_identity_residual() < 1e-12);
        assert!(c.m2_identity_residual(1.0) < 1e-10);
        let (k0, n) = (c.k0.unwrap(), c.n_split.unwrap());
        let col = curve.columns.iter().find(|col| col.k == k0).unwrap();
        let l = col.lambdas.as_ref().unwrap();
        let thr = 2.0 * c.nu0 / 3.0 * c.capital_lambda;
        assert!(l[n - 1] > thr && thr > l[n]);
        let v = c.to_json();
        assert_eq!(v["n_split"], json!(n));
    }

    #[test]
    fn threshold_violation_is_reported() {
        let p = problem(1.0, 1.0, 1.0);
        let curve = sweep(&p, basis(16), &lattice(2), 1, 1e-10).unwrap();
        assert!(matches!(nonlinear_constants(&curve, 1.0), Err(Error::ThresholdViolation { .. })));
    }

    #[test]
    fn split_index_requires_strict_sandwich() {
        assert_eq!(split_index(&[3.0, 2.0, 1.0], 1.5), Some(2));
        assert_eq!(split_index(&[3.0, 2.0, 1.0], 2.0), None);
        assert_eq!(split_index(&[3.0, 2.0], 5.0), None);
    }

    fn canonical_modes(m: usize, xi: f64) -> Vec<GrowthMode> {
        let p = problem(1.0, xi, xi);
        let ops = Arc::new(assemble(basis(32), &p.profile, 1.0, p.slip).unwrap());
        growth_sequence(ops, 1.0, 1.0, m, 1e-10).unwrap().modes
    }

    #[test]
    fn normalization_verdicts() {
        let modes = canonical_modes(2, 0.0);
        let small = make_mode_combination(modes.clone(), vec![1.0, 1e-3], 1.0).unwrap();
        assert!(small.is_normalized());
        assert_eq!(small.f_m(0.0), 1.0 + 1e-3);
        let off = make_mode_combination(modes.clone(), vec![0.0, 1.0], 1.0).unwrap();
        assert!(!off.is_normalized());
        assert!(matches!(
            make_mode_combination(modes.clone(), vec![1.0, 0.0], 1.0),
            Err(Error::NormalizationUnverifiable(_))
        ));
        assert!(matches!(
            make_mode_combination(modes[..1].to_vec(), vec![1.0], 1.0),
            Err(Error::NormalizationUnverifiable(_))
        ));
    }

    #[test]
    fn unit_modes_have_analytic_norm() {
        // ||phi||_L2 = 1, so ||u||^2 = pi L (1 + ||phi'||^2 / k^2)
        let modes = canonical_modes(1, 0.0);
        let m = &modes[0];
        let b = m.operators().basis();
        let d = m.phi(b.quad_nodes(), 1).unwrap();
        let dd: f64 = b.quad_weights().iter().zip(&d).map(|(w, v)| w * v * v).sum();
        let n = mode_velocity_norm(m, 2.0).unwrap();
        assert!((n * n - 2.0 * PI * (1.0 + dd)).abs() < 1e-10 * n * n);
    }

    #[test]
    fn escape_time_single_mode_and_boundary() {
        let modes = canonical_modes(2, 0.0);
        let single = Envelope::new(vec![(modes[0].lambda_n, 2.0)]).unwrap();
        let t = single.escape_time(1e-6, 1e-2).unwrap();
        let exact = (1e-2_f64 / (1e-6 * 2.0)).ln() / modes[0].lambda_n;
        assert!((t - exact).abs() <= 1e-12 * exact);
        let comb = make_mode_combination(modes, vec![2.0, 0.5], 1.0).unwrap();
        let t0 = solve_t_delta(&comb, 1e-2 / comb.f_m(0.0), 1e-2).unwrap();
        assert_eq!(t0, 0.0);
        assert!(Envelope::new(vec![(0.1, 0.0)]).is_err());
        assert!(Envelope::new(vec![(-0.1, 1.0)]).is_err());
    }

    #[test]
    fn escape_time_two_modes_hits_the_level() {
        let modes = canonical_modes(2, 0.0);
        let comb = make_mode_combination(modes, vec![1.0, -0.7], 1.0).unwrap();
        let t = solve_t_delta(&comb, 1e-6, 1e-2).unwrap();
        assert!((1e-6 * comb.f_m(t) - 1e-2).abs() <= 1e-12 * 1e-2);
    }

    #[test]
    fn inequality_for_zero_field_is_tight() {
        let modes = canonical_modes(2, 0.3);
        let comb = make_mode_combination(modes, vec![1.0, 1.0], 1.0).unwrap();
        let zero = comb.field_at(0.0, 0.0).unwrap();
        let p = problem(1.0, 0.3, 0.3);
        let r = maximal_mode_inequality_check(&zero, &build_basis(32).unwrap(), &p, 0.1, 1.0).unwrap();
        assert_eq!(r.slack, 0.0);
        assert_eq!(r.boundary_integral, 0.0);
    }

    #[test]
    fn maximal_mode_is_near_equality() {
        let p = problem(1.0, 0.3, 0.3);
        let curve = sweep(&p, basis(32), &lattice(6), 1, 1e-12).unwrap();
        let cap = capital_lambda(&curve).unwrap();
        let ops = Arc::new(assemble(basis(32), &p.profile, cap.argmax_k, p.slip).unwrap());
        let m = solve_growth_rate(ops, 1.0, 1.0, 1, 1e-12).unwrap();
        let (_, field) = crate::growth::assemble_mode(&m, &[0.0]).unwrap();
        let quad = build_basis(32).unwrap();
        let r = maximal_mode_inequality_check(&field, &quad, &p, cap.value, 1.0).unwrap();
        assert!(r.slack >= -1e-10 * r.rhs, "{r:?}");
        assert!(r.slack <= 1e-7 * r.rhs, "{r:?}");
        assert!(r.sup_bound_slack >= -1e-10 * r.gradient_energy);
        assert!(r.lattice_bound_slack >= -1e-10 * r.gradient_energy);
    }

    #[test]
    fn smallness_quantities_are_exposed() {
        let modes = canonical_modes(2, 0.0);
        let comb = make_mode_combination(modes, vec![1.0, 0.5], 1.0).unwrap();
        let (sup, half_min) = comb.density_smallness_quantities(201).unwrap();
        assert!(sup > 0.0);
        assert_eq!(half_min, 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn normalized_combinations_keep_the_lower_bound(
                c1 in prop_oneof![-2.0f64..-0.1, 0.1f64..2.0],
                r2 in -1.0f64..1.0,
                r3 in -1.0f64..1.0,
                t in 0.0f64..40.0,
            ) {
                let modes = canonical_modes(3, 0.0);
                let norms: Vec<f64> = modes.iter().map(|m| mode_velocity_norm(m, 1.0).unwrap()).collect();
                // tail sum_{j>=2} |C_j| ||u_j|| < 2 |C_1| ||u_1||
                let budget = 0.999 * c1.abs() * norms[0];
                let c2 = r2 * budget / norms[1];
                let c3 = r3 * budget / norms[2];
                prop_assume!(c2 != 0.0 || c3 != 0.0);
                let comb = make_mode_combination(modes, vec![c1, c2, c3], 1.0).unwrap();
                prop_assert!(comb.is_normalized());
                let margin = comb.lower_bound_margin(t, 1e-3).unwrap();
                let scale = (1e-3 * c1 * (comb.modes()[0].lambda_n * t).exp() * norms[0]).powi(2);
                prop_assert!(margin >= -1e-12 * scale);
            }

            #[test]
            fn combinations_satisfy_both_inequalities(
                c1 in -1.0f64..1.0,
                c2 in -1.0f64..1.0,
                t in 0.0f64..5.0,
            ) {
                prop_assume!(c1.abs() + c2.abs() > 1e-3);
                let p = problem(1.0, 0.3, 0.3);
                let modes = canonical_modes(2, 0.3);
                let curve = sweep(&p, basis(32), &lattice(6), 1, 1e-10).unwrap();
                let cap = capital_lambda(&curve).unwrap();
                let comb = make_mode_combination(modes, vec![c1, if c2 == 0.0 { 1e-3 } else { c2 }], 1.0).unwrap();
                let field = comb.field_at(t, 1.0).unwrap();
                let quad = build_basis(32).unwrap();
                let r = maximal_mode_inequality_check(&field, &quad, &p, cap.value, 1.0).unwrap();
                prop_assert!(r.slack >= -1e-10 * r.rhs);
                prop_assert!(r.sup_bound_slack >= -1e-10 * r.gradient_energy);
            }
        }
    }
}
