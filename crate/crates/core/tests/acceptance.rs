//! Acceptance suite: one [PASS]/[FAIL] line per criterion. Every tolerance is
//! pinned in the constants below. The single known-unattainable line (the
//! small-k coefficient as stated) is listed in `KNOWN_UNATTAINABLE`; any other
//! failure, or that line unexpectedly passing, fails the test.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{rngs::StdRng, Rng, SeedableRng};

use rtslip::basis::{build_basis, SpectralBasis};
use rtslip::critical::{
    cosine_similarity, extremal_closed_form, mu_c_closed_form, mu_c_numeric, mu_c_sup, rayleigh_quotient,
    ExtremalFunction,
};
use rtslip::dispersion::{
    capital_lambda, make_mode_combination, maximal_mode_inequality_check, nonlinear_constants, solve_column,
    solve_t_delta, sweep, viscosity_constants, Envelope, KSpec, Problem,
};
use rtslip::forms::{assemble, coercivity_margin, AssembledOperators, SlipCoefficients};
use rtslip::growth::{assemble_mode, growth_sequence, solve_growth_rate, verify_characteristic_identity, GrowthMode};
use rtslip::profile::{make_profile, DensityProfile, ProfileKind};
use rtslip::spectrum::gamma_monotonicity_check;

const AC1_REL_TOL: f64 = 1e-7;
/// The Galerkin sup is converged to rounding at n = 48; allow a few ulps of evaluation noise.
const AC1_FROM_BELOW_SLACK: f64 = 16.0 * f64::EPSILON;
const AC1_BUDGET: Duration = Duration::from_secs(5);
const AC2_TOL: f64 = 1e-12;
const AC3_REL_TOL: f64 = 0.02;
const AC4_POINTS: usize = 50;
const AC5_QUOTIENT_TOL: f64 = 1e-10;
const AC5_TRIAL_TOL: f64 = 1e-13;
const AC5_COSINE_TOL: f64 = 1e-6;
const AC6_RESOLUTION_TOL: f64 = 1e-8;
const AC6_ORACLE_TOL: f64 = 1e-6;
const AC6_BOUND_SLACK: f64 = 1e-10;
const AC6_RESIDUAL_TOL: f64 = 1e-6;
const AC6_BUDGET: Duration = Duration::from_secs(10);
const AC7_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
const AC7_MODES: usize = 5;
const AC8_IDENTITY_TOL: f64 = 1e-8;
const AC8_DIVERGENCE_TOL: f64 = 1e-9;
const AC8_M_IDENTITY_TOL: f64 = 1e-10;
const AC9_SLACK_TOL: f64 = 1e-10;
const AC9_COMBINATIONS: usize = 24;
const AC10_TOL: f64 = 1e-12;

/// Leading rate of rho0 = 2 + x, g = k = mu = L = 1, no slip, from an
/// independent high-order shooting computation made before the solver existed.
const LAMBDA_1_REFERENCE: f64 = 0.07952921886764232;

const KNOWN_UNATTAINABLE: &[&str] = &["AC3 stated coefficient"];

const AC1_K: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
/// (xi_plus, xi_minus)
const AC1_XI: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 0.5)];

#[derive(Default)]
struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), pass, detail));
    }
}

fn xi(xi_plus: f64, xi_minus: f64) -> SlipCoefficients {
    SlipCoefficients::new(xi_minus, xi_plus).unwrap()
}

fn linear_profile() -> DensityProfile {
    make_profile(ProfileKind::Linear { a: 2.0, b: 1.0 }).unwrap()
}

fn ops(basis: &Arc<SpectralBasis>, k: f64, slip: SlipCoefficients) -> Arc<AssembledOperators> {
    Arc::new(assemble(Arc::clone(basis), &linear_profile(), k, slip).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ac1(r: &mut Report) {
    let start = Instant::now();
    let basis = build_basis(48).unwrap();
    let (mut worst, mut below) = (0.0_f64, true);
    for &k in &AC1_K {
        for &(xp, xm) in &AC1_XI {
            let s = xi(xp, xm);
            let closed = mu_c_closed_form(k, s).unwrap();
            let numeric = mu_c_numeric(&basis, k, s).unwrap().value;
            worst = worst.max(rel(numeric, closed));
            below &= numeric <= closed * (1.0 + AC1_FROM_BELOW_SLACK);
        }
    }
    let elapsed = start.elapsed();
    r.check(
        "AC1 closed-form agreement",
        worst <= AC1_REL_TOL && below && elapsed <= AC1_BUDGET,
        format!("max rel gap {worst:.2e} (tol {AC1_REL_TOL:.0e}), from below within {AC1_FROM_BELOW_SLACK:.1e} {below}, {:.2}s (budget {}s)", elapsed.as_secs_f64(), AC1_BUDGET.as_secs()),
    );
}

fn ac2(r: &mut Report) {
    let cases = [((1.0, 1.0), 1.0), ((1.0, 0.0), 2.0 / 3.0), ((4.0, 1.0), (5.0 + 13f64.sqrt()) / 3.0)];
    let worst = cases
        .iter()
        .map(|&((xp, xm), want)| rel(mu_c_sup(xi(xp, xm)), want))
        .fold(0.0, f64::max);
    r.check("AC2 supremum values", worst <= AC2_TOL, format!("max rel error {worst:.2e} (tol {AC2_TOL:.0e})"));
}

/// Least-squares c in mu_c(k) - mu_s = c k^2 + d k^4 over the sample ks.
fn fitted_k2_coefficient(s: SlipCoefficients) -> f64 {
    let ks = [0.1, 0.05, 0.025];
    let sup = mu_c_sup(s);
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in ks {
        let y = mu_c_closed_form(k, s).unwrap() - sup;
        let (u, v) = (k * k, k.powi(4));
        a11 += u * u;
        a12 += u * v;
        a22 += v * v;
        b1 += u * y;
        b2 += v * y;
    }
    (b1 * a22 - b2 * a12) / (a11 * a22 - a12 * a12)
}

fn ac3(r: &mut Report) {
    // stated: -(2/15)(4 (xi_+ + xi_-) + (4 xi_+^2 - xi_+ xi_- + 4 xi_-^2) / sqrt(xi_+^2 - xi_+ xi_- + xi_-^2))
    let stated = |xp: f64, xm: f64| {
        let d = (xp * xp - xp * xm + xm * xm).sqrt();
        -(2.0 / 15.0) * (4.0 * (xp + xm) + (4.0 * xp * xp - xp * xm + 4.0 * xm * xm) / d)
    };
    // hand series: xi (1 - 2k^2/3 + ...) and (sinh 4k - 4k)/(4k sinh^2 2k) = 2/3 - 16k^2/45 + ...
    let series = [((1.0, 1.0), -2.0 / 3.0), ((1.0, 0.0), -16.0 / 45.0)];
    let mut worst_stated = 0.0_f64;
    let mut worst_series = 0.0_f64;
    let mut ratios = Vec::new();
    for &((xp, xm), exact) in &series {
        let fit = fitted_k2_coefficient(xi(xp, xm));
        worst_stated = worst_stated.max(rel(fit, stated(xp, xm)));
        worst_series = worst_series.max(rel(fit, exact));
        ratios.push(fit / stated(xp, xm));
    }
    r.check(
        "AC3 stated coefficient",
        worst_stated <= AC3_REL_TOL,
        format!(
            "fit/stated = {:.4}, {:.4}; max rel gap {worst_stated:.3} (tol {AC3_REL_TOL}); the stated coefficient is 3x the series value",
            ratios[0], ratios[1]
        ),
    );
    r.check(
        "AC3 series coefficient",
        worst_series <= AC3_REL_TOL,
        format!("fit vs -2/3 and -16/45: max rel gap {worst_series:.2e} (tol {AC3_REL_TOL})"),
    );
}

fn ac4(r: &mut Report) {
    let mut worst = f64::NEG_INFINITY;
    for &(xp, xm) in AC1_XI.iter().chain([(4.0, 1.0), (0.3, 0.3)].iter()) {
        let s = xi(xp, xm);
        for i in 0..AC4_POINTS {
            let k = 1.0 + 9.0 * i as f64 / (AC4_POINTS - 1) as f64;
            let bound = (2.0 * (xp * xp + xm * xm)).sqrt() / k;
            worst = worst.max(mu_c_closed_form(k, s).unwrap() / bound);
        }
    }
    r.check("AC4 high-k bound", worst <= 1.0, format!("max mu_c / bound = {worst:.4} over {AC4_POINTS} k in [1, 10]"));
}

fn ac5(r: &mut Report) {
    let basis = build_basis(48).unwrap();
    let (mut q_worst, mut cos_worst) = (0.0_f64, 0.0_f64);
    for &k in &AC1_K {
        for &(xp, xm) in &AC1_XI {
            let s = xi(xp, xm);
            let closed = mu_c_closed_form(k, s).unwrap();
            let f = extremal_closed_form(k, s).unwrap();
            q_worst = q_worst.max(rel(f.quotient(s), closed));
            let numeric = mu_c_numeric(&basis, k, s).unwrap();
            let cos = cosine_similarity(&basis, &numeric.maximizer_coeffs, &f).unwrap();
            cos_worst = cos_worst.max(1.0 - cos);
        }
    }
    // (x^2 - 1)(x + 3) = (3/2) psi_0 + (1/4) psi_1; phi'(1) = 8 and int phi''^2 = 96
    let small = build_basis(6).unwrap();
    let mut cubic = DVector::zeros(6);
    cubic[0] = 1.5;
    cubic[1] = 0.25;
    let mut trial_worst = 0.0_f64;
    for xp in [0.5, 1.0, 2.7] {
        let want = 2.0 * xp / 3.0;
        let via_basis = rayleigh_quotient(&small, 0.0, xi(xp, 0.0), &cubic).unwrap();
        let via_poly = ExtremalFunction::Cubic { coeffs: [-3.0, -1.0, 3.0, 1.0] }.quotient(xi(xp, 0.0));
        trial_worst = trial_worst.max(rel(via_basis, want)).max(rel(via_poly, want));
    }
    r.check(
        "AC5 extremal reproduction",
        q_worst <= AC5_QUOTIENT_TOL && trial_worst <= AC5_TRIAL_TOL && cos_worst <= AC5_COSINE_TOL,
        format!(
            "quotient rel err {q_worst:.2e} (tol {AC5_QUOTIENT_TOL:.0e}); cubic trial {trial_worst:.2e} (tol {AC5_TRIAL_TOL:.0e}); 1 - cosine {cos_worst:.2e} (tol {AC5_COSINE_TOL:.0e})"
        ),
    );
}

/// Determinant of the right-wall conditions after shooting the two left-wall
/// compatible solutions of the fourth-order ODE with classical RK4.
fn shooting_determinant(lambda: f64, k: f64, mu: f64, g: f64, s: SlipCoefficients, steps: usize) -> f64 {
    let rho = |x: f64| 2.0 + x;
    let drho = 1.0;
    let rhs = |x: f64, y: [f64; 4]| -> [f64; 4] {
        let k2 = k * k;
        let inertia = lambda * lambda * (rho(x) * k2 * y[0] - drho * y[1] - rho(x) * y[2]);
        let d4 = 2.0 * k2 * y[2] - k2 * k2 * y[0] + (g * k2 * drho * y[0] - inertia) / (lambda * mu);
        [y[1], y[2], y[3], d4]
    };
    let integrate = |mut y: [f64; 4]| {
        let h = 2.0 / steps as f64;
        let add = |a: [f64; 4], b: [f64; 4], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]];
        for i in 0..steps {
            let x = -1.0 + h * i as f64;
            let k1 = rhs(x, y);
            let k2 = rhs(x + 0.5 * h, add(y, k1, 0.5 * h));
            let k3 = rhs(x + 0.5 * h, add(y, k2, 0.5 * h));
            let k4 = rhs(x + h, add(y, k3, h));
            for j in 0..4 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        y
    };
    let a = integrate([0.0, 1.0, -s.xi_minus / mu, 0.0]);
    let b = integrate([0.0, 0.0, 0.0, 1.0]);
    let right = |y: [f64; 4]| mu * y[2] - s.xi_plus * y[1];
    a[0] * right(b) - b[0] * right(a)
}

/// Largest root of the shooting determinant below `upper`.
fn shooting_lambda_1(upper: f64) -> f64 {
    let d = |l: f64| shooting_determinant(l, 1.0, 1.0, 1.0, SlipCoefficients::none(), 4000);
    let mut hi = upper;
    let mut d_hi = d(hi);
    let mut lo = hi - 0.005;
    while d(lo).signum() == d_hi.signum() {
        hi = lo;
        d_hi = d(hi);
        lo -= 0.005;
        assert!(lo > 0.0, "no sign change");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if d(mid).signum() == d_hi.signum() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn ac6(r: &mut Report) -> Vec<GrowthMode> {
    let start = Instant::now();
    let none = SlipCoefficients::none();
    let l32 = solve_growth_rate(ops(&Arc::new(build_basis(32).unwrap()), 1.0, none), 1.0, 1.0, 1, 1e-10).unwrap();
    let l64 = solve_growth_rate(ops(&Arc::new(build_basis(64).unwrap()), 1.0, none), 1.0, 1.0, 1, 1e-10).unwrap();
    let seq = growth_sequence(ops(&Arc::new(build_basis(48).unwrap()), 1.0, none), 1.0, 1.0, 8, 1e-10).unwrap();
    let elapsed = start.elapsed();
    let resolution = rel(l32.lambda_n, l64.lambda_n);
    let oracle = shooting_lambda_1(1.0);
    let vs_oracle = rel(seq.modes[0].lambda_n, oracle);
    let vs_reference = rel(seq.modes[0].lambda_n, LAMBDA_1_REFERENCE);
    let lambdas: Vec<f64> = seq.modes.iter().map(|m| m.lambda_n).collect();
    let decreasing = lambdas.windows(2).all(|w| w[1] < w[0]);
    let bounded = lambdas.iter().all(|l| *l > 0.0 && *l <= 1.0 + AC6_BOUND_SLACK);
    let residual = seq
        .modes
        .iter()
        .map(|m| m.ode_residual.max(m.bc_residual).max(m.fixed_point_residual))
        .fold(0.0, f64::max);
    r.check(
        "AC6 growth rates",
        resolution <= AC6_RESOLUTION_TOL
            && vs_oracle <= AC6_ORACLE_TOL
            && vs_reference <= AC6_ORACLE_TOL
            && decreasing
            && bounded
            && residual <= AC6_RESIDUAL_TOL
            && elapsed <= AC6_BUDGET,
        format!(
            "lambda_1 = {:.15}; n=32 vs 64 {resolution:.1e} (tol {AC6_RESOLUTION_TOL:.0e}); shooting {oracle:.15} gap {vs_oracle:.1e}, reference gap {vs_reference:.1e} (tol {AC6_ORACLE_TOL:.0e}); decreasing {decreasing}; <= 1 {bounded}; max residual {residual:.1e}; {:.2}s",
            lambdas[0],
            elapsed.as_secs_f64()
        ),
    );
    seq.modes
}

fn ac7(r: &mut Report) {
    let basis = Arc::new(build_basis(48).unwrap());
    let mut holds = true;
    for (s, mu) in [(SlipCoefficients::none(), 1.0), (xi(1.0, 1.0), 1.0), (xi(0.3, 0.3), 1.0)] {
        let report = gamma_monotonicity_check(&ops(&basis, 1.0, s), mu, &AC7_GRID, AC7_MODES).unwrap();
        holds &= report.holds;
    }
    let s = xi(1.0, 1.0);
    let o = ops(&basis, 1.0, s);
    let mu_c = mu_c_closed_form(1.0, s).unwrap();
    let above = coercivity_margin(&o, 0.0, 1.05 * mu_c).unwrap();
    let below = coercivity_margin(&o, 0.0, 0.95 * mu_c).unwrap();
    let maximizer = mu_c_numeric(&basis, 1.0, s).unwrap().maximizer_coeffs;
    let quotient = rayleigh_quotient(&basis, 1.0, s, &maximizer).unwrap();
    r.check(
        "AC7 monotonicity and coercivity",
        holds && above > 0.0 && below < 0.0 && quotient > 0.95 * mu_c,
        format!(
            "gamma_n decreasing for n <= {AC7_MODES}: {holds}; margin at 1.05 mu_c {above:.3e}, at 0.95 mu_c {below:.3e}; quotient {quotient:.6} > {:.6}",
            0.95 * mu_c
        ),
    );
}

fn ac8(r: &mut Report, canonical: &[GrowthMode]) {
    let basis = Arc::new(build_basis(48).unwrap());
    let slip_modes = growth_sequence(ops(&basis, 1.0, xi(0.3, 0.3)), 1.0, 1.0, 8, 1e-10).unwrap().modes;
    let (mut identity, mut divergence) = (0.0_f64, 0.0_f64);
    for m in canonical.iter().chain(&slip_modes) {
        identity = identity.max(verify_characteristic_identity(m).unwrap());
        let nodes = m.operators().basis().quad_nodes().to_vec();
        let (rows, _) = assemble_mode(m, &nodes).unwrap();
        divergence = rows.iter().map(|row| (m.k() * row.theta + row.dphi).abs()).fold(divergence, f64::max);
    }
    let (_, nu0, m1, m2) = viscosity_constants(4.0, 1.0).unwrap();
    let mut m_worst = rel(m1 + 1.0 / m1, 2.0 * nu0);
    let mut nu_ok = nu0 > 1.0 && nu0 < 1.5;
    for lambda in [0.1, 1.0] {
        let lhs = lambda * m1 * (4.0 / m1 + m2).powi(2) / (2.0 * (4.0 - 1.0));
        m_worst = m_worst.max(rel(lhs, 2.0 * nu0 * lambda * m2));
    }
    let problem = Problem::new(linear_profile(), 1.0, 1.0, xi(0.3, 0.3)).unwrap();
    let curve = sweep(&problem, Arc::clone(&basis), &KSpec::Lattice { period_l: 1.0, j_max: 8 }, 3, 1e-10).unwrap();
    let c = nonlinear_constants(&curve, 1.0).unwrap();
    m_worst = m_worst.max(c.m1_identity_residual()).max(c.m2_identity_residual(1.0));
    nu_ok &= c.nu0 > 1.0 && c.nu0 < 1.5;
    r.check(
        "AC8 identity suite",
        identity <= AC8_IDENTITY_TOL && divergence <= AC8_DIVERGENCE_TOL && m_worst <= AC8_M_IDENTITY_TOL && nu_ok,
        format!(
            "energy identity {identity:.1e} (tol {AC8_IDENTITY_TOL:.0e}); k theta + phi' {divergence:.1e} (tol {AC8_DIVERGENCE_TOL:.0e}); m1/m2 identities {m_worst:.1e} (tol {AC8_M_IDENTITY_TOL:.0e}); nu0 in (1, 3/2) {nu_ok}"
        ),
    );
}

fn ac9(r: &mut Report) {
    let s = xi(0.3, 0.3);
    let problem = Problem::new(linear_profile(), 1.0, 1.0, s).unwrap();
    let basis = Arc::new(build_basis(32).unwrap());
    let curve = sweep(&problem, Arc::clone(&basis), &KSpec::Lattice { period_l: 1.0, j_max: 8 }, 1, 1e-12).unwrap();
    let cap = capital_lambda(&curve).unwrap().value;
    let (mut slack_worst, mut bound_worst) = (f64::INFINITY, f64::INFINITY);
    let mut checked = 0;
    let mut columns = Vec::new();
    for k in curve.k_values() {
        let modes = solve_column(&problem, Arc::clone(&basis), k, 4, 1e-12).unwrap().unwrap().modes;
        for m in &modes {
            let (_, field) = assemble_mode(m, &[0.0]).unwrap();
            let rep = maximal_mode_inequality_check(&field, &basis, &problem, cap, 1.0).unwrap();
            slack_worst = slack_worst.min(rep.slack / rep.rhs);
            bound_worst = bound_worst.min(rep.sup_bound_slack / rep.gradient_energy);
            checked += 1;
        }
        columns.push(modes);
    }
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for _ in 0..AC9_COMBINATIONS {
        let modes = &columns[rng.gen_range(0..columns.len())];
        let (i, j) = (rng.gen_range(0..modes.len()), rng.gen_range(0..modes.len()));
        if i == j {
            continue;
        }
        let c = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let comb = make_mode_combination(vec![modes[i].clone(), modes[j].clone()], c, 1.0).unwrap();
        let field = comb.field_at(rng.gen_range(0.0..5.0), 1.0).unwrap();
        let rep = maximal_mode_inequality_check(&field, &basis, &problem, cap, 1.0).unwrap();
        slack_worst = slack_worst.min(rep.slack / rep.rhs);
        bound_worst = bound_worst.min(rep.sup_bound_slack / rep.gradient_energy);
        checked += 1;
    }
    r.check(
        "AC9 inequality suite",
        slack_worst >= -AC9_SLACK_TOL && bound_worst >= -AC9_SLACK_TOL,
        format!(
            "{checked} fields; min relative slack {slack_worst:.3e}; min boundary-quotient slack {bound_worst:.3e} (tol -{AC9_SLACK_TOL:.0e}); Lambda = {cap:.12}"
        ),
    );
}

fn ac10(r: &mut Report, canonical: &[GrowthMode]) {
    let (delta, eps0, c1) = (1e-6, 1e-2, 1.7);
    let lambda_1 = canonical[0].lambda_n;
    let t = Envelope::new(vec![(lambda_1, c1)]).unwrap().escape_time(delta, eps0).unwrap();
    let exact = (eps0 / (delta * c1)).ln() / lambda_1;
    let single = rel(t, exact);
    let pair = || vec![canonical[0].clone(), canonical[1].clone()];
    let holds = make_mode_combination(pair(), vec![1.0, 1e-3], 1.0).unwrap().is_normalized();
    let fails = !make_mode_combination(pair(), vec![0.0, 1.0], 1.0).unwrap().is_normalized();
    let comb = make_mode_combination(pair(), vec![1.0, -0.8], 1.0).unwrap();
    let t2 = solve_t_delta(&comb, delta, eps0).unwrap();
    let two = (delta * comb.f_m(t2) - eps0).abs() / eps0;
    r.check(
        "AC10 escape time and normalization",
        single <= AC10_TOL && two <= AC10_TOL && holds && fails,
        format!("single-mode T vs log formula {single:.1e}, two-mode level defect {two:.1e} (tol {AC10_TOL:.0e}); C=(1,1e-3) normalized {holds}; C=(0,1) rejected {fails}; the nonlinear evolution itself is not simulated"),
    );
}

fn main() {
    let mut r = Report::default();
    ac1(&mut r);
    ac2(&mut r);
    ac3(&mut r);
    ac4(&mut r);
    ac5(&mut r);
    let canonical = ac6(&mut r);
    ac7(&mut r);
    ac8(&mut r, &canonical);
    ac9(&mut r);
    ac10(&mut r, &canonical);
    let failed: Vec<&str> = r.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    println!(
        "{} of {} lines pass; known unattainable: {:?}",
        r.lines.len() - failed.len(),
        r.lines.len(),
        KNOWN_UNATTAINABLE
    );
    if failed != KNOWN_UNATTAINABLE {
        eprintln!("unexpected acceptance outcome: failing {failed:?}");
        std::process::exit(1);
    }
}
