//! Transition rates between system energy levels.
//!
//! Two independent routes are provided: the closed-form spin-ladder rates
//! built on the one-dimensional parameter integral [`integral_i`], and a
//! generic quadrature over the Maxwell-Boltzmann momentum distribution and
//! scattering angle for any [`AmplitudeModel`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use crate::dynamics::LevelSystem;
use crate::error::{invalid, numeric, Error, Result};
use crate::gas::{ancilla_populations, derived_scales, GasEnvironment, InteractionSpec};
use crate::quad::{self, GaussLegendre, Tolerance};
use crate::scattering::AmplitudeModel;

/// Relative accuracy of [`integral_i`].
pub const INTEGRAL_REL_TOL: f64 = 1e-12;
/// Rates below this in both directions mark a pair absent by selection rules.
pub const ZERO_RATE: f64 = 1e-300;

/// Node counts and stopping rule for the rate quadratures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            radial_nodes: 16,
            angular_nodes: 16,
            rel_tol: 1e-9,
            max_subdivisions: 400,
        }
    }
}

impl QuadratureSpec {
    pub fn new(radial_nodes: usize, angular_nodes: usize, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let q = QuadratureSpec {
            radial_nodes,
            angular_nodes,
            rel_tol,
            max_subdivisions,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 4 || self.angular_nodes < 4 {
            return Err(invalid("quadrature node counts must be >= 4"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(invalid(format!("rel_tol must lie in (0, 1e-2], got {}", self.rel_tol)));
        }
        if self.max_subdivisions == 0 {
            return Err(invalid("max_subdivisions must be positive"));
        }
        Ok(())
    }

    pub(crate) fn tolerance(&self) -> Tolerance {
        Tolerance {
            rel: self.rel_tol,
            abs: 0.0,
            max_subdivisions: self.max_subdivisions,
        }
    }
}

/// `R[(i, j)]` is the rate of the transition `j -> i`. Diagonal entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RateMatrix(DMatrix<f64>);

impl RateMatrix {
    pub fn new(mut r: DMatrix<f64>) -> Result<Self> {
        if r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(invalid("rate matrix must be square and non-empty"));
        }
        for i in 0..r.nrows() {
            for j in 0..r.ncols() {
                let x = r[(i, j)];
                if i != j && !(x.is_finite() && x >= 0.0) {
                    return Err(invalid(format!("rate {i}<-{j} = {x} is not a finite non-negative number")));
                }
            }
            r[(i, i)] = 0.0;
        }
        Ok(RateMatrix(r))
    }

    pub fn zeros(dim: usize) -> Self {
        RateMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Rate of `j -> i`.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Markov generator `G` with `dP/dt = G P`.
    pub fn generator(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut g = self.0.clone();
        for j in 0..d {
            let out: f64 = (0..d).filter(|&i| i != j).map(|i| self.0[(i, j)]).sum();
            g[(j, j)] = -out;
        }
        g
    }

    /// Smallest nonzero rate, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.0.iter().copied().filter(|&x| x > 0.0).reduce(f64::min)
    }
}

/// Closed-form spin-ladder rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinRates {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

/// Overflow-safe integrand of `I(alpha, s)`:
/// `e^s e^{-(2+alpha) z} sinh(2 sqrt(z (z - s)))` with exponents combined.
fn integral_i_integrand(alpha: f64, s: f64, z: f64) -> f64 {
    let b = 2.0 * (z * (z - s)).max(0.0).sqrt();
    let a = s - (2.0 + alpha) * z;
    0.5 * (a + b).exp() * (-(-2.0 * b).exp_m1())
}

/// `I(alpha, s) = e^s int_{max(0,s)}^inf e^{-(2+alpha) z} sinh(2 sqrt(z) sqrt(z - s)) dz`.
pub fn integral_i(alpha: f64, s: f64) -> Result<f64> {
    integral_i_with_tol(alpha, s, INTEGRAL_REL_TOL)
}

pub fn integral_i_with_tol(alpha: f64, s: f64, rel_tol: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("I(alpha, s) diverges for alpha = {alpha}")));
    }
    if !s.is_finite() {
        return Err(invalid(format!("s must be finite, got {s}")));
    }
    let z0 = s.max(0.0);
    let tol = Tolerance {
        rel: rel_tol,
        abs: 0.0,
        max_subdivisions: 2000,
    };
    let r = quad::semi_infinite(
        z0,
        |z| integral_i_integrand(alpha, s, z),
        |g| quad::gauss_kronrod(g, 0.0, 1.0, tol),
    )?;
    Ok(r.value.max(0.0))
}

/// `1 / (1 + e^x)` without overflow.
fn fermi(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `Gamma_+- = Gamma~ I(E_R / kB T_M, -+ hbar Delta / E_R) / (1 + exp(+- hbar omega_A / kB T_A))`
/// with `omega_A = omega_S + Delta`.
pub fn spin_rates(env: &GasEnvironment, spec: &InteractionSpec, omega_s: f64, delta: f64) -> Result<SpinRates> {
    if !(omega_s.is_finite() && delta.is_finite()) {
        return Err(invalid("frequencies must be finite"));
    }
    let s = derived_scales(env, spec);
    let hbar = env.hbar();
    let alpha = s.e_r / (env.kb() * env.t_motion());
    let shift = hbar * delta / s.e_r;
    let x = hbar * (omega_s + delta) / (env.kb() * env.t_ancilla());
    let gamma_plus = s.gamma_tilde * integral_i(alpha, -shift)? * fermi(x);
    let gamma_minus = s.gamma_tilde * integral_i(alpha, shift)? * fermi(-x);
    Ok(SpinRates {
        gamma_plus,
        gamma_minus,
    })
}

/// Temperature at which the spin rates satisfy detailed balance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EffectiveTemperature {
    /// Signed; negative values mean population inversion.
    Finite(f64),
    Infinite,
}

impl EffectiveTemperature {
    /// `1 / (kB T)`, zero at infinite temperature.
    pub fn beta(&self, kb: f64) -> f64 {
        match *self {
            EffectiveTemperature::Finite(t) => 1.0 / (kb * t),
            EffectiveTemperature::Infinite => 0.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        matches!(*self, EffectiveTemperature::Finite(t) if t < 0.0)
    }
}

/// `T = omega_S T_A T_M / (omega_A T_M - Delta T_A)`.
pub fn effective_temperature(omega_s: f64, delta: f64, t_a: f64, t_m: f64) -> Result<EffectiveTemperature> {
    if !(t_a > 0.0 && t_m > 0.0 && t_a.is_finite() && t_m.is_finite()) {
        return Err(invalid("temperatures must be finite and positive"));
    }
    let omega_a = omega_s + delta;
    let den = omega_a * t_m - delta * t_a;
    if den == 0.0 {
        return Ok(EffectiveTemperature::Infinite);
    }
    Ok(EffectiveTemperature::Finite(omega_s * t_a * t_m / den))
}

/// Rate of one `(i, j)` pair summed over ancilla transitions.
fn pair_rate(
    model: &AmplitudeModel,
    env: &GasEnvironment,
    pops: &[f64],
    radial: &GaussLegendre,
    angular: &GaussLegendre,
    spec: &QuadratureSpec,
    i: usize,
    j: usize,
) -> Result<f64> {
    let beta = env.beta_motion();
    let mass = env.mass();
    let n = env.density();
    let anc = model.ancilla_energies();
    let e = model.system_energies();
    let tol = spec.tolerance();
    let mut total = 0.0;
    for (l, &pl) in pops.iter().enumerate() {
        for k in 0..anc.len() {
            if pl == 0.0 || !model.may_couple(i, j, k, l) {
                continue;
            }
            let de = e[i] - e[j] + anc[k] - anc[l];
            let z0 = (beta * de).max(0.0);
            // z = beta p^2 / 2m; the MB measure is (2/sqrt(pi)) sqrt(z) e^-z dz
            let radial_integrand = |z: f64| -> Result<f64> {
                let pm = (2.0 * mass * z / beta).sqrt();
                let Ok(qm) = model.outgoing(i, j, k, l, pm) else {
                    return Ok(0.0);
                };
                let p = Vector3::new(0.0, 0.0, pm);
                let ang = |c: f64| {
                    let sn = (1.0 - c * c).max(0.0).sqrt();
                    let q = Vector3::new(qm * sn, 0.0, qm * c);
                    model.amplitude_raw(i, j, k, l, &q, &p).0.norm_sqr()
                };
                let inner = quad::gauss_legendre_adaptive(angular, ang, -1.0, 1.0, tol)?;
                Ok(2.0 / PI.sqrt() * z.sqrt() * (-z).exp() * (n * qm / mass) * 2.0 * PI * inner.value)
            };
            let failure = std::cell::RefCell::new(None);
            let r = quad::semi_infinite(
                z0,
                |z| match radial_integrand(z) {
                    Ok(v) => v,
                    Err(err) => {
                        failure.borrow_mut().get_or_insert(err);
                        0.0
                    }
                },
                |g| quad::gauss_legendre_adaptive(radial, g, 0.0, 1.0, tol),
            );
            if let Some(err) = failure.into_inner() {
                return Err(err);
            }
            total += pl * r?.value;
        }
    }
    Ok(total)
}

/// `R_ij = sum_kl int d^3p mu_l(p) (n |q| / m) int dOmega |f_ij^kl(q(Omega), p)|^2`.
///
/// The momentum integral is reduced to a radial and a polar-angle quadrature;
/// amplitudes are assumed symmetric about the incoming direction. Entries
/// are computed in parallel and assembled in index order.
pub fn rate_matrix(
    levels: &LevelSystem,
    model: &AmplitudeModel,
    env: &GasEnvironment,
    spec: &QuadratureSpec,
) -> Result<RateMatrix> {
    spec.validate()?;
    let d = levels.dim();
    if d != model.system_energies().len() {
        return Err(invalid("level system does not match the amplitude model"));
    }
    let pops = ancilla_populations(env);
    let radial = GaussLegendre::new(spec.radial_nodes)?;
    let angular = GaussLegendre::new(spec.angular_nodes)?;
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect();
    let values: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| pair_rate(model, env, &pops, &radial, &angular, spec, i, j))
        .collect();
    let mut r = DMatrix::zeros(d, d);
    let mut worst: Option<(usize, usize, Error)> = None;
    for (&(i, j), v) in pairs.iter().zip(values) {
        match v {
            Ok(x) => r[(i, j)] = x,
            Err(e) => {
                if worst.is_none() {
                    worst = Some((i, j, e));
                }
            }
        }
    }
    if let Some((i, j, e)) = worst {
        return Err(numeric(format!("rate {i}<-{j}: {e}")));
    }
    RateMatrix::new(r)
}

/// Outcome of [`check_local_detailed_balance`].
#[derive(Clone, Debug, PartialEq)]
pub struct DetailedBalanceReport {
    /// `max |ln(R_ij / R_ji) + beta (eps_i - eps_j)|` over pairs with both rates present.
    pub max_log_violation: f64,
    pub pass: bool,
    pub worst_pair: Option<(usize, usize)>,
    /// A pair with exactly one vanishing direction.
    pub one_sided: Option<(usize, usize)>,
}

pub fn check_local_detailed_balance(
    r: &RateMatrix,
    levels: &LevelSystem,
    beta: f64,
    tol: f64,
) -> Result<DetailedBalanceReport> {
    let d = r.dim();
    if d != levels.dim() {
        return Err(invalid("rate matrix does not match the level system"));
    }
    let e = levels.energies();
    let mut report = DetailedBalanceReport {
        max_log_violation: 0.0,
        pass: true,
        worst_pair: None,
        one_sided: None,
    };
    let mut any = false;
    for i in 0..d {
        for j in (i + 1)..d {
            let (rij, rji) = (r.rate(i, j), r.rate(j, i));
            let zi = rij < ZERO_RATE;
            let zj = rji < ZERO_RATE;
            match (zi, zj) {
                (true, true) => continue,
                (false, false) => {}
                _ => {
                    if report.one_sided.is_none() {
                        report.one_sided = Some((i, j));
                    }
                    report.pass = false;
                    continue;
                }
            }
            any = true;
            let v = ((rij / rji).ln() + beta * (e[i] - e[j])).abs();
            if v > report.max_log_violation || v.is_nan() {
                report.max_log_violation = if v.is_nan() { f64::INFINITY } else { v };
                report.worst_pair = Some((i, j));
            }
        }
    }
    if !any && report.one_sided.is_none() {
        return Err(invalid("no pair with both rates positive"));
    }
    report.pass = report.pass && report.max_log_violation <= tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn closed_form(alpha: f64) -> f64 {
        2.0 / (alpha * (alpha + 4.0))
    }

    // Plain trapezoid in u with z = z0 + u^2, which removes the square-root
    // endpoint behaviour; independent of the adaptive code.
    fn brute_force_i(alpha: f64, s: f64) -> f64 {
        let z0 = s.max(0.0);
        let u1 = (60.0 / alpha.min(1.0)).sqrt();
        let n = 400_000;
        let h = u1 / n as f64;
        let f = |u: f64| {
            let z = z0 + u * u;
            2.0 * u * s.exp() * (-(2.0 + alpha) * z).exp() * (2.0 * (z * (z - s)).max(0.0).sqrt()).sinh()
        };
        let mut acc = 0.5 * (f(0.0) + f(u1));
        for k in 1..n {
            acc += f(k as f64 * h);
        }
        acc * h
    }

    #[test]
    fn integral_closed_form_at_zero_shift() {
        assert!((integral_i(1.0, 0.0).unwrap() - 0.4).abs() < 1e-12);
        for alpha in [0.1, 0.5, 1.0, 2.0, 10.0, 50.0] {
            let v = integral_i(alpha, 0.0).unwrap();
            let c = closed_form(alpha);
            assert!(((v - c) / c).abs() <= 1e-8, "alpha={alpha}: {v} vs {c}");
        }
    }

    #[test]
    fn integral_matches_brute_force() {
        for &(alpha, s) in &[(1.0, 2.0), (1.0, -2.0), (0.5, -4.0), (3.0, 1.5)] {
            let v = integral_i(alpha, s).unwrap();
            let b = brute_force_i(alpha, s);
            assert!(((v - b) / b).abs() < 1e-9, "I({alpha},{s}) = {v} vs {b}");
        }
    }

    #[test]
    fn integral_rejects_non_positive_alpha() {
        assert!(matches!(integral_i(0.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(integral_i(-1.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn integral_is_overflow_safe() {
        for s in [-500.0, -100.0, 100.0, 500.0] {
            let v = integral_i(1.0, s).unwrap();
            assert!(v.is_finite() && v >= 0.0, "I(1,{s}) = {v}");
        }
    }

    #[test]
    fn integral_reflection() {
        // substituting z -> z + s gives I(a, s) = e^{-a s} I(a, -s)
        for &(a, s) in &[(1.0, 3.0), (0.3, 7.0), (4.0, 0.5)] {
            let lhs = integral_i(a, s).unwrap();
            let rhs = (-a * s as f64).exp() * integral_i(a, -s).unwrap();
            assert!(((lhs - rhs) / rhs).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn integral_nonnegative_and_decreasing(alpha in 0.05f64..20.0, s in -100.0f64..100.0) {
            let a = integral_i(alpha, s).unwrap();
            let b = integral_i(alpha * 1.1, s).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(b <= a);
        }
    }

    fn spin_env(t_a: f64, t_m: f64, omega_a: f64) -> GasEnvironment {
        GasEnvironment::new(vec![0.0, omega_a], t_a, t_m, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn unit_spec() -> InteractionSpec {
        InteractionSpec::from_joint_matrix(1.0, 1.0 / 2f64.sqrt(), 1, &DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn spin_rates_detailed_balance_grid() {
        let omega_s = 1.0;
        for delta in [-2.0, -0.5, 0.0, 0.7, 3.0] {
            for t_a in [0.3, 0.8, 1.0, 2.5, 6.0] {
                for t_m in [0.2, 0.9, 1.0, 3.0, 10.0] {
                    let teff = effective_temperature(omega_s, delta, t_a, t_m).unwrap();
                    let EffectiveTemperature::Finite(t) = teff else { continue };
                    let env = spin_env(t_a, t_m, omega_s + delta);
                    let r = spin_rates(&env, &unit_spec(), omega_s, delta).unwrap();
                    let v = (r.gamma_plus / r.gamma_minus).ln() + omega_s / t;
                    assert!(v.abs() <= 1e-8, "delta={delta} ta={t_a} tm={t_m}: {v:e}");
                }
            }
        }
    }

    #[test]
    fn cold_ancillas_cannot_excite() {
        let env = spin_env(1e-3, 1.0, 2.0);
        let r = spin_rates(&env, &unit_spec(), 1.0, 1.0).unwrap();
        assert!(r.gamma_plus < 1e-300);
        assert!(r.gamma_minus > 0.0);
    }

    #[test]
    fn large_detuning_suppresses_rates() {
        let mut last = f64::INFINITY;
        for delta in [0.0, 5.0, 20.0, 80.0] {
            let env = spin_env(1.0, 1.0, 1.0 + delta);
            let r = spin_rates(&env, &unit_spec(), 1.0, delta).unwrap();
            let total = r.gamma_plus + r.gamma_minus;
            assert!(total < last);
            last = total;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn effective_temperature_examples() {
        assert_eq!(effective_temperature(1.0, 0.3, 2.0, 2.0).unwrap(), EffectiveTemperature::Finite(2.0));
        assert_eq!(effective_temperature(1.0, 1.0, 4.0, 1.0).unwrap(), EffectiveTemperature::Finite(-2.0));
        // omega_A T_M = Delta T_A
        assert_eq!(effective_temperature(1.0, 1.0, 2.0, 1.0).unwrap(), EffectiveTemperature::Infinite);
        assert!(effective_temperature(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn detailed_balance_report() {
        let levels = LevelSystem::new(vec![0.0, 1.0, 3.0]).unwrap();
        let beta = 0.7;
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 0)] = 2.0 * (-beta * 1.0f64).exp();
        m[(0, 1)] = 2.0;
        m[(2, 1)] = 0.5 * (-beta * 2.0f64).exp();
        m[(1, 2)] = 0.5;
        let r = RateMatrix::new(m.clone()).unwrap();
        let rep = check_local_detailed_balance(&r, &levels, beta, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = check_local_detailed_balance(&r, &levels, 0.5, 1e-12).unwrap();
        assert!(!rep.pass);
        m[(2, 0)] = 0.1;
        let rep = check_local_detailed_balance(&RateMatrix::new(m).unwrap(), &levels, beta, 1e-12).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.one_sided, Some((0, 2)));
        assert!(check_local_detailed_balance(&RateMatrix::zeros(3), &levels, beta, 1e-6).is_err());
    }

    #[test]
    fn rate_matrix_rejects_negative_rates() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = -1.0;
        assert!(RateMatrix::new(m).is_err());
    }
}
