//! Thermodynamic bookkeeping along master-equation trajectories: energy,
//! heat power, entropy production and ergotropy.

use crate::dynamics::{trace_product, LevelSystem, Lindblad, PopulationVector, Trajectory};
use crate::error::{invalid, Result};
use crate::qmath::{eigh_unchecked, entropy_of_spectrum, CMatrix, DensityMatrix, Operator};

/// Smallest eigenvalue for which the entropy rate is evaluated.
pub const REGULAR_STATE_MIN_EIGENVALUE: f64 = 1e-12;

/// Thermodynamic quantities at one trajectory time.
///
/// `s_dot` and `clausius_residual` are `None` where the state is too close to
/// the boundary of state space for `ln rho` to be meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermoSample {
    pub t: f64,
    pub energy: f64,
    pub q_dot: f64,
    pub entropy: f64,
    pub s_dot: Option<f64>,
    pub clausius_residual: Option<f64>,
    pub ergotropy: f64,
}

/// `tr(h_S C rho)`: the part of `dE_S/dt` caused by the dissipator.
pub fn heat_power(h_s: &Operator, dissipator_action: &CMatrix) -> Result<f64> {
    if dissipator_action.nrows() != h_s.dim() || dissipator_action.ncols() != h_s.dim() {
        return Err(invalid("dissipator action and Hamiltonian differ in dimension"));
    }
    Ok(trace_product(h_s.matrix(), dissipator_action))
}

/// `dS/dt = -tr(C rho ln rho)`, or `None` if `rho` has an eigenvalue at or
/// below [`REGULAR_STATE_MIN_EIGENVALUE`].
pub fn entropy_rate(rho: &CMatrix, c_rho: &CMatrix) -> Option<f64> {
    let (vals, vecs) = eigh_unchecked(rho);
    if !(vals[0] > REGULAR_STATE_MIN_EIGENVALUE) {
        return None;
    }
    // tr(C rho ln rho) = sum_k ln(lambda_k) <k|C rho|k>
    let rotated = vecs.adjoint() * c_rho * &vecs;
    Some(-vals.iter().enumerate().map(|(k, l)| l.ln() * rotated[(k, k)].re).sum::<f64>())
}

/// Outcome of [`entropy_production_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClausiusReport {
    /// Smallest `dS/dt - beta Q_dot` over evaluated samples.
    pub min_residual: f64,
    pub max_abs_s_dot: f64,
    pub pass: bool,
    /// Sample indices skipped because the state was near-singular.
    pub skipped: Vec<usize>,
    pub residuals: Vec<Option<f64>>,
}

/// Checks `dS/dt >= beta Q_dot` at every regular sample of a trajectory of
/// `generator`. `h_s` is the bare system Hamiltonian entering the heat.
///
/// Passes iff the smallest residual is at least `-1e-8 max(max |dS/dt|, 1)`.
pub fn entropy_production_check(
    generator: &Lindblad,
    h_s: &Operator,
    trajectory: &Trajectory<DensityMatrix>,
    beta: f64,
) -> Result<ClausiusReport> {
    if h_s.dim() != generator.dim() {
        return Err(invalid("Hamiltonian and generator differ in dimension"));
    }
    if !beta.is_finite() {
        return Err(invalid("beta must be finite"));
    }
    let mut report = ClausiusReport {
        min_residual: f64::INFINITY,
        max_abs_s_dot: 0.0,
        pass: false,
        skipped: Vec::new(),
        residuals: Vec::with_capacity(trajectory.len()),
    };
    for (n, rho) in trajectory.states.iter().enumerate() {
        let c = generator.dissipator_action(rho.matrix());
        match entropy_rate(rho.matrix(), &c) {
            Some(s_dot) => {
                let r = s_dot - beta * heat_power(h_s, &c)?;
                report.min_residual = report.min_residual.min(r);
                report.max_abs_s_dot = report.max_abs_s_dot.max(s_dot.abs());
                report.residuals.push(Some(r));
            }
            None => {
                log::info!("Clausius check skips sample {n} (t = {}): near-singular state", trajectory.times[n]);
                report.skipped.push(n);
                report.residuals.push(None);
            }
        }
    }
    if report.skipped.len() == trajectory.len() {
        return Err(invalid("every trajectory sample is near-singular"));
    }
    report.pass = report.min_residual >= -1e-8 * report.max_abs_s_dot.max(1.0);
    Ok(report)
}

fn passive_energy(ascending_energies: &[f64], mut weights: Vec<f64>) -> f64 {
    weights.sort_by(|a, b| b.total_cmp(a));
    ascending_energies.iter().zip(&weights).map(|(e, w)| e * w).sum()
}

/// Ergotropy of a diagonal state: energy minus that of the passive
/// rearrangement of its populations.
pub fn ergotropy_diagonal(levels: &LevelSystem, p: &PopulationVector) -> Result<f64> {
    if levels.dim() != p.dim() {
        return Err(invalid("populations and levels differ in dimension"));
    }
    let e = levels.energies();
    let energy: f64 = e.iter().zip(p.as_slice()).map(|(e, p)| e * p).sum();
    Ok((energy - passive_energy(e, p.as_slice().to_vec())).max(0.0))
}

/// Ergotropy `tr(h rho) - sum_i eps_i^up lambda_i^down`.
pub fn ergotropy_general(h_s: &Operator, rho: &DensityMatrix) -> Result<f64> {
    if h_s.dim() != rho.dim() {
        return Err(invalid("state and Hamiltonian differ in dimension"));
    }
    let (eps, _) = eigh_unchecked(h_s.matrix());
    let energy = trace_product(h_s.matrix(), rho.matrix());
    Ok((energy - passive_energy(&eps, rho.eigenvalues())).max(0.0))
}

/// `dE_S/dt` at `rho` from a Richardson-extrapolated central difference of
/// fixed-step RK4 propagations over `+-delta` and `+-delta/2`.
pub fn energy_rate_finite_difference(generator: &Lindblad, h_s: &Operator, rho: &CMatrix, delta: f64) -> f64 {
    let energy_at = |dt: f64| {
        let steps = 8;
        trace_product(h_s.matrix(), &generator.propagate_rk4(rho, 0.0, dt, steps))
    };
    let central = |d: f64| (energy_at(d) - energy_at(-d)) / (2.0 * d);
    (4.0 * central(0.5 * delta) - central(delta)) / 3.0
}

/// Thermodynamic quantities at every sample. `beta` enters only the Clausius
/// residual; `None` leaves it unset.
pub fn thermo_series(
    generator: &Lindblad,
    h_s: &Operator,
    trajectory: &Trajectory<DensityMatrix>,
    beta: Option<f64>,
) -> Result<Vec<ThermoSample>> {
    if h_s.dim() != generator.dim() {
        return Err(invalid("Hamiltonian and generator differ in dimension"));
    }
    let (eps, _) = eigh_unchecked(h_s.matrix());
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, rho)| {
            let c = generator.dissipator_action(rho.matrix());
            let q_dot = heat_power(h_s, &c)?;
            let s_dot = entropy_rate(rho.matrix(), &c);
            let lambdas = rho.eigenvalues();
            let energy = trace_product(h_s.matrix(), rho.matrix());
            Ok(ThermoSample {
                t,
                energy,
                q_dot,
                entropy: entropy_of_spectrum(&lambdas),
                s_dot,
                clausius_residual: match (s_dot, beta) {
                    (Some(s), Some(b)) => Some(s - b * q_dot),
                    _ => None,
                },
                ergotropy: (energy - passive_energy(&eps, lambdas)).max(0.0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve_lindblad;
    use crate::qmath::{spin_operators, SpinQuantum};
    use num_complex::Complex64 as C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn spin_model(j: f64, gp: f64, gm: f64) -> (Operator, Lindblad) {
        let ops = spin_operators(SpinQuantum::new(j).unwrap());
        let gen = Lindblad::new(&ops.jz, &[(gp, ops.jplus.clone()), (gm, ops.jminus.clone())]).unwrap();
        (ops.jz, gen)
    }

    #[test]
    fn heat_power_sign_for_decay() {
        let h = Operator::from_real_diagonal(&[0.0, 1.0]);
        let gen = Lindblad::new(&h, &[(1.0, Operator::ket_bra(2, 0, 1))]).unwrap();
        let rho = DensityMatrix::pure(2, 1).unwrap();
        let q = heat_power(&h, &gen.dissipator_action(rho.matrix())).unwrap();
        assert!((q + 1.0).abs() < 1e-15);
        assert!(heat_power(&h, &CMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn gibbs_state_has_no_heat_and_zero_residual() {
        let (gp, gm) = (0.4, 1.0);
        let (h, gen) = spin_model(2.0, gp, gm);
        let beta = (gm / gp as f64).ln();
        let g = DensityMatrix::gibbs(&h, beta).unwrap();
        let c = gen.dissipator_action(g.matrix());
        assert!(heat_power(&h, &c).unwrap().abs() < 1e-12);
        let tr = evolve_lindblad(&h, gen.channels(), &g, &[0.0, 1.0, 2.0]).unwrap();
        let rep = entropy_production_check(&gen, &h, &tr, beta).unwrap();
        assert!(rep.pass);
        for r in rep.residuals {
            assert!(r.unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn clausius_holds_and_wrong_sign_fails() {
        let (gp, gm) = (0.4, 1.0);
        let (h, gen) = spin_model(2.0, gp, gm);
        let beta = (gm / gp as f64).ln();
        // hot Gibbs start cooling towards beta
        let rho0 = DensityMatrix::gibbs(&h, 0.1).unwrap();
        let grid: Vec<f64> = (0..30).map(|k| 0.1 * k as f64).collect();
        let tr = evolve_lindblad(&h, gen.channels(), &rho0, &grid).unwrap();
        let ok = entropy_production_check(&gen, &h, &tr, beta).unwrap();
        assert!(ok.pass && ok.min_residual >= 0.0, "{ok:?}");
        let bad = entropy_production_check(&gen, &h, &tr, -beta).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn singular_samples_are_skipped() {
        let (h, gen) = spin_model(1.0, 0.4, 1.0);
        let rho0 = DensityMatrix::pure(3, 0).unwrap();
        let tr = evolve_lindblad(&h, gen.channels(), &rho0, &[0.0, 1.0, 2.0]).unwrap();
        let rep = entropy_production_check(&gen, &h, &tr, (1.0f64 / 0.4).ln()).unwrap();
        assert_eq!(rep.skipped, vec![0]);
        assert!(rep.pass);
    }

    #[test]
    fn finite_difference_matches_heat_power() {
        let (h, gen) = spin_model(1.5, 0.3, 0.9);
        let rho = DensityMatrix::gibbs(&h, -0.5).unwrap();
        let exact = heat_power(&h, &gen.dissipator_action(rho.matrix())).unwrap();
        let fd = energy_rate_finite_difference(&gen, &h, rho.matrix(), 1e-2);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} vs {exact}");
    }

    #[test]
    fn ergotropy_diagonal_examples() {
        let two = LevelSystem::new(vec![0.0, 1.0]).unwrap();
        let p = PopulationVector::new(vec![0.2, 0.8]).unwrap();
        assert!((ergotropy_diagonal(&two, &p).unwrap() - 0.6).abs() < 1e-15);
        let ground = PopulationVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(ergotropy_diagonal(&two, &ground).unwrap(), 0.0);
        let levels = LevelSystem::new(vec![-1.0, 0.0, 0.3, 2.0]).unwrap();
        for beta in [0.0, 0.1, 1.0, 10.0] {
            let g = levels.gibbs_populations(beta);
            assert_eq!(ergotropy_diagonal(&levels, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn ergotropy_general_examples() {
        let h = Operator::from_real_diagonal(&[0.0, 1.0]);
        let excited = DensityMatrix::pure(2, 1).unwrap();
        assert!((ergotropy_general(&h, &excited).unwrap() - 1.0).abs() < 1e-12);
        let levels = LevelSystem::new(vec![0.0, 0.5, 0.9]).unwrap();
        let p = PopulationVector::new(vec![0.1, 0.6, 0.3]).unwrap();
        let a = ergotropy_diagonal(&levels, &p).unwrap();
        let b = ergotropy_general(&levels.hamiltonian(), &p.to_density_matrix().unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ergotropy_shift_invariant_and_tie_safe() {
        let h = Operator::from_real_diagonal(&[0.0, 1.0, 1.0, 3.0]);
        let p = [0.1, 0.3, 0.3, 0.3];
        let rho = DensityMatrix::from_populations(&p).unwrap();
        let w0 = ergotropy_general(&h, &rho).unwrap();
        let shifted = Operator::new(h.matrix() + CMatrix::identity(4, 4).scale(7.5)).unwrap();
        let w1 = ergotropy_general(&shifted, &rho).unwrap();
        assert!((w0 - w1).abs() < 1e-10 * 10.0);
        assert!((w0 - 0.6).abs() < 1e-12);
    }

    fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| {
            C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
        });
        let qr = g.qr();
        let (q, r) = (qr.q(), qr.r());
        let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| r[(i, i)] / r[(i, i)].norm()));
        q * phases
    }

    fn cayley(k: &CMatrix, eps: f64) -> CMatrix {
        let d = k.nrows();
        let i = C64::new(0.0, 0.5 * eps);
        let id = CMatrix::identity(d, d);
        let a = &id - k.map(|z| z * i);
        let b = &id + k.map(|z| z * i);
        a.try_inverse().unwrap() * b
    }

    #[test]
    fn ergotropy_matches_unitary_brute_force() {
        let d = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = Operator::from_real_diagonal(&[0.0, 0.7, 1.1, 2.5]);
        let g = CMatrix::from_fn(d, d, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
        let m = &g * g.adjoint();
        let rho = DensityMatrix::new(m.scale(1.0 / m.trace().re)).unwrap();
        let energy = |u: &CMatrix| trace_product(h.matrix(), &(u * rho.matrix() * u.adjoint()));
        let mut best_u = CMatrix::identity(d, d);
        let mut best = energy(&best_u);
        for _ in 0..10_000 {
            let u = random_unitary(&mut rng, d);
            let e = energy(&u);
            if e < best {
                best = e;
                best_u = u;
            }
        }
        // local descent around the best sample
        let mut eps = 0.3;
        while eps > 1e-6 {
            let mut improved = false;
            for _ in 0..50 {
                let k = CMatrix::from_fn(d, d, |_, _| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)));
                let k = (&k + k.adjoint()).scale(0.5);
                let u = cayley(&k, eps) * &best_u;
                let e = energy(&u);
                if e < best {
                    best = e;
                    best_u = u;
                    improved = true;
                }
            }
            if !improved {
                eps *= 0.5;
            }
        }
        let w_brute = energy(&CMatrix::identity(d, d)) - best;
        let w = ergotropy_general(&h, &rho).unwrap();
        assert!(w_brute <= w + 1e-12, "brute force {w_brute} exceeds {w}");
        assert!(w - w_brute <= 1e-3, "{w} vs {w_brute}");
    }
}
