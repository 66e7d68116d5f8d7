//! Time evolution: the Lindblad master equation, the classical rate
//! equation for energy populations, and steady states.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{invalid, numeric, Result};
use crate::ode::{self, Dopri5, OdeOptions};
use crate::qmath::{validate_state, CMatrix, DensityMatrix, Operator, StateTolerance};
use crate::rates::RateMatrix;

/// Tolerances every recorded Lindblad state must meet.
pub const TRAJECTORY_STATE_TOL: StateTolerance = StateTolerance {
    hermitian: 1e-8,
    trace: 1e-8,
    min_eigenvalue: -1e-7,
};
/// Probability conservation for population trajectories.
pub const POPULATION_SUM_TOL: f64 = 1e-10;
/// Most negative admissible population.
pub const POPULATION_MIN: f64 = -1e-12;

/// Internal Hamiltonian `h_S = sum_i eps_i |i><i|` with ascending energies.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSystem {
    energies: Vec<f64>,
    labels: Option<Vec<String>>,
}

impl LevelSystem {
    pub fn new(energies: Vec<f64>) -> Result<Self> {
        if energies.is_empty() {
            return Err(invalid("level system needs at least one level"));
        }
        if energies.iter().any(|e| !e.is_finite()) {
            return Err(invalid("level energies must be finite"));
        }
        if energies.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("level energies must be ascending"));
        }
        Ok(LevelSystem { energies, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.energies.len() {
            return Err(invalid("one label per level required"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn hamiltonian(&self) -> Operator {
        Operator::from_real_diagonal(&self.energies)
    }

    /// Gibbs populations `exp(-beta eps_i) / Z`; `beta` may be negative.
    pub fn gibbs_populations(&self, beta: f64) -> PopulationVector {
        let shift = self
            .energies
            .iter()
            .map(|e| -beta * e)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.energies.iter().map(|e| (-beta * e - shift).exp()).collect();
        let z: f64 = w.iter().sum();
        PopulationVector(w.into_iter().map(|x| x / z).collect())
    }
}

/// Energy populations of a diagonal state.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationVector(Vec<f64>);

impl PopulationVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_populations(&p).map_err(invalid)?;
        Ok(PopulationVector(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_density_matrix(&self) -> Result<DensityMatrix> {
        DensityMatrix::from_populations(&self.0)
    }
}

fn check_populations(p: &[f64]) -> std::result::Result<(), String> {
    if p.is_empty() {
        return Err("empty population vector".into());
    }
    if let Some(x) = p.iter().find(|x| !(**x >= POPULATION_MIN)) {
        return Err(format!("population {x} is negative"));
    }
    let s: f64 = p.iter().sum();
    if !((s - 1.0).abs() <= POPULATION_SUM_TOL) {
        return Err(format!("populations sum to {s}"));
    }
    Ok(())
}

/// Sampled solution with optional named observables.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub observables: BTreeMap<String, Vec<f64>>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&S> {
        self.states.last()
    }

    pub fn insert_observable(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.times.len() {
            return Err(invalid(format!("observable `{name}` has the wrong length")));
        }
        self.observables.insert(name.to_string(), values);
        Ok(())
    }
}

/// Sparse triplet form of an operator; the jump operators of interest are
/// ladders with `O(d)` entries.
#[derive(Clone, Debug)]
struct Sparse {
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((r, c, v));
                }
            }
        }
        Sparse { entries }
    }

    /// `out += c * A x` for row-major `x`.
    fn left_mul_acc(&self, x: &[C64], out: &mut [C64], d: usize, c: C64) {
        for &(r, k, v) in &self.entries {
            let cv = c * v;
            let (src, dst) = (&x[k * d..(k + 1) * d], &mut out[r * d..(r + 1) * d]);
            for (o, s) in dst.iter_mut().zip(src) {
                *o += cv * s;
            }
        }
    }

    /// `out += c * x A^dagger` for row-major `x`.
    fn right_mul_adj_acc(&self, x: &[C64], out: &mut [C64], d: usize, c: C64) {
        for &(e, k, v) in &self.entries {
            let cv = c * v.conj();
            for a in 0..d {
                out[a * d + e] += cv * x[a * d + k];
            }
        }
    }
}

/// Generator `drho/dt = -i [h, rho] + sum_k gamma_k D[L_k] rho`.
///
/// `h` is in angular-frequency units (energy over hbar).
#[derive(Clone, Debug)]
pub struct Lindblad {
    dim: usize,
    h: Operator,
    channels: Vec<(f64, Operator)>,
    // h - i/2 sum gamma L^dagger L
    h_nh: Sparse,
    // gamma/2 sum L^dagger L
    loss: Sparse,
    jumps: Vec<(f64, Sparse)>,
    norm_bound: f64,
}

impl Lindblad {
    pub fn new(h: &Operator, channels: &[(f64, Operator)]) -> Result<Self> {
        let d = h.dim();
        if h.hermiticity_defect() > 1e-10 {
            return Err(invalid("Hamiltonian must be Hermitian"));
        }
        let mut loss = CMatrix::zeros(d, d);
        for (g, l) in channels {
            if l.dim() != d {
                return Err(invalid(format!("jump operator of dimension {} for a {d}-level system", l.dim())));
            }
            if !(g.is_finite() && *g >= 0.0) {
                return Err(invalid(format!("channel rate {g} must be finite and >= 0")));
            }
            loss += (l.matrix().adjoint() * l.matrix()).scale(0.5 * g);
        }
        let h_nh = h.matrix() - loss.map(|z| z * C64::new(0.0, 1.0));
        let row_sum = |m: &CMatrix| (0..d).map(|r| m.row(r).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
        let norm_bound = 2.0 * (row_sum(h.matrix()) + 2.0 * row_sum(&loss));
        Ok(Lindblad {
            dim: d,
            h: h.clone(),
            channels: channels.to_vec(),
            h_nh: Sparse::from_dense(&h_nh),
            loss: Sparse::from_dense(&loss),
            jumps: channels
                .iter()
                .filter(|(g, _)| *g > 0.0)
                .map(|(g, l)| (*g, Sparse::from_dense(l.matrix())))
                .collect(),
            norm_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn channels(&self) -> &[(f64, Operator)] {
        &self.channels
    }

    fn rhs_flat(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let mi = C64::new(0.0, -1.0);
        // -i (H rho - rho H^dagger)
        self.h_nh.left_mul_acc(rho, out, d, mi);
        self.h_nh.right_mul_adj_acc(rho, out, d, -mi);
        self.add_jumps(rho, out);
    }

    fn add_jumps(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let mut tmp = vec![C64::new(0.0, 0.0); d * d];
        for (g, l) in &self.jumps {
            tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            l.left_mul_acc(rho, &mut tmp, d, C64::new(1.0, 0.0));
            l.right_mul_adj_acc(&tmp, out, d, C64::new(*g, 0.0));
        }
    }

    fn dissipator_flat(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let m1 = C64::new(-1.0, 0.0);
        self.loss.left_mul_acc(rho, out, d, m1);
        self.loss.right_mul_adj_acc(rho, out, d, m1);
        self.add_jumps(rho, out);
    }

    /// Full right-hand side.
    pub fn rhs(&self, rho: &CMatrix) -> CMatrix {
        self.apply(rho, Self::rhs_flat)
    }

    /// Dissipative part `C rho` only.
    pub fn dissipator_action(&self, rho: &CMatrix) -> CMatrix {
        self.apply(rho, Self::dissipator_flat)
    }

    fn apply(&self, rho: &CMatrix, f: fn(&Self, &[C64], &mut [C64])) -> CMatrix {
        let d = self.dim;
        let flat = to_flat(rho);
        let mut out = vec![C64::new(0.0, 0.0); d * d];
        f(self, &flat, &mut out);
        from_flat(&out, d)
    }

    /// Upper bound on the induced infinity norm of the generator.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// Smallest positive channel rate.
    pub fn min_rate(&self) -> Option<f64> {
        self.jumps.iter().map(|(g, _)| *g).reduce(f64::min)
    }
}

fn to_flat(m: &CMatrix) -> Vec<C64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            v.push(m[(r, c)]);
        }
    }
    v
}

fn from_flat(v: &[C64], d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |r, c| v[r * d + c])
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(invalid("empty time grid"));
    }
    if t_grid[0] != 0.0 {
        return Err(invalid("time grid must start at 0"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time grid must be finite and strictly ascending"));
    }
    Ok(())
}

/// Integrator settings for the master equation. The absolute floor sits
/// well below the relative tolerance so that tiny populations keep their
/// ordering.
pub fn lindblad_ode_options() -> OdeOptions {
    OdeOptions {
        rtol: 1e-9,
        atol: 1e-12,
        ..OdeOptions::default()
    }
}

impl Lindblad {
    /// Evolves `rho0` and records the state at every grid time. Each recorded
    /// state is checked against [`TRAJECTORY_STATE_TOL`].
    pub fn evolve(&self, rho0: &DensityMatrix, t_grid: &[f64]) -> Result<Trajectory<DensityMatrix>> {
        self.evolve_with(rho0, t_grid, lindblad_ode_options())
    }

    pub fn evolve_with(&self, rho0: &DensityMatrix, t_grid: &[f64], opts: OdeOptions) -> Result<Trajectory<DensityMatrix>> {
        if rho0.dim() != self.dim {
            return Err(invalid("initial state dimension does not match the generator"));
        }
        check_grid(t_grid)?;
        let d = self.dim;
        let mut solver = Dopri5::new(|_, y: &[C64], dy: &mut [C64]| self.rhs_flat(y, dy), 0.0, to_flat(rho0.matrix()), opts)?;
        let mut states = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            solver.advance_to(t)?;
            let m = from_flat(solver.y(), d);
            validate_state(&m, TRAJECTORY_STATE_TOL)
                .map_err(|e| numeric(format!("state invalid at t = {t}: {e}")))?;
            states.push(DensityMatrix::new_unchecked(m));
        }
        Ok(Trajectory {
            times: t_grid.to_vec(),
            states,
            observables: BTreeMap::new(),
        })
    }

    /// State after a fixed-step RK4 run from `t0` to `t1` (either direction).
    pub fn propagate_rk4(&self, rho: &CMatrix, t0: f64, t1: f64, steps: usize) -> CMatrix {
        let y = ode::rk4(|_, y: &[C64], dy: &mut [C64]| self.rhs_flat(y, dy), t0, &to_flat(rho), t1, steps);
        from_flat(&y, self.dim)
    }
}

/// Lindblad evolution for `h` and `(rate, L)` channels.
pub fn evolve_lindblad(
    h: &Operator,
    channels: &[(f64, Operator)],
    rho0: &DensityMatrix,
    t_grid: &[f64],
) -> Result<Trajectory<DensityMatrix>> {
    Lindblad::new(h, channels)?.evolve(rho0, t_grid)
}

/// Classical rate equation `dP_i/dt = sum_j (R_ij P_j - R_ji P_i)`.
pub fn evolve_populations(r: &RateMatrix, p0: &PopulationVector, t_grid: &[f64]) -> Result<Trajectory<PopulationVector>> {
    if r.dim() != p0.dim() {
        return Err(invalid("rate matrix and populations differ in dimension"));
    }
    check_grid(t_grid)?;
    let g = r.generator();
    let f = |_, y: &[f64], dy: &mut [f64]| {
        let v = &g * DVector::from_column_slice(y);
        dy.copy_from_slice(v.as_slice());
    };
    let opts = OdeOptions {
        rtol: 1e-10,
        atol: 1e-12,
        ..OdeOptions::default()
    };
    let ys = ode::solve_at(f, 0.0, p0.as_slice().to_vec(), t_grid, opts)?;
    let mut states = Vec::with_capacity(ys.len());
    for (t, y) in t_grid.iter().zip(ys) {
        check_populations(&y).map_err(|e| numeric(format!("populations invalid at t = {t}: {e}")))?;
        states.push(PopulationVector(y));
    }
    Ok(Trajectory {
        times: t_grid.to_vec(),
        states,
        observables: BTreeMap::new(),
    })
}

/// Stationary populations of a rate matrix from the null space of its generator.
pub fn stationary_populations(r: &RateMatrix) -> Result<PopulationVector> {
    let d = r.dim();
    let mut a = r.generator();
    // replace the last balance equation by normalization
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(d);
    b[d - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| numeric("rate generator has no unique stationary state"))?;
    let v: Vec<f64> = x.iter().map(|&p| if p < 0.0 && p > -1e-15 { 0.0 } else { p }).collect();
    PopulationVector::new(v)
}

/// Jump operators `|i><j|` with rates `R_ij`, reproducing the rate equation
/// on diagonal states.
pub fn channels_from_rates(r: &RateMatrix) -> Vec<(f64, Operator)> {
    let d = r.dim();
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i != j && r.rate(i, j) > 0.0 {
                out.push((r.rate(i, j), Operator::ket_bra(d, i, j)));
            }
        }
    }
    out
}

/// Options for [`steady_state`].
#[derive(Clone, Debug)]
pub struct SteadyStateOptions {
    /// Stop once `||drho/dt||_F` drops below this.
    pub tol: f64,
    /// Give up after this much time; defaults to `50 / min(rate)`.
    pub horizon: Option<f64>,
    /// Starting state; maximally mixed when `None`.
    pub initial: Option<DensityMatrix>,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            tol: 1e-10,
            horizon: None,
            initial: None,
        }
    }
}

/// Integrates until the residual `||drho/dt||_F` falls below `tol`.
pub fn steady_state(h: &Operator, channels: &[(f64, Operator)], tol: f64) -> Result<DensityMatrix> {
    steady_state_with(
        &Lindblad::new(h, channels)?,
        &SteadyStateOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn steady_state_with(gen: &Lindblad, opts: &SteadyStateOptions) -> Result<DensityMatrix> {
    let min_rate = gen
        .min_rate()
        .ok_or_else(|| invalid("steady state needs at least one channel with positive rate"))?;
    if !(opts.tol > 0.0) {
        return Err(invalid("steady-state tolerance must be positive"));
    }
    let horizon = opts.horizon.unwrap_or(50.0 / min_rate);
    let d = gen.dim;
    let rho0 = match &opts.initial {
        Some(r) if r.dim() == d => r.clone(),
        Some(_) => return Err(invalid("initial state dimension does not match the generator")),
        None => DensityMatrix::maximally_mixed(d),
    };
    let residual = |dy: &[C64]| dy.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut solver = Dopri5::new(
        |_, y: &[C64], dy: &mut [C64]| gen.rhs_flat(y, dy),
        0.0,
        to_flat(rho0.matrix()),
        // State noise of size atol shows up in the residual amplified by up
        // to the generator norm, so resolve the state well below tol / norm.
        OdeOptions {
            rtol: 1e-11,
            atol: 1e-2 * opts.tol / gen.norm_bound.max(1.0),
            ..OdeOptions::default()
        },
    )?;
    while residual(solver.dy()) >= opts.tol {
        if solver.t() >= horizon {
            return Err(numeric(format!(
                "no steady state within t = {horizon}: residual {:e}",
                residual(solver.dy())
            )));
        }
        solver.step(horizon)?;
    }
    let m = from_flat(solver.y(), d);
    validate_state(&m, TRAJECTORY_STATE_TOL).map_err(|e| numeric(format!("steady state invalid: {e}")))?;
    Ok(DensityMatrix::new_unchecked(m))
}

/// Real part of `tr(A B)`.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for k in 0..d {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}

/// Dense real matrix helper for tests and examples.
pub fn rate_matrix_from_fn(d: usize, f: impl Fn(usize, usize) -> f64) -> Result<RateMatrix> {
    RateMatrix::new(DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { f(i, j) }))
}
