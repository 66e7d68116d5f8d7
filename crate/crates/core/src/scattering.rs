//! On-shell kinematics, scattering amplitudes and Lindblad channel assembly.
//!
//! Amplitudes `f_ij^kl(q, p)` describe a collision in which the system goes
//! `j -> i`, the ancilla goes `l -> k`, and the gas particle is scattered
//! from momentum `p` into `q`. Energy conservation fixes
//! `|q|^2 = |p|^2 - 2m (E + e_k - e_l)` with `E = eps_i - eps_j`.

mod table;

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use table::AmplitudeTable;

use crate::dynamics::LevelSystem;
use crate::error::{invalid, Error, Result};
use crate::gas::{ancilla_populations, derived_scales, GasEnvironment, InteractionSpec};
use crate::qmath::{CMatrix, Operator};
use crate::quad::{self, GaussLegendre};
use crate::rates::QuadratureSpec;

/// Relative tolerance on `|q|` against the on-shell value.
pub const ON_SHELL_TOL: f64 = 1e-9;
/// Energy-bucket width for grouping `(i, j)` pairs, in units of the model's energy scale.
pub const ENERGY_MATCH_TOL: f64 = 1e-9;

/// `sqrt(|p|^2 - 2m (E + e_k - e_l))`, or [`Error::ChannelClosed`].
pub fn outgoing_momentum(p_mag: f64, e: f64, eps_k: f64, eps_l: f64, m: f64) -> Result<f64> {
    if !(p_mag >= 0.0) {
        return Err(invalid(format!("incoming momentum must be >= 0, got {p_mag}")));
    }
    let radicand = p_mag * p_mag - 2.0 * m * (e + eps_k - eps_l);
    if radicand > 0.0 {
        Ok(radicand.sqrt())
    } else {
        Err(Error::ChannelClosed { radicand })
    }
}

/// A joint transition: system `j -> i`, ancilla `l -> k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Channel {
    pub energy: f64,
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
}

impl Channel {
    pub fn new(levels: &LevelSystem, i: usize, j: usize, k: usize, l: usize) -> Result<Self> {
        let e = levels.energies();
        if i >= e.len() || j >= e.len() {
            return Err(invalid(format!("system index out of range ({i}, {j})")));
        }
        Ok(Channel {
            energy: e[i] - e[j],
            i,
            j,
            k,
            l,
        })
    }

    /// Kinetic energy handed to the system and ancilla: `E + e_k - e_l`.
    pub fn internal_energy_change(&self, ancilla: &[f64]) -> f64 {
        self.energy + ancilla[self.k] - ancilla[self.l]
    }

    pub fn is_open(&self, p_mag: f64, ancilla: &[f64], mass: f64) -> bool {
        p_mag * p_mag - 2.0 * mass * self.internal_energy_change(ancilla) > 0.0
    }

    pub fn reversed(&self) -> Channel {
        Channel {
            energy: -self.energy,
            i: self.j,
            j: self.i,
            k: self.l,
            l: self.k,
        }
    }
}

/// First-order Born amplitudes of a Gaussian active region.
#[derive(Clone, Debug, PartialEq)]
pub struct BornGaussian {
    spec: InteractionSpec,
    p_r: f64,
    e_r: f64,
}

impl BornGaussian {
    pub fn new(spec: InteractionSpec, env: &GasEnvironment) -> Self {
        let s = derived_scales(env, &spec);
        BornGaussian {
            spec,
            p_r: s.p_r,
            e_r: s.e_r,
        }
    }

    pub fn spec(&self) -> &InteractionSpec {
        &self.spec
    }

    /// `-sqrt(pi/2) R (V0/E_R) v_ij^kl exp(-(q - p)^2 / (2 p_R^2))`
    pub fn amplitude(&self, i: usize, j: usize, k: usize, l: usize, q: &Vector3<f64>, p: &Vector3<f64>) -> C64 {
        let v = self.spec.coupling(i, j, k, l);
        if v == C64::new(0.0, 0.0) {
            return v;
        }
        let dq2 = (q - p).norm_squared();
        let pre = -(PI / 2.0).sqrt() * self.spec.range() * self.spec.v0() / self.e_r;
        v * (pre * (-dq2 / (2.0 * self.p_r * self.p_r)).exp())
    }
}

/// Where the amplitudes come from.
#[derive(Clone, Debug)]
pub enum AmplitudeKind {
    BornGaussian(BornGaussian),
    Table(AmplitudeTable),
}

/// Amplitudes together with the level structure that fixes the kinematics.
#[derive(Clone, Debug)]
pub struct AmplitudeModel {
    system: Vec<f64>,
    ancilla: Vec<f64>,
    mass: f64,
    energy_tol: f64,
    kind: AmplitudeKind,
}

impl AmplitudeModel {
    pub fn born_gaussian(levels: &LevelSystem, env: &GasEnvironment, spec: InteractionSpec) -> Result<Self> {
        if spec.n_sys() != levels.dim() || spec.n_anc() != env.ancilla_energies().len() {
            return Err(invalid(format!(
                "coupling is {}x{} (system x ancilla) but levels are {}x{}",
                spec.n_sys(),
                spec.n_anc(),
                levels.dim(),
                env.ancilla_energies().len()
            )));
        }
        let born = BornGaussian::new(spec, env);
        Ok(AmplitudeModel {
            system: levels.energies().to_vec(),
            ancilla: env.ancilla_energies().to_vec(),
            mass: env.mass(),
            energy_tol: ENERGY_MATCH_TOL * born.e_r,
            kind: AmplitudeKind::BornGaussian(born),
        })
    }

    /// `energy_scale` sets the bucket width used to group transitions by energy.
    pub fn table(levels: &LevelSystem, env: &GasEnvironment, table: AmplitudeTable, energy_scale: f64) -> Result<Self> {
        let (ns, na) = (levels.dim(), env.ancilla_energies().len());
        if let Some(c) = table.channels().find(|c| c.0 >= ns || c.1 >= ns || c.2 >= na || c.3 >= na) {
            return Err(invalid(format!("table channel {c:?} outside {ns} system x {na} ancilla levels")));
        }
        if !(energy_scale.is_finite() && energy_scale > 0.0) {
            return Err(invalid("energy scale must be positive"));
        }
        Ok(AmplitudeModel {
            system: levels.energies().to_vec(),
            ancilla: env.ancilla_energies().to_vec(),
            mass: env.mass(),
            energy_tol: ENERGY_MATCH_TOL * energy_scale,
            kind: AmplitudeKind::Table(table),
        })
    }

    pub fn kind(&self) -> &AmplitudeKind {
        &self.kind
    }

    pub fn system_energies(&self) -> &[f64] {
        &self.system
    }

    pub fn ancilla_energies(&self) -> &[f64] {
        &self.ancilla
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn energy_tol(&self) -> f64 {
        self.energy_tol
    }

    /// Same model with every Born coupling strength scaled by `c`.
    pub fn scaled_strength(&self, c: f64) -> Self {
        let mut m = self.clone();
        match &mut m.kind {
            AmplitudeKind::BornGaussian(b) => b.spec = b.spec.with_v0(b.spec.v0() * c),
            AmplitudeKind::Table(t) => *t = t.scaled(c),
        }
        m
    }

    fn channel(&self, i: usize, j: usize, k: usize, l: usize) -> Channel {
        Channel {
            energy: self.system[i] - self.system[j],
            i,
            j,
            k,
            l,
        }
    }

    /// `false` only when the model guarantees a vanishing amplitude.
    pub fn may_couple(&self, i: usize, j: usize, k: usize, l: usize) -> bool {
        match &self.kind {
            AmplitudeKind::BornGaussian(b) => b.spec.coupling(i, j, k, l) != C64::new(0.0, 0.0),
            AmplitudeKind::Table(t) => t.has_channel(i, j, k, l),
        }
    }

    pub fn outgoing(&self, i: usize, j: usize, k: usize, l: usize, p_mag: f64) -> Result<f64> {
        let c = self.channel(i, j, k, l);
        outgoing_momentum(p_mag, c.energy, self.ancilla[k], self.ancilla[l], self.mass)
    }

    /// Amplitude without the on-shell check. Table lookups also report
    /// whether the point fell outside the tabulated grid.
    pub fn amplitude_raw(&self, i: usize, j: usize, k: usize, l: usize, q: &Vector3<f64>, p: &Vector3<f64>) -> (C64, bool) {
        match &self.kind {
            AmplitudeKind::BornGaussian(b) => (b.amplitude(i, j, k, l, q, p), false),
            AmplitudeKind::Table(t) => {
                let (pm, qm) = (p.norm(), q.norm());
                let cos = if pm > 0.0 && qm > 0.0 {
                    (p.dot(q) / (pm * qm)).clamp(-1.0, 1.0)
                } else {
                    1.0
                };
                t.lookup(i, j, k, l, pm, cos)
            }
        }
    }

    /// On-shell amplitude. Fails with [`Error::ChannelClosed`] for forbidden
    /// transitions and with an invalid argument when `|q|` is off shell.
    pub fn amplitude(&self, i: usize, j: usize, k: usize, l: usize, q: &Vector3<f64>, p: &Vector3<f64>) -> Result<C64> {
        self.check_indices(i, j, k, l)?;
        let q_shell = self.outgoing(i, j, k, l, p.norm())?;
        let qm = q.norm();
        if (qm - q_shell).abs() > ON_SHELL_TOL * q_shell.max(f64::MIN_POSITIVE) {
            return Err(invalid(format!("|q| = {qm} is off shell (expected {q_shell})")));
        }
        Ok(self.amplitude_raw(i, j, k, l, q, p).0)
    }

    fn check_indices(&self, i: usize, j: usize, k: usize, l: usize) -> Result<()> {
        let (ns, na) = (self.system.len(), self.ancilla.len());
        if i >= ns || j >= ns || k >= na || l >= na {
            return Err(invalid(format!("channel ({i},{j},{k},{l}) outside {ns}x{na} levels")));
        }
        Ok(())
    }
}

/// Born amplitude for the Gaussian interaction with the on-shell check.
pub fn born_gaussian_amplitude(
    levels: &LevelSystem,
    spec: &InteractionSpec,
    env: &GasEnvironment,
    (i, j, k, l): (usize, usize, usize, usize),
    q: &Vector3<f64>,
    p: &Vector3<f64>,
) -> Result<C64> {
    AmplitudeModel::born_gaussian(levels, env, spec.clone())?.amplitude(i, j, k, l, q, p)
}

/// Outcome of [`check_microreversibility`].
#[derive(Clone, Debug, PartialEq)]
pub struct MicroReversibilityReport {
    pub max_violation: f64,
    pub pass: bool,
    /// Channel, incoming `|p|` and `cos(theta)` of the largest violation.
    pub worst: Option<((usize, usize, usize, usize), f64, f64)>,
    pub evaluated: usize,
    pub skipped_closed: usize,
    /// Table lookups that fell outside the grid and were clamped.
    pub extrapolated: usize,
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let cos: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    Vector3::new(sin * phi.cos(), sin * phi.sin(), cos)
}

/// Compares `f_ij^kl(q, p)` with `f_ji^lk(-p, -q)` on random open
/// configurations (plus every grid node for tabulated models).
pub fn check_microreversibility(model: &AmplitudeModel, samples: usize, tol: f64) -> Result<MicroReversibilityReport> {
    check_microreversibility_seeded(model, samples, tol, 0x5eed)
}

pub fn check_microreversibility_seeded(
    model: &AmplitudeModel,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<MicroReversibilityReport> {
    if samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let (ns, na) = (model.system.len(), model.ancilla.len());
    let mut channels = Vec::new();
    for i in 0..ns {
        for j in 0..ns {
            for k in 0..na {
                for l in 0..na {
                    if model.may_couple(i, j, k, l) || model.may_couple(j, i, l, k) {
                        channels.push((i, j, k, l));
                    }
                }
            }
        }
    }
    let mut report = MicroReversibilityReport {
        max_violation: 0.0,
        pass: true,
        worst: None,
        evaluated: 0,
        skipped_closed: 0,
        extrapolated: 0,
    };
    if channels.is_empty() {
        return Ok(report);
    }

    let eval = |ch: (usize, usize, usize, usize), p: Vector3<f64>, dir: Vector3<f64>, report: &mut MicroReversibilityReport| {
        let (i, j, k, l) = ch;
        let q_mag = match model.outgoing(i, j, k, l, p.norm()) {
            Ok(q) => q,
            Err(_) => {
                report.skipped_closed += 1;
                return;
            }
        };
        let q = dir * q_mag;
        let (fwd, e1) = model.amplitude_raw(i, j, k, l, &q, &p);
        let (rev, e2) = model.amplitude_raw(j, i, l, k, &(-p), &(-q));
        report.extrapolated += usize::from(e1) + usize::from(e2);
        report.evaluated += 1;
        let v = (fwd - rev).norm();
        if v > report.max_violation || v.is_nan() {
            report.max_violation = if v.is_nan() { f64::INFINITY } else { v };
            let pm = p.norm();
            let cos = if pm > 0.0 { p.dot(&dir) / pm } else { 1.0 };
            report.worst = Some((ch, pm, cos));
        }
    };

    if let AmplitudeKind::Table(t) = &model.kind {
        for ch in t.channels() {
            for (pm, cos) in t.grid_nodes(ch) {
                let p = Vector3::new(0.0, 0.0, pm);
                let sin = (1.0 - cos * cos).max(0.0).sqrt();
                eval(ch, p, Vector3::new(sin, 0.0, cos), &mut report);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let ch = channels[rng.random_range(0..channels.len())];
        let p_max = match &model.kind {
            AmplitudeKind::BornGaussian(b) => 6.0 * b.p_r,
            AmplitudeKind::Table(t) => t.p_range(ch).map(|r| r.1).unwrap_or(1.0),
        };
        let p_min = match &model.kind {
            AmplitudeKind::Table(t) => t.p_range(ch).map(|r| r.0).unwrap_or(0.0),
            _ => 0.0,
        };
        let pm = if p_max > p_min { rng.random_range(p_min..p_max) } else { p_min };
        let p = random_unit(&mut rng) * pm;
        let dir = random_unit(&mut rng);
        eval(ch, p, dir, &mut report);
    }
    if report.extrapolated > 0 {
        log::warn!(
            "micro-reversibility check clamped {} table lookups outside the grid",
            report.extrapolated
        );
    }
    report.pass = report.max_violation <= tol;
    Ok(report)
}

/// `L_E^kl(Omega, p) = sum_{eps_i - eps_j = E} sqrt(|q|/|p|) f_ij^kl(q(Omega), p) |i><j|`.
///
/// Closed `(i, j)` pairs contribute nothing; with no open pair the zero
/// operator is returned.
pub fn lindblad_channel_operator(
    levels: &LevelSystem,
    model: &AmplitudeModel,
    energy: f64,
    k: usize,
    l: usize,
    direction: &Vector3<f64>,
    p: &Vector3<f64>,
) -> Result<Operator> {
    let d = levels.dim();
    if d != model.system.len() {
        return Err(invalid("level system does not match the amplitude model"));
    }
    if k >= model.ancilla.len() || l >= model.ancilla.len() {
        return Err(invalid(format!("ancilla indices ({k}, {l}) out of range")));
    }
    let norm = direction.norm();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(invalid(format!("direction must be a unit vector, |Omega| = {norm}")));
    }
    let pm = p.norm();
    if !(pm > 0.0) {
        return Err(invalid("incoming momentum must be nonzero"));
    }
    let e = levels.energies();
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if ((e[i] - e[j]) - energy).abs() > model.energy_tol {
                continue;
            }
            let Ok(qm) = model.outgoing(i, j, k, l, pm) else {
                continue;
            };
            let q = direction * qm;
            let (f, _) = model.amplitude_raw(i, j, k, l, &q, p);
            m[(i, j)] = f * (qm / pm).sqrt();
        }
    }
    Operator::new(m)
}

/// Collision-induced energy shift from elastic forward scattering,
/// `-(pi hbar^2 n / m) sum_k int d^3p mu_k(p) L_0^kk(0, p) + h.c.`
pub fn effective_hamiltonian(
    levels: &LevelSystem,
    model: &AmplitudeModel,
    env: &GasEnvironment,
    quad_spec: &QuadratureSpec,
) -> Result<Operator> {
    let d = levels.dim();
    if d != model.system.len() {
        return Err(invalid("level system does not match the amplitude model"));
    }
    let mut a = CMatrix::zeros(d, d);
    if env.density() == 0.0 {
        return Operator::new(a);
    }
    let pops = ancilla_populations(env);
    let beta = env.beta_motion();
    let mass = env.mass();
    let rule = GaussLegendre::new(quad_spec.radial_nodes)?;
    let tol = quad_spec.tolerance();
    let e = levels.energies();
    let pre = -PI * env.hbar() * env.hbar() * env.density() / mass;
    for i in 0..d {
        for j in 0..d {
            if (e[i] - e[j]).abs() > model.energy_tol {
                continue;
            }
            for (k, &pk) in pops.iter().enumerate() {
                if pk == 0.0 || !model.may_couple(i, j, k, k) {
                    continue;
                }
                // Maxwell-Boltzmann measure in z = beta p^2 / 2m: (2/sqrt(pi)) sqrt(z) e^-z dz
                let amp = |z: f64| {
                    let pm = (2.0 * mass * z / beta).sqrt();
                    let p = Vector3::new(0.0, 0.0, pm);
                    model.amplitude_raw(i, j, k, k, &p, &p).0 * (2.0 / PI.sqrt() * z.sqrt() * (-z).exp())
                };
                let re = quad::semi_infinite(0.0, |z| amp(z).re, |g| {
                    quad::gauss_legendre_adaptive(&rule, g, 0.0, 1.0, tol)
                })?;
                let im = quad::semi_infinite(0.0, |z| amp(z).im, |g| {
                    quad::gauss_legendre_adaptive(&rule, g, 0.0, 1.0, tol)
                })?;
                a[(i, j)] += C64::new(re.value, im.value) * (pre * pk);
            }
        }
    }
    Operator::new(&a + a.adjoint())
}
