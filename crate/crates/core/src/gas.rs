//! The thermal gas: ancilla level populations, Maxwell-Boltzmann motion and
//! the scales derived from the interaction.
//!
//! Internal and motional sectors carry separate temperatures. Everything is
//! expressed in whatever consistent unit system the caller picks; the
//! [`crate::spin`] case study uses `hbar = kB = m = E_R = 1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};

/// Dilute gas of particles with internal levels.
#[derive(Clone, Debug, PartialEq)]
pub struct GasEnvironment {
    ancilla_energies: Vec<f64>,
    t_ancilla: f64,
    t_motion: f64,
    density: f64,
    mass: f64,
    hbar: f64,
    kb: f64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

impl GasEnvironment {
    /// `density` may be zero (no collisions); every other scale must be positive.
    pub fn new(
        ancilla_energies: Vec<f64>,
        t_ancilla: f64,
        t_motion: f64,
        density: f64,
        mass: f64,
        hbar: f64,
        kb: f64,
    ) -> Result<Self> {
        if ancilla_energies.is_empty() {
            return Err(invalid("gas needs at least one ancilla level"));
        }
        if ancilla_energies.iter().any(|e| !e.is_finite()) {
            return Err(invalid("ancilla energies must be finite"));
        }
        positive("ancilla temperature", t_ancilla)?;
        positive("motional temperature", t_motion)?;
        positive("mass", mass)?;
        positive("hbar", hbar)?;
        positive("kB", kb)?;
        if !(density.is_finite() && density >= 0.0) {
            return Err(invalid(format!("density must be finite and >= 0, got {density}")));
        }
        Ok(GasEnvironment {
            ancilla_energies,
            t_ancilla,
            t_motion,
            density,
            mass,
            hbar,
            kb,
        })
    }

    pub fn ancilla_energies(&self) -> &[f64] {
        &self.ancilla_energies
    }
    pub fn t_ancilla(&self) -> f64 {
        self.t_ancilla
    }
    pub fn t_motion(&self) -> f64 {
        self.t_motion
    }
    pub fn density(&self) -> f64 {
        self.density
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn kb(&self) -> f64 {
        self.kb
    }

    pub fn beta_motion(&self) -> f64 {
        1.0 / (self.kb * self.t_motion)
    }

    pub fn beta_ancilla(&self) -> f64 {
        1.0 / (self.kb * self.t_ancilla)
    }

    pub fn with_density(&self, density: f64) -> Result<Self> {
        let mut g = self.clone();
        if !(density.is_finite() && density >= 0.0) {
            return Err(invalid(format!("density must be finite and >= 0, got {density}")));
        }
        g.density = density;
        Ok(g)
    }
}

/// `V = V0 v (x) g(|x|)` with a Gaussian active region of width `R`.
///
/// The coupling is stored as `v[i][j][k][l] = <e_i, a_k| v |e_j, a_l>` with
/// system indices `i, j` and ancilla indices `k, l`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSpec {
    v0: f64,
    range: f64,
    n_sys: usize,
    n_anc: usize,
    coupling: Vec<C64>,
}

/// Element-wise tolerance for the joint-space Hermiticity of the coupling.
const COUPLING_HERMITIAN_TOL: f64 = 1e-12;

impl InteractionSpec {
    /// Builds the coupling from a matrix on the joint space, row/column index
    /// `i * n_anc + k` (system-major, as produced by a Kronecker product).
    pub fn from_joint_matrix(v0: f64, range: f64, n_sys: usize, joint: &DMatrix<C64>) -> Result<Self> {
        if !v0.is_finite() {
            return Err(invalid("V0 must be finite"));
        }
        positive("interaction range R", range)?;
        if n_sys == 0 || joint.nrows() != joint.ncols() || joint.nrows() % n_sys != 0 {
            return Err(invalid(format!(
                "joint coupling of shape {}x{} does not factor over {n_sys} system levels",
                joint.nrows(),
                joint.ncols()
            )));
        }
        let n_anc = joint.nrows() / n_sys;
        let mut coupling = vec![C64::new(0.0, 0.0); n_sys * n_sys * n_anc * n_anc];
        for i in 0..n_sys {
            for j in 0..n_sys {
                for k in 0..n_anc {
                    for l in 0..n_anc {
                        coupling[((i * n_sys + j) * n_anc + k) * n_anc + l] =
                            joint[(i * n_anc + k, j * n_anc + l)];
                    }
                }
            }
        }
        let spec = InteractionSpec {
            v0,
            range,
            n_sys,
            n_anc,
            coupling,
        };
        let defect = spec.hermiticity_defect();
        if !(defect <= COUPLING_HERMITIAN_TOL) {
            return Err(invalid(format!("coupling is not Hermitian (defect {defect:e})")));
        }
        Ok(spec)
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }
    pub fn range(&self) -> f64 {
        self.range
    }
    pub fn n_sys(&self) -> usize {
        self.n_sys
    }
    pub fn n_anc(&self) -> usize {
        self.n_anc
    }

    pub fn coupling(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.coupling[((i * self.n_sys + j) * self.n_anc + k) * self.n_anc + l]
    }

    /// Same coupling with a different strength.
    pub fn with_v0(&self, v0: f64) -> Self {
        InteractionSpec { v0, ..self.clone() }
    }

    /// Multiplies every coupling element by a phase `exp(i phi)`.
    ///
    /// The result is Hermitian only for `phi` a multiple of pi; it exists so
    /// rate invariance under a global phase can be tested.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let ph = C64::from_polar(1.0, phi);
        InteractionSpec {
            coupling: self.coupling.iter().map(|z| z * ph).collect(),
            ..self.clone()
        }
    }

    /// `max |v_ij^kl - conj(v_ji^lk)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_sys {
            for j in 0..self.n_sys {
                for k in 0..self.n_anc {
                    for l in 0..self.n_anc {
                        let d = (self.coupling(i, j, k, l) - self.coupling(j, i, l, k).conj()).norm();
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    }
}

/// Characteristic scales of the gas and interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scales {
    /// `hbar^2 / (2 m R^2)`
    pub e_r: f64,
    /// `hbar / R`
    pub p_r: f64,
    /// Thermal wavelength of the motional state.
    pub lambda_th: f64,
    /// `n lambda_th^3 V0^2 / (2 hbar E_R)`
    pub gamma_tilde: f64,
}

pub fn derived_scales(env: &GasEnvironment, spec: &InteractionSpec) -> Scales {
    let hbar = env.hbar;
    let p_r = hbar / spec.range;
    let e_r = hbar * hbar / (2.0 * env.mass * spec.range * spec.range);
    let lambda_th = (2.0 * PI * hbar * hbar / (env.mass * env.kb * env.t_motion)).sqrt();
    let gamma_tilde = env.density * lambda_th.powi(3) * spec.v0 * spec.v0 / (2.0 * hbar * e_r);
    Scales {
        e_r,
        p_r,
        lambda_th,
        gamma_tilde,
    }
}

/// Maxwell-Boltzmann density in momentum space at the motional temperature.
pub fn maxwell_boltzmann(env: &GasEnvironment, p: &Vector3<f64>) -> f64 {
    maxwell_boltzmann_radial(env, p.norm())
}

pub(crate) fn maxwell_boltzmann_radial(env: &GasEnvironment, p_mag: f64) -> f64 {
    let beta = env.beta_motion();
    let m = env.mass;
    (beta / (2.0 * PI * m)).powf(1.5) * (-beta * p_mag * p_mag / (2.0 * m)).exp()
}

/// Gibbs weights of the ancilla levels at the ancilla temperature.
pub fn ancilla_populations(env: &GasEnvironment) -> Vec<f64> {
    let beta = env.beta_ancilla();
    let e_min = env
        .ancilla_energies
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = env
        .ancilla_energies
        .iter()
        .map(|&e| (-beta * (e - e_min)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(energies: Vec<f64>, ta: f64, tm: f64) -> GasEnvironment {
        GasEnvironment::new(energies, ta, tm, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    // independent composite Simpson on [0, p_max]
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn mb_at_origin() {
        let g = env(vec![0.0], 1.0, 2.0);
        let beta = 0.5;
        let expected = (beta / (2.0 * PI)).powf(1.5);
        assert!((maxwell_boltzmann(&g, &Vector3::zeros()) - expected).abs() < 1e-16);
    }

    #[test]
    fn mb_normalized_and_equipartition() {
        let g = env(vec![0.0], 1.0, 0.7);
        let p_max = 40.0 * (g.mass() * g.kb() * g.t_motion()).sqrt();
        let norm = simpson(
            |p| 4.0 * PI * p * p * maxwell_boltzmann_radial(&g, p),
            0.0,
            p_max,
            20_000,
        );
        assert!((norm - 1.0).abs() < 1e-8, "norm {norm}");
        let ke = simpson(
            |p| 4.0 * PI * p * p * maxwell_boltzmann_radial(&g, p) * p * p / 2.0,
            0.0,
            p_max,
            20_000,
        );
        let expected = 1.5 * g.kb() * g.t_motion();
        assert!(((ke - expected) / expected).abs() < 1e-6);
    }

    #[test]
    fn mb_isotropic() {
        let g = env(vec![0.0], 1.0, 1.3);
        let a = maxwell_boltzmann(&g, &Vector3::new(0.3, -0.4, 1.2));
        let b = maxwell_boltzmann(&g, &Vector3::new(1.3, 0.0, 0.0));
        assert!((a - b).abs() <= 1e-14);
    }

    #[test]
    fn ancilla_population_examples() {
        assert_eq!(ancilla_populations(&env(vec![0.3], 1.0, 1.0)), vec![1.0]);
        assert_eq!(ancilla_populations(&env(vec![0.2, 0.2], 1.0, 1.0)), vec![0.5, 0.5]);
        let omega_a = 0.7;
        let t_a = 0.4;
        let p = ancilla_populations(&env(vec![0.0, omega_a], t_a, 1.0));
        assert!((p[1] / p[0] - (-omega_a / t_a).exp()).abs() < 1e-14);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ancilla_populations_shift_invariant() {
        let a = ancilla_populations(&env(vec![0.0, 0.5, 1.7], 0.9, 1.0));
        let b = ancilla_populations(&env(vec![10.0, 10.5, 11.7], 0.9, 1.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.windows(2).all(|w| w[0] >= w[1]));
    }

    fn spec(range: f64) -> InteractionSpec {
        InteractionSpec::from_joint_matrix(1.0, range, 1, &DMatrix::identity(1, 1)).unwrap()
    }

    #[test]
    fn scales_follow_power_laws() {
        let g = env(vec![0.0], 1.0, 1.0);
        let a = derived_scales(&g, &spec(1.0));
        let b = derived_scales(&g, &spec(2.0));
        assert!((b.e_r - a.e_r / 4.0).abs() < 1e-15);
        let hot = derived_scales(&env(vec![0.0], 1.0, 4.0), &spec(1.0));
        assert!((hot.lambda_th - a.lambda_th / 2.0).abs() < 1e-15);
        let s = derived_scales(&g, &spec(0.37));
        assert!(((s.e_r - s.p_r * s.p_r / 2.0) / s.e_r).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_coupling_rejected() {
        let mut v = DMatrix::zeros(4, 4);
        v[(0, 3)] = C64::new(1.0, 0.0);
        assert!(InteractionSpec::from_joint_matrix(1.0, 1.0, 2, &v).is_err());
        v[(3, 0)] = C64::new(1.0, 0.0);
        let s = InteractionSpec::from_joint_matrix(1.0, 1.0, 2, &v).unwrap();
        // row 0 = (i=0,k=0), col 3 = (j=1,l=1)
        assert_eq!(s.coupling(0, 1, 0, 1), C64::new(1.0, 0.0));
    }

    #[test]
    fn invalid_environment() {
        assert!(GasEnvironment::new(vec![], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(GasEnvironment::new(vec![0.0], 0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(GasEnvironment::new(vec![0.0], 1.0, 1.0, -1.0, 1.0, 1.0, 1.0).is_err());
    }
}
