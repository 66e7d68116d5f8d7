//! The spin case study: a spin-J system exchanging excitations with
//! two-level gas particles through `J_+ sigma_- + J_- sigma_+`.
//!
//! Units are `hbar = kB = m = E_R = 1`, so the interaction range is
//! `R = 1/sqrt(2)` and `p_R = sqrt(2)`. The gas is specified by the
//! dimensionless groups
//!
//! - `alpha = E_R / kB T_M`
//! - `D = hbar Delta / kB T_M` with detuning `Delta = omega_A - omega_S`
//! - `A = hbar omega_A / kB T_A`
//!
//! The master equation is expressed in the rescaled time `Gamma~ t`, and system
//! energies in units of `hbar omega_S` (`h_S = J_z`).

use std::f64::consts::{PI, SQRT_2};

use nalgebra::Vector3;

use crate::dynamics::{LevelSystem, Lindblad};
use crate::error::{invalid, Result};
use crate::gas::{GasEnvironment, InteractionSpec};
use crate::qmath::{spin_operators, CMatrix, DensityMatrix, Operator, SpinOperators, SpinQuantum};
use crate::rates::{self, EffectiveTemperature, QuadratureSpec, RateMatrix, SpinRates};
use crate::scattering::{AmplitudeModel, AmplitudeTable};

/// Interaction strength; `Gamma~` is set through the gas density instead.
pub const V0: f64 = 1.0;
/// Gaussian range in units where `E_R = 1`.
pub const RANGE: f64 = 1.0 / SQRT_2;

#[derive(Clone, Debug, PartialEq)]
pub struct SpinScenario {
    pub spin: SpinQuantum,
    /// `hbar Delta / kB T_M`
    pub d: f64,
    /// `hbar omega_A / kB T_A`; ignored when `equilibrium` is set.
    pub a: f64,
    /// `E_R / kB T_M`
    pub alpha: f64,
    /// `hbar omega_S / E_R`
    pub omega_s: f64,
    /// Rate scale in units of `E_R / hbar`.
    pub gamma_tilde: f64,
    /// Put the ancillas at the motional temperature.
    pub equilibrium: bool,
}

impl SpinScenario {
    pub fn new(spin: SpinQuantum, d: f64, a: f64, alpha: f64, omega_s: f64, gamma_tilde: f64) -> Result<Self> {
        let s = SpinScenario {
            spin,
            d,
            a,
            alpha,
            omega_s,
            gamma_tilde,
            equilibrium: false,
        };
        s.validate()?;
        Ok(s)
    }

    /// Single-temperature gas at `T_M = E_R / alpha`.
    pub fn equilibrium(spin: SpinQuantum, d: f64, alpha: f64, omega_s: f64, gamma_tilde: f64) -> Result<Self> {
        let s = SpinScenario {
            spin,
            d,
            a: f64::NAN,
            alpha,
            omega_s,
            gamma_tilde,
            equilibrium: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite and > 0, got {x}")))
            }
        };
        pos("alpha", self.alpha)?;
        pos("omega_S / E_R", self.omega_s)?;
        pos("gamma_tilde", self.gamma_tilde)?;
        if !self.d.is_finite() {
            return Err(invalid("D must be finite"));
        }
        if !self.equilibrium {
            pos("A", self.a)?;
        }
        if !(self.omega_a() > 0.0) {
            return Err(invalid(format!(
                "ancilla splitting omega_S + Delta = {} must be positive",
                self.omega_a()
            )));
        }
        Ok(())
    }

    pub fn t_motion(&self) -> f64 {
        1.0 / self.alpha
    }

    /// `Delta` in units of `E_R / hbar`.
    pub fn delta(&self) -> f64 {
        self.d * self.t_motion()
    }

    pub fn omega_a(&self) -> f64 {
        self.omega_s + self.delta()
    }

    pub fn t_ancilla(&self) -> f64 {
        if self.equilibrium {
            self.t_motion()
        } else {
            self.omega_a() / self.a
        }
    }

    /// Thermal wavelength `sqrt(2 pi hbar^2 / m kB T_M)`.
    pub fn lambda_th(&self) -> f64 {
        (2.0 * PI * self.alpha).sqrt()
    }

    /// Density giving the configured `Gamma~`.
    pub fn density(&self) -> f64 {
        2.0 * self.gamma_tilde / (self.lambda_th().powi(3) * V0 * V0)
    }

    pub fn environment(&self) -> Result<GasEnvironment> {
        GasEnvironment::new(
            vec![0.0, self.omega_a()],
            self.t_ancilla(),
            self.t_motion(),
            self.density(),
            1.0,
            1.0,
            1.0,
        )
    }

    pub fn operators(&self) -> SpinOperators {
        spin_operators(self.spin)
    }

    /// `v = J_+ (x) sigma_- + J_- (x) sigma_+`, ancilla ground state first.
    pub fn interaction(&self) -> Result<InteractionSpec> {
        let ops = self.operators();
        let sigma_plus = Operator::ket_bra(2, 1, 0).into_matrix();
        let sigma_minus = sigma_plus.adjoint();
        let v: CMatrix = ops.jplus.matrix().kronecker(&sigma_minus) + ops.jminus.matrix().kronecker(&sigma_plus);
        InteractionSpec::from_joint_matrix(V0, RANGE, self.spin.dim(), &v)
    }

    /// System levels `hbar omega_S m` in units of `E_R`.
    pub fn levels(&self) -> Result<LevelSystem> {
        LevelSystem::new(self.spin.m_values().iter().map(|m| m * self.omega_s).collect())
    }

    /// `Gamma_+-` in units of `E_R / hbar`.
    pub fn rates(&self) -> Result<SpinRates> {
        rates::spin_rates(&self.environment()?, &self.interaction()?, self.omega_s, self.delta())
    }

    /// Effective temperature in units of `E_R / kB`.
    pub fn effective_temperature(&self) -> Result<EffectiveTemperature> {
        rates::effective_temperature(self.omega_s, self.delta(), self.t_ancilla(), self.t_motion())
    }

    /// `hbar omega_S / kB T_eff`, zero at infinite temperature.
    pub fn beta_eff(&self) -> Result<f64> {
        Ok(self.omega_s * self.effective_temperature()?.beta(1.0))
    }

    /// `hbar omega_S / kB T_M`.
    pub fn beta_motion(&self) -> f64 {
        self.omega_s * self.alpha
    }

    /// `h_S = J_z` in units of `hbar omega_S`.
    pub fn system_hamiltonian(&self) -> Operator {
        self.operators().jz
    }

    /// Generator of `drho/d(Gamma~ t) = -i (omega_S/Gamma~) [J_z, rho] + (Gamma_+/Gamma~) D[J_+] rho + (Gamma_-/Gamma~) D[J_-] rho`.
    ///
    /// The exchange coupling has no ancilla-diagonal elements, so the
    /// collision-induced energy shift vanishes.
    pub fn generator(&self) -> Result<Lindblad> {
        let r = self.rates()?;
        let ops = self.operators();
        Lindblad::new(
            &ops.jz.scaled(self.omega_s / self.gamma_tilde),
            &[
                (r.gamma_plus / self.gamma_tilde, ops.jplus),
                (r.gamma_minus / self.gamma_tilde, ops.jminus),
            ],
        )
    }

    /// `R_{m+1,m} = Gamma_+ |<m+1|J_+|m>|^2`, `R_{m,m+1} = Gamma_- |<m+1|J_+|m>|^2`.
    pub fn analytic_rate_matrix(&self) -> Result<RateMatrix> {
        spin_rate_matrix(self.spin, self.rates()?)
    }

    pub fn amplitude_model(&self) -> Result<AmplitudeModel> {
        AmplitudeModel::born_gaussian(&self.levels()?, &self.environment()?, self.interaction()?)
    }

    /// Rates from the general scattering integral.
    pub fn quadrature_rate_matrix(&self, spec: &QuadratureSpec) -> Result<RateMatrix> {
        rates::rate_matrix(&self.levels()?, &self.amplitude_model()?, &self.environment()?, spec)
    }

    /// Born amplitudes of every coupled channel tabulated on a grid; closed
    /// channels are stored as zero.
    pub fn born_table(&self, p_grid: &[f64], cos_grid: &[f64]) -> Result<AmplitudeTable> {
        let model = self.amplitude_model()?;
        let d = self.spin.dim();
        let mut table = AmplitudeTable::new();
        for i in 0..d {
            for j in 0..d {
                for k in 0..2 {
                    for l in 0..2 {
                        if !model.may_couple(i, j, k, l) {
                            continue;
                        }
                        table.insert_fn((i, j, k, l), p_grid, cos_grid, |pm, c| {
                            let Ok(qm) = model.outgoing(i, j, k, l, pm) else {
                                return Default::default();
                            };
                            let sin = (1.0 - c * c).max(0.0).sqrt();
                            let p = Vector3::new(0.0, 0.0, pm);
                            let q = Vector3::new(qm * sin, 0.0, qm * c);
                            model.amplitude_raw(i, j, k, l, &q, &p).0
                        })?;
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn table_model(&self, table: AmplitudeTable) -> Result<AmplitudeModel> {
        AmplitudeModel::table(&self.levels()?, &self.environment()?, table, 1.0)
    }
}

/// Rate matrix of the spin ladder for given `Gamma_+-`.
pub fn spin_rate_matrix(spin: SpinQuantum, r: SpinRates) -> Result<RateMatrix> {
    let jp = spin_operators(spin).jplus;
    let d = spin.dim();
    let mut m = nalgebra::DMatrix::zeros(d, d);
    for k in 0..d - 1 {
        let w = jp.matrix()[(k + 1, k)].norm_sqr();
        m[(k + 1, k)] = r.gamma_plus * w;
        m[(k, k + 1)] = r.gamma_minus * w;
    }
    RateMatrix::new(m)
}

/// Gibbs state of `J_z` at `hbar omega_S / kB T = beta`.
pub fn spin_gibbs(spin: SpinQuantum, beta: f64) -> Result<DensityMatrix> {
    DensityMatrix::gibbs(&spin_operators(spin).jz, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::derived_scales;

    fn scenario(j: f64, d: f64, a: f64) -> SpinScenario {
        SpinScenario::new(SpinQuantum::new(j).unwrap(), d, a, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn derived_quantities() {
        let s = SpinScenario::new(SpinQuantum::new(2.0).unwrap(), 2.0, 3.0, 0.5, 0.7, 0.3).unwrap();
        assert!((s.t_motion() - 2.0).abs() < 1e-15);
        assert!((s.delta() - 4.0).abs() < 1e-15);
        assert!((s.omega_a() - 4.7).abs() < 1e-15);
        assert!((s.t_ancilla() - 4.7 / 3.0).abs() < 1e-15);
        let sc = derived_scales(&s.environment().unwrap(), &s.interaction().unwrap());
        assert!((sc.e_r - 1.0).abs() < 1e-14);
        assert!((sc.p_r - SQRT_2).abs() < 1e-14);
        assert!((sc.gamma_tilde - 0.3).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let j = SpinQuantum::new(1.0).unwrap();
        assert!(SpinScenario::new(j, 0.0, 1.0, 0.0, 1.0, 1.0).is_err());
        assert!(SpinScenario::new(j, 0.0, -1.0, 1.0, 1.0, 1.0).is_err());
        // omega_A = 1 - 2 < 0
        assert!(SpinScenario::new(j, -2.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn rates_follow_effective_temperature() {
        for (d, a) in [(2.0, 1.0), (4.0, 3.0), (0.5, 2.0)] {
            let s = scenario(1.0, d, a);
            let r = s.rates().unwrap();
            let lhs = (r.gamma_plus / r.gamma_minus).ln();
            assert!((lhs + s.beta_eff().unwrap()).abs() < 1e-8);
            // hbar omega_S / kB T_eff = A - D when omega_S = E_R, alpha = 1
            assert!((s.beta_eff().unwrap() - (a - d)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_reproduces_analytic_rates() {
        let s = scenario(1.5, 1.0, 2.0);
        let exact = s.analytic_rate_matrix().unwrap();
        let quad = s.quadrature_rate_matrix(&QuadratureSpec::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (exact.rate(i, j), quad.rate(i, j));
                if a == 0.0 {
                    assert!(b.abs() < 1e-12 * exact.matrix().max(), "({i},{j}) = {b}");
                } else {
                    assert!((a - b).abs() <= 1e-4 * a, "({i},{j}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn equilibrium_ties_temperatures() {
        let s = SpinScenario::equilibrium(SpinQuantum::new(1.0).unwrap(), 3.0, 2.0, 0.5, 1.0).unwrap();
        assert_eq!(s.t_ancilla(), s.t_motion());
        assert!((s.beta_eff().unwrap() - s.beta_motion()).abs() < 1e-12);
    }

    #[test]
    fn resonant_born_table_is_microreversible() {
        let s = scenario(1.0, 0.0, 1.0);
        let p: Vec<f64> = (0..9).map(|k| 0.5 * k as f64).collect();
        let c: Vec<f64> = (0..5).map(|k| -1.0 + 0.5 * k as f64).collect();
        let t = s.born_table(&p, &c).unwrap();
        let model = s.table_model(t).unwrap();
        let rep = crate::scattering::check_microreversibility(&model, 500, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
