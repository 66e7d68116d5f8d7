//! Classical rate equations on the spin ladder: the stationary populations
//! follow a Boltzmann law at the effective temperature, negative when the
//! ancillas are hot and blue-detuned.

use gas_collide::dynamics::{evolve_populations, stationary_populations, PopulationVector};
use gas_collide::qmath::SpinQuantum;
use gas_collide::spin::SpinScenario;

fn main() -> gas_collide::Result<()> {
    let s = SpinScenario::new(SpinQuantum::new(2.0)?, 4.0, 1.0, 1.0, 1.0, 1.0)?;
    let r = s.analytic_rate_matrix()?;
    let d = r.dim();
    let mut p0 = vec![0.0; d];
    p0[0] = 1.0;
    let traj = evolve_populations(&r, &PopulationVector::new(p0)?, &[0.0, 1.0, 5.0, 50.0])?;
    for (t, p) in traj.times.iter().zip(&traj.states) {
        println!("t = {t:>4}: {:.4?}", p.as_slice());
    }
    let st = stationary_populations(&r)?;
    let b = s.beta_eff()?;
    let z: f64 = (0..d).map(|k| (-b * (k as f64 - 2.0)).exp()).sum();
    let boltz: Vec<f64> = (0..d).map(|k| (-b * (k as f64 - 2.0)).exp() / z).collect();
    println!("stationary     {:.6?}", st.as_slice());
    println!("exp(-b_eff m)  {boltz:.6?}  (b_eff = {b:+.4})");
    Ok(())
}
