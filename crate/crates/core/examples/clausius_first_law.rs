//! Energy, heat power, entropy and the Clausius residual along a J = 20
//! thermalisation run, with the heat power checked against a finite
//! difference of the energy.

use gas_collide::qmath::SpinQuantum;
use gas_collide::spin::{spin_gibbs, SpinScenario};
use gas_collide::thermo::{energy_rate_finite_difference, thermo_series};

fn main() -> gas_collide::Result<()> {
    let s = SpinScenario::equilibrium(SpinQuantum::new(20.0)?, 1.0, 1.0, 0.25, 1.0)?;
    let gen = s.generator()?;
    let h = s.system_hamiltonian();
    let grid: Vec<f64> = (0..=8).map(|k| 5.0 * k as f64).collect();
    let traj = gen.evolve(&spin_gibbs(s.spin, 0.5)?, &grid)?;
    let series = thermo_series(&gen, &h, &traj, Some(s.beta_motion()))?;
    println!("{:>5} {:>12} {:>12} {:>10} {:>12} {:>12}", "t", "E_S", "Q_dot", "S", "Sdot-bQdot", "dE/dt-Q_dot");
    for (x, rho) in series.iter().zip(&traj.states) {
        let fd = energy_rate_finite_difference(&gen, &h, rho.matrix(), 1e-2);
        println!(
            "{:>5} {:>12.6} {:>12.4e} {:>10.6} {:>12.4e} {:>12.1e}",
            x.t,
            x.energy,
            x.q_dot,
            x.entropy,
            x.clausius_residual.unwrap_or(f64::NAN),
            fd - x.q_dot
        );
    }
    Ok(())
}
