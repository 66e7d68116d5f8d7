//! Zeroth law: in an equilibrium gas the spin relaxes to the Gibbs state at
//! the gas temperature, whatever the ancilla detuning.

use gas_collide::dynamics::{steady_state_with, SteadyStateOptions};
use gas_collide::qmath::{trace_distance, SpinQuantum};
use gas_collide::spin::{spin_gibbs, SpinScenario};

fn main() -> gas_collide::Result<()> {
    let spin = SpinQuantum::new(20.0)?;
    for d in [0.0, 1.0, 3.0] {
        let s = SpinScenario::equilibrium(spin, d, 1.0, 1.0, 1.0)?;
        let rho = steady_state_with(&s.generator()?, &SteadyStateOptions::default())?;
        let gibbs = spin_gibbs(spin, s.beta_motion())?;
        println!(
            "D = {d}: T_eff = {:?}, trace distance to Gibbs {:.2e}",
            s.effective_temperature()?,
            trace_distance(rho.matrix(), gibbs.matrix())
        );
    }
    Ok(())
}
