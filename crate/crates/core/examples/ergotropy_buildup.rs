//! Ergotropy of a J = 20 spin driven by a two-temperature gas. Blue-detuned
//! ancillas (D > A) push the spin to a negative effective temperature and the
//! stored work grows from zero; for D <= A it stays at zero.

use gas_collide::qmath::{DensityMatrix, SpinQuantum};
use gas_collide::spin::SpinScenario;
use gas_collide::thermo::ergotropy_general;

fn main() -> gas_collide::Result<()> {
    let spin = SpinQuantum::new(20.0)?;
    let grid: Vec<f64> = (0..=10).map(|k| 10.0 * k as f64).collect();
    for (d, a) in [(2.0, 3.0), (2.0, 1.0), (4.0, 1.0), (4.0, 3.0)] {
        let s = SpinScenario::new(spin, d, a, 1.0, 1.0, 1.0)?;
        let gen = s.generator()?;
        let h = s.system_hamiltonian();
        let traj = gen.evolve(&DensityMatrix::pure(spin.dim(), 0)?, &grid)?;
        let w: Vec<String> = traj
            .states
            .iter()
            .map(|rho| ergotropy_general(&h, rho).map(|w| format!("{w:.3}")))
            .collect::<gas_collide::Result<_>>()?;
        println!("D={d} A={a} beta_eff={:+.3}: W(t) = {}", s.beta_eff()?, w.join(" "));
    }
    Ok(())
}
