//! Micro-reversibility of on-shell amplitudes: the Born model with a real
//! Hermitian coupling passes, a tabulated resonant model passes until one
//! grid value is corrupted.

use gas_collide::qmath::SpinQuantum;
use gas_collide::scattering::check_microreversibility;
use gas_collide::spin::SpinScenario;
use gas_collide::C64;

fn main() -> gas_collide::Result<()> {
    let s = SpinScenario::new(SpinQuantum::new(20.0)?, 2.0, 1.0, 1.0, 1.0, 1.0)?;
    let rep = check_microreversibility(&s.amplitude_model()?, 10_000, 1e-12)?;
    println!("Born, J=20: max violation {:.1e}, pass {}", rep.max_violation, rep.pass);

    let r = SpinScenario::new(SpinQuantum::new(1.0)?, 0.0, 1.0, 1.0, 1.0, 1.0)?;
    let p: Vec<f64> = (0..25).map(|k| 0.25 * k as f64).collect();
    let c: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
    let mut table = r.born_table(&p, &c)?;
    let rep = check_microreversibility(&r.table_model(table.clone())?, 2_000, 1e-12)?;
    println!("table, resonant: max violation {:.1e}, pass {}", rep.max_violation, rep.pass);
    table.set((1, 0, 0, 1), 6, 4, C64::new(0.3, 0.0))?;
    let rep = check_microreversibility(&r.table_model(table)?, 2_000, 1e-12)?;
    println!("table, corrupted: max violation {:.1e}, pass {}", rep.max_violation, rep.pass);
    Ok(())
}
