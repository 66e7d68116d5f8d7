//! Transition rates from direct quadrature over the Born amplitudes compared
//! with the closed-form spin-ladder rates.

use gas_collide::qmath::SpinQuantum;
use gas_collide::rates::QuadratureSpec;
use gas_collide::spin::SpinScenario;

fn main() -> gas_collide::Result<()> {
    let s = SpinScenario::new(SpinQuantum::new(2.0)?, 1.0, 2.0, 1.0, 1.0, 1.0)?;
    let exact = s.analytic_rate_matrix()?;
    let quad = s.quadrature_rate_matrix(&QuadratureSpec::default())?;
    println!("{:>3} {:>3} {:>22} {:>22} {:>10}", "i", "j", "quadrature", "closed form", "rel dev");
    for i in 0..exact.dim() {
        for j in 0..exact.dim() {
            let (a, b) = (exact.rate(i, j), quad.rate(i, j));
            if a != 0.0 {
                println!("{i:>3} {j:>3} {b:>22.15e} {a:>22.15e} {:>10.2e}", (a - b).abs() / a);
            }
        }
    }
    Ok(())
}
