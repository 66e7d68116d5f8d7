//! Tabulates the dimensionless rate integral I(alpha, s) and checks the
//! reflection identity I(alpha, s) = exp(-alpha s) I(alpha, -s).

use gas_collide::rates::integral_i;

fn main() -> gas_collide::Result<()> {
    let alphas = [0.1, 0.3, 1.0, 3.0, 10.0];
    let ss = [-10.0, -1.0, 0.0, 1.0, 10.0];
    print!("{:>8}", "alpha\\s");
    for s in ss {
        print!("{s:>14}");
    }
    println!();
    let mut worst: f64 = 0.0;
    for a in alphas {
        print!("{a:>8}");
        for s in ss {
            let v = integral_i(a, s)?;
            print!("{v:>14.6e}");
            let mirrored = (-a * s).exp() * integral_i(a, -s)?;
            worst = worst.max((v - mirrored).abs() / v);
        }
        println!();
    }
    println!("I(1, 0) = {} (closed form 2/5)", integral_i(1.0, 0.0)?);
    println!("worst reflection mismatch {worst:.2e}");
    Ok(())
}
