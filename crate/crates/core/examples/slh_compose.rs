// Two emitters on one chiral line: the series product yields a collective
// jump and a coherent exchange term.

use chiralnet::qops::{kron, Operator};
use chiralnet::slh::{element_module, element_phase, series_chain};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let id = Operator::identity(2);
    let a = kron(&Operator::sigma_minus(), &id);
    let b = kron(&id, &Operator::sigma_minus());
    let gamma = 0.1;
    let kd = std::f64::consts::FRAC_PI_2;

    let first = element_module(&a, gamma, None);
    let line = element_phase(kd, 2, 4);
    let second = element_module(&b, gamma, None);
    let net = series_chain(&[&first, &line, &second])?;

    println!("ports: {}, unitarity defect: {:.1e}", net.ports(), net.unitarity_defect());
    show("L0", &net.l[0]);
    show("H", &net.h);
    Ok(())
}

fn show(name: &str, op: &Operator) {
    println!("{name}:");
    let m = op.matrix();
    for ((i, j), z) in (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|ij| (ij, m[ij])) {
        if z.norm() > 1e-12 {
            println!("  [{i},{j}] {:+.4} {:+.4}i", z.re, z.im);
        }
    }
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
