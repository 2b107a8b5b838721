// Shot-noise tomography of a Bell pair by linear inversion.

use chiralnet::analysis::{bell_target, concurrence, estimate_pauli_expectations, fidelity, linear_inversion, Sign};
use chiralnet::qops::DensityMatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let target = bell_target(Sign::Minus);
    let rho = DensityMatrix::from_ket(&target);
    for shots in [100, 1_000, 10_000] {
        let ev = estimate_pauli_expectations(&rho, shots, 11)?;
        let rec = linear_inversion(&ev)?;
        let est = DensityMatrix::new_unchecked(rec.rho);
        println!(
            "{shots:>6} shots: fidelity {:.4}, concurrence {:.4}",
            fidelity(&est, &target)?,
            concurrence(&est)?
        );
        println!("              positivity deficit {:.1e}", rec.positivity_deficit);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
