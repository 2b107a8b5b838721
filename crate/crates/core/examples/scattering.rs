// Elastic transmission: single-qubit closed form and the driven
// four-qubit register at a few probe powers.

use chiralnet::network::{mhz_to_rad_per_ns, DeviceParams, Direction};
use chiralnet::scattering::{s21_single, sweep_four_qubit_with, SteadyStateOptions};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let gamma = mhz_to_rad_per_ns(17.0);
    println!("single qubit, weak probe");
    for k in -4..=4 {
        let d = k as f64 * gamma / 4.0;
        let s = s21_single(d, 1e-4, gamma, 0.0, 0.0);
        println!("  δ/γ = {:5.2}  |S21| = {:.4}  arg = {:+.3}", d / gamma, s.norm(), s.arg());
    }

    let device = DeviceParams::measured();
    let detunings: Vec<f64> = [-10.0, 0.0, 10.0].map(mhz_to_rad_per_ns).to_vec();
    let powers = [0.01, 1.0, 10.0];
    let pts = sweep_four_qubit_with(&device, Direction::Right, &detunings, &powers, &SteadyStateOptions::default())?;
    println!("four-qubit register");
    for p in &pts {
        println!("  {:6.1} dB  {:+.4} + {:+.4}i  converged={}", p.power_db(), p.s21.re, p.s21.im, p.converged);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
