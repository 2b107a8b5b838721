// Group delay of a photon passing a resonant, uncoupled module.

use chiralnet::network::{DeviceParams, Direction};
use chiralnet::protocol::transparency_delay;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let device = DeviceParams::nominal();
    let gamma = device.module_gamma(Direction::Right.absorber());
    for frac in [0.1, 0.25, 0.5] {
        let tau = transparency_delay(&device, frac * gamma, Direction::Right)?;
        println!("γ_ph = {frac:.2} γ: delay {tau:6.2} ns  (4/γ = {:.2} ns)", 4.0 / gamma);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
