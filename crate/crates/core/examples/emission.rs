// Half-emission from module A: the photon leaves half its excitation in
// the emitter and the rest is caught by module B, leaving a W state.

use chiralnet::network::{DeviceParams, Direction, ModuleId};
use chiralnet::protocol::{run, target_fidelity, Mode, ProtocolConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ProtocolConfig::new(Direction::Right, Mode::HalfEmission, DeviceParams::measured());
    let r = run(&cfg)?;

    let (a, b) = (r.module_population(ModuleId::A), r.module_population(ModuleId::B));
    println!("t_ns  pop_A   pop_B   flux_right");
    for k in (0..r.times.len()).step_by(r.times.len() / 10) {
        println!("{:5.1} {:.4} {:.4} {:.5}", r.times[k], a[k], b[k], r.flux_right[k]);
    }
    let f = target_fidelity(&cfg, &r)?.expect("half emission has a target");
    println!("W-state fidelity: {f:.4}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
