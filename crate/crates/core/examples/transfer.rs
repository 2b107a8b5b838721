// Bell-state transfer in both directions through the same waveguide.

use chiralnet::analysis::concurrence;
use chiralnet::network::{DeviceParams, Direction};
use chiralnet::protocol::{run, target_fidelity, Mode, ProtocolConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for direction in [Direction::Right, Direction::Left] {
        let cfg = ProtocolConfig::new(direction, Mode::FullTransfer, DeviceParams::measured());
        let r = run(&cfg)?;
        let absorber = direction.absorber();
        let f = target_fidelity(&cfg, &r)?.unwrap_or(f64::NAN);
        println!(
            "{direction:?}: peak {:.4}, fidelity {f:.4}, concurrence {:.4}",
            r.peak_population(absorber),
            concurrence(&r.module_state(absorber)?)?
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
