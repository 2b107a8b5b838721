// Loss budget of a rightward and a leftward transfer.

use chiralnet::network::{DeviceParams, Direction};
use chiralnet::protocol::error_budget;
use chiralnet::pulses::PulseShapes;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let device = DeviceParams::measured();
    let pulses = PulseShapes::ideal(chiralnet::network::mhz_to_rad_per_ns(7.0));
    for direction in [Direction::Right, Direction::Left] {
        let b = error_budget(&device, &pulses, direction)?;
        println!("{direction:?}");
        for (name, v) in b.fields() {
            println!("  {name:<22} {:6.2} %", 100.0 * v);
        }
        println!("  {:<22} {:6.2} %", "total", 100.0 * b.total());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
