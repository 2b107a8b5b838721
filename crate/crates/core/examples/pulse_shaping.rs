// Ideal coupler envelopes, their segmented approximation and the effect
// of a distorting control line.

use chiralnet::network::{mhz_to_rad_per_ns, DeviceParams, Direction};
use chiralnet::pulses::{distort, segmented_envelope_fn, DistortionModel, PulseSet, PulseShapes, Role};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let device = DeviceParams::measured();
    let gamma = device.module_gamma(Direction::Right.emitter());
    let gp = mhz_to_rad_per_ns(7.0);
    let ideal = PulseShapes::ideal(gp).envelope(Role::Emit1, gamma)?;
    let ps = PulseSet::seeded_from_ideal(gamma, device.module_gamma(Direction::Right.absorber()), gp, 200.0)?;
    let seg = segmented_envelope_fn(&ps, Role::Emit1);
    let line = DistortionModel { tau: 10.0, cubic: 0.05, reference: ps.g_max, phase_offset: 0.4 };
    let bent = distort(seg.clone(), &line, 0.0, 200.0, 0.05);

    println!("t_ns   ideal    segmented  distorted(|g|, arg)");
    for k in 0..=10 {
        let t = 20.0 * k as f64;
        let (i, s, d) = (ideal(t), seg(t), bent(t));
        println!("{t:5.0}  {:.5}  {:.5}    {:.5} {:+.2}", i.norm(), s.norm(), d.norm(), d.arg());
    }
    println!("{} parameters, first: {:?}", ps.to_vector().len(), &ps.to_named()[..2]);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
