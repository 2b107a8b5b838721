// Policy optimisation: a toy quadratic bandit, then the distorted
// transfer environment scored by simulated shots.

use chiralnet::rloptim::{line_distortion, optimize, random_search, PpoHyper, PulseEnv, QuadraticEnv};
use chiralnet::network::DeviceParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let env = QuadraticEnv { optimum: vec![0.3, -0.2, 0.1], scale: 2.0 };
    let hyper = PpoHyper { epochs: 60, batch_size: 20, ..PpoHyper::desk() };
    let res = optimize(&env, 1, &hyper)?;
    let last = res.curve.last().expect("epochs > 0");
    println!("quadratic: final mean {:?}", res.final_mean.iter().map(|m| (m * 1e3).round() / 1e3).collect::<Vec<_>>());
    println!("           last epoch reward {:.4}", last.mean_reward);

    let device = DeviceParams::measured();
    let clean = PulseEnv::calibration(&device, None, 200)?;
    let bent = PulseEnv::calibration(&device, Some(line_distortion()), 200)?;
    println!("seed efficiency, clean line:     {:.4}", clean.efficiency(clean.seed_pulses())?);
    println!("seed efficiency, distorted line: {:.4}", bent.efficiency(bent.seed_pulses())?);
    let best = random_search(&bent, 3, 4, 0.3)?;
    println!("best of 4 random trials: reward {:.3}", best.reward);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
