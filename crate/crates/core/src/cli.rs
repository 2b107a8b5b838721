//! Batch runner behind the `chiralnet` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::concurrence;
use crate::config::{Command, PulseKind, RunConfig};
use crate::error::{Error, Result};
use crate::network::{mhz_to_rad_per_ns, rad_per_ns_to_mhz};
use crate::protocol::{error_budget, run, target_fidelity, transparency_delay};
use crate::pulses::PulseShapes;
use crate::rloptim::{optimize, PulseEnv};
use crate::scattering::{sweep_four_qubit_with, SteadyStateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "chiralnet", version, about = "Chiral waveguide interconnect simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub job: Job,
}

#[derive(Debug, Subcommand)]
pub enum Job {
    /// Run one protocol configuration and write its trajectory.
    Simulate(Flags),
    /// Sweep the driven four-qubit steady-state transmission.
    Scatter(Flags),
    /// Build the transfer loss budget.
    Budget(Flags),
    /// Calibrate pulses with policy optimisation.
    Optimize(Flags),
    /// Measure the transparency group delay.
    Delay(Flags),
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "THREADS")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Job {
    fn split(&self) -> (Command, &Flags) {
        match self {
            Job::Simulate(f) => (Command::Simulate, f),
            Job::Scatter(f) => (Command::Scatter, f),
            Job::Budget(f) => (Command::Budget, f),
            Job::Optimize(f) => (Command::Optimize, f),
            Job::Delay(f) => (Command::Delay, f),
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if matches!(e, Error::Io(_)) {
        EXIT_OTHER
    } else {
        EXIT_CONFIG
    }
}

/// Parses `args` (program name first) and runs the job; returns the exit
/// code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.job) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolves the configuration for `job` and runs it; returns the files
/// written.
pub fn execute(job: &Job) -> Result<Vec<PathBuf>> {
    let (command, flags) = job.split();
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let c = RunConfig::new(command);
            c.check()?;
            c
        }
    };
    if cfg.command != command {
        return Err(Error::Config(format!(
            "config is for `{}` but `{}` was requested",
            cfg.command.name(),
            command.name()
        )));
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(o) = &flags.out {
        cfg.output_dir = o.clone();
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = flags.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cfg))
}

fn dispatch(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Scatter => scatter(cfg),
        Command::Budget => budget(cfg),
        Command::Optimize => calibrate(cfg),
        Command::Delay => delay(cfg),
    }
}

fn write(cfg: &RunConfig, name: &str, body: &str) -> Result<PathBuf> {
    let path = cfg.output_dir.join(name);
    std::fs::write(&path, format!("# {}\n{body}", cfg.header()))?;
    Ok(path)
}

fn finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    match values.into_iter().find(|v| !v.is_finite()) {
        Some(_) => Err(Error::NonFinite { t: f64::NAN }),
        None => Ok(()),
    }
}

fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let pc = cfg.protocol()?;
    let r = run(&pc)?;
    finite(r.flux_left.iter().chain(&r.flux_right).chain(r.data_qubit_populations.iter().flatten()).copied())?;
    let absorber = pc.direction.absorber();
    let mut summary = String::new();
    let _ = writeln!(summary, "peak_absorber_population = {}", r.peak_population(absorber));
    let _ = writeln!(summary, "final_absorber_population = {}", r.module_population(absorber).last().unwrap_or(&0.0));
    if let Some(f) = target_fidelity(&pc, &r)? {
        let _ = writeln!(summary, "target_fidelity = {f}");
    }
    let _ = writeln!(summary, "absorber_concurrence = {}", concurrence(&r.module_state(absorber)?)?);
    let _ = writeln!(summary, "max_trace_drift = {:e}", r.max_trace_drift);
    Ok(vec![
        write(cfg, "trajectory.csv", &r.to_csv())?,
        write(cfg, "loss_breakdown.txt", &r.loss_accounting.to_kv())?,
        write(cfg, "summary.txt", &summary)?,
    ])
}

fn scatter(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Config("scatter needs a [sweep] block".into()))?;
    let device = cfg.device()?;
    let detunings: Vec<f64> = sweep.detuning_mhz.values()?.into_iter().map(mhz_to_rad_per_ns).collect();
    let powers: Vec<f64> = sweep.power_db.values()?.into_iter().map(|db| 10f64.powf(db / 20.0)).collect();
    let mut opts = SteadyStateOptions::default();
    if let Some(t) = sweep.tolerance {
        opts.tolerance = t;
    }
    let points = sweep_four_qubit_with(&device, cfg.protocol.direction, &detunings, &powers, &opts)?;
    finite(points.iter().flat_map(|p| [p.s21.re, p.s21.im]))?;
    Ok(vec![write(cfg, "s21.csv", &crate::scattering::to_csv(&points))?])
}

fn budget(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let device = cfg.device()?;
    let pulses = cfg.pulses.to_shapes(&device, cfg.protocol.direction)?;
    let b = error_budget(&device, &pulses, cfg.protocol.direction)?;
    finite(b.fields().map(|f| f.1))?;
    let body = format!("{}total = {}\n", b.to_kv(), b.total());
    Ok(vec![write(cfg, "budget.txt", &body)?])
}

fn calibrate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let block = cfg.optimize.clone().unwrap_or_default();
    let hyper = block.hyper()?;
    let mut pc = cfg.protocol()?;
    let mut seeded = cfg.pulses.clone();
    seeded.kind = PulseKind::Segmented;
    let seed_pulses = match seeded.to_shapes(&pc.device, pc.direction)? {
        PulseShapes::Segmented(ps) => ps,
        PulseShapes::Ideal { .. } => unreachable!("segmented kind"),
    };
    pc.pulses = PulseShapes::Segmented(seed_pulses.clone());
    let spans = block.spans.unwrap_or_default();
    let env = PulseEnv::new(&pc, seed_pulses.clone(), spans, hyper.shots_per_trial)?;
    let res = optimize(&env, cfg.seed, &hyper)?;

    let mut curve = serde_json::json!({
        "artifact": crate::config::ARTIFACT,
        "version": crate::config::VERSION,
        "config_sha256": cfg.content_hash(),
    })
    .to_string();
    curve.push('\n');
    curve.push_str(&res.curve_ndjson());
    let curve_path = cfg.output_dir.join("learning_curve.ndjson");
    std::fs::write(&curve_path, curve)?;

    let best = env.pulses_for(&res.best.params)?;
    let mut toml_body = String::from("[pulses]\nkind = \"segmented\"\n");
    let _ = writeln!(toml_body, "gamma_ph_mhz = {}", cfg.pulses.gamma_ph_mhz);
    let _ = writeln!(toml_body, "total_duration_ns = {}", best.total_duration);
    toml_body.push_str("\n[pulses.parameters]\n");
    for (k, v) in best.to_named() {
        let _ = writeln!(toml_body, "{k} = {v:?}");
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "seed_efficiency = {}", env.efficiency(&seed_pulses)?);
    let _ = writeln!(summary, "best_efficiency = {}", env.efficiency(&best)?);
    let _ = writeln!(summary, "best_sampled_reward = {}", res.best.reward);
    let _ = writeln!(summary, "best_epoch = {}", res.best.epoch);
    Ok(vec![
        curve_path,
        write(cfg, "best_pulses.toml", &toml_body)?,
        write(cfg, "optimize_summary.txt", &summary)?,
    ])
}

fn delay(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let device = cfg.device()?;
    let gp = mhz_to_rad_per_ns(cfg.pulses.gamma_ph_mhz);
    let tau = transparency_delay(&device, gp, cfg.protocol.direction)?;
    finite([tau])?;
    let gamma = device.module_gamma(cfg.protocol.direction.absorber());
    let mut body = String::new();
    let _ = writeln!(body, "delay_ns = {tau}");
    let _ = writeln!(body, "four_over_gamma_ns = {}", 4.0 / gamma);
    let _ = writeln!(body, "gamma_mhz = {}", rad_per_ns_to_mhz(gamma));
    let _ = writeln!(body, "gamma_ph_mhz = {}", cfg.pulses.gamma_ph_mhz);
    Ok(vec![write(cfg, "delay.txt", &body)?])
}

/// Reads the header line of an output file.
pub fn read_header(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}
