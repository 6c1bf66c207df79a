use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ybqc::atomic;
use ybqc::constants::GAUSS;
use ybqc::pulse::NoiseParams;
use ybqc::{addressing, AtomParams};
use ybqc_cli::{
    self as cli, AtomSection, CliError, FeasibilitySection, GradientSection, LatticeSection, NoiseSection, Result,
};

#[derive(Parser)]
#[command(name = "ybqc", version, about = "171Yb optical-lattice quantum computer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct AtomArgs {
    #[arg(long)]
    hyperfine_a_hz: Option<f64>,
    /// Recalibrate A so that |Delta1| at 650 G equals this value.
    #[arg(long)]
    calibrate_delta1_hz: Option<f64>,
    #[arg(long)]
    linear_zeeman: bool,
}

impl AtomArgs {
    fn params(&self) -> Result<AtomParams> {
        AtomSection {
            hyperfine_a_hz: self.hyperfine_a_hz,
            calibrate_delta1_hz: self.calibrate_delta1_hz,
            linear_zeeman: self.linear_zeeman.then_some(true),
            ..Default::default()
        }
        .params()
    }
}

#[derive(Args, Clone)]
struct LatticeArgs {
    #[arg(long, default_value_t = 10)]
    n_x: usize,
    #[arg(long, default_value_t = 10)]
    n_y: usize,
    #[arg(long, default_value_t = 1)]
    n_z: usize,
    #[arg(long)]
    spacing_nm: Option<f64>,
}

impl LatticeArgs {
    fn section(&self) -> LatticeSection {
        LatticeSection { n_x: self.n_x, n_y: self.n_y, n_z: self.n_z, spacing_nm: self.spacing_nm }
    }
}

#[derive(Args, Clone)]
struct GradientArgs {
    #[arg(long)]
    b0_gauss: Option<f64>,
    #[arg(long)]
    gx_gauss_per_cm: Option<f64>,
    #[arg(long)]
    gy_gauss_per_cm: Option<f64>,
    #[arg(long)]
    gz_gauss_per_cm: Option<f64>,
    /// Plan the gradients for this resonance gap when none are given.
    #[arg(long)]
    target_gap_hz: Option<f64>,
}

impl GradientArgs {
    fn section(&self) -> GradientSection {
        GradientSection {
            b0_gauss: self.b0_gauss,
            gx_gauss_per_cm: self.gx_gauss_per_cm,
            gy_gauss_per_cm: self.gy_gauss_per_cm,
            gz_gauss_per_cm: self.gz_gauss_per_cm,
            target_gap_hz: self.target_gap_hz,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Energies of the 3P2 and 1S0 sublevels at one field, or over a sweep.
    Levels {
        #[arg(long, conflicts_with_all = ["b_min_gauss", "b_max_gauss", "steps"])]
        field_gauss: Option<f64>,
        #[arg(long)]
        b_min_gauss: Option<f64>,
        #[arg(long)]
        b_max_gauss: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        atom: AtomArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Delta1 and Delta2 of the three-photon ladder over a field range (CSV).
    Detunings {
        #[arg(long, default_value_t = 0.0)]
        b_min_gauss: f64,
        #[arg(long, default_value_t = 20000.0)]
        b_max_gauss: f64,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[command(flatten)]
        atom: AtomArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dipole-dipole couplings of a single pair (JSON).
    Ddi {
        #[arg(long, default_value_t = 266.0)]
        spacing_nm: f64,
        #[arg(long, default_value_t = 0.0)]
        theta_deg: f64,
        #[arg(long, default_value_t = 3.0)]
        moment_bohr: f64,
    },
    /// Resonance spectrum of one layer, sorted by frequency (CSV).
    Address {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        gradient: GradientArgs,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[command(flatten)]
        atom: AtomArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest gradients that resolve every site (JSON).
    Plan {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long, default_value_t = 1e3)]
        target_gap_hz: f64,
        #[command(flatten)]
        atom: AtomArgs,
    },
    /// Compile and run a circuit file (JSON).
    Simulate {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Logical 1S0 state of each active site, e.g. 0,1.
        #[arg(long, value_delimiter = ',')]
        initial_bits: Option<Vec<u8>>,
        #[arg(long)]
        noise_disabled: bool,
        #[arg(long)]
        dipole_scale_ratio: Option<f64>,
        #[command(flatten)]
        atom: AtomArgs,
    },
    /// Experimental parameters checked against the quoted values (JSON).
    Feasibility {
        #[arg(long)]
        t_pi_s: Option<f64>,
        #[arg(long)]
        depth_recoils: Option<f64>,
        #[arg(long)]
        hold_time_s: Option<f64>,
        #[arg(long)]
        bias_gauss: Option<f64>,
        #[command(flatten)]
        atom: AtomArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile a circuit file to a pulse schedule (JSON).
    Compile {
        #[arg(long)]
        circuit: PathBuf,
        #[command(flatten)]
        lattice: LatticeArgs,
        #[command(flatten)]
        atom: AtomArgs,
    },
    /// Run every pipeline requested by a scenario file and write a manifest.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Overrides the scenario's circuit seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io { path: p.clone(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Levels { field_gauss, b_min_gauss, b_max_gauss, steps, atom, out } => {
            let p = atom.params()?;
            let text = match field_gauss {
                Some(b) => json(&atomic::zeeman_spectrum(&p, b * GAUSS)?)?,
                None => cli::levels_csv(&p, b_min_gauss.unwrap_or(0.0), b_max_gauss.unwrap_or(1000.0), steps.unwrap_or(100))?,
            };
            emit(&text, out.as_ref())
        }
        Command::Detunings { b_min_gauss, b_max_gauss, steps, atom, out } => {
            emit(&cli::detunings_csv(&atom.params()?, b_min_gauss, b_max_gauss, steps)?, out.as_ref())
        }
        Command::Ddi { spacing_nm, theta_deg, moment_bohr } => {
            let r = cli::ddi_report(spacing_nm * 1e-9, theta_deg.to_radians(), moment_bohr, &AtomParams::default())?;
            emit(&json(&r)?, None)
        }
        Command::Address { lattice, gradient, layer, atom, out } => {
            let p = atom.params()?;
            let geom = lattice.section().geometry(&p)?;
            let config = gradient.section().config(&geom, &p)?;
            emit(&cli::spectrum_csv(&geom, &config, &p, layer)?, out.as_ref())
        }
        Command::Plan { lattice, target_gap_hz, atom } => {
            let p = atom.params()?;
            let geom = lattice.section().geometry(&p)?;
            let config = addressing::plan_gradients(&geom, target_gap_hz, &p, &addressing::PlannerSettings::default())?;
            let validity = addressing::validate_gradients(&geom, &config);
            emit(&json(&serde_json::json!({ "gradient": config, "validity": validity }))?, None)
        }
        Command::Simulate { circuit, seed, lattice, initial_bits, noise_disabled, dipole_scale_ratio, atom } => {
            let p = atom.params()?;
            let geom = lattice.section().geometry(&p)?;
            let noise = NoiseSection { disabled: Some(noise_disabled), ..Default::default() }.params()?;
            let gates = cli::load_circuit(&circuit)?;
            let run = cli::simulate_circuit(gates, &geom, &p, &noise, Some(seed), initial_bits, dipole_scale_ratio)?;
            emit(&json(&run.result)?, None)
        }
        Command::Feasibility { t_pi_s, depth_recoils, hold_time_s, bias_gauss, atom, out } => {
            let p = atom.params()?;
            let section = FeasibilitySection { t_pi_s, depth_recoils, hold_time_s, target_gap_hz: None, bias_gauss };
            let inputs = cli::feasibility_inputs(&section, None, &p)?;
            let (report, text) = cli::feasibility_json(&p, &inputs)?;
            for item in &report.items {
                eprintln!(
                    "{:<28} {:>12.4e} {:<6} target {:.4e}  {}",
                    item.quantity,
                    item.computed,
                    item.unit,
                    item.paper_target,
                    if item.pass { "pass" } else { "FAIL" }
                );
            }
            emit(&text, out.as_ref())
        }
        Command::Compile { circuit, lattice, atom } => {
            let p = atom.params()?;
            let geom = lattice.section().geometry(&p)?;
            let gates = cli::load_circuit(&circuit)?;
            let compiled = cli::compile(&gates, &geom, &p, &NoiseParams::default(), None)?;
            emit(&json(&serde_json::json!({ "schedule": compiled.schedule, "gradient": compiled.gradient, "budget": compiled.budget }))?, None)
        }
        Command::Run { scenario, out_dir, seed } => {
            let (dir, manifest) = cli::run_scenario(&scenario, out_dir.as_deref(), seed)?;
            for (name, hash) in &manifest.files {
                println!("{hash}  {}", dir.join(name).display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
