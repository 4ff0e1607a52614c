use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use apovm::estimation::TraceRow;
use apovm::harness::{
    bloch_csv, bootstrap_mean, extrapolate_shots, fit_power_law_bootstrap, load_trace, parse_points, run_experiment,
    seed_dir, tomography_from_run, ExperimentConfig, Method,
};
use apovm::observables::{heisenberg, parse_observable, transverse_field_ising};
use apovm::povm::{PovmFile, PovmParams};
use apovm::simulator::{train_vqe, VqeConfig};
use apovm::tomography::{KwiseOptions, MleOptions};

#[derive(Parser)]
#[command(name = "apovm", version, about = "Adaptive IC-POVM estimation of Pauli observables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimation method over a list of seeds.
    Run(RunArgs),
    /// Train a hardware-efficient ansatz for an observable and save the circuit.
    VqeTrain {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 400)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct k-qubit reduced states from the batches of a finished run.
    Tomography {
        #[arg(long)]
        run: PathBuf,
        /// Largest subset size.
        #[arg(long)]
        k: usize,
        /// Which seed directory to use (default: the first configured seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4)]
        enumerate_up_to: usize,
        #[arg(long, default_value_t = 32)]
        subset_cap: usize,
        #[arg(long, default_value_t = 0.1)]
        dilution: f64,
        #[arg(long, default_value_t = 1e-15)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iters: usize,
        /// Keep the dilution fixed instead of halving and growing it.
        #[arg(long)]
        fixed_dilution: bool,
    },
    /// Shots needed to reach a target error, per seed trace.
    Extrapolate {
        /// A trace CSV or a run directory.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        target: f64,
    },
    /// Least-squares fit of S = a N^b to `N,S` pairs.
    Fit {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a spin-chain Hamiltonian in the observable text format.
    GenHamiltonian {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        qubits: usize,
        #[arg(long, default_value_t = 1.0)]
        coupling: f64,
        /// Transverse field (Ising) or ZZ anisotropy (Heisenberg).
        #[arg(long, default_value_t = 1.0)]
        field: f64,
        #[arg(long)]
        periodic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bloch-ball coordinates of the effects of stored POVMs.
    ExportBloch {
        /// A `.povm` file or a seed directory holding `povm/iter-*.povm`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Tfim,
    Heisenberg,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    shots: Option<usize>,
    /// Repeatable; replaces the configured seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Run seeds 0..n.
    #[arg(long, conflicts_with = "seeds")]
    num_seeds: Option<u64>,
    #[arg(long)]
    target_error: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    ansatz: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_persist: bool,
}

fn build_config(a: RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = a.obs {
        cfg.observable = o;
    }
    if let Some(m) = a.method {
        cfg.method = Method::parse(&m)?;
    }
    if a.shots.is_some() {
        cfg.shots = a.shots;
    }
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds;
    }
    if let Some(n) = a.num_seeds {
        cfg.seeds = (0..n).collect();
    }
    if a.target_error.is_some() {
        cfg.stop.target_error = a.target_error;
    }
    if a.max_iterations.is_some() {
        cfg.stop.max_iterations = a.max_iterations;
    }
    if a.ansatz.is_some() || a.theta.is_some() {
        cfg.state = Default::default();
        cfg.state.ansatz = a.ansatz;
        cfg.state.theta = a.theta;
    }
    if a.depth.is_some() {
        cfg.state.depth = a.depth;
    }
    if let Some(o) = a.out {
        cfg.output = o;
    }
    if a.no_persist {
        cfg.persist_batches = false;
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn traces_of(input: &Path) -> Result<Vec<(String, Vec<TraceRow>)>> {
    if input.is_file() {
        return Ok(vec![(input.display().to_string(), load_trace(input)?)]);
    }
    let cfg = ExperimentConfig::load(&input.join("config.json"))
        .with_context(|| format!("{} is neither a trace nor a run directory", input.display()))?;
    cfg.seeds
        .iter()
        .map(|&s| Ok((format!("seed-{s}"), load_trace(&seed_dir(input, s).join("trace.csv"))?)))
        .collect()
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let cfg = build_config(args)?;
            let summary = run_experiment(&cfg)?;
            println!(
                "{} on {} qubits, {} seeds: mean |error| {:.3e}, mean estimated error {:.3e}, rms {:.3e}",
                cfg.method.name(),
                summary.num_qubits,
                summary.seeds.len(),
                summary.mean_abs_error.estimate,
                summary.mean_estimated_error.estimate,
                summary.rms_error
            );
            println!("wrote {}", cfg.output.display());
        }
        Command::VqeTrain { obs, depth, restarts, max_sweeps, threshold, seed, out } => {
            let o = parse_observable(&fs::read_to_string(&obs).with_context(|| format!("reading {}", obs.display()))?)?;
            let config = VqeConfig { depth, entangler: None, max_sweeps, restarts, threshold, seed };
            let r = train_vqe(&o, &config)?;
            fs::write(&out, r.circuit.to_json()?)?;
            println!(
                "energy {:.10} reference {:.10} gap {:.3e} converged {}",
                r.energy,
                r.reference_energy,
                r.energy - r.reference_energy,
                r.converged
            );
            if !r.converged {
                eprintln!("warning: gap above threshold {threshold:e}");
            }
        }
        Command::Tomography { run, k, seed, enumerate_up_to, subset_cap, dilution, tol, max_iters, fixed_dilution } => {
            let mle = MleOptions { dilution, tol, max_iters, adaptive: !fixed_dilution, ..MleOptions::default() };
            let opts = KwiseOptions { mle, enumerate_up_to, subset_cap, ..KwiseOptions::default() };
            let report = tomography_from_run(&run, seed, k, &opts)?;
            let dir = run.join("tomography");
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("report.txt"), report.to_text())?;
            fs::write(dir.join("summary.csv"), report.summary_csv())?;
            print!("{}", report.summary_csv());
        }
        Command::Extrapolate { input, target } => {
            let mut values = Vec::new();
            println!("source,s_target");
            for (name, trace) in traces_of(&input)? {
                let s = extrapolate_shots(&trace, target)?;
                println!("{name},{s}");
                values.push(s);
            }
            if values.len() > 1 {
                let iv = bootstrap_mean(&values, 1000, 0.95, 0);
                println!("mean,{} # 95% interval [{}, {}]", iv.estimate, iv.lower, iv.upper);
            }
        }
        Command::Fit { points, bootstrap, seed } => {
            let pts = parse_points(&fs::read_to_string(&points).with_context(|| format!("reading {}", points.display()))?)?;
            let fit = fit_power_law_bootstrap(&pts, bootstrap, 0.95, seed)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
        }
        Command::GenHamiltonian { model, qubits, coupling, field, periodic, out } => {
            let obs = match model {
                Model::Tfim => transverse_field_ising(qubits, coupling, field, periodic)?,
                Model::Heisenberg => heisenberg(qubits, coupling, field, periodic)?,
            };
            emit(&obs.to_text(), out.as_ref())?;
        }
        Command::ExportBloch { input, out } => {
            let povms: Vec<PovmParams> = if input.is_file() {
                vec![PovmFile::parse(&fs::read_to_string(&input)?)?.params]
            } else {
                let mut v = Vec::new();
                for t in 1.. {
                    let p = input.join("povm").join(format!("iter-{t}.povm"));
                    if !p.exists() {
                        break;
                    }
                    v.push(PovmFile::parse(&fs::read_to_string(&p)?)?.params);
                }
                v
            };
            if povms.is_empty() {
                bail!("no POVM files under {}", input.display());
            }
            emit(&bloch_csv(&povms), out.as_ref())?;
        }
    }
    Ok(())
}
