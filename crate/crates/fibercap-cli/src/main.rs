//! `fibercap` — experiment driver for the nonlinear-fiber rate toolkit.
//!
//! Verbs: `simulate` one burst, `fit` receiver models at one power, `rate`
//! one sweep point, `sweep` the full power sweep (with optional FDPA pass),
//! `fdpa` re-optimize subcarrier powers from a saved curve, and `report`
//! regenerate CSVs and the Markdown summary from saved curves.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical/runtime error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fibercap::modem::{demodulate_center, generate_symbols, modulate, save_frame};
use fibercap::ssfm::{propagate, SsfmConfig};
use fibercap::units::dbm_to_watt;
use fibercap::SeededRng;

use fibercap_cli::config::{model_label, parse_model, ExperimentConfig};
use fibercap_cli::sweep::RateCurve;
use fibercap_cli::{fdpa, report, sweep, CliError, Result};

#[derive(Parser)]
#[command(name = "fibercap", version, about = "Nonlinear-fiber achievable-rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Full-scale benchmark: 5 channels, 6825-symbol bursts, 24+120 bursts.
    Table1,
    /// Reduced preset that completes in minutes to hours.
    Desk,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file (TOML); takes precedence over --preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in preset used when no --config is given.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,

    /// Receiver model override: memoryless, wpn, or cpan.
    #[arg(long)]
    model: Option<String>,

    /// Subcarriers-per-channel override.
    #[arg(long)]
    subcarriers: Option<usize>,

    /// Base RNG seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one burst at a given launch power and write the transmitted
    /// and received center-channel symbols as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-channel launch power, dBm.
        #[arg(long, allow_negative_numbers = true)]
        power_dbm: f64,
    },
    /// Fit receiver-model parameters on training bursts at one power and
    /// write them as JSON (rate diagnostics use a single held-out burst).
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-channel launch power, dBm.
        #[arg(long, allow_negative_numbers = true)]
        power_dbm: f64,
    },
    /// Evaluate one rate point: train, fit, and test at a single power.
    Rate {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-channel launch power, dBm.
        #[arg(long, allow_negative_numbers = true)]
        power_dbm: f64,
    },
    /// Run the full power sweep; with `fdpa = true` in the configuration a
    /// second pass re-optimizes the subcarrier power split.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-optimize the subcarrier power split from a saved multi-subcarrier
    /// curve at one total power, without re-simulating.
    Fdpa {
        #[command(flatten)]
        common: CommonArgs,
        /// Saved curve (`*.curve.json`) holding per-subcarrier utilities.
        #[arg(long)]
        curve: PathBuf,
        /// Total per-channel power to split, dBm.
        #[arg(long, allow_negative_numbers = true)]
        power_dbm: f64,
        /// Allocation lattice step, dB.
        #[arg(long, default_value_t = fdpa::DEFAULT_STEP_DB)]
        step_db: f64,
    },
    /// Regenerate per-curve CSVs, the combined CSV, and the Markdown
    /// summary from every saved curve in a directory.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory to scan for `*.curve.json` (default: the output
        /// directory of the resolved configuration).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common, power_dbm } => {
            let cfg = resolve(&common)?;
            run_simulate(&cfg, power_dbm)
        }
        Command::Fit { common, power_dbm } => {
            let mut cfg = resolve(&common)?;
            // Fitting needs no test set; keep one burst so the training
            // diagnostics include a held-out rate estimate.
            cfg.protocol.test_bursts = 1;
            let curves = run_single_power(&cfg, power_dbm)?;
            let stem = curves[0].stem();
            println!(
                "fitted {} model(s): {}",
                cfg.plan.subcarriers,
                cfg.out_dir.join("models").join(format!("{stem}-pw0-sc*.model.json")).display()
            );
            Ok(())
        }
        Command::Rate { common, power_dbm } => {
            let cfg = resolve(&common)?;
            let curves = run_single_power(&cfg, power_dbm)?;
            let p = &curves[0].points[0];
            println!(
                "power {} dBm: I_q = {:.4} bits/symbol, SE = {:.4} bits/s/Hz \
                 (h_u {:.4}, h_ux {:.4}, stderr {:.4})",
                p.power_dbm, p.i_q, p.se_bits_hz, p.h_u, p.h_ux, p.stderr_bits
            );
            Ok(())
        }
        Command::Sweep { common } => {
            let cfg = resolve(&common)?;
            let curves = sweep::run_sweep(&cfg)?;
            let paths = report::emit_report(&curves, &cfg.out_dir)?;
            for curve in &curves {
                let peak = curve.peak().expect("validated curve");
                println!(
                    "{}: peak SE {:.4} bits/s/Hz at {} dBm",
                    curve.stem(),
                    peak.se_bits_hz,
                    peak.power_dbm
                );
            }
            println!("report: {}", cfg.out_dir.join("summary.md").display());
            let _ = paths;
            Ok(())
        }
        Command::Fdpa {
            common,
            curve,
            power_dbm,
            step_db,
        } => run_fdpa(&common, &curve, power_dbm, step_db),
        Command::Report { common, dir } => {
            let dir = match dir {
                Some(d) => d,
                None => resolve(&common)?.out_dir,
            };
            let curves = load_curves(&dir)?;
            let paths = report::emit_report(&curves, &dir)?;
            for path in paths {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

/// Resolve the configuration from --config/--preset plus overrides, set up
/// the worker pool, and validate.
fn resolve(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match common.preset {
            Preset::Table1 => ExperimentConfig::table1(fibercap::models::ModelKind::Mpn),
            Preset::Desk => ExperimentConfig::desk(fibercap::models::ModelKind::Mpn),
        },
    };
    if let Some(model) = &common.model {
        cfg.protocol.model = model_label(parse_model(model)?).into();
    }
    if let Some(subcarriers) = common.subcarriers {
        cfg.plan.subcarriers = subcarriers;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Tag for filenames derived from a power value: `-7.5` → `m7p5`.
fn power_tag(power_dbm: f64) -> String {
    format!("{power_dbm}").replace('-', "m").replace('.', "p")
}

/// Rewrite the configuration as a standalone single-power experiment so its
/// artifacts are labeled by power and never collide with sweep artifacts.
fn single_power_config(cfg: &ExperimentConfig, power_dbm: f64) -> ExperimentConfig {
    let mut single = cfg.clone();
    single.label = format!("{}-{}dbm", cfg.label, power_tag(power_dbm));
    single.protocol.powers_dbm = vec![power_dbm];
    single.protocol.fdpa = false;
    single
}

fn run_single_power(cfg: &ExperimentConfig, power_dbm: f64) -> Result<Vec<RateCurve>> {
    let single = single_power_config(cfg, power_dbm);
    single.validate()?;
    let kind = single.model_kind()?;
    sweep::run_sweep_models(&single, &[kind])
}

fn run_simulate(cfg: &ExperimentConfig, power_dbm: f64) -> Result<()> {
    let single = single_power_config(cfg, power_dbm);
    single.validate()?;
    let plan = single.plan.plan_at_power(single.channel_power_watt(power_dbm));
    let params = single.link.to_params();
    let ssfm = SsfmConfig::for_link(
        &params,
        plan.channel_power() * plan.num_channels as f64,
        single.protocol.max_nonlinear_phase_per_step,
    );
    let mut rng = SeededRng::new(single.seed, 0);
    let frame = generate_symbols(&plan, &mut rng);
    let tx = modulate(&frame, &plan, plan.grid()?)?;
    let rx = propagate(&tx, &params, &ssfm, &mut rng)?;
    let rx_frame = demodulate_center(&rx, &plan, &params, &ssfm)?;

    fs::create_dir_all(&single.out_dir)?;
    let tx_path = single.out_dir.join(format!("{}-tx.csv", single.label));
    let rx_path = single.out_dir.join(format!("{}-rx.csv", single.label));
    save_frame(&tx_path, &frame)?;
    save_frame(&rx_path, &rx_frame)?;
    println!("wrote {}", tx_path.display());
    println!("wrote {}", rx_path.display());
    Ok(())
}

fn run_fdpa(common: &CommonArgs, curve_path: &PathBuf, power_dbm: f64, step_db: f64) -> Result<()> {
    let curve = RateCurve::load(curve_path)?;
    if curve.subcarriers < 2 {
        return Err(CliError::Config(
            "power allocation needs a multi-subcarrier curve".into(),
        ));
    }
    let utilities: Vec<Vec<fdpa::Utility>> = (0..curve.subcarriers)
        .map(|s| {
            curve
                .subcarrier_points
                .iter()
                .map(|pts| fdpa::Utility {
                    power_dbm: pts[s].power_dbm,
                    rate: pts[s].se_bits_hz,
                })
                .collect()
        })
        .collect();
    let total = dbm_to_watt(power_dbm);
    let allocation = fdpa::fdpa_allocate(&utilities, total, step_db)?;

    let out_dir = match &common.out {
        Some(out) => out.clone(),
        None => curve_path
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&out_dir)?;
    let path = out_dir.join(format!(
        "{}-alloc-{}dbm.csv",
        curve.stem(),
        power_tag(power_dbm)
    ));
    let mut text = format!(
        "# config_hash={} label={} model={} subcarriers={} total_power_dbm={}\n",
        curve.provenance.config_hash,
        curve.provenance.label,
        curve.provenance.model,
        curve.subcarriers,
        power_dbm
    );
    text.push_str("subcarrier,power_watt,power_dbm\n");
    for (s, &watt) in allocation.iter().enumerate() {
        use std::fmt::Write as _;
        writeln!(text, "{s},{watt},{}", fibercap::units::watt_to_dbm(watt)).expect("string write");
        println!(
            "subcarrier {s}: {:.3} dBm",
            fibercap::units::watt_to_dbm(watt)
        );
    }
    fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Load every `*.curve.json` in a directory, sorted by filename.
fn load_curves(dir: &PathBuf) -> Result<Vec<RateCurve>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".curve.json"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Config(format!(
            "no *.curve.json files in {}",
            dir.display()
        )));
    }
    names.iter().map(|p| RateCurve::load(p)).collect()
}
