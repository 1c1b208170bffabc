//! `uavrelay`: run episodes, sweeps, config checks and the ICI table.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use uav_relay::channel::ici::{reference_ratios, IciConfig, Occupancy};
use uav_relay::orchestrator::report::{summary_json, write_episode_csv, write_sweep_csv};
use uav_relay::orchestrator::{run_episode, sweep, Algorithm, Axis, EpisodeOptions};
use uav_relay::scenario::{from_config, load_scenario, validate};
use uav_relay::trajectory::write_trace;
use uav_relay::Scenario;

/// Relative ICI power of the relay path over a cellular victim used by `ici-check`, dB.
const ICI_CHECK_ETA_DB: f64 = 15.0;

#[derive(Parser)]
#[command(name = "uavrelay", version, about = "UAV-relay OFDMA uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Joint,
    Random,
    Cellular,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Joint => Algorithm::Joint,
            AlgArg::Random => Algorithm::RandomAllocation,
            AlgArg::Cellular => Algorithm::CellularOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode; writes episode.csv and summary.json.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also write the per-iteration trajectory trace to trace.csv.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value = "joint")]
        algorithm: AlgArg,
    },
    /// Sweep one parameter over values and seeds; writes sweep.csv.
    Sweep {
        config: PathBuf,
        /// p_ue_max[_dbm|_w], d_max[_m], p_uav_max[_w|_dbm] or e_max[_j].
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Number of seeds (topologies 0..n).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["joint", "random", "cellular"])]
        algorithms: Vec<AlgArg>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Check a config; exits with status 2 when it is invalid.
    Validate { config: PathBuf },
    /// Print the Doppler inter-subcarrier interference ratios.
    IciCheck,
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(load_scenario(&text)?)
}

fn run(config: &Path, out_dir: &Path, trace: bool, alg: Algorithm) -> Result<()> {
    let s = read_scenario(config)?;
    fs::create_dir_all(out_dir)?;
    let log = run_episode(&s, alg, EpisodeOptions { trace, validate: true })?;
    write_episode_csv(&s, &log, BufWriter::new(File::create(out_dir.join("episode.csv"))?))?;
    let summary = serde_json::to_string_pretty(&summary_json(&s, &log))?;
    fs::write(out_dir.join("summary.json"), summary + "\n")?;
    if trace {
        write_trace(&log.trace, BufWriter::new(File::create(out_dir.join("trace.csv"))?))?;
    }
    let m = &log.metrics;
    println!(
        "{}: sum rate {:.4} bit/s/Hz, Jain {}, scheduled {}, relay {}, avg speed {:.3} m/s",
        alg.name(),
        m.sum_rate,
        m.jain.map_or("undefined".to_string(), |j| format!("{j:.4}")),
        m.scheduled_ues,
        m.relay_ues,
        m.avg_speed
    );
    Ok(())
}

fn run_sweep(config: &Path, axis: &str, values: &[f64], seeds: u64, algs: &[Algorithm], out_dir: &Path) -> Result<()> {
    if seeds == 0 {
        bail!("--seeds must be positive");
    }
    let s = read_scenario(config)?;
    let axis: Axis = axis.parse()?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let res = sweep(&s, axis, values, &seeds, algs)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sweep.csv");
    write_sweep_csv(&res, BufWriter::new(File::create(&path)?))?;
    println!("wrote {} rows to {}", res.rows.len(), path.display());
    Ok(())
}

/// Prints violations; `Ok(false)` when the config is invalid.
fn validate_config(config: &Path) -> Result<bool> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let doc: serde_json::Value = match serde_json::from_str(if text.trim().is_empty() { "{}" } else { &text }) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("parse error: {e}");
            return Ok(false);
        }
    };
    let s = match from_config(&doc) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return Ok(false);
        }
    };
    let v = validate(&s);
    for msg in &v {
        eprintln!("invalid: {msg}");
    }
    if v.is_empty() {
        println!("ok: {} UEs, {} subchannels, {} slots", s.n_ues, s.n_subchannels, s.n_slots);
    }
    Ok(v.is_empty())
}

fn ici_check() -> Result<()> {
    let cfg = IciConfig::reference();
    println!(
        "K={} spacing={} kHz fc={} GHz v={:.1} km/h eta={} dB (normalized Doppler {:.6})",
        cfg.n_subcarriers,
        cfg.spacing_hz / 1e3,
        cfg.center_freq_hz / 1e9,
        cfg.speed_m_s * 3.6,
        ICI_CHECK_ETA_DB,
        cfg.normalized_doppler()
    );
    println!("{:<12} {:>12} {:>10}", "occupancy", "cellular_dB", "relay_dB");
    for occ in Occupancy::ALL {
        let r = reference_ratios(&cfg, ICI_CHECK_ETA_DB, occ)?;
        let name = serde_json::to_value(occ)?.as_str().unwrap_or_default().to_string();
        let mark = if occ == Occupancy::LowerBlock { " (default)" } else { "" };
        println!("{:<12} {:>12.2} {:>10.2}{mark}", name, r.cellular_db, r.relay_db);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out_dir, trace, algorithm } => run(&config, &out_dir, trace, algorithm.into()),
        Command::Sweep { config, axis, values, seeds, algorithms, out_dir } => {
            let algs: Vec<Algorithm> = algorithms.into_iter().map(Into::into).collect();
            run_sweep(&config, &axis, &values, seeds, &algs, &out_dir)
        }
        Command::Validate { config } => match validate_config(&config) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::IciCheck => ici_check(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<uav_relay::Error>(), Some(uav_relay::Error::Validation(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
