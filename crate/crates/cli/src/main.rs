use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wptsim_core::campaign::{
    cdf_file_stem, emit_report, evaluate_point, load_report, run_sweep, simulate_strategy, write_cdf_csv,
    write_sweep_dir, CampaignConfig, ReportFormat, SweepReport,
};
use wptsim_core::end_device::{size_buffer, write_trajectory_csv};
use wptsim_core::trace_replay::{monte_carlo_response, parse_ep_trace, reconstruct_buffer};
use wptsim_core::{Error, Strategy};

#[derive(Parser)]
#[command(name = "wptsim", version, about = "Initial-access wireless power transfer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Table => ReportFormat::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Single,
    Multi,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Single => Strategy::Single,
            StrategyArg::Multi => Strategy::Multi,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Minimum buffer capacitance for an MCU task.
    SizeBuffer {
        /// Task energy [J].
        #[arg(long)]
        e_mcu: f64,
        /// Wake-up threshold [V].
        #[arg(long)]
        v_th: f64,
        /// Brown-out voltage [V].
        #[arg(long)]
        v_bod: f64,
    },
    /// Simulate selected (strategy, gain) points of a campaign.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Gain [dB]; all configured gains when omitted.
        #[arg(long)]
        gain: Option<f64>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Writes harvester traces and buffer trajectories here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo response times from a recorded harvester trace.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Writes one CDF file per MCU mode here.
        #[arg(long)]
        cdf_out: Option<PathBuf>,
    },
    /// Full gain sweep over all strategies, written to a directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-emit a stored sweep report.
    Report {
        /// Sweep directory or report file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
}

/// Exit status classes: 2 configuration/argument, 3 input data.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_data_error() { 3 } else if matches!(e, Error::Io(_)) { 1 } else { 2 };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }
}

fn data_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 3, msg: format!("{}: {e}", path.display()) }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<CampaignConfig, Failure> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn size_buffer_cmd(e_mcu: f64, v_th: f64, v_bod: f64) -> Result<(), Failure> {
    let c = size_buffer(e_mcu, v_th, v_bod)?;
    println!("minimum buffer capacitance: {:.3} uF ({c:e} F)", c * 1e6);
    Ok(())
}

fn simulate_cmd(
    config: &Path,
    strategy: Option<StrategyArg>,
    gain: Option<f64>,
    seed: Option<u64>,
    format: Format,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config, seed)?;
    if let Some(s) = strategy {
        cfg.strategies = vec![s.into()];
    }
    if let Some(g) = gain {
        cfg.gains_db = vec![g];
    }
    cfg.validate()?;
    let n_antennas = cfg.geometry()?.len();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut report = SweepReport::default();
    for &s in &cfg.strategies {
        for p in simulate_strategy(&cfg, s, &cfg.gains_db)? {
            let (row, exports) = evaluate_point(&cfg, s, p.gain_db, p.per_antenna_dbm, n_antennas, p.mean_rf_w, &p.trace)?;
            report.rows.push(row);
            let Some(dir) = out else { continue };
            let trace_file = File::create(dir.join(format!("trace_{s}_{}.csv", p.gain_db)))?;
            p.trace.write_csv(BufWriter::new(trace_file))?;
            for e in exports {
                let (traj, _) = reconstruct_buffer(&p.trace, &cfg.device_config(e.mode), 0)?;
                let stem = cdf_file_stem(s, p.gain_db, e.mode);
                write_trajectory_csv(&traj, BufWriter::new(File::create(dir.join(format!("trajectory_{stem}.csv")))?))?;
                write_cdf_csv(&e.stats.cdf, BufWriter::new(File::create(dir.join(format!("cdf_{stem}.csv")))?))?;
            }
        }
    }
    std::io::stdout().write_all(&emit_report(&report, format.into())?)?;
    Ok(())
}

fn opt_s(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn replay_cmd(
    trace_path: &Path,
    config: &Path,
    trials: Option<usize>,
    seed: Option<u64>,
    format: Format,
    cdf_out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load_config(config, None)?;
    let file = File::open(trace_path).map_err(|e| data_failure(trace_path, e))?;
    let trace = parse_ep_trace(BufReader::new(file)).map_err(|e| data_failure(trace_path, e))?;
    if trace.is_empty() {
        return Err(data_failure(trace_path, "trace has no samples"));
    }
    let n_trials = trials.unwrap_or(cfg.n_trials);
    if n_trials == 0 {
        return Err(Failure { code: 2, msg: "--trials must be at least 1".into() });
    }
    let seed = seed.unwrap_or_else(|| cfg.monte_carlo_seed());
    let feasibility = trace.fraction_above(cfg.end_device.v_mcu_th) * 100.0;
    let mut results = Vec::new();
    for &mode in &cfg.mcu_modes {
        let stats = monte_carlo_response(&trace, &cfg.device_config(mode), n_trials, seed)?;
        if let Some(dir) = cdf_out {
            std::fs::create_dir_all(dir)?;
            let f = File::create(dir.join(format!("cdf_{}.csv", mode.as_str())))?;
            write_cdf_csv(&stats.cdf, BufWriter::new(f))?;
        }
        results.push((mode, stats));
    }
    let mut stdout = std::io::stdout().lock();
    match format {
        Format::Json => {
            let modes: serde_json::Map<String, serde_json::Value> = results
                .iter()
                .map(|(m, s)| {
                    let v = serde_json::json!({
                        "n_trials": s.n_trials,
                        "n_uncensored": s.n_uncensored(),
                        "p50_s": s.p50, "p95_s": s.p95, "p98_s": s.p98,
                        "start_indices": s.start_indices,
                        "response_times_s": s.outcomes.iter().map(|o| o.time()).collect::<Vec<_>>(),
                    });
                    (m.as_str().to_string(), v)
                })
                .collect();
            let doc = serde_json::json!({
                "samples": trace.len(),
                "sample_rate_hz": trace.sample_rate,
                "mean_dc_w": trace.mean_dc_power(),
                "feasibility_pct": feasibility,
                "seed": seed,
                "modes": modes,
            });
            writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("json value serializes"))?;
        }
        Format::Csv => {
            writeln!(stdout, "mode,n_trials,n_uncensored,p50_s,p95_s,p98_s")?;
            for (m, s) in &results {
                let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                writeln!(stdout, "{},{},{},{},{},{}", m.as_str(), s.n_trials, s.n_uncensored(), f(s.p50), f(s.p95), f(s.p98))?;
            }
        }
        Format::Table => {
            writeln!(
                stdout,
                "{} samples at {} Hz, mean DC {:.3} uW, v_dc > v_th {feasibility:.2}%",
                trace.len(),
                trace.sample_rate,
                trace.mean_dc_power() * 1e6
            )?;
            writeln!(stdout, "{:>10} {:>7} {:>11} {:>9} {:>9} {:>9}", "mcu", "trials", "uncensored", "P50 [s]", "P95 [s]", "P98 [s]")?;
            for (m, s) in &results {
                writeln!(
                    stdout,
                    "{:>10} {:>7} {:>11} {:>9} {:>9} {:>9}",
                    m.as_str(),
                    s.n_trials,
                    s.n_uncensored(),
                    opt_s(s.p50),
                    opt_s(s.p95),
                    opt_s(s.p98)
                )?;
            }
        }
    }
    Ok(())
}

fn sweep_cmd(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let output = run_sweep(&cfg)?;
    write_sweep_dir(&output, out)?;
    std::io::stdout().write_all(&emit_report(&output.report, ReportFormat::Table)?)?;
    Ok(())
}

fn report_cmd(input: &Path, format: Format) -> Result<(), Failure> {
    let report = load_report(input).map_err(|e| match e {
        Error::Io(_) => data_failure(input, e),
        other => other.into(),
    })?;
    std::io::stdout().write_all(&emit_report(&report, format.into())?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SizeBuffer { e_mcu, v_th, v_bod } => size_buffer_cmd(e_mcu, v_th, v_bod),
        Command::Simulate { config, strategy, gain, seed, format, out } => {
            simulate_cmd(&config, strategy, gain, seed, format, out.as_deref())
        }
        Command::Replay { trace, config, trials, seed, format, cdf_out } => {
            replay_cmd(&trace, &config, trials, seed, format, cdf_out.as_deref())
        }
        Command::Sweep { config, out, seed } => sweep_cmd(&config, &out, seed),
        Command::Report { input, format } => report_cmd(&input, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
