//! `modalkl` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 invalid
//! configuration or usage.

use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modalkl::alerts::{AlertEvent, MonitorConfig, StreamMonitor};
use modalkl::oracle::{exact_modes, reference_model, ExactMode, Excitation, ScenarioConfig};
use modalkl::pipeline::{compare_alerts, identify, select, write_singular_spectrum};
use modalkl::signals::{load_timeseries, write_timeseries, CsvFormat, RowStream};
use modalkl::{json, Error, ErrorCategory, ModalModel, PipelineConfig, TimeSeriesSet};
use serde::Serialize;

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

/// Maximum relative deviation of a streamed time step from the first step.
const STREAM_GAP_RTOL: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "modalkl",
    version,
    about = "Output-only modal identification, KL damping selection and vibration alert analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify modes from a record (writes model.json and sv_spectrum.csv)
    Identify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Sweep damping scale factors and select the minimum-KL model
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Compare alert-duration curves of a measured record and a model response
    Alerts {
        /// Measured record
        #[arg(long)]
        input: PathBuf,
        /// Model response record, e.g. a candidate CSV written by `select`
        #[arg(long)]
        response: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Stream a record through the alert monitor, one JSON event per line
    Monitor {
        #[arg(long)]
        model: PathBuf,
        /// Stream source; standard input when absent or "-"
        #[arg(long)]
        input: Option<PathBuf>,
        /// Absolute acceleration threshold
        #[arg(long)]
        threshold: f64,
        /// Window length in samples (default: one second)
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Synthesize an oracle record from a scenario file (writes record.csv and truth.json)
    Synth {
        /// Scenario JSON
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.category() {
            ErrorCategory::Input => EXIT_INPUT,
            ErrorCategory::Numerical => EXIT_NUMERICAL,
            ErrorCategory::Config => EXIT_CONFIG,
        };
        Failure::new(code, e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_text(path: &Path, code: u8) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::new(code, format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::from_json(&read_text(p, EXIT_CONFIG)?)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_record(path: &Path) -> CliResult<TimeSeriesSet> {
    let file = fs::File::open(path)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    load_timeseries(BufReader::new(file), &CsvFormat::default())
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> CliResult<ModalModel> {
    serde_json::from_str(&read_text(path, EXIT_INPUT)?)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// Buffered output files, written together once every computation succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text =
            json::to_string(value).map_err(|e| Failure::new(EXIT_NUMERICAL, e.to_string()))?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    fn add_csv(
        &mut self,
        name: impl Into<String>,
        write: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
    ) {
        let mut buf = Vec::new();
        write(&mut buf).expect("writing to memory cannot fail");
        self.add(name, buf);
    }

    fn commit(self) -> CliResult<Vec<PathBuf>> {
        let io_err =
            |p: &Path, e: io::Error| Failure::new(EXIT_INPUT, format!("{}: {e}", p.display()));
        fs::create_dir_all(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn report(written: &[PathBuf]) {
    for p in written {
        println!("wrote {}", p.display());
    }
}

fn cmd_identify(input: &Path, config: Option<&Path>, output_dir: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let data = load_record(input)?;
    let id = identify(&data, &cfg)?;
    let mut out = Outputs::new(output_dir);
    out.add_json("model.json", &id.model)?;
    out.add_csv("sv_spectrum.csv", |w| {
        write_singular_spectrum(&id.spectrum, w)
    });
    eprintln!("identified {} modes", id.model.modes().len());
    report(&out.commit()?);
    Ok(())
}

fn cmd_select(
    input: &Path,
    model: &Path,
    config: Option<&Path>,
    output_dir: &Path,
) -> CliResult<()> {
    let cfg = load_config(config)?;
    let data = load_record(input)?;
    let base = load_model(model)?;
    let (sweep, evals) = select(&base, &data, &cfg)?;
    let chosen = sweep.selected();
    let selected = base.scale_damping(chosen.scale_factor)?;

    let mut out = Outputs::new(output_dir);
    out.add_json("sweep_report.json", &sweep)?;
    for e in &evals {
        out.add_csv(format!("candidate_{}.csv", e.result.scale_factor), |w| {
            write_timeseries(&e.simulated, w)
        });
    }
    out.add_json("selected_model.json", &selected)?;
    eprintln!(
        "selected scale factor {} (KL {:.6e})",
        chosen.scale_factor, chosen.kl_divergence
    );
    report(&out.commit()?);
    Ok(())
}

#[derive(Serialize)]
struct DiscrepancyReport {
    duration_discrepancy: f64,
    measured_all_triggered_threshold: Option<f64>,
    model_all_triggered_threshold: Option<f64>,
    n_thresholds: usize,
    n_channels: usize,
}

fn cmd_alerts(
    input: &Path,
    response: &Path,
    config: Option<&Path>,
    output_dir: &Path,
) -> CliResult<()> {
    let cfg = load_config(config)?;
    let measured = load_record(input)?;
    let model_response = load_record(response)?;
    let cmp = compare_alerts(&measured, &model_response, &cfg)?;

    let mut out = Outputs::new(output_dir);
    out.add_csv("alerts_measured.csv", |w| cmp.measured.write_csv(w));
    out.add_csv("alerts_model.csv", |w| cmp.model.write_csv(w));
    out.add_json(
        "discrepancy.json",
        &DiscrepancyReport {
            duration_discrepancy: cmp.duration_discrepancy,
            measured_all_triggered_threshold: cmp.measured.all_triggered_threshold(),
            model_all_triggered_threshold: cmp.model.all_triggered_threshold(),
            n_thresholds: cmp.measured.thresholds.len(),
            n_channels: cmp.measured.n_channels(),
        },
    )?;
    eprintln!("duration discrepancy {:.6e}", cmp.duration_discrepancy);
    report(&out.commit()?);
    Ok(())
}

fn emit(out: &mut impl Write, event: &AlertEvent) -> CliResult<()> {
    let line = json::to_line(event).map_err(|e| Failure::new(EXIT_NUMERICAL, e.to_string()))?;
    writeln!(out, "{line}")
        .and_then(|_| out.flush())
        .map_err(|e| Failure::new(EXIT_INPUT, format!("writing events: {e}")))
}

fn cmd_monitor(
    model: &Path,
    input: Option<&Path>,
    threshold: f64,
    window: Option<usize>,
    config: Option<&Path>,
) -> CliResult<()> {
    let cfg = load_config(config)?;
    let probe = MonitorConfig {
        divergence_bound: cfg.monitor.divergence_bound.unwrap_or(f64::INFINITY),
        prior_cov_scale: cfg.prior_cov_scale,
        ..MonitorConfig::new(threshold, window.unwrap_or(2))
    };
    probe.validate()?;
    let model = load_model(model)?;

    let source: Box<dyn Read> = match input {
        Some(p) if p != Path::new("-") => {
            Box::new(BufReader::new(fs::File::open(p).map_err(|e| {
                Failure::new(EXIT_INPUT, format!("{}: {e}", p.display()))
            })?))
        }
        _ => Box::new(io::stdin().lock()),
    };
    let rows = match RowStream::new(source) {
        Ok(r) => r,
        // an empty stream carries no samples and raises no alerts
        Err(Error::EmptyRecord) => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    if rows.labels().len() != model.n_channels() {
        return Err(Error::ChannelMismatch {
            expected: model.n_channels(),
            found: rows.labels().len(),
        }
        .into());
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut rows = rows.peekable();
    let mut pending: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut monitor: Option<StreamMonitor> = None;
    let mut step = 0.0;
    let mut last_t = 0.0;

    while let Some(row) = rows.next() {
        let (t, frame) = match row {
            Ok(r) => r,
            Err(e) if rows.peek().is_none() => {
                eprintln!("stream truncated: {e}");
                break;
            }
            Err(e) => return Err(e.into()),
        };
        match monitor.as_mut() {
            Some(m) => {
                let dt = t - last_t;
                if (dt - step).abs() > STREAM_GAP_RTOL * step {
                    return Err(Error::IrregularSampling(format!(
                        "step {dt} s at t = {t} s, expected {step} s"
                    ))
                    .into());
                }
                last_t = t;
                if let Some(ev) = m.push(&frame)? {
                    emit(&mut out, &ev)?;
                }
            }
            None => {
                pending.push((t, frame));
                if pending.len() == 2 {
                    step = pending[1].0 - pending[0].0;
                    if step.is_nan() || step <= 0.0 {
                        return Err(Error::IrregularSampling(
                            "time column is not strictly increasing".into(),
                        )
                        .into());
                    }
                    let fs = 1.0 / step;
                    let cfg = MonitorConfig {
                        window_samples: window.unwrap_or(fs.round().max(2.0) as usize),
                        ..probe
                    };
                    let mut m = StreamMonitor::new(model.clone(), fs, cfg)?;
                    for (_, f) in pending.drain(..) {
                        if let Some(ev) = m.push(&f)? {
                            emit(&mut out, &ev)?;
                        }
                    }
                    last_t = t;
                    monitor = Some(m);
                }
            }
        }
    }
    if let Some(m) = monitor {
        if let Some(ev) = m.finish()? {
            emit(&mut out, &ev)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a> {
    scenario: &'a ScenarioConfig,
    sample_rate_hz: f64,
    modes: Vec<ExactMode>,
}

fn cmd_synth(config: &Path, seed: Option<u64>, output_dir: &Path) -> CliResult<()> {
    let mut scenario: ScenarioConfig = serde_json::from_str(&read_text(config, EXIT_CONFIG)?)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", config.display())))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let system = scenario.system()?;
    let modes = exact_modes(&system)?;
    let record = scenario.run()?;

    let mut out = Outputs::new(output_dir);
    out.add_csv("record.csv", |w| write_timeseries(&record, w));
    out.add_json(
        "truth.json",
        &Truth {
            scenario: &scenario,
            sample_rate_hz: record.sample_rate_hz(),
            modes,
        },
    )?;
    // free-decay scenarios also get the exact modal model they follow
    if !matches!(scenario.excitation, Excitation::White { .. }) {
        out.add_json(
            "reference_model.json",
            &reference_model(&system, &scenario.excitation)?,
        )?;
    }
    report(&out.commit()?);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Identify {
            input,
            config,
            output_dir,
        } => cmd_identify(&input, config.as_deref(), &output_dir),
        Command::Select {
            input,
            model,
            config,
            output_dir,
        } => cmd_select(&input, &model, config.as_deref(), &output_dir),
        Command::Alerts {
            input,
            response,
            config,
            output_dir,
        } => cmd_alerts(&input, &response, config.as_deref(), &output_dir),
        Command::Monitor {
            model,
            input,
            threshold,
            window,
            config,
        } => cmd_monitor(
            &model,
            input.as_deref(),
            threshold,
            window,
            config.as_deref(),
        ),
        Command::Synth {
            config,
            seed,
            output_dir,
        } => cmd_synth(&config, seed, &output_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
