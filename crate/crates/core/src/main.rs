use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use plccov::overhead;
use plccov::pipeline::{self, PipelineError, ProjectManifest, ReportFormat, Responses};

#[derive(Parser)]
#[command(name = "plccov", version, about = "Statement coverage for IEC 61131-3 control software")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dependency model as Graphviz DOT.
    Graph {
        manifest: PathBuf,
        /// Output file (default <output_dir>/model.dot, `-` for stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Insert trace calls and write the trace point database.
    Instrument { manifest: PathBuf },
    /// Run a test suite against the instrumented project.
    Run {
        manifest: PathBuf,
        suite: PathBuf,
        /// Run directory (default <output_dir>/run).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Ask for manual step results on the terminal.
        #[arg(long)]
        interactive: bool,
    },
    /// Compute coverage from one or more run directories.
    Cover {
        manifest: PathBuf,
        /// Run directories (default <output_dir>/run).
        runs: Vec<PathBuf>,
        #[arg(long)]
        db: Option<PathBuf>,
        /// Report directory (default <output_dir>/coverage).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Text, Format::Json, Format::Dot, Format::Html])]
        format: Vec<Format>,
    },
    /// Estimate the cycle time taken by trace calls.
    Estimate {
        /// Trace calls per cycle.
        #[arg(short = 'n', long)]
        calls: Option<u64>,
        /// Cycle time in ms.
        #[arg(short = 't', long)]
        cycle_ms: Option<f64>,
        /// Cost of one trace call in microseconds.
        #[arg(short = 'c', long, default_value_t = 0.5443)]
        cost_us: f64,
        /// Derive the cost from a measured cycle time increase in ms...
        #[arg(long, requires = "calibrate_calls")]
        calibrate_ms: Option<f64>,
        /// ...at this many calls per cycle.
        #[arg(long, requires = "calibrate_ms")]
        calibrate_calls: Option<u64>,
        /// Share of the cycle available to trace calls; prints the largest
        /// call count that fits.
        #[arg(long)]
        budget: Option<f64>,
        /// Print the standard grid of call counts and cycle times.
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Dot,
    Html,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Json => ReportFormat::Json,
            Format::Dot => ReportFormat::Dot,
            Format::Html => ReportFormat::Html,
        }
    }
}

enum Failure {
    Pipeline(PipelineError),
    Usage(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Graph { manifest, output } => {
            let m = ProjectManifest::load(&manifest)?;
            let g = pipeline::cmd_graph(&m)?;
            let path = output.unwrap_or_else(|| m.output_dir.join(pipeline::MODEL_DOT));
            if path.as_os_str() == "-" {
                print!("{}", g.dot);
            } else {
                write_file(&path, &g.dot)?;
                println!("{} nodes, {} edges -> {}", g.model.nodes.len(), g.model.edges.len(), path.display());
            }
            Ok(0)
        }
        Command::Instrument { manifest } => {
            let m = ProjectManifest::load(&manifest)?;
            let out = pipeline::cmd_instrument(&m)?;
            println!("{}", out.summary());
            println!("database: {}", m.tp_database_path().display());
            Ok(0)
        }
        Command::Run {
            manifest,
            suite,
            output,
            interactive,
        } => {
            let m = ProjectManifest::load(&manifest)?;
            let responses = if interactive || m.interactive_manual {
                Responses::Interactive {
                    input: &mut std::io::stdin().lock(),
                    output: &mut std::io::stderr(),
                }
            } else {
                Responses::Scripted
            };
            let out = pipeline::cmd_run(&m, &suite, output.as_deref(), responses)?;
            print!("{}", out.run.report_text());
            println!("traces and reports: {}", out.dir.display());
            Ok(if out.run.failed() > 0 { 1 } else { 0 })
        }
        Command::Cover {
            manifest,
            runs,
            db,
            output,
            format,
        } => {
            let m = ProjectManifest::load(&manifest)?;
            let runs = if runs.is_empty() { vec![m.run_dir()] } else { runs };
            let out = pipeline::cmd_cover(&m, db.as_deref(), &runs)?;
            let dir = output.unwrap_or_else(|| m.coverage_dir());
            let formats: Vec<ReportFormat> = format.into_iter().map(Into::into).collect();
            pipeline::write_reports(&out, &formats, &dir)?;
            print!("{}", plccov::coverage::render_text(&out.report));
            println!("reports: {}", dir.display());
            Ok(0)
        }
        Command::Estimate {
            calls,
            cycle_ms,
            cost_us,
            calibrate_ms,
            calibrate_calls,
            budget,
            grid,
            csv,
        } => estimate(calls, cycle_ms, cost_us, calibrate_ms.zip(calibrate_calls), budget, grid, csv),
    }
}

fn estimate(
    calls: Option<u64>,
    cycle_ms: Option<f64>,
    mut cost_us: f64,
    calibration: Option<(f64, u64)>,
    budget: Option<f64>,
    grid: bool,
    csv: bool,
) -> Result<u8, Failure> {
    let usage = |e: overhead::OverheadError| Failure::Usage(e.to_string());
    if let Some((ms, n)) = calibration {
        cost_us = overhead::calibrate(ms, n).map_err(usage)?;
        println!("calibrated cost: {cost_us:.4} us per call");
    }
    let mut did = calibration.is_some();
    if grid {
        let g = overhead::reproduce_grid(cost_us).map_err(usage)?;
        print!("{}", if csv { g.to_csv() } else { g.to_text() });
        did = true;
    }
    match (calls, cycle_ms) {
        (Some(n), Some(t)) => {
            let e = overhead::estimate(n, t, cost_us).map_err(usage)?;
            if csv {
                println!("calls,cycle_ms,cost_us,added_us,percent");
                println!("{n},{t},{cost_us},{:.4},{:.4}", e.absolute_us, e.percent());
            } else {
                println!(
                    "{n} calls x {cost_us} us = {:.2} us per cycle, {:.2}% of {t} ms{}",
                    e.absolute_us,
                    e.percent(),
                    if e.within_headroom { "" } else { " (exceeds 80% headroom)" }
                );
            }
            did = true;
        }
        (None, None) => {}
        (None, Some(_)) if budget.is_some() => {}
        _ => return Err(Failure::Usage("--calls and --cycle-ms go together".into())),
    }
    if let Some(b) = budget {
        let t = cycle_ms.ok_or_else(|| Failure::Usage("--budget needs --cycle-ms".into()))?;
        let n = overhead::max_trace_calls(t, cost_us, b).map_err(usage)?;
        println!("at most {n} trace calls per {t} ms cycle within {}% of the cycle", b * 100.0);
        did = true;
    }
    if !did {
        return Err(Failure::Usage("nothing to estimate; give --calls/--cycle-ms, --budget or --grid".into()));
    }
    Ok(0)
}

fn write_file(path: &std::path::Path, text: &str) -> Result<(), Failure> {
    let wrap = |source| {
        Failure::Pipeline(PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(wrap)?;
    }
    std::fs::write(path, text).map_err(wrap)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Pipeline(e)) => {
            eprintln!("plccov: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("plccov: {msg}");
            ExitCode::from(2)
        }
    }
}
