//! Project manifest and the graph / instrument / run / cover steps as
//! library functions. The `plccov` binary is a thin shell around these.
//!
//! Layout of the output directory:
//!
//! ```text
//! <out>/model.dot
//! <out>/tracepoints.xml
//! <out>/instrumented/files.lst        source paths in project order
//! <out>/instrumented/<path>...        instrumented sources
//! <out>/run/<id>.trace, report.txt, report.json
//! <out>/coverage/coverage.{txt,json,dot,html}
//! ```

use std::io::{BufRead, Write};
use std::path::{Component, Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use crate::coverage::{self, CoverageError, CoverageReport};
use crate::depmodel::{build_model, DependencyModel};
use crate::frontend::{parse_project, FrontendError, SourceFile, SourceProject, TaskDecl};
use crate::instrument::{instrument, InstrumentError, InstrumentedProject};
use crate::runtime::{Runtime, RuntimeError};
use crate::testkit::{
    self, read_run_report, InteractiveResponder, RecordedResponse, RunOptions, ScriptedResponder, Suite,
    SuiteRun, TestkitError,
};
use crate::tracedb::{emit_tp_database, load_tp_database, TraceDbError, TracePointDatabase};

pub const MODEL_DOT: &str = "model.dot";
pub const TP_DATABASE: &str = "tracepoints.xml";
pub const INSTRUMENTED_DIR: &str = "instrumented";
pub const FILE_LIST: &str = "files.lst";
pub const RUN_DIR: &str = "run";
pub const COVERAGE_DIR: &str = "coverage";
/// Suite copy with the answers given during an interactive run.
pub const RECORDED_SUITE: &str = "recorded_suite.xml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Testkit(#[from] TestkitError),
    #[error(transparent)]
    TraceDb(#[from] TraceDbError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
    /// Artifacts from different instrumentation runs were mixed.
    #[error("{0}")]
    Mismatch(String),
}

impl PipelineError {
    /// Process exit code: 3 for inconsistent artifacts, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Mismatch(_)
            | PipelineError::Coverage(_)
            | PipelineError::TraceDb(TraceDbError::FingerprintMismatch { .. }) => 3,
            PipelineError::Testkit(TestkitError::Trace(_)) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    sources: Vec<String>,
    #[serde(default = "default_output")]
    output_dir: String,
    #[serde(default, rename = "task")]
    tasks: Vec<RawTask>,
    #[serde(default)]
    options: RawOptions,
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    name: String,
    cycle_ms: u32,
    #[serde(default)]
    priority: i32,
    entry: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptions {
    #[serde(default)]
    no_reinit: bool,
    #[serde(default)]
    interactive_manual: bool,
}

/// A project description: sources, tasks and where artifacts go.
///
/// ```toml
/// sources = ["src/main.st"]
/// output_dir = "out"
///
/// [[task]]
/// name = "MainTask"
/// cycle_ms = 10
/// priority = 1
/// entry = "Main"
///
/// [options]
/// no_reinit = false
/// interactive_manual = false
/// ```
///
/// Relative paths are taken relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectManifest {
    pub base_dir: PathBuf,
    /// Source paths as written in the manifest; they also name the files
    /// inside the project.
    pub sources: Vec<String>,
    pub tasks: Vec<TaskDecl>,
    pub output_dir: PathBuf,
    pub no_reinit: bool,
    pub interactive_manual: bool,
}

fn plain_relative(p: &str) -> bool {
    let path = Path::new(p);
    !p.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl ProjectManifest {
    pub fn parse(text: &str, base_dir: &Path, origin: &str) -> Result<Self, PipelineError> {
        let bad = |message: String| PipelineError::Manifest {
            path: origin.to_string(),
            message,
        };
        let raw: RawManifest = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        if raw.tasks.is_empty() {
            return Err(bad("at least one [[task]] is required".into()));
        }
        if raw.sources.is_empty() {
            return Err(bad("no sources listed".into()));
        }
        for s in &raw.sources {
            if !plain_relative(s) {
                return Err(bad(format!("source '{s}' must be a relative path inside the project")));
            }
            if !base_dir.join(s).is_file() {
                return Err(bad(format!("source '{s}' does not exist")));
            }
        }
        Ok(ProjectManifest {
            base_dir: base_dir.to_path_buf(),
            sources: raw.sources,
            tasks: raw
                .tasks
                .into_iter()
                .map(|t| TaskDecl {
                    name: t.name,
                    cycle_ms: t.cycle_ms,
                    priority: t.priority,
                    entry_pou: t.entry,
                })
                .collect(),
            output_dir: base_dir.join(raw.output_dir),
            no_reinit: raw.options.no_reinit,
            interactive_manual: raw.options.interactive_manual,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, &path.display().to_string())
    }

    pub fn source_files(&self) -> Result<Vec<SourceFile>, PipelineError> {
        self.sources
            .iter()
            .map(|s| Ok(SourceFile::new(s.clone(), read(&self.base_dir.join(s))?)))
            .collect()
    }

    /// Parses the original (uninstrumented) project.
    pub fn project(&self) -> Result<SourceProject, PipelineError> {
        Ok(parse_project(&self.source_files()?, self.tasks.clone())?)
    }

    pub fn tp_database_path(&self) -> PathBuf {
        self.output_dir.join(TP_DATABASE)
    }

    pub fn instrumented_dir(&self) -> PathBuf {
        self.output_dir.join(INSTRUMENTED_DIR)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(RUN_DIR)
    }

    pub fn coverage_dir(&self) -> PathBuf {
        self.output_dir.join(COVERAGE_DIR)
    }
}

pub struct GraphOutput {
    pub model: DependencyModel,
    pub dot: String,
}

/// Builds the dependency model of the project.
pub fn cmd_graph(manifest: &ProjectManifest) -> Result<GraphOutput, PipelineError> {
    let project = manifest.project()?;
    let model = build_model(&project);
    let dot = model.to_dot();
    Ok(GraphOutput { model, dot })
}

pub struct InstrumentOutput {
    pub instrumented: InstrumentedProject,
    pub db: TracePointDatabase,
    pub elapsed: Duration,
}

impl InstrumentOutput {
    pub fn summary(&self) -> String {
        format!(
            "{} trace points ({} record calls) inserted in {:.3} s",
            self.db.len(),
            self.instrumented.record_call_count(),
            self.elapsed.as_secs_f64()
        )
    }
}

/// Instruments the project in memory.
pub fn instrument_project(manifest: &ProjectManifest) -> Result<InstrumentOutput, PipelineError> {
    let start = Instant::now();
    let project = manifest.project()?;
    let model = build_model(&project);
    let (instrumented, db) = instrument(&project, &model)?;
    Ok(InstrumentOutput {
        instrumented,
        db,
        elapsed: start.elapsed(),
    })
}

/// Instruments the project and writes the sources and the trace point
/// database to the output directory.
pub fn cmd_instrument(manifest: &ProjectManifest) -> Result<InstrumentOutput, PipelineError> {
    let out = instrument_project(manifest)?;
    let dir = manifest.instrumented_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let files = out.instrumented.sources();
    let mut list = String::new();
    for (path, text) in &files {
        write(&dir.join(path), text)?;
        list.push_str(path);
        list.push('\n');
    }
    write(&dir.join(FILE_LIST), &list)?;
    let db_path = manifest.tp_database_path();
    if let Some(parent) = db_path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    emit_tp_database(&out.db, &db_path)?;
    Ok(out)
}

/// Reads the instrumented sources written by [`cmd_instrument`] and checks
/// them against the database.
pub fn load_instrumented(
    manifest: &ProjectManifest,
) -> Result<(InstrumentedProject, TracePointDatabase), PipelineError> {
    let dir = manifest.instrumented_dir();
    let list = read(&dir.join(FILE_LIST))?;
    let sources = list
        .lines()
        .filter(|l| !l.is_empty())
        .map(|p| Ok(SourceFile::new(p, read(&dir.join(p))?)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let instrumented = InstrumentedProject::parse(&sources, manifest.tasks.clone())?;
    let fp = instrumented.fingerprint();
    let db = load_tp_database(&manifest.tp_database_path(), Some(&fp))?;
    Ok((instrumented, db))
}

/// How manual steps are answered during `run`.
pub enum Responses<'a> {
    Scripted,
    Interactive {
        input: &'a mut dyn BufRead,
        output: &'a mut dyn Write,
    },
}

pub struct RunOutput {
    pub run: SuiteRun,
    pub dir: PathBuf,
    /// Answers given interactively, empty for scripted runs.
    pub recorded: Vec<RecordedResponse>,
}

/// Executes a suite against the instrumented project and writes traces
/// and reports to `out_dir` (default `<output>/run`).
pub fn cmd_run(
    manifest: &ProjectManifest,
    suite_path: &Path,
    out_dir: Option<&Path>,
    responses: Responses<'_>,
) -> Result<RunOutput, PipelineError> {
    let (instrumented, db) = load_instrumented(manifest)?;
    let rt = Runtime::new(instrumented.base)?;
    let suite = testkit::load_suite(suite_path, &rt)?;
    let options = RunOptions {
        no_reinit: manifest.no_reinit,
    };
    let dir = out_dir.map_or_else(|| manifest.run_dir(), Path::to_path_buf);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let (run, recorded) = match responses {
        Responses::Scripted => (testkit::run_suite(&rt, &db, &suite, options, &mut ScriptedResponder)?, Vec::new()),
        Responses::Interactive { input, output } => {
            let mut r = InteractiveResponder::new(input, output);
            let run = testkit::run_suite(&rt, &db, &suite, options, &mut r)?;
            (run, r.recorded)
        }
    };
    run.write_to(&dir)?;
    if !recorded.is_empty() {
        write(&dir.join(RECORDED_SUITE), &suite.with_responses(&recorded).to_xml())?;
    }
    Ok(RunOutput { run, dir, recorded })
}

/// Loads a suite without checking variables; used to list test ids.
pub fn read_suite(path: &Path) -> Result<Suite, PipelineError> {
    Ok(Suite::from_xml(&read(path)?)?)
}

pub struct CoverOutput {
    pub report: CoverageReport,
    pub model: DependencyModel,
    pub project: SourceProject,
}

/// Combines the traces of one or more run directories into a coverage
/// report. Every run must come from the instrumentation recorded in the
/// database, and the database must match the project as it is now.
pub fn cmd_cover(
    manifest: &ProjectManifest,
    db_path: Option<&Path>,
    run_dirs: &[PathBuf],
) -> Result<CoverOutput, PipelineError> {
    let project = manifest.project()?;
    let model = build_model(&project);
    let (instrumented, _) = instrument(&project, &model)?;
    let expected = instrumented.fingerprint();
    let db_path = db_path.map_or_else(|| manifest.tp_database_path(), Path::to_path_buf);
    let db = load_tp_database(&db_path, None)?;
    if db.fingerprint != expected {
        return Err(PipelineError::Mismatch(format!(
            "{} was produced from different sources; run instrument again",
            db_path.display()
        )));
    }
    let mut traces = Vec::new();
    for dir in run_dirs {
        let report = read_run_report(dir)?;
        if report.fingerprint != db.fingerprint {
            return Err(PipelineError::Mismatch(format!(
                "traces in {} belong to a different instrumentation",
                dir.display()
            )));
        }
        for v in &report.tests {
            traces.push(testkit::read_trace_file(&dir.join(&v.trace_file), &db)?);
        }
    }
    let matrix = coverage::superimpose(&traces, &db)?;
    let report = coverage::rollup(&model, &matrix, &db)?;
    Ok(CoverOutput { report, model, project })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Dot,
    Html,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] = [ReportFormat::Text, ReportFormat::Json, ReportFormat::Dot, ReportFormat::Html];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Text => "coverage.txt",
            ReportFormat::Json => "coverage.json",
            ReportFormat::Dot => "coverage.dot",
            ReportFormat::Html => "coverage.html",
        }
    }

    pub fn render(self, out: &CoverOutput) -> String {
        match self {
            ReportFormat::Text => coverage::render_text(&out.report),
            ReportFormat::Json => out.report.to_json(),
            ReportFormat::Dot => coverage::render_dot(&out.report, &out.model),
            ReportFormat::Html => coverage::render_html(&out.report, &out.model, &out.project),
        }
    }
}

/// Writes the selected report formats into `dir`.
pub fn write_reports(out: &CoverOutput, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    for f in formats {
        let p = dir.join(f.file_name());
        write(&p, &f.render(out))?;
        written.push(p);
    }
    Ok(written)
}
