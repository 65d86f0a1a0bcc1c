//! Test suites, the semi-automatic test harness and per-test traces.
//!
//! A test is a list of steps driven against the interpreter. Manual steps
//! stand in for a human at the machine: they may change inputs and then
//! confirm or reject what they observe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runtime::{PlcState, Runtime, RuntimeError, Value};
use crate::tracedb::TracePointDatabase;
use crate::xmltree::{self, Element};

#[derive(Debug, Error)]
pub enum TestkitError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed suite: {0}")]
    Schema(String),
    #[error("test '{test}': {message}")]
    Variable { test: String, message: String },
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TestkitError + '_ {
    move |source| TestkitError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManualResponse {
    Ok,
    Fail,
}

impl ManualResponse {
    pub fn as_str(self) -> &'static str {
        match self {
            ManualResponse::Ok => "ok",
            ManualResponse::Fail => "fail",
        }
    }
}

/// Variable assignments as written in the suite, in file order.
pub type Assignments = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq)]
pub enum TestStep {
    SetInputs(Assignments),
    WaitCycles(u32),
    ExpectOutputs(Assignments),
    Manual {
        prompt: String,
        response: ManualResponse,
        set: Assignments,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub id: String,
    pub name: String,
    pub steps: Vec<TestStep>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Suite {
    pub tests: Vec<TestCase>,
}

fn schema(msg: impl Into<String>) -> TestkitError {
    TestkitError::Schema(msg.into())
}

fn assignment(e: &Element, what: &str) -> Result<(String, String), TestkitError> {
    let var = e
        .attr("var")
        .ok_or_else(|| schema(format!("<{what}> lacks attribute 'var'")))?;
    let value = e
        .attr("value")
        .ok_or_else(|| schema(format!("<{what}> lacks attribute 'value'")))?;
    Ok((var.to_string(), value.to_string()))
}

/// Merges consecutive `<set>` or `<expect>` elements into one step.
fn push_assignment(steps: &mut Vec<TestStep>, e: &Element) -> Result<(), TestkitError> {
    let pair = assignment(e, &e.name)?;
    match (e.name.as_str(), steps.last_mut()) {
        ("set", Some(TestStep::SetInputs(v))) | ("expect", Some(TestStep::ExpectOutputs(v))) => {
            v.push(pair)
        }
        ("set", _) => steps.push(TestStep::SetInputs(vec![pair])),
        _ => steps.push(TestStep::ExpectOutputs(vec![pair])),
    }
    Ok(())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.')
}

impl Suite {
    /// Parses suite XML and checks its structure (not variable names).
    pub fn from_xml(text: &str) -> Result<Suite, TestkitError> {
        let root = xmltree::parse(text).map_err(TestkitError::Schema)?;
        if root.name != "suite" {
            return Err(schema(format!("root element is <{}>, expected <suite>", root.name)));
        }
        let mut tests = Vec::new();
        let mut ids = BTreeSet::new();
        for t in &root.children {
            if t.name != "test" {
                return Err(schema(format!("unexpected <{}> in <suite>", t.name)));
            }
            let id = t.attr("id").ok_or_else(|| schema("<test> lacks attribute 'id'"))?;
            if !valid_id(id) {
                return Err(schema(format!("test id '{id}' must be a plain file name")));
            }
            if !ids.insert(id.to_string()) {
                return Err(schema(format!("duplicate test id '{id}'")));
            }
            let name = t.attr("name").unwrap_or(id).to_string();
            let mut steps = Vec::new();
            for s in &t.children {
                match s.name.as_str() {
                    "set" | "expect" => push_assignment(&mut steps, s)?,
                    "wait" => {
                        let cycles = s
                            .attr("cycles")
                            .and_then(|c| c.parse().ok())
                            .ok_or_else(|| schema("<wait> needs a non-negative 'cycles'"))?;
                        steps.push(TestStep::WaitCycles(cycles));
                    }
                    "manual" => {
                        let prompt = s.attr("prompt").unwrap_or("").to_string();
                        let response = match s.attr("response") {
                            Some("ok") | None => ManualResponse::Ok,
                            Some("fail") => ManualResponse::Fail,
                            Some(other) => {
                                return Err(schema(format!("manual response '{other}' is not ok|fail")))
                            }
                        };
                        let mut set = Vec::new();
                        for c in &s.children {
                            if c.name != "set" {
                                return Err(schema(format!("unexpected <{}> in <manual>", c.name)));
                            }
                            set.push(assignment(c, "set")?);
                        }
                        steps.push(TestStep::Manual {
                            prompt,
                            response,
                            set,
                        });
                    }
                    other => return Err(schema(format!("unexpected <{other}> in <test>"))),
                }
            }
            if steps.is_empty() {
                return Err(schema(format!("test '{id}' has no steps")));
            }
            tests.push(TestCase {
                id: id.to_string(),
                name,
                steps,
            });
        }
        Ok(Suite { tests })
    }

    pub fn to_xml(&self) -> String {
        let mut out = String::from("<suite>\n");
        let pair = |out: &mut String, indent: &str, tag: &str, (var, value): &(String, String)| {
            let _ = writeln!(
                out,
                "{indent}<{tag} var=\"{}\" value=\"{}\"/>",
                xmltree::escape(var),
                xmltree::escape(value)
            );
        };
        for t in &self.tests {
            let _ = writeln!(
                out,
                "  <test id=\"{}\" name=\"{}\">",
                xmltree::escape(&t.id),
                xmltree::escape(&t.name)
            );
            for s in &t.steps {
                match s {
                    TestStep::SetInputs(v) => v.iter().for_each(|p| pair(&mut out, "    ", "set", p)),
                    TestStep::ExpectOutputs(v) => {
                        v.iter().for_each(|p| pair(&mut out, "    ", "expect", p))
                    }
                    TestStep::WaitCycles(n) => {
                        let _ = writeln!(out, "    <wait cycles=\"{n}\"/>");
                    }
                    TestStep::Manual {
                        prompt,
                        response,
                        set,
                    } => {
                        let head = format!(
                            "    <manual prompt=\"{}\" response=\"{}\"",
                            xmltree::escape(prompt),
                            response.as_str()
                        );
                        if set.is_empty() {
                            let _ = writeln!(out, "{head}/>");
                        } else {
                            let _ = writeln!(out, "{head}>");
                            set.iter().for_each(|p| pair(&mut out, "      ", "set", p));
                            out.push_str("    </manual>\n");
                        }
                    }
                }
            }
            out.push_str("  </test>\n");
        }
        out.push_str("</suite>\n");
        out
    }

    /// Checks that every `set` names an input and every `expect` an output,
    /// with values of the right type.
    pub fn validate(&self, rt: &Runtime) -> Result<(), TestkitError> {
        for t in &self.tests {
            let err = |message: String| TestkitError::Variable {
                test: t.id.clone(),
                message,
            };
            let check = |pairs: &Assignments, input: bool| -> Result<(), TestkitError> {
                for (var, value) in pairs {
                    let ty = if input {
                        rt.input_type(var)
                    } else {
                        rt.output_type(var)
                    };
                    let Some(ty) = ty else {
                        let kind = if input { "an input" } else { "an output" };
                        return Err(err(format!("'{var}' is not {kind}")));
                    };
                    if Value::parse_as(value, ty).is_none() {
                        return Err(err(format!(
                            "value '{value}' for '{var}' is not a valid {}",
                            ty.keyword()
                        )));
                    }
                }
                Ok(())
            };
            for s in &t.steps {
                match s {
                    TestStep::SetInputs(v) | TestStep::Manual { set: v, .. } => check(v, true)?,
                    TestStep::ExpectOutputs(v) => check(v, false)?,
                    TestStep::WaitCycles(_) => {}
                }
            }
        }
        Ok(())
    }

    /// Copy of the suite with manual responses replaced by recorded ones.
    pub fn with_responses(&self, recorded: &[RecordedResponse]) -> Suite {
        let mut s = self.clone();
        for r in recorded {
            if let Some(TestStep::Manual { response, .. }) = s
                .tests
                .iter_mut()
                .find(|t| t.id == r.test_id)
                .and_then(|t| t.steps.get_mut(r.step))
            {
                *response = r.response;
            }
        }
        s
    }
}

/// Reads and validates a suite against the interpreter's process image.
pub fn load_suite(path: &Path, rt: &Runtime) -> Result<Suite, TestkitError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let suite = Suite::from_xml(&text)?;
    suite.validate(rt)?;
    Ok(suite)
}

/// Source of answers for manual steps.
pub trait ManualResponder {
    fn respond(&mut self, test: &TestCase, step: usize, prompt: &str, scripted: ManualResponse)
        -> ManualResponse;
}

/// Replays the responses written in the suite.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptedResponder;

impl ManualResponder for ScriptedResponder {
    fn respond(&mut self, _: &TestCase, _: usize, _: &str, scripted: ManualResponse) -> ManualResponse {
        scripted
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedResponse {
    pub test_id: String,
    pub step: usize,
    pub response: ManualResponse,
}

/// Asks on a terminal and records every answer so the session can be
/// replayed with [`Suite::with_responses`].
pub struct InteractiveResponder<R, W> {
    input: R,
    output: W,
    pub recorded: Vec<RecordedResponse>,
}

impl<R: BufRead, W: Write> InteractiveResponder<R, W> {
    pub fn new(input: R, output: W) -> Self {
        InteractiveResponder {
            input,
            output,
            recorded: Vec::new(),
        }
    }
}

impl<R: BufRead, W: Write> ManualResponder for InteractiveResponder<R, W> {
    fn respond(&mut self, test: &TestCase, step: usize, prompt: &str, scripted: ManualResponse) -> ManualResponse {
        let response = loop {
            let _ = write!(
                self.output,
                "[{}] {prompt} (ok/fail, empty = {}): ",
                test.id,
                scripted.as_str()
            );
            let _ = self.output.flush();
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => break scripted,
                Ok(_) => {}
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "" => break scripted,
                "ok" | "y" | "yes" => break ManualResponse::Ok,
                "fail" | "n" | "no" => break ManualResponse::Fail,
                _ => continue,
            }
        };
        self.recorded.push(RecordedResponse {
            test_id: test.id.clone(),
            step,
            response,
        });
        response
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Outcome {
    Passed,
    Failed {
        step: usize,
        expected: String,
        actual: String,
    },
    Error {
        step: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub test_id: String,
    pub name: String,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub trace_file: String,
}

/// Visit flags of one test, keyed by trace-point id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub test_id: String,
    pub visits: BTreeMap<u32, bool>,
}

impl ExecutionTrace {
    pub fn visited(&self) -> impl Iterator<Item = u32> + '_ {
        self.visits.iter().filter(|(_, v)| **v).map(|(k, _)| *k)
    }

    pub fn to_line(&self) -> String {
        crate::runtime::format_trace_pairs(self.visits.iter().map(|(k, v)| (*k, *v)))
    }
}

/// Parses a trace record against the database's id set.
pub fn parse_trace(test_id: &str, text: &str, db: &TracePointDatabase) -> Result<ExecutionTrace, TestkitError> {
    let bad = |m: String| TestkitError::Trace(format!("{test_id}: {m}"));
    let mut visits = BTreeMap::new();
    let body = text.trim();
    if !body.is_empty() {
        for pair in body.split(',') {
            let pair = pair.trim();
            let (id, flag) = pair
                .split_once(':')
                .ok_or_else(|| bad(format!("malformed pair '{pair}'")))?;
            let id: u32 = id
                .parse()
                .map_err(|_| bad(format!("malformed id in '{pair}'")))?;
            let flag = match flag {
                "true" => true,
                "false" => false,
                _ => return Err(bad(format!("malformed flag in '{pair}'"))),
            };
            if db.point(id).is_none() {
                return Err(bad(format!("unknown trace point {id}")));
            }
            if visits.insert(id, flag).is_some() {
                return Err(bad(format!("trace point {id} appears twice")));
            }
        }
    }
    if let Some(missing) = db.ids().find(|id| !visits.contains_key(id)) {
        return Err(bad(format!("trace point {missing} missing")));
    }
    Ok(ExecutionTrace {
        test_id: test_id.to_string(),
        visits,
    })
}

/// Reads `<dir>/<test_id>.trace`-style files; the test id is the file stem.
pub fn read_trace_file(path: &Path, db: &TracePointDatabase) -> Result<ExecutionTrace, TestkitError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_trace(&id, &text, db)
}

/// All `.trace` files of a run directory, sorted by file name.
pub fn read_trace_dir(dir: &Path, db: &TracePointDatabase) -> Result<Vec<ExecutionTrace>, TestkitError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_trace_file(p, db)).collect()
}

pub fn trace_file_name(test_id: &str) -> String {
    format!("{test_id}.trace")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Keep controller state from one test to the next instead of starting
    /// each test from a fresh initialization. Only the trace array is reset.
    pub no_reinit: bool,
}

/// Harness owning one interpreter state for the duration of a suite.
pub struct Harness<'a> {
    rt: &'a Runtime,
    db: &'a TracePointDatabase,
    options: RunOptions,
    state: PlcState,
}

impl<'a> Harness<'a> {
    pub fn new(rt: &'a Runtime, db: &'a TracePointDatabase, options: RunOptions) -> Result<Self, TestkitError> {
        if rt.trace_points() != db.len() {
            return Err(TestkitError::Trace(format!(
                "database has {} points, project has {}",
                db.len(),
                rt.trace_points()
            )));
        }
        Ok(Harness {
            rt,
            db,
            options,
            state: rt.init_state(),
        })
    }

    pub fn state(&self) -> &PlcState {
        &self.state
    }

    fn apply(&mut self, pairs: &Assignments) -> Result<(), RuntimeError> {
        for (var, text) in pairs {
            let ty = self
                .rt
                .input_type(var)
                .ok_or_else(|| RuntimeError::NotAnInput(var.clone()))?;
            let v = Value::parse_as(text, ty).ok_or_else(|| RuntimeError::BadValue {
                var: var.clone(),
                value: text.clone(),
                expected: ty.keyword().to_string(),
            })?;
            self.rt.set_input(&mut self.state, var, v)?;
        }
        Ok(())
    }

    fn check(&self, pairs: &Assignments) -> Result<Option<(String, String)>, RuntimeError> {
        for (var, text) in pairs {
            let ty = self
                .rt
                .output_type(var)
                .ok_or_else(|| RuntimeError::UnknownVariable(var.clone()))?;
            let expected = Value::parse_as(text, ty).ok_or_else(|| RuntimeError::BadValue {
                var: var.clone(),
                value: text.clone(),
                expected: ty.keyword().to_string(),
            })?;
            let actual = self.state.output_image[var].clone();
            if actual != expected {
                return Ok(Some((format!("{var} = {expected}"), format!("{var} = {actual}"))));
            }
        }
        Ok(None)
    }

    fn execute_steps(&mut self, test: &TestCase, responder: &mut dyn ManualResponder) -> Outcome {
        let none = BTreeMap::new();
        for (i, step) in test.steps.iter().enumerate() {
            let error = |e: RuntimeError| Outcome::Error {
                step: i,
                message: e.to_string(),
            };
            match step {
                TestStep::SetInputs(pairs) => {
                    if let Err(e) = self.apply(pairs) {
                        return error(e);
                    }
                }
                TestStep::WaitCycles(n) => {
                    for _ in 0..*n {
                        if let Err(e) = self.rt.run_cycle(&mut self.state, &none) {
                            return error(e);
                        }
                    }
                }
                TestStep::ExpectOutputs(pairs) => match self.check(pairs) {
                    Ok(None) => {}
                    Ok(Some((expected, actual))) => {
                        return Outcome::Failed {
                            step: i,
                            expected,
                            actual,
                        }
                    }
                    Err(e) => return error(e),
                },
                TestStep::Manual {
                    prompt,
                    response,
                    set,
                } => {
                    if let Err(e) = self.apply(set) {
                        return error(e);
                    }
                    if responder.respond(test, i, prompt, *response) == ManualResponse::Fail {
                        return Outcome::Failed {
                            step: i,
                            expected: format!("tester confirms: {prompt}"),
                            actual: "tester reported a failure".into(),
                        };
                    }
                }
            }
        }
        Outcome::Passed
    }

    /// Runs one test: reset the trace array, execute the steps, start the
    /// save and keep cycling until it completes. The trace is saved whether
    /// the test passed, failed or faulted.
    ///
    /// Returns the verdict, the parsed trace and the raw trace file body.
    pub fn run_test_case(
        &mut self,
        test: &TestCase,
        responder: &mut dyn ManualResponder,
    ) -> Result<(TestVerdict, ExecutionTrace, String), TestkitError> {
        if !self.options.no_reinit {
            self.state = self.rt.init_state();
        }
        self.rt.tp_reset(&mut self.state)?;
        let outcome = self.execute_steps(test, responder);
        let file = trace_file_name(&test.id);
        self.rt.tp_save(&mut self.state, &file)?;
        let none = BTreeMap::new();
        while !self.state.save_done() {
            // Faults while waiting do not stop the save.
            let _ = self.rt.run_cycle(&mut self.state, &none);
        }
        let body = self
            .state
            .files
            .remove(&file)
            .expect("completed save wrote its file");
        let trace = parse_trace(&test.id, &body, self.db)?;
        let verdict = TestVerdict {
            test_id: test.id.clone(),
            name: test.name.clone(),
            outcome,
            trace_file: file,
        };
        Ok((verdict, trace, body))
    }
}

/// Verdicts and traces of a suite run, plus the raw trace files.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    /// Fingerprint of the instrumented project the traces belong to.
    pub fingerprint: String,
    pub verdicts: Vec<TestVerdict>,
    pub traces: Vec<ExecutionTrace>,
    pub files: BTreeMap<String, String>,
}

impl SuiteRun {
    pub fn failed(&self) -> usize {
        self.verdicts
            .iter()
            .filter(|v| v.outcome != Outcome::Passed)
            .count()
    }

    pub fn report_text(&self) -> String {
        let mut out = String::new();
        let passed = self.verdicts.len() - self.failed();
        let _ = writeln!(out, "{} tests, {passed} passed, {} failed", self.verdicts.len(), self.failed());
        for v in &self.verdicts {
            match &v.outcome {
                Outcome::Passed => {
                    let _ = writeln!(out, "PASS  {}  {}", v.test_id, v.name);
                }
                Outcome::Failed {
                    step,
                    expected,
                    actual,
                } => {
                    let _ = writeln!(
                        out,
                        "FAIL  {}  {}  (step {step}: expected {expected}, got {actual})",
                        v.test_id, v.name
                    );
                }
                Outcome::Error { step, message } => {
                    let _ = writeln!(out, "ERROR {}  {}  (step {step}: {message})", v.test_id, v.name);
                }
            }
        }
        out
    }

    pub fn report_json(&self) -> String {
        let report = RunReport {
            fingerprint: self.fingerprint.clone(),
            tests: self.verdicts.clone(),
        };
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    }

    /// Writes `<id>.trace` files plus `report.txt` and `report.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), TestkitError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let write = |name: &str, body: &str| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(io_err(&p))
        };
        for (name, body) in &self.files {
            write(name, body)?;
        }
        write("report.txt", &self.report_text())?;
        write(REPORT_JSON, &self.report_json())
    }
}

/// Machine-readable test report, `report.json` in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub fingerprint: String,
    pub tests: Vec<TestVerdict>,
}

pub const REPORT_JSON: &str = "report.json";

/// Reads `report.json` of a run directory.
pub fn read_run_report(dir: &Path) -> Result<RunReport, TestkitError> {
    let path = dir.join(REPORT_JSON);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| TestkitError::Schema(format!("{}: {e}", path.display())))
}

/// Runs every test in order; a test starts only after the previous save
/// completed.
pub fn run_suite(
    rt: &Runtime,
    db: &TracePointDatabase,
    suite: &Suite,
    options: RunOptions,
    responder: &mut dyn ManualResponder,
) -> Result<SuiteRun, TestkitError> {
    suite.validate(rt)?;
    let mut harness = Harness::new(rt, db, options)?;
    let mut run = SuiteRun {
        fingerprint: db.fingerprint.clone(),
        verdicts: Vec::new(),
        traces: Vec::new(),
        files: BTreeMap::new(),
    };
    for t in &suite.tests {
        let (verdict, trace, body) = harness.run_test_case(t, responder)?;
        run.files.insert(verdict.trace_file.clone(), body);
        run.verdicts.push(verdict);
        run.traces.push(trace);
    }
    Ok(run)
}
