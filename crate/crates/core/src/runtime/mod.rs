//! Deterministic scan-cycle interpreter.
//!
//! Every call to [`Runtime::run_cycle`] is one base tick: the input image is
//! latched, each task due on this tick runs its entry program to completion
//! in priority order, the output image is published and a pending trace
//! save advances by one cycle.

mod exec;
pub mod value;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::frontend::ast::*;
use crate::frontend::resolve::{ton_members, TON};
pub use value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("{path}:{line}:{col}: {message}")]
    Fault {
        path: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("invalid task configuration: {0}")]
    Config(String),
    #[error("unknown process image variable '{0}'")]
    UnknownVariable(String),
    #[error("'{0}' is not an input")]
    NotAnInput(String),
    #[error("value '{value}' does not fit variable '{var}' of type {expected}")]
    BadValue {
        var: String,
        value: String,
        expected: String,
    },
    #[error("a trace save is still in progress")]
    SavePending,
    #[error("project has no tracing runtime")]
    NotInstrumented,
}

/// Task schedule derived from the task declarations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Tasks in execution order (priority, then declaration order).
    pub tasks: Vec<TaskDecl>,
    /// Greatest common divisor of all task cycle times.
    pub base_tick_ms: u32,
    /// Statement budget for a single task execution; exceeding it is a
    /// watchdog fault.
    pub max_statements: u64,
}

impl ScanConfig {
    pub fn from_tasks(tasks: &[TaskDecl]) -> Result<Self, RuntimeError> {
        if let Some(t) = tasks.iter().find(|t| t.cycle_ms == 0) {
            return Err(RuntimeError::Config(format!("task '{}' has cycle time 0", t.name)));
        }
        let base_tick_ms = tasks.iter().map(|t| t.cycle_ms).reduce(gcd).unwrap_or(1);
        let mut ordered = tasks.to_vec();
        ordered.sort_by_key(|t| t.priority);
        Ok(ScanConfig {
            tasks: ordered,
            base_tick_ms,
            max_statements: 1_000_000,
        })
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Number of cycles a save of `points` trace points takes.
pub fn save_duration(points: usize) -> u32 {
    (points.div_ceil(256) as u32).clamp(1, 10)
}

/// In-flight or completed trace save.
#[derive(Debug, Clone, PartialEq)]
pub struct SaveOp {
    pub filename: String,
    /// Copy of the trace array taken when the save was started.
    pub snapshot: Vec<bool>,
    pub elapsed: u32,
    pub duration: u32,
    pub done: bool,
}

/// Debug channel recording what the interpreter executed, independent of
/// any trace calls.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecLog {
    /// Locations of executed statements, trace calls excluded.
    pub statements: BTreeSet<SourceLoc>,
    /// `(POU, step)` pairs whose activation was processed.
    pub steps: BTreeSet<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
struct SfcState {
    active: usize,
    p1_pending: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Instance {
    /// Index into the project's POUs; `None` for a `TON`.
    pou: Option<usize>,
    vars: Vec<Value>,
    sfc: Option<SfcState>,
    ton_start: Option<i64>,
}

/// Complete controller state: variables, chart positions, trace array,
/// pending save and the controller's file store.
#[derive(Debug, Clone, PartialEq)]
pub struct PlcState {
    globals: Vec<Value>,
    instances: Vec<Instance>,
    programs: BTreeMap<String, usize>,
    pub input_image: BTreeMap<String, Value>,
    pub output_image: BTreeMap<String, Value>,
    pub tpa: Vec<bool>,
    pub save: Option<SaveOp>,
    /// Base ticks executed so far.
    pub cycle_counter: u64,
    /// Files written by trace saves, by name.
    pub files: BTreeMap<String, String>,
    pub log: Option<ExecLog>,
}

impl PlcState {
    pub fn now_ms(&self, config: &ScanConfig) -> i64 {
        self.cycle_counter as i64 * config.base_tick_ms as i64
    }

    /// Active step name of every chart instance, keyed by instance path.
    pub fn active_steps(&self, rt: &Runtime) -> Vec<(usize, String)> {
        self.instances
            .iter()
            .enumerate()
            .filter_map(|(i, inst)| {
                let sfc = inst.sfc.as_ref()?;
                let Body::Sfc(chart) = &rt.project.pous[inst.pou?].body else {
                    return None;
                };
                Some((i, chart.steps[sfc.active].name.clone()))
            })
            .collect()
    }

    pub fn save_done(&self) -> bool {
        self.save.as_ref().is_some_and(|s| s.done)
    }
}

/// Location of a process-image variable.
#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Global(usize),
    Program { program: String, index: usize },
}

#[derive(Debug, Clone)]
struct ImageVar {
    slot: Slot,
    data_type: DataType,
}

/// Interpreter for one project.
#[derive(Debug, Clone)]
pub struct Runtime {
    project: SourceProject,
    config: ScanConfig,
    var_index: Vec<HashMap<String, usize>>,
    global_index: HashMap<String, usize>,
    inputs: BTreeMap<String, ImageVar>,
    outputs: BTreeMap<String, ImageVar>,
    max_call_depth: u32,
}

impl Runtime {
    /// Builds an interpreter for a validated project, scheduled by the
    /// project's tasks.
    pub fn new(project: SourceProject) -> Result<Self, RuntimeError> {
        let config = ScanConfig::from_tasks(&project.tasks)?;
        Self::with_config(project, config)
    }

    pub fn with_config(project: SourceProject, config: ScanConfig) -> Result<Self, RuntimeError> {
        for t in &config.tasks {
            if !project
                .pou(&t.entry_pou)
                .is_some_and(|p| p.kind == PouKind::Program)
            {
                return Err(RuntimeError::Config(format!(
                    "task '{}' entry '{}' is not a program",
                    t.name, t.entry_pou
                )));
            }
            if t.cycle_ms % config.base_tick_ms != 0 {
                return Err(RuntimeError::Config(format!(
                    "task '{}' cycle {} ms is not a multiple of the base tick",
                    t.name, t.cycle_ms
                )));
            }
        }
        let var_index = project
            .pous
            .iter()
            .map(|p| {
                p.vars
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.name.clone(), i))
                    .collect()
            })
            .collect();
        let global_index = project
            .globals
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.clone(), i))
            .collect();
        let mut inputs = BTreeMap::new();
        let mut outputs = BTreeMap::new();
        let mut add = |name: String, v: &VarDecl, slot: Slot| {
            let entry = ImageVar {
                slot,
                data_type: v.data_type.clone(),
            };
            match v.storage {
                Storage::Input => {
                    inputs.insert(name, entry);
                }
                Storage::Output => {
                    outputs.insert(name, entry);
                }
                _ => {}
            }
        };
        for (i, g) in project.globals.iter().enumerate() {
            add(g.name.clone(), g, Slot::Global(i));
        }
        for p in project.pous.iter().filter(|p| p.kind == PouKind::Program) {
            for (i, v) in p.vars.iter().enumerate() {
                let slot = Slot::Program {
                    program: p.name.clone(),
                    index: i,
                };
                add(format!("{}.{}", p.name, v.name), v, slot);
            }
        }
        Ok(Runtime {
            project,
            config,
            var_index,
            global_index,
            inputs,
            outputs,
            max_call_depth: 64,
        })
    }

    pub fn project(&self) -> &SourceProject {
        &self.project
    }

    pub fn config(&self) -> &ScanConfig {
        &self.config
    }

    pub fn set_max_statements(&mut self, n: u64) {
        self.config.max_statements = n;
    }

    /// Names of process-image inputs: globals by name, program variables as
    /// `Program.var`.
    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    pub fn output_names(&self) -> impl Iterator<Item = &str> {
        self.outputs.keys().map(String::as_str)
    }

    pub fn input_type(&self, name: &str) -> Option<&DataType> {
        self.inputs.get(name).map(|v| &v.data_type)
    }

    pub fn output_type(&self, name: &str) -> Option<&DataType> {
        self.outputs.get(name).map(|v| &v.data_type)
    }

    pub fn trace_points(&self) -> usize {
        self.project
            .trace_runtime
            .as_ref()
            .map_or(0, |t| (t.max_tp + 1) as usize)
    }

    /// Fresh state: declared initial values or type defaults, every chart in
    /// its initial step with the activation pending, trace array all false.
    pub fn init_state(&self) -> PlcState {
        let mut st = PlcState {
            globals: self
                .project
                .globals
                .iter()
                .map(|g| initial_value(g))
                .collect(),
            instances: Vec::new(),
            programs: BTreeMap::new(),
            input_image: BTreeMap::new(),
            output_image: BTreeMap::new(),
            tpa: vec![false; self.trace_points()],
            save: None,
            cycle_counter: 0,
            files: BTreeMap::new(),
            log: None,
        };
        // Globals may hold function block instances too.
        for (i, g) in self.project.globals.iter().enumerate() {
            if let DataType::Fb(name) = &g.data_type {
                let id = self.allocate(&mut st, name);
                st.globals[i] = Value::Instance(id);
            }
        }
        for (idx, p) in self.project.pous.iter().enumerate() {
            if p.kind == PouKind::Program {
                let id = self.allocate_pou(&mut st, idx);
                st.programs.insert(p.name.clone(), id);
            }
        }
        for (name, v) in &self.inputs {
            let value = self.read_slot(&st, &v.slot);
            st.input_image.insert(name.clone(), value);
        }
        self.publish_outputs(&mut st);
        st
    }

    fn allocate(&self, st: &mut PlcState, type_name: &str) -> usize {
        if type_name == TON {
            st.instances.push(Instance {
                pou: None,
                vars: ton_members()
                    .iter()
                    .map(|(_, t, _)| Value::default_for(t))
                    .collect(),
                sfc: None,
                ton_start: None,
            });
            return st.instances.len() - 1;
        }
        let idx = self
            .project
            .pou_index(type_name)
            .expect("validated function block type");
        self.allocate_pou(st, idx)
    }

    fn allocate_pou(&self, st: &mut PlcState, idx: usize) -> usize {
        let pou = &self.project.pous[idx];
        let id = st.instances.len();
        st.instances.push(Instance {
            pou: Some(idx),
            vars: Vec::new(),
            sfc: match &pou.body {
                Body::Sfc(chart) => Some(SfcState {
                    active: chart.initial_step().expect("validated chart"),
                    p1_pending: true,
                }),
                Body::St(_) => None,
            },
            ton_start: None,
        });
        let mut vars = Vec::with_capacity(pou.vars.len());
        for v in &pou.vars {
            match &v.data_type {
                DataType::Fb(name) => vars.push(Value::Instance(self.allocate(st, name))),
                _ => vars.push(initial_value(v)),
            }
        }
        st.instances[id].vars = vars;
        id
    }

    fn read_slot(&self, st: &PlcState, slot: &Slot) -> Value {
        match slot {
            Slot::Global(i) => st.globals[*i].clone(),
            Slot::Program { program, index } => st.instances[st.programs[program]].vars[*index].clone(),
        }
    }

    fn write_slot(&self, st: &mut PlcState, slot: &Slot, v: Value) {
        match slot {
            Slot::Global(i) => st.globals[*i] = v,
            Slot::Program { program, index } => {
                let id = st.programs[program];
                st.instances[id].vars[*index] = v;
            }
        }
    }

    fn publish_outputs(&self, st: &mut PlcState) {
        st.output_image = self
            .outputs
            .iter()
            .map(|(name, v)| (name.clone(), self.read_slot(st, &v.slot)))
            .collect();
    }

    /// Reads a global (`name`) or program variable (`Program.var`).
    pub fn read_var(&self, st: &PlcState, name: &str) -> Option<Value> {
        if let Some(&i) = self.global_index.get(name) {
            return Some(st.globals[i].clone());
        }
        let (prog, var) = name.split_once('.')?;
        let pidx = self.project.pou_index(prog)?;
        let id = *st.programs.get(prog)?;
        let vidx = *self.var_index[pidx].get(var)?;
        Some(st.instances[id].vars[vidx].clone())
    }

    /// Updates the input image. Values persist until changed.
    pub fn set_input(&self, st: &mut PlcState, name: &str, v: Value) -> Result<(), RuntimeError> {
        let Some(iv) = self.inputs.get(name) else {
            return Err(if self.outputs.contains_key(name) || self.read_var(st, name).is_some() {
                RuntimeError::NotAnInput(name.to_string())
            } else {
                RuntimeError::UnknownVariable(name.to_string())
            });
        };
        let converted = value::convert_for_store(v.clone(), &iv.data_type).map_err(|_| {
            RuntimeError::BadValue {
                var: name.to_string(),
                value: v.to_string(),
                expected: iv.data_type.keyword().to_string(),
            }
        })?;
        st.input_image.insert(name.to_string(), converted);
        Ok(())
    }

    /// Executes one base tick with the given input updates and returns the
    /// published output image.
    ///
    /// A fault aborts the remaining tasks of this tick; outputs are still
    /// published and a pending save still advances.
    pub fn run_cycle(
        &self,
        st: &mut PlcState,
        inputs: &BTreeMap<String, Value>,
    ) -> Result<BTreeMap<String, Value>, RuntimeError> {
        for (name, v) in inputs {
            self.set_input(st, name, v.clone())?;
        }
        for (name, iv) in &self.inputs {
            let v = st.input_image[name].clone();
            self.write_slot(st, &iv.slot, v);
        }
        let now = st.now_ms(&self.config);
        let mut result = Ok(());
        for task in &self.config.tasks {
            if now % task.cycle_ms as i64 != 0 {
                continue;
            }
            let id = st.programs[&task.entry_pou];
            let pidx = self.project.pou_index(&task.entry_pou).expect("checked");
            let mut ex = exec::Exec::new(self, st);
            if let Err(e) = ex.run_pou(pidx, id) {
                result = Err(e);
                break;
            }
        }
        self.publish_outputs(st);
        advance_save(st);
        st.cycle_counter += 1;
        result.map(|_| st.output_image.clone())
    }

    /// Clears the trace array. Rejected while a save is in progress.
    pub fn tp_reset(&self, st: &mut PlcState) -> Result<(), RuntimeError> {
        if st.save.as_ref().is_some_and(|s| !s.done) {
            return Err(RuntimeError::SavePending);
        }
        st.tpa.iter_mut().for_each(|b| *b = false);
        Ok(())
    }

    /// Starts saving the trace array to `filename` in the controller's file
    /// store. The array is copied now; the file appears after
    /// [`save_duration`] further cycles.
    pub fn tp_save(&self, st: &mut PlcState, filename: &str) -> Result<(), RuntimeError> {
        if self.project.trace_runtime.is_none() {
            return Err(RuntimeError::NotInstrumented);
        }
        if st.save.as_ref().is_some_and(|s| !s.done) {
            return Err(RuntimeError::SavePending);
        }
        st.save = Some(SaveOp {
            filename: filename.to_string(),
            snapshot: st.tpa.clone(),
            elapsed: 0,
            duration: save_duration(st.tpa.len()),
            done: false,
        });
        Ok(())
    }
}

fn initial_value(v: &VarDecl) -> Value {
    match (&v.init, &v.data_type) {
        (Some(l), t) => value::convert_for_store(Value::from_literal(l), t)
            .expect("initializer type checked by the front end"),
        (None, DataType::Fb(_)) => Value::Instance(usize::MAX),
        (None, t) => Value::default_for(t),
    }
}

fn advance_save(st: &mut PlcState) {
    if let Some(save) = st.save.as_mut().filter(|s| !s.done) {
        save.elapsed += 1;
        if save.elapsed >= save.duration {
            save.done = true;
            st.files
                .insert(save.filename.clone(), format_trace(&save.snapshot));
        }
    }
}

/// Serializes a trace array as `0:true, 1:false, ...`.
pub fn format_trace(tpa: &[bool]) -> String {
    format_trace_pairs(tpa.iter().enumerate().map(|(i, &b)| (i as u32, b)))
}

/// Serializes `(id, visited)` pairs in the given order.
pub fn format_trace_pairs(pairs: impl IntoIterator<Item = (u32, bool)>) -> String {
    let mut out = String::new();
    for (i, (id, b)) in pairs.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&id.to_string());
        out.push_str(if b { ":true" } else { ":false" });
    }
    out
}
