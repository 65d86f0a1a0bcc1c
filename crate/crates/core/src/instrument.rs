//! Source-to-source instrumentation: one trace record call at the start of
//! every basic block, a generated activation action per SFC step, and the
//! tracing runtime declarations.

use std::collections::{HashMap, HashSet};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::depmodel::{basic_blocks, DependencyModel, NodeKind};
use crate::frontend::ast::*;
use crate::frontend::{parse_project, pretty_print, FrontendError};
use crate::tracedb::{PointKind, TraceNames, TracePoint, TracePointDatabase};

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("project is already instrumented")]
    AlreadyInstrumented,
    #[error("project is not instrumented (no TRACE_RUNTIME declaration)")]
    NotInstrumented,
    #[error("dependency model does not match the project: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

/// Default name of the generated file holding the tracing runtime block.
pub const TRACING_FILE: &str = "tracing.st";
const STEP_ACTION_PREFIX: &str = "tps_";

/// A project carrying trace calls and the tracing runtime declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentedProject {
    pub base: SourceProject,
}

impl InstrumentedProject {
    /// Wraps a parsed project that must contain a tracing runtime block.
    pub fn from_project(base: SourceProject) -> Result<Self, InstrumentError> {
        if base.trace_runtime.is_none() {
            return Err(InstrumentError::NotInstrumented);
        }
        Ok(InstrumentedProject { base })
    }

    pub fn parse(sources: &[SourceFile], tasks: Vec<TaskDecl>) -> Result<Self, InstrumentError> {
        Self::from_project(parse_project(sources, tasks)?)
    }

    pub fn trace_decls(&self) -> &TraceRuntimeDecl {
        self.base
            .trace_runtime
            .as_ref()
            .expect("instrumented project has a tracing runtime")
    }

    pub fn sources(&self) -> Vec<(String, String)> {
        pretty_print(&self.base)
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.sources())
    }

    /// Removes every generated element, giving back the original tree.
    pub fn erase(&self) -> SourceProject {
        let tr = self.trace_decls().clone();
        let mut p = self.base.clone();
        p.trace_runtime = None;
        if tr.file as usize == p.files.len() - 1 {
            p.files.pop();
        }
        for pou in &mut p.pous {
            let generated: HashSet<String> = pou
                .actions
                .iter()
                .filter(|a| is_generated_action(a, &tr))
                .map(|a| a.name.clone())
                .collect();
            pou.actions.retain(|a| !generated.contains(&a.name));
            for a in &mut pou.actions {
                strip_trace_calls(&mut a.body, &tr);
            }
            match &mut pou.body {
                Body::St(stmts) => strip_trace_calls(stmts, &tr),
                Body::Sfc(chart) => {
                    for step in &mut chart.steps {
                        step.actions.retain(|r| !generated.contains(&r.action));
                    }
                }
            }
        }
        p
    }

    /// Number of trace record calls present in the source.
    pub fn record_call_count(&self) -> usize {
        let tr = self.trace_decls();
        let mut n = 0;
        let mut count = |stmts: &[Stmt]| {
            crate::frontend::resolve::for_each_stmt(stmts, &mut |s| {
                if matches!(&s.kind, StmtKind::Call(c) if c.target == tr.record) {
                    n += 1;
                }
            })
        };
        for pou in &self.base.pous {
            if let Body::St(stmts) = &pou.body {
                count(stmts);
            }
            for a in &pou.actions {
                count(&a.body);
            }
        }
        n
    }
}

fn is_generated_action(a: &ActionDecl, tr: &TraceRuntimeDecl) -> bool {
    a.name.starts_with(&tr.step_action_prefix)
        && !a.body.is_empty()
        && a
            .body
            .iter()
            .all(|s| matches!(&s.kind, StmtKind::Call(c) if c.target == tr.record))
}

fn strip_trace_calls(stmts: &mut Vec<Stmt>, tr: &TraceRuntimeDecl) {
    stmts.retain(|s| !matches!(&s.kind, StmtKind::Call(c) if tr.is_trace_call(&c.target)));
    for s in stmts.iter_mut() {
        for body in s.child_bodies_mut() {
            strip_trace_calls(body, tr);
        }
    }
}

/// SHA-256 over `path NUL text NUL` of every file, hex encoded.
pub fn fingerprint(files: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    for (path, text) in files {
        h.update(path.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn collect_identifiers(project: &SourceProject) -> HashSet<String> {
    let mut ids = HashSet::new();
    let mut add = |s: &str| {
        ids.insert(s.to_ascii_lowercase());
    };
    for g in &project.globals {
        add(&g.name);
    }
    for pou in &project.pous {
        add(&pou.name);
        for v in &pou.vars {
            add(&v.name);
        }
        for a in &pou.actions {
            add(&a.name);
        }
        if let Body::Sfc(chart) = &pou.body {
            for s in &chart.steps {
                add(&s.name);
            }
        }
    }
    for t in &project.tasks {
        add(&t.name);
    }
    ids
}

fn free_name(base: &str, taken: &HashSet<String>, conflicts: impl Fn(&str) -> bool) -> String {
    let candidate = |n: &str| !taken.contains(&n.to_ascii_lowercase()) && !conflicts(n);
    if candidate(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| candidate(n))
        .expect("unbounded search")
}

fn record_call(name: &str, id: u32, loc: SourceLoc) -> Stmt {
    Stmt::new(
        StmtKind::Call(Call {
            target: name.to_string(),
            args: vec![Arg {
                name: Some("i".into()),
                value: Expr::Lit(Literal::Int(id as i64)),
            }],
        }),
        loc,
    )
}

/// Prepends record calls to every statement that starts a block of `owner`.
fn insert_calls(
    stmts: &mut Vec<Stmt>,
    owner: &str,
    starts: &HashMap<(String, SourceLoc), u32>,
    record: &str,
    inserted: &mut usize,
) {
    let old = std::mem::take(stmts);
    for mut s in old {
        for body in s.child_bodies_mut() {
            insert_calls(body, owner, starts, record, inserted);
        }
        if let Some(&id) = starts.get(&(owner.to_string(), s.loc)) {
            stmts.push(record_call(record, id, s.loc));
            *inserted += 1;
        }
        stmts.push(s);
    }
}

/// Instruments every basic block and SFC step of `model`.
///
/// Block trace-point ids equal the blocks' sequential ids; step points
/// follow after the last block, in model order.
pub fn instrument(
    project: &SourceProject,
    model: &DependencyModel,
) -> Result<(InstrumentedProject, TracePointDatabase), InstrumentError> {
    if project.trace_runtime.is_some() {
        return Err(InstrumentError::AlreadyInstrumented);
    }
    let taken = collect_identifiers(project);
    let defaults = TraceNames::default();
    let names = TraceNames {
        array: free_name(&defaults.array, &taken, |_| false),
        record: free_name(&defaults.record, &taken, |_| false),
        reset: free_name(&defaults.reset, &taken, |_| false),
        save: free_name(&defaults.save, &taken, |_| false),
    };
    let prefix = free_name(STEP_ACTION_PREFIX.trim_end_matches('_'), &HashSet::new(), |n| {
        let p = format!("{n}_").to_ascii_lowercase();
        taken.iter().any(|t| t.starts_with(&p))
    }) + "_";

    let blocks = basic_blocks(model);
    let mut starts: HashMap<(String, SourceLoc), u32> = HashMap::new();
    let mut points = Vec::new();
    for b in &blocks {
        let (loc, _) = b
            .stmt_span()
            .ok_or_else(|| InstrumentError::ModelMismatch(format!("empty block {}", b.label())))?;
        let id = b.sequential_id.expect("blocks are numbered");
        if starts.insert((b.name.clone(), loc), id).is_some() {
            return Err(InstrumentError::ModelMismatch(format!(
                "two blocks of {} start at {loc}",
                b.name
            )));
        }
        points.push(TracePoint {
            id,
            pou: b.name.clone(),
            kind: PointKind::Block,
            file: project.file_path(loc.file).to_string(),
            line: loc.line,
            col: loc.col,
        });
    }

    let mut out = project.clone();
    let mut inserted = 0;
    let mut next_id = blocks.len() as u32;
    for pou_node in model.nodes.iter().filter(|n| n.kind == NodeKind::Pou) {
        let pou = out
            .pous
            .iter_mut()
            .find(|p| p.name == pou_node.name)
            .ok_or_else(|| InstrumentError::ModelMismatch(format!("unknown POU {}", pou_node.name)))?;
        let pou_name = pou.name.clone();
        for a in &mut pou.actions {
            let owner = format!("{pou_name}.{}", a.name);
            insert_calls(&mut a.body, &owner, &starts, &names.record, &mut inserted);
        }
        match &mut pou.body {
            Body::St(stmts) => insert_calls(stmts, &pou_name, &starts, &names.record, &mut inserted),
            Body::Sfc(chart) => {
                for step in &mut chart.steps {
                    let qualified = format!("{pou_name}.{}", step.name);
                    if model.find(NodeKind::Step, &qualified).is_none() {
                        return Err(InstrumentError::ModelMismatch(format!(
                            "step {qualified} missing from model"
                        )));
                    }
                    let action = format!("{prefix}{}", step.name);
                    pou.actions.push(ActionDecl {
                        name: action.clone(),
                        body: vec![record_call(&names.record, next_id, step.loc)],
                        loc: step.loc,
                    });
                    step.actions.push(ActionRef {
                        action,
                        qualifier: Qualifier::P1,
                    });
                    points.push(TracePoint {
                        id: next_id,
                        pou: qualified,
                        kind: PointKind::Step,
                        file: project.file_path(step.loc.file).to_string(),
                        line: step.loc.line,
                        col: step.loc.col,
                    });
                    next_id += 1;
                }
            }
        }
    }
    if inserted != blocks.len() {
        return Err(InstrumentError::ModelMismatch(format!(
            "placed {inserted} record calls for {} blocks",
            blocks.len()
        )));
    }

    let max_tp = points.len() as i64 - 1;
    let existing: HashSet<String> = out.files.iter().map(|f| f.path.clone()).collect();
    let tracing_path = if existing.contains(TRACING_FILE) {
        (1..)
            .map(|i| format!("tracing_{i}.st"))
            .find(|p| !existing.contains(p))
            .expect("unbounded search")
    } else {
        TRACING_FILE.to_string()
    };
    out.files.push(SourceFile::new(tracing_path, ""));
    out.trace_runtime = Some(TraceRuntimeDecl {
        array: names.array.clone(),
        max_tp,
        record: names.record.clone(),
        reset: names.reset.clone(),
        save: names.save.clone(),
        step_action_prefix: prefix,
        file: out.files.len() as u32 - 1,
    });
    let instrumented = InstrumentedProject { base: out };
    let db = TracePointDatabase {
        points,
        max_tp,
        fingerprint: instrumented.fingerprint(),
        names,
    };
    Ok((instrumented, db))
}
