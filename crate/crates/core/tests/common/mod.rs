//! Random project generator and shared helpers for the integration tests.
//!
//! Generated projects use every statement kind, FB instances, functions,
//! SFC charts with all qualifiers and one or two tasks. They never fault:
//! loops are bounded by dedicated counters, divisors are constants and the
//! call graph is acyclic.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use plccov::depmodel::{DependencyModel, NodeKind};
use plccov::frontend::{parse_project, SourceFile, SourceProject, TaskDecl};
use plccov::runtime::{ExecLog, PlcState, Runtime, Value};
use plccov::tracedb::{PointKind, TracePointDatabase};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

#[derive(Debug, Clone)]
pub struct Generated {
    pub source: String,
    pub tasks: Vec<TaskDecl>,
    /// Process-image inputs with their kind (`true` = BOOL).
    pub inputs: Vec<(String, bool)>,
}

impl Generated {
    pub fn project(&self) -> SourceProject {
        parse_project(&[SourceFile::new("gen.st", self.source.clone())], self.tasks.clone())
            .unwrap_or_else(|e| panic!("generated project does not parse: {e}\n{}", self.source))
    }

    /// Random input updates for one cycle.
    pub fn random_inputs(&self, rng: &mut StdRng) -> BTreeMap<String, Value> {
        let mut m = BTreeMap::new();
        for (name, is_bool) in &self.inputs {
            if rng.random_bool(0.3) {
                let v = if *is_bool {
                    Value::Bool(rng.random_bool(0.5))
                } else {
                    Value::Int(rng.random_range(-20..40))
                };
                m.insert(name.clone(), v);
            }
        }
        m
    }
}

#[derive(Clone)]
struct Pou {
    name: String,
    kind: PouKind,
}

#[derive(Clone, Copy, PartialEq)]
enum PouKind {
    Function,
    Block,
    Chart,
}

/// Variables visible while generating one body.
struct Scope {
    ints: Vec<String>,
    bools: Vec<String>,
    /// Readable only (inputs, FB outputs, loop counters).
    int_reads: Vec<String>,
    bool_reads: Vec<String>,
    /// FB instances and their type index.
    instances: Vec<(String, usize)>,
    /// Callable function indices.
    functions: Vec<usize>,
    /// Reserved loop counters still free, by nesting depth.
    depth: usize,
    in_loop: bool,
    allow_return: bool,
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    pous: Vec<Pou>,
    out: String,
}

const MAX_DEPTH: usize = 3;

fn lit(v: i64) -> String {
    if v < 0 {
        format!("({v})")
    } else {
        v.to_string()
    }
}

impl Gen<'_> {
    fn pick<'s>(&mut self, items: &'s [String]) -> &'s str {
        &items[self.rng.random_range(0..items.len())]
    }

    fn int_expr(&mut self, s: &Scope, depth: usize) -> String {
        let choice = if depth >= 2 { self.rng.random_range(0..3) } else { self.rng.random_range(0..8) };
        match choice {
            0 => lit(self.rng.random_range(-50..50)),
            1 if !s.ints.is_empty() => self.pick(&s.ints).to_string(),
            1 | 2 => {
                let all: Vec<String> = s.ints.iter().chain(&s.int_reads).cloned().collect();
                if all.is_empty() {
                    self.rng.random_range(0..9).to_string()
                } else {
                    self.pick(&all).to_string()
                }
            }
            3 => format!("{} + {}", self.int_expr(s, depth + 1), self.int_expr(s, depth + 1)),
            4 => format!("({} - {})", self.int_expr(s, depth + 1), self.int_expr(s, depth + 1)),
            5 => format!("{} * {}", self.int_expr(s, depth + 1), lit(self.rng.random_range(-3..4))),
            6 => {
                let d = [2, 3, 5, 7][self.rng.random_range(0..4)];
                if self.rng.random_bool(0.5) {
                    format!("({} MOD {d})", self.int_expr(s, depth + 1))
                } else {
                    format!("({} / {d})", self.int_expr(s, depth + 1))
                }
            }
            _ => {
                if !s.functions.is_empty() && self.rng.random_bool(0.6) {
                    let f = s.functions[self.rng.random_range(0..s.functions.len())];
                    let name = self.pous[f].name.clone();
                    format!("{name}(a := {}, b := {})", self.int_expr(s, depth + 1), self.bool_expr(s, depth + 1))
                } else if !s.instances.is_empty() {
                    let (inst, _) = s.instances[self.rng.random_range(0..s.instances.len())].clone();
                    format!("{inst}.o")
                } else {
                    self.rng.random_range(0..9).to_string()
                }
            }
        }
    }

    fn bool_expr(&mut self, s: &Scope, depth: usize) -> String {
        let choice = if depth >= 2 { self.rng.random_range(0..3) } else { self.rng.random_range(0..8) };
        match choice {
            0 => ["TRUE", "FALSE"][self.rng.random_range(0..2)].to_string(),
            1 | 2 => {
                let all: Vec<String> = s.bools.iter().chain(&s.bool_reads).cloned().collect();
                if all.is_empty() {
                    "TRUE".into()
                } else {
                    self.pick(&all).to_string()
                }
            }
            3 => {
                let op = ["<", ">", "=", "<>", "<=", ">="][self.rng.random_range(0..6)];
                format!("{} {op} {}", self.int_expr(s, depth + 1), self.int_expr(s, depth + 1))
            }
            4 => format!("NOT {}", self.bool_atom(s, depth + 1)),
            5 => {
                let op = ["AND", "OR", "XOR"][self.rng.random_range(0..3)];
                format!("({} {op} {})", self.bool_expr(s, depth + 1), self.bool_expr(s, depth + 1))
            }
            6 if !s.instances.is_empty() => {
                let (inst, _) = s.instances[self.rng.random_range(0..s.instances.len())].clone();
                format!("{inst}.p")
            }
            _ => format!("{} > {}", self.int_expr(s, depth + 1), lit(self.rng.random_range(-10..10))),
        }
    }

    fn bool_atom(&mut self, s: &Scope, depth: usize) -> String {
        let e = self.bool_expr(s, depth);
        if e.contains(' ') {
            format!("({e})")
        } else {
            e
        }
    }

    fn stmts(&mut self, s: &mut Scope, indent: usize, n: usize) -> String {
        let mut out = String::new();
        for _ in 0..n {
            out.push_str(&self.stmt(s, indent));
        }
        out
    }

    fn stmt(&mut self, s: &mut Scope, indent: usize) -> String {
        let pad = " ".repeat(indent * 4);
        let nested = s.depth < MAX_DEPTH;
        let choice = self.rng.random_range(0..if nested { 12 } else { 5 });
        match choice {
            0 | 1 if !s.ints.is_empty() => {
                let v = self.pick(&s.ints).to_string();
                format!("{pad}{v} := {};\n", self.int_expr(s, 0))
            }
            2 if !s.bools.is_empty() => {
                let v = self.pick(&s.bools).to_string();
                format!("{pad}{v} := {};\n", self.bool_expr(s, 0))
            }
            3 if !s.instances.is_empty() => {
                let (inst, _) = s.instances[self.rng.random_range(0..s.instances.len())].clone();
                format!("{pad}{inst}(a := {}, b := {});\n", self.int_expr(s, 0), self.bool_expr(s, 0))
            }
            4 if s.in_loop && self.rng.random_bool(0.3) => {
                format!("{pad}IF {} THEN\n{pad}    EXIT;\n{pad}END_IF;\n", self.bool_expr(s, 0))
            }
            4 if s.allow_return && self.rng.random_bool(0.2) => {
                format!("{pad}IF {} THEN\n{pad}    RETURN;\n{pad}END_IF;\n", self.bool_expr(s, 0))
            }
            5 | 6 => {
                s.depth += 1;
                let mut out = format!("{pad}IF {} THEN\n", self.bool_expr(s, 0));
                let k = self.rng.random_range(1..3);
                out += &self.stmts(s, indent + 1, k);
                for _ in 0..self.rng.random_range(0..3) {
                    let _ = writeln!(out, "{pad}ELSIF {} THEN", self.bool_expr(s, 0));
                    let k = self.rng.random_range(1..3);
                    out += &self.stmts(s, indent + 1, k);
                }
                if self.rng.random_bool(0.5) {
                    let _ = writeln!(out, "{pad}ELSE");
                    let k = self.rng.random_range(1..3);
                    out += &self.stmts(s, indent + 1, k);
                }
                let _ = writeln!(out, "{pad}END_IF;");
                s.depth -= 1;
                out
            }
            7 => {
                s.depth += 1;
                let mut out = format!("{pad}CASE {} OF\n", self.int_expr(s, 1));
                let mut next = self.rng.random_range(-2..2);
                for _ in 0..self.rng.random_range(1..4) {
                    let label = if self.rng.random_bool(0.3) {
                        let hi = next + self.rng.random_range(1..4);
                        let l = format!("{next}..{hi}");
                        next = hi + 1;
                        l
                    } else if self.rng.random_bool(0.3) {
                        let l = format!("{next}, {}", next + 2);
                        next += 3;
                        l
                    } else {
                        next += 1;
                        (next - 1).to_string()
                    };
                    let _ = writeln!(out, "{pad}    {label}:");
                    let k = self.rng.random_range(1..3);
                    out += &self.stmts(s, indent + 2, k);
                }
                if self.rng.random_bool(0.5) {
                    let _ = writeln!(out, "{pad}ELSE");
                    let k = self.rng.random_range(1..3);
                    out += &self.stmts(s, indent + 1, k);
                }
                let _ = writeln!(out, "{pad}END_CASE;");
                s.depth -= 1;
                out
            }
            8 => self.loop_stmt(s, indent, "FOR"),
            9 => self.loop_stmt(s, indent, "WHILE"),
            10 => self.loop_stmt(s, indent, "REPEAT"),
            _ if !s.ints.is_empty() => {
                let v = self.pick(&s.ints).to_string();
                format!("{pad}{v} := {v} + 1;\n")
            }
            _ if !s.bools.is_empty() => {
                let v = self.pick(&s.bools).to_string();
                format!("{pad}{v} := NOT {v};\n")
            }
            _ => String::new(),
        }
    }

    fn loop_stmt(&mut self, s: &mut Scope, indent: usize, kind: &str) -> String {
        let pad = " ".repeat(indent * 4);
        let counter = format!("k{}", s.depth);
        s.depth += 1;
        s.int_reads.push(counter.clone());
        let was_in_loop = std::mem::replace(&mut s.in_loop, true);
        let n = self.rng.random_range(1..3);
        let body = self.stmts(s, indent + 1, n);
        s.in_loop = was_in_loop;
        s.int_reads.pop();
        s.depth -= 1;
        let limit = self.rng.random_range(0..4);
        match kind {
            "FOR" => {
                let by = if self.rng.random_bool(0.3) { " BY 2" } else { "" };
                format!("{pad}FOR {counter} := 0 TO {limit}{by} DO\n{body}{pad}END_FOR;\n")
            }
            "WHILE" => {
                let cond = self.bool_expr(s, 1);
                format!(
                    "{pad}{counter} := 0;\n{pad}WHILE {counter} < {limit} AND ({cond}) DO\n{body}{pad}    {counter} := {counter} + 1;\n{pad}END_WHILE;\n"
                )
            }
            _ => {
                let cond = self.bool_expr(s, 1);
                format!(
                    "{pad}{counter} := 0;\n{pad}REPEAT\n{body}{pad}    {counter} := {counter} + 1;\n{pad}UNTIL {counter} > {limit} OR ({cond})\n{pad}END_REPEAT;\n"
                )
            }
        }
    }

    fn locals(&mut self, prefix: &str, s: &mut Scope, decl: &mut String) {
        for i in 0..self.rng.random_range(1..4) {
            let name = format!("{prefix}i{i}");
            let _ = writeln!(decl, "    {name} : INT := {};", self.rng.random_range(-5..5));
            s.ints.push(name);
        }
        for i in 0..self.rng.random_range(1..3) {
            let name = format!("{prefix}b{i}");
            let _ = writeln!(decl, "    {name} : BOOL;");
            s.bools.push(name);
        }
        for d in 0..MAX_DEPTH {
            let _ = writeln!(decl, "    k{d} : INT;");
        }
    }

    fn scope(&self, first: usize, allow_return: bool) -> Scope {
        Scope {
            ints: Vec::new(),
            bools: Vec::new(),
            int_reads: Vec::new(),
            bool_reads: Vec::new(),
            instances: Vec::new(),
            functions: (first..self.pous.len())
                .filter(|j| self.pous[*j].kind == PouKind::Function)
                .collect(),
            depth: 0,
            in_loop: false,
            allow_return,
        }
    }

    fn instances(&mut self, index: usize, s: &mut Scope, decl: &mut String) {
        let blocks: Vec<usize> = (index + 1..self.pous.len())
            .filter(|j| self.pous[*j].kind != PouKind::Function)
            .collect();
        if blocks.is_empty() {
            return;
        }
        for i in 0..self.rng.random_range(0..3) {
            let t = blocks[self.rng.random_range(0..blocks.len())];
            let name = format!("inst{i}");
            let _ = writeln!(decl, "    {name} : {};", self.pous[t].name);
            s.instances.push((name, t));
        }
    }

    fn function(&mut self, index: usize) {
        let name = self.pous[index].name.clone();
        let mut s = self.scope(index + 1, true);
        s.int_reads.push("a".into());
        s.bool_reads.push("b".into());
        s.ints.push(name.clone());
        let mut decl = String::new();
        self.locals("f", &mut s, &mut decl);
        let n = self.rng.random_range(1..4);
        let body = self.stmts(&mut s, 1, n);
        let _ = write!(
            self.out,
            "FUNCTION {name} : INT\nVAR_INPUT\n    a : INT;\n    b : BOOL;\nEND_VAR\nVAR\n{decl}END_VAR\n{body}END_FUNCTION\n\n"
        );
    }

    fn fb_header(&mut self, index: usize, s: &mut Scope) -> String {
        s.int_reads.push("a".into());
        s.bool_reads.push("b".into());
        s.ints.push("o".into());
        s.bools.push("p".into());
        let mut decl = String::new();
        self.locals("x", s, &mut decl);
        self.instances(index, s, &mut decl);
        format!(
            "FUNCTION_BLOCK {}\nVAR_INPUT\n    a : INT;\n    b : BOOL;\nEND_VAR\nVAR_OUTPUT\n    o : INT;\n    p : BOOL;\nEND_VAR\nVAR\n{decl}END_VAR\n",
            self.pous[index].name
        )
    }

    fn block(&mut self, index: usize) {
        let mut s = self.scope(index + 1, true);
        let header = self.fb_header(index, &mut s);
        let n = self.rng.random_range(2..6);
        let body = self.stmts(&mut s, 1, n);
        let _ = write!(self.out, "{header}{body}END_FUNCTION_BLOCK\n\n");
    }

    fn chart(&mut self, index: usize) {
        let mut s = self.scope(index + 1, true);
        let header = self.fb_header(index, &mut s);
        let steps: Vec<String> = (0..self.rng.random_range(2..5)).map(|i| format!("S{i}")).collect();
        let actions: Vec<String> = (0..self.rng.random_range(1..4)).map(|i| format!("A{i}")).collect();
        let mut chart = String::new();
        for (i, st) in steps.iter().enumerate() {
            let init = if i == 0 { " INITIAL" } else { "" };
            let _ = writeln!(chart, "    STEP {st}{init}");
            for a in &actions {
                if self.rng.random_bool(0.4) {
                    let q = ["N", "P1", "P0"][self.rng.random_range(0..3)];
                    let _ = writeln!(chart, "        ACTION {a} QUALIFIER {q}");
                }
            }
            let _ = writeln!(chart, "    END_STEP");
        }
        for _ in 0..self.rng.random_range(steps.len()..steps.len() * 2 + 1) {
            let from = self.pick(&steps).to_string();
            let to = self.pick(&steps).to_string();
            let cond = self.bool_expr(&s, 1);
            let _ = writeln!(chart, "    TRANSITION FROM {from} TO {to} WHEN {cond} END_TRANSITION");
        }
        let mut bodies = String::new();
        for a in &actions {
            let n = self.rng.random_range(1..3);
            let body = self.stmts(&mut s, 2, n);
            let _ = write!(bodies, "    ACTION {a}:\n{body}    END_ACTION\n");
        }
        let _ = write!(self.out, "{header}{chart}{bodies}END_FUNCTION_BLOCK\n\n");
    }

    fn program(&mut self, name: &str, inputs: &[(String, bool)], outputs: &[(String, bool)], first_pou: usize) {
        let mut s = self.scope(first_pou, false);
        for (n, is_bool) in inputs {
            if *is_bool {
                s.bool_reads.push(n.clone());
            } else {
                s.int_reads.push(n.clone());
            }
        }
        for (n, is_bool) in outputs {
            if *is_bool {
                s.bools.push(n.clone());
            } else {
                s.ints.push(n.clone());
            }
        }
        s.ints.push("G".into());
        let mut decl = String::new();
        self.locals("v", &mut s, &mut decl);
        let blocks: Vec<usize> = (first_pou..self.pous.len())
            .filter(|j| self.pous[*j].kind != PouKind::Function)
            .collect();
        for (i, t) in blocks.iter().enumerate() {
            if self.rng.random_bool(0.8) {
                let name = format!("inst{i}");
                let _ = writeln!(decl, "    {name} : {};", self.pous[*t].name);
                s.instances.push((name, *t));
            }
        }
        let mut body = String::new();
        for (inst, _) in s.instances.clone() {
            let _ = writeln!(body, "    {inst}(a := {}, b := {});", self.int_expr(&s, 0), self.bool_expr(&s, 0));
        }
        let n = self.rng.random_range(2..6);
        body += &self.stmts(&mut s, 1, n);
        let _ = write!(self.out, "PROGRAM {name}\nVAR_OUTPUT\n    po : INT;\nEND_VAR\nVAR\n{decl}END_VAR\n{body}    po := G;\nEND_PROGRAM\n\n");
    }
}

/// Generates a random project from `seed`.
pub fn generate(seed: u64) -> Generated {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_pous = rng.random_range(2..7);
    let pous: Vec<Pou> = (0..n_pous)
        .map(|i| {
            let kind = match rng.random_range(0..4) {
                0 => PouKind::Function,
                1 => PouKind::Chart,
                _ => PouKind::Block,
            };
            Pou {
                name: format!("U{i}"),
                kind,
            }
        })
        .collect();
    let inputs: Vec<(String, bool)> = (0..rng.random_range(1..4))
        .map(|i| (format!("in{i}"), false))
        .chain((0..rng.random_range(1..3)).map(|i| (format!("sw{i}"), true)))
        .collect();
    let outputs: Vec<(String, bool)> = (0..rng.random_range(1..3))
        .map(|i| (format!("out{i}"), false))
        .chain((0..rng.random_range(1..3)).map(|i| (format!("lamp{i}"), true)))
        .collect();

    let mut g = Gen {
        rng: &mut rng,
        pous,
        out: String::new(),
    };
    g.out.push_str("VAR_INPUT\n");
    for (n, b) in &inputs {
        let _ = writeln!(g.out, "    {n} : {};", if *b { "BOOL" } else { "INT" });
    }
    g.out.push_str("END_VAR\nVAR_OUTPUT\n");
    for (n, b) in &outputs {
        let _ = writeln!(g.out, "    {n} : {};", if *b { "BOOL" } else { "INT" });
    }
    g.out.push_str("END_VAR\nVAR_GLOBAL\n    G : INT;\nEND_VAR\n\n");
    for i in 0..g.pous.len() {
        match g.pous[i].kind {
            PouKind::Function => g.function(i),
            PouKind::Block => g.block(i),
            PouKind::Chart => g.chart(i),
        }
    }
    let two_tasks = g.rng.random_bool(0.4);
    g.program("Main", &inputs, &outputs, 0);
    if two_tasks {
        let start = g.rng.random_range(0..g.pous.len());
        g.program("Aux", &inputs, &outputs, start);
    }
    let mut tasks = vec![TaskDecl {
        name: "Fast".into(),
        cycle_ms: [10, 20][g.rng.random_range(0..2)],
        priority: g.rng.random_range(0..3),
        entry_pou: "Main".into(),
    }];
    if two_tasks {
        tasks.push(TaskDecl {
            name: "Slow".into(),
            cycle_ms: [30, 50, 100][g.rng.random_range(0..3)],
            priority: tasks[0].priority + g.rng.random_range(1..3),
            entry_pou: "Aux".into(),
        });
    }
    Generated {
        source: g.out,
        tasks,
        inputs,
    }
}

/// Visited leaves according to the interpreter's statement and step log:
/// a block counts when its first statement ran, a step when it activated.
pub fn visits_from_log(model: &DependencyModel, db: &TracePointDatabase, log: &ExecLog) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for p in &db.points {
        let node = model.node(p.node_in(model).expect("point maps to a node"));
        let hit = match p.kind {
            PointKind::Block => {
                assert_eq!(node.kind, NodeKind::BasicBlock);
                log.statements.contains(&node.stmt_locs[0])
            }
            PointKind::Step => {
                let (pou, step) = node.name.split_once('.').expect("qualified step name");
                log.steps.contains(&(pou.to_string(), step.to_string()))
            }
        };
        if hit {
            out.insert(p.id);
        }
    }
    out
}

/// Final states of a lock-step run of the original and instrumented
/// project. The original state carries the interpreter's execution log.
pub struct LockStep {
    pub divergence: Option<usize>,
    pub original: PlcState,
    pub instrumented: PlcState,
}

/// Runs `cycles` cycles with the same random inputs on both runtimes and
/// records the first cycle whose outputs differ.
pub fn lock_step(original: &Runtime, instrumented: &Runtime, g: &Generated, cycles: usize, seed: u64) -> LockStep {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut a = original.init_state();
    a.log = Some(ExecLog::default());
    let mut b = instrumented.init_state();
    let mut divergence = None;
    for c in 0..cycles {
        let inputs = g.random_inputs(&mut rng);
        let oa = original
            .run_cycle(&mut a, &inputs)
            .unwrap_or_else(|e| panic!("fault: {e}\n{}", g.source));
        let ob = instrumented.run_cycle(&mut b, &inputs);
        if ob.as_ref() != Ok(&oa) {
            divergence = Some(c);
            break;
        }
    }
    LockStep {
        divergence,
        original: a,
        instrumented: b,
    }
}

pub fn demo_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("demo")
}
