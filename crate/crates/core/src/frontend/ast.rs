//! Syntax tree for the supported Structured Text / SFC subset.

use std::fmt;

/// Position of a syntax element: index into [`SourceProject::files`],
/// 1-based line and 1-based column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SourceLoc {
    pub file: u32,
    pub line: u32,
    pub col: u32,
}

impl SourceLoc {
    pub fn new(file: u32, line: u32, col: u32) -> Self {
        SourceLoc { file, line, col }
    }
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile {
            path: path.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DataType {
    Bool,
    Int,
    Dint,
    Real,
    Time,
    String,
    /// Instance of a function block (user-declared or the `TON` builtin).
    Fb(String),
}

impl DataType {
    pub fn keyword(&self) -> &str {
        match self {
            DataType::Bool => "BOOL",
            DataType::Int => "INT",
            DataType::Dint => "DINT",
            DataType::Real => "REAL",
            DataType::Time => "TIME",
            DataType::String => "STRING",
            DataType::Fb(name) => name,
        }
    }

    pub fn from_keyword(word: &str) -> Option<DataType> {
        Some(match word.to_ascii_uppercase().as_str() {
            "BOOL" => DataType::Bool,
            "INT" => DataType::Int,
            "DINT" => DataType::Dint,
            "REAL" => DataType::Real,
            "TIME" => DataType::Time,
            "STRING" => DataType::String,
            _ => return None,
        })
    }

    pub fn is_elementary(&self) -> bool {
        !matches!(self, DataType::Fb(_))
    }
}

/// Storage class of a variable.
///
/// `Input` and `Output` denote process-image variables (globals or
/// program-level). Function block and function parameters use
/// `ParamIn` / `ParamOut`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Storage {
    Input,
    Output,
    Local,
    Global,
    ParamIn,
    ParamOut,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Real(f64),
    /// Duration in milliseconds.
    Time(i64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub data_type: DataType,
    pub storage: Storage,
    pub init: Option<Literal>,
    pub loc: SourceLoc,
}

/// `name` or `name.member` (member access into a function block instance).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub name: String,
    pub member: Option<String>,
}

impl VarRef {
    pub fn simple(name: impl Into<String>) -> Self {
        VarRef {
            name: name.into(),
            member: None,
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.member {
            Some(m) => write!(f, "{}.{}", self.name, m),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    Xor,
    And,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "OR",
            BinOp::Xor => "XOR",
            BinOp::And => "AND",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "MOD",
        }
    }

    /// Binding strength; higher binds tighter. All binary operators are
    /// left-associative.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::Xor => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne => 4,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    /// `None` for positional arguments (functions only).
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub target: String,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Literal),
    Var(VarRef),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Call),
}

impl Expr {
    pub fn not(inner: Expr) -> Expr {
        Expr::Unary(UnaryOp::Not, Box::new(inner))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Visits every call nested in this expression, outermost first.
    pub fn for_each_call<'a>(&'a self, f: &mut dyn FnMut(&'a Call)) {
        match self {
            Expr::Lit(_) | Expr::Var(_) => {}
            Expr::Unary(_, e) => e.for_each_call(f),
            Expr::Binary(_, l, r) => {
                l.for_each_call(f);
                r.for_each_call(f);
            }
            Expr::Call(c) => {
                f(c);
                for a in &c.args {
                    a.value.for_each_call(f);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondBranch {
    pub cond: Expr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseLabel {
    Value(i64),
    Range(i64, i64),
}

impl CaseLabel {
    pub fn matches(self, v: i64) -> bool {
        match self {
            CaseLabel::Value(x) => x == v,
            CaseLabel::Range(lo, hi) => lo <= v && v <= hi,
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseLabel::Value(v) => write!(f, "{v}"),
            CaseLabel::Range(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseArm {
    pub labels: Vec<CaseLabel>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        target: VarRef,
        value: Expr,
    },
    If {
        branches: Vec<CondBranch>,
        else_body: Option<Vec<Stmt>>,
    },
    Case {
        selector: Expr,
        arms: Vec<CaseArm>,
        else_body: Option<Vec<Stmt>>,
    },
    For {
        var: String,
        from: Expr,
        to: Expr,
        by: Option<Expr>,
        body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    Repeat {
        body: Vec<Stmt>,
        until: Expr,
    },
    Call(Call),
    Return,
    Exit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub loc: SourceLoc,
}

impl Stmt {
    pub fn new(kind: StmtKind, loc: SourceLoc) -> Self {
        Stmt { kind, loc }
    }

    /// True for IF/CASE/FOR/WHILE/REPEAT.
    pub fn is_decision(&self) -> bool {
        matches!(
            self.kind,
            StmtKind::If { .. }
                | StmtKind::Case { .. }
                | StmtKind::For { .. }
                | StmtKind::While { .. }
                | StmtKind::Repeat { .. }
        )
    }

    /// Expressions evaluated by the statement itself, excluding nested
    /// statement bodies.
    pub fn header_exprs(&self) -> Vec<&Expr> {
        match &self.kind {
            StmtKind::Assign { value, .. } => vec![value],
            StmtKind::If { branches, .. } => branches.iter().map(|b| &b.cond).collect(),
            StmtKind::Case { selector, .. } => vec![selector],
            StmtKind::For { from, to, by, .. } => {
                let mut v = vec![from, to];
                v.extend(by.iter());
                v
            }
            StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Repeat { until, .. } => vec![until],
            StmtKind::Call(c) => c.args.iter().map(|a| &a.value).collect(),
            StmtKind::Return | StmtKind::Exit => vec![],
        }
    }

    /// Every call made by this statement's header: the statement call itself
    /// plus calls nested in its header expressions.
    pub fn header_calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        if let StmtKind::Call(c) = &self.kind {
            out.push(c);
        }
        for e in self.header_exprs() {
            e.for_each_call(&mut |c| out.push(c));
        }
        out
    }

    /// Nested statement lists, in source order.
    pub fn child_bodies(&self) -> Vec<&Vec<Stmt>> {
        match &self.kind {
            StmtKind::If {
                branches,
                else_body,
            } => {
                let mut v: Vec<&Vec<Stmt>> = branches.iter().map(|b| &b.body).collect();
                v.extend(else_body.iter());
                v
            }
            StmtKind::Case {
                arms, else_body, ..
            } => {
                let mut v: Vec<&Vec<Stmt>> = arms.iter().map(|a| &a.body).collect();
                v.extend(else_body.iter());
                v
            }
            StmtKind::For { body, .. }
            | StmtKind::While { body, .. }
            | StmtKind::Repeat { body, .. } => vec![body],
            _ => vec![],
        }
    }

    pub fn child_bodies_mut(&mut self) -> Vec<&mut Vec<Stmt>> {
        match &mut self.kind {
            StmtKind::If {
                branches,
                else_body,
            } => {
                let mut v: Vec<&mut Vec<Stmt>> =
                    branches.iter_mut().map(|b| &mut b.body).collect();
                v.extend(else_body.iter_mut());
                v
            }
            StmtKind::Case {
                arms, else_body, ..
            } => {
                let mut v: Vec<&mut Vec<Stmt>> = arms.iter_mut().map(|a| &mut a.body).collect();
                v.extend(else_body.iter_mut());
                v
            }
            StmtKind::For { body, .. }
            | StmtKind::While { body, .. }
            | StmtKind::Repeat { body, .. } => vec![body],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qualifier {
    /// Executed every scan while the step is active.
    N,
    /// Executed once when the step becomes active.
    P1,
    /// Executed once when the step is deactivated.
    P0,
}

impl Qualifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Qualifier::N => "N",
            Qualifier::P1 => "P1",
            Qualifier::P0 => "P0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRef {
    pub action: String,
    pub qualifier: Qualifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfcStep {
    pub name: String,
    pub initial: bool,
    pub actions: Vec<ActionRef>,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfcTransition {
    pub from: String,
    pub to: String,
    pub cond: Expr,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SfcChart {
    pub steps: Vec<SfcStep>,
    pub transitions: Vec<SfcTransition>,
}

impl SfcChart {
    pub fn initial_step(&self) -> Option<usize> {
        self.steps.iter().position(|s| s.initial)
    }

    pub fn step_index(&self, name: &str) -> Option<usize> {
        self.steps.iter().position(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    St(Vec<Stmt>),
    Sfc(SfcChart),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PouKind {
    Program,
    FunctionBlock,
    Function,
}

impl PouKind {
    pub fn keyword(self) -> &'static str {
        match self {
            PouKind::Program => "PROGRAM",
            PouKind::FunctionBlock => "FUNCTION_BLOCK",
            PouKind::Function => "FUNCTION",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDecl {
    pub name: String,
    pub body: Vec<Stmt>,
    pub loc: SourceLoc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PouDecl {
    pub name: String,
    pub kind: PouKind,
    /// Declared result type; present exactly for functions.
    pub return_type: Option<DataType>,
    pub vars: Vec<VarDecl>,
    pub body: Body,
    pub actions: Vec<ActionDecl>,
    pub loc: SourceLoc,
}

impl PouDecl {
    pub fn var(&self, name: &str) -> Option<&VarDecl> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionDecl> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &VarDecl> {
        self.vars
            .iter()
            .filter(|v| matches!(v.storage, Storage::ParamIn | Storage::Input))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDecl {
    pub name: String,
    pub cycle_ms: u32,
    /// Lower value means higher priority.
    pub priority: i32,
    pub entry_pou: String,
}

/// Declarations of the generated tracing runtime, present only in
/// instrumented projects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRuntimeDecl {
    /// Name of the `ARRAY[0..MAXTP] OF BOOL` visit array.
    pub array: String,
    /// Highest trace-point id; `-1` when there are no points.
    pub max_tp: i64,
    pub record: String,
    pub reset: String,
    pub save: String,
    /// Prefix of generated per-step activation actions.
    pub step_action_prefix: String,
    pub file: u32,
}

impl TraceRuntimeDecl {
    pub fn is_trace_call(&self, target: &str) -> bool {
        target == self.record || target == self.reset || target == self.save
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceProject {
    pub files: Vec<SourceFile>,
    pub globals: Vec<VarDecl>,
    pub pous: Vec<PouDecl>,
    pub tasks: Vec<TaskDecl>,
    pub trace_runtime: Option<TraceRuntimeDecl>,
}

impl SourceProject {
    pub fn pou(&self, name: &str) -> Option<&PouDecl> {
        self.pous.iter().find(|p| p.name == name)
    }

    pub fn pou_index(&self, name: &str) -> Option<usize> {
        self.pous.iter().position(|p| p.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&VarDecl> {
        self.globals.iter().find(|v| v.name == name)
    }

    pub fn file_path(&self, file: u32) -> &str {
        self.files
            .get(file as usize)
            .map(|f| f.path.as_str())
            .unwrap_or("<unknown>")
    }

    /// Copy with every source location zeroed, for structural comparison
    /// across re-parses.
    pub fn without_locations(&self) -> SourceProject {
        let mut p = self.clone();
        let zero = SourceLoc::default();
        for f in &mut p.files {
            f.text.clear();
        }
        for g in &mut p.globals {
            g.loc = zero;
        }
        for pou in &mut p.pous {
            pou.loc = zero;
            for v in &mut pou.vars {
                v.loc = zero;
            }
            match &mut pou.body {
                Body::St(stmts) => clear_stmt_locs(stmts),
                Body::Sfc(chart) => {
                    for s in &mut chart.steps {
                        s.loc = zero;
                    }
                    for t in &mut chart.transitions {
                        t.loc = zero;
                    }
                }
            }
            for a in &mut pou.actions {
                a.loc = zero;
                clear_stmt_locs(&mut a.body);
            }
        }
        p
    }
}

fn clear_stmt_locs(stmts: &mut [Stmt]) {
    for s in stmts {
        s.loc = SourceLoc::default();
        for body in s.child_bodies_mut() {
            clear_stmt_locs(body);
        }
    }
}
