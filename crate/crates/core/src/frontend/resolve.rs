//! Name binding and static checks over a parsed project.
//!
//! The same lookup rules are used by the dependency model builder and the
//! interpreter, so every consumer agrees on what a name refers to.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::*;
use super::FrontendError;

/// Name of the builtin on-delay timer function block.
pub const TON: &str = "TON";

/// Function block type of an instance variable.
#[derive(Debug, Clone, Copy)]
pub enum FbType<'p> {
    User(&'p PouDecl),
    Ton,
}

/// Intrinsics of the generated tracing runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceCall {
    Record,
    Reset,
    Save,
}

#[derive(Debug, Clone, Copy)]
pub enum CallTarget<'p> {
    FbInstance { var: &'p VarDecl, fb: FbType<'p> },
    Function(&'p PouDecl),
    Action(&'p ActionDecl),
    Trace(TraceCall),
}

/// Interface of the `TON` builtin: `(name, type, storage)`.
pub fn ton_members() -> [(&'static str, DataType, Storage); 4] {
    [
        ("IN", DataType::Bool, Storage::ParamIn),
        ("PT", DataType::Time, Storage::ParamIn),
        ("Q", DataType::Bool, Storage::ParamOut),
        ("ET", DataType::Time, Storage::ParamOut),
    ]
}

pub fn fb_type<'p>(project: &'p SourceProject, data_type: &DataType) -> Option<FbType<'p>> {
    match data_type {
        DataType::Fb(name) if name == TON => Some(FbType::Ton),
        DataType::Fb(name) => project
            .pou(name)
            .filter(|p| p.kind == PouKind::FunctionBlock)
            .map(FbType::User),
        _ => None,
    }
}

/// Type and storage of `member` on an instance of `fb`, restricted to the
/// parameter interface.
pub fn fb_member(fb: FbType<'_>, member: &str) -> Option<(DataType, Storage)> {
    match fb {
        FbType::Ton => ton_members()
            .into_iter()
            .find(|(n, _, _)| *n == member)
            .map(|(_, t, s)| (t, s)),
        FbType::User(pou) => pou
            .var(member)
            .filter(|v| matches!(v.storage, Storage::ParamIn | Storage::ParamOut))
            .map(|v| (v.data_type.clone(), v.storage)),
    }
}

/// Resolved variable: declaration found in the POU or among the globals.
#[derive(Debug, Clone, Copy)]
pub enum VarBinding<'p> {
    Local(&'p VarDecl),
    Global(&'p VarDecl),
    /// Result variable of a function (named after the function).
    FunctionResult(&'p PouDecl),
}

impl VarBinding<'_> {
    pub fn data_type(&self) -> DataType {
        match self {
            VarBinding::Local(v) | VarBinding::Global(v) => v.data_type.clone(),
            VarBinding::FunctionResult(p) => p.return_type.clone().unwrap_or(DataType::Int),
        }
    }
}

pub fn lookup_var<'p>(
    project: &'p SourceProject,
    pou: &'p PouDecl,
    name: &str,
) -> Option<VarBinding<'p>> {
    if let Some(v) = pou.var(name) {
        return Some(VarBinding::Local(v));
    }
    if pou.kind == PouKind::Function && pou.name == name {
        return Some(VarBinding::FunctionResult(pou));
    }
    project.global(name).map(VarBinding::Global)
}

pub fn resolve_call<'p>(
    project: &'p SourceProject,
    pou: &'p PouDecl,
    target: &str,
) -> Option<CallTarget<'p>> {
    if let Some(tr) = &project.trace_runtime {
        if target == tr.record {
            return Some(CallTarget::Trace(TraceCall::Record));
        }
        if target == tr.reset {
            return Some(CallTarget::Trace(TraceCall::Reset));
        }
        if target == tr.save {
            return Some(CallTarget::Trace(TraceCall::Save));
        }
    }
    if let Some(binding) = lookup_var(project, pou, target) {
        if let VarBinding::Local(var) | VarBinding::Global(var) = binding {
            if let Some(fb) = fb_type(project, &var.data_type) {
                return Some(CallTarget::FbInstance { var, fb });
            }
        }
    }
    if let Some(action) = pou.action(target) {
        return Some(CallTarget::Action(action));
    }
    project
        .pou(target)
        .filter(|p| p.kind == PouKind::Function)
        .map(CallTarget::Function)
}

/// POU names invoked (directly) by a call target: FB type or function.
pub fn callee_pou<'p>(target: &CallTarget<'p>) -> Option<&'p PouDecl> {
    match target {
        CallTarget::FbInstance {
            fb: FbType::User(p),
            ..
        } => Some(p),
        CallTarget::Function(p) => Some(p),
        _ => None,
    }
}

struct Checker<'p> {
    project: &'p SourceProject,
}

impl<'p> Checker<'p> {
    fn at(&self, loc: SourceLoc) -> (String, u32, u32) {
        (
            self.project.file_path(loc.file).to_string(),
            loc.line,
            loc.col,
        )
    }

    fn invalid(&self, loc: SourceLoc, message: impl Into<String>) -> FrontendError {
        let (path, line, col) = self.at(loc);
        FrontendError::Invalid {
            path,
            line,
            col,
            message: message.into(),
        }
    }

    fn unresolved(&self, loc: SourceLoc, name: &str) -> FrontendError {
        let (path, line, col) = self.at(loc);
        FrontendError::Unresolved {
            path,
            line,
            col,
            name: name.to_string(),
        }
    }

    fn duplicate(&self, loc: SourceLoc, name: &str) -> FrontendError {
        let (path, line, col) = self.at(loc);
        FrontendError::Duplicate {
            path,
            line,
            col,
            name: name.to_string(),
        }
    }

    fn check_type(&self, v: &VarDecl, in_function: bool) -> Result<(), FrontendError> {
        if let DataType::Fb(name) = &v.data_type {
            if fb_type(self.project, &v.data_type).is_none() {
                return Err(self.unresolved(v.loc, name));
            }
            if in_function {
                return Err(self.invalid(
                    v.loc,
                    format!("function block instance '{}' declared in a function", v.name),
                ));
            }
            if v.init.is_some() {
                return Err(self.invalid(v.loc, "function block instances take no initializer"));
            }
        }
        if let Some(init) = &v.init {
            let ok = matches!(
                (&v.data_type, init),
                (DataType::Bool, Literal::Bool(_))
                    | (DataType::Int | DataType::Dint, Literal::Int(_))
                    | (DataType::Real, Literal::Real(_) | Literal::Int(_))
                    | (DataType::Time, Literal::Time(_))
                    | (DataType::String, Literal::Str(_))
            );
            if !ok {
                return Err(self.invalid(
                    v.loc,
                    format!(
                        "initializer of '{}' does not match type {}",
                        v.name,
                        v.data_type.keyword()
                    ),
                ));
            }
        }
        Ok(())
    }

    fn check_var_ref(
        &self,
        pou: &'p PouDecl,
        r: &VarRef,
        loc: SourceLoc,
    ) -> Result<(), FrontendError> {
        let binding = lookup_var(self.project, pou, &r.name)
            .ok_or_else(|| self.unresolved(loc, &r.name))?;
        match &r.member {
            None => {
                if let VarBinding::Local(v) | VarBinding::Global(v) = binding {
                    if !v.data_type.is_elementary() {
                        return Err(self.invalid(
                            loc,
                            format!("function block instance '{}' used as a value", r.name),
                        ));
                    }
                }
                Ok(())
            }
            Some(member) => {
                let fb = fb_type(self.project, &binding.data_type()).ok_or_else(|| {
                    self.invalid(loc, format!("'{}' is not a function block instance", r.name))
                })?;
                fb_member(fb, member)
                    .map(|_| ())
                    .ok_or_else(|| self.unresolved(loc, &format!("{}.{}", r.name, member)))
            }
        }
    }

    fn check_expr(&self, pou: &'p PouDecl, e: &Expr, loc: SourceLoc) -> Result<(), FrontendError> {
        match e {
            Expr::Lit(_) => Ok(()),
            Expr::Var(r) => self.check_var_ref(pou, r, loc),
            Expr::Unary(_, inner) => self.check_expr(pou, inner, loc),
            Expr::Binary(_, l, r) => {
                self.check_expr(pou, l, loc)?;
                self.check_expr(pou, r, loc)
            }
            Expr::Call(c) => {
                match resolve_call(self.project, pou, &c.target) {
                    Some(CallTarget::Function(f)) => self.check_args(pou, f, &c.args, loc)?,
                    Some(_) => {
                        return Err(self.invalid(
                            loc,
                            format!("'{}' cannot be called in an expression", c.target),
                        ))
                    }
                    None => return Err(self.unresolved(loc, &c.target)),
                }
                for a in &c.args {
                    self.check_expr(pou, &a.value, loc)?;
                }
                Ok(())
            }
        }
    }

    fn check_args(
        &self,
        pou: &'p PouDecl,
        callee: &PouDecl,
        args: &[Arg],
        loc: SourceLoc,
    ) -> Result<(), FrontendError> {
        let inputs: Vec<&VarDecl> = callee
            .vars
            .iter()
            .filter(|v| v.storage == Storage::ParamIn)
            .collect();
        let positional = args.iter().filter(|a| a.name.is_none()).count();
        if positional > 0 && positional != args.len() {
            return Err(self.invalid(loc, "mixed named and positional arguments"));
        }
        if positional > 0 && callee.kind != PouKind::Function {
            return Err(self.invalid(loc, "positional arguments are only allowed for functions"));
        }
        if positional > inputs.len() {
            return Err(self.invalid(
                loc,
                format!("too many arguments for '{}'", callee.name),
            ));
        }
        let mut seen = HashSet::new();
        for a in args {
            if let Some(n) = &a.name {
                if !inputs.iter().any(|v| &v.name == n) {
                    return Err(self.unresolved(loc, &format!("{}.{}", callee.name, n)));
                }
                if !seen.insert(n) {
                    return Err(self.duplicate(loc, n));
                }
            }
            self.check_expr(pou, &a.value, loc)?;
        }
        Ok(())
    }

    fn check_stmts(&self, pou: &'p PouDecl, stmts: &[Stmt], in_loop: bool) -> Result<(), FrontendError> {
        for s in stmts {
            self.check_stmt(pou, s, in_loop)?;
        }
        Ok(())
    }

    fn check_stmt(&self, pou: &'p PouDecl, s: &Stmt, in_loop: bool) -> Result<(), FrontendError> {
        let loc = s.loc;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                self.check_var_ref(pou, target, loc)?;
                self.check_expr(pou, value, loc)?;
            }
            StmtKind::If {
                branches,
                else_body,
            } => {
                for b in branches {
                    self.check_expr(pou, &b.cond, loc)?;
                    self.check_stmts(pou, &b.body, in_loop)?;
                }
                if let Some(e) = else_body {
                    self.check_stmts(pou, e, in_loop)?;
                }
            }
            StmtKind::Case {
                selector,
                arms,
                else_body,
            } => {
                self.check_expr(pou, selector, loc)?;
                for a in arms {
                    self.check_stmts(pou, &a.body, in_loop)?;
                }
                if let Some(e) = else_body {
                    self.check_stmts(pou, e, in_loop)?;
                }
            }
            StmtKind::For {
                var,
                from,
                to,
                by,
                body,
            } => {
                let binding = lookup_var(self.project, pou, var)
                    .ok_or_else(|| self.unresolved(loc, var))?;
                if !matches!(binding.data_type(), DataType::Int | DataType::Dint) {
                    return Err(self.invalid(loc, format!("FOR variable '{var}' must be an integer")));
                }
                self.check_expr(pou, from, loc)?;
                self.check_expr(pou, to, loc)?;
                if let Some(b) = by {
                    self.check_expr(pou, b, loc)?;
                }
                self.check_stmts(pou, body, true)?;
            }
            StmtKind::While { cond, body } => {
                self.check_expr(pou, cond, loc)?;
                self.check_stmts(pou, body, true)?;
            }
            StmtKind::Repeat { body, until } => {
                self.check_stmts(pou, body, true)?;
                self.check_expr(pou, until, loc)?;
            }
            StmtKind::Call(c) => self.check_call_stmt(pou, c, loc)?,
            StmtKind::Return => {}
            StmtKind::Exit => {
                if !in_loop {
                    return Err(self.invalid(loc, "EXIT outside of a loop"));
                }
            }
        }
        Ok(())
    }

    fn check_call_stmt(&self, pou: &'p PouDecl, c: &Call, loc: SourceLoc) -> Result<(), FrontendError> {
        let target = match resolve_call(self.project, pou, &c.target) {
            Some(t) => t,
            None => {
                if self.project.pou(&c.target).is_some_and(|p| p.kind == PouKind::Program) {
                    return Err(self.invalid(loc, format!("program '{}' cannot be called", c.target)));
                }
                return Err(self.unresolved(loc, &c.target));
            }
        };
        match target {
            CallTarget::FbInstance { fb, .. } => {
                let mut seen = HashSet::new();
                for a in &c.args {
                    let Some(n) = &a.name else {
                        return Err(self.invalid(
                            loc,
                            "function block calls require named arguments",
                        ));
                    };
                    match fb_member(fb, n) {
                        Some((_, Storage::ParamIn)) => {}
                        _ => return Err(self.unresolved(loc, &format!("{}.{}", c.target, n))),
                    }
                    if !seen.insert(n) {
                        return Err(self.duplicate(loc, n));
                    }
                    self.check_expr(pou, &a.value, loc)?;
                }
            }
            CallTarget::Function(f) => self.check_args(pou, f, &c.args, loc)?,
            CallTarget::Action(_) => {
                if !c.args.is_empty() {
                    return Err(self.invalid(loc, "action calls take no arguments"));
                }
            }
            CallTarget::Trace(TraceCall::Record) => {
                if c.args.len() != 1 || c.args[0].name.as_deref().is_some_and(|n| n != "i") {
                    return Err(self.invalid(loc, "trace record call takes exactly one argument 'i'"));
                }
                self.check_expr(pou, &c.args[0].value, loc)?;
            }
            CallTarget::Trace(TraceCall::Reset) => {
                if !c.args.is_empty() {
                    return Err(self.invalid(loc, "trace reset takes no arguments"));
                }
            }
            CallTarget::Trace(TraceCall::Save) => {
                return Err(self.invalid(loc, "the trace save block is driven by the test harness"));
            }
        }
        Ok(())
    }

    fn check_pou(&self, pou: &'p PouDecl) -> Result<(), FrontendError> {
        let is_fn = pou.kind == PouKind::Function;
        match (&pou.return_type, is_fn) {
            (None, true) => return Err(self.invalid(pou.loc, "function without return type")),
            (Some(DataType::Fb(_)), true) => {
                return Err(self.invalid(pou.loc, "function must return an elementary type"))
            }
            (Some(_), false) => return Err(self.invalid(pou.loc, "only functions have a return type")),
            _ => {}
        }
        let mut names = HashSet::new();
        for v in &pou.vars {
            if !names.insert(v.name.as_str()) || (is_fn && v.name == pou.name) {
                return Err(self.duplicate(v.loc, &v.name));
            }
            self.check_type(v, is_fn)?;
        }
        if is_fn && !pou.actions.is_empty() {
            return Err(self.invalid(pou.actions[0].loc, "functions cannot have actions"));
        }
        let mut action_names = HashSet::new();
        for a in &pou.actions {
            if !action_names.insert(a.name.as_str()) {
                return Err(self.duplicate(a.loc, &a.name));
            }
            self.check_stmts(pou, &a.body, false)?;
        }
        match &pou.body {
            Body::St(stmts) => self.check_stmts(pou, stmts, false)?,
            Body::Sfc(chart) => {
                if is_fn {
                    return Err(self.invalid(pou.loc, "functions cannot have an SFC body"));
                }
                let initial = chart.steps.iter().filter(|s| s.initial).count();
                if initial != 1 {
                    return Err(self.invalid(
                        pou.loc,
                        format!("SFC chart must have exactly one initial step, found {initial}"),
                    ));
                }
                let mut steps = HashSet::new();
                for s in &chart.steps {
                    if !steps.insert(s.name.as_str()) {
                        return Err(self.duplicate(s.loc, &s.name));
                    }
                    for r in &s.actions {
                        if pou.action(&r.action).is_none() {
                            return Err(self.unresolved(s.loc, &r.action));
                        }
                    }
                }
                for t in &chart.transitions {
                    for endpoint in [&t.from, &t.to] {
                        if !steps.contains(endpoint.as_str()) {
                            return Err(self.unresolved(t.loc, endpoint));
                        }
                    }
                    self.check_expr(pou, &t.cond, t.loc)?;
                }
            }
        }
        Ok(())
    }

    fn check_recursion(&self) -> Result<(), FrontendError> {
        // Dependency edges: instance declarations and calls.
        let mut deps: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for pou in &self.project.pous {
            let mut out: Vec<&str> = Vec::new();
            for v in &pou.vars {
                if let Some(FbType::User(fb)) = fb_type(self.project, &v.data_type) {
                    out.push(&fb.name);
                }
            }
            let mut visit = |c: &Call| {
                if let Some(t) = resolve_call(self.project, pou, &c.target) {
                    if let Some(p) = callee_pou(&t) {
                        out.push(&p.name);
                    }
                }
            };
            let mut lists: Vec<&[Stmt]> = pou.actions.iter().map(|a| a.body.as_slice()).collect();
            match &pou.body {
                Body::St(s) => lists.push(s),
                Body::Sfc(chart) => {
                    for t in &chart.transitions {
                        t.cond.for_each_call(&mut visit);
                    }
                }
            }
            for list in lists {
                for_each_stmt(list, &mut |s| {
                    for c in s.header_calls() {
                        visit(c);
                    }
                });
            }
            deps.insert(&pou.name, out);
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn dfs<'a>(
            n: &'a str,
            deps: &BTreeMap<&'a str, Vec<&'a str>>,
            marks: &mut HashMap<&'a str, Mark>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            match marks.get(n) {
                Some(Mark::Done) => return None,
                Some(Mark::Active) => {
                    let start = stack.iter().position(|s| *s == n).unwrap_or(0);
                    let mut cycle: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                    cycle.push(n.to_string());
                    return Some(cycle);
                }
                None => {}
            }
            marks.insert(n, Mark::Active);
            stack.push(n);
            for d in deps.get(n).into_iter().flatten() {
                if let Some(c) = dfs(d, deps, marks, stack) {
                    return Some(c);
                }
            }
            stack.pop();
            marks.insert(n, Mark::Done);
            None
        }
        let mut marks = HashMap::new();
        for pou in &self.project.pous {
            let mut stack = Vec::new();
            if let Some(chain) = dfs(&pou.name, &deps, &mut marks, &mut stack) {
                return Err(FrontendError::Recursion { chain });
            }
        }
        Ok(())
    }
}

/// Pre-order walk over a statement list and all nested bodies.
pub fn for_each_stmt<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        for body in s.child_bodies() {
            for_each_stmt(body, f);
        }
    }
}

pub fn validate(project: &SourceProject) -> Result<(), FrontendError> {
    let ck = Checker { project };
    let mut pou_names = HashSet::new();
    for pou in &project.pous {
        if pou.name == TON || !pou_names.insert(pou.name.as_str()) {
            return Err(ck.duplicate(pou.loc, &pou.name));
        }
    }
    let mut global_names = HashSet::new();
    for g in &project.globals {
        if !global_names.insert(g.name.as_str()) {
            return Err(ck.duplicate(g.loc, &g.name));
        }
        ck.check_type(g, false)?;
    }
    if let Some(tr) = &project.trace_runtime {
        for n in [&tr.array, &tr.record, &tr.reset, &tr.save] {
            if project.pou(n).is_some() || project.global(n).is_some() {
                let loc = SourceLoc::new(tr.file, 1, 1);
                return Err(ck.duplicate(loc, n));
            }
        }
    }
    for pou in &project.pous {
        ck.check_pou(pou)?;
    }
    let mut task_names = HashSet::new();
    let mut priorities = HashSet::new();
    for t in &project.tasks {
        let task_err = |message: String| FrontendError::Task {
            task: t.name.clone(),
            message,
        };
        if !task_names.insert(t.name.as_str()) {
            return Err(task_err("duplicate task name".into()));
        }
        if t.cycle_ms == 0 {
            return Err(task_err("cycle time must be positive".into()));
        }
        if !priorities.insert(t.priority) {
            return Err(task_err(format!("priority {} already used", t.priority)));
        }
        match project.pou(&t.entry_pou) {
            Some(p) if p.kind == PouKind::Program => {}
            Some(_) => return Err(task_err(format!("entry '{}' is not a PROGRAM", t.entry_pou))),
            None => return Err(task_err(format!("entry '{}' is not declared", t.entry_pou))),
        }
    }
    ck.check_recursion()
}
