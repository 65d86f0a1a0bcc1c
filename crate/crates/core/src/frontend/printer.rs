//! Source rendering. Output re-parses to the same tree modulo locations.

use std::fmt::Write as _;

use super::ast::*;
use super::lexer::quote_string;

const INDENT: &str = "    ";
const UNARY_PREC: u8 = 8;

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_literal(out: &mut String, lit: &Literal) {
    match lit {
        Literal::Bool(true) => out.push_str("TRUE"),
        Literal::Bool(false) => out.push_str("FALSE"),
        Literal::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Literal::Real(v) => {
            let _ = write!(out, "{v:?}");
        }
        Literal::Time(ms) => {
            let _ = write!(out, "T#{ms}ms");
        }
        Literal::Str(s) => out.push_str(&quote_string(s)),
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    match e {
        Expr::Lit(lit) => write_literal(out, lit),
        Expr::Var(r) => {
            let _ = write!(out, "{r}");
        }
        Expr::Unary(op, inner) => {
            match op {
                UnaryOp::Not => out.push_str("NOT "),
                UnaryOp::Neg => out.push('-'),
            }
            // `-5` lexes as a literal; keep an explicit negation explicit.
            let numeric = matches!(**inner, Expr::Lit(Literal::Int(_) | Literal::Real(_)));
            if *op == UnaryOp::Neg && numeric {
                out.push('(');
                write_expr(out, inner, 0);
                out.push(')');
            } else {
                write_expr(out, inner, UNARY_PREC);
            }
        }
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            let wrap = prec < min_prec;
            if wrap {
                out.push('(');
            }
            write_expr(out, l, prec);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, r, prec + 1);
            if wrap {
                out.push(')');
            }
        }
        Expr::Call(c) => write_call(out, c, false),
    }
}

fn write_call(out: &mut String, c: &Call, compact: bool) {
    out.push_str(&c.target);
    out.push('(');
    for (i, a) in c.args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        if let Some(n) = &a.name {
            out.push_str(n);
            out.push_str(if compact { ":=" } else { " := " });
        }
        write_expr(out, &a.value, 0);
    }
    out.push(')');
}

struct Printer<'a> {
    out: String,
    trace: Option<&'a TraceRuntimeDecl>,
}

impl Printer<'_> {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn is_record_call(&self, s: &Stmt) -> bool {
        match (&s.kind, self.trace) {
            (StmtKind::Call(c), Some(tr)) => c.target == tr.record,
            _ => false,
        }
    }

    fn stmts(&mut self, depth: usize, stmts: &[Stmt]) {
        let mut prefix = String::new();
        for s in stmts {
            if self.is_record_call(s) {
                if let StmtKind::Call(c) = &s.kind {
                    write_call(&mut prefix, c, true);
                    prefix.push_str("; ");
                }
                continue;
            }
            self.stmt(depth, s, std::mem::take(&mut prefix));
        }
        if !prefix.is_empty() {
            self.line(depth, prefix.trim_end());
        }
    }

    fn stmt(&mut self, depth: usize, s: &Stmt, prefix: String) {
        let mut head = prefix;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let _ = write!(head, "{target} := ");
                write_expr(&mut head, value, 0);
                head.push(';');
                self.line(depth, &head);
            }
            StmtKind::Call(c) => {
                write_call(&mut head, c, false);
                head.push(';');
                self.line(depth, &head);
            }
            StmtKind::Return => {
                head.push_str("RETURN;");
                self.line(depth, &head);
            }
            StmtKind::Exit => {
                head.push_str("EXIT;");
                self.line(depth, &head);
            }
            StmtKind::If {
                branches,
                else_body,
            } => {
                for (i, b) in branches.iter().enumerate() {
                    let mut l = if i == 0 {
                        std::mem::take(&mut head) + "IF "
                    } else {
                        "ELSIF ".to_string()
                    };
                    write_expr(&mut l, &b.cond, 0);
                    l.push_str(" THEN");
                    self.line(depth, &l);
                    self.stmts(depth + 1, &b.body);
                }
                if let Some(e) = else_body {
                    self.line(depth, "ELSE");
                    self.stmts(depth + 1, e);
                }
                self.line(depth, "END_IF;");
            }
            StmtKind::Case {
                selector,
                arms,
                else_body,
            } => {
                head.push_str("CASE ");
                write_expr(&mut head, selector, 0);
                head.push_str(" OF");
                self.line(depth, &head);
                for arm in arms {
                    let labels: Vec<String> = arm.labels.iter().map(|l| l.to_string()).collect();
                    self.line(depth, &format!("{}:", labels.join(", ")));
                    self.stmts(depth + 1, &arm.body);
                }
                if let Some(e) = else_body {
                    self.line(depth, "ELSE");
                    self.stmts(depth + 1, e);
                }
                self.line(depth, "END_CASE;");
            }
            StmtKind::For {
                var,
                from,
                to,
                by,
                body,
            } => {
                let _ = write!(head, "FOR {var} := ");
                write_expr(&mut head, from, 0);
                head.push_str(" TO ");
                write_expr(&mut head, to, 0);
                if let Some(b) = by {
                    head.push_str(" BY ");
                    write_expr(&mut head, b, 0);
                }
                head.push_str(" DO");
                self.line(depth, &head);
                self.stmts(depth + 1, body);
                self.line(depth, "END_FOR;");
            }
            StmtKind::While { cond, body } => {
                head.push_str("WHILE ");
                write_expr(&mut head, cond, 0);
                head.push_str(" DO");
                self.line(depth, &head);
                self.stmts(depth + 1, body);
                self.line(depth, "END_WHILE;");
            }
            StmtKind::Repeat { body, until } => {
                head.push_str("REPEAT");
                self.line(depth, &head);
                self.stmts(depth + 1, body);
                let mut l = "UNTIL ".to_string();
                write_expr(&mut l, until, 0);
                self.line(depth, &l);
                self.line(depth, "END_REPEAT;");
            }
        }
    }

    fn var_blocks(&mut self, vars: &[VarDecl], top_level: bool) {
        let keyword = |s: Storage| match s {
            Storage::Input | Storage::ParamIn => "VAR_INPUT",
            Storage::Output | Storage::ParamOut => "VAR_OUTPUT",
            Storage::Local => "VAR",
            Storage::Global => "VAR_GLOBAL",
        };
        let depth = usize::from(!top_level);
        let mut current: Option<&str> = None;
        for v in vars {
            let kw = keyword(v.storage);
            if current != Some(kw) {
                if current.is_some() {
                    self.line(depth.saturating_sub(1), "END_VAR");
                }
                self.line(depth.saturating_sub(1), kw);
                current = Some(kw);
            }
            let mut l = format!("{} : {}", v.name, v.data_type.keyword());
            if let Some(init) = &v.init {
                l.push_str(" := ");
                write_literal(&mut l, init);
            }
            l.push(';');
            self.line(depth.max(1), &l);
        }
        if current.is_some() {
            self.line(depth.saturating_sub(1), "END_VAR");
        }
    }

    fn pou(&mut self, pou: &PouDecl) {
        let mut head = format!("{} {}", pou.kind.keyword(), pou.name);
        if let Some(t) = &pou.return_type {
            let _ = write!(head, " : {}", t.keyword());
        }
        self.line(0, &head);
        self.var_blocks(&pou.vars, false);
        match &pou.body {
            Body::St(stmts) => self.stmts(1, stmts),
            Body::Sfc(chart) => {
                for step in &chart.steps {
                    let mut l = format!("STEP {}", step.name);
                    if step.initial {
                        l.push_str(" INITIAL");
                    }
                    self.line(1, &l);
                    for a in &step.actions {
                        self.line(
                            2,
                            &format!("ACTION {} QUALIFIER {}", a.action, a.qualifier.as_str()),
                        );
                    }
                    self.line(1, "END_STEP");
                }
                for t in &chart.transitions {
                    let mut l = format!("TRANSITION FROM {} TO {} WHEN ", t.from, t.to);
                    write_expr(&mut l, &t.cond, 0);
                    l.push_str(" END_TRANSITION");
                    self.line(1, &l);
                }
            }
        }
        for a in &pou.actions {
            self.line(0, &format!("ACTION {}:", a.name));
            self.stmts(1, &a.body);
            self.line(0, "END_ACTION");
        }
        let end = match pou.kind {
            PouKind::Program => "END_PROGRAM",
            PouKind::FunctionBlock => "END_FUNCTION_BLOCK",
            PouKind::Function => "END_FUNCTION",
        };
        self.line(0, end);
    }

    fn trace_runtime(&mut self, tr: &TraceRuntimeDecl) {
        self.line(0, "TRACE_RUNTIME");
        self.line(1, &format!("{} : ARRAY[0..{}] OF BOOL;", tr.array, tr.max_tp));
        self.line(1, &format!("RECORD {};", tr.record));
        self.line(1, &format!("RESET {};", tr.reset));
        self.line(1, &format!("SAVE {};", tr.save));
        self.line(1, &format!("STEP_ACTIONS {};", tr.step_action_prefix));
        self.line(0, "END_TRACE_RUNTIME");
    }
}

/// Renders every file of the project. Global declarations of a file are
/// emitted before its POUs.
pub fn pretty_print(project: &SourceProject) -> Vec<(String, String)> {
    let trace = project.trace_runtime.as_ref();
    project
        .files
        .iter()
        .enumerate()
        .map(|(idx, file)| {
            let idx = idx as u32;
            let mut p = Printer {
                out: String::new(),
                trace,
            };
            if let Some(tr) = trace.filter(|t| t.file == idx) {
                p.trace_runtime(tr);
            }
            let globals: Vec<VarDecl> = project
                .globals
                .iter()
                .filter(|g| g.loc.file == idx)
                .cloned()
                .collect();
            if !globals.is_empty() {
                if !p.out.is_empty() {
                    p.out.push('\n');
                }
                p.var_blocks(&globals, true);
            }
            for pou in project.pous.iter().filter(|p| p.loc.file == idx) {
                if !p.out.is_empty() {
                    p.out.push('\n');
                }
                p.pou(pou);
            }
            (file.path.clone(), p.out)
        })
        .collect()
}
