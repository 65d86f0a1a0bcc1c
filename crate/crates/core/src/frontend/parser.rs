//! Recursive-descent parser producing the unresolved syntax tree of one file.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;

const KEYWORDS: &[&str] = &[
    "IF",
    "THEN",
    "ELSIF",
    "ELSE",
    "END_IF",
    "CASE",
    "OF",
    "END_CASE",
    "FOR",
    "TO",
    "BY",
    "DO",
    "END_FOR",
    "WHILE",
    "END_WHILE",
    "REPEAT",
    "UNTIL",
    "END_REPEAT",
    "RETURN",
    "EXIT",
    "AND",
    "OR",
    "XOR",
    "NOT",
    "MOD",
    "TRUE",
    "FALSE",
    "PROGRAM",
    "END_PROGRAM",
    "FUNCTION_BLOCK",
    "END_FUNCTION_BLOCK",
    "FUNCTION",
    "END_FUNCTION",
    "VAR",
    "VAR_INPUT",
    "VAR_OUTPUT",
    "VAR_GLOBAL",
    "END_VAR",
    "ACTION",
    "END_ACTION",
    "STEP",
    "INITIAL",
    "END_STEP",
    "TRANSITION",
    "FROM",
    "WHEN",
    "END_TRANSITION",
    "QUALIFIER",
    "TRACE_RUNTIME",
    "END_TRACE_RUNTIME",
    "ARRAY",
    "BOOL",
    "INT",
    "DINT",
    "REAL",
    "TIME",
    "STRING",
];

pub fn is_keyword(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    KEYWORDS.contains(&upper.as_str())
}

/// Items of one parsed file, in source order.
#[derive(Debug, Default)]
pub struct ParsedFile {
    pub globals: Vec<VarDecl>,
    pub pous: Vec<PouDecl>,
    pub trace_runtime: Option<TraceRuntimeDecl>,
}

pub fn parse_file(file: u32, path: &str, text: &str) -> Result<ParsedFile, FrontendError> {
    let tokens = tokenize(path, text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        file,
        path,
    };
    p.file()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    TopLevel,
    Program,
    Callable,
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    file: u32,
    path: &'a str,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.pos + ahead).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn loc(&self) -> SourceLoc {
        let t = self.peek();
        SourceLoc::new(self.file, t.line, t.col)
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl Into<String>) -> FrontendError {
        let t = self.peek();
        FrontendError::Syntax {
            path: self.path.to_string(),
            line: t.line,
            col: t.col,
            message: message.into(),
        }
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Int(v) => format!("'{v}'"),
            Tok::Real(v) => format!("'{v}'"),
            Tok::Time(v) => format!("'T#{v}ms'"),
            Tok::Str(_) => "string literal".into(),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of file".into(),
        }
    }

    fn expected(&self, what: &str) -> FrontendError {
        self.error_here(format!(
            "expected {what}, found {}",
            Self::describe(&self.peek().tok)
        ))
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn at_any_kw(&self, kws: &[&str]) -> bool {
        kws.iter().any(|k| self.at_kw(k))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.expected(kw))
        }
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(s) if *s == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.expected(&format!("'{sym}'")))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.expected("identifier")),
        }
    }

    fn file(&mut self) -> PResult<ParsedFile> {
        let mut out = ParsedFile::default();
        loop {
            if self.peek().tok == Tok::Eof {
                return Ok(out);
            }
            if self.at_any_kw(&["VAR_GLOBAL", "VAR_INPUT", "VAR_OUTPUT"]) {
                out.globals.extend(self.var_block(Scope::TopLevel)?);
            } else if self.at_kw("PROGRAM") {
                out.pous.push(self.pou(PouKind::Program)?);
            } else if self.at_kw("FUNCTION_BLOCK") {
                out.pous.push(self.pou(PouKind::FunctionBlock)?);
            } else if self.at_kw("FUNCTION") {
                out.pous.push(self.pou(PouKind::Function)?);
            } else if self.at_kw("TRACE_RUNTIME") {
                if out.trace_runtime.is_some() {
                    return Err(self.error_here("duplicate TRACE_RUNTIME block"));
                }
                out.trace_runtime = Some(self.trace_runtime()?);
            } else {
                return Err(self.expected("declaration"));
            }
        }
    }

    fn var_block(&mut self, scope: Scope) -> PResult<Vec<VarDecl>> {
        let kw = match &self.advance().tok {
            Tok::Ident(s) => s.to_ascii_uppercase(),
            _ => unreachable!("caller checked for a VAR keyword"),
        };
        let storage = match (kw.as_str(), scope) {
            ("VAR_GLOBAL", Scope::TopLevel) => Storage::Global,
            ("VAR_INPUT", Scope::TopLevel | Scope::Program) => Storage::Input,
            ("VAR_OUTPUT", Scope::TopLevel | Scope::Program) => Storage::Output,
            ("VAR_INPUT", Scope::Callable) => Storage::ParamIn,
            ("VAR_OUTPUT", Scope::Callable) => Storage::ParamOut,
            ("VAR", Scope::Program | Scope::Callable) => Storage::Local,
            _ => {
                self.pos -= 1;
                return Err(self.error_here(format!("{kw} is not allowed here")));
            }
        };
        let mut vars = Vec::new();
        while !self.eat_kw("END_VAR") {
            let loc = self.loc();
            let name = self.ident()?;
            self.expect_sym(":")?;
            let data_type = self.data_type()?;
            let init = if self.eat_sym(":=") {
                Some(self.literal()?)
            } else {
                None
            };
            self.expect_sym(";")?;
            vars.push(VarDecl {
                name,
                data_type,
                storage,
                init,
                loc,
            });
        }
        Ok(vars)
    }

    fn data_type(&mut self) -> PResult<DataType> {
        if let Tok::Ident(s) = &self.peek().tok {
            if let Some(t) = DataType::from_keyword(s) {
                self.advance();
                return Ok(t);
            }
            if s.eq_ignore_ascii_case("ARRAY") {
                return Err(self.error_here("array types are not supported in user programs"));
            }
        }
        Ok(DataType::Fb(self.ident()?))
    }

    fn literal(&mut self) -> PResult<Literal> {
        let negative = self.eat_sym("-");
        let tok = self.peek().tok.clone();
        let lit = match tok {
            Tok::Int(v) => Literal::Int(if negative { -v } else { v }),
            Tok::Real(v) => Literal::Real(if negative { -v } else { v }),
            Tok::Time(v) if !negative => Literal::Time(v),
            Tok::Str(s) if !negative => Literal::Str(s),
            Tok::Ident(ref s) if !negative && s.eq_ignore_ascii_case("TRUE") => Literal::Bool(true),
            Tok::Ident(ref s) if !negative && s.eq_ignore_ascii_case("FALSE") => {
                Literal::Bool(false)
            }
            _ => return Err(self.expected("literal")),
        };
        self.advance();
        Ok(lit)
    }

    fn pou(&mut self, kind: PouKind) -> PResult<PouDecl> {
        let loc = self.loc();
        self.advance();
        let name = self.ident()?;
        let return_type = if kind == PouKind::Function {
            if !self.eat_sym(":") {
                return Err(self.expected("':' and return type for FUNCTION"));
            }
            Some(self.data_type()?)
        } else {
            None
        };
        let scope = if kind == PouKind::Program {
            Scope::Program
        } else {
            Scope::Callable
        };
        let mut vars = Vec::new();
        while self.at_any_kw(&["VAR", "VAR_INPUT", "VAR_OUTPUT", "VAR_GLOBAL"]) {
            vars.extend(self.var_block(scope)?);
        }
        let end_kw = match kind {
            PouKind::Program => "END_PROGRAM",
            PouKind::FunctionBlock => "END_FUNCTION_BLOCK",
            PouKind::Function => "END_FUNCTION",
        };
        let body = if self.at_kw("STEP") || self.at_kw("TRANSITION") {
            Body::Sfc(self.sfc_chart()?)
        } else {
            Body::St(self.stmt_list(&["ACTION", end_kw])?)
        };
        let mut actions = Vec::new();
        while self.at_kw("ACTION") {
            let aloc = self.loc();
            self.advance();
            let aname = self.ident()?;
            self.expect_sym(":")?;
            let body = self.stmt_list(&["END_ACTION"])?;
            self.expect_kw("END_ACTION")?;
            actions.push(ActionDecl {
                name: aname,
                body,
                loc: aloc,
            });
        }
        self.expect_kw(end_kw)?;
        Ok(PouDecl {
            name,
            kind,
            return_type,
            vars,
            body,
            actions,
            loc,
        })
    }

    fn sfc_chart(&mut self) -> PResult<SfcChart> {
        let mut chart = SfcChart::default();
        loop {
            if self.at_kw("STEP") {
                let loc = self.loc();
                self.advance();
                let name = self.ident()?;
                let initial = self.eat_kw("INITIAL");
                let mut actions = Vec::new();
                while self.eat_kw("ACTION") {
                    let action = self.ident()?;
                    self.expect_kw("QUALIFIER")?;
                    let qualifier = match &self.peek().tok {
                        Tok::Ident(q) if q.eq_ignore_ascii_case("N") => Qualifier::N,
                        Tok::Ident(q) if q.eq_ignore_ascii_case("P1") => Qualifier::P1,
                        Tok::Ident(q) if q.eq_ignore_ascii_case("P0") => Qualifier::P0,
                        _ => return Err(self.expected("action qualifier N, P1 or P0")),
                    };
                    self.advance();
                    self.eat_sym(";");
                    actions.push(ActionRef { action, qualifier });
                }
                self.expect_kw("END_STEP")?;
                chart.steps.push(SfcStep {
                    name,
                    initial,
                    actions,
                    loc,
                });
            } else if self.at_kw("TRANSITION") {
                let loc = self.loc();
                self.advance();
                self.expect_kw("FROM")?;
                if self.at_sym("(") {
                    return Err(
                        self.error_here("simultaneous (parallel) SFC branches are not supported")
                    );
                }
                let from = self.ident()?;
                self.expect_kw("TO")?;
                if self.at_sym("(") {
                    return Err(
                        self.error_here("simultaneous (parallel) SFC branches are not supported")
                    );
                }
                let to = self.ident()?;
                self.expect_kw("WHEN")?;
                let cond = self.expr()?;
                self.expect_kw("END_TRANSITION")?;
                chart.transitions.push(SfcTransition {
                    from,
                    to,
                    cond,
                    loc,
                });
            } else {
                return Ok(chart);
            }
        }
    }

    fn trace_runtime(&mut self) -> PResult<TraceRuntimeDecl> {
        self.advance();
        let array = self.ident()?;
        self.expect_sym(":")?;
        self.expect_kw("ARRAY")?;
        self.expect_sym("[")?;
        match self.advance().tok {
            Tok::Int(0) => {}
            _ => {
                self.pos -= 1;
                return Err(self.expected("array lower bound 0"));
            }
        }
        self.expect_sym("..")?;
        let negative = self.eat_sym("-");
        let max_tp = match self.peek().tok {
            Tok::Int(v) => {
                self.advance();
                if negative {
                    -v
                } else {
                    v
                }
            }
            _ => return Err(self.expected("array upper bound")),
        };
        self.expect_sym("]")?;
        self.expect_kw("OF")?;
        self.expect_kw("BOOL")?;
        self.expect_sym(";")?;
        let named = |p: &mut Self, kw: &str| -> PResult<String> {
            p.expect_kw(kw)?;
            let n = p.ident()?;
            p.expect_sym(";")?;
            Ok(n)
        };
        let record = named(self, "RECORD")?;
        let reset = named(self, "RESET")?;
        let save = named(self, "SAVE")?;
        let step_action_prefix = named(self, "STEP_ACTIONS")?;
        self.expect_kw("END_TRACE_RUNTIME")?;
        Ok(TraceRuntimeDecl {
            array,
            max_tp,
            record,
            reset,
            save,
            step_action_prefix,
            file: self.file,
        })
    }

    fn stmt_list(&mut self, terminators: &[&str]) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while !self.at_any_kw(terminators) {
            if self.peek().tok == Tok::Eof {
                return Err(self.expected(&terminators.join(" or ")));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    /// Statement list inside a CASE arm: ends at the next label, ELSE or END_CASE.
    fn case_arm_body(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            if self.at_any_kw(&["ELSE", "END_CASE"])
                || matches!(self.peek().tok, Tok::Int(_))
                || self.at_sym("-")
            {
                return Ok(out);
            }
            if self.peek().tok == Tok::Eof {
                return Err(self.expected("END_CASE"));
            }
            out.push(self.stmt()?);
        }
    }

    fn end_kw(&mut self, kw: &str) -> PResult<()> {
        self.expect_kw(kw)?;
        self.eat_sym(";");
        Ok(())
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        let kind = if self.eat_kw("IF") {
            let mut branches = Vec::new();
            let cond = self.expr()?;
            self.expect_kw("THEN")?;
            let body = self.stmt_list(&["ELSIF", "ELSE", "END_IF"])?;
            branches.push(CondBranch { cond, body });
            while self.eat_kw("ELSIF") {
                let cond = self.expr()?;
                self.expect_kw("THEN")?;
                let body = self.stmt_list(&["ELSIF", "ELSE", "END_IF"])?;
                branches.push(CondBranch { cond, body });
            }
            let else_body = if self.eat_kw("ELSE") {
                Some(self.stmt_list(&["END_IF"])?)
            } else {
                None
            };
            self.end_kw("END_IF")?;
            StmtKind::If {
                branches,
                else_body,
            }
        } else if self.eat_kw("CASE") {
            let selector = self.expr()?;
            self.expect_kw("OF")?;
            let mut arms = Vec::new();
            while matches!(self.peek().tok, Tok::Int(_)) || self.at_sym("-") {
                let mut labels = vec![self.case_label()?];
                while self.eat_sym(",") {
                    labels.push(self.case_label()?);
                }
                self.expect_sym(":")?;
                let body = self.case_arm_body()?;
                arms.push(CaseArm { labels, body });
            }
            if arms.is_empty() {
                return Err(self.expected("CASE label"));
            }
            let else_body = if self.eat_kw("ELSE") {
                Some(self.stmt_list(&["END_CASE"])?)
            } else {
                None
            };
            self.end_kw("END_CASE")?;
            StmtKind::Case {
                selector,
                arms,
                else_body,
            }
        } else if self.eat_kw("FOR") {
            let var = self.ident()?;
            self.expect_sym(":=")?;
            let from = self.expr()?;
            self.expect_kw("TO")?;
            let to = self.expr()?;
            let by = if self.eat_kw("BY") {
                Some(self.expr()?)
            } else {
                None
            };
            self.expect_kw("DO")?;
            let body = self.stmt_list(&["END_FOR"])?;
            self.end_kw("END_FOR")?;
            StmtKind::For {
                var,
                from,
                to,
                by,
                body,
            }
        } else if self.eat_kw("WHILE") {
            let cond = self.expr()?;
            self.expect_kw("DO")?;
            let body = self.stmt_list(&["END_WHILE"])?;
            self.end_kw("END_WHILE")?;
            StmtKind::While { cond, body }
        } else if self.eat_kw("REPEAT") {
            let body = self.stmt_list(&["UNTIL"])?;
            self.expect_kw("UNTIL")?;
            let until = self.expr()?;
            self.end_kw("END_REPEAT")?;
            StmtKind::Repeat { body, until }
        } else if self.eat_kw("RETURN") {
            self.expect_sym(";")?;
            StmtKind::Return
        } else if self.eat_kw("EXIT") {
            self.expect_sym(";")?;
            StmtKind::Exit
        } else {
            let name = self.ident()?;
            if self.at_sym("(") {
                let args = self.call_args()?;
                self.expect_sym(";")?;
                StmtKind::Call(Call { target: name, args })
            } else {
                let member = if self.eat_sym(".") {
                    Some(self.ident()?)
                } else {
                    None
                };
                if !self.eat_sym(":=") {
                    return Err(self.expected("':=' or '('"));
                }
                let value = self.expr()?;
                self.expect_sym(";")?;
                StmtKind::Assign {
                    target: VarRef { name, member },
                    value,
                }
            }
        };
        Ok(Stmt { kind, loc })
    }

    fn case_label(&mut self) -> PResult<CaseLabel> {
        let lo = self.signed_int()?;
        if self.eat_sym("..") {
            let hi = self.signed_int()?;
            if hi < lo {
                return Err(self.error_here("empty CASE range"));
            }
            Ok(CaseLabel::Range(lo, hi))
        } else {
            Ok(CaseLabel::Value(lo))
        }
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let negative = self.eat_sym("-");
        match self.peek().tok {
            Tok::Int(v) => {
                self.advance();
                Ok(if negative { -v } else { v })
            }
            _ => Err(self.expected("integer")),
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Arg>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if self.eat_sym(")") {
            return Ok(args);
        }
        loop {
            let named = matches!(self.peek_at(0), Tok::Ident(s) if !is_keyword(s))
                && matches!(self.peek_at(1), Tok::Sym(":="));
            if matches!(self.peek_at(1), Tok::Sym("=>")) {
                return Err(self.error_here("output argument binding '=>' is not supported"));
            }
            let name = if named {
                let n = self.ident()?;
                self.advance();
                Some(n)
            } else {
                None
            };
            let value = self.expr()?;
            args.push(Arg { name, value });
            if self.eat_sym(")") {
                return Ok(args);
            }
            self.expect_sym(",")?;
        }
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        Some(match &self.peek().tok {
            Tok::Ident(s) => match s.to_ascii_uppercase().as_str() {
                "OR" => BinOp::Or,
                "XOR" => BinOp::Xor,
                "AND" => BinOp::And,
                "MOD" => BinOp::Mod,
                _ => return None,
            },
            Tok::Sym("&") => BinOp::And,
            Tok::Sym("=") => BinOp::Eq,
            Tok::Sym("<>") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("+") => BinOp::Add,
            Tok::Sym("-") => BinOp::Sub,
            Tok::Sym("*") => BinOp::Mul,
            Tok::Sym("/") => BinOp::Div,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("-") {
            // A minus directly followed by a number is a negative literal.
            match self.peek().tok {
                Tok::Int(v) => {
                    self.advance();
                    return Ok(Expr::Lit(Literal::Int(-v)));
                }
                Tok::Real(v) => {
                    self.advance();
                    return Ok(Expr::Lit(Literal::Real(-v)));
                }
                _ => {}
            }
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        if self.eat_kw("NOT") {
            let inner = self.unary()?;
            return Ok(Expr::not(inner));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let tok = self.peek().tok.clone();
        match tok {
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::Lit(Literal::Int(v)))
            }
            Tok::Real(v) => {
                self.advance();
                Ok(Expr::Lit(Literal::Real(v)))
            }
            Tok::Time(v) => {
                self.advance();
                Ok(Expr::Lit(Literal::Time(v)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Tok::Sym("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("TRUE") => {
                self.advance();
                Ok(Expr::Lit(Literal::Bool(true)))
            }
            Tok::Ident(s) if s.eq_ignore_ascii_case("FALSE") => {
                self.advance();
                Ok(Expr::Lit(Literal::Bool(false)))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.at_sym("(") {
                    let args = self.call_args()?;
                    return Ok(Expr::Call(Call { target: name, args }));
                }
                let member = if self.eat_sym(".") {
                    Some(self.ident()?)
                } else {
                    None
                };
                Ok(Expr::Var(VarRef { name, member }))
            }
            _ => Err(self.expected("expression")),
        }
    }
}
