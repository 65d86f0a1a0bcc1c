//! Statement and expression evaluation.

use crate::frontend::ast::*;
use crate::frontend::resolve::{resolve_call, CallTarget, FbType, TraceCall};

use super::value::{self, Value};
use super::{PlcState, Runtime, RuntimeError};

enum Flow {
    Normal,
    Exit,
    Return,
}

/// Activation record: the POU being executed and where its variables live.
struct Frame<'p> {
    pou: &'p PouDecl,
    pou_idx: usize,
    /// Instance holding the variables of a program or function block.
    inst: Option<usize>,
    /// Variables of a function call; the last slot holds the result.
    temps: Vec<Value>,
}

enum Place {
    Local(usize),
    Result,
    Global(usize),
}

pub(super) struct Exec<'r> {
    rt: &'r Runtime,
    st: &'r mut PlcState,
    budget: u64,
    depth: u32,
}

type R<T> = Result<T, RuntimeError>;

impl<'r> Exec<'r> {
    pub(super) fn new(rt: &'r Runtime, st: &'r mut PlcState) -> Self {
        Exec {
            rt,
            st,
            budget: rt.config.max_statements,
            depth: 0,
        }
    }

    fn fault(&self, loc: SourceLoc, message: impl Into<String>) -> RuntimeError {
        RuntimeError::Fault {
            path: self.rt.project.file_path(loc.file).to_string(),
            line: loc.line,
            col: loc.col,
            message: message.into(),
        }
    }

    fn tick(&mut self, loc: SourceLoc) -> R<()> {
        if self.budget == 0 {
            return Err(self.fault(loc, "watchdog: statement budget exceeded"));
        }
        self.budget -= 1;
        Ok(())
    }

    /// Executes the body of a program or function block instance.
    pub(super) fn run_pou(&mut self, pou_idx: usize, inst: usize) -> R<()> {
        let rt = self.rt;
        let pou = &rt.project.pous[pou_idx];
        self.depth += 1;
        if self.depth > rt.max_call_depth {
            return Err(self.fault(pou.loc, "call depth exceeded"));
        }
        let mut frame = Frame {
            pou,
            pou_idx,
            inst: Some(inst),
            temps: Vec::new(),
        };
        match &pou.body {
            Body::St(stmts) => {
                self.exec_block(stmts, &mut frame)?;
            }
            Body::Sfc(chart) => self.run_chart(chart, &mut frame, inst)?,
        }
        self.depth -= 1;
        Ok(())
    }

    fn run_chart(&mut self, chart: &SfcChart, frame: &mut Frame<'_>, inst: usize) -> R<()> {
        let sfc = self.st.instances[inst].sfc.clone().expect("chart instance");
        let step = &chart.steps[sfc.active];
        if sfc.p1_pending {
            if let Some(log) = self.st.log.as_mut() {
                log.steps.insert((frame.pou.name.clone(), step.name.clone()));
            }
            self.run_qualified(step, Qualifier::P1, frame)?;
            self.st.instances[inst].sfc.as_mut().expect("chart").p1_pending = false;
        }
        self.run_qualified(step, Qualifier::N, frame)?;
        for t in chart.transitions.iter().filter(|t| t.from == step.name) {
            self.tick(t.loc)?;
            if self.eval_bool(&t.cond, frame, t.loc)? {
                self.run_qualified(step, Qualifier::P0, frame)?;
                let next = chart.step_index(&t.to).expect("validated transition");
                *self.st.instances[inst].sfc.as_mut().expect("chart") = super::SfcState {
                    active: next,
                    p1_pending: true,
                };
                break;
            }
        }
        Ok(())
    }

    fn run_qualified(&mut self, step: &SfcStep, q: Qualifier, frame: &mut Frame<'_>) -> R<()> {
        for r in step.actions.iter().filter(|r| r.qualifier == q) {
            let action = frame.pou.action(&r.action).expect("validated action");
            self.run_action(action, frame, step.loc)?;
        }
        Ok(())
    }

    fn run_action(&mut self, action: &ActionDecl, frame: &mut Frame<'_>, loc: SourceLoc) -> R<()> {
        self.depth += 1;
        if self.depth > self.rt.max_call_depth {
            return Err(self.fault(loc, "call depth exceeded"));
        }
        // A RETURN inside an action leaves only the action.
        self.exec_block(&action.body, frame)?;
        self.depth -= 1;
        Ok(())
    }

    fn exec_block(&mut self, stmts: &[Stmt], frame: &mut Frame<'_>) -> R<Flow> {
        for s in stmts {
            match self.exec_stmt(s, frame)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn is_trace_stmt(&self, s: &Stmt) -> bool {
        match (&s.kind, &self.rt.project.trace_runtime) {
            (StmtKind::Call(c), Some(tr)) => tr.is_trace_call(&c.target),
            _ => false,
        }
    }

    fn exec_stmt(&mut self, s: &Stmt, frame: &mut Frame<'_>) -> R<Flow> {
        self.tick(s.loc)?;
        if self.st.log.is_some() && !self.is_trace_stmt(s) {
            self.st.log.as_mut().expect("checked").statements.insert(s.loc);
        }
        let loc = s.loc;
        match &s.kind {
            StmtKind::Assign { target, value } => {
                let v = self.eval(value, frame, loc)?;
                self.assign(target, v, frame, loc)?;
            }
            StmtKind::If {
                branches,
                else_body,
            } => {
                for b in branches {
                    if self.eval_bool(&b.cond, frame, loc)? {
                        return self.exec_block(&b.body, frame);
                    }
                }
                if let Some(e) = else_body {
                    return self.exec_block(e, frame);
                }
            }
            StmtKind::Case {
                selector,
                arms,
                else_body,
            } => {
                let v = match self.eval(selector, frame, loc)? {
                    Value::Int(v) => v,
                    other => {
                        return Err(self.fault(
                            loc,
                            format!("CASE selector must be an integer, got {}", other.type_name()),
                        ))
                    }
                };
                if let Some(arm) = arms.iter().find(|a| a.labels.iter().any(|l| l.matches(v))) {
                    return self.exec_block(&arm.body, frame);
                }
                if let Some(e) = else_body {
                    return self.exec_block(e, frame);
                }
            }
            StmtKind::For {
                var,
                from,
                to,
                by,
                body,
            } => {
                let target = VarRef::simple(var.clone());
                let start = self.eval_int(from, frame, loc)?;
                let end = self.eval_int(to, frame, loc)?;
                let step = match by {
                    Some(b) => self.eval_int(b, frame, loc)?,
                    None => 1,
                };
                if step == 0 {
                    return Err(self.fault(loc, "FOR step is zero"));
                }
                self.assign(&target, Value::Int(start), frame, loc)?;
                loop {
                    self.tick(loc)?;
                    let Value::Int(k) = self.read(&target, frame, loc)? else {
                        unreachable!("FOR variable is an integer")
                    };
                    if (step > 0 && k > end) || (step < 0 && k < end) {
                        break;
                    }
                    match self.exec_block(body, frame)? {
                        Flow::Normal => {}
                        Flow::Exit => break,
                        Flow::Return => return Ok(Flow::Return),
                    }
                    let Value::Int(k) = self.read(&target, frame, loc)? else {
                        unreachable!("FOR variable is an integer")
                    };
                    self.assign(&target, Value::Int(k.wrapping_add(step)), frame, loc)?;
                }
            }
            StmtKind::While { cond, body } => loop {
                self.tick(loc)?;
                if !self.eval_bool(cond, frame, loc)? {
                    break;
                }
                match self.exec_block(body, frame)? {
                    Flow::Normal => {}
                    Flow::Exit => break,
                    Flow::Return => return Ok(Flow::Return),
                }
            },
            StmtKind::Repeat { body, until } => loop {
                self.tick(loc)?;
                match self.exec_block(body, frame)? {
                    Flow::Normal => {}
                    Flow::Exit => break,
                    Flow::Return => return Ok(Flow::Return),
                }
                if self.eval_bool(until, frame, loc)? {
                    break;
                }
            },
            StmtKind::Call(c) => {
                self.call(c, frame, loc)?;
            }
            StmtKind::Return => return Ok(Flow::Return),
            StmtKind::Exit => return Ok(Flow::Exit),
        }
        Ok(Flow::Normal)
    }

    fn place(&self, name: &str, frame: &Frame<'_>) -> Option<Place> {
        if let Some(&i) = self.rt.var_index[frame.pou_idx].get(name) {
            return Some(Place::Local(i));
        }
        if frame.pou.kind == PouKind::Function && frame.pou.name == name {
            return Some(Place::Result);
        }
        self.rt.global_index.get(name).map(|&i| Place::Global(i))
    }

    fn place_type(&self, place: &Place, frame: &Frame<'_>) -> DataType {
        match place {
            Place::Local(i) => frame.pou.vars[*i].data_type.clone(),
            Place::Result => frame.pou.return_type.clone().expect("function"),
            Place::Global(i) => self.rt.project.globals[*i].data_type.clone(),
        }
    }

    fn load(&self, place: &Place, frame: &Frame<'_>) -> Value {
        match place {
            Place::Local(i) => match frame.inst {
                Some(id) => self.st.instances[id].vars[*i].clone(),
                None => frame.temps[*i].clone(),
            },
            Place::Result => frame.temps[frame.pou.vars.len()].clone(),
            Place::Global(i) => self.st.globals[*i].clone(),
        }
    }

    fn store(&mut self, place: &Place, v: Value, frame: &mut Frame<'_>) {
        match place {
            Place::Local(i) => match frame.inst {
                Some(id) => self.st.instances[id].vars[*i] = v,
                None => frame.temps[*i] = v,
            },
            Place::Result => {
                let n = frame.pou.vars.len();
                frame.temps[n] = v
            }
            Place::Global(i) => self.st.globals[*i] = v,
        }
    }

    /// Instance id and member slot of `inst.member`.
    fn member_slot(&self, inst: usize, member: &str) -> Option<(usize, DataType)> {
        let instance = &self.st.instances[inst];
        match instance.pou {
            None => crate::frontend::resolve::ton_members()
                .iter()
                .position(|(n, _, _)| *n == member)
                .map(|i| (i, crate::frontend::resolve::ton_members()[i].1.clone())),
            Some(p) => self.rt.var_index[p]
                .get(member)
                .map(|&i| (i, self.rt.project.pous[p].vars[i].data_type.clone())),
        }
    }

    fn instance_of(&self, r: &VarRef, frame: &Frame<'_>, loc: SourceLoc) -> R<usize> {
        let place = self
            .place(&r.name, frame)
            .ok_or_else(|| self.fault(loc, format!("unknown variable '{}'", r.name)))?;
        match self.load(&place, frame) {
            Value::Instance(id) => Ok(id),
            _ => Err(self.fault(loc, format!("'{}' is not an instance", r.name))),
        }
    }

    fn read(&self, r: &VarRef, frame: &Frame<'_>, loc: SourceLoc) -> R<Value> {
        match &r.member {
            None => {
                let place = self
                    .place(&r.name, frame)
                    .ok_or_else(|| self.fault(loc, format!("unknown variable '{}'", r.name)))?;
                Ok(self.load(&place, frame))
            }
            Some(m) => {
                let id = self.instance_of(r, frame, loc)?;
                let (slot, _) = self
                    .member_slot(id, m)
                    .ok_or_else(|| self.fault(loc, format!("unknown member '{r}'")))?;
                Ok(self.st.instances[id].vars[slot].clone())
            }
        }
    }

    fn assign(&mut self, r: &VarRef, v: Value, frame: &mut Frame<'_>, loc: SourceLoc) -> R<()> {
        match &r.member {
            None => {
                let place = self
                    .place(&r.name, frame)
                    .ok_or_else(|| self.fault(loc, format!("unknown variable '{}'", r.name)))?;
                let t = self.place_type(&place, frame);
                let v = value::convert_for_store(v, &t).map_err(|m| self.fault(loc, m))?;
                self.store(&place, v, frame);
            }
            Some(m) => {
                let id = self.instance_of(r, frame, loc)?;
                let (slot, t) = self
                    .member_slot(id, m)
                    .ok_or_else(|| self.fault(loc, format!("unknown member '{r}'")))?;
                let v = value::convert_for_store(v, &t).map_err(|m| self.fault(loc, m))?;
                self.st.instances[id].vars[slot] = v;
            }
        }
        Ok(())
    }

    fn eval_bool(&mut self, e: &Expr, frame: &mut Frame<'_>, loc: SourceLoc) -> R<bool> {
        match self.eval(e, frame, loc)? {
            Value::Bool(b) => Ok(b),
            other => Err(self.fault(
                loc,
                format!("condition must be BOOL, got {}", other.type_name()),
            )),
        }
    }

    fn eval_int(&mut self, e: &Expr, frame: &mut Frame<'_>, loc: SourceLoc) -> R<i64> {
        match self.eval(e, frame, loc)? {
            Value::Int(v) => Ok(v),
            other => Err(self.fault(
                loc,
                format!("expected an integer, got {}", other.type_name()),
            )),
        }
    }

    fn eval(&mut self, e: &Expr, frame: &mut Frame<'_>, loc: SourceLoc) -> R<Value> {
        match e {
            Expr::Lit(l) => Ok(Value::from_literal(l)),
            Expr::Var(r) => self.read(r, frame, loc),
            Expr::Unary(op, inner) => {
                let v = self.eval(inner, frame, loc)?;
                value::unary(*op, v).map_err(|m| self.fault(loc, m))
            }
            Expr::Binary(op, l, r) => {
                let a = self.eval(l, frame, loc)?;
                let b = self.eval(r, frame, loc)?;
                value::binary(*op, a, b).map_err(|m| self.fault(loc, m))
            }
            Expr::Call(c) => self
                .call(c, frame, loc)?
                .ok_or_else(|| self.fault(loc, format!("'{}' returns no value", c.target))),
        }
    }

    fn call(&mut self, c: &Call, frame: &mut Frame<'_>, loc: SourceLoc) -> R<Option<Value>> {
        let rt = self.rt;
        let target = resolve_call(&rt.project, frame.pou, &c.target)
            .ok_or_else(|| self.fault(loc, format!("unresolved call '{}'", c.target)))?;
        match target {
            CallTarget::FbInstance { fb, .. } => {
                let id = self.instance_of(&VarRef::simple(c.target.clone()), frame, loc)?;
                for a in &c.args {
                    let v = self.eval(&a.value, frame, loc)?;
                    let name = a.name.as_deref().expect("validated named argument");
                    let (slot, t) = self
                        .member_slot(id, name)
                        .ok_or_else(|| self.fault(loc, format!("unknown parameter '{name}'")))?;
                    let v = value::convert_for_store(v, &t).map_err(|m| self.fault(loc, m))?;
                    self.st.instances[id].vars[slot] = v;
                }
                match fb {
                    FbType::Ton => self.run_ton(id),
                    FbType::User(p) => {
                        let pidx = rt.project.pou_index(&p.name).expect("resolved");
                        self.run_pou(pidx, id)?;
                    }
                }
                Ok(None)
            }
            CallTarget::Function(f) => {
                let pidx = rt.project.pou_index(&f.name).expect("resolved");
                let mut temps: Vec<Value> = f.vars.iter().map(super::initial_value).collect();
                temps.push(Value::default_for(f.return_type.as_ref().expect("function")));
                let params: Vec<usize> = f
                    .vars
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.storage == Storage::ParamIn)
                    .map(|(i, _)| i)
                    .collect();
                for (pos, a) in c.args.iter().enumerate() {
                    let v = self.eval(&a.value, frame, loc)?;
                    let slot = match &a.name {
                        Some(n) => rt.var_index[pidx][n.as_str()],
                        None => params[pos],
                    };
                    temps[slot] = value::convert_for_store(v, &f.vars[slot].data_type)
                        .map_err(|m| self.fault(loc, m))?;
                }
                self.depth += 1;
                if self.depth > rt.max_call_depth {
                    return Err(self.fault(loc, "call depth exceeded"));
                }
                let mut callee = Frame {
                    pou: f,
                    pou_idx: pidx,
                    inst: None,
                    temps,
                };
                if let Body::St(stmts) = &f.body {
                    self.exec_block(stmts, &mut callee)?;
                }
                self.depth -= 1;
                Ok(callee.temps.pop())
            }
            CallTarget::Action(a) => {
                self.run_action(a, frame, loc)?;
                Ok(None)
            }
            CallTarget::Trace(TraceCall::Record) => {
                let i = self.eval_int(&c.args[0].value, frame, loc)?;
                let n = self.st.tpa.len() as i64;
                if !(0..n).contains(&i) {
                    return Err(self.fault(
                        loc,
                        format!("trace point {i} outside 0..={}", n - 1),
                    ));
                }
                self.st.tpa[i as usize] = true;
                Ok(None)
            }
            CallTarget::Trace(TraceCall::Reset) => {
                rt.tp_reset(self.st).map_err(|e| self.fault(loc, e.to_string()))?;
                Ok(None)
            }
            CallTarget::Trace(TraceCall::Save) => {
                Err(self.fault(loc, "the trace save is driven by the test harness"))
            }
        }
    }

    fn run_ton(&mut self, id: usize) {
        let now = self.st.now_ms(&self.rt.config);
        let inst = &mut self.st.instances[id];
        let input = matches!(inst.vars[0], Value::Bool(true));
        let pt = match inst.vars[1] {
            Value::Time(t) => t,
            _ => 0,
        };
        if !input {
            inst.ton_start = None;
            inst.vars[2] = Value::Bool(false);
            inst.vars[3] = Value::Time(0);
        } else {
            let start = *inst.ton_start.get_or_insert(now);
            let et = (now - start).min(pt);
            inst.vars[2] = Value::Bool(now - start >= pt);
            inst.vars[3] = Value::Time(et);
        }
    }
}
