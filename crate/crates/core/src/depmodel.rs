//! Dependency model: project structure and intra-POU control flow as one
//! directed graph, with sequentially numbered basic blocks.
//!
//! Exploration starts at the tasks (in declaration order). Each reached POU
//! is walked completely (body, then actions in declaration order) before
//! its callees are explored depth-first, so block numbering is a pure
//! function of the source. POUs that are never called get no node.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::frontend::ast::*;
use crate::frontend::resolve::{callee_pou, resolve_call, CallTarget};
use crate::frontend::expr_to_string;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Project,
    Task,
    Pou,
    Action,
    Step,
    BasicBlock,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Project => "project",
            NodeKind::Task => "task",
            NodeKind::Pou => "pou",
            NodeKind::Action => "action",
            NodeKind::Step => "step",
            NodeKind::BasicBlock => "block",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Qualified name. Blocks carry the name of their owner (`Pou` or
    /// `Pou.Action`); steps are `Pou.Step`.
    pub name: String,
    pub sequential_id: Option<u32>,
    /// Declaration location (POU, action, step) or first statement (block).
    pub loc: Option<SourceLoc>,
    /// Locations of the statements directly contained in a block, in order.
    /// Nested arm bodies belong to their own blocks.
    pub stmt_locs: Vec<SourceLoc>,
}

impl DepNode {
    /// First statement location and statement count of a block.
    pub fn stmt_span(&self) -> Option<(SourceLoc, usize)> {
        self.stmt_locs.first().map(|l| (*l, self.stmt_locs.len()))
    }

    pub fn label(&self) -> String {
        match self.sequential_id {
            Some(id) => format!("{} #{}", self.name, id),
            None => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeKind {
    Contains,
    Calls,
    /// Control-flow progression between blocks, labelled with the
    /// condition under which it is taken.
    JumpsTo(String),
    SfcTransition(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepEdge {
    pub source: NodeId,
    pub target: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DependencyModel {
    pub nodes: Vec<DepNode>,
    pub edges: Vec<DepEdge>,
    /// Task nodes, in declaration order.
    pub roots: Vec<NodeId>,
}

impl DependencyModel {
    pub fn node(&self, id: NodeId) -> &DepNode {
        &self.nodes[id.0]
    }

    pub fn project_node(&self) -> NodeId {
        NodeId(0)
    }

    /// Contains-children of a node, in insertion order.
    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|e| e.source == id && e.kind == EdgeKind::Contains)
            .map(|e| e.target)
            .collect()
    }

    /// Contains-parent of a node (none for the project root).
    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.edges
            .iter()
            .find(|e| e.target == id && e.kind == EdgeKind::Contains)
            .map(|e| e.source)
    }

    pub fn find(&self, kind: NodeKind, name: &str) -> Option<&DepNode> {
        self.nodes.iter().find(|n| n.kind == kind && n.name == name)
    }

    pub fn block(&self, sequential_id: u32) -> Option<&DepNode> {
        self.nodes
            .iter()
            .find(|n| n.sequential_id == Some(sequential_id))
    }

    pub fn edges_from(&self, id: NodeId) -> impl Iterator<Item = &DepEdge> {
        self.edges.iter().filter(move |e| e.source == id)
    }

    /// Graphviz rendering; edge labels carry branch and transition
    /// conditions.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dependency_model {\n    rankdir=TB;\n");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Project => "doubleoctagon",
                NodeKind::Task => "hexagon",
                NodeKind::Pou => "box",
                NodeKind::Action => "component",
                NodeKind::Step => "box3d",
                NodeKind::BasicBlock => "ellipse",
            };
            let _ = writeln!(
                out,
                "    n{} [label=\"{}\", shape={}];",
                n.id.0,
                dot_escape(&n.label()),
                shape
            );
        }
        for e in &self.edges {
            let attrs = match &e.kind {
                EdgeKind::Contains => "style=dotted".to_string(),
                EdgeKind::Calls => "style=bold, label=\"calls\"".to_string(),
                EdgeKind::JumpsTo(c) => format!("label=\"{}\"", dot_escape(c)),
                EdgeKind::SfcTransition(c) => {
                    format!("style=dashed, label=\"{}\"", dot_escape(c))
                }
            };
            let _ = writeln!(out, "    n{} -> n{} [{}];", e.source.0, e.target.0, attrs);
        }
        out.push_str("}\n");
        out
    }
}

pub(crate) fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Blocks ordered by sequential id.
pub fn basic_blocks(model: &DependencyModel) -> Vec<&DepNode> {
    let mut blocks: Vec<&DepNode> = model
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::BasicBlock)
        .collect();
    blocks.sort_by_key(|n| n.sequential_id);
    blocks
}

/// Names of all POUs present in the model (reachable from some task).
pub fn reachable_pous(model: &DependencyModel) -> BTreeSet<String> {
    model
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Pou)
        .map(|n| n.name.clone())
        .collect()
}

enum PendingCall {
    Pou(String),
    Action { pou: String, action: String },
}

struct Builder<'p> {
    project: &'p SourceProject,
    model: DependencyModel,
    pou_nodes: HashMap<String, NodeId>,
    /// Owner qualified name -> first block of its statement list.
    entry_blocks: HashMap<String, NodeId>,
    owner_nodes: HashMap<String, NodeId>,
    next_seq: u32,
    pending_calls: Vec<(NodeId, PendingCall)>,
}

/// Outgoing edges of a walked statement list whose target is whatever
/// follows the list.
type Dangling = Vec<(NodeId, String)>;

impl<'p> Builder<'p> {
    fn add_node(&mut self, kind: NodeKind, name: String, loc: Option<SourceLoc>) -> NodeId {
        let id = NodeId(self.model.nodes.len());
        let sequential_id = if kind == NodeKind::BasicBlock {
            let s = self.next_seq;
            self.next_seq += 1;
            Some(s)
        } else {
            None
        };
        self.model.nodes.push(DepNode {
            id,
            kind,
            name,
            sequential_id,
            loc,
            stmt_locs: Vec::new(),
        });
        id
    }

    fn add_edge(&mut self, source: NodeId, target: NodeId, kind: EdgeKind) {
        self.model.edges.push(DepEdge {
            source,
            target,
            kind,
        });
    }

    fn build(mut self) -> DependencyModel {
        let project_node = self.add_node(NodeKind::Project, "Project".into(), None);
        for task in &self.project.tasks {
            let t = self.add_node(NodeKind::Task, task.name.clone(), None);
            self.add_edge(project_node, t, EdgeKind::Contains);
            self.model.roots.push(t);
            self.visit_pou(&task.entry_pou, t);
        }
        for (block, call) in std::mem::take(&mut self.pending_calls) {
            let owner = match call {
                PendingCall::Pou(name) => name,
                PendingCall::Action { pou, action } => format!("{pou}.{action}"),
            };
            let target = self
                .entry_blocks
                .get(&owner)
                .or_else(|| self.owner_nodes.get(&owner))
                .copied();
            if let Some(target) = target {
                self.add_edge(block, target, EdgeKind::Calls);
            }
        }
        self.model
    }

    fn visit_pou(&mut self, name: &str, task: NodeId) {
        if self.pou_nodes.contains_key(name) {
            return;
        }
        let Some(pou) = self.project.pou(name) else {
            return;
        };
        let node = self.add_node(NodeKind::Pou, pou.name.clone(), Some(pou.loc));
        self.pou_nodes.insert(pou.name.clone(), node);
        self.owner_nodes.insert(pou.name.clone(), node);
        self.add_edge(task, node, EdgeKind::Contains);
        let mut callees: Vec<String> = Vec::new();

        match &pou.body {
            Body::St(stmts) => self.walk_owner(pou, stmts, node, &pou.name, &mut callees),
            Body::Sfc(chart) => {
                let mut step_nodes = HashMap::new();
                for step in &chart.steps {
                    let s = self.add_node(
                        NodeKind::Step,
                        format!("{}.{}", pou.name, step.name),
                        Some(step.loc),
                    );
                    self.add_edge(node, s, EdgeKind::Contains);
                    step_nodes.insert(step.name.as_str(), s);
                }
                for t in &chart.transitions {
                    let (from, to) = (step_nodes[t.from.as_str()], step_nodes[t.to.as_str()]);
                    self.add_edge(from, to, EdgeKind::SfcTransition(expr_to_string(&t.cond)));
                    let mut calls = Vec::new();
                    t.cond.for_each_call(&mut |c| calls.push(c));
                    for c in calls {
                        self.record_call(pou, from, c, &mut callees);
                    }
                }
            }
        }
        for action in &pou.actions {
            let qualified = format!("{}.{}", pou.name, action.name);
            let a = self.add_node(NodeKind::Action, qualified.clone(), Some(action.loc));
            self.add_edge(node, a, EdgeKind::Contains);
            self.owner_nodes.insert(qualified.clone(), a);
            self.walk_owner(pou, &action.body, a, &qualified, &mut callees);
        }
        for callee in callees {
            self.visit_pou(&callee, task);
        }
    }

    fn walk_owner(
        &mut self,
        pou: &'p PouDecl,
        stmts: &'p [Stmt],
        owner_node: NodeId,
        owner: &str,
        callees: &mut Vec<String>,
    ) {
        let (entry, dangling) = self.walk_list(pou, stmts, owner_node, owner, callees);
        if let Some(e) = entry {
            self.entry_blocks.insert(owner.to_string(), e);
        }
        // Falling off the end returns to the owner.
        for (src, cond) in dangling {
            self.add_edge(src, owner_node, EdgeKind::JumpsTo(cond));
        }
    }

    fn record_call(
        &mut self,
        pou: &'p PouDecl,
        from: NodeId,
        call: &Call,
        callees: &mut Vec<String>,
    ) {
        match resolve_call(self.project, pou, &call.target) {
            Some(CallTarget::Action(a)) => self.pending_calls.push((
                from,
                PendingCall::Action {
                    pou: pou.name.clone(),
                    action: a.name.clone(),
                },
            )),
            Some(t) => {
                if let Some(callee) = callee_pou(&t) {
                    if !callees.contains(&callee.name) {
                        callees.push(callee.name.clone());
                    }
                    self.pending_calls
                        .push((from, PendingCall::Pou(callee.name.clone())));
                }
            }
            None => {}
        }
    }

    fn walk_list(
        &mut self,
        pou: &'p PouDecl,
        stmts: &'p [Stmt],
        parent: NodeId,
        owner: &str,
        callees: &mut Vec<String>,
    ) -> (Option<NodeId>, Dangling) {
        let mut entry = None;
        let mut current: Option<NodeId> = None;
        let mut pending: Dangling = Vec::new();
        for s in stmts {
            let block = match current {
                Some(b) => b,
                None => {
                    let b = self.add_node(NodeKind::BasicBlock, owner.to_string(), Some(s.loc));
                    self.add_edge(parent, b, EdgeKind::Contains);
                    for (src, cond) in pending.drain(..) {
                        self.add_edge(src, b, EdgeKind::JumpsTo(cond));
                    }
                    entry.get_or_insert(b);
                    current = Some(b);
                    b
                }
            };
            self.model.nodes[block.0].stmt_locs.push(s.loc);
            for c in s.header_calls() {
                self.record_call(pou, block, c, callees);
            }
            if !s.is_decision() {
                continue;
            }
            for (cond, body) in decision_arms(s) {
                let (arm_entry, arm_dangling) = self.walk_list(pou, body, parent, owner, callees);
                match arm_entry {
                    Some(e) => self.add_edge(block, e, EdgeKind::JumpsTo(cond)),
                    None => pending.push((block, cond)),
                }
                pending.extend(arm_dangling);
            }
            if let Some(cond) = fallthrough_condition(s) {
                pending.push((block, cond));
            }
            current = None;
        }
        (entry, pending)
    }
}

/// `(condition, body)` for every explicit arm of a decision statement.
fn decision_arms(s: &Stmt) -> Vec<(String, &[Stmt])> {
    match &s.kind {
        StmtKind::If {
            branches,
            else_body,
        } => {
            let mut arms: Vec<(String, &[Stmt])> = branches
                .iter()
                .map(|b| (expr_to_string(&b.cond), b.body.as_slice()))
                .collect();
            if let Some(e) = else_body {
                arms.push((if_else_condition(branches), e.as_slice()));
            }
            arms
        }
        StmtKind::Case {
            selector,
            arms,
            else_body,
        } => {
            let sel = expr_to_string(selector);
            let mut out: Vec<(String, &[Stmt])> = arms
                .iter()
                .map(|a| (case_arm_condition(&sel, a), a.body.as_slice()))
                .collect();
            if let Some(e) = else_body {
                out.push((case_else_condition(&sel, arms), e.as_slice()));
            }
            out
        }
        StmtKind::For { var, to, by, body, .. } => {
            vec![(for_condition(var, to, by.as_ref()), body.as_slice())]
        }
        StmtKind::While { cond, body } => vec![(expr_to_string(cond), body.as_slice())],
        StmtKind::Repeat { body, .. } => vec![("TRUE".to_string(), body.as_slice())],
        _ => vec![],
    }
}

/// Condition of the edge to the statement after the decision when no
/// explicit arm is taken (implicit else, loop skip).
fn fallthrough_condition(s: &Stmt) -> Option<String> {
    match &s.kind {
        StmtKind::If {
            branches,
            else_body: None,
        } => Some(if_else_condition(branches)),
        StmtKind::Case {
            selector,
            arms,
            else_body: None,
        } => Some(case_else_condition(&expr_to_string(selector), arms)),
        StmtKind::For { var, to, by, .. } => Some(format!(
            "NOT ({})",
            for_condition(var, to, by.as_ref())
        )),
        StmtKind::While { cond, .. } => Some(expr_to_string(&Expr::not(cond.clone()))),
        StmtKind::Repeat { until, .. } => Some(expr_to_string(until)),
        _ => None,
    }
}

fn if_else_condition(branches: &[CondBranch]) -> String {
    let negated = branches
        .iter()
        .map(|b| Expr::not(b.cond.clone()))
        .reduce(|acc, e| Expr::binary(BinOp::And, acc, e))
        .expect("IF has at least one branch");
    expr_to_string(&negated)
}

fn case_arm_condition(sel: &str, arm: &CaseArm) -> String {
    let labels: Vec<String> = arm.labels.iter().map(|l| l.to_string()).collect();
    format!("{sel} = {}", labels.join(", "))
}

fn case_else_condition(sel: &str, arms: &[CaseArm]) -> String {
    arms.iter()
        .map(|a| format!("NOT ({})", case_arm_condition(sel, a)))
        .collect::<Vec<_>>()
        .join(" AND ")
}

fn for_condition(var: &str, to: &Expr, by: Option<&Expr>) -> String {
    let descending = matches!(by, Some(Expr::Lit(Literal::Int(v))) if *v < 0);
    let op = if descending { ">=" } else { "<=" };
    format!("{var} {op} {}", expr_to_string(to))
}

/// Builds the dependency model of a resolved project.
pub fn build_model(project: &SourceProject) -> DependencyModel {
    Builder {
        project,
        model: DependencyModel::default(),
        pou_nodes: HashMap::new(),
        entry_blocks: HashMap::new(),
        owner_nodes: HashMap::new(),
        next_seq: 0,
        pending_calls: Vec::new(),
    }
    .build()
}
