//! Superimposition of per-test visits and hierarchical coverage status.
//!
//! Leaves are basic blocks and SFC steps. An internal node is `Covered`
//! when every leaf below it was visited, `Uncovered` when none was, and
//! `Partial` otherwise. Nodes without any leaf below them have nothing to
//! test and count as `Covered`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depmodel::{dot_escape, DependencyModel, EdgeKind, NodeId, NodeKind};
use crate::frontend::ast::SourceProject;
use crate::testkit::ExecutionTrace;
use crate::tracedb::TracePointDatabase;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("trace '{test}' does not match the database: {message}")]
    TraceMismatch { test: String, message: String },
    #[error("duplicate test id '{0}'")]
    DuplicateTest(String),
    #[error("unknown trace point {0}")]
    UnknownPoint(u32),
    #[error("database does not match the dependency model: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageStatus {
    Uncovered,
    Partial,
    Covered,
}

impl CoverageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverageStatus::Uncovered => "uncovered",
            CoverageStatus::Partial => "partial",
            CoverageStatus::Covered => "covered",
        }
    }

    /// Status of a node from the number of leaves below it and how many of
    /// them were visited.
    pub fn from_counts(covered: usize, leaves: usize) -> Self {
        if covered == leaves {
            CoverageStatus::Covered
        } else if covered == 0 {
            CoverageStatus::Uncovered
        } else {
            CoverageStatus::Partial
        }
    }
}

/// Visit flags of every test for every trace point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitMatrix {
    pub tests: Vec<String>,
    pub points: Vec<u32>,
    /// `visited[test][column]`.
    pub visited: Vec<Vec<bool>>,
}

impl VisitMatrix {
    fn column(&self, id: u32) -> Result<usize, CoverageError> {
        self.points
            .binary_search(&id)
            .map_err(|_| CoverageError::UnknownPoint(id))
    }

    /// True if any test visited the point.
    pub fn was_visited(&self, id: u32) -> Result<bool, CoverageError> {
        let c = self.column(id)?;
        Ok(self.visited.iter().any(|row| row[c]))
    }

    /// Column-wise OR over all tests.
    pub fn union(&self) -> Vec<bool> {
        (0..self.points.len())
            .map(|c| self.visited.iter().any(|row| row[c]))
            .collect()
    }

    pub fn visited_count(&self, test: usize) -> usize {
        self.visited[test].iter().filter(|b| **b).count()
    }
}

/// Builds the visit matrix; every trace must cover exactly the database's
/// ids.
pub fn superimpose(
    traces: &[ExecutionTrace],
    db: &TracePointDatabase,
) -> Result<VisitMatrix, CoverageError> {
    let points: Vec<u32> = db.ids().collect();
    let mut seen = BTreeSet::new();
    let mut visited = Vec::with_capacity(traces.len());
    for t in traces {
        if !seen.insert(t.test_id.as_str()) {
            return Err(CoverageError::DuplicateTest(t.test_id.clone()));
        }
        if t.visits.len() != points.len() || !points.iter().all(|p| t.visits.contains_key(p)) {
            return Err(CoverageError::TraceMismatch {
                test: t.test_id.clone(),
                message: format!("{} entries for {} trace points", t.visits.len(), points.len()),
            });
        }
        visited.push(points.iter().map(|p| t.visits[p]).collect());
    }
    Ok(VisitMatrix {
        tests: traces.iter().map(|t| t.test_id.clone()).collect(),
        points,
        visited,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCoverage {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    pub status: CoverageStatus,
    pub leaves: usize,
    pub covered_leaves: usize,
    /// Trace point of a leaf.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace_point: Option<u32>,
}

/// Root of a maximal uncovered subtree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub node: NodeId,
    pub kind: NodeKind,
    pub name: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
    /// Leaves inside the subtree.
    pub leaves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub covered: usize,
    pub partial: usize,
    pub uncovered: usize,
}

/// SFC transition status, derived from the activation of its target step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCoverage {
    pub from: String,
    pub to: String,
    pub condition: String,
    pub traversed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub fingerprint: String,
    pub tests: Vec<String>,
    /// Status of every model node, indexed by node id.
    pub nodes: Vec<NodeCoverage>,
    /// Maximal uncovered subtrees, ordered by file and line.
    pub untested: Vec<Finding>,
    /// Status counts per node kind.
    pub totals: BTreeMap<String, StatusCounts>,
    /// Visited trace points per test.
    pub per_test_counts: BTreeMap<String, usize>,
    pub transitions: Vec<TransitionCoverage>,
    pub leaves: usize,
    pub covered_leaves: usize,
    /// Share of visited leaves in percent, two decimals.
    pub leaf_percent: f64,
}

impl CoverageReport {
    pub fn status(&self, id: NodeId) -> CoverageStatus {
        self.nodes[id.0].status
    }

    pub fn node_named(&self, kind: NodeKind, name: &str) -> Option<&NodeCoverage> {
        self.nodes.iter().find(|n| n.kind == kind && n.name == name)
    }

    /// Every uncovered leaf, not just subtree roots.
    pub fn uncovered_leaves(&self) -> impl Iterator<Item = &NodeCoverage> {
        self.nodes
            .iter()
            .filter(|n| n.trace_point.is_some() && n.status == CoverageStatus::Uncovered)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Contains-children of every node, computed once.
pub(crate) fn child_index(model: &DependencyModel) -> Vec<Vec<NodeId>> {
    let mut children = vec![Vec::new(); model.nodes.len()];
    for e in &model.edges {
        if e.kind == EdgeKind::Contains {
            children[e.source.0].push(e.target);
        }
    }
    children
}

fn parent_index(model: &DependencyModel) -> Vec<Option<NodeId>> {
    let mut parents = vec![None; model.nodes.len()];
    for e in &model.edges {
        if e.kind == EdgeKind::Contains {
            parents[e.target.0] = Some(e.source);
        }
    }
    parents
}

fn is_leaf_kind(kind: NodeKind) -> bool {
    matches!(kind, NodeKind::BasicBlock | NodeKind::Step)
}

/// Computes the status of every node and the list of untested code.
pub fn rollup(
    model: &DependencyModel,
    matrix: &VisitMatrix,
    db: &TracePointDatabase,
) -> Result<CoverageReport, CoverageError> {
    if matrix.points.len() != db.len() || !db.ids().eq(matrix.points.iter().copied()) {
        return Err(CoverageError::Inconsistent("matrix columns differ from database ids".into()));
    }
    // Map trace points onto model leaves, both directions total.
    let mut point_of: Vec<Option<u32>> = vec![None; model.nodes.len()];
    for p in &db.points {
        let node = p.node_in(model).ok_or_else(|| {
            CoverageError::Inconsistent(format!("trace point {} ({}) has no model node", p.id, p.pou))
        })?;
        let n = model.node(node);
        if let Some(loc) = n.loc {
            if (loc.line, loc.col) != (p.line, p.col) {
                return Err(CoverageError::Inconsistent(format!(
                    "trace point {} is at {}:{} but node {} is at {}:{}",
                    p.id,
                    p.line,
                    p.col,
                    n.label(),
                    loc.line,
                    loc.col
                )));
            }
        }
        if point_of[node.0].replace(p.id).is_some() {
            return Err(CoverageError::Inconsistent(format!("node {} has two trace points", n.label())));
        }
    }
    if let Some(n) = model
        .nodes
        .iter()
        .find(|n| is_leaf_kind(n.kind) && point_of[n.id.0].is_none())
    {
        return Err(CoverageError::Inconsistent(format!("{} has no trace point", n.label())));
    }

    let union = matrix.union();
    let visited = |id: u32| matrix.column(id).is_ok_and(|c| union[c]);
    let children = child_index(model);
    // Post-order leaf counts.
    let mut counts = vec![(0usize, 0usize); model.nodes.len()];
    fn count(
        n: NodeId,
        children: &[Vec<NodeId>],
        point_of: &[Option<u32>],
        visited: &dyn Fn(u32) -> bool,
        counts: &mut [(usize, usize)],
    ) -> (usize, usize) {
        let own = match point_of[n.0] {
            Some(p) => (1, visited(p) as usize),
            None => (0, 0),
        };
        let total = children[n.0].iter().fold(own, |acc, c| {
            let (l, v) = count(*c, children, point_of, visited, counts);
            (acc.0 + l, acc.1 + v)
        });
        counts[n.0] = total;
        total
    }
    if !model.nodes.is_empty() {
        count(model.project_node(), &children, &point_of, &visited, &mut counts);
    }

    let nodes: Vec<NodeCoverage> = model
        .nodes
        .iter()
        .map(|n| {
            let (leaves, covered) = counts[n.id.0];
            NodeCoverage {
                id: n.id,
                kind: n.kind,
                name: n.name.clone(),
                status: CoverageStatus::from_counts(covered, leaves),
                leaves,
                covered_leaves: covered,
                trace_point: point_of[n.id.0],
            }
        })
        .collect();

    let parents = parent_index(model);
    let mut untested: Vec<Finding> = nodes
        .iter()
        .filter(|n| n.status == CoverageStatus::Uncovered)
        .filter(|n| parents[n.id.0].is_none_or(|p| nodes[p.0].status != CoverageStatus::Uncovered))
        .map(|n| {
            let loc = model.node(n.id).loc;
            let file = loc
                .and_then(|l| db_file_for(db, model, l.file))
                .unwrap_or_default();
            Finding {
                node: n.id,
                kind: n.kind,
                name: n.name.clone(),
                file,
                line: loc.map_or(0, |l| l.line),
                col: loc.map_or(0, |l| l.col),
                leaves: n.leaves,
            }
        })
        .collect();
    untested.sort_by(|a, b| (&a.file, a.line, a.col, a.node).cmp(&(&b.file, b.line, b.col, b.node)));

    let mut totals: BTreeMap<String, StatusCounts> = BTreeMap::new();
    for n in &nodes {
        let c = totals.entry(n.kind.as_str().to_string()).or_default();
        match n.status {
            CoverageStatus::Covered => c.covered += 1,
            CoverageStatus::Partial => c.partial += 1,
            CoverageStatus::Uncovered => c.uncovered += 1,
        }
    }

    let per_test_counts = matrix
        .tests
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), matrix.visited_count(i)))
        .collect();

    let mut transitions = Vec::new();
    for e in &model.edges {
        if let EdgeKind::SfcTransition(cond) = &e.kind {
            let traversed = point_of[e.target.0].is_some_and(visited);
            transitions.push(TransitionCoverage {
                from: model.node(e.source).name.clone(),
                to: model.node(e.target).name.clone(),
                condition: cond.clone(),
                traversed,
            });
        }
    }

    let leaves = db.len();
    let covered_leaves = union.iter().filter(|b| **b).count();
    let leaf_percent = if leaves == 0 {
        100.0
    } else {
        (covered_leaves as f64 * 10_000.0 / leaves as f64).round() / 100.0
    };
    Ok(CoverageReport {
        fingerprint: db.fingerprint.clone(),
        tests: matrix.tests.clone(),
        nodes,
        untested,
        totals,
        per_test_counts,
        transitions,
        leaves,
        covered_leaves,
        leaf_percent,
    })
}

/// Path of a file index, taken from any trace point in that file.
fn db_file_for(db: &TracePointDatabase, model: &DependencyModel, file: u32) -> Option<String> {
    // Trace points record paths; model nodes record file indices.
    db.points
        .iter()
        .find(|p| {
            p.node_in(model)
                .and_then(|n| model.node(n).loc)
                .is_some_and(|l| l.file == file)
        })
        .map(|p| p.file.clone())
}

/// Findings restricted to the given node kinds.
pub fn find_untested(report: &CoverageReport, kinds: &[NodeKind]) -> Vec<Finding> {
    report
        .untested
        .iter()
        .filter(|f| kinds.is_empty() || kinds.contains(&f.kind))
        .cloned()
        .collect()
}

/// Plain-text summary: untested code first, then totals.
pub fn render_text(report: &CoverageReport) -> String {
    let mut out = String::new();
    if report.untested.is_empty() {
        out.push_str("No untested code found.\n");
    } else {
        let _ = writeln!(out, "Untested code ({} findings):", report.untested.len());
        for f in &report.untested {
            let _ = writeln!(
                out,
                "  {}:{}:{}  {} {}{}",
                f.file,
                f.line,
                f.col,
                f.kind.as_str(),
                f.name,
                if f.leaves > 1 {
                    format!("  ({} blocks/steps)", f.leaves)
                } else {
                    String::new()
                }
            );
        }
    }
    let untraversed: Vec<&TransitionCoverage> =
        report.transitions.iter().filter(|t| !t.traversed).collect();
    if !untraversed.is_empty() {
        out.push_str("\nSFC transitions never taken:\n");
        for t in untraversed {
            let _ = writeln!(out, "  {} -> {}  WHEN {}", t.from, t.to, t.condition);
        }
    }
    out.push_str("\nStatus by element kind (covered / partial / uncovered):\n");
    for kind in ["task", "pou", "action", "step", "block"] {
        if let Some(c) = report.totals.get(kind) {
            let _ = writeln!(out, "  {kind:<7} {:>5} {:>5} {:>5}", c.covered, c.partial, c.uncovered);
        }
    }
    let _ = writeln!(out, "\nTests: {}", report.tests.len());
    out
}

fn dot_fill(status: CoverageStatus) -> &'static str {
    match status {
        CoverageStatus::Uncovered => "fillcolor=\"#b22222\", fontcolor=\"white\"",
        CoverageStatus::Partial => "fillcolor=\"#ffd700\"",
        CoverageStatus::Covered => "fillcolor=\"white\"",
    }
}

/// POU owning a node (the node itself for POUs).
fn owning_pou(model: &DependencyModel, parents: &[Option<NodeId>], mut n: NodeId) -> Option<NodeId> {
    loop {
        if model.node(n).kind == NodeKind::Pou {
            return Some(n);
        }
        n = parents[n.0]?;
    }
}

/// Call graph of tasks and POUs, POUs filled by status. Covered POUs stay
/// white.
pub fn render_dot(report: &CoverageReport, model: &DependencyModel) -> String {
    let parents = parent_index(model);
    let mut out = String::from("digraph coverage {\n    rankdir=LR;\n    node [style=filled, shape=box];\n");
    for n in &model.nodes {
        match n.kind {
            NodeKind::Task => {
                let _ = writeln!(
                    out,
                    "    n{} [label=\"{}\", shape=hexagon, style=solid];",
                    n.id.0,
                    dot_escape(&n.name)
                );
            }
            NodeKind::Pou => {
                let _ = writeln!(
                    out,
                    "    n{} [label=\"{}\", {}];",
                    n.id.0,
                    dot_escape(&n.name),
                    dot_fill(report.status(n.id))
                );
            }
            _ => {}
        }
    }
    let mut edges = BTreeSet::new();
    for e in &model.edges {
        let from_kind = model.node(e.source).kind;
        let to_kind = model.node(e.target).kind;
        if e.kind == EdgeKind::Contains && from_kind == NodeKind::Task && to_kind == NodeKind::Pou {
            edges.insert((e.source.0, e.target.0));
        }
        if e.kind == EdgeKind::Calls {
            if let (Some(a), Some(b)) = (
                owning_pou(model, &parents, e.source),
                owning_pou(model, &parents, e.target),
            ) {
                if a != b {
                    edges.insert((a.0, b.0));
                }
            }
        }
    }
    for (a, b) in edges {
        let _ = writeln!(out, "    n{a} -> n{b};");
    }
    out.push_str("}\n");
    out
}

fn html_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Static HTML page: findings, per-POU status, SFC step lists and the
/// source with lines of uncovered blocks highlighted.
pub fn render_html(report: &CoverageReport, model: &DependencyModel, project: &SourceProject) -> String {
    let children = child_index(model);
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Coverage</title>\n<style>\n\
         body { font-family: sans-serif; }\n\
         pre { font-family: monospace; }\n\
         .uncovered { background: #b22222; color: white; }\n\
         .partial { background: #ffd700; }\n\
         .covered { }\n\
         .ln { color: #888; display: inline-block; width: 4em; }\n\
         </style>\n</head>\n<body>\n",
    );
    out.push_str("<h1>Untested code</h1>\n");
    if report.untested.is_empty() {
        out.push_str("<p>None.</p>\n");
    } else {
        out.push_str("<ul>\n");
        for f in &report.untested {
            let _ = writeln!(
                out,
                "<li class=\"uncovered\">{} {} &mdash; {}:{}</li>",
                f.kind.as_str(),
                html_escape(&f.name),
                html_escape(&f.file),
                f.line
            );
        }
        out.push_str("</ul>\n");
    }
    out.push_str("<h1>POUs</h1>\n<table>\n");
    for n in model.nodes.iter().filter(|n| n.kind == NodeKind::Pou) {
        let c = &report.nodes[n.id.0];
        let _ = writeln!(
            out,
            "<tr class=\"{}\"><td>{}</td><td>{}</td><td>{}/{}</td></tr>",
            c.status.as_str(),
            html_escape(&n.name),
            c.status.as_str(),
            c.covered_leaves,
            c.leaves
        );
        let steps: Vec<NodeId> = children[n.id.0]
            .iter()
            .copied()
            .filter(|c| model.node(*c).kind == NodeKind::Step)
            .collect();
        if !steps.is_empty() {
            out.push_str("<tr><td colspan=\"3\"><ol>\n");
            for s in steps {
                let st = report.status(s);
                let _ = writeln!(
                    out,
                    "<li class=\"{}\">step {} ({})</li>",
                    st.as_str(),
                    html_escape(&model.node(s).name),
                    st.as_str()
                );
            }
            out.push_str("</ol></td></tr>\n");
        }
    }
    out.push_str("</table>\n");

    // Lines starting statements of uncovered blocks, per file index.
    let mut marked: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for n in report.uncovered_leaves() {
        let node = model.node(n.id);
        for l in node.stmt_locs.iter().chain(node.loc.iter().filter(|_| node.kind == NodeKind::Step)) {
            marked.entry(l.file).or_default().insert(l.line);
        }
    }
    let files_with_code: BTreeSet<u32> = model.nodes.iter().filter_map(|n| n.loc.map(|l| l.file)).collect();
    out.push_str("<h1>Source</h1>\n");
    for (idx, file) in project.files.iter().enumerate() {
        let idx = idx as u32;
        if !files_with_code.contains(&idx) {
            continue;
        }
        let _ = writeln!(out, "<h2>{}</h2>\n<pre>", html_escape(&file.path));
        let lines = marked.get(&idx);
        for (i, line) in file.text.lines().enumerate() {
            let no = i as u32 + 1;
            let class = if lines.is_some_and(|m| m.contains(&no)) {
                " class=\"uncovered\""
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "<span{class}><span class=\"ln\">{no}</span>{}</span>",
                html_escape(line)
            );
        }
        out.push_str("</pre>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}
