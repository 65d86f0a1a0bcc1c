//! Build the dependency model of the demo depalletizer and list what the
//! tasks reach. POUs no task calls are left out of the model.

use std::path::Path;

use plccov::depmodel::{build_model, NodeKind};
use plccov::pipeline::ProjectManifest;

fn main() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/plccov.toml");
    let m = ProjectManifest::load(&manifest).expect("demo manifest");
    let project = m.project().expect("demo parses");
    let model = build_model(&project);

    for kind in [NodeKind::Task, NodeKind::Pou, NodeKind::Action, NodeKind::Step, NodeKind::BasicBlock] {
        let n = model.nodes.iter().filter(|n| n.kind == kind).count();
        println!("{:<7} {n}", kind.as_str());
    }
    let in_model = |name: &str| model.find(NodeKind::Pou, name).is_some();
    println!("\ndeclared POUs not in the model:");
    for pou in project.pous.iter().filter(|p| !in_model(&p.name)) {
        println!("    {}", pou.name);
    }

    println!("\ncontents of task Slow:");
    let slow = model.find(NodeKind::Task, "Slow").expect("task");
    for c in model.children(slow.id) {
        let pou = model.node(c);
        println!("    {} ({} children)", pou.name, model.children(c).len());
    }

    let dot = model.to_dot();
    println!("\nDOT: {} lines, first lines:", dot.lines().count());
    for line in dot.lines().take(6) {
        println!("    {line}");
    }
}
