//! Execute the demo test suite against the instrumented depalletizer and
//! print the test report and one execution trace.

use std::path::Path;

use plccov::pipeline::{self, ProjectManifest, Responses};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    let mut m = ProjectManifest::load(&dir.join("plccov.toml")).expect("demo manifest");
    let out_dir = tempfile::tempdir().expect("temp dir");
    m.output_dir = out_dir.path().to_path_buf();

    let ins = pipeline::cmd_instrument(&m).expect("instrument");
    println!("{}\n", ins.summary());
    let run = pipeline::cmd_run(&m, &dir.join("tests/main_suite.xml"), None, Responses::Scripted).expect("run");
    print!("{}", run.run.report_text());

    let first = &run.run.verdicts[0];
    let trace = std::fs::read_to_string(run.dir.join(&first.trace_file)).expect("trace file");
    println!("\n{}: {} trace points, {} visited", first.trace_file, trace.split(", ").count(), run.run.traces[0].visited().count());
    println!("{}...", &trace[..trace.len().min(120)]);
}
