//! Coverage of the demo suite: untested code first, then the extended
//! suite that closes the gaps. Reports are written to a temp directory.

use std::path::Path;

use plccov::coverage::render_text;
use plccov::pipeline::{self, ProjectManifest, ReportFormat, Responses};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    let mut m = ProjectManifest::load(&dir.join("plccov.toml")).expect("demo manifest");
    let out_dir = tempfile::tempdir().expect("temp dir");
    m.output_dir = out_dir.path().to_path_buf();
    pipeline::cmd_instrument(&m).expect("instrument");

    let main_run = m.output_dir.join("main");
    let extra_run = m.output_dir.join("supplementary");
    pipeline::cmd_run(&m, &dir.join("tests/main_suite.xml"), Some(&main_run), Responses::Scripted).expect("run");

    let cover = pipeline::cmd_cover(&m, None, std::slice::from_ref(&main_run)).expect("cover");
    println!("== main suite\n{}", render_text(&cover.report));
    let written = pipeline::write_reports(&cover, &ReportFormat::ALL, &m.coverage_dir()).expect("reports");
    for p in written {
        println!("wrote {}", p.file_name().unwrap().to_string_lossy());
    }

    pipeline::cmd_run(&m, &dir.join("tests/supplementary_suite.xml"), Some(&extra_run), Responses::Scripted)
        .expect("run");
    let cover = pipeline::cmd_cover(&m, None, &[main_run, extra_run]).expect("cover");
    println!("\n== main + supplementary suite\n{}", render_text(&cover.report));
}
