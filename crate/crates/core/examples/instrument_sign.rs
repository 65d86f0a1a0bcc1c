//! Instrument a small function block: one trace call at the start of every
//! basic block, then the trace point database and the erased project.

use plccov::depmodel::build_model;
use plccov::frontend::{parse_project, SourceFile, TaskDecl};
use plccov::instrument::instrument;

const SOURCE: &str = "FUNCTION_BLOCK Sign
VAR_INPUT
    in : INT;
END_VAR
VAR_OUTPUT
    out : INT;
    negative : BOOL;
END_VAR
    IF in < 0 THEN
        out := -1;
        negative := TRUE;
    ELSIF in = 0 THEN
        out := 0;
        negative := FALSE;
    ELSE
        out := 1;
        negative := FALSE;
    END_IF;
END_FUNCTION_BLOCK

PROGRAM Main
VAR_INPUT
    x : INT;
END_VAR
VAR
    s : Sign;
END_VAR
    s(in := x);
END_PROGRAM
";

fn main() {
    let task = TaskDecl {
        name: "MainTask".into(),
        cycle_ms: 10,
        priority: 1,
        entry_pou: "Main".into(),
    };
    let project = parse_project(&[SourceFile::new("sign.st", SOURCE)], vec![task]).expect("valid source");
    let model = build_model(&project);
    let (instrumented, db) = instrument(&project, &model).expect("not yet instrumented");

    for (path, text) in instrumented.sources() {
        println!("--- {path}");
        print!("{text}");
    }
    println!("\n--- trace point database");
    print!("{}", db.to_xml());

    let again = instrument(&instrumented.base, &model);
    println!("\ninstrumenting twice: {}", again.unwrap_err());
    println!("erase restores the original: {}", instrumented.erase() == project);
}
