//! Parse Structured Text, inspect the tree and render it back to source.

use plccov::frontend::{parse_project, pretty_print, Body, SourceFile};

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
";

fn main() {
    let project = parse_project(&[SourceFile::new("sign.st", SOURCE)], vec![]).expect("valid source");
    for pou in &project.pous {
        let statements = match &pou.body {
            Body::St(stmts) => stmts.len(),
            Body::Sfc(chart) => chart.steps.len(),
        };
        println!(
            "{:?} {} at line {}: {} variables, {} top-level statements",
            pou.kind,
            pou.name,
            pou.loc.line,
            pou.vars.len(),
            statements
        );
        for v in &pou.vars {
            println!("    {:<10} {:<6} {:?}", v.name, v.data_type.keyword(), v.storage);
        }
    }
    println!();
    for (path, text) in pretty_print(&project) {
        println!("--- {path}");
        print!("{text}");
    }

    let broken = parse_project(&[SourceFile::new("bad.st", "PROGRAM P\n    x := ;\nEND_PROGRAM\n")], vec![]);
    println!("\nparse error: {}", broken.unwrap_err());
}
