//! Run an instrumented program cycle by cycle: latch inputs, execute the
//! task, read the outputs, then save the trace array like a test harness.

use std::collections::BTreeMap;

use plccov::depmodel::build_model;
use plccov::frontend::{parse_project, SourceFile, TaskDecl};
use plccov::instrument::instrument;
use plccov::runtime::{Runtime, Value};

const SOURCE: &str = "PROGRAM Tank
VAR_INPUT
    level : INT;
END_VAR
VAR_OUTPUT
    pump : BOOL;
    alarm : BOOL;
END_VAR
    IF level < 20 THEN
        pump := TRUE;
    ELSIF level > 80 THEN
        pump := FALSE;
    END_IF;
    alarm := level > 95;
END_PROGRAM
";

fn main() {
    let task = TaskDecl {
        name: "Cyclic".into(),
        cycle_ms: 20,
        priority: 1,
        entry_pou: "Tank".into(),
    };
    let project = parse_project(&[SourceFile::new("tank.st", SOURCE)], vec![task]).expect("valid source");
    let (instrumented, db) = instrument(&project, &build_model(&project)).expect("instrumentable");
    let rt = Runtime::new(instrumented.base).expect("runtime");
    let mut st = rt.init_state();
    rt.tp_reset(&mut st).expect("no save pending");

    for level in [10, 50, 90, 50] {
        let inputs = BTreeMap::from([("Tank.level".to_string(), Value::Int(level))]);
        let out = rt.run_cycle(&mut st, &inputs).expect("no fault");
        println!(
            "t={:>3} ms  level={level:<3} pump={} alarm={}",
            st.now_ms(rt.config()) - rt.config().base_tick_ms as i64,
            out["Tank.pump"],
            out["Tank.alarm"]
        );
    }

    rt.tp_save(&mut st, "tank.trace").expect("save starts");
    let mut cycles = 0;
    while !st.save_done() {
        rt.run_cycle(&mut st, &BTreeMap::new()).expect("no fault");
        cycles += 1;
    }
    println!("\nsave finished after {cycles} cycle(s)");
    println!("{}", st.files["tank.trace"]);
    for p in &db.points {
        println!("    tp {} -> {}:{}:{} in {}", p.id, p.file, p.line, p.col, p.pou);
    }
}
