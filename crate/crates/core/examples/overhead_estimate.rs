//! Analytic cost of trace calls per scan cycle.

use plccov::overhead::{self, OverheadParams};

fn main() {
    let measured = overhead::calibrate(0.26, 395).expect("valid measurement");
    println!("cost from 0.26 ms at 395 calls/cycle: {measured:.4} us per call");
    println!("cost implied by the 1000-call, 10 ms grid entry of 5.44%: {:.4} us\n", overhead::calibrate(0.544, 1000).unwrap());

    print!("{}", overhead::reproduce_grid(0.5443).unwrap().to_text());
    println!();
    print!("{}", overhead::reproduce_grid(measured).unwrap().to_csv());

    let mut p = OverheadParams::new(2261, 2.0, 0.5443);
    p.headroom = 0.5;
    let e = overhead::estimate_params(&p).unwrap();
    println!(
        "\n{} calls in a {} ms cycle: {:.1} us, {:.1}% of the cycle, within 50% headroom: {}",
        p.calls_per_cycle,
        p.cycle_ms,
        e.absolute_us,
        e.percent(),
        e.within_headroom
    );
    for cycle in [10.0, 5.0, 1.0] {
        println!(
            "max calls for a 5% budget at {cycle} ms: {}",
            overhead::max_trace_calls(cycle, 0.544, 0.05).unwrap()
        );
    }
}
