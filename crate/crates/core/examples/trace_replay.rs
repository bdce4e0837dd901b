//! Runs a scenario with an equivocating node, renders the trace, and checks
//! it again from text alone.

use ssbrb::scenario::{replay, Scenario};

fn main() {
    let scenario = Scenario::parse(
        "scenario.mode = integrated\n\
         adversary.p3 = equivocate-init\n\
         network.horizon = 8000\n",
    )
    .expect("valid config");
    let trace = scenario.simulate(42);
    let reports = scenario.check(&trace);
    let text = trace.render();
    println!("{} trace lines; header:", text.lines().count());
    for line in &trace.header {
        println!("  {line}");
    }
    let (_, _, again) = replay(&text).expect("replayable");
    assert_eq!(reports, again);
    for report in &again {
        println!("{report}");
    }
}
