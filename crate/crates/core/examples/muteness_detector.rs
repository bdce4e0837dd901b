//! A Byzantine node goes mute; the honest detectors drop it from their
//! trusted sets and the counters keep going without it.

use ssbrb::node::NodeEvent;
use ssbrb::scenario::Scenario;
use ssbrb::trace::TraceEvent;

fn main() {
    let scenario = Scenario::parse(
        "scenario.mode = integrated\n\
         adversary.p3 = mute-after:2000\n\
         workload.broadcasts = 12\n\
         run.stop_when_done = true\n\
         check.list = muteness,brb\n",
    )
    .expect("valid config");
    let trace = scenario.simulate(3);
    for r in &trace.records {
        if let (Some(node), TraceEvent::Node(NodeEvent::Trusted { inst, round, set })) = (&r.node, &r.event) {
            let set: Vec<String> = set.iter().map(|j| format!("p{}", j.0)).collect();
            println!("step {:>6}  p{} inst {inst} round {round}: trusts {}", r.step, node.0, set.join(" "));
        }
    }
    for report in scenario.check(&trace) {
        println!("{report}");
    }
}
