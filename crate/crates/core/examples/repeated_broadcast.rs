//! Integrated mode: every node broadcasts a few values through two
//! recycled BRB instances over a lossy network, then the run is checked.

use ssbrb::node::NodeEvent;
use ssbrb::scenario::Scenario;
use ssbrb::trace::TraceEvent;

fn main() {
    let scenario = Scenario::parse(
        "scenario.mode = integrated\n\
         workload.broadcasts = 6\n\
         network.p_loss = 0.1\n\
         run.stop_when_done = true\n",
    )
    .expect("valid config");
    let trace = scenario.simulate(7);
    let mut deliveries = 0;
    for r in &trace.records {
        if let (Some(node), TraceEvent::Node(NodeEvent::Deliver { inst, from, round, value })) = (&r.node, &r.event) {
            deliveries += 1;
            if node.0 == 0 {
                println!("step {:>6}  p0 <- p{} inst {inst} round {round}: {}", r.step, from.0, String::from_utf8_lossy(value.as_bytes()));
            }
        }
    }
    println!("{deliveries} deliveries in {} steps", trace.last_step());
    for report in scenario.check(&trace) {
        println!("{report}");
    }
}
