//! Three instances with FIFO hand-over: each node's values come out in the
//! order they were broadcast, even though the instances run concurrently.

use ssbrb::node::NodeEvent;
use ssbrb::scenario::Scenario;
use ssbrb::trace::TraceEvent;

fn main() {
    let scenario = Scenario::parse(
        "scenario.mode = integrated\n\
         params.delta = 3\n\
         node.fifo = true\n\
         workload.broadcasts = 9\n\
         run.stop_when_done = true\n",
    )
    .expect("valid config");
    let trace = scenario.simulate(11);
    let order: Vec<String> = trace
        .records
        .iter()
        .filter_map(|r| match (&r.node, &r.event) {
            (Some(n), TraceEvent::Node(NodeEvent::Deliver { from, value, .. })) if n.0 == 2 && from.0 == 0 => {
                Some(String::from_utf8_lossy(value.as_bytes()).into_owned())
            }
            _ => None,
        })
        .collect();
    println!("p2 received from p0: {}", order.join(", "));
    for report in scenario.check(&trace) {
        println!("{report}");
    }
}
