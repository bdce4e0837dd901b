//! The round counter on its own: 80 increments per counter with B = 32, so
//! every counter wraps twice.

use std::collections::BTreeMap;

use ssbrb::node::NodeEvent;
use ssbrb::scenario::Scenario;
use ssbrb::trace::TraceEvent;

fn main() {
    let scenario = Scenario::parse(
        "scenario.mode = irc-only\n\
         params.delta = 1\n\
         workload.broadcasts = 80\n\
         network.horizon = 100000\n",
    )
    .expect("valid config");
    let trace = scenario.simulate(1);
    let mut fetched: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    for r in &trace.records {
        if let (Some(node), TraceEvent::Node(NodeEvent::Fetch { from, round, .. })) = (&r.node, &r.event) {
            fetched.entry((node.0, from.0)).or_default().push(round.to_string());
        }
    }
    let tail = &fetched[&(1, 0)];
    println!("p1 fetched {} rounds of p0's counter, last ten: {}", tail.len(), tail[tail.len() - 10..].join(" "));
    for report in scenario.check(&trace) {
        println!("{report}");
    }
}
