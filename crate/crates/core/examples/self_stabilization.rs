//! Arbitrary corruption of every node and channel at step 0, then recovery:
//! rounds until all states are consistent, and the checks on the suffix.

use ssbrb::scenario::Scenario;
use ssbrb::verify::stabilization_of;

fn main() {
    let scenario = Scenario::parse(
        "scenario.mode = integrated\n\
         transient.at_step = 0\n\
         network.horizon = 15000\n\
         check.list = brb,irc,consistency\n",
    )
    .expect("valid config");
    for seed in 0..5 {
        let trace = scenario.simulate(seed);
        let st = stabilization_of(&trace, &scenario.check_config());
        let reports = scenario.check(&trace);
        let bad = reports.iter().filter(|r| r.verdict == ssbrb::verify::Verdict::Violated).count();
        println!("seed {seed}: consistent after {:?} rounds, checked from step {}, {bad} violations", st.converged_after, st.cut);
    }
}
