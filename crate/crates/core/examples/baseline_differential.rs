//! The self-stabilizing object against the non-stabilizing reference
//! algorithm on a fault-free network: same deliveries at every node.

use ssbrb::scenario::Scenario;

fn main() {
    for (n, t) in [(4, 1), (7, 2)] {
        let scenario = Scenario::parse(&format!("scenario.mode = baseline-differential\nparams.n = {n}\nparams.t = {t}\n"))
            .expect("valid config");
        let trace = scenario.simulate(0);
        for report in scenario.check(&trace) {
            println!("n={n} t={t}  {report}");
        }
    }
}
