//! Drives three BRB objects by hand: one broadcast, payload exchange until
//! every node delivers.

use ssbrb::brb::BrbState;
use ssbrb::params::{NodeId, Params, Value};

fn main() {
    let params = Params { n: 4, t: 1, ..Params::default() };
    let mut nodes: Vec<BrbState> = params.nodes().map(|i| BrbState::new(i, &params)).collect();
    nodes[0].broadcast(Value::from("hello"), true);

    for round in 1.. {
        let payloads: Vec<_> = nodes.iter_mut().map(|s| s.local_step()).collect();
        for (j, payload) in payloads.iter().enumerate() {
            for (i, s) in nodes.iter_mut().enumerate() {
                if i != j {
                    s.merge_incoming(NodeId(j), payload).expect("well-formed");
                }
            }
        }
        let got: Vec<_> = nodes.iter_mut().map(|s| s.deliver(NodeId(0), || true)).collect();
        if got.iter().all(Option::is_some) {
            for (i, v) in got.iter().enumerate() {
                println!("p{i} delivered {:?} after {round} exchange rounds", String::from_utf8_lossy(v.as_ref().unwrap().as_bytes()));
            }
            break;
        }
    }
}
