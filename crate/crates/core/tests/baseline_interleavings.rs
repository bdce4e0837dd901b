//! ND-broadcast at n=4, t=1 with an equivocating broadcaster, over every
//! schedule: no two honest nodes deliver different values.
//!
//! A node's ECHO depends only on which INIT reaches it first, and its
//! delivery only on the order of the ECHOes it receives. Local orders at
//! different nodes are independent, so enumerating first-INIT choices and
//! then every local arrival order covers every global interleaving.

use std::collections::BTreeSet;

use ssbrb::baseline::{BtEvent, BtMessage, NdState};
use ssbrb::params::{NodeId, Params, Value};

const BYZ: NodeId = NodeId(3);
const HONEST: [NodeId; 3] = [NodeId(0), NodeId(1), NodeId(2)];

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// Feeds one node its INITs and ECHOes in the given order. Returns the
/// value it echoes and the value it delivers.
fn run_node(params: &Params, inits: &[Value], echoes: &[(NodeId, Value)]) -> (Option<Value>, Option<Value>) {
    let mut s = NdState::new();
    let mut echoed = None;
    for v in inits {
        let out = s.handle(params, BtEvent::Arrival { from: BYZ, msg: BtMessage::Init(v.clone()) });
        for m in out.broadcast {
            if let BtMessage::Echo(_, v) = m {
                echoed.get_or_insert(v);
            }
        }
    }
    for (from, v) in echoes {
        s.handle(params, BtEvent::Arrival { from: *from, msg: BtMessage::Echo(BYZ, v.clone()) });
    }
    (echoed, s.delivered().get(&BYZ).cloned())
}

#[test]
fn nd_broadcast_never_delivers_two_values() {
    let params = Params::default();
    let (a, b) = (Value::from("a"), Value::from("b"));
    // Per honest node, the INIT orders it may see: a, b, a then b, b then a.
    let init_orders = [vec![a.clone()], vec![b.clone()], vec![a.clone(), b.clone()], vec![b.clone(), a.clone()]];
    let mut schedules = 0usize;
    for c0 in &init_orders {
        for c1 in &init_orders {
            for c2 in &init_orders {
                let orders = [c0, c1, c2];
                let echo_of: Vec<Value> = orders.iter().map(|o| run_node(&params, o, &[]).0.expect("echoes")).collect();
                // Every ECHO a node can receive: one per honest node, and
                // both values from the Byzantine node.
                let mut inbox: Vec<(NodeId, Value)> = HONEST.iter().map(|h| (*h, echo_of[h.0].clone())).collect();
                inbox.push((BYZ, a.clone()));
                inbox.push((BYZ, b.clone()));
                let mut possible: Vec<BTreeSet<Value>> = vec![BTreeSet::new(); 3];
                for h in HONEST {
                    for order in permutations(&inbox) {
                        schedules += 1;
                        if let (_, Some(v)) = run_node(&params, orders[h.0], &order) {
                            possible[h.0].insert(v);
                        }
                    }
                }
                let all: BTreeSet<&Value> = possible.iter().flatten().collect();
                assert!(all.len() <= 1, "inits {orders:?}: deliverable values {possible:?}");
            }
        }
    }
    assert_eq!(schedules, 64 * 3 * 120);
}

#[test]
fn honest_majority_value_is_the_only_one_delivered() {
    let params = Params::default();
    let (a, b) = (Value::from("a"), Value::from("b"));
    let inbox = vec![(NodeId(0), a.clone()), (NodeId(1), a.clone()), (NodeId(2), b.clone()), (BYZ, a.clone()), (BYZ, b)];
    let got: BTreeSet<Option<Value>> =
        permutations(&inbox).iter().map(|o| run_node(&params, std::slice::from_ref(&a), o).1).collect();
    assert_eq!(got, BTreeSet::from([Some(a)]));
}
