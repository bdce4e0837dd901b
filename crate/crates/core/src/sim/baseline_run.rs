//! Reliable, fault-free runs of the Bracha-Toueg baseline, and the paired
//! run that feeds the differential oracle.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::{BtEvent, BtMessage, BtState};
use crate::params::{NodeId, Params, Value};
use crate::trace::{Trace, TraceEvent};

use super::{workload_value, World, WorldConfig};

/// One delivery of the baseline: `(node, instance, broadcaster, value)`.
pub type BtDelivery = (NodeId, u32, NodeId, Value);

/// Runs `delta` independent baseline instances over a reliable channel that
/// hands out pending messages in seeded random order.
pub fn run_bt(params: &Params, broadcasts: usize, value_len: usize, seed: u64) -> Vec<BtDelivery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB7B7);
    let instances = broadcasts.min(params.delta);
    let mut states: Vec<Vec<BtState>> = (0..params.n).map(|_| vec![BtState::new(); instances]).collect();
    let mut queue: VecDeque<(NodeId, NodeId, usize, BtMessage)> = VecDeque::new();
    let mut out = Vec::new();
    let emit = |from: NodeId, a: usize, msgs: Vec<BtMessage>, queue: &mut VecDeque<_>| {
        for m in msgs {
            for to in params.nodes() {
                queue.push_back((from, to, a, m.clone()));
            }
        }
    };
    for i in params.nodes() {
        for (a, st) in states[i.0].iter_mut().enumerate() {
            let v = workload_value(i, a, value_len);
            let o = st.handle(params, BtEvent::Broadcast(v));
            emit(i, a, o.broadcast, &mut queue);
        }
    }
    while !queue.is_empty() {
        let pick = rng.gen_range(0..queue.len());
        let (from, to, a, msg) = queue.swap_remove_back(pick).expect("in range");
        let o = states[to.0][a].handle(params, BtEvent::Arrival { from, msg });
        if let Some((k, v)) = o.delivered {
            out.push((to, a as u32, k, v));
        }
        emit(to, a, o.broadcast, &mut queue);
    }
    out
}

/// Runs the self-stabilizing object and then the baseline on the same
/// workload; the baseline deliveries are appended to the trace.
pub fn run_differential(cfg: &WorldConfig, seed: u64) -> Trace {
    let mut world = World::new(cfg.clone(), seed);
    world.run();
    let mut trace = std::mem::take(&mut world.trace);
    let step = world.step;
    let bt = run_bt(&cfg.params, cfg.workload.broadcasts, cfg.workload.value_len, seed);
    for (node, inst, from, value) in bt {
        trace.push(step, Some(node), TraceEvent::BtDeliver { inst, from, value });
    }
    trace
}
