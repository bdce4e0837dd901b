//! Canonical byte encoding of [`WireMessage`]: little-endian fixed-width
//! integers, length-prefixed values, sets in sorted order.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::brb::{BrbEntry, Pair};
use crate::irc::{IrcWire, Round};
use crate::params::{NodeId, Value};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WireMessage {
    pub instance: u32,
    pub brb: BrbEntry,
    pub irc: IrcWire,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated message at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("bad ack byte {0}")]
    BadAck(u8),
    #[error("set not in canonical order")]
    NotCanonical,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_value(out: &mut Vec<u8>, v: &Value) {
    put_u32(out, v.len() as u32);
    out.extend_from_slice(v.as_bytes());
}

fn put_pairs(out: &mut Vec<u8>, set: &BTreeSet<Pair>) {
    put_u32(out, set.len() as u32);
    for (k, v) in set {
        put_u32(out, k.0 as u32);
        put_value(out, v);
    }
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, msg.instance);
    put_u32(&mut out, msg.brb.init.len() as u32);
    for v in &msg.brb.init {
        put_value(&mut out, v);
    }
    put_pairs(&mut out, &msg.brb.echo);
    put_pairs(&mut out, &msg.brb.ready);
    out.push(msg.irc.ack as u8);
    out.extend_from_slice(&msg.irc.seq.raw().to_le_bytes());
    put_u32(&mut out, msg.irc.lbl);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn i64(&mut self) -> Result<i64, WireError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn value(&mut self) -> Result<Value, WireError> {
        let len = self.u32()? as usize;
        Ok(Value::new(self.take(len)?.to_vec()))
    }

    fn pairs(&mut self) -> Result<BTreeSet<Pair>, WireError> {
        let count = self.u32()?;
        let mut out = BTreeSet::new();
        let mut last: Option<Pair> = None;
        for _ in 0..count {
            let pair = (NodeId(self.u32()? as usize), self.value()?);
            if last.as_ref().is_some_and(|l| *l >= pair) {
                return Err(WireError::NotCanonical);
            }
            last = Some(pair.clone());
            out.insert(pair);
        }
        Ok(out)
    }
}

pub fn decode(buf: &[u8]) -> Result<WireMessage, WireError> {
    let mut r = Reader { buf, pos: 0 };
    let instance = r.u32()?;
    let mut init = BTreeSet::new();
    let mut last: Option<Value> = None;
    for _ in 0..r.u32()? {
        let v = r.value()?;
        if last.as_ref().is_some_and(|l| *l >= v) {
            return Err(WireError::NotCanonical);
        }
        last = Some(v.clone());
        init.insert(v);
    }
    let echo = r.pairs()?;
    let ready = r.pairs()?;
    let ack = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(WireError::BadAck(b)),
    };
    let seq = r.i64()?;
    let lbl = r.u32()?;
    if r.pos != buf.len() {
        return Err(WireError::Trailing(buf.len() - r.pos));
    }
    // Out-of-domain rounds are kept raw; the counter normalizes on receipt.
    let seq = Round::from_raw(seq);
    Ok(WireMessage { instance, brb: BrbEntry { init, echo, ready }, irc: IrcWire { ack, seq, lbl } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> WireMessage {
        let mut brb = BrbEntry::default();
        brb.init.insert(Value::from("m"));
        brb.echo.insert((NodeId(1), Value::from("m")));
        brb.ready.insert((NodeId(1), Value::from("m")));
        brb.ready.insert((NodeId(3), Value::new(vec![])));
        WireMessage { instance: 1, brb, irc: IrcWire { ack: true, seq: Round::new(7, 32), lbl: 3 } }
    }

    #[test]
    fn layout_of_empty_message() {
        let msg = WireMessage {
            instance: 2,
            brb: BrbEntry::default(),
            irc: IrcWire { ack: false, seq: Round::SENTINEL, lbl: 5 },
        };
        let bytes = encode(&msg);
        let mut expect = vec![2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        expect.extend_from_slice(&(-1i64).to_le_bytes());
        expect.extend_from_slice(&[5, 0, 0, 0]);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn roundtrip_sample() {
        let msg = sample();
        assert_eq!(decode(&encode(&msg)), Ok(msg));
    }

    #[test]
    fn rejects_garbage() {
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(WireError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode(&extra), Err(WireError::Trailing(1)));
        let mut huge = vec![0u8; 4];
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode(&huge), Err(WireError::Truncated(_))));
    }

    fn value() -> impl Strategy<Value = Value> {
        proptest::collection::vec(any::<u8>(), 0..6).prop_map(Value::new)
    }

    fn pairs() -> impl Strategy<Value = BTreeSet<Pair>> {
        proptest::collection::btree_set((0usize..7, value()).prop_map(|(k, v)| (NodeId(k), v)), 0..6)
    }

    prop_compose! {
        fn wire()(instance in 0u32..4, init in proptest::collection::btree_set(value(), 0..2),
                  echo in pairs(), ready in pairs(), ack in any::<bool>(),
                  seq in -1i64..32, lbl in 0u32..=32) -> WireMessage {
            WireMessage {
                instance,
                brb: BrbEntry { init, echo, ready },
                irc: IrcWire { ack, seq: Round::new(seq, 32), lbl },
            }
        }
    }

    proptest! {
        #[test]
        fn encode_decode_identity(msg in wire()) {
            prop_assert_eq!(decode(&encode(&msg)), Ok(msg));
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
            let _ = decode(&bytes);
        }
    }
}
