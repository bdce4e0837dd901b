//! Protocol constants shared by every component, plus the two domain
//! newtypes (`NodeId`, `Value`) that everything else is written in terms of.

use std::fmt;

use thiserror::Error;

/// Default upper bound on a broadcast value, in bytes.
pub const DEFAULT_MAX_VALUE_LEN: usize = 256;

/// Index of a node in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Opaque broadcast payload. Ordered lexicographically by its bytes.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Value(Vec<u8>);

impl Value {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Value(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value(s.as_bytes().to_vec())
    }
}

impl From<Vec<u8>> for Value {
    fn from(v: Vec<u8>) -> Self {
        Value(v)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|b| b.is_ascii_graphic()) && !self.0.is_empty() {
            write!(f, "{:?}", String::from_utf8_lossy(&self.0))
        } else {
            write!(f, "0x{}", hex::encode(&self.0))
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(&self.0))
    }
}

/// Deliberate protocol defects used to show the checkers are not vacuous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Deliver on `2t` matching READY entries instead of `2t+1`.
    DeliverThreshold2t,
    /// Echo quorum `> (n+t)/2 - 1` instead of `> (n+t)/2`.
    EchoQuorumMinusOne,
    /// Keep the round-trip labels when the round counter advances.
    NoLabelReset,
}

impl Mutation {
    pub fn name(self) -> &'static str {
        match self {
            Mutation::None => "none",
            Mutation::DeliverThreshold2t => "deliver-2t",
            Mutation::EchoQuorumMinusOne => "echo-quorum-minus-one",
            Mutation::NoLabelReset => "no-label-reset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => Mutation::None,
            "deliver-2t" => Mutation::DeliverThreshold2t,
            "echo-quorum-minus-one" => Mutation::EchoQuorumMinusOne,
            "no-label-reset" => Mutation::NoLabelReset,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Params {
    /// Number of nodes.
    pub n: usize,
    /// Upper bound on Byzantine nodes.
    pub t: usize,
    /// Per-channel bound on messages in transit.
    pub capacity: usize,
    /// Bounded-message-lifetime window, in rounds.
    pub lambda: u32,
    /// Wrap bound for every counter.
    pub big_b: u32,
    /// Muteness threshold on excess round trips.
    pub theta: u32,
    /// Number of concurrent BRB instances per node.
    pub delta: usize,
    pub max_value_len: usize,
    pub mutation: Mutation,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n: 4,
            t: 1,
            capacity: 2,
            lambda: 3,
            big_b: 32,
            theta: 12,
            delta: 2,
            max_value_len: DEFAULT_MAX_VALUE_LEN,
            mutation: Mutation::None,
        }
    }
}

/// One violated side condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `3t + 1 <= n`
    Resilience,
    /// `capacity < lambda`
    CapacityBelowLambda,
    /// `lambda < B / 6`, evaluated as `6 * lambda < B`
    LambdaBelowWrapSixth,
    ThetaPositive,
    DeltaPositive,
    NodeCountPositive,
    CapacityPositive,
    LambdaPositive,
    ValueLenPositive,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::Resilience => "3t+1<=n",
            Violation::CapacityBelowLambda => "capacity<lambda",
            Violation::LambdaBelowWrapSixth => "lambda<B/6",
            Violation::ThetaPositive => "theta>=1",
            Violation::DeltaPositive => "delta>=1",
            Violation::NodeCountPositive => "n>=1",
            Violation::CapacityPositive => "capacity>=1",
            Violation::LambdaPositive => "lambda>=1",
            Violation::ValueLenPositive => "max_value_len>=1",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid parameters: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
pub struct ParamsError(pub Vec<Violation>);

impl Params {
    /// Every side condition that does not hold, in a fixed order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push(Violation::NodeCountPositive);
        }
        if 3 * self.t + 1 > self.n {
            out.push(Violation::Resilience);
        }
        if self.capacity == 0 {
            out.push(Violation::CapacityPositive);
        }
        if self.lambda == 0 {
            out.push(Violation::LambdaPositive);
        }
        if self.capacity as u64 >= self.lambda as u64 {
            out.push(Violation::CapacityBelowLambda);
        }
        // lambda < B/6 over the rationals.
        if 6 * self.lambda as u64 >= self.big_b as u64 {
            out.push(Violation::LambdaBelowWrapSixth);
        }
        if self.theta == 0 {
            out.push(Violation::ThetaPositive);
        }
        if self.delta == 0 {
            out.push(Violation::DeltaPositive);
        }
        if self.max_value_len == 0 {
            out.push(Violation::ValueLenPositive);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ParamsError(v))
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n).map(NodeId)
    }

    /// True when `count` strictly exceeds `(n+t)/2` (or the mutated bound).
    pub fn echo_quorum(&self, count: usize) -> bool {
        let lhs = 2 * count;
        match self.mutation {
            Mutation::EchoQuorumMinusOne => lhs + 2 > self.n + self.t,
            _ => lhs > self.n + self.t,
        }
    }

    /// READY amplification threshold, `t + 1`.
    pub fn ready_amplify(&self) -> usize {
        self.t + 1
    }

    /// Delivery threshold, `2t + 1` (or `2t` under the mutation).
    pub fn deliver_threshold(&self) -> usize {
        match self.mutation {
            Mutation::DeliverThreshold2t => 2 * self.t,
            _ => 2 * self.t + 1,
        }
    }

    /// Round trips required before the round counter may advance.
    pub fn label_threshold(&self) -> u32 {
        2 * (self.capacity as u32 + 1)
    }
}
