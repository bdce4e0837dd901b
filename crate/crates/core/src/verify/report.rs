//! Report lines: `property|verdict|witness-steps`, plus a summary block.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Brb,
    Irc,
    Muteness,
    Consistency,
    Differential,
    Fifo,
}

impl Check {
    pub const ALL: [Check; 6] =
        [Check::Brb, Check::Irc, Check::Muteness, Check::Consistency, Check::Differential, Check::Fifo];

    pub fn name(self) -> &'static str {
        match self {
            Check::Brb => "brb",
            Check::Irc => "irc",
            Check::Muteness => "muteness",
            Check::Consistency => "consistency",
            Check::Differential => "differential",
            Check::Fifo => "fifo",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Holds,
    Inconclusive,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyReport {
    pub check: Check,
    pub property: String,
    pub verdict: Verdict,
    /// Steps of the records that make up the counterexample.
    pub witness: Vec<u64>,
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w: Vec<String> = self.witness.iter().map(|s| s.to_string()).collect();
        write!(f, "{}|{}|{}", self.property, self.verdict, w.join(","))
    }
}

/// The `# summary` block for a set of reports: verdict counts overall and
/// the worst verdict per property.
pub fn summary(reports: &[PropertyReport]) -> String {
    let mut worst: BTreeMap<&str, Verdict> = BTreeMap::new();
    let mut counts: BTreeMap<Verdict, usize> = BTreeMap::new();
    for r in reports {
        *counts.entry(r.verdict).or_default() += 1;
        let w = worst.entry(&r.property).or_insert(r.verdict);
        *w = (*w).max(r.verdict);
    }
    let mut out = String::from("# summary\n");
    for v in [Verdict::Holds, Verdict::Inconclusive, Verdict::Violated] {
        out.push_str(&format!("# {}={}\n", v, counts.get(&v).copied().unwrap_or(0)));
    }
    for (p, v) in worst {
        out.push_str(&format!("# {p}={v}\n"));
    }
    out
}
