//! Muteness detector: counts how many round trips other peers completed
//! since the last one with `j`, and suspects `j` once the count (ignoring
//! the `t` fastest peers) reaches `theta`.

use std::collections::BTreeSet;

use crate::params::{NodeId, Params};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutenessState {
    me: NodeId,
    /// `rt[k][j]`: round trips with `j` since the last one with `k`.
    /// Self row and column stay zero.
    pub rt: Vec<Vec<u32>>,
}

impl MutenessState {
    pub fn new(me: NodeId, params: &Params) -> Self {
        MutenessState { me, rt: vec![vec![0; params.n]; params.n] }
    }

    pub fn md_reset(&mut self) {
        for row in &mut self.rt {
            row.iter_mut().for_each(|x| *x = 0);
        }
    }

    pub fn md_cnt(&mut self, j: NodeId, params: &Params) {
        let me = self.me.0;
        if j.0 == me {
            return;
        }
        for k in 0..params.n {
            if k != me && k != j.0 {
                let cell = &mut self.rt[k][j.0];
                *cell = params.big_b.min(*cell + 1);
            }
        }
        self.rt[j.0].iter_mut().for_each(|x| *x = 0);
    }

    /// Sum of `rt[j][·]` over peers after dropping the `t` largest entries.
    pub fn excess(&self, j: NodeId, params: &Params) -> u64 {
        let mut row: Vec<u32> = (0..params.n)
            .filter(|l| *l != self.me.0)
            .map(|l| self.rt[j.0][l])
            .collect();
        row.sort_unstable_by(|a, b| b.cmp(a));
        row.iter().skip(params.t).map(|x| *x as u64).sum()
    }

    pub fn trusted(&self, params: &Params) -> BTreeSet<NodeId> {
        params
            .nodes()
            .filter(|j| *j != self.me && (params.theta as u64) > self.excess(*j, params))
            .collect()
    }
}
