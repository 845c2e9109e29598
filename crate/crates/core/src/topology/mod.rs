//! The glue structure `(Gamma, I, h)` of a branched process.
//!
//! Branches are numbered `1..=m`; branch 1 is the observed root. A glued
//! pair `(d, k)` states `x_k = h_{d,k}(x_d)` on the interval set `I_{d,k}`.
//! Each pair is stored once in the orientation given by the user; lookups and
//! reachability treat it symmetrically.

mod conditions;
mod operator;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub use conditions::{
    check_condition1, check_condition2, check_pairwise_implications, check_thm1_chain_condition,
    evaluate, ChainVerdict, Condition2Report, ConditionReport, Finding, FindingKind, Witness,
    EPS_INV,
};
pub use operator::{FreqTable, Kernel, OperatorSpec, Piece};

use crate::error::{Error, Result};
use crate::interval::{IntervalSet, SetClass};

/// One glued pair: `x_to = op(x_from)` on `set`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "GlueRecord", into = "GlueRecord")]
pub struct Glue {
    pub from: usize,
    pub to: usize,
    pub set: IntervalSet,
    pub op: OperatorSpec,
}

/// Serialized form `[d, k, set, op]`.
#[derive(Serialize, Deserialize)]
struct GlueRecord(usize, usize, IntervalSet, OperatorSpec);

impl From<GlueRecord> for Glue {
    fn from(r: GlueRecord) -> Self {
        Glue {
            from: r.0,
            to: r.1,
            set: r.2,
            op: r.3,
        }
    }
}

impl From<Glue> for GlueRecord {
    fn from(g: Glue) -> Self {
        GlueRecord(g.from, g.to, g.set, g.op)
    }
}

impl Glue {
    pub fn new(from: usize, to: usize, set: IntervalSet, op: OperatorSpec) -> Self {
        Self { from, to, set, op }
    }

    pub fn identity(from: usize, to: usize, set: IntervalSet) -> Self {
        Self::new(from, to, set, OperatorSpec::Identity)
    }

    /// The other end of the pair, if `d` is one of its ends.
    pub fn other(&self, d: usize) -> Option<usize> {
        if d == self.from {
            Some(self.to)
        } else if d == self.to {
            Some(self.from)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub m: usize,
    #[serde(default)]
    pub glue: Vec<Glue>,
}

impl TopologySpec {
    pub fn new(m: usize, glue: Vec<Glue>) -> Result<Self> {
        let t = Self { m, glue };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidInput(
                "a topology needs at least one branch".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for g in &self.glue {
            let ctx = format!("glue pair ({}, {})", g.from, g.to);
            if g.from == 0 || g.to == 0 || g.from > self.m || g.to > self.m {
                return Err(Error::InvalidInput(format!(
                    "{ctx}: branch index outside 1..={}",
                    self.m
                )));
            }
            if g.from == g.to {
                return Err(Error::InvalidInput(format!(
                    "{ctx}: a branch cannot be glued to itself"
                )));
            }
            if !seen.insert((g.from.min(g.to), g.from.max(g.to))) {
                return Err(Error::InvalidInput(format!("{ctx}: pair listed twice")));
            }
            if g.set.classify() == SetClass::Empty {
                return Err(Error::InvalidInput(format!("{ctx}: empty glue set")));
            }
            g.op.validate()
                .map_err(|e| Error::InvalidInput(format!("{ctx}: {e}")))?;
        }
        Ok(())
    }

    /// Glue record of the pair `{d, k}` in either orientation.
    pub fn glue(&self, d: usize, k: usize) -> Option<&Glue> {
        self.glue
            .iter()
            .find(|g| (g.from == d && g.to == k) || (g.from == k && g.to == d))
    }

    /// Branches glued to `d`, ascending.
    pub fn neighbours(&self, d: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.glue.iter().filter_map(|g| g.other(d)).collect();
        v.sort_unstable();
        v
    }

    /// Shortest chain `[d0, ..., d]` of glued pairs, found by breadth-first
    /// search with ascending neighbour order. `None` if `d` is unreachable
    /// or `d0 == d`.
    pub fn reaches(&self, d0: usize, d: usize) -> Option<Vec<usize>> {
        self.shortest_chain(d0, d, |_, _| true)
    }

    /// Breadth-first chain restricted to steps `u -> v` accepted by `allow`.
    pub fn shortest_chain(
        &self,
        d0: usize,
        d: usize,
        allow: impl Fn(usize, usize) -> bool,
    ) -> Option<Vec<usize>> {
        if d0 == d || d0 == 0 || d == 0 || d0 > self.m || d > self.m {
            return None;
        }
        let mut parent = vec![0usize; self.m + 1];
        let mut visited = vec![false; self.m + 1];
        visited[d0] = true;
        let mut queue = VecDeque::from([d0]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbours(u) {
                if visited[v] || !allow(u, v) {
                    continue;
                }
                visited[v] = true;
                parent[v] = u;
                if v == d {
                    let mut chain = vec![d];
                    let mut w = d;
                    while w != d0 {
                        w = parent[w];
                        chain.push(w);
                    }
                    chain.reverse();
                    return Some(chain);
                }
                queue.push_back(v);
            }
        }
        None
    }

    /// `A(j)`: branches reachable from `j` along chains that do not pass
    /// through the root branch 1, excluding `j` itself.
    pub fn closure(&self, j: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        if j == 0 || j > self.m {
            return out;
        }
        let mut visited = vec![false; self.m + 1];
        visited[j] = true;
        visited[1] = true;
        let mut queue = VecDeque::from([j]);
        while let Some(u) = queue.pop_front() {
            for v in self.neighbours(u) {
                if !visited[v] {
                    visited[v] = true;
                    out.insert(v);
                    queue.push_back(v);
                }
            }
        }
        out
    }

    /// `A(M)`, the union of `A(j)` over `j` in `members`.
    pub fn closure_of(&self, members: &[usize]) -> BTreeSet<usize> {
        members.iter().flat_map(|&j| self.closure(j)).collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Six-pair, seven-branch topology with one reversal out of the root.
    pub(crate) fn seven_branch() -> TopologySpec {
        TopologySpec::new(
            7,
            vec![
                Glue::identity(1, 2, IntervalSet::below(0.0)),
                Glue::new(1, 3, IntervalSet::above(3.0), OperatorSpec::reverse(6.0)),
                Glue::identity(1, 6, IntervalSet::above(5.0)),
                Glue::identity(1, 7, IntervalSet::below(6.0)),
                Glue::identity(3, 4, IntervalSet::below(4.0)),
                Glue::identity(4, 5, IntervalSet::interval(6.0, 7.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn chains_in_seven_branch_topology() {
        let t = seven_branch();
        assert_eq!(t.reaches(1, 4), Some(vec![1, 3, 4]));
        assert_eq!(t.reaches(1, 5), Some(vec![1, 3, 4, 5]));
        assert_eq!(t.reaches(5, 2), Some(vec![5, 4, 3, 1, 2]));
    }

    #[test]
    fn no_pairs_no_chains() {
        let t = TopologySpec::new(3, vec![]).unwrap();
        assert_eq!(t.reaches(1, 2), None);
    }

    #[test]
    fn closures_avoid_the_root() {
        let t = seven_branch();
        assert_eq!(t.closure(3), BTreeSet::from([4, 5]));
        assert!(t.closure(2).is_empty());
        assert!(t.closure_of(&[6, 7]).is_empty());
    }

    #[test]
    fn validation_rejects_malformed_pairs() {
        let set = IntervalSet::below(0.0);
        assert!(TopologySpec::new(2, vec![Glue::identity(1, 1, set.clone())]).is_err());
        assert!(TopologySpec::new(2, vec![Glue::identity(1, 3, set.clone())]).is_err());
        assert!(TopologySpec::new(
            2,
            vec![Glue::identity(1, 2, set.clone()), Glue::identity(2, 1, set)]
        )
        .is_err());
        assert!(TopologySpec::new(2, vec![Glue::identity(1, 2, IntervalSet::empty())]).is_err());
        assert!(TopologySpec::new(0, vec![]).is_err());
    }

    #[test]
    fn glue_entries_parse_from_toml() {
        let t: TopologySpec = toml::from_str(
            r#"
            m = 3
            glue = [
              [1, 2, [["-inf", 0]], { kind = "identity" }],
              [1, 3, [[3, "inf"]], { kind = "reverse", tau = 6 }],
            ]
            "#,
        )
        .unwrap();
        t.validate().unwrap();
        assert_eq!(t.glue(3, 1).unwrap().op, OperatorSpec::reverse(6.0));
    }

    fn identity_topology() -> impl Strategy<Value = TopologySpec> {
        (2usize..8).prop_flat_map(|m| {
            let pairs: Vec<(usize, usize)> = (1..=m)
                .flat_map(|d| (d + 1..=m).map(move |k| (d, k)))
                .collect();
            prop::sample::subsequence(pairs.clone(), 0..=pairs.len()).prop_map(move |chosen| {
                let glue = chosen
                    .into_iter()
                    .map(|(d, k)| Glue::identity(d, k, IntervalSet::below(0.0)))
                    .collect();
                TopologySpec::new(m, glue).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn reachability_is_symmetric_for_identity_glue(t in identity_topology()) {
            for a in 1..=t.m {
                for b in 1..=t.m {
                    if a != b {
                        let ab = t.reaches(a, b);
                        let ba = t.reaches(b, a);
                        prop_assert_eq!(ab.is_some(), ba.is_some());
                        if let (Some(x), Some(y)) = (ab, ba) {
                            prop_assert_eq!(x.len(), y.len());
                        }
                    }
                }
            }
        }
    }
}
