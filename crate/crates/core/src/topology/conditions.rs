//! Machine-checkable verdicts for the structural conditions on `(Gamma, I, h)`.
//!
//! `A(j)` is read as the set of branches reachable from `j` without passing
//! through branch 1 (see [`TopologySpec::closure`]). Pair clauses use the
//! stored orientation `(d, k)`; pairs whose second entry is branch 1 are
//! exempt from the membership clause (iv).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{OperatorSpec, TopologySpec};
use crate::error::{Error, Result};
use crate::interval::{IntervalSet, SetClass};
use crate::signal::{spectral_action, GapSpec, GridSpec};

/// Smallest admissible `|H_p(i omega)|` on the invertibility domain.
pub const EPS_INV: f64 = 1e-9;

/// Neighbour counts above this only try the run-grouping candidate.
const EXHAUSTIVE_LIMIT: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub n: usize,
    /// `M_1, ..., M_n`.
    pub partition: Vec<Vec<usize>>,
    /// `A(M_1), ..., A(M_n)`.
    pub closures: Vec<Vec<usize>>,
    /// `h_p` shared by the members of `M_p`.
    pub operators: Vec<OperatorSpec>,
    /// Frequency domain `D` on which every `H_p` is invertible.
    pub domain: IntervalSet,
    /// `sup over D of |H_p(i omega)^{-1}|` on the working grid.
    pub inverse_bounds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition2Report {
    pub holds: bool,
    pub failed_clause: Option<String>,
    pub detail: Option<String>,
    pub witness: Option<Witness>,
    /// Every operator is the identity, so Condition 1 already applies.
    pub deferred_to_condition1: bool,
}

impl Condition2Report {
    fn fail(clause: &str, detail: String, deferred: bool) -> Self {
        Self {
            holds: false,
            failed_clause: Some(clause.to_string()),
            detail: Some(detail),
            witness: None,
            deferred_to_condition1: deferred,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainVerdict {
    pub branch: usize,
    pub pass: bool,
    /// Chain `1, ..., branch` whose every step has `mes(I u G) = inf`.
    pub chain: Option<Vec<usize>>,
    pub reachable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    /// `mes(I_{d,k} n G_k) = inf`: `x_k` is determined by the glued path.
    DeterminedByPath,
    /// `I_{d,k}` contains a half-line and `mes(G_d n G_k) > 0`.
    CoincideHalfLine,
    /// `mes(G_d n G_k) = inf`.
    CoincideInfiniteOverlap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub pair: (usize, usize),
    pub kind: FindingKind,
    pub message: String,
}

impl Finding {
    pub fn branches_coincide(&self) -> bool {
        self.kind != FindingKind::DeterminedByPath
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition1: bool,
    pub condition2: Condition2Report,
    /// Shortest chain `1 -> d` for `d = 2..=m`, if any.
    pub chains: Vec<Option<Vec<usize>>>,
    pub chain_check: Vec<ChainVerdict>,
    pub findings: Vec<Finding>,
    /// Every glue set contains a half-line.
    pub all_glue_half_lines: bool,
    /// Condition 1 or 2 holds and every branch has an admissible chain.
    pub recoverable: bool,
}

pub fn check_condition1(t: &TopologySpec) -> bool {
    t.glue.iter().all(|g| g.op.is_identity())
}

/// Operator out of the root towards neighbour `k`.
fn root_operator(t: &TopologySpec, k: usize) -> OperatorSpec {
    let g = t.glue(1, k).expect("neighbour of the root");
    if g.from == 1 {
        g.op.clone()
    } else {
        // Stored as (k, 1); clause (v) has already forced the identity.
        OperatorSpec::Identity
    }
}

/// Candidate `M_p` families: maximal runs of equal operator in ascending
/// neighbour order first, then every operator-homogeneous labelling.
fn candidate_partitions(neighbours: &[usize], ops: &[OperatorSpec]) -> Vec<Vec<Vec<usize>>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (i, &k) in neighbours.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if i > 0 && ops[i] == ops[i - 1] => run.push(k),
            _ => runs.push(vec![k]),
        }
    }
    let mut out = vec![runs];
    if neighbours.len() > EXHAUSTIVE_LIMIT {
        return out;
    }
    // Label 0 leaves an identity neighbour outside every M_p.
    let mut labels = vec![0usize; neighbours.len()];
    enumerate_labellings(0, 0, &mut labels, ops, &mut |labels, blocks| {
        let mut family = vec![Vec::new(); blocks];
        for (i, &l) in labels.iter().enumerate() {
            if l > 0 {
                family[l - 1].push(neighbours[i]);
            }
        }
        if !out.contains(&family) {
            out.push(family);
        }
    });
    out
}

fn enumerate_labellings(
    i: usize,
    blocks: usize,
    labels: &mut Vec<usize>,
    ops: &[OperatorSpec],
    emit: &mut dyn FnMut(&[usize], usize),
) {
    if i == labels.len() {
        emit(labels, blocks);
        return;
    }
    for l in 0..=blocks + 1 {
        if l == 0 && !ops[i].is_identity() {
            continue;
        }
        if l >= 1 && l <= blocks {
            let first = labels[..i]
                .iter()
                .position(|&x| x == l)
                .expect("block has a member");
            if ops[first] != ops[i] {
                continue;
            }
        }
        labels[i] = l;
        enumerate_labellings(i + 1, blocks.max(l), labels, ops, emit);
    }
    labels[i] = 0;
}

/// First clause among (i)-(iv) violated by the family, if any.
fn family_violation(
    t: &TopologySpec,
    family: &[Vec<usize>],
    closures: &[BTreeSet<usize>],
) -> Option<(&'static str, String)> {
    if family.len() < 2 {
        return Some((
            "n",
            format!("need at least two groups M_p, found {}", family.len()),
        ));
    }
    for m in family {
        for &d in m {
            if t.reaches(1, d).is_none() {
                return Some(("(i)", format!("branch {d} is not reachable from branch 1")));
            }
        }
    }
    for p in 0..closures.len() {
        for q in p + 1..closures.len() {
            if let Some(x) = closures[p].intersection(&closures[q]).next() {
                return Some((
                    "(ii)",
                    format!("branch {x} lies in A(M_{}) and A(M_{})", p + 1, q + 1),
                ));
            }
        }
    }
    for g in &t.glue {
        for (p, a) in closures.iter().enumerate() {
            if a.contains(&g.from) && !a.contains(&g.to) {
                return Some((
                    "(iii)",
                    format!("pair ({}, {}) leaves A(M_{})", g.from, g.to, p + 1),
                ));
            }
        }
    }
    let covered: BTreeSet<usize> = family
        .iter()
        .flatten()
        .copied()
        .chain(closures.iter().flatten().copied())
        .collect();
    for g in &t.glue {
        if g.to != 1 && !covered.contains(&g.to) {
            return Some((
                "(iv)",
                format!(
                    "branch {} of pair ({}, {}) is in no M_p and no A(M_p)",
                    g.to, g.from, g.to
                ),
            ));
        }
    }
    None
}

/// Frequency bins in increasing `omega` order.
fn ascending_bins(grid: &GridSpec) -> Vec<usize> {
    (grid.n / 2..grid.n).chain(0..grid.n / 2).collect()
}

/// Searches for a Condition 2 witness.
///
/// `domain` is `D`; when absent, the longest run of grid frequencies on
/// which every `|H_p| >= EPS_INV` is used.
pub fn check_condition2(
    t: &TopologySpec,
    grid: &GridSpec,
    domain: Option<&IntervalSet>,
) -> Result<Condition2Report> {
    let deferred = check_condition1(t);
    for g in t.glue.iter().filter(|g| g.from == 1) {
        if !g.op.has_spectral_action() {
            return Ok(Condition2Report::fail(
                "(vi)(b)",
                format!("h_(1,{}) does not act as a frequency multiplier", g.to),
                deferred,
            ));
        }
    }
    for g in t.glue.iter().filter(|g| g.from != 1) {
        if !g.op.is_identity() {
            return Ok(Condition2Report::fail(
                "(v)",
                format!("h_({},{}) is not the identity", g.from, g.to),
                deferred,
            ));
        }
    }

    let neighbours = t.neighbours(1);
    let ops: Vec<OperatorSpec> = neighbours.iter().map(|&k| root_operator(t, k)).collect();
    let mut first_failure = None;
    let mut chosen = None;
    for family in candidate_partitions(&neighbours, &ops) {
        let closures: Vec<BTreeSet<usize>> = family.iter().map(|m| t.closure_of(m)).collect();
        match family_violation(t, &family, &closures) {
            None => {
                chosen = Some((family, closures));
                break;
            }
            Some(v) => {
                first_failure.get_or_insert(v);
            }
        }
    }
    let Some((family, closures)) = chosen else {
        let (clause, detail) =
            first_failure.unwrap_or(("n", "branch 1 has no glued neighbours".into()));
        return Ok(Condition2Report::fail(clause, detail, deferred));
    };

    let operators: Vec<OperatorSpec> = family
        .iter()
        .map(|m| ops[neighbours.iter().position(|&k| k == m[0]).unwrap()].clone())
        .collect();
    let moduli: Vec<Vec<f64>> = operators
        .iter()
        .map(|op| {
            let action = spectral_action(op, grid)?.expect("checked above");
            Ok(action.mult.iter().map(|m| m.norm()).collect())
        })
        .collect::<Result<_>>()?;
    let ok = |j: usize| moduli.iter().all(|m| m[j] >= EPS_INV);

    let domain = match domain {
        Some(d) => {
            let mask = grid.freq_mask(d);
            if !mask.iter().any(|&b| b) {
                return Ok(Condition2Report::fail(
                    "(vi)(b)",
                    "D contains no grid frequency".into(),
                    deferred,
                ));
            }
            if let Some(j) = (0..grid.n).find(|&j| mask[j] && !ok(j)) {
                return Ok(Condition2Report::fail(
                    "(vi)(b)",
                    format!("some H_p vanishes on D at omega = {}", grid.omega(j)),
                    deferred,
                ));
            }
            d.clone()
        }
        None => {
            let bins = ascending_bins(grid);
            let (mut best, mut cur) = ((0usize, 0usize), (0usize, 0usize));
            for (pos, &j) in bins.iter().enumerate() {
                if ok(j) {
                    if cur.1 == 0 {
                        cur.0 = pos;
                    }
                    cur.1 += 1;
                    if cur.1 > best.1 {
                        best = cur;
                    }
                } else {
                    cur.1 = 0;
                }
            }
            if best.1 == 0 {
                return Err(Error::NoInvertibleDomain);
            }
            let half = 0.5 * grid.d_omega();
            let lo = grid.omega(bins[best.0]) - half;
            let hi = grid.omega(bins[best.0 + best.1 - 1]) + half;
            IntervalSet::interval(lo, hi)
        }
    };
    let mask = grid.freq_mask(&domain);
    let inverse_bounds = moduli
        .iter()
        .map(|m| {
            (0..grid.n)
                .filter(|&j| mask[j])
                .map(|j| 1.0 / m[j])
                .fold(0.0, f64::max)
        })
        .collect();

    Ok(Condition2Report {
        holds: true,
        failed_clause: None,
        detail: None,
        witness: Some(Witness {
            n: family.len(),
            partition: family,
            closures: closures
                .into_iter()
                .map(|c| c.into_iter().collect())
                .collect(),
            operators,
            domain,
            inverse_bounds,
        }),
        deferred_to_condition1: deferred,
    })
}

/// For every `d >= 2`, the shortest chain `1 -> d` whose steps `u -> v`
/// all satisfy `mes(I_{u,v} u G_v) = inf`.
pub fn check_thm1_chain_condition(t: &TopologySpec, g: &GapSpec) -> Vec<ChainVerdict> {
    let admissible = |u: usize, v: usize| {
        let glue = t.glue(u, v).expect("adjacent");
        let gap = g.gaps.get(v - 1).cloned().unwrap_or_default();
        glue.set.union(&gap).measure() == f64::INFINITY
    };
    (2..=t.m)
        .map(|d| {
            let chain = t.shortest_chain(1, d, admissible);
            ChainVerdict {
                branch: d,
                pass: chain.is_some(),
                chain,
                reachable: t.reaches(1, d).is_some(),
            }
        })
        .collect()
}

pub fn check_pairwise_implications(t: &TopologySpec, g: &GapSpec) -> Vec<Finding> {
    let gap = |d: usize| g.gaps.get(d - 1).cloned().unwrap_or_default();
    let mut out = Vec::new();
    for glue in &t.glue {
        let (d, k) = (glue.from, glue.to);
        let (gd, gk) = (gap(d), gap(k));
        let overlap = gd.intersect(&gk).measure();
        if glue.set.intersect(&gk).measure() == f64::INFINITY {
            out.push(Finding {
                pair: (d, k),
                kind: FindingKind::DeterminedByPath,
                message: format!("x_{k} is determined by h_({d},{k})(x_{d}) on the glue set"),
            });
        }
        if glue.set.classify() == SetClass::HalfLine && overlap > 0.0 {
            out.push(Finding {
                pair: (d, k),
                kind: FindingKind::CoincideHalfLine,
                message: format!("x_{k} = h_({d},{k})(x_{d}): half-line glue and overlapping gaps"),
            });
        }
        if overlap == f64::INFINITY {
            out.push(Finding {
                pair: (d, k),
                kind: FindingKind::CoincideInfiniteOverlap,
                message: format!(
                    "x_{k} = h_({d},{k})(x_{d}): gaps overlap on a set of infinite measure"
                ),
            });
        }
    }
    out
}

/// Full report: both conditions, reachability, and, when gaps are known,
/// the chain condition and pairwise findings.
pub fn evaluate(
    t: &TopologySpec,
    grid: &GridSpec,
    gaps: Option<&GapSpec>,
    domain: Option<&IntervalSet>,
) -> Result<ConditionReport> {
    t.validate()?;
    let condition1 = check_condition1(t);
    let condition2 = check_condition2(t, grid, domain)?;
    let chains = (2..=t.m).map(|d| t.reaches(1, d)).collect::<Vec<_>>();
    let (chain_check, findings) = match gaps {
        Some(g) => (
            check_thm1_chain_condition(t, g),
            check_pairwise_implications(t, g),
        ),
        None => (Vec::new(), Vec::new()),
    };
    let all_glue_half_lines = t
        .glue
        .iter()
        .all(|g| g.set.classify() == SetClass::HalfLine);
    let chains_ok = if gaps.is_some() {
        chain_check.iter().all(|v| v.pass)
    } else {
        all_glue_half_lines && chains.iter().all(Option::is_some)
    };
    Ok(ConditionReport {
        condition1,
        recoverable: (condition1 || condition2.holds) && chains_ok,
        condition2,
        chains,
        chain_check,
        findings,
        all_glue_half_lines,
    })
}
