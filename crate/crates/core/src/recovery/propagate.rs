use serde::{Deserialize, Serialize};

use super::pocs::{gap_extrapolate, Extrapolation, ObservationSpec, PocsOptions};
use super::sampling::{band_bins, one_sided_reconstruct, sinc_reconstruct, Samples, SamplingSpec};
use crate::error::{Error, Result};
use crate::interval::{IntervalSet, SetClass};
use crate::signal::{
    apply_operator, dft, gap_energy, idft, residual, spectral_action, GapSpec, SampledSignal,
};
use crate::topology::{check_thm1_chain_condition, evaluate, TopologySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecovery {
    pub branch: usize,
    /// Chain `1 -> ... -> branch` the recovery followed.
    pub chain: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub last_update: f64,
    pub clipped_observed_measure: f64,
    pub clipped_gap_measure: f64,
    pub gap_energy: f64,
    pub l2_error: Option<f64>,
    pub relative_l2_error: Option<f64>,
    pub sup_error: Option<f64>,
    /// Whether every distance of the alternating projections was
    /// non-increasing (checked at every iteration).
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub pair: (usize, usize),
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recovery {
    #[serde(skip)]
    pub signals: Vec<SampledSignal>,
    pub branches: Vec<BranchRecovery>,
    pub residuals: Vec<PairResidual>,
}

impl Recovery {
    pub fn converged(&self) -> bool {
        self.branches.iter().all(|b| b.converged)
    }

    /// `NotConverged` for the first branch whose projections hit the cap.
    pub fn check(&self) -> Result<()> {
        match self.branches.iter().find(|b| !b.converged) {
            None => Ok(()),
            Some(b) => Err(Error::NotConverged {
                branch: b.branch,
                iterations: b.iterations,
                last_update: b.last_update,
            }),
        }
    }

    /// Fills the error fields against known signals.
    pub fn compare(&mut self, truth: &[SampledSignal]) -> Result<()> {
        for b in &mut self.branches {
            let x = &truth[b.branch - 1];
            let diff = self.signals[b.branch - 1].sub(x)?;
            let l2 = diff.norm_l2();
            let n = x.norm_l2();
            b.l2_error = Some(l2);
            b.relative_l2_error = Some(if n > 0.0 { l2 / n } else { l2 });
            b.sup_error = Some(diff.sup_norm());
        }
        Ok(())
    }

    pub fn max_relative_error(&self) -> Option<f64> {
        self.branches
            .iter()
            .map(|b| b.relative_l2_error)
            .try_fold(0.0, |m, e| e.map(|e| f64::max(m, e)))
    }
}

/// `x_to` continued from `x_from` across the glued pair, using the inverse
/// action when the pair is stored as `(to, from)`.
pub fn carry(t: &TopologySpec, from: usize, to: usize, x: &SampledSignal) -> Result<SampledSignal> {
    let g = t
        .glue(from, to)
        .ok_or_else(|| Error::InvalidInput(format!("branches {from} and {to} are not glued")))?;
    if g.from == from {
        return apply_operator(&g.op, x);
    }
    if let Some(inv) = g.op.inverse() {
        return apply_operator(&inv, x);
    }
    let action = spectral_action(&g.op, &x.grid)?
        .and_then(|a| a.inverse())
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "h_({},{}) cannot be inverted on the grid",
                g.from, g.to
            ))
        })?;
    Ok(idft(&action.apply(&dft(x))))
}

/// Which observations of branch 1 pin it down: a bounded gap needs a
/// half-line, an unbounded gap accepts any observed set of positive measure.
fn check_root_observation(g1: &IntervalSet, observed: &IntervalSet) -> Result<()> {
    if observed.classify() == SetClass::HalfLine && observed.complement().is_empty() {
        return Ok(());
    }
    match (g1.classify(), observed.classify()) {
        (SetClass::Empty, _) => Err(Error::PreconditionViolated(
            "branch 1 has no spectrum gap, so it must be observed on the whole line".into(),
        )),
        (SetClass::HalfLine, SetClass::Empty) | (SetClass::FiniteMeasure, SetClass::Empty) => Err(
            Error::PreconditionViolated("branch 1 is not observed anywhere".into()),
        ),
        (SetClass::FiniteMeasure, SetClass::FiniteMeasure) => Err(Error::PreconditionViolated(
            "a finite-measure gap of branch 1 needs a half-line observation".into(),
        )),
        _ => Ok(()),
    }
}

fn branch_record(
    branch: usize,
    chain: Vec<usize>,
    ex: &Extrapolation,
    gap: &IntervalSet,
) -> BranchRecovery {
    BranchRecovery {
        branch,
        chain,
        iterations: ex.iterations,
        converged: ex.converged,
        last_update: ex.last_update,
        clipped_observed_measure: ex.clipped_observed_measure,
        clipped_gap_measure: ex.clipped_gap_measure,
        gap_energy: gap_energy(&dft(ex.signal()), gap),
        l2_error: None,
        relative_l2_error: None,
        sup_error: None,
        monotone: true,
    }
}

/// Recovers branch 1 from its values on `observed`, then every other
/// branch along its admissible chain, each step extrapolating from the
/// glue set with the branch's own gap. Each step starts from the parent's
/// continuation.
pub fn propagate_branches(
    t: &TopologySpec,
    gaps: &GapSpec,
    x1: &SampledSignal,
    observed: &IntervalSet,
    opts: &PocsOptions,
) -> Result<Recovery> {
    if gaps.m() != t.m {
        return Err(Error::InvalidInput(format!(
            "expected {} gaps, got {}",
            t.m,
            gaps.m()
        )));
    }
    check_root_observation(gaps.gap(1), observed)?;
    let obs = ObservationSpec {
        observed: observed.clone(),
        gap: gaps.gap(1).clone(),
    };
    let ex = gap_extrapolate(x1, &obs, None, opts)?;
    let first = branch_record(1, vec![1], &ex, gaps.gap(1));
    propagate_from(t, gaps, ex.signal.expect("estimate"), first, opts)
}

/// Propagation with branch 1 already known on the whole window.
pub fn propagate_from_root(
    t: &TopologySpec,
    gaps: &GapSpec,
    x1: SampledSignal,
    opts: &PocsOptions,
) -> Result<Recovery> {
    let first = BranchRecovery {
        branch: 1,
        chain: vec![1],
        iterations: 0,
        converged: true,
        last_update: 0.0,
        clipped_observed_measure: x1.grid.n as f64 * x1.grid.dt,
        clipped_gap_measure: 0.0,
        gap_energy: gap_energy(&dft(&x1), gaps.gap(1)),
        l2_error: None,
        relative_l2_error: None,
        sup_error: None,
        monotone: true,
    };
    propagate_from(t, gaps, x1, first, opts)
}

fn propagate_from(
    t: &TopologySpec,
    gaps: &GapSpec,
    x1: SampledSignal,
    first: BranchRecovery,
    opts: &PocsOptions,
) -> Result<Recovery> {
    t.validate()?;
    let mut verdicts = check_thm1_chain_condition(t, gaps);
    if let Some(v) = verdicts.iter().find(|v| !v.pass) {
        return Err(Error::ChainUnavailable { branch: v.branch });
    }
    // Parents first: chains come from one breadth-first tree.
    verdicts.sort_by_key(|v| (v.chain.as_ref().map_or(0, Vec::len), v.branch));
    let mut signals: Vec<Option<SampledSignal>> = vec![None; t.m];
    signals[0] = Some(x1);
    let mut branches = vec![first];
    for v in verdicts {
        let chain = v.chain.expect("passing verdict");
        let d = v.branch;
        let p = chain[chain.len() - 2];
        let parent = signals[p - 1].as_ref().expect("parent recovered first");
        let continued = carry(t, p, d, parent)?;
        let obs = ObservationSpec {
            observed: t.glue(p, d).expect("adjacent").set.clone(),
            gap: gaps.gap(d).clone(),
        };
        let ex = gap_extrapolate(&continued, &obs, Some(&continued), opts)?;
        branches.push(branch_record(d, chain, &ex, gaps.gap(d)));
        signals[d - 1] = ex.signal;
    }
    branches.sort_by_key(|b| b.branch);
    let signals: Vec<SampledSignal> = signals
        .into_iter()
        .map(|s| s.expect("every branch"))
        .collect();
    let residuals = t
        .glue
        .iter()
        .map(|g| {
            Ok(PairResidual {
                pair: (g.from, g.to),
                residual: residual(t, &signals, (g.from, g.to))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Recovery {
        signals,
        branches,
        residuals,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingDiagnostics {
    /// `"sinc"` or `"one_sided"`.
    pub method: String,
    pub samples_used: usize,
    pub condition: Option<f64>,
    pub null_dim: Option<usize>,
    pub ill_conditioned: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleRecovery {
    pub sampling: SamplingDiagnostics,
    #[serde(flatten)]
    pub recovery: Recovery,
}

/// Reconstructs branch 1 from its samples `x_1(tau k)`, `k <= s`, then
/// propagates to every branch. Without `s` all samples in the window are
/// used with the classical interpolation series.
pub fn sample_and_recover(
    t: &TopologySpec,
    gaps: &GapSpec,
    x1: &SampledSignal,
    spec: &SamplingSpec,
    opts: &PocsOptions,
) -> Result<SampleRecovery> {
    spec.validate()?;
    let grid = x1.grid;
    if spec.s.is_some() && !spec.oversampled() {
        return Err(Error::PreconditionViolated(format!(
            "one-sided sampling needs tau * omega < pi, got {}",
            spec.tau * spec.omega
        )));
    }
    let in_band = band_bins(&grid, spec.omega);
    let g1 = grid.freq_mask(gaps.gap(1));
    let mut band = vec![false; grid.n];
    for j in in_band {
        band[j] = true;
    }
    if let Some(j) = (0..grid.n).find(|&j| !band[j] && !g1[j]) {
        return Err(Error::PreconditionViolated(format!(
            "gap of branch 1 must contain every frequency outside [-{0}, {0}]; omega = {1} is missing",
            spec.omega,
            grid.omega(j)
        )));
    }
    let report = evaluate(t, &grid, Some(gaps), None)?;
    if !(report.recoverable && report.all_glue_half_lines) {
        return Err(Error::PreconditionViolated(
            "sampling recovery needs half-line glue sets and a recoverable topology".into(),
        ));
    }
    let samples = Samples::from_signal(x1, spec.tau, spec.s)?;
    let (estimate, sampling) = match spec.s {
        None => (
            sinc_reconstruct(&samples, spec, &grid)?,
            SamplingDiagnostics {
                method: "sinc".into(),
                samples_used: samples.len(),
                condition: None,
                null_dim: None,
                ill_conditioned: false,
            },
        ),
        Some(_) => {
            let r = one_sided_reconstruct(&samples, spec, &grid)?;
            let d = SamplingDiagnostics {
                method: "one_sided".into(),
                samples_used: r.samples_used,
                condition: Some(r.condition),
                null_dim: Some(r.null_dim),
                ill_conditioned: r.ill_conditioned,
            };
            (r.signal, d)
        }
    };
    let recovery = propagate_from_root(t, gaps, estimate, opts)?;
    Ok(SampleRecovery { sampling, recovery })
}
