//! Spectrum-gap construction: from a branched process `{x_d}` and a gap plan,
//! build `{x^_d}` with `X^_d = 0` on `G_d` for every branch while every glue
//! relation `x^_k = h_{d,k}(x^_d)` on `I_{d,k}` still holds.
//!
//! Each branch `d` reached from a component root `r` gets a path operator
//! `P_d`, the composite of the glue operators along its breadth-first tree
//! path, acting on spectra as `(P_d X)_j = M_{d,j} X_{sigma_d(j)}`. With
//! `Y_d = X_d - P_d X_r`:
//!
//! ```text
//! X^_r(sigma_d(j)) = -Y_d(j) / M_{d,j}     j in J_d, d != r
//! X^_r(j)          = 0                     j in G_r
//! X^_r(j)          = X_r(j)                elsewhere
//! X^_d             = P_d X^_r + Y_d
//! ```
//!
//! Glue relations are preserved because `X^_k - H X^_d = X_k - H X_d` on every
//! pair whose operators commute with the path operators. For identity glue
//! (`P_d = 1`) this is the masking formula with `-sum Y_{d,1} 1{J_d}`; for
//! operators out of the root it carries the `H_p^{-1}` correction.

use std::collections::{BTreeMap, VecDeque};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::signal::{
    apply_operator, edge_taper, residual, spectral_action, Fourier, GapSpec, GridSpec,
    SampledSignal, SpectralAction, Spectrum,
};
use crate::topology::{
    check_condition1, check_condition2, check_pairwise_implications, FindingKind, TopologySpec,
    EPS_INV,
};

/// Residual and gap-energy tolerance of the construction postconditions.
pub const POSTCONDITION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapPlan {
    /// Gap centres `omega_k`: either one per branch `2..=m`, or one per
    /// branch `1..=m`. Defaults to `k * pi / (2 m^2 dt)` for `k >= 2`.
    #[serde(default)]
    pub centers: Option<Vec<f64>>,
    pub delta: f64,
    /// Prescribed gap of branch 1.
    #[serde(default)]
    pub fixed_g1: Option<IntervalSet>,
    /// Replaces `J_k(delta)` for the listed branches (1-based keys).
    #[serde(default)]
    pub gap_overrides: BTreeMap<usize, IntervalSet>,
    /// Joined to `J_k(delta)` for the listed branches, so the gap keeps
    /// shrinking with `delta` around its centre.
    #[serde(default)]
    pub gap_extensions: BTreeMap<usize, IntervalSet>,
    /// Invertibility domain `D` for operators out of branch 1.
    #[serde(default)]
    pub domain: Option<IntervalSet>,
}

impl GapPlan {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            ..Self::default()
        }
    }

    pub fn with_centers(mut self, centers: Vec<f64>) -> Self {
        self.centers = Some(centers);
        self
    }

    pub fn with_fixed_g1(mut self, g1: IntervalSet) -> Self {
        self.fixed_g1 = Some(g1);
        self
    }

    pub fn with_override(mut self, branch: usize, gap: IntervalSet) -> Self {
        self.gap_overrides.insert(branch, gap);
        self
    }

    pub fn with_extension(mut self, branch: usize, extra: IntervalSet) -> Self {
        self.gap_extensions.insert(branch, extra);
        self
    }

    /// Default centres for branches `2..=m`.
    pub fn default_centers(m: usize, grid: &GridSpec) -> Vec<f64> {
        let m_f = m as f64;
        (2..=m)
            .map(|k| k as f64 * (std::f64::consts::PI / (2.0 * m_f * grid.dt)) / m_f)
            .collect()
    }

    /// `G_d` for every branch.
    pub fn gaps(&self, m: usize, grid: &GridSpec) -> Result<GapSpec> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        let centers = self
            .centers
            .clone()
            .unwrap_or_else(|| Self::default_centers(m, grid));
        let (c1, rest) = if centers.len() == m {
            (Some(centers[0]), centers[1..].to_vec())
        } else if centers.len() + 1 == m {
            (None, centers)
        } else {
            return Err(Error::InvalidInput(format!(
                "expected {} or {} gap centres, got {}",
                m - 1,
                m,
                centers.len()
            )));
        };
        let mut gaps = Vec::with_capacity(m);
        gaps.push(match (&self.fixed_g1, c1) {
            (Some(g), _) => g.clone(),
            (None, Some(c)) => IntervalSet::centered(c, self.delta),
            (None, None) => IntervalSet::empty(),
        });
        gaps.extend(rest.iter().map(|&c| IntervalSet::centered(c, self.delta)));
        for (&k, g) in &self.gap_overrides {
            if k == 0 || k > m {
                return Err(Error::InvalidInput(format!(
                    "gap override for unknown branch {k}"
                )));
            }
            gaps[k - 1] = g.clone();
        }
        for (&k, g) in &self.gap_extensions {
            if k == 0 || k > m {
                return Err(Error::InvalidInput(format!(
                    "gap extension for unknown branch {k}"
                )));
            }
            gaps[k - 1] = gaps[k - 1].union(g);
        }
        GapSpec::new(gaps)
    }
}

/// Residual of one glued pair before and after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub pair: (usize, usize),
    pub input: f64,
    pub output: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    /// `"condition1"` or `"condition2"`.
    pub variant: String,
    pub partition: Option<Vec<Vec<usize>>>,
    pub gaps: GapSpec,
    pub gap_energies: Vec<f64>,
    pub residuals: Vec<PairResidual>,
    pub l2_errors: Vec<f64>,
    pub relative_l2_errors: Vec<f64>,
    pub sup_errors: Vec<f64>,
    /// `(1 / 2 pi) sum |X_d - X^_d| d_omega`, an upper bound of `sup_errors`.
    pub sup_bounds: Vec<f64>,
    pub max_l2_error: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Construction {
    pub signals: Vec<SampledSignal>,
    pub spectra: Vec<Spectrum>,
    pub gaps: GapSpec,
    pub report: ConstructionReport,
}

fn shared_grid(t: &TopologySpec, xs: &[SampledSignal]) -> Result<GridSpec> {
    if xs.len() != t.m {
        return Err(Error::InvalidInput(format!(
            "expected {} signals, got {}",
            t.m,
            xs.len()
        )));
    }
    let grid = xs[0].grid;
    if xs.iter().any(|x| x.grid != grid) {
        return Err(Error::GridMismatch);
    }
    Ok(grid)
}

/// Action of `x_to` in terms of `x_from` across a glued pair.
fn edge_action(
    t: &TopologySpec,
    from: usize,
    to: usize,
    grid: &GridSpec,
) -> Result<SpectralAction> {
    let g = t.glue(from, to).expect("adjacent");
    let action = spectral_action(&g.op, grid)?.ok_or_else(|| {
        Error::violated(
            "(vi)(b)",
            format!("h_({},{}) has no frequency-domain action", g.from, g.to),
        )
    })?;
    if g.from == from {
        Ok(action)
    } else {
        action.inverse().ok_or_else(|| {
            Error::violated(
                "(vi)(b)",
                format!("h_({},{}) is not invertible on the grid", g.from, g.to),
            )
        })
    }
}

/// `Y_{k,d} = F(x_k - h_{d,k} x_d)` for a glued pair, with `h_{d,k}` the
/// operator carrying branch `d` to branch `k`.
pub fn compute_glue_defect(
    t: &TopologySpec,
    xs: &[SampledSignal],
    k: usize,
    d: usize,
) -> Result<Spectrum> {
    let grid = shared_grid(t, xs)?;
    let g = t
        .glue(d, k)
        .ok_or_else(|| Error::InvalidInput(format!("branches {d} and {k} are not glued")))?;
    let mut engine = Fourier::new(grid);
    if g.from == d {
        engine.dft(&xs[k - 1].sub(&apply_operator(&g.op, &xs[d - 1])?)?)
    } else {
        let xd = engine.dft(&xs[d - 1])?;
        let xk = engine.dft(&xs[k - 1])?;
        xk.sub(&edge_action(t, d, k, &grid)?.apply(&xd))
    }
}

/// Breadth-first path actions from each component root.
struct PathTree {
    roots: Vec<usize>,
    /// Root of the component of each branch (1-based, index 0 unused).
    root_of: Vec<usize>,
    actions: Vec<Option<SpectralAction>>,
}

fn path_tree(t: &TopologySpec, grid: &GridSpec) -> Result<PathTree> {
    let mut root_of = vec![0usize; t.m + 1];
    let mut actions: Vec<Option<SpectralAction>> = vec![None; t.m + 1];
    let mut roots = Vec::new();
    for r in 1..=t.m {
        if root_of[r] != 0 {
            continue;
        }
        roots.push(r);
        root_of[r] = r;
        actions[r] = Some(SpectralAction::identity(grid.n));
        let mut queue = VecDeque::from([r]);
        while let Some(u) = queue.pop_front() {
            for v in t.neighbours(u) {
                if root_of[v] != 0 {
                    continue;
                }
                root_of[v] = r;
                let step = edge_action(t, u, v, grid)?;
                actions[v] = Some(actions[u].as_ref().unwrap().then(&step));
                queue.push_back(v);
            }
        }
    }
    // Every pair must commute with the path operators, not only tree edges.
    for g in &t.glue {
        let pu = actions[g.from].as_ref().unwrap();
        let pv = actions[g.to].as_ref().unwrap();
        let step = edge_action(t, g.from, g.to, grid)?;
        let via = pu.then(&step);
        let scale = pv.mult.iter().map(|m| m.norm()).fold(1.0, f64::max);
        if via.distance(pv) > 1e-9 * scale {
            return Err(Error::violated(
                "(v)",
                format!(
                    "pair ({}, {}) closes a loop whose operators do not compose consistently",
                    g.from, g.to
                ),
            ));
        }
    }
    Ok(PathTree {
        roots,
        root_of,
        actions,
    })
}

/// Builds the gapped process. Requires Condition 1 or 2 and inputs whose
/// glue residuals are within [`POSTCONDITION_TOL`].
pub fn construct(t: &TopologySpec, xs: &[SampledSignal], plan: &GapPlan) -> Result<Construction> {
    t.validate()?;
    let grid = shared_grid(t, xs)?;
    let condition1 = check_condition1(t);
    let (variant, partition, domain) = if condition1 {
        ("condition1", None, plan.domain.clone())
    } else {
        let c2 = check_condition2(t, &grid, plan.domain.as_ref())?;
        if !c2.holds {
            return Err(Error::violated(
                c2.failed_clause.unwrap_or_default(),
                c2.detail
                    .unwrap_or_else(|| "neither condition holds".into()),
            ));
        }
        let w = c2.witness.expect("witness");
        ("condition2", Some(w.partition), Some(w.domain))
    };

    let mut residuals = Vec::with_capacity(t.glue.len());
    for g in &t.glue {
        let r = residual(t, xs, (g.from, g.to))?;
        if r > POSTCONDITION_TOL {
            return Err(Error::PreconditionViolated(format!(
                "inputs violate glue ({}, {}): relative residual {r:e}",
                g.from, g.to
            )));
        }
        residuals.push(PairResidual {
            pair: (g.from, g.to),
            input: r,
            output: f64::NAN,
        });
    }

    let gaps = plan.gaps(t.m, &grid)?;
    validate_plan(t, &grid, plan, &gaps, domain.as_ref(), condition1)?;

    let tree = path_tree(t, &grid)?;
    let mut engine = Fourier::new(grid);
    let spectra_in: Vec<Spectrum> = xs.iter().map(|x| engine.dft(x)).collect::<Result<_>>()?;
    let masks: Vec<Vec<bool>> = gaps.gaps.iter().map(|g| grid.freq_mask(g)).collect();

    let mut out: Vec<Option<Spectrum>> = vec![None; t.m];
    for &r in &tree.roots {
        let members: Vec<usize> = (1..=t.m).filter(|&d| tree.root_of[d] == r).collect();
        let xr = &spectra_in[r - 1];
        let mut yd: BTreeMap<usize, Spectrum> = BTreeMap::new();
        for &d in members.iter().filter(|&&d| d != r) {
            let p = tree.actions[d].as_ref().unwrap();
            yd.insert(d, spectra_in[d - 1].sub(&p.apply(xr))?);
        }
        // Bins of X^_r fixed by the gap of each member.
        let mut owner: Vec<Option<usize>> = vec![None; grid.n];
        for j in (0..grid.n).filter(|&j| masks[r - 1][j]) {
            owner[j] = Some(r);
        }
        let mut xr_hat = xr.clone();
        for j in (0..grid.n).filter(|&j| masks[r - 1][j]) {
            xr_hat.values[j] = Complex64::new(0.0, 0.0);
        }
        for (&d, y) in &yd {
            let p = tree.actions[d].as_ref().unwrap();
            for j in (0..grid.n).filter(|&j| masks[d - 1][j]) {
                let src = p.sigma(j);
                if let Some(prev) = owner[src] {
                    return Err(Error::DisjointnessViolated(format!(
                        "gap of branch {d} at omega = {} collides with the gap of branch {prev}",
                        grid.omega(j)
                    )));
                }
                owner[src] = Some(d);
                let m = p.mult[j];
                if m.norm() < EPS_INV {
                    return Err(Error::NonInvertible {
                        branch: d,
                        omega: grid.omega(j),
                        min_abs: m.norm(),
                    });
                }
                xr_hat.values[src] = -y.values[j] / m;
            }
        }
        for &d in &members {
            let spec = if d == r {
                xr_hat.clone()
            } else {
                tree.actions[d]
                    .as_ref()
                    .unwrap()
                    .apply(&xr_hat)
                    .add(&yd[&d])?
            };
            out[d - 1] = Some(spec);
        }
    }
    let spectra: Vec<Spectrum> = out.into_iter().map(Option::unwrap).collect();
    let signals: Vec<SampledSignal> = spectra
        .iter()
        .map(|s| engine.idft(s))
        .collect::<Result<_>>()?;

    // Postconditions.
    let mut gap_energies = Vec::with_capacity(t.m);
    for (d, x) in signals.iter().enumerate() {
        let e = crate::signal::gap_energy(&engine.dft(x)?, &gaps.gaps[d]);
        if e > POSTCONDITION_TOL {
            return Err(Error::violated(
                "postcondition",
                format!("gap energy of branch {} is {e:e}", d + 1),
            ));
        }
        gap_energies.push(e);
    }
    for pr in &mut residuals {
        pr.output = residual(t, &signals, pr.pair)?;
        if pr.output > POSTCONDITION_TOL {
            return Err(Error::violated(
                "postcondition",
                format!(
                    "glue ({}, {}) residual is {:e}",
                    pr.pair.0, pr.pair.1, pr.output
                ),
            ));
        }
    }

    let mut l2_errors = Vec::with_capacity(t.m);
    let mut relative_l2_errors = Vec::with_capacity(t.m);
    let mut sup_errors = Vec::with_capacity(t.m);
    let mut sup_bounds = Vec::with_capacity(t.m);
    let all = vec![true; grid.n];
    for d in 0..t.m {
        let diff = xs[d].sub(&signals[d])?;
        let l2 = diff.norm_l2();
        let norm = xs[d].norm_l2();
        let sup = diff.sup_norm();
        let bound = spectra_in[d].sub(&spectra[d])?.l1_on(&all);
        if sup > bound * (1.0 + 1e-9) + 1e-300 {
            return Err(Error::violated(
                "postcondition",
                format!(
                    "sup error {sup:e} of branch {} exceeds its spectral bound {bound:e}",
                    d + 1
                ),
            ));
        }
        l2_errors.push(l2);
        relative_l2_errors.push(if norm > 0.0 { l2 / norm } else { l2 });
        sup_errors.push(sup);
        sup_bounds.push(bound);
    }

    let warnings = check_pairwise_implications(t, &gaps)
        .into_iter()
        .filter(|f| f.kind == FindingKind::CoincideInfiniteOverlap)
        .map(|f| format!("redundant branches: {}", f.message))
        .collect();

    let report = ConstructionReport {
        variant: variant.to_string(),
        partition,
        gaps: gaps.clone(),
        gap_energies,
        residuals,
        max_l2_error: l2_errors.iter().copied().fold(0.0, f64::max),
        l2_errors,
        relative_l2_errors,
        sup_errors,
        sup_bounds,
        warnings,
    };
    Ok(Construction {
        signals,
        spectra,
        gaps,
        report,
    })
}

fn validate_plan(
    t: &TopologySpec,
    grid: &GridSpec,
    plan: &GapPlan,
    gaps: &GapSpec,
    domain: Option<&IntervalSet>,
    condition1: bool,
) -> Result<()> {
    for a in 0..t.m {
        for b in a + 1..t.m {
            let overlap = gaps.gaps[a].intersect(&gaps.gaps[b]);
            if !overlap.is_empty() {
                return Err(Error::DisjointnessViolated(format!(
                    "gaps of branches {} and {} overlap on {overlap}",
                    a + 1,
                    b + 1
                )));
            }
        }
    }
    for d in 2..=t.m {
        let g = gaps.gap(d);
        if !grid.freq_mask(g).iter().any(|&b| b) {
            return Err(Error::InvalidInput(format!(
                "gap {g} of branch {d} contains no grid frequency"
            )));
        }
        if let (Some(dom), false) = (domain, condition1) {
            if !g.difference(dom).is_empty()
                && !plan.gap_overrides.contains_key(&d)
                && !plan.gap_extensions.contains_key(&d)
            {
                return Err(Error::InvalidInput(format!(
                    "gap {g} of branch {d} is not inside D = {dom}"
                )));
            }
        }
    }
    if let (Some(g1), Some(dom)) = (&plan.fixed_g1, domain) {
        if dom.difference(g1).measure() <= 0.0 {
            return Err(Error::InvalidInput("D \\ G_1 has measure zero".into()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub max_l2_error: f64,
    pub l2_errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Errors never grow by more than 5% from one row to the next.
    pub monotone: bool,
    pub tolerance: Option<f64>,
    pub final_within_tolerance: Option<bool>,
    /// Fraction of the window tapered at each edge in the error norm.
    pub taper: Option<f64>,
}

/// Relative growth allowed between consecutive rows.
const MONOTONE_SLACK: f64 = 0.05;

/// Runs the construction for each `delta` (strictly decreasing) and records
/// the largest branch error `max_d || x_d - x^_d ||`.
pub fn convergence_study(
    t: &TopologySpec,
    xs: &[SampledSignal],
    template: &GapPlan,
    deltas: &[f64],
    tolerance: Option<f64>,
    taper: Option<f64>,
) -> Result<ConvergenceStudy> {
    if deltas.is_empty() || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "delta sequence must be non-empty and strictly decreasing".into(),
        ));
    }
    let grid = shared_grid(t, xs)?;
    let weights = taper.map(|f| edge_taper(&grid, f));
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let plan = GapPlan {
            delta,
            ..template.clone()
        };
        let c = construct(t, xs, &plan)?;
        let l2_errors: Vec<f64> = match &weights {
            None => c.report.l2_errors.clone(),
            Some(w) => xs
                .iter()
                .zip(&c.signals)
                .map(|(x, y)| {
                    let s: f64 = x
                        .values
                        .iter()
                        .zip(&y.values)
                        .zip(w)
                        .map(|((a, b), w)| (w * (a - b)).norm_sqr())
                        .sum();
                    (s * grid.dt).sqrt()
                })
                .collect(),
        };
        rows.push(ConvergenceRow {
            delta,
            max_l2_error: l2_errors.iter().copied().fold(0.0, f64::max),
            l2_errors,
        });
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].max_l2_error <= w[0].max_l2_error * (1.0 + MONOTONE_SLACK));
    let final_within_tolerance = tolerance.map(|eps| rows.last().unwrap().max_l2_error <= eps);
    Ok(ConvergenceStudy {
        rows,
        monotone,
        tolerance,
        final_within_tolerance,
        taper,
    })
}

/// Largest `delta` in `(0, delta_max]` whose construction error is at most
/// `eps`, found by bisection on `delta`.
pub fn delta_for_epsilon(
    t: &TopologySpec,
    xs: &[SampledSignal],
    template: &GapPlan,
    eps: f64,
    delta_max: f64,
) -> Result<f64> {
    let err = |delta: f64| -> Result<f64> {
        Ok(construct(
            t,
            xs,
            &GapPlan {
                delta,
                ..template.clone()
            },
        )?
        .report
        .max_l2_error)
    };
    if err(delta_max)? <= eps {
        return Ok(delta_max);
    }
    let grid = shared_grid(t, xs)?;
    // Below half a frequency step every J_k misses the grid.
    let floor = 0.5 * grid.d_omega();
    let (mut lo, mut hi) = (floor, delta_max);
    if err(lo)? > eps {
        return Err(Error::InvalidInput(format!(
            "no delta above {floor} reaches error {eps}"
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if err(mid)? <= eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-3 * grid.d_omega() {
            break;
        }
    }
    Ok(lo)
}
