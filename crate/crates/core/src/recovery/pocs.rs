use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalSet;
use crate::signal::{Fourier, GridSpec, SampledSignal};

/// Observed time set and known spectrum gap of one branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub observed: IntervalSet,
    pub gap: IntervalSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PocsOptions {
    pub max_iter: usize,
    /// Stop once `||x_{k+1} - x_k|| / ||x_{k+1}||` falls below this.
    pub tol: f64,
    /// `x_{k+1} = x_k + relaxation (P_gap P_obs x_k - x_k)`.
    pub relaxation: f64,
    /// Iterations between convergence-log entries.
    pub log_every: usize,
}

impl Default for PocsOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol: 1e-10,
            relaxation: 1.0,
            log_every: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub update: f64,
    /// Distance of the iterate to the observation set.
    pub dist_observed: f64,
    /// Distance of the observation-projected iterate to the gap subspace.
    pub dist_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    #[serde(skip)]
    pub signal: Option<SampledSignal>,
    pub iterations: usize,
    pub converged: bool,
    pub last_update: f64,
    pub log: Vec<LogEntry>,
    /// Grid points fixed by the observation.
    pub observed_points: usize,
    /// Frequency bins forced to zero.
    pub gap_bins: usize,
    /// Measures of the observed and gap sets after clipping to the grid.
    pub clipped_observed_measure: f64,
    pub clipped_gap_measure: f64,
}

impl Extrapolation {
    pub fn signal(&self) -> &SampledSignal {
        self.signal.as_ref().expect("estimate present")
    }

    /// The estimate, or `NotConverged` attributed to `branch`.
    pub fn checked(self, branch: usize) -> Result<SampledSignal> {
        if self.converged {
            Ok(self.signal.expect("estimate present"))
        } else {
            Err(Error::NotConverged {
                branch,
                iterations: self.iterations,
                last_update: self.last_update,
            })
        }
    }
}

/// Extends the values of `observations` on `obs.observed` to a signal whose
/// spectrum vanishes on `obs.gap`, by alternating projections. Starts from
/// `init` (zero when absent) with the observations imposed.
pub fn gap_extrapolate(
    observations: &SampledSignal,
    obs: &ObservationSpec,
    init: Option<&SampledSignal>,
    opts: &PocsOptions,
) -> Result<Extrapolation> {
    let grid = observations.grid;
    let obs_mask = grid.time_mask(&obs.observed);
    let gap_mask = grid.freq_mask(&obs.gap);
    let mut out = pocs_masks(observations, &obs_mask, &gap_mask, init, opts)?;
    out.clipped_observed_measure = out.observed_points as f64 * grid.dt;
    out.clipped_gap_measure = out.gap_bins as f64 * grid.d_omega();
    Ok(out)
}

fn norm(v: &[Complex64], dt: f64) -> f64 {
    (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dt).sqrt()
}

/// Alternating projections with the constraint sets given as grid masks.
pub fn pocs_masks(
    observations: &SampledSignal,
    obs_mask: &[bool],
    gap_mask: &[bool],
    init: Option<&SampledSignal>,
    opts: &PocsOptions,
) -> Result<Extrapolation> {
    let grid: GridSpec = observations.grid;
    if obs_mask.len() != grid.n || gap_mask.len() != grid.n {
        return Err(Error::InvalidInput(
            "mask length differs from the grid".into(),
        ));
    }
    if let Some(x0) = init {
        if x0.grid != grid {
            return Err(Error::GridMismatch);
        }
    }
    if !(opts.relaxation > 0.0 && opts.relaxation < 2.0) {
        return Err(Error::InvalidInput(format!(
            "relaxation must lie in (0, 2), got {}",
            opts.relaxation
        )));
    }
    let observed_points = obs_mask.iter().filter(|&&b| b).count();
    let gap_bins = gap_mask.iter().filter(|&&b| b).count();
    let mut result = Extrapolation {
        signal: None,
        iterations: 0,
        converged: true,
        last_update: 0.0,
        log: Vec::new(),
        observed_points,
        gap_bins,
        clipped_observed_measure: 0.0,
        clipped_gap_measure: 0.0,
    };
    if observed_points == grid.n {
        // Nothing left to extrapolate.
        result.signal = Some(observations.clone());
        return Ok(result);
    }
    if observed_points == 0 {
        return Err(Error::InvalidInput(
            "observed set contains no grid point".into(),
        ));
    }
    if gap_bins == 0 {
        return Err(Error::InvalidInput("gap contains no grid frequency".into()));
    }

    let dt = grid.dt;
    let project_obs = |x: &mut [Complex64]| {
        for ((v, &m), o) in x.iter_mut().zip(obs_mask).zip(&observations.values) {
            if m {
                *v = *o;
            }
        }
    };
    let mut engine = Fourier::new(grid);
    let mut x: Vec<Complex64> = match init {
        Some(x0) => x0.values.clone(),
        None => vec![Complex64::new(0.0, 0.0); grid.n],
    };
    project_obs(&mut x);
    let scale = observations
        .norm_l2_on(obs_mask)
        .max(norm(&x, dt))
        .max(f64::MIN_POSITIVE);
    // Alternating distances d_obs(1) >= d_gap(1) >= d_obs(2) >= ... for
    // unit relaxation.
    let slack = 1e-12 * scale;
    let mut prev_dist = f64::INFINITY;
    let mut y = vec![Complex64::new(0.0, 0.0); grid.n];
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.n];
    for it in 1..=opts.max_iter {
        y.copy_from_slice(&x);
        project_obs(&mut y);
        let d_obs = (x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * dt)
            .sqrt();
        spec.copy_from_slice(&y);
        engine.forward_in_place(&mut spec);
        let gap_sq: f64 = spec
            .iter()
            .zip(gap_mask)
            .filter(|(_, &g)| g)
            .map(|(v, _)| v.norm_sqr())
            .sum();
        let d_gap = (gap_sq * grid.d_omega() / (2.0 * std::f64::consts::PI)).sqrt();
        for (v, &g) in spec.iter_mut().zip(gap_mask) {
            if g {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        engine.inverse_in_place(&mut spec);
        if opts.relaxation == 1.0 {
            if d_obs > prev_dist + slack {
                return Err(Error::MonotonicityViolated {
                    iteration: it,
                    before: prev_dist,
                    after: d_obs,
                });
            }
            // The starting point need not lie in the gap subspace.
            if it > 1 && d_gap > d_obs + slack {
                return Err(Error::MonotonicityViolated {
                    iteration: it,
                    before: d_obs,
                    after: d_gap,
                });
            }
            prev_dist = d_gap;
        }
        let mut diff_sq = 0.0;
        let mut new_sq = 0.0;
        for (xi, zi) in x.iter_mut().zip(&spec) {
            let step = (zi - *xi) * opts.relaxation;
            *xi += step;
            diff_sq += step.norm_sqr();
            new_sq += xi.norm_sqr();
        }
        let update = if new_sq > 0.0 {
            (diff_sq / new_sq).sqrt()
        } else {
            diff_sq.sqrt()
        };
        result.iterations = it;
        result.last_update = update;
        let done = update < opts.tol;
        if it % opts.log_every.max(1) == 0 || done || it == opts.max_iter || it == 1 {
            result.log.push(LogEntry {
                iteration: it,
                update,
                dist_observed: d_obs,
                dist_gap: d_gap,
            });
        }
        if done {
            result.converged = true;
            result.signal = Some(SampledSignal::new(grid, x)?);
            return Ok(result);
        }
    }
    result.converged = false;
    result.signal = Some(SampledSignal::new(grid, x)?);
    Ok(result)
}
