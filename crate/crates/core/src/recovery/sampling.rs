use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{GridSpec, SampledSignal, Spectrum};

/// Condition numbers above this flag the least-squares solve.
pub const ILL_CONDITIONED: f64 = 1e12;
/// Tikhonov parameter relative to the largest singular value.
pub const TIKHONOV_REL: f64 = 1e-10;

/// Filter applied to the singular values of the least-squares system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// `s / (s^2 + lambda^2)`.
    #[default]
    Tikhonov,
    /// `1 / s` above `lambda`, zero below: a projection, so re-solving from
    /// the output's own samples reproduces it up to round-off.
    Truncated,
}

/// Band `[-omega, omega]`, spacing `tau`, optional last sample index `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub omega: f64,
    pub tau: f64,
    #[serde(default)]
    pub s: Option<i64>,
    #[serde(default)]
    pub regularization: Regularization,
}

impl SamplingSpec {
    pub fn new(omega: f64, tau: f64, s: Option<i64>) -> Self {
        Self {
            omega,
            tau,
            s,
            regularization: Regularization::default(),
        }
    }

    pub fn with_regularization(mut self, r: Regularization) -> Self {
        self.regularization = r;
        self
    }

    /// `tau * omega <= pi`, the Nyquist bound.
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "band half-width must be positive, got {}",
                self.omega
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample spacing must be positive, got {}",
                self.tau
            )));
        }
        if self.tau * self.omega > PI * (1.0 + 1e-12) {
            return Err(Error::PreconditionViolated(format!(
                "tau * omega = {} exceeds pi; samples alias",
                self.tau * self.omega
            )));
        }
        Ok(())
    }

    /// Strict oversampling `tau * omega < pi`, needed when only `k <= s`
    /// is observed.
    pub fn oversampled(&self) -> bool {
        self.tau * self.omega < PI * (1.0 - 1e-12)
    }
}

/// Samples `x(tau k)` for the listed `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub tau: f64,
    pub k: Vec<i64>,
    pub values: Vec<Complex64>,
}

impl Samples {
    /// Every sample `x(tau k)` with `tau k` in the window and `k <= s`.
    pub fn from_signal(x: &SampledSignal, tau: f64, s: Option<i64>) -> Result<Self> {
        let grid = x.grid;
        let idx = sample_indices(&grid, tau, s)?;
        Ok(Self {
            tau,
            k: idx.iter().map(|&(k, _)| k).collect(),
            values: idx.iter().map(|&(_, i)| x.values[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.k.iter().map(|&k| k as f64 * self.tau)
    }
}

/// `(k, grid index of tau k)` for the sample times inside the window.
fn sample_indices(grid: &GridSpec, tau: f64, s: Option<i64>) -> Result<Vec<(i64, usize)>> {
    let (lo, hi) = grid.window();
    let k_lo = (lo / tau).ceil() as i64;
    let mut k_hi = ((hi / tau).ceil() as i64) - 1;
    if let Some(s) = s {
        k_hi = k_hi.min(s);
    }
    let mut out = Vec::new();
    for k in k_lo..=k_hi {
        let t = k as f64 * tau;
        if t < lo || t >= hi {
            continue;
        }
        let i = grid.index_of(t).ok_or_else(|| {
            Error::IncommensurateMap(format!(
                "sample time {t} is not a grid point (dt = {})",
                grid.dt
            ))
        })?;
        out.push((k, i));
    }
    Ok(out)
}

fn sinc(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        (PI * u).sin() / (PI * u)
    }
}

/// Whittaker-Shannon sum `x(t) = sum_k x(tau k) sinc((t - tau k) / tau)`
/// over the given samples, evaluated on `grid`.
pub fn sinc_reconstruct(
    samples: &Samples,
    spec: &SamplingSpec,
    grid: &GridSpec,
) -> Result<SampledSignal> {
    spec.validate()?;
    if (samples.tau - spec.tau).abs() > 1e-12 * spec.tau {
        return Err(Error::InvalidInput(
            "sample spacing differs from the sampling spec".into(),
        ));
    }
    let values = grid
        .times()
        .into_iter()
        .map(|t| {
            samples
                .k
                .iter()
                .zip(&samples.values)
                .map(|(&k, &v)| v * sinc(t / spec.tau - k as f64))
                .sum()
        })
        .collect();
    SampledSignal::new(*grid, values)
}

#[derive(Clone, Debug)]
pub struct OneSided {
    pub signal: SampledSignal,
    /// `sigma_max / sigma_min`; infinite when the system has more unknowns
    /// than samples or a zero singular value.
    pub condition: f64,
    /// Unknowns minus numerical rank at `1e-10 sigma_max`.
    pub null_dim: usize,
    pub ill_conditioned: bool,
    pub samples_used: usize,
    pub unknowns: usize,
}

impl OneSided {
    /// The reconstruction, or `IllConditioned` when flagged.
    pub fn checked(self) -> Result<SampledSignal> {
        if self.ill_conditioned {
            Err(Error::IllConditioned {
                condition: self.condition,
            })
        } else {
            Ok(self.signal)
        }
    }
}

/// Bins with `|omega_j| <= omega`.
pub fn band_bins(grid: &GridSpec, omega: f64) -> Vec<usize> {
    (0..grid.n)
        .filter(|&j| grid.omega(j).abs() <= omega * (1.0 + 1e-12))
        .collect()
}

/// Band-limited signal matching the samples in the least-squares sense,
/// solved over the spectral coefficients on `|omega_j| <= Omega` with the
/// singular values filtered at `lambda = 1e-10 sigma_max`.
pub fn one_sided_reconstruct(
    samples: &Samples,
    spec: &SamplingSpec,
    grid: &GridSpec,
) -> Result<OneSided> {
    spec.validate()?;
    let bins = band_bins(grid, spec.omega);
    let rows = samples.len();
    let cols = bins.len();
    if rows == 0 || samples.values.iter().all(|v| v.norm() == 0.0) {
        return Ok(OneSided {
            signal: SampledSignal::zeros(*grid),
            condition: if rows == 0 { f64::INFINITY } else { 1.0 },
            null_dim: if rows == 0 { cols } else { 0 },
            ill_conditioned: rows == 0,
            samples_used: rows,
            unknowns: cols,
        });
    }
    let scale = 1.0 / (grid.n as f64 * grid.dt);
    let times: Vec<f64> = samples.times().collect();
    // x(t) = (1 / (N dt)) sum_j X_j e^{i omega_j t} on grid points.
    let a = DMatrix::from_fn(rows, cols, |r, c| {
        grid.phase(bins[c], times[r]).conj() * scale
    });
    let y = nalgebra::DVector::from_iterator(rows, samples.values.iter().copied());
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let rank = sv.iter().filter(|&&s| s > TIKHONOV_REL * smax).count();
    let null_dim = cols - rank;
    let condition = if cols > rows || smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    };
    let lambda = TIKHONOV_REL * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut coeff = nalgebra::DVector::<Complex64>::zeros(cols);
    for (i, &s) in sv.iter().enumerate() {
        let proj: Complex64 = u
            .column(i)
            .iter()
            .zip(y.iter())
            .map(|(ui, yi)| ui.conj() * yi)
            .sum();
        let f = match spec.regularization {
            Regularization::Tikhonov => s / (s * s + lambda * lambda),
            Regularization::Truncated if s > lambda => 1.0 / s,
            Regularization::Truncated => continue,
        };
        for c in 0..cols {
            coeff[c] += v_t[(i, c)].conj() * proj * f;
        }
    }
    let mut spec_out = Spectrum::zeros(*grid);
    for (c, &j) in bins.iter().enumerate() {
        spec_out.values[j] = coeff[c];
    }
    Ok(OneSided {
        signal: crate::signal::idft(&spec_out),
        condition,
        null_dim,
        ill_conditioned: !(condition <= ILL_CONDITIONED),
        samples_used: rows,
        unknowns: cols,
    })
}
