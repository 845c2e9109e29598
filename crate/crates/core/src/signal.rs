//! Uniformly sampled branch signals and their discrete spectra.
//!
//! A [`GridSpec`] fixes the window `[t0, t0 + n dt)` and the matching
//! frequency grid `omega_j = 2 pi j' / (n dt)`, `j'` the signed alias of `j`.
//! Spectra are stored in FFT order and scaled so that they approximate the
//! continuous transform `X(i omega) = integral of e^{-i omega t} x(t) dt`:
//!
//! ```text
//! X_j = dt * e^{-i omega_j t0} * sum_n x_n e^{-2 pi i j n / N}
//! ```
//!
//! With this scaling Parseval reads `sum |x_n|^2 dt = sum |X_j|^2 d_omega / 2 pi`.
//!
//! Every operator with a frequency-domain action is represented on the grid
//! as a [`SpectralAction`] `Y_j = M_j X_{sigma(j)}`, where `sigma` is the
//! identity or the reflection `j -> -j mod N`. Time shifts, reversals and
//! convolutions are circular on the window.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{IntervalSet, SetClass};
use crate::topology::{OperatorSpec, TopologySpec};

/// Relative tolerance when checking that an affine map sends grid points to
/// grid points, in units of the grid step.
const COMMENSURATE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl Default for GridSpec {
    /// Window `[-64, 64)` with `dt = 1/64`, `N = 8192`.
    fn default() -> Self {
        Self {
            t0: -64.0,
            dt: 1.0 / 64.0,
            n: 8192,
        }
    }
}

impl GridSpec {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        let g = Self { t0, dt, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid needs finite t0 and dt > 0, got t0={}, dt={}",
                self.t0, self.dt
            )));
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid size must be a power of two >= 2, got {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t0, self.t0 + self.n as f64 * self.dt)
    }

    pub fn t(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|n| self.t(n)).collect()
    }

    /// Frequency spacing `2 pi / (N dt)`.
    pub fn d_omega(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dt)
    }

    /// Signed alias of bin `j` in `[-N/2, N/2)`.
    pub fn signed_bin(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j >= n / 2 {
            j - n
        } else {
            j
        }
    }

    pub fn omega(&self, j: usize) -> f64 {
        self.signed_bin(j) as f64 * self.d_omega()
    }

    pub fn omegas(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.omega(j)).collect()
    }

    /// `e^{-i omega_j t}`, with the phase reduced modulo `2 pi` in integer
    /// arithmetic when `t` is a grid multiple.
    pub fn phase(&self, j: usize, t: f64) -> Complex64 {
        let n = self.n as i64;
        let steps = t / self.dt;
        let r = steps.round();
        let turns = if (steps - r).abs() <= 1e-9 * steps.abs().max(1.0) && r.abs() < 1e15 {
            ((self.signed_bin(j) as i128 * r as i128).rem_euclid(n as i128)) as f64 / n as f64
        } else {
            let x = self.signed_bin(j) as f64 * steps / n as f64;
            x - x.floor()
        };
        Complex64::from_polar(1.0, -2.0 * PI * turns)
    }

    /// Bin of the reflected frequency, `-j mod N`.
    pub fn reflect(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Grid indices whose time lies in `set`.
    pub fn time_indices(&self, set: &IntervalSet) -> Vec<usize> {
        set.clip_to_window(self.window(), self.dt)
    }

    pub fn time_mask(&self, set: &IntervalSet) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for i in self.time_indices(set) {
            mask[i] = true;
        }
        mask
    }

    /// Frequency bins whose `omega_j` lies in `set`.
    pub fn freq_mask(&self, set: &IntervalSet) -> Vec<bool> {
        set.mask(&self.omegas(), self.d_omega())
    }

    /// Index of the grid point at time `t`, if `t` is on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let r = x.round();
        if (x - r).abs() <= COMMENSURATE_TOL && r >= 0.0 && (r as usize) < self.n {
            Some(r as usize)
        } else {
            None
        }
    }
}

fn check_finite(values: &[Complex64]) -> Result<()> {
    if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite sample".into()))
    }
}

/// A branch signal sampled at `t0 + n dt`, `n = 0..N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

/// Discrete spectrum in FFT order, `values[j]` at `grid.omega(j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

macro_rules! grid_vector {
    ($ty:ident) => {
        impl $ty {
            pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
                grid.validate()?;
                if values.len() != grid.n {
                    return Err(Error::InvalidInput(format!(
                        "expected {} values, got {}",
                        grid.n,
                        values.len()
                    )));
                }
                check_finite(&values)?;
                Ok(Self { grid, values })
            }

            pub fn zeros(grid: GridSpec) -> Self {
                Self {
                    grid,
                    values: vec![Complex64::new(0.0, 0.0); grid.n],
                }
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn add(&self, other: &Self) -> Result<Self> {
                same_grid(&self.grid, &other.grid)?;
                let values = self
                    .values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a + b)
                    .collect();
                Ok(Self {
                    grid: self.grid,
                    values,
                })
            }

            pub fn sub(&self, other: &Self) -> Result<Self> {
                same_grid(&self.grid, &other.grid)?;
                let values = self
                    .values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a - b)
                    .collect();
                Ok(Self {
                    grid: self.grid,
                    values,
                })
            }

            pub fn scale(&self, s: Complex64) -> Self {
                Self {
                    grid: self.grid,
                    values: self.values.iter().map(|v| v * s).collect(),
                }
            }

            /// Zeroes every entry whose mask bit is `false`.
            pub fn masked(&self, keep: &[bool]) -> Self {
                let values = self
                    .values
                    .iter()
                    .zip(keep)
                    .map(|(v, &k)| if k { *v } else { Complex64::new(0.0, 0.0) })
                    .collect();
                Self {
                    grid: self.grid,
                    values,
                }
            }

            pub fn sup_norm(&self) -> f64 {
                self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }

            fn sum_sq(&self, mask: Option<&[bool]>) -> f64 {
                match mask {
                    None => self.values.iter().map(|v| v.norm_sqr()).sum(),
                    Some(m) => self
                        .values
                        .iter()
                        .zip(m)
                        .filter(|(_, &k)| k)
                        .map(|(v, _)| v.norm_sqr())
                        .sum(),
                }
            }
        }
    };
}

grid_vector!(SampledSignal);
grid_vector!(Spectrum);

impl SampledSignal {
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid,
            values: grid.times().into_iter().map(f).collect(),
        }
    }

    pub fn from_real(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |t| Complex64::new(f(t), 0.0))
    }

    /// `sqrt(sum |x_n|^2 dt)`.
    pub fn norm_l2(&self) -> f64 {
        (self.sum_sq(None) * self.grid.dt).sqrt()
    }

    /// L2 norm over the grid points selected by `mask`.
    pub fn norm_l2_on(&self, mask: &[bool]) -> f64 {
        (self.sum_sq(Some(mask)) * self.grid.dt).sqrt()
    }

    pub fn sup_norm_on(&self, mask: &[bool]) -> f64 {
        self.values
            .iter()
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max)
    }

    /// Overwrites samples where `mask` is set with the samples of `src`.
    pub fn overwrite_on(&mut self, src: &SampledSignal, mask: &[bool]) {
        for ((v, s), &k) in self.values.iter_mut().zip(&src.values).zip(mask) {
            if k {
                *v = *s;
            }
        }
    }
}

impl Spectrum {
    /// `sqrt(sum |X_j|^2 d_omega / 2 pi)`, equal to the time-domain L2 norm.
    pub fn norm_l2(&self) -> f64 {
        (self.sum_sq(None) * self.grid.d_omega() / (2.0 * PI)).sqrt()
    }

    pub fn norm_l2_on(&self, mask: &[bool]) -> f64 {
        (self.sum_sq(Some(mask)) * self.grid.d_omega() / (2.0 * PI)).sqrt()
    }

    /// `(1 / 2 pi) sum |X_j| d_omega` over `mask`; bounds the sup norm of the
    /// inverse transform of the masked spectrum.
    pub fn l1_on(&self, mask: &[bool]) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(mask)
            .filter(|(_, &k)| k)
            .map(|(v, _)| v.norm())
            .sum();
        s * self.grid.d_omega() / (2.0 * PI)
    }

    pub fn multiply(&self, m: &[Complex64]) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(m).map(|(a, b)| a * b).collect(),
        }
    }
}

pub(crate) fn same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Cached FFT plans and phase factors for one grid.
pub struct Fourier {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `e^{-i omega_j t0}`.
    phase: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fourier {
    pub fn new(grid: GridSpec) -> Self {
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(grid.n), p.plan_fft_inverse(grid.n))
        });
        let phase = (0..grid.n).map(|j| grid.phase(j, grid.t0)).collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid,
            forward,
            inverse,
            phase,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// In-place forward transform of samples into spectrum values.
    pub fn forward_in_place(&mut self, buf: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
        let dt = self.grid.dt;
        for (v, p) in buf.iter_mut().zip(&self.phase) {
            *v *= p * dt;
        }
    }

    /// In-place inverse transform of spectrum values into samples.
    pub fn inverse_in_place(&mut self, buf: &mut [Complex64]) {
        for (v, p) in buf.iter_mut().zip(&self.phase) {
            *v *= p.conj();
        }
        self.inverse.process_with_scratch(buf, &mut self.scratch);
        let s = 1.0 / (self.grid.n as f64 * self.grid.dt);
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    pub fn dft(&mut self, x: &SampledSignal) -> Result<Spectrum> {
        same_grid(&self.grid, &x.grid)?;
        let mut buf = x.values.clone();
        self.forward_in_place(&mut buf);
        Ok(Spectrum {
            grid: self.grid,
            values: buf,
        })
    }

    pub fn idft(&mut self, x: &Spectrum) -> Result<SampledSignal> {
        same_grid(&self.grid, &x.grid)?;
        let mut buf = x.values.clone();
        self.inverse_in_place(&mut buf);
        Ok(SampledSignal {
            grid: self.grid,
            values: buf,
        })
    }

    /// Unscaled forward FFT, used for kernel transfer functions.
    fn raw_forward(&mut self, buf: &mut [Complex64]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn dft(x: &SampledSignal) -> Spectrum {
    Fourier::new(x.grid).dft(x).expect("grid of own engine")
}

pub fn idft(x: &Spectrum) -> SampledSignal {
    Fourier::new(x.grid).idft(x).expect("grid of own engine")
}

/// Grid representation of an operator's frequency-domain action:
/// `Y_j = mult_j * X_{sigma(j)}` with `sigma` the reflection iff `reflect`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralAction {
    pub reflect: bool,
    pub mult: Vec<Complex64>,
}

impl SpectralAction {
    pub fn identity(n: usize) -> Self {
        Self {
            reflect: false,
            mult: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    fn source(&self, j: usize) -> usize {
        if self.reflect {
            (self.mult.len() - j) % self.mult.len()
        } else {
            j
        }
    }

    /// Bin of the input spectrum feeding output bin `j`.
    pub fn sigma(&self, j: usize) -> usize {
        self.source(j)
    }

    pub fn apply(&self, x: &Spectrum) -> Spectrum {
        let values = (0..x.values.len())
            .map(|j| self.mult[j] * x.values[self.source(j)])
            .collect();
        Spectrum {
            grid: x.grid,
            values,
        }
    }

    /// `outer o self`.
    pub fn then(&self, outer: &SpectralAction) -> SpectralAction {
        let mult = (0..self.mult.len())
            .map(|j| outer.mult[j] * self.mult[outer.source(j)])
            .collect();
        SpectralAction {
            reflect: self.reflect ^ outer.reflect,
            mult,
        }
    }

    /// Exact inverse; fails where a multiplier vanishes.
    pub fn inverse(&self) -> Option<SpectralAction> {
        let n = self.mult.len();
        let mut mult = Vec::with_capacity(n);
        for k in 0..n {
            let m = self.mult[self.source(k)];
            if m == Complex64::new(0.0, 0.0) {
                return None;
            }
            mult.push(m.inv());
        }
        Some(SpectralAction {
            reflect: self.reflect,
            mult,
        })
    }

    /// Maximum distance between two actions' multipliers; `INFINITY` when
    /// their reflections differ.
    pub fn distance(&self, other: &SpectralAction) -> f64 {
        if self.reflect != other.reflect {
            return f64::INFINITY;
        }
        self.mult
            .iter()
            .zip(&other.mult)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Integer index offset `off` such that `b t_n + c = t_{b n + off}`.
fn affine_offset(grid: &GridSpec, b: f64, c: f64) -> Result<i64> {
    if b != 1.0 && b != -1.0 {
        return Err(Error::IncommensurateMap(format!(
            "time scaling b = {b} does not preserve a uniform grid"
        )));
    }
    let off = (b * grid.t0 + c - grid.t0) / grid.dt;
    let r = off.round();
    if (off - r).abs() > COMMENSURATE_TOL {
        return Err(Error::IncommensurateMap(format!(
            "shift c = {c} is not a multiple of dt = {} on this window",
            grid.dt
        )));
    }
    Ok(r as i64)
}

fn kernel_transfer(
    engine: &mut Fourier,
    kernel: &crate::topology::Kernel,
) -> Result<Vec<Complex64>> {
    let grid = engine.grid();
    if (kernel.dt - grid.dt).abs() > COMMENSURATE_TOL * grid.dt {
        return Err(Error::IncommensurateMap(format!(
            "kernel step {} differs from grid step {}",
            kernel.dt, grid.dt
        )));
    }
    if kernel.values.len() > grid.n {
        return Err(Error::InvalidInput("kernel longer than the window".into()));
    }
    let start = kernel.t0 / grid.dt;
    let start_r = start.round();
    if (start - start_r).abs() > COMMENSURATE_TOL {
        return Err(Error::IncommensurateMap(format!(
            "kernel start {} is not on the grid",
            kernel.t0
        )));
    }
    let n = grid.n as i64;
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.n];
    for (k, v) in kernel.values.iter().enumerate() {
        let idx = (start_r as i64 + k as i64).rem_euclid(n) as usize;
        buf[idx] += v;
    }
    engine.raw_forward(&mut buf);
    for v in &mut buf {
        *v *= grid.dt;
    }
    Ok(buf)
}

/// Frequency-domain action of `op` on `grid`; `None` for operators without
/// one (piecewise selections).
pub fn spectral_action(op: &OperatorSpec, grid: &GridSpec) -> Result<Option<SpectralAction>> {
    op.validate()?;
    let n = grid.n;
    let action = match op {
        OperatorSpec::Piecewise { .. } => return Ok(None),
        OperatorSpec::Identity => SpectralAction::identity(n),
        OperatorSpec::TimeReversal { .. } | OperatorSpec::Affine { .. } => {
            let (a, b, c) = op.affine_coefficients().expect("affine family");
            let off = affine_offset(grid, b, c)?;
            let tau = 2.0 * PI / n as f64;
            if b > 0.0 {
                let mult = (0..n)
                    .map(|j| {
                        Complex64::from_polar(
                            a,
                            tau * ((j as i64 * off).rem_euclid(n as i64)) as f64,
                        )
                    })
                    .collect();
                SpectralAction {
                    reflect: false,
                    mult,
                }
            } else {
                let mult = (0..n)
                    .map(|j| {
                        let shift = Complex64::from_polar(
                            a,
                            -tau * ((j as i64 * off).rem_euclid(n as i64)) as f64,
                        );
                        shift * grid.phase(j, grid.t0) * grid.phase(grid.reflect(j), grid.t0).conj()
                    })
                    .collect();
                SpectralAction {
                    reflect: true,
                    mult,
                }
            }
        }
        OperatorSpec::Convolution { kernel } => {
            let mut engine = Fourier::new(*grid);
            SpectralAction {
                reflect: false,
                mult: kernel_transfer(&mut engine, kernel)?,
            }
        }
        OperatorSpec::FreqMultiplier { table } => SpectralAction {
            reflect: false,
            mult: grid.omegas().into_iter().map(|w| table.eval(w)).collect(),
        },
    };
    Ok(Some(action))
}

/// Discretized `h(x)`.
///
/// The affine family is applied as an exact index permutation (circular on
/// the window); convolutions and multipliers go through the spectrum.
pub fn apply_operator(op: &OperatorSpec, x: &SampledSignal) -> Result<SampledSignal> {
    op.validate()?;
    let grid = x.grid;
    match op {
        OperatorSpec::Identity => Ok(x.clone()),
        OperatorSpec::TimeReversal { .. } | OperatorSpec::Affine { .. } => {
            let (a, b, c) = op.affine_coefficients().expect("affine family");
            let off = affine_offset(&grid, b, c)?;
            let n = grid.n as i64;
            let values = (0..n)
                .map(|i| {
                    let src = (b as i64 * i + off).rem_euclid(n) as usize;
                    x.values[src] * a
                })
                .collect();
            Ok(SampledSignal { grid, values })
        }
        OperatorSpec::Convolution { .. } | OperatorSpec::FreqMultiplier { .. } => {
            let action = spectral_action(op, &grid)?.expect("spectral operator");
            let mut engine = Fourier::new(grid);
            let y = action.apply(&engine.dft(x)?);
            engine.idft(&y)
        }
        OperatorSpec::Piecewise { pieces } => {
            let mut out = SampledSignal::zeros(grid);
            for piece in pieces {
                let y = apply_operator(&piece.op, x)?;
                out.overwrite_on(&y, &grid.time_mask(&piece.set));
            }
            Ok(out)
        }
    }
}

fn check_shared_grid(xs: &[SampledSignal]) -> Result<GridSpec> {
    let grid = xs
        .first()
        .ok_or_else(|| Error::InvalidInput("no signals".into()))?
        .grid;
    xs.iter().try_for_each(|x| same_grid(&grid, &x.grid))?;
    Ok(grid)
}

/// Relative glue residual on pair `(d, k)` (1-based):
/// `|| x_k - h_{d,k}(x_d) ||` over the clipped glue set, divided by
/// `|| x_k ||` over the window (or by 1 when `x_k = 0`).
pub fn residual(t: &TopologySpec, xs: &[SampledSignal], pair: (usize, usize)) -> Result<f64> {
    let grid = check_shared_grid(xs)?;
    let glue = t.glue(pair.0, pair.1).ok_or_else(|| {
        Error::InvalidInput(format!("pair ({}, {}) is not glued", pair.0, pair.1))
    })?;
    if xs.len() != t.m {
        return Err(Error::InvalidInput(format!(
            "expected {} signals, got {}",
            t.m,
            xs.len()
        )));
    }
    let (d, k) = (glue.from, glue.to);
    let xd = &xs[d - 1];
    let xk = &xs[k - 1];
    let diff = xk.sub(&apply_operator(&glue.op, xd)?)?;
    let num = diff.norm_l2_on(&grid.time_mask(&glue.set));
    let den = xk.norm_l2();
    Ok(if den > 0.0 { num / den } else { num })
}

/// Fraction of the spectral energy of `x` on the bins with `omega_j` in `g`;
/// 0 for the zero spectrum.
pub fn gap_energy(x: &Spectrum, g: &IntervalSet) -> f64 {
    let total = x.sum_sq(None);
    if total == 0.0 {
        return 0.0;
    }
    x.sum_sq(Some(&x.grid.freq_mask(g))) / total
}

/// Per-branch spectrum gaps `(G_1, ..., G_m)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapSpec {
    pub gaps: Vec<IntervalSet>,
}

impl GapSpec {
    pub fn new(gaps: Vec<IntervalSet>) -> Result<Self> {
        let g = Self { gaps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gaps.iter().enumerate() {
            if i > 0 && g.classify() == SetClass::Empty {
                return Err(Error::InvalidInput(format!(
                    "gap of branch {} is empty",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.gaps.len()
    }

    /// Gap of branch `d` (1-based).
    pub fn gap(&self, d: usize) -> &IntervalSet {
        &self.gaps[d - 1]
    }
}

/// Raised-cosine weights rising over the outer `frac` of the window at each
/// end.
pub fn edge_taper(grid: &GridSpec, frac: f64) -> Vec<f64> {
    let ramp = ((grid.n as f64) * frac).round() as usize;
    (0..grid.n)
        .map(|i| {
            let e = i.min(grid.n - 1 - i);
            if e >= ramp || ramp == 0 {
                1.0
            } else {
                0.5 * (1.0 - (PI * (e as f64 + 0.5) / ramp as f64).cos())
            }
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn format_rows(header: &str, xs: &[f64], values: &[Complex64]) -> String {
    let mut s = String::with_capacity(values.len() * 48);
    s.push_str(header);
    s.push('\n');
    for (x, v) in xs.iter().zip(values) {
        let _ = writeln!(s, "{x},{},{}", v.re, v.im);
    }
    s
}

/// CSV with header `t,re,im`.
pub fn signal_to_csv(x: &SampledSignal) -> String {
    format_rows("t,re,im", &x.grid.times(), &x.values)
}

/// CSV with header `omega,re,im`, rows in increasing frequency.
pub fn spectrum_to_csv(x: &Spectrum) -> String {
    let n = x.grid.n;
    let order: Vec<usize> = (n / 2..n).chain(0..n / 2).collect();
    let omegas: Vec<f64> = order.iter().map(|&j| x.grid.omega(j)).collect();
    let values: Vec<Complex64> = order.iter().map(|&j| x.values[j]).collect();
    format_rows("omega,re,im", &omegas, &values)
}

pub fn write_signal_csv(path: &Path, x: &SampledSignal) -> Result<()> {
    write_file(path, &signal_to_csv(x))
}

pub fn write_spectrum_csv(path: &Path, x: &Spectrum) -> Result<()> {
    write_file(path, &spectrum_to_csv(x))
}

/// Parses a `t,re,im` CSV (the `im` column may be omitted) and checks it
/// against `grid`.
pub fn signal_from_csv(text: &str, grid: &GridSpec, context: &str) -> Result<SampledSignal> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(context, "empty CSV"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.get(1) != Some(&"re") {
        return Err(Error::parse(
            context,
            format!("expected header `t,re,im`, found `{header}`"),
        ));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); grid.n];
    let mut seen = vec![false; grid.n];
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| Error::parse(format!("{context}:{}", lineno + 1), "missing column"))?
                .parse::<f64>()
                .map_err(|e| Error::parse(format!("{context}:{}", lineno + 1), e))
        };
        let t = num(0)?;
        let re = num(1)?;
        let im = if fields.len() > 2 { num(2)? } else { 0.0 };
        let i = grid.index_of(t).ok_or_else(|| {
            Error::parse(
                format!("{context}:{}", lineno + 1),
                format!("t = {t} is not a grid point"),
            )
        })?;
        values[i] = Complex64::new(re, im);
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::parse(
            context,
            format!("CSV does not cover all {} grid points", grid.n),
        ));
    }
    SampledSignal::new(*grid, values)
}

pub fn read_signal_csv(path: &Path, grid: &GridSpec) -> Result<SampledSignal> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    signal_from_csv(&text, grid, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Glue, Kernel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_grid() -> GridSpec {
        GridSpec::new(-4.0, 0.125, 64).unwrap()
    }

    fn random_signal(grid: GridSpec, seed: u64) -> SampledSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        SampledSignal::new(grid, values).unwrap()
    }

    /// Direct O(N^2) evaluation of the scaled transform.
    fn naive_dft(x: &SampledSignal) -> Vec<Complex64> {
        let g = x.grid;
        (0..g.n)
            .map(|j| {
                let w = g.omega(j);
                x.values
                    .iter()
                    .enumerate()
                    .map(|(n, v)| v * Complex64::from_polar(g.dt, -w * g.t(n)))
                    .sum()
            })
            .collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(0.0, 0.1, 100).is_err());
        assert!(GridSpec::new(0.0, 0.0, 64).is_err());
        assert!(GridSpec::new(0.0, 0.1, 1).is_err());
    }

    #[test]
    fn dft_matches_direct_sum() {
        let x = random_signal(small_grid(), 1);
        assert!(max_err(&dft(&x).values, &naive_dft(&x)) < 1e-12);
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let g = GridSpec::default();
        let mut x = SampledSignal::zeros(g);
        x.values[g.index_of(0.0).unwrap()] = Complex64::new(1.0 / g.dt, 0.0);
        let y = dft(&x);
        assert!(y
            .values
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-13));
    }

    #[test]
    fn indicator_matches_closed_form() {
        let g = GridSpec::new(-32.0, 1.0 / 64.0, 4096).unwrap();
        let x = SampledSignal::from_real(g, |t| if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 });
        let y = dft(&x);
        let mut worst: f64 = 0.0;
        for j in 0..g.n {
            let w = g.omega(j);
            if w.abs() > PI / (2.0 * g.dt) {
                continue;
            }
            let exact = if w == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -w)) / Complex64::new(0.0, w)
            };
            worst = worst.max((y.values[j] - exact).norm());
        }
        assert!(worst <= 0.02, "max deviation {worst}");
    }

    #[test]
    fn round_trip_is_exact() {
        let x = random_signal(GridSpec::default(), 2);
        let back = idft(&dft(&x));
        assert!(back.sub(&x).unwrap().norm_l2() <= 1e-12 * x.norm_l2());
    }

    #[test]
    fn parseval_holds() {
        let x = random_signal(GridSpec::default(), 3);
        let y = dft(&x);
        assert!((x.norm_l2() - y.norm_l2()).abs() <= 1e-10 * x.norm_l2());
    }

    #[test]
    fn reversal_is_an_involution() {
        let x = random_signal(GridSpec::default(), 4);
        let op = OperatorSpec::reverse(6.0);
        let twice = apply_operator(&op, &apply_operator(&op, &x).unwrap()).unwrap();
        assert_eq!(twice, x);
    }

    #[test]
    fn reversal_maps_samples_pointwise() {
        let g = GridSpec::default();
        let x = SampledSignal::from_real(g, |t| (-(t - 1.0) * (t - 1.0)).exp() * t);
        let y = apply_operator(&OperatorSpec::reverse(6.0), &x).unwrap();
        let i = g.index_of(2.0).unwrap();
        let j = g.index_of(4.0).unwrap();
        assert_eq!(y.values[i], x.values[j]);
    }

    #[test]
    fn impulse_kernel_is_identity() {
        let x = random_signal(GridSpec::default(), 5);
        let op = OperatorSpec::Convolution {
            kernel: Kernel::impulse(x.grid.dt),
        };
        let y = apply_operator(&op, &x).unwrap();
        assert!(y.sub(&x).unwrap().norm_l2() <= 1e-12 * x.norm_l2());
    }

    #[test]
    fn convolution_matches_circular_sum() {
        let g = small_grid();
        let x = random_signal(g, 6);
        let kernel = Kernel {
            t0: -0.25,
            dt: g.dt,
            values: vec![
                Complex64::new(0.5, 0.0),
                Complex64::new(1.0, -1.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(-1.0, 0.0),
            ],
        };
        let y = apply_operator(
            &OperatorSpec::Convolution {
                kernel: kernel.clone(),
            },
            &x,
        )
        .unwrap();
        let n = g.n as i64;
        let start = (kernel.t0 / g.dt).round() as i64;
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, h) in kernel.values.iter().enumerate() {
                let src = (i - start - k as i64).rem_euclid(n) as usize;
                acc += h * x.values[src] * g.dt;
            }
            assert!((acc - y.values[i as usize]).norm() < 1e-12);
        }
    }

    #[test]
    fn incommensurate_maps_are_rejected() {
        let x = random_signal(small_grid(), 7);
        let half_step = OperatorSpec::reverse(0.0625);
        assert!(matches!(
            apply_operator(&half_step, &x),
            Err(Error::IncommensurateMap(_))
        ));
        let stretch = OperatorSpec::Affine {
            a: 1.0,
            b: 2.0,
            c: 0.0,
        };
        assert!(matches!(
            apply_operator(&stretch, &x),
            Err(Error::IncommensurateMap(_))
        ));
    }

    fn affine_ops() -> Vec<OperatorSpec> {
        vec![
            OperatorSpec::Identity,
            OperatorSpec::reverse(6.0),
            OperatorSpec::reverse(-0.375),
            OperatorSpec::Affine {
                a: 2.0,
                b: 1.0,
                c: 0.5,
            },
            OperatorSpec::Affine {
                a: -0.5,
                b: -1.0,
                c: 1.25,
            },
        ]
    }

    #[test]
    fn spectral_action_matches_time_domain() {
        let g = small_grid();
        let x = random_signal(g, 8);
        let mut ops = affine_ops();
        ops.push(OperatorSpec::Convolution {
            kernel: Kernel {
                t0: 0.125,
                dt: g.dt,
                values: vec![Complex64::new(1.0, 0.5), Complex64::new(-2.0, 0.0)],
            },
        });
        for op in ops {
            let a = spectral_action(&op, &g).unwrap().unwrap();
            let via_spectrum = a.apply(&dft(&x));
            let direct = dft(&apply_operator(&op, &x).unwrap());
            assert!(
                max_err(&via_spectrum.values, &direct.values) < 1e-12,
                "{op:?}"
            );
        }
    }

    #[test]
    fn composition_and_inverse_of_actions() {
        let g = small_grid();
        let x = random_signal(g, 9);
        let ops = affine_ops();
        for inner in &ops {
            for outer in &ops {
                let ai = spectral_action(inner, &g).unwrap().unwrap();
                let ao = spectral_action(outer, &g).unwrap().unwrap();
                let composed = ai.then(&ao).apply(&dft(&x));
                let direct =
                    dft(&apply_operator(outer, &apply_operator(inner, &x).unwrap()).unwrap());
                assert!(max_err(&composed.values, &direct.values) < 1e-12);
                let back = ai.inverse().unwrap().apply(&ai.apply(&dft(&x)));
                assert!(max_err(&back.values, &dft(&x).values) < 1e-12);
            }
        }
    }

    fn toy_topology(op: OperatorSpec, set: IntervalSet) -> TopologySpec {
        TopologySpec::new(
            2,
            vec![Glue {
                from: 1,
                to: 2,
                set,
                op,
            }],
        )
        .unwrap()
    }

    #[test]
    fn residual_vanishes_when_glue_holds() {
        let g = GridSpec::default();
        let x1 = random_signal(g, 10);
        let op = OperatorSpec::reverse(6.0);
        let set = IntervalSet::above(3.0);
        let mut x2 = random_signal(g, 11);
        x2.overwrite_on(&apply_operator(&op, &x1).unwrap(), &g.time_mask(&set));
        let t = toy_topology(op, set);
        assert!(residual(&t, &[x1, x2], (1, 2)).unwrap() <= 1e-12);
    }

    #[test]
    fn residual_of_constant_offset() {
        let g = small_grid();
        let x1 = random_signal(g, 12);
        let x2 = SampledSignal {
            grid: g,
            values: x1.values.iter().map(|v| v + 1.0).collect(),
        };
        let set = IntervalSet::below(0.0);
        let t = toy_topology(OperatorSpec::Identity, set.clone());
        let r = residual(&t, &[x1, x2.clone()], (1, 2)).unwrap();
        let ones = SampledSignal::from_real(g, |_| 1.0);
        let expected = ones.norm_l2_on(&g.time_mask(&set)) / x2.norm_l2();
        assert!((r - expected).abs() < 1e-14);
    }

    #[test]
    fn gap_energy_of_flat_spectrum() {
        let g = GridSpec::default();
        let mut x = SampledSignal::zeros(g);
        x.values[g.index_of(0.0).unwrap()] = Complex64::new(1.0 / g.dt, 0.0);
        let w = PI / (2.0 * g.dt);
        let e = gap_energy(&dft(&x), &IntervalSet::interval(-w, w));
        assert!((e - 0.5).abs() <= 1.0 / g.n as f64);
        assert_eq!(
            gap_energy(&Spectrum::zeros(g), &IntervalSet::real_line()),
            0.0
        );
    }

    #[test]
    fn csv_round_trip() {
        let g = small_grid();
        let x = random_signal(g, 13);
        let text = signal_to_csv(&x);
        assert!(text.starts_with("t,re,im\n"));
        assert_eq!(signal_from_csv(&text, &g, "mem").unwrap(), x);
        let spec = spectrum_to_csv(&dft(&x));
        assert!(spec.starts_with("omega,re,im\n"));
        assert!(signal_from_csv("t,re,im\n0,1,0\n", &g, "mem").is_err());
    }

    #[test]
    fn taper_is_one_in_the_interior() {
        let g = GridSpec::default();
        let w = edge_taper(&g, 0.05);
        assert_eq!(w[g.n / 2], 1.0);
        assert!(w[0] < 0.01 && w[g.n - 1] < 0.01);
    }

    proptest! {
        #[test]
        fn dft_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = small_grid();
            let x = random_signal(g, seed);
            let y = random_signal(g, seed + 7919);
            let lhs = dft(&x.scale(a.into()).add(&y.scale(b.into())).unwrap());
            let rhs = dft(&x).scale(a.into()).add(&dft(&y).scale(b.into())).unwrap();
            prop_assert!(max_err(&lhs.values, &rhs.values) < 1e-11);
        }

        #[test]
        fn parseval_on_random_grids(seed in 0u64..1000, logn in 1u32..10, dt in 0.01f64..2.0, t0 in -50.0f64..50.0) {
            let g = GridSpec::new(t0, dt, 1 << logn).unwrap();
            let x = random_signal(g, seed);
            let y = dft(&x);
            prop_assert!((x.norm_l2() - y.norm_l2()).abs() <= 1e-10 * x.norm_l2());
        }

        #[test]
        fn identity_operator_is_identity(seed in 0u64..1000) {
            let x = random_signal(small_grid(), seed);
            prop_assert_eq!(apply_operator(&OperatorSpec::Identity, &x).unwrap(), x);
        }
    }
}
