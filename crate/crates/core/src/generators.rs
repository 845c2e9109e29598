//! Test-signal generators and the per-branch input sources of a scenario.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{idft, read_signal_csv, GridSpec, SampledSignal, Spectrum};

pub fn zero(grid: &GridSpec) -> SampledSignal {
    SampledSignal::zeros(*grid)
}

/// `amplitude` on `[lo, hi)`, zero elsewhere.
pub fn indicator(grid: &GridSpec, lo: f64, hi: f64, amplitude: f64) -> SampledSignal {
    SampledSignal::from_real(*grid, |t| if t >= lo && t < hi { amplitude } else { 0.0 })
}

/// `sin(omega (t - center)) / (omega (t - center))`, band-limited to
/// `[-omega, omega]`.
pub fn sinc(grid: &GridSpec, omega: f64, center: f64) -> SampledSignal {
    SampledSignal::from_real(*grid, |t| {
        let u = omega * (t - center);
        if u == 0.0 {
            1.0
        } else {
            u.sin() / u
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

pub fn gaussian_mixture(grid: &GridSpec, components: &[GaussianComponent]) -> SampledSignal {
    SampledSignal::from_real(*grid, |t| {
        components
            .iter()
            .map(|c| c.amplitude * (-((t - c.center) / c.width).powi(2)).exp())
            .sum()
    })
}

/// `exp(1 - 1 / (1 - u^2))` on `|u| < 1`: smooth, compactly supported,
/// equal to 1 at the origin.
fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Real band-limited signal: `count` wave packets with the bump spectrum
/// `bump(omega / band)`, centred at uniform random times in `centers` with
/// standard normal weights. The spectrum vanishes exactly off
/// `(-band, band)`.
pub fn random_bandlimited(
    grid: &GridSpec,
    band: f64,
    count: usize,
    centers: (f64, f64),
    seed: u64,
) -> SampledSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let packets: Vec<(f64, f64)> = (0..count)
        .map(|_| {
            let c = if centers.1 > centers.0 {
                rng.random_range(centers.0..centers.1)
            } else {
                centers.0
            };
            let a: f64 = rng.sample(StandardNormal);
            (c, a)
        })
        .collect();
    let mut spec = Spectrum::zeros(*grid);
    for j in 0..grid.n {
        let w = bump(grid.omega(j) / band);
        if w == 0.0 {
            continue;
        }
        // e^{-i omega c} = phase(j, c), exact when c is on the grid.
        spec.values[j] = packets
            .iter()
            .map(|&(c, a)| grid.phase(j, c) * (a * w))
            .sum();
    }
    // Unit peak density keeps amplitudes comparable across bands.
    let mut x = idft(&spec);
    let peak = x.sup_norm();
    if peak > 0.0 {
        x = x.scale(Complex64::new(1.0 / peak, 0.0));
    }
    for v in &mut x.values {
        v.im = 0.0;
    }
    x
}

/// `amplitude sin^4(pi (t - start) / length) e^{i carrier (t - start)}` on
/// `[start, start + length)`. Its spectrum concentrates within about
/// `3 pi / length` of `carrier`, on one side of the origin only.
pub fn burst(
    grid: &GridSpec,
    start: f64,
    length: f64,
    carrier: f64,
    amplitude: f64,
) -> SampledSignal {
    SampledSignal::from_fn(*grid, |t| {
        let s = t - start;
        if s < 0.0 || s >= length {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(amplitude * (PI * s / length).sin().powi(4), carrier * s)
        }
    })
}

/// One branch input of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSource {
    Zero,
    Indicator {
        lo: f64,
        hi: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Sinc {
        omega: f64,
        #[serde(default)]
        center: f64,
    },
    GaussianMixture {
        components: Vec<GaussianComponent>,
    },
    RandomBandlimited {
        band: f64,
        count: usize,
        centers: (f64, f64),
        /// Overrides the seed derived from the scenario seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Burst {
        start: f64,
        length: f64,
        carrier: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl SignalSource {
    /// Samples the source. `seed` feeds the random generators that do not
    /// carry their own; relative CSV paths resolve against `base`.
    pub fn generate(
        &self,
        grid: &GridSpec,
        seed: u64,
        base: Option<&Path>,
    ) -> Result<SampledSignal> {
        Ok(match self {
            SignalSource::Zero => zero(grid),
            SignalSource::Indicator { lo, hi, amplitude } => indicator(grid, *lo, *hi, *amplitude),
            SignalSource::Sinc { omega, center } => sinc(grid, *omega, *center),
            SignalSource::GaussianMixture { components } => gaussian_mixture(grid, components),
            SignalSource::RandomBandlimited {
                band,
                count,
                centers,
                seed: own,
            } => {
                if !(*band > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "band must be positive, got {band}"
                    )));
                }
                random_bandlimited(grid, *band, *count, *centers, own.unwrap_or(seed))
            }
            SignalSource::Burst {
                start,
                length,
                carrier,
                amplitude,
            } => {
                if !(*length > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "burst length must be positive, got {length}"
                    )));
                }
                burst(grid, *start, *length, *carrier, *amplitude)
            }
            SignalSource::Csv { path } => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                read_signal_csv(&full, grid)?
            }
        })
    }
}
