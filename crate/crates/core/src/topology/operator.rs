use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::IntervalSet;

/// Glue operator `h_{d,k}` acting on a whole branch signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity,
    /// `x(tau - t)`.
    #[serde(rename = "reverse")]
    TimeReversal {
        tau: f64,
    },
    /// `a * x(b t + c)`, `b != 0`.
    Affine {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `integral of kernel(t - s) x(s) ds`.
    #[serde(rename = "conv")]
    Convolution {
        kernel: Kernel,
    },
    /// Spectral multiplication by a tabulated transfer function.
    #[serde(rename = "freqmul")]
    FreqMultiplier {
        table: FreqTable,
    },
    /// Selects `op(x)(t)` for `t` in the piece's set; zero outside all
    /// pieces. Has no frequency-domain action.
    Piecewise {
        pieces: Vec<Piece>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub set: IntervalSet,
    pub op: OperatorSpec,
}

/// Convolution kernel sampled at `t0 + k * dt`. `dt` must equal the
/// working grid step when the operator is applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl Kernel {
    /// Unit impulse at `t = 0` (value `1/dt`).
    pub fn impulse(dt: f64) -> Self {
        Self {
            t0: 0.0,
            dt,
            values: vec![Complex64::new(1.0 / dt, 0.0)],
        }
    }
}

/// Transfer function `H(i omega)` given as `(omega, H)` knots, linearly
/// interpolated and held constant beyond the end knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqTable {
    pub knots: Vec<(f64, Complex64)>,
}

impl FreqTable {
    pub fn new(mut knots: Vec<(f64, Complex64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidInput("empty frequency table".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate frequency in table".into()));
        }
        if knots
            .iter()
            .any(|(w, h)| !w.is_finite() || !h.re.is_finite() || !h.im.is_finite())
        {
            return Err(Error::InvalidInput(
                "non-finite entry in frequency table".into(),
            ));
        }
        Ok(Self { knots })
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        let k = &self.knots;
        if omega <= k[0].0 {
            return k[0].1;
        }
        if omega >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let i = k.partition_point(|(w, _)| *w <= omega);
        let (w0, h0) = k[i - 1];
        let (w1, h1) = k[i];
        let s = (omega - w0) / (w1 - w0);
        h0 * (1.0 - s) + h1 * s
    }

    /// `true` iff `|H| >= eps` at every knot and along every linear segment
    /// meeting `set` (segments are checked at their closest point to 0).
    pub fn invertible_on(&self, set: &IntervalSet, eps: f64) -> bool {
        set.intervals().iter().all(|iv| {
            let lo = iv.lo.max(self.knots[0].0 - 1.0);
            let hi = iv.hi.min(self.knots[self.knots.len() - 1].0 + 1.0);
            if lo >= hi {
                return self.eval(iv.lo.clamp(-f64::MAX, f64::MAX)).norm() >= eps;
            }
            let mut points = vec![lo, hi];
            points.extend(
                self.knots
                    .iter()
                    .map(|(w, _)| *w)
                    .filter(|w| *w > lo && *w < hi),
            );
            points.sort_by(f64::total_cmp);
            points
                .windows(2)
                .all(|w| segment_min_abs(self.eval(w[0]), self.eval(w[1])) >= eps)
        })
    }
}

/// Minimum modulus on the segment between two complex values.
fn segment_min_abs(a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let dd = d.norm_sqr();
    if dd == 0.0 {
        return a.norm();
    }
    let s = (-(a.re * d.re + a.im * d.im) / dd).clamp(0.0, 1.0);
    (a + d * s).norm()
}

impl OperatorSpec {
    pub fn reverse(tau: f64) -> Self {
        OperatorSpec::TimeReversal { tau }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorSpec::Identity => Ok(()),
            OperatorSpec::TimeReversal { tau } if tau.is_finite() => Ok(()),
            OperatorSpec::TimeReversal { .. } => {
                Err(Error::InvalidInput("non-finite reversal point".into()))
            }
            OperatorSpec::Affine { a, b, c } => {
                if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                    Err(Error::InvalidInput("non-finite affine coefficient".into()))
                } else if *b == 0.0 {
                    Err(Error::InvalidInput(
                        "affine operator requires b != 0".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            OperatorSpec::Convolution { kernel } => {
                if kernel.values.is_empty() || !(kernel.dt > 0.0) || !kernel.t0.is_finite() {
                    Err(Error::InvalidInput(
                        "convolution kernel needs samples, dt > 0 and finite t0".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            OperatorSpec::FreqMultiplier { table } => {
                FreqTable::new(table.knots.clone()).map(|_| ())
            }
            OperatorSpec::Piecewise { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::InvalidInput(
                        "piecewise operator without pieces".into(),
                    ));
                }
                pieces.iter().try_for_each(|p| p.op.validate())
            }
        }
    }

    /// Semantic identity test.
    pub fn is_identity(&self) -> bool {
        match self {
            OperatorSpec::Identity => true,
            OperatorSpec::Affine { a, b, c } => *a == 1.0 && *b == 1.0 && *c == 0.0,
            _ => false,
        }
    }

    /// Whether `F(h x) = H(i omega) X(i omega)` up to a frequency reflection,
    /// i.e. whether the operator acts on spectra pointwise.
    pub fn has_spectral_action(&self) -> bool {
        !matches!(self, OperatorSpec::Piecewise { .. })
    }

    /// `(a, b, c)` for operators of the form `a * x(b t + c)`.
    pub fn affine_coefficients(&self) -> Option<(f64, f64, f64)> {
        match *self {
            OperatorSpec::Identity => Some((1.0, 1.0, 0.0)),
            OperatorSpec::TimeReversal { tau } => Some((1.0, -1.0, tau)),
            OperatorSpec::Affine { a, b, c } => Some((a, b, c)),
            _ => None,
        }
    }

    /// Time-domain inverse, available for the affine family with `a != 0`.
    pub fn inverse(&self) -> Option<OperatorSpec> {
        match self {
            OperatorSpec::Identity => Some(OperatorSpec::Identity),
            OperatorSpec::TimeReversal { tau } => Some(OperatorSpec::TimeReversal { tau: *tau }),
            OperatorSpec::Affine { a, b, c } if *a != 0.0 => Some(OperatorSpec::Affine {
                a: 1.0 / a,
                b: 1.0 / b,
                c: -c / b,
            }),
            _ => None,
        }
    }

    /// Set on which `inverse()` reproduces the glue relation: if
    /// `y = h(x)` on `set`, then `x = h^{-1}(y)` on the returned set.
    pub fn transport_set(&self, set: &IntervalSet) -> Option<IntervalSet> {
        let (_, b, c) = self.affine_coefficients()?;
        Some(set.affine_image(b, c))
    }
}
