use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest grid the oracle accepts.
pub const ORACLE_MAX_N: usize = 64;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_REL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub n: usize,
    pub unique: bool,
    pub nullspace_dim: usize,
    pub rank: usize,
    /// Smallest singular value relative to the largest, over the `n`
    /// directions (zero when the system has fewer rows than `n`).
    pub min_relative_singular_value: f64,
}

/// Whether only the zero vector of length `n` vanishes at the `observed`
/// sample indices and at the `gap` DFT bins.
pub fn uniqueness_oracle(n: usize, observed: &[usize], gap: &[usize]) -> Result<OracleVerdict> {
    if n == 0 || n > ORACLE_MAX_N {
        return Err(Error::InvalidInput(format!(
            "oracle grid size must lie in 1..={ORACLE_MAX_N}, got {n}"
        )));
    }
    if let Some(&i) = observed.iter().chain(gap).find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!("index {i} outside 0..{n}")));
    }
    let mut obs = observed.to_vec();
    obs.sort_unstable();
    obs.dedup();
    let mut gp = gap.to_vec();
    gp.sort_unstable();
    gp.dedup();
    let rows = obs.len() + gp.len();
    if rows == 0 {
        return Ok(OracleVerdict {
            n,
            unique: false,
            nullspace_dim: n,
            rank: 0,
            min_relative_singular_value: 0.0,
        });
    }
    let a = DMatrix::from_fn(rows, n, |r, c| {
        if r < obs.len() {
            Complex64::new(if obs[r] == c { 1.0 } else { 0.0 }, 0.0)
        } else {
            let j = gp[r - obs.len()];
            Complex64::from_polar(1.0, -2.0 * PI * ((j * c) % n) as f64 / n as f64)
        }
    });
    let sv = a.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > RANK_REL * smax).count();
    let min_rel = if rows < n {
        0.0
    } else {
        sv.iter().copied().fold(f64::INFINITY, f64::min) / smax
    };
    Ok(OracleVerdict {
        n,
        unique: rank == n,
        nullspace_dim: n - rank,
        rank,
        min_relative_singular_value: min_rel,
    })
}

/// Parses `"0..16,20,30..32"` into indices (`a..b` is half-open).
pub fn parse_index_spec(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(format!("index list `{text}`"), e))
        };
        match part.split_once("..") {
            Some((a, b)) => out.extend(num(a)?..num(b)?),
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}
