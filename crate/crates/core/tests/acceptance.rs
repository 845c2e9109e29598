//! Acceptance suite. Each check prints one `[PASS]` or `[FAIL]` line to the
//! real stdout, so the lines survive test-output capture. Checks listed in
//! `KNOWN_UNATTAINABLE` must fail; everything else must pass.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use branched::construct::Construction;
use branched::generators::random_bandlimited;
use branched::recovery::{
    gap_extrapolate, one_sided_reconstruct, pocs_masks, uniqueness_oracle, ObservationSpec, PocsOptions, Samples,
    SamplingSpec,
};
use branched::scenario::{
    run_construct, run_recover, run_sample_recover, run_validate, write_artifacts, Artifact, Scenario, BUNDLED,
};
use branched::signal::{dft, gap_energy, idft, residual, GridSpec, SampledSignal, Spectrum};
use branched::IntervalSet;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOY_REL_TOL: f64 = 1e-10;
const GAP_ENERGY_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-10;
const ORACLE_N: usize = 32;
const POCS_AGREEMENT_TOL: f64 = 1e-6;
const POCS_AGREEMENT_ITER: usize = 400_000;
const ONE_SIDED_OBSERVED_TOL: f64 = 1e-3;
const ONE_SIDED_QUARTER_TOL: f64 = 5e-2;
const DECOYS_REL_TOL: f64 = 5e-2;
const EXAMPLE_A_REL_TOL: f64 = 5e-2;
const TOY_POCS_REL_TOL: f64 = 1e-2;
const TOY_POCS_MAX_ITER: usize = 20_000;

/// Checks that cannot hold on a finite grid; see the README.
const KNOWN_UNATTAINABLE: &[&str] = &[
    "oracle: observed suffix >= n/2 with a gap is unique",
    "oracle: projections succeed exactly when unique",
    "toy: half-line extrapolation",
];

fn line(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{tag}] {name}: {detail}");
}

fn settle(name: &str, pass: bool, detail: &str) {
    line(name, pass, detail);
    if KNOWN_UNATTAINABLE.contains(&name) {
        assert!(!pass, "{name} was expected to fail but passed: {detail}");
    } else {
        assert!(pass, "{name}: {detail}");
    }
}

/// Spectrum of `1_[0,1)` by direct summation over its support.
fn indicator_spectrum(grid: &GridSpec) -> Vec<Complex64> {
    let support: Vec<f64> = grid.times().into_iter().filter(|&t| (0.0..1.0).contains(&t)).collect();
    (0..grid.n)
        .map(|j| {
            let w = grid.omega(j);
            support.iter().map(|&t| Complex64::from_polar(grid.dt, -w * t)).sum()
        })
        .collect()
}

fn toy() -> (Scenario, Construction) {
    let s = Scenario::bundled("toy").unwrap();
    let c = run_construct(&s).unwrap().construction;
    (s, c)
}

#[test]
fn toy_masking_identities() {
    let (s, c) = toy();
    let g = s.grid;
    let delta = s.plan.as_ref().unwrap().delta;
    assert_eq!(delta, 0.25);
    let x2 = indicator_spectrum(&g);
    let peak = x2.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    for j in 0..g.n {
        let low = g.omega(j).abs() < delta;
        let want1 = if low { -x2[j] } else { Complex64::new(0.0, 0.0) };
        let want2 = if low { Complex64::new(0.0, 0.0) } else { x2[j] };
        e1 = e1.max((c.spectra[0].values[j] - want1).norm() / peak);
        e2 = e2.max((c.spectra[1].values[j] - want2).norm() / peak);
    }
    let xpeak = c.signals[1].sup_norm();
    let off: f64 = g
        .times()
        .iter()
        .enumerate()
        .filter(|(_, &t)| !(0.0..1.0).contains(&t))
        .map(|(i, _)| (c.signals[0].values[i] - c.signals[1].values[i]).norm())
        .fold(0.0, f64::max)
        / xpeak;
    let pass = e1 <= TOY_REL_TOL && e2 <= TOY_REL_TOL && off <= TOY_REL_TOL;
    settle(
        "toy: masking identities",
        pass,
        &format!("X1 {e1:.2e}, X2 {e2:.2e}, x1 = x2 off [0,1) {off:.2e} (tol {TOY_REL_TOL:e})"),
    );

    // Against the continuous transform (1 - e^{-i w}) / (i w) on a finer
    // window; the gap is only the Riemann-sum error.
    let fine = GridSpec::new(-32.0, 1.0 / 64.0, 4096).unwrap();
    let xs = indicator_spectrum(&fine);
    let err = (0..fine.n)
        .filter(|&j| fine.omega(j).abs() <= PI / (2.0 * fine.dt))
        .map(|j| {
            let w = fine.omega(j);
            let exact = if w == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -w)) / Complex64::new(0.0, w)
            };
            (xs[j] - exact).norm()
        })
        .fold(0.0, f64::max);
    settle("toy: indicator spectrum vs closed form", err <= 0.02, &format!("max |error| {err:.3e} (tol 2e-2)"));
}

#[test]
fn every_fixture_keeps_gaps_and_glue() {
    for (name, _) in BUNDLED {
        let s = Scenario::bundled(name).unwrap();
        let validated = run_validate(&s).unwrap();
        if !validated.ok() {
            // Construction requires the conditions; refusing is the contract.
            let refused = run_construct(&s).is_err();
            settle(
                &format!("construct postconditions: {name}"),
                refused,
                "conditions fail, construction refused (not applicable)",
            );
            continue;
        }
        let c = run_construct(&s).unwrap().construction;
        let energy = c
            .signals
            .iter()
            .zip(&c.gaps.gaps)
            .map(|(x, g)| gap_energy(&dft(x), g))
            .fold(0.0, f64::max);
        let res = s
            .topology
            .glue
            .iter()
            .map(|gl| residual(&s.topology, &c.signals, (gl.from, gl.to)).unwrap())
            .fold(0.0, f64::max);
        settle(
            &format!("construct postconditions: {name}"),
            energy <= GAP_ENERGY_TOL && res <= RESIDUAL_TOL,
            &format!("max gap energy {energy:.2e}, max glue residual {res:.2e} (tol {GAP_ENERGY_TOL:e})"),
        );
    }
}

/// Simpson's rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

#[test]
fn approximation_error_shrinks_with_delta() {
    let deltas = [0.4, 0.2, 0.1, 0.05];
    for name in ["toy", "example_A"] {
        let s = Scenario::bundled(name).unwrap();
        let study = run_construct(&s).unwrap().study.unwrap();
        let got: Vec<f64> = study.rows.iter().map(|r| r.delta).collect();
        assert_eq!(got, deltas);
        let errs: Vec<f64> = study.rows.iter().map(|r| r.max_l2_error).collect();
        let strictly = errs.windows(2).all(|w| w[1] < w[0]);
        let table = errs.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(" > ");
        settle(&format!("convergence: {name} decreasing"), strictly, &table);
        if name == "toy" {
            // |X_2(w)|^2 = 4 sin^2(w/2) / w^2, integrated over every bin the
            // gap can reach.
            let d = *deltas.last().unwrap() + s.grid.d_omega();
            let f = |w: f64| if w == 0.0 { 1.0 } else { 4.0 * (w / 2.0).sin().powi(2) / (w * w) };
            let bound = (simpson(f, -d, d, 2000) / (2.0 * PI)).sqrt();
            let last = *errs.last().unwrap();
            settle(
                "convergence: toy final error under masked-energy bound",
                last < bound,
                &format!("{last:.5} < {bound:.5}"),
            );
        }
    }
}

#[test]
fn condition_checks_match_the_worked_examples() {
    let a = run_validate(&Scenario::bundled("example_A").unwrap()).unwrap().report;
    let w = a.condition2.witness.clone().unwrap();
    let pass = a.condition2.holds
        && w.partition == vec![vec![2], vec![3], vec![6, 7]]
        && w.closures == vec![vec![], vec![4, 5], vec![]];
    settle(
        "conditions: example_A witness",
        pass,
        &format!("partition {:?}, closures {:?}", w.partition, w.closures),
    );
    for (name, clause) in [("loop", "(vi)(b)"), ("dummy_loop", "(v)")] {
        let r = run_validate(&Scenario::bundled(name).unwrap()).unwrap().report;
        let got = r.condition2.failed_clause.clone();
        settle(
            &format!("conditions: {name} fails both"),
            !r.condition1 && !r.condition2.holds && got.as_deref() == Some(clause),
            &format!("condition 1 {}, condition 2 {}, failing clause {got:?}", r.condition1, r.condition2.holds),
        );
    }
}

fn gap_sets(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for j in [0, 1, n / 4, n / 2] {
        out.push(vec![j]);
    }
    for (start, len) in [(1, 3), (0, n / 4), (n / 4, n / 4), (n / 2, n / 2)] {
        out.push((start..start + len).map(|j| j % n).collect());
    }
    for _ in 0..8 {
        let k = rng.random_range(1..=n / 2);
        out.push((0..k).map(|_| rng.random_range(0..n)).collect());
    }
    out
}

#[test]
fn oracle_sweep() {
    let n = ORACLE_N;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let (mut total, mut unique, mut first_bad) = (0, 0, None);
    for len in n / 2..n {
        let observed: Vec<usize> = (n - len..n).collect();
        for gap in gap_sets(n, &mut rng) {
            let v = uniqueness_oracle(n, &observed, &gap).unwrap();
            total += 1;
            if v.unique {
                unique += 1;
            } else if first_bad.is_none() {
                first_bad = Some((len, gap.len(), v.nullspace_dim));
            }
        }
    }
    let detail = match first_bad {
        None => format!("{unique}/{total} unique"),
        Some((len, k, null)) => format!(
            "{unique}/{total} unique; e.g. suffix {len} with {k} gap bins has nullity {null} (counting bound: n - |observed| - |gap|)"
        ),
    };
    settle("oracle: observed suffix >= n/2 with a gap is unique", unique == total, &detail);

    let (mut total, mut degenerate) = (0, 0);
    for _ in 0..200 {
        let budget = rng.random_range(0..n / 4);
        let o = rng.random_range(0..=budget);
        let observed: Vec<usize> = (0..o).map(|_| rng.random_range(0..n)).collect();
        let gap: Vec<usize> = (0..budget - o).map(|_| rng.random_range(0..n)).collect();
        total += 1;
        if !uniqueness_oracle(n, &observed, &gap).unwrap().unique {
            degenerate += 1;
        }
    }
    settle(
        "oracle: |observed| + |gap| < n/4 leaves a nullspace",
        degenerate == total,
        &format!("{degenerate}/{total} non-trivial"),
    );
}

/// POCS from zero on an `n`-point grid, against a truth that vanishes on the gap.
fn pocs_recovers(n: usize, observed: &[usize], gap: &[usize], seed: u64) -> (bool, f64) {
    let grid = GridSpec::new(0.0, 1.0, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = Spectrum::zeros(grid);
    for j in 0..n {
        if !gap.contains(&j) {
            spec.values[j] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    let truth: SampledSignal = idft(&spec);
    let obs_mask: Vec<bool> = (0..n).map(|i| observed.contains(&i)).collect();
    let gap_mask: Vec<bool> = (0..n).map(|j| gap.contains(&j)).collect();
    let opts = PocsOptions { max_iter: POCS_AGREEMENT_ITER, tol: 1e-15, ..PocsOptions::default() };
    let r = pocs_masks(&truth, &obs_mask, &gap_mask, None, &opts).unwrap();
    let err = r.signal().sub(&truth).unwrap().norm_l2() / truth.norm_l2();
    (err <= POCS_AGREEMENT_TOL, err)
}

/// Smallest singular value of the sample rows stacked on the gap rows of
/// the unitary DFT.
fn normalized_min_sv(n: usize, observed: &[usize], gap: &[usize]) -> f64 {
    let mut g = gap.to_vec();
    g.sort_unstable();
    g.dedup();
    let rows = observed.len() + g.len();
    if rows < n {
        return 0.0;
    }
    let a = nalgebra::DMatrix::from_fn(rows, n, |r, c| {
        if r < observed.len() {
            Complex64::new(if observed[r] == c { 1.0 } else { 0.0 }, 0.0)
        } else {
            let j = g[r - observed.len()];
            Complex64::from_polar(1.0 / (n as f64).sqrt(), -2.0 * PI * ((j * c) % n) as f64 / n as f64)
        }
    });
    a.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn oracle_agrees_with_projections() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // With orthonormal constraint rows, each sweep contracts the error by
    // (1 - sigma_min^2)^2, so reaching `tol` takes ln(1 / tol) / (2 sigma_min^2)
    // sweeps.
    let reach = ((1.0 / POCS_AGREEMENT_TOL).ln() / (2.0 * POCS_AGREEMENT_ITER as f64)).sqrt();
    let (mut total, mut agree, mut budget_agree, mut misses) = (0, 0, 0, String::new());
    for n in [8usize, 16, 32] {
        for len in [n / 4, n / 2, 3 * n / 4] {
            let observed: Vec<usize> = (n - len..n).collect();
            let mut gaps: Vec<Vec<usize>> = vec![
                (0..n - len).collect(),
                (0..(n - len + 2).min(n - 1)).collect(),
                (1..=(n - len) / 2).collect(),
                vec![0],
            ];
            // At least one free bin, so the truth is not zero.
            let k = rng.random_range(1..n);
            let mut random: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                random.swap(i, rng.random_range(0..=i));
            }
            gaps.push(random[..k].to_vec());
            for gap in gaps {
                let v = uniqueness_oracle(n, &observed, &gap).unwrap();
                let (ok, err) = pocs_recovers(n, &observed, &gap, total as u64);
                total += 1;
                if ok == v.unique {
                    agree += 1;
                } else {
                    misses += &format!(
                        "; n {n}, suffix {len}, {} gap bins: min sv {:.1e}, error {err:.1e}",
                        gap.len(),
                        v.min_relative_singular_value
                    );
                }
                if ok == (v.unique && normalized_min_sv(n, &observed, &gap) >= reach) {
                    budget_agree += 1;
                }
            }
        }
    }
    settle(
        "oracle: projections succeed exactly when unique",
        agree == total,
        &format!("{agree}/{total} agree; misses are unique but ill-conditioned{misses}"),
    );
    settle(
        "oracle: projections succeed exactly when unique within the sweep budget",
        budget_agree == total,
        &format!("{budget_agree}/{total} agree (unique with normalized min sv >= {reach:.1e})"),
    );
}

#[test]
fn one_sided_sampling() {
    let g = GridSpec::default();
    let omega = PI / 2.0;
    let times = g.times();
    let observed: Vec<bool> = times.iter().map(|&t| t <= 0.0).collect();
    let quarter: Vec<bool> = times.iter().map(|&t| t > 0.0 && t <= 32.0).collect();
    let (mut worst_obs, mut worst_q) = (0.0f64, 0.0f64);
    for seed in [17, 23, 31] {
        let x = random_bandlimited(&g, omega, 6, (-16.0, 0.0), seed);
        let spec = SamplingSpec::new(omega, 1.0, Some(0));
        let r = one_sided_reconstruct(&Samples::from_signal(&x, 1.0, Some(0)).unwrap(), &spec, &g).unwrap();
        let d = r.signal.sub(&x).unwrap();
        worst_obs = worst_obs.max(d.norm_l2_on(&observed) / x.norm_l2_on(&observed));
        worst_q = worst_q.max(d.norm_l2_on(&quarter) / x.norm_l2_on(&quarter).max(1e-3 * x.norm_l2()));
    }
    settle(
        "sampling: one-sided error at tau = 1",
        worst_obs <= ONE_SIDED_OBSERVED_TOL && worst_q <= ONE_SIDED_QUARTER_TOL,
        &format!(
            "observed {worst_obs:.2e} (tol {ONE_SIDED_OBSERVED_TOL:e}), next quarter {worst_q:.2e} (tol {ONE_SIDED_QUARTER_TOL:e})"
        ),
    );
    let x = random_bandlimited(&g, omega, 6, (-16.0, 0.0), 17);
    let tau = PI / omega;
    let spec = SamplingSpec::new(omega, tau, Some(0));
    let r = one_sided_reconstruct(&Samples::from_signal(&x, tau, Some(0)).unwrap(), &spec, &g).unwrap();
    settle(
        "sampling: flag at tau = pi / Omega",
        r.ill_conditioned,
        &format!("condition {:.2e}", r.condition),
    );
}

#[test]
fn decoys_recovered_from_samples() {
    let s = Scenario::bundled("decoys").unwrap();
    let r = run_sample_recover(&s).unwrap();
    let errs: Vec<f64> = r.recovery.branches.iter().map(|b| b.relative_l2_error.unwrap()).collect();
    let monotone = r.recovery.branches.iter().all(|b| b.monotone);
    let pass = errs.len() == 4 && errs.iter().all(|&e| e <= DECOYS_REL_TOL) && monotone;
    let shown = errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ");
    settle(
        "recovery: decoys from one-sided samples",
        pass,
        &format!("relative L2 errors [{shown}] (tol {DECOYS_REL_TOL:e}), monotone {monotone}"),
    );
}

#[test]
fn example_a_recovered_end_to_end() {
    let s = Scenario::bundled("example_A").unwrap();
    let r = run_recover(&s).unwrap();
    let b5 = &r.recovery.branches[4];
    let worst = r.max_relative_error.unwrap();
    settle(
        "recovery: example_A through chain [1, 3, 4, 5]",
        b5.chain == vec![1, 3, 4, 5] && worst <= EXAMPLE_A_REL_TOL && r.recovery.check().is_ok(),
        &format!("max relative L2 error {worst:.2e} (tol {EXAMPLE_A_REL_TOL:e}), branch 5 chain {:?}", b5.chain),
    );
}

#[test]
fn toy_half_line_extrapolation() {
    let (s, c) = toy();
    let delta = s.plan.as_ref().unwrap().delta;
    let obs = ObservationSpec { observed: IntervalSet::below(0.0), gap: IntervalSet::centered(0.0, delta) };
    let opts = PocsOptions { max_iter: TOY_POCS_MAX_ITER, ..PocsOptions::default() };
    let r = gap_extrapolate(&c.signals[1], &obs, None, &opts).unwrap();
    let err = r.signal().sub(&c.signals[1]).unwrap().norm_l2() / c.signals[1].norm_l2();
    settle(
        "toy: half-line extrapolation",
        err <= TOY_POCS_REL_TOL,
        &format!("relative L2 error {err:.3e} after {} iterations (tol {TOY_POCS_REL_TOL:e})", r.iterations),
    );
}

fn artifacts_of(s: &Scenario) -> Vec<Artifact> {
    let mut out = run_validate(s).unwrap().artifacts();
    if let Ok(c) = run_construct(s) {
        out.extend(c.artifacts(s.plan.as_ref().unwrap().delta));
        if s.observation.is_some() {
            out.extend(run_recover(s).unwrap().artifacts());
        }
        if s.sampling.is_some() {
            out.extend(run_sample_recover(s).unwrap().artifacts());
        }
    }
    out
}

fn same_files(a: &Path, b: &Path) -> (usize, Vec<String>) {
    let mut names: Vec<String> =
        std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    let differ = names.iter().filter(|n| std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).ok().unwrap_or_default()).cloned().collect();
    (names.len(), differ)
}

#[test]
fn runs_are_byte_identical() {
    for (name, _) in BUNDLED {
        let s = Scenario::bundled(name).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_artifacts(a.path(), &artifacts_of(&s)).unwrap();
        write_artifacts(b.path(), &artifacts_of(&s)).unwrap();
        let (count, differ) = same_files(a.path(), b.path());
        settle(
            &format!("determinism: {name}"),
            differ.is_empty() && count > 0,
            &format!("{count} files, differing {differ:?}"),
        );
    }
}
