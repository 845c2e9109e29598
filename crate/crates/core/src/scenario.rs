//! Scenario files: one TOML document fixes the grid, topology, inputs, gap
//! plan and the optional sampling and observation sections of a run. The
//! pipelines below turn a scenario into reports and CSV artifacts.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::construct::{construct, convergence_study, Construction, ConvergenceStudy, GapPlan};
use crate::error::{Error, Result};
use crate::generators::SignalSource;
use crate::interval::IntervalSet;
use crate::recovery::{
    carry, propagate_branches, sample_and_recover, PocsOptions, Recovery, SamplingDiagnostics,
    SamplingSpec,
};
use crate::signal::{signal_to_csv, spectrum_to_csv, GapSpec, GridSpec, SampledSignal};
use crate::topology::{
    evaluate, ConditionReport, FreqTable, Glue, Kernel, OperatorSpec, Piece, TopologySpec,
};

/// Bundled fixtures, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("toy", include_str!("../fixtures/toy.toml")),
    ("example_A", include_str!("../fixtures/example_A.toml")),
    ("loop", include_str!("../fixtures/loop.toml")),
    ("dummy_loop", include_str!("../fixtures/dummy_loop.toml")),
    (
        "two_interval_star",
        include_str!("../fixtures/two_interval_star.toml"),
    ),
    ("decoys", include_str!("../fixtures/decoys.toml")),
];

/// Operator as written in a scenario; kernels and tables may live in
/// CSV files next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Identity,
    Reverse {
        tau: f64,
    },
    Affine {
        a: f64,
        b: f64,
        c: f64,
    },
    /// CSV `t,re[,im]` with uniformly spaced `t`, or inline samples.
    Conv {
        #[serde(default)]
        kernel_file: Option<PathBuf>,
        #[serde(default)]
        kernel: Option<Kernel>,
    },
    /// CSV `omega,re[,im]`, or inline knots.
    Freqmul {
        #[serde(default)]
        table_file: Option<PathBuf>,
        #[serde(default)]
        table: Option<FreqTable>,
    },
    Piecewise {
        pieces: Vec<PieceConfig>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub set: IntervalSet,
    pub op: OperatorConfig,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Rows of a three-column numeric CSV with a header line.
fn numeric_rows(text: &str, context: &str) -> Result<Vec<(f64, Complex64)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = format!("{context}:{}", lineno + 1);
        let f: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::parse(&ctx, e)))
            .collect::<Result<_>>()?;
        match f.as_slice() {
            [x, re] => rows.push((*x, Complex64::new(*re, 0.0))),
            [x, re, im] => rows.push((*x, Complex64::new(*re, *im))),
            _ => return Err(Error::parse(&ctx, "expected 2 or 3 columns")),
        }
    }
    if rows.is_empty() {
        return Err(Error::parse(context, "no data rows"));
    }
    Ok(rows)
}

impl OperatorConfig {
    pub fn resolve(&self, base: Option<&Path>) -> Result<OperatorSpec> {
        let path = |p: &PathBuf| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.clone(),
        };
        Ok(match self {
            OperatorConfig::Identity => OperatorSpec::Identity,
            OperatorConfig::Reverse { tau } => OperatorSpec::TimeReversal { tau: *tau },
            OperatorConfig::Affine { a, b, c } => OperatorSpec::Affine {
                a: *a,
                b: *b,
                c: *c,
            },
            OperatorConfig::Conv {
                kernel: Some(k),
                kernel_file: None,
            } => OperatorSpec::Convolution { kernel: k.clone() },
            OperatorConfig::Conv {
                kernel_file: Some(f),
                kernel: None,
            } => {
                let p = path(f);
                let rows = numeric_rows(&read_text(&p)?, &p.display().to_string())?;
                let t0 = rows[0].0;
                let dt = if rows.len() > 1 {
                    rows[1].0 - rows[0].0
                } else {
                    1.0
                };
                if rows
                    .windows(2)
                    .any(|w| ((w[1].0 - w[0].0) - dt).abs() > 1e-9 * dt.abs().max(1.0))
                {
                    return Err(Error::parse(
                        p.display().to_string(),
                        "kernel times are not uniformly spaced",
                    ));
                }
                OperatorSpec::Convolution {
                    kernel: Kernel {
                        t0,
                        dt,
                        values: rows.into_iter().map(|r| r.1).collect(),
                    },
                }
            }
            OperatorConfig::Freqmul {
                table: Some(t),
                table_file: None,
            } => OperatorSpec::FreqMultiplier {
                table: FreqTable::new(t.knots.clone())?,
            },
            OperatorConfig::Freqmul {
                table_file: Some(f),
                table: None,
            } => {
                let p = path(f);
                let rows = numeric_rows(&read_text(&p)?, &p.display().to_string())?;
                OperatorSpec::FreqMultiplier {
                    table: FreqTable::new(rows)?,
                }
            }
            OperatorConfig::Conv { .. } => {
                return Err(Error::InvalidInput(
                    "conv needs exactly one of kernel_file and kernel".into(),
                ))
            }
            OperatorConfig::Freqmul { .. } => {
                return Err(Error::InvalidInput(
                    "freqmul needs exactly one of table_file and table".into(),
                ))
            }
            OperatorConfig::Piecewise { pieces } => OperatorSpec::Piecewise {
                pieces: pieces
                    .iter()
                    .map(|p| {
                        Ok(Piece {
                            set: p.set.clone(),
                            op: p.op.resolve(base)?,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub m: usize,
    #[serde(default)]
    pub glue: Vec<(usize, usize, IntervalSet, OperatorConfig)>,
}

/// How branch inputs combine with the glue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Each branch is its own source; the user guarantees the glue.
    #[default]
    Free,
    /// Branch 1 (and each component root) is its source; every other branch
    /// is its tree parent's continuation plus its source off the glue set.
    Innovation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    #[serde(default)]
    pub mode: InputMode,
    pub branch: Vec<SignalSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapOverride {
    pub branch: usize,
    pub gap: IntervalSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub delta: f64,
    #[serde(default)]
    pub centers: Option<Vec<f64>>,
    #[serde(default)]
    pub fixed_g1: Option<IntervalSet>,
    #[serde(default)]
    pub domain: Option<IntervalSet>,
    #[serde(default, rename = "override")]
    pub overrides: Vec<GapOverride>,
    /// Sets joined to `J_k(delta)` for the listed branches.
    #[serde(default, rename = "extend")]
    pub extensions: Vec<GapOverride>,
    /// Strictly decreasing `delta` values for a convergence study.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Edge-taper fraction applied to the study's error norm.
    #[serde(default)]
    pub taper: Option<f64>,
}

impl PlanConfig {
    pub fn gap_plan(&self) -> GapPlan {
        GapPlan {
            centers: self.centers.clone(),
            delta: self.delta,
            fixed_g1: self.fixed_g1.clone(),
            gap_overrides: self
                .overrides
                .iter()
                .map(|o| (o.branch, o.gap.clone()))
                .collect::<BTreeMap<_, _>>(),
            gap_extensions: self
                .extensions
                .iter()
                .map(|o| (o.branch, o.gap.clone()))
                .collect::<BTreeMap<_, _>>(),
            domain: self.domain.clone(),
        }
    }
}

/// Observation of branch 1 for interval recovery. `gap` defaults to the
/// constructed `G_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub observed: IntervalSet,
    #[serde(default)]
    pub gap: Option<IntervalSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    grid: GridSpec,
    topology: TopologyConfig,
    inputs: InputsConfig,
    #[serde(default)]
    plan: Option<PlanConfig>,
    #[serde(default)]
    sampling: Option<SamplingSpec>,
    #[serde(default)]
    observation: Option<ObservationConfig>,
    #[serde(default)]
    recovery: PocsOptions,
    #[serde(default)]
    outputs: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub grid: GridSpec,
    pub topology: TopologySpec,
    pub inputs: InputsConfig,
    pub plan: Option<PlanConfig>,
    pub sampling: Option<SamplingSpec>,
    pub observation: Option<ObservationConfig>,
    pub recovery: PocsOptions,
    pub outputs: Option<PathBuf>,
    /// Directory that relative paths resolve against.
    pub base: Option<PathBuf>,
}

impl Scenario {
    /// Parses and checks a scenario; `context` names the source in errors.
    pub fn parse(text: &str, context: &str, base: Option<&Path>) -> Result<Self> {
        let f: ScenarioFile = toml::from_str(text).map_err(|e| Error::parse(context, e))?;
        f.grid.validate()?;
        let glue = f
            .topology
            .glue
            .iter()
            .map(|(d, k, set, op)| {
                let op = op.resolve(base).map_err(|e| match e {
                    e @ (Error::Io { .. } | Error::Parse { .. }) => e,
                    other => Error::parse(context, format!("glue ({d}, {k}): {other}")),
                })?;
                Ok(Glue::new(*d, *k, set.clone(), op))
            })
            .collect::<Result<Vec<_>>>()?;
        let topology =
            TopologySpec::new(f.topology.m, glue).map_err(|e| Error::parse(context, e))?;
        if f.inputs.branch.len() != topology.m {
            return Err(Error::parse(
                context,
                format!(
                    "inputs.branch lists {} sources for m = {}",
                    f.inputs.branch.len(),
                    topology.m
                ),
            ));
        }
        for (i, src) in f.inputs.branch.iter().enumerate() {
            if let SignalSource::Csv { path } = src {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                if !full.exists() {
                    return Err(Error::parse(
                        context,
                        format!("inputs.branch[{i}]: {} does not exist", full.display()),
                    ));
                }
            }
        }
        if let Some(p) = &f.plan {
            for o in p.overrides.iter().chain(&p.extensions) {
                if o.branch == 0 || o.branch > topology.m {
                    return Err(Error::parse(
                        context,
                        format!("plan: gap for unknown branch {}", o.branch),
                    ));
                }
            }
        }
        Ok(Scenario {
            name: f.name.unwrap_or_else(|| context.to_string()),
            seed: f.seed,
            grid: f.grid,
            topology,
            inputs: f.inputs,
            plan: f.plan,
            sampling: f.sampling,
            observation: f.observation,
            recovery: f.recovery,
            outputs: f.outputs,
            base: base.map(Path::to_path_buf),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidInput(format!("no bundled fixture named `{name}`")))?;
        Self::parse(text, name, None)
    }

    /// A file path if it exists, else a bundled fixture of that name.
    pub fn open(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() || BUNDLED.iter().all(|(n, _)| *n != spec) {
            Self::load(path)
        } else {
            Self::bundled(spec)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Seed of branch `d`'s random source.
    pub fn branch_seed(&self, d: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(d as u64)
    }

    /// Branch inputs `x_1, ..., x_m`.
    pub fn signals(&self) -> Result<Vec<SampledSignal>> {
        let base = self.base.as_deref();
        let sources: Vec<SampledSignal> = self
            .inputs
            .branch
            .iter()
            .enumerate()
            .map(|(i, s)| s.generate(&self.grid, self.branch_seed(i + 1), base))
            .collect::<Result<_>>()?;
        match self.inputs.mode {
            InputMode::Free => Ok(sources),
            InputMode::Innovation => {
                let t = &self.topology;
                let mut out: Vec<Option<SampledSignal>> = vec![None; t.m];
                for r in 1..=t.m {
                    if out[r - 1].is_some() {
                        continue;
                    }
                    out[r - 1] = Some(sources[r - 1].clone());
                    let mut queue = VecDeque::from([r]);
                    while let Some(u) = queue.pop_front() {
                        for v in t.neighbours(u) {
                            if out[v - 1].is_some() {
                                continue;
                            }
                            let parent = out[u - 1].as_ref().expect("visited");
                            let mut x = carry(t, u, v, parent)?;
                            let glue = self.grid.time_mask(&t.glue(u, v).expect("adjacent").set);
                            for ((xi, si), g) in
                                x.values.iter_mut().zip(&sources[v - 1].values).zip(&glue)
                            {
                                if !g {
                                    *xi += si;
                                }
                            }
                            out[v - 1] = Some(x);
                            queue.push_back(v);
                        }
                    }
                }
                Ok(out.into_iter().map(|x| x.expect("every branch")).collect())
            }
        }
    }

    fn plan(&self) -> Result<&PlanConfig> {
        self.plan.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("scenario `{}` has no [plan] section", self.name))
        })
    }

    pub fn gaps(&self) -> Result<Option<GapSpec>> {
        self.plan
            .as_ref()
            .map(|p| p.gap_plan().gaps(self.topology.m, &self.grid))
            .transpose()
    }
}

/// A named artifact: file name and contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Writes artifacts into `dir`, creating it first.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for a in artifacts {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.contents).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn json<T: Serialize>(name: &str, value: &T) -> Artifact {
    let mut contents = serde_json::to_string_pretty(value).expect("serializable report");
    contents.push('\n');
    Artifact {
        name: name.to_string(),
        contents,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidateOutcome {
    pub scenario: String,
    pub seed: u64,
    pub report: ConditionReport,
    pub gaps: Option<GapSpec>,
}

impl ValidateOutcome {
    pub fn ok(&self) -> bool {
        self.report.recoverable
    }

    pub fn artifacts(&self) -> Vec<Artifact> {
        vec![json("validation.json", self)]
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let r = &self.report;
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "condition 1: {}", r.condition1);
        let c2 = &r.condition2;
        match (&c2.witness, &c2.failed_clause) {
            (Some(w), _) => {
                let _ = writeln!(
                    s,
                    "condition 2: true (partition {:?}, closures {:?})",
                    w.partition, w.closures
                );
            }
            (None, Some(clause)) => {
                let _ = writeln!(
                    s,
                    "condition 2: false, clause {clause}: {}",
                    c2.detail.clone().unwrap_or_default()
                );
            }
            (None, None) => {
                let _ = writeln!(s, "condition 2: {}", c2.holds);
            }
        }
        for (d, chain) in r.chains.iter().enumerate() {
            let _ = writeln!(s, "chain 1 -> {}: {:?}", d + 2, chain);
        }
        for v in &r.chain_check {
            let _ = writeln!(
                s,
                "chain check {}: {} {:?}",
                v.branch,
                if v.pass { "pass" } else { "fail" },
                v.chain
            );
        }
        for f in &r.findings {
            let _ = writeln!(s, "warning: {}", f.message);
        }
        let _ = writeln!(s, "recoverable: {}", r.recoverable);
        s
    }
}

pub fn run_validate(s: &Scenario) -> Result<ValidateOutcome> {
    let gaps = s.gaps()?;
    let domain = s.plan.as_ref().and_then(|p| p.domain.clone());
    let report = evaluate(&s.topology, &s.grid, gaps.as_ref(), domain.as_ref())?;
    Ok(ValidateOutcome {
        scenario: s.name.clone(),
        seed: s.seed,
        report,
        gaps,
    })
}

#[derive(Clone, Debug)]
pub struct ConstructOutcome {
    pub scenario: String,
    pub seed: u64,
    pub inputs: Vec<SampledSignal>,
    pub construction: Construction,
    pub study: Option<ConvergenceStudy>,
}

#[derive(Serialize)]
struct ConstructReportDoc<'a> {
    scenario: &'a str,
    seed: u64,
    delta: f64,
    report: &'a crate::construct::ConstructionReport,
    convergence: Option<&'a ConvergenceStudy>,
}

impl ConstructOutcome {
    pub fn artifacts(&self, delta: f64) -> Vec<Artifact> {
        let mut out = Vec::new();
        for (d, (x, s)) in self
            .construction
            .signals
            .iter()
            .zip(&self.construction.spectra)
            .enumerate()
        {
            out.push(Artifact {
                name: format!("xhat_{}.csv", d + 1),
                contents: signal_to_csv(x),
            });
            out.push(Artifact {
                name: format!("xhat_{}_spectrum.csv", d + 1),
                contents: spectrum_to_csv(s),
            });
        }
        out.push(json(
            "construction.json",
            &ConstructReportDoc {
                scenario: &self.scenario,
                seed: self.seed,
                delta,
                report: &self.construction.report,
                convergence: self.study.as_ref(),
            },
        ));
        if let Some(study) = &self.study {
            let mut csv = String::from("delta,max_l2_error");
            for d in 1..=self.inputs.len() {
                let _ = write!(csv, ",l2_error_{d}");
            }
            csv.push('\n');
            for r in &study.rows {
                let _ = write!(csv, "{},{}", r.delta, r.max_l2_error);
                for e in &r.l2_errors {
                    let _ = write!(csv, ",{e}");
                }
                csv.push('\n');
            }
            out.push(Artifact {
                name: "convergence.csv".into(),
                contents: csv,
            });
        }
        out
    }
}

pub fn run_construct(s: &Scenario) -> Result<ConstructOutcome> {
    let plan_cfg = s.plan()?;
    let plan = plan_cfg.gap_plan();
    let inputs = s.signals()?;
    let construction = construct(&s.topology, &inputs, &plan)?;
    let study = match &plan_cfg.deltas {
        Some(deltas) => Some(convergence_study(
            &s.topology,
            &inputs,
            &plan,
            deltas,
            plan_cfg.tolerance,
            plan_cfg.taper,
        )?),
        None => None,
    };
    Ok(ConstructOutcome {
        scenario: s.name.clone(),
        seed: s.seed,
        inputs,
        construction,
        study,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoverOutcome {
    pub scenario: String,
    pub seed: u64,
    pub sampling: Option<SamplingDiagnostics>,
    pub recovery: Recovery,
    pub max_relative_error: Option<f64>,
    #[serde(skip)]
    pub truth: Vec<SampledSignal>,
}

impl RecoverOutcome {
    /// Numerical warnings: unconverged projections or an ill-conditioned
    /// sampling solve.
    pub fn numerical_failure(&self) -> Option<Error> {
        if let Some(d) = &self.sampling {
            if d.ill_conditioned {
                return Some(Error::IllConditioned {
                    condition: d.condition.unwrap_or(f64::INFINITY),
                });
            }
        }
        self.recovery.check().err()
    }

    pub fn artifacts(&self) -> Vec<Artifact> {
        let mut out: Vec<Artifact> = self
            .recovery
            .signals
            .iter()
            .enumerate()
            .map(|(d, x)| Artifact {
                name: format!("recovered_{}.csv", d + 1),
                contents: signal_to_csv(x),
            })
            .collect();
        let name = if self.sampling.is_some() {
            "sample_recovery.json"
        } else {
            "recovery.json"
        };
        out.push(json(name, self));
        out
    }
}

/// Interval recovery of the constructed process from branch 1 observed on
/// the scenario's observation set.
pub fn run_recover(s: &Scenario) -> Result<RecoverOutcome> {
    let obs = s.observation.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!(
            "scenario `{}` has no [observation] section",
            s.name
        ))
    })?;
    let built = run_construct(s)?;
    let truth = built.construction.signals;
    let mut gaps = built.construction.gaps;
    if let Some(g) = &obs.gap {
        gaps.gaps[0] = g.clone();
    }
    let mut recovery =
        propagate_branches(&s.topology, &gaps, &truth[0], &obs.observed, &s.recovery)?;
    recovery.compare(&truth)?;
    Ok(RecoverOutcome {
        scenario: s.name.clone(),
        seed: s.seed,
        sampling: None,
        max_relative_error: recovery.max_relative_error(),
        recovery,
        truth,
    })
}

/// Recovery of the constructed process from samples of branch 1.
pub fn run_sample_recover(s: &Scenario) -> Result<RecoverOutcome> {
    let spec = s.sampling.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!("scenario `{}` has no [sampling] section", s.name))
    })?;
    let built = run_construct(s)?;
    let truth = built.construction.signals;
    let r = sample_and_recover(
        &s.topology,
        &built.construction.gaps,
        &truth[0],
        spec,
        &s.recovery,
    )?;
    let mut recovery = r.recovery;
    recovery.compare(&truth)?;
    Ok(RecoverOutcome {
        scenario: s.name.clone(),
        seed: s.seed,
        sampling: Some(r.sampling),
        max_relative_error: recovery.max_relative_error(),
        recovery,
        truth,
    })
}

/// `G_d` of a scenario when it has a plan; used by reports.
pub fn describe_gaps(g: &GapSpec) -> Vec<String> {
    g.gaps.iter().map(IntervalSet::to_string).collect()
}
