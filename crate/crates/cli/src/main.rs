use std::path::{Path, PathBuf};
use std::process::ExitCode;

use branched::recovery::{parse_index_spec, uniqueness_oracle};
use branched::scenario::{
    run_construct, run_recover, run_sample_recover, run_validate, write_artifacts, Artifact, Scenario,
};
use branched::Error;
use clap::{Parser, Subcommand};

/// Spectrum-gap construction and recovery for branched signals.
///
/// A scenario is a TOML file path or the name of a bundled fixture
/// (toy, example_A, loop, dummy_loop, two_interval_star, decoys).
///
/// Exit codes: 0 success, 2 validation failure, 3 numerical failure,
/// 4 I/O or parse error.
#[derive(Parser, Debug)]
#[command(name = "branched", version)]
struct Cli {
    /// Output directory; defaults to the scenario's `outputs`, else
    /// `out/<scenario name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppresses the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Checks the recoverability conditions and chains.
    Validate { scenario: String },
    /// Builds the gapped process and, if configured, the convergence table.
    Construct { scenario: String },
    /// Recovers every branch from the observation of branch 1.
    Recover { scenario: String },
    /// Recovers every branch from samples of branch 1.
    SampleRecover { scenario: String },
    /// Nullspace of the sample-plus-gap system on an n-point grid.
    Oracle {
        n: usize,
        /// Observed sample indices, e.g. `16..32`.
        observed: String,
        /// Vanishing DFT bins, e.g. `3..6,9`.
        gap: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } => 4,
        Error::NotConverged { .. } | Error::IllConditioned { .. } | Error::MonotonicityViolated { .. } => 3,
        _ => 2,
    }
}

struct Ctx {
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn load(&self, spec: &str) -> Result<Scenario, Error> {
        let s = Scenario::open(spec)?;
        Ok(match self.seed {
            Some(seed) => s.with_seed(seed),
            None => s,
        })
    }

    fn dir(&self, s: &Scenario) -> PathBuf {
        if let Some(d) = &self.out {
            return d.clone();
        }
        match (&s.outputs, &s.base) {
            (Some(o), Some(b)) if o.is_relative() => b.join(o),
            (Some(o), _) => o.clone(),
            (None, _) => Path::new("out").join(&s.name),
        }
    }

    fn write(&self, s: &Scenario, artifacts: &[Artifact]) -> Result<PathBuf, Error> {
        let dir = self.dir(s);
        write_artifacts(&dir, artifacts)?;
        Ok(dir)
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref().trim_end());
        }
    }
}

fn fmt_err(e: Option<f64>) -> String {
    e.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"))
}

fn run(cli: Cli) -> Result<u8, Error> {
    let ctx = Ctx { out: cli.out, seed: cli.seed, quiet: cli.quiet };
    match cli.command {
        Command::Validate { scenario } => {
            let s = ctx.load(&scenario)?;
            let v = run_validate(&s)?;
            let dir = ctx.write(&s, &v.artifacts())?;
            ctx.say(v.render());
            ctx.say(format!("wrote {}", dir.display()));
            Ok(if v.ok() { 0 } else { 2 })
        }
        Command::Construct { scenario } => {
            let s = ctx.load(&scenario)?;
            let c = run_construct(&s)?;
            let delta = s.plan.as_ref().map_or(0.0, |p| p.delta);
            let dir = ctx.write(&s, &c.artifacts(delta))?;
            let r = &c.construction.report;
            ctx.say(format!("scenario: {} ({} variant, delta = {delta})", c.scenario, r.variant));
            for d in 0..r.gaps.gaps.len() {
                ctx.say(format!(
                    "branch {}: gap {}  energy {:.1e}  L2 change {:.3e}",
                    d + 1,
                    r.gaps.gaps[d],
                    r.gap_energies[d],
                    r.l2_errors[d]
                ));
            }
            for p in &r.residuals {
                ctx.say(format!("pair {:?}: residual {:.1e} -> {:.1e}", p.pair, p.input, p.output));
            }
            if let Some(study) = &c.study {
                for row in &study.rows {
                    ctx.say(format!("delta {:<8} max L2 change {:.4e}", row.delta, row.max_l2_error));
                }
                ctx.say(format!("monotone: {}", study.monotone));
            }
            for w in &r.warnings {
                ctx.say(format!("warning: {w}"));
            }
            ctx.say(format!("wrote {}", dir.display()));
            Ok(0)
        }
        Command::Recover { scenario } => recover(&ctx, &scenario, false),
        Command::SampleRecover { scenario } => recover(&ctx, &scenario, true),
        Command::Oracle { n, observed, gap } => {
            let v = uniqueness_oracle(n, &parse_index_spec(&observed)?, &parse_index_spec(&gap)?)?;
            if !ctx.quiet {
                println!("{}", serde_json::to_string_pretty(&v).expect("serializable verdict"));
            }
            Ok(0)
        }
    }
}

fn recover(ctx: &Ctx, spec: &str, sampled: bool) -> Result<u8, Error> {
    let s = ctx.load(spec)?;
    let r = if sampled { run_sample_recover(&s)? } else { run_recover(&s)? };
    let dir = ctx.write(&s, &r.artifacts())?;
    ctx.say(format!("scenario: {}", r.scenario));
    if let Some(d) = &r.sampling {
        ctx.say(format!(
            "sampling: {} with {} samples, condition {}",
            d.method,
            d.samples_used,
            fmt_err(d.condition)
        ));
    }
    for b in &r.recovery.branches {
        ctx.say(format!(
            "branch {}: chain {:?}  iterations {}  converged {}  relative L2 error {}",
            b.branch,
            b.chain,
            b.iterations,
            b.converged,
            fmt_err(b.relative_l2_error)
        ));
    }
    ctx.say(format!("wrote {}", dir.display()));
    match r.numerical_failure() {
        Some(e) => {
            eprintln!("error: {e}");
            Ok(exit_code(&e))
        }
        None => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
