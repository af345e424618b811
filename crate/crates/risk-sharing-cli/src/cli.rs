//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::builtin::{self, BUILTINS};
use crate::bundle::{read_text, ResultBundle};
use crate::commands::{run, summary, HistRequest, Steps};
use crate::error::{exit, IoError, Result};
use crate::ledger;
use crate::scenario::{Overrides, Scenario};

#[derive(Debug, Parser)]
#[command(name = "risk-sharing", version, about = "Arrow-Debreu and Nash risk sharing among CARA agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Arrow-Debreu equilibrium.
    Ad(Solve),
    /// Solve the Nash equilibrium and its diagnostics.
    Nash(Solve),
    /// Best probability response of one agent.
    BestResponse {
        #[command(flatten)]
        solve: Solve,
        #[arg(long)]
        agent: usize,
        /// Others report their actual beliefs instead of their Nash-revealed ones.
        #[arg(long)]
        truthful_others: bool,
    },
    /// Limits as risk tolerance grows, as set in the scenario's [limits] section.
    Limits(Solve),
    /// Recompute the residual ledger of a stored bundle.
    Verify {
        bundle: PathBuf,
    },
    /// Run a built-in scenario.
    Replicate {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUILTINS.iter().map(|b| b.name)))]
        name: String,
        #[command(flatten)]
        opts: Options,
    },
}

#[derive(Debug, Args)]
struct Solve {
    scenario: PathBuf,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Args)]
struct Options {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quadrature_order: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Expression to bin; repeatable.
    #[arg(long = "hist")]
    hist: Vec<String>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Fixed histogram range `LO:HI` instead of the variable's min and max.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    hist_range: Option<(f64, f64)>,
    /// Bundle path; defaults to `<scenario name>.<command>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err("LO must be below HI".into())
    }
}

impl Options {
    fn overrides(&self) -> Overrides {
        Overrides {
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            quadrature_order: self.quadrature_order,
            samples: self.samples,
        }
    }

    fn hist(&self) -> HistRequest {
        HistRequest {
            expressions: self.hist.clone(),
            bins: self.bins,
            range: self.hist_range,
        }
    }
}

fn load(path: &Path) -> Result<Scenario> {
    Scenario::from_toml(&read_text(path)?)
}

fn solve(
    mut scenario: Scenario,
    command: &str,
    steps: Steps,
    opts: &Options,
    out: &mut dyn Write,
) -> Result<u8> {
    scenario.apply(&opts.overrides())?;
    let bundle = run(&scenario, command, steps, &opts.hist())?;
    let path = opts.out.clone().unwrap_or_else(|| {
        let stem = if scenario.name.is_empty() { "scenario" } else { scenario.name.as_str() };
        PathBuf::from(format!("{stem}.{}.json", command.split(' ').next().unwrap_or(command)))
    });
    bundle.write(&path)?;
    let _ = write!(out, "{}", summary(&bundle));
    let _ = writeln!(out, "  bundle        {}", path.display());
    Ok(if bundle.certified { exit::OK } else { exit::RESIDUALS })
}

fn verify(path: &Path, out: &mut dyn Write) -> Result<u8> {
    let mut bundle = ResultBundle::read(path)?;
    bundle.ledger = ledger::recompute(&bundle)?;
    bundle.certified = bundle.ledger.iter().all(|r| r.passed());
    let _ = write!(out, "verify {}\n{}", path.display(), summary(&bundle));
    Ok(if bundle.certified { exit::OK } else { exit::RESIDUALS })
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Ad(s) => solve(load(&s.scenario)?, "ad", Steps::arrow_debreu(), &s.opts, out),
        Command::Nash(s) => solve(load(&s.scenario)?, "nash", Steps::nash(), &s.opts, out),
        Command::BestResponse { solve: s, agent, truthful_others } => solve(
            load(&s.scenario)?,
            "best-response",
            Steps::best_response(agent, truthful_others),
            &s.opts,
            out,
        ),
        Command::Limits(s) => solve(load(&s.scenario)?, "limits", Steps::limits(), &s.opts, out),
        Command::Verify { bundle } => verify(&bundle, out),
        Command::Replicate { name, opts } => {
            let b = builtin::find(&name).ok_or_else(|| IoError::validation(format!("unknown scenario {name}")))?;
            solve(b.scenario()?, &format!("replicate {name}"), b.steps, &opts, out)
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::VALIDATION } else { exit::OK };
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
            } else {
                let _ = write!(out, "{}", e.render());
            }
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
