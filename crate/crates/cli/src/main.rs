//! `mtl`: transport maps, property checks and structural counterfactuals
//! from the command line.
//!
//! Exit codes: 0 success or all checks pass, 1 I/O failure, 2 usage or
//! precondition violation, 3 at least one property check failed.

mod check;
mod output;
mod scm_cmd;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use mtl_core::maps::{cm_map, kr_map, kr_via_eps, qp_map, DEFAULT_TIE_TOL};
use mtl_core::measures::{load_measure, MeasureError};
use mtl_core::repro::{figure_instance, plot_segments};
use mtl_core::rng::DEFAULT_SEED;
use mtl_core::{Matching, Measure};
use serde_json::json;

use output::{Config, Out};

#[derive(Debug, Parser)]
#[command(name = "mtl", version, about = "Canonical transport maps and structural counterfactual maps")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, env = "MTL_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a matching between two uniform measures.
    Map(MapArgs),
    /// Run property checks on a built-in map or map family.
    Check(check::CheckArgs),
    /// Solve, intervene on, sample or query a structural causal model.
    Scm(scm_cmd::ScmArgs),
    /// Regenerate the three-map comparison: plot data and a summary.
    ReproFig {
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MapKind {
    Cm,
    Qp,
    Kr,
    Oteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum Format {
    Json,
    Csv,
    PlotData,
}

#[derive(Debug, clap::Args)]
struct MapArgs {
    src: PathBuf,
    dst: PathBuf,
    #[arg(long, value_enum)]
    kind: MapKind,
    /// Reference measure for the quantile-preserving map.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Hierarchical weight for `oteps`, in (0, 1].
    #[arg(long)]
    eps: Option<f64>,
    /// Tie tolerance for Knothe–Rosenblatt value classes.
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    tie_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// Failure of a command, mapped onto the exit code.
#[derive(Debug)]
pub(crate) enum Failure {
    Io(String),
    Usage(String),
}

impl Failure {
    pub(crate) fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Io(_) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

pub(crate) fn load(path: &PathBuf) -> Result<Arc<Measure>, Failure> {
    load_measure::<f64>(path, None)
        .map(Arc::new)
        .map_err(|e| match e {
            MeasureError::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
            other => Failure::Usage(format!("{}: {other}", path.display())),
        })
}

fn matching_csv(t: &Matching) -> String {
    let mut out = String::from("source;target\n");
    for (i, j) in t.perm().iter().enumerate() {
        out.push_str(&format!("{i};{j}\n"));
    }
    out
}

fn cmd_map(args: MapArgs, seed: u64) -> Result<ExitCode, Failure> {
    let mu = load(&args.src)?;
    let nu = load(&args.dst)?;
    let t = match args.kind {
        MapKind::Cm => cm_map(&mu, &nu),
        MapKind::Kr => kr_map(&mu, &nu, args.tie_tol),
        MapKind::Qp => {
            let path = args.reference.as_ref().ok_or_else(|| Failure::usage("--kind qp requires --ref"))?;
            qp_map(&mu, &nu, &load(path)?)
        }
        MapKind::Oteps => {
            let eps = args.eps.ok_or_else(|| Failure::usage("--kind oteps requires --eps"))?;
            kr_via_eps(&mu, &nu, eps)
        }
    }
    .map_err(Failure::usage)?;

    let config = Config::new("map", seed)
        .input("src", &args.src)
        .input("dst", &args.dst)
        .param("kind", format!("{:?}", args.kind).to_lowercase())
        .param("format", format!("{:?}", args.format))
        .param("tie_tol", args.tie_tol);
    let config = match (&args.reference, args.eps) {
        (Some(r), _) if args.kind == MapKind::Qp => config.input("ref", r),
        (_, Some(eps)) if args.kind == MapKind::Oteps => config.param("eps", eps),
        _ => config,
    };
    let out = Out::new(args.out.as_deref());
    match args.format {
        Format::Json => {
            let segments: Vec<_> = t.segments().map(|(x, y)| json!([x, y])).collect();
            out.json(&config, json!({ "matching": t.record(), "segments": segments }))?
        }
        Format::Csv => out.text(&config, &matching_csv(&t))?,
        Format::PlotData => out.text(&config, &plot_segments(&t))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_repro_fig(dir: PathBuf, seed: u64) -> Result<ExitCode, Failure> {
    let inst = figure_instance(seed).map_err(Failure::usage)?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let config = Config::new("repro-fig", seed).param("n", inst.mu.len()).param("reference", inst.p0.id());
    for (name, t) in [("cm", &inst.cm), ("qp", &inst.qp), ("kr", &inst.kr)] {
        Out::new(Some(&dir.join(format!("{name}.csv")))).text(&config, &plot_segments(t))?;
    }
    Out::new(Some(&dir.join("summary.json"))).json(&config, json!(inst.summary))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Map(args) => cmd_map(args, cli.seed),
        Command::Check(args) => check::run(args, cli.seed),
        Command::Scm(args) => scm_cmd::run(args, cli.seed),
        Command::ReproFig { out } => cmd_repro_fig(out, cli.seed),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
