use std::path::PathBuf;
use std::process::ExitCode;

use clap::Subcommand;
use mtl_core::dsl::parse_scm;
use mtl_core::scm::{
    builtin, counterfactual_matching, counterfactual_point, interventional_sample, intervene, recover_noise,
    solve_forward, validate, InterventionSpec, Scm, BUILTIN_NAMES,
};
use serde_json::json;

use crate::output::{Config, Out};
use crate::Failure;

#[derive(Debug, clap::Args)]
pub(crate) struct ScmArgs {
    /// Model file: JSON mirror (`.json`) or structural-equation text.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    model: Option<PathBuf>,
    /// One of gene-smoking, cyclic-triangular, qp-linear.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    action: Action,
}

#[derive(Debug, Subcommand)]
enum Action {
    /// Graph structure, mechanism classes and the linear block.
    Validate,
    /// `g_a(u)`.
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        u: Vec<f64>,
    },
    /// `g_a⁻¹(x)`.
    Recover {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
    },
    /// `do(A = a)`; prints the resulting model.
    Intervene {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
    },
    /// `C_{a'←a}` at a point, or the index-aligned matching of two samples.
    Counterfactual {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        a_prime: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "sample", required_unless_present = "sample")]
        x: Option<Vec<f64>>,
        /// Sample size of the index-aligned interventional samples.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Empirical `P_a` from `n` seeded noise draws.
    Sample {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long)]
        n: usize,
    },
}

fn load_model(args: &ScmArgs, seed: u64) -> Result<(Scm, Config), Failure> {
    match (&args.model, &args.builtin) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let m = if is_json {
                Scm::from_json(&text).map_err(Failure::usage)?
            } else {
                parse_scm(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
            };
            Ok((m, Config::new("scm", seed).input("model", path)))
        }
        (None, Some(name)) => {
            let b = builtin(name).map_err(|_| {
                Failure::Usage(format!("unknown builtin {name:?}; expected one of {}", BUILTIN_NAMES.join(", ")))
            })?;
            Ok((b.model, Config::new("scm", seed).param("builtin", name)))
        }
        (None, None) => Err(Failure::usage("either --model or --builtin is required")),
    }
}

pub(crate) fn run(args: ScmArgs, seed: u64) -> Result<ExitCode, Failure> {
    let (m, base) = load_model(&args, seed)?;
    let config = |action: &str| base.clone().param("action", action);
    let (config, result) = match &args.action {
        Action::Validate => (config("validate"), json!(validate(&m).map_err(Failure::usage)?)),
        Action::Solve { a, u } => {
            let x = solve_forward(&m, *a, u).map_err(Failure::usage)?;
            (config("solve").param("a", a).param("u", u), json!({ "x": x }))
        }
        Action::Recover { a, x } => {
            let u = recover_noise(&m, *a, x).map_err(Failure::usage)?;
            (config("recover").param("a", a).param("x", x), json!({ "u": u }))
        }
        Action::Intervene { a } => {
            let spec = InterventionSpec {
                target: "A".into(),
                value: *a,
            };
            let out = intervene(&m, &spec).map_err(Failure::usage)?;
            let mirror: serde_json::Value = serde_json::from_str(&out.to_json()).map_err(Failure::usage)?;
            (config("intervene").param("a", a), json!({ "model": mirror, "text": out.to_dsl() }))
        }
        Action::Counterfactual { a, a_prime, x, sample } => {
            let cfg = config("counterfactual").param("a", a).param("a_prime", a_prime);
            match (x, sample) {
                (Some(x), _) => {
                    let y = counterfactual_point(&m, *a, *a_prime, x).map_err(Failure::usage)?;
                    (cfg.param("x", x), json!({ "x": x, "counterfactual": y }))
                }
                (None, Some(n)) => {
                    let t = counterfactual_matching(&m, *a, *a_prime, *n, seed).map_err(Failure::usage)?;
                    let segments: Vec<_> = t.segments().map(|(p, q)| json!([p, q])).collect();
                    (cfg.param("n", n), json!({ "matching": t.record(), "segments": segments }))
                }
                (None, None) => return Err(Failure::usage("counterfactual needs --x or --sample")),
            }
        }
        Action::Sample { a, n } => {
            let s = interventional_sample(&m, *a, *n, seed).map_err(Failure::usage)?;
            (config("sample").param("a", a).param("n", n), json!({ "id": s.id(), "points": s.points() }))
        }
    };
    Out::new(args.out.as_deref()).json(&config, result)?;
    Ok(ExitCode::SUCCESS)
}
