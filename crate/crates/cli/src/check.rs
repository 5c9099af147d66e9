use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::ValueEnum;
use mtl_core::checks::{
    check_cyclically_monotone, check_diagonal_nondecreasing, check_family_algebra, check_gradient_field,
    check_triangular, CycleOptions, Family, FnMap, GradientOptions, Law, PointMap, ProbeOptions, PropertyReport,
};
use mtl_core::measures::uniform_cube_sample;
use mtl_core::repro::{convex_gradient, matching_family, path_independence_triple, stretched_gradient, FamilyKind};
use mtl_core::scm::{builtin, interventional_sample, CounterfactualMap};
use serde_json::json;

use crate::output::{Config, Out};
use crate::{load, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum Target {
    Identity,
    /// Quarter turn `(x, y) ↦ (−y, x)`.
    Rotation,
    ConvexGradient,
    StretchedGradient,
    PathIndepCounterexample,
    GeneSmoking,
    CyclicTriangular,
    QpLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum Property {
    All,
    #[value(name = "cyclic_monotone", alias = "cyclic-monotone")]
    CyclicMonotone,
    #[value(name = "gradient_field", alias = "gradient-field")]
    GradientField,
    Triangular,
    #[value(name = "diagonal_nondecreasing", alias = "diagonal-nondecreasing")]
    DiagonalNondecreasing,
    Identity,
    #[value(name = "path_independence", alias = "path-independence")]
    PathIndependence,
    Inversion,
}

const MAP_PROPERTIES: [Property; 4] = [
    Property::CyclicMonotone,
    Property::GradientField,
    Property::Triangular,
    Property::DiagonalNondecreasing,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum FamilyChoice {
    Cm,
    Kr,
    Qp,
}

#[derive(Debug, clap::Args)]
pub(crate) struct CheckArgs {
    #[arg(long, value_enum)]
    builtin: Target,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    property: Vec<Property>,
    /// Matching family for the path-independence counterexample.
    #[arg(long, value_enum, default_value_t = FamilyChoice::Cm)]
    family: FamilyChoice,
    /// Number of evaluation points (or atoms).
    #[arg(long, default_value_t = 30)]
    n: usize,
    /// Evaluation points for map targets, as a measure file.
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Tolerance on Jacobian asymmetry.
    #[arg(long, default_value_t = 1e-6)]
    fd_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn family_laws(props: &[Property]) -> Result<Vec<Law>, Failure> {
    let mut laws = Vec::new();
    for p in props {
        match p {
            Property::All => laws.extend(Law::ALL),
            Property::Identity => laws.push(Law::Identity),
            Property::PathIndependence => laws.push(Law::PathIndependence),
            Property::Inversion => laws.push(Law::Inversion),
            other => return Err(Failure::Usage(format!("{other:?} does not apply to a map family"))),
        }
    }
    laws.dedup();
    Ok(laws)
}

fn map_properties(props: &[Property]) -> Result<Vec<Property>, Failure> {
    let mut out = Vec::new();
    for &p in props {
        match p {
            Property::All => out.extend(MAP_PROPERTIES),
            p if MAP_PROPERTIES.contains(&p) => out.push(p),
            other => return Err(Failure::Usage(format!("{other:?} does not apply to a single map"))),
        }
    }
    out.dedup();
    Ok(out)
}

fn check_map(map: &dyn PointMap<f64>, pts: &[Vec<f64>], props: &[Property], args: &CheckArgs, seed: u64) -> Result<Vec<PropertyReport>, Failure> {
    let probe = ProbeOptions {
        tol: args.tol,
        seed,
        ..ProbeOptions::default()
    };
    map_properties(props)?
        .into_iter()
        .map(|p| {
            match p {
                Property::CyclicMonotone => check_cyclically_monotone(
                    map,
                    pts,
                    CycleOptions {
                        tol: args.tol,
                        seed,
                        ..CycleOptions::default()
                    },
                ),
                Property::GradientField => check_gradient_field(
                    map,
                    pts,
                    GradientOptions {
                        tol: args.fd_tol,
                        ..GradientOptions::default()
                    },
                ),
                Property::Triangular => check_triangular(map, pts, probe),
                _ => check_diagonal_nondecreasing(map, pts, probe),
            }
            .map_err(Failure::usage)
        })
        .collect()
}

pub(crate) fn run(args: CheckArgs, seed: u64) -> Result<ExitCode, Failure> {
    if args.n == 0 {
        return Err(Failure::usage("--n must be positive"));
    }
    let name = args.builtin.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let mut config = Config::new("check", seed)
        .param("target", &name)
        .param("properties", args.property.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>())
        .param("n", args.n)
        .param("tol", args.tol)
        .param("fd_tol", args.fd_tol);

    let reports = match args.builtin {
        Target::Identity | Target::Rotation | Target::ConvexGradient | Target::StretchedGradient => {
            let pts = match &args.points {
                Some(p) => {
                    config = config.input("points", p);
                    load(p)?.points().to_vec()
                }
                None => uniform_cube_sample::<f64>(2, args.n, seed)?.points().to_vec(),
            };
            let map: FnMap<f64> = match args.builtin {
                Target::Identity => FnMap::new("identity", 2, |x: &[f64]| x.to_vec()),
                Target::Rotation => FnMap::new("rotation", 2, |x: &[f64]| vec![-x[1], x[0]]),
                Target::ConvexGradient => FnMap::new("convex-gradient", 2, convex_gradient),
                _ => FnMap::new("stretched-gradient", 2, stretched_gradient),
            };
            check_map(&map, &pts, &args.property, &args, seed)?
        }
        Target::PathIndepCounterexample => {
            config = config.param("family", format!("{:?}", args.family).to_lowercase());
            let ms = path_independence_triple(args.n, seed)?;
            let kind = match args.family {
                FamilyChoice::Cm => FamilyKind::Cm,
                FamilyChoice::Kr => FamilyKind::Kr,
                FamilyChoice::Qp => FamilyKind::Qp(Arc::new(uniform_cube_sample(2, args.n, seed.wrapping_add(1))?)),
            };
            let table = matching_family(&ms, &kind).map_err(Failure::usage)?;
            check_family_algebra(&Family::Matchings(&table), &family_laws(&args.property)?, seed)
                .map_err(Failure::usage)?
        }
        Target::GeneSmoking | Target::CyclicTriangular | Target::QpLinear => {
            let b = builtin(&name).map_err(Failure::usage)?;
            config = config.param("a_values", &b.a_values);
            let points = b
                .a_values
                .iter()
                .map(|&a| interventional_sample(&b.model, a, args.n, seed).map(|s| s.points().to_vec()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(Failure::usage)?;
            let table: Vec<Vec<Box<dyn PointMap<f64> + '_>>> = b
                .a_values
                .iter()
                .map(|&a| {
                    b.a_values
                        .iter()
                        .map(|&a2| Box::new(CounterfactualMap::new(&b.model, a, a2)) as Box<dyn PointMap<f64>>)
                        .collect()
                })
                .collect();
            let fam = Family::Maps {
                table: &table,
                points: &points,
                tol: args.tol,
            };
            check_family_algebra(&fam, &family_laws(&args.property)?, seed).map_err(Failure::usage)?
        }
    };

    let all_pass = reports.iter().all(PropertyReport::passed);
    Out::new(args.out.as_deref()).json(&config, json!({ "all_pass": all_pass, "reports": reports }))?;
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
