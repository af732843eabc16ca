//! `manifoldmix`: benchmark runs, model fitting, target sampling, density
//! grids and distance-distortion reports.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
//! validation failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use manifoldmix::distributions::Family;
use manifoldmix::ManifoldId;

#[derive(Parser, Debug)]
#[command(name = "manifoldmix", version, about = "Gaussian mixtures on spheres and SPD manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Euclidean,
    Tangent,
    Riemannian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BasepointArg {
    /// e1 on spheres, the identity on SPD.
    Origin,
    /// Fréchet mean of the input data.
    Frechet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the density-estimation benchmark and write summary and per-target tables.
    Bench {
        /// `sphere:d` or `spd:d`.
        #[arg(long, default_value = "sphere:3")]
        manifold: ManifoldId,
        /// rgd, wgd, vmf (spheres) or rgd, iwd (SPD).
        #[arg(long, default_value = "rgd")]
        family: Family,
        #[arg(long, default_value_t = 20)]
        targets: usize,
        #[arg(long, default_value_t = 100)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        /// Model components; defaults to the target's component count.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Summary table path.
        #[arg(long)]
        out: PathBuf,
        /// Per-target table path; defaults to `<out stem>.targets.csv`.
        #[arg(long)]
        targets_out: Option<PathBuf>,
        /// Summary format.
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Fit one mixture to a point file and write the model document.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Tangent-space basepoint for `--method tangent`.
        #[arg(long, value_enum, default_value = "frechet")]
        basepoint: BasepointArg,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Seeds the shared k-means++ initialization.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model document path (JSON).
        #[arg(long)]
        model: PathBuf,
        /// Fit report path (JSON); printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a point file under a saved model.
    Loglik {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Draw points from a randomly generated benchmark target.
    Sample {
        #[arg(long)]
        manifold: ManifoldId,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the C-shaped dataset on S^2.
    Cshape {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = manifoldmix::bench::C_SHAPE_DEFAULT_NOISE)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model's density on a latitude-longitude grid (S^2 only).
    Grid {
        #[arg(long)]
        model: PathBuf,
        /// Cell size in degrees.
        #[arg(long, default_value_t = 2.0)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare pairwise geodesic distances with distances in one tangent space.
    Distort {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "frechet")]
        basepoint: BasepointArg,
        /// Report path (JSON); printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() {
    let Ok(v) = std::env::var("MANIFOLDMIX_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        _ => log::warn!("ignoring MANIFOLDMIX_THREADS={v:?}; expected a positive integer"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Bench {
            manifold,
            family,
            targets,
            train,
            test,
            k,
            seed,
            out,
            targets_out,
            format,
        } => commands::bench(commands::BenchArgs {
            manifold,
            family,
            targets,
            train,
            test,
            k,
            seed,
            out,
            targets_out,
            format,
        }),
        Command::Fit {
            input,
            method,
            basepoint,
            k,
            seed,
            model,
            report,
        } => commands::fit(&input, method, basepoint, k, seed, &model, report.as_deref()),
        Command::Loglik { model, input } => commands::loglik(&model, &input),
        Command::Sample {
            manifold,
            family,
            n,
            seed,
            out,
        } => commands::sample(manifold, family, n, seed, &out),
        Command::Cshape { n, noise, seed, out } => commands::cshape(n, noise, seed, &out),
        Command::Grid {
            model,
            resolution,
            out,
        } => commands::grid(&model, resolution, &out),
        Command::Distort { input, basepoint, out } => commands::distort(&input, basepoint, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
