use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use manifoldmix::bench::{self, ExperimentSpec};
use manifoldmix::distributions::{sample_target, Family};
use manifoldmix::gmm::{self, EmConfig, Mixture};
use manifoldmix::{io, Error, ManifoldId, Point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{BasepointArg, FormatArg, MethodArg};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidManifold(_)
            | Error::InvalidPoint { .. }
            | Error::InvalidArgument(_)
            | Error::Unsupported(_)
            | Error::ManifoldMismatch(..)
            | Error::Parse { .. } => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), CliError>;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn read_points(path: &Path) -> Result<(ManifoldId, Vec<Point>), CliError> {
    io::read_points_file(path).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

pub struct BenchArgs {
    pub manifold: ManifoldId,
    pub family: Family,
    pub targets: usize,
    pub train: usize,
    pub test: usize,
    pub k: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub targets_out: Option<PathBuf>,
    pub format: FormatArg,
}

fn default_targets_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bench".into());
    out.with_file_name(format!("{stem}.targets.csv"))
}

#[derive(Serialize)]
struct BenchSummary<'a> {
    manifold: ManifoldId,
    family: String,
    targets: usize,
    completed: usize,
    seed: u64,
    methods: &'a [bench::MethodSummary; 3],
}

pub fn bench(args: BenchArgs) -> CliResult {
    let mut spec = ExperimentSpec::new(args.manifold, args.family, args.seed);
    spec.n_targets = args.targets;
    spec.n_train = args.train;
    spec.n_test = args.test;
    if let Some(k) = args.k {
        spec.k_model = k;
    }
    spec.validate()?;
    let result = bench::run_experiment(&spec)?;

    let targets_path = args.targets_out.unwrap_or_else(|| default_targets_path(&args.out));
    let mut w = create(&args.out)?;
    match args.format {
        FormatArg::Csv => bench::write_summary_csv(&mut w, &result)?,
        FormatArg::Json => {
            let summary = BenchSummary {
                manifold: spec.manifold,
                family: spec.family.to_string(),
                targets: spec.n_targets,
                completed: result.completed,
                seed: spec.seed,
                methods: &result.methods,
            };
            let text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
            writeln!(w, "{text}")?;
        }
    }
    w.flush()?;
    let mut t = create(&targets_path)?;
    bench::write_targets_csv(&mut t, &result)?;
    t.flush()?;

    for s in &result.methods {
        eprintln!(
            "{:<10} {:>12.3} ± {:<10.3} failures {} incidents {}",
            s.method.name(),
            s.mean_ll,
            s.std_ll,
            s.failures,
            s.incidents
        );
    }
    eprintln!(
        "{} of {} targets completed in {:.1} s",
        result.completed, spec.n_targets, result.wall_seconds
    );
    Ok(())
}

fn resolve_basepoint(choice: BasepointArg, m: ManifoldId, data: &[Point]) -> Result<Point, CliError> {
    Ok(match choice {
        BasepointArg::Origin => bench::origin(m),
        BasepointArg::Frechet => bench::frechet_basepoint(data)?,
    })
}

#[derive(Serialize)]
struct FitReport {
    method: &'static str,
    manifold: ManifoldId,
    k: usize,
    n: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    basepoint: Option<Vec<f64>>,
    final_train_ll: f64,
    em_iters: usize,
    reseeds: usize,
    incidents: usize,
    train_log: Vec<f64>,
}

pub fn fit(
    input: &Path,
    method: MethodArg,
    basepoint: BasepointArg,
    k: usize,
    seed: u64,
    model_path: &Path,
    report_path: Option<&Path>,
) -> CliResult {
    let (m, data) = read_points(input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = gmm::init_shared(&data, k, &mut rng)?;
    let cfg = EmConfig::default();
    let model = match method {
        MethodArg::Euclidean => gmm::fit_euclidean(&data, &labels, &cfg)?,
        MethodArg::Tangent => {
            let base = resolve_basepoint(basepoint, m, &data)?;
            gmm::fit_tangent(&data, &base, &labels, &cfg)?
        }
        MethodArg::Riemannian => gmm::fit_riemannian(&data, &labels, &cfg)?,
    };
    let check = gmm::loglik_report(&model, &data)?;
    let mut w = create(model_path)?;
    writeln!(w, "{}", model.to_json()?)?;
    w.flush()?;
    let report = FitReport {
        method: model.variant.name(),
        manifold: m,
        k: model.k(),
        n: data.len(),
        seed,
        basepoint: match &model.variant {
            gmm::Variant::Tangent { base } => Some(base.coords().as_slice().to_vec()),
            _ => None,
        },
        final_train_ll: model.final_train_ll(),
        em_iters: model.em_iters(),
        reseeds: model.reseeds,
        incidents: check.incidents,
        train_log: model.train_log.clone(),
    };
    write_json(&report, report_path)
}

fn load_model(path: &Path) -> Result<Mixture, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError {
        code: 1,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    Mixture::from_json(&text).map_err(|e| CliError {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

#[derive(Serialize)]
struct LoglikOutput {
    total: f64,
    n: usize,
    incidents: usize,
}

pub fn loglik(model_path: &Path, input: &Path) -> CliResult {
    let model = load_model(model_path)?;
    let (_, data) = read_points(input)?;
    let r = gmm::loglik_report(&model, &data)?;
    write_json(
        &LoglikOutput {
            total: r.total,
            n: data.len(),
            incidents: r.incidents,
        },
        None,
    )
}

pub fn sample(m: ManifoldId, family: Family, n: usize, seed: u64, out: &Path) -> CliResult {
    if n == 0 {
        return Err(Error::InvalidArgument("--n must be positive".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = bench::make_targets(m, family, &mut rng)?;
    let points = sample_target(&target, n, &mut rng)?;
    let mut w = create(out)?;
    io::write_points(&mut w, m, &points)?;
    w.flush()?;
    Ok(())
}

pub fn cshape(n: usize, noise: f64, seed: u64, out: &Path) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = bench::make_c_shape(n, noise, &mut rng)?;
    let mut w = create(out)?;
    io::write_points(&mut w, ManifoldId::sphere(2)?, &points)?;
    w.flush()?;
    Ok(())
}

pub fn grid(model_path: &Path, resolution: f64, out: &Path) -> CliResult {
    let model = load_model(model_path)?;
    let cells = gmm::density_grid(&model, resolution)?;
    let mut w = create(out)?;
    writeln!(w, "lat,lon,density,solid_angle")?;
    for c in cells {
        writeln!(w, "{},{},{},{}", c.lat, c.lon, c.density, c.solid_angle)?;
    }
    w.flush()?;
    Ok(())
}

pub fn distort(input: &Path, basepoint: BasepointArg, out: Option<&Path>) -> CliResult {
    let (m, data) = read_points(input)?;
    let base = resolve_basepoint(basepoint, m, &data)?;
    let report = bench::distortion_report(&data, &base)?;
    write_json(&report, out)
}
