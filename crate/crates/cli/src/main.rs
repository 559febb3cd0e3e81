mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thinrod::asymptotics::AsymptoticModel;
use thinrod::compare::{asymptotic_gap, CompareError};
use thinrod::fieldmap::{perturbation_map, FieldModel};
use thinrod::inverse::{fit_rod, initial_guess, simulate_measurements, DataSource, FitOptions, SensorSet};
use thinrod::io::{read_measurements, write_field, write_measurements, write_perturbation, IoError};
use thinrod::solver::FieldSample;
use thinrod::validate::{run_suite, SuiteOptions};
use thinrod::{solve_forward, RodSpec, Vec2};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "thinrod",
    version,
    about = "Thin conductive rods: forward solves, asymptotics and inversion"
)]
struct Cli {
    /// Flat TOML configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Forward model for field maps and synthetic data.
    #[arg(long, global = true, value_enum, default_value_t = Model::Bem)]
    model: Model,
    /// Seed for synthetic measurement noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print per-check details and progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Bem,
    Asymptotic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid of |u − H| and |∇u − ∇H| as CSV.
    Fieldmap,
    /// Boundary-element field u, ∇u on the grid as CSV.
    Forward,
    /// Leading-order field u, ∇u on the grid as CSV.
    Asymptotic,
    /// Boundary-element vs leading-order deviation for each thickness in `deltas`, as JSON.
    Compare,
    /// Run the invariant suite; exit status 1 on any failure.
    Validate {
        /// Zero all quadrature weights first (fault injection).
        #[arg(long)]
        corrupt_weights: bool,
    },
    /// Fit rod parameters to voltages on the sensor circle, report as JSON.
    Invert {
        /// Measurements as CSV with header `x1,x2,u`.
        #[arg(long, required_unless_present = "synthesize", conflicts_with = "synthesize")]
        data: Option<PathBuf>,
        /// Generate data from the configured rod with `--model` first.
        #[arg(long)]
        synthesize: bool,
        /// Also write the synthesized measurements here.
        #[arg(long, requires = "synthesize")]
        write_data: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
    /// Completed, but a check failed or the fit did not converge.
    #[error("{0}")]
    Failed(String),
    /// The reader of stdout went away; not reported.
    #[error("broken pipe")]
    BrokenPipe,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::BrokenPipe => 0,
            CliError::Failed(_) | CliError::Run(_) => 1,
            CliError::Config(_) | CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn write_err(e: io::Error) -> CliError {
    if e.kind() == io::ErrorKind::BrokenPipe {
        CliError::BrokenPipe
    } else {
        CliError::Io(e.to_string())
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| match e.io_error_kind() {
        Some(io::ErrorKind::BrokenPipe) => CliError::BrokenPipe,
        _ => run_err(e),
    })?;
    writeln!(out).and_then(|_| out.flush()).map_err(write_err)
}

fn io_err(e: IoError) -> CliError {
    match e {
        IoError::Parse { .. } => CliError::Usage(e.to_string()),
        IoError::Io(e) => write_err(e),
        IoError::Csv(e) => CliError::Io(e.to_string()),
    }
}

fn asymptotic_model(cfg: &RunConfig, spec: &RodSpec) -> Result<AsymptoticModel, CliError> {
    Ok(AsymptoticModel::new(spec, cfg.background()?)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_transverse(cfg.transverse_ratio()))
}

fn cmd_fieldmap(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.rod()?;
    let points = cfg.grid()?.points();
    let samples = match cli.model {
        Model::Bem => {
            let sol = solve_forward(&spec, &cfg.background()?, cfg.resolution(&spec)).map_err(run_err)?;
            perturbation_map(FieldModel::Bem(&sol), &points)
        }
        Model::Asymptotic => {
            let model = asymptotic_model(cfg, &spec)?;
            perturbation_map(
                FieldModel::Asymptotic {
                    model: &model,
                    spec: &spec,
                    n_quad: cfg.n_quad,
                },
                &points,
            )
        }
    };
    write_perturbation(output(cli.out.as_deref())?, &samples).map_err(io_err)
}

fn cmd_forward(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.rod()?;
    let sol = solve_forward(&spec, &cfg.background()?, cfg.resolution(&spec)).map_err(run_err)?;
    if cli.verbose {
        let t = sol.transmission_check(64);
        eprintln!(
            "nodes {}  lambda {}  relative density total {:.2e}  transmission mismatch {:.2e}",
            sol.mesh.len(),
            sol.lambda,
            sol.relative_density_total(),
            t.relative
        );
    }
    let samples = sol.sample_many(&cfg.grid()?.points());
    write_field(output(cli.out.as_deref())?, &samples).map_err(io_err)
}

fn cmd_asymptotic(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.rod()?;
    let model = asymptotic_model(cfg, &spec)?;
    let bg = model.background;
    let points = cfg.grid()?.points();
    let pert = perturbation_map(
        FieldModel::Asymptotic {
            model: &model,
            spec: &spec,
            n_quad: cfg.n_quad,
        },
        &points,
    );
    let linear = bg.uniform_gradient().is_some();
    let samples: Vec<FieldSample> = points
        .iter()
        .zip(&pert)
        .map(|(&x, p)| {
            let (u, grad) = if linear {
                (
                    model.u_linear(x).unwrap_or(f64::NAN),
                    model.grad_linear(x).unwrap_or(Vec2::new(f64::NAN, f64::NAN)),
                )
            } else {
                let h = 1e-5 * spec.length.max(1.0);
                let u = |y: Vec2| model.u_general(y, cfg.n_quad).map(|f| f.value).unwrap_or(f64::NAN);
                let g = Vec2::new(
                    u(x + Vec2::new(h, 0.0)) - u(x - Vec2::new(h, 0.0)),
                    u(x + Vec2::new(0.0, h)) - u(x - Vec2::new(0.0, h)),
                ) / (2.0 * h);
                (u(x), g)
            };
            FieldSample {
                x,
                u,
                grad,
                near_boundary: p.near_boundary,
            }
        })
        .collect();
    write_field(output(cli.out.as_deref())?, &samples).map_err(io_err)
}

#[derive(Serialize)]
struct CompareRow {
    delta: f64,
    error: f64,
    error_over_delta: f64,
    nodes: usize,
    probes: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct CompareReport {
    length: f64,
    sigma0: f64,
    probe_radius: f64,
    rows: Vec<CompareRow>,
    ratio_strictly_decreasing: bool,
}

fn cmd_compare(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.length == 0.0 {
        return Err(CliError::Usage(CompareError::Disc.to_string()));
    }
    let bg = cfg.background()?;
    let mut rows = Vec::new();
    for &delta in &cfg.deltas {
        let spec = cfg.rod_with_delta(delta)?;
        let start = Instant::now();
        let r = asymptotic_gap(&spec, &bg, cfg.resolution(&spec), cfg.probes()).map_err(|e| match e {
            CompareError::Disc | CompareError::ProbeTooClose { .. } | CompareError::NoProbes => {
                CliError::Usage(e.to_string())
            }
            other => run_err(other),
        })?;
        let seconds = start.elapsed().as_secs_f64();
        if cli.verbose {
            eprintln!(
                "delta {delta}: E = {:.4e}, E/delta = {:.4e}, {} nodes, {seconds:.2} s",
                r.error, r.ratio, r.nodes
            );
        }
        rows.push(CompareRow {
            delta,
            error: r.error,
            error_over_delta: r.ratio,
            nodes: r.nodes,
            probes: r.probes,
            seconds,
        });
    }
    let mut by_delta: Vec<&CompareRow> = rows.iter().collect();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let report = CompareReport {
        length: cfg.length,
        sigma0: cfg.sigma0,
        probe_radius: cfg.probe_radius,
        ratio_strictly_decreasing: by_delta
            .windows(2)
            .all(|w| w[1].error_over_delta < w[0].error_over_delta),
        rows,
    };
    write_json(cli.out.as_deref(), &report)
}

fn cmd_validate(cli: &Cli, corrupt_weights: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let checks = run_suite(SuiteOptions { corrupt_weights });
    let mut out = output(cli.out.as_deref())?;
    let io = write_err;
    for c in &checks {
        writeln!(out, "{c}").map_err(io)?;
        if cli.verbose {
            let margin = c.tolerance - c.measured;
            writeln!(out, "       margin {margin:.3e}; {}", c.detail).map_err(io)?;
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(
        out,
        "{} of {} checks passed in {:.1} s",
        checks.len() - failed,
        checks.len(),
        start.elapsed().as_secs_f64()
    )
    .map_err(io)?;
    out.flush().map_err(io)?;
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} validation check(s) failed")));
    }
    Ok(())
}

#[derive(Serialize)]
struct InvertReport {
    endpoints: ([f64; 2], [f64; 2]),
    center: [f64; 2],
    angle: f64,
    length: f64,
    strength: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    transverse_ratio: f64,
    sensors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<TruthComparison>,
}

#[derive(Serialize)]
struct TruthComparison {
    endpoints: ([f64; 2], [f64; 2]),
    strength: f64,
    endpoint_error: f64,
    source: &'static str,
    noise_rms: f64,
    seed: u64,
}

fn cmd_invert(
    cli: &Cli,
    cfg: &RunConfig,
    data: Option<&Path>,
    synthesize: bool,
    write_data: Option<&Path>,
) -> Result<(), CliError> {
    let bg = cfg.background()?;
    let (sensors, truth) = if synthesize {
        let spec = cfg.rod()?;
        let source = match cli.model {
            Model::Bem => DataSource::Bem(cfg.resolution(&spec)),
            Model::Asymptotic => DataSource::Asymptotic,
        };
        let set = simulate_measurements(
            &spec,
            &bg,
            cfg.sensor_center,
            cfg.sensor_radius,
            cfg.sensors(),
            cfg.noise_rms,
            cli.seed,
            source,
        )
        .map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(p) = write_data {
            let f = File::create(p).map_err(|e| CliError::Io(format!("cannot create {}: {e}", p.display())))?;
            write_measurements(BufWriter::new(f), &set.points, &set.values).map_err(io_err)?;
        }
        (set, Some((spec, source)))
    } else {
        let path = data.expect("clap requires --data without --synthesize");
        let file = File::open(path).map_err(|e| {
            CliError::Io(format!(
                "cannot open measurement file {}: {e}\nhint: pass --data FILE.csv (header x1,x2,u) or --synthesize",
                path.display()
            ))
        })?;
        let (points, values) = read_measurements(file).map_err(io_err)?;
        let set = SensorSet {
            center: cfg.sensor_center,
            radius: cfg.sensor_radius,
            points,
            values,
            background: bg,
        };
        (set, None)
    };

    let ratio = cfg.transverse_ratio();
    let init = initial_guess(&sensors, ratio).map_err(|e| CliError::Usage(e.to_string()))?;
    let options = FitOptions {
        max_iterations: cfg.max_iterations,
        transverse: ratio,
        ..FitOptions::default()
    };
    let fit = fit_rod(&sensors, init, options).map_err(run_err)?;
    let truth = truth.map(|(spec, source)| {
        let (p, q) = spec.cap_centers();
        let (ph, qh) = (Vec2::from(fit.endpoints.0), Vec2::from(fit.endpoints.1));
        let err = ((ph - p).norm().max((qh - q).norm())).min((ph - q).norm().max((qh - p).norm()));
        let lambda = thinrod::lambda_of_sigma(spec.sigma0).expect("validated");
        TruthComparison {
            endpoints: ([p.x, p.y], [q.x, q.y]),
            strength: spec.delta / (lambda - 0.5),
            endpoint_error: err,
            source: match source {
                DataSource::Asymptotic => "asymptotic",
                DataSource::Bem(_) => "bem",
            },
            noise_rms: cfg.noise_rms,
            seed: cli.seed,
        }
    });
    let report = InvertReport {
        endpoints: fit.endpoints,
        center: fit.params.center,
        angle: fit.params.angle,
        length: fit.params.length,
        strength: fit.strength,
        residual: fit.residual,
        iterations: fit.iterations,
        converged: fit.converged,
        transverse_ratio: ratio,
        sensors: sensors.points.len(),
        truth,
    };
    write_json(cli.out.as_deref(), &report)?;
    if !fit.converged {
        return Err(CliError::Failed(format!(
            "fit did not converge in {} iterations",
            fit.iterations
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Fieldmap => cmd_fieldmap(cli, &cfg),
        Command::Forward => cmd_forward(cli, &cfg),
        Command::Asymptotic => cmd_asymptotic(cli, &cfg),
        Command::Compare => cmd_compare(cli, &cfg),
        Command::Validate { corrupt_weights } => cmd_validate(cli, *corrupt_weights),
        Command::Invert {
            data,
            synthesize,
            write_data,
        } => cmd_invert(cli, &cfg, data.as_deref(), *synthesize, write_data.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
