use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use initshape::experiment::{
    compare_against_oracle, run_experiment, ExperimentSpec, FieldSpec, ShapeSpec, ERROR_EXIT_CODE,
};
use initshape::field::run_affine_stub;
use initshape::{Error, JacobianMode, Point2, SchemeKind, SingularFallback};

/// Find the initial boundary that deforms into a desired shape.
#[derive(Debug, Parser)]
#[command(name = "initshape", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// External-solver stub for the shear/volumetric field: reads
    /// `points_in.csv` from WORKDIR and writes `displacements_out.csv`.
    AffineStub {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        workdir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldKind {
    Affine,
    External,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeKind {
    Disc,
    File,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum JacobianKind {
    Analytic,
    Fd,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "affine")]
    field: FieldKind,
    /// Strain magnitude of the affine field.
    #[arg(long, default_value_t = 0.6, allow_hyphen_values = true)]
    alpha: f64,
    /// External solver invocation; `{workdir}` is replaced by --workdir.
    #[arg(long)]
    command: Option<String>,
    #[arg(long, default_value = "solver_work")]
    workdir: PathBuf,
    /// Seconds allowed per external invocation.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,

    #[arg(long, value_enum, default_value = "disc")]
    shape: ShapeKind,
    #[arg(long, default_value_t = 0.01)]
    radius: f64,
    #[arg(long = "n", default_value_t = 100)]
    n_points: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    center_x: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    center_y: f64,
    /// Geometry CSV with header `x,y` (with --shape file).
    #[arg(long)]
    shape_file: Option<PathBuf>,

    /// I, II or III.
    #[arg(long, default_value = "II", value_parser = parse_scheme)]
    scheme: SchemeKind,
    /// Stopping tolerance on the max residual norm (default: 1e-6 x shape size).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "max-iter", default_value_t = 1000)]
    max_iterations: usize,
    /// Jacobian source (default: analytic for the affine field, fd for external).
    #[arg(long, value_enum)]
    jacobian: Option<JacobianKind>,
    /// Central-difference step (default: 1e-6 x shape size).
    #[arg(long)]
    fd_step: Option<f64>,
    /// scheme_iii, scheme_i or fail.
    #[arg(long, default_value = "scheme_iii", value_parser = parse_fallback)]
    fallback: SingularFallback,

    #[arg(long = "out", default_value = "out")]
    output_dir: PathBuf,
    /// Also write geometry_j<NNN>_*.csv for every iteration.
    #[arg(long)]
    keep_history: bool,
    /// Compare the result with the closed-form inverse (affine field only).
    #[arg(long)]
    compare_oracle: bool,
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fallback(s: &str) -> Result<SingularFallback, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    fn into_spec(self) -> Result<ExperimentSpec, Error> {
        let field = match self.field {
            FieldKind::Affine => FieldSpec::Affine { alpha: self.alpha },
            FieldKind::External => FieldSpec::External {
                command: self.command.ok_or_else(|| {
                    Error::InvalidArgument("--field external needs --command".into())
                })?,
                workdir: self.workdir,
                timeout_secs: self.timeout,
            },
        };
        let desired_shape = match self.shape {
            ShapeKind::Disc => ShapeSpec::Disc {
                radius: self.radius,
                n_points: self.n_points,
                center: Point2::new(self.center_x, self.center_y),
            },
            ShapeKind::File => ShapeSpec::File {
                path: self.shape_file.ok_or_else(|| {
                    Error::InvalidArgument("--shape file needs --shape-file".into())
                })?,
            },
        };
        let default_jacobian = match field {
            FieldSpec::Affine { .. } => JacobianKind::Analytic,
            FieldSpec::External { .. } => JacobianKind::Fd,
        };
        let jacobian_mode = match self.jacobian.unwrap_or(default_jacobian) {
            JacobianKind::Analytic => JacobianMode::Analytic,
            JacobianKind::Fd => JacobianMode::FiniteDifference { step: self.fd_step },
        };
        Ok(ExperimentSpec {
            field,
            desired_shape,
            scheme: self.scheme,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            jacobian_mode,
            singular_fallback: self.fallback,
            output_dir: self.output_dir,
            keep_history: self.keep_history,
        })
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    if let Some(Command::AffineStub { alpha, workdir }) = cli.command {
        run_affine_stub(alpha, &workdir)?;
        return Ok(0);
    }
    let compare = cli.run.compare_oracle;
    let spec = cli.run.into_spec()?;
    if compare {
        let cmp = compare_against_oracle(&spec)?;
        println!(
            "status={:?} iterations={} max_oracle_distance={:e} tolerance={:e}",
            cmp.run.report.status,
            cmp.run.report.iterations(),
            cmp.max_distance,
            cmp.tolerance
        );
        Ok(cmp.exit_code())
    } else {
        let out = run_experiment(&spec)?;
        let last = out.report.final_record();
        println!(
            "status={:?} iterations={} max_residual_norm={:e}",
            out.report.status,
            out.report.iterations(),
            last.max_residual_norm
        );
        Ok(out.exit_code())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap's own usage exit code would collide with the max-iterations code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(ERROR_EXIT_CODE as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERROR_EXIT_CODE as u8)
        }
    }
}
