//! Experiment runner behind the command-line tool.
//!
//! An [`ExperimentSpec`] names a field, a desired shape and solver settings.
//! [`run_experiment`] solves it and writes the results into an output
//! directory:
//!
//! * `initial_geometry.csv`, `deformed_geometry.csv`: final `M` and `N` nodes
//! * `geometry_j<NNN>_initial.csv`, `geometry_j<NNN>_deformed.csv`: every
//!   iteration, with `keep_history`
//! * `convergence.csv`: `j,max_residual_norm,rate`
//! * `report.json`: status, settings, rates and the Jacobian cache

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AffineShearVolumetricField, DisplacementField, ExternalSolverField, Jacobian2};
use crate::geometry::{make_disc, read_curve, write_curve, BoundaryCurve, Point2};
use crate::oracle::{analytic_inverse, AffineInverseProblem};
use crate::solver::{
    extract_initial_geometry, solve, ConvergenceReport, JacobianMode, SchemeKind, SingularFallback,
    SolverConfig, Status,
};

pub const INITIAL_GEOMETRY_FILE: &str = "initial_geometry.csv";
pub const DEFORMED_GEOMETRY_FILE: &str = "deformed_geometry.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const REPORT_FILE: &str = "report.json";
pub const ORACLE_MISMATCH_FILE: &str = "oracle_mismatch.csv";
pub const CONVERGENCE_HEADER: &str = "j,max_residual_norm,rate";

/// Default stopping tolerance relative to the shape's characteristic length.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Affine {
        alpha: f64,
    },
    External {
        command: String,
        workdir: PathBuf,
        timeout_secs: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Disc {
        radius: f64,
        n_points: usize,
        center: Point2,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub field: FieldSpec,
    pub desired_shape: ShapeSpec,
    pub scheme: SchemeKind,
    /// `None` uses `DEFAULT_RELATIVE_EPSILON` times the shape size.
    pub epsilon: Option<f64>,
    pub max_iterations: usize,
    pub jacobian_mode: JacobianMode,
    pub singular_fallback: SingularFallback,
    pub output_dir: PathBuf,
    pub keep_history: bool,
}

impl ExperimentSpec {
    /// Scheme II on the shear/volumetric field and a 100-node disc of radius 0.01.
    pub fn affine_disc(alpha: f64, scheme: SchemeKind, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            field: FieldSpec::Affine { alpha },
            desired_shape: ShapeSpec::Disc {
                radius: 0.01,
                n_points: 100,
                center: Point2::ORIGIN,
            },
            scheme,
            epsilon: None,
            max_iterations: 1000,
            jacobian_mode: JacobianMode::Analytic,
            singular_fallback: SingularFallback::SchemeIii,
            output_dir: output_dir.into(),
            keep_history: false,
        }
    }

    pub fn desired_curve(&self) -> Result<BoundaryCurve> {
        match &self.desired_shape {
            ShapeSpec::Disc {
                radius,
                n_points,
                center,
            } => make_disc(*radius, *n_points, *center),
            ShapeSpec::File { path } => {
                let f = File::open(path).map_err(|e| Error::io(path, e))?;
                Ok(read_curve(f)?.with_label(path.display().to_string()))
            }
        }
    }

    pub fn build_field(&self) -> Result<Box<dyn DisplacementField>> {
        Ok(match &self.field {
            FieldSpec::Affine { alpha } => Box::new(AffineShearVolumetricField::new(*alpha)?),
            FieldSpec::External {
                command,
                workdir,
                timeout_secs,
            } => {
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "timeout must be positive, got {timeout_secs}"
                    )));
                }
                Box::new(ExternalSolverField::from_template(
                    command,
                    workdir.clone(),
                    Duration::from_secs_f64(*timeout_secs),
                )?)
            }
        })
    }

    pub fn solver_config(&self, desired: &BoundaryCurve) -> SolverConfig {
        let epsilon = self
            .epsilon
            .unwrap_or_else(|| DEFAULT_RELATIVE_EPSILON * desired.characteristic_length());
        SolverConfig {
            scheme: self.scheme,
            epsilon,
            max_iterations: self.max_iterations,
            jacobian_mode: self.jacobian_mode,
            singular_fallback: self.singular_fallback,
        }
    }
}

/// Process exit status for a finished run.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => 0,
        Status::MaxIterationsReached => 2,
        Status::Diverged => 3,
    }
}

/// Exit status for any error.
pub const ERROR_EXIT_CODE: i32 = 1;

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    status: Status,
    iterations: usize,
    epsilon: f64,
    final_max_residual_norm: f64,
    experiment: &'a ExperimentSpec,
    solver: &'a SolverConfig,
    max_residual_norms: Vec<f64>,
    measured_rates: &'a [f64],
    cached_jacobians: &'a [Jacobian2],
    fallback_iterations: Vec<usize>,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub desired: BoundaryCurve,
    pub report: ConvergenceReport,
}

impl ExperimentRun {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.report.status)
    }
}

/// Solves the experiment and writes its output files.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentRun> {
    let desired = spec.desired_curve()?;
    let field = spec.build_field()?;
    let config = spec.solver_config(&desired);
    let report = solve(&desired, &field, &config)?;
    log::info!(
        "scheme {} finished with {:?} after {} iteration(s), max |Δ| = {:e}",
        spec.scheme,
        report.status,
        report.iterations(),
        report.final_record().max_residual_norm
    );
    write_outputs(spec, &report)?;
    Ok(ExperimentRun { desired, report })
}

fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn write_geometry(path: &Path, curve: &BoundaryCurve) -> Result<()> {
    write_curve(curve, create_file(path)?).map_err(|e| Error::io(path, e))
}

fn write_outputs(spec: &ExperimentSpec, report: &ConvergenceReport) -> Result<()> {
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let last = report.final_record();
    write_geometry(&dir.join(INITIAL_GEOMETRY_FILE), &last.m_points)?;
    write_geometry(&dir.join(DEFORMED_GEOMETRY_FILE), &last.n_points)?;
    if spec.keep_history {
        for r in &report.records {
            write_geometry(&dir.join(format!("geometry_j{:03}_initial.csv", r.j)), &r.m_points)?;
            write_geometry(&dir.join(format!("geometry_j{:03}_deformed.csv", r.j)), &r.n_points)?;
        }
    }

    let path = dir.join(CONVERGENCE_FILE);
    write_convergence(report, create_file(&path)?).map_err(|e| Error::io(&path, e))?;

    let json = ReportJson {
        status: report.status,
        iterations: report.iterations(),
        epsilon: report.config.epsilon,
        final_max_residual_norm: last.max_residual_norm,
        experiment: spec,
        solver: &report.config,
        max_residual_norms: report.max_residual_norms(),
        measured_rates: &report.measured_rates,
        cached_jacobians: &report.cached_jacobians,
        fallback_iterations: report
            .records
            .iter()
            .filter(|r| !r.fallback_points.is_empty())
            .map(|r| r.j)
            .collect(),
    };
    let path = dir.join(REPORT_FILE);
    let mut f = create_file(&path)?;
    let text = serde_json::to_string_pretty(&json).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    writeln!(f, "{text}").map_err(|e| Error::io(&path, e))
}

/// Writes `j,max_residual_norm,rate`; the rate cell is empty on the first row.
pub fn write_convergence<W: Write>(report: &ConvergenceReport, sink: W) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(sink);
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for (k, r) in report.records.iter().enumerate() {
        if k == 0 {
            writeln!(out, "{},{},", r.j, r.max_residual_norm)?;
        } else {
            writeln!(out, "{},{},{}", r.j, r.max_residual_norm, report.measured_rates[k - 1])?;
        }
    }
    out.flush()
}

/// Result of [`compare_against_oracle`].
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub run: ExperimentRun,
    pub analytic: BoundaryCurve,
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub tolerance: f64,
}

impl OracleComparison {
    pub fn passed(&self) -> bool {
        self.max_distance <= self.tolerance
    }

    /// 0 when the extracted geometry is within `10 * epsilon` of the analytic inverse.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            self.run.exit_code().max(ERROR_EXIT_CODE)
        }
    }
}

/// Runs an affine experiment and measures the distance of the extracted
/// initial geometry to the closed-form inverse, writing `oracle_mismatch.csv`.
pub fn compare_against_oracle(spec: &ExperimentSpec) -> Result<OracleComparison> {
    let alpha = match spec.field {
        FieldSpec::Affine { alpha } => alpha,
        FieldSpec::External { .. } => {
            return Err(Error::InvalidArgument(
                "oracle comparison needs the affine field".into(),
            ))
        }
    };
    let run = run_experiment(spec)?;
    let problem = AffineInverseProblem::new(alpha, run.desired.clone())?;
    let analytic = analytic_inverse(&problem);
    let extracted = extract_initial_geometry(&run.report);
    let distances: Vec<f64> = extracted
        .points()
        .iter()
        .zip(analytic.points())
        .map(|(a, b)| a.distance(b))
        .collect();
    let max_distance = distances.iter().copied().fold(0.0, f64::max);
    let tolerance = 10.0 * run.report.config.epsilon;

    let path = spec.output_dir.join(ORACLE_MISMATCH_FILE);
    let mut out = std::io::BufWriter::new(create_file(&path)?);
    let write = |out: &mut std::io::BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "i,distance")?;
        for (i, d) in distances.iter().enumerate() {
            writeln!(out, "{i},{d}")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(&path, e))?;

    log::info!("max distance to analytic inverse {max_distance:e} (tolerance {tolerance:e})");
    Ok(OracleComparison {
        run,
        analytic,
        distances,
        max_distance,
        tolerance,
    })
}
