//! Displacement fields: the forward problem as seen by the inverse solver.
//!
//! A field maps a point of the undeformed body to its displacement. The solver
//! only ever asks for displacements of whole boundaries at once
//! ([`DisplacementField::evaluate_batch`]) and for Jacobians at the desired
//! points, so fields backed by an external process pay one invocation per
//! iteration rather than one per node.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ExternalFailure, Result};
use crate::geometry::{read_pairs, write_pairs, Point2, Vector2, POINT_HEADER};

/// Input file written into the adapter working directory.
pub const POINTS_IN_FILE: &str = "points_in.csv";
/// Output file the external solver must produce.
pub const DISPLACEMENTS_OUT_FILE: &str = "displacements_out.csv";
/// Header line of the displacement CSV.
pub const DISPLACEMENT_HEADER: &str = "ux,uy";
/// Placeholder replaced by the working directory in a command template.
pub const WORKDIR_PLACEHOLDER: &str = "{workdir}";

/// Displacement gradient at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jacobian2 {
    /// Normal strain in x.
    pub du_x_dx: f64,
    pub du_x_dy: f64,
    pub du_y_dx: f64,
    /// Normal strain in y.
    pub du_y_dy: f64,
}

impl Jacobian2 {
    pub const ZERO: Jacobian2 = Jacobian2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(du_x_dx: f64, du_x_dy: f64, du_y_dx: f64, du_y_dy: f64) -> Self {
        Jacobian2 {
            du_x_dx,
            du_x_dy,
            du_y_dx,
            du_y_dy,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.du_x_dx.is_finite()
            && self.du_x_dy.is_finite()
            && self.du_y_dx.is_finite()
            && self.du_y_dy.is_finite()
    }

    /// Matrix-vector product `J v`.
    pub fn apply(&self, v: Vector2) -> Vector2 {
        Vector2::new(
            self.du_x_dx * v.dx + self.du_x_dy * v.dy,
            self.du_y_dx * v.dx + self.du_y_dy * v.dy,
        )
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.du_x_dx
            .abs()
            .max(self.du_x_dy.abs())
            .max(self.du_y_dx.abs())
            .max(self.du_y_dy.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianCapability {
    Analytic,
    None,
}

/// A deterministic displacement field `U(x, y)`.
///
/// Implementations must be pure: the same point always yields the same
/// displacement, and concurrent calls are allowed.
pub trait DisplacementField: Send + Sync {
    fn evaluate(&self, p: Point2) -> Result<Vector2>;

    /// Displacements for a list of points, in order.
    fn evaluate_batch(&self, points: &[Point2]) -> Result<Vec<Vector2>> {
        points
            .iter()
            .enumerate()
            .map(|(index, &p)| {
                let u = self.evaluate(p)?;
                if u.is_finite() {
                    Ok(u)
                } else {
                    Err(Error::FieldEvaluation {
                        index,
                        message: format!("non-finite displacement at {p:?}"),
                    })
                }
            })
            .collect()
    }

    fn jacobian_capability(&self) -> JacobianCapability {
        JacobianCapability::None
    }

    fn jacobian(&self, _p: Point2) -> Result<Jacobian2> {
        Err(Error::NoAnalyticJacobian)
    }
}

impl<F: DisplacementField + ?Sized> DisplacementField for &F {
    fn evaluate(&self, p: Point2) -> Result<Vector2> {
        (**self).evaluate(p)
    }
    fn evaluate_batch(&self, points: &[Point2]) -> Result<Vec<Vector2>> {
        (**self).evaluate_batch(points)
    }
    fn jacobian_capability(&self) -> JacobianCapability {
        (**self).jacobian_capability()
    }
    fn jacobian(&self, p: Point2) -> Result<Jacobian2> {
        (**self).jacobian(p)
    }
}

impl<F: DisplacementField + ?Sized> DisplacementField for Box<F> {
    fn evaluate(&self, p: Point2) -> Result<Vector2> {
        (**self).evaluate(p)
    }
    fn evaluate_batch(&self, points: &[Point2]) -> Result<Vec<Vector2>> {
        (**self).evaluate_batch(points)
    }
    fn jacobian_capability(&self) -> JacobianCapability {
        (**self).jacobian_capability()
    }
    fn jacobian(&self, p: Point2) -> Result<Jacobian2> {
        (**self).jacobian(p)
    }
}

/// `U = (alpha (x + y), alpha (x - y))`: shear and volumetric strain of equal magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineShearVolumetricField {
    pub alpha: f64,
}

impl AffineShearVolumetricField {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be finite, got {alpha}"
            )));
        }
        Ok(AffineShearVolumetricField { alpha })
    }

    pub fn displacement(&self, p: Point2) -> Vector2 {
        Vector2::new(self.alpha * (p.x + p.y), self.alpha * (p.x - p.y))
    }

    pub fn gradient(&self) -> Jacobian2 {
        Jacobian2::new(self.alpha, self.alpha, self.alpha, -self.alpha)
    }
}

impl DisplacementField for AffineShearVolumetricField {
    fn evaluate(&self, p: Point2) -> Result<Vector2> {
        Ok(self.displacement(p))
    }
    fn jacobian_capability(&self) -> JacobianCapability {
        JacobianCapability::Analytic
    }
    fn jacobian(&self, _p: Point2) -> Result<Jacobian2> {
        Ok(self.gradient())
    }
}

/// General affine field `U(p) = J p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    pub gradient: Jacobian2,
    pub translation: Vector2,
}

impl AffineField {
    pub fn new(gradient: Jacobian2, translation: Vector2) -> Result<Self> {
        if !gradient.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidArgument(
                "affine field coefficients must be finite".into(),
            ));
        }
        Ok(AffineField {
            gradient,
            translation,
        })
    }
}

impl DisplacementField for AffineField {
    fn evaluate(&self, p: Point2) -> Result<Vector2> {
        Ok(self.gradient.apply(p.to_vector()) + self.translation)
    }
    fn jacobian_capability(&self) -> JacobianCapability {
        JacobianCapability::Analytic
    }
    fn jacobian(&self, _p: Point2) -> Result<Jacobian2> {
        Ok(self.gradient)
    }
}

/// Field defined by a closure, without an analytic Jacobian.
pub struct FnField<F> {
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(Point2) -> Vector2 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnField { f }
    }
}

impl<F> DisplacementField for FnField<F>
where
    F: Fn(Point2) -> Vector2 + Send + Sync,
{
    fn evaluate(&self, p: Point2) -> Result<Vector2> {
        Ok((self.f)(p))
    }
}

/// Central-difference Jacobian with step `h` along each axis.
pub fn fd_jacobian<F: DisplacementField + ?Sized>(field: &F, p: Point2, h: f64) -> Result<Jacobian2> {
    fd_jacobians(field, &[p], h).map(|mut v| v.remove(0))
}

/// Central-difference Jacobians at several points using a single batch evaluation.
pub fn fd_jacobians<F: DisplacementField + ?Sized>(
    field: &F,
    points: &[Point2],
    h: f64,
) -> Result<Vec<Jacobian2>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive and finite, got {h}"
        )));
    }
    let mut probes = Vec::with_capacity(points.len() * 4);
    let mut spans = Vec::with_capacity(points.len());
    for p in points {
        let (xp, xm) = (p.x + h, p.x - h);
        let (yp, ym) = (p.y + h, p.y - h);
        // divide by the distance between the probes as actually represented
        spans.push((xp - xm, yp - ym));
        probes.push(Point2::new(xp, p.y));
        probes.push(Point2::new(xm, p.y));
        probes.push(Point2::new(p.x, yp));
        probes.push(Point2::new(p.x, ym));
    }
    let u = field.evaluate_batch(&probes).map_err(|e| match e {
        Error::FieldEvaluation { index, message } => Error::FieldEvaluation {
            index: index / 4,
            message,
        },
        other => other,
    })?;
    Ok(u.chunks_exact(4)
        .zip(spans)
        .map(|(c, (sx, sy))| {
            let (xp, xm, yp, ym) = (c[0], c[1], c[2], c[3]);
            Jacobian2::new(
                (xp.dx - xm.dx) / sx,
                (yp.dx - ym.dx) / sy,
                (xp.dy - xm.dy) / sx,
                (yp.dy - ym.dy) / sy,
            )
        })
        .collect())
}

/// Field computed by an external program through files in a working directory.
///
/// Each batch writes [`POINTS_IN_FILE`], runs the command (with
/// [`WORKDIR_PLACEHOLDER`] substituted in every argument) and reads
/// [`DISPLACEMENTS_OUT_FILE`]. Invocations on one instance are serialized.
#[derive(Debug)]
pub struct ExternalSolverField {
    command: Vec<String>,
    workdir: PathBuf,
    timeout: Duration,
    lock: Mutex<()>,
}

impl ExternalSolverField {
    pub fn new(command: Vec<String>, workdir: impl Into<PathBuf>, timeout: Duration) -> Result<Self> {
        if command.is_empty() || command[0].is_empty() {
            return Err(Error::InvalidArgument("empty external command".into()));
        }
        if timeout.is_zero() {
            return Err(Error::InvalidArgument("timeout must be positive".into()));
        }
        Ok(ExternalSolverField {
            command,
            workdir: workdir.into(),
            timeout,
            lock: Mutex::new(()),
        })
    }

    /// Splits a whitespace-separated template such as `solver --dir {workdir}`.
    pub fn from_template(template: &str, workdir: impl Into<PathBuf>, timeout: Duration) -> Result<Self> {
        Self::new(
            template.split_whitespace().map(str::to_owned).collect(),
            workdir,
            timeout,
        )
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn run_batch(&self, points: &[Point2]) -> Result<Vec<Vector2>> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());

        fs::create_dir_all(&self.workdir).map_err(|e| Error::io(&self.workdir, e))?;
        let input = self.workdir.join(POINTS_IN_FILE);
        let output = self.workdir.join(DISPLACEMENTS_OUT_FILE);
        let file = fs::File::create(&input).map_err(|e| Error::io(&input, e))?;
        write_pairs(file, POINT_HEADER, points.iter().map(|p| (p.x, p.y)))
            .map_err(|e| Error::io(&input, e))?;
        match fs::remove_file(&output) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&output, e)),
        }

        let workdir = self.workdir.to_string_lossy();
        let args: Vec<String> = self
            .command
            .iter()
            .map(|a| a.replace(WORKDIR_PLACEHOLDER, &workdir))
            .collect();
        log::debug!("external solver: {}", args.join(" "));

        let mut cmd = Command::new(&args[0]);
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            // own process group, so a timeout also takes down grandchildren
            cmd.process_group(0);
        }
        let mut child = cmd
            .args(&args[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External {
                kind: ExternalFailure::Spawn,
                diagnostics: format!("{}: {e}", args[0]),
            })?;

        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= self.timeout => {
                    kill_tree(&mut child);
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => thread::sleep(Duration::from_millis(2)),
                Err(e) => {
                    return Err(Error::External {
                        kind: ExternalFailure::Spawn,
                        diagnostics: e.to_string(),
                    })
                }
            }
        };
        let diag = {
            let out = stdout.join().unwrap_or_default();
            let err = stderr.join().unwrap_or_default();
            format!("{err}{out}").trim().to_owned()
        };
        let diagnostics = || diag.as_str();

        let status = match status {
            Some(s) => s,
            None => {
                return Err(Error::External {
                    kind: ExternalFailure::Timeout,
                    diagnostics: format!("after {:?}; {}", self.timeout, diagnostics()),
                })
            }
        };
        if !status.success() {
            return Err(Error::External {
                kind: ExternalFailure::ExitStatus,
                diagnostics: format!("{status}; {}", diagnostics()),
            });
        }

        let file = fs::File::open(&output).map_err(|e| Error::External {
            kind: ExternalFailure::Output,
            diagnostics: format!("{}: {e}; {}", output.display(), diagnostics()),
        })?;
        let rows = read_pairs(file, DISPLACEMENT_HEADER).map_err(|e| Error::External {
            kind: ExternalFailure::Output,
            diagnostics: format!("{e}; {}", diagnostics()),
        })?;
        if rows.len() != points.len() {
            return Err(Error::External {
                kind: ExternalFailure::RowCountMismatch,
                diagnostics: format!(
                    "expected {} rows, got {}; {}",
                    points.len(),
                    rows.len(),
                    diagnostics()
                ),
            });
        }
        Ok(rows.into_iter().map(|(a, b)| Vector2::new(a, b)).collect())
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    if let Ok(pid) = libc::pid_t::try_from(child.id()) {
        // SAFETY: plain syscall on the process group we created at spawn.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl DisplacementField for ExternalSolverField {
    fn evaluate(&self, p: Point2) -> Result<Vector2> {
        self.run_batch(&[p]).map(|mut v| v.remove(0))
    }

    fn evaluate_batch(&self, points: &[Point2]) -> Result<Vec<Vector2>> {
        self.run_batch(points)
    }
}

/// Reference external solver for the shear/volumetric test field.
///
/// Reads `points_in.csv` from `workdir` and writes `displacements_out.csv`,
/// so it can be plugged into [`ExternalSolverField`] through the CLI.
pub fn run_affine_stub(alpha: f64, workdir: &Path) -> Result<usize> {
    let field = AffineShearVolumetricField::new(alpha)?;
    let input = workdir.join(POINTS_IN_FILE);
    let output = workdir.join(DISPLACEMENTS_OUT_FILE);
    let file = fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
    let points = read_pairs(file, POINT_HEADER)?;
    let file = fs::File::create(&output).map_err(|e| Error::io(&output, e))?;
    write_pairs(
        file,
        DISPLACEMENT_HEADER,
        points.iter().map(|&(x, y)| {
            let u = field.displacement(Point2::new(x, y));
            (u.dx, u.dy)
        }),
    )
    .map_err(|e| Error::io(&output, e))?;
    Ok(points.len())
}
