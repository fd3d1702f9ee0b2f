//! Fixed-point identification of the initial boundary geometry.
//!
//! Starting from the desired nodes `M_i^d`, every iteration moves each node by
//! its residual `Δ_i^{j-1}` plus a corrective term `B_i^j`, deforms it with the
//! displacement field, and measures the new residual
//! `Δ_i^j = M_i^d - (M_i^j + U(M_i^j))`. Nodes never interact; the loop stops
//! once the largest residual norm drops to `epsilon`.
//!
//! The three schemes differ only in `B`:
//!
//! * [`SchemeKind::SchemeI`]: no correction.
//! * [`SchemeKind::SchemeII`]: `B` solves the 2x2 system built from the
//!   displacement gradient at `M_i^d`, so that to first order the residual
//!   components decay as `Δ_x^j = -ε_xx Δ_x^{j-1}` and `Δ_y^j = -ε_yy Δ_y^{j-1}`.
//! * [`SchemeKind::SchemeIII`]: the small-strain approximation
//!   `B = (-∂U_x/∂y Δ_y, -∂U_y/∂x Δ_x)`.
//!
//! Gradients are computed once, at the desired points, in [`first_iteration`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fd_jacobians, DisplacementField, Jacobian2};
use crate::geometry::{BoundaryCurve, Point2, Vector2};

/// A run is declared diverged once the max residual norm exceeds this multiple
/// of its value at the first iteration.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Relative determinant threshold below which the scheme II system is singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

/// Default central-difference step relative to the curve's characteristic length.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "I")]
    SchemeI,
    #[serde(rename = "II")]
    SchemeII,
    #[serde(rename = "III")]
    SchemeIII,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::SchemeI, SchemeKind::SchemeII, SchemeKind::SchemeIII];

    fn needs_jacobians(self) -> bool {
        !matches!(self, SchemeKind::SchemeI)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::SchemeI => "I",
            SchemeKind::SchemeII => "II",
            SchemeKind::SchemeIII => "III",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SchemeKind::SchemeI),
            "II" | "2" => Ok(SchemeKind::SchemeII),
            "III" | "3" => Ok(SchemeKind::SchemeIII),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scheme `{s}` (expected I, II or III)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    Analytic,
    /// Central differences. `None` picks `FD_RELATIVE_STEP` times the
    /// characteristic length of the desired curve.
    FiniteDifference { step: Option<f64> },
}

/// What scheme II does at a node whose corrective system is singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularFallback {
    SchemeIii,
    SchemeI,
    Fail,
}

impl FromStr for SingularFallback {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scheme_iii" => Ok(SingularFallback::SchemeIii),
            "scheme_i" => Ok(SingularFallback::SchemeI),
            "fail" => Ok(SingularFallback::Fail),
            _ => Err(Error::InvalidArgument(format!(
                "unknown fallback `{s}` (expected scheme_iii, scheme_i or fail)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: SchemeKind,
    /// Stopping tolerance on the max residual norm.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub jacobian_mode: JacobianMode,
    pub singular_fallback: SingularFallback,
}

impl SolverConfig {
    pub fn new(scheme: SchemeKind, epsilon: f64) -> Self {
        SolverConfig {
            scheme,
            epsilon,
            max_iterations: 1000,
            jacobian_mode: JacobianMode::Analytic,
            singular_fallback: SingularFallback::SchemeIii,
        }
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> Self {
        self.jacobian_mode = mode;
        self
    }

    pub fn with_fallback(mut self, fallback: SingularFallback) -> Self {
        self.singular_fallback = fallback;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if let JacobianMode::FiniteDifference { step: Some(h) } = self.jacobian_mode {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "finite-difference step must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Snapshot of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub j: usize,
    /// Current estimate of the initial geometry, `M_i^j`.
    pub m_points: BoundaryCurve,
    /// Deformed positions `N_i^j = M_i^j + U(M_i^j)`.
    pub n_points: BoundaryCurve,
    /// `U(M_i^j)`.
    pub displacements: Vec<Vector2>,
    /// `Δ_i^j = M_i^d - N_i^j`.
    pub residuals: Vec<Vector2>,
    /// `B_i^j`; zero for scheme I and at `j = 1`.
    pub correctives: Vec<Vector2>,
    pub max_residual_norm: f64,
    /// Nodes where scheme II hit a singular system and used the fallback.
    pub fallback_points: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterationsReached,
    Diverged,
}

/// Full history of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub records: Vec<IterationRecord>,
    pub status: Status,
    /// `max_residual_norm(j) / max_residual_norm(j-1)` for `j >= 2`.
    pub measured_rates: Vec<f64>,
    /// Gradients at the desired points. Empty for scheme I when the field has
    /// no usable Jacobian.
    pub cached_jacobians: Vec<Jacobian2>,
    pub config: SolverConfig,
}

impl ConvergenceReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("report holds at least one record")
    }

    pub fn max_residual_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.max_residual_norm).collect()
    }

    /// `|Δ_i^j| / |Δ_i^{j-1}|` for every node, one inner vector per `j >= 2`.
    /// NaN where the previous residual is exactly zero.
    pub fn per_point_rates(&self) -> Vec<Vec<f64>> {
        self.records
            .windows(2)
            .map(|w| {
                w[1].residuals
                    .iter()
                    .zip(&w[0].residuals)
                    .map(|(now, prev)| {
                        let p = prev.norm();
                        if p == 0.0 {
                            f64::NAN
                        } else {
                            now.norm() / p
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Result of a corrective-term computation at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrective {
    pub value: Vector2,
    /// Set when a singular system forced the fallback.
    pub degraded: bool,
}

/// The scheme II system at one node is numerically singular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularCorrective {
    pub determinant: f64,
}

/// Exact solution of
///
/// ```text
/// (ε_xx + 1) B_x + ∂U_x/∂y B_y = -∂U_x/∂y Δ_y
/// ∂U_y/∂x B_x + (ε_yy + 1) B_y = -∂U_y/∂x Δ_x
/// ```
pub fn corrective_scheme_ii(
    jac: &Jacobian2,
    prev_residual: Vector2,
    fallback: SingularFallback,
) -> std::result::Result<Corrective, SingularCorrective> {
    let a11 = jac.du_x_dx + 1.0;
    let a12 = jac.du_x_dy;
    let a21 = jac.du_y_dx;
    let a22 = jac.du_y_dy + 1.0;
    let r1 = -jac.du_x_dy * prev_residual.dy;
    let r2 = -jac.du_y_dx * prev_residual.dx;

    let det = a11 * a22 - a12 * a21;
    let scale = a11.abs().max(a12.abs()).max(a21.abs()).max(a22.abs());
    if det.abs() <= SINGULAR_THRESHOLD * (scale * scale).max(1.0) {
        return match fallback {
            SingularFallback::SchemeIii => Ok(Corrective {
                value: corrective_scheme_iii(jac, prev_residual),
                degraded: true,
            }),
            SingularFallback::SchemeI => Ok(Corrective {
                value: Vector2::ZERO,
                degraded: true,
            }),
            SingularFallback::Fail => Err(SingularCorrective { determinant: det }),
        };
    }
    Ok(Corrective {
        value: Vector2::new((r1 * a22 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det),
        degraded: false,
    })
}

/// Small-strain approximation of the scheme II corrective term.
pub fn corrective_scheme_iii(jac: &Jacobian2, prev_residual: Vector2) -> Vector2 {
    Vector2::new(
        -jac.du_x_dy * prev_residual.dy,
        -jac.du_y_dx * prev_residual.dx,
    )
}

/// Step used for central differences when the config does not fix one.
pub fn default_fd_step(desired: &BoundaryCurve) -> f64 {
    let mut scale = desired.characteristic_length();
    if scale == 0.0 {
        scale = desired.max_abs_coordinate();
    }
    if scale == 0.0 {
        scale = 1.0;
    }
    FD_RELATIVE_STEP * scale
}

fn compute_jacobians<F: DisplacementField + ?Sized>(
    desired: &BoundaryCurve,
    field: &F,
    mode: JacobianMode,
) -> Result<Vec<Jacobian2>> {
    let jacs = match mode {
        JacobianMode::Analytic => desired
            .points()
            .iter()
            .map(|&p| field.jacobian(p))
            .collect::<Result<Vec<_>>>()?,
        JacobianMode::FiniteDifference { step } => {
            let h = step.unwrap_or_else(|| default_fd_step(desired));
            fd_jacobians(field, desired.points(), h)?
        }
    };
    if let Some(index) = jacs.iter().position(|j| !j.is_finite()) {
        return Err(Error::FieldEvaluation {
            index,
            message: "non-finite Jacobian".into(),
        });
    }
    Ok(jacs)
}

fn deform<F: DisplacementField + ?Sized>(
    j: usize,
    desired: &BoundaryCurve,
    m: Vec<Point2>,
    correctives: Vec<Vector2>,
    fallback_points: Vec<usize>,
    field: &F,
) -> Result<IterationRecord> {
    let displacements = field.evaluate_batch(&m)?;
    if displacements.len() != m.len() {
        return Err(Error::FieldEvaluation {
            index: displacements.len().min(m.len()),
            message: format!(
                "field returned {} displacements for {} points",
                displacements.len(),
                m.len()
            ),
        });
    }
    let n: Vec<Point2> = m.iter().zip(&displacements).map(|(&p, &u)| p + u).collect();
    let residuals: Vec<Vector2> = desired
        .points()
        .iter()
        .zip(&n)
        .map(|(&d, &q)| d - q)
        .collect();
    let max_residual_norm = residuals.iter().map(Vector2::norm).fold(0.0, f64::max);
    let label = desired.label();
    Ok(IterationRecord {
        j,
        m_points: BoundaryCurve::new(m, format!("{label} initial j={j}"))?,
        n_points: BoundaryCurve::new(n, format!("{label} deformed j={j}"))?,
        displacements,
        residuals,
        correctives,
        max_residual_norm,
        fallback_points,
    })
}

/// Uses the desired nodes as first guess and computes their residuals.
/// Also returns the Jacobians at the desired nodes for later iterations.
pub fn first_iteration<F: DisplacementField + ?Sized>(
    desired: &BoundaryCurve,
    field: &F,
    config: &SolverConfig,
) -> Result<(IterationRecord, Vec<Jacobian2>)> {
    config.validate()?;
    let jacobians = match compute_jacobians(desired, field, config.jacobian_mode) {
        Ok(j) => j,
        Err(e) if config.scheme.needs_jacobians() => return Err(e),
        Err(e) => {
            log::debug!("scheme I runs without Jacobians: {e}");
            Vec::new()
        }
    };
    let l = desired.len();
    let record = deform(
        1,
        desired,
        desired.points().to_vec(),
        vec![Vector2::ZERO; l],
        Vec::new(),
        field,
    )?;
    Ok((record, jacobians))
}

/// One pass of the node update: `M^j = M^{j-1} + Δ^{j-1} + B^j`, then deform.
pub fn iterate_step<F: DisplacementField + ?Sized>(
    prev: &IterationRecord,
    desired: &BoundaryCurve,
    field: &F,
    cached_jacobians: &[Jacobian2],
    config: &SolverConfig,
) -> Result<IterationRecord> {
    let l = desired.len();
    if prev.m_points.len() != l || prev.residuals.len() != l {
        return Err(Error::InvalidArgument(format!(
            "previous record has {} points, desired curve has {l}",
            prev.m_points.len()
        )));
    }
    if config.scheme.needs_jacobians() && cached_jacobians.len() != l {
        return Err(Error::InvalidArgument(format!(
            "expected {l} cached Jacobians, got {}",
            cached_jacobians.len()
        )));
    }

    let mut correctives = Vec::with_capacity(l);
    let mut fallback_points = Vec::new();
    for (i, &delta) in prev.residuals.iter().enumerate() {
        let b = match config.scheme {
            SchemeKind::SchemeI => Vector2::ZERO,
            SchemeKind::SchemeII => {
                let c = corrective_scheme_ii(&cached_jacobians[i], delta, config.singular_fallback)
                    .map_err(|s| Error::SingularSystem {
                        index: i,
                        determinant: s.determinant,
                    })?;
                if c.degraded {
                    fallback_points.push(i);
                }
                c.value
            }
            SchemeKind::SchemeIII => corrective_scheme_iii(&cached_jacobians[i], delta),
        };
        correctives.push(b);
    }
    if !fallback_points.is_empty() {
        log::warn!(
            "iteration {}: singular corrective system at {} node(s), using {:?}",
            prev.j + 1,
            fallback_points.len(),
            config.singular_fallback
        );
    }

    let m: Vec<Point2> = prev
        .m_points
        .points()
        .iter()
        .zip(&prev.residuals)
        .zip(&correctives)
        .map(|((&p, &delta), &b)| (p + delta) + b)
        .collect();
    deform(prev.j + 1, desired, m, correctives, fallback_points, field)
}

/// Iterates until the max residual norm is at most `epsilon`, the iteration
/// budget is spent, or the residual blows up past `DIVERGENCE_FACTOR` times its
/// initial value.
pub fn solve<F: DisplacementField + ?Sized>(
    desired: &BoundaryCurve,
    field: &F,
    config: &SolverConfig,
) -> Result<ConvergenceReport> {
    let (first, jacobians) = first_iteration(desired, field, config)?;
    let initial = first.max_residual_norm;
    let mut records = vec![first];

    let status = loop {
        let last = records.last().expect("nonempty");
        if last.max_residual_norm <= config.epsilon {
            break Status::Converged;
        }
        if !last.max_residual_norm.is_finite() || last.max_residual_norm > DIVERGENCE_FACTOR * initial {
            break Status::Diverged;
        }
        if records.len() >= config.max_iterations {
            break Status::MaxIterationsReached;
        }
        let next = iterate_step(last, desired, field, &jacobians, config)?;
        log::trace!("j={} max |Δ|={:e}", next.j, next.max_residual_norm);
        records.push(next);
    };

    let measured_rates = records
        .windows(2)
        .map(|w| w[1].max_residual_norm / w[0].max_residual_norm)
        .collect();
    Ok(ConvergenceReport {
        records,
        status,
        measured_rates,
        cached_jacobians: jacobians,
        config: *config,
    })
}

/// The last estimate of the initial geometry. Check `report.status` before use.
pub fn extract_initial_geometry(report: &ConvergenceReport) -> BoundaryCurve {
    report.final_record().m_points.clone()
}
