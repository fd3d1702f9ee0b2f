//! Ground truth for the shear/volumetric test field, independent of the solver.
//!
//! Two references are provided. [`analytic_inverse`] solves the inverse
//! problem of the affine field in closed form. [`residual_recurrence_oracle`]
//! iterates the exact linear map that governs the residual of each node under
//! an affine field, without moving any point or evaluating any field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Jacobian2;
use crate::geometry::{BoundaryCurve, Point2, Vector2};
use crate::solver::{SchemeKind, SINGULAR_THRESHOLD};

/// Inverse problem for `U = (alpha (x + y), alpha (x - y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineInverseProblem {
    alpha: f64,
    desired: BoundaryCurve,
}

impl AffineInverseProblem {
    pub fn new(alpha: f64, desired: BoundaryCurve) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
        }
        if (1.0 - 2.0 * alpha * alpha).abs() <= 1e-12 {
            return Err(Error::SingularInverse { alpha });
        }
        Ok(AffineInverseProblem { alpha, desired })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn desired(&self) -> &BoundaryCurve {
        &self.desired
    }
}

/// Solves `(1 + a) x + a y = x_d`, `a x + (1 - a) y = y_d` for every node.
pub fn analytic_inverse(problem: &AffineInverseProblem) -> BoundaryCurve {
    let a = problem.alpha;
    let det = 1.0 - 2.0 * a * a;
    let points = problem
        .desired
        .points()
        .iter()
        .map(|d| {
            Point2::new(
                ((1.0 - a) * d.x - a * d.y) / det,
                ((1.0 + a) * d.y - a * d.x) / det,
            )
        })
        .collect();
    BoundaryCurve::new(points, format!("analytic inverse (alpha={a})"))
        .expect("finite desired curve maps to a finite inverse")
}

/// Real 2x2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2(pub [[f64; 2]; 2]);

impl Matrix2 {
    pub fn apply(&self, v: Vector2) -> Vector2 {
        let m = &self.0;
        Vector2::new(m[0][0] * v.dx + m[0][1] * v.dy, m[1][0] * v.dx + m[1][1] * v.dy)
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn determinant(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        let half_tr = 0.5 * self.trace();
        let disc = half_tr * half_tr - self.determinant();
        if disc >= 0.0 {
            let s = disc.sqrt();
            (half_tr + s).abs().max((half_tr - s).abs())
        } else {
            // complex pair: |lambda|^2 = det
            self.determinant().sqrt()
        }
    }
}

/// First-order residual update with an arbitrary corrective term:
///
/// ```text
/// Δ_x' = -ε_xx (Δ_x + B_x) - ∂U_x/∂y (Δ_y + B_y) - B_x
/// Δ_y' = -∂U_y/∂x (Δ_x + B_x) - ε_yy (Δ_y + B_y) - B_y
/// ```
///
/// Exact when the field is affine.
pub fn linearized_residual_update(jac: &Jacobian2, prev: Vector2, corrective: Vector2) -> Vector2 {
    let sx = prev.dx + corrective.dx;
    let sy = prev.dy + corrective.dy;
    Vector2::new(
        -jac.du_x_dx * sx - jac.du_x_dy * sy - corrective.dx,
        -jac.du_y_dx * sx - jac.du_y_dy * sy - corrective.dy,
    )
}

/// The linear map `Δ^{j-1} -> Δ^j` of a scheme under an affine field.
///
/// Schemes I and III are assembled column by column by feeding the unit
/// residuals through [`linearized_residual_update`] with the scheme's corrective
/// term. Scheme II uses the decoupled form its corrective term is built to
/// produce, `diag(-ε_xx, -ε_yy)`.
pub fn residual_map(jac: &Jacobian2, scheme: SchemeKind) -> Result<Matrix2> {
    let corrective = |d: Vector2| match scheme {
        SchemeKind::SchemeIII => Vector2::new(-jac.du_x_dy * d.dy, -jac.du_y_dx * d.dx),
        _ => Vector2::ZERO,
    };
    match scheme {
        SchemeKind::SchemeII => {
            let a11 = 1.0 + jac.du_x_dx;
            let a22 = 1.0 + jac.du_y_dy;
            let det = a11 * a22 - jac.du_x_dy * jac.du_y_dx;
            let scale = a11.abs().max(a22.abs()).max(jac.du_x_dy.abs()).max(jac.du_y_dx.abs());
            if det.abs() <= SINGULAR_THRESHOLD * (scale * scale).max(1.0) {
                return Err(Error::SingularSystem { index: 0, determinant: det });
            }
            Ok(Matrix2([[-jac.du_x_dx, 0.0], [0.0, -jac.du_y_dy]]))
        }
        SchemeKind::SchemeI | SchemeKind::SchemeIII => {
            let e1 = Vector2::new(1.0, 0.0);
            let e2 = Vector2::new(0.0, 1.0);
            let c1 = linearized_residual_update(jac, e1, corrective(e1));
            let c2 = linearized_residual_update(jac, e2, corrective(e2));
            Ok(Matrix2([[c1.dx, c2.dx], [c1.dy, c2.dy]]))
        }
    }
}

/// The residuals after 1..=n_steps applications of the scheme's map.
pub fn residual_recurrence_oracle(
    jac: &Jacobian2,
    scheme: SchemeKind,
    initial_residual: Vector2,
    n_steps: usize,
) -> Result<Vec<Vector2>> {
    let map = residual_map(jac, scheme)?;
    let mut out = Vec::with_capacity(n_steps);
    let mut r = initial_residual;
    for _ in 0..n_steps {
        r = map.apply(r);
        out.push(r);
    }
    Ok(out)
}

/// Asymptotic convergence rate predicted for a scheme.
pub fn predicted_rate(jac: &Jacobian2, scheme: SchemeKind) -> Result<f64> {
    residual_map(jac, scheme).map(|m| m.spectral_radius())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_disc;

    fn affine_jac(a: f64) -> Jacobian2 {
        Jacobian2::new(a, a, a, -a)
    }

    #[test]
    fn inverse_of_single_point() {
        let desired = BoundaryCurve::new(vec![Point2::new(0.01, 0.0)], "").unwrap();
        let inv = analytic_inverse(&AffineInverseProblem::new(0.6, desired).unwrap());
        let p = inv.points()[0];
        assert!((p.x - 0.004 / 0.28).abs() < 1e-16, "{p:?}");
        assert!((p.y + 0.006 / 0.28).abs() < 1e-16, "{p:?}");
        // forward check: p + U(p) = desired
        let fx = p.x + 0.6 * (p.x + p.y);
        let fy = p.y + 0.6 * (p.x - p.y);
        assert!((fx - 0.01).abs() < 1e-15 && fy.abs() < 1e-15);
    }

    #[test]
    fn inverse_with_zero_alpha_is_identity() {
        let disc = make_disc(0.01, 20, Point2::ORIGIN).unwrap();
        let inv = analytic_inverse(&AffineInverseProblem::new(0.0, disc.clone()).unwrap());
        assert_eq!(inv.points(), disc.points());
    }

    #[test]
    fn critical_alpha_is_rejected() {
        let disc = make_disc(0.01, 20, Point2::ORIGIN).unwrap();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert!(matches!(
            AffineInverseProblem::new(a, disc.clone()),
            Err(Error::SingularInverse { .. })
        ));
        assert!(AffineInverseProblem::new(-a, disc).is_err());
    }

    #[test]
    fn scheme_ii_sequence() {
        let a = 0.6;
        let seq = residual_recurrence_oracle(&affine_jac(a), SchemeKind::SchemeII, Vector2::new(1.0, 1.0), 3).unwrap();
        let expected = [(-a, a), (a * a, a * a), (-a * a * a, a * a * a)];
        for (v, (x, y)) in seq.iter().zip(expected) {
            assert!((v.dx - x).abs() < 1e-15 && (v.dy - y).abs() < 1e-15, "{v:?}");
        }
    }

    #[test]
    fn scheme_i_one_step_is_minus_jacobian() {
        let a = 0.6;
        let seq = residual_recurrence_oracle(&affine_jac(a), SchemeKind::SchemeI, Vector2::new(1.0, 0.0), 1).unwrap();
        assert_eq!(seq, vec![Vector2::new(-a, -a)]);
        let m = residual_map(&affine_jac(a), SchemeKind::SchemeI).unwrap();
        assert_eq!(m, Matrix2([[-a, -a], [-a, a]]));
    }

    #[test]
    fn scheme_i_rate_is_alpha_sqrt2() {
        for a in [0.1, 0.6, 0.9] {
            let rho = predicted_rate(&affine_jac(a), SchemeKind::SchemeI).unwrap();
            assert!((rho - a * 2f64.sqrt()).abs() < 1e-15);
        }
        let rho = predicted_rate(&affine_jac(0.6), SchemeKind::SchemeI).unwrap();
        assert!((rho - 0.848528).abs() < 1e-6);

        // long-run norm ratio of the iterated map
        let seq = residual_recurrence_oracle(&affine_jac(0.6), SchemeKind::SchemeI, Vector2::new(0.3, -0.7), 60).unwrap();
        let ratio = seq[59].norm() / seq[58].norm();
        assert!((ratio - 0.6 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scheme_iii_map_and_rate() {
        // Entries worked out by hand from the update equations with
        // B = (-a Δ_y, -a Δ_x): [[a^2 - a, a^2], [-a^2, a + a^2]].
        for a in [0.1, 0.3, 0.6, 0.9] {
            let m = residual_map(&affine_jac(a), SchemeKind::SchemeIII).unwrap();
            let expected = [[a * a - a, a * a], [-a * a, a + a * a]];
            for (got, want) in m.0.iter().flatten().zip(expected.iter().flatten()) {
                assert!((got - want).abs() < 1e-15, "{m:?}");
            }
            // eigenvalues a^2 ± a sqrt(1 - a^2)
            let rho = m.spectral_radius();
            assert!((rho - (a * a + a * (1.0 - a * a).sqrt())).abs() < 1e-14, "a={a} rho={rho}");
        }
        let rho = predicted_rate(&affine_jac(0.6), SchemeKind::SchemeIII).unwrap();
        assert!((rho - 0.84).abs() < 1e-14);
        let rho = predicted_rate(&affine_jac(0.9), SchemeKind::SchemeIII).unwrap();
        assert!(rho > 1.0);
    }

    #[test]
    fn scheme_ii_map_matches_corrected_update() {
        // Feeding the scheme II corrective into the generic update reproduces
        // the diagonal map.
        let jac = Jacobian2::new(0.3, -0.2, 0.45, 0.1);
        let map = residual_map(&jac, SchemeKind::SchemeII).unwrap();
        let d = Vector2::new(0.7, -1.3);
        let b = crate::solver::corrective_scheme_ii(&jac, d, crate::solver::SingularFallback::Fail)
            .unwrap()
            .value;
        let via_update = linearized_residual_update(&jac, d, b);
        assert!((via_update - map.apply(d)).norm() < 1e-15);
    }

    #[test]
    fn complex_eigenvalues_use_determinant() {
        // rotation by 90 degrees scaled by 0.5
        let m = Matrix2([[0.0, -0.5], [0.5, 0.0]]);
        assert!((m.spectral_radius() - 0.5).abs() < 1e-15);
    }
}
