//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Every experiment uses the disc of radius 0.01 with 100 nodes and analytic
//! Jacobians unless stated otherwise.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use initshape::experiment::{run_experiment, ExperimentSpec, FieldSpec, CONVERGENCE_FILE};
use initshape::oracle::{analytic_inverse, predicted_rate, residual_recurrence_oracle, AffineInverseProblem};
use initshape::{
    extract_initial_geometry, make_disc, solve, AffineShearVolumetricField, BoundaryCurve,
    ConvergenceReport, JacobianMode, Point2, SchemeKind, SolverConfig, Status,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RADIUS: f64 = 0.01;
const NODES: usize = 100;
const STUB: &str = env!("CARGO_BIN_EXE_initshape");

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn disc() -> BoundaryCurve {
    make_disc(RADIUS, NODES, Point2::ORIGIN).unwrap()
}

fn jac(alpha: f64) -> initshape::Jacobian2 {
    AffineShearVolumetricField::new(alpha).unwrap().gradient()
}

/// Solves the standard problem and checks the one-second budget.
fn run(alpha: f64, scheme: SchemeKind, epsilon: f64) -> Result<ConvergenceReport, String> {
    run_with(alpha, SolverConfig::new(scheme, epsilon))
}

fn run_with(alpha: f64, config: SolverConfig) -> Result<ConvergenceReport, String> {
    let field = AffineShearVolumetricField::new(alpha).unwrap();
    let start = Instant::now();
    let report = solve(&disc(), &field, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("alpha={alpha} scheme {}: took {elapsed:?}", config.scheme));
    }
    Ok(report)
}

fn tail_mean(rates: &[f64], n: usize) -> f64 {
    let tail = &rates[rates.len().saturating_sub(n)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn ulp(x: f64) -> f64 {
    let a = x.abs();
    a.next_up() - a
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Every iteration's residual equals U^{j-1} - U^j - B^j; returns the worst error.
fn residual_identity_error(report: &ConvergenceReport) -> f64 {
    let mut worst = 0.0f64;
    for w in report.records.windows(2) {
        for i in 0..w[1].residuals.len() {
            let rhs = w[0].displacements[i] - w[1].displacements[i] - w[1].correctives[i];
            worst = worst.max((w[1].residuals[i] - rhs).norm());
        }
    }
    worst
}

fn c1_scheme_ii_rate_is_alpha() -> Outcome {
    let eps = 1e-9 * RADIUS;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for alpha in [0.1, 0.6, 0.9] {
        let r = run(alpha, SchemeKind::SchemeII, eps)?;
        ensure(r.status == Status::Converged, || format!("alpha={alpha}: {:?}", r.status))?;
        // residual decays by exactly alpha from alpha*sqrt(2)*radius
        let first = r.records[0].max_residual_norm;
        ensure((first - alpha * 2f64.sqrt() * RADIUS).abs() <= 1e-15, || format!("alpha={alpha}: first residual {first:e}"))?;
        let predicted = 1 + ((eps / first).ln() / alpha.ln()).ceil() as usize;
        ensure(r.iterations().abs_diff(predicted) <= 1, || {
            format!("alpha={alpha}: {} iterations, geometric decay predicts {predicted}", r.iterations())
        })?;
        let worst = r.measured_rates.iter().map(|q| (q - alpha).abs() / alpha).fold(0.0, f64::max);
        let within = r.measured_rates.iter().take_while(|q| ((*q - alpha) / alpha).abs() <= 1e-9).count();
        notes.push(format!("alpha={alpha}: {} it, max rel dev {worst:.1e}", r.iterations()));
        if worst > 1e-9 {
            failures.push(format!(
                "alpha={alpha}: max relative rate deviation {worst:.2e} > 1e-9 (first {within} of {} rates within)",
                r.measured_rates.len()
            ));
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn c2_scheme_i_rate_alpha_06() -> Outcome {
    let r = run(0.6, SchemeKind::SchemeI, 1e-9 * RADIUS)?;
    ensure(r.status == Status::Converged, || format!("{:?}", r.status))?;
    let asymptotic = tail_mean(&r.measured_rates, 5);
    let oracle = predicted_rate(&jac(0.6), SchemeKind::SchemeI).map_err(|e| e.to_string())?;
    ensure((oracle - 0.848528).abs() < 5e-7, || format!("oracle eigenvalue {oracle}"))?;
    ensure((asymptotic - 0.8486).abs() <= 0.001, || format!("asymptotic rate {asymptotic}"))?;
    Ok(format!("asymptotic {asymptotic:.6}, oracle {oracle:.6}"))
}

fn c3_scheme_i_rate_alpha_01() -> Outcome {
    let r = run(0.1, SchemeKind::SchemeI, 1e-9 * RADIUS)?;
    ensure(r.status == Status::Converged, || format!("{:?}", r.status))?;
    let asymptotic = tail_mean(&r.measured_rates, 5);
    let oracle = predicted_rate(&jac(0.1), SchemeKind::SchemeI).map_err(|e| e.to_string())?;
    ensure((asymptotic - 0.1414).abs() <= 0.001, || format!("asymptotic rate {asymptotic}"))?;
    ensure((oracle - 0.1 * 2f64.sqrt()).abs() < 1e-15, || format!("oracle {oracle}"))?;
    Ok(format!("asymptotic {asymptotic:.6}, oracle {oracle:.6}"))
}

fn c4_scheme_iii_rate_alpha_01() -> Outcome {
    let r = run(0.1, SchemeKind::SchemeIII, 1e-9 * RADIUS)?;
    ensure(r.status == Status::Converged, || format!("{:?}", r.status))?;
    let asymptotic = tail_mean(&r.measured_rates, 5);
    let oracle = predicted_rate(&jac(0.1), SchemeKind::SchemeIII).map_err(|e| e.to_string())?;
    ensure((asymptotic - 0.11).abs() <= 0.005, || format!("asymptotic rate {asymptotic}"))?;
    ensure((oracle - 0.11).abs() <= 0.005, || format!("oracle {oracle}"))?;
    Ok(format!("asymptotic {asymptotic:.5}, oracle {oracle:.5}"))
}

fn c5_scheme_iii_alpha_06() -> Outcome {
    let r = run(0.6, SchemeKind::SchemeIII, 1e-9 * RADIUS)?;
    ensure(r.status == Status::Converged, || format!("{:?}", r.status))?;
    let oracle = predicted_rate(&jac(0.6), SchemeKind::SchemeIII).map_err(|e| e.to_string())?;
    let asymptotic = tail_mean(&r.measured_rates, 5);
    let early_hit = r.measured_rates.iter().take(10).any(|q| (q - 0.84).abs() <= 0.02);
    let outside: Vec<String> = r
        .measured_rates
        .iter()
        .enumerate()
        .filter(|(_, q)| !(0.80..=0.97).contains(*q))
        .map(|(k, q)| format!("j={}: {q:.4}", k + 2))
        .collect();
    let mut failures = Vec::new();
    if !outside.is_empty() {
        failures.push(format!("rates outside [0.80, 0.97]: {}", outside.join(", ")));
    }
    if (asymptotic - oracle).abs() > 1e-6 {
        failures.push(format!("asymptotic {asymptotic} vs oracle {oracle}"));
    }
    if !early_hit {
        failures.push("no early rate within 0.02 of 0.84".into());
    }
    if failures.is_empty() {
        Ok(format!("asymptotic {asymptotic:.7}, oracle {oracle:.7}"))
    } else {
        Err(format!("{} (asymptotic {asymptotic:.7}, oracle {oracle:.7})", failures.join("; ")))
    }
}

fn c6_divergence_alpha_09() -> Outcome {
    for scheme in [SchemeKind::SchemeI, SchemeKind::SchemeIII] {
        let r = run(0.9, scheme, 1e-9 * RADIUS)?;
        ensure(r.status == Status::Diverged, || format!("scheme {scheme}: {:?}", r.status))?;
        let norms = r.max_residual_norms();
        // norms[k] is iteration k + 1
        for k in 3..norms.len() {
            ensure(norms[k] > norms[k - 1], || {
                format!("scheme {scheme}: residual not increasing at iteration {}", k + 1)
            })?;
        }
    }
    let r = run(0.9, SchemeKind::SchemeII, 1e-9 * RADIUS)?;
    ensure(r.status == Status::Converged, || format!("scheme II: {:?}", r.status))?;
    let worst = r.measured_rates.iter().map(|q| (q - 0.9).abs()).fold(0.0, f64::max);
    ensure(worst <= 1e-9, || {
        format!("schemes I/III diverge; scheme II converges but max |rate - 0.9| = {worst:.2e} > 1e-9")
    })?;
    Ok(format!("schemes I/III diverged; scheme II max |rate - 0.9| {worst:.1e}"))
}

fn c7_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst_ulps = 0.0f64;
    for scheme in SchemeKind::ALL {
        for alpha in [0.1, 0.3, 0.6] {
            let field = AffineShearVolumetricField::new(alpha).unwrap();
            let points: Vec<Point2> = (0..10)
                .map(|_| {
                    let t = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = RADIUS * rng.gen_range(0.5..1.5);
                    Point2::new(r * t.cos(), r * t.sin())
                })
                .collect();
            let curve = BoundaryCurve::new(points.clone(), "random").unwrap();
            let cfg = SolverConfig::new(scheme, 1e-300).with_max_iterations(21);
            let report = solve(&curve, &field, &cfg).map_err(|e| e.to_string())?;
            for (i, p) in points.iter().enumerate() {
                let seed = -field.displacement(*p);
                let expected = residual_recurrence_oracle(&jac(alpha), scheme, seed, 20).map_err(|e| e.to_string())?;
                // the solver's residuals come from differences of coordinates of this size
                let scale = report
                    .records
                    .iter()
                    .map(|r| {
                        let m = r.m_points.points()[i];
                        let n = r.n_points.points()[i];
                        m.x.abs().max(m.y.abs()).max(n.x.abs()).max(n.y.abs())
                    })
                    .fold(0.0, f64::max);
                for (step, want) in expected.iter().enumerate() {
                    let got = report.records[step + 1].residuals[i];
                    let err = (got - *want).dx.abs().max((got - *want).dy.abs());
                    let ulps = err / ulp(scale);
                    worst_ulps = worst_ulps.max(ulps / (step + 1) as f64);
                    ensure(err <= 8.0 * (step + 1) as f64 * ulp(scale), || {
                        format!("scheme {scheme} alpha={alpha} node {i} step {}: {ulps:.1} ulp", step + 1)
                    })?;
                }
            }
        }
    }
    Ok(format!("worst {worst_ulps:.2} ulp per step"))
}

fn c8_inverse_geometry() -> Outcome {
    let mut notes = Vec::new();
    for alpha in [0.6, 0.9] {
        let r = run(alpha, SchemeKind::SchemeII, 1e-12)?;
        ensure(r.status == Status::Converged, || format!("alpha={alpha}: {:?}", r.status))?;
        let extracted = extract_initial_geometry(&r);
        let problem = AffineInverseProblem::new(alpha, disc()).map_err(|e| e.to_string())?;
        let analytic = analytic_inverse(&problem);
        let field = AffineShearVolumetricField::new(alpha).unwrap();
        let mut to_oracle = 0.0f64;
        let mut to_disc = 0.0f64;
        for ((e, a), d) in extracted.points().iter().zip(analytic.points()).zip(disc().points()) {
            to_oracle = to_oracle.max(e.distance(a));
            to_disc = to_disc.max((*e + field.displacement(*e)).distance(d));
        }
        ensure(to_oracle <= 1e-11, || format!("alpha={alpha}: distance to analytic inverse {to_oracle:e}"))?;
        ensure(to_disc <= 1e-11, || format!("alpha={alpha}: deformed mismatch {to_disc:e}"))?;
        notes.push(format!("alpha={alpha}: {to_oracle:.1e} / {to_disc:.1e}"));
    }
    Ok(notes.join("; "))
}

fn c9_residual_identity() -> Outcome {
    let tol = 1e-14 * RADIUS;
    let eps = 1e-9 * RADIUS;
    let cases = [
        (0.1, SchemeKind::SchemeII),
        (0.6, SchemeKind::SchemeII),
        (0.9, SchemeKind::SchemeII),
        (0.6, SchemeKind::SchemeI),
        (0.1, SchemeKind::SchemeI),
        (0.1, SchemeKind::SchemeIII),
        (0.6, SchemeKind::SchemeIII),
        (0.9, SchemeKind::SchemeI),
        (0.9, SchemeKind::SchemeIII),
    ];
    let mut failures = Vec::new();
    let mut worst_ok = 0.0f64;
    for (alpha, scheme) in cases {
        let r = run(alpha, scheme, eps)?;
        let err = residual_identity_error(&r);
        if err > tol {
            let peak = r.max_residual_norms().into_iter().fold(0.0, f64::max);
            failures.push(format!(
                "alpha={alpha} scheme {scheme} ({:?}, peak residual {peak:.1e}): error {err:.1e}",
                r.status
            ));
        } else {
            worst_ok = worst_ok.max(err);
        }
    }
    if failures.is_empty() {
        Ok(format!("worst error {worst_ok:.1e} <= {tol:.0e}"))
    } else {
        Err(format!("{} exceed {tol:.0e}", failures.join("; ")))
    }
}

fn c10_fd_jacobian() -> Outcome {
    let eps = 1e-9 * RADIUS;
    let analytic = run(0.6, SchemeKind::SchemeII, eps)?;
    let fd = run_with(
        0.6,
        SolverConfig::new(SchemeKind::SchemeII, eps)
            .with_jacobian_mode(JacobianMode::FiniteDifference { step: None }),
    )?;
    ensure(fd.status == Status::Converged, || format!("{:?}", fd.status))?;
    ensure(fd.measured_rates.len() == analytic.measured_rates.len(), || {
        format!(
            "{} vs {} rates",
            fd.measured_rates.len(),
            analytic.measured_rates.len()
        )
    })?;
    let jac_dev = fd
        .cached_jacobians
        .iter()
        .map(|j| {
            (j.du_x_dx - 0.6)
                .abs()
                .max((j.du_x_dy - 0.6).abs())
                .max((j.du_y_dx - 0.6).abs())
                .max((j.du_y_dy + 0.6).abs())
        })
        .fold(0.0, f64::max);
    let (k, worst) = fd
        .measured_rates
        .iter()
        .zip(&analytic.measured_rates)
        .map(|(a, b)| (a - b).abs())
        .enumerate()
        .fold((0, 0.0), |acc, (k, d)| if d > acc.1 { (k, d) } else { acc });
    ensure(worst <= 1e-8, || {
        format!(
            "max rate change {worst:.2e} > 1e-8 at j={} (Jacobian deviation {jac_dev:.1e})",
            k + 2
        )
    })?;
    Ok(format!("max rate change {worst:.1e}, Jacobian deviation {jac_dev:.1e}"))
}

fn c11_external_adapter() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fd = JacobianMode::FiniteDifference { step: None };

    let mut local = ExperimentSpec::affine_disc(0.6, SchemeKind::SchemeII, tmp.path().join("local"));
    local.epsilon = Some(1e-9 * RADIUS);
    local.jacobian_mode = fd;
    run_experiment(&local).map_err(|e| e.to_string())?;

    let mut external = local.clone();
    external.output_dir = tmp.path().join("external");
    external.field = FieldSpec::External {
        command: format!("{STUB} affine-stub --alpha 0.6 {{workdir}}"),
        workdir: tmp.path().join("work"),
        timeout_secs: 30.0,
    };
    let ext = run_experiment(&external).map_err(|e| e.to_string())?;
    ensure(ext.report.status == Status::Converged, || format!("{:?}", ext.report.status))?;

    let a = fs::read(local.output_dir.join(CONVERGENCE_FILE)).map_err(|e| e.to_string())?;
    let b = fs::read(external.output_dir.join(CONVERGENCE_FILE)).map_err(|e| e.to_string())?;
    ensure(a == b, || "convergence.csv differs between in-process and external runs".into())?;

    // the CLI binary itself is the stub; make sure it is callable standalone too
    let status = Command::new(STUB).arg("--help").output().map_err(|e| e.to_string())?;
    ensure(status.status.success(), || "CLI --help failed".into())?;
    Ok(format!("{} iterations, convergence.csv byte-identical", ext.report.iterations()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("C1", "scheme II rate equals alpha (0.1, 0.6, 0.9)", c1_scheme_ii_rate_is_alpha),
        ("C2", "scheme I rate at alpha=0.6 is 0.8486", c2_scheme_i_rate_alpha_06),
        ("C3", "scheme I rate at alpha=0.1 is 0.1414", c3_scheme_i_rate_alpha_01),
        ("C4", "scheme III rate at alpha=0.1 is 0.11", c4_scheme_iii_rate_alpha_01),
        ("C5", "scheme III at alpha=0.6 converges, rates in [0.80, 0.97]", c5_scheme_iii_alpha_06),
        ("C6", "alpha=0.9: schemes I/III diverge, scheme II rate 0.9", c6_divergence_alpha_09),
        ("C7", "solver residuals match the recurrence oracle", c7_oracle_equivalence),
        ("C8", "initial geometry matches the analytic inverse", c8_inverse_geometry),
        ("C9", "residual recurrence identity", c9_residual_identity),
        ("C10", "finite-difference Jacobians leave rates unchanged", c10_fd_jacobian),
        ("C11", "external solver adapter reproduces convergence.csv", c11_external_adapter),
    ];

    let mut failed = 0;
    for (id, title, check) in criteria {
        match check() {
            Ok(detail) => println!("[PASS] {id:<4} {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id:<4} {title}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
