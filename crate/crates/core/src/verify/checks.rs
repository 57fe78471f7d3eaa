use std::io::Write;

use super::VerifyError;
use crate::hjb::{extract_policy, ValueField};
use crate::probcfg::{discount_issues, Issue, ProblemSpec, ValidationReport};
use crate::sde::{
    evaluate_payoff, mc_estimate_policies, mc_run, McSettings, Sample, StartState, StoppingRule,
    ThresholdRule,
};

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub case: String,
    pub check: String,
    pub point: String,
    pub expected: f64,
    pub got: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReportRow {
    /// Two-sided check `|got − expected| ≤ tolerance`.
    pub fn close(case: &str, check: &str, point: &str, expected: f64, got: f64, tolerance: f64) -> Self {
        Self {
            case: case.into(),
            check: check.into(),
            point: point.into(),
            expected,
            got,
            tolerance,
            pass: (got - expected).abs() <= tolerance,
        }
    }

    /// One-sided check `got ≤ expected + tolerance`.
    pub fn at_most(case: &str, check: &str, point: &str, expected: f64, got: f64, tolerance: f64) -> Self {
        Self {
            pass: got <= expected + tolerance,
            ..Self::close(case, check, point, expected, got, tolerance)
        }
    }

    /// Pass/fail row with no numeric content.
    pub fn flag(case: &str, check: &str, point: &str, pass: bool) -> Self {
        Self {
            case: case.into(),
            check: check.into(),
            point: point.into(),
            expected: 1.0,
            got: f64::from(u8::from(pass)),
            tolerance: 0.0,
            pass,
        }
    }
}

/// CSV `case,check,point,expected,got,tolerance,pass`.
pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<(), VerifyError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["case", "check", "point", "expected", "got", "tolerance", "pass"])?;
    for r in rows {
        w.write_record([
            r.case.clone(),
            r.check.clone(),
            r.point.clone(),
            r.expected.to_string(),
            r.got.to_string(),
            r.tolerance.to_string(),
            u8::from(r.pass).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn point_label(p: &StartState) -> String {
    format!("x={};t={};i={}", p.x, p.age, p.regime + 1)
}

/// Rejects problems whose discount rate does not stay above its claimed
/// floor `ε_i > 0` on the computational grid.
pub fn reject_degenerate_discount(spec: &ProblemSpec) -> Result<(), ValidationReport> {
    let xs = spec.check_nodes();
    let issues = if xs.is_empty() {
        vec![Issue::new(
            "region",
            "discount guard needs a bounded computational interval",
        )]
    } else {
        discount_issues(&spec.payoff, &xs)
    };
    if issues.is_empty() {
        Ok(())
    } else {
        Err(ValidationReport { issues })
    }
}

/// Threshold rule whose continuation intervals are the continue runs of the
/// field's age-zero (or only) level. Runs touching a grid end extend to
/// infinity so that scaling does not move the grid ends.
pub fn threshold_from_field(field: &ValueField<f64>) -> ThresholdRule {
    let m = field.grid.m();
    let continuation = (0..field.k)
        .map(|i| {
            let mut runs = Vec::new();
            let mut start: Option<f64> = None;
            for n in 1..m {
                let cont = !field.stop_flag(n, 0, i);
                match (cont, start) {
                    (true, None) => {
                        start = Some(if n == 1 {
                            f64::NEG_INFINITY
                        } else {
                            crossing(field, i, n - 1)
                        })
                    }
                    (false, Some(a)) => {
                        runs.push((a, crossing(field, i, n - 1)));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(a) = start {
                runs.push((a, f64::INFINITY));
            }
            runs
        })
        .collect();
    ThresholdRule::new(continuation)
}

/// Linear crossing of `v + h − tol_stop` between nodes `n` and `n + 1`.
fn crossing(field: &ValueField<f64>, i: usize, n: usize) -> f64 {
    let v = field.slice(0, i);
    let mh = field.minus_h(i);
    let g0 = v[n] - mh[n] - field.tol_stop;
    let g1 = v[n + 1] - mh[n + 1] - field.tol_stop;
    let w = if g0 != g1 {
        (g0 / (g0 - g1)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    field.grid.x(n) + w * field.grid.dx()
}

/// Monte Carlo value of the field's own stopping rule against the field.
///
/// Each point passes when `|mean − v| ≤ 3·stderr + Δx + dt`. Every factor in
/// `perturb` adds a rule with all boundary abscissae scaled by it, simulated
/// on the same paths; it passes when its mean does not exceed `v` by more
/// than three of its standard errors.
pub fn policy_value_check(
    case: &str,
    spec: &ProblemSpec,
    field: &ValueField<f64>,
    points: &[StartState],
    perturb: &[f64],
    settings: &McSettings,
) -> Result<Vec<ReportRow>, VerifyError> {
    let policy = extract_policy(field);
    let base = threshold_from_field(field);
    let scaled: Vec<ThresholdRule> = perturb.iter().map(|&f| base.scaled(f)).collect();
    let mut rules: Vec<&dyn StoppingRule> = vec![&policy];
    rules.extend(scaled.iter().map(|r| r as &dyn StoppingRule));
    let allowance = field.grid.dx() + settings.dt;
    let mut rows = Vec::new();
    for p in points {
        let v = field.value_at(p.x, p.age, p.regime);
        let est = mc_estimate_policies(spec, *p, &rules, settings)?;
        let label = point_label(p);
        rows.push(ReportRow::close(
            case,
            "policy_value",
            &label,
            v,
            est[0].mean,
            3.0 * est[0].stderr + allowance,
        ));
        for (f, e) in perturb.iter().zip(&est[1..]) {
            rows.push(ReportRow::at_most(
                case,
                &format!("perturbed_x{f}"),
                &label,
                v,
                e.mean,
                3.0 * e.stderr,
            ));
        }
    }
    Ok(rows)
}

/// Statistical dynamic-programming check at one point.
///
/// Estimates `E[∫₀^{τ∧δ} e^{−ρ}Π ds + e^{−ρ_{τ∧δ}}(−h·1{τ<δ} + v(X_δ,ζ_δ,θ_δ)·1{τ≥δ})]`
/// with `τ` the field's own rule, and compares with `v` at the point within
/// `3·stderr + Δx + dt`.
pub fn dpp_statistical_check(
    case: &str,
    spec: &ProblemSpec,
    field: &ValueField<f64>,
    point: StartState,
    delta: f64,
    settings: &McSettings,
) -> Result<ReportRow, VerifyError> {
    if !(delta > 0.0) {
        return Err(VerifyError::Oracle(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let policy = extract_policy(field);
    let truncated = |p: &crate::sde::PathPoint| p.s >= delta || policy.should_stop(p);
    let settings = McSettings {
        horizon: delta,
        ..*settings
    };
    let est = mc_run(
        spec,
        point,
        &settings,
        1,
        |p, _| !truncated(p),
        |path, out| {
            let o = evaluate_payoff(path, &truncated, &spec.payoff)?;
            let mut value = o.value;
            if let Some(n) = o.stop_index {
                let p = path.point(n);
                let forced = path.exit_index() == Some(n);
                if !forced && !policy.should_stop(&p) {
                    let stop = spec.payoff.stop_reward(p.x, p.regime)?;
                    value += (-p.rho).exp() * (field.value_at(p.x, p.age, p.regime) - stop);
                }
            }
            out[0] = Sample {
                value,
                censored: o.censored,
            };
            Ok(())
        },
    )?;
    let v = field.value_at(point.x, point.age, point.regime);
    Ok(ReportRow::close(
        case,
        &format!("dpp_delta{delta}"),
        &point_label(&point),
        v,
        est[0].mean,
        3.0 * est[0].stderr + field.grid.dx() + settings.dt,
    ))
}
