use log::info;

use super::checks::{dpp_statistical_check, point_label, policy_value_check, ReportRow};
use super::oracle::PutOracle;
use super::VerifyError;
use crate::hjb::{
    residual_check, solve_homogeneous, solve_truncated_inhomogeneous, AgeGrid, Grid1D, Solution,
    SolveOptions, ValueField,
};
use crate::probcfg::{load_problem_with, ProblemSpec, ValidationReport};
use crate::sde::{
    mc_estimate_policies, Immediate, McSettings, StartState, StopAtTime, StoppingRule, ThresholdRule,
};

/// How a case's expected values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    ClosedForm,
    PathwiseIdentity,
    CrossSolver,
    McPolicy,
    /// The file must fail validation.
    MustReject,
}

/// Where an expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Explicit formula evaluated independently of the solver.
    Analytic,
    /// Algebraic identity that holds path by path.
    Identity,
    /// Agreement of two solvers on the same problem.
    CrossSolver,
    /// Monte Carlo estimate with a standard-error band.
    Statistical,
    /// Follows from the problem's construction.
    Construction,
}

/// One expected quantity of a case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub check: &'static str,
    pub tolerance: f64,
    pub provenance: Provenance,
    pub note: &'static str,
}

const fn expect(
    check: &'static str,
    tolerance: f64,
    provenance: Provenance,
    note: &'static str,
) -> Expectation {
    Expectation {
        check,
        tolerance,
        provenance,
        note,
    }
}

/// A shipped problem file together with its oracle and tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkCase {
    pub name: &'static str,
    pub text: &'static str,
    pub oracle: OracleKind,
    pub expectations: &'static [Expectation],
}

impl BenchmarkCase {
    pub fn spec(&self) -> Result<ProblemSpec, ValidationReport> {
        load_problem_with(self.text, &[])
    }

    pub fn tolerance(&self, check: &str) -> f64 {
        self.expectations
            .iter()
            .find(|e| e.check == check)
            .map_or(0.0, |e| e.tolerance)
    }
}

const AUDIT: [Expectation; 2] = [
    expect(
        "residual_check",
        10.0,
        Provenance::Construction,
        "multiple of the solver tolerance",
    ),
    expect(
        "obstacle",
        1e-12,
        Provenance::Construction,
        "v >= -h after projection",
    ),
];

static CASES: [BenchmarkCase; 7] = [
    BenchmarkCase {
        name: "put",
        text: include_str!("../../corpus/put.prob"),
        oracle: OracleKind::ClosedForm,
        expectations: &[
            AUDIT[0],
            AUDIT[1],
            expect(
                "sup_error",
                5e-3,
                Provenance::Analytic,
                "perpetual put formula, times strike",
            ),
            expect("boundary_rel", 1e-2, Provenance::Analytic, "x* = K b/(b - 1)"),
            expect(
                "policy_value",
                3.0,
                Provenance::Statistical,
                "stderr multiple plus dx + dt",
            ),
            expect(
                "perturbed",
                3.0,
                Provenance::Statistical,
                "one-sided stderr multiple",
            ),
            expect(
                "dpp",
                3.0,
                Provenance::Statistical,
                "stderr multiple plus dx + dt",
            ),
        ],
    },
    BenchmarkCase {
        name: "const",
        text: include_str!("../../corpus/const.prob"),
        oracle: OracleKind::PathwiseIdentity,
        expectations: &[
            AUDIT[0],
            AUDIT[1],
            expect(
                "value_constant",
                1e-9,
                Provenance::Identity,
                "running payoff c r, cost -c",
            ),
            expect("mc_policy", 1e-5, Provenance::Identity, "every rule earns c"),
        ],
    },
    BenchmarkCase {
        name: "stopall",
        text: include_str!("../../corpus/stopall.prob"),
        oracle: OracleKind::PathwiseIdentity,
        expectations: &[
            AUDIT[0],
            AUDIT[1],
            expect(
                "value_zero",
                1e-14,
                Provenance::Construction,
                "negative running payoff, zero cost",
            ),
            expect(
                "mc_policy",
                0.0,
                Provenance::Construction,
                "immediate stop pays zero",
            ),
        ],
    },
    BenchmarkCase {
        name: "homog2",
        text: include_str!("../../corpus/homog2.prob"),
        oracle: OracleKind::CrossSolver,
        expectations: &[
            AUDIT[0],
            AUDIT[1],
            expect(
                "slice_agreement",
                1e-4,
                Provenance::CrossSolver,
                "age-zero slice against the homogeneous solve",
            ),
            expect(
                "age_variation",
                1e-4,
                Provenance::CrossSolver,
                "constant hazards remove the age dependence",
            ),
            expect(
                "outer_iterations",
                50.0,
                Provenance::Construction,
                "fixed-point iteration budget",
            ),
        ],
    },
    BenchmarkCase {
        name: "strangle2",
        text: include_str!("../../corpus/strangle2.prob"),
        oracle: OracleKind::McPolicy,
        expectations: &[
            AUDIT[0],
            AUDIT[1],
            expect(
                "policy_value",
                3.0,
                Provenance::Statistical,
                "stderr multiple plus dx + dt",
            ),
            expect(
                "perturbed",
                3.0,
                Provenance::Statistical,
                "one-sided stderr multiple",
            ),
            expect(
                "dpp",
                3.0,
                Provenance::Statistical,
                "stderr multiple plus dx + dt",
            ),
        ],
    },
    BenchmarkCase {
        name: "example1",
        text: include_str!("../../corpus/example1.prob"),
        oracle: OracleKind::MustReject,
        expectations: &[expect(
            "rejected",
            0.0,
            Provenance::Construction,
            "undiscounted system with a continuum of solutions",
        )],
    },
    BenchmarkCase {
        name: "bad_r",
        text: include_str!("../../corpus/bad_r.prob"),
        oracle: OracleKind::MustReject,
        expectations: &[expect(
            "rejected",
            0.0,
            Provenance::Construction,
            "discount rate below its floor near the left end",
        )],
    },
];

pub fn corpus() -> &'static [BenchmarkCase] {
    &CASES
}

pub fn find_case(name: &str) -> Option<&'static BenchmarkCase> {
    CASES.iter().find(|c| c.name == name)
}

/// Convergence, independent residual and obstacle rows for a solved field.
pub fn audit_rows(
    case: &str,
    label: &str,
    spec: &ProblemSpec,
    solution: &Solution<f64>,
) -> Result<Vec<ReportRow>, VerifyError> {
    let res = residual_check(&solution.field, spec)?;
    let where_ = match res.t {
        Some(t) => format!("{label};x={};t={t};i={}", res.x, res.regime + 1),
        None => format!("{label};x={};i={}", res.x, res.regime + 1),
    };
    Ok(vec![
        ReportRow::flag(case, "converged", label, solution.converged),
        ReportRow::at_most(
            case,
            "residual_check",
            &where_,
            0.0,
            res.max,
            AUDIT[0].tolerance * spec.solver.tol,
        ),
        ReportRow::at_most(
            case,
            "obstacle",
            label,
            0.0,
            -solution.field.min_gap(),
            AUDIT[1].tolerance,
        ),
    ])
}

/// Runs every check of `case`, with `overrides` applied to its file.
pub fn run_case(case: &BenchmarkCase, overrides: &[(String, String)]) -> Result<Vec<ReportRow>, VerifyError> {
    run_with_text(case, case.text, overrides)
}

fn run_with_text(
    case: &BenchmarkCase,
    text: &str,
    overrides: &[(String, String)],
) -> Result<Vec<ReportRow>, VerifyError> {
    info!("verifying {}", case.name);
    if case.oracle == OracleKind::MustReject {
        let rejected = match load_problem_with(text, overrides) {
            Err(report) => report.mentions("discount guard"),
            Ok(_) => false,
        };
        return Ok(vec![ReportRow::flag(
            case.name,
            "rejected",
            "validation",
            rejected,
        )]);
    }
    let spec = load_problem_with(text, overrides)?;
    match case.name {
        "put" => put_rows(case, &spec),
        "const" => const_rows(case, &spec),
        "stopall" => stopall_rows(case, &spec),
        "homog2" => homog2_rows(case, &spec),
        "strangle2" => strangle2_rows(case, &spec),
        _ => generic_rows(case.name, &spec),
    }
}

/// Checks for a problem file. Files named like a corpus case get that
/// case's checks; others get the audit and a Monte Carlo policy check at the
/// quartiles of the grid in every regime.
pub fn verify_problem(
    name: &str,
    text: &str,
    overrides: &[(String, String)],
) -> Result<Vec<ReportRow>, VerifyError> {
    if let Some(case) = find_case(name) {
        if case.oracle == OracleKind::MustReject {
            load_problem_with(text, overrides)?;
        }
        return run_with_text(case, text, overrides);
    }
    let spec = load_problem_with(text, overrides)?;
    generic_rows(name, &spec)
}

fn solve_default(spec: &ProblemSpec) -> Result<Solution<f64>, VerifyError> {
    Ok(crate::hjb::solve_problem::<f64>(spec)?)
}

fn generic_rows(name: &str, spec: &ProblemSpec) -> Result<Vec<ReportRow>, VerifyError> {
    let sol = solve_default(spec)?;
    let mut rows = audit_rows(name, "solve", spec, &sol)?;
    let grid = &sol.field.grid;
    let points: Vec<StartState> = (0..spec.k())
        .flat_map(|i| {
            [0.25, 0.5, 0.75]
                .into_iter()
                .map(move |q| StartState::new(grid.lo() + q * (grid.hi() - grid.lo()), 0.0, i))
        })
        .collect();
    let settings = McSettings::from_problem(spec);
    rows.extend(policy_value_check(
        name,
        spec,
        &sol.field,
        &points,
        &[0.9, 1.1],
        &settings,
    )?);
    Ok(rows)
}

/// Put parameters read back from a single-regime problem with drift `μx`,
/// volatility `σx`, constant discount and cost `−max(K − x, 0)`.
fn put_oracle(spec: &ProblemSpec) -> Result<PutOracle<f64>, VerifyError> {
    let mu = spec.diffusion.drift(1.0, 0)?;
    let sigma = spec.diffusion.vol(1.0, 0)?;
    let r0 = spec.payoff.discount(1.0, 0)?;
    let strike = spec.payoff.stop_reward(0.0, 0)?;
    PutOracle::new(mu, sigma, r0, strike)
}

/// Error of the grid solution of a put problem against the closed form at
/// one grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderRung {
    pub m: usize,
    pub sup_error: f64,
    /// Relative error of the exercise boundary.
    pub boundary_error: f64,
    pub converged: bool,
}

pub fn put_grid_ladder(spec: &ProblemSpec, ms: &[usize]) -> Result<Vec<LadderRung>, VerifyError> {
    let oracle = put_oracle(spec)?;
    ms.iter()
        .map(|&m| {
            let grid = Grid1D::for_problem(spec, m)?;
            let sol = solve_homogeneous(spec, &grid, &SolveOptions::for_grid(spec, m))?;
            Ok(put_rung(&oracle, &sol, m))
        })
        .collect()
}

fn put_rung(oracle: &PutOracle<f64>, sol: &Solution<f64>, m: usize) -> LadderRung {
    let f = &sol.field;
    let sup_error = (0..f.grid.len())
        .map(|n| (f.value(n, 0, 0) - oracle.value(f.grid.x(n))).abs())
        .fold(0.0, f64::max);
    let boundary = sol
        .boundary
        .for_regime(0)
        .iter()
        .map(|p| p.x)
        .fold(f64::NAN, f64::max);
    LadderRung {
        m,
        sup_error,
        boundary_error: (boundary - oracle.boundary).abs() / oracle.boundary,
        converged: sol.converged,
    }
}

fn put_rows(case: &BenchmarkCase, spec: &ProblemSpec) -> Result<Vec<ReportRow>, VerifyError> {
    let name = case.name;
    let oracle = put_oracle(spec)?;
    let sol = solve_default(spec)?;
    let mut rows = audit_rows(name, "solve", spec, &sol)?;
    let rung = put_rung(&oracle, &sol, spec.grid.m);
    let m_label = format!("M={}", spec.grid.m);
    rows.push(ReportRow::at_most(
        name,
        "sup_error",
        &m_label,
        0.0,
        rung.sup_error,
        case.tolerance("sup_error") * oracle.strike,
    ));
    rows.push(ReportRow::at_most(
        name,
        "boundary_rel",
        &m_label,
        0.0,
        rung.boundary_error,
        case.tolerance("boundary_rel"),
    ));

    let m = spec.grid.m;
    let ladder = put_grid_ladder(spec, &[m / 4, m / 2])?;
    let mut errors: Vec<f64> = ladder.iter().map(|r| r.sup_error).collect();
    errors.push(rung.sup_error);
    for r in &ladder {
        rows.push(ReportRow::at_most(
            name,
            "ladder_sup_error",
            &format!("M={}", r.m),
            0.0,
            r.sup_error,
            f64::INFINITY,
        ));
    }
    rows.push(ReportRow::flag(
        name,
        "ladder_monotone",
        &format!("M={},{},{}", m / 4, m / 2, m),
        errors.windows(2).all(|w| w[1] < w[0]),
    ));

    let settings = McSettings::from_problem(spec);
    let points: Vec<StartState> = [0.6, 1.0, 1.5]
        .into_iter()
        .map(|x| StartState::new(x, 0.0, 0))
        .collect();
    rows.extend(policy_value_check(
        name,
        spec,
        &sol.field,
        &points,
        &[0.9, 1.1],
        &settings,
    )?);
    rows.push(dpp_statistical_check(
        name, spec, &sol.field, points[1], 0.1, &settings,
    )?);
    Ok(rows)
}

fn const_rows(case: &BenchmarkCase, spec: &ProblemSpec) -> Result<Vec<ReportRow>, VerifyError> {
    let name = case.name;
    let sol = solve_default(spec)?;
    let mut rows = audit_rows(name, "solve", spec, &sol)?;
    let c = spec.payoff.stop_reward(0.0, 0)?;
    rows.push(ReportRow::close(
        name,
        "value_constant",
        "all nodes",
        c,
        farthest_from(&sol.field, c),
        case.tolerance("value_constant"),
    ));

    let tol = case.tolerance("mc_policy");
    let settings = McSettings::from_problem(spec);
    let field_policy = crate::hjb::extract_policy(&sol.field);
    let band = ThresholdRule::new(vec![vec![(0.2, 0.8)]; spec.k()]);
    let rules: [(&str, &dyn StoppingRule); 4] = [
        ("immediate", &Immediate),
        ("stop_at_1", &StopAtTime(1.0)),
        ("threshold_0.2_0.8", &band),
        ("field_policy", &field_policy),
    ];
    let dyn_rules: Vec<&dyn StoppingRule> = rules.iter().map(|r| r.1).collect();
    for p in [StartState::new(0.5, 0.0, 0), StartState::new(0.3, 0.0, 1)] {
        let est = mc_estimate_policies(spec, p, &dyn_rules, &settings)?;
        for ((label, _), e) in rules.iter().zip(est) {
            rows.push(ReportRow::close(
                name,
                &format!("mc_{label}"),
                &point_label(&p),
                c,
                e.mean,
                tol,
            ));
        }
    }
    Ok(rows)
}

fn stopall_rows(case: &BenchmarkCase, spec: &ProblemSpec) -> Result<Vec<ReportRow>, VerifyError> {
    let name = case.name;
    let sol = solve_default(spec)?;
    let mut rows = audit_rows(name, "solve", spec, &sol)?;
    let f = &sol.field;
    rows.push(ReportRow::close(
        name,
        "value_zero",
        "all nodes",
        0.0,
        farthest_from(f, 0.0),
        case.tolerance("value_zero"),
    ));
    let all_stopped = (0..f.k).all(|i| (0..f.grid.len()).all(|n| f.stop_flag(n, 0, i)));
    rows.push(ReportRow::flag(name, "all_stopped", "all nodes", all_stopped));

    let settings = McSettings::from_problem(spec);
    let field_policy = crate::hjb::extract_policy(f);
    let rules: [&dyn StoppingRule; 2] = [&Immediate, &field_policy];
    let p = StartState::new(0.25, 0.0, 1);
    let est = mc_estimate_policies(spec, p, &rules, &settings)?;
    for (label, e) in ["mc_immediate", "mc_field_policy"].into_iter().zip(est) {
        rows.push(ReportRow::close(
            name,
            label,
            &point_label(&p),
            0.0,
            e.mean,
            case.tolerance("mc_policy"),
        ));
    }
    rows.push(dpp_statistical_check(name, spec, f, p, 0.1, &settings)?);
    Ok(rows)
}

fn homog2_rows(case: &BenchmarkCase, spec: &ProblemSpec) -> Result<Vec<ReportRow>, VerifyError> {
    let name = case.name;
    let m = spec.grid.m;
    let grid = Grid1D::for_problem(spec, m)?;
    let opts = SolveOptions::for_grid(spec, m);
    let hom = solve_homogeneous(spec, &grid, &opts)?;
    let ages = AgeGrid::for_problem(spec)?;
    let inh = solve_truncated_inhomogeneous(spec, &grid, &ages, &opts)?;
    let mut rows = audit_rows(name, "homogeneous", spec, &hom)?;
    rows.extend(audit_rows(name, "age", spec, &inh)?);

    let slice_gap = (0..spec.k())
        .flat_map(|i| (0..grid.len()).map(move |n| (i, n)))
        .map(|(i, n)| (hom.field.value(n, 0, i) - inh.field.value(n, 0, i)).abs())
        .fold(0.0, f64::max);
    rows.push(ReportRow::at_most(
        name,
        "slice_agreement",
        "t=0",
        0.0,
        slice_gap,
        case.tolerance("slice_agreement"),
    ));
    let half = ages.n() / 2;
    rows.push(ReportRow::at_most(
        name,
        "age_variation",
        &format!("t<={}", ages.t(half)),
        0.0,
        inh.field.age_variation(0..=half),
        case.tolerance("age_variation"),
    ));
    rows.push(ReportRow::at_most(
        name,
        "outer_iterations",
        "fixed point",
        0.0,
        inh.outer_iterations() as f64,
        case.tolerance("outer_iterations"),
    ));
    rows.push(ReportRow::flag(
        name,
        "outer_monotone",
        "fixed point",
        inh.outer_monotone(),
    ));
    Ok(rows)
}

/// Spot points of the two-regime strangle case.
pub(crate) const STRANGLE_POINTS: [(f64, usize); 5] = [(0.5, 0), (0.8, 1), (1.0, 0), (1.5, 1), (2.5, 0)];

fn strangle2_rows(case: &BenchmarkCase, spec: &ProblemSpec) -> Result<Vec<ReportRow>, VerifyError> {
    let name = case.name;
    let sol = solve_default(spec)?;
    let mut rows = audit_rows(name, "solve", spec, &sol)?;
    let settings = McSettings::from_problem(spec);
    let points: Vec<StartState> = STRANGLE_POINTS
        .iter()
        .map(|&(x, i)| StartState::new(x, 0.0, i))
        .collect();
    rows.extend(policy_value_check(
        name,
        spec,
        &sol.field,
        &points,
        &[0.9, 1.1],
        &settings,
    )?);
    rows.push(dpp_statistical_check(
        name, spec, &sol.field, points[2], 0.1, &settings,
    )?);
    Ok(rows)
}

/// The node value farthest from `c`.
fn farthest_from(field: &ValueField<f64>, c: f64) -> f64 {
    let mut worst = c;
    for level in 0..field.levels() {
        for i in 0..field.k {
            for &v in field.slice(level, i) {
                if (v - c).abs() > (worst - c).abs() {
                    worst = v;
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_files_load_or_reject() {
        for case in corpus() {
            let loaded = case.spec();
            match case.oracle {
                OracleKind::MustReject => {
                    let report = loaded.expect_err(case.name);
                    assert!(report.mentions("discount guard"), "{}: {report}", case.name);
                }
                _ => {
                    loaded.unwrap_or_else(|e| panic!("{}: {e}", case.name));
                }
            }
            assert!(!case.expectations.is_empty());
            assert!(case.expectations.iter().all(|e| !e.note.is_empty()));
        }
    }

    #[test]
    fn stopall_case_passes() {
        let rows = run_case(find_case("stopall").unwrap(), &[]).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:#?}");
    }

    #[test]
    fn must_reject_cases_pass() {
        for name in ["example1", "bad_r"] {
            let rows = run_case(find_case(name).unwrap(), &[]).unwrap();
            assert_eq!(rows.len(), 1);
            assert!(rows[0].pass, "{name}");
        }
    }
}
