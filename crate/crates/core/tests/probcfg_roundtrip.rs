mod common;

use proptest::prelude::*;
use switchstop::hjb::solve_problem;
use switchstop::probcfg::{load_problem, load_problem_with, Expression};
use switchstop::sde::{mc_estimate, McSettings, Never, StartState};
use switchstop::verify::{corpus, OracleKind};

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.01f64..20.0).prop_map(|v| format!("{v}")),
        (1u32..100).prop_map(|v| v.to_string()),
        Just("x".to_string()),
        Just("t".to_string()),
    ]
}

fn source() -> impl Strategy<Value = String> {
    leaf().prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            (
                inner.clone(),
                prop_oneof![Just("+"), Just("-"), Just("*"), Just("/"), Just("^")],
                inner.clone()
            )
                .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * -({b})")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.clone().prop_map(|a| format!("({a})")),
            (
                prop_oneof![Just("exp"), Just("log"), Just("sqrt"), Just("abs")],
                inner.clone()
            )
                .prop_map(|(f, a)| format!("{f}({a})")),
            (
                prop_oneof![Just("min"), Just("max"), Just("pow")],
                inner.clone(),
                inner
            )
                .prop_map(|(f, a, b)| format!("{f}({a}, {b})")),
        ]
    })
}

fn agree(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a - b).abs() <= 1e-14 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_reparse_equivalently(
        src in source(),
        points in prop::collection::vec((-5.0f64..5.0, 0.0f64..10.0), 100),
    ) {
        let e = Expression::parse(&src).unwrap();
        let printed = e.to_string();
        let again = Expression::parse(&printed).unwrap();
        prop_assert_eq!(again.to_string(), printed.clone());
        for (x, t) in points {
            match (e.eval(x, t), again.eval(x, t)) {
                (Ok(a), Ok(b)) => prop_assert!(agree(a, b), "{} vs {} at x={}, t={}: {} / {}", a, b, x, t, src, printed),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?} for {} / {}", a, b, src, printed),
            }
        }
    }

    #[test]
    fn garbage_never_panics(text in "[ -~\\n]{0,200}") {
        let _ = load_problem(&text);
        let _ = Expression::parse(&text);
    }
}

#[test]
fn corpus_loads_are_deterministic() {
    for case in corpus() {
        let a = load_problem(case.text);
        let b = load_problem(case.text);
        assert_eq!(a, b, "{}", case.name);
        assert_eq!(a.is_ok(), case.oracle != OracleKind::MustReject, "{}", case.name);
    }
}

#[test]
fn loading_twice_gives_identical_outputs() {
    let a = load_problem(common::CONST).unwrap();
    let b = load_problem(common::CONST).unwrap();
    let sa = solve_problem::<f64>(&a).unwrap();
    let sb = solve_problem::<f64>(&b).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    sa.field.write_csv(&mut ca).unwrap();
    sb.field.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);

    let settings = McSettings {
        n_paths: 1000,
        dt: 1e-3,
        horizon: 20.0,
        seed: 5,
    };
    let start = StartState::new(0.5, 0.0, 0);
    let ea = mc_estimate(&a, start, &Never, &settings).unwrap();
    let eb = mc_estimate(&b, start, &Never, &settings).unwrap();
    assert_eq!(ea.mean.to_bits(), eb.mean.to_bits());
    assert_eq!(ea.stderr.to_bits(), eb.stderr.to_bits());
}

#[test]
fn overrides_beat_file_keys_and_defaults() {
    let base = load_problem(common::PUT).unwrap();
    assert_eq!(base.grid.m, 2000);
    let over = load_problem_with(
        common::PUT,
        &[
            ("grid.M".into(), "4000".into()),
            ("solver.tol".into(), "1e-9".into()),
        ],
    )
    .unwrap();
    assert_eq!(over.grid.m, 4000);
    assert_eq!(over.solver.tol, 1e-9);
    let params = over.effective_parameters();
    assert!(params.contains(&("grid.M", "4000".to_string())));
}

#[test]
fn guard_rejects_both_degenerate_discounts() {
    for text in [common::EXAMPLE1, common::BAD_R] {
        let report = load_problem(text).unwrap_err();
        assert!(report.mentions("discount guard"), "{report}");
        assert!(report.to_string().contains("does not exceed eps"), "{report}");
    }
    let fixed = common::BAD_R.replace("r.1 = x", "r.1 = 0.05");
    assert!(load_problem(&fixed).is_ok());
}
