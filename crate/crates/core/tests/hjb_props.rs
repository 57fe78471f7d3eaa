mod common;

use common::spec;
use proptest::prelude::*;
use switchstop::hjb::{
    assemble_operator, continuation_step, residual_check, solve_homogeneous, solve_homogeneous_ordered,
    solve_truncated_inhomogeneous, AgeGrid, Grid1D, Solution, SolveOptions,
};
use switchstop::probcfg::ProblemSpec;

/// Random two-regime problem on [−2, 2] with a kinked reward.
#[derive(Debug, Clone, Copy)]
struct Data {
    drift: f64,
    vol: f64,
    pi: f64,
    h: f64,
    lambda: f64,
    r: f64,
}

fn data() -> impl Strategy<Value = Data> {
    (
        -1.0f64..1.0,
        0.2f64..1.2,
        -0.5f64..1.0,
        -1.0f64..0.5,
        0.1f64..3.0,
        0.1f64..1.0,
    )
        .prop_map(|(drift, vol, pi, h, lambda, r)| Data {
            drift,
            vol,
            pi,
            h,
            lambda,
            r,
        })
}

fn problem_text(d: &Data, m: usize) -> String {
    format!(
        "k = 2
domain.a = -inf
domain.b = inf
region.lo = -2
region.hi = 2
grid.M = {m}
alpha.1 = {a} - 0.3*x
alpha.2 = -({a}) + 0.2*x
sigma.1 = {s}
sigma.2 = {s} + 0.1*x^2
pi.1 = {pi} - x^2
pi.2 = {pi} - 0.5*x^2 + 0.2*x
h.1 = {h} - max(x, 0)
h.2 = {h} + max(-x - 0.5, 0)
r.1 = {r}
r.2 = {r} + 0.05*x^2
eps.1 = {e}
eps.2 = {e}
lambda.1 = {l}
lambda.2 = {l} * 0.5
p.1.2 = 1
p.2.1 = 1
",
        a = d.drift,
        s = d.vol,
        pi = d.pi,
        h = d.h,
        r = d.r,
        l = d.lambda,
        e = d.r / 2.0,
    )
}

fn solve(p: &ProblemSpec) -> Solution<f64> {
    let grid = Grid1D::for_problem(p, p.grid.m).unwrap();
    solve_homogeneous(p, &grid, &SolveOptions::for_grid(p, p.grid.m)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complementarity_and_obstacle(d in data()) {
        let p = spec(&problem_text(&d, 80));
        let sol = solve(&p);
        prop_assert!(sol.converged);
        let f = &sol.field;
        let tol = 10.0 * p.solver.tol;
        let m = f.grid.m();
        let grid = f.grid;
        for i in 0..2 {
            let op = assemble_operator(&p, &grid, i, 0.0).unwrap();
            let v = f.slice(0, i);
            let mh = f.minus_h(i);
            let other = f.slice(0, 1 - i);
            // Endpoints hold the pinned values bit for bit.
            prop_assert_eq!(v[0].to_bits(), mh[0].to_bits());
            prop_assert_eq!(v[m].to_bits(), mh[m].to_bits());
            for n in 0..=m {
                prop_assert!(v[n] >= mh[n] - 1e-12);
            }
            for n in 1..m {
                let pi = p.payoff.running(grid.x(n), i).unwrap();
                let pde = (op.apply(v, |_| other[n], n) - pi) / op.diag[n];
                let gap = v[n] - mh[n];
                if f.stop_flag(n, 0, i) {
                    prop_assert!(gap.abs() <= f.tol_stop && pde >= -tol, "n={} gap={} pde={}", n, gap, pde);
                } else {
                    prop_assert!(pde.abs() <= tol && gap >= -tol, "n={} gap={} pde={}", n, gap, pde);
                }
            }
        }
        let audit = residual_check(f, &p).unwrap();
        prop_assert!(audit.max <= tol, "{:?}", audit);
    }

    #[test]
    fn constants_only_see_the_discount(d in data(), c in -5.0f64..5.0, x in -1.9f64..1.9) {
        let p = spec(&problem_text(&d, 40));
        let grid = Grid1D::<f64>::for_problem(&p, 40).unwrap();
        let n = grid.locate(x).0.max(1);
        for i in 0..2 {
            let op = assemble_operator(&p, &grid, i, 0.0).unwrap();
            let v = vec![c; grid.len()];
            let r = p.payoff.discount(grid.x(n), i).unwrap();
            let out = op.apply(&v, |_| c, n);
            prop_assert!((out - r * c).abs() <= 1e-9 * (1.0 + c.abs()) * op.diag[n]);
        }
    }

    #[test]
    fn gauss_seidel_update_is_monotone(d in data(), x in -1.9f64..1.9, bump in 0.0f64..2.0, which in 0usize..3) {
        // Update u = (Π − lower·v_{n−1} − upper·v_{n+1} + λ·w)/diag.
        let p = spec(&problem_text(&d, 40));
        let grid = Grid1D::<f64>::for_problem(&p, 40).unwrap();
        let n = grid.locate(x).0.max(1);
        for i in 0..2 {
            let op = assemble_operator(&p, &grid, i, 0.0).unwrap();
            let update = |left: f64, right: f64, w: f64| {
                let mut s = -op.lower[n] * left - op.upper[n] * right;
                for (j, &rate) in op.coupling.iter().enumerate() {
                    if j != i {
                        s += rate * w;
                    }
                }
                s / op.diag[n]
            };
            let base = update(0.3, -0.2, 0.1);
            let bumped = match which {
                0 => update(0.3 + bump, -0.2, 0.1),
                1 => update(0.3, -0.2 + bump, 0.1),
                _ => update(0.3, -0.2, 0.1 + bump),
            };
            prop_assert!(bumped >= base);
            prop_assert!(op.lower[n] <= 0.0 && op.upper[n] <= 0.0 && op.coupling.iter().all(|&c| c >= 0.0));
            let off: f64 = -op.lower[n] - op.upper[n] + op.total_rate();
            prop_assert!(op.diag[n] > off);
        }
    }

    #[test]
    fn value_is_monotone_in_the_data(d in data(), dpi in 0.0f64..0.5, dh in 0.0f64..0.5) {
        let base = solve(&spec(&problem_text(&d, 60)));
        let richer = solve(&spec(&problem_text(&Data { pi: d.pi + dpi, ..d }, 60)));
        let cheaper = solve(&spec(&problem_text(&Data { h: d.h - dh, ..d }, 60)));
        for i in 0..2 {
            for n in 0..base.field.grid.len() {
                let v = base.field.value(n, 0, i);
                prop_assert!(richer.field.value(n, 0, i) >= v - 1e-8);
                prop_assert!(cheaper.field.value(n, 0, i) >= v - 1e-8);
            }
        }
    }

    #[test]
    fn regime_sweep_order_does_not_matter(d in data()) {
        let p = spec(&problem_text(&d, 60));
        let grid = Grid1D::<f64>::for_problem(&p, 60).unwrap();
        let opts = SolveOptions::for_grid(&p, 60);
        let a = solve_homogeneous_ordered(&p, &grid, &opts, &[0, 1]).unwrap();
        let b = solve_homogeneous_ordered(&p, &grid, &opts, &[1, 0]).unwrap();
        for i in 0..2 {
            for n in 0..grid.len() {
                prop_assert!((a.field.value(n, 0, i) - b.field.value(n, 0, i)).abs() <= 1e-7);
            }
        }
    }
}

#[test]
fn single_precision_solve_tracks_double() {
    let d = Data {
        drift: 0.2,
        vol: 0.6,
        pi: 0.4,
        h: -0.2,
        lambda: 1.0,
        r: 0.4,
    };
    let p = spec(&problem_text(&d, 100));
    let g64 = Grid1D::<f64>::for_problem(&p, 100).unwrap();
    let g32 = Grid1D::<f32>::for_problem(&p, 100).unwrap();
    let s64 = solve_homogeneous(&p, &g64, &SolveOptions::for_grid(&p, 100)).unwrap();
    let opts32 = SolveOptions {
        tol: 1e-6f32,
        tol_stop: 1e-5,
        ..SolveOptions::for_grid(&p, 100)
    };
    let s32 = solve_homogeneous(&p, &g32, &opts32).unwrap();
    assert!(s32.converged);
    for i in 0..2 {
        for n in 0..g64.len() {
            let (a, b) = (s64.field.value(n, 0, i), s32.field.value(n, 0, i) as f64);
            assert!((a - b).abs() < 1e-4, "n={n} i={i}: {a} vs {b}");
        }
    }
}

#[test]
fn residual_check_flags_a_tampered_node() {
    let d = Data {
        drift: -0.3,
        vol: 0.5,
        pi: 0.6,
        h: 0.1,
        lambda: 2.0,
        r: 0.3,
    };
    let p = spec(&problem_text(&d, 80));
    let mut sol = solve(&p);
    let before = residual_check(&sol.field, &p).unwrap();
    assert!(before.max <= 10.0 * p.solver.tol);
    sol.field.slice_mut(0, 1)[40] += 1e-6;
    let after = residual_check(&sol.field, &p).unwrap();
    assert!(after.max > 1e-8, "{after:?}");
    assert_eq!(after.regime, 1);
    assert!((after.x - sol.field.grid.x(40)).abs() <= sol.field.grid.dx() + 1e-12);
}

fn age_problem() -> ProblemSpec {
    spec(
        "k = 2
domain.a = -inf
domain.b = inf
region.lo = -2
region.hi = 2
grid.M = 80
grid.N = 60
upsilon = 12
alpha.1 = -0.2*x
alpha.2 = 0.1
sigma.1 = 0.6
sigma.2 = 0.8
pi.1 = 0.8 - x^2
pi.2 = 0.3 - 0.5*x^2
h.1 = 0.4
h.2 = 0.2 + max(x, 0)
r.1 = 0.4
r.2 = 0.5
eps.1 = 0.2
eps.2 = 0.2
lambda.1 = 0.5 + t
lambda.2 = 1/(1 + t)
p.1.2 = 1
p.2.1 = 1
",
    )
}

#[test]
fn one_step_continuation_reproduces_the_field() {
    let p = age_problem();
    let grid = Grid1D::<f64>::for_problem(&p, p.grid.m).unwrap();
    let ages = AgeGrid::<f64>::for_problem(&p).unwrap();
    let sol = solve_truncated_inhomogeneous(&p, &grid, &ages, &SolveOptions::for_grid(&p, p.grid.m)).unwrap();
    assert!(sol.converged);
    let dt = ages.dt();
    for level in [0, ages.n() / 3, ages.n() - 1] {
        let step = continuation_step(&p, &sol.field, level, dt).unwrap();
        for (i, row) in step.iter().enumerate() {
            for (n, &u) in row.iter().enumerate() {
                let v = sol.field.value(n, level, i);
                assert!(
                    (u - v).abs() <= 1e-6 * dt.max(1.0),
                    "level {level} i {i} n {n}: {u} vs {v}"
                );
            }
        }
    }
    let audit = residual_check(&sol.field, &p).unwrap();
    assert!(audit.max <= 10.0 * p.solver.tol, "{audit:?}");
}

#[test]
fn homogeneous_continuation_step_is_a_fixed_point() {
    let d = Data {
        drift: 0.1,
        vol: 0.7,
        pi: 0.2,
        h: 0.0,
        lambda: 0.7,
        r: 0.25,
    };
    let p = spec(&problem_text(&d, 80));
    let sol = solve(&p);
    for delta in [0.01, 0.1, 1.0] {
        let step = continuation_step(&p, &sol.field, 0, delta).unwrap();
        for (i, row) in step.iter().enumerate() {
            for (n, &u) in row.iter().enumerate() {
                let v = sol.field.value(n, 0, i);
                assert!((u - v).abs() <= 1e-7, "δ {delta} i {i} n {n}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn age_dependence_survives_when_hazards_vary() {
    let p = age_problem();
    let grid = Grid1D::<f64>::for_problem(&p, p.grid.m).unwrap();
    let ages = AgeGrid::<f64>::for_problem(&p).unwrap();
    let sol = solve_truncated_inhomogeneous(&p, &grid, &ages, &SolveOptions::for_grid(&p, p.grid.m)).unwrap();
    assert!(sol.field.age_variation(0..=ages.n() / 2) > 1e-3);
    assert!(sol.outer_monotone(), "{:?}", sol.outer_history);
}
