mod common;

use common::{ks_critical_1pct, ks_statistic};
use proptest::prelude::*;
use rand::distr::Open01;
use rand::Rng;
use switchstop::chain::RegimeChainSpec;
use switchstop::probcfg::Expression;
use switchstop::rng::path_rng;

const N: usize = 100_000;

fn expr(s: &str) -> Expression {
    Expression::parse(s).unwrap()
}

/// First jump times out of regime 1 over `N` seeded paths.
fn first_jumps(chain: &RegimeChainSpec, horizon: f64, seed: u64) -> Vec<f64> {
    (0..N as u64)
        .map(|p| {
            let path = chain.simulate_chain_seeded(0, 0.0, horizon, seed, p).unwrap();
            path.jump_times[0]
        })
        .collect()
}

#[test]
fn constant_hazard_holding_times_are_exponential() {
    // Regime 2 is practically absorbing so each path stops after one jump.
    let lambda = 1.7;
    let chain = RegimeChainSpec::constant(&[lambda, 1e-9], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let mut s = first_jumps(&chain, 60.0 / lambda, 17);
    let d = ks_statistic(&mut s, |t| 1.0 - (-lambda * t).exp());
    assert!(d < ks_critical_1pct(N), "KS {d}");
}

#[test]
fn linear_hazard_first_jump_law() {
    let chain = RegimeChainSpec::new(
        vec![expr("t"), expr("0")],
        vec![vec![None, Some(expr("1"))], vec![Some(expr("1")), None]],
    )
    .unwrap();
    let mut s = first_jumps(&chain, 20.0, 23);
    let d = ks_statistic(&mut s, |t| 1.0 - (-t * t / 2.0).exp());
    assert!(d < ks_critical_1pct(N), "KS {d}");
}

#[test]
fn linear_hazard_respects_initial_age() {
    // Started at age 1 the survival is exp(−((1+s)² − 1)/2).
    let chain = RegimeChainSpec::new(
        vec![expr("t"), expr("0")],
        vec![vec![None, Some(expr("1"))], vec![Some(expr("1")), None]],
    )
    .unwrap();
    let n = 20_000;
    let mut s: Vec<f64> = (0..n as u64)
        .map(|p| {
            chain
                .simulate_chain_seeded(0, 1.0, 20.0, 5, p)
                .unwrap()
                .jump_times[0]
        })
        .collect();
    let d = ks_statistic(&mut s, |t| 1.0 - (-((1.0 + t).powi(2) - 1.0) / 2.0).exp());
    assert!(d < ks_critical_1pct(n), "KS {d}");
}

fn within_binomial(count: usize, n: usize, p: f64) -> bool {
    let se = (p * (1.0 - p) / n as f64).sqrt();
    (count as f64 / n as f64 - p).abs() <= 3.0 * se
}

#[test]
fn constant_transition_frequencies() {
    let probs = vec![vec![0.0, 0.3, 0.7], vec![0.5, 0.0, 0.5], vec![0.9, 0.1, 0.0]];
    let chain = RegimeChainSpec::constant(&[2.0, 1e-9, 1e-9], &probs).unwrap();
    let mut counts = [0usize; 3];
    for p in 0..N as u64 {
        let path = chain.simulate_chain_seeded(0, 0.0, 40.0, 31, p).unwrap();
        counts[path.states[0]] += 1;
    }
    assert_eq!(counts[0], 0);
    assert!(within_binomial(counts[1], N, 0.3), "{counts:?}");
    assert!(within_binomial(counts[2], N, 0.7), "{counts:?}");
}

#[test]
fn age_dependent_transition_frequencies() {
    // Landing in regime 2 has probability E[exp(−H)] = λ/(λ+1) for H ~ Exp(λ).
    let lambda = 2.0;
    let chain = RegimeChainSpec::new(
        vec![expr("2"), expr("0"), expr("0")],
        vec![
            vec![None, Some(expr("exp(-t)")), Some(expr("1 - exp(-t)"))],
            vec![Some(expr("0.5")), None, Some(expr("0.5"))],
            vec![Some(expr("0.5")), Some(expr("0.5")), None],
        ],
    )
    .unwrap();
    let mut hits = 0;
    for p in 0..N as u64 {
        let path = chain.simulate_chain_seeded(0, 0.0, 40.0, 37, p).unwrap();
        hits += usize::from(path.states[0] == 1);
    }
    assert!(within_binomial(hits, N, lambda / (lambda + 1.0)), "{hits}");
}

#[test]
fn identical_seeds_give_identical_paths() {
    let chain = RegimeChainSpec::new(
        vec![expr("1 + t"), expr("0.5")],
        vec![vec![None, Some(expr("1"))], vec![Some(expr("1")), None]],
    )
    .unwrap();
    for stream in 0..20 {
        let a = chain.simulate_chain_seeded(1, 0.3, 30.0, 99, stream).unwrap();
        let b = chain.simulate_chain_seeded(1, 0.3, 30.0, 99, stream).unwrap();
        assert_eq!(a, b);
        assert!(a.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(a
            .states
            .iter()
            .zip(std::iter::once(&1).chain(&a.states))
            .all(|(s, prev)| s != prev));
    }
    let c = chain.simulate_chain_seeded(1, 0.3, 30.0, 100, 0).unwrap();
    assert_ne!(c, chain.simulate_chain_seeded(1, 0.3, 30.0, 99, 0).unwrap());
}

fn inhomogeneous_chain() -> RegimeChainSpec {
    RegimeChainSpec::new(
        vec![
            expr("0.5 + t^2/(1 + t)"),
            expr("2*exp(-t) + 0.1"),
            expr("sqrt(1 + t)"),
        ],
        vec![
            vec![None, Some(expr("exp(-t)")), Some(expr("1 - exp(-t)"))],
            vec![Some(expr("t/(1 + t)")), None, Some(expr("1/(1 + t)"))],
            vec![Some(expr("0.25")), Some(expr("0.75")), None],
        ],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn holding_time_inverts_cumulative_hazard(j in 0usize..3, t0 in 0.0f64..5.0, u in 0.001f64..0.999) {
        let chain = inhomogeneous_chain();
        let s = chain.sample_holding_time(j, t0, u, 1e3).unwrap();
        let lam = chain.cumulative_hazard(j, t0, s).unwrap();
        prop_assert!((lam + (-u).ln_1p()).abs() <= 1e-8, "{lam}");
    }

    #[test]
    fn transition_weights_are_stochastic(t in 0.0f64..50.0) {
        let chain = inhomogeneous_chain();
        for j in 0..3 {
            let sum: f64 = (0..3).map(|m| chain.trans_prob(j, m, t).unwrap()).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert_eq!(chain.trans_prob(j, j, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn regime_and_age_are_consistent(seed in any::<u64>(), s in 0.0f64..10.0) {
        let chain = inhomogeneous_chain();
        let path = chain.simulate_chain_seeded(2, 0.5, 10.0, seed, 0).unwrap();
        let age = path.age_at(s);
        prop_assert!(age >= 0.0);
        match path.jump_times.iter().rposition(|&nu| nu <= s) {
            None => prop_assert_eq!(age, 0.5 + s),
            Some(n) => {
                prop_assert_eq!(path.regime_at(s), path.states[n]);
                prop_assert_eq!(age, s - path.jump_times[n]);
            }
        }
    }
}

#[test]
fn open_uniforms_never_hit_the_ends() {
    let mut rng = path_rng(1, 2);
    for _ in 0..10_000 {
        let u: f64 = rng.sample(Open01);
        assert!(u > 0.0 && u < 1.0);
    }
}
