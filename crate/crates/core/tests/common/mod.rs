#![allow(dead_code)]

use switchstop::probcfg::{load_problem, ProblemSpec};

pub const PUT: &str = include_str!("../../corpus/put.prob");
pub const CONST: &str = include_str!("../../corpus/const.prob");
pub const STOPALL: &str = include_str!("../../corpus/stopall.prob");
pub const HOMOG2: &str = include_str!("../../corpus/homog2.prob");
pub const STRANGLE2: &str = include_str!("../../corpus/strangle2.prob");
pub const EXAMPLE1: &str = include_str!("../../corpus/example1.prob");
pub const BAD_R: &str = include_str!("../../corpus/bad_r.prob");

pub fn spec(text: &str) -> ProblemSpec {
    load_problem(text).unwrap_or_else(|e| panic!("{e}"))
}

/// Two-sided Kolmogorov–Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let f = cdf(s);
            (f - j as f64 / n).abs().max(((j + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Least-squares slope of `log y` on `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}
