use rayon::prelude::*;

use super::{
    evaluate_payoff, simulate_path_into, DiffusionPath, PathPoint, SdeError, StartState, StoppingRule,
};
use crate::probcfg::ProblemSpec;
use crate::rng::path_rng;

/// Paths per work unit. Chunks are reduced in a fixed tree order, so the
/// estimate does not depend on the number of worker threads.
const CHUNK: usize = 512;
const CENSOR_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl McSettings {
    /// The problem file's `mc.*` settings.
    pub fn from_problem(spec: &ProblemSpec) -> Self {
        Self {
            n_paths: spec.mc.paths,
            dt: spec.mc.dt,
            horizon: spec.mc.horizon,
            seed: spec.mc.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub censored_fraction: f64,
}

/// One realised path functional.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub censored: bool,
}

/// Welford mean/variance with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WelfordAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
    censored: u64,
}

impl WelfordAccumulator {
    pub fn push(&mut self, sample: Sample) {
        self.n += 1;
        let delta = sample.value - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (sample.value - self.mean);
        self.censored += u64::from(sample.censored);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = if delta == 0.0 {
            self.mean
        } else {
            self.mean + delta * (other.n as f64 / n as f64)
        };
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        Self {
            n,
            mean,
            m2,
            censored: self.censored + other.censored,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let var = (self.m2 / (self.n - 1) as f64).max(0.0);
        (var / self.n as f64).sqrt()
    }

    fn estimate(&self, seed: u64) -> McEstimate {
        McEstimate {
            mean: self.mean,
            stderr: self.stderr(),
            n_paths: self.n as usize,
            seed,
            censored_fraction: if self.n == 0 {
                0.0
            } else {
                self.censored as f64 / self.n as f64
            },
        }
    }
}

fn tree_merge(mut parts: Vec<Vec<WelfordAccumulator>>) -> Vec<WelfordAccumulator> {
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.iter().zip(b).map(|(x, y)| x.merge(*y)).collect(),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    parts.pop().unwrap_or_default()
}

/// Generic Monte Carlo driver: path `p` uses random stream `p`.
///
/// `keep_going` sees each new mesh point together with `n_out` per-path
/// flags (cleared at the start of every path) and may end path generation
/// early by returning false. `eval` writes `n_out` samples per path, so all
/// outputs share the same random numbers.
pub fn mc_run<K, E>(
    problem: &ProblemSpec,
    start: StartState,
    settings: &McSettings,
    n_out: usize,
    keep_going: K,
    eval: E,
) -> Result<Vec<McEstimate>, SdeError>
where
    K: Fn(&PathPoint, &mut [bool]) -> bool + Sync,
    E: Fn(&DiffusionPath, &mut [Sample]) -> Result<(), SdeError> + Sync,
{
    if settings.n_paths < 2 {
        return Err(SdeError::InvalidArgument("need at least two paths".into()));
    }
    let n_chunks = settings.n_paths.div_ceil(CHUNK);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut accs = vec![WelfordAccumulator::default(); n_out];
            let mut path = DiffusionPath::default();
            let mut samples = vec![Sample::default(); n_out];
            let mut flags = vec![false; n_out];
            let end = ((c + 1) * CHUNK).min(settings.n_paths);
            for p in c * CHUNK..end {
                let mut rng = path_rng(settings.seed, p as u64);
                flags.iter_mut().for_each(|f| *f = false);
                simulate_path_into(
                    problem,
                    start,
                    settings.dt,
                    settings.horizon,
                    &mut rng,
                    &mut path,
                    |pt| keep_going(pt, &mut flags),
                )?;
                eval(&path, &mut samples)?;
                for (acc, s) in accs.iter_mut().zip(&samples) {
                    acc.push(*s);
                }
            }
            Ok(accs)
        })
        .collect::<Result<Vec<_>, SdeError>>()?;
    let estimates: Vec<McEstimate> = tree_merge(parts)
        .iter()
        .map(|a| a.estimate(settings.seed))
        .collect();
    for e in &estimates {
        if e.censored_fraction > CENSOR_WARN_FRACTION {
            log::warn!(
                "{:.2}% of paths were censored at horizon {}; the estimate omits their discounted tail",
                100.0 * e.censored_fraction,
                settings.horizon
            );
        }
    }
    Ok(estimates)
}

/// Estimates `J(x, t, i, τ)` for each policy on shared paths.
pub fn mc_estimate_policies(
    problem: &ProblemSpec,
    start: StartState,
    policies: &[&dyn StoppingRule],
    settings: &McSettings,
) -> Result<Vec<McEstimate>, SdeError> {
    let keep_going = |p: &PathPoint, stopped: &mut [bool]| {
        for (done, rule) in stopped.iter_mut().zip(policies) {
            *done = *done || rule.should_stop(p);
        }
        !stopped.iter().all(|&d| d)
    };
    mc_run(
        problem,
        start,
        settings,
        policies.len(),
        keep_going,
        |path, out| {
            for (slot, rule) in out.iter_mut().zip(policies) {
                let o = evaluate_payoff(path, *rule, &problem.payoff)?;
                *slot = Sample {
                    value: o.value,
                    censored: o.censored,
                };
            }
            Ok(())
        },
    )
}

/// Estimates `J(x, t, i, τ)` for one policy.
pub fn mc_estimate(
    problem: &ProblemSpec,
    start: StartState,
    policy: &dyn StoppingRule,
    settings: &McSettings,
) -> Result<McEstimate, SdeError> {
    Ok(mc_estimate_policies(problem, start, &[policy], settings)?[0])
}
