//! Sampling and analytic evaluation of the regime chain and its age process.
//!
//! The chain leaves regime `j` after a holding time with hazard `λ_j(age)`,
//! where the age is the time spent in the regime so far, and lands in
//! regime `m ≠ j` with probability `p_{j,m}(age at the jump)`. Regimes are
//! indexed from 0 internally; files and CSV output use 1-based labels.

use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::probcfg::expr::{EvalError, Expression};
use crate::rng::path_rng;

/// Absolute tolerance of the hazard quadrature.
pub const HAZARD_QUAD_TOL: f64 = 1e-12;
/// Maximum panel-splitting depth of the hazard quadrature.
pub const HAZARD_QUAD_DEPTH: u32 = 40;
/// Relative tolerance of the holding-time inversion.
pub const HOLDING_TIME_RTOL: f64 = 1e-10;
/// Sentinel search range as a multiple of the simulation horizon.
pub const SENTINEL_HORIZON_FACTOR: f64 = 10.0;
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("hazard of regime {} is negative ({value}) at age {age}", regime + 1)]
    NegativeHazard { regime: usize, age: f64, value: f64 },
    #[error("transition weights out of regime {} sum to {sum} at holding time {holding}", regime + 1)]
    WeightSum { regime: usize, holding: f64, sum: f64 },
    #[error("self-transition rate requested for regime {}", regime + 1)]
    SelfTransition { regime: usize },
    #[error("regime {} has no other regime to jump to", regime + 1)]
    NoTarget { regime: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("coefficient evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Law of the regime chain: per-regime hazards and per-pair jump weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeChainSpec {
    hazard: Vec<Expression>,
    /// `trans_prob[j][m]`, `None` on the diagonal.
    trans_prob: Vec<Vec<Option<Expression>>>,
}

/// A sampled trajectory of the regime chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub initial_regime: usize,
    /// Age of the initial regime at time 0.
    pub initial_age: f64,
    /// Strictly increasing jump times.
    pub jump_times: Vec<f64>,
    /// Regime entered at each jump.
    pub states: Vec<usize>,
}

impl ChainPath {
    /// Regime at time `s`, right-continuous.
    pub fn regime_at(&self, s: f64) -> usize {
        match self.jump_times.partition_point(|&nu| nu <= s) {
            0 => self.initial_regime,
            n => self.states[n - 1],
        }
    }

    /// Age `ζ_s = s − ν^s`, offset by the initial age before the first jump.
    pub fn age_at(&self, s: f64) -> f64 {
        match self.jump_times.partition_point(|&nu| nu <= s) {
            0 => self.initial_age + s,
            n => s - self.jump_times[n - 1],
        }
    }
}

impl RegimeChainSpec {
    /// `trans_prob` is indexed `[from][to]` and must hold `None` exactly on
    /// the diagonal.
    pub fn new(
        hazard: Vec<Expression>,
        trans_prob: Vec<Vec<Option<Expression>>>,
    ) -> Result<Self, ChainError> {
        let k = hazard.len();
        if k == 0 {
            return Err(ChainError::InvalidArgument("at least one regime".into()));
        }
        if trans_prob.len() != k || trans_prob.iter().any(|row| row.len() != k) {
            return Err(ChainError::InvalidArgument(
                "transition table must be k x k".into(),
            ));
        }
        for (j, row) in trans_prob.iter().enumerate() {
            for (m, p) in row.iter().enumerate() {
                if (j == m) != p.is_none() {
                    return Err(if j == m {
                        ChainError::SelfTransition { regime: j }
                    } else {
                        ChainError::InvalidArgument(format!(
                            "missing transition weight p.{}.{}",
                            j + 1,
                            m + 1
                        ))
                    });
                }
            }
        }
        Ok(Self { hazard, trans_prob })
    }

    /// Constant hazards and weights; `rates` is used for `λ_j` and `probs[j][m]`
    /// for `p_{j,m}` (diagonal ignored).
    pub fn constant(rates: &[f64], probs: &[Vec<f64>]) -> Result<Self, ChainError> {
        let k = rates.len();
        let hazard = rates.iter().map(|&l| Expression::constant(l)).collect();
        let trans_prob = (0..k)
            .map(|j| {
                (0..k)
                    .map(|m| (j != m).then(|| Expression::constant(probs[j][m])))
                    .collect()
            })
            .collect();
        Self::new(hazard, trans_prob)
    }

    pub fn k(&self) -> usize {
        self.hazard.len()
    }

    pub fn hazard_expr(&self, j: usize) -> &Expression {
        &self.hazard[j]
    }

    pub fn trans_prob_expr(&self, j: usize, m: usize) -> Option<&Expression> {
        self.trans_prob[j][m].as_ref()
    }

    /// True when every hazard and weight is independent of the age.
    pub fn is_homogeneous(&self) -> bool {
        self.hazard.iter().all(|e| e.constant_value().is_some())
            && self
                .trans_prob
                .iter()
                .flatten()
                .flatten()
                .all(|e| e.constant_value().is_some())
    }

    pub fn hazard(&self, j: usize, age: f64) -> Result<f64, ChainError> {
        let value = self.hazard[j].eval(0.0, age)?;
        if value < 0.0 {
            return Err(ChainError::NegativeHazard {
                regime: j,
                age,
                value,
            });
        }
        Ok(value)
    }

    pub fn trans_prob(&self, j: usize, m: usize, age: f64) -> Result<f64, ChainError> {
        match &self.trans_prob[j][m] {
            None => Ok(0.0),
            Some(e) => Ok(e.eval(0.0, age)?),
        }
    }

    /// `λ_{i,j}(t) = p_{i,j}(t) λ_i(t)`.
    pub fn transition_rate(&self, i: usize, j: usize, t: f64) -> Result<f64, ChainError> {
        if i == j {
            return Err(ChainError::SelfTransition { regime: i });
        }
        if t < 0.0 {
            return Err(ChainError::InvalidArgument(format!("negative age {t}")));
        }
        Ok(self.trans_prob(i, j, t)? * self.hazard(i, t)?)
    }

    /// `∫_{t0}^{t0+s} λ_j(ω) dω`.
    pub fn cumulative_hazard(&self, j: usize, t0: f64, s: f64) -> Result<f64, ChainError> {
        if !(s >= 0.0 && t0 >= 0.0) {
            return Err(ChainError::InvalidArgument(format!(
                "cumulative hazard needs t0 >= 0 and s >= 0, got t0={t0}, s={s}"
            )));
        }
        self.hazard_between(j, t0, t0 + s)
    }

    fn hazard_between(&self, j: usize, a: f64, b: f64) -> Result<f64, ChainError> {
        if let Some(rate) = self.hazard[j].constant_value() {
            if rate < 0.0 {
                return Err(ChainError::NegativeHazard {
                    regime: j,
                    age: a,
                    value: rate,
                });
            }
            return Ok(rate * (b - a));
        }
        if b <= a {
            return Ok(0.0);
        }
        adaptive_simpson(|u| self.hazard(j, u), a, b, HAZARD_QUAD_TOL, HAZARD_QUAD_DEPTH)
    }

    /// Holding time `s` with `Λ_j(t0, s) = −ln(1−u)`; `+∞` when the hazard
    /// accumulated over `max_duration` stays below the target.
    pub fn sample_holding_time(
        &self,
        j: usize,
        t0: f64,
        u: f64,
        max_duration: f64,
    ) -> Result<f64, ChainError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(ChainError::InvalidArgument(format!("u={u} not in (0,1)")));
        }
        let target = -(-u).ln_1p();
        if let Some(rate) = self.hazard[j].constant_value() {
            if rate < 0.0 {
                return Err(ChainError::NegativeHazard {
                    regime: j,
                    age: t0,
                    value: rate,
                });
            }
            return Ok(if rate == 0.0 { f64::INFINITY } else { target / rate });
        }

        // Geometric bracket: Λ(lo) < target <= Λ(hi).
        let (mut lo, mut lam_lo) = (0.0, 0.0);
        let mut hi = 1.0_f64.min(max_duration);
        let mut lam_hi = self.hazard_between(j, t0, t0 + hi)?;
        while lam_hi < target {
            if hi >= max_duration {
                return Ok(f64::INFINITY);
            }
            lo = hi;
            lam_lo = lam_hi;
            hi = (2.0 * hi).min(max_duration);
            lam_hi = lam_lo + self.hazard_between(j, t0 + lo, t0 + hi)?;
        }
        // Bisection, accumulating the hazard incrementally from `lo`.
        while hi - lo > HOLDING_TIME_RTOL * hi {
            let mid = 0.5 * (lo + hi);
            let lam_mid = lam_lo + self.hazard_between(j, t0 + lo, t0 + mid)?;
            if lam_mid < target {
                lo = mid;
                lam_lo = lam_mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Categorical draw of the next regime with weights `p_{j,m}(holding)`,
    /// inverted over `m = 1..k` in ascending order.
    pub fn sample_next_regime(&self, j: usize, holding: f64, u: f64) -> Result<usize, ChainError> {
        let k = self.k();
        if k < 2 {
            return Err(ChainError::NoTarget { regime: j });
        }
        if !(holding > 0.0) {
            return Err(ChainError::InvalidArgument(format!(
                "holding time {holding} must be positive"
            )));
        }
        let mut weights = Vec::with_capacity(k);
        for m in 0..k {
            let w = self.trans_prob(j, m, holding)?;
            if !(0.0..=1.0).contains(&w) {
                return Err(ChainError::WeightSum {
                    regime: j,
                    holding,
                    sum: w,
                });
            }
            weights.push(w);
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ChainError::WeightSum {
                regime: j,
                holding,
                sum,
            });
        }
        let target = u * sum;
        let mut acc = 0.0;
        let mut last = j;
        for (m, &w) in weights.iter().enumerate() {
            if m == j || w == 0.0 {
                continue;
            }
            acc += w;
            last = m;
            if target < acc {
                return Ok(m);
            }
        }
        Ok(last)
    }

    /// Path of the chain on `[0, horizon]` started in `i0` with age `t0`.
    pub fn simulate_chain<R: Rng + ?Sized>(
        &self,
        i0: usize,
        t0: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<ChainPath, ChainError> {
        if !(horizon > 0.0) {
            return Err(ChainError::InvalidArgument(format!(
                "horizon {horizon} must be positive"
            )));
        }
        let mut path = ChainPath {
            initial_regime: i0,
            initial_age: t0,
            jump_times: Vec::new(),
            states: Vec::new(),
        };
        if self.k() < 2 {
            return Ok(path);
        }
        let max_duration = SENTINEL_HORIZON_FACTOR * horizon;
        let (mut s, mut regime, mut age) = (0.0, i0, t0);
        loop {
            let u: f64 = rng.sample(Open01);
            let hold = self.sample_holding_time(regime, age, u, max_duration)?;
            if !hold.is_finite() || s + hold > horizon {
                break;
            }
            let u: f64 = rng.sample(Open01);
            // Jump weights see the full time spent in the regime.
            let next = self.sample_next_regime(regime, age + hold, u)?;
            s += hold;
            path.jump_times.push(s);
            path.states.push(next);
            regime = next;
            age = 0.0;
        }
        Ok(path)
    }

    /// Deterministic path for stream `stream` of `seed`.
    pub fn simulate_chain_seeded(
        &self,
        i0: usize,
        t0: f64,
        horizon: f64,
        seed: u64,
        stream: u64,
    ) -> Result<ChainPath, ChainError> {
        let mut rng: ChaCha8Rng = path_rng(seed, stream);
        self.simulate_chain(i0, t0, horizon, &mut rng)
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance and a depth cap.
pub fn adaptive_simpson<F, E>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    #[allow(clippy::too_many_arguments)]
    fn step<F, E>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, E>
    where
        F: Fn(f64) -> Result<f64, E>,
    {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm)?, f(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }

    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(hazard: &str) -> RegimeChainSpec {
        RegimeChainSpec::new(vec![Expression::parse(hazard).unwrap()], vec![vec![None]]).unwrap()
    }

    fn two(h1: &str, h2: &str) -> RegimeChainSpec {
        let one = || Some(Expression::constant(1.0));
        RegimeChainSpec::new(
            vec![Expression::parse(h1).unwrap(), Expression::parse(h2).unwrap()],
            vec![vec![None, one()], vec![one(), None]],
        )
        .unwrap()
    }

    fn three(p12: &str, p13: &str) -> RegimeChainSpec {
        let c = |v: f64| Some(Expression::constant(v));
        RegimeChainSpec::new(
            vec![Expression::constant(1.0); 3],
            vec![
                vec![
                    None,
                    Some(Expression::parse(p12).unwrap()),
                    Some(Expression::parse(p13).unwrap()),
                ],
                vec![c(0.5), None, c(0.5)],
                vec![c(0.5), c(0.5), None],
            ],
        )
        .unwrap()
    }

    #[test]
    fn cumulative_hazard_examples() {
        assert_eq!(single("2").cumulative_hazard(0, 0.0, 3.0).unwrap(), 6.0);
        let lin = single("t").cumulative_hazard(0, 1.0, 2.0).unwrap();
        assert!((lin - 4.0).abs() < 1e-14);
        let ln2 = single("1/(1+t)").cumulative_hazard(0, 0.0, 1.0).unwrap();
        assert!((ln2 - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(single("t").cumulative_hazard(0, 2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_hazard_rejects_negative_rates_and_arguments() {
        assert!(matches!(
            single("1 - t").cumulative_hazard(0, 0.0, 3.0),
            Err(ChainError::NegativeHazard { .. })
        ));
        assert!(matches!(
            single("-1").cumulative_hazard(0, 0.0, 1.0),
            Err(ChainError::NegativeHazard { .. })
        ));
        assert!(single("1").cumulative_hazard(0, -1.0, 1.0).is_err());
        assert!(single("1").cumulative_hazard(0, 0.0, -1.0).is_err());
    }

    #[test]
    fn holding_time_examples() {
        let u = 1.0 - (-2.0f64).exp();
        assert!((single("1").sample_holding_time(0, 7.0, u, 100.0).unwrap() - 2.0).abs() < 1e-14);
        let u = 1.0 - (-0.5f64).exp();
        let s = single("t").sample_holding_time(0, 0.0, u, 100.0).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        let s = single("1/(1+t)").sample_holding_time(0, 1.0, 0.5, 100.0).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn holding_time_sentinel() {
        assert_eq!(
            single("0").sample_holding_time(0, 0.0, 0.5, 10.0).unwrap(),
            f64::INFINITY
        );
        // Total hazard over [0, ∞) is 1, so targets above 1 never fire.
        let s = single("exp(-t)").sample_holding_time(0, 0.0, 0.9, 50.0).unwrap();
        assert_eq!(s, f64::INFINITY);
        assert!(single("1").sample_holding_time(0, 0.0, 0.0, 1.0).is_err());
        assert!(single("1").sample_holding_time(0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn next_regime_examples() {
        assert_eq!(two("1", "1").sample_next_regime(0, 0.3, 0.99).unwrap(), 1);
        assert_eq!(three("0.25", "0.75").sample_next_regime(0, 2.0, 0.2).unwrap(), 1);
        assert_eq!(
            three("t/(1+t)", "1/(1+t)")
                .sample_next_regime(0, 1.0, 0.6)
                .unwrap(),
            2
        );
        assert_eq!(
            three("t/(1+t)", "1/(1+t)")
                .sample_next_regime(0, 1.0, 0.4)
                .unwrap(),
            1
        );
        assert!(matches!(
            three("0.25", "0.5").sample_next_regime(0, 1.0, 0.5),
            Err(ChainError::WeightSum { .. })
        ));
        assert!(single("1").sample_next_regime(0, 1.0, 0.5).is_err());
        assert!(two("1", "1").sample_next_regime(0, 0.0, 0.5).is_err());
    }

    #[test]
    fn transition_rate_examples() {
        let c = two("3", "1");
        assert_eq!(c.transition_rate(0, 1, 5.0).unwrap(), 3.0);
        let half = || Some(Expression::constant(0.5));
        let c = RegimeChainSpec::new(
            vec![Expression::parse("t").unwrap(); 3],
            vec![
                vec![None, half(), half()],
                vec![half(), None, half()],
                vec![half(), half(), None],
            ],
        )
        .unwrap();
        assert_eq!(c.transition_rate(0, 1, 4.0).unwrap(), 2.0);
        let c = RegimeChainSpec::new(
            vec![Expression::parse("1/(1+t)").unwrap(), Expression::constant(1.0)],
            vec![
                vec![None, Some(Expression::parse("t/(1+t)").unwrap())],
                vec![Some(Expression::constant(1.0)), None],
            ],
        )
        .unwrap();
        assert!((c.transition_rate(0, 1, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            c.transition_rate(1, 1, 1.0),
            Err(ChainError::SelfTransition { .. })
        ));
    }

    #[test]
    fn zero_hazard_never_jumps() {
        let c = two("0", "0");
        let p = c.simulate_chain_seeded(0, 0.0, 1e4, 3, 0).unwrap();
        assert!(p.jump_times.is_empty());
        assert_eq!(p.regime_at(5e3), 0);
        assert_eq!(p.age_at(5.0), 5.0);
    }

    #[test]
    fn path_structure_and_reproducibility() {
        let c = two("1 + t", "0.5");
        let a = c.simulate_chain_seeded(1, 0.7, 50.0, 11, 4).unwrap();
        let b = c.simulate_chain_seeded(1, 0.7, 50.0, 11, 4).unwrap();
        assert_eq!(a, b);
        assert!(!a.jump_times.is_empty());
        assert!(a.jump_times.windows(2).all(|w| w[0] < w[1]));
        let mut prev = a.initial_regime;
        for &s in &a.states {
            assert_ne!(s, prev);
            prev = s;
        }
        let nu = a.jump_times[0];
        assert_eq!(a.age_at(nu), 0.0);
        assert_eq!(a.regime_at(nu), a.states[0]);
        assert_eq!(a.regime_at(0.5 * nu), 1);
        assert!((a.age_at(0.5 * nu) - (0.7 + 0.5 * nu)).abs() < 1e-15);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v: Result<f64, ()> = adaptive_simpson(|x: f64| Ok(x.sin()), 0.0, std::f64::consts::PI, 1e-12, 40);
        assert!((v.unwrap() - 2.0).abs() < 1e-11);
    }
}
