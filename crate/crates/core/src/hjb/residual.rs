use super::{HjbError, ValueField};
use crate::probcfg::ProblemSpec;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// Largest `|min((−L̃v − Π)/d, v + h)|` over interior nodes, where `d`
    /// is the diagonal weight of the node.
    pub max: f64,
    pub x: f64,
    pub t: Option<f64>,
    pub regime: usize,
}

/// Recomputes the complementarity residual of `field` directly from the
/// problem coefficients, in `f64`, without the solver's assembled rows.
///
/// The operator part is divided by the node's diagonal weight
/// `r + σ²/Δx² + |α|/Δx + Σλ (+ 1/Δt)` so that the residual is measured in
/// value units and is comparable with the obstacle gap.
pub fn residual_check<T: Real>(
    field: &ValueField<T>,
    spec: &ProblemSpec,
) -> Result<ResidualReport, HjbError> {
    let grid = &field.grid;
    let m = grid.m();
    let dx = grid.dx().as_f64();
    let k = field.k;
    let levels = field.ages.map_or(1, |a| a.n());
    let mut report = ResidualReport {
        max: 0.0,
        x: grid.x(0).as_f64(),
        t: field.ages.map(|_| 0.0),
        regime: 0,
    };
    for level in 0..levels {
        let (t, inv_dt) = match field.ages {
            Some(a) => (a.t(level).as_f64(), 1.0 / a.dt().as_f64()),
            None => (0.0, 0.0),
        };
        for i in 0..k {
            let mut rates = vec![0.0; k];
            for (j, rate) in rates.iter_mut().enumerate() {
                if j != i {
                    *rate = spec.chain.trans_prob(i, j, t)? * spec.chain.hazard(i, t)?;
                }
            }
            let total: f64 = rates.iter().sum();
            for n in 1..m {
                let x = grid.x(n).as_f64();
                let v = |nn: usize| field.value(nn, level, i).as_f64();
                let alpha = spec.diffusion.drift(x, i)?;
                let sigma = spec.diffusion.vol(x, i)?;
                let r = spec.payoff.discount(x, i)?;
                let pi = spec.payoff.running(x, i)?;
                let minus_h = -spec.payoff.cost(x, i)?;
                let second = (v(n + 1) - 2.0 * v(n) + v(n - 1)) / (dx * dx);
                let first = if alpha >= 0.0 {
                    (v(n + 1) - v(n)) / dx
                } else {
                    (v(n) - v(n - 1)) / dx
                };
                let mut gen = -r * v(n) + alpha * first + 0.5 * sigma * sigma * second;
                for (j, &rate) in rates.iter().enumerate() {
                    if rate != 0.0 {
                        gen += rate * (field.value(n, 0, j).as_f64() - v(n));
                    }
                }
                if field.ages.is_some() {
                    gen += (field.value(n, level + 1, i).as_f64() - v(n)) * inv_dt;
                }
                let weight = r + sigma * sigma / (dx * dx) + alpha.abs() / dx + total + inv_dt;
                let res = ((-gen - pi) / weight).min(v(n) - minus_h);
                if res.abs() > report.max || res.is_nan() {
                    report = ResidualReport {
                        max: if res.is_nan() { f64::INFINITY } else { res.abs() },
                        x,
                        t: field.ages.map(|_| t),
                        regime: i,
                    };
                }
            }
        }
    }
    Ok(report)
}
