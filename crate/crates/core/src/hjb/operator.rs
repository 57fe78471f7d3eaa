use super::{Grid1D, HjbError};
use crate::probcfg::ProblemSpec;
use crate::scalar::Real;
use crate::sde::End;

/// Rows of `−(L̃v)` for one regime at one age.
///
/// Interior row `n` reads
/// `lower[n]·v_{n−1} + diag[n]·v_n + upper[n]·v_{n+1} − Σ_j coupling[j]·v(x_n, 0, j)`.
/// Rows 0 and `M` are identity rows: endpoint values are pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeOperator<T> {
    pub regime: usize,
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
    /// `λ_{i,j}(t)` for every target regime `j`, zero at `j = i`.
    pub coupling: Vec<T>,
}

impl<T: Real> RegimeOperator<T> {
    pub fn total_rate(&self) -> T {
        self.coupling.iter().copied().sum()
    }

    /// Row `n` applied to the own-regime slice `v` and the coupled values.
    #[inline]
    pub fn apply(&self, v: &[T], coupled: impl Fn(usize) -> T, n: usize) -> T {
        let m = v.len() - 1;
        if n == 0 || n == m {
            return v[n];
        }
        let mut out = self.lower[n] * v[n - 1] + self.diag[n] * v[n] + self.upper[n] * v[n + 1];
        for (j, &w) in self.coupling.iter().enumerate() {
            if j != self.regime {
                out -= w * coupled(j);
            }
        }
        out
    }
}

/// Upwind/central monotone discretization of `−L̃` for regime `i` at age `t`.
///
/// Diffusion uses the central second difference, drift the one-sided
/// difference in the direction of `α`, and `r` plus the total jump rate sit
/// on the diagonal. Every interior row is a strictly diagonally dominant
/// M-matrix row when `r > 0`.
pub fn assemble_operator<T: Real>(
    spec: &ProblemSpec,
    grid: &Grid1D<T>,
    i: usize,
    t: f64,
) -> Result<RegimeOperator<T>, HjbError> {
    let k = spec.k();
    let mut coupling = vec![T::zero(); k];
    let mut total = 0.0;
    for (j, slot) in coupling.iter_mut().enumerate() {
        if j != i {
            let rate = spec.chain.transition_rate(i, j, t)?;
            total += rate;
            *slot = T::lit(rate);
        }
    }
    let len = grid.len();
    let dx = grid.dx().as_f64();
    let mut lower = vec![T::zero(); len];
    let mut diag = vec![T::one(); len];
    let mut upper = vec![T::zero(); len];
    for n in 1..grid.m() {
        let x = grid.x(n).as_f64();
        let alpha = spec.diffusion.drift(x, i)?;
        let sigma = spec.diffusion.vol(x, i)?;
        let r = spec.payoff.discount(x, i)?;
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(HjbError::NegativeVolatility { regime: i, x, sigma });
        }
        if !(r > 0.0) || !alpha.is_finite() || !r.is_finite() {
            return Err(HjbError::NotMMatrix { regime: i, x, r });
        }
        let a = 0.5 * sigma * sigma / (dx * dx);
        lower[n] = T::lit(-(a + (-alpha).max(0.0) / dx));
        upper[n] = T::lit(-(a + alpha.max(0.0) / dx));
        diag[n] = T::lit(r + 2.0 * a + alpha.abs() / dx + total);
    }
    Ok(RegimeOperator {
        regime: i,
        lower,
        diag,
        upper,
        coupling,
    })
}

/// Pointwise data shared by the solvers: running payoff, obstacle, and the
/// pinned endpoint values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData<T> {
    pub pi: Vec<Vec<T>>,
    pub minus_h: Vec<Vec<T>>,
    /// `[lower, upper]` endpoint values per regime.
    pub pinned: Vec<[T; 2]>,
}

impl<T: Real> NodeData<T> {
    pub fn new(spec: &ProblemSpec, grid: &Grid1D<T>) -> Result<Self, HjbError> {
        let xs: Vec<f64> = grid.nodes().iter().map(|x| x.as_f64()).collect();
        let mut pi = Vec::with_capacity(spec.k());
        let mut minus_h = Vec::with_capacity(spec.k());
        let mut pinned = Vec::with_capacity(spec.k());
        for i in 0..spec.k() {
            pi.push(
                xs.iter()
                    .map(|&x| spec.payoff.running(x, i).map(T::lit))
                    .collect::<Result<Vec<T>, _>>()?,
            );
            let mh = xs
                .iter()
                .map(|&x| spec.payoff.stop_reward(x, i).map(T::lit))
                .collect::<Result<Vec<T>, _>>()?;
            let (lo, hi) = (xs[0], xs[xs.len() - 1]);
            pinned.push([
                T::lit(spec.payoff.exit_reward(End::Lower, lo, i)?),
                T::lit(spec.payoff.exit_reward(End::Upper, hi, i)?),
            ]);
            minus_h.push(mh);
        }
        Ok(Self { pi, minus_h, pinned })
    }
}
