use super::HjbError;
use crate::probcfg::ProblemSpec;
use crate::scalar::Real;
use crate::sde::{End, EndKind};

/// Uniform spatial grid `x_0 < … < x_M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D<T> {
    lo: T,
    hi: T,
    m: usize,
    dx: T,
    ends: [EndKind; 2],
}

impl<T: Real> Grid1D<T> {
    pub fn new(lo: T, hi: T, m: usize, ends: [EndKind; 2]) -> Result<Self, HjbError> {
        if m < 3 {
            return Err(HjbError::InvalidGrid(format!("need M >= 3, got {m}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(HjbError::InvalidGrid(format!("bad interval [{lo}, {hi}]")));
        }
        let dx = (hi - lo) / T::lit(m as f64);
        Ok(Self { lo, hi, m, dx, ends })
    }

    /// Grid on the problem's computational interval with `m` intervals.
    pub fn for_problem(spec: &ProblemSpec, m: usize) -> Result<Self, HjbError> {
        let (lo, hi) = spec.diffusion.interval();
        let ends = [
            spec.diffusion.end_kind(End::Lower),
            spec.diffusion.end_kind(End::Upper),
        ];
        Self::new(T::lit(lo), T::lit(hi), m, ends)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn end_kind(&self, end: End) -> EndKind {
        match end {
            End::Lower => self.ends[0],
            End::Upper => self.ends[1],
        }
    }

    /// Node `n`; the last node is `hi` exactly.
    #[inline]
    pub fn x(&self, n: usize) -> T {
        if n == self.m {
            self.hi
        } else {
            self.lo + self.dx * T::lit(n as f64)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.m).map(|n| self.x(n)).collect()
    }

    /// Cell index `n` and weight `w` with `x ≈ (1−w)·x_n + w·x_{n+1}`,
    /// clamped to the grid hull.
    pub fn locate(&self, x: T) -> (usize, T) {
        if !(x > self.lo) {
            return (0, T::zero());
        }
        if !(x < self.hi) {
            return (self.m - 1, T::one());
        }
        let pos = (x - self.lo) / self.dx;
        let n = pos.floor().to_usize().unwrap_or(0).min(self.m - 1);
        (n, (pos - T::lit(n as f64)).max(T::zero()).min(T::one()))
    }
}

/// Uniform age grid `0 = t_0 < … < t_N = Υ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid<T> {
    upsilon: T,
    n: usize,
    dt: T,
}

impl<T: Real> AgeGrid<T> {
    pub fn new(upsilon: T, n: usize) -> Result<Self, HjbError> {
        if n < 1 {
            return Err(HjbError::InvalidGrid("need N >= 1 age intervals".into()));
        }
        if !(upsilon > T::zero() && upsilon.is_finite()) {
            return Err(HjbError::InvalidGrid(format!("bad age horizon {upsilon}")));
        }
        Ok(Self {
            upsilon,
            n,
            dt: upsilon / T::lit(n as f64),
        })
    }

    pub fn for_problem(spec: &ProblemSpec) -> Result<Self, HjbError> {
        Self::new(T::lit(spec.grid.upsilon), spec.grid.n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn upsilon(&self) -> T {
        self.upsilon
    }

    #[inline]
    pub fn t(&self, n: usize) -> T {
        if n == self.n {
            self.upsilon
        } else {
            self.dt * T::lit(n as f64)
        }
    }

    /// Same convention as [`Grid1D::locate`]; ages past `Υ` map to `Υ`.
    pub fn locate(&self, t: T) -> (usize, T) {
        if !(t > T::zero()) {
            return (0, T::zero());
        }
        if !(t < self.upsilon) {
            return (self.n - 1, T::one());
        }
        let pos = t / self.dt;
        let n = pos.floor().to_usize().unwrap_or(0).min(self.n - 1);
        (n, (pos - T::lit(n as f64)).max(T::zero()).min(T::one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes_and_location() {
        let g = Grid1D::<f64>::new(0.0, 1.0, 4, [EndKind::Boundary; 2]).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.locate(0.3).0, 1);
        assert!((g.locate(0.3).1 - 0.2).abs() < 1e-12);
        assert_eq!(g.locate(-1.0), (0, 0.0));
        assert_eq!(g.locate(2.0), (3, 1.0));
        assert!(Grid1D::new(0.0, 1.0, 2, [EndKind::Boundary; 2]).is_err());
        let a = AgeGrid::new(2.0f32, 4).unwrap();
        assert_eq!(a.t(4), 2.0);
        assert_eq!(a.locate(7.0), (3, 1.0));
    }
}
