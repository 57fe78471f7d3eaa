use std::io::{Read, Write};

use super::{AgeGrid, Grid1D, HjbError};
use crate::scalar::Real;
use crate::sde::{EndKind, PathPoint, StoppingRule};

/// Discrete value function, stop flags and node residuals.
///
/// Entries are stored per age level, then per regime, then per node; a
/// homogeneous field has a single level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField<T> {
    pub grid: Grid1D<T>,
    pub ages: Option<AgeGrid<T>>,
    pub k: usize,
    values: Vec<T>,
    minus_h: Vec<Vec<T>>,
    stop_flag: Vec<bool>,
    node_residual: Vec<T>,
    /// Largest complementarity residual reported by the solver.
    pub residual: T,
    /// Gap `v + h` at or below which a node counts as stopped.
    pub tol_stop: T,
}

impl<T: Real> ValueField<T> {
    /// Field with `v = −h` everywhere.
    pub fn obstacle(grid: Grid1D<T>, ages: Option<AgeGrid<T>>, minus_h: Vec<Vec<T>>, tol_stop: T) -> Self {
        let k = minus_h.len();
        let levels = ages.map_or(1, |a| a.len());
        let mut values = Vec::with_capacity(levels * k * grid.len());
        for _ in 0..levels {
            for mh in &minus_h {
                values.extend_from_slice(mh);
            }
        }
        let len = values.len();
        Self {
            grid,
            ages,
            k,
            values,
            minus_h,
            stop_flag: vec![true; len],
            node_residual: vec![T::zero(); len],
            residual: T::zero(),
            tol_stop,
        }
    }

    pub fn levels(&self) -> usize {
        self.ages.map_or(1, |a| a.len())
    }

    #[inline]
    fn offset(&self, level: usize, regime: usize) -> usize {
        (level * self.k + regime) * self.grid.len()
    }

    pub fn slice(&self, level: usize, regime: usize) -> &[T] {
        let o = self.offset(level, regime);
        &self.values[o..o + self.grid.len()]
    }

    pub fn slice_mut(&mut self, level: usize, regime: usize) -> &mut [T] {
        let o = self.offset(level, regime);
        let len = self.grid.len();
        &mut self.values[o..o + len]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn value(&self, n: usize, level: usize, regime: usize) -> T {
        self.values[self.offset(level, regime) + n]
    }

    pub fn minus_h(&self, regime: usize) -> &[T] {
        &self.minus_h[regime]
    }

    pub fn stop_flag(&self, n: usize, level: usize, regime: usize) -> bool {
        self.stop_flag[self.offset(level, regime) + n]
    }

    pub fn node_residual(&self, n: usize, level: usize, regime: usize) -> T {
        self.node_residual[self.offset(level, regime) + n]
    }

    pub(crate) fn set_node_residual(&mut self, n: usize, level: usize, regime: usize, r: T) {
        let o = self.offset(level, regime) + n;
        self.node_residual[o] = r;
    }

    /// Recomputes stop flags from the stored values: stopped iff
    /// `v + h ≤ tol_stop`.
    pub fn refresh_flags(&mut self) {
        for level in 0..self.levels() {
            for i in 0..self.k {
                let o = self.offset(level, i);
                for n in 0..self.grid.len() {
                    self.stop_flag[o + n] = self.values[o + n] - self.minus_h[i][n] <= self.tol_stop;
                }
            }
        }
    }

    /// Smallest `v + h` over all entries.
    pub fn min_gap(&self) -> T {
        let mut out = T::infinity();
        for level in 0..self.levels() {
            for i in 0..self.k {
                for (v, mh) in self.slice(level, i).iter().zip(&self.minus_h[i]) {
                    out = out.min(*v - *mh);
                }
            }
        }
        out
    }

    /// Bilinear interpolation of `v + h` (linear in `x`, linear in age).
    pub fn gap_at(&self, x: T, age: T, regime: usize) -> T {
        let (n, wx) = self.grid.locate(x);
        let gap_row = |level: usize| {
            let v = self.slice(level, regime);
            let mh = &self.minus_h[regime];
            let g0 = v[n] - mh[n];
            let g1 = v[n + 1] - mh[n + 1];
            g0 + wx * (g1 - g0)
        };
        match self.ages {
            None => gap_row(0),
            Some(ages) => {
                let (a, wt) = ages.locate(age);
                let g0 = gap_row(a);
                let g1 = gap_row(a + 1);
                g0 + wt * (g1 - g0)
            }
        }
    }

    /// Interpolated value `v(x, age, regime)`.
    pub fn value_at(&self, x: T, age: T, regime: usize) -> T {
        let (n, wx) = self.grid.locate(x);
        let mh = &self.minus_h[regime];
        let h_interp = mh[n] + wx * (mh[n + 1] - mh[n]);
        self.gap_at(x, age, regime) + h_interp
    }

    /// `max |v(·,t_a,·) − v(·,t_b,·)|` over all level pairs in `levels`.
    pub fn age_variation(&self, levels: std::ops::RangeInclusive<usize>) -> T {
        let mut out = T::zero();
        for i in 0..self.k {
            for n in 0..self.grid.len() {
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for level in levels.clone() {
                    let v = self.value(n, level, i);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                out = out.max(hi - lo);
            }
        }
        out
    }

    /// CSV with header `x[,t],regime,v,minus_h,stop_flag,residual`,
    /// 1-based regimes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HjbError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        if self.ages.is_some() {
            w.write_record(["x", "t", "regime", "v", "minus_h", "stop_flag", "residual"])?;
        } else {
            w.write_record(["x", "regime", "v", "minus_h", "stop_flag", "residual"])?;
        }
        for level in 0..self.levels() {
            for i in 0..self.k {
                for n in 0..self.grid.len() {
                    let mut rec = vec![self.grid.x(n).to_string()];
                    if let Some(ages) = self.ages {
                        rec.push(ages.t(level).to_string());
                    }
                    rec.push((i + 1).to_string());
                    rec.push(self.value(n, level, i).to_string());
                    rec.push(self.minus_h[i][n].to_string());
                    rec.push(u8::from(self.stop_flag(n, level, i)).to_string());
                    rec.push(self.node_residual(n, level, i).to_string());
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`ValueField::write_csv`]. Endpoint kinds are
    /// not stored and come back as truncation ends.
    pub fn read_csv<R: Read>(input: R, tol_stop: T) -> Result<Self, HjbError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let bad = |msg: &str| HjbError::Csv(msg.to_string());
        let (cx, cr, cv, ch) = (
            col("x").ok_or_else(|| bad("missing column x"))?,
            col("regime").ok_or_else(|| bad("missing column regime"))?,
            col("v").ok_or_else(|| bad("missing column v"))?,
            col("minus_h").ok_or_else(|| bad("missing column minus_h"))?,
        );
        let ct = col("t");
        let mut rows: Vec<(f64, f64, usize, f64, f64)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64, HjbError> {
                rec.get(c)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| HjbError::Csv(format!("bad number in column {c}")))
            };
            let regime = num(cr)?;
            if !(regime >= 1.0 && regime.fract() == 0.0) {
                return Err(bad("regimes must be positive integers"));
            }
            let t = match ct {
                Some(c) => num(c)?,
                None => 0.0,
            };
            rows.push((num(cx)?, t, regime as usize - 1, num(cv)?, num(ch)?));
        }
        if rows.is_empty() {
            return Err(bad("empty field"));
        }
        let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut ts: Vec<f64> = rows.iter().map(|r| r.1).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let k = rows.iter().map(|r| r.2).max().unwrap_or(0) + 1;
        let m = xs.len() - 1;
        let grid = Grid1D::new(T::lit(xs[0]), T::lit(xs[m]), m, [EndKind::Truncation; 2])?;
        let ages = if ct.is_some() {
            if ts.len() < 2 {
                return Err(bad("age column needs at least two levels"));
            }
            Some(AgeGrid::new(T::lit(ts[ts.len() - 1]), ts.len() - 1)?)
        } else {
            None
        };
        let levels = ages.map_or(1, |a: AgeGrid<T>| a.len());
        if rows.len() != levels * k * xs.len() {
            return Err(bad("field is not a complete grid"));
        }
        let find = |v: f64, list: &[f64]| {
            list.binary_search_by(|p| p.total_cmp(&v))
                .map_err(|_| HjbError::Csv(format!("off-grid coordinate {v}")))
        };
        let mut minus_h = vec![vec![T::zero(); xs.len()]; k];
        let mut field_values = vec![T::nan(); levels * k * xs.len()];
        for &(x, t, i, v, mh) in &rows {
            let n = find(x, &xs)?;
            let a = if ages.is_some() { find(t, &ts)? } else { 0 };
            minus_h[i][n] = T::lit(mh);
            field_values[(a * k + i) * xs.len() + n] = T::lit(v);
        }
        let mut field = Self::obstacle(grid, ages, minus_h, tol_stop);
        field.values = field_values;
        field.refresh_flags();
        Ok(field)
    }
}

/// Crossing of a stop/continue interface between two adjacent nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint<T> {
    pub regime: usize,
    /// Age level for inhomogeneous fields.
    pub t: Option<T>,
    pub x: T,
    /// True when the stopping region lies to the left of `x`.
    pub stop_below: bool,
}

/// Per-regime interfaces between stop and continue node runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FreeBoundary<T> {
    pub points: Vec<BoundaryPoint<T>>,
}

impl<T: Real> FreeBoundary<T> {
    /// Interfaces found among interior nodes; crossings interpolate the gap
    /// `v + h − tol_stop` linearly.
    pub fn from_field(field: &ValueField<T>) -> Self {
        let mut points = Vec::new();
        let m = field.grid.m();
        for level in 0..field.levels() {
            let t = field.ages.map(|a| a.t(level));
            for i in 0..field.k {
                let v = field.slice(level, i);
                let mh = field.minus_h(i);
                for n in 1..m - 1 {
                    let (s0, s1) = (field.stop_flag(n, level, i), field.stop_flag(n + 1, level, i));
                    if s0 == s1 {
                        continue;
                    }
                    let g0 = v[n] - mh[n] - field.tol_stop;
                    let g1 = v[n + 1] - mh[n + 1] - field.tol_stop;
                    let (x0, x1) = (field.grid.x(n), field.grid.x(n + 1));
                    let w = if g0 != g1 {
                        (g0 / (g0 - g1)).max(T::zero()).min(T::one())
                    } else {
                        T::lit(0.5)
                    };
                    points.push(BoundaryPoint {
                        regime: i,
                        t,
                        x: x0 + w * (x1 - x0),
                        stop_below: s0,
                    });
                }
            }
        }
        Self { points }
    }

    /// Interfaces of `regime` on the first (or only) age level.
    pub fn for_regime(&self, regime: usize) -> Vec<BoundaryPoint<T>> {
        let first = self.points.iter().find_map(|p| p.t);
        self.points
            .iter()
            .filter(|p| p.regime == regime && p.t == first)
            .copied()
            .collect()
    }

    /// CSV `regime,boundary_x[,t]`, 1-based regimes.
    pub fn write_csv<W: Write>(&self, out: W, with_age: bool) -> Result<(), HjbError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        if with_age {
            w.write_record(["regime", "boundary_x", "t"])?;
        } else {
            w.write_record(["regime", "boundary_x"])?;
        }
        for p in &self.points {
            let mut rec = vec![(p.regime + 1).to_string(), p.x.to_string()];
            if with_age {
                rec.push(p.t.unwrap_or_else(T::zero).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Feedback rule `stop ⇔ v(x, ζ, θ) ≤ −h(x, θ) + tol_stop`.
#[derive(Debug, Clone)]
pub struct FieldPolicy<T> {
    field: ValueField<T>,
}

impl<T: Real> FieldPolicy<T> {
    pub fn field(&self) -> &ValueField<T> {
        &self.field
    }
}

impl<T: Real> StoppingRule for FieldPolicy<T> {
    fn should_stop(&self, p: &PathPoint) -> bool {
        let x = T::lit(p.x);
        if !(x > self.field.grid.lo() && x < self.field.grid.hi()) {
            return true;
        }
        self.field.gap_at(x, T::lit(p.age), p.regime) <= self.field.tol_stop
    }
}

pub fn extract_policy<T: Real>(field: &ValueField<T>) -> FieldPolicy<T> {
    FieldPolicy { field: field.clone() }
}
