use super::{
    assemble_operator, AgeGrid, FreeBoundary, Grid1D, HjbError, NodeData, RegimeOperator, ValueField,
};
use crate::probcfg::{Mode, ProblemSpec};
use crate::scalar::Real;

/// Outer fixed-point iterations allowed on the age-zero slice.
pub const MAX_OUTER: usize = 200;
/// Consecutive non-contracting outer iterations before damping kicks in.
const STALL_WINDOW: usize = 5;
const DAMPING: f64 = 0.5;
/// Update growth over the best sweep so far that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    /// Relaxation factor; `None` estimates one from the operator.
    pub omega: Option<T>,
    pub tol_fp: T,
    pub max_outer: usize,
    pub tol_stop: T,
}

impl<T: Real> SolveOptions<T> {
    /// Problem settings for a grid with `m` intervals.
    pub fn for_grid(spec: &ProblemSpec, m: usize) -> Self {
        let tol = T::lit(spec.solver.tol);
        Self {
            tol,
            max_iter: spec.solver.max_iter.unwrap_or(200 * m * spec.k()),
            omega: spec.solver.omega.map(T::lit),
            tol_fp: T::lit(spec.solver.tol_fp),
            max_outer: MAX_OUTER,
            tol_stop: T::lit(10.0) * tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub field: ValueField<T>,
    pub boundary: FreeBoundary<T>,
    pub converged: bool,
    /// Relaxation sweeps (summed over all age levels and outer iterations).
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub last_update: T,
    pub omega: T,
    /// Age-zero slice distances of the outer fixed point, one per iteration.
    pub outer_history: Vec<T>,
    /// Whether the outer iteration had to switch to damped updates.
    pub damped: bool,
}

impl<T: Real> Solution<T> {
    pub fn outer_iterations(&self) -> usize {
        self.outer_history.len()
    }

    /// Outer slice distances never increase.
    pub fn outer_monotone(&self) -> bool {
        self.outer_history.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Over-relaxation factor from a Jacobi spectral-radius estimate.
///
/// For a tridiagonal row with constant coefficients the Jacobi eigenvalues
/// are `2√(l·u)·cos(πj/M)/d`; coupling adds at most `Σλ/d`. The largest row
/// value serves as the estimate `μ` and `ω = 2/(1 + √(1 − μ²))`.
fn auto_omega<T: Real>(ops: &[&RegimeOperator<T>], shift: T, m: usize) -> T {
    let c = (std::f64::consts::PI / m as f64).cos();
    let mut mu = 0.0f64;
    for op in ops {
        let rate = op.total_rate().as_f64();
        for n in 1..m {
            let lu = (op.lower[n] * op.upper[n]).as_f64().max(0.0);
            let d = (op.diag[n] + shift).as_f64();
            mu = mu.max((2.0 * lu.sqrt() * c + rate) / d);
        }
    }
    let mu = mu.min(1.0);
    let omega = 2.0 / (1.0 + (1.0 - mu * mu).sqrt());
    T::lit(omega.clamp(1.0, 1.9999))
}

/// Projected SOR for the coupled homogeneous obstacle problem.
///
/// Sweeps regimes in ascending order and nodes left to right, each update
/// using the freshest values; endpoints stay pinned.
pub fn solve_homogeneous<T: Real>(
    spec: &ProblemSpec,
    grid: &Grid1D<T>,
    opts: &SolveOptions<T>,
) -> Result<Solution<T>, HjbError> {
    let order: Vec<usize> = (0..spec.k()).collect();
    solve_homogeneous_ordered(spec, grid, opts, &order)
}

/// [`solve_homogeneous`] with an explicit regime sweep order.
pub fn solve_homogeneous_ordered<T: Real>(
    spec: &ProblemSpec,
    grid: &Grid1D<T>,
    opts: &SolveOptions<T>,
    order: &[usize],
) -> Result<Solution<T>, HjbError> {
    if !spec.chain.is_homogeneous() {
        return Err(HjbError::Mode(
            "the homogeneous solver needs constant hazards and weights".into(),
        ));
    }
    let k = spec.k();
    let m = grid.m();
    let len = grid.len();
    let ops = (0..k)
        .map(|i| assemble_operator(spec, grid, i, 0.0))
        .collect::<Result<Vec<_>, _>>()?;
    let data = NodeData::new(spec, grid)?;
    let mut field = ValueField::obstacle(*grid, None, data.minus_h.clone(), opts.tol_stop);
    for i in 0..k {
        let v = field.slice_mut(0, i);
        v[0] = data.pinned[i][0];
        v[m] = data.pinned[i][1];
    }
    let mut omega = opts
        .omega
        .unwrap_or_else(|| auto_omega(&ops.iter().collect::<Vec<_>>(), T::zero(), m));

    let mut iterations = 0;
    let mut last_update = T::infinity();
    let mut best_update = T::infinity();
    let mut since_best = 0usize;
    let stall_sweeps = 2 * m + 50;
    let mut converged = false;
    let start = field.values_mut().to_vec();
    let values = field.values_mut();
    while iterations < opts.max_iter {
        iterations += 1;
        // Over-relaxation is only guaranteed to converge near ω = 1 for the
        // coupled system. Divergence restarts with a smaller factor; a long
        // run without a new best update shrinks it in place.
        let diverged = !(last_update <= T::lit(DIVERGENCE_FACTOR) * best_update);
        if omega > T::one() && (diverged || since_best > stall_sweeps) {
            omega = T::one() + T::lit(0.5) * (omega - T::one());
            if omega - T::one() < T::lit(1e-3) {
                omega = T::one();
            }
            if diverged {
                log::warn!("projected SOR diverged; restarting with omega = {omega}");
                values.copy_from_slice(&start);
                best_update = T::infinity();
            } else {
                log::info!("projected SOR stalled; continuing with omega = {omega}");
            }
            since_best = 0;
        }
        let mut delta = T::zero();
        for &i in order {
            let op = &ops[i];
            let pi = &data.pi[i];
            let mh = &data.minus_h[i];
            let base = i * len;
            for n in 1..m {
                let mut rhs = pi[n];
                for (j, &w) in op.coupling.iter().enumerate() {
                    if j != i {
                        rhs += w * values[j * len + n];
                    }
                }
                let old = values[base + n];
                let gs = (rhs - op.lower[n] * values[base + n - 1] - op.upper[n] * values[base + n + 1])
                    / op.diag[n];
                let new = (old + omega * (gs - old)).max(mh[n]);
                delta = delta.max((new - old).abs());
                values[base + n] = new;
            }
        }
        last_update = delta;
        if delta < best_update {
            best_update = delta;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "projected SOR stopped after {iterations} sweeps with update {last_update} (tolerance {})",
            opts.tol
        );
    }

    for i in 0..k {
        let v = field.slice(0, i).to_vec();
        for n in 1..m {
            let op = &ops[i];
            let coupled = |j: usize| field.value(n, 0, j);
            let pde = (op.apply(&v, coupled, n) - data.pi[i][n]) / op.diag[n];
            let r = pde.min(v[n] - data.minus_h[i][n]);
            field.set_node_residual(n, 0, i, r);
        }
    }
    finish(
        field,
        converged,
        iterations,
        last_update,
        omega,
        Vec::new(),
        false,
    )
}

fn finish<T: Real>(
    mut field: ValueField<T>,
    converged: bool,
    iterations: usize,
    last_update: T,
    omega: T,
    outer_history: Vec<T>,
    damped: bool,
) -> Result<Solution<T>, HjbError> {
    field.refresh_flags();
    let mut worst = T::zero();
    for level in 0..field.levels() {
        for i in 0..field.k {
            for n in 0..field.grid.len() {
                worst = worst.max(field.node_residual(n, level, i).abs());
            }
        }
    }
    field.residual = worst;
    let boundary = FreeBoundary::from_field(&field);
    Ok(Solution {
        field,
        boundary,
        converged,
        iterations,
        last_update,
        omega,
        outer_history,
        damped,
    })
}

/// One projected SOR solve of a tridiagonal obstacle problem
/// `(l, d, u)·v = rhs`, `v ≥ floor`, endpoints fixed. Returns sweeps used and
/// the last update.
#[allow(clippy::too_many_arguments)]
fn psor_tridiagonal<T: Real>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &[T],
    floor: &[T],
    v: &mut [T],
    omega: T,
    tol: T,
    max_iter: usize,
) -> (usize, T) {
    let m = v.len() - 1;
    let mut delta = T::infinity();
    for sweep in 1..=max_iter {
        delta = T::zero();
        for n in 1..m {
            let old = v[n];
            let gs = (rhs[n] - lower[n] * v[n - 1] - upper[n] * v[n + 1]) / diag[n];
            let new = (old + omega * (gs - old)).max(floor[n]);
            delta = delta.max((new - old).abs());
            v[n] = new;
        }
        if delta < tol {
            return (sweep, delta);
        }
    }
    (max_iter, delta)
}

/// Per-level data of the age-truncated solve.
struct Level<T> {
    ops: Vec<RegimeOperator<T>>,
    omega: Vec<T>,
}

/// Age-truncated solver for the inhomogeneous system.
///
/// The reset coupling `λ_{i,j}(t)(v(x,0,j) − v(x,t,i))` makes the problem
/// nonlocal in age. It is resolved by a fixed point on the age-zero slice
/// `w`: with `w` frozen, ages are swept backward from `Υ` (where `v = −h`),
/// each level being an implicit-in-age obstacle problem that decouples
/// across regimes. The new age-zero slice replaces `w` until successive
/// slices agree to `tol_fp`; a stalled iteration switches to damped updates.
pub fn solve_truncated_inhomogeneous<T: Real>(
    spec: &ProblemSpec,
    grid: &Grid1D<T>,
    ages: &AgeGrid<T>,
    opts: &SolveOptions<T>,
) -> Result<Solution<T>, HjbError> {
    let k = spec.k();
    let m = grid.m();
    let len = grid.len();
    let big_n = ages.n();
    let inv_dt = T::one() / ages.dt();
    let data = NodeData::new(spec, grid)?;
    let levels = (0..big_n)
        .map(|a| {
            let ops = (0..k)
                .map(|i| assemble_operator(spec, grid, i, ages.t(a).as_f64()))
                .collect::<Result<Vec<_>, _>>()?;
            let omega = ops
                .iter()
                .map(|op| opts.omega.unwrap_or_else(|| auto_omega(&[op], inv_dt, m)))
                .collect();
            Ok(Level { ops, omega })
        })
        .collect::<Result<Vec<_>, HjbError>>()?;

    let mut field = ValueField::obstacle(*grid, Some(*ages), data.minus_h.clone(), opts.tol_stop);
    for a in 0..big_n {
        for i in 0..k {
            let v = field.slice_mut(a, i);
            v[0] = data.pinned[i][0];
            v[m] = data.pinned[i][1];
        }
    }
    let inner_tol = opts.tol.min(T::lit(0.01) * opts.tol_fp);
    let mut w: Vec<Vec<T>> = data.minus_h.clone();
    let mut history: Vec<T> = Vec::new();
    let mut theta = T::one();
    let mut damped = false;
    let mut stall = 0;
    let mut converged = false;
    let mut sweeps = 0usize;
    let mut last_update = T::zero();
    let mut inner_ok = true;
    let mut diag = vec![T::zero(); len];
    let mut rhs = vec![T::zero(); len];

    for outer in 0..opts.max_outer {
        for a in (0..big_n).rev() {
            let level = &levels[a];
            for i in 0..k {
                let op = &level.ops[i];
                let next = field.slice(a + 1, i).to_vec();
                for n in 1..m {
                    diag[n] = op.diag[n] + inv_dt;
                    let mut b = data.pi[i][n] + next[n] * inv_dt;
                    for (j, &rate) in op.coupling.iter().enumerate() {
                        if j != i {
                            b += rate * w[j][n];
                        }
                    }
                    rhs[n] = b;
                }
                let v = field.slice_mut(a, i);
                if outer == 0 {
                    v[1..m].copy_from_slice(&next[1..m]);
                }
                let (used, upd) = psor_tridiagonal(
                    &op.lower,
                    &diag,
                    &op.upper,
                    &rhs,
                    &data.minus_h[i],
                    v,
                    level.omega[i],
                    inner_tol,
                    opts.max_iter,
                );
                sweeps += used;
                last_update = last_update.max(upd);
                if upd >= inner_tol {
                    inner_ok = false;
                }
            }
        }
        let mut dist = T::zero();
        for (i, wi) in w.iter_mut().enumerate() {
            let slice = field.slice(0, i);
            for n in 0..len {
                let step = slice[n] - wi[n];
                dist = dist.max(step.abs());
                wi[n] += theta * step;
            }
        }
        if let Some(&prev) = history.last() {
            stall = if dist >= prev { stall + 1 } else { 0 };
        }
        history.push(dist);
        if dist < opts.tol_fp {
            converged = inner_ok;
            break;
        }
        if stall >= STALL_WINDOW && !damped {
            log::info!("outer slice distance stalled at {dist}; switching to damping {DAMPING}");
            theta = T::lit(DAMPING);
            damped = true;
        }
    }
    if !converged {
        let tail: Vec<String> = history.iter().rev().take(2).map(|d| d.to_string()).collect();
        log::warn!(
            "age-truncated solve did not converge after {} outer iterations; last slice distances {}",
            history.len(),
            tail.join(", ")
        );
    }

    for a in 0..big_n {
        for i in 0..k {
            let op = &levels[a].ops[i];
            let v = field.slice(a, i).to_vec();
            let next = field.slice(a + 1, i).to_vec();
            for n in 1..m {
                let coupled = |j: usize| w[j][n];
                let d = op.diag[n] + inv_dt;
                let pde = (op.apply(&v, coupled, n) + (v[n] - next[n]) * inv_dt - data.pi[i][n]) / d;
                let r = pde.min(v[n] - data.minus_h[i][n]);
                field.set_node_residual(n, a, i, r);
            }
        }
    }
    finish(
        field,
        converged,
        sweeps,
        last_update,
        levels[0].omega[0],
        history,
        damped,
    )
}

/// Dispatches on the problem mode using the problem's own grid settings.
pub fn solve_problem<T: Real>(spec: &ProblemSpec) -> Result<Solution<T>, HjbError> {
    let grid = Grid1D::for_problem(spec, spec.grid.m)?;
    let opts = SolveOptions::for_grid(spec, spec.grid.m);
    match spec.mode {
        Mode::Homogeneous => solve_homogeneous(spec, &grid, &opts),
        Mode::Inhomogeneous => {
            let ages = AgeGrid::for_problem(spec)?;
            solve_truncated_inhomogeneous(spec, &grid, &ages, &opts)
        }
    }
}

/// Solves a tridiagonal system with identity end rows by the Thomas
/// algorithm.
fn thomas<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Vec<T> {
    let len = rhs.len();
    let mut c = vec![T::zero(); len];
    let mut d = vec![T::zero(); len];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for n in 1..len {
        let denom = diag[n] - lower[n] * c[n - 1];
        c[n] = upper[n] / denom;
        d[n] = (rhs[n] - lower[n] * d[n - 1]) / denom;
    }
    let mut out = vec![T::zero(); len];
    out[len - 1] = d[len - 1];
    for n in (0..len - 1).rev() {
        out[n] = d[n] - c[n] * out[n + 1];
    }
    out
}

/// One implicit continuation step of length `δ` with the obstacle enforced:
/// the solution `u` of
/// `min{(−L̃ + 1/δ)u − Π − v_next/δ − Σ_j λ_{i,j} v(·,0,j), u + h} = 0`
/// with the cross-regime values taken from the solved field.
///
/// For age fields `level` selects `t_level` and `δ = Δt`, `v_next` being
/// the next level; for homogeneous fields `v_next = v` and `δ = delta`. A
/// solved field is a fixed point of this map.
pub fn continuation_step<T: Real>(
    spec: &ProblemSpec,
    field: &ValueField<T>,
    level: usize,
    delta: T,
) -> Result<Vec<Vec<T>>, HjbError> {
    let grid = &field.grid;
    let m = grid.m();
    let (t, dt, next_level) = match field.ages {
        Some(ages) => {
            if level >= ages.n() {
                return Err(HjbError::InvalidGrid(format!("no age level after {level}")));
            }
            (ages.t(level).as_f64(), ages.dt(), level + 1)
        }
        None => (0.0, delta, 0),
    };
    if !(dt > T::zero()) {
        return Err(HjbError::InvalidGrid(format!(
            "step length {dt} must be positive"
        )));
    }
    let inv = T::one() / dt;
    let data = NodeData::new(spec, grid)?;
    let mut out = Vec::with_capacity(field.k);
    for i in 0..field.k {
        let op = assemble_operator(spec, grid, i, t)?;
        let next = field.slice(next_level, i);
        let own = field.slice(level, i);
        let mh = &data.minus_h[i];
        let mut diag = op.diag.clone();
        let mut rhs = vec![T::zero(); grid.len()];
        rhs[0] = own[0];
        rhs[m] = own[m];
        for n in 1..m {
            diag[n] += inv;
            let mut b = data.pi[i][n] + next[n] * inv;
            for (j, &rate) in op.coupling.iter().enumerate() {
                if j != i {
                    b += rate * field.value(n, 0, j);
                }
            }
            rhs[n] = b;
        }
        let mut u = thomas(&op.lower, &diag, &op.upper, &rhs);
        for n in 1..m {
            u[n] = u[n].max(mh[n]);
        }
        let scale = u.iter().fold(T::one(), |a, &b| a.max(b.abs()));
        let tol = T::epsilon() * T::lit(64.0) * scale;
        let omega = auto_omega(&[&op], inv, m);
        psor_tridiagonal(
            &op.lower,
            &diag,
            &op.upper,
            &rhs,
            mh,
            &mut u,
            omega,
            tol,
            1000 * m,
        );
        out.push(u);
    }
    Ok(out)
}
