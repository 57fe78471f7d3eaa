use rand::Rng;
use rand_distr::StandardNormal;

use super::{End, SdeError};
use crate::probcfg::ProblemSpec;
use crate::rng::path_rng;

/// Initial observation `(X_0, ζ_0, θ_0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartState {
    pub x: f64,
    pub age: f64,
    pub regime: usize,
}

impl StartState {
    pub fn new(x: f64, age: f64, regime: usize) -> Self {
        Self { x, age, regime }
    }
}

/// One mesh point of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub s: f64,
    pub x: f64,
    pub age: f64,
    pub regime: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exit {
    pub index: usize,
    pub end: End,
}

/// Simulated `(X, ζ, θ, ρ)` on a mesh that contains every chain jump time.
///
/// The regime column is right-continuous: at a jump node it holds the
/// regime entered. Integrals over `(s_n, s_{n+1}]` use `regime[n]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiffusionPath {
    pub mesh: Vec<f64>,
    pub x: Vec<f64>,
    pub age: Vec<f64>,
    pub regime: Vec<usize>,
    pub discount_integral: Vec<f64>,
    pub exit: Option<Exit>,
    pub horizon: f64,
}

impl DiffusionPath {
    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn exit_index(&self) -> Option<usize> {
        self.exit.map(|e| e.index)
    }

    pub fn point(&self, n: usize) -> PathPoint {
        PathPoint {
            s: self.mesh[n],
            x: self.x[n],
            age: self.age[n],
            regime: self.regime[n],
            rho: self.discount_integral[n],
        }
    }

    fn clear(&mut self) {
        self.mesh.clear();
        self.x.clear();
        self.age.clear();
        self.regime.clear();
        self.discount_integral.clear();
        self.exit = None;
    }

    fn push(&mut self, p: PathPoint) {
        self.mesh.push(p.s);
        self.x.push(p.x);
        self.age.push(p.age);
        self.regime.push(p.regime);
        self.discount_integral.push(p.rho);
    }

    /// CSV dump with header `s,x,age,regime,rho`; regimes are 1-based.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["s", "x", "age", "regime", "rho"])?;
        for n in 0..self.len() {
            w.write_record(&[
                self.mesh[n].to_string(),
                self.x[n].to_string(),
                self.age[n].to_string(),
                (self.regime[n] + 1).to_string(),
                self.discount_integral[n].to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Euler–Maruyama path for stream `stream` of `seed`.
pub fn simulate_path(
    problem: &ProblemSpec,
    start: StartState,
    dt: f64,
    horizon: f64,
    seed: u64,
    stream: u64,
) -> Result<DiffusionPath, SdeError> {
    let mut rng = path_rng(seed, stream);
    let mut path = DiffusionPath::default();
    simulate_path_into(problem, start, dt, horizon, &mut rng, &mut path, |_| true)?;
    Ok(path)
}

/// Simulates into `path`, reusing its buffers. Generation stops early once
/// `keep_going` returns false for the newest mesh point.
pub fn simulate_path_into<R, F>(
    problem: &ProblemSpec,
    start: StartState,
    dt: f64,
    horizon: f64,
    rng: &mut R,
    path: &mut DiffusionPath,
    mut keep_going: F,
) -> Result<(), SdeError>
where
    R: Rng + ?Sized,
    F: FnMut(&PathPoint) -> bool,
{
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(SdeError::InvalidArgument(format!(
            "dt={dt} and horizon={horizon} must be positive"
        )));
    }
    if start.regime >= problem.k() || start.age < 0.0 {
        return Err(SdeError::InvalidArgument(format!(
            "invalid start regime {} / age {}",
            start.regime + 1,
            start.age
        )));
    }
    let diffusion = &problem.diffusion;
    let payoff = &problem.payoff;
    let (lo, hi) = diffusion.interval();
    if !(start.x >= lo && start.x <= hi) {
        return Err(SdeError::StartOutsideRegion { x0: start.x, lo, hi });
    }

    path.clear();
    path.horizon = horizon;
    let chain = problem
        .chain
        .simulate_chain(start.regime, start.age, horizon, rng)?;

    let mut p = PathPoint {
        s: 0.0,
        x: start.x,
        age: start.age,
        regime: start.regime,
        rho: 0.0,
    };
    path.push(p);
    if start.x <= lo || start.x >= hi {
        let end = if start.x <= lo { End::Lower } else { End::Upper };
        path.exit = Some(Exit { index: 0, end });
        return Ok(());
    }
    if !keep_going(&p) {
        return Ok(());
    }

    let mut next_jump = 0usize;
    let mut last_jump: Option<f64> = None;
    let mut r_left = payoff.discount(p.x, p.regime)?;
    while p.s < horizon {
        let jump_time = chain.jump_times.get(next_jump).copied().unwrap_or(f64::INFINITY);
        let target = (p.s + dt).min(jump_time).min(horizon);
        let h = target - p.s;
        let z: f64 = rng.sample(StandardNormal);
        let drift = diffusion.drift(p.x, p.regime)?;
        let vol = diffusion.vol(p.x, p.regime)?;
        let xn = p.x + drift * h + vol * h.sqrt() * z;

        if xn <= lo || xn >= hi {
            let (bound, end) = if xn <= lo {
                (lo, End::Lower)
            } else {
                (hi, End::Upper)
            };
            let s_exit = p.s + h * (bound - p.x) / (xn - p.x);
            let r_right = payoff.discount(bound, p.regime)?;
            p.rho += 0.5 * (s_exit - p.s) * (r_left + r_right);
            p.age += s_exit - p.s;
            p.s = s_exit;
            p.x = bound;
            path.push(p);
            path.exit = Some(Exit {
                index: path.len() - 1,
                end,
            });
            return Ok(());
        }

        let r_right = payoff.discount(xn, p.regime)?;
        p.rho += 0.5 * h * (r_left + r_right);
        p.s = target;
        p.x = xn;
        if target == jump_time {
            p.regime = chain.states[next_jump];
            next_jump += 1;
            last_jump = Some(jump_time);
            r_left = payoff.discount(p.x, p.regime)?;
        } else {
            r_left = r_right;
        }
        p.age = match last_jump {
            Some(nu) => p.s - nu,
            None => start.age + p.s,
        };
        path.push(p);
        if !keep_going(&p) {
            return Ok(());
        }
    }
    Ok(())
}
