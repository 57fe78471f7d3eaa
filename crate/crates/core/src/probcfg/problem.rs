use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use super::expr::{Expression, Var};
use crate::chain::RegimeChainSpec;
use crate::sde::{DiffusionSpec, PayoffSpec};

pub const DEFAULT_AGE_NODES: usize = 200;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-8;
pub const DEFAULT_MC_DT: f64 = 1e-3;
pub const DEFAULT_MC_PATHS: usize = 10_000;
/// Default age horizon makes `e^{-εΥ}` at most this.
const UPSILON_TAIL: f64 = 1e-6;
/// Default simulation horizon makes `e^{-ε·horizon}` at most this.
const MC_TAIL: f64 = 1e-8;
/// Fine grid used by the load-time coefficient checks.
const CHECK_NODES: usize = 4097;
const CHECK_AGES: usize = 1000;
const ROW_SUM_TOL: f64 = 1e-12;
const CONTINUITY_RATIO: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Homogeneous,
    Inhomogeneous,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Homogeneous => "homogeneous",
            Mode::Inhomogeneous => "inhomogeneous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSettings {
    /// Number of spatial intervals; the grid has `m + 1` nodes.
    pub m: usize,
    /// Number of age intervals.
    pub n: usize,
    /// Age truncation horizon `Υ`.
    pub upsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    /// `None` means `200·M·k`.
    pub max_iter: Option<usize>,
    pub tol_fp: f64,
    /// `None` picks the relaxation factor from the grid size.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McDefaults {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
}

/// A fully loaded problem. Regimes are 0-based in code.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub k: usize,
    pub mode: Mode,
    pub chain: RegimeChainSpec,
    pub diffusion: DiffusionSpec,
    pub payoff: PayoffSpec,
    pub grid: GridSettings,
    pub solver: SolverSettings,
    pub mc: McDefaults,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl Issue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

/// Every violated invariant found while loading a problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.issues
            .iter()
            .any(|i| i.key.contains(needle) || i.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "problem validation failed ({} issue(s))", self.issues.len())?;
        for issue in &self.issues {
            write!(f, "\n  {}: {}", issue.key, issue.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

pub fn load_problem(text: &str) -> Result<ProblemSpec, ValidationReport> {
    load_problem_with(text, &[])
}

/// Loads `text` with `overrides` replacing (or adding) file keys.
pub fn load_problem_with(
    text: &str,
    overrides: &[(String, String)],
) -> Result<ProblemSpec, ValidationReport> {
    let mut issues = Vec::new();
    let mut entries = parse_lines(text, &mut issues);
    for (key, value) in overrides {
        entries.insert(key.clone(), value.clone());
    }
    let mut reader = Reader {
        entries,
        used: BTreeSet::new(),
        issues,
    };
    let spec = reader.build();
    let mut report = ValidationReport {
        issues: reader.finish(),
    };
    match spec {
        Some(spec) if report.is_empty() => {
            let semantic = spec.validate();
            if semantic.is_empty() {
                Ok(spec)
            } else {
                Err(semantic)
            }
        }
        _ => {
            if report.is_empty() {
                report.issues.push(Issue::new("file", "incomplete problem"));
            }
            Err(report)
        }
    }
}

pub fn load_problem_file(
    path: impl AsRef<Path>,
    overrides: &[(String, String)],
) -> Result<ProblemSpec, ValidationReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ValidationReport {
        issues: vec![Issue::new(
            path.display().to_string(),
            format!("cannot read: {e}"),
        )],
    })?;
    load_problem_with(&text, overrides)
}

fn parse_lines(text: &str, issues: &mut Vec<Issue>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(head, _)| head).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(Issue::new(format!("line {}", n + 1), "expected `key = value`"));
            continue;
        };
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            issues.push(Issue::new(key, format!("duplicate key on line {}", n + 1)));
        }
    }
    map
}

struct Reader {
    entries: BTreeMap<String, String>,
    used: BTreeSet<String>,
    issues: Vec<Issue>,
}

impl Reader {
    fn raw(&mut self, key: &str, required: bool) -> Option<String> {
        match self.entries.get(key) {
            Some(v) => {
                self.used.insert(key.to_string());
                Some(v.clone())
            }
            None => {
                if required {
                    self.issues.push(Issue::new(key, "missing required key"));
                }
                None
            }
        }
    }

    fn number(&mut self, key: &str, required: bool, allow_inf: bool) -> Option<f64> {
        let raw = self.raw(key, required)?;
        let parsed = match raw.as_str() {
            "inf" if allow_inf => Some(f64::INFINITY),
            "-inf" if allow_inf => Some(f64::NEG_INFINITY),
            s => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && !s.contains(['i', 'I', 'n', 'N'])),
        };
        if parsed.is_none() {
            let what = if allow_inf {
                "a number or ±inf"
            } else {
                "a finite number"
            };
            self.issues
                .push(Issue::new(key, format!("`{raw}` is not {what}")));
        }
        parsed
    }

    fn integer(&mut self, key: &str, required: bool) -> Option<u64> {
        let raw = self.raw(key, required)?;
        let parsed = raw.parse::<u64>().ok().or_else(|| {
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0 && v.fract() == 0.0 && *v < 2f64.powi(63))
                .map(|v| v as u64)
        });
        if parsed.is_none() {
            self.issues
                .push(Issue::new(key, format!("`{raw}` is not a non-negative integer")));
        }
        parsed
    }

    fn expr(&mut self, key: &str, required: bool, allowed: Var) -> Option<Expression> {
        let raw = self.raw(key, required)?;
        match Expression::parse(&raw) {
            Ok(e) => {
                let forbidden = match allowed {
                    Var::X => Var::T,
                    Var::T => Var::X,
                };
                if e.uses(forbidden) {
                    let (ok, bad) = match allowed {
                        Var::X => ("x", "t"),
                        Var::T => ("t", "x"),
                    };
                    self.issues.push(Issue::new(
                        key,
                        format!("may depend on `{ok}` only, found `{bad}`"),
                    ));
                    None
                } else {
                    Some(e)
                }
            }
            Err(err) => {
                self.issues.push(Issue::new(key, err.to_string()));
                None
            }
        }
    }

    fn per_regime(&mut self, stem: &str, k: usize, allowed: Var) -> Option<Vec<Expression>> {
        let items: Vec<_> = (1..=k)
            .map(|i| self.expr(&format!("{stem}.{i}"), true, allowed))
            .collect();
        items.into_iter().collect()
    }

    fn build(&mut self) -> Option<ProblemSpec> {
        let k = self.integer("k", true)? as usize;
        if k == 0 {
            self.issues.push(Issue::new("k", "need at least one regime"));
            return None;
        }
        let a = self.number("domain.a", true, true);
        let b = self.number("domain.b", true, true);
        let lo = self.number("region.lo", true, true);
        let hi = self.number("region.hi", true, true);
        let trunc_lo = self.number("trunc.lo", false, false);
        let trunc_hi = self.number("trunc.hi", false, false);
        let m = self.integer("grid.M", true);
        let n = self.integer("grid.N", false);
        let upsilon = self.number("upsilon", false, false);
        let dt = self.number("mc.dt", false, false);
        let horizon = self.number("mc.horizon", false, false);
        let paths = self.integer("mc.paths", false);
        let seed = self.integer("mc.seed", false);
        let tol = self.number("solver.tol", false, false);
        let max_iter = self.integer("solver.max_iter", false);
        let tol_fp = self.number("solver.tol_fp", false, false);
        let omega = self.number("solver.omega", false, false);
        let mode = match self.raw("mode", false).as_deref() {
            None => None,
            Some("homogeneous") => Some(Mode::Homogeneous),
            Some("inhomogeneous") => Some(Mode::Inhomogeneous),
            Some(other) => {
                self.issues.push(Issue::new(
                    "mode",
                    format!("`{other}` is not `homogeneous` or `inhomogeneous`"),
                ));
                None
            }
        };

        let alpha = self.per_regime("alpha", k, Var::X);
        let sigma = self.per_regime("sigma", k, Var::X);
        let pi = self.per_regime("pi", k, Var::X);
        let h = self.per_regime("h", k, Var::X);
        let r = self.per_regime("r", k, Var::X);
        let lambda = self.per_regime("lambda", k, Var::T);
        let eps: Option<Vec<f64>> = (1..=k)
            .map(|i| self.number(&format!("eps.{i}"), true, false))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        let far_lo: Vec<Option<Expression>> = (1..=k)
            .map(|i| self.expr(&format!("bc.lo.{i}"), false, Var::X))
            .collect();
        let far_hi: Vec<Option<Expression>> = (1..=k)
            .map(|i| self.expr(&format!("bc.hi.{i}"), false, Var::X))
            .collect();

        let mut probs_ok = true;
        let mut trans_prob = vec![vec![None; k]; k];
        for i in 1..=k {
            let diag = format!("p.{i}.{i}");
            if self.entries.contains_key(&diag) {
                self.used.insert(diag.clone());
                self.issues.push(Issue::new(diag, "self-transition forbidden"));
                probs_ok = false;
            }
            for j in (1..=k).filter(|&j| j != i) {
                match self.expr(&format!("p.{i}.{j}"), true, Var::T) {
                    Some(e) => trans_prob[i - 1][j - 1] = Some(e),
                    None => probs_ok = false,
                }
            }
        }

        let (a, b, lo, hi, m) = (a?, b?, lo?, hi?, m?);
        let (alpha, sigma, pi, h, r, lambda, eps) = (alpha?, sigma?, pi?, h?, r?, lambda?, eps?);
        if !probs_ok {
            return None;
        }
        let chain = match RegimeChainSpec::new(lambda, trans_prob) {
            Ok(c) => c,
            Err(e) => {
                self.issues.push(Issue::new("p", e.to_string()));
                return None;
            }
        };
        let eps_min = eps.iter().copied().fold(f64::INFINITY, f64::min);
        let tail_horizon = |tail: f64| {
            if eps_min > 0.0 {
                -tail.ln() / eps_min
            } else {
                f64::NAN
            }
        };
        let mode = mode.unwrap_or(if chain.is_homogeneous() {
            Mode::Homogeneous
        } else {
            Mode::Inhomogeneous
        });
        Some(ProblemSpec {
            k,
            mode,
            chain,
            diffusion: DiffusionSpec {
                domain: (a, b),
                region: (lo, hi),
                truncation: (trunc_lo, trunc_hi),
                drift: alpha,
                vol: sigma,
            },
            payoff: PayoffSpec {
                running: pi,
                terminal_cost: h,
                discount: r,
                epsilon: eps,
                far_field: [far_lo, far_hi],
            },
            grid: GridSettings {
                m: m as usize,
                n: n.map_or(DEFAULT_AGE_NODES, |v| v as usize),
                upsilon: upsilon.unwrap_or_else(|| tail_horizon(UPSILON_TAIL)),
            },
            solver: SolverSettings {
                tol: tol.unwrap_or(DEFAULT_SOLVER_TOL),
                max_iter: max_iter.map(|v| v as usize),
                tol_fp: tol_fp.unwrap_or(DEFAULT_FIXED_POINT_TOL),
                omega,
            },
            mc: McDefaults {
                dt: dt.unwrap_or(DEFAULT_MC_DT),
                horizon: horizon.unwrap_or_else(|| tail_horizon(MC_TAIL)),
                paths: paths.map_or(DEFAULT_MC_PATHS, |v| v as usize),
                seed: seed.unwrap_or(0),
            },
        })
    }

    fn finish(mut self) -> Vec<Issue> {
        for key in self.entries.keys() {
            if !self.used.contains(key) {
                self.issues.push(Issue::new(key.clone(), "unknown key"));
            }
        }
        self.issues
    }
}

/// Discount guard: `r(x,i) > ε_i > 0` at every node of `xs`.
///
/// With `r ≡ 0` every constant solves the variational inequality, so a
/// problem failing this bound has no well-defined value to compute.
pub fn discount_issues(payoff: &PayoffSpec, xs: &[f64]) -> Vec<Issue> {
    let mut issues = Vec::new();
    for (i, (expr, &eps)) in payoff.discount.iter().zip(&payoff.epsilon).enumerate() {
        let key = format!("r.{}", i + 1);
        if !(eps > 0.0) {
            issues.push(Issue::new(
                format!("eps.{}", i + 1),
                format!("discount floor must be positive, got {eps}"),
            ));
            continue;
        }
        for &x in xs {
            match expr.eval(x, 0.0) {
                Ok(r) if r > eps => {}
                Ok(r) => {
                    issues.push(Issue::new(
                        key,
                        format!(
                            "discount guard: r = {r} at x = {x} does not exceed eps = {eps}; \
                             without a positive discount floor the stopping problem admits \
                             non-unique solutions (every constant solves it when r = 0)"
                        ),
                    ));
                    break;
                }
                Err(e) => {
                    issues.push(Issue::new(key, format!("at x = {x}: {e}")));
                    break;
                }
            }
        }
    }
    issues
}

/// Index `n` of an isolated jump between samples `n` and `n + 1`.
fn find_jump(values: &[f64]) -> Option<usize> {
    let scale = 1.0 + values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-12 * scale;
    let d: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    (0..d.len()).find(|&n| {
        let left = if n > 0 { d[n - 1] } else { 0.0 };
        let right = d.get(n + 1).copied().unwrap_or(0.0);
        let neighbour = if d.len() == 1 {
            floor
        } else {
            left.max(right).max(floor)
        };
        d[n] > CONTINUITY_RATIO * neighbour
    })
}

impl ProblemSpec {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Iteration cap of the obstacle solver after defaulting.
    pub fn max_iter(&self) -> usize {
        self.solver.max_iter.unwrap_or(200 * self.grid.m * self.k)
    }

    /// Fine sampling grid of the computational interval used by load checks.
    pub fn check_nodes(&self) -> Vec<f64> {
        let (lo, hi) = self.diffusion.interval();
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Vec::new();
        }
        let n = CHECK_NODES - 1;
        (0..=n)
            .map(|j| {
                if j == n {
                    hi
                } else {
                    lo + (hi - lo) * j as f64 / n as f64
                }
            })
            .collect()
    }

    /// Effective settings after defaulting, as `(key, value)` pairs.
    pub fn effective_parameters(&self) -> Vec<(&'static str, String)> {
        vec![
            ("k", self.k.to_string()),
            ("mode", self.mode.as_str().to_string()),
            ("grid.M", self.grid.m.to_string()),
            ("grid.N", self.grid.n.to_string()),
            ("upsilon", format!("{:?}", self.grid.upsilon)),
            ("solver.tol", format!("{:?}", self.solver.tol)),
            ("solver.max_iter", self.max_iter().to_string()),
            ("solver.tol_fp", format!("{:?}", self.solver.tol_fp)),
            (
                "solver.omega",
                self.solver.omega.map_or("auto".into(), |w| format!("{w:?}")),
            ),
            ("mc.dt", format!("{:?}", self.mc.dt)),
            ("mc.horizon", format!("{:?}", self.mc.horizon)),
            ("mc.paths", self.mc.paths.to_string()),
            ("mc.seed", self.mc.seed.to_string()),
        ]
    }

    /// Cross-field checks. Run by the loaders; call it again after editing
    /// a spec by hand.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut push = |key: &str, msg: String| issues.push(Issue::new(key, msg));
        let d = &self.diffusion;
        let (a, b) = d.domain;
        let (lo, hi) = d.region;
        if !(a < b) {
            push("domain.a", format!("domain ({a}, {b}) is empty"));
        }
        if !(lo < hi) {
            push("region.lo", format!("region [{lo}, {hi}] is empty"));
        }
        if lo < a || hi > b {
            push(
                "region.lo",
                format!("region [{lo}, {hi}] leaves the domain ({a}, {b})"),
            );
        }
        if let Some(t) = d.truncation.0 {
            if !(t >= lo && t < hi) {
                push("trunc.lo", format!("{t} is outside the region [{lo}, {hi})"));
            }
        } else if !lo.is_finite() {
            push("trunc.lo", "required because region.lo is infinite".into());
        }
        if let Some(t) = d.truncation.1 {
            if !(t <= hi && t > lo) {
                push("trunc.hi", format!("{t} is outside the region ({lo}, {hi}]"));
            }
        } else if !hi.is_finite() {
            push("trunc.hi", "required because region.hi is infinite".into());
        }
        let (clo, chi) = d.interval();
        if clo.is_finite() && chi.is_finite() && !(clo < chi) {
            push(
                "trunc.lo",
                format!("computational interval [{clo}, {chi}] is empty"),
            );
        }
        if self.grid.m < 3 {
            push(
                "grid.M",
                format!("need at least 3 intervals, got {}", self.grid.m),
            );
        }
        if self.grid.n < 1 {
            push("grid.N", "need at least one age interval".into());
        }
        if !(self.grid.upsilon > 0.0 && self.grid.upsilon.is_finite()) {
            push("upsilon", format!("must be positive, got {}", self.grid.upsilon));
        }
        if !(self.solver.tol > 0.0) {
            push("solver.tol", "must be positive".into());
        }
        if !(self.solver.tol_fp > 0.0) {
            push("solver.tol_fp", "must be positive".into());
        }
        if self.solver.max_iter == Some(0) {
            push("solver.max_iter", "must be positive".into());
        }
        if let Some(w) = self.solver.omega {
            if !(w > 0.0 && w < 2.0) {
                push("solver.omega", format!("{w} is outside (0, 2)"));
            }
        }
        if !(self.mc.dt > 0.0) {
            push("mc.dt", "must be positive".into());
        }
        if !(self.mc.horizon > 0.0 && self.mc.horizon.is_finite()) {
            push("mc.horizon", format!("must be positive, got {}", self.mc.horizon));
        }
        if self.mc.paths < 2 {
            push("mc.paths", "need at least two paths".into());
        }

        let xs = self.check_nodes();
        if !xs.is_empty() {
            self.check_coefficients(&xs, &mut issues);
            issues.extend(discount_issues(&self.payoff, &xs));
        }
        self.check_chain(&mut issues);
        ValidationReport { issues }
    }

    fn check_coefficients(&self, xs: &[f64], issues: &mut Vec<Issue>) {
        let d = &self.diffusion;
        let p = &self.payoff;
        for i in 0..self.k {
            let fields: [(&str, &Expression); 5] = [
                ("alpha", &d.drift[i]),
                ("sigma", &d.vol[i]),
                ("pi", &p.running[i]),
                ("h", &p.terminal_cost[i]),
                ("r", &p.discount[i]),
            ];
            for (stem, expr) in fields {
                let key = format!("{stem}.{}", i + 1);
                let values: Result<Vec<f64>, _> = xs
                    .iter()
                    .map(|&x| expr.eval(x, 0.0).map_err(|e| (x, e)))
                    .collect();
                let values = match values {
                    Ok(v) => v,
                    Err((x, e)) => {
                        issues.push(Issue::new(key, format!("at x = {x}: {e}")));
                        continue;
                    }
                };
                if stem == "sigma" {
                    if let Some(n) = values.iter().position(|&s| s < 0.0) {
                        issues.push(Issue::new(
                            key.clone(),
                            format!("volatility {} is negative at x = {}", values[n], xs[n]),
                        ));
                    }
                }
                if let Some(n) = find_jump(&values) {
                    issues.push(Issue::new(
                        key,
                        format!(
                            "discontinuous between x = {} and x = {} ({} -> {})",
                            xs[n],
                            xs[n + 1],
                            values[n],
                            values[n + 1]
                        ),
                    ));
                }
            }
        }
        let (clo, chi) = d.interval();
        for (slot, at, stem) in [(0, clo, "bc.lo"), (1, chi, "bc.hi")] {
            for (i, e) in p.far_field[slot].iter().enumerate() {
                let Some(e) = e else { continue };
                let key = format!("{stem}.{}", i + 1);
                let end = if slot == 0 {
                    crate::sde::End::Lower
                } else {
                    crate::sde::End::Upper
                };
                if d.end_kind(end) == crate::sde::EndKind::Boundary {
                    issues.push(Issue::new(
                        key.clone(),
                        "far-field data only applies at truncation ends; the region boundary pays -h",
                    ));
                }
                if let Err(err) = e.eval(at, 0.0) {
                    issues.push(Issue::new(key, format!("at x = {at}: {err}")));
                }
            }
        }
    }

    fn check_chain(&self, issues: &mut Vec<Issue>) {
        let k = self.k;
        let span = self.grid.upsilon.max(self.mc.horizon);
        let span = if span.is_finite() && span > 0.0 { span } else { 1.0 };
        let ages: Vec<f64> = (0..=CHECK_AGES)
            .map(|n| span * n as f64 / CHECK_AGES as f64)
            .collect();
        for j in 0..k {
            let key = format!("lambda.{}", j + 1);
            let expr = self.chain.hazard_expr(j);
            let values: Result<Vec<f64>, _> = ages
                .iter()
                .map(|&t| expr.eval(0.0, t).map_err(|e| (t, e)))
                .collect();
            match values {
                Err((t, e)) => issues.push(Issue::new(key, format!("at t = {t}: {e}"))),
                Ok(values) => {
                    if let Some(n) = values.iter().position(|&l| l < 0.0) {
                        issues.push(Issue::new(
                            key.clone(),
                            format!("hazard {} is negative at t = {}", values[n], ages[n]),
                        ));
                    }
                    if k == 1 && values.iter().any(|&l| l > 0.0) {
                        issues.push(Issue::new(
                            key.clone(),
                            "a single regime has nowhere to jump; its hazard must be 0",
                        ));
                    }
                    if self.mode == Mode::Homogeneous && k > 1 && values.iter().any(|&l| !(l > 0.0)) {
                        issues.push(Issue::new(
                            key.clone(),
                            "homogeneous mode needs a strictly positive hazard",
                        ));
                    }
                    if let Some(n) = find_jump(&values) {
                        issues.push(Issue::new(
                            key,
                            format!("discontinuous between t = {} and t = {}", ages[n], ages[n + 1]),
                        ));
                    }
                }
            }
        }
        if self.mode == Mode::Homogeneous && !self.chain.is_homogeneous() {
            issues.push(Issue::new(
                "mode",
                "homogeneous mode requires constant lambda and p",
            ));
        }
        if k < 2 {
            return;
        }
        for j in 0..k {
            let mut reported = false;
            for &t in &ages[1..] {
                let mut sum = 0.0;
                for m in (0..k).filter(|&m| m != j) {
                    let key = format!("p.{}.{}", j + 1, m + 1);
                    let expr = self.chain.trans_prob_expr(j, m).expect("off-diagonal weight");
                    match expr.eval(0.0, t) {
                        Ok(p) if (0.0..=1.0).contains(&p) => sum += p,
                        Ok(p) => {
                            if !reported {
                                issues.push(Issue::new(
                                    key,
                                    format!("weight {p} at t = {t} is outside [0, 1]"),
                                ));
                            }
                            reported = true;
                        }
                        Err(e) => {
                            if !reported {
                                issues.push(Issue::new(key, format!("at t = {t}: {e}")));
                            }
                            reported = true;
                        }
                    }
                }
                if !reported && (sum - 1.0).abs() > ROW_SUM_TOL {
                    issues.push(Issue::new(
                        format!("p.{}", j + 1),
                        format!("weights out of regime {} sum to {sum} at t = {t}", j + 1),
                    ));
                    reported = true;
                }
            }
        }
    }
}
