//! `switchstop` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver did not converge,
//! 3 a verification check failed.

mod manifest;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use manifest::RunManifest;
use switchstop::hjb::{extract_policy, solve_problem, Solution, ValueField};
use switchstop::probcfg::{load_problem_with, ProblemSpec, ValidationReport};
use switchstop::sde::{
    mc_estimate, simulate_path, Immediate, McSettings, Never, StartState, StoppingRule, ThresholdRule,
};
use switchstop::verify::{corpus, run_case, verify_problem, write_report, ReportRow};

const EXIT_INVALID: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "switchstop",
    version,
    about = "Optimal stopping of regime-switching diffusions"
)]
struct Cli {
    /// Seed for Monte Carlo runs; replaces the file's `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, or `auto`.
    #[arg(long, global = true, default_value = "auto")]
    threads: String,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the obstacle problem and write the value field and free boundary.
    Solve {
        /// Problem file.
        problem: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also write a long-format table for plotting.
        #[arg(long)]
        plot_data: bool,
    },
    /// Estimate the payoff of a stopping rule by Monte Carlo.
    Simulate {
        problem: PathBuf,
        #[command(flatten)]
        start: Start,
        /// `immediate`, `never`, `threshold:<per-regime list>` or `from-field:<value CSV>`.
        #[arg(long)]
        policy: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the verification checks of a problem file or of the shipped corpus.
    Verify {
        #[arg(required_unless_present = "corpus", conflicts_with = "corpus")]
        problem: Option<PathBuf>,
        /// Run every shipped benchmark case instead.
        #[arg(long)]
        corpus: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write one simulated path as CSV.
    Export {
        problem: PathBuf,
        #[command(flatten)]
        start: Start,
        /// Path index, which selects the random stream.
        #[arg(long, default_value_t = 0)]
        path_index: u64,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Debug)]
struct Start {
    /// Starting state.
    #[arg(long, allow_hyphen_values = true)]
    x0: f64,
    /// Starting age of the current regime.
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    /// Starting regime, 1-based.
    #[arg(long, default_value_t = 1)]
    i0: usize,
}

impl Start {
    fn state(&self, spec: &ProblemSpec) -> anyhow::Result<StartState> {
        if self.i0 == 0 || self.i0 > spec.k() {
            bail!("--i0 must be in 1..={}", spec.k());
        }
        Ok(StartState::new(self.x0, self.t0, self.i0 - 1))
    }
}

/// Command-line replacements for problem-file keys.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long = "grid.M", value_name = "M")]
    grid_m: Option<String>,
    #[arg(long = "grid.N", value_name = "N")]
    grid_n: Option<String>,
    #[arg(long = "upsilon", value_name = "AGE")]
    upsilon: Option<String>,
    #[arg(long = "solver.tol", value_name = "TOL")]
    solver_tol: Option<String>,
    #[arg(long = "solver.max_iter", value_name = "N")]
    solver_max_iter: Option<String>,
    #[arg(long = "solver.tol_fp", value_name = "TOL")]
    solver_tol_fp: Option<String>,
    #[arg(long = "solver.omega", value_name = "W")]
    solver_omega: Option<String>,
    #[arg(long = "mc.dt", value_name = "DT")]
    mc_dt: Option<String>,
    #[arg(long = "mc.horizon", value_name = "T")]
    mc_horizon: Option<String>,
    #[arg(long = "mc.paths", value_name = "N")]
    mc_paths: Option<String>,
    /// Any other file key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn pairs(&self, seed: Option<u64>) -> anyhow::Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for raw in &self.set {
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{raw}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("grid.M", &self.grid_m),
            ("grid.N", &self.grid_n),
            ("upsilon", &self.upsilon),
            ("solver.tol", &self.solver_tol),
            ("solver.max_iter", &self.solver_max_iter),
            ("solver.tol_fp", &self.solver_tol_fp),
            ("solver.omega", &self.solver_omega),
            ("mc.dt", &self.mc_dt),
            ("mc.horizon", &self.mc_horizon),
            ("mc.paths", &self.mc_paths),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        if let Some(s) = seed {
            out.push(("mc.seed".into(), s.to_string()));
        }
        Ok(out)
    }
}

/// Error carrying its exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        Exit(EXIT_INVALID, e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Exit> {
    configure_threads(&cli.threads)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    match &cli.command {
        Command::Solve {
            problem,
            overrides,
            plot_data,
        } => cmd_solve(cli, problem, &overrides.pairs(cli.seed)?, *plot_data),
        Command::Simulate {
            problem,
            start,
            policy,
            overrides,
        } => cmd_simulate(cli, problem, start, policy, &overrides.pairs(cli.seed)?),
        Command::Verify {
            problem,
            corpus,
            overrides,
        } => {
            let pairs = overrides.pairs(cli.seed)?;
            match (problem, corpus) {
                (_, true) => cmd_verify_corpus(cli, &pairs),
                (Some(p), false) => cmd_verify_file(cli, p, &pairs),
                (None, false) => Err(anyhow!("give a problem file or --corpus").into()),
            }
        }
        Command::Export {
            problem,
            start,
            path_index,
            overrides,
        } => cmd_export(cli, problem, start, *path_index, &overrides.pairs(cli.seed)?),
    }
}

fn configure_threads(threads: &str) -> anyhow::Result<()> {
    let n = match threads {
        "auto" => 0,
        n => n
            .parse::<usize>()
            .map_err(|_| anyhow!("--threads expects a count or `auto`, got `{n}`"))?,
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "problem".into(), |s| s.to_string_lossy().into_owned())
}

fn read_problem(path: &Path) -> Result<String, Exit> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Exit::from)
}

fn load(text: &str, overrides: &[(String, String)]) -> Result<ProblemSpec, Exit> {
    load_problem_with(text, overrides).map_err(invalid)
}

fn invalid(report: ValidationReport) -> Exit {
    Exit(EXIT_INVALID, anyhow!("invalid problem:\n{report}"))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn cmd_solve(cli: &Cli, problem: &Path, overrides: &[(String, String)], plot_data: bool) -> Result<u8, Exit> {
    let clock = Instant::now();
    let text = read_problem(problem)?;
    let spec = load(&text, overrides)?;
    let name = stem(problem);
    let sol: Solution<f64> = solve_problem(&spec)?;

    let mut manifest = RunManifest::new("solve", &[(problem.display().to_string(), text)])
        .parameters(spec.effective_parameters());
    let value_path = cli.out.join(format!("{name}_v.csv"));
    sol.field.write_csv(create(&value_path)?)?;
    manifest.output(&value_path);
    let boundary_path = cli.out.join(format!("{name}_boundary.csv"));
    sol.boundary
        .write_csv(create(&boundary_path)?, sol.field.ages.is_some())?;
    manifest.output(&boundary_path);
    if plot_data {
        let plot_path = cli.out.join(format!("{name}_plot.csv"));
        write_plot_data(&sol, create(&plot_path)?)?;
        manifest.output(&plot_path);
    }

    manifest.result("converged", sol.converged);
    manifest.result("residual", sol.field.residual);
    manifest.result("iterations", sol.iterations);
    manifest.result("omega", sol.omega);
    if sol.field.ages.is_some() {
        manifest.result("outer_iterations", sol.outer_iterations());
        manifest.result("outer_damped", sol.damped);
    }
    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    let path = manifest.write(&cli.out, &name)?;
    println!(
        "converged={} residual={:e} iterations={} manifest={}",
        sol.converged,
        sol.field.residual,
        sol.iterations,
        path.display()
    );
    if sol.converged {
        Ok(0)
    } else {
        eprintln!("solver did not converge; outputs carry the last iterate");
        Ok(EXIT_NOT_CONVERGED)
    }
}

/// Long format `series,regime,t,x,y`: value, obstacle and boundary rows.
fn write_plot_data<W: std::io::Write>(sol: &Solution<f64>, out: W) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["series", "regime", "t", "x", "y"])?;
    let f = &sol.field;
    for level in 0..f.levels() {
        let t = f.ages.map_or(0.0, |a| a.t(level));
        for i in 0..f.k {
            for n in 0..f.grid.len() {
                let x = f.grid.x(n);
                let regime = (i + 1).to_string();
                w.write_record([
                    "v",
                    &regime,
                    &t.to_string(),
                    &x.to_string(),
                    &f.value(n, level, i).to_string(),
                ])?;
                if level == 0 {
                    w.write_record([
                        "minus_h",
                        &regime,
                        &t.to_string(),
                        &x.to_string(),
                        &f.minus_h(i)[n].to_string(),
                    ])?;
                }
            }
        }
    }
    for p in &sol.boundary.points {
        let t = p.t.unwrap_or(0.0);
        w.write_record([
            "boundary",
            &(p.regime + 1).to_string(),
            &t.to_string(),
            &p.x.to_string(),
            &f.value_at(p.x, t, p.regime).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

enum Policy {
    Immediate,
    Never,
    Threshold(ThresholdRule),
    Field(Box<ValueField<f64>>),
}

fn parse_policy(text: &str, spec: &ProblemSpec) -> anyhow::Result<Policy> {
    Ok(match text.split_once(':') {
        None if text == "immediate" => Policy::Immediate,
        None if text == "never" => Policy::Never,
        Some(("threshold", list)) => Policy::Threshold(ThresholdRule::parse(list, spec.k())?),
        Some(("from-field", path)) => {
            let file = File::open(path).with_context(|| format!("cannot read field file {path}"))?;
            let field = ValueField::read_csv(std::io::BufReader::new(file), 10.0 * spec.solver.tol)
                .with_context(|| format!("cannot parse field file {path}"))?;
            if field.k != spec.k() {
                bail!("field file has {} regimes, problem has {}", field.k, spec.k());
            }
            Policy::Field(Box::new(field))
        }
        _ => bail!("unknown policy `{text}`"),
    })
}

fn cmd_simulate(
    cli: &Cli,
    problem: &Path,
    start: &Start,
    policy_text: &str,
    overrides: &[(String, String)],
) -> Result<u8, Exit> {
    let clock = Instant::now();
    let text = read_problem(problem)?;
    let spec = load(&text, overrides)?;
    let name = stem(problem);
    let state = start.state(&spec)?;
    let policy = parse_policy(policy_text, &spec)?;
    let field_policy;
    let rule: &dyn StoppingRule = match &policy {
        Policy::Immediate => &Immediate,
        Policy::Never => &Never,
        Policy::Threshold(t) => t,
        Policy::Field(f) => {
            field_policy = extract_policy(f);
            &field_policy
        }
    };
    let settings = McSettings::from_problem(&spec);
    let est = mc_estimate(&spec, state, rule, &settings)?;

    let mut manifest = RunManifest::new("simulate", &[(problem.display().to_string(), text)])
        .parameters(spec.effective_parameters());
    manifest.seed = Some(settings.seed);
    manifest.parameters.insert("policy".into(), policy_text.into());
    manifest.parameters.insert("x0".into(), format!("{:?}", start.x0));
    manifest.parameters.insert("t0".into(), format!("{:?}", start.t0));
    manifest.parameters.insert("i0".into(), start.i0.to_string());

    let out_path = cli.out.join(format!("{name}_mc.csv"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(&out_path)?);
    w.write_record(["mean", "stderr", "n_paths", "censored_fraction", "seed"])?;
    w.write_record([
        est.mean.to_string(),
        est.stderr.to_string(),
        est.n_paths.to_string(),
        est.censored_fraction.to_string(),
        est.seed.to_string(),
    ])?;
    w.flush().map_err(anyhow::Error::from)?;
    manifest.output(&out_path);
    manifest.result("mean", est.mean);
    manifest.result("stderr", est.stderr);
    manifest.result("censored_fraction", est.censored_fraction);
    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    manifest.write(&cli.out, &name)?;
    println!(
        "mean={} stderr={} n={} censored_fraction={}",
        est.mean, est.stderr, est.n_paths, est.censored_fraction
    );
    Ok(0)
}

fn finish_verify(
    cli: &Cli,
    name: &str,
    mut manifest: RunManifest,
    rows: &[ReportRow],
    clock: Instant,
) -> Result<u8, Exit> {
    let report_path = cli.out.join(format!("{name}_report.csv"));
    write_report(rows, create(&report_path)?)?;
    manifest.output(&report_path);
    let failed: Vec<&ReportRow> = rows.iter().filter(|r| !r.pass).collect();
    manifest.result("checks", rows.len());
    manifest.result("failed", failed.len());
    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    manifest.write(&cli.out, name)?;
    for r in &failed {
        eprintln!(
            "FAIL {} {} {}: expected {} got {} tolerance {}",
            r.case, r.check, r.point, r.expected, r.got, r.tolerance
        );
    }
    println!(
        "{} checks, {} failed, report {}",
        rows.len(),
        failed.len(),
        report_path.display()
    );
    Ok(if failed.is_empty() { 0 } else { EXIT_VERIFY_FAILED })
}

fn cmd_verify_file(cli: &Cli, problem: &Path, overrides: &[(String, String)]) -> Result<u8, Exit> {
    let clock = Instant::now();
    let text = read_problem(problem)?;
    let spec = load(&text, overrides)?;
    let name = stem(problem);
    let rows = verify_problem(&name, &text, overrides)?;
    let mut manifest = RunManifest::new("verify", &[(problem.display().to_string(), text)])
        .parameters(spec.effective_parameters());
    manifest.seed = Some(spec.mc.seed);
    finish_verify(cli, &name, manifest, &rows, clock)
}

fn cmd_verify_corpus(cli: &Cli, overrides: &[(String, String)]) -> Result<u8, Exit> {
    let clock = Instant::now();
    let cases = corpus();
    let results: Vec<(f64, Vec<ReportRow>)> = cases
        .par_iter()
        .map(|case| {
            let t = Instant::now();
            let rows = run_case(case, overrides)?;
            Ok((t.elapsed().as_secs_f64(), rows))
        })
        .collect::<Result<_, switchstop::verify::VerifyError>>()?;
    let files: Vec<(String, String)> = cases
        .iter()
        .map(|c| (format!("{}.prob", c.name), c.text.to_string()))
        .collect();
    let mut manifest = RunManifest::new("verify", &files);
    manifest.seed = cli.seed;
    for (key, value) in overrides {
        manifest.parameters.insert(key.clone(), value.clone());
    }
    let mut rows = Vec::new();
    for (case, (secs, case_rows)) in cases.iter().zip(results) {
        manifest.result(&format!("{}_seconds", case.name), secs);
        rows.extend(case_rows);
    }
    finish_verify(cli, "corpus", manifest, &rows, clock)
}

fn cmd_export(
    cli: &Cli,
    problem: &Path,
    start: &Start,
    path_index: u64,
    overrides: &[(String, String)],
) -> Result<u8, Exit> {
    let clock = Instant::now();
    let text = read_problem(problem)?;
    let spec = load(&text, overrides)?;
    let name = stem(problem);
    let state = start.state(&spec)?;
    let path = simulate_path(
        &spec,
        state,
        spec.mc.dt,
        spec.mc.horizon,
        spec.mc.seed,
        path_index,
    )?;
    let out_path = cli.out.join(format!("{name}_path.csv"));
    path.write_csv(create(&out_path)?).map_err(anyhow::Error::from)?;
    let mut manifest = RunManifest::new("export", &[(problem.display().to_string(), text)])
        .parameters(spec.effective_parameters());
    manifest.seed = Some(spec.mc.seed);
    manifest
        .parameters
        .insert("path_index".into(), path_index.to_string());
    manifest.output(&out_path);
    manifest.result("points", path.len());
    manifest.wall_clock_seconds = clock.elapsed().as_secs_f64();
    manifest.write(&cli.out, &name)?;
    println!("{} points written to {}", path.len(), out_path.display());
    Ok(0)
}
