//! Command implementations behind the `pdwalker` binary.

pub mod plot;
pub mod table;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use pdwalker::config::ScenarioConfig;
use pdwalker::experiment::{
    self, find_orbit, lyapunov_row, poincare_row, resolve_gait, trace_row, GainRun, Scenario, LYAPUNOV_COLUMNS,
    POINCARE_COLUMNS, TRACE_COLUMNS,
};
use pdwalker::hybrid::{OutcomeKind, StepOutcome};
use pdwalker::hzd::{self, OrbitRecord};
use pdwalker::outputs::{ControlLaw, Gains};
use pdwalker::transforms::{assumption_report, BE_PRIME_MIN};
use pdwalker::verify::{self, Check};
use pdwalker::Error;

use plot::LinePlot;
use table::{fmt_f64, CsvWriter};

/// Why a command did not succeed, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration, or unusable output location.
    Config(String),
    /// At least one gain fell or stalled.
    Fall(String),
    Numerical(String),
    /// `verify` ran to completion but some check failed.
    ChecksFailed(usize),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::ChecksFailed(_) => 1,
            Failure::Config(_) => 2,
            Failure::Fall(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Fall(m) => write!(f, "{m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::ChecksFailed(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_) | Error::Parse(_) => Failure::Config(e.to_string()),
            Error::Fall { .. } | Error::Timeout { .. } => Failure::Fall(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Default)]
pub struct CommonArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub jobs: Option<usize>,
    /// Previously written `orbit.json` to reuse instead of searching again.
    pub orbit: Option<PathBuf>,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    ScenarioConfig::from_toml_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_orbit(path: &Path) -> Result<OrbitRecord, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    OrbitRecord::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn out_dir(args: &CommonArgs, cfg: &ScenarioConfig) -> Result<PathBuf, Failure> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.outputs.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Config(e.to_string()))
}

fn orbit_for(args: &CommonArgs, cfg: &ScenarioConfig) -> Result<OrbitRecord, Failure> {
    match &args.orbit {
        Some(p) => load_orbit(p),
        None => Ok(find_orbit(cfg)?),
    }
}

pub fn gain_dir_name(i: usize, g: &Gains) -> String {
    format!("{i:02}_eps{}_k{}", g.epsilon, g.k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Completed,
    Fell,
    TimedOut,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::Fell => "fall",
            Status::TimedOut => "timeout",
        }
    }
}

/// Per-gain results written to `summary.csv`.
#[derive(Debug, Clone)]
pub struct GainSummary {
    pub gains: Gains,
    pub dir: String,
    pub status: Status,
    pub completed: usize,
    /// 1-based step that ended in a fall or timeout.
    pub fail_step: Option<usize>,
    pub fail_time: f64,
    /// Largest distance to the orbit over the second half of the run.
    pub tail_band: f64,
    /// Largest `|T/T* - 1|` after the first five steps.
    pub max_dwell_dev: f64,
    pub ve_rate: f64,
    pub ve_tail_max: f64,
    pub seconds: f64,
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "index",
    "completed",
    "fail_step",
    "status",
    "epsilon",
    "k",
    "fail_time",
    "tail_band",
    "max_dwell_dev",
    "ve_rate",
    "ve_tail_max",
];

/// Steps excluded from the dwell-time comparison.
pub const DWELL_TRANSIENT: usize = 5;

fn summarize(run: &GainRun, orbit: &OrbitRecord, dir: String, seconds: f64) -> Result<GainSummary, Failure> {
    let (status, fail_step, fail_time) = match run.failed_at {
        None => (Status::Completed, None, f64::NAN),
        Some((i, kind)) => {
            let s = &run.steps[i - 1];
            let st = if kind == OutcomeKind::Fall {
                Status::Fell
            } else {
                Status::TimedOut
            };
            (st, Some(i), s.t_start + s.time)
        }
    };
    let tail_band = if status == Status::Completed {
        hzd::ultimate_bound(&run.steps, orbit, run.steps.len() / 2)?.ultimate_bound
    } else {
        f64::NAN
    };
    let max_dwell_dev = run
        .poincare
        .iter()
        .filter(|r| r.step > DWELL_TRANSIENT)
        .map(|r| (r.t / orbit.t_star - 1.0).abs())
        .fold(f64::NAN, f64::max);
    let samples: Vec<_> = run.samples().cloned().collect();
    let fit = hzd::ve_bounds_check(&samples, &run.gains, &orbit.gait, &orbit.model)?;
    Ok(GainSummary {
        gains: run.gains,
        dir,
        status,
        completed: run.completed(),
        fail_step,
        fail_time,
        tail_band,
        max_dwell_dev,
        ve_rate: fit.rate,
        ve_tail_max: fit.tail_max,
        seconds,
    })
}

fn write_gain_outputs(dir: &Path, run: &GainRun, orbit: &OrbitRecord) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let (gait, p, gains) = (&orbit.gait, &orbit.model, &run.gains);
    let io = |path: PathBuf| move |e| io_failure(&path, e);

    let mut trace = CsvWriter::create(&dir.join("trace.csv"), &TRACE_COLUMNS).map_err(io(dir.join("trace.csv")))?;
    let mut lyap =
        CsvWriter::create(&dir.join("lyapunov.csv"), &LYAPUNOV_COLUMNS).map_err(io(dir.join("lyapunov.csv")))?;
    let mut rows = Vec::new();
    for (i, step) in run.steps.iter().enumerate() {
        for s in &step.trace {
            let r = trace_row(s, gains, gait, p)?;
            trace.row(&[], &r).map_err(io(dir.join("trace.csv")))?;
            lyap.row(&[i + 1], &lyapunov_row(s, gains, gait, p)?)
                .map_err(io(dir.join("lyapunov.csv")))?;
            rows.push(r);
        }
    }
    trace.finish().map_err(io(dir.join("trace.csv")))?;
    lyap.finish().map_err(io(dir.join("lyapunov.csv")))?;

    let mut pc =
        CsvWriter::create(&dir.join("poincare.csv"), &POINCARE_COLUMNS).map_err(io(dir.join("poincare.csv")))?;
    for r in &run.poincare {
        pc.row(&[r.step], &poincare_row(r))
            .map_err(io(dir.join("poincare.csv")))?;
    }
    pc.finish().map_err(io(dir.join("poincare.csv")))?;

    let col = |c: usize| -> Vec<(f64, f64)> { rows.iter().map(|r| (r[0], r[c])).collect() };
    let label = format!("eps = {}, k = {}", gains.epsilon, gains.k);
    let plots = [
        (
            "tracking_error.svg",
            LinePlot::new("Hip tracking error", "t (s)", "e (rad)").with(&label, col(5)),
        ),
        (
            "lyapunov.svg",
            LinePlot::new("Output Lyapunov function", "t (s)", "V_e")
                .log_y()
                .with(&label, col(11)),
        ),
        (
            "torque.svg",
            LinePlot::new("Hip torque", "t (s)", "u (N m)").with(&label, col(9)),
        ),
        (
            "phase_portrait.svg",
            LinePlot::new("Zero coordinates", "z1 (rad)", "z2")
                .with(&label, rows.iter().map(|r| (r[7], r[8])).collect())
                .with(
                    "periodic orbit",
                    orbit.orbit_samples.iter().map(|s| (s[3], s[4])).collect(),
                ),
        ),
    ];
    for (name, plot) in plots {
        write_file(&dir.join(name), &plot.render())?;
    }
    Ok(())
}

fn summary_line(s: &GainSummary) -> String {
    let head = format!("eps={} k={}", s.gains.epsilon, s.gains.k);
    match s.status {
        Status::Completed => format!(
            "{head}: completed {} steps, tail band {:.4e}, max |T/T*-1| {:.4e}, V_e rate {:.4} 1/s ({:.2} s)",
            s.completed, s.tail_band, s.max_dwell_dev, s.ve_rate, s.seconds
        ),
        _ => format!(
            "{head}: {} at step {} (t = {:.6} s) after {} completed steps ({:.2} s)",
            s.status.as_str().to_uppercase(),
            s.fail_step.unwrap_or(0),
            s.fail_time,
            s.completed,
            s.seconds
        ),
    }
}

/// Outcome of `run`: one summary per gain, in configuration order.
pub struct RunReport {
    pub dir: PathBuf,
    pub orbit: OrbitRecord,
    pub gains: Vec<GainSummary>,
}

pub fn run(args: &CommonArgs) -> Result<RunReport, Failure> {
    let cfg = load_config(&args.config)?;
    let dir = out_dir(args, &cfg)?;
    let pool = thread_pool(args.jobs)?;
    let orbit = orbit_for(args, &cfg)?;
    let scenario = Scenario::with_orbit(&cfg, orbit.clone(), args.seed)?;
    write_file(&dir.join("orbit.json"), &orbit.to_json()?)?;

    let results: Vec<Result<GainSummary, Failure>> = pool.install(|| {
        scenario
            .gains
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let started = Instant::now();
                let run = scenario.run_gain(*g)?;
                let name = gain_dir_name(i, g);
                write_gain_outputs(&dir.join(&name), &run, &scenario.orbit)?;
                summarize(&run, &scenario.orbit, name, started.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut gains = Vec::with_capacity(results.len());
    for r in results {
        gains.push(r?);
    }

    // status is textual, so rows are assembled here rather than through CsvWriter
    let mut text = SUMMARY_COLUMNS.join(",");
    text.push('\n');
    for (i, s) in gains.iter().enumerate() {
        let fields = [
            fmt_f64(s.gains.epsilon),
            fmt_f64(s.gains.k),
            fmt_f64(s.fail_time),
            fmt_f64(s.tail_band),
            fmt_f64(s.max_dwell_dev),
            fmt_f64(s.ve_rate),
            fmt_f64(s.ve_tail_max),
        ];
        text.push_str(&format!(
            "{i},{},{},{},{}\n",
            s.completed,
            s.fail_step.unwrap_or(0),
            s.status.as_str(),
            fields.join(",")
        ));
    }
    write_file(&dir.join("summary.csv"), &text)?;
    Ok(RunReport { dir, orbit, gains })
}

/// Print the run report and turn falls into the matching failure.
pub fn report_run(r: &RunReport) -> Result<(), Failure> {
    println!(
        "periodic orbit: z* = ({}, {}), T* = {}, |eig Drho| = {:?}",
        fmt_f64(r.orbit.z_star[0]),
        fmt_f64(r.orbit.z_star[1]),
        fmt_f64(r.orbit.t_star),
        r.orbit.rho_jacobian_eigs
    );
    for s in &r.gains {
        println!("{}", summary_line(s));
    }
    println!("outputs in {}", r.dir.display());
    let failed: Vec<String> = r
        .gains
        .iter()
        .filter(|s| s.status != Status::Completed)
        .map(|s| format!("eps={} at step {}", s.gains.epsilon, s.fail_step.unwrap_or(0)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Fall(format!("walker fell: {}", failed.join(", "))))
    }
}

pub fn find_orbit_cmd(args: &CommonArgs) -> Result<(PathBuf, OrbitRecord), Failure> {
    let cfg = load_config(&args.config)?;
    let dir = out_dir(args, &cfg)?;
    let orbit = find_orbit(&cfg)?;
    let path = dir.join("orbit.json");
    write_file(&path, &orbit.to_json()?)?;
    Ok((path, orbit))
}

/// Steps walked from the orbit for the trajectory checks.
pub const VERIFY_STEPS: usize = 3;
/// Random samples for the mechanics properties.
pub const VERIFY_SAMPLES: usize = 10_000;

pub struct VerifyReport {
    pub dir: PathBuf,
    pub checks: Vec<Check>,
}

pub fn verify(args: &CommonArgs) -> Result<VerifyReport, Failure> {
    let cfg = load_config(&args.config)?;
    let dir = out_dir(args, &cfg)?;
    let pool = thread_pool(args.jobs)?;
    let p = cfg.model;
    let mut checks = Vec::new();

    let gait = match resolve_gait(&cfg) {
        Ok(g) => g,
        Err(e) => {
            checks.push(Check::failed("phase endpoint calibration", e.to_string()));
            cfg.gait.params()
        }
    };
    checks.extend(verify::mechanics_suite(&p, &gait, VERIFY_SAMPLES, args.seed)?);
    match verify::path_lambda_min(&gait, &p, 2000) {
        Ok((lam, bp)) => {
            checks.push(Check::above("Lambda_Be min eigenvalue on the desired path", lam, 0.0));
            checks.push(Check::above("|B_e'| min on the desired path", bp, BE_PRIME_MIN));
        }
        Err(e) => checks.push(Check::failed("Lambda_Be on the desired path", e.to_string())),
    }

    let orbit = match &args.orbit {
        Some(path) => Some(load_orbit(path)?),
        None => match experiment::find_orbit(&cfg) {
            Ok(o) => Some(o),
            Err(e) => {
                checks.push(Check::failed("periodic orbit of the zero dynamics", e.to_string()));
                None
            }
        },
    };

    if let Some(orbit) = orbit {
        checks.extend(verify::hzd_checks(&orbit, cfg.orbit.fd_step, &cfg.sim));
        let per_gain: Vec<GainChecks> = pool.install(|| {
            cfg.gains
                .par_iter()
                .map(|g| trajectory_checks(&orbit, g, &cfg))
                .collect()
        });
        let mut first_trace = None;
        for (c, trace) in per_gain {
            checks.extend(c);
            if first_trace.is_none() {
                first_trace = trace;
            }
        }
        if let Some(rows) = first_trace {
            let path = dir.join("assumption_trace.csv");
            let mut w = CsvWriter::create(&path, &["step", "t", "lambda_be_min", "b_e", "b_e_prime", "cond_je"])
                .map_err(|e| io_failure(&path, e))?;
            for r in &rows {
                w.row(&[r[0] as usize], &r[1..]).map_err(|e| io_failure(&path, e))?;
            }
            w.finish().map_err(|e| io_failure(&path, e))?;
            let pts = |c: usize| -> Vec<(f64, f64)> { rows.iter().map(|r| (r[1], r[c])).collect() };
            write_file(
                &dir.join("assumption.svg"),
                &LinePlot::new("Output selection along three steps", "t (s)", "value")
                    .with("min eig Lambda_Be", pts(2))
                    .with("B_e'", pts(4))
                    .render(),
            )?;
        }
    }

    let mut text = String::new();
    for c in &checks {
        text.push_str(&c.to_string());
        text.push('\n');
    }
    write_file(&dir.join("verify.txt"), &text)?;
    Ok(VerifyReport { dir, checks })
}

/// Checks for one gain plus its per-sample assumption rows.
type GainChecks = (Vec<Check>, Option<Vec<[f64; 6]>>);

/// Assumption, impact and passivity checks over a few steps from the orbit,
/// plus the per-sample assumption trace `(step, t, λ_min, B_e, B_e', cond J_e)`.
fn trajectory_checks(orbit: &OrbitRecord, g: &Gains, cfg: &ScenarioConfig) -> GainChecks {
    let tag = format!("[eps={}]", g.epsilon);
    let name = |s: &str| format!("{s} {tag}");
    let walker = pdwalker::hybrid::Walker::new(orbit.model, orbit.gait, ControlLaw::Pd(*g), cfg.sim);
    let start = match orbit.post_impact_state() {
        Ok(x) => x,
        Err(e) => {
            return (
                vec![Check::failed(&name("orbit post-impact state"), e.to_string())],
                None,
            )
        }
    };
    let steps: Vec<StepOutcome> = match walker.walk(&start, VERIFY_STEPS) {
        Ok(s) => s,
        Err(e) => {
            return (
                vec![Check::failed(&name("three steps from the orbit"), e.to_string())],
                None,
            )
        }
    };
    let mut out = vec![Check::at_most(
        &name("steps completed short of three"),
        (VERIFY_STEPS - steps.iter().filter(|s| s.kind == OutcomeKind::Impact).count()) as f64,
        0.0,
    )];
    let states: Vec<_> = steps.iter().flat_map(|s| s.trace.iter().map(|x| x.x)).collect();
    let mut rows = None;
    match assumption_report(&states, &orbit.gait, &orbit.model) {
        Ok(rep) => {
            for c in verify::assumption_checks(&rep) {
                out.push(Check {
                    name: name(&c.name),
                    ..c
                });
            }
            let mut v = Vec::with_capacity(rep.samples.len());
            let mut it = rep.samples.iter();
            for (i, s) in steps.iter().enumerate() {
                for smp in &s.trace {
                    let Some(r) = it.next() else { break };
                    v.push([(i + 1) as f64, smp.t, r.lambda_be_min, r.be, r.be_prime, r.cond_je]);
                }
            }
            rows = Some(v);
        }
        Err(e) => out.push(Check::failed(&name("output selection assumption"), e.to_string())),
    }
    for c in verify::impact_checks(&[&steps], &orbit.model, &cfg.sim) {
        out.push(Check {
            name: name(&c.name),
            ..c
        });
    }
    let c = verify::passivity_check(&walker, &steps);
    out.push(Check {
        name: name(&c.name),
        ..c
    });
    let samples: Vec<_> = steps.iter().flat_map(|s| s.trace.iter().cloned()).collect();
    match verify::be_prime_identity(&samples, &orbit.gait, &orbit.model) {
        Ok(r) => out.push(Check::below(&name("B_e' identity residual"), r, 1e-8)),
        Err(e) => out.push(Check::failed(&name("B_e' identity residual"), e.to_string())),
    }
    (out, rows)
}

pub fn report_verify(r: &VerifyReport) -> Result<(), Failure> {
    for c in &r.checks {
        println!("{c}");
    }
    let failed = r.checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} checks, {failed} failed; report in {}",
        r.checks.len(),
        r.dir.join("verify.txt").display()
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::ChecksFailed(failed))
    }
}
