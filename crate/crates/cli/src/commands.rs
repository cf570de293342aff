use std::f64::consts::PI;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use nonlocal_bvp::fem::capacity_fem;
use nonlocal_bvp::geometry::annulus_capacity;
use nonlocal_bvp::nonlocal::Classification;
use nonlocal_bvp::pipeline::{evaluate, solve_fem, solve_oracle, DomainFamily, Engine, Evaluation, PipelineError};
use nonlocal_bvp::radial::{self, Regime};
use nonlocal_bvp::sweep::{refine_root, sweep_lambda, to_json, write_csv, RefinedRoot, SweepError};
use nonlocal_bvp::verify;
use serde::Serialize;
use thiserror::Error;

use crate::config::{self, ConfigError, ProblemConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Pipeline(p) => p.into(),
            SweepError::InvalidRange { .. } | SweepError::InvalidTolerance(_) => CliError::Input(e.to_string()),
            SweepError::NoSignChange { .. } | SweepError::ThreadPool(_) => CliError::Numeric(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(name);
    Ok(BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<String, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    let path = out.join(name);
    let mut w = create(out, name)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    Ok(text)
}

fn write_field(out: &Path, name: &str, rows: impl Iterator<Item = (f64, f64, f64)>) -> Result<(), CliError> {
    let path = out.join(name);
    let mut w = create(out, name)?;
    let body = || -> io::Result<()> {
        writeln!(w, "node,x,y,value")?;
        for (k, (x, y, v)) in rows.enumerate() {
            writeln!(w, "{k},{x:.16e},{y:.16e},{v:.16e}")?;
        }
        w.flush()
    };
    body().map_err(io_err(&path))
}

fn lambda_for(cfg: &ProblemConfig, lambda: Option<f64>) -> Result<f64, CliError> {
    let l = lambda.or(cfg.lambda).ok_or_else(|| {
        CliError::Input(format!(
            "{}: no lambda given; pass --lambda or set domain.lambda",
            cfg.path.display()
        ))
    })?;
    if !(l > 0.0) {
        return Err(CliError::Input(format!("lambda must be positive, got {l}")));
    }
    Ok(l)
}

fn default_engine(cfg: &ProblemConfig) -> Engine {
    if cfg.problem.closed_form.is_some() {
        Engine::Oracle
    } else {
        Engine::Fem
    }
}

#[derive(Debug, Serialize)]
struct ClassifyReport<'a> {
    lambda: f64,
    engine: Engine,
    det: f64,
    #[serde(rename = "C_psi_det")]
    c_psi_det: Option<f64>,
    classification: &'static str,
    #[serde(rename = "B")]
    b: Option<&'a [f64]>,
    kernel: Option<&'a [f64]>,
    eps_det: f64,
    cond: f64,
}

impl<'a> ClassifyReport<'a> {
    fn new(e: &'a Evaluation) -> Self {
        Self {
            lambda: e.lambda,
            engine: e.engine,
            det: e.system.det,
            c_psi_det: e.system.cramer.map(|c| c.c_psi),
            classification: e.classification.tag(),
            b: e.classification.coefficients(),
            kernel: match &e.classification {
                Classification::InfinitelyMany { kernel, .. } => Some(kernel),
                _ => None,
            },
            eps_det: e.eps_det,
            cond: e.system.cond,
        }
    }
}

pub fn solve(out: &Path, config: &Path, lambda: Option<f64>, engine: Option<Engine>) -> Result<ExitCode, CliError> {
    let cfg = config::load(config)?;
    let lambda = lambda_for(&cfg, lambda)?;
    let engine = engine.unwrap_or_else(|| default_engine(&cfg));
    let evaluation = match engine {
        Engine::Fem => {
            let sol = solve_fem(&cfg.problem, lambda)?;
            if let Some(u) = &sol.solution {
                let rows = sol.mesh.nodes().iter().zip(u).map(|(p, v)| (p[0], p[1], *v));
                write_field(out, "solution.csv", rows)?;
            }
            sol.evaluation
        }
        Engine::Oracle => {
            let sol = solve_oracle(&cfg.problem, lambda)?;
            if let Some(u) = &sol.solution {
                let rows = sol.radii.iter().zip(u).map(|(r, v)| (*r, 0.0, *v));
                write_field(out, "solution.csv", rows)?;
            }
            sol.evaluation
        }
    };
    let text = write_json(out, "report.json", &ClassifyReport::new(&evaluation))?;
    print!("{text}");
    if evaluation.classification.coefficients().is_none() {
        log::warn!("no solution at lambda = {lambda}: {}", evaluation.classification.tag());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn classify(out: &Path, config: &Path, lambda: Option<f64>, engine: Option<Engine>) -> Result<ExitCode, CliError> {
    let cfg = config::load(config)?;
    let lambda = lambda_for(&cfg, lambda)?;
    let engine = engine.unwrap_or_else(|| default_engine(&cfg));
    let evaluation = evaluate(&cfg.problem, lambda, engine)?;
    let text = write_json(out, "classify.json", &ClassifyReport::new(&evaluation))?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

pub struct SweepArgs {
    pub engine: Option<Engine>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub steps: Option<usize>,
    pub jobs: usize,
    pub timing: bool,
}

pub fn sweep(out: &Path, config: &Path, args: SweepArgs) -> Result<ExitCode, CliError> {
    let cfg = config::load(config)?;
    let s = cfg.sweep;
    let missing = |what: &str| {
        CliError::Input(format!(
            "{}: no {what}; pass --{what} or set sweep.{}",
            cfg.path.display(),
            what.replace('-', "_")
        ))
    };
    let lambda_min = args.lambda_min.or(s.lambda_min).ok_or_else(|| missing("lambda-min"))?;
    let lambda_max = args.lambda_max.or(s.lambda_max).ok_or_else(|| missing("lambda-max"))?;
    let steps = args.steps.unwrap_or(s.steps);
    let engine = args.engine.unwrap_or(s.engine);
    if args.jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    let result = sweep_lambda(&cfg.problem, lambda_min, lambda_max, steps, engine, args.jobs)?;
    let mut roots: Vec<RefinedRoot> = Vec::new();
    for bracket in &result.brackets {
        match refine_root(&cfg.problem, *bracket, s.tol, engine) {
            Ok(root) => roots.push(root),
            Err(e) => log::warn!("bracket [{}, {}] not refined: {e}", bracket.lo, bracket.hi),
        }
    }

    let path = out.join("sweep.csv");
    let mut w = create(out, "sweep.csv")?;
    write_csv(&mut w, &result.records, cfg.problem.b.len(), args.timing)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    write_json(out, "sweep.json", &to_json(&result, &roots, args.timing))?;
    let path = out.join("roots.csv");
    let mut w = create(out, "roots.csv")?;
    let mut body = || -> io::Result<()> {
        writeln!(w, "lambda,det,lo,hi,iterations")?;
        for r in &roots {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.lambda, r.det, r.lo, r.hi, r.iterations
            )?;
        }
        w.flush()
    };
    body().map_err(io_err(&path))?;

    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} grid points ({failed} failed), {} brackets",
        result.records.len(),
        result.brackets.len()
    );
    for r in &roots {
        println!(
            "root {:.12} (det {:.3e}, bracket width {:.1e})",
            r.lambda,
            r.det,
            r.hi - r.lo
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct CapacityReport {
    lambda: f64,
    fem_value: f64,
    analytic_value: Option<f64>,
    relative_error: Option<f64>,
}

pub fn capacity(out: &Path, config: &Path, lambda: Option<f64>) -> Result<ExitCode, CliError> {
    let cfg = config::load(config)?;
    let lambda = lambda.or(cfg.lambda).unwrap_or(1.0);
    let mesh = cfg.problem.mesh(lambda)?;
    let fem_value = capacity_fem(&mesh).map_err(PipelineError::from)?;
    let analytic_value = match (&cfg.problem.domain, cfg.problem.radii(lambda)?) {
        (DomainFamily::Annulus { dimension: 2, .. }, Some((r1, r2))) => {
            Some(annulus_capacity(r1, r2).map_err(PipelineError::from)?)
        }
        _ => None,
    };
    let report = CapacityReport {
        lambda,
        fem_value,
        analytic_value,
        relative_error: analytic_value.map(|a| (fem_value - a).abs() / a),
    };
    print!("{}", write_json(out, "capacity.json", &report)?);
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct Example1Report {
    example: u8,
    lambda: f64,
    g: f64,
    b_inner: f64,
    lambda_star: f64,
    det: f64,
    regime: Regime,
    inner_value: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Example2Report {
    example: u8,
    lambda: f64,
    c0: f64,
    b_inner: f64,
    integral: f64,
    det: f64,
    det_factorized: f64,
    nearest_degenerate: f64,
    inner_value: Option<f64>,
}

pub fn oracle(
    out: &Path,
    example: u8,
    c0: &str,
    g: Option<f64>,
    b_inner: f64,
    lambda: f64,
) -> Result<ExitCode, CliError> {
    let radial_err = |e: radial::RadialError| CliError::from(PipelineError::from(e));
    let text = if example == 1 {
        let g = g.unwrap_or(1.0 / (2.0 * PI));
        let r = radial::example1_classify(b_inner, lambda, g).map_err(radial_err)?;
        write_json(
            out,
            "oracle.json",
            &Example1Report {
                example,
                lambda,
                g,
                b_inner,
                lambda_star: r.lambda_star,
                det: radial::example1_det(lambda, g),
                regime: r.regime,
                inner_value: r.inner_value,
            },
        )?
    } else {
        let c0 = match c0 {
            "critical" => radial::critical_c0(),
            other => other
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("--c0 must be a number or `critical`, got `{other}`")))?,
        };
        let integral = radial::example2_integral(lambda, c0).map_err(radial_err)?;
        let det = radial::example2_det(lambda, c0).map_err(radial_err)?;
        let det_factorized = if c0 == radial::critical_c0() {
            radial::example2_det_factorized(lambda).map_err(radial_err)?
        } else {
            det
        };
        let s0 = radial::s0_set(((lambda / (2.0 * PI)).ceil() as u32).max(1) + 1);
        let nearest_degenerate = s0
            .iter()
            .copied()
            .min_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()))
            .unwrap_or(f64::NAN);
        write_json(
            out,
            "oracle.json",
            &Example2Report {
                example,
                lambda,
                c0,
                b_inner,
                integral,
                det,
                det_factorized,
                nearest_degenerate,
                inner_value: (det != 0.0).then(|| b_inner / det),
            },
        )?
    };
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

pub fn verify(out: &Path, criteria: &[u32]) -> Result<ExitCode, CliError> {
    let ids: Vec<u32> = if criteria.is_empty() {
        verify::CRITERIA.iter().map(|(id, _)| *id).collect()
    } else {
        criteria.to_vec()
    };
    let mut reports = Vec::new();
    for id in ids {
        let report = verify::run(id).ok_or_else(|| CliError::Input(format!("unknown criterion {id}")))?;
        println!("{report}");
        reports.push(report);
    }
    write_json(out, "verify.json", &reports)?;
    let passed = reports.iter().all(|r| r.passed);
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
