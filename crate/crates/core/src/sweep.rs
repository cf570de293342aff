//! Parameter sweeps over λ, sign-change brackets and bisection refinement of
//! the degenerate set.

use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{evaluate, Engine, PipelineError, Problem};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep range: need 0 < lambda_min < lambda_max and steps >= 2 (got {min}, {max}, {steps})")]
    InvalidRange { min: f64, max: f64, steps: usize },
    #[error("det has the same sign at both ends of [{lo}, {hi}] ({det_lo:e}, {det_hi:e})")]
    NoSignChange { lo: f64, hi: f64, det_lo: f64, det_hi: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// One grid point of a sweep. A failed point carries `error` and no data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub det: Option<f64>,
    pub classification: String,
    pub coefficients: Vec<f64>,
    pub cond: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl SweepRecord {
    fn evaluate(problem: &Problem, lambda: f64, engine: Engine) -> Self {
        let start = Instant::now();
        let result = evaluate(problem, lambda, engine);
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(e) => SweepRecord {
                lambda,
                det: Some(e.system.det),
                classification: e.classification.tag().to_string(),
                coefficients: e.classification.coefficients().map(<[f64]>::to_vec).unwrap_or_default(),
                cond: Some(e.system.cond),
                seconds,
                error: None,
            },
            Err(err) => {
                log::warn!("sweep point lambda = {lambda} failed: {err}");
                SweepRecord {
                    lambda,
                    det: None,
                    classification: "Error".to_string(),
                    coefficients: Vec::new(),
                    cond: None,
                    seconds,
                    error: Some(err.to_string()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub engine: Engine,
    pub records: Vec<SweepRecord>,
    pub brackets: Vec<Bracket>,
}

pub fn lambda_grid(lambda_min: f64, lambda_max: f64, steps: usize) -> Result<Vec<f64>, SweepError> {
    if !(lambda_min > 0.0 && lambda_max > lambda_min && lambda_max.is_finite()) || steps < 2 {
        return Err(SweepError::InvalidRange {
            min: lambda_min,
            max: lambda_max,
            steps,
        });
    }
    let h = (lambda_max - lambda_min) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| {
            if k + 1 == steps {
                lambda_max
            } else {
                lambda_min + h * k as f64
            }
        })
        .collect())
}

/// Consecutive grid points where det changes sign. A grid point with det
/// exactly zero yields a zero-width bracket.
pub fn find_brackets(records: &[SweepRecord]) -> Vec<Bracket> {
    let mut out = Vec::new();
    for (k, rec) in records.iter().enumerate() {
        let Some(d) = rec.det else { continue };
        if d == 0.0 {
            out.push(Bracket {
                lo: rec.lambda,
                hi: rec.lambda,
            });
            continue;
        }
        if let Some(prev) = k.checked_sub(1).and_then(|j| records[j].det) {
            if prev != 0.0 && (prev < 0.0) != (d < 0.0) {
                out.push(Bracket {
                    lo: records[k - 1].lambda,
                    hi: rec.lambda,
                });
            }
        }
    }
    out
}

/// Evaluates the problem on a uniform λ grid. `jobs > 1` evaluates grid
/// points concurrently; the records are always in λ order.
pub fn sweep_lambda(
    problem: &Problem,
    lambda_min: f64,
    lambda_max: f64,
    steps: usize,
    engine: Engine,
    jobs: usize,
) -> Result<SweepResult, SweepError> {
    problem.validate()?;
    let grid = lambda_grid(lambda_min, lambda_max, steps)?;
    let records: Vec<SweepRecord> = if jobs <= 1 {
        grid.iter()
            .map(|&l| SweepRecord::evaluate(problem, l, engine))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SweepError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            grid.par_iter()
                .map(|&l| SweepRecord::evaluate(problem, l, engine))
                .collect()
        })
    };
    let brackets = find_brackets(&records);
    Ok(SweepResult {
        engine,
        records,
        brackets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedRoot {
    pub lambda: f64,
    pub det: f64,
    pub lo: f64,
    pub hi: f64,
    pub det_lo: f64,
    pub det_hi: f64,
    pub iterations: usize,
}

const MAX_BISECTIONS: usize = 200;

/// Bisection on λ ↦ det(I − R_λ). Stops once the bracket is no wider than
/// `tol` and the midpoint determinant is no larger in magnitude than at
/// either endpoint, or when the bracket can no longer be split.
pub fn refine_root(problem: &Problem, bracket: Bracket, tol: f64, engine: Engine) -> Result<RefinedRoot, SweepError> {
    if !(tol > 0.0) {
        return Err(SweepError::InvalidTolerance(tol));
    }
    let det = |l: f64| -> Result<f64, SweepError> { Ok(evaluate(problem, l, engine)?.system.det) };
    let (mut lo, mut hi) = (bracket.lo.min(bracket.hi), bracket.lo.max(bracket.hi));
    let (mut d_lo, mut d_hi) = (det(lo)?, det(hi)?);
    if lo == hi {
        if d_lo == 0.0 {
            return Ok(RefinedRoot {
                lambda: lo,
                det: 0.0,
                lo,
                hi,
                det_lo: 0.0,
                det_hi: 0.0,
                iterations: 0,
            });
        }
        return Err(SweepError::NoSignChange {
            lo,
            hi,
            det_lo: d_lo,
            det_hi: d_hi,
        });
    }
    if d_lo == 0.0 || d_hi == 0.0 {
        let (l, d) = if d_lo == 0.0 { (lo, d_lo) } else { (hi, d_hi) };
        return Ok(RefinedRoot {
            lambda: l,
            det: d,
            lo: l,
            hi: l,
            det_lo: d,
            det_hi: d,
            iterations: 0,
        });
    }
    if (d_lo < 0.0) == (d_hi < 0.0) {
        return Err(SweepError::NoSignChange {
            lo,
            hi,
            det_lo: d_lo,
            det_hi: d_hi,
        });
    }
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let d_mid = det(mid)?;
        let converged = hi - lo <= tol && d_mid.abs() <= d_lo.abs().min(d_hi.abs());
        if converged || d_mid == 0.0 || mid <= lo || mid >= hi || iterations >= MAX_BISECTIONS {
            log::debug!("root refined to {mid} after {iterations} bisections, det = {d_mid:e}");
            return Ok(RefinedRoot {
                lambda: mid,
                det: d_mid,
                lo,
                hi,
                det_lo: d_lo,
                det_hi: d_hi,
                iterations,
            });
        }
        iterations += 1;
        if (d_mid < 0.0) == (d_lo < 0.0) {
            lo = mid;
            d_lo = d_mid;
        } else {
            hi = mid;
            d_hi = d_mid;
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Writes `lambda,det,classification,B0..,cond,seconds`. The seconds column
/// is left empty unless `timing` is set, so that output is reproducible.
pub fn write_csv<W: Write>(out: &mut W, records: &[SweepRecord], components: usize, timing: bool) -> io::Result<()> {
    write!(out, "lambda,det,classification")?;
    for k in 0..components {
        write!(out, ",B{k}")?;
    }
    writeln!(out, ",cond,seconds")?;
    for rec in records {
        write!(out, "{:.16e},{},{}", rec.lambda, opt(rec.det), rec.classification)?;
        for k in 0..components {
            write!(out, ",{}", opt(rec.coefficients.get(k).copied()))?;
        }
        let secs = if timing {
            format!("{:.6}", rec.seconds)
        } else {
            String::new()
        };
        writeln!(out, ",{},{}", opt(rec.cond), secs)?;
    }
    Ok(())
}

/// JSON mirror of the CSV table; `seconds` is dropped unless `timing` is set.
pub fn to_json(result: &SweepResult, roots: &[RefinedRoot], timing: bool) -> serde_json::Value {
    let mut value = serde_json::json!({
        "engine": result.engine,
        "records": result.records,
        "brackets": result.brackets,
        "roots": roots,
    });
    if !timing {
        if let Some(records) = value["records"].as_array_mut() {
            for rec in records {
                if let Some(obj) = rec.as_object_mut() {
                    obj.remove("seconds");
                }
            }
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fem::CoefficientField;
    use crate::pipeline::{ClosedForm, DomainFamily, Resolution};
    use crate::radial::{critical_c0, s0_set};

    fn example2(c0: f64) -> Problem {
        Problem {
            domain: DomainFamily::Annulus {
                inner: Expr::constant(1.0),
                outer: "lambda".parse().unwrap(),
                dimension: 2,
            },
            coefficients: CoefficientField::unit_radial_drift(),
            weights: vec![Expr::zero(), format!("{c0:?} * exp(-r) / r * sin(r)").parse().unwrap()],
            b: vec![0.0, 1.0],
            resolution: Resolution {
                nr: 8,
                ntheta: 16,
                refinements: 0,
            },
            n_points: 401,
            closed_form: Some(ClosedForm::Example2 { c0 }),
            eps_det: None,
            kappa: 0.01,
        }
    }

    #[test]
    fn grid_is_uniform_and_inclusive() {
        let g = lambda_grid(1.5, 12.0, 5).unwrap();
        assert_eq!(g, vec![1.5, 4.125, 6.75, 9.375, 12.0]);
        assert!(lambda_grid(0.0, 1.0, 5).is_err());
        assert!(lambda_grid(2.0, 1.0, 5).is_err());
        assert!(lambda_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn critical_sweep_brackets_the_root_lattice() {
        let res = sweep_lambda(&example2(critical_c0()), 1.5, 12.0, 400, Engine::Oracle, 1).unwrap();
        let roots: Vec<f64> = s0_set(3).into_iter().filter(|&s| s > 1.5 && s <= 12.0).collect();
        assert_eq!(res.brackets.len(), roots.len());
        for (b, r) in res.brackets.iter().zip(&roots) {
            assert!(b.lo <= *r && *r <= b.hi, "{b:?} {r}");
            let root = refine_root(&example2(critical_c0()), *b, 1e-9, Engine::Oracle).unwrap();
            assert!((root.lambda - r).abs() <= 1e-7, "{} vs {r}", root.lambda);
            assert!(root.det.abs() <= root.det_lo.abs() && root.det.abs() <= root.det_hi.abs());
        }
    }

    #[test]
    fn zero_weights_give_unit_det() {
        let mut p = example2(0.5);
        p.closed_form = None;
        p.weights[1] = Expr::zero();
        let res = sweep_lambda(&p, 1.5, 6.0, 12, Engine::Oracle, 1).unwrap();
        assert!(res.records.iter().all(|r| r.det == Some(1.0)));
        assert!(res.brackets.is_empty());
    }

    #[test]
    fn non_critical_has_no_brackets_beyond_two() {
        let res = sweep_lambda(&example2(0.5), 2.0, 20.0, 200, Engine::Oracle, 1).unwrap();
        assert!(res.brackets.is_empty());
        assert!(res.records.iter().all(|r| r.det.unwrap() > 0.0));
    }

    #[test]
    fn same_sign_bracket_is_rejected() {
        let err = refine_root(
            &example2(critical_c0()),
            Bracket { lo: 2.0, hi: 3.0 },
            1e-6,
            Engine::Oracle,
        )
        .unwrap_err();
        assert!(matches!(err, SweepError::NoSignChange { .. }));
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        let p = example2(critical_c0());
        let a = sweep_lambda(&p, 1.5, 12.0, 40, Engine::Oracle, 1).unwrap();
        let b = sweep_lambda(&p, 1.5, 12.0, 40, Engine::Oracle, 4).unwrap();
        let strip = |r: &SweepResult| {
            r.records
                .iter()
                .map(|x| (x.lambda, x.det, x.coefficients.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.brackets, b.brackets);
    }

    #[test]
    fn failed_points_are_recorded() {
        let mut p = example2(0.5);
        p.closed_form = None;
        p.domain = DomainFamily::Annulus {
            inner: Expr::constant(3.0),
            outer: "lambda".parse().unwrap(),
            dimension: 2,
        };
        let res = sweep_lambda(&p, 2.0, 4.0, 3, Engine::Oracle, 1).unwrap();
        assert_eq!(res.records[0].classification, "Error");
        assert!(res.records[0].error.is_some());
        assert!(res.records[2].det.is_some());
    }

    #[test]
    fn csv_layout() {
        let res = sweep_lambda(&example2(0.5), 2.0, 3.0, 2, Engine::Oracle, 1).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &res.records, 2, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda,det,classification,B0,B1,cond,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2.0000000000000000e0,"));
        assert!(lines[1].ends_with(','));
        let json = to_json(&res, &[], false);
        assert!(json["records"][0].get("seconds").is_none());
    }
}
