//! Problem description and the λ ↦ (system, classification) pipeline shared
//! by sweeps and the command-line front end.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Bindings, EvalError, Expr};
use crate::fem::{basis_solutions, CoefficientField, FemError, VectorField};
use crate::geometry::{annulus_mesh, DomainSpec, GeometryError, Mesh};
use crate::nonlocal::{build_system, classify, reconstruct, Classification, NonlocalError, NonlocalSystem};
use crate::radial::{self, radial_basis, RadialError, RadialGrid};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot evaluate {what}: {source}")]
    Expression {
        what: &'static str,
        #[source]
        source: EvalError,
    },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("the oracle engine needs {0}")]
    OracleUnsupported(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Nonlocal(#[from] NonlocalError),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

impl PipelineError {
    /// Errors raised by the numerics rather than by the problem statement.
    pub fn is_numeric(&self) -> bool {
        let eval_domain = |e: &EvalError| matches!(e, EvalError::Domain(_));
        match self {
            PipelineError::Expression { source, .. } => eval_domain(source),
            PipelineError::Fem(e) | PipelineError::Nonlocal(NonlocalError::Fem(e)) => match e {
                FemError::SingularSystem(_) => true,
                FemError::CoefficientDomain { source, .. } => eval_domain(source),
                _ => false,
            },
            PipelineError::Radial(e) => match e {
                RadialError::SingularSystem(_) | RadialError::BracketingFailure(_) => true,
                RadialError::CoefficientDomain { source, .. } => eval_domain(source),
                _ => false,
            },
            PipelineError::Nonlocal(e) => matches!(
                e,
                NonlocalError::Linalg(_)
                    | NonlocalError::EnvelopeFit(_)
                    | NonlocalError::AllZeroField
                    | NonlocalError::NonConstantTrace { .. }
            ),
            PipelineError::InvalidProblem(_) | PipelineError::OracleUnsupported(_) | PipelineError::Geometry(_) => {
                false
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Engine {
    Fem,
    Oracle,
}

/// How the domain depends on λ.
#[derive(Debug, Clone)]
pub enum DomainFamily {
    /// Annulus with radii given as expressions in `lambda`.
    Annulus { inner: Expr, outer: Expr, dimension: usize },
    /// A fixed base mesh, dilated by λ when `dilate` is set. `spec`, when
    /// present, supplies analytic boundary distances.
    Mesh {
        mesh: Mesh,
        spec: Option<DomainSpec>,
        dilate: bool,
    },
}

/// Closed-form evaluation of the annulus examples, used by the oracle engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ClosedForm {
    /// Annulus `(λ, 2λ)`, constant inner weight `g`.
    Example1 { g: f64 },
    /// Annulus `(1, λ)`, inner weight `C₀ e^{−r} sin(r)/r`.
    Example2 { c0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub nr: usize,
    pub ntheta: usize,
    pub refinements: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            nr: 16,
            ntheta: 32,
            refinements: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: DomainFamily,
    pub coefficients: CoefficientField,
    /// One weight per boundary component, tag order.
    pub weights: Vec<Expr>,
    /// Data per boundary component, tag order.
    pub b: Vec<f64>,
    pub resolution: Resolution,
    pub n_points: usize,
    pub closed_form: Option<ClosedForm>,
    pub eps_det: Option<f64>,
    pub kappa: f64,
}

impl Problem {
    pub fn component_count(&self) -> usize {
        match &self.domain {
            DomainFamily::Annulus { .. } => 2,
            DomainFamily::Mesh { mesh, .. } => mesh.component_count(),
        }
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let n = self.component_count();
        if self.weights.len() != n || self.b.len() != n {
            return Err(PipelineError::InvalidProblem(format!(
                "domain has {n} boundary components but {} weights and {} data values were given",
                self.weights.len(),
                self.b.len()
            )));
        }
        if self.n_points < 16 {
            return Err(PipelineError::InvalidProblem(format!(
                "n_points must be at least 16, got {}",
                self.n_points
            )));
        }
        if self.resolution.nr < 1 || self.resolution.ntheta < 3 {
            return Err(PipelineError::InvalidProblem("need nr >= 1 and ntheta >= 3".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 2.0) {
            return Err(PipelineError::InvalidProblem(format!(
                "kappa must lie in (0, 2), got {}",
                self.kappa
            )));
        }
        if let Some(eps) = self.eps_det {
            if !(eps > 0.0) {
                return Err(PipelineError::InvalidProblem(format!(
                    "eps_det must be positive, got {eps}"
                )));
            }
        }
        if let Some(cf) = self.closed_form {
            self.check_closed_form(cf)?;
        }
        Ok(())
    }

    pub fn radii(&self, lambda: f64) -> Result<Option<(f64, f64)>, PipelineError> {
        match &self.domain {
            DomainFamily::Annulus { inner, outer, .. } => {
                let env = Bindings::new()
                    .with(crate::expr::Var::Lambda, lambda)
                    .expect("fresh bindings");
                let r1 = inner.eval(&env).map_err(|source| PipelineError::Expression {
                    what: "inner radius",
                    source,
                })?;
                let r2 = outer.eval(&env).map_err(|source| PipelineError::Expression {
                    what: "outer radius",
                    source,
                })?;
                Ok(Some((r1, r2)))
            }
            DomainFamily::Mesh { .. } => Ok(None),
        }
    }

    /// Domain at parameter λ, when it has an analytic description.
    pub fn domain_spec(&self, lambda: f64) -> Result<Option<DomainSpec>, PipelineError> {
        match &self.domain {
            DomainFamily::Annulus { dimension, .. } => {
                let (r1, r2) = self.radii(lambda)?.expect("annulus radii");
                let spec = DomainSpec::Annulus {
                    inner_radius: r1,
                    outer_radius: r2,
                    dimension: *dimension,
                };
                spec.validate()?;
                Ok(Some(spec))
            }
            DomainFamily::Mesh {
                spec: Some(spec),
                dilate,
                ..
            } => Ok(Some(if *dilate { spec.scale(lambda)? } else { spec.clone() })),
            DomainFamily::Mesh { spec: None, .. } => Ok(None),
        }
    }

    /// Mesh of the domain at λ, re-generated at the configured resolution.
    pub fn mesh(&self, lambda: f64) -> Result<Mesh, PipelineError> {
        if !(lambda > 0.0) {
            return Err(GeometryError::NonPositiveScale(lambda).into());
        }
        match &self.domain {
            DomainFamily::Annulus { dimension, .. } => {
                if *dimension != 2 {
                    return Err(PipelineError::InvalidProblem(format!(
                        "the finite element engine is two-dimensional; N = {dimension} needs the oracle engine"
                    )));
                }
                let (r1, r2) = self.radii(lambda)?.expect("annulus radii");
                let Resolution {
                    nr,
                    ntheta,
                    refinements,
                } = self.resolution;
                Ok(annulus_mesh(r1, r2, nr, ntheta, refinements)?)
            }
            DomainFamily::Mesh { mesh, dilate, .. } => {
                let base = if *dilate { mesh.scaled(lambda) } else { mesh.clone() };
                Ok(base.refined(self.resolution.refinements))
            }
        }
    }

    fn radial_coefficients(&self) -> Result<Expr, PipelineError> {
        match &self.coefficients.a {
            VectorField::Zero => Ok(Expr::zero()),
            VectorField::Radial { alpha } => Ok(alpha.clone()),
            VectorField::Cartesian { .. } => Err(PipelineError::OracleUnsupported(
                "a radial drift (a_r or a preset), not Cartesian components".into(),
            )),
        }
    }

    fn check_closed_form(&self, cf: ClosedForm) -> Result<(), PipelineError> {
        let mismatch = |m: &str| {
            Err(PipelineError::InvalidProblem(format!(
                "closed form does not match the problem: {m}"
            )))
        };
        let DomainFamily::Annulus { dimension: 2, .. } = &self.domain else {
            return mismatch("needs a planar annulus");
        };
        if self.weights.len() != 2 || !self.weights[0].is_zero() {
            return mismatch("needs zero outer weight");
        }
        let drift = crate::fem::drift_preset("unit-radial-drift").expect("preset");
        if self.coefficients.a != drift || self.coefficients.h != Expr::constant(1.0) {
            return mismatch("needs a = x/|x|^2 and h = 1");
        }
        for lambda in [1.3, 2.0, 5.0] {
            let (r1, r2) = self.radii(lambda)?.expect("annulus radii");
            let (e1, e2) = match cf {
                ClosedForm::Example1 { .. } => (lambda, 2.0 * lambda),
                ClosedForm::Example2 { .. } => (1.0, lambda),
            };
            if (r1 - e1).abs() > 1e-12 * e2 || (r2 - e2).abs() > 1e-12 * e2 {
                return mismatch("radii differ from the closed form's annulus");
            }
            for k in 0..=4 {
                let r = r1 + (r2 - r1) * k as f64 / 4.0;
                let want = match cf {
                    ClosedForm::Example1 { g } => g,
                    ClosedForm::Example2 { c0 } => radial::example2_weight(r, c0),
                };
                let got = self.weights[1]
                    .eval(&Bindings::radial(r, Some(lambda)))
                    .map_err(|source| PipelineError::Expression {
                        what: "inner weight",
                        source,
                    })?;
                if (got - want).abs() > 1e-12 * want.abs().max(1e-300) + 1e-15 {
                    return mismatch("inner weight differs from the closed form's weight");
                }
            }
        }
        Ok(())
    }

    pub fn eps_det_for(&self, system: &NonlocalSystem) -> f64 {
        self.eps_det.unwrap_or_else(|| system.default_eps_det())
    }
}

/// Result of one pipeline run at a fixed λ.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub lambda: f64,
    pub engine: Engine,
    pub system: NonlocalSystem,
    pub eps_det: f64,
    pub classification: Classification,
}

pub fn evaluate(problem: &Problem, lambda: f64, engine: Engine) -> Result<Evaluation, PipelineError> {
    let system = match engine {
        Engine::Fem => {
            let mesh = problem.mesh(lambda)?;
            let basis = basis_solutions(&mesh, &problem.coefficients, lambda)?;
            build_system(&basis, &problem.weights, &problem.b)?
        }
        Engine::Oracle => oracle_system(problem, lambda)?,
    };
    let eps_det = problem.eps_det_for(&system);
    let classification = classify(&system, eps_det)?;
    Ok(Evaluation {
        lambda,
        engine,
        system,
        eps_det,
        classification,
    })
}

/// Basis profiles of the closed-form examples, tag order (outer, inner).
fn closed_form_basis(cf: ClosedForm, lambda: f64) -> [Box<dyn Fn(f64) -> f64>; 2] {
    match cf {
        ClosedForm::Example1 { .. } => [
            Box::new(move |r: f64| (r - lambda).sinh() / lambda.sinh()),
            Box::new(move |r: f64| radial::example1_phi(r, lambda)),
        ],
        ClosedForm::Example2 { .. } => [
            Box::new(move |r: f64| radial::example2_psi(r, lambda)),
            Box::new(move |r: f64| radial::example2_phi(r, lambda)),
        ],
    }
}

fn oracle_system(problem: &Problem, lambda: f64) -> Result<NonlocalSystem, PipelineError> {
    let DomainFamily::Annulus { dimension, .. } = &problem.domain else {
        return Err(PipelineError::OracleUnsupported("an annulus domain".into()));
    };
    let (r1, r2) = problem.radii(lambda)?.expect("annulus radii");
    if let Some(cf) = problem.closed_form {
        let basis = closed_form_basis(cf, lambda);
        let mut r = vec![vec![0.0; 2]; 2];
        for (j, g) in problem.weights.iter().enumerate() {
            if g.is_zero() {
                continue;
            }
            for (k, profile) in basis.iter().enumerate() {
                let exact = match (cf, j, k) {
                    (ClosedForm::Example1 { g }, 1, 1) => Some(2.0 * PI * g * radial::example1_moment(lambda)),
                    (ClosedForm::Example2 { c0 }, 1, 1) => Some(radial::example2_integral(lambda, c0)?),
                    _ => None,
                };
                r[j][k] = match exact {
                    Some(v) => v,
                    None => {
                        let failure = std::cell::RefCell::new(None);
                        let integrand = |x: f64| match g.eval(&Bindings::radial(x, Some(lambda))) {
                            Ok(w) => 2.0 * PI * x * w * profile(x),
                            Err(e) => {
                                failure.borrow_mut().get_or_insert(e);
                                0.0
                            }
                        };
                        let v = radial::adaptive_simpson(&integrand, r1, r2, 1e-13);
                        if let Some(source) = failure.into_inner() {
                            return Err(PipelineError::Expression { what: "weight", source });
                        }
                        v
                    }
                };
            }
        }
        return Ok(NonlocalSystem::from_matrix(r, problem.b.clone())?);
    }
    let alpha = problem.radial_coefficients()?;
    let grid = RadialGrid::uniform(r1, r2, problem.n_points, *dimension)?;
    let basis = radial_basis(&grid, &alpha, &problem.coefficients.h, lambda)?;
    Ok(build_system(&basis, &problem.weights, &problem.b)?)
}

/// Finite element solution with everything it was built from.
#[derive(Debug, Clone)]
pub struct FemSolution {
    pub mesh: Mesh,
    pub basis: Vec<Vec<f64>>,
    pub evaluation: Evaluation,
    /// Nodal values of `u` when the problem is uniquely solvable.
    pub solution: Option<Vec<f64>>,
}

pub fn solve_fem(problem: &Problem, lambda: f64) -> Result<FemSolution, PipelineError> {
    let mesh = problem.mesh(lambda)?;
    let (basis_values, evaluation, solution) = {
        let basis = basis_solutions(&mesh, &problem.coefficients, lambda)?;
        let system = build_system(&basis, &problem.weights, &problem.b)?;
        let eps_det = problem.eps_det_for(&system);
        let classification = classify(&system, eps_det)?;
        let solution = match classification.coefficients() {
            Some(c) => Some(reconstruct(&basis, c)?.into_values()),
            None => None,
        };
        let values: Vec<Vec<f64>> = basis.fields.iter().map(|f| f.values().to_vec()).collect();
        (
            values,
            Evaluation {
                lambda,
                engine: Engine::Fem,
                system,
                eps_det,
                classification,
            },
            solution,
        )
    };
    Ok(FemSolution {
        mesh,
        basis: basis_values,
        evaluation,
        solution,
    })
}

/// Radial profile of the oracle solution, sampled on `n_points` radii.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub radii: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub evaluation: Evaluation,
    pub solution: Option<Vec<f64>>,
}

pub fn solve_oracle(problem: &Problem, lambda: f64) -> Result<OracleSolution, PipelineError> {
    let evaluation = evaluate(problem, lambda, Engine::Oracle)?;
    let DomainFamily::Annulus { dimension, .. } = &problem.domain else {
        return Err(PipelineError::OracleUnsupported("an annulus domain".into()));
    };
    let (r1, r2) = problem.radii(lambda)?.expect("annulus radii");
    let grid = RadialGrid::uniform(r1, r2, problem.n_points, *dimension)?;
    let radii = grid.radii().to_vec();
    let basis: Vec<Vec<f64>> = match problem.closed_form {
        Some(cf) => closed_form_basis(cf, lambda)
            .iter()
            .map(|f| radii.iter().map(|&r| f(r)).collect())
            .collect(),
        None => {
            let alpha = problem.radial_coefficients()?;
            radial_basis(&grid, &alpha, &problem.coefficients.h, lambda)?
                .fields
                .into_iter()
                .map(|f| f.into_values())
                .collect()
        }
    };
    let solution = evaluation.classification.coefficients().map(|c| {
        (0..radii.len())
            .map(|i| c.iter().zip(&basis).map(|(ck, phi)| ck * phi[i]).sum())
            .collect()
    });
    Ok(OracleSolution {
        radii,
        basis,
        evaluation,
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::critical_c0;

    pub(crate) fn example2(c0: f64, b_i: f64) -> Problem {
        Problem {
            domain: DomainFamily::Annulus {
                inner: Expr::constant(1.0),
                outer: "lambda".parse().unwrap(),
                dimension: 2,
            },
            coefficients: CoefficientField::unit_radial_drift(),
            weights: vec![Expr::zero(), format!("{c0:?} * exp(-r) / r * sin(r)").parse().unwrap()],
            b: vec![0.0, b_i],
            resolution: Resolution {
                nr: 16,
                ntheta: 32,
                refinements: 0,
            },
            n_points: 2001,
            closed_form: Some(ClosedForm::Example2 { c0 }),
            eps_det: None,
            kappa: 0.01,
        }
    }

    #[test]
    fn closed_form_oracle_matches_formula() {
        let p = example2(critical_c0(), 1.0);
        p.validate().unwrap();
        let e = evaluate(&p, 6.0, Engine::Oracle).unwrap();
        assert_eq!(e.system.det, radial::example2_det(6.0, critical_c0()).unwrap());
        assert_eq!(e.classification.tag(), "Unique");
        let coeffs = e.classification.coefficients().unwrap();
        assert!((coeffs[1] - 1.0 / e.system.det).abs() < 1e-12 * coeffs[1].abs());
        assert_eq!(coeffs[0], 0.0);
    }

    #[test]
    fn finite_difference_oracle_tracks_closed_form() {
        let mut p = example2(critical_c0(), 1.0);
        p.closed_form = None;
        let fd = evaluate(&p, 3.0, Engine::Oracle).unwrap().system.det;
        let exact = radial::example2_det(3.0, critical_c0()).unwrap();
        assert!((fd - exact).abs() < 1e-5, "{fd} vs {exact}");
    }

    #[test]
    fn closed_form_requires_matching_weight() {
        let mut p = example2(critical_c0(), 1.0);
        p.weights[1] = "exp(-r)".parse().unwrap();
        assert!(matches!(p.validate(), Err(PipelineError::InvalidProblem(_))));
        let mut p = example2(critical_c0(), 1.0);
        p.b.push(0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn fem_pipeline_close_to_oracle() {
        let p = example2(0.5, 1.0);
        let fem = evaluate(&p, 3.0, Engine::Fem).unwrap();
        let oracle = evaluate(&p, 3.0, Engine::Oracle).unwrap();
        assert!((fem.system.det - oracle.system.det).abs() < 5e-3);
        let sol = solve_fem(&p, 3.0).unwrap();
        assert_eq!(sol.solution.unwrap().len(), sol.mesh.node_count());
        let oracle = solve_oracle(&p, 3.0).unwrap();
        let b_inner = oracle.evaluation.classification.coefficients().unwrap()[1];
        let u = oracle.solution.unwrap();
        assert!((u[0] - b_inner).abs() < 1e-12 * b_inner.abs());
        assert!(u.last().unwrap().abs() < 1e-15);
    }
}
