//! Reduction of the integral boundary conditions to the linear system
//! `(I − R) B = b` over the basis solutions, and its classification.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::Serialize;
use thiserror::Error;

use crate::expr::Expr;
use crate::fem::{integrate_values, weight_values, BasisSolutionSet, DiscreteField, FemError, Field, FieldSpace};
use crate::geometry::{DomainSpec, GeometryError};

#[derive(Debug, Error)]
pub enum NonlocalError {
    #[error("expected {expected} entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("trace of u on component {component} is not constant (spread {spread:e})")]
    NonConstantTrace { component: usize, spread: f64 },
    #[error("field vanishes identically; the envelope bound is vacuous")]
    AllZeroField,
    #[error("kappa must lie in (0, 2), got {0}")]
    InvalidKappa(f64),
    #[error("envelope fit failed: {0}")]
    EnvelopeFit(String),
    #[error("dense linear algebra failed: {0}")]
    Linalg(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Determinants of the two Cramer matrices of the two-component system.
///
/// `c_psi / det` is the coefficient of the inner basis solution (tag 1) and
/// `c_phi / det` that of the outer one (tag 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CramerDeterminants {
    pub c_psi: f64,
    pub c_phi: f64,
}

/// `R[j][k] = ∫ g_j φ_{λ,k}` with data `b`, indices in boundary-tag order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlocalSystem {
    pub r: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub det: f64,
    pub cramer: Option<CramerDeterminants>,
    /// 2-norm condition number of `I − R`.
    pub cond: f64,
}

impl NonlocalSystem {
    /// Builds the system from a given interaction matrix.
    pub fn from_matrix(r: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, NonlocalError> {
        let n = r.len();
        if b.len() != n {
            return Err(NonlocalError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        if let Some(row) = r.iter().find(|row| row.len() != n) {
            return Err(NonlocalError::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        let m = i_minus(&r);
        let det = if n == 0 { 1.0 } else { m.as_ref().determinant() };
        let sv = if n == 0 {
            Vec::new()
        } else {
            m.as_ref()
                .singular_values()
                .map_err(|e| NonlocalError::Linalg(format!("{e:?}")))?
        };
        let cond = match (sv.first(), sv.last()) {
            (Some(&max), Some(&min)) if min > 0.0 => max / min,
            (Some(_), Some(_)) => f64::INFINITY,
            _ => 1.0,
        };
        let cramer = (n == 2).then(|| cramer_determinants(&r, &b));
        Ok(Self {
            r,
            b,
            det,
            cramer,
            cond,
        })
    }

    pub fn size(&self) -> usize {
        self.r.len()
    }

    /// `‖R‖_∞`
    pub fn r_norm_inf(&self) -> f64 {
        self.r
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `1e-9 (1 + ‖R‖_∞)`
    pub fn default_eps_det(&self) -> f64 {
        1e-9 * (1.0 + self.r_norm_inf())
    }

    /// Two-component expansion `(1 − R_ii)(1 − R_oo) − R_io R_oi`.
    pub fn det_expansion(&self) -> Option<f64> {
        (self.size() == 2).then(|| {
            let (r_oo, r_oi, r_io, r_ii) = (self.r[0][0], self.r[0][1], self.r[1][0], self.r[1][1]);
            (1.0 - r_ii) * (1.0 - r_oo) - r_io * r_oi
        })
    }
}

fn i_minus(r: &[Vec<f64>]) -> Mat<f64> {
    let n = r.len();
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - r[i][j])
}

fn cramer_determinants(r: &[Vec<f64>], b: &[f64]) -> CramerDeterminants {
    let (r_oo, r_oi, r_io, r_ii) = (r[0][0], r[0][1], r[1][0], r[1][1]);
    let (b_o, b_i) = (b[0], b[1]);
    CramerDeterminants {
        // det [[b_i, −R_io], [b_o, 1 − R_oo]]
        c_psi: b_i * (1.0 - r_oo) + r_io * b_o,
        // det [[1 − R_ii, b_i], [−R_oi, b_o]]
        c_phi: (1.0 - r_ii) * b_o + r_oi * b_i,
    }
}

/// Weighted integrals of every basis field against every weight.
pub fn build_system<S: FieldSpace>(
    basis: &BasisSolutionSet<'_, S>,
    weights: &[Expr],
    b: &[f64],
) -> Result<NonlocalSystem, NonlocalError> {
    let n = basis.len();
    if weights.len() != n {
        return Err(NonlocalError::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if b.len() != n {
        return Err(NonlocalError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let space = basis.space();
    let quad = space.quadrature();
    let mut r = vec![vec![0.0; n]; n];
    for (j, g) in weights.iter().enumerate() {
        if g.is_zero() {
            continue;
        }
        let gv = weight_values(space, g, basis.lambda)?;
        for (k, field) in basis.fields.iter().enumerate() {
            r[j][k] = integrate_values(&quad, &gv, field);
        }
    }
    NonlocalSystem::from_matrix(r, b.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum Classification {
    Unique { coefficients: Vec<f64> },
    InfinitelyMany { particular: Vec<f64>, kernel: Vec<f64> },
    NoSolution,
    Degenerate { condition: f64 },
}

impl Classification {
    pub fn tag(&self) -> &'static str {
        match self {
            Classification::Unique { .. } => "Unique",
            Classification::InfinitelyMany { .. } => "InfinitelyMany",
            Classification::NoSolution => "NoSolution",
            Classification::Degenerate { .. } => "Degenerate",
        }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match self {
            Classification::Unique { coefficients } => Some(coefficients),
            _ => None,
        }
    }
}

/// Factor by which a singular value (or residual) must clear a threshold to
/// count as a decision.
const AMBIGUITY_FACTOR: f64 = 10.0;

fn ambiguous(value: f64, threshold: f64) -> bool {
    value > threshold / AMBIGUITY_FACTOR && value <= threshold * AMBIGUITY_FACTOR
}

/// Unique when `|det| > eps_det`; otherwise a singular-value rank test on
/// `I − R` with threshold `eps_det · σ_max`, and a consistency test of `b`
/// against the numerically null left singular vectors.
pub fn classify(sys: &NonlocalSystem, eps_det: f64) -> Result<Classification, NonlocalError> {
    let n = sys.size();
    let m = i_minus(&sys.r);
    if sys.det.abs() > eps_det {
        let rhs = Mat::from_fn(n, 1, |i, _| sys.b[i]);
        let x = m.as_ref().partial_piv_lu().solve(&rhs);
        let coefficients: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        return Ok(Classification::Unique { coefficients });
    }
    let svd = m.as_ref().svd().map_err(|e| NonlocalError::Linalg(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let sigma: Vec<f64> = (0..n).map(|k| s[k]).collect();
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let threshold = eps_det * sigma_max.max(f64::MIN_POSITIVE);
    let condition = if sigma.contains(&0.0) {
        f64::INFINITY
    } else {
        sigma_max / sigma.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    if sigma.iter().any(|&x| ambiguous(x, threshold)) {
        return Ok(Classification::Degenerate { condition });
    }
    let null: Vec<usize> = (0..n).filter(|&k| sigma[k] <= threshold).collect();
    if null.is_empty() {
        // small determinant from moderately small singular values only
        return Ok(Classification::Degenerate { condition });
    }
    let b_norm = sys.b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let consistency_tol = eps_det * (1.0 + b_norm);
    let mut consistent = true;
    for &k in &null {
        let proj: f64 = (0..n).map(|i| u[(i, k)] * sys.b[i]).sum();
        if ambiguous(proj.abs(), consistency_tol) {
            return Ok(Classification::Degenerate { condition });
        }
        if proj.abs() > consistency_tol {
            consistent = false;
        }
    }
    if !consistent {
        return Ok(Classification::NoSolution);
    }
    let mut particular = vec![0.0; n];
    for k in (0..n).filter(|k| !null.contains(k)) {
        let proj: f64 = (0..n).map(|i| u[(i, k)] * sys.b[i]).sum();
        for (i, p) in particular.iter_mut().enumerate() {
            *p += proj / sigma[k] * v[(i, k)];
        }
    }
    let k0 = null[0];
    let mut kernel: Vec<f64> = (0..n).map(|i| v[(i, k0)]).collect();
    let lead = kernel
        .iter()
        .cloned()
        .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
    if lead < 0.0 {
        kernel.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(Classification::InfinitelyMany { particular, kernel })
}

/// `Σ_η B_η φ_{λ,η}`.
pub fn reconstruct<'s, S: FieldSpace>(
    basis: &BasisSolutionSet<'s, S>,
    coefficients: &[f64],
) -> Result<Field<'s, S>, NonlocalError> {
    if coefficients.len() != basis.len() {
        return Err(NonlocalError::DimensionMismatch {
            expected: basis.len(),
            got: coefficients.len(),
        });
    }
    let n = basis.space().dof_count();
    let mut values = vec![0.0; n];
    for (field, &c) in basis.fields.iter().zip(coefficients) {
        if c == 0.0 {
            continue;
        }
        for (v, &f) in values.iter_mut().zip(field.values()) {
            *v += c * f;
        }
    }
    Ok(Field::new(basis.space(), values)?)
}

/// `max_η |u|_{Γ_η} − b_η − ∫ g_η u|`, after checking that each boundary trace
/// is constant to `1e-10 (1 + max|u|)`.
pub fn fixed_point_residual<S: FieldSpace>(
    u: &Field<'_, S>,
    weights: &[Expr],
    b: &[f64],
    lambda: f64,
) -> Result<f64, NonlocalError> {
    let space = u.space();
    let n = space.component_count();
    if weights.len() != n {
        return Err(NonlocalError::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    if b.len() != n {
        return Err(NonlocalError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let tol = 1e-10 * (1.0 + u.max_abs());
    let quad = space.quadrature();
    let mut worst: f64 = 0.0;
    for eta in 0..n {
        let trace = u.trace(eta);
        let lo = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > tol {
            return Err(NonlocalError::NonConstantTrace {
                component: eta,
                spread: hi - lo,
            });
        }
        let integral = if weights[eta].is_zero() {
            0.0
        } else {
            integrate_values(&quad, &weight_values(space, &weights[eta], lambda)?, u)
        };
        worst = worst.max((trace[0] - b[eta] - integral).abs());
    }
    Ok(worst)
}

/// Quantities behind the two sufficient conditions for unique solvability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientConditions {
    /// `∫ (|g_i| + |g_o|)`
    pub abs_integral: f64,
    /// `∫ g_η` per component, tag order.
    pub integrals: Vec<f64>,
    pub nonnegative: bool,
    /// `∫ (|g_i| + |g_o|) ≤ 1`, which forces `det(I − R) > 0`.
    pub smallness_holds: bool,
    /// Non-negative weights with every `∫ g_η < 1`, which excludes infinitely
    /// many solutions.
    pub nonneg_holds: bool,
}

pub fn check_sufficient_conditions<S: FieldSpace>(
    space: &S,
    weights: &[Expr],
    lambda: f64,
) -> Result<SufficientConditions, NonlocalError> {
    let n = space.component_count();
    if weights.len() != n {
        return Err(NonlocalError::DimensionMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    let quad = space.quadrature();
    let mut abs_integral = 0.0;
    let mut integrals = Vec::with_capacity(n);
    let mut nonnegative = true;
    for g in weights {
        let gv = weight_values(space, g, lambda)?;
        nonnegative &= gv.iter().all(|&x| x >= 0.0);
        integrals.push(quad.iter().zip(&gv).map(|(q, x)| q.weight * x).sum::<f64>());
        abs_integral += quad.iter().zip(&gv).map(|(q, x)| q.weight * x.abs()).sum::<f64>();
    }
    Ok(SufficientConditions {
        abs_integral,
        smallness_holds: abs_integral <= 1.0,
        nonneg_holds: nonnegative && integrals.iter().all(|&x| x < 1.0),
        integrals,
        nonnegative,
    })
}

/// Fitted bound `|u(x)| ≤ C* exp(−M* λ^{−κ/2} dist(x, ∂Ω_λ))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayEnvelope {
    pub kappa: f64,
    pub c_star: f64,
    pub m_star: f64,
    /// `log|u(x)| − (log C* − M* s(x))` per node; `NaN` where `u = 0`.
    pub margins: Vec<f64>,
    /// Nodes that entered the slope fit.
    pub fitted_nodes: usize,
}

impl DecayEnvelope {
    pub fn max_margin(&self) -> f64 {
        self.margins
            .iter()
            .filter(|m| !m.is_nan())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

const ENVELOPE_BINS: usize = 32;
const ENVELOPE_FLOOR: f64 = 1e-14;

/// Fits the decay rate to the upper envelope of `log|u|` against
/// `s = λ^{−κ/2} dist(x, ∂Ω_λ)`: nodes farther than one mesh cell from the
/// boundary are binned in `s`, a least-squares line goes through the per-bin
/// maxima, and `C*` is then raised until the envelope majorizes every node.
pub fn decay_envelope(
    u: &DiscreteField<'_>,
    spec: &DomainSpec,
    lambda: f64,
    kappa: f64,
) -> Result<DecayEnvelope, NonlocalError> {
    if !(kappa > 0.0 && kappa < 2.0) {
        return Err(NonlocalError::InvalidKappa(kappa));
    }
    if u.max_abs() == 0.0 {
        return Err(NonlocalError::AllZeroField);
    }
    let mesh = u.space();
    let scale = lambda.powf(-kappa / 2.0);
    let cell = mesh.max_edge_length();
    let mut s = Vec::with_capacity(mesh.node_count());
    for &p in mesh.nodes() {
        let d = match spec {
            DomainSpec::ExternalMesh { .. } => mesh.dist_to_boundary(p),
            _ => spec.dist_to_boundary(p).unwrap_or_else(|_| mesh.dist_to_boundary(p)),
        };
        s.push((scale * d, d));
    }
    let logs: Vec<Option<f64>> = u
        .values()
        .iter()
        .map(|v| (v.abs() > ENVELOPE_FLOOR).then(|| v.abs().ln()))
        .collect();
    let fit: Vec<(f64, f64)> = s
        .iter()
        .zip(&logs)
        .filter_map(|(&(si, d), l)| l.filter(|_| d > cell).map(|l| (si, l)))
        .collect();
    if fit.len() < 3 {
        return Err(NonlocalError::EnvelopeFit(format!(
            "only {} interior nodes with |u| > 1e-14",
            fit.len()
        )));
    }
    let s_min = fit.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let s_max = fit.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (s_max - s_min) / ENVELOPE_BINS as f64;
    if !(width > 0.0) {
        return Err(NonlocalError::EnvelopeFit("fitted nodes share one distance".into()));
    }
    let mut bins: Vec<Option<(f64, f64)>> = vec![None; ENVELOPE_BINS];
    for &(si, l) in &fit {
        let k = (((si - s_min) / width) as usize).min(ENVELOPE_BINS - 1);
        if bins[k].is_none_or(|(_, best)| l > best) {
            bins[k] = Some((si, l));
        }
    }
    let pts: Vec<(f64, f64)> = bins.into_iter().flatten().collect();
    if pts.len() < 3 {
        return Err(NonlocalError::EnvelopeFit(
            "fewer than three populated distance bins".into(),
        ));
    }
    let n = pts.len() as f64;
    let mean_s = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_s).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_s) * (p.1 - mean_l)).sum();
    let m_star = -sxy / sxx;
    if !(m_star > 0.0) {
        return Err(NonlocalError::EnvelopeFit(format!(
            "fitted decay rate {m_star} is not positive"
        )));
    }
    let log_c = s
        .iter()
        .zip(&logs)
        .filter_map(|(&(si, _), l)| l.map(|l| l + m_star * si))
        .fold(f64::NEG_INFINITY, f64::max);
    let margins = s
        .iter()
        .zip(&logs)
        .map(|(&(si, _), l)| l.map_or(f64::NAN, |l| l - (log_c - m_star * si)))
        .collect();
    Ok(DecayEnvelope {
        kappa,
        c_star: log_c.exp(),
        m_star,
        margins,
        fitted_nodes: fit.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{basis_solutions, CoefficientField};
    use crate::geometry::generate_annulus_mesh;
    use proptest::prelude::*;

    fn sys(r: [[f64; 2]; 2], b: [f64; 2]) -> NonlocalSystem {
        NonlocalSystem::from_matrix(r.iter().map(|row| row.to_vec()).collect(), b.to_vec()).unwrap()
    }

    #[test]
    fn zero_weights_give_identity() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 4, 16).unwrap();
        let basis = basis_solutions(&mesh, &CoefficientField::unit_radial_drift(), 1.0).unwrap();
        let weights = [Expr::zero(), Expr::zero()];
        let s = build_system(&basis, &weights, &[0.0, 1.0]).unwrap();
        assert_eq!(s.det, 1.0);
        assert!(s.r.iter().flatten().all(|&x| x == 0.0));
        let c = classify(&s, s.default_eps_det()).unwrap();
        assert_eq!(
            c,
            Classification::Unique {
                coefficients: vec![0.0, 1.0]
            }
        );
        let u = reconstruct(&basis, c.coefficients().unwrap()).unwrap();
        assert_eq!(u.values(), basis.fields[1].values());
        assert_eq!(fixed_point_residual(&u, &weights, &[0.0, 1.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn outer_row_vanishes_without_outer_weight() {
        let mesh = generate_annulus_mesh(1.0, 3.0, 6, 24).unwrap();
        let basis = basis_solutions(&mesh, &CoefficientField::unit_radial_drift(), 3.0).unwrap();
        let g_i: Expr = "0.5*exp(-r)*sin(r)/r".parse().unwrap();
        let s = build_system(&basis, &[Expr::zero(), g_i], &[0.0, 1.0]).unwrap();
        assert_eq!(s.r[0], vec![0.0, 0.0]);
        assert!((s.det - (1.0 - s.r[1][1])).abs() < 1e-15);
    }

    #[test]
    fn zero_determinant_dichotomy() {
        // R = [[0, 0], [0, 1]]: the inner equation reads 0·B_i = b_i
        let consistent = sys([[0.0, 0.0], [0.0, 1.0]], [0.5, 0.0]);
        assert_eq!(consistent.det, 0.0);
        assert_eq!(consistent.cramer.unwrap().c_psi, 0.0);
        match classify(&consistent, consistent.default_eps_det()).unwrap() {
            Classification::InfinitelyMany { particular, kernel } => {
                assert!((particular[0] - 0.5).abs() < 1e-15 && particular[1].abs() < 1e-15);
                assert!(kernel[0].abs() < 1e-15 && (kernel[1] - 1.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        let inconsistent = sys([[0.0, 0.0], [0.0, 1.0]], [0.5, 1.0]);
        assert!(inconsistent.cramer.unwrap().c_psi != 0.0);
        assert_eq!(
            classify(&inconsistent, inconsistent.default_eps_det()).unwrap(),
            Classification::NoSolution
        );
    }

    #[test]
    fn ambiguous_rank_is_degenerate() {
        let eps = 1e-9;
        // σ_min sits right at the threshold
        let s = sys([[1.0 - 5e-10, 0.0], [0.0, 0.0]], [1.0, 0.0]);
        assert_eq!(classify(&s, eps).unwrap().tag(), "Degenerate");
    }

    #[test]
    fn three_component_rank_deficiency() {
        let r = vec![vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.5]];
        let s = NonlocalSystem::from_matrix(r.clone(), vec![1.0, 0.0, 1.0]).unwrap();
        assert_eq!(classify(&s, s.default_eps_det()).unwrap().tag(), "InfinitelyMany");
        let s = NonlocalSystem::from_matrix(r, vec![1.0, 2.0, 1.0]).unwrap();
        assert_eq!(classify(&s, s.default_eps_det()).unwrap(), Classification::NoSolution);
    }

    #[test]
    fn dimension_checks() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 2, 8).unwrap();
        let basis = basis_solutions(&mesh, &CoefficientField::helmholtz(), 1.0).unwrap();
        assert!(matches!(
            reconstruct(&basis, &[1.0]),
            Err(NonlocalError::DimensionMismatch { .. })
        ));
        assert!(build_system(&basis, &[Expr::zero()], &[0.0, 0.0]).is_err());
        let zero = reconstruct(&basis, &[0.0, 0.0]).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert_eq!(
            fixed_point_residual(&zero, &[Expr::constant(0.3), Expr::constant(0.1)], &[0.0, 0.0], 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn non_constant_trace_is_rejected() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 2, 8).unwrap();
        let values = mesh.nodes().iter().map(|p| p[0]).collect();
        let u = Field::new(&mesh, values).unwrap();
        assert!(matches!(
            fixed_point_residual(&u, &[Expr::zero(), Expr::zero()], &[0.0, 0.0], 1.0),
            Err(NonlocalError::NonConstantTrace { .. })
        ));
    }

    #[test]
    fn sufficient_condition_flags() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 4, 32).unwrap();
        let area = mesh.area();
        let small = Expr::constant(0.25 / area);
        let rep = check_sufficient_conditions(&mesh, &[small.clone(), small], 1.0).unwrap();
        assert!((rep.abs_integral - 0.5).abs() < 1e-12);
        assert!(rep.smallness_holds && rep.nonneg_holds);
        let big = Expr::constant(2.5 / area);
        let rep = check_sufficient_conditions(&mesh, &[big.clone(), big], 1.0).unwrap();
        assert!(!rep.smallness_holds && !rep.nonneg_holds);
    }

    #[test]
    fn envelope_of_decaying_solution() {
        let lambda = 10.0;
        let mesh = generate_annulus_mesh(1.0, lambda, 36, 96).unwrap();
        let basis = basis_solutions(&mesh, &CoefficientField::unit_radial_drift(), lambda).unwrap();
        let spec = DomainSpec::annulus(1.0, lambda).unwrap();
        let env = decay_envelope(&basis.fields[1], &spec, lambda, 0.01).unwrap();
        assert!(env.m_star > 0.5 && env.m_star < 2.0, "{}", env.m_star);
        assert!(env.max_margin() <= 1e-9);
        let zero = Field::zeros(&mesh);
        assert!(matches!(
            decay_envelope(&zero, &spec, lambda, 0.01),
            Err(NonlocalError::AllZeroField)
        ));
        assert!(matches!(
            decay_envelope(&basis.fields[1], &spec, lambda, 2.0),
            Err(NonlocalError::InvalidKappa(_))
        ));
    }

    proptest! {
        #[test]
        fn det_expansion_and_cramer(
            r in proptest::array::uniform4(-2.0f64..2.0),
            b in proptest::array::uniform2(-5.0f64..5.0),
        ) {
            let s = sys([[r[0], r[1]], [r[2], r[3]]], b);
            let expansion = s.det_expansion().unwrap();
            prop_assert!((s.det - expansion).abs() <= 1e-13 * (1.0 + s.det.abs()));
            prop_assume!(s.det.abs() > 1e-3);
            let c = classify(&s, s.default_eps_det()).unwrap();
            let coeffs = c.coefficients().unwrap();
            let cr = s.cramer.unwrap();
            let b_i = cr.c_psi / s.det;
            let b_o = cr.c_phi / s.det;
            prop_assert!((coeffs[1] - b_i).abs() <= 1e-10 * b_i.abs().max(1e-300) + 1e-14);
            prop_assert!((coeffs[0] - b_o).abs() <= 1e-10 * b_o.abs().max(1e-300) + 1e-14);
        }
    }
}
