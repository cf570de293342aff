//! Piecewise-linear Galerkin solver for `−Δu + a·∇u + h u = 0` with constant
//! Dirichlet data on each boundary component.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use thiserror::Error;

use crate::expr::{Bindings, EvalError, Expr, Var};
use crate::geometry::{Mesh, Point};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("linear system is singular: {0}")]
    SingularSystem(String),
    #[error("cannot evaluate {what} at ({}, {}): {source}", .at[0], .at[1])]
    CoefficientDomain {
        what: &'static str,
        at: Point,
        #[source]
        source: EvalError,
    },
    #[error("reaction coefficient h = {value} is not positive at ({}, {})", .at[0], .at[1])]
    NonPositiveReaction { at: Point, value: f64 },
    #[error("weak convection fails at ({}, {}): 4h - |a|^2 = {margin}", .at[0], .at[1])]
    WeakConvection { at: Point, margin: f64 },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} boundary components, mesh has {got}")]
    ComponentCount { needed: usize, got: usize },
    #[error("unknown coefficient preset `{0}`")]
    UnknownPreset(String),
}

/// Drift field `a`.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    Zero,
    Cartesian {
        x: Expr,
        y: Expr,
    },
    /// `a(x) = α(r) x/|x|`
    Radial {
        alpha: Expr,
    },
}

impl VectorField {
    pub fn eval(&self, env: &Bindings) -> Result<[f64; 2], EvalError> {
        match self {
            VectorField::Zero => Ok([0.0, 0.0]),
            VectorField::Cartesian { x, y } => Ok([x.eval(env)?, y.eval(env)?]),
            VectorField::Radial { alpha } => {
                let get = |v: Var| env.get(v).ok_or(EvalError::UnboundVariable(v.name()));
                let r = get(Var::R)?;
                if r == 0.0 {
                    return Err(EvalError::Domain("radial direction undefined at the origin".into()));
                }
                let s = alpha.eval(env)? / r;
                Ok([s * get(Var::X)?, s * get(Var::Y)?])
            }
        }
    }
}

/// Coefficients `a` and `h` of the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub a: VectorField,
    pub h: Expr,
}

impl CoefficientField {
    pub fn new(a: VectorField, h: Expr) -> Self {
        Self { a, h }
    }

    /// `a = 0`, `h = 1`.
    pub fn helmholtz() -> Self {
        Self::new(VectorField::Zero, Expr::constant(1.0))
    }

    /// `a = x/|x|²`, `h = 1`.
    pub fn unit_radial_drift() -> Self {
        Self::new(drift_preset("unit-radial-drift").unwrap(), Expr::constant(1.0))
    }

    fn at(&self, x: Point, lambda: f64) -> Result<([f64; 2], f64), FemError> {
        let env = Bindings::point(x[0], x[1], Some(lambda));
        let a = self.a.eval(&env).map_err(|source| FemError::CoefficientDomain {
            what: "a",
            at: x,
            source,
        })?;
        let h = self.h.eval(&env).map_err(|source| FemError::CoefficientDomain {
            what: "h",
            at: x,
            source,
        })?;
        Ok((a, h))
    }

    /// Checks `h > 0` and `4h > |a|²` at the given points.
    pub fn check(&self, points: impl IntoIterator<Item = Point>, lambda: f64) -> Result<(), FemError> {
        for x in points {
            let (a, h) = self.at(x, lambda)?;
            if !(h > 0.0) {
                return Err(FemError::NonPositiveReaction { at: x, value: h });
            }
            let margin = 4.0 * h - (a[0] * a[0] + a[1] * a[1]);
            if !(margin > 0.0) {
                return Err(FemError::WeakConvection { at: x, margin });
            }
        }
        Ok(())
    }
}

/// Named drift fields: `zero` and `unit-radial-drift` (`a = x/|x|²`).
pub fn drift_preset(name: &str) -> Result<VectorField, FemError> {
    match name {
        "zero" => Ok(VectorField::Zero),
        "unit-radial-drift" => Ok(VectorField::Radial {
            alpha: "1/r".parse().expect("valid preset"),
        }),
        _ => Err(FemError::UnknownPreset(name.into())),
    }
}

/// Quadrature point together with the interpolation stencil of a discrete
/// field at that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    pub x: Point,
    pub weight: f64,
    pub stencil: [(usize, f64); 2],
}

/// A discretization on which nodal fields live and can be integrated.
pub trait FieldSpace {
    fn dof_count(&self) -> usize;
    fn component_count(&self) -> usize;
    fn component_dofs(&self, tag: usize) -> &[usize];
    fn quadrature(&self) -> Vec<QuadPoint>;
}

impl FieldSpace for Mesh {
    fn dof_count(&self) -> usize {
        self.node_count()
    }

    fn component_count(&self) -> usize {
        Mesh::component_count(self)
    }

    fn component_dofs(&self, tag: usize) -> &[usize] {
        self.component_nodes(tag)
    }

    /// Mid-edge rule, three points per triangle with weight `area/3`.
    fn quadrature(&self) -> Vec<QuadPoint> {
        let nodes = self.nodes();
        let mut out = Vec::with_capacity(3 * self.triangles().len());
        for (t, tri) in self.triangles().iter().enumerate() {
            let w = self.signed_area(t) / 3.0;
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                out.push(QuadPoint {
                    x: midpoint(nodes[a], nodes[b]),
                    weight: w,
                    stencil: [(a, 0.5), (b, 0.5)],
                });
            }
        }
        out
    }
}

fn midpoint(a: Point, b: Point) -> Point {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Nodal values on a [`FieldSpace`].
#[derive(Debug, Clone)]
pub struct Field<'s, S: FieldSpace> {
    space: &'s S,
    values: Vec<f64>,
}

pub type DiscreteField<'m> = Field<'m, Mesh>;

impl<'s, S: FieldSpace> Field<'s, S> {
    pub fn new(space: &'s S, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != space.dof_count() {
            return Err(FemError::DimensionMismatch {
                expected: space.dof_count(),
                got: values.len(),
            });
        }
        Ok(Self { space, values })
    }

    pub fn zeros(space: &'s S) -> Self {
        Self {
            space,
            values: vec![0.0; space.dof_count()],
        }
    }

    pub fn space(&self) -> &'s S {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Values on boundary component `tag`.
    pub fn trace(&self, tag: usize) -> Vec<f64> {
        self.space.component_dofs(tag).iter().map(|&i| self.values[i]).collect()
    }
}

impl DiscreteField<'_> {
    /// Value of the piecewise-linear interpolant at `x`, if `x` lies in the mesh.
    pub fn value_at(&self, x: Point) -> Option<f64> {
        let (t, l) = self.space.locate(x)?;
        let tri = self.space.triangles()[t];
        Some((0..3).map(|k| l[k] * self.values[tri[k]]).sum())
    }
}

/// Values of `weight` at every quadrature point of `space`.
pub fn weight_values<S: FieldSpace>(space: &S, weight: &Expr, lambda: f64) -> Result<Vec<f64>, FemError> {
    if weight.is_zero() {
        return Ok(vec![0.0; space.quadrature().len()]);
    }
    space
        .quadrature()
        .iter()
        .map(|q| {
            weight
                .eval(&Bindings::point(q.x[0], q.x[1], Some(lambda)))
                .map_err(|source| FemError::CoefficientDomain {
                    what: "weight",
                    at: q.x,
                    source,
                })
        })
        .collect()
}

/// `Σ_q w_q g(q) u(q)` for precomputed weight values.
pub fn integrate_values<S: FieldSpace>(quad: &[QuadPoint], g: &[f64], field: &Field<'_, S>) -> f64 {
    let v = field.values();
    quad.iter()
        .zip(g)
        .map(|(q, &gq)| {
            let u = q.stencil[0].1 * v[q.stencil[0].0] + q.stencil[1].1 * v[q.stencil[1].0];
            q.weight * gq * u
        })
        .sum()
}

/// `∫ weight · field` by the quadrature of the field's space.
pub fn integrate_weighted<S: FieldSpace>(weight: &Expr, lambda: f64, field: &Field<'_, S>) -> Result<f64, FemError> {
    let g = weight_values(field.space(), weight, lambda)?;
    Ok(integrate_values(&field.space().quadrature(), &g, field))
}

/// Gradients of the three barycentric coordinates of a triangle.
fn barycentric_gradients(p: [Point; 3], area: f64) -> [[f64; 2]; 3] {
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        g[k] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
    }
    g
}

const NOT_INTERIOR: usize = usize::MAX;

/// Factorized Dirichlet problem on a fixed mesh and operator; solves for any
/// per-component boundary data with one LU factorization.
pub struct DirichletSolver<'m> {
    mesh: &'m Mesh,
    lambda: f64,
    interior_nodes: Vec<usize>,
    a_ii: Vec<(usize, usize, f64)>,
    a_ib: Vec<(usize, usize, f64)>,
    lu: Option<faer::sparse::linalg::solvers::Lu<usize, f64>>,
}

impl<'m> DirichletSolver<'m> {
    /// Assembles and factorizes after checking the coefficient invariants on
    /// every quadrature point.
    pub fn new(mesh: &'m Mesh, coeffs: &CoefficientField, lambda: f64) -> Result<Self, FemError> {
        coeffs.check(mesh.quadrature().iter().map(|q| q.x), lambda)?;
        Self::assemble(mesh, coeffs, lambda)
    }

    /// Same as [`DirichletSolver::new`] without the invariant checks, so that
    /// e.g. the pure Laplacian (`h = 0`) can be used.
    pub fn new_unchecked(mesh: &'m Mesh, coeffs: &CoefficientField, lambda: f64) -> Result<Self, FemError> {
        Self::assemble(mesh, coeffs, lambda)
    }

    fn assemble(mesh: &'m Mesh, coeffs: &CoefficientField, lambda: f64) -> Result<Self, FemError> {
        let n = mesh.node_count();
        let mut interior_index = vec![NOT_INTERIOR; n];
        let mut interior_nodes = Vec::new();
        for (i, slot) in interior_index.iter_mut().enumerate() {
            if mesh.node_tag(i).is_none() {
                *slot = interior_nodes.len();
                interior_nodes.push(i);
            }
        }
        let nodes = mesh.nodes();
        let mut a_ii = Vec::with_capacity(9 * mesh.triangles().len());
        let mut a_ib = Vec::new();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let area = mesh.signed_area(t);
            let grad = barycentric_gradients(p, area);
            let mut local = [[0.0; 3]; 3];
            for k in 0..3 {
                for l in 0..3 {
                    local[k][l] = area * (grad[k][0] * grad[l][0] + grad[k][1] * grad[l][1]);
                }
            }
            let w = area / 3.0;
            for e in 0..3 {
                let x = midpoint(p[e], p[(e + 1) % 3]);
                let (a, h) = coeffs.at(x, lambda)?;
                // barycentric coordinates at the midpoint of edge (e, e+1)
                let mut bary = [0.0; 3];
                bary[e] = 0.5;
                bary[(e + 1) % 3] = 0.5;
                for k in 0..3 {
                    if bary[k] == 0.0 {
                        continue;
                    }
                    for l in 0..3 {
                        let conv = a[0] * grad[l][0] + a[1] * grad[l][1];
                        local[k][l] += w * bary[k] * (conv + h * bary[l]);
                    }
                }
            }
            for k in 0..3 {
                let row = interior_index[tri[k]];
                if row == NOT_INTERIOR {
                    continue;
                }
                for l in 0..3 {
                    let col = interior_index[tri[l]];
                    if col == NOT_INTERIOR {
                        a_ib.push((row, tri[l], local[k][l]));
                    } else {
                        a_ii.push((row, col, local[k][l]));
                    }
                }
            }
        }
        let m = interior_nodes.len();
        let lu = if m == 0 {
            None
        } else {
            let triplets: Vec<_> = a_ii.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
            let mat = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &triplets)
                .map_err(|e| FemError::SingularSystem(format!("{e:?}")))?;
            Some(mat.sp_lu().map_err(|e| FemError::SingularSystem(format!("{e:?}")))?)
        };
        Ok(Self {
            mesh,
            lambda,
            interior_nodes,
            a_ii,
            a_ib,
            lu,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Solves with constant value `boundary_values[tag]` on each component.
    pub fn solve(&self, boundary_values: &[f64]) -> Result<DiscreteField<'m>, FemError> {
        let mut out = self.solve_many(&[boundary_values.to_vec()])?;
        Ok(out.pop().expect("one right-hand side"))
    }

    /// Solves for several boundary data vectors with the same factorization.
    pub fn solve_many(&self, data: &[Vec<f64>]) -> Result<Vec<DiscreteField<'m>>, FemError> {
        let comps = self.mesh.component_count();
        for d in data {
            if d.len() != comps {
                return Err(FemError::DimensionMismatch {
                    expected: comps,
                    got: d.len(),
                });
            }
        }
        let n = self.mesh.node_count();
        let boundary: Vec<Vec<f64>> = data
            .iter()
            .map(|d| (0..n).map(|i| self.mesh.node_tag(i).map_or(0.0, |t| d[t])).collect())
            .collect();
        let m = self.interior_nodes.len();
        let mut rhs = Mat::<f64>::zeros(m, data.len());
        for (j, u_b) in boundary.iter().enumerate() {
            for &(r, node, v) in &self.a_ib {
                rhs[(r, j)] -= v * u_b[node];
            }
        }
        let interior = match &self.lu {
            None => Mat::<f64>::zeros(0, data.len()),
            Some(lu) => self.refine_solution(lu, &rhs)?,
        };
        Ok(boundary
            .into_iter()
            .enumerate()
            .map(|(j, mut values)| {
                for (k, &node) in self.interior_nodes.iter().enumerate() {
                    values[node] = interior[(k, j)];
                }
                Field {
                    space: self.mesh,
                    values,
                }
            })
            .collect())
    }

    fn residual(&self, x: &Mat<f64>, rhs: &Mat<f64>) -> Mat<f64> {
        let mut r = rhs.clone();
        for j in 0..rhs.ncols() {
            for &(row, col, v) in &self.a_ii {
                r[(row, j)] -= v * x[(col, j)];
            }
        }
        r
    }

    /// Normwise backward error `‖f − Ax‖ / (‖A‖‖x‖ + ‖f‖)` per column.
    fn backward_error(&self, x: &Mat<f64>, rhs: &Mat<f64>, r: &Mat<f64>, norm_a: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..rhs.ncols() {
            let col_max = |m: &Mat<f64>| (0..m.nrows()).fold(0.0f64, |s, i| s.max(m[(i, j)].abs()));
            let denom = norm_a * col_max(x) + col_max(rhs);
            let err = if denom == 0.0 { 0.0 } else { col_max(r) / denom };
            worst = worst.max(err);
        }
        worst
    }

    fn refine_solution(
        &self,
        lu: &faer::sparse::linalg::solvers::Lu<usize, f64>,
        rhs: &Mat<f64>,
    ) -> Result<Mat<f64>, FemError> {
        const TARGET: f64 = 1e-12;
        let m = rhs.nrows();
        let mut row_sums = vec![0.0; m];
        for &(r, _, v) in &self.a_ii {
            row_sums[r] += v.abs();
        }
        let norm_a = row_sums.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut x = lu.solve(rhs);
        let mut r = self.residual(&x, rhs);
        let mut err = self.backward_error(&x, rhs, &r, norm_a);
        for _ in 0..3 {
            if err <= TARGET {
                break;
            }
            let dx = lu.solve(&r);
            let candidate = &x + &dx;
            let r_new = self.residual(&candidate, rhs);
            let err_new = self.backward_error(&candidate, rhs, &r_new, norm_a);
            if !(err_new < err) {
                break;
            }
            x = candidate;
            r = r_new;
            err = err_new;
        }
        if !(err <= TARGET) {
            return Err(FemError::SingularSystem(format!(
                "relative residual {err:e} exceeds {TARGET:e}"
            )));
        }
        Ok(x)
    }
}

/// Solves the Dirichlet problem with constant data per boundary component.
pub fn solve_dirichlet<'m>(
    mesh: &'m Mesh,
    coeffs: &CoefficientField,
    lambda: f64,
    boundary_values: &[f64],
) -> Result<DiscreteField<'m>, FemError> {
    DirichletSolver::new(mesh, coeffs, lambda)?.solve(boundary_values)
}

/// Basis solutions `φ_{λ,η}`, one per boundary component.
#[derive(Debug, Clone)]
pub struct BasisSolutionSet<'s, S: FieldSpace> {
    pub lambda: f64,
    pub fields: Vec<Field<'s, S>>,
}

impl<'s, S: FieldSpace> BasisSolutionSet<'s, S> {
    pub fn new(lambda: f64, fields: Vec<Field<'s, S>>) -> Self {
        Self { lambda, fields }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn space(&self) -> &'s S {
        self.fields[0].space()
    }
}

pub fn basis_solutions<'m>(
    mesh: &'m Mesh,
    coeffs: &CoefficientField,
    lambda: f64,
) -> Result<BasisSolutionSet<'m, Mesh>, FemError> {
    let comps = mesh.component_count();
    if comps < 2 {
        return Err(FemError::ComponentCount { needed: 2, got: comps });
    }
    let solver = DirichletSolver::new(mesh, coeffs, lambda)?;
    let data: Vec<Vec<f64>> = (0..comps)
        .map(|eta| (0..comps).map(|k| if k == eta { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok(BasisSolutionSet::new(lambda, solver.solve_many(&data)?))
}

/// Extremes of a basis set, for the discrete maximum principle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPrincipleReport {
    pub min_value: f64,
    pub max_value: f64,
    pub max_sum: f64,
}

impl MaxPrincipleReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_value >= -tol && self.max_value <= 1.0 + tol && self.max_sum <= 1.0 + tol
    }
}

pub fn max_principle_report<S: FieldSpace>(basis: &BasisSolutionSet<'_, S>) -> MaxPrincipleReport {
    let n = basis.fields.first().map_or(0, |f| f.values().len());
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    let mut max_sum = f64::NEG_INFINITY;
    for i in 0..n {
        let mut sum = 0.0;
        for f in &basis.fields {
            let v = f.values()[i];
            min_value = min_value.min(v);
            max_value = max_value.max(v);
            sum += v;
        }
        max_sum = max_sum.max(sum);
    }
    MaxPrincipleReport {
        min_value,
        max_value,
        max_sum,
    }
}

/// Dirichlet energy `∫|∇u|²` of a piecewise-linear field.
pub fn dirichlet_energy(field: &DiscreteField<'_>) -> f64 {
    let mesh = field.space();
    let v = field.values();
    let mut total = 0.0;
    for t in 0..mesh.triangles().len() {
        let tri = mesh.triangles()[t];
        let area = mesh.signed_area(t);
        let g = barycentric_gradients(mesh.triangle_points(t), area);
        let mut grad = [0.0; 2];
        for k in 0..3 {
            grad[0] += v[tri[k]] * g[k][0];
            grad[1] += v[tri[k]] * g[k][1];
        }
        total += area * (grad[0] * grad[0] + grad[1] * grad[1]);
    }
    total
}

/// Discrete capacity: energy of the harmonic function equal to 1 on the inner
/// component (tag 1) and 0 on the outer one (tag 0).
pub fn capacity_fem(mesh: &Mesh) -> Result<f64, FemError> {
    if mesh.component_count() != 2 {
        return Err(FemError::ComponentCount {
            needed: 2,
            got: mesh.component_count(),
        });
    }
    let laplace = CoefficientField::new(VectorField::Zero, Expr::zero());
    let u = DirichletSolver::new_unchecked(mesh, &laplace, 1.0)?.solve(&[0.0, 1.0])?;
    Ok(dirichlet_energy(&u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_annulus_mesh;
    use std::f64::consts::PI;

    /// φ_λ for `a = x/|x|²`, `h = 1` on the annulus (1, λ).
    fn phi_exact(r: f64, lambda: f64) -> f64 {
        ((-r).exp() - (-2.0 * lambda + r).exp()) / ((-1.0f64).exp() - (-2.0 * lambda + 1.0).exp())
    }

    fn linf_error(mesh: &Mesh, values: &[f64], exact: impl Fn(f64) -> f64) -> f64 {
        mesh.nodes()
            .iter()
            .zip(values)
            .map(|(p, v)| (v - exact(p[0].hypot(p[1]))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 4, 16).unwrap();
        let u = solve_dirichlet(&mesh, &CoefficientField::unit_radial_drift(), 1.0, &[0.0, 0.0]).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn basis_boundary_values_are_exact() {
        let mesh = generate_annulus_mesh(1.0, 3.0, 6, 24).unwrap();
        let basis = basis_solutions(&mesh, &CoefficientField::unit_radial_drift(), 3.0).unwrap();
        assert_eq!(basis.len(), 2);
        for (eta, f) in basis.fields.iter().enumerate() {
            for tag in 0..2 {
                let expected = if tag == eta { 1.0 } else { 0.0 };
                assert!(f.trace(tag).iter().all(|&v| v == expected));
            }
        }
        assert!(max_principle_report(&basis).holds(1e-8));
    }

    #[test]
    fn closed_form_phi_converges_at_second_order() {
        let lambda = 4.0;
        let coeffs = CoefficientField::unit_radial_drift();
        let errors: Vec<f64> = [(8, 16), (16, 32), (32, 64)]
            .iter()
            .map(|&(nr, nt)| {
                let mesh = generate_annulus_mesh(1.0, lambda, nr, nt).unwrap();
                let u = solve_dirichlet(&mesh, &coeffs, lambda, &[0.0, 1.0]).unwrap();
                linf_error(&mesh, u.values(), |r| phi_exact(r, lambda))
            })
            .collect();
        for w in errors.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "errors {errors:?}");
        }
    }

    #[test]
    fn linearity_in_boundary_data() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 5, 20).unwrap();
        let solver = DirichletSolver::new(&mesh, &CoefficientField::unit_radial_drift(), 1.0).unwrap();
        let u = solver.solve(&[0.3, -1.7]).unwrap();
        let basis = solver.solve_many(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        for i in 0..mesh.node_count() {
            let combo = 0.3 * basis[0].values()[i] - 1.7 * basis[1].values()[i];
            assert!((u.values()[i] - combo).abs() < 1e-13);
        }
    }

    #[test]
    fn weighted_integrals() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 8, 64).unwrap();
        let one = Field::new(&mesh, vec![1.0; mesh.node_count()]).unwrap();
        let area = integrate_weighted(&Expr::constant(1.0), 1.0, &one).unwrap();
        assert!((area - mesh.area()).abs() < 1e-12);
        let polygon = 32.0 * (2.0 * PI / 64.0).sin() * 3.0;
        assert!((area - polygon).abs() < 1e-12);
        assert!((area - 3.0 * PI).abs() < 0.01 * 3.0 * PI);
        assert_eq!(integrate_weighted(&Expr::zero(), 1.0, &one).unwrap(), 0.0);
        // mid-edge rule is exact for quadratics: ∫ x² over the polygonal mesh
        let x2: Expr = "x^2".parse().unwrap();
        let linear = Field::new(&mesh, mesh.nodes().iter().map(|p| p[0]).collect()).unwrap();
        let exact: f64 = (0..mesh.triangles().len())
            .map(|t| {
                let [a, b, c] = mesh.triangle_points(t);
                let s = a[0] * a[0] + b[0] * b[0] + c[0] * c[0] + a[0] * b[0] + b[0] * c[0] + c[0] * a[0];
                mesh.signed_area(t) * s / 6.0
            })
            .sum();
        let x = Expr::Var(Var::X);
        let via_field = integrate_weighted(&x, 1.0, &linear).unwrap();
        let via_weight = integrate_weighted(&x2, 1.0, &one).unwrap();
        assert!((via_field - exact).abs() < 1e-12 * exact);
        assert!((via_weight - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn helmholtz_matches_bessel_profile() {
        // u'' + u'/r − u = 0 with u(1) = 1, u(2) = 0, i.e.
        // (K0(2) I0(r) − I0(2) K0(r)) / (K0(2) I0(1) − I0(2) K0(1)), evaluated offline
        let reference = [
            (1.25, 0.632_065_688_613_928),
            (1.5, 0.367_642_938_869_693_5),
            (1.75, 0.165_440_255_883_778_5),
        ];
        let mesh = generate_annulus_mesh(1.0, 2.0, 32, 256).unwrap();
        let u = solve_dirichlet(&mesh, &CoefficientField::helmholtz(), 1.0, &[0.0, 1.0]).unwrap();
        for (r, v) in reference {
            let got = u.value_at([r, 0.0]).unwrap();
            assert!((got - v).abs() < 2e-4, "r = {r}: {got} vs {v}");
        }
    }

    #[test]
    fn capacity_of_annuli() {
        let cap = 2.0 * PI / 2.0f64.ln();
        let mut last = f64::INFINITY;
        for k in 0..3 {
            let mesh = generate_annulus_mesh(1.0, 2.0, 4, 32).unwrap().refined(k);
            let c = capacity_fem(&mesh).unwrap();
            assert!(c < last && c > cap);
            last = c;
        }
        assert!((last - cap).abs() < 0.01 * cap);
        let e = capacity_fem(&generate_annulus_mesh(1.0, std::f64::consts::E, 16, 128).unwrap()).unwrap();
        assert!((e - 2.0 * PI).abs() < 0.01 * 2.0 * PI);
    }

    #[test]
    fn rejects_strong_convection_and_bad_reaction() {
        let mesh = generate_annulus_mesh(1.0, 2.0, 2, 8).unwrap();
        let strong = CoefficientField::new(
            VectorField::Cartesian {
                x: Expr::constant(3.0),
                y: Expr::zero(),
            },
            Expr::constant(1.0),
        );
        assert!(matches!(
            solve_dirichlet(&mesh, &strong, 1.0, &[0.0, 1.0]),
            Err(FemError::WeakConvection { .. })
        ));
        let negative = CoefficientField::new(VectorField::Zero, Expr::constant(-1.0));
        assert!(matches!(
            solve_dirichlet(&mesh, &negative, 1.0, &[0.0, 1.0]),
            Err(FemError::NonPositiveReaction { .. })
        ));
        let singular = CoefficientField::new(VectorField::Zero, "ln(r - 1.5)".parse().unwrap());
        assert!(matches!(
            solve_dirichlet(&mesh, &singular, 1.0, &[0.0, 1.0]),
            Err(FemError::CoefficientDomain { .. })
        ));
    }
}
