//! Radially symmetric reference solutions: a finite-difference two-point
//! solver, and closed forms for the two annulus examples.

use std::f64::consts::{E, PI};

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Bindings, EvalError, Expr};
use crate::fem::{BasisSolutionSet, Field, FieldSpace, QuadPoint};

#[derive(Debug, Error)]
pub enum RadialError {
    #[error("invalid radial problem: {0}")]
    InvalidProblem(String),
    #[error("cannot evaluate {what} at r = {r}: {source}")]
    CoefficientDomain {
        what: &'static str,
        r: f64,
        #[source]
        source: EvalError,
    },
    #[error("tridiagonal system is singular: {0}")]
    SingularSystem(String),
    #[error("no sign change of f(λ) - 1 found on (1e-8, 1e3) for g = {0}")]
    BracketingFailure(f64),
    #[error("lambda must exceed 1, got {0}")]
    InvalidLambda(f64),
}

/// Surface measure of the unit sphere in `R^N`.
pub fn unit_sphere_measure(dimension: usize) -> f64 {
    match dimension {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        n => 2.0 * PI * unit_sphere_measure(n - 2) / (n - 2) as f64,
    }
}

/// `−u'' − ((N−1)/r − α(r)) u' + (h(r) + k²/r²) u = 0` on `(R1, R2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProblem {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub dimension: usize,
    pub alpha: Expr,
    pub h: Expr,
    pub mode: u32,
    /// `(u(R1), u(R2))`
    pub boundary: (f64, f64),
    /// Value bound to `lambda` while evaluating `alpha` and `h`.
    pub lambda: f64,
}

impl RadialProblem {
    fn coefficients(&self, r: f64) -> Result<(f64, f64), RadialError> {
        let env = Bindings::radial(r, Some(self.lambda));
        let alpha = self.alpha.eval(&env).map_err(|source| RadialError::CoefficientDomain {
            what: "alpha",
            r,
            source,
        })?;
        let h = self
            .h
            .eval(&env)
            .map_err(|source| RadialError::CoefficientDomain { what: "h", r, source })?;
        Ok((alpha, h))
    }

    fn validate(&self, grid: &[f64]) -> Result<(), RadialError> {
        let bad = |m: String| Err(RadialError::InvalidProblem(m));
        if !(self.inner_radius > 0.0 && self.outer_radius > self.inner_radius) {
            return bad(format!(
                "need 0 < R1 < R2, got ({}, {})",
                self.inner_radius, self.outer_radius
            ));
        }
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        if self.mode > 0 && self.dimension != 2 {
            return bad("angular modes k > 0 are only supported for N = 2".into());
        }
        for &r in grid {
            let (alpha, h) = self.coefficients(r)?;
            if !(h > 0.0) {
                return bad(format!("h({r}) = {h} is not positive"));
            }
            if !(4.0 * h > alpha * alpha) {
                return bad(format!(
                    "weak convection fails at r = {r}: 4h = {}, alpha^2 = {}",
                    4.0 * h,
                    alpha * alpha
                ));
            }
        }
        Ok(())
    }
}

/// Uniform radial grid carrying the measure `|S^{N−1}| r^{N−1} dr`.
///
/// As a [`FieldSpace`], tag 0 is the outer end and tag 1 the inner end; the
/// quadrature is the composite trapezoid rule evaluated on the positive x axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    radii: Vec<f64>,
    dimension: usize,
    outer: [usize; 1],
    inner: [usize; 1],
}

impl RadialGrid {
    pub fn uniform(inner: f64, outer: f64, n_points: usize, dimension: usize) -> Result<Self, RadialError> {
        if n_points < 16 {
            return Err(RadialError::InvalidProblem(format!(
                "need at least 16 grid points, got {n_points}"
            )));
        }
        if !(inner > 0.0 && outer > inner) {
            return Err(RadialError::InvalidProblem(format!(
                "need 0 < R1 < R2, got ({inner}, {outer})"
            )));
        }
        let d = (outer - inner) / (n_points - 1) as f64;
        let mut radii: Vec<f64> = (0..n_points).map(|i| inner + i as f64 * d).collect();
        radii[n_points - 1] = outer;
        Ok(Self {
            radii,
            dimension,
            outer: [n_points - 1],
            inner: [0],
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn spacing(&self) -> f64 {
        self.radii[1] - self.radii[0]
    }
}

impl FieldSpace for RadialGrid {
    fn dof_count(&self) -> usize {
        self.radii.len()
    }

    fn component_count(&self) -> usize {
        2
    }

    fn component_dofs(&self, tag: usize) -> &[usize] {
        match tag {
            0 => &self.outer,
            1 => &self.inner,
            _ => &[],
        }
    }

    fn quadrature(&self) -> Vec<QuadPoint> {
        let n = self.radii.len();
        let d = self.spacing();
        let sphere = unit_sphere_measure(self.dimension);
        self.radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let end = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                QuadPoint {
                    x: [r, 0.0],
                    weight: end * d * sphere * r.powi(self.dimension as i32 - 1),
                    stencil: [(i, 1.0), (i, 0.0)],
                }
            })
            .collect()
    }
}

/// Grid function returned by [`radial_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl RadialSolution {
    pub fn as_field(&self) -> Field<'_, RadialGrid> {
        Field::new(&self.grid, self.values.clone()).expect("grid and values agree")
    }
}

/// Tridiagonal rows `lower u_{i−1} + diag u_i + upper u_{i+1}` of the
/// interior equations.
struct Stencil {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

fn stencil(p: &RadialProblem, grid: &RadialGrid) -> Result<Stencil, RadialError> {
    let r = grid.radii();
    let d = grid.spacing();
    let n = r.len();
    let k2 = f64::from(p.mode).powi(2);
    let mut s = Stencil {
        lower: Vec::with_capacity(n - 2),
        diag: Vec::with_capacity(n - 2),
        upper: Vec::with_capacity(n - 2),
    };
    for &ri in &r[1..n - 1] {
        let (alpha, h) = p.coefficients(ri)?;
        let drift = (p.dimension as f64 - 1.0) / ri - alpha;
        s.lower.push(-1.0 / (d * d) + drift / (2.0 * d));
        s.diag.push(2.0 / (d * d) + h + k2 / (ri * ri));
        s.upper.push(-1.0 / (d * d) - drift / (2.0 * d));
    }
    Ok(s)
}

fn thomas(s: &Stencil, rhs: &[f64]) -> Result<Vec<f64>, RadialError> {
    let m = rhs.len();
    let mut c = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut pivot = s.diag[0];
    for i in 0..m {
        if i > 0 {
            pivot = s.diag[i] - s.lower[i] * c[i - 1];
        }
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(RadialError::SingularSystem(format!("zero pivot in row {i}")));
        }
        c[i] = s.upper[i] / pivot;
        y[i] = (rhs[i] - if i > 0 { s.lower[i] * y[i - 1] } else { 0.0 }) / pivot;
    }
    for i in (0..m.saturating_sub(1)).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    Ok(y)
}

/// Second-order central differences on `n_points` uniform nodes.
pub fn radial_solve(p: &RadialProblem, n_points: usize) -> Result<RadialSolution, RadialError> {
    let grid = RadialGrid::uniform(p.inner_radius, p.outer_radius, n_points, p.dimension)?;
    p.validate(grid.radii())?;
    let values = solve_on(p, &grid, &[p.boundary])?.pop().expect("one solve");
    Ok(RadialSolution { grid, values })
}

fn solve_on(p: &RadialProblem, grid: &RadialGrid, data: &[(f64, f64)]) -> Result<Vec<Vec<f64>>, RadialError> {
    let s = stencil(p, grid)?;
    let n = grid.radii().len();
    let m = n - 2;
    data.iter()
        .map(|&(u_in, u_out)| {
            let mut rhs = vec![0.0; m];
            rhs[0] -= s.lower[0] * u_in;
            rhs[m - 1] -= s.upper[m - 1] * u_out;
            let mut x = thomas(&s, &rhs)?;
            // one step of iterative refinement, then check the backward error
            let residual = |x: &[f64]| -> Vec<f64> {
                (0..m)
                    .map(|i| {
                        let mut ax = s.diag[i] * x[i];
                        if i > 0 {
                            ax += s.lower[i] * x[i - 1];
                        }
                        if i + 1 < m {
                            ax += s.upper[i] * x[i + 1];
                        }
                        rhs[i] - ax
                    })
                    .collect()
            };
            let r = residual(&x);
            let dx = thomas(&s, &r)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            let r = residual(&x);
            let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let norm_a = (0..m)
                .map(|i| s.lower[i].abs() + s.diag[i].abs() + s.upper[i].abs())
                .fold(0.0, f64::max);
            let denom = norm_a * norm(&x) + norm(&rhs);
            let err = if denom == 0.0 { 0.0 } else { norm(&r) / denom };
            if !(err <= 1e-12) {
                return Err(RadialError::SingularSystem(format!("relative residual {err:e}")));
            }
            let mut u = Vec::with_capacity(n);
            u.push(u_in);
            u.extend(x);
            u.push(u_out);
            Ok(u)
        })
        .collect()
}

/// Radial basis solutions `(φ_{λ,0}, φ_{λ,1})` (outer, inner) for mode 0.
pub fn radial_basis<'g>(
    grid: &'g RadialGrid,
    alpha: &Expr,
    h: &Expr,
    lambda: f64,
) -> Result<BasisSolutionSet<'g, RadialGrid>, RadialError> {
    let r = grid.radii();
    let p = RadialProblem {
        inner_radius: r[0],
        outer_radius: r[r.len() - 1],
        dimension: grid.dimension(),
        alpha: alpha.clone(),
        h: h.clone(),
        mode: 0,
        boundary: (0.0, 0.0),
        lambda,
    };
    p.validate(r)?;
    let fields = solve_on(&p, grid, &[(0.0, 1.0), (1.0, 0.0)])?
        .into_iter()
        .map(|v| Field::new(grid, v).expect("grid and values agree"))
        .collect();
    Ok(BasisSolutionSet::new(lambda, fields))
}

/// Composite adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    // split first so that oscillatory integrands are not sampled too coarsely
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == pieces { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            recurse(
                f,
                lo,
                hi,
                fa,
                fm,
                fb,
                simpson(fa, fm, fb, lo, hi),
                tol / pieces as f64,
                40,
            )
        })
        .sum()
}

/// `f(λ)` whose level set `f = 1` gives the critical radius of the
/// `(λ, 2λ)` annulus with constant weight `g`.
pub fn alg_eq_f(lambda: f64, g: f64) -> f64 {
    ((1.0 + lambda) / 2.0 - 1.0 / (4.0 * g * PI)) * (2.0 * lambda).exp_m1() / lambda - 2.0 * lambda.exp_m1()
}

/// Smallest positive root of `f(λ) = 1`, by scanning for a sign change and
/// bisecting.
pub fn alg_eq_root(g: f64) -> Result<f64, RadialError> {
    if !(g > 0.0) {
        return Err(RadialError::BracketingFailure(g));
    }
    let f = |l: f64| alg_eq_f(l, g) - 1.0;
    let mut lo = 1e-8;
    let mut f_lo = f(lo);
    let mut bracket = None;
    while lo < 1e3 {
        let hi = (lo * 1.01).max(lo + 1e-3).min(1e3);
        let f_hi = f(hi);
        if !f_hi.is_finite() {
            break;
        }
        if f_lo.signum() != f_hi.signum() || f_hi == 0.0 {
            bracket = Some((lo, hi, f_lo));
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let (mut a, mut b, mut fa) = bracket.ok_or(RadialError::BracketingFailure(g))?;
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(if f(a).abs() <= f(b).abs() { a } else { b })
}

/// Basis profile on the `(λ, 2λ)` annulus for `u'' = u`: 1 at `λ`, 0 at `2λ`.
pub fn example1_phi(r: f64, lambda: f64) -> f64 {
    (2.0 * lambda - r).sinh() / lambda.sinh()
}

/// `∫_λ^{2λ} φ(r) r dr`.
pub fn example1_moment(lambda: f64) -> f64 {
    let e = lambda.exp();
    ((lambda + 1.0) * e * e + lambda - 1.0 - 4.0 * lambda * e) / (e * e - 1.0)
}

/// `1 − 2πg ∫_λ^{2λ} φ r dr`.
pub fn example1_det(lambda: f64, g: f64) -> f64 {
    1.0 - 2.0 * PI * g * example1_moment(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Unique,
    InfinitelyMany,
    NoSolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Example1Result {
    pub regime: Regime,
    pub lambda_star: f64,
    /// Inner boundary value of the unique solution; `None` otherwise.
    pub inner_value: Option<f64>,
}

impl Example1Result {
    /// Member `c (e^r − e^{4λ*−r})` of the solution family at `λ = λ*`.
    pub fn family_profile(&self, c: f64, r: f64) -> f64 {
        c * (r.exp() - (4.0 * self.lambda_star - r).exp())
    }
}

pub const EXAMPLE1_ROOT_TOL: f64 = 1e-9;

pub fn example1_classify(b_i: f64, lambda: f64, g: f64) -> Result<Example1Result, RadialError> {
    if !(lambda > 0.0) {
        return Err(RadialError::InvalidProblem(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let lambda_star = alg_eq_root(g)?;
    let (regime, inner_value) = if (lambda - lambda_star).abs() <= EXAMPLE1_ROOT_TOL {
        if b_i == 0.0 {
            (Regime::InfinitelyMany, None)
        } else {
            (Regime::NoSolution, None)
        }
    } else {
        (Regime::Unique, Some(b_i / example1_det(lambda, g)))
    };
    Ok(Example1Result {
        regime,
        lambda_star,
        inner_value,
    })
}

/// `C₀` at which `∫ g_i φ_λ → 1`: `5e / (2π(2 sin 1 + cos 1))`.
pub fn critical_c0() -> f64 {
    5.0 * E / (2.0 * PI * (2.0 * 1f64.sin() + 1f64.cos()))
}

/// `θ₀ = arcsin(2/√5)`.
pub fn theta0() -> f64 {
    (2.0 / 5f64.sqrt()).asin()
}

/// `φ_λ` on the annulus `(1, λ)` for `a = x/|x|²`, `h = 1`.
pub fn example2_phi(r: f64, lambda: f64) -> f64 {
    ((-r).exp() - (-2.0 * lambda + r).exp()) / ((-1f64).exp() - (-2.0 * lambda + 1.0).exp())
}

/// `ψ_λ` on the annulus `(1, λ)` for `a = x/|x|²`, `h = 1`.
pub fn example2_psi(r: f64, lambda: f64) -> f64 {
    (r.exp() - (2.0 - r).exp()) / (lambda.exp() - (2.0 - lambda).exp())
}

/// `C₀ e^{−r} sin(r) / r`.
pub fn example2_weight(r: f64, c0: f64) -> f64 {
    c0 * (-r).exp() * r.sin() / r
}

/// Closed form of `∫_{1<|y|<λ} g_i φ_λ dy`.
pub fn example2_integral(lambda: f64, c0: f64) -> Result<f64, RadialError> {
    if !(lambda > 1.0) {
        return Err(RadialError::InvalidLambda(lambda));
    }
    let (s1, c1) = (1f64.sin(), 1f64.cos());
    let (sl, cl) = (lambda.sin(), lambda.cos());
    let bracket = (-2f64).exp() / 5.0 * (2.0 * s1 + c1) - (-2.0 * lambda).exp() * (c1 - cl + (2.0 * sl + cl) / 5.0);
    Ok(2.0 * PI * c0 / ((-1f64).exp() - (-2.0 * lambda + 1.0).exp()) * bracket)
}

/// `det(I − R_λ) = 1 − ∫ g_i φ_λ` for the `(1, λ)` annulus.
pub fn example2_det(lambda: f64, c0: f64) -> Result<f64, RadialError> {
    Ok(1.0 - example2_integral(lambda, c0)?)
}

/// Product form of the determinant at the critical `C₀`.
pub fn example2_det_factorized(lambda: f64) -> Result<f64, RadialError> {
    if !(lambda > 1.0) {
        return Err(RadialError::InvalidLambda(lambda));
    }
    let q = (-2.0 * lambda + 2.0).exp();
    let pref = -4.0 * 5f64.sqrt() * q / (-(-2.0 * lambda + 2.0).exp_m1() * (2.0 * 1f64.sin() + 1f64.cos()));
    Ok(pref * ((1.0 + lambda - 2.0 * theta0()) / 2.0).cos() * ((1.0 - lambda) / 2.0).sin())
}

/// Zeros of the critical determinant for `k = 1..=k_max`, sorted.
pub fn s0_set(k_max: u32) -> Vec<f64> {
    let t = theta0();
    let mut out: Vec<f64> = (1..=k_max)
        .flat_map(|k| {
            let k = f64::from(k);
            [2.0 * k * PI + 1.0, (2.0 * k - 1.0) * PI + 2.0 * t - 1.0]
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}
