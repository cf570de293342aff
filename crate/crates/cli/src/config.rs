//! TOML problem configuration.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use nonlocal_bvp::expr::{parse_with_constants, Expr};
use nonlocal_bvp::fem::{drift_preset, CoefficientField, VectorField};
use nonlocal_bvp::geometry::{Circle, DomainSpec, GeometryError, Mesh};
use nonlocal_bvp::pipeline::{ClosedForm, DomainFamily, Engine, Problem, Resolution};
use nonlocal_bvp::radial::critical_c0;
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    constants: BTreeMap<String, Spanned<NumOrText>>,
    domain: Spanned<RawDomain>,
    #[serde(default)]
    coefficients: Option<Spanned<RawCoefficients>>,
    boundary: Spanned<RawBoundary>,
    #[serde(default)]
    discretization: Option<Spanned<RawDiscretization>>,
    #[serde(default)]
    sweep: Option<Spanned<RawSweep>>,
    #[serde(default)]
    classify: Option<Spanned<RawClassify>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: Spanned<String>,
    inner_radius: Option<Spanned<NumOrText>>,
    outer_radius: Option<Spanned<NumOrText>>,
    dimension: Option<Spanned<usize>>,
    lambda: Option<Spanned<f64>>,
    outer: Option<Circle>,
    holes: Option<Vec<Circle>>,
    mesh: Option<Spanned<String>>,
    dilate: Option<bool>,
    closed_form: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    a: Option<Spanned<String>>,
    a_r: Option<Spanned<NumOrText>>,
    a_x: Option<Spanned<NumOrText>>,
    a_y: Option<Spanned<NumOrText>>,
    h: Option<Spanned<NumOrText>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    components: Option<Spanned<usize>>,
    b: Spanned<Vec<f64>>,
    g: Spanned<Vec<Spanned<NumOrText>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscretization {
    nr: Option<usize>,
    ntheta: Option<usize>,
    refinements: Option<usize>,
    n_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    lambda_min: Option<f64>,
    lambda_max: Option<f64>,
    steps: Option<usize>,
    tol: Option<f64>,
    engine: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassify {
    eps_det: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub steps: usize,
    pub tol: f64,
    pub engine: Engine,
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub path: PathBuf,
    pub problem: Problem,
    pub lambda: Option<f64>,
    pub sweep: SweepSettings,
}

pub fn parse_engine(name: &str) -> Option<Engine> {
    match name {
        "fem" => Some(Engine::Fem),
        "oracle" => Some(Engine::Oracle),
        _ => None,
    }
}

struct Source<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err_at(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            location: format!("{}:{}", self.path.display(), self.line(span.start)),
            message: message.into(),
        }
    }

    fn expr(
        &self,
        value: &Spanned<NumOrText>,
        constants: &BTreeMap<String, f64>,
        what: &str,
    ) -> Result<Expr, ConfigError> {
        match value.get_ref() {
            NumOrText::Number(v) => Ok(Expr::constant(*v)),
            NumOrText::Text(text) => parse_with_constants(text, constants)
                .map_err(|e| self.err_at(value.span(), format!("{what}: cannot parse `{text}`: {e}"))),
        }
    }
}

pub fn load(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        location: path.display().to_string(),
        message: format!("cannot read config: {e}"),
    })?;
    parse(path, &text)
}

pub fn parse(path: &Path, text: &str) -> Result<ProblemConfig, ConfigError> {
    let src = Source { path, text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => src.err_at(span, e.message().to_string()),
        None => ConfigError {
            location: path.display().to_string(),
            message: e.message().to_string(),
        },
    })?;

    let mut constants = BTreeMap::new();
    for (name, value) in &raw.constants {
        let v = match value.get_ref() {
            NumOrText::Number(v) => *v,
            NumOrText::Text(t) if t == "critical" => critical_c0(),
            NumOrText::Text(t) => {
                return Err(src.err_at(
                    value.span(),
                    format!("constant `{name}` must be a number or \"critical\", got `{t}`"),
                ))
            }
        };
        constants.insert(name.clone(), v);
    }

    let domain = raw.domain.get_ref();
    let dspan = raw.domain.span();
    let dimension = domain.dimension.as_ref().map(|d| (*d.get_ref(), d.span()));
    let lambda = domain.lambda.as_ref().map(|l| *l.get_ref());
    if let Some(l) = &domain.lambda {
        if !(*l.get_ref() > 0.0) {
            return Err(src.err_at(l.span(), "lambda must be positive"));
        }
    }
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let load_mesh = |m: &Spanned<String>| -> Result<Mesh, ConfigError> {
        let mesh_path = base_dir.join(m.get_ref());
        let file = fs::File::open(&mesh_path)
            .map_err(|e| src.err_at(m.span(), format!("cannot open mesh `{}`: {e}", mesh_path.display())))?;
        Mesh::read(file).map_err(|e| match e {
            GeometryError::Parse { line, message } => ConfigError {
                location: format!("{}:{line}", mesh_path.display()),
                message,
            },
            other => src.err_at(m.span(), format!("mesh `{}`: {other}", mesh_path.display())),
        })
    };
    let family = match domain.kind.get_ref().as_str() {
        "annulus" => {
            let radius = |r: &Option<Spanned<NumOrText>>, what: &str| -> Result<Expr, ConfigError> {
                let r = r
                    .as_ref()
                    .ok_or_else(|| src.err_at(dspan.clone(), format!("annulus needs `{what}`")))?;
                src.expr(r, &constants, what)
            };
            let dimension = match dimension {
                Some((d, span)) if d < 2 => return Err(src.err_at(span, "dimension must be at least 2")),
                Some((d, _)) => d,
                None => 2,
            };
            DomainFamily::Annulus {
                inner: radius(&domain.inner_radius, "inner_radius")?,
                outer: radius(&domain.outer_radius, "outer_radius")?,
                dimension,
            }
        }
        "multi-hole" => {
            let (Some(outer), Some(holes)) = (domain.outer, domain.holes.clone()) else {
                return Err(src.err_at(dspan, "multi-hole domain needs `outer` and `holes`"));
            };
            let spec = DomainSpec::MultiHole { outer, holes };
            spec.validate().map_err(|e| src.err_at(dspan.clone(), e.to_string()))?;
            let m = domain
                .mesh
                .as_ref()
                .ok_or_else(|| src.err_at(dspan.clone(), "multi-hole domain needs a `mesh` file"))?;
            let mesh = load_mesh(m)?;
            if Some(mesh.component_count()) != spec.component_count() {
                return Err(src.err_at(
                    m.span(),
                    format!(
                        "mesh has {} boundary components, domain describes {}",
                        mesh.component_count(),
                        spec.component_count().unwrap_or(0)
                    ),
                ));
            }
            DomainFamily::Mesh {
                mesh,
                spec: Some(spec),
                dilate: domain.dilate.unwrap_or(true),
            }
        }
        "mesh" => {
            let m = domain
                .mesh
                .as_ref()
                .ok_or_else(|| src.err_at(dspan.clone(), "mesh domain needs a `mesh` file"))?;
            DomainFamily::Mesh {
                mesh: load_mesh(m)?,
                spec: None,
                dilate: domain.dilate.unwrap_or(true),
            }
        }
        other => {
            return Err(src.err_at(
                domain.kind.span(),
                format!("unknown domain kind `{other}` (expected annulus, multi-hole or mesh)"),
            ))
        }
    };

    let coefficients = match &raw.coefficients {
        None => CoefficientField::helmholtz(),
        Some(c) => {
            let cs = c.get_ref();
            let a = match (&cs.a, &cs.a_r, &cs.a_x, &cs.a_y) {
                (None, None, None, None) => VectorField::Zero,
                (Some(preset), None, None, None) => {
                    drift_preset(preset.get_ref()).map_err(|e| src.err_at(preset.span(), e.to_string()))?
                }
                (None, Some(ar), None, None) => VectorField::Radial {
                    alpha: src.expr(ar, &constants, "a_r")?,
                },
                (None, None, Some(ax), Some(ay)) => VectorField::Cartesian {
                    x: src.expr(ax, &constants, "a_x")?,
                    y: src.expr(ay, &constants, "a_y")?,
                },
                _ => {
                    return Err(src.err_at(
                        c.span(),
                        "give exactly one of `a` (preset), `a_r`, or both `a_x` and `a_y`",
                    ))
                }
            };
            let h = match &cs.h {
                Some(h) => src.expr(h, &constants, "h")?,
                None => Expr::constant(1.0),
            };
            CoefficientField::new(a, h)
        }
    };

    let boundary = raw.boundary.get_ref();
    let weights = boundary
        .g
        .get_ref()
        .iter()
        .enumerate()
        .map(|(k, g)| src.expr(g, &constants, &format!("g[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let b = boundary.b.get_ref().clone();
    let components = match &family {
        DomainFamily::Annulus { .. } => 2,
        DomainFamily::Mesh { mesh, .. } => mesh.component_count(),
    };
    if let Some(c) = &boundary.components {
        if *c.get_ref() != components {
            return Err(src.err_at(
                c.span(),
                format!(
                    "components = {} but the domain has {components} boundary components",
                    c.get_ref()
                ),
            ));
        }
    }
    if b.len() != components {
        return Err(src.err_at(
            boundary.b.span(),
            format!("expected {components} values in `b`, got {}", b.len()),
        ));
    }
    if weights.len() != components {
        return Err(src.err_at(
            boundary.g.span(),
            format!("expected {components} expressions in `g`, got {}", weights.len()),
        ));
    }

    let closed_form = match &domain.closed_form {
        None => None,
        Some(cf) => Some(match cf.get_ref().as_str() {
            "example1" => {
                let g = weights
                    .get(1)
                    .and_then(|w| w.eval(&nonlocal_bvp::expr::Bindings::radial(1.0, Some(1.0))).ok());
                ClosedForm::Example1 {
                    g: g.ok_or_else(|| src.err_at(cf.span(), "example1 needs a constant inner weight"))?,
                }
            }
            "example2" => ClosedForm::Example2 {
                c0: *constants
                    .get("C0")
                    .ok_or_else(|| src.err_at(cf.span(), "example2 needs the constant `C0`"))?,
            },
            other => {
                return Err(src.err_at(
                    cf.span(),
                    format!("unknown closed form `{other}` (expected example1 or example2)"),
                ))
            }
        }),
    };

    let defaults = Resolution::default();
    let (resolution, n_points) = match &raw.discretization {
        None => (defaults, 2001),
        Some(d) => {
            let ds = d.get_ref();
            (
                Resolution {
                    nr: ds.nr.unwrap_or(defaults.nr),
                    ntheta: ds.ntheta.unwrap_or(defaults.ntheta),
                    refinements: ds.refinements.unwrap_or(defaults.refinements),
                },
                ds.n_points.unwrap_or(2001),
            )
        }
    };
    let (eps_det, kappa) = match &raw.classify {
        None => (None, 0.01),
        Some(c) => (c.get_ref().eps_det, c.get_ref().kappa.unwrap_or(0.01)),
    };
    if let Some(d) = &raw.discretization {
        if n_points < 16 {
            return Err(src.err_at(d.span(), "n_points must be at least 16"));
        }
        if resolution.nr < 1 || resolution.ntheta < 3 || resolution.refinements > 12 {
            return Err(src.err_at(d.span(), "need nr >= 1, ntheta >= 3 and refinements <= 12"));
        }
    }
    if let Some(c) = &raw.classify {
        if !(kappa > 0.0 && kappa < 2.0) {
            return Err(src.err_at(c.span(), format!("kappa must lie in (0, 2), got {kappa}")));
        }
        if eps_det.is_some_and(|e| !(e > 0.0)) {
            return Err(src.err_at(c.span(), "eps_det must be positive"));
        }
    }

    let problem = Problem {
        domain: family,
        coefficients,
        weights,
        b,
        resolution,
        n_points,
        closed_form,
        eps_det,
        kappa,
    };
    let problem_err = |e: nonlocal_bvp::pipeline::PipelineError| {
        let span = domain.closed_form.as_ref().map_or(dspan.clone(), |c| c.span());
        src.err_at(span, e.to_string())
    };
    problem.validate().map_err(problem_err)?;
    if let Some(l) = lambda {
        problem.domain_spec(l).map_err(problem_err)?;
    }

    let sweep = match &raw.sweep {
        None => SweepSettings {
            lambda_min: None,
            lambda_max: None,
            steps: 100,
            tol: 1e-6,
            engine: Engine::Oracle,
        },
        Some(s) => {
            let ss = s.get_ref();
            let engine = match &ss.engine {
                None => Engine::Oracle,
                Some(e) => parse_engine(e.get_ref()).ok_or_else(|| {
                    src.err_at(
                        e.span(),
                        format!("unknown engine `{}` (expected fem or oracle)", e.get_ref()),
                    )
                })?,
            };
            let settings = SweepSettings {
                lambda_min: ss.lambda_min,
                lambda_max: ss.lambda_max,
                steps: ss.steps.unwrap_or(100),
                tol: ss.tol.unwrap_or(1e-6),
                engine,
            };
            if let (Some(lo), Some(hi)) = (settings.lambda_min, settings.lambda_max) {
                if !(lo > 0.0 && hi > lo) {
                    return Err(src.err_at(s.span(), "need 0 < lambda_min < lambda_max"));
                }
            }
            if settings.steps < 2 {
                return Err(src.err_at(s.span(), "steps must be at least 2"));
            }
            if !(settings.tol > 0.0) {
                return Err(src.err_at(s.span(), "tol must be positive"));
            }
            settings
        }
    };

    Ok(ProblemConfig {
        path: path.to_path_buf(),
        problem,
        lambda,
        sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX2: &str = r#"
[constants]
C0 = "critical"

[domain]
kind = "annulus"
inner_radius = 1
outer_radius = "lambda"
lambda = 6.0
closed_form = "example2"

[coefficients]
a = "unit-radial-drift"
h = "1"

[boundary]
components = 2
b = [0.0, 1.0]
g = ["0", "C0 * exp(-r) * sin(r) / r"]
"#;

    #[test]
    fn parses_example_config() {
        let cfg = parse(Path::new("ex2.toml"), EX2).unwrap();
        assert_eq!(cfg.lambda, Some(6.0));
        assert_eq!(
            cfg.problem.closed_form,
            Some(ClosedForm::Example2 { c0: critical_c0() })
        );
        assert_eq!(cfg.sweep.engine, Engine::Oracle);
    }

    #[test]
    fn reports_line_of_bad_expression() {
        let text = EX2.replace("\"C0 * exp(-r) * sin(r) / r\"", "\"C0 * exp(-r\"");
        let err = parse(Path::new("ex2.toml"), &text).unwrap_err();
        assert_eq!(err.location, "ex2.toml:19");
    }

    #[test]
    fn rejects_inconsistent_counts() {
        let text = EX2.replace("b = [0.0, 1.0]", "b = [0.0, 1.0, 2.0]");
        let err = parse(Path::new("ex2.toml"), &text).unwrap_err();
        assert_eq!(err.location, "ex2.toml:18");
        assert!(err.message.contains("`b`"));
    }

    #[test]
    fn rejects_unknown_keys_and_kinds() {
        let err = parse(
            Path::new("c.toml"),
            &EX2.replace("kind = \"annulus\"", "kind = \"torus\""),
        )
        .unwrap_err();
        assert_eq!(err.location, "c.toml:6");
        let err = parse(Path::new("c.toml"), &EX2.replace("h = \"1\"", "hh = \"1\"")).unwrap_err();
        assert!(err.location.starts_with("c.toml:"), "{err}");
    }

    #[test]
    fn rejects_mismatched_closed_form() {
        let text = EX2.replace("exp(-r) * sin(r) / r", "exp(-r)");
        let err = parse(Path::new("ex2.toml"), &text).unwrap_err();
        assert_eq!(err.location, "ex2.toml:10");
    }
}
