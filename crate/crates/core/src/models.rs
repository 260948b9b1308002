//! Finsler functions on a single chart `R^n` and the fundamental tensor.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ParseError};
use crate::jets::Jet;
use crate::linalg::{invert, is_positive_definite, min_eigenvalue};
use crate::scalar::{lift, Scalar};

/// Number of indicatrix samples used when validating a model at a point.
pub const DEFAULT_VALIDATION_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("expression error: {0}")]
    Parse(#[from] ParseError),
    #[error("metric not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("degenerate metric at (x={x:?}, y={y:?}): smallest eigenvalue {min_eigenvalue:e}")]
    DegenerateMetric { x: Vec<f64>, y: Vec<f64>, min_eigenvalue: f64 },
    #[error("Finsler function not positive at (x={x:?}, y={y:?}): F = {value:e}")]
    NonPositive { x: Vec<f64>, y: Vec<f64>, value: f64 },
    #[error("point {0:?} lies outside the chart's validity region")]
    OutsideChart(Vec<f64>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

impl ModelError {
    /// Precondition violations of the geometry (as opposed to malformed input).
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            ModelError::NotPositiveDefinite(_)
                | ModelError::DegenerateMetric { .. }
                | ModelError::NonPositive { .. }
                | ModelError::OutsideChart(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Euclidean,
    RiemannianDiag,
    Sphere,
    Randers,
    CustomPolynomial,
}

/// Family parameters as they appear in a model file. Unused fields are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Diagonal metric coefficients `a_ii(x)` (riemannian_diag).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<String>>,
    /// Sphere radius (sphere, default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Riemannian part `a_ij(x)` of a Randers metric (default identity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
    /// Conformal factor `λ(x)` multiplying the identity in the Riemannian part
    /// of a Randers metric, `a_ij = λ(x)² δ_ij`; alternative to `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conformal: Option<String>,
    /// One-form coefficients `b_i(x)` (randers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<String>>,
    /// Finsler function `F(x, y)` (custom_polynomial).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub params: ModelParams,
}

impl ModelSpec {
    pub fn euclidean(dim: usize) -> Self {
        ModelSpec { family: Family::Euclidean, dim, name: None, params: ModelParams::default() }
    }

    pub fn sphere(dim: usize, radius: f64) -> Self {
        ModelSpec {
            family: Family::Sphere,
            dim,
            name: None,
            params: ModelParams { radius: Some(radius), ..Default::default() },
        }
    }

    pub fn riemannian_diag(diag: &[&str]) -> Self {
        ModelSpec {
            family: Family::RiemannianDiag,
            dim: diag.len(),
            name: None,
            params: ModelParams { diag: Some(diag.iter().map(|s| s.to_string()).collect()), ..Default::default() },
        }
    }

    /// Randers metric over the Euclidean inner product with one-form `b`.
    pub fn randers(b: &[&str]) -> Self {
        ModelSpec {
            family: Family::Randers,
            dim: b.len(),
            name: None,
            params: ModelParams { b: Some(b.iter().map(|s| s.to_string()).collect()), ..Default::default() },
        }
    }

    pub fn custom(dim: usize, expr: &str) -> Self {
        ModelSpec {
            family: Family::CustomPolynomial,
            dim,
            name: None,
            params: ModelParams { expr: Some(expr.to_string()), ..Default::default() },
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn with_conformal(mut self, lambda: &str) -> Self {
        self.params.conformal = Some(lambda.to_string());
        self
    }
}

/// A Finsler function on the chart `R^n`.
#[derive(Debug, Clone)]
pub struct FinslerModel {
    dim: usize,
    name: String,
    spec: ModelSpec,
    f: Expr,
    f2: Expr,
    /// Metric coefficients `a_ij(x)` when the model is Riemannian.
    riemannian: Option<Vec<Vec<Expr>>>,
    /// Randers data `(a_ij, b_i)`.
    randers: Option<(Vec<Vec<Expr>>, Vec<Expr>)>,
    /// Points with `|x|` above this are outside the chart's trusted region.
    chart_radius: Option<f64>,
}

/// Fundamental tensor and its inverse at a point of the slit tangent bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub g_inv: Vec<Vec<f64>>,
}

impl MetricEval {
    /// `g_{x,y}(u, v)`
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..v.len() {
                s += self.g[i][j] * u[i] * v[j];
            }
        }
        s
    }
}

fn parse_all(src: &[String], dim: usize) -> Result<Vec<Expr>, ModelError> {
    src.iter().map(|s| Expr::parse_dim(s, dim).map_err(ModelError::from)).collect()
}

fn only_x(e: &Expr, what: &str) -> Result<(), ModelError> {
    if e.vars().iter().any(|v| !matches!(v, crate::expr::Var::X(_))) {
        return Err(ModelError::InvalidParams(format!("{what} may depend on x only: {e}")));
    }
    Ok(())
}

fn quadratic_form(a: &[Vec<Expr>], dim: usize) -> Expr {
    let mut terms = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            if let Some(0.0) = a[i][j].const_value() {
                continue;
            }
            terms.push(a[i][j].clone() * Expr::y(i) * Expr::y(j));
        }
    }
    Expr::sum(terms)
}

/// Build a model from its description.
pub fn builtin_model(spec: &ModelSpec) -> Result<FinslerModel, ModelError> {
    let n = spec.dim;
    if n < 2 {
        return Err(ModelError::InvalidParams(format!("dimension must be at least 2, got {n}")));
    }
    let name = spec.name.clone().unwrap_or_else(|| format!("{:?}", spec.family).to_lowercase());
    let identity = |scale: Expr| -> Vec<Vec<Expr>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { scale.clone() } else { Expr::c(0.0) }).collect()).collect()
    };
    let mut model = match spec.family {
        Family::Euclidean => {
            let f2 = Expr::sum((0..n).map(|i| Expr::y(i).powi(2)));
            FinslerModel::riemannian_from(n, f2, identity(Expr::c(1.0)))
        }
        Family::RiemannianDiag => {
            let diag = spec
                .params
                .diag
                .as_ref()
                .ok_or_else(|| ModelError::InvalidParams("riemannian_diag requires params.diag".into()))?;
            if diag.len() != n {
                return Err(ModelError::Dimension { expected: n, got: diag.len() });
            }
            let d = parse_all(diag, n)?;
            for e in &d {
                only_x(e, "diagonal coefficient")?;
            }
            let a: Vec<Vec<Expr>> =
                (0..n).map(|i| (0..n).map(|j| if i == j { d[i].clone() } else { Expr::c(0.0) }).collect()).collect();
            let f2 = quadratic_form(&a, n);
            FinslerModel::riemannian_from(n, f2, a)
        }
        Family::Sphere => {
            let r = spec.params.radius.unwrap_or(1.0);
            if r <= 0.0 || !r.is_finite() {
                return Err(ModelError::InvalidParams(format!("sphere radius must be positive, got {r}")));
            }
            // 2r / (1 + |x|^2), squared
            let denom = Expr::c(1.0) + Expr::sum((0..n).map(|i| Expr::x(i).powi(2)));
            let conf = Expr::c(4.0 * r * r) / denom.powi(2);
            let f2 = conf.clone() * Expr::sum((0..n).map(|i| Expr::y(i).powi(2)));
            let mut m = FinslerModel::riemannian_from(n, f2, identity(conf));
            m.chart_radius = Some(3.0);
            m
        }
        Family::Randers => {
            let b =
                spec.params.b.as_ref().ok_or_else(|| ModelError::InvalidParams("randers requires params.b".into()))?;
            if b.len() != n {
                return Err(ModelError::Dimension { expected: n, got: b.len() });
            }
            let b = parse_all(b, n)?;
            let a = match (&spec.params.a, &spec.params.conformal) {
                (Some(_), Some(_)) => {
                    return Err(ModelError::InvalidParams("give either params.a or params.conformal".into()))
                }
                (Some(a), None) => {
                    if a.len() != n || a.iter().any(|r| r.len() != n) {
                        return Err(ModelError::InvalidParams(format!("params.a must be {n}x{n}")));
                    }
                    let rows: Vec<Vec<Expr>> = a.iter().map(|r| parse_all(r, n)).collect::<Result<_, _>>()?;
                    for i in 0..n {
                        for j in 0..n {
                            if rows[i][j] != rows[j][i] {
                                return Err(ModelError::InvalidParams("params.a must be symmetric".into()));
                            }
                        }
                    }
                    rows
                }
                (None, Some(lam)) => {
                    let lam = Expr::parse_dim(lam, n)?;
                    identity(lam.powi(2))
                }
                (None, None) => identity(Expr::c(1.0)),
            };
            for e in b.iter().chain(a.iter().flatten()) {
                only_x(e, "Randers coefficient")?;
            }
            let alpha = quadratic_form(&a, n).sqrt();
            let beta = Expr::sum((0..n).map(|i| b[i].clone() * Expr::y(i)));
            let f = alpha + beta;
            let f2 = f.clone() * f.clone();
            let m = FinslerModel {
                dim: n,
                name: String::new(),
                spec: spec.clone(),
                f,
                f2,
                riemannian: None,
                randers: Some((a, b)),
                chart_radius: None,
            };
            let origin = vec![0.0; n];
            let norm = m.randers_b_norm(&origin).ok_or_else(|| {
                ModelError::NotPositiveDefinite("Randers Riemannian part is singular at the origin".into())
            })?;
            if norm >= 1.0 {
                return Err(ModelError::NotPositiveDefinite(format!(
                    "Randers one-form has |b|_a = {norm} >= 1 at the origin"
                )));
            }
            m
        }
        Family::CustomPolynomial => {
            let src = spec
                .params
                .expr
                .as_ref()
                .ok_or_else(|| ModelError::InvalidParams("custom_polynomial requires params.expr".into()))?;
            let f = Expr::parse_dim(src, n)?;
            if f.vars().contains(&crate::expr::Var::T) {
                return Err(ModelError::InvalidParams("model expression may not use t".into()));
            }
            let f2 = f.clone() * f.clone();
            FinslerModel {
                dim: n,
                name: String::new(),
                spec: spec.clone(),
                f,
                f2,
                riemannian: None,
                randers: None,
                chart_radius: None,
            }
        }
    };
    model.name = name;
    model.spec = spec.clone();
    Ok(model)
}

impl FinslerModel {
    fn riemannian_from(dim: usize, f2: Expr, a: Vec<Vec<Expr>>) -> Self {
        FinslerModel {
            dim,
            name: String::new(),
            spec: ModelSpec::euclidean(dim),
            f: f2.clone().sqrt(),
            f2,
            riemannian: Some(a),
            randers: None,
            chart_radius: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn f_expr(&self) -> &Expr {
        &self.f
    }

    pub fn f2_expr(&self) -> &Expr {
        &self.f2
    }

    pub fn is_riemannian(&self) -> bool {
        self.riemannian.is_some()
    }

    /// Riemannian metric coefficients `a_ij(x)`, if the model is Riemannian.
    pub fn riemannian_metric(&self) -> Option<&[Vec<Expr>]> {
        self.riemannian.as_deref()
    }

    pub fn chart_radius(&self) -> Option<f64> {
        self.chart_radius
    }

    /// Fails when `x` lies outside the trusted chart region.
    pub fn check_in_chart(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.dim {
            return Err(ModelError::Dimension { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::OutsideChart(x.to_vec()));
        }
        if let Some(r) = self.chart_radius {
            if x.iter().map(|v| v * v).sum::<f64>().sqrt() > r {
                return Err(ModelError::OutsideChart(x.to_vec()));
            }
        }
        Ok(())
    }

    /// `F(x, y)` over any scalar type.
    pub fn f<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        self.f.eval(x, y, None)
    }

    /// `F²(x, y)` over any scalar type.
    pub fn f2<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        self.f2.eval(x, y, None)
    }

    pub fn f64_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.f(x, y)
    }

    /// `|b|_a` for Randers models at `x`.
    pub fn randers_b_norm(&self, x: &[f64]) -> Option<f64> {
        let (a, b) = self.randers.as_ref()?;
        let am: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|e| e.eval::<f64>(x, &[], None)).collect()).collect();
        let bv: Vec<f64> = b.iter().map(|e| e.eval::<f64>(x, &[], None)).collect();
        let ainv = invert(&am, 1e-14)?;
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += ainv[i][j] * bv[i] * bv[j];
            }
        }
        Some(s.max(0.0).sqrt())
    }

    /// Fundamental tensor `g_ij = ½ ∂²F²/∂y^i∂y^j` and its inverse.
    pub fn fundamental_tensor(&self, x: &[f64], y: &[f64]) -> Result<MetricEval, ModelError> {
        let n = self.dim;
        if y.len() != n {
            return Err(ModelError::Dimension { expected: n, got: y.len() });
        }
        self.check_in_chart(x)?;
        let fval = self.f64_value(x, y);
        if !(fval > 0.0) || !fval.is_finite() {
            return Err(ModelError::NonPositive { x: x.to_vec(), y: y.to_vec(), value: fval });
        }
        let xs: Vec<Jet<f64>> = lift(x);
        let ys: Vec<Jet<f64>> = (0..n).map(|i| Jet::variable(i, y[i], n, 2).expect("valid seed")).collect();
        let f2 = self.f2(&xs, &ys);
        let g: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * f2.partial(&[i, j])).collect()).collect();
        if g.iter().flatten().any(|v| !v.is_finite()) || !is_positive_definite(&g) {
            return Err(ModelError::DegenerateMetric {
                x: x.to_vec(),
                y: y.to_vec(),
                min_eigenvalue: min_eigenvalue(&g),
            });
        }
        let g_inv = invert(&g, 0.0).ok_or_else(|| ModelError::DegenerateMetric {
            x: x.to_vec(),
            y: y.to_vec(),
            min_eigenvalue: min_eigenvalue(&g),
        })?;
        Ok(MetricEval { x: x.to_vec(), y: y.to_vec(), g, g_inv })
    }

    /// Positive definiteness and positivity at `samples` directions at `x`.
    pub fn validate_at(&self, x: &[f64], samples: usize, seed: u64) -> Result<(), ModelError> {
        for y in unit_directions(self.dim, samples, seed) {
            self.fundamental_tensor(x, &y)?;
        }
        Ok(())
    }

    /// Rescale a nonzero direction onto the indicatrix at `x`.
    pub fn indicatrix_point(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, ModelError> {
        let fu = self.f64_value(x, u);
        if !(fu > 0.0) || !fu.is_finite() {
            return Err(ModelError::NonPositive { x: x.to_vec(), y: u.to_vec(), value: fu });
        }
        let mut y: Vec<f64> = u.iter().map(|v| v / fu).collect();
        // second pass removes the rounding left by the first
        let fy = self.f64_value(x, &y);
        for v in y.iter_mut() {
            *v /= fy;
        }
        Ok(y)
    }

    /// Seeded, reproducible points on the indicatrix `F(x, ·) = 1`.
    pub fn indicatrix_sample(&self, x: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>, ModelError> {
        if count == 0 {
            return Err(ModelError::InvalidParams("sample count must be at least 1".into()));
        }
        self.check_in_chart(x)?;
        unit_directions(self.dim, count, seed).iter().map(|u| self.indicatrix_point(x, u)).collect()
    }
}

/// Deterministic directions on the Euclidean unit sphere: equally spaced with a
/// seeded phase on the circle, seeded Gaussian directions otherwise.
pub fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if dim == 2 {
        let phase: f64 = rng.random();
        return (0..count)
            .map(|k| {
                let th = 2.0 * PI * (k as f64 + phase) / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
    }
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-3 {
                break v.iter().map(|c| c / norm).collect();
            }
        })
        .collect()
}

impl fmt::Display for FinslerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (n={}): F = {}", self.name, self.dim, self.f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn euclidean_fundamental_tensor_is_identity() {
        let m = builtin_model(&ModelSpec::euclidean(2)).unwrap();
        let me = m.fundamental_tensor(&[0.3, -2.0], &[0.6, 0.8]).unwrap();
        assert_eq!(me.g, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(me.g_inv, me.g);
    }

    #[test]
    fn riemannian_diag_is_direction_independent() {
        let m = builtin_model(&ModelSpec::riemannian_diag(&["1", "x1^2 + 1"])).unwrap();
        for y in [[1.0, 0.0], [0.3, -0.7], [-2.0, 5.0]] {
            let me = m.fundamental_tensor(&[1.0, 0.0], &y).unwrap();
            assert_abs_diff_eq!(me.g[0][0], 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(me.g[1][1], 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(me.g[0][1], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn randers_with_large_one_form_is_rejected() {
        let err = builtin_model(&ModelSpec::randers(&["1.2", "0"])).unwrap_err();
        assert!(matches!(err, ModelError::NotPositiveDefinite(_)));
        assert!(err.to_string().contains("metric not positive definite"));
        assert!(err.is_degeneracy());
    }

    #[test]
    fn euclidean_indicatrix_is_unit_circle() {
        let m = builtin_model(&ModelSpec::euclidean(2)).unwrap();
        let ys = m.indicatrix_sample(&[0.0, 0.0], 4, 7).unwrap();
        assert_eq!(ys.len(), 4);
        for y in ys {
            assert_abs_diff_eq!(y[0].hypot(y[1]), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn randers_indicatrix_on_axis() {
        let m = builtin_model(&ModelSpec::randers(&["0.3", "0"])).unwrap();
        let y = m.indicatrix_point(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(y[0], 1.0 / 1.3, epsilon = 1e-15);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn samples_are_reproducible() {
        let m = builtin_model(&ModelSpec::sphere(3, 1.0)).unwrap();
        let a = m.indicatrix_sample(&[0.1, 0.2, 0.0], 10, 42).unwrap();
        let b = m.indicatrix_sample(&[0.1, 0.2, 0.0], 10, 42).unwrap();
        assert_eq!(a, b);
        for y in &a {
            assert!((m.f64_value(&[0.1, 0.2, 0.0], y) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn malformed_specs() {
        assert!(matches!(builtin_model(&ModelSpec::euclidean(1)), Err(ModelError::InvalidParams(_))));
        let mut s = ModelSpec::riemannian_diag(&["1", "y1"]);
        assert!(matches!(builtin_model(&s), Err(ModelError::InvalidParams(_))));
        s.params.diag = Some(vec!["1".into()]);
        assert!(matches!(builtin_model(&s), Err(ModelError::Dimension { .. })));
        assert!(matches!(builtin_model(&ModelSpec::custom(2, "sqrt(y1^2 + y3^2)")), Err(ModelError::Parse(_))));
    }

    #[test]
    fn sphere_outside_chart() {
        let m = builtin_model(&ModelSpec::sphere(2, 1.0)).unwrap();
        assert!(matches!(m.fundamental_tensor(&[3.0, 1.0], &[1.0, 0.0]), Err(ModelError::OutsideChart(_))));
    }

    #[test]
    fn nonpositive_custom_model_is_degenerate() {
        let m = builtin_model(&ModelSpec::custom(2, "y1")).unwrap();
        let err = m.fundamental_tensor(&[0.0, 0.0], &[-1.0, 0.0]).unwrap_err();
        assert!(matches!(err, ModelError::NonPositive { .. }));
        let err = m.fundamental_tensor(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, ModelError::DegenerateMetric { .. }));
    }
}
