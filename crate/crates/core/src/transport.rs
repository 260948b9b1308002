//! Nonlinear parallel translation, Berwald translates of vertical fields and
//! the loop experiments relating fields to the holonomy group.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    generate_infinitesimal_holonomy, spectrum_report, AlgebraError, AlgebraOptions, BasisFlags, FieldBasis,
    GenerationRecord, Operation, RankGate,
};
use crate::expr::{Expr, Var};
use crate::fields::{curvature_field, lie_bracket, FieldError, IndicatrixField, PointEvaluator, PolyVectorField};
use crate::geometry::spray;
use crate::jets::Jet;
use crate::models::{FinslerModel, ModelError};
use crate::ode::{integrate, OdeError, OdeOptions, OdeStats};
use crate::scalar::{lift, Scalar};

/// Integrator settings for transports.
pub type TransportOptions = OdeOptions;

/// Accepted transports keep `|F(end) − F(start)| ≤ DRIFT_FACTOR · rtol · max(F(start), 1)`.
pub const DRIFT_FACTOR: f64 = 10.0;

/// Equal steps per curve piece used by the loop experiments.
pub const LOOP_FIXED_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("Finsler function drifted by {drift:e} (tolerance {tolerance:e})")]
    Drift { drift: f64, tolerance: f64 },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

/// Curves in the chart, each piece parameterised over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    Polyline {
        points: Vec<Vec<f64>>,
    },
    /// Vertices `p, p+sX, p+sX+tY, p+tY, p`.
    Parallelogram {
        p: Vec<f64>,
        x: Vec<f64>,
        y: Vec<f64>,
        s: f64,
        t: f64,
    },
    /// Closed triangle of great-circle arcs of the round sphere in
    /// stereographic coordinates.
    GeodesicTriangle {
        vertices: Vec<Vec<f64>>,
    },
    /// Coordinates as expressions in `t ∈ [0, 1]`.
    Parametric {
        coords: Vec<String>,
    },
}

#[derive(Debug, Clone)]
enum Piece {
    Line(Vec<f64>, Vec<f64>),
    /// Unit-sphere points `a`, `b` in `R^{n+1}` with angle `omega`.
    Arc {
        a: Vec<f64>,
        b: Vec<f64>,
        omega: f64,
    },
    Param(Vec<Expr>),
}

fn inverse_stereographic(x: &[f64]) -> Vec<f64> {
    let s: f64 = x.iter().map(|v| v * v).sum();
    let mut out: Vec<f64> = x.iter().map(|v| 2.0 * v / (1.0 + s)).collect();
    out.push((s - 1.0) / (s + 1.0));
    out
}

impl Piece {
    fn position(&self, t: f64) -> Vec<f64> {
        match self {
            Piece::Line(a, b) => a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect(),
            Piece::Arc { a, b, omega } => {
                let (p, _) = self.arc_point(a, b, *omega, t);
                let n = p.len() - 1;
                (0..n).map(|i| p[i] / (1.0 - p[n])).collect()
            }
            Piece::Param(e) => {
                let tt = t;
                e.iter().map(|c| c.eval::<f64>(&[], &[], Some(&tt))).collect()
            }
        }
    }

    fn arc_point(&self, a: &[f64], b: &[f64], omega: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
        let so = omega.sin();
        let (ca, cb) = (((1.0 - t) * omega).sin() / so, (t * omega).sin() / so);
        let (da, db) = (-omega * ((1.0 - t) * omega).cos() / so, omega * (t * omega).cos() / so);
        let p = a.iter().zip(b).map(|(a, b)| ca * a + cb * b).collect();
        let v = a.iter().zip(b).map(|(a, b)| da * a + db * b).collect();
        (p, v)
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        match self {
            Piece::Line(a, b) => a.iter().zip(b).map(|(a, b)| b - a).collect(),
            Piece::Arc { a, b, omega } => {
                let (p, v) = self.arc_point(a, b, *omega, t);
                let n = p.len() - 1;
                let d = 1.0 - p[n];
                (0..n).map(|i| v[i] / d + p[i] * v[n] / (d * d)).collect()
            }
            Piece::Param(e) => {
                let tj = Jet::variable(0, t, 1, 1).expect("valid seed");
                e.iter().map(|c| c.eval::<Jet<f64>>(&[], &[], Some(&tj)).d1(0)).collect()
            }
        }
    }
}

/// A piecewise-smooth curve, optionally traversed backwards.
#[derive(Debug, Clone)]
pub struct Path {
    pieces: Vec<Piece>,
    reversed: bool,
}

impl Path {
    pub fn start(&self) -> Vec<f64> {
        self.point(0, 0.0)
    }

    pub fn end(&self) -> Vec<f64> {
        self.point(self.pieces.len() - 1, 1.0)
    }

    pub fn reversed(&self) -> Path {
        Path { pieces: self.pieces.clone(), reversed: !self.reversed }
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Piece `k` in traversal order at local parameter `t`.
    pub fn point(&self, k: usize, t: f64) -> Vec<f64> {
        let (piece, t) = self.local(k, t);
        piece.position(t)
    }

    pub fn velocity(&self, k: usize, t: f64) -> Vec<f64> {
        let (piece, tl) = self.local(k, t);
        let v = piece.velocity(tl);
        if self.reversed {
            v.into_iter().map(|c| -c).collect()
        } else {
            v
        }
    }

    fn local(&self, k: usize, t: f64) -> (&Piece, f64) {
        if self.reversed {
            (&self.pieces[self.pieces.len() - 1 - k], 1.0 - t)
        } else {
            (&self.pieces[k], t)
        }
    }
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<(), TransportError> {
    if v.len() != n {
        return Err(TransportError::InvalidCurve(format!("{what} has {} components, expected {n}", v.len())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(TransportError::InvalidCurve(format!("{what} is not finite")));
    }
    Ok(())
}

impl CurveSpec {
    pub fn segment(from: &[f64], to: &[f64]) -> Self {
        CurveSpec::Segment { from: from.to_vec(), to: to.to_vec() }
    }

    pub fn parallelogram(p: &[f64], x: &[f64], y: &[f64], s: f64, t: f64) -> Self {
        CurveSpec::Parallelogram { p: p.to_vec(), x: x.to_vec(), y: y.to_vec(), s, t }
    }

    /// Vertices visited in order (closed curves repeat the first one).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let lin = |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
        match self {
            CurveSpec::Segment { from, to } => vec![from.clone(), to.clone()],
            CurveSpec::Polyline { points } => points.clone(),
            CurveSpec::Parallelogram { p, x, y, s, t } => {
                let a = lin(p, x, *s);
                let b = lin(&a, y, *t);
                let c = lin(p, y, *t);
                vec![p.clone(), a, b, c, p.clone()]
            }
            CurveSpec::GeodesicTriangle { vertices } => {
                let mut v = vertices.clone();
                if let Some(f) = vertices.first() {
                    v.push(f.clone());
                }
                v
            }
            CurveSpec::Parametric { .. } => Vec::new(),
        }
    }

    pub fn path(&self, dim: usize) -> Result<Path, TransportError> {
        let pieces = match self {
            CurveSpec::Parametric { coords } => {
                if coords.len() != dim {
                    return Err(TransportError::InvalidCurve(format!("parametric curve needs {dim} coordinates")));
                }
                let exprs = coords
                    .iter()
                    .map(|s| {
                        let e = Expr::parse(s).map_err(|e| TransportError::InvalidCurve(e.to_string()))?;
                        if e.vars().iter().any(|v| *v != Var::T) {
                            return Err(TransportError::InvalidCurve(format!("'{s}' may only use t")));
                        }
                        Ok(e)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                vec![Piece::Param(exprs)]
            }
            CurveSpec::GeodesicTriangle { vertices } => {
                if vertices.len() != 3 {
                    return Err(TransportError::InvalidCurve("geodesic triangle needs 3 vertices".into()));
                }
                let pts = self.vertices();
                let mut out = Vec::new();
                for w in pts.windows(2) {
                    check_len(&w[0], dim, "vertex")?;
                    let (a, b) = (inverse_stereographic(&w[0]), inverse_stereographic(&w[1]));
                    let cos = a.iter().zip(&b).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
                    let omega = cos.acos();
                    if !(1e-14..=PI - 1e-9).contains(&omega) {
                        return Err(TransportError::InvalidCurve("degenerate or antipodal arc".into()));
                    }
                    out.push(Piece::Arc { a, b, omega });
                }
                out
            }
            _ => {
                if let CurveSpec::Parallelogram { s, t, .. } = self {
                    if !s.is_finite() || !t.is_finite() {
                        return Err(TransportError::InvalidCurve("parallelogram sides must be finite".into()));
                    }
                }
                let pts = self.vertices();
                if pts.len() < 2 {
                    return Err(TransportError::InvalidCurve("curve needs at least two points".into()));
                }
                for v in &pts {
                    check_len(v, dim, "point")?;
                }
                pts.windows(2).map(|w| Piece::Line(w[0].clone(), w[1].clone())).collect()
            }
        };
        Ok(Path { pieces, reversed: false })
    }
}

/// Outcome of one parallel translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub y_end: Vec<f64>,
    pub f_start: f64,
    pub f_end: f64,
    pub f_drift: f64,
    /// Drift bound the result was accepted against.
    pub tolerance: f64,
    pub stats: OdeStats,
}

/// `−G^i_j(c, y) ċ^j`, via a directional derivative of the spray.
fn transport_rhs(model: &FinslerModel, c: &[f64], cdot: &[f64], y: &[f64]) -> Result<Vec<f64>, TransportError> {
    model.check_in_chart(c)?;
    let n = c.len();
    let eps = Jet::variable(0, 0.0, 1, 1).expect("valid seed");
    let xs: Vec<Jet<f64>> = lift(c);
    let ys: Vec<Jet<f64>> = (0..n).map(|i| Jet::constant(y[i]) + eps.scale(cdot[i])).collect();
    let g = spray(model, &xs, &ys)?;
    Ok(g.iter().map(|v| -v.d1(0)).collect())
}

/// Pair `(ẏ, ξ̇)` with `ξ̇^i = −G^i_jk(c, y) ċ^j ξ^k`, the linearisation of the
/// translation ODE.
fn joint_rhs(model: &FinslerModel, c: &[f64], cdot: &[f64], state: &[f64]) -> Result<Vec<f64>, TransportError> {
    model.check_in_chart(c)?;
    let n = c.len();
    let e1 = Jet::variable(0, 0.0, 2, 2).expect("valid seed");
    let e2 = Jet::variable(1, 0.0, 2, 2).expect("valid seed");
    let xs: Vec<Jet<f64>> = lift(c);
    let ys: Vec<Jet<f64>> =
        (0..n).map(|i| Jet::constant(state[i]) + e1.scale(cdot[i]) + e2.scale(state[n + i])).collect();
    let g = spray(model, &xs, &ys)?;
    let mut out: Vec<f64> = g.iter().map(|v| -v.d1(0)).collect();
    out.extend(g.iter().map(|v| -v.partial(&[0, 1])));
    Ok(out)
}

fn run_path<F>(
    path: &Path,
    state: &[f64],
    opts: &TransportOptions,
    rhs: F,
) -> Result<(Vec<f64>, OdeStats), TransportError>
where
    F: Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>, TransportError>,
{
    let mut y = state.to_vec();
    let mut stats = OdeStats::default();
    for k in 0..path.piece_count() {
        let start = path.point(k, 0.0);
        let end = path.point(k, 1.0);
        if path.pieces.iter().all(|p| matches!(p, Piece::Line(..))) && start == end {
            continue;
        }
        let f = |t: f64, y: &[f64]| rhs(&path.point(k, t), &path.velocity(k, t), y);
        let (out, s) = integrate(f, 0.0, 1.0, &y, opts)?;
        stats.add(&s);
        y = out;
    }
    Ok((y, stats))
}

/// Translate `y0` along an already-built path.
pub fn transport_path(
    model: &FinslerModel,
    path: &Path,
    y0: &[f64],
    opts: &TransportOptions,
) -> Result<TransportResult, TransportError> {
    let n = model.dim();
    if y0.len() != n {
        return Err(ModelError::Dimension { expected: n, got: y0.len() }.into());
    }
    let p0 = path.start();
    model.check_in_chart(&p0)?;
    let f_start = model.f64_value(&p0, y0);
    if !(f_start > 0.0) || !f_start.is_finite() {
        return Err(ModelError::NonPositive { x: p0, y: y0.to_vec(), value: f_start }.into());
    }
    let (y_end, stats) = run_path(path, y0, opts, |c, v, y| transport_rhs(model, c, v, y))?;
    let f_end = model.f64_value(&path.end(), &y_end);
    let f_drift = (f_end - f_start).abs();
    let tolerance = DRIFT_FACTOR * opts.rtol * f_start.max(1.0);
    if !(f_drift <= tolerance) {
        return Err(TransportError::Drift { drift: f_drift, tolerance });
    }
    Ok(TransportResult { y_end, f_start, f_end, f_drift, tolerance, stats })
}

/// Integrate `ẏ^i = −G^i_j(c(t), y) ċ^j` along `curve` from `y0`.
pub fn parallel_transport(
    model: &FinslerModel,
    curve: &CurveSpec,
    y0: &[f64],
    opts: &TransportOptions,
) -> Result<TransportResult, TransportError> {
    let path = curve.path(model.dim())?;
    transport_path(model, &path, y0, opts)
}

fn loop_opts(opts: &TransportOptions) -> TransportOptions {
    TransportOptions { fixed_steps: Some(opts.fixed_steps.unwrap_or(LOOP_FIXED_STEPS)), ..opts.clone() }
}

/// Translation around the parallelogram `Π(sX, tY)` based at `p`; the identity
/// when `s·t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn loop_transport(
    model: &FinslerModel,
    p: &[f64],
    xv: &[f64],
    yv: &[f64],
    s: f64,
    t: f64,
    y0: &[f64],
    opts: &TransportOptions,
) -> Result<TransportResult, TransportError> {
    if s * t == 0.0 {
        model.check_in_chart(p)?;
        let f = model.f64_value(p, y0);
        let tolerance = DRIFT_FACTOR * opts.rtol * f.max(1.0);
        return Ok(TransportResult {
            y_end: y0.to_vec(),
            f_start: f,
            f_end: f,
            f_drift: 0.0,
            tolerance,
            stats: OdeStats::default(),
        });
    }
    parallel_transport(model, &CurveSpec::parallelogram(p, xv, yv, s, t), y0, opts)
}

/// Per-sample comparison of an estimated field against its reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    pub y: Vec<f64>,
    pub estimate: Vec<f64>,
    pub reference: Vec<f64>,
}

/// Finite-difference estimate of a field from loop experiments at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEstimate {
    pub h: f64,
    pub samples: Vec<FieldComparison>,
    /// `max_k |estimate − reference|`
    pub max_err: f64,
    /// `max_err / max_k |reference|` (equal to `max_err` when the reference vanishes).
    pub max_rel_err: f64,
    pub warning: Option<String>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn summarize(h: f64, samples: Vec<FieldComparison>, warning: Option<String>) -> LoopEstimate {
    let mut max_err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for s in &samples {
        let d: Vec<f64> = s.estimate.iter().zip(&s.reference).map(|(a, b)| a - b).collect();
        max_err = max_err.max(norm(&d));
        scale = scale.max(norm(&s.reference));
    }
    let max_rel_err = if scale > 0.0 { max_err / scale } else { max_err };
    LoopEstimate { h, samples, max_err, max_rel_err, warning }
}

/// Central mixed difference `∂²/∂s∂t τ_Π(sX,tY)(y)` at `s = t = 0`, compared
/// with the curvature field `r(X, Y)`.
pub fn curvature_from_loops(
    model: &Arc<FinslerModel>,
    p: &[f64],
    xv: &[f64],
    yv: &[f64],
    h: f64,
    y_samples: &[Vec<f64>],
    opts: &TransportOptions,
) -> Result<LoopEstimate, TransportError> {
    let lo = loop_opts(opts);
    let xi = curvature_field(model, &PolyVectorField::constant(xv), &PolyVectorField::constant(yv))?;
    let warning = (opts.fixed_steps.is_none() && opts.rtol > 1e-3 * h * h).then(|| {
        format!(
            "differencing noise dominates: rtol {:e} is not far below h² = {:e}; use rtol ≤ {:e}",
            opts.rtol,
            h * h,
            1e-4 * h * h
        )
    });
    let mut samples = Vec::with_capacity(y_samples.len());
    for y in y_samples {
        let mut est = vec![0.0; y.len()];
        for (s, t, sign) in [(h, h, 1.0), (h, -h, -1.0), (-h, h, -1.0), (-h, -h, 1.0)] {
            let r = loop_transport(model, p, xv, yv, s, t, y, &lo)?;
            for i in 0..y.len() {
                est[i] += sign * (r.y_end[i] - y[i]);
            }
        }
        for v in est.iter_mut() {
            *v /= 4.0 * h * h;
        }
        samples.push(FieldComparison { y: y.clone(), estimate: est, reference: xi.eval(p, y)? });
    }
    Ok(summarize(h, samples, warning))
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub max_err: f64,
    /// `max_err(previous h) / max_err(h)`; absent when `max_err` vanishes.
    pub ratio: Option<f64>,
}

/// Rows and observed orders `log2(ratio)` for successive halvings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub observed_orders: Vec<f64>,
}

impl ConvergenceTable {
    pub fn from_errors(points: &[(f64, f64)]) -> Self {
        let mut rows = Vec::new();
        let mut orders = Vec::new();
        for (k, &(h, e)) in points.iter().enumerate() {
            let ratio = (k > 0 && e > 0.0).then(|| points[k - 1].1 / e);
            if let Some(r) = ratio {
                orders.push(r.log2() / (points[k - 1].0 / h).log2());
            }
            rows.push(ConvergenceRow { h, max_err: e, ratio });
        }
        ConvergenceTable { rows, observed_orders: orders }
    }
}

/// `curvature_from_loops` over several steps with relative errors tabulated.
pub fn loop_convergence(
    model: &Arc<FinslerModel>,
    p: &[f64],
    xv: &[f64],
    yv: &[f64],
    hs: &[f64],
    y_samples: &[Vec<f64>],
    opts: &TransportOptions,
) -> Result<(Vec<LoopEstimate>, ConvergenceTable), TransportError> {
    let runs: Vec<LoopEstimate> =
        hs.iter().map(|&h| curvature_from_loops(model, p, xv, yv, h, y_samples, opts)).collect::<Result<_, _>>()?;
    let table = ConvergenceTable::from_errors(&runs.iter().map(|r| (r.h, r.max_rel_err)).collect::<Vec<_>>());
    Ok((runs, table))
}

/// Translated field values at the end of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedSample {
    pub y_start: Vec<f64>,
    pub y_end: Vec<f64>,
    pub xi_start: Vec<f64>,
    pub xi_end: Vec<f64>,
}

/// Push `(y, ξ(y))` forward along `path` by the translation and its linearisation.
pub fn translate_pair(
    model: &FinslerModel,
    path: &Path,
    y: &[f64],
    xi: &[f64],
    opts: &TransportOptions,
) -> Result<(Vec<f64>, Vec<f64>), TransportError> {
    let n = model.dim();
    let mut state = y.to_vec();
    state.extend_from_slice(xi);
    let (out, _) = run_path(path, &state, opts, |c, v, s| joint_rhs(model, c, v, s))?;
    let f0 = model.f64_value(&path.start(), y);
    let f1 = model.f64_value(&path.end(), &out[..n]);
    let tolerance = DRIFT_FACTOR * opts.rtol.max(1e-12) * f0.max(1.0);
    if !((f1 - f0).abs() <= tolerance) {
        return Err(TransportError::Drift { drift: (f1 - f0).abs(), tolerance });
    }
    Ok((out[..n].to_vec(), out[n..].to_vec()))
}

/// Berwald translate of `ξ` from the start of `curve` to its end, sampled at
/// the translates of `y_samples` (given at the start point).
pub fn berwald_translate(
    model: &Arc<FinslerModel>,
    curve: &CurveSpec,
    xi: &IndicatrixField,
    y_samples: &[Vec<f64>],
    opts: &TransportOptions,
) -> Result<Vec<TranslatedSample>, TransportError> {
    let path = curve.path(model.dim())?;
    let q = path.start();
    y_samples
        .iter()
        .map(|y| {
            let xq = xi.eval(&q, y)?;
            let (y_end, xi_end) = translate_pair(model, &path, y, &xq, opts)?;
            Ok(TranslatedSample { y_start: y.clone(), y_end, xi_start: xq, xi_end })
        })
        .collect()
}

/// Berwald translate `𝐁_γ ξ` evaluated at given vectors `y` at the end point:
/// each `y` is first translated back to the start, where `ξ` is evaluated.
pub fn berwald_translate_at<F>(
    model: &FinslerModel,
    path: &Path,
    xi_at_start: F,
    y_end: &[f64],
    opts: &TransportOptions,
) -> Result<Vec<f64>, TransportError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, TransportError>,
{
    let back = transport_path(model, &path.reversed(), y_end, opts)?;
    let xq = xi_at_start(&back.y_end)?;
    Ok(translate_pair(model, path, &back.y_end, &xq, opts)?.1)
}

/// Settings for [`holonomy_algebra_at`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyOptions {
    pub algebra: AlgebraOptions,
    pub transport: TransportOptions,
    /// Relative stencil step for `y`-derivatives of translated fields.
    pub stencil_step: f64,
    /// Bracket rounds on the merged generators.
    pub bracket_depth: usize,
}

impl Default for HolonomyOptions {
    fn default() -> Self {
        HolonomyOptions {
            algebra: AlgebraOptions::default(),
            transport: TransportOptions { fixed_steps: Some(48), ..TransportOptions::default() },
            stencil_step: 1e-3,
            bracket_depth: 1,
        }
    }
}

/// A generator of the holonomy algebra at `p`.
#[derive(Clone)]
enum Hybrid {
    Local(IndicatrixField),
    Translated { field: IndicatrixField, path: Arc<Path> },
    Bracket(Box<Hybrid>, Box<Hybrid>),
}

struct HybridEval<'a> {
    model: &'a Arc<FinslerModel>,
    p: Vec<f64>,
    opts: &'a HolonomyOptions,
}

impl HybridEval<'_> {
    fn value(&self, f: &Hybrid, y: &[f64]) -> Result<Vec<f64>, TransportError> {
        match f {
            Hybrid::Local(xi) => Ok(xi.eval(&self.p, y)?),
            Hybrid::Translated { field, path } => {
                let q = path.start();
                berwald_translate_at(self.model, path, |yq| Ok(field.eval(&q, yq)?), y, &self.opts.transport)
            }
            Hybrid::Bracket(a, b) => {
                let (va, vb) = (self.value(a, y)?, self.value(b, y)?);
                let (da, db) = (self.jacobian(a, y)?, self.jacobian(b, y)?);
                let n = y.len();
                Ok((0..n).map(|i| (0..n).map(|k| va[k] * db[i][k] - vb[k] * da[i][k]).sum()).collect())
            }
        }
    }

    /// `J[i][k] = ∂f^i/∂y^k`: exact for local fields, a fourth-order central
    /// stencil otherwise.
    fn jacobian(&self, f: &Hybrid, y: &[f64]) -> Result<Vec<Vec<f64>>, TransportError> {
        let n = y.len();
        if let Hybrid::Local(xi) = f {
            let mut ev = PointEvaluator::new(self.model, &self.p, y);
            let jets = ev.jet(xi, 1)?;
            return Ok((0..n).map(|i| (0..n).map(|k| jets[i].d1(n + k)).collect()).collect());
        }
        let d = self.opts.stencil_step * norm(y);
        let mut jac = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut acc = vec![0.0; n];
            for (m, w) in [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)] {
                let mut yy = y.to_vec();
                yy[k] += m * d;
                let v = self.value(f, &yy)?;
                for i in 0..n {
                    acc[i] += w * v[i];
                }
            }
            for i in 0..n {
                jac[i][k] = acc[i] / (12.0 * d);
            }
        }
        Ok(jac)
    }

    fn column(&self, f: &Hybrid, ys: &[Vec<f64>]) -> Result<Vec<f64>, TransportError> {
        let cols: Vec<Vec<f64>> = ys.par_iter().map(|y| self.value(f, y)).collect::<Result<_, _>>()?;
        Ok(cols.concat())
    }
}

/// Lower bound for the holonomy algebra at `p`: the infinitesimal holonomy
/// algebra at `p`, Berwald translates of the infinitesimal holonomy algebras
/// at the source points, and brackets of the merged generators.
pub fn holonomy_algebra_at(
    model: &Arc<FinslerModel>,
    p: &[f64],
    sources: &[CurveSpec],
    opts: &HolonomyOptions,
) -> Result<FieldBasis, TransportError> {
    let n = model.dim();
    let local = generate_infinitesimal_holonomy(model, p, &opts.algebra)?;
    let ys = local.samples.clone();
    let ev = HybridEval { model, p: p.to_vec(), opts };
    let mut gate = RankGate::new(opts.algebra.tol, opts.algebra.zero_floor);
    let mut members: Vec<(Hybrid, String)> = Vec::new();
    let mut log: Vec<GenerationRecord> = Vec::new();
    let mut truncated = local.flags.truncated;
    for (k, f) in local.fields.iter().enumerate() {
        let col: Vec<f64> = local.eval_matrix.column(k).iter().copied().collect();
        let accepted = gate.offer(col);
        debug_assert!(accepted, "local generators are independent");
        members.push((Hybrid::Local(f.clone()), f.label().to_string()));
        let mut rec = local.generation_log[k].clone();
        rec.rank_after = gate.rank();
        log.push(rec);
    }
    for (si, curve) in sources.iter().enumerate() {
        let path = Arc::new(curve.path(n)?);
        let end = path.end();
        if end.iter().zip(p).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(TransportError::InvalidCurve(format!("source curve {si} does not end at p")));
        }
        let q = path.start();
        let remote = generate_infinitesimal_holonomy(model, &q, &opts.algebra)?;
        for f in &remote.fields {
            if members.len() >= opts.algebra.max_fields {
                truncated = true;
                break;
            }
            let h = Hybrid::Translated { field: f.clone(), path: path.clone() };
            if gate.offer(ev.column(&h, &ys)?) {
                let label = format!("B[{q:?}→p] {}", f.label());
                log.push(GenerationRecord {
                    label: label.clone(),
                    operation: Operation::Translate,
                    parents: vec![],
                    generation: 0,
                    rank_after: gate.rank(),
                });
                members.push((h, label));
            }
        }
    }
    let mut depth_exhausted = false;
    let mut closed = false;
    let local_count = local.fields.len();
    let mut frontier = (local_count, members.len());
    for round in 1..=opts.bracket_depth.max(1) + 1 {
        if round > opts.bracket_depth {
            depth_exhausted = frontier.0 < frontier.1;
            break;
        }
        let (lo, hi) = frontier;
        let mut added = false;
        for a in lo..hi {
            for b in 0..hi {
                if (b >= lo && b <= a) || (a < local_count && b < local_count) {
                    continue;
                }
                if members.len() >= opts.algebra.max_fields {
                    truncated = true;
                    break;
                }
                let h = Hybrid::Bracket(Box::new(members[b].0.clone()), Box::new(members[a].0.clone()));
                if gate.offer(ev.column(&h, &ys)?) {
                    let label = format!("[{}, {}]", members[b].1, members[a].1);
                    log.push(GenerationRecord {
                        label: label.clone(),
                        operation: Operation::Bracket,
                        parents: vec![b, a],
                        generation: round,
                        rank_after: gate.rank(),
                    });
                    members.push((h, label));
                    added = true;
                }
            }
        }
        if !added {
            closed = true;
            break;
        }
        frontier = (hi, members.len());
    }
    let eval_matrix = gate.raw_matrix();
    let eval_matrix = if eval_matrix.ncols() == 0 { nalgebra::DMatrix::zeros(ys.len() * n, 0) } else { eval_matrix };
    let (rank, sv_spectrum, condition_number) = spectrum_report(&eval_matrix, opts.algebra.tol);
    assert!(rank >= local.rank, "holonomy algebra lost infinitesimal generators");
    let saturated = n > 1 && rank >= ys.len() * (n - 1);
    let flags = BasisFlags {
        closed: closed && !truncated && !saturated && local.flags.closed,
        truncated,
        depth_exhausted: depth_exhausted || local.flags.depth_exhausted,
        ill_conditioned: local.flags.ill_conditioned,
        saturated,
    };
    Ok(FieldBasis {
        kind: "holonomy_algebra".to_string(),
        base_point: p.to_vec(),
        samples: ys,
        fields: Vec::new(),
        labels: members.into_iter().map(|(_, l)| l).collect(),
        eval_matrix,
        rank,
        sv_spectrum,
        condition_number,
        doubled_rank: None,
        generation_log: log,
        flags,
    })
}

/// Loop family `(s, t) ↦ τ_Π(sX, tY)` realising a curvature field at `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopFamily {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn apply_loop(
    model: &FinslerModel,
    p: &[f64],
    fam: &LoopFamily,
    s: f64,
    t: f64,
    inverse: bool,
    y: &[f64],
    opts: &TransportOptions,
) -> Result<Vec<f64>, TransportError> {
    if s * t == 0.0 {
        return Ok(y.to_vec());
    }
    let path = CurveSpec::parallelogram(p, &fam.x, &fam.y, s, t).path(p.len())?;
    let path = if inverse { path.reversed() } else { path };
    Ok(transport_path(model, &path, y, opts)?.y_end)
}

/// Fourth mixed central difference of the commutator family
/// `φ(s,t)⁻¹ ψ(u,v)⁻¹ φ(s,t) ψ(u,v)` compared with `−[ξ, η]`, where `φ`, `ψ`
/// are the loop families of `ξ = r(X₁,Y₁)` and `η = r(X₂,Y₂)`.
#[allow(clippy::too_many_arguments)]
pub fn commutator_family_experiment(
    model: &Arc<FinslerModel>,
    p: &[f64],
    xi: &LoopFamily,
    eta: &LoopFamily,
    h: f64,
    y_samples: &[Vec<f64>],
    opts: &TransportOptions,
) -> Result<LoopEstimate, TransportError> {
    let lo = loop_opts(opts);
    let f_xi = curvature_field(model, &PolyVectorField::constant(&xi.x), &PolyVectorField::constant(&xi.y))?;
    let f_eta = curvature_field(model, &PolyVectorField::constant(&eta.x), &PolyVectorField::constant(&eta.y))?;
    let bracket = lie_bracket(&f_xi, &f_eta)?;
    let warning = (opts.fixed_steps.is_none() && opts.rtol > 1e-2 * h.powi(4)).then(|| {
        format!(
            "differencing noise dominates: rtol {:e} is not far below h⁴ = {:e}; use rtol ≤ {:e}",
            opts.rtol,
            h.powi(4),
            1e-3 * h.powi(4)
        )
    });
    let mut samples = Vec::with_capacity(y_samples.len());
    for y in y_samples {
        let n = y.len();
        let mut est = vec![0.0; n];
        for mask in 0..16u32 {
            let sg = |bit: u32| if mask & (1 << bit) == 0 { 1.0 } else { -1.0 };
            let (s, t, u, v) = (sg(0) * h, sg(1) * h, sg(2) * h, sg(3) * h);
            let sign = sg(0) * sg(1) * sg(2) * sg(3);
            let y1 = apply_loop(model, p, eta, u, v, false, y, &lo)?;
            let y2 = apply_loop(model, p, xi, s, t, false, &y1, &lo)?;
            let y3 = apply_loop(model, p, eta, u, v, true, &y2, &lo)?;
            let y4 = apply_loop(model, p, xi, s, t, true, &y3, &lo)?;
            for i in 0..n {
                est[i] += sign * (y4[i] - y[i]);
            }
        }
        for v in est.iter_mut() {
            *v /= 16.0 * h.powi(4);
        }
        let reference: Vec<f64> = bracket.eval(p, y)?.into_iter().map(|c| -c).collect();
        samples.push(FieldComparison { y: y.clone(), estimate: est, reference });
    }
    Ok(summarize(h, samples, warning))
}
