//! Vertical vector fields on the indicatrix bundle.
//!
//! A field is an expression tree over curvature fields, fibrewise Lie
//! brackets and Berwald covariant derivatives. Components are represented
//! by their coordinates in the `∂/∂y` frame and are positively homogeneous
//! of degree one in `y`, so they commute with the Liouville field and are
//! tangent to every indicatrix.
//!
//! Evaluation expands every node as a flat Taylor jet in the `2n`
//! variables `(x, y)` around the sample point. A node needed at order `L`
//! asks its children for order `L + 1`; the connection is expanded once per
//! point at the depth of the deepest field and shared.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::Expr;
use crate::geometry::{connection_jets, ConnectionJets};
use crate::jets::Jet;
use crate::models::{FinslerModel, ModelError};
use crate::scalar::Scalar;

/// Maximum number of nested bracket / covariant-derivative operations.
pub const MAX_FIELD_DEPTH: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("field expression depth {depth} exceeds the cap of {cap}")]
    DepthExceeded { depth: usize, cap: usize },
    #[error("fields belong to different models")]
    ModelMismatch,
    #[error("vector field must be polynomial in x with {expected} components: {detail}")]
    BadVectorField { expected: usize, detail: String },
}

/// Vector field on the chart with polynomial coefficients in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVectorField {
    comps: Vec<Expr>,
}

impl PolyVectorField {
    pub fn constant(v: &[f64]) -> Self {
        PolyVectorField { comps: v.iter().map(|&c| Expr::c(c)).collect() }
    }

    /// Coordinate field `e_j` (zero-based `j`).
    pub fn basis(dim: usize, j: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        PolyVectorField::constant(&v)
    }

    pub fn parse(src: &[&str], dim: usize) -> Result<Self, FieldError> {
        if src.len() != dim {
            return Err(FieldError::BadVectorField { expected: dim, detail: format!("{} components", src.len()) });
        }
        let comps = src
            .iter()
            .map(|s| {
                let e = Expr::parse_dim(s, dim)
                    .map_err(|e| FieldError::BadVectorField { expected: dim, detail: e.to_string() })?;
                if !e.is_x_polynomial() {
                    return Err(FieldError::BadVectorField { expected: dim, detail: s.to_string() });
                }
                Ok(e)
            })
            .collect::<Result<_, _>>()?;
        Ok(PolyVectorField { comps })
    }

    pub fn from_exprs(comps: Vec<Expr>) -> Result<Self, FieldError> {
        let n = comps.len();
        if let Some(e) = comps.iter().find(|e| !e.is_x_polynomial()) {
            return Err(FieldError::BadVectorField { expected: n, detail: e.to_string() });
        }
        Ok(PolyVectorField { comps })
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|e| e.eval::<f64>(x, &[], None)).collect()
    }

    fn jets(&self, x: &[Jet<f64>]) -> Vec<Jet<f64>> {
        self.comps.iter().map(|e| e.eval(x, &[], None)).collect()
    }

    fn constant_value(&self) -> Option<Vec<f64>> {
        self.comps.iter().map(|e| e.const_value()).collect()
    }
}

impl fmt::Display for PolyVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(v) = self.constant_value() {
            let ones: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
            if ones.len() == 1 && v[ones[0]] == 1.0 {
                return write!(f, "e{}", ones[0] + 1);
            }
        }
        let parts: Vec<String> = self.comps.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[derive(Debug)]
enum Node {
    Curvature(PolyVectorField, PolyVectorField),
    /// `ξ^i = A^i_l y^l`, independent of `x`.
    Linear(Vec<Vec<f64>>),
    Bracket(IndicatrixField, IndicatrixField),
    Covariant(IndicatrixField, PolyVectorField),
    Combination(Vec<(f64, IndicatrixField)>),
}

/// Vertical vector field `ξ(x, y)`; cheap to clone.
#[derive(Clone)]
pub struct IndicatrixField {
    inner: Arc<FieldInner>,
}

struct FieldInner {
    id: u64,
    model: Arc<FinslerModel>,
    node: Node,
    depth: usize,
    label: String,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

impl fmt::Debug for IndicatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IndicatrixField({})", self.inner.label)
    }
}

impl fmt::Display for IndicatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.inner.label)
    }
}

impl IndicatrixField {
    fn build(model: Arc<FinslerModel>, node: Node, depth: usize, label: String) -> Result<Self, FieldError> {
        if depth > MAX_FIELD_DEPTH {
            return Err(FieldError::DepthExceeded { depth, cap: MAX_FIELD_DEPTH });
        }
        let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
        Ok(IndicatrixField { inner: Arc::new(FieldInner { id, model, node, depth, label }) })
    }

    /// Linear field `y ↦ A y`, independent of the base point.
    pub fn linear(model: &Arc<FinslerModel>, a: Vec<Vec<f64>>, label: &str) -> Result<Self, FieldError> {
        let n = model.dim();
        if a.len() != n || a.iter().any(|r| r.len() != n) {
            return Err(FieldError::BadVectorField { expected: n, detail: "matrix shape".into() });
        }
        IndicatrixField::build(model.clone(), Node::Linear(a), 0, label.to_string())
    }

    /// `Σ c_k ξ_k`
    pub fn combination(terms: &[(f64, IndicatrixField)]) -> Result<Self, FieldError> {
        let first = terms.first().expect("combination of at least one field");
        let model = first.1.inner.model.clone();
        if terms.iter().any(|(_, f)| !Arc::ptr_eq(&f.inner.model, &model)) {
            return Err(FieldError::ModelMismatch);
        }
        let depth = terms.iter().map(|(_, f)| f.depth()).max().unwrap_or(0);
        let label = terms.iter().map(|(c, f)| format!("{c}·{f}")).collect::<Vec<_>>().join(" + ");
        IndicatrixField::build(model, Node::Combination(terms.to_vec()), depth, label)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn model(&self) -> &Arc<FinslerModel> {
        &self.inner.model
    }

    pub fn depth(&self) -> usize {
        self.inner.depth
    }

    /// Provenance expression, e.g. `[∇_{e1} r(e1,e2), r(e1,e2)]`.
    pub fn label(&self) -> &str {
        &self.inner.label
    }

    /// Value at a single point of `TM`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, FieldError> {
        PointEvaluator::new(self.model(), x, y).value(self)
    }

    /// Number of derivative orders the connection must carry to evaluate this field.
    fn connection_need(&self, order: usize) -> Option<usize> {
        match &self.inner.node {
            Node::Curvature(..) => Some(order),
            Node::Linear(_) => None,
            Node::Bracket(a, b) => a.connection_need(order + 1).max(b.connection_need(order + 1)),
            Node::Covariant(a, _) => Some(a.connection_need(order + 1).map_or(order, |v| v.max(order))),
            Node::Combination(t) => t.iter().filter_map(|(_, f)| f.connection_need(order)).max(),
        }
    }
}

/// Curvature vector field `ξ^i = R^i_jk X^j Y^k`.
pub fn curvature_field(
    model: &Arc<FinslerModel>,
    xv: &PolyVectorField,
    yv: &PolyVectorField,
) -> Result<IndicatrixField, FieldError> {
    let n = model.dim();
    for v in [xv, yv] {
        if v.dim() != n {
            return Err(FieldError::BadVectorField { expected: n, detail: format!("{} components", v.dim()) });
        }
    }
    let label = format!("r({xv},{yv})");
    IndicatrixField::build(model.clone(), Node::Curvature(xv.clone(), yv.clone()), 0, label)
}

/// Fibrewise bracket `[ξ,η]^i = ξ^k ∂η^i/∂y^k − η^k ∂ξ^i/∂y^k`.
pub fn lie_bracket(xi: &IndicatrixField, eta: &IndicatrixField) -> Result<IndicatrixField, FieldError> {
    if !Arc::ptr_eq(xi.model(), eta.model()) {
        return Err(FieldError::ModelMismatch);
    }
    let depth = 1 + xi.depth().max(eta.depth());
    let label = format!("[{xi}, {eta}]");
    IndicatrixField::build(xi.model().clone(), Node::Bracket(xi.clone(), eta.clone()), depth, label)
}

/// `(∇_X ξ)^i = (∂ξ^i/∂x^j − G^k_j ∂ξ^i/∂y^k + G^i_jk ξ^k) X^j`.
pub fn covariant_derivative(xi: &IndicatrixField, xv: &PolyVectorField) -> Result<IndicatrixField, FieldError> {
    let n = xi.model().dim();
    if xv.dim() != n {
        return Err(FieldError::BadVectorField { expected: n, detail: format!("{} components", xv.dim()) });
    }
    let label = format!("∇_{{{xv}}} {xi}");
    IndicatrixField::build(xi.model().clone(), Node::Covariant(xi.clone(), xv.clone()), xi.depth() + 1, label)
}

/// Largest `|g_{x,y}(y, ξ(x,y))|` over seeded indicatrix samples at `x`.
pub fn metric_orthogonality_check(
    xi: &IndicatrixField,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64, FieldError> {
    let model = xi.model();
    let ys = model.indicatrix_sample(x, samples, seed)?;
    let mut worst: f64 = 0.0;
    for y in ys {
        let v = xi.eval(x, &y)?;
        let me = model.fundamental_tensor(x, &y)?;
        worst = worst.max(me.inner(&y, &v).abs());
    }
    Ok(worst)
}

/// Cached evaluation of many fields at one point `(x, y)`.
pub struct PointEvaluator {
    model: Arc<FinslerModel>,
    x: Vec<f64>,
    y: Vec<f64>,
    conn: Option<ConnectionJets>,
    memo: HashMap<u64, (usize, Vec<Jet<f64>>)>,
}

impl PointEvaluator {
    pub fn new(model: &Arc<FinslerModel>, x: &[f64], y: &[f64]) -> Self {
        PointEvaluator { model: model.clone(), x: x.to_vec(), y: y.to_vec(), conn: None, memo: HashMap::new() }
    }

    pub fn point(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn value(&mut self, f: &IndicatrixField) -> Result<Vec<f64>, FieldError> {
        Ok(self.jet(f, 0)?.iter().map(|j| *j.value()).collect())
    }

    /// Taylor jets of the components of `f` around the point, to `order`.
    pub fn jet(&mut self, f: &IndicatrixField, order: usize) -> Result<Vec<Jet<f64>>, FieldError> {
        if !Arc::ptr_eq(f.model(), &self.model) {
            return Err(FieldError::ModelMismatch);
        }
        if let Some(need) = f.connection_need(order) {
            if self.conn.as_ref().is_none_or(|c| c.order < need) {
                self.conn = Some(connection_jets(&self.model, &self.x, &self.y, need)?);
            }
        }
        self.eval_node(f, order)
    }

    fn vars(&self, order: usize) -> (Vec<Jet<f64>>, Vec<Jet<f64>>) {
        let n = self.x.len();
        let v = |i: usize, val: f64| Jet::variable(i, val, 2 * n, order).expect("order within engine cap");
        ((0..n).map(|i| v(i, self.x[i])).collect(), (0..n).map(|i| v(n + i, self.y[i])).collect())
    }

    fn eval_node(&mut self, f: &IndicatrixField, order: usize) -> Result<Vec<Jet<f64>>, FieldError> {
        if let Some((o, jets)) = self.memo.get(&f.id()) {
            if *o >= order {
                return Ok(jets.iter().map(|j| j.truncate(order)).collect());
            }
        }
        let n = self.x.len();
        let out: Vec<Jet<f64>> = match &f.inner.node {
            Node::Curvature(xv, yv) => {
                let (xs, _) = self.vars(order);
                let (a, b) = (xv.jets(&xs), yv.jets(&xs));
                let conn = self.conn.as_ref().expect("connection prepared");
                (0..n)
                    .map(|i| {
                        let mut s = Jet::constant(0.0);
                        for j in 0..n {
                            for k in 0..n {
                                let r = conn.r[i][j][k].truncate(order);
                                s += r * a[j].clone() * b[k].clone();
                            }
                        }
                        s
                    })
                    .collect()
            }
            Node::Linear(m) => {
                let (_, ys) = self.vars(order);
                (0..n)
                    .map(|i| {
                        let mut s = Jet::constant(0.0);
                        for l in 0..n {
                            s += ys[l].scale(m[i][l]);
                        }
                        s
                    })
                    .collect()
            }
            Node::Bracket(a, b) => {
                let ja = self.eval_node(a, order + 1)?;
                let jb = self.eval_node(b, order + 1)?;
                (0..n)
                    .map(|i| {
                        let mut s = Jet::constant(0.0);
                        for k in 0..n {
                            s += ja[k].truncate(order) * jb[i].derivative(n + k);
                            s -= jb[k].truncate(order) * ja[i].derivative(n + k);
                        }
                        s
                    })
                    .collect()
            }
            Node::Covariant(a, xv) => {
                let ja = self.eval_node(a, order + 1)?;
                let (xs, _) = self.vars(order);
                let xj = xv.jets(&xs);
                let conn = self.conn.as_ref().expect("connection prepared");
                let low: Vec<Jet<f64>> = ja.iter().map(|j| j.truncate(order)).collect();
                (0..n)
                    .map(|i| {
                        let mut s = Jet::constant(0.0);
                        for j in 0..n {
                            let mut t = ja[i].derivative(j);
                            for k in 0..n {
                                t -= conn.gj[k][j].truncate(order) * ja[i].derivative(n + k);
                                t += conn.gjk[i][j][k].truncate(order) * low[k].clone();
                            }
                            s += t * xj[j].clone();
                        }
                        s
                    })
                    .collect()
            }
            Node::Combination(terms) => {
                let mut acc = vec![Jet::constant(0.0); n];
                for (c, g) in terms {
                    let jg = self.eval_node(g, order)?;
                    for i in 0..n {
                        acc[i] += jg[i].scale(*c);
                    }
                }
                acc
            }
        };
        self.memo.insert(f.id(), (order, out.clone()));
        Ok(out)
    }
}

/// Evaluates fields over a fixed set of indicatrix samples at one base point.
pub struct SampleEvaluator {
    points: Vec<PointEvaluator>,
}

impl SampleEvaluator {
    pub fn new(model: &Arc<FinslerModel>, x: &[f64], ys: &[Vec<f64>]) -> Self {
        SampleEvaluator { points: ys.iter().map(|y| PointEvaluator::new(model, x, y)).collect() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Field values at every sample, stacked sample-major.
    pub fn values(&mut self, f: &IndicatrixField) -> Result<Vec<f64>, FieldError> {
        let cols: Vec<Result<Vec<f64>, FieldError>> = self.points.par_iter_mut().map(|p| p.value(f)).collect();
        let mut out = Vec::new();
        for c in cols {
            out.extend(c?);
        }
        Ok(out)
    }
}
