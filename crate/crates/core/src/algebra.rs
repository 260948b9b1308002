//! Rank-gated closure of curvature fields into the curvature algebra and
//! the infinitesimal holonomy algebra at a point.
//!
//! Dimensions are numerical ranks of evaluation matrices over indicatrix
//! samples, so every reported dimension is a lower bound.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    covariant_derivative, curvature_field, lie_bracket, FieldError, IndicatrixField, PolyVectorField, SampleEvaluator,
};
pub use crate::linalg::numerical_rank;
use crate::linalg::projection_residual;
use crate::models::{FinslerModel, ModelError};
use crate::riemann::curvature_operator;

/// Default relative singular-value threshold.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model is not Riemannian")]
    NotRiemannian,
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// Budgets and sampling for a closure run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgebraOptions {
    pub max_fields: usize,
    pub bracket_depth: usize,
    pub nabla_depth: usize,
    /// Relative singular-value threshold for rank gating.
    pub tol: f64,
    /// Columns with largest entry below this are treated as zero.
    pub zero_floor: f64,
    /// Indicatrix samples; `None` means `4·n²`.
    pub samples: Option<usize>,
    pub seed: u64,
    /// Re-estimate the rank on twice as many samples.
    pub check_doubling: bool,
}

impl Default for AlgebraOptions {
    fn default() -> Self {
        AlgebraOptions {
            max_fields: 64,
            bracket_depth: 4,
            nabla_depth: 3,
            tol: DEFAULT_RANK_TOL,
            zero_floor: 1e-12,
            samples: None,
            seed: 0,
            check_doubling: true,
        }
    }
}

impl AlgebraOptions {
    pub fn sample_count(&self, dim: usize) -> usize {
        self.samples.unwrap_or(4 * dim * dim)
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        if self.max_fields == 0 {
            return Err(AlgebraError::InvalidOptions("max_fields must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(AlgebraError::InvalidOptions(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.zero_floor < 0.0 {
            return Err(AlgebraError::InvalidOptions("zero_floor must be non-negative".into()));
        }
        if self.samples == Some(0) {
            return Err(AlgebraError::InvalidOptions("samples must be positive".into()));
        }
        Ok(())
    }
}

/// How a basis element was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Curvature,
    Bracket,
    Covariant,
    Translate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub label: String,
    pub operation: Operation,
    /// Indices of parent fields in the basis.
    pub parents: Vec<usize>,
    pub generation: usize,
    pub rank_after: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisFlags {
    /// A full round of brackets (and derivatives) added nothing.
    pub closed: bool,
    /// `max_fields` was reached; the dimension is a lower bound only.
    pub truncated: bool,
    /// Some candidates were skipped because of depth budgets.
    pub depth_exhausted: bool,
    /// Rank changed when the sample count was doubled.
    pub ill_conditioned: bool,
    /// Rank reached the sampling ceiling `samples·(n−1)`.
    pub saturated: bool,
}

/// A filtration of fields with its evaluation matrix at the base point.
#[derive(Debug, Clone)]
pub struct FieldBasis {
    pub kind: String,
    pub base_point: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    /// Expression fields, when every element has one.
    pub fields: Vec<IndicatrixField>,
    pub labels: Vec<String>,
    /// `(#samples·n) × (#fields)`, sample-major rows.
    pub eval_matrix: DMatrix<f64>,
    pub rank: usize,
    pub sv_spectrum: Vec<f64>,
    pub condition_number: f64,
    pub doubled_rank: Option<usize>,
    pub generation_log: Vec<GenerationRecord>,
    pub flags: BasisFlags,
}

/// Serializable digest of a [`FieldBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSummary {
    pub kind: String,
    pub base_point: Vec<f64>,
    pub sample_count: usize,
    pub field_count: usize,
    pub rank: usize,
    pub sv_spectrum: Vec<f64>,
    pub condition_number: f64,
    pub doubled_rank: Option<usize>,
    pub flags: BasisFlags,
    pub generation_log: Vec<GenerationRecord>,
}

impl FieldBasis {
    pub fn summary(&self) -> BasisSummary {
        BasisSummary {
            kind: self.kind.clone(),
            base_point: self.base_point.clone(),
            sample_count: self.samples.len(),
            field_count: self.labels.len(),
            rank: self.rank,
            sv_spectrum: self.sv_spectrum.clone(),
            condition_number: self.condition_number,
            doubled_rank: self.doubled_rank,
            flags: self.flags.clone(),
            generation_log: self.generation_log.clone(),
        }
    }

    /// Largest relative residual of projecting `other`'s columns onto this span.
    /// Both bases must share their samples.
    pub fn contains_span_of(&self, other: &FieldBasis, tol: f64) -> f64 {
        projection_residual(&normalized_columns(&self.eval_matrix), &other.eval_matrix, tol)
    }
}

/// Scale every nonzero column to unit Euclidean norm.
pub fn normalized_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
    out
}

/// Incrementally built matrix with rank gating.
pub(crate) struct RankGate {
    cols: Vec<Vec<f64>>,
    rank: usize,
    tol: f64,
    zero_floor: f64,
}

impl RankGate {
    pub(crate) fn new(tol: f64, zero_floor: f64) -> Self {
        RankGate { cols: Vec::new(), rank: 0, tol, zero_floor }
    }

    fn matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
        let rows = cols.first().map_or(0, |c| c.len());
        DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    /// Append `v` if it raises the numerical rank; returns whether it did.
    pub(crate) fn offer(&mut self, v: Vec<f64>) -> bool {
        let amax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(amax > self.zero_floor) || v.iter().any(|x| !x.is_finite()) {
            return false;
        }
        self.cols.push(v);
        let (r, _) = numerical_rank(&normalized_columns(&Self::matrix(&self.cols)), self.tol);
        if r > self.rank {
            self.rank = r;
            true
        } else {
            self.cols.pop();
            false
        }
    }

    pub(crate) fn rank(&self) -> usize {
        self.rank
    }

    pub(crate) fn raw_matrix(&self) -> DMatrix<f64> {
        Self::matrix(&self.cols)
    }
}

pub(crate) fn spectrum_report(m: &DMatrix<f64>, tol: f64) -> (usize, Vec<f64>, f64) {
    let (rank, sv) = numerical_rank(&normalized_columns(m), tol);
    let cond = if rank == 0 { 1.0 } else { sv[0] / sv[rank - 1] };
    (rank, sv, cond)
}

#[derive(Clone)]
struct Member {
    field: IndicatrixField,
    brackets: usize,
    nablas: usize,
    generation: usize,
}

struct Closure<'a> {
    model: &'a Arc<FinslerModel>,
    opts: &'a AlgebraOptions,
    eval: SampleEvaluator,
    gate: RankGate,
    members: Vec<Member>,
    log: Vec<GenerationRecord>,
    truncated: bool,
    depth_exhausted: bool,
}

impl<'a> Closure<'a> {
    fn offer(&mut self, m: Member, op: Operation, parents: Vec<usize>) -> Result<bool, AlgebraError> {
        if self.members.len() >= self.opts.max_fields {
            self.truncated = true;
            return Ok(false);
        }
        let v = self.eval.values(&m.field)?;
        if !self.gate.offer(v) {
            return Ok(false);
        }
        self.log.push(GenerationRecord {
            label: m.field.label().to_string(),
            operation: op,
            parents,
            generation: m.generation,
            rank_after: self.gate.rank(),
        });
        self.members.push(m);
        Ok(true)
    }

    /// Breadth-first rounds over the members from `start` on; returns whether
    /// the last round closed without hitting a budget.
    fn run(&mut self, mut frontier_start: usize, with_nabla: bool) -> Result<bool, AlgebraError> {
        let n = self.model.dim();
        loop {
            let frontier_end = self.members.len();
            if frontier_start == frontier_end {
                return Ok(!self.depth_exhausted && !self.truncated);
            }
            let generation = self.members[frontier_start..frontier_end].iter().map(|m| m.generation).max().unwrap() + 1;
            let mut candidates: Vec<(Member, Operation, Vec<usize>)> = Vec::new();
            for a in frontier_start..frontier_end {
                let ma = self.members[a].clone();
                if with_nabla {
                    if ma.nablas < self.opts.nabla_depth {
                        for j in 0..n {
                            let f = covariant_derivative(&ma.field, &PolyVectorField::basis(n, j))?;
                            let m = Member { field: f, brackets: ma.brackets, nablas: ma.nablas + 1, generation };
                            candidates.push((m, Operation::Covariant, vec![a]));
                        }
                    } else {
                        self.depth_exhausted = true;
                    }
                }
                for b in 0..frontier_end {
                    if b >= frontier_start && b <= a {
                        continue;
                    }
                    let mb = &self.members[b];
                    let brackets = ma.brackets.max(mb.brackets) + 1;
                    if brackets > self.opts.bracket_depth {
                        self.depth_exhausted = true;
                        continue;
                    }
                    let (lo, hi) = if b < a { (b, a) } else { (a, b) };
                    let f = lie_bracket(&self.members[lo].field, &self.members[hi].field)?;
                    let m = Member { field: f, brackets, nablas: ma.nablas.max(mb.nablas), generation };
                    candidates.push((m, Operation::Bracket, vec![lo, hi]));
                }
            }
            for (m, op, parents) in candidates {
                self.offer(m, op, parents)?;
                if self.truncated {
                    return Ok(false);
                }
            }
            frontier_start = frontier_end;
        }
    }

    fn finish(self, kind: &str, p: &[f64], samples: Vec<Vec<f64>>, closed: bool) -> Result<FieldBasis, AlgebraError> {
        let n = self.model.dim();
        let eval_matrix = self.gate.raw_matrix();
        let eval_matrix = if eval_matrix.ncols() == 0 { DMatrix::zeros(samples.len() * n, 0) } else { eval_matrix };
        let (rank, sv_spectrum, condition_number) = spectrum_report(&eval_matrix, self.opts.tol);
        let fields: Vec<IndicatrixField> = self.members.iter().map(|m| m.field.clone()).collect();
        let doubled_rank = if self.opts.check_doubling {
            let count = 2 * samples.len();
            let ys = self.model.indicatrix_sample(p, count, self.opts.seed.wrapping_add(0x9e37_79b9))?;
            let mut ev = SampleEvaluator::new(self.model, p, &ys);
            let cols: Vec<Vec<f64>> = fields.iter().map(|f| ev.values(f)).collect::<Result<_, _>>()?;
            let m = RankGate::matrix(&cols);
            Some(if cols.is_empty() { 0 } else { spectrum_report(&m, self.opts.tol).0 })
        } else {
            None
        };
        let saturated = n > 1 && rank >= samples.len() * (n - 1);
        let flags = BasisFlags {
            closed: closed && !saturated,
            truncated: self.truncated,
            depth_exhausted: self.depth_exhausted,
            ill_conditioned: doubled_rank.is_some_and(|d| d != rank),
            saturated,
        };
        Ok(FieldBasis {
            kind: kind.to_string(),
            base_point: p.to_vec(),
            samples,
            labels: fields.iter().map(|f| f.label().to_string()).collect(),
            fields,
            eval_matrix,
            rank,
            sv_spectrum,
            condition_number,
            doubled_rank,
            generation_log: self.log,
            flags,
        })
    }
}

fn start<'a>(
    model: &'a Arc<FinslerModel>,
    p: &[f64],
    opts: &'a AlgebraOptions,
) -> Result<(Closure<'a>, Vec<Vec<f64>>), AlgebraError> {
    opts.validate()?;
    let n = model.dim();
    let samples = model.indicatrix_sample(p, opts.sample_count(n), opts.seed)?;
    for y in &samples {
        model.fundamental_tensor(p, y)?;
    }
    let mut c = Closure {
        model,
        opts,
        eval: SampleEvaluator::new(model, p, &samples),
        gate: RankGate::new(opts.tol, opts.zero_floor),
        members: Vec::new(),
        log: Vec::new(),
        truncated: false,
        depth_exhausted: false,
    };
    for i in 0..n {
        for j in i + 1..n {
            let f = curvature_field(model, &PolyVectorField::basis(n, i), &PolyVectorField::basis(n, j))?;
            c.offer(Member { field: f, brackets: 0, nablas: 0, generation: 0 }, Operation::Curvature, vec![])?;
        }
    }
    Ok((c, samples))
}

/// Curvature algebra at `p`: curvature fields of the coordinate frame closed
/// under brackets.
pub fn generate_curvature_algebra(
    model: &Arc<FinslerModel>,
    p: &[f64],
    opts: &AlgebraOptions,
) -> Result<FieldBasis, AlgebraError> {
    let (mut c, samples) = start(model, p, opts)?;
    let closed = c.run(0, false)?;
    c.finish("curvature_algebra", p, samples, closed)
}

/// Infinitesimal holonomy algebra at `p`: the curvature algebra extended by
/// covariant derivatives along the coordinate frame and further brackets.
///
/// The curvature-algebra closure runs first, so the result always contains
/// the curvature algebra computed with the same options.
pub fn generate_infinitesimal_holonomy(
    model: &Arc<FinslerModel>,
    p: &[f64],
    opts: &AlgebraOptions,
) -> Result<FieldBasis, AlgebraError> {
    let (mut c, samples) = start(model, p, opts)?;
    c.run(0, false)?;
    c.depth_exhausted = false;
    let closed = if c.truncated { false } else { c.run(0, true)? };
    c.finish("infinitesimal_holonomy", p, samples, closed)
}

/// Matrix Lie algebra generated by the curvature operators at `p`.
#[derive(Debug, Clone)]
pub struct MatrixAlgebra {
    pub basis: Vec<DMatrix<f64>>,
    pub labels: Vec<String>,
}

impl MatrixAlgebra {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// Operators `y ↦ R(e_j, e_k)` of a Riemannian model, closed under commutators.
pub fn riemannian_curvature_operator_algebra(
    model: &FinslerModel,
    p: &[f64],
    tol: f64,
) -> Result<MatrixAlgebra, AlgebraError> {
    let a = model.riemannian_metric().ok_or(AlgebraError::NotRiemannian)?;
    model.check_in_chart(p)?;
    let n = model.dim();
    let degenerate = || ModelError::NotPositiveDefinite(format!("Riemannian metric singular at {p:?}"));
    let mut gate = RankGate::new(tol, 1e-12);
    let mut basis: Vec<DMatrix<f64>> = Vec::new();
    let mut labels = Vec::new();
    let flat = |m: &DMatrix<f64>| m.iter().copied().collect::<Vec<f64>>();
    for j in 0..n {
        for k in j + 1..n {
            let mut ej = vec![0.0; n];
            let mut ek = vec![0.0; n];
            ej[j] = 1.0;
            ek[k] = 1.0;
            let op = curvature_operator::<f64>(a, p, &ej, &ek).ok_or_else(degenerate)?;
            let m = DMatrix::from_fn(n, n, |r, c| op[r][c]);
            if gate.offer(flat(&m)) {
                basis.push(m);
                labels.push(format!("R(e{}, e{})", j + 1, k + 1));
            }
        }
    }
    let mut start = 0;
    while start < basis.len() {
        let end = basis.len();
        for i in start..end {
            for j in 0..end {
                if j >= start && j <= i {
                    continue;
                }
                let c = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                if gate.offer(flat(&c)) {
                    labels.push(format!("[{}, {}]", labels[i], labels[j]));
                    basis.push(c);
                }
            }
        }
        start = end;
    }
    Ok(MatrixAlgebra { basis, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_model, ModelSpec};

    fn model(spec: ModelSpec) -> Arc<FinslerModel> {
        Arc::new(builtin_model(&spec).unwrap())
    }

    #[test]
    fn rank_gate_rejects_dependent_columns() {
        let mut g = RankGate::new(1e-8, 1e-12);
        assert!(g.offer(vec![1.0, 2.0, 3.0]));
        assert!(!g.offer(vec![2.0, 4.0, 6.0]));
        assert!(!g.offer(vec![0.0, 1e-15, 0.0]));
        assert!(g.offer(vec![0.0, 1.0, 0.0]));
        assert_eq!(g.rank(), 2);
    }

    #[test]
    fn euclidean_algebras_are_trivial() {
        let m = model(ModelSpec::euclidean(3));
        let b = generate_curvature_algebra(&m, &[0.0; 3], &AlgebraOptions::default()).unwrap();
        assert_eq!(b.rank, 0);
        assert!(b.flags.closed);
        let h = generate_infinitesimal_holonomy(&m, &[0.0; 3], &AlgebraOptions::default()).unwrap();
        assert_eq!(h.rank, 0);
        assert!(h.flags.closed);
    }

    #[test]
    fn sphere_surface() {
        let m = model(ModelSpec::sphere(2, 1.0));
        let b = generate_curvature_algebra(&m, &[0.0, 0.0], &AlgebraOptions::default()).unwrap();
        assert_eq!(b.rank, 1);
        assert!(b.flags.closed);
        let h = generate_infinitesimal_holonomy(&m, &[0.0, 0.0], &AlgebraOptions::default()).unwrap();
        assert_eq!(h.rank, 1);
        assert!(h.flags.closed);
        let ops = riemannian_curvature_operator_algebra(&m, &[0.0, 0.0], 1e-8).unwrap();
        assert_eq!(ops.dim(), 1);
    }

    #[test]
    fn non_riemannian_operator_algebra_is_rejected() {
        let m = builtin_model(&ModelSpec::randers(&["0.2", "0"])).unwrap();
        assert_eq!(
            riemannian_curvature_operator_algebra(&m, &[0.0, 0.0], 1e-8).unwrap_err(),
            AlgebraError::NotRiemannian
        );
    }
}
