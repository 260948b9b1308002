//! Subcommand implementations. Each fills `report.results` and returns an
//! error only on precondition violations; flagged results are not errors.

use std::sync::Arc;
use std::time::Instant;

use finhol::algebra::{
    generate_curvature_algebra, generate_infinitesimal_holonomy, riemannian_curvature_operator_algebra, BasisSummary,
    FieldBasis,
};
use finhol::fields::{curvature_field, PolyVectorField};
use finhol::geometry::connection_eval;
use finhol::linalg::min_eigenvalue;
use finhol::models::{unit_directions, FinslerModel};
use finhol::riemann::riemann_tensor;
use finhol::transport::{
    berwald_translate, commutator_family_experiment, holonomy_algebra_at, loop_convergence, parallel_transport,
    transport_path, ConvergenceTable, CurveSpec, LoopEstimate, TranslatedSample, TransportResult,
};
use serde::Serialize;

use crate::config::{AlgebraKind, ExperimentConfig, TransportRun};
use crate::error::CliError;
use crate::report::Report;

/// Tolerance for the Levi-Civita cross-check of Riemannian models.
const ORACLE_TOL: f64 = 1e-9;

pub struct Ctx<'a> {
    pub model: Arc<FinslerModel>,
    pub config: &'a ExperimentConfig,
    pub verbose: bool,
}

impl Ctx<'_> {
    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[finhol] {msg}");
        }
    }
}

fn timed<T>(
    report: &mut Report,
    stage: &str,
    f: impl FnOnce(&mut Report) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let t = Instant::now();
    let out = f(report);
    *report.timings.entry(stage.to_string()).or_insert(0.0) += t.elapsed().as_secs_f64();
    out
}

#[derive(Serialize)]
struct Evaluation {
    y: Vec<f64>,
    f: f64,
    g: Vec<Vec<f64>>,
    g_inv: Vec<Vec<f64>>,
    spray: Vec<f64>,
    gj: Vec<Vec<f64>>,
    gjk: Vec<Vec<Vec<f64>>>,
    r: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct Validation {
    samples: usize,
    min_eigenvalue: f64,
    max_homogeneity_residual: f64,
}

#[derive(Serialize)]
struct OracleCheck {
    max_abs_residual: f64,
    tolerance: f64,
    ok: bool,
}

#[derive(Serialize)]
struct InspectPoint {
    x: Vec<f64>,
    validation: Validation,
    evaluations: Vec<Evaluation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    riemannian_oracle: Option<OracleCheck>,
}

pub fn inspect(ctx: &Ctx, report: &mut Report) -> Result<(), CliError> {
    let cfg = ctx.config.inspect.as_ref().expect("resolved");
    let m = &ctx.model;
    let n = m.dim();
    let mut out = Vec::new();
    let start = Instant::now();
    for x in &cfg.points {
        ctx.log(&format!("inspect at {x:?}"));
        m.check_in_chart(x)?;
        let mut min_eig = f64::INFINITY;
        let mut hom: f64 = 0.0;
        for u in unit_directions(n, cfg.validation_samples, ctx.config.seed) {
            let me = m.fundamental_tensor(x, &u)?;
            min_eig = min_eig.min(min_eigenvalue(&me.g));
            let f1 = m.f64_value(x, &u);
            let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
            hom = hom.max((m.f64_value(x, &u2) - 2.0 * f1).abs() / (2.0 * f1));
        }
        let ys = if cfg.directions.is_empty() {
            m.indicatrix_sample(x, cfg.samples, ctx.config.seed)?
        } else {
            cfg.directions.clone()
        };
        let oracle_r = m.riemannian_metric().and_then(|a| riemann_tensor::<f64>(a, x));
        let mut worst: f64 = 0.0;
        let mut evaluations = Vec::new();
        for y in ys {
            let me = m.fundamental_tensor(x, &y)?;
            let c = connection_eval(m, x, &y)?;
            if let Some(r4) = &oracle_r {
                for (i, ri) in c.r.iter().enumerate() {
                    for (j, rij) in ri.iter().enumerate() {
                        for (k, v) in rij.iter().enumerate() {
                            let expect: f64 = (0..n).map(|l| r4[i][l][k][j] * y[l]).sum();
                            worst = worst.max((v - expect).abs());
                        }
                    }
                }
            }
            evaluations.push(Evaluation {
                f: m.f64_value(x, &y),
                y,
                g: me.g,
                g_inv: me.g_inv,
                spray: c.g,
                gj: c.gj,
                gjk: c.gjk,
                r: c.r,
            });
        }
        let riemannian_oracle =
            oracle_r.map(|_| OracleCheck { max_abs_residual: worst, tolerance: ORACLE_TOL, ok: worst <= ORACLE_TOL });
        if riemannian_oracle.as_ref().is_some_and(|o| !o.ok) {
            report.warnings.push(format!("curvature differs from the Levi-Civita oracle at {x:?} by {worst:e}"));
        }
        out.push(InspectPoint {
            x: x.clone(),
            validation: Validation {
                samples: cfg.validation_samples,
                min_eigenvalue: min_eig,
                max_homogeneity_residual: hom,
            },
            evaluations,
            riemannian_oracle,
        });
    }
    report.timings.insert("inspect".into(), start.elapsed().as_secs_f64());
    report.insert("inspect", &out);
    Ok(())
}

#[derive(Serialize)]
struct AlgebraEntry {
    point: Vec<f64>,
    kind: AlgebraKind,
    basis: BasisSummary,
    /// Dimension of the matrix algebra of curvature operators (Riemannian models).
    #[serde(skip_serializing_if = "Option::is_none")]
    operator_algebra_dim: Option<usize>,
}

fn flag_warnings(report: &mut Report, b: &FieldBasis) {
    let where_ = format!("{} at {:?}", b.kind, b.base_point);
    let f = &b.flags;
    if f.truncated {
        report.warnings.push(format!("{where_}: field budget exhausted, rank is a lower bound"));
    }
    if f.depth_exhausted {
        report.warnings.push(format!("{where_}: depth budget exhausted before closure"));
    }
    if f.saturated {
        report.warnings.push(format!("{where_}: rank saturated the sample count, rank is a lower bound"));
    }
    if f.ill_conditioned {
        report.warnings.push(format!("{where_}: rank changed when doubling samples"));
    }
}

pub fn algebra(ctx: &Ctx, report: &mut Report) -> Result<(), CliError> {
    let cfg = ctx.config.algebra.as_ref().expect("resolved");
    let mut out = Vec::new();
    for (pi, p) in cfg.points.iter().enumerate() {
        for &kind in &cfg.kinds {
            ctx.log(&format!("{} algebra at {p:?}", kind.as_str()));
            let b = timed(report, &format!("algebra.{pi}.{}", kind.as_str()), |_| {
                Ok(match kind {
                    AlgebraKind::Curvature => generate_curvature_algebra(&ctx.model, p, &cfg.options)?,
                    AlgebraKind::InfinitesimalHolonomy => generate_infinitesimal_holonomy(&ctx.model, p, &cfg.options)?,
                })
            })?;
            flag_warnings(report, &b);
            let operator_algebra_dim = match (kind, ctx.model.is_riemannian()) {
                (AlgebraKind::Curvature, true) => {
                    Some(riemannian_curvature_operator_algebra(&ctx.model, p, cfg.options.tol)?.dim())
                }
                _ => None,
            };
            out.push(AlgebraEntry { point: p.clone(), kind, basis: b.summary(), operator_algebra_dim });
        }
    }
    report.insert("algebra", &out);
    Ok(())
}

#[derive(Serialize)]
struct TransportEntry {
    y0: Vec<f64>,
    result: TransportResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    reverse_residual: Option<f64>,
}

#[derive(Serialize)]
struct TransportRunReport {
    curve: CurveSpec,
    transports: Vec<TransportEntry>,
}

fn start_vectors(ctx: &Ctx, run: &TransportRun, count: usize) -> Result<Vec<Vec<f64>>, CliError> {
    match &run.y0 {
        Some(ys) => Ok(ys.clone()),
        None => {
            let start = run.curve.path(ctx.model.dim())?.start();
            Ok(ctx.model.indicatrix_sample(&start, count, ctx.config.seed)?)
        }
    }
}

pub fn transport(ctx: &Ctx, report: &mut Report) -> Result<(), CliError> {
    let cfg = ctx.config.transport.as_ref().expect("resolved");
    let mut out = Vec::new();
    for (k, run) in cfg.runs.iter().enumerate() {
        ctx.log(&format!("transport run {k}"));
        let path = run.curve.path(ctx.model.dim())?;
        let mut transports = Vec::new();
        for y0 in start_vectors(ctx, run, cfg.samples)? {
            let result = timed(report, &format!("transport.{k}"), |_| {
                Ok(parallel_transport(&ctx.model, &run.curve, &y0, &cfg.options)?)
            })?;
            let reverse_residual = if cfg.check_reverse {
                let back = transport_path(&ctx.model, &path.reversed(), &result.y_end, &cfg.options)?;
                Some(back.y_end.iter().zip(&y0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            } else {
                None
            };
            transports.push(TransportEntry { y0, result, reverse_residual });
        }
        out.push(TransportRunReport { curve: run.curve.clone(), transports });
    }
    report.insert("transport", &out);
    Ok(())
}

#[derive(Serialize)]
struct AngleEntry {
    curve: CurveSpec,
    y0: Vec<f64>,
    y_end: Vec<f64>,
    /// Rotation from `y0` to `y_end` measured in `g` at the start (signed for surfaces).
    angle: f64,
    f_drift: f64,
}

#[derive(Serialize)]
struct TranslateEntry {
    curve: CurveSpec,
    field: String,
    samples: Vec<TranslatedSample>,
}

#[derive(Serialize)]
struct HolonomyAlgebraEntry {
    curvature_rank: usize,
    infinitesimal_rank: usize,
    basis: BasisSummary,
}

#[derive(Serialize)]
struct ExperimentRuns {
    runs: Vec<LoopEstimate>,
    table: ConvergenceTable,
}

fn rotation_angle(model: &FinslerModel, x: &[f64], y0: &[f64], y1: &[f64]) -> Result<f64, CliError> {
    let me = model.fundamental_tensor(x, y0)?;
    let dot = me.inner(y0, y1);
    if y0.len() == 2 {
        let det = (me.g[0][0] * me.g[1][1] - me.g[0][1] * me.g[1][0]).sqrt();
        let cross = det * (y0[0] * y1[1] - y0[1] * y1[0]);
        Ok(cross.atan2(dot))
    } else {
        let c = dot / (me.inner(y0, y0) * me.inner(y1, y1)).sqrt();
        Ok(c.clamp(-1.0, 1.0).acos())
    }
}

pub fn holonomy(ctx: &Ctx, report: &mut Report) -> Result<(), CliError> {
    let cfg = ctx.config.holonomy.as_ref().expect("resolved");
    let m = &ctx.model;
    let seed = ctx.config.seed;
    let ys = m.indicatrix_sample(&cfg.p, cfg.samples, seed)?;
    report.insert("samples", &ys);

    if !cfg.angles.is_empty() {
        let mut out = Vec::new();
        for (k, run) in cfg.angles.iter().enumerate() {
            ctx.log(&format!("holonomy angle run {k}"));
            let start = run.curve.path(m.dim())?.start();
            for y0 in start_vectors(ctx, run, cfg.samples)? {
                let r = timed(report, &format!("holonomy.angles.{k}"), |_| {
                    Ok(parallel_transport(m, &run.curve, &y0, &cfg.transport)?)
                })?;
                let angle = rotation_angle(m, &start, &y0, &r.y_end)?;
                out.push(AngleEntry { curve: run.curve.clone(), y0, y_end: r.y_end, angle, f_drift: r.f_drift });
            }
        }
        report.insert("angles", &out);
    }

    if let Some(l) = &cfg.loops {
        ctx.log("loop-curvature convergence");
        let (runs, table) = timed(report, "holonomy.loops", |_| {
            Ok(loop_convergence(m, &cfg.p, &l.x, &l.y, &l.h, &ys, &cfg.transport)?)
        })?;
        report.warnings.extend(runs.iter().filter_map(|r| r.warning.clone()));
        report.tables.insert("loops".into(), table.clone());
        report.insert("loops", &ExperimentRuns { runs, table });
    }

    if !cfg.translates.is_empty() {
        let mut out = Vec::new();
        for (k, t) in cfg.translates.iter().enumerate() {
            ctx.log(&format!("Berwald translate {k}"));
            let xi = curvature_field(m, &PolyVectorField::constant(&t.x), &PolyVectorField::constant(&t.y))?;
            let q = t.curve.path(m.dim())?.start();
            let yq = m.indicatrix_sample(&q, cfg.samples, seed)?;
            let samples = timed(report, &format!("holonomy.translates.{k}"), |_| {
                Ok(berwald_translate(m, &t.curve, &xi, &yq, &cfg.transport)?)
            })?;
            out.push(TranslateEntry { curve: t.curve.clone(), field: xi.label().to_string(), samples });
        }
        report.insert("translates", &out);
    }

    if let Some(a) = &cfg.algebra {
        ctx.log("holonomy algebra");
        let entry = timed(report, "holonomy.algebra", |_| {
            let curvature = generate_curvature_algebra(m, &cfg.p, &a.options.algebra)?;
            let basis = holonomy_algebra_at(m, &cfg.p, &a.sources, &a.options)?;
            let inf = generate_infinitesimal_holonomy(m, &cfg.p, &a.options.algebra)?;
            Ok((curvature.rank, inf.rank, basis))
        })?;
        flag_warnings(report, &entry.2);
        report.insert(
            "holonomy_algebra",
            &HolonomyAlgebraEntry { curvature_rank: entry.0, infinitesimal_rank: entry.1, basis: entry.2.summary() },
        );
    }

    if let Some(c) = &cfg.commutator {
        ctx.log("commutator family experiment");
        let runs = timed(report, "holonomy.commutator", |_| {
            c.h.iter()
                .map(|&h| Ok(commutator_family_experiment(m, &cfg.p, &c.xi, &c.eta, h, &ys, &cfg.transport)?))
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        report.warnings.extend(runs.iter().filter_map(|r| r.warning.clone()));
        let table = ConvergenceTable::from_errors(&runs.iter().map(|r| (r.h, r.max_rel_err)).collect::<Vec<_>>());
        report.tables.insert("commutator".into(), table.clone());
        report.insert("commutator", &ExperimentRuns { runs, table });
    }
    Ok(())
}
