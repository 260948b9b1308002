mod common;

use common::*;
use finhol::algebra::{
    generate_curvature_algebra, generate_infinitesimal_holonomy, riemannian_curvature_operator_algebra, AlgebraError,
    AlgebraOptions,
};
use finhol::linalg::numerical_rank;
use finhol::models::ModelSpec;
use nalgebra::DMatrix;

fn opts() -> AlgebraOptions {
    AlgebraOptions { seed: 3, ..AlgebraOptions::default() }
}

#[test]
fn numerical_rank_examples() {
    let id = DMatrix::<f64>::identity(3, 3);
    assert_eq!(numerical_rank(&id, 1e-8).0, 3);
    let mut m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
    assert_eq!(numerical_rank(&m, 1e-8).0, 1);
    m[(0, 1)] += 1e-6;
    let (rank, sv) = numerical_rank(&m, 1e-8);
    assert_eq!(rank, 2);
    assert!(sv[0] >= sv[1]);
    assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(4, 2), 1e-8).0, 0);
}

#[test]
fn flat_space_has_trivial_algebras() {
    for spec in [ModelSpec::euclidean(3), ModelSpec::randers(&["0.3", "0"])] {
        let m = model(spec);
        let p = vec![0.1; m.dim()];
        let c = generate_curvature_algebra(&m, &p, &opts()).unwrap();
        let h = generate_infinitesimal_holonomy(&m, &p, &opts()).unwrap();
        assert_eq!((c.rank, h.rank), (0, 0), "{}", m.name());
        assert!(c.flags.closed && h.flags.closed);
    }
}

#[test]
fn surfaces_have_rank_at_most_one() {
    for spec in
        [ModelSpec::sphere(2, 1.0), ModelSpec::riemannian_diag(&["1", "x1^2 + 1"]), curved_randers(), round_randers()]
    {
        let m = model(spec);
        let c = generate_curvature_algebra(&m, &[0.2, 0.3], &opts()).unwrap();
        assert!(c.rank <= 1, "{}: {}", m.name(), c.rank);
    }
}

#[test]
fn sphere_algebras() {
    let s2 = model(ModelSpec::sphere(2, 1.0));
    let h = generate_infinitesimal_holonomy(&s2, &[0.0, 0.0], &opts()).unwrap();
    assert_eq!(h.rank, 1);
    assert!(h.flags.closed && !h.flags.truncated);

    let s3 = model(ModelSpec::sphere(3, 1.0));
    let c = generate_curvature_algebra(&s3, &[0.1, 0.0, -0.2], &opts()).unwrap();
    assert_eq!(c.rank, 3);
    assert!(c.flags.closed);
    assert_eq!(c.doubled_rank, Some(3));
    assert!(!c.flags.ill_conditioned);
    assert!(c.condition_number.is_finite());
    assert_eq!(c.labels.len(), c.eval_matrix.ncols());
    assert_eq!(c.eval_matrix.nrows(), c.samples.len() * 3);
}

#[test]
fn riemannian_rank_matches_operator_algebra() {
    for spec in
        [ModelSpec::sphere(3, 1.0), ModelSpec::sphere(2, 2.0), ModelSpec::riemannian_diag(&["1 + x2^2", "2 + x1"])]
    {
        let m = model(spec);
        let p = vec![0.15; m.dim()];
        let c = generate_curvature_algebra(&m, &p, &opts()).unwrap();
        let ops = riemannian_curvature_operator_algebra(&m, &p, 1e-8).unwrap();
        assert_eq!(c.rank, ops.dim(), "{}", m.name());
    }
    let r = model(curved_randers());
    assert!(matches!(riemannian_curvature_operator_algebra(&r, &[0.0, 0.0], 1e-8), Err(AlgebraError::NotRiemannian)));
}

#[test]
fn holonomy_contains_curvature_algebra() {
    for spec in [curved_randers(), round_randers(), ModelSpec::sphere(2, 1.0)] {
        let m = model(spec);
        let p = [0.3, -0.2];
        let c = generate_curvature_algebra(&m, &p, &opts()).unwrap();
        let h = generate_infinitesimal_holonomy(&m, &p, &opts()).unwrap();
        assert!(h.rank >= c.rank);
        if c.rank > 0 {
            let res = h.contains_span_of(&c, 1e-8);
            assert!(res <= 1e-8, "{}: {res:e}", m.name());
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let m = model(curved_randers());
    let a = generate_infinitesimal_holonomy(&m, &[0.1, 0.4], &opts()).unwrap();
    let b = generate_infinitesimal_holonomy(&m, &[0.1, 0.4], &opts()).unwrap();
    assert_eq!(a.summary(), b.summary());
    assert_eq!(a.labels, b.labels);
}

#[test]
fn generation_log_tracks_rank() {
    let m = model(ModelSpec::sphere(3, 1.0));
    let c = generate_curvature_algebra(&m, &[0.0; 3], &opts()).unwrap();
    let ranks: Vec<usize> = c.generation_log.iter().map(|g| g.rank_after).collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*ranks.last().unwrap(), c.rank);
    for rec in &c.generation_log {
        assert!(rec.parents.iter().all(|&i| i < c.labels.len()));
    }
}

#[test]
fn truncation_and_validation() {
    let m = model(ModelSpec::sphere(3, 1.0));
    let small = AlgebraOptions { max_fields: 2, ..opts() };
    let c = generate_curvature_algebra(&m, &[0.0; 3], &small).unwrap();
    assert!(c.flags.truncated && !c.flags.closed);
    assert!(c.rank <= 2);
    let bad = AlgebraOptions { tol: 2.0, ..opts() };
    assert!(matches!(generate_curvature_algebra(&m, &[0.0; 3], &bad), Err(AlgebraError::InvalidOptions(_))));
}
