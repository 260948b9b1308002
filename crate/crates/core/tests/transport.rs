mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use finhol::fields::{covariant_derivative, curvature_field, IndicatrixField, PolyVectorField};
use finhol::models::{unit_directions, ModelSpec};
use finhol::transport::{
    berwald_translate, berwald_translate_at, commutator_family_experiment, curvature_from_loops, holonomy_algebra_at,
    loop_convergence, loop_transport, parallel_transport, transport_path, CurveSpec, HolonomyOptions, LoopFamily,
    TransportError, TransportOptions,
};

fn tight() -> TransportOptions {
    TransportOptions { rtol: 1e-12, atol: 1e-14, ..TransportOptions::default() }
}

fn pv(v: &[f64]) -> PolyVectorField {
    PolyVectorField::constant(v)
}

/// Deterministic wiggly curves through the chart.
fn curves(n: usize) -> Vec<CurveSpec> {
    (0..6)
        .map(|k| {
            let coords = (0..n)
                .map(|i| {
                    let (a, b) = (0.1 * (k + i) as f64 - 0.3, 0.2 + 0.05 * ((3 * k + i) % 5) as f64);
                    format!("{a} + {b}*t + 0.1*t^2*{}", (k as f64 + i as f64).cos())
                })
                .collect();
            CurveSpec::Parametric { coords }
        })
        .collect()
}

#[test]
fn euclidean_transport_is_identity() {
    let m = model(ModelSpec::euclidean(3));
    for c in curves(3) {
        let y0 = [0.3, -0.4, 1.2];
        let r = parallel_transport(&m, &c, &y0, &tight()).unwrap();
        assert!(max_abs_diff(&r.y_end, &y0) <= 1e-14);
    }
}

#[test]
fn octant_triangle_rotates_by_right_angle() {
    let m = model(ModelSpec::sphere(2, 1.0));
    let tri = CurveSpec::GeodesicTriangle { vertices: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]] };
    for y0 in [[0.5, 0.0], [0.3, 0.4]] {
        let r = parallel_transport(&m, &tri, &y0, &tight()).unwrap();
        // the chart metric at the origin is conformal, so chart angles are metric angles
        let ang = (y0[0] * r.y_end[1] - y0[1] * r.y_end[0]).atan2(y0[0] * r.y_end[0] + y0[1] * r.y_end[1]);
        assert!((ang.abs() - FRAC_PI_2).abs() <= 1e-8, "angle {ang}");
        assert!((norm(&r.y_end) - norm(&y0)).abs() <= 1e-10);
    }
}

#[test]
fn finsler_norm_is_preserved() {
    let opts = TransportOptions { rtol: 1e-9, atol: 1e-12, ..TransportOptions::default() };
    for spec in [ModelSpec::sphere(2, 1.0), curved_randers(), round_randers()] {
        let m = model(spec);
        for (k, c) in curves(2).iter().enumerate() {
            let y0 = m.indicatrix_point(&c.path(2).unwrap().start(), &unit_directions(2, 6, 1)[k]).unwrap();
            let r = parallel_transport(&m, c, &y0, &opts).unwrap();
            assert!(r.f_drift <= 1e-8, "{}: drift {:e}", m.name(), r.f_drift);
            assert!((r.f_start - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn reversed_transport_returns_home() {
    for spec in [ModelSpec::sphere(3, 1.0), ModelSpec::randers(&["0.2", "0.1", "0"])] {
        let m = model(spec);
        for c in curves(3).iter().take(3) {
            let path = c.path(3).unwrap();
            let y0 = [0.4, -0.1, 0.7];
            let fw = transport_path(&m, &path, &y0, &tight()).unwrap();
            let bw = transport_path(&m, &path.reversed(), &fw.y_end, &tight()).unwrap();
            assert!(max_abs_diff(&bw.y_end, &y0) <= 1e-9, "{}", m.name());
        }
    }
}

#[test]
fn riemannian_transport_is_linear_isometry() {
    let m = model(ModelSpec::riemannian_diag(&["1 + x2^2", "2 + x1"]));
    let c = &curves(2)[2];
    let path = c.path(2).unwrap();
    let (p, q) = (path.start(), path.end());
    let (y1, y2) = ([0.6, 0.1], [-0.2, 0.9]);
    let ys = [1.7 * y1[0] - 0.6 * y2[0], 1.7 * y1[1] - 0.6 * y2[1]];
    let t = |y: &[f64]| transport_path(&m, &path, y, &tight()).unwrap().y_end;
    let (a, b, s) = (t(&y1), t(&y2), t(&ys));
    for i in 0..2 {
        assert!((s[i] - 1.7 * a[i] + 0.6 * b[i]).abs() <= 1e-10);
    }
    let g0 = m.fundamental_tensor(&p, &y1).unwrap();
    let g1 = m.fundamental_tensor(&q, &a).unwrap();
    assert!((g0.inner(&y1, &y2) - g1.inner(&a, &b)).abs() <= 1e-10);
}

#[test]
fn small_loops_displace_by_the_curvature_field() {
    for spec in [ModelSpec::sphere(2, 1.0), curved_randers()] {
        let m = model(spec);
        let (p, xv, yv) = ([0.1, 0.2], [1.0, 0.0], [0.0, 1.0]);
        let xi = curvature_field(&m, &pv(&xv), &pv(&yv)).unwrap();
        let h = 2e-3;
        for y in m.indicatrix_sample(&p, 4, 2).unwrap() {
            let r = loop_transport(&m, &p, &xv, &yv, h, h, &y, &tight()).unwrap();
            let disp: Vec<f64> = r.y_end.iter().zip(&y).map(|(a, b)| (a - b) / (h * h)).collect();
            let expect = xi.eval(&p, &y).unwrap();
            let rel = max_abs_diff(&disp, &expect) / norm(&expect);
            assert!(rel <= 5e-3, "{}: {rel:e}", m.name());
        }
        let id = loop_transport(&m, &p, &xv, &yv, 0.0, h, &[0.3, 0.1], &tight()).unwrap();
        assert_eq!(id.y_end, vec![0.3, 0.1]);
    }
}

#[test]
fn loop_estimates_converge_at_second_order() {
    for spec in [ModelSpec::sphere(2, 1.0), round_randers()] {
        let m = model(spec);
        let p = [0.1, -0.2];
        let ys = m.indicatrix_sample(&p, 3, 4).unwrap();
        let (runs, table) =
            loop_convergence(&m, &p, &[1.0, 0.0], &[0.0, 1.0], &[2e-2, 1e-2, 5e-3], &ys, &tight()).unwrap();
        assert!(runs.iter().all(|r| r.warning.is_none()));
        for row in &table.rows[1..] {
            let ratio = row.ratio.unwrap();
            assert!((3.5..=4.5).contains(&ratio), "{}: ratio {ratio}", m.name());
        }
        assert!(runs[2].max_rel_err <= 1e-3);
    }
    let flat = model(ModelSpec::euclidean(2));
    let est =
        curvature_from_loops(&flat, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 1e-2, &[vec![1.0, 0.0]], &tight()).unwrap();
    assert!(est.max_err <= 1e-12);
    let loose = TransportOptions { rtol: 1e-6, ..TransportOptions::default() };
    let m = model(ModelSpec::sphere(2, 1.0));
    let est = curvature_from_loops(&m, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 1e-2, &[vec![0.5, 0.0]], &loose).unwrap();
    assert!(est.warning.is_some());
}

#[test]
fn euclidean_closed_loop_translate_is_identity() {
    let m = model(ModelSpec::euclidean(2));
    let xi = IndicatrixField::linear(&m, vec![vec![0.0, -1.0], vec![1.0, 0.0]], "L").unwrap();
    let lp = CurveSpec::Polyline { points: vec![vec![0.0, 0.0], vec![1.0, 0.3], vec![0.2, 0.8], vec![0.0, 0.0]] };
    let ys = m.indicatrix_sample(&[0.0, 0.0], 5, 0).unwrap();
    for s in berwald_translate(&m, &lp, &xi, &ys, &tight()).unwrap() {
        assert!(max_abs_diff(&s.y_end, &s.y_start) <= 1e-10);
        assert!(max_abs_diff(&s.xi_end, &s.xi_start) <= 1e-10);
    }
}

/// Along the radial geodesic from the chart origin to `(1,0,0)` of the unit
/// 3-sphere, translation is `P = 2·Id` in chart coordinates and curvature is
/// parallel, so `𝐁ξ(y) = r_p(PX, PY)(y)`.
#[test]
fn quarter_circle_translate_on_three_sphere() {
    let m = model(ModelSpec::sphere(3, 1.0));
    let (q, p) = ([0.0; 3], [1.0, 0.0, 0.0]);
    let path = CurveSpec::segment(&q, &p).path(3).unwrap();
    let (xv, yv) = ([0.2, 1.0, 0.0], [0.0, 0.3, 1.0]);
    let xi = curvature_field(&m, &pv(&xv), &pv(&yv)).unwrap();
    let px: Vec<f64> = xv.iter().map(|v| 2.0 * v).collect();
    let py: Vec<f64> = yv.iter().map(|v| 2.0 * v).collect();
    for y in m.indicatrix_sample(&p, 6, 1).unwrap() {
        let got = berwald_translate_at(&m, &path, |yq| Ok(xi.eval(&q, yq)?), &y, &tight()).unwrap();
        let expect = sphere_curvature_field(&p, 1.0, &px, &py, &y);
        assert!(max_abs_diff(&got, &expect) <= 1e-6, "{got:?} vs {expect:?}");
    }
}

/// Translating `ξ` from `p + hX` back to `p` gives `ξ + h ∇_X ξ + O(h²)`.
#[test]
fn berwald_difference_quotient_matches_covariant_derivative() {
    let m = model(curved_randers());
    let (p, xv) = ([0.2, 0.3], [0.6, 0.8]);
    let xi = curvature_field(&m, &pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap();
    let d = covariant_derivative(&xi, &pv(&xv)).unwrap();
    let y = m.indicatrix_point(&p, &[0.3, 1.0]).unwrap();
    let (base, exact) = (xi.eval(&p, &y).unwrap(), d.eval(&p, &y).unwrap());
    let err = |h: f64| {
        let q: Vec<f64> = p.iter().zip(&xv).map(|(a, b)| a + h * b).collect();
        let path = CurveSpec::segment(&q, &p).path(2).unwrap();
        let b = berwald_translate_at(&m, &path, |yq| Ok(xi.eval(&q, yq)?), &y, &tight()).unwrap();
        let dq: Vec<f64> = b.iter().zip(&base).map(|(b, a)| (b - a) / h).collect();
        max_abs_diff(&dq, &exact)
    };
    let (e1, e2) = (err(1e-2), err(5e-3));
    assert!(e2 <= 1e-2 * norm(&exact).max(1.0), "{e2:e}");
    let ratio = e1 / e2;
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn holonomy_algebra_examples() {
    let opts = HolonomyOptions::default();
    let e = model(ModelSpec::euclidean(2));
    let src = [CurveSpec::segment(&[0.5, 0.0], &[0.1, 0.2])];
    assert_eq!(holonomy_algebra_at(&e, &[0.1, 0.2], &src, &opts).unwrap().rank, 0);
    let s = model(ModelSpec::sphere(2, 1.0));
    let b = holonomy_algebra_at(&s, &[0.1, 0.2], &src, &opts).unwrap();
    assert_eq!(b.rank, 1);
    assert_eq!(b.kind, "holonomy_algebra");
    let wrong = [CurveSpec::segment(&[0.5, 0.0], &[0.3, 0.3])];
    assert!(matches!(holonomy_algebra_at(&s, &[0.1, 0.2], &wrong, &opts), Err(TransportError::InvalidCurve(_))));
}

#[test]
fn commutator_of_a_family_with_itself_vanishes() {
    let fam = LoopFamily { x: vec![1.0, 0.0, 0.0], y: vec![0.0, 1.0, 0.0] };
    let s = model(ModelSpec::sphere(3, 1.0));
    let ys = vec![s.indicatrix_point(&[0.0; 3], &[0.3, 0.5, 0.8]).unwrap()];
    let est = commutator_family_experiment(&s, &[0.0; 3], &fam, &fam, 0.1, &ys, &TransportOptions::default()).unwrap();
    assert!(est.max_err <= 1e-8, "{:e}", est.max_err);
    let e = model(ModelSpec::euclidean(3));
    let other = LoopFamily { x: vec![0.0, 0.0, 1.0], y: vec![1.0, 0.0, 0.0] };
    let est = commutator_family_experiment(
        &e,
        &[0.0; 3],
        &fam,
        &other,
        0.1,
        &[vec![1.0, 0.0, 0.0]],
        &TransportOptions::default(),
    )
    .unwrap();
    assert!(est.max_err <= 1e-12);
}

#[test]
fn bad_curves_are_rejected() {
    let m = model(ModelSpec::sphere(2, 1.0));
    let bad = [
        CurveSpec::Parametric { coords: vec!["x1 + t".into(), "t".into()] },
        CurveSpec::Parametric { coords: vec!["t".into()] },
        CurveSpec::Polyline { points: vec![vec![0.0, 0.0]] },
        CurveSpec::GeodesicTriangle { vertices: vec![vec![0.0, 0.0], vec![1.0, 0.0]] },
    ];
    for c in bad {
        assert!(
            matches!(parallel_transport(&m, &c, &[1.0, 0.0], &tight()), Err(TransportError::InvalidCurve(_))),
            "{c:?}"
        );
    }
}
