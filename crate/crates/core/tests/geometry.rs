mod common;

use common::*;
use finhol::geometry::{connection_eval, horizontal_lift, spray_coeffs};
use finhol::models::{builtin_model, unit_directions, ModelSpec};

fn x_for(n: usize, k: usize) -> Vec<f64> {
    (0..n).map(|i| 0.35 * ((i + 2 * k) as f64).sin()).collect()
}

#[test]
fn flat_models_have_no_connection() {
    for spec in [ModelSpec::euclidean(3), ModelSpec::riemannian_diag(&["2", "3"])] {
        let m = builtin_model(&spec).unwrap();
        let n = m.dim();
        for (k, y) in unit_directions(n, 10, 2).into_iter().enumerate() {
            let c = connection_eval(&m, &x_for(n, k), &y).unwrap();
            let all = [c.g.clone(), c.gj.concat(), c.gjk.concat().concat(), c.r.concat().concat()].concat();
            assert!(all.iter().all(|v| v.abs() <= 1e-12));
            let lift = horizontal_lift(&c, &[1.0, -2.0, 0.5][..n]);
            assert_eq!(&lift[..n], &[1.0, -2.0, 0.5][..n]);
            assert!(lift[n..].iter().all(|v| v.abs() <= 1e-12));
        }
    }
}

#[test]
fn minkowski_norm_is_flat() {
    let m = builtin_model(&ModelSpec::custom(2, "(y1^4 + y2^4 + y1^2*y2^2)^(1/4)")).unwrap();
    for y in unit_directions(2, 6, 1) {
        let c = connection_eval(&m, &[0.2, 0.1], &y).unwrap();
        assert!(c.r.concat().concat().iter().all(|v| v.abs() <= 1e-12));
    }
}

#[test]
fn sphere_spray_matches_christoffel_oracle() {
    let m = builtin_model(&ModelSpec::sphere(2, 1.0)).unwrap();
    for (x, y) in [([0.0, 0.0], [1.0, 0.0]), ([0.4, -0.3], [0.2, 0.7])] {
        let gam = stereographic_christoffel(&x);
        let g = spray_coeffs(&m, &x, &y).unwrap();
        let c = connection_eval(&m, &x, &y).unwrap();
        for i in 0..2 {
            let mut expect = 0.0;
            for j in 0..2 {
                for k in 0..2 {
                    expect += 0.5 * gam[i][j][k] * y[j] * y[k];
                }
            }
            assert!((g[i] - expect).abs() <= 1e-9);
            let xv = [0.3, -1.1];
            let lift = horizontal_lift(&c, &xv);
            let lin: f64 = (0..2).map(|a| (0..2).map(|b| gam[i][a][b] * y[b] * xv[a]).sum::<f64>()).sum();
            assert!((lift[2 + i] + lin).abs() <= 1e-9);
        }
    }
}

#[test]
fn sphere_curvature_matches_constant_curvature_oracle() {
    for (n, r) in [(2, 1.0), (3, 1.0), (3, 0.5)] {
        let m = builtin_model(&ModelSpec::sphere(n, r)).unwrap();
        for (k, y) in unit_directions(n, 5, 3).into_iter().enumerate() {
            let x = x_for(n, k);
            let c = connection_eval(&m, &x, &y).unwrap();
            for a in 0..n {
                for b in 0..n {
                    let (mut ea, mut eb) = (vec![0.0; n], vec![0.0; n]);
                    ea[a] = 1.0;
                    eb[b] = 1.0;
                    let expect = sphere_curvature_field(&x, r, &ea, &eb, &y);
                    let got = c.curvature_vector(&ea, &eb);
                    assert!(max_abs_diff(&got, &expect) <= 1e-9 * (1.0 / (r * r)), "n={n} r={r}");
                }
            }
        }
    }
}

#[test]
fn randers_curvature_matches_finite_difference_oracle() {
    for spec in [ModelSpec::randers(&["0.3", "0"]), curved_randers(), round_randers()] {
        let m = builtin_model(&spec).unwrap();
        for y in unit_directions(2, 4, 5) {
            let x = [0.3, 0.7];
            let c = connection_eval(&m, &x, &y).unwrap();
            let fd = fd_curvature(&m, &x, &y, 1e-4);
            let d = max_abs_diff(&c.r.concat().concat(), &fd.concat().concat());
            assert!(d <= 1e-6, "{}: {d:e}", m.name());
        }
    }
}

#[test]
fn symmetries_and_homogeneity_ladder() {
    for spec in
        [ModelSpec::sphere(3, 1.0), curved_randers(), round_randers(), ModelSpec::riemannian_diag(&["1", "x1^2 + 1"])]
    {
        let m = builtin_model(&spec).unwrap();
        let n = m.dim();
        for (k, y) in unit_directions(n, 6, 8).into_iter().enumerate() {
            let x = x_for(n, k);
            let c = connection_eval(&m, &x, &y).unwrap();
            for lam in [0.5, 2.0] {
                let yl: Vec<f64> = y.iter().map(|v| lam * v).collect();
                let cl = connection_eval(&m, &x, &yl).unwrap();
                for i in 0..n {
                    assert!((cl.g[i] - lam * lam * c.g[i]).abs() <= 1e-10 * (1.0 + c.g[i].abs()));
                    for j in 0..n {
                        assert!((cl.gj[i][j] - lam * c.gj[i][j]).abs() <= 1e-10 * (1.0 + c.gj[i][j].abs()));
                        for l in 0..n {
                            assert!((cl.gjk[i][j][l] - c.gjk[i][j][l]).abs() <= 1e-10 * (1.0 + c.gjk[i][j][l].abs()));
                            assert!((c.gjk[i][j][l] - c.gjk[i][l][j]).abs() <= 1e-10);
                            assert!((c.r[i][j][l] + c.r[i][l][j]).abs() <= 1e-10);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn riemannian_curvature_is_linear_in_y() {
    let m = builtin_model(&ModelSpec::riemannian_diag(&["1 + x2^2", "2 + x1"])).unwrap();
    let x = [0.3, -0.2];
    let (y1, y2) = ([0.6, 0.1], [-0.2, 0.9]);
    let (a, b) = (1.7, -0.6);
    let ys: Vec<f64> = (0..2).map(|i| a * y1[i] + b * y2[i]).collect();
    let r = |y: &[f64]| connection_eval(&m, &x, y).unwrap().r.concat().concat();
    let (r1, r2, rs) = (r(&y1), r(&y2), r(&ys));
    for k in 0..r1.len() {
        assert!((rs[k] - a * r1[k] - b * r2[k]).abs() <= 1e-9);
    }
}

#[test]
fn degenerate_points_are_reported() {
    let m = builtin_model(&ModelSpec::custom(2, "sqrt(y1^2 + x1^2*y2^2)")).unwrap();
    let err = connection_eval(&m, &[0.0, 0.0], &[1.0, 0.5]).unwrap_err();
    assert!(err.is_degeneracy(), "{err}");
}

#[test]
fn spray_is_generic_over_precision() {
    use finhol::geometry::spray;
    let m = builtin_model(&round_randers()).unwrap();
    let (x, y) = ([0.3, -0.2], [0.8, 0.5]);
    let g64 = spray::<f64>(&m, &x, &y).unwrap();
    let g32 = spray::<f32>(&m, &[0.3f32, -0.2], &[0.8f32, 0.5]).unwrap();
    for (a, b) in g32.iter().zip(&g64) {
        assert!((*a as f64 - b).abs() <= 1e-5 * b.abs().max(1.0));
    }
}
