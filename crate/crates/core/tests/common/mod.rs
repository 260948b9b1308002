//! Independent oracles shared by the integration tests. None of these use the
//! jet engine: they rely on closed forms or on finite differences of plain
//! `f64` evaluations.
#![allow(dead_code)]

use std::sync::Arc;

use finhol::fields::IndicatrixField;
use finhol::geometry::connection_eval;
use finhol::models::{builtin_model, FinslerModel, ModelSpec};
use finhol::ode::{integrate, OdeError, OdeOptions};

pub fn model(spec: ModelSpec) -> Arc<FinslerModel> {
    Arc::new(builtin_model(&spec).expect("valid model"))
}

/// Finsler surfaces and 3-manifolds used across the suites.
pub fn curved_randers() -> ModelSpec {
    ModelSpec::randers(&["0.3*(1 + 0.1*x2^2)", "0"]).named("curved_randers")
}

pub fn round_randers() -> ModelSpec {
    ModelSpec::randers(&["0.3", "0"]).with_conformal("2/(1 + x1^2 + x2^2)").named("round_randers")
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// `½ ∂²F²/∂y^i∂y^j` by central differences with one Richardson step.
pub fn fd_fundamental_tensor(m: &FinslerModel, x: &[f64], y: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = y.len();
    let f2 = |y: &[f64]| m.f64_value(x, y).powi(2);
    let second = |i: usize, j: usize, h: f64| {
        let at = |si: f64, sj: f64| {
            let mut yy = y.to_vec();
            yy[i] += si * h;
            yy[j] += sj * h;
            f2(&yy)
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
    };
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let (a, b) = (second(i, j, h), second(i, j, h / 2.0));
                    0.5 * (4.0 * b - a) / 3.0
                })
                .collect()
        })
        .collect()
}

/// Christoffel symbols `Γ^k_ij` of the conformal metric `e^{2φ} δ` with
/// `φ = ln(2r) − ln(1 + |x|²)` (round sphere of radius `r` in stereographic
/// coordinates).
pub fn stereographic_christoffel(x: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let n = x.len();
    let s: f64 = x.iter().map(|v| v * v).sum();
    let dphi: Vec<f64> = x.iter().map(|v| -2.0 * v / (1.0 + s)).collect();
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    (0..n)
        .map(|k| {
            (0..n)
                .map(|i| (0..n).map(|j| d(i, k) * dphi[j] + d(j, k) * dphi[i] - d(i, j) * dphi[k]).collect())
                .collect()
        })
        .collect()
}

/// Conformal factor `g = λ² δ` of the round sphere of radius `r`.
pub fn sphere_lambda2(x: &[f64], r: f64) -> f64 {
    let s: f64 = x.iter().map(|v| v * v).sum();
    4.0 * r * r / (1.0 + s).powi(2)
}

/// `r(X,Y)(y) = K (⟨X,y⟩ Y − ⟨Y,y⟩ X)` for the round sphere, `K = 1/r²`.
pub fn sphere_curvature_field(x: &[f64], r: f64, xv: &[f64], yv: &[f64], y: &[f64]) -> Vec<f64> {
    let l2 = sphere_lambda2(x, r);
    let k = 1.0 / (r * r);
    let ip = |a: &[f64], b: &[f64]| l2 * a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
    let (a, b) = (ip(xv, y), ip(yv, y));
    (0..y.len()).map(|i| k * (a * yv[i] - b * xv[i])).collect()
}

/// `R^i_jk = ∂G^i_j/∂x^k − ∂G^i_k/∂x^j + G^m_j G^i_km − G^m_k G^i_jm` with the
/// x-derivatives replaced by Richardson-extrapolated central differences of
/// point evaluations of `G^i_j`.
pub fn fd_curvature(m: &FinslerModel, x: &[f64], y: &[f64], h: f64) -> Vec<Vec<Vec<f64>>> {
    let n = x.len();
    let gj_at = |k: usize, s: f64| {
        let mut xx = x.to_vec();
        xx[k] += s;
        connection_eval(m, &xx, y).unwrap().gj
    };
    let dgj = |i: usize, j: usize, k: usize| {
        let d = |h: f64| (gj_at(k, h)[i][j] - gj_at(k, -h)[i][j]) / (2.0 * h);
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    };
    let c = connection_eval(m, x, y).unwrap();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            let mut v = dgj(i, j, k) - dgj(i, k, j);
                            for mm in 0..n {
                                v += c.gj[mm][j] * c.gjk[i][k][mm] - c.gj[mm][k] * c.gjk[i][j][mm];
                            }
                            v
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn tight() -> OdeOptions {
    OdeOptions { rtol: 1e-13, atol: 1e-15, ..OdeOptions::default() }
}

/// Flow of the horizontal lift of the constant field `X` for time `t`:
/// `ẋ = X`, `ẏ^k = −G^k_i(x, y) X^i`.
pub fn horizontal_flow(m: &FinslerModel, xv: &[f64], t: f64, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let f = |s: f64, yy: &[f64]| -> Result<Vec<f64>, OdeError> {
        let xs: Vec<f64> = (0..n).map(|i| x[i] + s * t * xv[i]).collect();
        let c = connection_eval(m, &xs, yy).expect("regular point");
        Ok((0..n).map(|k| -t * (0..n).map(|i| c.gj[k][i] * xv[i]).sum::<f64>()).collect())
    };
    let (y1, _) = integrate(f, 0.0, 1.0, y, &tight()).unwrap();
    ((0..n).map(|i| x[i] + t * xv[i]).collect(), y1)
}

/// Flow of the vertical field `ξ` for time `t` at fixed `x`.
pub fn vertical_flow(xi: &IndicatrixField, t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    let f = |_: f64, yy: &[f64]| -> Result<Vec<f64>, OdeError> {
        Ok(xi.eval(x, yy).expect("regular point").into_iter().map(|v| t * v).collect())
    };
    integrate(f, 0.0, 1.0, y, &tight()).unwrap().0
}

/// `[X^h, ξ]` at `(x, y)` from the flow commutator
/// `Φ^ξ_{−h} Φ^X_{−h} Φ^ξ_h Φ^X_h`, symmetrised in `h` to cancel the cubic
/// term. Returns `(x-part, y-part)`.
pub fn flow_commutator(
    m: &FinslerModel,
    xv: &[f64],
    xi: &IndicatrixField,
    x: &[f64],
    y: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let once = |h: f64| {
        let (x1, y1) = horizontal_flow(m, xv, h, x, y);
        let y2 = vertical_flow(xi, h, &x1, &y1);
        let (x3, y3) = horizontal_flow(m, xv, -h, &x1, &y2);
        let y4 = vertical_flow(xi, -h, &x3, &y3);
        let dx: Vec<f64> = (0..n).map(|i| x3[i] - x[i]).collect();
        let dy: Vec<f64> = (0..n).map(|i| y4[i] - y[i]).collect();
        (dx, dy)
    };
    let (a, b) = (once(h), once(-h));
    let avg = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(u, v)| (u + v) / (2.0 * h * h)).collect::<Vec<f64>>();
    (avg(&a.0, &b.0), avg(&a.1, &b.1))
}
