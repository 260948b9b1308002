//! Geodesic spray, nonlinear connection, Berwald coefficients and the
//! Riemannian curvature tensor of a Finsler model.
//!
//! Index conventions: `gj[i][j] = G^i_j`, `gjk[i][j][k] = G^i_jk`,
//! `r[i][j][k] = R^i_jk`.

use crate::jets::Jet;
use crate::linalg::{invert, is_positive_definite, min_eigenvalue};
use crate::models::{FinslerModel, ModelError};
use crate::scalar::Scalar;

/// Point-evaluated connection data at `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionEval {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<f64>,
    pub gj: Vec<Vec<f64>>,
    pub gjk: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<Vec<f64>>>,
}

impl ConnectionEval {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `R^i_jk X^j Y^k`
    pub fn curvature_vector(&self, xv: &[f64], yv: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        s += self.r[i][j][k] * xv[j] * yv[k];
                    }
                }
                s
            })
            .collect()
    }
}

fn degenerate(x: &[f64], y: &[f64], g: &[Vec<f64>]) -> ModelError {
    let min = if g.iter().flatten().all(|v| v.is_finite()) { min_eigenvalue(g) } else { f64::NAN };
    ModelError::DegenerateMetric { x: x.to_vec(), y: y.to_vec(), min_eigenvalue: min }
}

fn check_metric(model: &FinslerModel, x: &[f64], y: &[f64], f2: f64, g: &[Vec<f64>]) -> Result<(), ModelError> {
    model.check_in_chart(x)?;
    if !(f2 > 0.0) || !f2.is_finite() {
        return Err(ModelError::NonPositive { x: x.to_vec(), y: y.to_vec(), value: f2.max(0.0).sqrt() });
    }
    if g.iter().flatten().any(|v| !v.is_finite()) || !is_positive_definite(g) {
        return Err(degenerate(x, y, g));
    }
    Ok(())
}

/// `G^i = ¼ g^il (2 ∂g_jl/∂x^k − ∂g_jk/∂x^l) y^j y^k` over any scalar type.
///
/// `F²` is evaluated once over nested jets: first order in `x` outside,
/// second order in `y` inside, which yields `g_jl` and `∂_k g_jl` together.
pub fn spray<S: Scalar>(model: &FinslerModel, x: &[S], y: &[S]) -> Result<Vec<S>, ModelError> {
    let n = model.dim();
    let xs: Vec<Jet<Jet<S>>> =
        (0..n).map(|k| Jet::variable(k, Jet::constant(x[k].clone()), n, 1).expect("valid seed")).collect();
    let ys: Vec<Jet<Jet<S>>> =
        (0..n).map(|i| Jet::constant(Jet::variable(i, y[i].clone(), n, 2).expect("valid seed"))).collect();
    let f2 = model.f2(&xs, &ys);
    let base = f2.value().clone();
    let g: Vec<Vec<S>> = (0..n).map(|j| (0..n).map(|l| base.partial(&[j, l]).scale(0.5)).collect()).collect();
    let dx: Vec<Jet<S>> = (0..n).map(|k| f2.d1(k)).collect();
    // dg[k][j][l] = ∂g_jl/∂x^k
    let dg: Vec<Vec<Vec<S>>> =
        dx.iter().map(|d| (0..n).map(|j| (0..n).map(|l| d.partial(&[j, l]).scale(0.5)).collect()).collect()).collect();

    let xr: Vec<f64> = x.iter().map(|v| v.re()).collect();
    let yr: Vec<f64> = y.iter().map(|v| v.re()).collect();
    let gr: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|v| v.re()).collect()).collect();
    check_metric(model, &xr, &yr, base.value().re(), &gr)?;
    let g_inv = invert(&g, 0.0).ok_or_else(|| degenerate(&xr, &yr, &gr))?;

    let mut lower = Vec::with_capacity(n);
    for l in 0..n {
        let mut s = S::zero();
        for j in 0..n {
            for k in 0..n {
                let c = dg[k][j][l].scale(2.0) - dg[l][j][k].clone();
                s += c * y[j].clone() * y[k].clone();
            }
        }
        lower.push(s);
    }
    Ok((0..n)
        .map(|i| {
            let mut s = S::zero();
            for l in 0..n {
                s.mul_add_assign(&g_inv[i][l], &lower[l]);
            }
            s.scale(0.25)
        })
        .collect())
}

/// `R^i_jk = ∂G^i_j/∂x^k − ∂G^i_k/∂x^j + G^m_j G^i_km − G^m_k G^i_jm`.
pub fn assemble_curvature<S: Scalar>(gj: &[Vec<S>], gjk: &[Vec<Vec<S>>], dgj: &[Vec<Vec<S>>]) -> Vec<Vec<Vec<S>>> {
    let n = gj.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            let mut s = dgj[i][j][k].clone() - dgj[i][k][j].clone();
                            for m in 0..n {
                                s.mul_add_assign(&gj[m][j], &gjk[i][k][m]);
                                s -= gj[m][k].clone() * gjk[i][j][m].clone();
                            }
                            s
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Spray coefficients at a point.
pub fn spray_coeffs(model: &FinslerModel, x: &[f64], y: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_dims(model, x, y)?;
    spray(model, x, y)
}

fn check_dims(model: &FinslerModel, x: &[f64], y: &[f64]) -> Result<(), ModelError> {
    let n = model.dim();
    for v in [x, y] {
        if v.len() != n {
            return Err(ModelError::Dimension { expected: n, got: v.len() });
        }
    }
    Ok(())
}

/// `G^i`, `G^i_j`, `G^i_jk` and `R^i_jk` at `(x, y)`.
///
/// The spray is evaluated over second-order jets in all `2n` variables, so
/// every derivative of `G` needed by the curvature comes from one pass.
pub fn connection_eval(model: &FinslerModel, x: &[f64], y: &[f64]) -> Result<ConnectionEval, ModelError> {
    check_dims(model, x, y)?;
    let n = model.dim();
    let xs: Vec<Jet<f64>> = (0..n).map(|k| Jet::variable(k, x[k], 2 * n, 2).expect("valid seed")).collect();
    let ys: Vec<Jet<f64>> = (0..n).map(|i| Jet::variable(n + i, y[i], 2 * n, 2).expect("valid seed")).collect();
    let gs = spray(model, &xs, &ys)?;
    let g: Vec<f64> = gs.iter().map(|v| *v.value()).collect();
    let gj: Vec<Vec<f64>> = gs.iter().map(|v| (0..n).map(|j| v.partial(&[n + j])).collect()).collect();
    let gjk: Vec<Vec<Vec<f64>>> =
        gs.iter().map(|v| (0..n).map(|j| (0..n).map(|k| v.partial(&[n + j, n + k])).collect()).collect()).collect();
    let dgj: Vec<Vec<Vec<f64>>> =
        gs.iter().map(|v| (0..n).map(|j| (0..n).map(|k| v.partial(&[n + j, k])).collect()).collect()).collect();
    let r = assemble_curvature(&gj, &gjk, &dgj);
    Ok(ConnectionEval { x: x.to_vec(), y: y.to_vec(), g, gj, gjk, r })
}

/// Components `(X; −G^k_i X^i)` of the horizontal lift in the `(∂/∂x, ∂/∂y)` frame.
pub fn horizontal_lift(conn: &ConnectionEval, xv: &[f64]) -> Vec<f64> {
    let n = conn.dim();
    let mut out = xv.to_vec();
    for k in 0..n {
        out.push(-(0..n).map(|i| conn.gj[k][i] * xv[i]).sum::<f64>());
    }
    out
}

/// Taylor expansions of the connection around one point `(x, y)` of `TM`,
/// as flat jets in the `2n` variables `(x, y)`.
///
/// Orders: `G^i` at `order + 2`, `G^i_j` at `order + 1`, `G^i_jk` and
/// `R^i_jk` at `order`.
#[derive(Debug, Clone)]
pub struct ConnectionJets {
    pub order: usize,
    pub g: Vec<Jet<f64>>,
    pub gj: Vec<Vec<Jet<f64>>>,
    pub gjk: Vec<Vec<Vec<Jet<f64>>>>,
    pub r: Vec<Vec<Vec<Jet<f64>>>>,
}

/// Connection jets whose curvature is accurate to Taylor order `order`.
pub fn connection_jets(model: &FinslerModel, x: &[f64], y: &[f64], order: usize) -> Result<ConnectionJets, ModelError> {
    check_dims(model, x, y)?;
    let n = model.dim();
    let top = order + 5;
    let vars = 2 * n;
    let xs: Vec<Jet<f64>> =
        (0..n).map(|k| Jet::variable(k, x[k], vars, top).expect("order within engine cap")).collect();
    let ys: Vec<Jet<f64>> =
        (0..n).map(|i| Jet::variable(n + i, y[i], vars, top).expect("order within engine cap")).collect();
    let f2 = model.f2(&xs, &ys);
    let dy: Vec<Jet<f64>> = (0..n).map(|j| f2.derivative(n + j)).collect();
    // g_jl at order + 3, ∂_k g_jl at order + 2
    let g: Vec<Vec<Jet<f64>>> = (0..n).map(|j| (0..n).map(|l| dy[j].derivative(n + l).scale(0.5)).collect()).collect();
    let g0: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|v| *v.value()).collect()).collect();
    check_metric(model, x, y, *f2.value(), &g0)?;

    let m = order + 2;
    let g_low: Vec<Vec<Jet<f64>>> = g.iter().map(|r| r.iter().map(|v| v.truncate(m)).collect()).collect();
    let g_inv = invert(&g_low, 0.0).ok_or_else(|| degenerate(x, y, &g0))?;
    let yv: Vec<Jet<f64>> = ys.iter().map(|v| v.truncate(m)).collect();
    let dg = |k: usize, j: usize, l: usize| g[j][l].derivative(k);
    let mut lower = Vec::with_capacity(n);
    for l in 0..n {
        let mut s = Jet::constant(0.0);
        for j in 0..n {
            for k in 0..n {
                let c = dg(k, j, l).scale(2.0) - dg(l, j, k);
                s += c * yv[j].clone() * yv[k].clone();
            }
        }
        lower.push(s);
    }
    let gs: Vec<Jet<f64>> = (0..n)
        .map(|i| {
            let mut s = Jet::constant(0.0);
            for l in 0..n {
                s.mul_add_assign(&g_inv[i][l], &lower[l]);
            }
            s.scale(0.25)
        })
        .collect();
    let gj: Vec<Vec<Jet<f64>>> = gs.iter().map(|v| (0..n).map(|j| v.derivative(n + j)).collect()).collect();
    let gjk: Vec<Vec<Vec<Jet<f64>>>> =
        gj.iter().map(|row| row.iter().map(|v| (0..n).map(|k| v.derivative(n + k)).collect()).collect()).collect();
    let dgj: Vec<Vec<Vec<Jet<f64>>>> =
        gj.iter().map(|row| row.iter().map(|v| (0..n).map(|k| v.derivative(k)).collect()).collect()).collect();
    let gj_low: Vec<Vec<Jet<f64>>> = gj.iter().map(|r| r.iter().map(|v| v.truncate(order)).collect()).collect();
    let r = assemble_curvature(&gj_low, &gjk, &dgj);
    Ok(ConnectionJets { order, g: gs, gj, gjk, r })
}
