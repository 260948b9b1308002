//! Levi-Civita connection and Riemann tensor of a Riemannian metric `a_ij(x)`.
//!
//! This is the classical linear theory, computed from the metric
//! coefficients rather than from `F²`. With `R(∂_a,∂_b)∂_c = R^i_{cab} ∂_i`,
//! the Finsler tensor of a Riemannian model is `R^i_jk(x,y) = R^i_{lkj} y^l`.

use crate::expr::Expr;
use crate::jets::Jet;
use crate::linalg::invert;
use crate::scalar::Scalar;

/// `gamma[i][j][k] = Γ^i_jk` and the same symbols differentiated:
/// `dgamma[m][i][j][k] = ∂Γ^i_jk/∂x^m`.
#[derive(Debug, Clone)]
pub struct LeviCivita<S> {
    pub gamma: Vec<Vec<Vec<S>>>,
    pub dgamma: Vec<Vec<Vec<Vec<S>>>>,
}

fn zeros3<S: Scalar>(n: usize) -> Vec<Vec<Vec<S>>> {
    vec![vec![vec![S::zero(); n]; n]; n]
}

/// Christoffel symbols of the second kind and their first derivatives.
pub fn levi_civita<S: Scalar>(a: &[Vec<Expr>], x: &[S]) -> Option<LeviCivita<S>> {
    let n = a.len();
    let xs: Vec<Jet<S>> = (0..n).map(|k| Jet::variable(k, x[k].clone(), n, 2).expect("valid seed")).collect();
    let am: Vec<Vec<Jet<S>>> = a.iter().map(|r| r.iter().map(|e| e.eval(&xs, &[], None)).collect()).collect();
    let a1: Vec<Vec<Jet<S>>> = am.iter().map(|r| r.iter().map(|v| v.truncate(1)).collect()).collect();
    let ainv = invert(&a1, 0.0)?;
    // first-kind symbols [jk, l] as first-order jets
    let d = |k: usize, i: usize, j: usize| am[i][j].derivative(k);
    let mut gamma_j = vec![vec![vec![Jet::constant(S::zero()); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = Jet::constant(S::zero());
                for l in 0..n {
                    let first = d(j, l, k) + d(k, l, j) - d(l, j, k);
                    s.mul_add_assign(&ainv[i][l], &first);
                }
                gamma_j[i][j][k] = s.scale(0.5);
            }
        }
    }
    let mut gamma = zeros3(n);
    let mut dgamma = vec![zeros3(n); n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                gamma[i][j][k] = gamma_j[i][j][k].value().clone();
                for m in 0..n {
                    dgamma[m][i][j][k] = gamma_j[i][j][k].d1(m);
                }
            }
        }
    }
    Some(LeviCivita { gamma, dgamma })
}

/// `riemann[i][c][a][b] = R^i_{cab}`, the components of `R(∂_a,∂_b)∂_c`.
pub fn riemann_tensor<S: Scalar>(a: &[Vec<Expr>], x: &[S]) -> Option<Vec<Vec<Vec<Vec<S>>>>> {
    let n = a.len();
    let lc = levi_civita(a, x)?;
    let (g, dg) = (&lc.gamma, &lc.dgamma);
    let mut r = vec![vec![vec![vec![S::zero(); n]; n]; n]; n];
    for i in 0..n {
        for c in 0..n {
            for p in 0..n {
                for q in 0..n {
                    let mut s = dg[p][i][q][c].clone() - dg[q][i][p][c].clone();
                    for m in 0..n {
                        s.mul_add_assign(&g[i][p][m], &g[m][q][c]);
                        s -= g[i][q][m].clone() * g[m][p][c].clone();
                    }
                    r[i][c][p][q] = s;
                }
            }
        }
    }
    Some(r)
}

/// Matrix of the endomorphism `y ↦ R^i_jk(x,y) X^j Y^k`, i.e. `R(Y, X)`.
pub fn curvature_operator<S: Scalar>(a: &[Vec<Expr>], x: &[S], xv: &[f64], yv: &[f64]) -> Option<Vec<Vec<S>>> {
    let n = a.len();
    let r = riemann_tensor(a, x)?;
    Some(
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|l| {
                        let mut s = S::zero();
                        for j in 0..n {
                            for k in 0..n {
                                s += r[i][l][k][j].scale(xv[j] * yv[k]);
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Covariant derivative along the constant field `Z` of the endomorphism
/// field `x ↦ curvature_operator(x, X, Y)` with `X`, `Y` constant:
/// `Z^j (∂_j M + Γ_j M − M Γ_j)` where `(Γ_j)^i_k = Γ^i_jk`.
pub fn curvature_operator_derivative(
    a: &[Vec<Expr>],
    x: &[f64],
    xv: &[f64],
    yv: &[f64],
    zv: &[f64],
) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let xs: Vec<Jet<f64>> = (0..n).map(|k| Jet::variable(k, x[k], n, 1).expect("valid seed")).collect();
    let m = curvature_operator(a, &xs, xv, yv)?;
    let lc = levi_civita(a, x)?;
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for l in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                let mut t = m[i][l].d1(j);
                for k in 0..n {
                    t += lc.gamma[i][j][k] * m[k][l].value() - m[i][k].value() * lc.gamma[k][j][l];
                }
                s += zv[j] * t;
            }
            out[i][l] = s;
        }
    }
    Some(out)
}
