use approx::assert_abs_diff_eq;
use finhol::jets::{extract_partial, jet_arith, jet_unary, seed_variable, BinaryOp, Jet, JetError, UnaryOp};
use finhol::scalar::Scalar;
use proptest::prelude::*;

fn seeds(vals: &[f64], order: usize) -> Vec<Jet<f64>> {
    (0..vals.len()).map(|i| seed_variable(i, vals[i], vals.len(), order).unwrap()).collect()
}

#[test]
fn seeds_are_coordinate_functions() {
    let v = seed_variable(0, 3.0, 2, 2).unwrap();
    assert_eq!(*v.value(), 3.0);
    assert_eq!(extract_partial(&v, &[0]).unwrap(), 1.0);
    assert_eq!(extract_partial(&v, &[1]).unwrap(), 0.0);
    for idx in [[0, 0], [0, 1], [1, 1]] {
        assert_eq!(extract_partial(&v, &idx).unwrap(), 0.0);
    }
    let w = seed_variable(1, -1.0, 2, 1).unwrap();
    assert_eq!((*w.value(), w.d1(0), w.d1(1)), (-1.0, 0.0, 1.0));
}

#[test]
fn product_of_seeds_is_bilinear() {
    let v = seeds(&[3.0, -1.0], 2);
    let p = v[0].clone() * v[1].clone();
    assert_eq!(*p.value(), -3.0);
    assert_eq!((p.d1(0), p.d1(1)), (-1.0, 3.0));
    assert_eq!(extract_partial(&p, &[0, 1]).unwrap(), 1.0);
    assert_eq!(extract_partial(&p, &[0, 0]).unwrap(), 0.0);
}

#[test]
fn seed_rejects_bad_index_and_order() {
    assert!(matches!(seed_variable(2, 0.0, 2, 2), Err(JetError::IndexOutOfRange { .. })));
    assert!(matches!(seed_variable(0, 0.0, 2, 0), Err(JetError::UnsupportedOrder(0))));
    assert!(matches!(seed_variable(0, 0.0, 2, 5), Err(JetError::UnsupportedOrder(5))));
}

#[test]
fn sqrt_of_square_and_geometric_series() {
    let t = seed_variable(0, 2.0, 1, 2).unwrap();
    let s = jet_unary(&(t.clone() * t), UnaryOp::Sqrt, 1e-12).unwrap();
    assert_abs_diff_eq!(*s.value(), 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(s.partial(&[0]), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(s.partial(&[0, 0]), 0.0, epsilon = 1e-15);

    let t = seed_variable(0, 0.0, 1, 3).unwrap();
    let one = Jet::constant(1.0);
    let r = jet_arith(&one, &(one.clone() + t), BinaryOp::Div, 1e-12).unwrap();
    let fact = [1.0, 1.0, 2.0, 6.0];
    for (k, f) in fact.iter().enumerate() {
        let expect = if k % 2 == 0 { 1.0 } else { -1.0 } * f;
        assert_abs_diff_eq!(extract_partial(&r, &vec![0; k]).unwrap(), expect, epsilon = 1e-14);
    }
}

#[test]
fn domain_errors() {
    let t = seed_variable(0, 0.0, 1, 2).unwrap();
    assert!(matches!(jet_arith(&Jet::constant(1.0), &t, BinaryOp::Div, 1e-12), Err(JetError::DivisionByZero { .. })));
    let neg = t.clone() - Jet::constant(1.0);
    assert!(matches!(jet_unary(&neg, UnaryOp::Sqrt, 1e-12), Err(JetError::NegativeSqrt { .. })));
    let a = seed_variable(0, 1.0, 2, 2).unwrap();
    assert!(matches!(jet_arith(&a, &t, BinaryOp::Add, 1e-12), Err(JetError::ShapeMismatch(..))));
    assert!(matches!(extract_partial(&a, &[0, 0, 1]), Err(JetError::OrderExceeded { .. })));
}

#[test]
fn randers_gradient_matches_finite_differences() {
    let f = |y: &[f64]| (y[0] * y[0] + y[1] * y[1]).sqrt() + 0.3 * y[0];
    let v = seeds(&[1.0, 0.0], 2);
    let fj = jet_unary(&(v[0].clone() * v[0].clone() + v[1].clone() * v[1].clone()), UnaryOp::Sqrt, 1e-12).unwrap()
        + v[0].scale(0.3);
    assert_abs_diff_eq!(fj.d1(0), 1.3, epsilon = 1e-15);
    assert_abs_diff_eq!(fj.d1(1), 0.0, epsilon = 1e-15);
    let h = 1e-5;
    for i in 0..2 {
        let mut p = [1.0, 0.0];
        let mut m = [1.0, 0.0];
        p[i] += h;
        m[i] -= h;
        let fd = (f(&p) - f(&m)) / (2.0 * h);
        assert!((fd - fj.d1(i)).abs() <= 1e-9, "component {i}: fd {fd}, jet {}", fj.d1(i));
    }
}

#[test]
fn extracted_partials_of_monomials() {
    let v = seeds(&[0.7, -1.3], 3);
    let j = v[0].clone() * v[0].clone() * v[1].clone();
    assert_abs_diff_eq!(extract_partial(&j, &[0, 0, 1]).unwrap(), 2.0, epsilon = 1e-14);
    assert_eq!(extract_partial(&j, &[0, 1]).unwrap(), extract_partial(&j, &[1, 0]).unwrap());
    let y = seeds(&[0.6, 0.8], 2);
    let f2 = y[0].clone() * y[0].clone() + y[1].clone() * y[1].clone();
    assert_abs_diff_eq!(extract_partial(&f2, &[0, 0]).unwrap(), 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(extract_partial(&f2, &[0, 1]).unwrap(), 0.0, epsilon = 1e-15);
}

/// Derivatives of smooth non-polynomial functions against central
/// differences: the error must shrink like `h²`.
#[test]
fn nonpolynomial_partials_converge_at_second_order() {
    let x0 = [0.4, -0.3];
    let f = |x: &[f64]| (1.0 + x[0] * x[0] + 2.0 * x[1] * x[1]).sqrt() / (2.0 + x[0] * x[1]);
    let v = seeds(&x0, 2);
    let q = Jet::constant(1.0) + v[0].clone() * v[0].clone() + (v[1].clone() * v[1].clone()).scale(2.0);
    let fj = Scalar::sqrt(&q) / (Jet::constant(2.0) + v[0].clone() * v[1].clone());
    let mixed = fj.partial(&[0, 1]);
    let fd = |h: f64| {
        let at = |a: f64, b: f64| f(&[x0[0] + a, x0[1] + b]);
        (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
    };
    let (e1, e2) = ((fd(1e-2) - mixed).abs(), (fd(5e-3) - mixed).abs());
    let ratio = e1 / e2;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    let first = fj.d1(0);
    let g = |h: f64| (f(&[x0[0] + h, x0[1]]) - f(&[x0[0] - h, x0[1]])) / (2.0 * h);
    let ratio = (g(1e-2) - first).abs() / (g(5e-3) - first).abs();
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

/// Sparse polynomial: coefficients with exponent vectors.
#[derive(Debug, Clone)]
struct Poly {
    nvars: usize,
    terms: Vec<(f64, Vec<u8>)>,
}

impl Poly {
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().enumerate().map(|(i, &k)| x[i].powi(k as i32)).product::<f64>())
            .sum()
    }

    fn jet(&self, x: &[f64], order: usize) -> Jet<f64> {
        let v = seeds(x, order);
        let mut acc = Jet::constant(0.0);
        for (c, e) in &self.terms {
            let mut m = Jet::constant(*c);
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    m = m * v[i].clone();
                }
            }
            acc += m;
        }
        acc
    }

    fn differentiate(&self, var: usize) -> Poly {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[var] > 0)
            .map(|(c, e)| {
                let mut e2 = e.clone();
                e2[var] -= 1;
                (c * e[var] as f64, e2)
            })
            .collect();
        Poly { nvars: self.nvars, terms }
    }
}

fn poly_strategy() -> impl Strategy<Value = (Poly, Vec<f64>, Vec<usize>)> {
    (1usize..=8).prop_flat_map(|n| {
        let term = (-2.0f64..2.0, prop::collection::vec(0u8..=2, n))
            .prop_filter("degree ≤ 4", |(_, e)| e.iter().map(|&k| k as usize).sum::<usize>() <= 4);
        (prop::collection::vec(term, 1..6), prop::collection::vec(-1.5f64..1.5, n), prop::collection::vec(0..n, 0..=4))
            .prop_map(move |(terms, x, idx)| (Poly { nvars: n, terms }, x, idx))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomial_partials_match_symbolic((p, x, idx) in poly_strategy()) {
        let j = p.jet(&x, 4);
        let mut d = p.clone();
        for &i in &idx {
            d = d.differentiate(i);
        }
        let expect = d.eval(&x);
        let got = extract_partial(&j, &idx).unwrap();
        prop_assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
        let mut rev = idx.clone();
        rev.reverse();
        prop_assert_eq!(got, extract_partial(&j, &rev).unwrap());
    }

    #[test]
    fn addition_is_associative(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let v = seeds(&[a, b], 3);
        let (x, y, z) = (v[0].clone() * v[1].clone(), v[1].clone().scale(c), v[0].clone() * v[0].clone());
        let l = (x.clone() + y.clone()) + z.clone();
        let r = x + (y + z);
        let scale = l.coeffs().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (p, q) in l.coeffs().iter().zip(r.coeffs()) {
            prop_assert!((p - q).abs() <= 1e-14 * scale);
        }
    }
}

#[test]
fn single_precision_jets_track_double() {
    let v32: Vec<Jet<f32>> = (0..2).map(|i| seed_variable(i, [0.7f32, -0.4][i], 2, 2).unwrap()).collect();
    let v64 = seeds(&[0.7, -0.4], 2);
    let f32j = Scalar::sqrt(&(Jet::constant(1.0f32) + v32[0].clone() * v32[0].clone())) * v32[1].clone();
    let f64j = Scalar::sqrt(&(Jet::constant(1.0) + v64[0].clone() * v64[0].clone())) * v64[1].clone();
    for idx in [&[][..], &[0], &[1], &[0, 0], &[0, 1]] {
        let (a, b) = (extract_partial(&f32j, idx).unwrap() as f64, extract_partial(&f64j, idx).unwrap());
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{idx:?}: {a} vs {b}");
    }
}
