//! Truncated multivariate Taylor arithmetic (forward-mode jets).
//!
//! A [`Jet`] stores the normalised Taylor coefficients `∂^α f / α!` of a
//! scalar function for every multi-index `α` of total degree up to the
//! truncation order, in a dense graded table shared through a [`Layout`].
//! Coefficients are themselves generic [`Scalar`]s, so jets nest: a jet
//! whose coefficients are jets carries derivatives of derivatives.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::scalar::Scalar;

/// Highest truncation order accepted by the public seeding API.
pub const MAX_ORDER: usize = 4;

/// Internal ceiling for the Taylor engine that evaluates deep field
/// expressions at a single point.
pub(crate) const MAX_ENGINE_ORDER: usize = 20;

/// Default bound below which a value coefficient counts as zero for
/// division and square roots.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("variable index {index} out of range for {num_vars} variables")]
    IndexOutOfRange { index: usize, num_vars: usize },
    #[error("truncation order {0} unsupported (expected 1..={MAX_ORDER})")]
    UnsupportedOrder(usize),
    #[error("jet shapes differ: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("requested derivative of order {requested} exceeds truncation order {order}")]
    OrderExceeded { requested: usize, order: usize },
    #[error("division by near-zero value {value:e} in {context}")]
    DivisionByZero { value: f64, context: String },
    #[error("square root of negative value {value:e} in {context}")]
    NegativeSqrt { value: f64, context: String },
}

/// Dense multi-index table for `num_vars` variables up to `order`.
///
/// Slots are graded by total degree and ordered lexicographically within
/// each degree, so the table for a lower order is a prefix of the table for
/// a higher one.
pub struct Layout {
    num_vars: usize,
    order: usize,
    exponents: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// Product triples `(i, j)` grouped by output slot `k`.
    mul_pairs: Vec<(u32, u32)>,
    mul_offsets: Vec<usize>,
}

impl fmt::Debug for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Layout(vars={}, order={}, slots={})", self.num_vars, self.order, self.len())
    }
}

fn exponents_of_degree(num_vars: usize, degree: usize) -> Vec<Vec<u8>> {
    fn rec(pos: usize, remaining: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos + 1 == cur.len() {
            cur[pos] = remaining as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=remaining).rev() {
            cur[pos] = e as u8;
            rec(pos + 1, remaining - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    if num_vars == 0 {
        if degree == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut cur = vec![0u8; num_vars];
    rec(0, degree, &mut cur, &mut out);
    out
}

impl Layout {
    fn build(num_vars: usize, order: usize) -> Self {
        let mut exponents = Vec::new();
        for d in 0..=order {
            exponents.extend(exponents_of_degree(num_vars, d));
        }
        let lookup: HashMap<Vec<u8>, usize> = exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();

        let mut mul_pairs = Vec::new();
        let mut mul_offsets = Vec::with_capacity(exponents.len() + 1);
        let mut sub = vec![0u8; num_vars];
        for k in &exponents {
            mul_offsets.push(mul_pairs.len());
            // enumerate all i <= k componentwise
            enumerate_sub(k, 0, &mut sub, &mut |i| {
                let j: Vec<u8> = k.iter().zip(i).map(|(a, b)| a - b).collect();
                mul_pairs.push((lookup[i] as u32, lookup[&j] as u32));
            });
        }
        mul_offsets.push(mul_pairs.len());
        Layout { num_vars, order, exponents, lookup, mul_pairs, mul_offsets }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, slot: usize) -> &[u8] {
        &self.exponents[slot]
    }

    pub fn slot(&self, exponent: &[u8]) -> Option<usize> {
        self.lookup.get(exponent).copied()
    }

    /// Number of slots of total degree at most `order`.
    fn prefix_len(&self, order: usize) -> usize {
        self.exponents.iter().take_while(|e| degree(e) <= order).count()
    }

    fn pairs(&self, k: usize) -> &[(u32, u32)] {
        &self.mul_pairs[self.mul_offsets[k]..self.mul_offsets[k + 1]]
    }
}

fn enumerate_sub(k: &[u8], pos: usize, cur: &mut Vec<u8>, f: &mut impl FnMut(&[u8])) {
    if pos == k.len() {
        f(cur);
        return;
    }
    for e in 0..=k[pos] {
        cur[pos] = e;
        enumerate_sub(k, pos + 1, cur, f);
    }
    cur[pos] = 0;
}

fn degree(e: &[u8]) -> usize {
    e.iter().map(|&x| x as usize).sum()
}

fn factorial(n: u8) -> f64 {
    (1..=n as u64).product::<u64>() as f64
}

type Registry = Mutex<HashMap<(usize, usize), Arc<Layout>>>;

/// Shared layout for `(num_vars, order)`.
pub fn layout(num_vars: usize, order: usize) -> Arc<Layout> {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    let reg = REGISTRY.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(l) = reg.lock().unwrap().get(&(num_vars, order)) {
        return l.clone();
    }
    let built = Arc::new(Layout::build(num_vars, order));
    reg.lock().unwrap().entry((num_vars, order)).or_insert(built).clone()
}

/// Truncated Taylor expansion with coefficients in `S`.
///
/// A jet without a layout is a constant; it combines with any shaped jet.
#[derive(Clone)]
pub struct Jet<S> {
    layout: Option<Arc<Layout>>,
    coeffs: Vec<S>,
}

impl<S: Scalar> fmt::Debug for Jet<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.layout {
            None => write!(f, "Jet::const({:?})", self.coeffs[0]),
            Some(l) => write!(f, "Jet(vars={}, order={}, {:?})", l.num_vars, l.order, self.coeffs),
        }
    }
}

/// The coordinate function `v_index` expanded at `value`.
pub fn seed_variable<S: Scalar>(index: usize, value: S, num_vars: usize, order: usize) -> Result<Jet<S>, JetError> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(JetError::UnsupportedOrder(order));
    }
    Jet::variable(index, value, num_vars, order)
}

/// Binary jet operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Unary jet operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Sqrt,
    PowReal(f64),
    Neg,
    Scale(f64),
}

/// Checked binary arithmetic; rejects mismatched shapes and near-zero divisors.
pub fn jet_arith<S: Scalar>(a: &Jet<S>, b: &Jet<S>, op: BinaryOp, zero_tol: f64) -> Result<Jet<S>, JetError> {
    if let (Some(la), Some(lb)) = (&a.layout, &b.layout) {
        if la.num_vars != lb.num_vars || la.order != lb.order {
            return Err(JetError::ShapeMismatch(la.num_vars, la.order, lb.num_vars, lb.order));
        }
    }
    Ok(match op {
        BinaryOp::Add => a.clone() + b.clone(),
        BinaryOp::Sub => a.clone() - b.clone(),
        BinaryOp::Mul => a.clone() * b.clone(),
        BinaryOp::Div => {
            let v = b.value().re();
            if v.abs() <= zero_tol {
                return Err(JetError::DivisionByZero { value: v, context: "jet division".into() });
            }
            a.clone() / b.clone()
        }
    })
}

/// Checked unary operations.
pub fn jet_unary<S: Scalar>(a: &Jet<S>, op: UnaryOp, zero_tol: f64) -> Result<Jet<S>, JetError> {
    Ok(match op {
        UnaryOp::Neg => -a.clone(),
        UnaryOp::Scale(k) => a.scale(k),
        UnaryOp::Sqrt => {
            let v = a.value().re();
            if v < 0.0 {
                return Err(JetError::NegativeSqrt { value: v, context: "jet sqrt".into() });
            }
            if v.abs() <= zero_tol && a.order() > 0 {
                return Err(JetError::DivisionByZero { value: v, context: "derivative of sqrt".into() });
            }
            Scalar::sqrt(a)
        }
        UnaryOp::PowReal(p) => {
            let v = a.value().re();
            if v.abs() <= zero_tol && a.order() > 0 {
                return Err(JetError::DivisionByZero { value: v, context: format!("pow({p})") });
            }
            if v < 0.0 && p.fract() != 0.0 {
                return Err(JetError::NegativeSqrt { value: v, context: format!("pow({p})") });
            }
            a.powf(p)
        }
    })
}

/// Mixed partial derivative `∂^{|I|} f / ∂v_{i1}…∂v_{ik}` at the expansion point.
pub fn extract_partial<S: Scalar>(a: &Jet<S>, multi_index: &[usize]) -> Result<S, JetError> {
    let Some(l) = &a.layout else {
        return Ok(if multi_index.is_empty() { a.coeffs[0].clone() } else { S::zero() });
    };
    if multi_index.len() > l.order {
        return Err(JetError::OrderExceeded { requested: multi_index.len(), order: l.order });
    }
    let mut e = vec![0u8; l.num_vars];
    for &i in multi_index {
        if i >= l.num_vars {
            return Err(JetError::IndexOutOfRange { index: i, num_vars: l.num_vars });
        }
        e[i] += 1;
    }
    Ok(a.partial_of(&e))
}

impl<S: Scalar> Jet<S> {
    pub fn constant(value: S) -> Self {
        Jet { layout: None, coeffs: vec![value] }
    }

    /// Coordinate function without the public order cap.
    pub(crate) fn variable(index: usize, value: S, num_vars: usize, order: usize) -> Result<Self, JetError> {
        if index >= num_vars {
            return Err(JetError::IndexOutOfRange { index, num_vars });
        }
        if order > MAX_ENGINE_ORDER {
            return Err(JetError::UnsupportedOrder(order));
        }
        let l = layout(num_vars, order);
        let mut coeffs = vec![S::zero(); l.len()];
        coeffs[0] = value;
        if order >= 1 {
            let mut e = vec![0u8; num_vars];
            e[index] = 1;
            coeffs[l.slot(&e).unwrap()] = S::one();
        }
        Ok(Jet { layout: Some(l), coeffs })
    }

    /// Constant broadcast onto a given layout.
    pub fn constant_on(value: S, l: &Arc<Layout>) -> Self {
        let mut coeffs = vec![S::zero(); l.len()];
        coeffs[0] = value;
        Jet { layout: Some(l.clone()), coeffs }
    }

    pub fn from_parts(l: Arc<Layout>, coeffs: Vec<S>) -> Self {
        assert_eq!(l.len(), coeffs.len(), "coefficient count does not match layout");
        Jet { layout: Some(l), coeffs }
    }

    pub fn layout(&self) -> Option<&Arc<Layout>> {
        self.layout.as_ref()
    }

    pub fn num_vars(&self) -> usize {
        self.layout.as_ref().map_or(0, |l| l.num_vars)
    }

    pub fn order(&self) -> usize {
        self.layout.as_ref().map_or(0, |l| l.order)
    }

    pub fn is_constant(&self) -> bool {
        self.layout.is_none()
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    /// Coefficient of the zero multi-index.
    pub fn value(&self) -> &S {
        &self.coeffs[0]
    }

    /// Normalised Taylor coefficient of the given exponent (zero beyond the order).
    pub fn coeff(&self, exponent: &[u8]) -> S {
        match &self.layout {
            None => {
                if exponent.iter().all(|&e| e == 0) {
                    self.coeffs[0].clone()
                } else {
                    S::zero()
                }
            }
            Some(l) => l.slot(exponent).map_or_else(S::zero, |s| self.coeffs[s].clone()),
        }
    }

    fn partial_of(&self, exponent: &[u8]) -> S {
        let fact: f64 = exponent.iter().map(|&e| factorial(e)).product();
        self.coeff(exponent).scale(fact)
    }

    /// First partial derivative along variable `var`.
    pub fn d1(&self, var: usize) -> S {
        match &self.layout {
            None => S::zero(),
            Some(l) => {
                let mut e = vec![0u8; l.num_vars];
                e[var] = 1;
                self.coeff(&e)
            }
        }
    }

    /// Partial derivative given as a list of variable indices (order-insensitive).
    pub fn partial(&self, vars: &[usize]) -> S {
        match &self.layout {
            None => {
                if vars.is_empty() {
                    self.coeffs[0].clone()
                } else {
                    S::zero()
                }
            }
            Some(l) => {
                let mut e = vec![0u8; l.num_vars];
                for &v in vars {
                    e[v] += 1;
                }
                self.partial_of(&e)
            }
        }
    }

    /// Jet of `∂f/∂v_var`, one order lower. Exact: no information is lost.
    pub fn derivative(&self, var: usize) -> Jet<S> {
        let Some(l) = &self.layout else {
            return Jet::constant(S::zero());
        };
        assert!(l.order >= 1, "cannot differentiate an order-0 jet");
        let lower = layout(l.num_vars, l.order - 1);
        let mut coeffs = Vec::with_capacity(lower.len());
        let mut e = vec![0u8; l.num_vars];
        for slot in 0..lower.len() {
            e.copy_from_slice(&lower.exponents[slot]);
            e[var] += 1;
            let factor = e[var] as f64;
            let src = l.lookup[&e];
            coeffs.push(self.coeffs[src].scale(factor));
        }
        Jet { layout: Some(lower), coeffs }
    }

    /// Drop all coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Jet<S> {
        match &self.layout {
            None => self.clone(),
            Some(l) if order >= l.order => self.clone(),
            Some(l) => {
                let lower = layout(l.num_vars, order);
                let n = l.prefix_len(order);
                debug_assert_eq!(n, lower.len());
                Jet { layout: Some(lower), coeffs: self.coeffs[..n].to_vec() }
            }
        }
    }

    fn shaped_layout(a: &Jet<S>, b: &Jet<S>) -> Option<Arc<Layout>> {
        match (&a.layout, &b.layout) {
            (None, None) => None,
            (Some(l), None) | (None, Some(l)) => Some(l.clone()),
            (Some(la), Some(lb)) => {
                assert!(
                    la.num_vars == lb.num_vars && la.order == lb.order,
                    "jet shape mismatch: ({}, {}) vs ({}, {})",
                    la.num_vars,
                    la.order,
                    lb.num_vars,
                    lb.order
                );
                Some(la.clone())
            }
        }
    }

    fn zip_with(self, rhs: Jet<S>, f: impl Fn(&mut S, S)) -> Jet<S> {
        match (self.layout.is_some(), rhs.layout.is_some()) {
            (_, false) => {
                let mut out = self;
                let r = rhs.coeffs.into_iter().next().unwrap();
                f(&mut out.coeffs[0], r);
                out
            }
            (false, true) => {
                let mut out = Jet::constant_on(S::zero(), rhs.layout.as_ref().unwrap());
                out.coeffs[0] = self.coeffs.into_iter().next().unwrap();
                for (o, r) in out.coeffs.iter_mut().zip(rhs.coeffs) {
                    f(o, r);
                }
                out
            }
            (true, true) => {
                Jet::shaped_layout(&self, &rhs);
                let mut out = self;
                for (o, r) in out.coeffs.iter_mut().zip(rhs.coeffs) {
                    f(o, r);
                }
                out
            }
        }
    }

    /// Reciprocal through the graded recurrence `b·c = 1`.
    fn recip(&self) -> Jet<S> {
        Jet::constant(S::one()) / self.clone()
    }

    /// Composition `f(a0 + N) = Σ_k c_k N^k` with univariate series coefficients.
    fn compose(&self, series: &[S]) -> Jet<S> {
        let Some(l) = &self.layout else {
            return Jet::constant(series[0].clone());
        };
        let mut nil = self.clone();
        nil.coeffs[0] = S::zero();
        let mut out = Jet::constant_on(series[0].clone(), l);
        let mut power = Jet::constant_on(S::one(), l);
        for c in series.iter().skip(1) {
            power = power * nil.clone();
            for (o, p) in out.coeffs.iter_mut().zip(&power.coeffs) {
                o.mul_add_assign(c, p);
            }
        }
        out
    }
}

impl<S: Scalar> Zero for Jet<S> {
    fn zero() -> Self {
        Jet::constant(S::zero())
    }
    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }
}

impl<S: Scalar> One for Jet<S> {
    fn one() -> Self {
        Jet::constant(S::one())
    }
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Jet<S>;
    fn add(self, rhs: Jet<S>) -> Jet<S> {
        self.zip_with(rhs, |o, r| *o += r)
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Jet<S>;
    fn sub(self, rhs: Jet<S>) -> Jet<S> {
        match (self.layout.is_some(), rhs.layout.is_some()) {
            (false, true) => -rhs + self,
            _ => self.zip_with(rhs, |o, r| *o -= r),
        }
    }
}

impl<S: Scalar> AddAssign for Jet<S> {
    fn add_assign(&mut self, rhs: Jet<S>) {
        let lhs = std::mem::replace(self, Jet::constant(S::zero()));
        *self = lhs + rhs;
    }
}

impl<S: Scalar> SubAssign for Jet<S> {
    fn sub_assign(&mut self, rhs: Jet<S>) {
        let lhs = std::mem::replace(self, Jet::constant(S::zero()));
        *self = lhs - rhs;
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Jet<S>;
    fn neg(mut self) -> Jet<S> {
        for c in self.coeffs.iter_mut() {
            *c = -std::mem::replace(c, S::zero());
        }
        self
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Jet<S>;
    fn mul(self, rhs: Jet<S>) -> Jet<S> {
        match (&self.layout, &rhs.layout) {
            (None, None) => Jet::constant(self.coeffs[0].clone() * rhs.coeffs[0].clone()),
            (Some(_), None) => {
                let k = &rhs.coeffs[0];
                let mut out = self;
                for c in out.coeffs.iter_mut() {
                    *c = c.clone() * k.clone();
                }
                out
            }
            (None, Some(_)) => rhs * self,
            (Some(_), Some(_)) => {
                let l = Jet::shaped_layout(&self, &rhs).unwrap();
                let mut out = vec![S::zero(); l.len()];
                for (k, o) in out.iter_mut().enumerate() {
                    for &(i, j) in l.pairs(k) {
                        o.mul_add_assign(&self.coeffs[i as usize], &rhs.coeffs[j as usize]);
                    }
                }
                Jet { layout: Some(l), coeffs: out }
            }
        }
    }
}

impl<S: Scalar> Div for Jet<S> {
    type Output = Jet<S>;
    fn div(self, rhs: Jet<S>) -> Jet<S> {
        match (&self.layout, &rhs.layout) {
            (_, None) => {
                let k = rhs.coeffs[0].clone();
                let mut out = self;
                for c in out.coeffs.iter_mut() {
                    *c = c.clone() / k.clone();
                }
                out
            }
            (_, Some(lb)) => {
                let l = lb.clone();
                let num = match self.layout {
                    Some(_) => self,
                    None => Jet::constant_on(self.coeffs[0].clone(), &l),
                };
                Jet::shaped_layout(&num, &rhs);
                let b0 = rhs.coeffs[0].clone();
                let mut c: Vec<S> = Vec::with_capacity(l.len());
                for k in 0..l.len() {
                    let mut s = num.coeffs[k].clone();
                    for &(i, j) in l.pairs(k) {
                        if i != 0 {
                            s -= rhs.coeffs[i as usize].clone() * c[j as usize].clone();
                        }
                    }
                    c.push(s / b0.clone());
                }
                Jet { layout: Some(l), coeffs: c }
            }
        }
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn from_f64(v: f64) -> Self {
        Jet::constant(S::from_f64(v))
    }

    fn re(&self) -> f64 {
        self.coeffs[0].re()
    }

    fn sqrt(&self) -> Self {
        let Some(l) = &self.layout else {
            return Jet::constant(self.coeffs[0].sqrt());
        };
        let s0 = self.coeffs[0].sqrt();
        let two_s0 = s0.scale(2.0);
        let mut s: Vec<S> = Vec::with_capacity(l.len());
        s.push(s0);
        for k in 1..l.len() {
            let mut acc = self.coeffs[k].clone();
            for &(i, j) in l.pairs(k) {
                if i != 0 && j != 0 {
                    acc -= s[i as usize].clone() * s[j as usize].clone();
                }
            }
            s.push(acc / two_s0.clone());
        }
        Jet { layout: Some(l.clone()), coeffs: s }
    }

    fn powf(&self, p: f64) -> Self {
        if p == 0.5 {
            return Scalar::sqrt(self);
        }
        if p == -1.0 {
            return self.recip();
        }
        let order = self.order();
        let a0 = &self.coeffs[0];
        // generalised binomial coefficients times a0^(p-k)
        let mut series = Vec::with_capacity(order + 1);
        let mut binom = 1.0;
        for k in 0..=order {
            series.push(a0.powf(p - k as f64).scale(binom));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&series)
    }

    fn scale(&self, k: f64) -> Self {
        Jet { layout: self.layout.clone(), coeffs: self.coeffs.iter().map(|c| c.scale(k)).collect() }
    }

    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        match (&a.layout, &b.layout) {
            (Some(la), Some(_)) if self.layout.is_some() => {
                Jet::shaped_layout(a, b);
                Jet::shaped_layout(self, a);
                let l = la.clone();
                for k in 0..l.len() {
                    let o = &mut self.coeffs[k];
                    for &(i, j) in l.pairs(k) {
                        o.mul_add_assign(&a.coeffs[i as usize], &b.coeffs[j as usize]);
                    }
                }
            }
            _ => {
                let prod = a.clone() * b.clone();
                *self += prod;
            }
        }
    }
}
