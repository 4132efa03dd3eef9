//! Sparse multivariate polynomials with exact rational coefficients over the
//! temperature derivatives θ⁽ᵐ⁾ and the power moments I_n.
//!
//! Exponents are signed so θ⁻¹ is an ordinary power of θ⁽⁰⁾; the derivation
//! rule d(θᵉ) = e θᵉ⁻¹ θ⁽¹⁾ then covers the formal inverse.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::scalar::{rational_from_i64, Scalar};
use crate::spectra::{format_rational64, MomentIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// θ⁽ᵐ⁾(y)
    Theta(u32),
    /// I_n(y)
    Moment(MomentIndex),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Theta(0) => write!(f, "θ"),
            Var::Theta(m) => write!(f, "θ({m})"),
            Var::Moment(n) => write!(f, "I[{}]", format_rational64(n)),
        }
    }
}

/// Product of variable powers, sorted by variable, zero exponents elided.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(Vec<(Var, i32)>);

impl Monomial {
    pub fn one() -> Self {
        Self(Vec::new())
    }

    pub fn var(v: Var, e: i32) -> Self {
        if e == 0 {
            Self::one()
        } else {
            Self(vec![(v, e)])
        }
    }

    pub fn factors(&self) -> &[(Var, i32)] {
        &self.0
    }

    pub fn exponent(&self, v: Var) -> i32 {
        self.0
            .binary_search_by(|(w, _)| w.cmp(&v))
            .map(|ix| self.0[ix].1)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(va, ea)), Some(&&(vb, eb))) => {
                    if va < vb {
                        out.push((va, ea));
                        a.next();
                    } else if vb < va {
                        out.push((vb, eb));
                        b.next();
                    } else {
                        if ea + eb != 0 {
                            out.push((va, ea + eb));
                        }
                        a.next();
                        b.next();
                    }
                }
                (Some(&&x), None) => {
                    out.push(x);
                    a.next();
                }
                (None, Some(&&x)) => {
                    out.push(x);
                    b.next();
                }
                (None, None) => break,
            }
        }
        Monomial(out)
    }

    fn shifted(&self, v: Var, delta: i32) -> Monomial {
        self.mul(&Monomial::var(v, delta))
    }
}

/// Exact polynomial in {θ⁽ᵐ⁾, I_n}. Laurent in θ⁽⁰⁾ only in practice.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ThetaExpression {
    terms: BTreeMap<Monomial, BigRational>,
}

impl ThetaExpression {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut e = Self::zero();
        e.add_term(Monomial::one(), c);
        e
    }

    pub fn integer(c: i64) -> Self {
        Self::constant(rational_from_i64(c))
    }

    pub fn var(v: Var) -> Self {
        Self::monomial(Monomial::var(v, 1), BigRational::one())
    }

    pub fn theta(m: u32) -> Self {
        Self::var(Var::Theta(m))
    }

    pub fn moment(n: MomentIndex) -> Self {
        Self::var(Var::Moment(n))
    }

    pub fn monomial(m: Monomial, c: BigRational) -> Self {
        let mut e = Self::zero();
        e.add_term(m, c);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(k, v)| (k.mul(m), v * c)).collect(),
        }
    }

    /// Derivative under a derivation fixed by its action on each variable.
    ///
    /// `rule(v)` returns dv/dy; results are memoized per call.
    pub fn derive_with<F>(&self, mut rule: F) -> Self
    where
        F: FnMut(Var) -> ThetaExpression,
    {
        let mut memo: HashMap<Var, ThetaExpression> = HashMap::new();
        let mut out = Self::zero();
        for (mono, coeff) in &self.terms {
            for &(v, e) in mono.factors() {
                let dv = memo.entry(v).or_insert_with(|| rule(v));
                if dv.is_zero() {
                    continue;
                }
                let base = mono.shifted(v, -1);
                let c = coeff * rational_from_i64(e as i64);
                for (dm, dc) in &dv.terms {
                    out.add_term(base.mul(dm), &c * dc);
                }
            }
        }
        out
    }

    /// d/dy with θ⁽ᵐ⁾ ↦ θ⁽ᵐ⁺¹⁾ and moments held constant.
    pub fn derive_theta(&self) -> Self {
        self.derive_with(|v| match v {
            Var::Theta(m) => Self::theta(m + 1),
            Var::Moment(_) => Self::zero(),
        })
    }

    /// Highest θ-derivative order present.
    pub fn max_theta_order(&self) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter())
            .filter_map(|(v, _)| match v {
                Var::Theta(m) => Some(*m),
                Var::Moment(_) => None,
            })
            .max()
    }

    /// Every moment index referenced.
    pub fn moment_indices(&self) -> Vec<MomentIndex> {
        let mut out: Vec<MomentIndex> = self
            .terms
            .keys()
            .flat_map(|m| m.factors().iter())
            .filter_map(|(v, _)| match v {
                Var::Moment(n) => Some(*n),
                Var::Theta(_) => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Write `self = a·v + b` with `a`, `b` free of `v`; `None` unless `self` is
    /// affine in `v`.
    pub fn affine_split(&self, v: Var) -> Option<(ThetaExpression, ThetaExpression)> {
        let mut a = Self::zero();
        let mut b = Self::zero();
        for (m, c) in &self.terms {
            match m.exponent(v) {
                0 => b.add_term(m.clone(), c.clone()),
                1 => a.add_term(m.shifted(v, -1), c.clone()),
                _ => return None,
            }
        }
        Some((a, b))
    }

    /// Evaluate with variable values from `value`; reports the first unbound variable.
    pub fn eval<S: Scalar>(&self, mut value: impl FnMut(Var) -> Option<S>) -> Result<S, Var> {
        let mut cache: HashMap<Var, S> = HashMap::new();
        let mut acc = S::zero();
        for (m, c) in &self.terms {
            let mut t = S::from_rational(c);
            for &(v, e) in m.factors() {
                let x = match cache.get(&v) {
                    Some(x) => x.clone(),
                    None => {
                        let x = value(v).ok_or(v)?;
                        cache.insert(v, x.clone());
                        x
                    }
                };
                t = t * x.powi(e);
            }
            acc = acc + t;
        }
        Ok(acc)
    }
}

impl Add for &ThetaExpression {
    type Output = ThetaExpression;
    fn add(self, rhs: &ThetaExpression) -> ThetaExpression {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &ThetaExpression {
    type Output = ThetaExpression;
    fn sub(self, rhs: &ThetaExpression) -> ThetaExpression {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &ThetaExpression {
    type Output = ThetaExpression;
    fn mul(self, rhs: &ThetaExpression) -> ThetaExpression {
        let mut out = ThetaExpression::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &ThetaExpression {
    type Output = ThetaExpression;
    fn neg(self) -> ThetaExpression {
        self.scale(&-BigRational::one())
    }
}

impl fmt::Display for ThetaExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (ix, (m, c)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            match (ix, c.is_negative()) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let bare = m.factors().is_empty();
            if !mag.is_one() || bare {
                write!(f, "{}", crate::io::rational_string(&mag))?;
                if !bare {
                    write!(f, "*")?;
                }
            }
            for (jx, (v, e)) in m.factors().iter().enumerate() {
                if jx > 0 {
                    write!(f, "*")?;
                }
                if *e == 1 {
                    write!(f, "{v}")?;
                } else {
                    write!(f, "{v}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn derivation_of_inverse_theta() {
        // d/dy θ⁻¹ = −θ⁻² θ⁽¹⁾
        let inv = ThetaExpression::monomial(Monomial::var(Var::Theta(0), -1), q(1, 1));
        let d = inv.derive_theta();
        let want = ThetaExpression::monomial(
            Monomial::var(Var::Theta(0), -2).mul(&Monomial::var(Var::Theta(1), 1)),
            q(-1, 1),
        );
        assert_eq!(d, want);
    }

    #[test]
    fn affine_split_and_eval() {
        let t0 = ThetaExpression::theta(0);
        let t1 = ThetaExpression::theta(1);
        // θ(20θ − 2θ')
        let e = &t0 * &(&t0.scale(&q(20, 1)) - &t1.scale(&q(2, 1)));
        let (a, b) = e.affine_split(Var::Theta(1)).unwrap();
        assert_eq!(a, t0.scale(&q(-2, 1)));
        assert_eq!(b, (&t0 * &t0).scale(&q(20, 1)));
        assert!(e.affine_split(Var::Theta(0)).is_none());
        let v: f64 = e
            .eval(|v| match v {
                Var::Theta(0) => Some(1.0),
                Var::Theta(1) => Some(2.0),
                _ => None,
            })
            .unwrap();
        assert_eq!(v, 16.0);
        assert_eq!(e.eval::<f64>(|_| None), Err(Var::Theta(0)));
    }

    #[test]
    fn display_is_readable() {
        let t0 = ThetaExpression::theta(0);
        let e = &(&t0 * &t0).scale(&q(20, 1)) - &ThetaExpression::theta(1);
        let s = e.to_string();
        assert!(s.contains("20*θ^2"), "{s}");
        assert!(s.contains("θ(1)"), "{s}");
        assert_eq!(ThetaExpression::zero().to_string(), "0");
    }

    fn arb_expr() -> impl Strategy<Value = ThetaExpression> {
        let term = (
            -5i64..=5,
            1i64..=3,
            proptest::collection::vec((0u32..3, -1i32..=2), 0..3),
        )
            .prop_map(|(n, d, factors)| {
                let m = factors
                    .into_iter()
                    .fold(Monomial::one(), |acc, (v, e)| acc.mul(&Monomial::var(Var::Theta(v), e)));
                ThetaExpression::monomial(m, q(n, d))
            });
        proptest::collection::vec(term, 0..4)
            .prop_map(|ts| ts.iter().fold(ThetaExpression::zero(), |acc, t| &acc + t))
    }

    proptest! {
        #[test]
        fn derivation_is_linear(a in arb_expr(), b in arb_expr(), c in -4i64..4) {
            let lhs = (&a + &b.scale(&q(c, 1))).derive_theta();
            let rhs = &a.derive_theta() + &b.derive_theta().scale(&q(c, 1));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn leibniz_rule(a in arb_expr(), b in arb_expr()) {
            let lhs = (&a * &b).derive_theta();
            let rhs = &(&a * &b.derive_theta()) + &(&b * &a.derive_theta());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn multiplication_commutes(a in arb_expr(), b in arb_expr()) {
            prop_assert_eq!(&a * &b, &b * &a);
        }
    }
}
