//! Taylor partial sums Φ_N, continued fractions Ψ_N, and defect detection.
//!
//! Ψ_N(y) = c₀ / (1 + c₁y / (1 + c₂y / (1 + … c_{N−1}y / (1 + c_N y))))
//!
//! The coefficients come from the two-dimensional quotient table
//! A₀,ₘ = θ⁽ᵐ⁾(0)/m!, A₁,ₘ = −A₀,ₘ₊₁/A₀,₀,
//! Aₙ,ₘ = Aₙ₋₂,ₘ₊₁/Aₙ₋₂,₀ − Aₙ₋₁,ₘ₊₁/Aₙ₋₁,₀, with cₙ = Aₙ,₀.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{rational_string, SCHEMA_VERSION};
use crate::moments::DerivativeTable;
use crate::scalar::{rational_from_f64, rational_to_f64, Scalar};

/// Φ_N(y) = Σ_{n≤N} θ⁽ⁿ⁾(0) yⁿ/n!, summed exactly when the table is exact.
pub fn taylor_eval(table: &DerivativeTable, n_max: usize, y: f64) -> Result<f64> {
    if n_max > table.order() {
        return Err(Error::TruncationTooLarge {
            requested: n_max,
            available: table.order(),
        });
    }
    match (table.exact(), rational_from_f64(y)) {
        (Some(exact), Some(yq)) => {
            let mut sum = BigRational::zero();
            let mut pow = BigRational::one();
            let mut fact = BigInt::one();
            for (n, d) in exact.iter().enumerate().take(n_max + 1) {
                if n > 0 {
                    pow *= &yq;
                    fact *= BigInt::from(n);
                }
                sum += d * &pow / BigRational::from_integer(fact.clone());
            }
            Ok(rational_to_f64(&sum))
        }
        _ => {
            let mut sum = 0.0;
            let mut term_scale = 1.0;
            for (n, d) in table.values().iter().enumerate().take(n_max + 1) {
                if n > 0 {
                    term_scale *= y / n as f64;
                }
                sum += d * term_scale;
            }
            Ok(sum)
        }
    }
}

/// Coefficients c₀…c_N of Ψ_N.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    exact: Option<Vec<BigRational>>,
    coeffs: Vec<f64>,
    /// Level at which a zero pivot ended the construction.
    pub terminated_at: Option<usize>,
}

fn quotient_table<S: Scalar>(a0: Vec<S>) -> Result<(Vec<S>, Option<usize>)> {
    let m = a0.len() - 1;
    if a0[0] == S::zero() {
        return Err(Error::ZeroPivot(0));
    }
    let mut c = vec![a0[0].clone()];
    if m == 0 {
        return Ok((c, None));
    }
    let a1: Vec<S> = (0..m).map(|k| -(a0[k + 1].clone() / a0[0].clone())).collect();
    if a1[0] == S::zero() {
        return Ok((c, Some(1)));
    }
    c.push(a1[0].clone());
    let (mut prev2, mut prev1) = (a0, a1);
    for n in 2..=m {
        let p2 = prev2[0].clone();
        let p1 = prev1[0].clone();
        let row: Vec<S> = (0..=m - n)
            .map(|k| prev2[k + 1].clone() / p2.clone() - prev1[k + 1].clone() / p1.clone())
            .collect();
        if row[0] == S::zero() {
            log::debug!("zero pivot at level {n}; continued fraction terminates");
            return Ok((c, Some(n)));
        }
        c.push(row[0].clone());
        prev2 = prev1;
        prev1 = row;
    }
    Ok((c, None))
}

/// Continued-fraction coefficients from a derivative table.
///
/// A vanishing pivot A_{n,0} means Ψ is rational and already represented by
/// levels 0…n−1; the fraction is truncated there and `terminated_at` is set.
pub fn cf_coefficients(table: &DerivativeTable) -> Result<ContinuedFraction> {
    match table.exact() {
        Some(exact) => {
            let mut fact = BigInt::one();
            let a0: Vec<BigRational> = exact
                .iter()
                .enumerate()
                .map(|(m, d)| {
                    if m > 0 {
                        fact *= BigInt::from(m);
                    }
                    d / BigRational::from_integer(fact.clone())
                })
                .collect();
            let (c, terminated_at) = quotient_table(a0)?;
            Ok(ContinuedFraction::from_exact(c, terminated_at))
        }
        None => {
            let mut fact = 1.0;
            let a0: Vec<f64> = table
                .values()
                .iter()
                .enumerate()
                .map(|(m, d)| {
                    if m > 0 {
                        fact *= m as f64;
                    }
                    d / fact
                })
                .collect();
            let (c, terminated_at) = quotient_table(a0)?;
            Ok(ContinuedFraction {
                exact: None,
                coeffs: c,
                terminated_at,
            })
        }
    }
}

impl ContinuedFraction {
    pub fn from_exact(c: Vec<BigRational>, terminated_at: Option<usize>) -> Self {
        Self {
            coeffs: c.iter().map(rational_to_f64).collect(),
            exact: Some(c),
            terminated_at,
        }
    }

    pub fn from_f64(c: Vec<f64>) -> Self {
        Self {
            exact: None,
            coeffs: c,
            terminated_at: None,
        }
    }

    /// Highest available truncation level.
    pub fn level(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn exact(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n > self.level() {
            Err(Error::TruncationTooLarge {
                requested: n,
                available: self.level(),
            })
        } else {
            Ok(())
        }
    }

    /// Ψ_N(y) by backward recurrence in double precision.
    pub fn eval(&self, n: usize, y: f64) -> Result<f64> {
        self.check_level(n)?;
        let c = &self.coeffs;
        if n == 0 {
            return Ok(c[0]);
        }
        let mut t = 1.0 + c[n] * y;
        for k in (1..n).rev() {
            let scale = 1.0 + (c[k + 1] * y).abs();
            if t.abs() < 1e-12 * scale {
                return Err(Error::PoleHit { y });
            }
            t = 1.0 + c[k] * y / t;
        }
        if t.abs() < 1e-12 * (1.0 + (c[1] * y).abs()) {
            return Err(Error::PoleHit { y });
        }
        Ok(c[0] / t)
    }

    /// Ψ_N(y) in exact arithmetic; `None` when not exact or at a pole.
    pub fn eval_exact(&self, n: usize, y: &BigRational) -> Option<BigRational> {
        let c = self.exact.as_ref()?;
        if n > self.level() {
            return None;
        }
        let one = BigRational::one();
        let mut t = &one + &c[n] * y;
        for k in (1..n).rev() {
            if t.is_zero() {
                return None;
            }
            t = &one + &c[k] * y / &t;
        }
        if n > 0 && t.is_zero() {
            return None;
        }
        Some(if n == 0 { c[0].clone() } else { &c[0] / &t })
    }

    /// Double-precision value plus its relative disagreement with the exact
    /// evaluation; disagreement above 1e-8 is logged.
    pub fn eval_checked(&self, n: usize, y: f64) -> Result<(f64, Option<f64>)> {
        let v = self.eval(n, y)?;
        let Some(yq) = rational_from_f64(y) else {
            return Ok((v, None));
        };
        let dev = self.eval_exact(n, &yq).map(|e| {
            let e = rational_to_f64(&e);
            (v - e).abs() / e.abs().max(f64::MIN_POSITIVE)
        });
        if let Some(d) = dev {
            if d > 1e-8 {
                log::warn!("Psi_{n}({y}) loses precision: relative disagreement {d:e}");
            }
        }
        Ok((v, dev))
    }

    /// Ψ_N = P/Q via the convergent recurrence
    /// X_m = X_{m−1} + a_m X_{m−2} with a₁ = c₀, a_m = c_{m−1} y.
    pub fn to_rational(&self, n: usize) -> Result<RationalForm> {
        self.check_level(n)?;
        match &self.exact {
            Some(c) => {
                let (p, q) = convergent(&c[..=n]);
                Ok(RationalForm::from_exact(p, q))
            }
            None => {
                let (p, q) = convergent(&self.coeffs[..=n]);
                Ok(RationalForm::from_f64(p, q))
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "continued_fraction",
            "level": self.level(),
            "terminated_at": self.terminated_at,
            "coefficients": (0..self.coeffs.len()).map(|n| serde_json::json!({
                "n": n,
                "exact": self.exact.as_ref().map(|e| rational_string(&e[n])),
                "value": self.coeffs[n],
            })).collect::<Vec<_>>(),
        })
    }
}

fn poly_add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); a.len().max(b.len())];
    for (k, v) in a.iter().enumerate() {
        out[k] = out[k].clone() + v.clone();
    }
    for (k, v) in b.iter().enumerate() {
        out[k] = out[k].clone() + v.clone();
    }
    out
}

/// Multiply by c·y.
fn poly_shift_scale<S: Scalar>(a: &[S], c: &S) -> Vec<S> {
    std::iter::once(S::zero())
        .chain(a.iter().map(|v| v.clone() * c.clone()))
        .collect()
}

fn trim<S: Scalar>(mut p: Vec<S>) -> Vec<S> {
    while p.len() > 1 && *p.last().expect("nonempty") == S::zero() {
        p.pop();
    }
    p
}

fn convergent<S: Scalar>(c: &[S]) -> (Vec<S>, Vec<S>) {
    // X_{-1}, X_0
    let (mut p2, mut p1) = (vec![S::one()], vec![S::zero()]);
    let (mut q2, mut q1) = (vec![S::zero()], vec![S::one()]);
    for (m, cm) in c.iter().enumerate() {
        let (pn, qn) = if m == 0 {
            (
                poly_add(&p1, &p2.iter().map(|v| v.clone() * cm.clone()).collect::<Vec<_>>()),
                poly_add(&q1, &q2.iter().map(|v| v.clone() * cm.clone()).collect::<Vec<_>>()),
            )
        } else {
            (
                poly_add(&p1, &poly_shift_scale(&p2, cm)),
                poly_add(&q1, &poly_shift_scale(&q2, cm)),
            )
        };
        p2 = std::mem::replace(&mut p1, pn);
        q2 = std::mem::replace(&mut q1, qn);
    }
    (trim(p1), trim(q1))
}

/// P(y)/Q(y) with ascending coefficients and Q(0) = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalForm {
    exact: Option<(Vec<BigRational>, Vec<BigRational>)>,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl RationalForm {
    /// Exact P/Q from ascending coefficients, rescaled so that Q(0) = 1.
    pub fn new(p: Vec<BigRational>, q: Vec<BigRational>) -> Result<Self> {
        let q0 = q.first().cloned().unwrap_or_else(BigRational::zero);
        if q0.is_zero() || p.is_empty() {
            return Err(Error::ZeroPivot(0));
        }
        let p = p.into_iter().map(|v| v / &q0).collect();
        let q = q.into_iter().map(|v| v / &q0).collect();
        Ok(Self::from_exact(trim(p), trim(q)))
    }

    fn from_exact(p: Vec<BigRational>, q: Vec<BigRational>) -> Self {
        debug_assert!(q[0].is_one());
        Self {
            numerator: p.iter().map(rational_to_f64).collect(),
            denominator: q.iter().map(rational_to_f64).collect(),
            exact: Some((p, q)),
        }
    }

    fn from_f64(p: Vec<f64>, q: Vec<f64>) -> Self {
        Self {
            exact: None,
            numerator: p,
            denominator: q,
        }
    }

    pub fn exact(&self) -> Option<(&[BigRational], &[BigRational])> {
        self.exact.as_ref().map(|(p, q)| (p.as_slice(), q.as_slice()))
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.numerator.len() - 1, self.denominator.len() - 1)
    }

    pub fn eval_num(&self, y: f64) -> f64 {
        horner(&self.numerator, y)
    }

    pub fn eval_den(&self, y: f64) -> f64 {
        horner(&self.denominator, y)
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.eval_num(y) / self.eval_den(y)
    }

    /// Maclaurin coefficients of P/Q through order `n`, exactly.
    pub fn series(&self, n: usize) -> Option<Vec<BigRational>> {
        let (p, q) = self.exact.as_ref()?;
        let mut s: Vec<BigRational> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut v = p.get(k).cloned().unwrap_or_else(BigRational::zero);
            for j in 1..=k.min(q.len() - 1) {
                v -= &q[j] * &s[k - j];
            }
            s.push(v / &q[0]);
        }
        Some(s)
    }
}

fn horner(c: &[f64], y: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * y + v)
}

/// Σ|c_k| y^k for the k-th derivative of the polynomial.
fn deriv_scale(c: &[f64], y: f64, order: usize) -> (f64, f64) {
    let mut val = 0.0;
    let mut scale = 0.0;
    for (i, ci) in c.iter().enumerate().skip(order) {
        let falling: f64 = ((i - order + 1)..=i).map(|v| v as f64).product();
        let t = ci * falling * y.powi((i - order) as i32);
        val += t;
        scale += t.abs();
    }
    (val, scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Defect {
    pub y: f64,
    pub multiplicity: usize,
    /// |Q(y)| / Σ|q_k|yᵏ at the refined root.
    pub residual: f64,
}

/// Positive real poles of a rational approximant in (0, y_max].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    pub y_max: f64,
    pub defects: Vec<Defect>,
    /// Denominator roots cancelled by a numerator root.
    pub cancelled: Vec<f64>,
}

impl DefectReport {
    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectScan {
    pub panels: usize,
    pub root_tol: f64,
    pub cancel_tol: f64,
}

impl Default for DefectScan {
    fn default() -> Self {
        Self {
            panels: 4096,
            root_tol: 1e-12,
            cancel_tol: 1e-8,
        }
    }
}

pub fn find_defects(rf: &RationalForm, y_max: f64) -> DefectReport {
    find_defects_with(rf, y_max, &DefectScan::default())
}

pub fn find_defects_with(rf: &RationalForm, y_max: f64, scan: &DefectScan) -> DefectReport {
    let q = &rf.denominator;
    let mut report = DefectReport {
        y_max,
        defects: Vec::new(),
        cancelled: Vec::new(),
    };
    if q.len() < 2 || !(y_max > 0.0) {
        return report;
    }
    let h = y_max / scan.panels as f64;
    let ys: Vec<f64> = (0..=scan.panels).map(|k| k as f64 * h).collect();
    let vals: Vec<f64> = ys.iter().map(|&y| horner(q, y)).collect();
    let rel = |y: f64, v: f64| v.abs() / deriv_scale(q, y, 0).1.max(f64::MIN_POSITIVE);
    let mut roots: Vec<f64> = Vec::new();
    for k in 0..scan.panels {
        let (a, b) = (ys[k], ys[k + 1]);
        let (fa, fb) = (vals[k], vals[k + 1]);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            roots.push(bisect(q, a, b, scan.root_tol));
        } else if fa != 0.0 && k > 0 && k + 1 < scan.panels {
            // Even-multiplicity roots show up as near-zero local minima of |Q|.
            let (fl, fr) = (vals[k - 1].abs(), vals[k + 1].abs());
            if fa.abs() <= fl && fa.abs() <= fr && rel(a, fa) < 1e-6 {
                let r = golden_min(|y| horner(q, y).abs(), ys[k - 1], ys[k + 1], scan.root_tol);
                if rel(r, horner(q, r)) < scan.cancel_tol {
                    roots.push(r);
                }
            }
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 0.5 * h);
    for r in roots.into_iter().filter(|&r| r > 0.0) {
        let (pv, ps) = deriv_scale(&rf.numerator, r, 0);
        if ps > 0.0 && pv.abs() / ps < scan.cancel_tol {
            report.cancelled.push(r);
            continue;
        }
        let multiplicity = (1..q.len())
            .find(|&k| {
                let (v, s) = deriv_scale(q, r, k);
                s > 0.0 && v.abs() / s > 1e-6
            })
            .unwrap_or(q.len() - 1);
        report.defects.push(Defect {
            y: r,
            multiplicity,
            residual: rel(r, horner(q, r)),
        });
    }
    report
}

fn bisect(q: &[f64], mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = horner(q, a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = horner(q, m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// How the working truncation level is chosen among admissible levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Highest admissible level.
    #[default]
    Highest,
    /// Level whose Ψ_N(y_max) lies closest to θ_eq; scores within
    /// [`SCORE_TIE_BAND`] of the best tie and ties go to even, then higher, N.
    ClosestToEquilibrium,
}

/// Outcome of choosing the working truncation level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub level: usize,
    /// Every level N ≥ 1 was rejected; `level` fell back to 0.
    pub no_admissible: bool,
    pub policy: SelectionPolicy,
    pub reports: Vec<DefectReport>,
    /// Ψ_N stays positive on (0, y_max].
    pub positive: Vec<bool>,
    /// Ψ_N(y_max) per level (None at a pole).
    pub tail_values: Vec<Option<f64>>,
    /// |Ψ_N(y_max) − θ_eq| / θ_eq, or |Ψ_N(y_max)| when θ_eq = 0.
    pub scores: Vec<Option<f64>>,
}

/// Absolute width, in score units, of the tie band for [`SelectionPolicy::ClosestToEquilibrium`].
pub const SCORE_TIE_BAND: f64 = 0.01;

/// Defect reports for Ψ₀…Ψ_M, computed in parallel.
pub fn defect_sweep(cf: &ContinuedFraction, y_max: f64, scan: &DefectScan) -> Vec<DefectReport> {
    (0..=cf.level())
        .into_par_iter()
        .map(|n| {
            let rf = cf.to_rational(n).expect("level in range");
            find_defects_with(&rf, y_max, scan)
        })
        .collect()
}

fn positive_on(cf: &ContinuedFraction, n: usize, y_max: f64, panels: usize) -> bool {
    (1..=panels).all(|k| {
        let y = y_max * k as f64 / panels as f64;
        cf.eval(n, y).is_ok_and(|v| v > 0.0)
    })
}

/// Pick the level used as θ(y): the highest N whose Ψ_N is free of defects
/// and positive on (0, y_max]. θ_eq, when known, is scored for every level
/// and drives the choice only under [`SelectionPolicy::ClosestToEquilibrium`].
pub fn select_approximant(cf: &ContinuedFraction, y_max: f64, theta_eq: Option<f64>) -> Selection {
    select_approximant_with(cf, y_max, theta_eq, SelectionPolicy::Highest, &DefectScan::default())
}

pub fn select_approximant_with(
    cf: &ContinuedFraction,
    y_max: f64,
    theta_eq: Option<f64>,
    policy: SelectionPolicy,
    scan: &DefectScan,
) -> Selection {
    let reports = defect_sweep(cf, y_max, scan);
    let positive: Vec<bool> = (0..=cf.level())
        .into_par_iter()
        .map(|n| positive_on(cf, n, y_max, scan.panels))
        .collect();
    let tail_values: Vec<Option<f64>> = (0..=cf.level()).map(|n| cf.eval(n, y_max).ok()).collect();
    let scores: Vec<Option<f64>> = (0..=cf.level())
        .map(|n| {
            let eq = theta_eq?;
            let v = tail_values[n]?;
            Some(if eq != 0.0 { (v - eq).abs() / eq.abs() } else { v.abs() })
        })
        .collect();
    let admissible: Vec<usize> = (1..=cf.level())
        .filter(|&n| reports[n].is_empty() && positive[n])
        .collect();
    let level = match (admissible.last(), policy, theta_eq) {
        (None, _, _) => 0,
        (Some(&top), SelectionPolicy::Highest, _) | (Some(&top), _, None) => top,
        (Some(&top), SelectionPolicy::ClosestToEquilibrium, Some(_)) => {
            let best = admissible
                .iter()
                .filter_map(|&n| scores[n])
                .fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = admissible
                .iter()
                .copied()
                .filter(|&n| scores[n].is_some_and(|s| s <= best + SCORE_TIE_BAND))
                .collect();
            tied.iter()
                .copied()
                .filter(|n| n % 2 == 0)
                .max()
                .or_else(|| tied.last().copied())
                .unwrap_or(top)
        }
    };
    Selection {
        level,
        no_admissible: admissible.is_empty() && cf.level() > 0,
        policy,
        reports,
        positive,
        tail_values,
        scores,
    }
}

/// Rows `y, value, N` for Φ_N curves.
pub fn taylor_curve(table: &DerivativeTable, n: usize, ys: &[f64]) -> Result<Vec<(f64, f64)>> {
    ys.iter().map(|&y| Ok((y, taylor_eval(table, n, y)?))).collect()
}

/// Rows `y, value, N` for Ψ_N curves; poles become NaN.
pub fn cf_curve(cf: &ContinuedFraction, n: usize, ys: &[f64]) -> Result<Vec<(f64, f64)>> {
    cf.check_level(n)?;
    Ok(ys.iter().map(|&y| (y, cf.eval(n, y).unwrap_or(f64::NAN))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{theta_derivatives_comptonization, Route};
    use crate::spectra::{InitialSpectrum, TransportParams};
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn exact_table(d: &[i64]) -> DerivativeTable {
        DerivativeTable::from_exact(
            Route::Comptonization,
            TransportParams::comptonization(),
            "test",
            d.iter().map(|&v| q(v)).collect(),
        )
    }

    fn mono(order: usize) -> DerivativeTable {
        theta_derivatives_comptonization(&InitialSpectrum::monoenergetic(4.0, 1.0).unwrap(), order).unwrap()
    }

    fn brems(order: usize) -> DerivativeTable {
        theta_derivatives_comptonization(&InitialSpectrum::Bremsstrahlung, order).unwrap()
    }

    #[test]
    fn taylor_partial_sums() {
        let t = mono(2);
        assert_eq!(taylor_eval(&t, 2, 0.0).unwrap(), 1.0);
        assert!((taylor_eval(&t, 2, 0.1).unwrap() - 1.14).abs() < 1e-15);
        assert!(matches!(
            taylor_eval(&t, 3, 0.1),
            Err(Error::TruncationTooLarge { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn leading_coefficients() {
        let cf = cf_coefficients(&mono(4)).unwrap();
        assert_eq!(&cf.exact().unwrap()[..3], &[q(1), q(-2), q(5)]);
        let cf = cf_coefficients(&brems(4)).unwrap();
        let c = cf.exact().unwrap();
        assert_eq!(&c[..3], &[q(1), q(6), q(5)]);
        assert!((cf.coeffs()[3] - 11.13).abs() < 0.005);
    }

    #[test]
    fn constant_function_terminates() {
        let cf = cf_coefficients(&exact_table(&[1, 0, 0, 0])).unwrap();
        assert_eq!(cf.terminated_at, Some(1));
        assert_eq!(cf.level(), 0);
        for y in [0.0, 0.7, 5.0] {
            assert_eq!(cf.eval(0, y).unwrap(), 1.0);
        }
        assert!(matches!(
            cf_coefficients(&exact_table(&[0, 1])),
            Err(Error::ZeroPivot(0))
        ));
    }

    #[test]
    fn backward_recurrence() {
        let cf = ContinuedFraction::from_exact(vec![q(1), q(-2), q(5)], None);
        assert_eq!(cf.eval(0, 123.0).unwrap(), 1.0);
        assert!((cf.eval(1, 0.1).unwrap() - 1.25).abs() < 1e-15);
        assert!(matches!(cf.eval(1, 0.5), Err(Error::PoleHit { .. })));
        let exact = cf.eval_exact(2, &BigRational::new(1.into(), 10.into())).unwrap();
        assert_eq!(exact, BigRational::new(15.into(), 13.into()));
        let (v, dev) = cf.eval_checked(2, 0.1).unwrap();
        assert!((v - 15.0 / 13.0).abs() < 1e-15);
        assert!(dev.unwrap() < 1e-15);
    }

    #[test]
    fn rational_forms_by_hand() {
        let cf = ContinuedFraction::from_exact(vec![q(1), q(-2), q(5)], None);
        let r1 = cf.to_rational(1).unwrap();
        assert_eq!(r1.exact().unwrap(), (&[q(1)][..], &[q(1), q(-2)][..]));
        let r2 = cf.to_rational(2).unwrap();
        assert_eq!(r2.exact().unwrap(), (&[q(1), q(5)][..], &[q(1), q(3)][..]));
        assert!((r2.eval(0.1) - cf.eval(2, 0.1).unwrap()).abs() < 1e-15);
        assert_eq!(r2.degrees(), (1, 1));
    }

    #[test]
    fn rational_form_matches_recurrence() {
        let cf = cf_coefficients(&mono(12)).unwrap();
        let mut rng = 0x2545_f491_4f6c_dd1du64;
        for _ in 0..100 {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            let y = 2.0 * (rng >> 11) as f64 / (1u64 << 53) as f64;
            for n in [4, 7, 12] {
                let rf = cf.to_rational(n).unwrap();
                if let Ok(v) = cf.eval(n, y) {
                    if rf.eval_den(y).abs() > 1e-6 {
                        assert!((rf.eval(y) - v).abs() <= 1e-10 * v.abs(), "N={n} y={y}");
                    }
                }
            }
        }
    }

    #[test]
    fn linear_denominator_root() {
        let rf = RationalForm::new(vec![q(1)], vec![q(1), q(-2)]).unwrap();
        let rep = find_defects(&rf, 2.0);
        assert_eq!(rep.defects.len(), 1);
        assert!((rep.defects[0].y - 0.5).abs() < 1e-12);
        assert_eq!(rep.defects[0].multiplicity, 1);
    }

    #[test]
    fn double_root_and_cancellation() {
        // Q = (1 − y)², P = 1
        let rf = RationalForm::new(vec![q(1)], vec![q(1), q(-2), q(1)]).unwrap();
        let rep = find_defects(&rf, 2.0);
        assert_eq!(rep.defects.len(), 1);
        assert!((rep.defects[0].y - 1.0).abs() < 1e-6);
        assert_eq!(rep.defects[0].multiplicity, 2);
        // P = 1 − 2y cancels Q = 1 − 2y
        let rf = RationalForm::new(vec![q(1), q(-2)], vec![q(1), q(-2)]).unwrap();
        let rep = find_defects(&rf, 2.0);
        assert!(rep.is_empty());
        assert_eq!(rep.cancelled.len(), 1);
        // root beyond the inspection window
        let rf = RationalForm::new(vec![q(1)], vec![q(1), q(-1)]).unwrap();
        assert!(find_defects(&rf, 0.5).is_empty());
    }

    #[test]
    fn pade_property() {
        for t in [mono(10), brems(10)] {
            let cf = cf_coefficients(&t).unwrap();
            let mut fact = BigRational::one();
            let taylor: Vec<BigRational> = t
                .exact()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(m, d)| {
                    if m > 0 {
                        fact *= q(m as i64);
                    }
                    d / &fact
                })
                .collect();
            for n in 0..=10 {
                let rf = cf.to_rational(n).unwrap();
                let (dp, dq) = rf.degrees();
                assert!(dp <= n / 2 && dq <= (n + 1) / 2, "N={n} degrees {dp},{dq}");
                assert_eq!(rf.series(n).unwrap(), taylor[..=n].to_vec(), "N={n}");
            }
        }
    }

    #[test]
    fn truncation_stability() {
        let full = cf_coefficients(&mono(10)).unwrap();
        for m in [0, 3, 6, 9] {
            let part = cf_coefficients(&mono(10).truncated(m)).unwrap();
            assert_eq!(part.exact().unwrap(), &full.exact().unwrap()[..=m]);
        }
    }

    #[test]
    fn bremsstrahlung_even_levels_settle() {
        let cf = cf_coefficients(&brems(12)).unwrap();
        assert!(cf.exact().unwrap().iter().all(|c| c > &BigRational::zero()));
        for k in 1..=20 {
            let y = 0.1 * k as f64;
            let v: Vec<f64> = [8, 10, 12].iter().map(|&n| cf.eval(n, y).unwrap()).collect();
            assert!((v[2] - v[1]).abs() <= (v[1] - v[0]).abs(), "y={y}");
        }
    }

    #[test]
    fn selection_trivial_and_pole() {
        let cf = ContinuedFraction::from_exact(vec![q(1)], None);
        let sel = select_approximant(&cf, 2.0, Some(1.0));
        assert_eq!(sel.level, 0);
        assert!(!sel.no_admissible);
        let cf = ContinuedFraction::from_exact(vec![q(1), q(-2)], None);
        let sel = select_approximant(&cf, 2.0, None);
        assert_eq!(sel.level, 0);
        assert!(sel.no_admissible);
    }

    #[test]
    fn selection_policies() {
        // Ψ₁ = 1/(1+y), Ψ₂ = (1+y)/(1+2y); Ψ₂(2) = 0.6, Ψ₁(2) = 1/3.
        let cf = ContinuedFraction::from_exact(vec![q(1), q(1), q(1)], None);
        assert_eq!(select_approximant(&cf, 2.0, Some(0.3)).level, 2);
        let sel = select_approximant_with(
            &cf,
            2.0,
            Some(0.3),
            SelectionPolicy::ClosestToEquilibrium,
            &DefectScan::default(),
        );
        assert_eq!(sel.level, 1);
        assert!((sel.scores[1].unwrap() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn json_shape() {
        let cf = ContinuedFraction::from_exact(vec![q(1), q(-2)], None);
        let v = cf.to_json();
        assert_eq!(v["level"], 1);
        assert_eq!(v["coefficients"][1]["exact"], "-2");
    }

    proptest! {
        #[test]
        fn prop_rational_form_normalized(c in proptest::collection::vec(-20i64..20, 1..9)) {
            let mut c: Vec<BigRational> = c.into_iter().map(q).collect();
            c[0] = q(1);
            let cf = ContinuedFraction::from_exact(c, None);
            for n in 0..=cf.level() {
                let rf = cf.to_rational(n).unwrap();
                let (p, qq) = rf.exact().unwrap();
                prop_assert!(qq[0].is_one());
                prop_assert_eq!(&p[0], &q(1));
            }
        }

        #[test]
        fn prop_exact_and_float_agree(c in proptest::collection::vec(1i64..30, 2..12), y in 0.0f64..2.0) {
            let cf = ContinuedFraction::from_exact(c.into_iter().map(q).collect(), None);
            let n = cf.level();
            let (v, dev) = cf.eval_checked(n, y).unwrap();
            prop_assert!(v > 0.0);
            prop_assert!(dev.unwrap() < 1e-12);
        }
    }
}
