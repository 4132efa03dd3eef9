//! Exact initial derivatives θ⁽ⁿ⁾(0) from the initial power moments.
//!
//! Two independent routes:
//!
//! * **Comptonization** (i = j = k = 2, α = 4): iterate
//!   I_{n+1} = θ · D_n I_n from I₃ = const, with
//!   D_n = (2 − n)⁻¹ [d/dy − (n + 1)(n − 2)], giving I_n/I₃(0) as a polynomial
//!   in θ, θ⁽¹⁾, …, θ⁽ⁿ⁻⁴⁾. Each expression is affine in its top derivative,
//!   so matching against I_n(0)/I₃(0) determines θ⁽ⁿ⁻⁴⁾(0) one order at a time.
//! * **General**: differentiate I_α repeatedly under the moment ODE
//!   dI_n/dy = (n − i)[(n + k − 1) I_{n+k−2} − I_{n+j−1}/θ] and evaluate at
//!   y = 0, where θ = 1 and the lower derivatives are already known.
//!
//! Expression templates depend only on the transport exponents, so they are
//! built once and cached for reuse across spectra.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Monomial, ThetaExpression, Var};
use crate::io::{rational_string, SCHEMA_VERSION};
use crate::scalar::{rational_from_i64, rational_to_f64, Scalar};
use crate::spectra::{
    check_temperature_normalization, format_rational64, parse_rational, InitialSpectrum, MomentIndex,
    TransportParams,
};

/// Default derivative order.
pub const DEFAULT_ORDER: usize = 24;

/// D_n = (2 − n)⁻¹ e^{(n+1)(n−2)y} d/dy e^{−(n+1)(n−2)y}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferentialOperatorD {
    n: i64,
}

impl DifferentialOperatorD {
    pub fn new(n: i64) -> Result<Self> {
        if n == 2 {
            Err(Error::DegenerateIndex(n))
        } else {
            Ok(Self { n })
        }
    }

    pub fn index(&self) -> i64 {
        self.n
    }

    pub fn apply(&self, expr: &ThetaExpression) -> ThetaExpression {
        let n = self.n;
        let rate = rational_from_i64((n + 1) * (n - 2));
        let inv = BigRational::new(1.into(), (2 - n).into());
        (&expr.derive_theta() - &expr.scale(&rate)).scale(&inv)
    }
}

pub fn apply_d(expr: &ThetaExpression, n: i64) -> Result<ThetaExpression> {
    Ok(DifferentialOperatorD::new(n)?.apply(expr))
}

fn compton_cache() -> &'static Mutex<Vec<Arc<ThetaExpression>>> {
    static CACHE: OnceLock<Mutex<Vec<Arc<ThetaExpression>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(vec![Arc::new(ThetaExpression::integer(1))]))
}

/// I_n(y)/I₃(0) as an exact polynomial in θ⁽⁰⁾…θ⁽ⁿ⁻⁴⁾, for n ≥ 3.
pub fn moment_expression(n: u32) -> Result<Arc<ThetaExpression>> {
    if n < 3 {
        return Err(Error::DegenerateIndex(n as i64));
    }
    let slot = (n - 3) as usize;
    let mut cache = compton_cache().lock().expect("template cache poisoned");
    while cache.len() <= slot {
        let m = cache.len() as i64 + 2; // index of the last cached moment
        let last = cache.last().expect("seeded");
        let next = &ThetaExpression::theta(0) * &DifferentialOperatorD::new(m)?.apply(last);
        cache.push(Arc::new(next));
    }
    Ok(Arc::clone(&cache[slot]))
}

type GeneralKey = TransportParams;

fn general_cache() -> &'static Mutex<HashMap<GeneralKey, Vec<Arc<ThetaExpression>>>> {
    static CACHE: OnceLock<Mutex<HashMap<GeneralKey, Vec<Arc<ThetaExpression>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// dI_n/dy under the moment ODE, as an expression.
pub fn moment_derivative(params: &TransportParams, n: MomentIndex) -> ThetaExpression {
    let to_q = |r: MomentIndex| BigRational::new((*r.numer()).into(), (*r.denom()).into());
    let gain = ThetaExpression::monomial(
        Monomial::var(Var::Moment(n + params.k - 2), 1),
        to_q(n + params.k - 1),
    );
    let loss = ThetaExpression::monomial(
        Monomial::var(Var::Moment(n + params.j - 1), 1).mul(&Monomial::var(Var::Theta(0), -1)),
        BigRational::one(),
    );
    (&gain - &loss).scale(&to_q(n - params.i))
}

/// (d/dy)^r I_α for r = 0…order, with every moment derivative eliminated.
pub fn general_expressions(params: &TransportParams, order: usize) -> Vec<Arc<ThetaExpression>> {
    let mut cache = general_cache().lock().expect("template cache poisoned");
    let list = cache
        .entry(*params)
        .or_insert_with(|| vec![Arc::new(ThetaExpression::moment(params.alpha))]);
    while list.len() <= order {
        let last = list.last().expect("seeded");
        let next = last.derive_with(|v| match v {
            Var::Theta(m) => ThetaExpression::theta(m + 1),
            Var::Moment(n) => moment_derivative(params, n),
        });
        list.push(Arc::new(next));
    }
    list[..=order].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Comptonization,
    General,
}

/// θ⁽ⁿ⁾(0) for n = 0…M. Exact when every moment used was exact.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTable {
    pub route: Route,
    pub params: TransportParams,
    pub spectrum: String,
    exact: Option<Vec<BigRational>>,
    values: Vec<f64>,
    /// Moment indices consulted, with their double-precision values.
    pub moments_used: Vec<(MomentIndex, f64)>,
    pub warnings: Vec<String>,
}

impl DerivativeTable {
    pub fn from_exact(route: Route, params: TransportParams, spectrum: &str, exact: Vec<BigRational>) -> Self {
        Self {
            route,
            params,
            spectrum: spectrum.to_string(),
            values: exact.iter().map(rational_to_f64).collect(),
            exact: Some(exact),
            moments_used: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn from_f64(route: Route, params: TransportParams, spectrum: &str, values: Vec<f64>) -> Self {
        Self {
            route,
            params,
            spectrum: spectrum.to_string(),
            exact: None,
            values,
            moments_used: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Highest derivative order M.
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exact(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Table restricted to orders 0…m.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.order());
        let mut t = self.clone();
        t.values.truncate(m + 1);
        if let Some(e) = t.exact.as_mut() {
            e.truncate(m + 1);
        }
        t
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<_> = (0..self.values.len())
            .map(|n| {
                let (num, den) = match &self.exact {
                    Some(e) => (Some(e[n].numer().to_string()), Some(e[n].denom().to_string())),
                    None => (None, None),
                };
                serde_json::json!({
                    "n": n,
                    "numerator": num,
                    "denominator": den,
                    "value": self.values[n],
                })
            })
            .collect();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "derivative_table",
            "route": self.route,
            "params": self.params,
            "spectrum": self.spectrum,
            "exact": self.exact.is_some(),
            "entries": entries,
            "moments_used": self.moments_used.iter()
                .map(|(n, v)| serde_json::json!({ "index": format_rational64(n), "value": v }))
                .collect::<Vec<_>>(),
            "warnings": self.warnings,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let bad = |what: &str| Error::InvalidSpectrum(format!("derivative table JSON: {what}"));
        let route: Route = serde_json::from_value(v["route"].clone())?;
        let p = &v["params"];
        let field = |k: &str| {
            p[k].as_str()
                .and_then(parse_rational)
                .ok_or_else(|| bad(&format!("params.{k}")))
        };
        let params = TransportParams::new(field("i")?, field("j")?, field("k")?, field("alpha")?)?;
        let spectrum = v["spectrum"].as_str().unwrap_or("unknown");
        let entries = v["entries"].as_array().ok_or_else(|| bad("entries"))?;
        if v["exact"].as_bool() == Some(true) {
            let exact = entries
                .iter()
                .map(|e| {
                    let num: num_bigint::BigInt =
                        e["numerator"].as_str().and_then(|s| s.parse().ok()).ok_or_else(|| bad("numerator"))?;
                    let den: num_bigint::BigInt =
                        e["denominator"].as_str().and_then(|s| s.parse().ok()).ok_or_else(|| bad("denominator"))?;
                    Ok(BigRational::new(num, den))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Self::from_exact(route, params, spectrum, exact))
        } else {
            let vals = entries
                .iter()
                .map(|e| e["value"].as_f64().ok_or_else(|| bad("value")))
                .collect::<Result<Vec<_>>>()?;
            Ok(Self::from_f64(route, params, spectrum, vals))
        }
    }

    /// Rows `n, value, exact` with `digits` significant digits.
    pub fn csv_rows(&self, digits: usize) -> Vec<Vec<String>> {
        (0..self.values.len())
            .map(|n| {
                vec![
                    n.to_string(),
                    crate::scalar::format_sig(self.values[n], digits),
                    self.exact.as_ref().map(|e| rational_string(&e[n])).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

fn warn_cost(order: usize) {
    if order > DEFAULT_ORDER {
        log::warn!("derivative order {order} > {DEFAULT_ORDER}: template construction grows quickly");
    }
}

/// Moment values as exact rationals when every one is exact, floats otherwise.
enum MomentSet {
    Exact(HashMap<MomentIndex, BigRational>),
    Approx(HashMap<MomentIndex, f64>),
}

fn gather_moments(
    spectrum: &InitialSpectrum,
    indices: &[MomentIndex],
) -> Result<(MomentSet, Vec<(MomentIndex, f64)>)> {
    let mut exact = HashMap::new();
    let mut approx = HashMap::new();
    let mut all_exact = true;
    let mut used = Vec::with_capacity(indices.len());
    for &n in indices {
        let m = spectrum.initial_moment(n)?;
        used.push((n, m.value));
        approx.insert(n, m.value);
        match m.exact {
            Some(e) => {
                exact.insert(n, e);
            }
            None => all_exact = false,
        }
    }
    Ok((
        if all_exact {
            MomentSet::Exact(exact)
        } else {
            MomentSet::Approx(approx)
        },
        used,
    ))
}

fn solve_comptonization<S: Scalar>(ratios: &[S], order: usize) -> Result<Vec<S>> {
    let mut vals: Vec<S> = Vec::with_capacity(order + 1);
    for r in 0..=order {
        let expr = moment_expression(r as u32 + 4)?;
        let top = Var::Theta(r as u32);
        let (a, b) = expr.affine_split(top).ok_or_else(|| Error::NonlinearSolveImpossible {
            order: r,
            reason: "moment expression is not affine in its top derivative".into(),
        })?;
        let lookup = |v: Var| match v {
            Var::Theta(m) => vals.get(m as usize).cloned(),
            Var::Moment(_) => None,
        };
        let unbound = |v: Var| Error::NonlinearSolveImpossible {
            order: r,
            reason: format!("unbound variable {v}"),
        };
        let lead = a.eval(lookup).map_err(unbound)?;
        let rest = b.eval(lookup).map_err(unbound)?;
        if lead == S::zero() {
            return Err(Error::NonlinearSolveImpossible {
                order: r,
                reason: "leading coefficient vanishes".into(),
            });
        }
        vals.push((ratios[r].clone() - rest) / lead);
    }
    Ok(vals)
}

/// Route chosen by parameters: the D_n recurrence for Comptonization,
/// direct differentiation otherwise.
pub fn theta_derivatives(params: &TransportParams, spectrum: &InitialSpectrum, order: usize) -> Result<DerivativeTable> {
    if params.is_comptonization() {
        theta_derivatives_comptonization(spectrum, order)
    } else {
        theta_derivatives_general(params, spectrum, order)
    }
}

/// θ⁽ⁿ⁾(0), n = 0…order, through the D_n recurrence (Comptonization only).
pub fn theta_derivatives_comptonization(spectrum: &InitialSpectrum, order: usize) -> Result<DerivativeTable> {
    let params = TransportParams::comptonization();
    warn_cost(order);
    let norm = check_temperature_normalization(spectrum, &params)?;
    if !norm.pass {
        return Err(Error::NormalizationViolated { ratio: norm.ratio });
    }
    let indices: Vec<MomentIndex> = (3..=order as i64 + 4).map(MomentIndex::from).collect();
    let (moments, used) = gather_moments(spectrum, &indices)?;
    let mut table = match moments {
        MomentSet::Exact(m) => {
            let i3 = &m[&3.into()];
            let ratios: Vec<BigRational> = (4..=order as i64 + 4).map(|n| &m[&n.into()] / i3).collect();
            let mut vals = solve_comptonization(&ratios, order)?;
            // θ(0) = I₄/(4I₃) = 1 exactly once the normalization check has passed.
            debug_assert!(vals[0].is_one());
            vals[0] = BigRational::one();
            DerivativeTable::from_exact(Route::Comptonization, params, spectrum.name(), vals)
        }
        MomentSet::Approx(m) => {
            let i3 = m[&3.into()];
            let ratios: Vec<f64> = (4..=order as i64 + 4).map(|n| m[&n.into()] / i3).collect();
            let vals = solve_comptonization(&ratios, order)?;
            DerivativeTable::from_f64(Route::Comptonization, params, spectrum.name(), vals)
        }
    };
    table.moments_used = used;
    Ok(table)
}

fn solve_general<S: Scalar>(
    exprs: &[Arc<ThetaExpression>],
    moments: &HashMap<MomentIndex, S>,
    alpha: MomentIndex,
) -> Result<Vec<S>> {
    let i_alpha = moments[&alpha].clone();
    let mut vals: Vec<S> = vec![S::one()];
    for (r, expr) in exprs.iter().enumerate().skip(1) {
        let v = expr
            .eval(|v| match v {
                Var::Theta(m) => vals.get(m as usize).cloned(),
                Var::Moment(n) => moments.get(&n).cloned(),
            })
            .map_err(|v| Error::NonlinearSolveImpossible {
                order: r,
                reason: format!("unbound variable {v}"),
            })?;
        vals.push(v / i_alpha.clone());
    }
    Ok(vals)
}

/// θ⁽ⁿ⁾(0), n = 0…order, by direct differentiation under the moment ODE.
pub fn theta_derivatives_general(
    params: &TransportParams,
    spectrum: &InitialSpectrum,
    order: usize,
) -> Result<DerivativeTable> {
    warn_cost(order);
    let exprs = general_expressions(params, order);
    let mut indices: Vec<MomentIndex> = exprs.iter().flat_map(|e| e.moment_indices()).collect();
    indices.push(params.alpha);
    indices.sort();
    indices.dedup();
    let (moments, used) = gather_moments(spectrum, &indices)?;
    let mut table = match moments {
        MomentSet::Exact(m) => {
            if m[&params.alpha].is_zero() {
                return Err(Error::NonlinearSolveImpossible {
                    order: 0,
                    reason: "I_alpha(0) vanishes".into(),
                });
            }
            let vals = solve_general(&exprs, &m, params.alpha)?;
            DerivativeTable::from_exact(Route::General, *params, spectrum.name(), vals)
        }
        MomentSet::Approx(m) => {
            let vals = solve_general(&exprs, &m, params.alpha)?;
            DerivativeTable::from_f64(Route::General, *params, spectrum.name(), vals)
        }
    };
    table.moments_used = used;
    if params.is_degenerate_alpha() {
        let msg = "DegenerateAlpha: alpha = i, theta is constant".to_string();
        log::warn!("{msg}");
        table.warnings.push(msg);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn t(m: u32) -> ThetaExpression {
        ThetaExpression::theta(m)
    }

    #[test]
    fn d_of_constant() {
        // (2−3)⁻¹ (0 − 4·1) = 4
        let got = apply_d(&ThetaExpression::integer(1), 3).unwrap();
        assert_eq!(got, ThetaExpression::integer(4));
    }

    #[test]
    fn d_of_theta() {
        let got = apply_d(&t(0), 3).unwrap();
        let want = &t(0).scale(&q(4, 1)) - &t(1);
        assert_eq!(got, want);
    }

    #[test]
    fn d_rejects_two() {
        assert!(matches!(apply_d(&t(0), 2), Err(Error::DegenerateIndex(2))));
    }

    #[test]
    fn low_moment_expressions() {
        assert_eq!(*moment_expression(4).unwrap(), t(0).scale(&q(4, 1)));
        let i5 = &t(0) * &(&t(0).scale(&q(20, 1)) - &t(1).scale(&q(2, 1)));
        assert_eq!(*moment_expression(5).unwrap(), i5);
        // −θ/3 [−360θ² + 76θθ' − 2θ'² − 2θθ'']
        let th = t(0);
        let inner = &(&(&(&th * &th).scale(&q(-360, 1)) + &(&th * &t(1)).scale(&q(76, 1)))
            - &(&t(1) * &t(1)).scale(&q(2, 1)))
            - &(&th * &t(2)).scale(&q(2, 1));
        let i6 = (&th * &inner).scale(&q(-1, 3));
        assert_eq!(*moment_expression(6).unwrap(), i6);
    }

    #[test]
    fn moment_expression_order_bound() {
        for n in 4..=14 {
            assert_eq!(moment_expression(n).unwrap().max_theta_order(), Some(n - 4));
        }
        assert_eq!(moment_expression(3).unwrap().max_theta_order(), None);
    }

    #[test]
    fn i6_at_monoenergetic_values() {
        let e = moment_expression(6).unwrap();
        let v: BigRational = e
            .eval(|v| match v {
                Var::Theta(0) => Some(q(1, 1)),
                Var::Theta(1) => Some(q(2, 1)),
                Var::Theta(2) => Some(q(-12, 1)),
                _ => None,
            })
            .unwrap();
        assert_eq!(v, q(64, 1));
    }

    #[test]
    fn low_order_tables() {
        let mono = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
        let t = theta_derivatives_comptonization(&mono, 2).unwrap();
        assert_eq!(t.exact().unwrap(), &[q(1, 1), q(2, 1), q(-12, 1)]);
        let b = theta_derivatives_comptonization(&InitialSpectrum::Bremsstrahlung, 2).unwrap();
        assert_eq!(b.exact().unwrap(), &[q(1, 1), q(-6, 1), q(132, 1)]);
        let z = theta_derivatives_comptonization(&InitialSpectrum::Bremsstrahlung, 0).unwrap();
        assert_eq!(z.values(), &[1.0]);
    }

    #[test]
    fn unnormalized_spectrum_is_rejected() {
        let mono3 = InitialSpectrum::monoenergetic(3.0, 1.0).unwrap();
        assert!(matches!(
            theta_derivatives_comptonization(&mono3, 2),
            Err(Error::NormalizationViolated { .. })
        ));
    }

    #[test]
    fn general_route_first_derivative() {
        let mono = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
        let t = theta_derivatives_general(&TransportParams::comptonization(), &mono, 1).unwrap();
        assert_eq!(t.exact().unwrap()[1], q(2, 1));
    }

    #[test]
    fn degenerate_alpha_freezes_theta() {
        let params = TransportParams::from_integers(2, 2, 2, 2).unwrap();
        let t = theta_derivatives_general(&params, &InitialSpectrum::monoenergetic(4.0, 1.0).unwrap(), 4).unwrap();
        assert_eq!(t.values(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(t.warnings.iter().any(|w| w.contains("DegenerateAlpha")));
    }

    #[test]
    fn general_route_reports_divergent_index() {
        // i=j=k=2, α=3 needs I_3, I_4, ... and I_{α+k-2}: fine; α=3 with k=1 reaches I_2.
        let params = TransportParams::from_integers(2, 2, 1, 3).unwrap();
        let err = theta_derivatives_general(&params, &InitialSpectrum::Bremsstrahlung, 2).unwrap_err();
        assert!(matches!(err, Error::DivergentMoment { index, .. } if index <= 2.0), "{err}");
    }

    #[test]
    fn general_route_non_integer_exponent() {
        let params = TransportParams::new(2.into(), 2.into(), MomentIndex::new(3, 2), 4.into()).unwrap();
        let mono = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
        let t = theta_derivatives_general(&params, &mono, 3).unwrap();
        assert_eq!(t.values()[0], 1.0);
        // dθ/dy(0) = (α−i)/I_α [(α+k−1) I_{α+k−2} − I_{α+j−1}] with I_n = 4^{n−2}
        let i = |n: f64| 4f64.powf(n - 2.0);
        let expect = 2.0 / i(4.0) * (4.5 * i(3.5) - i(5.0));
        assert!((t.values()[1] - expect).abs() < 1e-12 * expect.abs());
        assert!(t.moments_used.iter().any(|(n, _)| !n.is_integer()));
    }

    #[test]
    fn json_roundtrip() {
        let b = theta_derivatives_comptonization(&InitialSpectrum::Bremsstrahlung, 5).unwrap();
        let back = DerivativeTable::from_json(&b.to_json()).unwrap();
        assert_eq!(back.exact(), b.exact());
        assert_eq!(back.params, b.params);
        assert_eq!(b.to_json()["schema_version"], SCHEMA_VERSION);
    }
}
