//! Initial photon distributions f₀(x), their power moments, and the
//! equilibrium (Wien-type) spectrum.
//!
//! Symbolic spectra return moments in closed form. Integer-index moments of
//! the bremsstrahlung and monoenergetic spectra are exact rationals; everything
//! else carries a double-precision value and an absolute error estimate.

use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad;
use crate::scalar::{rational_from_f64, rational_to_f64};

/// Exact moment index. General transport exponents shift indices by
/// `k - 2` and `j - 1`, which need not be integers.
pub type MomentIndex = Rational64;

/// Parse `"2"`, `"1.5"`, `"-0.25"` or `"3/2"` into an exact index.
pub fn parse_rational(s: &str) -> Option<Rational64> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Rational64::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 15 {
        return None;
    }
    let int_v: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let den = 10i64.checked_pow(frac.len() as u32)?;
    let frac_v: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let v = Rational64::new(int_v.checked_mul(den)?.checked_add(frac_v)?, den);
    Some(if neg { -v } else { v })
}

pub fn format_rational64(r: &Rational64) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn r64_to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exponents of the transport family
/// ∂f/∂y = x⁻ⁱ ∂ₓ{ xⁱ [ xʲ f/θ + xᵏ ∂ₓf ] } and the moment index α defining
/// θ(y) = I_α(y)/I_α(0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransportParams {
    pub i: Rational64,
    pub j: Rational64,
    pub k: Rational64,
    pub alpha: Rational64,
}

impl TransportParams {
    pub fn new(i: Rational64, j: Rational64, k: Rational64, alpha: Rational64) -> Result<Self> {
        let p = Self { i, j, k, alpha };
        if p.p().is_zero() {
            return Err(Error::InvalidParams("p = j - k + 1 must be nonzero".into()));
        }
        if !((p.i + 1) / p.p()).is_positive() {
            return Err(Error::InvalidParams(format!(
                "(i+1)/p must be positive, got {}",
                format_rational64(&((p.i + 1) / p.p()))
            )));
        }
        Ok(p)
    }

    pub fn from_integers(i: i64, j: i64, k: i64, alpha: i64) -> Result<Self> {
        Self::new(i.into(), j.into(), k.into(), alpha.into())
    }

    /// Kompaneets case: i = j = k = 2, α = 4.
    pub fn comptonization() -> Self {
        Self {
            i: 2.into(),
            j: 2.into(),
            k: 2.into(),
            alpha: 4.into(),
        }
    }

    pub fn is_comptonization(&self) -> bool {
        *self == Self::comptonization()
    }

    /// p = j − k + 1
    pub fn p(&self) -> Rational64 {
        self.j - self.k + 1
    }

    /// α = i freezes θ at 1.
    pub fn is_degenerate_alpha(&self) -> bool {
        self.alpha == self.i
    }

    pub fn as_f64(&self) -> [f64; 4] {
        [self.i, self.j, self.k, self.alpha].map(|r| r64_to_f64(&r))
    }
}

impl fmt::Display for TransportParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "i={} j={} k={} alpha={}",
            format_rational64(&self.i),
            format_rational64(&self.j),
            format_rational64(&self.k),
            format_rational64(&self.alpha)
        )
    }
}

impl Serialize for TransportParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("TransportParams", 4)?;
        st.serialize_field("i", &format_rational64(&self.i))?;
        st.serialize_field("j", &format_rational64(&self.j))?;
        st.serialize_field("k", &format_rational64(&self.k))?;
        st.serialize_field("alpha", &format_rational64(&self.alpha))?;
        st.end()
    }
}

/// A moment value: exact when the closed form is rational.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentValue {
    pub exact: Option<BigRational>,
    pub value: f64,
    pub abs_error: f64,
}

impl MomentValue {
    fn exact(r: BigRational) -> Self {
        Self {
            value: rational_to_f64(&r),
            exact: Some(r),
            abs_error: 0.0,
        }
    }

    fn approx(value: f64, abs_error: f64) -> Self {
        Self {
            exact: None,
            value,
            abs_error,
        }
    }
}

/// Extrapolation beyond the last tabulated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// f vanishes beyond the last sample.
    None,
    /// f continues as f_last · exp(−λ (x − x_last)), λ from the last two samples.
    #[default]
    Exponential,
    /// f continues as f_last · (x / x_last)^s, s from the last two samples.
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    x: Vec<f64>,
    f: Vec<f64>,
    pub tail: TailModel,
    pub rel_tol: f64,
}

impl TabulatedSpectrum {
    pub fn new(x: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if x.len() != f.len() || x.len() < 2 {
            return Err(Error::InvalidSpectrum(
                "tabulated spectrum needs at least two (x, f0) samples".into(),
            ));
        }
        if x[0] < 0.0 || !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidSpectrum("abscissae must be finite and non-negative".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpectrum("abscissae must be strictly increasing".into()));
        }
        if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSpectrum("tabulated values must be non-negative".into()));
        }
        Ok(Self {
            x,
            f,
            tail: TailModel::default(),
            rel_tol: 1e-12,
        })
    }

    /// Read a two-column CSV with header `x,f0`.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        Self::from_csv_reader(&mut rdr)
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<Self> {
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "f0" {
            return Err(Error::InvalidSpectrum(format!(
                "expected CSV header `x,f0`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut x, mut f) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidSpectrum(format!("row {}: bad number `{s}`", line + 2)))
            };
            x.push(parse(&rec[0])?);
            f.push(parse(&rec[1])?);
        }
        Self::new(x, f)
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.f)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x < self.x[0] {
            return 0.0;
        }
        if x >= self.x[n - 1] {
            return self.tail_eval(x);
        }
        let seg = self.x.partition_point(|&v| v <= x) - 1;
        let t = (x - self.x[seg]) / (self.x[seg + 1] - self.x[seg]);
        self.f[seg] * (1.0 - t) + self.f[seg + 1] * t
    }

    fn tail_eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let (x1, x2, f1, f2) = (self.x[n - 2], self.x[n - 1], self.f[n - 2], self.f[n - 1]);
        if x == x2 {
            return f2;
        }
        match self.tail {
            TailModel::None => 0.0,
            _ if f2 <= 0.0 || f1 <= f2 => 0.0,
            TailModel::Exponential => {
                let lambda = (f1 / f2).ln() / (x2 - x1);
                f2 * (-lambda * (x - x2)).exp()
            }
            TailModel::PowerLaw => {
                let s = (f2 / f1).ln() / (x2 / x1).ln();
                f2 * (x / x2).powf(s)
            }
        }
    }

    fn moment(&self, n: f64) -> Result<MomentValue> {
        let rel = self.rel_tol;
        let mut value = 0.0;
        let mut error = 0.0;
        let mut converged = true;
        for seg in 0..self.x.len() - 1 {
            let (a, b) = (self.x[seg], self.x[seg + 1]);
            let (fa, fb) = (self.f[seg], self.f[seg + 1]);
            if fa == 0.0 && fb == 0.0 {
                continue;
            }
            if a == 0.0 && n <= -1.0 && fa > 0.0 {
                return Err(Error::DivergentMoment { spectrum: "tabulated", index: n });
            }
            let r = quad::integrate(
                |x| x.powf(n) * (fa + (fb - fa) * (x - a) / (b - a)),
                a,
                b,
                rel,
                0.0,
            );
            value += r.value;
            error += r.error;
            converged &= r.converged;
        }
        let n_last = self.x.len() - 1;
        let tail_live = self.tail != TailModel::None
            && self.f[n_last] > 0.0
            && self.f[n_last - 1] > self.f[n_last];
        if tail_live {
            if self.tail == TailModel::PowerLaw {
                let s = (self.f[n_last] / self.f[n_last - 1]).ln()
                    / (self.x[n_last] / self.x[n_last - 1]).ln();
                if n + s >= -1.0 {
                    return Err(Error::DivergentMoment { spectrum: "tabulated", index: n });
                }
                let xl = self.x[n_last];
                value += -self.f[n_last] * xl.powf(n + 1.0) / (n + s + 1.0);
            } else {
                let x2 = self.x[n_last];
                let r = quad::integrate_to_infinity(|x| x.powf(n) * self.tail_eval(x), x2, rel, 0.0);
                value += r.value;
                error += r.error;
                converged &= r.converged;
            }
        }
        if !converged || error > rel.max(1e-15) * value.abs() * 10.0 {
            return Err(Error::NonConvergedQuadrature { index: n, value, error });
        }
        Ok(MomentValue::approx(value, error))
    }
}

/// Initial photon distribution f₀(x).
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpectrum {
    /// Optically thin bremsstrahlung, f₀ = x⁻³ e^{−x/4}.
    Bremsstrahlung,
    /// f₀ = N₀ x₀⁻² δ(x − x₀).
    Monoenergetic { x0: f64, n0: f64 },
    /// f₀ = N₀ x⁻² g(x), g a normal density truncated at max(0, mean − 8σ)
    /// and renormalized to unit mass.
    GaussianPulse { mean: f64, variance: f64, n0: f64 },
    Tabulated(TabulatedSpectrum),
}

impl InitialSpectrum {
    pub fn bremsstrahlung() -> Self {
        Self::Bremsstrahlung
    }

    pub fn monoenergetic(x0: f64, n0: f64) -> Result<Self> {
        let s = Self::Monoenergetic { x0, n0 };
        s.validate()?;
        Ok(s)
    }

    pub fn gaussian_pulse(mean: f64, variance: f64, n0: f64) -> Result<Self> {
        let s = Self::GaussianPulse { mean, variance, n0 };
        s.validate()?;
        Ok(s)
    }

    pub fn tabulated(x: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(TabulatedSpectrum::new(x, f)?))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidSpectrum(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            Self::Bremsstrahlung => Ok(()),
            Self::Monoenergetic { x0, n0 } => pos(x0, "x0").and(pos(n0, "N0")),
            Self::GaussianPulse { mean, variance, n0 } => pos(mean, "mean")
                .and(pos(variance, "variance"))
                .and(pos(n0, "N0")),
            Self::Tabulated(ref t) => TabulatedSpectrum::new(t.x.clone(), t.f.clone()).map(|_| ()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Bremsstrahlung => "bremsstrahlung",
            Self::Monoenergetic { .. } => "monoenergetic",
            Self::GaussianPulse { .. } => "gaussian",
            Self::Tabulated(_) => "tabulated",
        }
    }

    /// Pointwise f₀(x); `None` for the delta-function spectrum.
    pub fn density(&self, x: f64) -> Option<f64> {
        match *self {
            Self::Bremsstrahlung => Some(if x > 0.0 { x.powi(-3) * (-x / 4.0).exp() } else { 0.0 }),
            Self::Monoenergetic { .. } => None,
            Self::GaussianPulse { mean, variance, n0 } => {
                let g = TruncatedNormal::new(mean, variance);
                Some(if x > 0.0 { n0 * g.pdf(x) / (x * x) } else { 0.0 })
            }
            Self::Tabulated(ref t) => Some(t.eval(x)),
        }
    }

    /// Spectrum usable on a finite grid: the delta function is replaced by a
    /// Gaussian of variance 0.01 with the same mean and number density.
    pub fn grid_representable(&self) -> Self {
        match *self {
            Self::Monoenergetic { x0, n0 } => Self::GaussianPulse {
                mean: x0,
                variance: 0.01,
                n0,
            },
            ref other => other.clone(),
        }
    }

    /// I_n(0) = ∫₀^∞ xⁿ f₀(x) dx.
    pub fn initial_moment(&self, n: MomentIndex) -> Result<MomentValue> {
        let nf = r64_to_f64(&n);
        match *self {
            Self::Bremsstrahlung => {
                // ∫ x^{n-3} e^{-x/4} dx = Γ(n-2) 4^{n-2}
                if n <= Rational64::from(2) {
                    return Err(Error::DivergentMoment { spectrum: "bremsstrahlung", index: nf });
                }
                if n.is_integer() {
                    let m = n.to_integer() - 2;
                    let fact: BigInt = (1..m).map(BigInt::from).product();
                    let pow4 = BigInt::from(4).pow(m as u32);
                    Ok(MomentValue::exact(BigRational::from_integer(fact * pow4)))
                } else {
                    let v = gamma(nf - 2.0) * 4f64.powf(nf - 2.0);
                    Ok(MomentValue::approx(v, v.abs() * 1e-14))
                }
            }
            Self::Monoenergetic { x0, n0 } => {
                if n.is_integer() {
                    let e = n.to_integer() - 2;
                    let x0r = rational_from_f64(x0).expect("validated finite");
                    let n0r = rational_from_f64(n0).expect("validated finite");
                    let p: BigRational = num_traits::Pow::pow(&x0r, e as i32);
                    Ok(MomentValue::exact(n0r * p))
                } else {
                    let v = n0 * x0.powf(nf - 2.0);
                    Ok(MomentValue::approx(v, v.abs() * 1e-15))
                }
            }
            Self::GaussianPulse { mean, variance, n0 } => {
                let g = TruncatedNormal::new(mean, variance);
                let m = n - 2;
                if m.is_integer() && !m.is_negative() {
                    let v = n0 * g.raw_moment(m.to_integer() as usize);
                    return Ok(MomentValue::approx(v, v.abs() * 1e-13));
                }
                let mf = r64_to_f64(&m);
                if g.lower == 0.0 && mf <= -1.0 {
                    return Err(Error::DivergentMoment { spectrum: "gaussian", index: nf });
                }
                let hi = g.mean + 40.0 * g.sigma;
                let r = quad::integrate(|x| x.powf(mf) * g.pdf(x), g.lower, hi, 1e-13, 0.0);
                if !r.converged {
                    return Err(Error::NonConvergedQuadrature {
                        index: nf,
                        value: r.value,
                        error: r.error,
                    });
                }
                Ok(MomentValue::approx(n0 * r.value, n0 * r.error))
            }
            Self::Tabulated(ref t) => t.moment(nf),
        }
    }

    /// Floating-point moment at a real index (quadrature-capable path).
    pub fn initial_moment_real(&self, n: f64) -> Result<f64> {
        if let Some(r) = Rational64::approximate_float(n) {
            if r64_to_f64(&r) == n {
                return self.initial_moment(r).map(|m| m.value);
            }
        }
        match self {
            Self::Tabulated(t) => t.moment(n).map(|m| m.value),
            Self::Bremsstrahlung if n <= 2.0 => {
                Err(Error::DivergentMoment { spectrum: "bremsstrahlung", index: n })
            }
            Self::Bremsstrahlung => Ok(gamma(n - 2.0) * 4f64.powf(n - 2.0)),
            Self::Monoenergetic { x0, n0 } => Ok(n0 * x0.powf(n - 2.0)),
            Self::GaussianPulse { mean, variance, n0 } => {
                let g = TruncatedNormal::new(*mean, *variance);
                let r = quad::integrate(
                    |x| x.powf(n - 2.0) * g.pdf(x),
                    g.lower,
                    g.mean + 40.0 * g.sigma,
                    1e-13,
                    0.0,
                );
                Ok(n0 * r.value)
            }
        }
    }
}

/// Normal density truncated below at max(0, μ − 8σ), renormalized.
#[derive(Debug, Clone, Copy)]
struct TruncatedNormal {
    mean: f64,
    sigma: f64,
    lower: f64,
    mass: f64,
}

impl TruncatedNormal {
    fn new(mean: f64, variance: f64) -> Self {
        let sigma = variance.sqrt();
        let lower = (mean - 8.0 * sigma).max(0.0);
        let z = (lower - mean) / sigma;
        let mass = 0.5 * erfc(z / std::f64::consts::SQRT_2);
        Self { mean, sigma, lower, mass }
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lower {
            return 0.0;
        }
        let z = (x - self.mean) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * std::f64::consts::PI).sqrt() * self.mass)
    }

    /// E[X^m] under the truncated law, by the recursion
    /// M_m = μ M_{m−1} + σ²(m−1) M_{m−2} + σ a^{m−1} φ(α)/Z.
    fn raw_moment(&self, m: usize) -> f64 {
        let a = self.lower;
        let alpha = (a - self.mean) / self.sigma;
        let phi = (-0.5 * alpha * alpha).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let boundary = self.sigma * phi / self.mass;
        let s2 = self.sigma * self.sigma;
        let (mut prev, mut cur) = (0.0, 1.0);
        for k in 1..=m {
            let next = self.mean * cur + s2 * (k as f64 - 1.0) * prev + boundary * a.powi(k as i32 - 1);
            prev = cur;
            cur = next;
        }
        cur
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationReport {
    /// I₄(0)/(4 I₃(0)) for Comptonization; 1 for general parameters.
    pub ratio: f64,
    #[serde(serialize_with = "crate::io::ser_opt_rational")]
    pub exact_ratio: Option<BigRational>,
    pub pass: bool,
}

/// θ(0) = 1 consistency of the spectrum with the temperature definition.
///
/// For Comptonization the energy-conservation closure θ = I₄/(4 I₃) requires
/// I₄(0) = 4 I₃(0). For general exponents θ(0) = 1 holds by definition.
pub fn check_temperature_normalization(
    spectrum: &InitialSpectrum,
    params: &TransportParams,
) -> Result<NormalizationReport> {
    if !params.is_comptonization() {
        spectrum.initial_moment(params.alpha)?;
        return Ok(NormalizationReport {
            ratio: 1.0,
            exact_ratio: Some(BigRational::one()),
            pass: true,
        });
    }
    let i3 = spectrum.initial_moment(3.into())?;
    let i4 = spectrum.initial_moment(4.into())?;
    if let (Some(a), Some(b)) = (&i4.exact, &i3.exact) {
        let ratio = a / (b * BigRational::from_integer(4.into()));
        return Ok(NormalizationReport {
            ratio: rational_to_f64(&ratio),
            pass: ratio.is_one(),
            exact_ratio: Some(ratio),
        });
    }
    let ratio = i4.value / (4.0 * i3.value);
    let err = i4.abs_error / i4.value.abs() + i3.abs_error / i3.value.abs();
    Ok(NormalizationReport {
        ratio,
        exact_ratio: None,
        pass: (ratio - 1.0).abs() <= (10.0 * err).max(1e-12),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyState {
    Meaningful,
    NoMeaningfulSteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub theta_eq: f64,
    #[serde(serialize_with = "crate::io::ser_opt_rational")]
    pub exact: Option<BigRational>,
    pub steady_state: SteadyState,
}

/// θ_eq = I₃(0) / (3 I₂(0)) from conservation of photon number and energy.
pub fn equilibrium_temperature(spectrum: &InitialSpectrum, params: &TransportParams) -> Result<Equilibrium> {
    if !params.is_comptonization() {
        return Err(Error::UnsupportedParams(format!(
            "equilibrium temperature needs i=j=k=2, alpha=4 (got {params})"
        )));
    }
    let i3 = spectrum.initial_moment(3.into())?;
    let i2 = match spectrum.initial_moment(2.into()) {
        Ok(v) => v,
        Err(Error::DivergentMoment { .. }) => {
            return Ok(Equilibrium {
                theta_eq: 0.0,
                exact: Some(BigRational::zero()),
                steady_state: SteadyState::NoMeaningfulSteadyState,
            })
        }
        Err(e) => return Err(e),
    };
    let exact = match (&i3.exact, &i2.exact) {
        (Some(a), Some(b)) => Some(a / (b * BigRational::from_integer(3.into()))),
        _ => None,
    };
    Ok(Equilibrium {
        theta_eq: exact.as_ref().map(rational_to_f64).unwrap_or(i3.value / (3.0 * i2.value)),
        exact,
        steady_state: SteadyState::Meaningful,
    })
}

/// f_eq(x) = N_r p / ((p θ_eq)^{(i+1)/p} Γ((i+1)/p)) · exp(−x^p / (p θ_eq)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSpectrum {
    pub n_r: f64,
    pub theta_eq: f64,
    p: f64,
    prefactor: f64,
}

impl EquilibriumSpectrum {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * (-x.powf(self.p) / (self.p * self.theta_eq)).exp()
    }
}

pub fn equilibrium_spectrum(params: &TransportParams, n_r: f64, theta_eq: f64) -> Result<EquilibriumSpectrum> {
    let p = r64_to_f64(&params.p());
    let [i, ..] = params.as_f64();
    let shape = (i + 1.0) / p;
    if !(shape > 0.0) || p <= 0.0 {
        return Err(Error::UnsupportedParams(format!(
            "equilibrium spectrum needs (i+1)/p > 0 and p > 0 (got {params})"
        )));
    }
    if !(theta_eq > 0.0) {
        return Err(Error::UnsupportedParams(format!("theta_eq must be positive, got {theta_eq}")));
    }
    let prefactor = n_r * p / ((p * theta_eq).powf(shape) * gamma(shape));
    Ok(EquilibriumSpectrum {
        n_r,
        theta_eq,
        p,
        prefactor,
    })
}

/// Γ(n − 2)·4^{n−2} via factorials; handy for integer sanity checks.
pub fn bremsstrahlung_moment_closed_form(n: u32) -> Option<BigInt> {
    (n >= 3).then(|| {
        let m = (n - 2) as u64;
        let fact: BigInt = (1..m).map(BigInt::from).product();
        fact * BigInt::from(4).pow(m as u32)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> MomentIndex {
        n.into()
    }

    fn exact(v: &MomentValue) -> BigRational {
        v.exact.clone().expect("exact moment")
    }

    #[test]
    fn monoenergetic_sifts() {
        let s = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
        assert_eq!(exact(&s.initial_moment(r(5)).unwrap()), BigRational::from_integer(64.into()));
        for n in -3..12 {
            let got = s.initial_moment(r(n)).unwrap().value;
            assert!((got - 4f64.powi(n as i32 - 2)).abs() <= 1e-15 * got.abs());
        }
    }

    #[test]
    fn bremsstrahlung_exact_moments() {
        let s = InitialSpectrum::bremsstrahlung();
        assert_eq!(exact(&s.initial_moment(r(4)).unwrap()), BigRational::from_integer(16.into()));
        assert_eq!(exact(&s.initial_moment(r(6)).unwrap()), BigRational::from_integer(1536.into()));
        assert!(matches!(
            s.initial_moment(r(2)),
            Err(Error::DivergentMoment { index, .. }) if index == 2.0
        ));
    }

    #[test]
    fn bremsstrahlung_half_integer_uses_gamma() {
        let s = InitialSpectrum::bremsstrahlung();
        let v = s.initial_moment(Rational64::new(7, 2)).unwrap();
        assert!(v.exact.is_none());
        // Γ(3/2)·4^{3/2} = (√π/2)·8
        let expect = std::f64::consts::PI.sqrt() * 4.0;
        assert!((v.value - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn normalization_checks() {
        let p = TransportParams::comptonization();
        let mono4 = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
        assert!(check_temperature_normalization(&mono4, &p).unwrap().pass);
        assert!(check_temperature_normalization(&InitialSpectrum::Bremsstrahlung, &p).unwrap().pass);
        let mono3 = InitialSpectrum::monoenergetic(3.0, 1.0).unwrap();
        let rep = check_temperature_normalization(&mono3, &p).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.exact_ratio.unwrap(), BigRational::new(3.into(), 4.into()));
    }

    #[test]
    fn equilibrium_temperatures() {
        let p = TransportParams::comptonization();
        let mono = equilibrium_temperature(&InitialSpectrum::monoenergetic(4.0, 1.0).unwrap(), &p).unwrap();
        assert_eq!(mono.exact.unwrap(), BigRational::new(4.into(), 3.into()));
        assert_eq!(mono.steady_state, SteadyState::Meaningful);

        let brems = equilibrium_temperature(&InitialSpectrum::Bremsstrahlung, &p).unwrap();
        assert_eq!(brems.theta_eq, 0.0);
        assert_eq!(brems.steady_state, SteadyState::NoMeaningfulSteadyState);

        let narrow = InitialSpectrum::gaussian_pulse(4.0, 1e-8, 1.0).unwrap();
        let g = equilibrium_temperature(&narrow, &p).unwrap();
        assert!((g.theta_eq - 4.0 / 3.0).abs() < 1e-7);

        let general = TransportParams::from_integers(1, 2, 2, 3).unwrap();
        assert!(matches!(
            equilibrium_temperature(&InitialSpectrum::Bremsstrahlung, &general),
            Err(Error::UnsupportedParams(_))
        ));
    }

    #[test]
    fn wien_prefactor_and_shape() {
        let p = TransportParams::comptonization();
        let eq = equilibrium_spectrum(&p, 3.0, 4.0 / 3.0).unwrap();
        assert!((eq.eval(0.0) / (81.0 / 128.0) - 1.0).abs() < 1e-14);
        for x in [0.5, 2.0, 7.0] {
            let ratio = eq.eval(x) / eq.eval(0.0);
            assert!((ratio - (-x * 0.75f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn equilibrium_spectrum_normalizes() {
        for (params, theta) in [
            (TransportParams::comptonization(), 4.0 / 3.0),
            (TransportParams::from_integers(1, 3, 2, 3).unwrap(), 0.7),
            (TransportParams::from_integers(0, 2, 1, 2).unwrap(), 2.5),
        ] {
            let eq = equilibrium_spectrum(&params, 3.0, theta).unwrap();
            let [i, ..] = params.as_f64();
            let q = quad::integrate_to_infinity(|x| x.powf(i) * eq.eval(x), 0.0, 1e-13, 0.0);
            assert!((q.value / 3.0 - 1.0).abs() <= 1e-8, "{params}: {}", q.value);
        }
    }

    #[test]
    fn equilibrium_spectrum_rejects_bad_shape() {
        // i = -2, p = 1 → (i+1)/p < 0
        let params = TransportParams { i: (-2).into(), j: 2.into(), k: 2.into(), alpha: 4.into() };
        assert!(matches!(equilibrium_spectrum(&params, 1.0, 1.0), Err(Error::UnsupportedParams(_))));
        assert!(TransportParams::from_integers(-2, 2, 2, 4).is_err());
    }

    #[test]
    fn gaussian_moments_approach_delta() {
        let mono = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
        let wide = InitialSpectrum::gaussian_pulse(4.0, 1e-2, 1.0).unwrap();
        let narrow = InitialSpectrum::gaussian_pulse(4.0, 1e-4, 1.0).unwrap();
        for n in 2..=8 {
            let target = mono.initial_moment(r(n)).unwrap().value;
            let dw = (wide.initial_moment(r(n)).unwrap().value - target).abs();
            let dn = (narrow.initial_moment(r(n)).unwrap().value - target).abs();
            assert!(dn <= dw, "n={n}: {dn} > {dw}");
            assert!(dn <= 1e-3 * target);
        }
        // E[X^2] = μ² + σ²
        let i4 = wide.initial_moment(r(4)).unwrap().value;
        assert!((i4 - 16.01).abs() < 1e-12);
    }

    #[test]
    fn gaussian_quadrature_path_matches_recursion() {
        let g = InitialSpectrum::gaussian_pulse(4.0, 0.01, 2.0).unwrap();
        let rec = g.initial_moment(r(6)).unwrap().value;
        let q = g.initial_moment_real(6.0 + 1e-300).unwrap();
        assert!((rec - q).abs() < 1e-10 * rec);
        let half = g.initial_moment(Rational64::new(9, 2)).unwrap().value;
        assert!((half - 2.0 * 4f64.powf(2.5)).abs() < 2e-2 * half);
    }

    #[test]
    fn tabulated_matches_closed_form() {
        // Wien-like samples, exponential tail continues exactly.
        let xs: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.005).collect();
        let fs: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
        let s = InitialSpectrum::tabulated(xs, fs).unwrap();
        let m = s.initial_moment(r(3)).unwrap();
        // piecewise-linear interpolation error only: O(h²)
        assert!((m.value - 6.0).abs() < 1e-4, "{m:?}");
        assert!(m.exact.is_none());
    }

    #[test]
    fn tabulated_validation() {
        assert!(InitialSpectrum::tabulated(vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(InitialSpectrum::tabulated(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(InitialSpectrum::monoenergetic(-1.0, 1.0).is_err());
        assert!(InitialSpectrum::gaussian_pulse(4.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_csv_roundtrip() {
        let data = "x,f0\n0.5,1.0\n1.0,0.5\n2.0,0.25\n";
        let mut rdr = csv::ReaderBuilder::new().from_reader(data.as_bytes());
        let t = TabulatedSpectrum::from_csv_reader(&mut rdr).unwrap();
        assert_eq!(t.samples().0, &[0.5, 1.0, 2.0]);
        let bad = "energy,f\n0.5,1.0\n1.0,0.5\n";
        let mut rdr = csv::ReaderBuilder::new().from_reader(bad.as_bytes());
        assert!(TabulatedSpectrum::from_csv_reader(&mut rdr).is_err());
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("2"), Some(Rational64::from(2)));
        assert_eq!(parse_rational("1.5"), Some(Rational64::new(3, 2)));
        assert_eq!(parse_rational("-0.25"), Some(Rational64::new(-1, 4)));
        assert_eq!(parse_rational("3/2"), Some(Rational64::new(3, 2)));
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(parse_rational("1/0"), None);
    }

    #[test]
    fn closed_form_helper() {
        assert_eq!(bremsstrahlung_moment_closed_form(6).unwrap(), BigInt::from(1536));
        assert!(bremsstrahlung_moment_closed_form(2).is_none());
    }
}
