//! Method-of-lines solver for the linear transport problem once θ(y) is known.
//!
//! The unknown is F = xⁱf, evolving as ∂F/∂y = ∂J/∂x with
//! J = xᵏ(∂F/∂x + vF), v = x^{j−k}/θ − i/x. Space is discretized with
//! cell-centered finite volumes on a logarithmic grid and exponentially
//! fitted (Scharfetter–Gummel) interface fluxes; the drift integral across
//! each interface is taken exactly, so exponential equilibria of the
//! continuous problem are discrete fixed points. Time stepping is implicit
//! Euler with step-doubling error control. Both boundaries carry zero flux.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::contfrac::{taylor_eval, ContinuedFraction};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv, write_json, SCHEMA_VERSION};
use crate::moments::DerivativeTable;
use crate::spectra::{InitialSpectrum, TransportParams};

/// Moment orders recorded at every accepted step.
pub const TRACE_ORDERS: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];

/// Cell-centered logarithmic mesh plus output times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    pub y_end: f64,
    snapshots: Vec<f64>,
}

impl Grid {
    /// `cells` log-spaced cells on [x_min, x_max], `n_snapshots` uniform
    /// output times on [0, y_end].
    pub fn log(x_min: f64, x_max: f64, cells: usize, y_end: f64, n_snapshots: usize) -> Result<Self> {
        let snaps = match n_snapshots {
            0 => Vec::new(),
            1 => vec![y_end],
            n => (0..n).map(|k| y_end * k as f64 / (n - 1) as f64).collect(),
        };
        Self::log_with_snapshots(x_min, x_max, cells, y_end, snaps)
    }

    pub fn log_with_snapshots(
        x_min: f64,
        x_max: f64,
        cells: usize,
        y_end: f64,
        snapshots: Vec<f64>,
    ) -> Result<Self> {
        if !(x_min > 0.0 && x_max > x_min && x_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if cells < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 cells, got {cells}")));
        }
        if !(y_end > 0.0 && y_end.is_finite()) {
            return Err(Error::InvalidGrid(format!("y_end must be positive, got {y_end}")));
        }
        if snapshots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("snapshot times must be strictly increasing".into()));
        }
        if snapshots.iter().any(|&s| !(0.0..=y_end).contains(&s)) {
            return Err(Error::InvalidGrid(format!("snapshot times must lie in [0, {y_end}]")));
        }
        let ratio = (x_max / x_min).ln() / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|k| x_min * (ratio * k as f64).exp()).collect();
        edges[cells] = x_max;
        let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            edges,
            centers,
            widths,
            y_end,
            snapshots,
        })
    }

    /// 400 cells on [10⁻³, 50] with 21 snapshots.
    pub fn standard(y_end: f64) -> Result<Self> {
        Self::log(1e-3, 50.0, 400, y_end, 21)
    }

    pub fn cells(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn snapshots(&self) -> &[f64] {
        &self.snapshots
    }

    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.edges.last().expect("nonempty")
    }

    /// Σ_c x_c^{n−i} F_c Δx_c, the rule shared by traces and verification.
    pub fn moment(&self, f_cells: &[f64], n: f64, i: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(f_cells)
            .map(|((x, w), f)| x.powf(n - i) * f * w)
            .sum()
    }
}

/// Source of θ(y) for the solve.
#[derive(Clone)]
pub enum TemperatureFn {
    ContinuedFraction { cf: Arc<ContinuedFraction>, level: usize },
    Taylor { table: Arc<DerivativeTable>, level: usize },
    Constant(f64),
    Callable {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        label: String,
    },
}

impl fmt::Debug for TemperatureFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.description())
    }
}

impl TemperatureFn {
    pub fn continued_fraction(cf: ContinuedFraction, level: usize) -> Result<Self> {
        if level > cf.level() {
            return Err(Error::TruncationTooLarge {
                requested: level,
                available: cf.level(),
            });
        }
        Ok(Self::ContinuedFraction { cf: Arc::new(cf), level })
    }

    pub fn taylor(table: DerivativeTable, level: usize) -> Result<Self> {
        if level > table.order() {
            return Err(Error::TruncationTooLarge {
                requested: level,
                available: table.order(),
            });
        }
        Ok(Self::Taylor {
            table: Arc::new(table),
            level,
        })
    }

    pub fn callable(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Callable {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    /// θ(y); errors when the value is not strictly positive.
    pub fn eval(&self, y: f64) -> Result<f64> {
        let v = match self {
            Self::ContinuedFraction { cf, level } => cf.eval(*level, y)?,
            Self::Taylor { table, level } => taylor_eval(table, *level, y)?,
            Self::Constant(c) => *c,
            Self::Callable { f, .. } => f(y),
        };
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonPositiveTemperature { y, value: v })
        }
    }

    /// Dense sampling of [0, y_end] with `samples` intervals.
    pub fn check_positive(&self, y_end: f64, samples: usize) -> Result<()> {
        (0..=samples).try_for_each(|k| self.eval(y_end * k as f64 / samples as f64).map(|_| ()))
    }

    pub fn description(&self) -> String {
        match self {
            Self::ContinuedFraction { level, .. } => format!("continued_fraction:{level}"),
            Self::Taylor { level, .. } => format!("taylor:{level}"),
            Self::Constant(c) => format!("constant:{c}"),
            Self::Callable { label, .. } => format!("callable:{label}"),
        }
    }
}

/// (d⟨x⟩/dy, dσ²/dy) = ((i+k)x^{k−1} − x^j/θ, 2x^k).
pub fn drift_diffusion(params: &TransportParams, theta: f64, x: f64) -> (f64, f64) {
    let [i, j, k, _] = params.as_f64();
    ((i + k) * x.powf(k - 1.0) - x.powf(j) / theta, 2.0 * x.powf(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Step-doubling tolerance relative to max F.
    pub rtol: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Negative values above −clip_tol·max F are zeroed and counted.
    pub clip_tol: f64,
    pub max_steps: usize,
    /// Samples used for the positivity pre-check of θ.
    pub theta_samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            dt_initial: 1e-6,
            dt_min: 1e-14,
            dt_max: 0.05,
            clip_tol: 1e-12,
            max_steps: 2_000_000,
            theta_samples: 2048,
        }
    }
}

/// Precomputed interface data for the discrete operator.
#[derive(Debug, Clone)]
struct Operator {
    /// x_e^k / (x_{c+1} − x_c)
    conductance: Vec<f64>,
    /// ∫ x^{j−k} dx between neighbouring centers
    drift_theta: Vec<f64>,
    /// i·ln(x_{c+1}/x_c)
    drift_const: Vec<f64>,
    widths: Vec<f64>,
}

/// B(w) = w/(eʷ − 1).
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-10 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

impl Operator {
    fn new(params: &TransportParams, grid: &Grid) -> Self {
        let [i, j, k, _] = params.as_f64();
        let c = grid.centers();
        let q = j - k + 1.0;
        let n = c.len();
        let mut conductance = Vec::with_capacity(n - 1);
        let mut drift_theta = Vec::with_capacity(n - 1);
        let mut drift_const = Vec::with_capacity(n - 1);
        for e in 0..n - 1 {
            let (a, b) = (c[e], c[e + 1]);
            conductance.push(grid.edges[e + 1].powf(k) / (b - a));
            drift_theta.push(if q == 0.0 { (b / a).ln() } else { (b.powf(q) - a.powf(q)) / q });
            drift_const.push(i * (b / a).ln());
        }
        Self {
            conductance,
            drift_theta,
            drift_const,
            widths: grid.widths.clone(),
        }
    }

    /// Tridiagonal bands (lower, diag, upper) of dF/dy = L F.
    fn bands(&self, theta: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.widths.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for e in 0..n - 1 {
            let w = self.drift_theta[e] / theta - self.drift_const[e];
            let g = self.conductance[e];
            let (fwd, back) = (g * bernoulli(-w), g * bernoulli(w));
            // J_e = fwd·F_{e+1} − back·F_e enters cell e with + and cell e+1 with −.
            upper[e] += fwd / self.widths[e];
            diag[e] -= back / self.widths[e];
            diag[e + 1] -= fwd / self.widths[e + 1];
            lower[e + 1] += back / self.widths[e + 1];
        }
        (lower, diag, upper)
    }

    fn apply(&self, theta: f64, f: &[f64]) -> Vec<f64> {
        let (lo, d, up) = self.bands(theta);
        (0..f.len())
            .map(|c| {
                let mut v = d[c] * f[c];
                if c > 0 {
                    v += lo[c] * f[c - 1];
                }
                if c + 1 < f.len() {
                    v += up[c] * f[c + 1];
                }
                v
            })
            .collect()
    }

    /// Solve (I − dt L) out = rhs.
    fn implicit_step(&self, theta: f64, dt: f64, rhs: &[f64]) -> Vec<f64> {
        let (lo, d, up) = self.bands(theta);
        let a: Vec<f64> = lo.iter().map(|v| -dt * v).collect();
        let b: Vec<f64> = d.iter().map(|v| 1.0 - dt * v).collect();
        let c: Vec<f64> = up.iter().map(|v| -dt * v).collect();
        thomas(&a, &b, &c, rhs)
    }
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for k in 1..n {
        let m = b[k] - a[k] * cp[k - 1];
        cp[k] = c[k] / m;
        dp[k] = (d[k] - a[k] * dp[k - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = dp[k] - cp[k] * x[k + 1];
    }
    x
}

/// Discrete right-hand side L F for a given θ (cell values of ∂F/∂y).
pub fn apply_operator(params: &TransportParams, grid: &Grid, theta: f64, f_cells: &[f64]) -> Vec<f64> {
    Operator::new(params, grid).apply(theta, f_cells)
}

/// F at the requested output time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub y: f64,
    pub f_cells: Vec<f64>,
}

/// State recorded after every accepted step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub y: f64,
    pub theta: f64,
    /// Moments at [`TRACE_ORDERS`].
    pub moments: [f64; 5],
    /// I_α for the coupling index α.
    pub i_alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub clipped: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeSolution {
    pub params: TransportParams,
    pub spectrum: String,
    pub theta_description: String,
    pub options: SolverOptions,
    pub grid: Grid,
    pub snapshots: Vec<Snapshot>,
    pub trace: Vec<TracePoint>,
    pub stats: SolverStats,
}

/// x ↦ G(x, y) = x³f(x, y) on the cell centers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonSpectrum {
    pub y: f64,
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    /// Σ G_c Δx_c
    pub integral: f64,
}

fn initial_cells(spectrum: &InitialSpectrum, params: &TransportParams, grid: &Grid) -> Result<Vec<f64>> {
    let s = spectrum.grid_representable();
    let i = params.as_f64()[0];
    let f: Vec<f64> = grid
        .centers()
        .iter()
        .map(|&x| s.density(x).map(|d| d * x.powf(i)).unwrap_or(0.0))
        .collect();
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidSpectrum(format!(
            "{} spectrum is not finite and non-negative on the grid",
            s.name()
        )));
    }
    if f.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidSpectrum(format!("{} spectrum vanishes on the grid", s.name())));
    }
    Ok(f)
}

fn trace_point(grid: &Grid, params: &TransportParams, y: f64, theta: f64, f: &[f64]) -> TracePoint {
    let [i, _, _, alpha] = params.as_f64();
    TracePoint {
        y,
        theta,
        moments: TRACE_ORDERS.map(|n| grid.moment(f, n, i)),
        i_alpha: grid.moment(f, alpha, i),
    }
}

pub fn solve_transport(
    params: &TransportParams,
    spectrum: &InitialSpectrum,
    theta: &TemperatureFn,
    grid: &Grid,
) -> Result<PdeSolution> {
    solve_transport_with(params, spectrum, theta, grid, &SolverOptions::default())
}

/// Closure used by [`solve_self_consistent`] to read θ off the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// θ = I_α(y)/I_α(0).
    MomentRatio,
    /// θ = I₄/(4I₃), the temperature that holds I₃ fixed (Comptonization only).
    InverseCompton,
}

impl Coupling {
    pub fn for_params(params: &TransportParams) -> Self {
        if params.is_comptonization() {
            Self::InverseCompton
        } else {
            Self::MomentRatio
        }
    }
}

enum ThetaRule<'a> {
    Prescribed(&'a TemperatureFn),
    State { coupling: Coupling, i_alpha0: f64 },
}

impl ThetaRule<'_> {
    /// θ for a substep ending at `y_end` that starts from state `f`.
    fn value(&self, grid: &Grid, params: &TransportParams, y_end: f64, f: &[f64]) -> Result<f64> {
        match self {
            Self::Prescribed(t) => t.eval(y_end),
            Self::State { coupling, i_alpha0 } => {
                let [i, _, _, alpha] = params.as_f64();
                let v = match coupling {
                    Coupling::MomentRatio => grid.moment(f, alpha, i) / i_alpha0,
                    Coupling::InverseCompton => grid.moment(f, 4.0, i) / (4.0 * grid.moment(f, 3.0, i)),
                };
                if v > 0.0 && v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonPositiveTemperature { y: y_end, value: v })
                }
            }
        }
    }
}

fn march(
    params: &TransportParams,
    f0: Vec<f64>,
    rule: &ThetaRule<'_>,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<(Vec<Snapshot>, Vec<TracePoint>, SolverStats)> {
    if f0.len() != grid.cells() {
        return Err(Error::InvalidGrid(format!(
            "initial data has {} cells, grid has {}",
            f0.len(),
            grid.cells()
        )));
    }
    let op = Operator::new(params, grid);
    let mut stats = SolverStats {
        dt_min: f64::INFINITY,
        ..Default::default()
    };
    let mut f = f0;
    let mut y = 0.0;
    let mut trace = vec![trace_point(grid, params, 0.0, rule.value(grid, params, 0.0, &f)?, &f)];
    let mut snapshots = Vec::with_capacity(grid.snapshots.len());
    let mut next_snap = 0;
    while next_snap < grid.snapshots.len() && grid.snapshots[next_snap] <= 0.0 {
        snapshots.push(Snapshot { y: 0.0, f_cells: f.clone() });
        next_snap += 1;
    }
    let mut dt = opts.dt_initial;
    while y < grid.y_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { y, dt });
        }
        let target = grid.snapshots.get(next_snap).copied().unwrap_or(grid.y_end);
        let mut h = dt.min(opts.dt_max);
        let lands = y + h >= target * (1.0 - 1e-14);
        if lands {
            h = target - y;
        }
        let y_half = y + 0.5 * h;
        let y_new = if lands { target } else { y + h };
        let full = op.implicit_step(rule.value(grid, params, y_new, &f)?, h, &f);
        let half = op.implicit_step(rule.value(grid, params, y_half, &f)?, 0.5 * h, &f);
        let theta_second = rule.value(grid, params, y_new, &half)?;
        let two = op.implicit_step(theta_second, 0.5 * h, &half);
        let peak = two.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = two
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / (opts.rtol * peak.max(f64::MIN_POSITIVE));
        if err > 1.0 {
            stats.rejected += 1;
            dt = h * (0.9 / err.sqrt()).max(0.2);
            if dt < opts.dt_min {
                return Err(Error::StepSizeUnderflow { y, dt });
            }
            continue;
        }
        let mut next = two;
        for v in next.iter_mut() {
            if *v < 0.0 {
                if *v < -opts.clip_tol * peak {
                    return Err(Error::PositivityViolation { y: y_new, min: *v });
                }
                *v = 0.0;
                stats.clipped += 1;
            }
        }
        f = next;
        y = y_new;
        stats.accepted += 1;
        stats.dt_min = stats.dt_min.min(h);
        stats.dt_max = stats.dt_max.max(h);
        let theta_now = match rule {
            ThetaRule::Prescribed(_) => theta_second,
            ThetaRule::State { .. } => rule.value(grid, params, y, &f)?,
        };
        trace.push(trace_point(grid, params, y, theta_now, &f));
        if lands && next_snap < grid.snapshots.len() {
            snapshots.push(Snapshot { y, f_cells: f.clone() });
            next_snap += 1;
        }
        let grow = if err > 0.0 { 0.9 / err.sqrt() } else { 2.0 };
        dt = h * grow.clamp(0.2, 2.0);
        if lands {
            dt = dt.max(h);
        }
    }
    log::info!(
        "transport solve: {} accepted, {} rejected steps, dt in [{:.3e}, {:.3e}]",
        stats.accepted,
        stats.rejected,
        stats.dt_min,
        stats.dt_max
    );
    Ok((snapshots, trace, stats))
}

/// Initial spectrum given directly as cell values of F.
pub fn solve_transport_from(
    params: &TransportParams,
    label: &str,
    f0: Vec<f64>,
    theta: &TemperatureFn,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<PdeSolution> {
    theta.check_positive(grid.y_end, opts.theta_samples)?;
    let (snapshots, trace, stats) = march(params, f0, &ThetaRule::Prescribed(theta), grid, opts)?;
    Ok(PdeSolution {
        params: *params,
        spectrum: label.to_string(),
        theta_description: theta.description(),
        options: *opts,
        grid: grid.clone(),
        snapshots,
        trace,
        stats,
    })
}

/// Integrate the nonlinear problem directly, reading θ off the evolving
/// spectrum at every substep instead of prescribing it. First order in the
/// coupling; used as a reference for the prescribed-θ pipeline.
pub fn solve_self_consistent(
    params: &TransportParams,
    spectrum: &InitialSpectrum,
    coupling: Coupling,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<PdeSolution> {
    spectrum.validate()?;
    if coupling == Coupling::InverseCompton && !params.is_comptonization() {
        return Err(Error::UnsupportedParams(format!(
            "inverse-Compton coupling needs i=j=k=2, alpha=4 (got {params})"
        )));
    }
    let f0 = initial_cells(spectrum, params, grid)?;
    let [i, _, _, alpha] = params.as_f64();
    let i_alpha0 = grid.moment(&f0, alpha, i);
    let rule = ThetaRule::State { coupling, i_alpha0 };
    let (snapshots, trace, stats) = march(params, f0, &rule, grid, opts)?;
    Ok(PdeSolution {
        params: *params,
        spectrum: spectrum.name().to_string(),
        theta_description: format!("self_consistent:{coupling:?}"),
        options: *opts,
        grid: grid.clone(),
        snapshots,
        trace,
        stats,
    })
}

pub fn solve_transport_with(
    params: &TransportParams,
    spectrum: &InitialSpectrum,
    theta: &TemperatureFn,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<PdeSolution> {
    spectrum.validate()?;
    let f0 = initial_cells(spectrum, params, grid)?;
    solve_transport_from(params, spectrum.name(), f0, theta, grid, opts)
}

impl PdeSolution {
    pub fn snapshot(&self, y: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.y - y).abs() <= 1e-12 * (1.0 + y.abs()))
            .ok_or(Error::SnapshotMissing { y })
    }

    pub fn photon_spectrum(&self, y: f64) -> Result<PhotonSpectrum> {
        let s = self.snapshot(y)?;
        let i = self.params.as_f64()[0];
        let x = self.grid.centers().to_vec();
        let g: Vec<f64> = x.iter().zip(&s.f_cells).map(|(x, f)| x.powf(3.0 - i) * f).collect();
        let integral = g.iter().zip(self.grid.widths()).map(|(g, w)| g * w).sum();
        Ok(PhotonSpectrum { y: s.y, x, g, integral })
    }

    /// I_n at a snapshot, with the shared cell rule.
    pub fn moment(&self, y: f64, n: f64) -> Result<f64> {
        let s = self.snapshot(y)?;
        Ok(self.grid.moment(&s.f_cells, n, self.params.as_f64()[0]))
    }

    pub fn n_r_trace(&self) -> Vec<(f64, f64)> {
        self.trace.iter().map(|t| (t.y, t.moments[0])).collect()
    }

    pub fn i3_trace(&self) -> Vec<(f64, f64)> {
        self.trace.iter().map(|t| (t.y, t.moments[1])).collect()
    }

    /// Rows `x,F,f,G` for one snapshot.
    pub fn snapshot_rows(&self, y: f64) -> Result<Vec<[String; 4]>> {
        let s = self.snapshot(y)?;
        let i = self.params.as_f64()[0];
        Ok(self
            .grid
            .centers()
            .iter()
            .zip(&s.f_cells)
            .map(|(&x, &big_f)| {
                let f = big_f * x.powf(-i);
                [fmt_f64(x), fmt_f64(big_f), fmt_f64(f), fmt_f64(x * x * x * f)]
            })
            .collect())
    }

    /// One CSV per snapshot (`snapshot_000.csv`, …) plus `manifest.json`.
    pub fn export(&self, dir: impl AsRef<Path>, created: Option<&str>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:03}.csv");
            write_csv(dir.join(&name), &["x", "F", "f", "G"], self.snapshot_rows(s.y)?)?;
            files.push(serde_json::json!({ "y": s.y, "file": name }));
        }
        let trace_rows = self.trace.iter().map(|t| {
            let mut row = vec![fmt_f64(t.y), fmt_f64(t.theta)];
            row.extend(t.moments.iter().map(|m| fmt_f64(*m)));
            row.push(fmt_f64(t.i_alpha));
            row
        });
        write_csv(
            dir.join("trace.csv"),
            &["y", "theta", "I2", "I3", "I4", "I5", "I6", "I_alpha"],
            trace_rows,
        )?;
        let mut manifest = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "transport_solution",
            "params": self.params,
            "spectrum": self.spectrum,
            "theta": self.theta_description,
            "grid": {
                "x_min": self.grid.x_min(),
                "x_max": self.grid.x_max(),
                "cells": self.grid.cells(),
                "spacing": "log",
                "y_end": self.grid.y_end,
            },
            "options": self.options,
            "stats": self.stats,
            "snapshots": files,
            "trace": "trace.csv",
        });
        if let Some(ts) = created {
            manifest["created"] = serde_json::Value::String(ts.to_string());
        }
        write_json(dir.join("manifest.json"), &manifest)
    }
}
