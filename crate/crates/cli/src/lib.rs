//! Configuration and subcommand drivers for the `kompsep` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kompsep::contfrac::{
    cf_coefficients, cf_curve, select_approximant_with, taylor_curve, DefectScan, Selection, SelectionPolicy,
};
use kompsep::io::{write_csv, write_json, SCHEMA_VERSION};
use kompsep::moments::theta_derivatives;
use kompsep::pde::{solve_transport_with, Grid, PdeSolution, SolverOptions, TemperatureFn};
use kompsep::spectra::{equilibrium_temperature, parse_rational, MomentIndex, SteadyState, TabulatedSpectrum};
use kompsep::verify::{equilibrium_distance, moment_ode_check, self_consistency, MomentOdeReport, VerificationReport};
use kompsep::{ContinuedFraction, DerivativeTable, InitialSpectrum, TransportParams};

pub const MONOENERGETIC_CFG: &str = include_str!("../../../configs/monoenergetic.cfg");
pub const BREMSSTRAHLUNG_CFG: &str = include_str!("../../../configs/bremsstrahlung.cfg");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] kompsep::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// 1 validation, 2 numerical, 3 verification.
    pub fn exit_code(&self) -> i32 {
        use kompsep::Error as E;
        match self {
            Self::Config(_) => 1,
            Self::Verification(_) => 3,
            Self::Core(e) => match e {
                E::InvalidSpectrum(_)
                | E::InvalidParams(_)
                | E::UnsupportedParams(_)
                | E::InvalidGrid(_)
                | E::TruncationTooLarge { .. }
                | E::DegenerateIndex(_)
                | E::NormalizationViolated { .. }
                | E::DivergentMoment { .. }
                | E::Io(_)
                | E::Csv(_)
                | E::Json(_) => 1,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Every key a config file may set, with its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("spectrum", "monoenergetic"),
    ("x0", "4"),
    ("n0", "1"),
    ("mean", "4"),
    ("variance", "0.01"),
    ("table", ""),
    ("i", "2"),
    ("j", "2"),
    ("k", "2"),
    ("alpha", "4"),
    ("order", "24"),
    ("y_max", "2"),
    ("x_min", "1e-3"),
    ("x_max", "50"),
    ("cells", "400"),
    ("snapshots", "21"),
    ("rtol", "1e-6"),
    ("theta", "auto"),
    ("policy", "highest"),
    ("tolerance", "0.02"),
    ("ode_tolerance", "0.03"),
    ("taylor_n", "4,8,12,16,20,24"),
    ("cf_n", "18,20,22,24"),
    ("curve_points", "201"),
    ("output", "out"),
];

/// How θ(y) is supplied to the transport solve.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaChoice {
    /// Continued fraction at the selected level.
    Auto,
    ContinuedFraction(usize),
    Taylor(usize),
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spectrum: InitialSpectrum,
    pub params: TransportParams,
    pub order: usize,
    pub y_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
    pub snapshots: usize,
    pub rtol: f64,
    pub theta: ThetaChoice,
    pub policy: SelectionPolicy,
    pub tolerance: f64,
    pub ode_tolerance: f64,
    pub taylor_n: Vec<usize>,
    pub cf_n: Vec<usize>,
    pub curve_points: usize,
    pub output: PathBuf,
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = k.trim().to_string();
        if !DEFAULTS.iter().any(|(d, _)| *d == key) {
            return Err(CliError::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn field<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str) -> CliResult<T> {
    let raw = &m[key];
    raw.parse()
        .map_err(|_| CliError::Config(format!("`{key}`: cannot parse `{raw}`")))
}

fn positive(m: &BTreeMap<String, String>, key: &str) -> CliResult<f64> {
    let v: f64 = field(m, key)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("`{key}` must be positive, got {v}")))
    }
}

fn list(m: &BTreeMap<String, String>, key: &str) -> CliResult<Vec<usize>> {
    m[key]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::Config(format!("`{key}`: `{s}` is not a non-negative integer")))
        })
        .collect()
}

fn rational(m: &BTreeMap<String, String>, key: &str) -> CliResult<MomentIndex> {
    parse_rational(&m[key]).ok_or_else(|| CliError::Config(format!("`{key}`: `{}` is not a rational", m[key])))
}

pub fn parse_theta(s: &str) -> CliResult<ThetaChoice> {
    let bad = || CliError::Config(format!("`theta`: expected auto, cf:N, taylor:N or constant:V, got `{s}`"));
    if s == "auto" {
        return Ok(ThetaChoice::Auto);
    }
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "cf" => arg.parse().map(ThetaChoice::ContinuedFraction).map_err(|_| bad()),
        "taylor" => arg.parse().map(ThetaChoice::Taylor).map_err(|_| bad()),
        "constant" => match arg.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(ThetaChoice::Constant(v)),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

impl RunConfig {
    /// Defaults, then `layers` in order; later layers win.
    pub fn from_layers(layers: &[BTreeMap<String, String>]) -> CliResult<Self> {
        let mut m: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for layer in layers {
            for (k, v) in layer {
                if !m.contains_key(k) {
                    return Err(CliError::Config(format!("unknown key `{k}`")));
                }
                m.insert(k.clone(), v.clone());
            }
        }
        Self::from_map(&m)
    }

    fn from_map(m: &BTreeMap<String, String>) -> CliResult<Self> {
        let spectrum = match m["spectrum"].as_str() {
            "monoenergetic" => InitialSpectrum::monoenergetic(positive(m, "x0")?, positive(m, "n0")?)?,
            "bremsstrahlung" => InitialSpectrum::Bremsstrahlung,
            "gaussian" => InitialSpectrum::gaussian_pulse(
                positive(m, "mean")?,
                positive(m, "variance")?,
                positive(m, "n0")?,
            )?,
            "tabulated" => {
                let path = &m["table"];
                if path.is_empty() {
                    return Err(CliError::Config("`table` must name a CSV file for a tabulated spectrum".into()));
                }
                InitialSpectrum::Tabulated(TabulatedSpectrum::from_csv_path(path)?)
            }
            other => {
                return Err(CliError::Config(format!(
                    "`spectrum`: expected monoenergetic, bremsstrahlung, gaussian or tabulated, got `{other}`"
                )))
            }
        };
        let params = TransportParams::new(rational(m, "i")?, rational(m, "j")?, rational(m, "k")?, rational(m, "alpha")?)
            .map_err(|e| CliError::Config(format!("transport parameters: {e}")))?;
        let policy = match m["policy"].as_str() {
            "highest" => SelectionPolicy::Highest,
            "closest" => SelectionPolicy::ClosestToEquilibrium,
            other => return Err(CliError::Config(format!("`policy`: expected highest or closest, got `{other}`"))),
        };
        let cfg = Self {
            spectrum,
            params,
            order: field(m, "order")?,
            y_max: positive(m, "y_max")?,
            x_min: positive(m, "x_min")?,
            x_max: positive(m, "x_max")?,
            cells: field(m, "cells")?,
            snapshots: field(m, "snapshots")?,
            rtol: positive(m, "rtol")?,
            theta: parse_theta(&m["theta"])?,
            policy,
            tolerance: positive(m, "tolerance")?,
            ode_tolerance: positive(m, "ode_tolerance")?,
            taylor_n: list(m, "taylor_n")?,
            cf_n: list(m, "cf_n")?,
            curve_points: field(m, "curve_points")?,
            output: PathBuf::from(&m["output"]),
        };
        if cfg.x_max <= cfg.x_min {
            return Err(CliError::Config(format!("`x_max` ({}) must exceed `x_min` ({})", cfg.x_max, cfg.x_min)));
        }
        if cfg.cells < 3 {
            return Err(CliError::Config(format!("`cells` must be at least 3, got {}", cfg.cells)));
        }
        if cfg.curve_points < 2 {
            return Err(CliError::Config("`curve_points` must be at least 2".into()));
        }
        match cfg.theta {
            ThetaChoice::ContinuedFraction(n) | ThetaChoice::Taylor(n) if n > cfg.order => {
                return Err(CliError::Config(format!("`theta`: level {n} exceeds `order` = {}", cfg.order)))
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> CliResult<Grid> {
        Ok(Grid::log(self.x_min, self.x_max, self.cells, self.y_max, self.snapshots)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rtol: self.rtol,
            ..Default::default()
        }
    }

    /// θ_eq when the parameters admit one.
    pub fn theta_eq(&self) -> Option<f64> {
        equilibrium_temperature(&self.spectrum, &self.params).ok().map(|e| e.theta_eq)
    }

    fn ys(&self) -> Vec<f64> {
        let n = self.curve_points;
        (0..n).map(|k| self.y_max * k as f64 / (n - 1) as f64).collect()
    }
}

/// Shipped scenario by name, or a config file path.
pub fn scenario_layer(name: &str) -> CliResult<BTreeMap<String, String>> {
    match name {
        "monoenergetic" => parse_config_text(MONOENERGETIC_CFG),
        "bremsstrahlung" => parse_config_text(BREMSSTRAHLUNG_CFG),
        path => read_config_file(Path::new(path)),
    }
}

pub fn compute_table(cfg: &RunConfig) -> CliResult<DerivativeTable> {
    Ok(theta_derivatives(&cfg.params, &cfg.spectrum, cfg.order)?)
}

pub fn compute_cf(cfg: &RunConfig, table: &DerivativeTable) -> CliResult<(ContinuedFraction, Selection)> {
    let cf = cf_coefficients(table)?;
    let sel = select_approximant_with(&cf, cfg.y_max, cfg.theta_eq(), cfg.policy, &DefectScan::default());
    if sel.no_admissible {
        log::warn!("no admissible continued fraction level on (0, {}]; falling back to N = 0", cfg.y_max);
    }
    Ok((cf, sel))
}

pub fn temperature(
    cfg: &RunConfig,
    table: &DerivativeTable,
    cf: &ContinuedFraction,
    sel: &Selection,
) -> CliResult<TemperatureFn> {
    Ok(match cfg.theta {
        ThetaChoice::Auto => TemperatureFn::continued_fraction(cf.clone(), sel.level)?,
        ThetaChoice::ContinuedFraction(n) => TemperatureFn::continued_fraction(cf.clone(), n.min(cf.level()))?,
        ThetaChoice::Taylor(n) => TemperatureFn::taylor(table.clone(), n)?,
        ThetaChoice::Constant(v) => TemperatureFn::Constant(v),
    })
}

/// Everything `reproduce` produces, for callers that want the numbers.
pub struct PipelineResult {
    pub table: DerivativeTable,
    pub cf: ContinuedFraction,
    pub selection: Selection,
    pub theta: TemperatureFn,
    pub solution: PdeSolution,
    pub report: VerificationReport,
    pub moment_ode: MomentOdeReport,
    pub summary: serde_json::Value,
}

pub fn run_pipeline(cfg: &RunConfig) -> CliResult<PipelineResult> {
    let table = compute_table(cfg)?;
    let (cf, selection) = compute_cf(cfg, &table)?;
    let theta = temperature(cfg, &table, &cf, &selection)?;
    let solution = solve_transport_with(&cfg.params, &cfg.spectrum, &theta, &cfg.grid()?, &cfg.solver_options())?;
    let report = self_consistency(&solution, &theta, cfg.tolerance)?;
    let moment_ode = moment_ode_check(&solution, &[3.0, 4.0, 5.0], cfg.ode_tolerance)?;
    let summary = summarize(cfg, &solution, &report, &moment_ode)?;
    Ok(PipelineResult {
        table,
        cf,
        selection,
        theta,
        solution,
        report,
        moment_ode,
        summary,
    })
}

fn summarize(
    cfg: &RunConfig,
    sol: &PdeSolution,
    report: &VerificationReport,
    ode: &MomentOdeReport,
) -> CliResult<serde_json::Value> {
    let eq = equilibrium_temperature(&cfg.spectrum, &cfg.params).ok();
    let energy: Vec<f64> = if cfg.params.is_comptonization() {
        sol.snapshots
            .iter()
            .map(|s| sol.photon_spectrum(s.y).map(|p| p.integral))
            .collect::<kompsep::Result<_>>()?
    } else {
        Vec::new()
    };
    let distance = match eq {
        Some(ref e) if e.steady_state == SteadyState::Meaningful && cfg.params.is_comptonization() => {
            Some(equilibrium_distance(sol, cfg.y_max, e.theta_eq)?)
        }
        _ => None,
    };
    Ok(serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "pipeline_summary",
        "spectrum": sol.spectrum,
        "theta": sol.theta_description,
        "theta_eq": eq.map(|e| e.theta_eq),
        "self_consistency": { "max_rel_dev": report.max_rel_dev, "tolerance": report.tolerance, "pass": report.pass },
        "moment_ode": { "max_rel_dev": ode.max_rel_dev, "tolerance": ode.tolerance, "pass": ode.pass },
        "conservation": report.conservation,
        "photon_energy": energy,
        "equilibrium_l1_distance": distance,
        "pass": report.pass && ode.pass,
    }))
}

fn out_dir(cfg: &RunConfig, sub: &str) -> CliResult<PathBuf> {
    let d = cfg.output.join(sub);
    std::fs::create_dir_all(&d).map_err(kompsep::Error::from)?;
    Ok(d)
}

pub fn write_table(cfg: &RunConfig, table: &DerivativeTable) -> CliResult<()> {
    let d = out_dir(cfg, "derivs")?;
    write_json(d.join("derivatives.json"), &table.to_json())?;
    write_csv(d.join("derivatives.csv"), &["n", "theta_n", "exact"], table.csv_rows(6))?;
    Ok(())
}

pub fn write_cf(cfg: &RunConfig, table: &DerivativeTable, cf: &ContinuedFraction, sel: &Selection) -> CliResult<()> {
    let d = out_dir(cfg, "cf")?;
    let mut doc = cf.to_json();
    doc["selection"] = serde_json::json!({
        "level": sel.level,
        "no_admissible": sel.no_admissible,
        "policy": sel.policy,
        "y_max": cfg.y_max,
        "theta_eq": cfg.theta_eq(),
        "positive": sel.positive,
        "tail_values": sel.tail_values,
        "scores": sel.scores,
    });
    write_json(d.join("continued_fraction.json"), &doc)?;
    let rows = (0..=cf.level()).map(|n| {
        vec![
            n.to_string(),
            kompsep::scalar::format_sig(cf.coeffs()[n], 6),
            cf.exact().map(|e| kompsep::io::rational_string(&e[n])).unwrap_or_default(),
        ]
    });
    write_csv(d.join("coefficients.csv"), &["n", "c_n", "exact"], rows)?;
    write_json(
        d.join("defects.json"),
        &serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "defect_reports",
            "reports": sel.reports.iter().enumerate()
                .map(|(n, r)| serde_json::json!({ "N": n, "report": r }))
                .collect::<Vec<_>>(),
        }),
    )?;
    let ys = cfg.ys();
    let mut taylor_rows = Vec::new();
    for &n in cfg.taylor_n.iter().filter(|&&n| n <= table.order()) {
        for (y, v) in taylor_curve(table, n, &ys)? {
            taylor_rows.push(vec![kompsep::io::fmt_f64(y), kompsep::io::fmt_f64(v), n.to_string()]);
        }
    }
    write_csv(d.join("taylor_curves.csv"), &["y", "value", "N"], taylor_rows)?;
    let mut cf_rows = Vec::new();
    for &n in cfg.cf_n.iter().filter(|&&n| n <= cf.level()) {
        for (y, v) in cf_curve(cf, n, &ys)? {
            cf_rows.push(vec![kompsep::io::fmt_f64(y), kompsep::io::fmt_f64(v), n.to_string()]);
        }
    }
    write_csv(d.join("cf_curves.csv"), &["y", "value", "N"], cf_rows)?;
    Ok(())
}

fn unix_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

pub fn write_solution(cfg: &RunConfig, sol: &PdeSolution) -> CliResult<()> {
    let d = out_dir(cfg, "solve")?;
    sol.export(&d, Some(&unix_timestamp()))?;
    Ok(())
}

pub fn write_verification(cfg: &RunConfig, res: &PipelineResult) -> CliResult<()> {
    let d = out_dir(cfg, "verify")?;
    res.report.export(&d)?;
    write_json(d.join("moment_ode.json"), &res.moment_ode)?;
    write_json(d.join("summary.json"), &res.summary)?;
    Ok(())
}

pub fn cmd_derivs(cfg: &RunConfig) -> CliResult<DerivativeTable> {
    let table = compute_table(cfg)?;
    write_table(cfg, &table)?;
    Ok(table)
}

pub fn cmd_cf(cfg: &RunConfig) -> CliResult<(ContinuedFraction, Selection)> {
    let table = compute_table(cfg)?;
    let (cf, sel) = compute_cf(cfg, &table)?;
    write_cf(cfg, &table, &cf, &sel)?;
    Ok((cf, sel))
}

pub fn cmd_solve(cfg: &RunConfig) -> CliResult<PdeSolution> {
    let table = compute_table(cfg)?;
    let (cf, sel) = compute_cf(cfg, &table)?;
    let theta = temperature(cfg, &table, &cf, &sel)?;
    let sol = solve_transport_with(&cfg.params, &cfg.spectrum, &theta, &cfg.grid()?, &cfg.solver_options())?;
    write_solution(cfg, &sol)?;
    Ok(sol)
}

fn verdict(res: PipelineResult) -> CliResult<PipelineResult> {
    if res.report.pass && res.moment_ode.pass {
        Ok(res)
    } else {
        Err(CliError::Verification(format!(
            "self-consistency max deviation {:.3e} (tolerance {:.3e}), moment-ODE max deviation {:.3e} (tolerance {:.3e})",
            res.report.max_rel_dev, res.report.tolerance, res.moment_ode.max_rel_dev, res.moment_ode.tolerance
        )))
    }
}

/// Solves inline, then checks the result; fails with exit code 3 on mismatch.
pub fn cmd_verify(cfg: &RunConfig) -> CliResult<PipelineResult> {
    let res = run_pipeline(cfg)?;
    write_verification(cfg, &res)?;
    verdict(res)
}

/// Every stage for one scenario, each into its own subdirectory.
pub fn cmd_reproduce(cfg: &RunConfig) -> CliResult<PipelineResult> {
    let res = run_pipeline(cfg)?;
    write_table(cfg, &res.table)?;
    write_cf(cfg, &res.table, &res.cf, &res.selection)?;
    write_solution(cfg, &res.solution)?;
    write_verification(cfg, &res)?;
    verdict(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn later_layers_win() {
        let cfg = RunConfig::from_layers(&[layer(&[("order", "5")]), layer(&[("order", "7")])]).unwrap();
        assert_eq!(cfg.order, 7);
        assert_eq!(cfg.theta, ThetaChoice::Auto);
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_layers(&[layer(&[("y_max", "-1")])]).unwrap_err();
        assert!(err.to_string().contains("y_max"));
        assert_eq!(err.exit_code(), 1);
        let err = RunConfig::from_layers(&[layer(&[("spectrum", "laser")])]).unwrap_err();
        assert!(err.to_string().contains("spectrum"));
        let err = RunConfig::from_layers(&[layer(&[("order", "4"), ("theta", "cf:9")])]).unwrap_err();
        assert!(err.to_string().contains("theta"));
        let err = RunConfig::from_layers(&[layer(&[("i", "-1")])]).unwrap_err();
        assert!(err.to_string().contains("transport"));
    }

    #[test]
    fn config_text() {
        let m = parse_config_text("# c\nspectrum = bremsstrahlung # trailing\n\norder=3\n").unwrap();
        assert_eq!(m["spectrum"], "bremsstrahlung");
        assert_eq!(m["order"], "3");
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("no equals sign").is_err());
    }

    #[test]
    fn theta_specs() {
        assert_eq!(parse_theta("constant:1").unwrap(), ThetaChoice::Constant(1.0));
        assert_eq!(parse_theta("cf:12").unwrap(), ThetaChoice::ContinuedFraction(12));
        assert_eq!(parse_theta("taylor:3").unwrap(), ThetaChoice::Taylor(3));
        assert!(parse_theta("constant:-1").is_err());
        assert!(parse_theta("pade:3").is_err());
    }

    #[test]
    fn shipped_scenarios_parse() {
        for name in ["monoenergetic", "bremsstrahlung"] {
            let cfg = RunConfig::from_layers(&[scenario_layer(name).unwrap()]).unwrap();
            assert_eq!(cfg.order, 24);
            assert_eq!(cfg.spectrum.name(), name);
        }
    }
}
