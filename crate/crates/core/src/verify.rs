//! A-posteriori checks on a transport solution: output temperature against
//! the prescribed input, conservation drifts and the moment hierarchy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv, write_json, SCHEMA_VERSION};
use crate::pde::{PdeSolution, TemperatureFn, TRACE_ORDERS};
use crate::spectra::equilibrium_spectrum;

pub const DEFAULT_TOLERANCE: f64 = 0.02;
pub const DEFAULT_MOMENT_ODE_TOLERANCE: f64 = 0.03;

/// θ_out(y) = I_α(y)/I_α(0) at every snapshot.
pub fn output_temperature(sol: &PdeSolution) -> Result<Vec<(f64, f64)>> {
    let alpha = sol.params.as_f64()[3];
    let base = sol.moment(0.0, alpha)?;
    sol.snapshots
        .iter()
        .map(|s| Ok((s.y, sol.moment(s.y, alpha)? / base)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub y: f64,
    pub theta_in: f64,
    pub theta_out: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    /// max |N_r(y)/N_r(0) − 1| over accepted steps
    pub n_r_drift: f64,
    /// max |I₃(y)/I₃(0) − 1| over accepted steps
    pub i3_drift: f64,
    /// N_r of the untruncated problem diverges, so its drift only reflects the grid.
    pub n_r_truncation_dependent: bool,
}

pub fn conservation_report(sol: &PdeSolution) -> ConservationReport {
    let drift = |k: usize| {
        let base = sol.trace[0].moments[k];
        sol.trace
            .iter()
            .map(|t| (t.moments[k] / base - 1.0).abs())
            .fold(0.0, f64::max)
    };
    ConservationReport {
        n_r_drift: drift(0),
        i3_drift: drift(1),
        n_r_truncation_dependent: sol.spectrum == "bremsstrahlung",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentOdeRow {
    pub y: f64,
    pub n: f64,
    /// centered difference of the I_n trace
    pub finite_difference: f64,
    /// (n−i)[(n+k−1)I_{n+k−2} − I_{n+j−1}/θ]
    pub rhs: f64,
    /// |(n−i)(n+k−1)I_{n+k−2}|, the normalization for `rel_dev`
    pub scale: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentOdeReport {
    pub rows: Vec<MomentOdeRow>,
    pub max_rel_dev: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare dI_n/dy from the step trace with the moment equation evaluated on
/// the snapshot, at every interior snapshot and every n in `orders`.
///
/// The right side is a difference of two nearly equal terms near
/// equilibrium, so deviations are measured against the size of the gain term.
pub fn moment_ode_check(sol: &PdeSolution, orders: &[f64], tolerance: f64) -> Result<MomentOdeReport> {
    let [i, j, k, _] = sol.params.as_f64();
    let mut rows = Vec::new();
    for snap in &sol.snapshots {
        let Some(pos) = sol.trace.iter().position(|t| t.y == snap.y) else {
            return Err(Error::SnapshotMissing { y: snap.y });
        };
        if pos == 0 || pos + 1 >= sol.trace.len() {
            continue;
        }
        let (a, b, c) = (&sol.trace[pos - 1], &sol.trace[pos], &sol.trace[pos + 1]);
        let (h1, h2) = (b.y - a.y, c.y - b.y);
        for &n in orders {
            let slot = TRACE_ORDERS.iter().position(|&o| o == n).ok_or_else(|| {
                Error::InvalidParams(format!("moment order {n} is not traced (available {TRACE_ORDERS:?})"))
            })?;
            let (ma, mb, mc) = (a.moments[slot], b.moments[slot], c.moments[slot]);
            let fd = -h2 / (h1 * (h1 + h2)) * ma + (h2 - h1) / (h1 * h2) * mb + h1 / (h2 * (h1 + h2)) * mc;
            let gain = (n - i) * (n + k - 1.0) * sol.grid.moment(&snap.f_cells, n + k - 2.0, i);
            let loss = (n - i) * sol.grid.moment(&snap.f_cells, n + j - 1.0, i) / b.theta;
            let rhs = gain - loss;
            let scale = gain.abs().max(f64::MIN_POSITIVE);
            rows.push(MomentOdeRow {
                y: snap.y,
                n,
                finite_difference: fd,
                rhs,
                scale,
                rel_dev: (fd - rhs).abs() / scale,
            });
        }
    }
    let max_rel_dev = rows.iter().map(|r| r.rel_dev).fold(0.0, f64::max);
    Ok(MomentOdeReport {
        rows,
        max_rel_dev,
        tolerance,
        pass: max_rel_dev <= tolerance,
    })
}

/// L¹ distance between G(·, y) and the equilibrium spectrum with the run's
/// photon number, relative to ∫G dx.
pub fn equilibrium_distance(sol: &PdeSolution, y: f64, theta_eq: f64) -> Result<f64> {
    let ps = sol.photon_spectrum(y)?;
    let n_r = sol.trace[0].moments[0];
    let eq = equilibrium_spectrum(&sol.params, n_r, theta_eq)?;
    let l1: f64 = ps
        .x
        .iter()
        .zip(&ps.g)
        .zip(sol.grid.widths())
        .map(|((&x, &g), &w)| (g - x * x * x * eq.eval(x)).abs() * w)
        .sum();
    Ok(l1 / ps.integral)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub spectrum: String,
    pub theta: String,
    pub rows: Vec<ConsistencyRow>,
    pub max_rel_dev: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub conservation: ConservationReport,
}

/// θ_out against the prescribed θ at every snapshot.
pub fn self_consistency(sol: &PdeSolution, theta: &TemperatureFn, tolerance: f64) -> Result<VerificationReport> {
    let rows: Vec<ConsistencyRow> = output_temperature(sol)?
        .into_iter()
        .map(|(y, theta_out)| {
            let theta_in = theta.eval(y)?;
            Ok(ConsistencyRow {
                y,
                theta_in,
                theta_out,
                rel_dev: (theta_out - theta_in).abs() / theta_in,
            })
        })
        .collect::<Result<_>>()?;
    let max_rel_dev = rows.iter().map(|r| r.rel_dev).fold(0.0, f64::max);
    Ok(VerificationReport {
        schema_version: SCHEMA_VERSION,
        spectrum: sol.spectrum.clone(),
        theta: theta.description(),
        rows,
        max_rel_dev,
        tolerance,
        pass: max_rel_dev <= tolerance,
        conservation: conservation_report(sol),
    })
}

impl VerificationReport {
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        self.rows
            .iter()
            .map(|r| [fmt_f64(r.y), fmt_f64(r.theta_in), fmt_f64(r.theta_out), fmt_f64(r.rel_dev)])
            .collect()
    }

    /// `verification.json` and `verification.csv` in `dir`.
    pub fn export(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_json(dir.join("verification.json"), self)?;
        write_csv(
            dir.join("verification.csv"),
            &["y", "theta_in", "theta_out", "rel_dev"],
            self.csv_rows(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{solve_transport, solve_transport_from, Grid, SolverOptions};
    use crate::spectra::{InitialSpectrum, TransportParams};

    fn wien_run() -> PdeSolution {
        let p = TransportParams::comptonization();
        let g = Grid::log(1e-3, 50.0, 120, 1.0, 5).unwrap();
        let eq = equilibrium_spectrum(&p, 1.0, 4.0 / 3.0).unwrap();
        let f0 = g.centers().iter().map(|&x| x * x * eq.eval(x)).collect();
        solve_transport_from(&p, "wien", f0, &TemperatureFn::Constant(4.0 / 3.0), &g, &SolverOptions::default())
            .unwrap()
    }

    #[test]
    fn stationary_run_is_consistent_with_itself() {
        let sol = wien_run();
        let out = output_temperature(&sol).unwrap();
        assert_eq!(out[0], (0.0, 1.0));
        let cons = conservation_report(&sol);
        assert!(cons.n_r_drift < 1e-10 && cons.i3_drift < 1e-10, "{cons:?}");
        assert!(!cons.n_r_truncation_dependent);
        let d = equilibrium_distance(&sol, 1.0, 4.0 / 3.0).unwrap();
        assert!(d < 1e-2, "{d}");
        // θ_out stays 1 while the prescribed θ is 4/3: the report must flag it.
        let rep = self_consistency(&sol, &TemperatureFn::Constant(4.0 / 3.0), DEFAULT_TOLERANCE).unwrap();
        assert!(!rep.pass);
        let rep = self_consistency(&sol, &TemperatureFn::Constant(1.0), DEFAULT_TOLERANCE).unwrap();
        assert!(rep.pass && rep.max_rel_dev < 1e-10);
        assert_eq!(rep.csv_rows().len(), 5);
    }

    #[test]
    fn moment_hierarchy_of_a_relaxing_pulse() {
        let p = TransportParams::comptonization();
        let g = Grid::log(1e-2, 40.0, 200, 0.5, 6).unwrap();
        let s = InitialSpectrum::gaussian_pulse(3.0, 0.5, 1.0).unwrap();
        let sol = solve_transport(&p, &s, &TemperatureFn::Constant(1.2), &g).unwrap();
        let rep = moment_ode_check(&sol, &[3.0, 4.0, 5.0], DEFAULT_MOMENT_ODE_TOLERANCE).unwrap();
        assert_eq!(rep.rows.len(), 4 * 3);
        assert!(rep.pass, "{}", rep.max_rel_dev);
        assert!(moment_ode_check(&sol, &[7.0], 0.03).is_err());
    }

    #[test]
    fn trace_and_snapshot_moments_agree() {
        let sol = wien_run();
        for s in &sol.snapshots {
            let t = sol.trace.iter().find(|t| t.y == s.y).unwrap();
            let direct = sol.moment(s.y, 3.0).unwrap();
            assert!((direct - t.moments[1]).abs() <= 1e-12 * direct);
        }
    }
}
