use num_rational::BigRational;
use proptest::prelude::*;

use kompsep::moments::{moment_expression, theta_derivatives_comptonization, theta_derivatives_general};
use kompsep::pde::{solve_transport_with, Grid, SolverOptions, TemperatureFn};
use kompsep::spectra::{InitialSpectrum, TransportParams};
use kompsep::verify::conservation_report;
use kompsep::Var;

fn reconstructs_moments(spectrum: &InitialSpectrum, order: usize) {
    let table = theta_derivatives_comptonization(spectrum, order).unwrap();
    let derivs = table.exact().unwrap();
    let i3 = spectrum.initial_moment(3.into()).unwrap().exact.unwrap();
    for n in 3..=(order as u32 + 4) {
        let expr = moment_expression(n).unwrap();
        let value: BigRational = expr
            .eval(|v| match v {
                Var::Theta(m) => derivs.get(m as usize).cloned(),
                _ => None,
            })
            .unwrap();
        let target = spectrum.initial_moment((n as i64).into()).unwrap().exact.unwrap() / &i3;
        assert_eq!(value, target, "n={n}");
    }
}

#[test]
fn derivative_tables_reconstruct_the_moments() {
    reconstructs_moments(&InitialSpectrum::monoenergetic(4.0, 1.0).unwrap(), 16);
    reconstructs_moments(&InitialSpectrum::Bremsstrahlung, 16);
}

#[test]
fn monoenergetic_run_conserves_photon_number() {
    let p = TransportParams::comptonization();
    let s = InitialSpectrum::monoenergetic(4.0, 1.0).unwrap();
    let g = Grid::log(1e-3, 50.0, 200, 2.0, 5).unwrap();
    let sol = solve_transport_with(&p, &s, &TemperatureFn::Constant(4.0 / 3.0), &g, &SolverOptions::default()).unwrap();
    let c = conservation_report(&sol);
    assert!(c.n_r_drift <= 1e-3, "{c:?}");
    assert!(!c.n_r_truncation_dependent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn routes_agree_exactly_for_any_photon_number(eighths in 1u32..=64, order in 1usize..=7) {
        let s = InitialSpectrum::monoenergetic(4.0, eighths as f64 / 8.0).unwrap();
        let p = TransportParams::comptonization();
        let a = theta_derivatives_general(&p, &s, order).unwrap();
        let b = theta_derivatives_comptonization(&s, order).unwrap();
        prop_assert_eq!(a.exact().unwrap(), b.exact().unwrap());
    }

    #[test]
    fn routes_agree_for_gaussian_pulses(variance in 1e-3f64..0.2) {
        // mean² + σ² = 4·mean keeps I₄(0) = 4I₃(0)
        let mean = 2.0 + (4.0 - variance).sqrt();
        let s = InitialSpectrum::gaussian_pulse(mean, variance, 1.0).unwrap();
        let p = TransportParams::comptonization();
        let a = theta_derivatives_general(&p, &s, 5).unwrap();
        let b = theta_derivatives_comptonization(&s, 5).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }
}
