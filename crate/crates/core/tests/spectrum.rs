use std::f64::consts::PI;

use fluxread::spectrum::{
    build_coupled_and_label, transition_frequency, DeviceParams, FluxoniumBasis, NumericsConfig,
};
use fluxread::FluxError;
use proptest::prelude::*;

fn measured_basis(n_osc: usize) -> FluxoniumBasis {
    FluxoniumBasis::new(&DeviceParams::measured(), n_osc).unwrap()
}

#[test]
fn sweet_spot_frequency_is_pinned() {
    let spec = measured_basis(100).diagonalize(PI).unwrap();
    assert!((spec.f01() - 0.602_470_868).abs() < 1e-8, "{}", spec.f01());
}

#[test]
fn higher_transition_agrees_with_a_large_basis() {
    let small = measured_basis(100).diagonalize(PI).unwrap();
    let large = measured_basis(250).diagonalize(PI).unwrap();
    let f13 = transition_frequency(&small, 1, 3).unwrap();
    assert!((f13 - transition_frequency(&large, 1, 3).unwrap()).abs() < 1e-9);
    assert!((f13 - 8.056_590_271).abs() < 1e-8, "{f13}");
}

#[test]
fn basis_size_converges_below_twenty_gigahertz() {
    for phi in [0.0, 0.7 * PI, PI] {
        let a = measured_basis(60).diagonalize(phi).unwrap();
        let b = measured_basis(120).diagonalize(phi).unwrap();
        let compared = a.energies.iter().take_while(|&&e| e < 20.0).count();
        assert!(compared >= 7);
        for k in 0..compared {
            assert!((a.energies[k] - b.energies[k]).abs() < 1e-6, "level {k} at {phi}");
        }
    }
}

#[test]
fn harmonic_spacing_matches_plasma_frequency() {
    let params = DeviceParams {
        e_j: 0.0,
        ..DeviceParams::measured()
    };
    assert!((params.plasma_frequency() - 2.6942).abs() < 1e-4);
    let spec = FluxoniumBasis::new(&params, 80).unwrap().diagonalize(1.3).unwrap();
    for w in spec.energies[..12].windows(2) {
        assert!((w[1] - w[0] - params.plasma_frequency()).abs() < 1e-9);
    }
}

#[test]
fn equal_levels_are_rejected() {
    let spec = measured_basis(60).diagonalize(PI).unwrap();
    assert!(matches!(transition_frequency(&spec, 2, 2), Err(FluxError::Validation { .. })));
    assert!(matches!(transition_frequency(&spec, 0, 60), Err(FluxError::Validation { .. })));
}

#[test]
fn halving_the_coupling_step_keeps_the_labels() {
    let params = DeviceParams::measured();
    let coarse = NumericsConfig {
        n_osc: 60,
        n_keep: 8,
        n_ph: 10,
        dasi_dg: 0.001,
    };
    let fine = NumericsConfig {
        dasi_dg: 0.0005,
        ..coarse
    };
    let a = build_coupled_and_label(&params, PI, &coarse).unwrap();
    let b = build_coupled_and_label(&params, PI, &fine).unwrap();
    for k in 0..coarse.n_keep {
        for n in 0..=coarse.n_ph / 2 {
            assert_eq!(a.index_of(k, n), b.index_of(k, n), "label ({k}, {n})");
        }
    }
}

#[test]
fn dressed_levels_sit_near_their_bare_sums() {
    let lab = build_coupled_and_label(
        &DeviceParams::measured(),
        PI,
        &NumericsConfig {
            n_osc: 60,
            n_keep: 8,
            n_ph: 8,
            dasi_dg: 0.001,
        },
    )
    .unwrap();
    for n in 0..4 {
        let idx = lab.index_of(0, n).unwrap();
        let bare = lab.bare_energies[n];
        assert!((lab.dressed_energies[idx] - bare).abs() < 0.05, "n = {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spectrum_is_periodic_and_symmetric(phi in 0.0..(2.0 * PI)) {
        let basis = measured_basis(60);
        let base = basis.diagonalize(phi).unwrap();
        let shifted = basis.diagonalize(phi + 2.0 * PI).unwrap();
        let mirrored = basis.diagonalize(2.0 * PI - phi).unwrap();
        for k in 0..6 {
            prop_assert!((base.energies[k] - shifted.energies[k]).abs() < 1e-8);
            prop_assert!((base.energies[k] - mirrored.energies[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn sweet_spot_is_a_minimum_of_f01(offset in 0.01..0.5f64) {
        let basis = measured_basis(60);
        let centre = basis.diagonalize(PI).unwrap().f01();
        prop_assert!(basis.diagonalize(PI + offset).unwrap().f01() > centre);
    }
}
