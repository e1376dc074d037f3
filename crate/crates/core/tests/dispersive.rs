use std::f64::consts::PI;

use fluxread::dispersive::{
    extract_tls_from_rates, stark_shifted_frequency, tls_boundary, ChebyshevDispersion,
    DispersiveModel, DressedDispersion, RateSample, TlsExtractOptions, TlsMode,
};
use fluxread::spectrum::{DeviceParams, FluxoniumBasis, NumericsConfig};

fn measured_model() -> DressedDispersion {
    DressedDispersion::new(&DeviceParams::measured(), &NumericsConfig::default()).unwrap()
}

/// Second-order shift `chi = g^2 sum_j (|n_1j|^2 S_1j - |n_0j|^2 S_0j)` with
/// `S_kj = 1/(E_k - E_j + f_r) + 1/(E_k - E_j - f_r)`, over the retained levels.
/// Returns MHz and the smallest denominator in GHz.
fn perturbative_chi(params: &DeviceParams, phi: f64, n_keep: usize) -> (f64, f64) {
    let spec = FluxoniumBasis::new(params, 100).unwrap().diagonalize(phi).unwrap();
    let (g, fr) = (params.g_na, params.f_r);
    let mut chi = 0.0;
    let mut closest = f64::INFINITY;
    for (k, sign) in [(1usize, 1.0), (0, -1.0)] {
        for j in (0..n_keep).filter(|&j| j != k) {
            let d = spec.energies[k] - spec.energies[j];
            chi += sign * g * g * spec.charge_element(k, j).norm_sqr() * (1.0 / (d + fr) + 1.0 / (d - fr));
            closest = closest.min((d + fr).abs()).min((d - fr).abs());
        }
    }
    (chi * 1e3, closest)
}

#[test]
fn sweet_spot_shift_is_pinned() {
    let p = measured_model().point(PI).unwrap();
    assert!((p.chi - 0.5577).abs() < 1e-3, "{}", p.chi);
    assert!((p.chi - 0.57).abs() <= 0.06);
}

#[test]
fn uncoupled_shift_vanishes() {
    let params = DeviceParams::measured().with_coupling(0.0);
    let model = DressedDispersion::new(&params, &NumericsConfig::default()).unwrap();
    for phi in [0.3, PI, 4.0] {
        assert_eq!(model.point(phi).unwrap().chi, 0.0);
    }
}

#[test]
fn shift_matches_perturbation_theory_away_from_resonances() {
    let params = DeviceParams::measured();
    let model = measured_model();
    let mut compared = 0;
    for i in 0..=20 {
        let phi = PI * i as f64 / 20.0;
        let (oracle, closest) = perturbative_chi(&params, phi, NumericsConfig::default().n_keep);
        if closest < 2.0 * params.g_na {
            continue;
        }
        let chi = model.point(phi).unwrap().chi;
        assert!((chi - oracle).abs() <= 0.15 * oracle.abs(), "phi = {phi}: {chi} vs {oracle}");
        compared += 1;
    }
    assert!(compared >= 17);
}

#[test]
fn boundary_agrees_with_a_grid_root_scan() {
    let model = measured_model();
    let tls = TlsMode {
        f_tls: model.point(PI).unwrap().f01 + 0.005,
        gamma_down: 1.0,
        gamma_up: 0.1,
        linewidth: 0.5,
    };
    let phis: Vec<f64> = (0..21).map(|i| (0.99 + 0.001 * i as f64) * PI).collect();
    let points: Vec<_> = phis.iter().map(|&p| model.point(p).unwrap()).collect();
    let boundary = tls_boundary(&points, &tls);
    let dn = 0.05;
    for p in &points {
        let residual = |n: f64| stark_shifted_frequency(p, n).unwrap() - tls.f_tls;
        let cell = (0..800).find(|&i| residual(i as f64 * dn).signum() != residual((i + 1) as f64 * dn).signum());
        let emitted = boundary.points.iter().find(|b| b.phi_ext == p.phi_ext);
        match (cell, emitted) {
            (Some(i), Some(b)) => assert!(b.n >= i as f64 * dn - 1e-9 && b.n <= (i + 1) as f64 * dn + 1e-9),
            (None, None) => {}
            other => panic!("scan and boundary disagree at {}: {other:?}", p.phi_ext),
        }
    }
    assert!(boundary.points.len() >= 5);
}

#[test]
fn three_injected_peaks_are_recovered() {
    let f01_of = |phi: f64| Ok(0.6 + 0.8 * (phi - PI));
    let truth = [3.20, 3.30, 3.42];
    let width = 0.004;
    let samples: Vec<RateSample> = (0..301)
        .map(|i| {
            let phi = 3.15 + 0.001 * i as f64;
            let mut down = 0.1;
            for &c in &truth {
                let x = 2.0 * (phi - c) / width;
                down += 2.0 / (1.0 + x * x);
            }
            RateSample {
                phi_ext: phi,
                gamma_down: down,
                gamma_up: 0.1 * down,
            }
        })
        .collect();
    let catalog = extract_tls_from_rates(&samples, f01_of, &TlsExtractOptions::default()).unwrap();
    assert_eq!(catalog.len(), 3);
    let spacing = 0.8 * 0.001;
    for (tls, &c) in catalog.iter().zip(&truth) {
        let expected = f01_of(c).unwrap();
        assert!((tls.f_tls - expected).abs() <= spacing + 1e-12, "{} vs {expected}", tls.f_tls);
        assert!((tls.linewidth - 0.8 * width * 1e3).abs() < 0.5);
    }
}

#[test]
fn window_interpolant_tracks_the_dressed_model() {
    let model = measured_model();
    let (lo, hi) = (1.0 * PI, 1.1 * PI);
    let cheb = ChebyshevDispersion::build(&model, lo, hi, 32).unwrap();
    for i in 0..7 {
        let phi = lo + (hi - lo) * (i as f64 + 0.37) / 7.0;
        let (a, b) = (cheb.point(phi).unwrap(), model.point(phi).unwrap());
        assert!((a.f01 - b.f01).abs() < 1e-9, "f01 at {phi}");
        assert!((a.chi - b.chi).abs() < 1e-6, "chi at {phi}");
    }
    assert!(cheb.point(hi + 0.1).is_err());
}
