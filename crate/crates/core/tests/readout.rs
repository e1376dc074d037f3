use std::f64::consts::PI;

use fluxread::dispersive::TlsMode;
use fluxread::dynamics::{ReadoutTrajectory, TrajectorySample};
use fluxread::readout::{
    classify_errors, fidelity, fit_double_gaussian, postselect_error_curve, residual_profile, shot_rng,
    simulate_shots, HazardProfile, NoiseModel, ShotRecord,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erfc;

fn flat(f01: f64, n_bar: f64, duration: f64) -> ReadoutTrajectory {
    let dt = 0.01;
    let count = (duration / dt).round() as usize + 1;
    let samples = (0..count)
        .map(|i| TrajectorySample {
            t: i as f64 * dt,
            phi_ext: PI,
            n_bar,
            f01_shifted: f01,
        })
        .collect();
    ReadoutTrajectory::new(dt, samples).unwrap()
}

fn within_sigmas(observed: f64, p: f64, n: usize, sigmas: f64) -> bool {
    (observed - p).abs() <= sigmas * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn two_rate_chain_relaxes_to_the_analytic_population() {
    let (up, down, duration, shots) = (0.4, 1.1, 1.0, 100_000u64);
    let profile = HazardProfile::constant(duration, up, down, 50).unwrap();
    let excited = (0..shots)
        .filter(|&i| profile.evolve(0, &mut shot_rng(5, i)).0 == 1)
        .count() as f64
        / shots as f64;
    let p = up / (up + down) * (1.0 - (-(up + down) * duration).exp());
    assert!(within_sigmas(excited, p, shots as usize, 3.0), "{excited} vs {p}");
}

#[test]
fn assignment_error_matches_gaussian_overlap() {
    let n_bar = 4.0;
    let noise = NoiseModel {
        separation_scale: 2.0,
        ..NoiseModel::default()
    };
    let shots = 100_000;
    let records = simulate_shots(&flat(0.6, n_bar, 1.0), &[], &noise, |_| 0.0, 0, shots, 8).unwrap();
    let half = 0.5 * noise.separation_scale * n_bar.sqrt();
    let p = 0.5 * erfc(half / (noise.sigma() * 2f64.sqrt()));
    for outcome in [|r: &ShotRecord| r.m1, |r: &ShotRecord| r.m2, |r: &ShotRecord| r.m3] {
        let observed = records.iter().filter(|r| outcome(r) == 1).count() as f64 / shots as f64;
        assert!(within_sigmas(observed, p, shots, 3.0), "{observed} vs {p}");
    }
}

#[test]
fn mixture_parameters_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let values: Vec<f64> = (0..100_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mu = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
            mu + 0.3 * z
        })
        .collect();
    let fit = fit_double_gaussian(&values, None).unwrap();
    let (mu0, mu1) = if fit.mu0 < fit.mu1 { (fit.mu0, fit.mu1) } else { (fit.mu1, fit.mu0) };
    assert!((mu0 + 1.0).abs() < 0.02 && (mu1 - 1.0).abs() < 0.02, "{fit:?}");
    assert!((fit.sigma - 0.3).abs() < 0.3 * 0.02);
    assert!((fit.w - 0.5).abs() < 0.5 * 0.02);
    assert!(!fit.degenerate_weight);
}

/// Residual counts and expected counts between `mu0 + 2 sigma` and `mu1 - 2 sigma`.
fn excess_between_means(catalog: &[TlsMode]) -> (f64, f64) {
    let noise = NoiseModel {
        eta: 1.0,
        separation_scale: 6.0,
        ..NoiseModel::default()
    };
    let iq: Vec<f64> = (0..2u8)
        .flat_map(|state| simulate_shots(&flat(0.6, 4.0, 1.0), catalog, &noise, |_| 0.0, state, 20_000, 6).unwrap())
        .map(|r| r.iq1)
        .collect();
    let fit = fit_double_gaussian(&iq, None).unwrap();
    let (lo, hi) = (fit.mu0.min(fit.mu1) + 2.0 * fit.sigma, fit.mu0.max(fit.mu1) - 2.0 * fit.sigma);
    assert!(lo < hi, "{fit:?}");
    residual_profile(&iq, &fit, 60)
        .iter()
        .filter(|b| b.center > lo && b.center < hi)
        .fold((0.0, 0.0), |(r, e), b| (r + b.residual, e + b.expected))
}

#[test]
fn mid_window_decays_leave_excess_between_the_means() {
    let tls = [TlsMode {
        f_tls: 0.6,
        gamma_down: 0.15,
        gamma_up: 0.0,
        linewidth: 1.0,
    }];
    let (with_tls, expected) = excess_between_means(&tls);
    assert!(with_tls > 5.0 * expected.sqrt(), "{with_tls} vs {expected}");
    let (clean, expected) = excess_between_means(&[]);
    assert!(clean.abs() < 3.0 * expected.sqrt().max(1.0), "{clean} vs {expected}");
}

#[test]
fn injected_error_rates_give_their_fidelity() {
    let shots = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut make = |prepared: u8| -> Vec<ShotRecord> {
        (0..shots)
            .map(|_| {
                let m2 = prepared ^ u8::from(rng.random::<f64>() < 0.02);
                ShotRecord {
                    m1: prepared,
                    m2,
                    m3: m2,
                    iq1: 0.0,
                    iq2: 0.0,
                    iq3: 0.0,
                }
            })
            .collect()
    };
    let (zeros, ones) = (make(0), make(1));
    let f = fidelity(&zeros, &ones).unwrap();
    let sigma = 0.5 * (2.0 * 0.02 * 0.98 / shots as f64).sqrt();
    assert!((f - 0.98).abs() <= 3.0 * sigma, "{f}");
}

#[test]
fn records_do_not_depend_on_the_thread_count() {
    let tls = [TlsMode {
        f_tls: 0.601,
        gamma_down: 1.0,
        gamma_up: 0.2,
        linewidth: 2.0,
    }];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_shots(&flat(0.6, 3.0, 0.5), &tls, &NoiseModel::default(), |n| 0.1 * n, 1, 3000, 77).unwrap())
    };
    assert_eq!(run(1), run(3));
}

fn arbitrary_records() -> impl Strategy<Value = Vec<ShotRecord>> {
    prop::collection::vec((0u8..2, 0u8..2, 0u8..2, -4.0..4.0f64), 1..200).prop_map(|v| {
        v.into_iter()
            .map(|(m1, m2, m3, iq1)| ShotRecord {
                m1,
                m2,
                m3,
                iq1,
                iq2: 0.0,
                iq3: 0.0,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn classes_partition_the_records(records in arbitrary_records()) {
        let counts = classify_errors(&records).unwrap();
        prop_assert_eq!(counts.total(), records.len());
    }

    #[test]
    fn retained_fraction_shrinks_with_the_gap(records in arbitrary_records(), threshold in -1.0..1.0f64) {
        let gaps: Vec<f64> = (0..20).map(|i| 0.4 * i as f64).collect();
        let curve = postselect_error_curve(&records, threshold, &gaps, 0).unwrap();
        prop_assert_eq!(curve[0].retained, 1.0);
        for w in curve.windows(2) {
            prop_assert!(w[1].retained <= w[0].retained);
        }
    }

    #[test]
    fn noiseless_iq_reproduces_the_prepared_state(seed in 0u64..1000, state in 0u8..2) {
        let noise = NoiseModel { eta: 1.0, separation_scale: 40.0, ..NoiseModel::default() };
        let records = simulate_shots(&flat(0.6, 4.0, 0.3), &[], &noise, |_| 0.0, state, 200, seed).unwrap();
        prop_assert!(records.iter().all(|r| r.bits() == [state; 3]));
    }
}

#[test]
fn gaussian_noise_has_the_configured_width() {
    let noise = NoiseModel {
        eta: 0.5,
        integration_time: 2.0,
        ..NoiseModel::default()
    };
    let records = simulate_shots(&flat(0.6, 0.0, 2.0), &[], &noise, |_| 0.0, 0, 50_000, 4).unwrap();
    let n = records.len() as f64;
    let var = records.iter().map(|r| r.iq2 * r.iq2).sum::<f64>() / n;
    assert!((var.sqrt() - noise.sigma()).abs() < 0.02 * noise.sigma());
    assert!((noise.sigma() - 1.0).abs() < 1e-12);
}
