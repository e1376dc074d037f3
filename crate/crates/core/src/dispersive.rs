//! Dispersive shift, ac-Stark-shifted qubit frequency, TLS resonance
//! boundaries and TLS extraction from rate-vs-flux profiles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, FluxError, Result};
use crate::spectrum::{
    label_with_basis, DeviceParams, DressedLabeling, FluxoniumBasis, NumericsConfig,
};

/// Qubit frequency and full dispersive shift per photon at one flux point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersivePoint {
    pub phi_ext: f64,
    /// GHz.
    pub f01: f64,
    /// MHz.
    pub chi: f64,
}

/// A parasitic two-level system, fixed in frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsMode {
    /// GHz.
    pub f_tls: f64,
    /// us^-1, drives 1 -> 0 at resonance.
    pub gamma_down: f64,
    /// us^-1, drives 0 -> 1 at resonance.
    pub gamma_up: f64,
    /// Full width at half maximum, MHz.
    pub linewidth: f64,
}

impl TlsMode {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("tls.f_tls", self.f_tls)?;
        ensure_non_negative("tls.gamma_down", self.gamma_down)?;
        ensure_non_negative("tls.gamma_up", self.gamma_up)?;
        ensure_positive("tls.linewidth", self.linewidth)
    }
}

/// `chi = (E11 - E10) - (E01 - E00)` and `f01 = E10 - E00` from a labeling.
pub fn dispersive_shift(labeling: &DressedLabeling) -> Result<DispersivePoint> {
    if labeling.n_ph < 2 {
        return Err(FluxError::Labeling(
            "dispersive shift needs at least two photon states".into(),
        ));
    }
    let e00 = labeling.energy(0, 0)?;
    let e01 = labeling.energy(0, 1)?;
    let e10 = labeling.energy(1, 0)?;
    let e11 = labeling.energy(1, 1)?;
    Ok(DispersivePoint {
        phi_ext: labeling.phi_ext,
        f01: e10 - e00,
        chi: 1e3 * ((e11 - e10) - (e01 - e00)),
    })
}

/// Linear ac-Stark model `f01 + n chi`, in GHz.
pub fn stark_shifted_frequency(point: &DispersivePoint, n: f64) -> Result<f64> {
    ensure_non_negative("n", n)?;
    Ok(point.f01 + n * point.chi * 1e-3)
}

/// Anything that yields `f01(phi)` and `chi(phi)`.
pub trait DispersiveModel: Sync {
    fn point(&self, phi_ext: f64) -> Result<DispersivePoint>;
}

impl<F> DispersiveModel for F
where
    F: Fn(f64) -> Result<DispersivePoint> + Sync,
{
    fn point(&self, phi_ext: f64) -> Result<DispersivePoint> {
        self(phi_ext)
    }
}

/// Photon cutoff used when only `chi` is needed: the states `|k, 0>` and
/// `|k, 1>` couple to `n = 2` directly, higher photon numbers enter at
/// fourth order.
pub const CHI_PHOTON_CUTOFF: usize = 6;

/// `f01` and `chi` from the DASI-labeled coupled spectrum.
#[derive(Debug, Clone)]
pub struct DressedDispersion {
    basis: FluxoniumBasis,
    numerics: NumericsConfig,
}

impl DressedDispersion {
    pub fn new(params: &DeviceParams, numerics: &NumericsConfig) -> Result<Self> {
        let numerics = numerics.with_photons(numerics.n_ph.min(CHI_PHOTON_CUTOFF).max(2));
        numerics.validate(params)?;
        Ok(DressedDispersion {
            basis: FluxoniumBasis::new(params, numerics.n_osc)?,
            numerics,
        })
    }

    pub fn labeling(&self, phi_ext: f64) -> Result<DressedLabeling> {
        label_with_basis(&self.basis, phi_ext, &self.numerics)
    }
}

impl DispersiveModel for DressedDispersion {
    fn point(&self, phi_ext: f64) -> Result<DispersivePoint> {
        dispersive_shift(&self.labeling(phi_ext)?)
    }
}

/// Evaluate a model over a flux grid, preserving order.
pub fn dispersive_curve<M: DispersiveModel>(model: &M, phis: &[f64]) -> Vec<Result<DispersivePoint>> {
    phis.par_iter().map(|&phi| model.point(phi)).collect()
}

/// Chebyshev interpolant of `f01` and `chi` on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct ChebyshevDispersion {
    lo: f64,
    hi: f64,
    f01: Vec<f64>,
    chi: Vec<f64>,
}

impl ChebyshevDispersion {
    pub fn build<M: DispersiveModel>(model: &M, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        ensure_finite("flux window", lo)?;
        ensure_finite("flux window", hi)?;
        if !(hi > lo) || nodes < 2 {
            return Err(FluxError::validation(
                "flux window",
                format!("need lo < hi and >= 2 nodes, got [{lo}, {hi}] with {nodes}"),
            ));
        }
        let xs: Vec<f64> = (0..nodes)
            .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64).cos())
            .collect();
        let phis: Vec<f64> = xs.iter().map(|x| 0.5 * (lo + hi) + 0.5 * (hi - lo) * x).collect();
        let points = dispersive_curve(model, &phis)
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let f01: Vec<f64> = points.iter().map(|p| p.f01).collect();
        let chi: Vec<f64> = points.iter().map(|p| p.chi).collect();
        Ok(ChebyshevDispersion {
            lo,
            hi,
            f01: chebyshev_coefficients(&f01),
            chi: chebyshev_coefficients(&chi),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

impl DispersiveModel for ChebyshevDispersion {
    fn point(&self, phi_ext: f64) -> Result<DispersivePoint> {
        let slack = 1e-12 * (self.hi - self.lo);
        if !(phi_ext >= self.lo - slack && phi_ext <= self.hi + slack) {
            return Err(FluxError::validation(
                "phi_ext",
                format!("{phi_ext} outside interpolation domain [{}, {}]", self.lo, self.hi),
            ));
        }
        let x = ((2.0 * phi_ext - self.lo - self.hi) / (self.hi - self.lo)).clamp(-1.0, 1.0);
        Ok(DispersivePoint {
            phi_ext,
            f01: clenshaw(&self.f01, x),
            chi: clenshaw(&self.chi, x),
        })
    }
}

fn chebyshev_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    v * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / n as f64).cos()
                })
                .sum();
            let c = 2.0 * s / n as f64;
            if k == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect()
}

fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + coeffs[0]
}

/// One point of a TLS resonance boundary in the (flux, photon number) plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub phi_ext: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TlsBoundary {
    pub points: Vec<BoundaryPoint>,
    /// Fluxes skipped because `chi` vanished there.
    pub singular: Vec<f64>,
}

/// Resonance condition `n(phi) = (f_tls - f01(phi)) / chi(phi)`; negative
/// photon numbers are dropped.
pub fn tls_boundary(points: &[DispersivePoint], tls: &TlsMode) -> TlsBoundary {
    let mut out = TlsBoundary::default();
    for p in points {
        if p.chi == 0.0 || !p.chi.is_finite() {
            log::debug!("chi = 0 at phi_ext = {}: boundary point skipped", p.phi_ext);
            out.singular.push(p.phi_ext);
            continue;
        }
        let n = (tls.f_tls - p.f01) / (p.chi * 1e-3);
        if n >= 0.0 {
            out.points.push(BoundaryPoint {
                phi_ext: p.phi_ext,
                n,
            });
        }
    }
    out
}

/// Relaxation and excitation rates measured at one flux bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub phi_ext: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsExtractOptions {
    /// Peaks must exceed the median total rate by this many median absolute deviations.
    pub prominence_mads: f64,
    /// Floor for the converted linewidth, MHz.
    pub min_linewidth: f64,
}

impl Default for TlsExtractOptions {
    fn default() -> Self {
        TlsExtractOptions {
            prominence_mads: 3.0,
            min_linewidth: 1e-3,
        }
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Locate TLS peaks in a depolarization-rate profile.
///
/// Each contiguous run of samples whose total rate `gamma_down + gamma_up`
/// exceeds `median + prominence_mads * MAD` yields one TLS at its highest
/// sample. The TLS frequency is the qubit frequency there, the rates are the
/// peak excess over the median baselines, and the linewidth is the frequency
/// span covered by the peak's full width at half maximum.
pub fn extract_tls_from_rates<F>(
    samples: &[RateSample],
    f01_of: F,
    options: &TlsExtractOptions,
) -> Result<Vec<TlsMode>>
where
    F: Fn(f64) -> Result<f64>,
{
    if samples.len() < 5 {
        return Err(FluxError::validation(
            "samples",
            format!("need at least 5 rate samples, got {}", samples.len()),
        ));
    }
    for (i, s) in samples.iter().enumerate() {
        ensure_finite("samples.phi_ext", s.phi_ext)?;
        ensure_non_negative("samples.gamma_down", s.gamma_down)?;
        ensure_non_negative("samples.gamma_up", s.gamma_up)?;
        if i > 0 && s.phi_ext < samples[i - 1].phi_ext {
            return Err(FluxError::validation("samples", "must be sorted by phi_ext"));
        }
    }

    let total: Vec<f64> = samples.iter().map(|s| s.gamma_down + s.gamma_up).collect();
    let base = median(&total);
    let deviations: Vec<f64> = total.iter().map(|t| (t - base).abs()).collect();
    let mad = median(&deviations);
    let threshold = base + options.prominence_mads * mad;
    let base_down = median(&samples.iter().map(|s| s.gamma_down).collect::<Vec<_>>());
    let base_up = median(&samples.iter().map(|s| s.gamma_up).collect::<Vec<_>>());

    let mut catalog = Vec::new();
    let mut i = 0;
    while i < total.len() {
        if total[i] <= threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < total.len() && total[i] > threshold {
            i += 1;
        }
        let peak = (start..i)
            .max_by(|&a, &b| total[a].total_cmp(&total[b]).then(b.cmp(&a)))
            .unwrap_or(start);

        let half = base + 0.5 * (total[peak] - base);
        let phi_left = half_crossing(samples, &total, peak, half, Direction::Left);
        let phi_right = half_crossing(samples, &total, peak, half, Direction::Right);
        let f_peak = f01_of(samples[peak].phi_ext)?;
        let span = (f01_of(phi_left)? - f_peak).abs() + (f01_of(phi_right)? - f_peak).abs();

        catalog.push(TlsMode {
            f_tls: f_peak,
            gamma_down: (samples[peak].gamma_down - base_down).max(0.0),
            gamma_up: (samples[peak].gamma_up - base_up).max(0.0),
            linewidth: (span * 1e3).max(options.min_linewidth),
        });
    }
    Ok(catalog)
}

enum Direction {
    Left,
    Right,
}

fn half_crossing(
    samples: &[RateSample],
    total: &[f64],
    peak: usize,
    half: f64,
    dir: Direction,
) -> f64 {
    let mut j = peak;
    loop {
        let next = match dir {
            Direction::Left if j > 0 => j - 1,
            Direction::Right if j + 1 < total.len() => j + 1,
            _ => return samples[j].phi_ext,
        };
        if total[next] <= half {
            let (t0, t1) = (total[j], total[next]);
            let frac = if t0 != t1 { (t0 - half) / (t0 - t1) } else { 0.0 };
            return samples[j].phi_ext + frac * (samples[next].phi_ext - samples[j].phi_ext);
        }
        j = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(phi: f64, f01: f64, chi: f64) -> DispersivePoint {
        DispersivePoint { phi_ext: phi, f01, chi }
    }

    #[test]
    fn stark_shift_examples() {
        let p = point(3.14, 0.564, 0.57);
        assert_eq!(stark_shifted_frequency(&p, 0.0).unwrap(), 0.564);
        assert!((stark_shifted_frequency(&p, 10.0).unwrap() - 0.5697).abs() < 1e-12);
        assert!(stark_shifted_frequency(&p, -1.0).is_err());
        let once = stark_shifted_frequency(&p, 2.0).unwrap();
        let twice = stark_shifted_frequency(&point(3.14, stark_shifted_frequency(&p, 1.0).unwrap(), 0.57), 1.0)
            .unwrap();
        assert!((once - twice).abs() < 1e-15);
    }

    #[test]
    fn boundary_is_zero_at_crossing_and_skips_singular_points() {
        let tls = TlsMode {
            f_tls: 0.6,
            gamma_down: 1.0,
            gamma_up: 0.5,
            linewidth: 0.5,
        };
        let pts = [point(1.0, 0.6, 0.5), point(1.1, 0.59, 0.0), point(1.2, 0.61, 0.5)];
        let b = tls_boundary(&pts, &tls);
        assert_eq!(b.points, vec![BoundaryPoint { phi_ext: 1.0, n: 0.0 }]);
        assert_eq!(b.singular, vec![1.1]);
    }

    #[test]
    fn boundary_is_straight_for_constant_chi_and_linear_f01() {
        let tls = TlsMode {
            f_tls: 1.0,
            gamma_down: 1.0,
            gamma_up: 0.0,
            linewidth: 1.0,
        };
        let pts: Vec<_> = (0..11).map(|i| point(i as f64 * 0.1, 0.9 + 0.001 * i as f64, 1.0)).collect();
        let b = tls_boundary(&pts, &tls);
        assert_eq!(b.points.len(), 11);
        let slope = (b.points[1].n - b.points[0].n) / 0.1;
        for w in b.points.windows(2) {
            assert!(((w[1].n - w[0].n) / 0.1 - slope).abs() < 1e-9);
        }
    }

    #[test]
    fn chebyshev_reproduces_smooth_functions() {
        let model = |phi: f64| -> Result<DispersivePoint> { Ok(point(phi, (phi - 3.0).powi(2) + 0.5, phi.sin())) };
        let cheb = ChebyshevDispersion::build(&model, 2.5, 3.5, 24).unwrap();
        for i in 0..=50 {
            let phi = 2.5 + i as f64 / 50.0;
            let p = cheb.point(phi).unwrap();
            assert!((p.f01 - ((phi - 3.0).powi(2) + 0.5)).abs() < 1e-12);
            assert!((p.chi - phi.sin()).abs() < 1e-12);
        }
        assert!(cheb.point(3.6).is_err());
    }

    #[test]
    fn flat_profile_has_no_tls() {
        let samples: Vec<_> = (0..20)
            .map(|i| RateSample {
                phi_ext: i as f64 * 0.01,
                gamma_down: 0.1,
                gamma_up: 0.02,
            })
            .collect();
        let cat = extract_tls_from_rates(&samples, |p| Ok(0.5 + p), &TlsExtractOptions::default()).unwrap();
        assert!(cat.is_empty());
    }

    #[test]
    fn too_few_samples_rejected() {
        let samples = vec![
            RateSample {
                phi_ext: 0.0,
                gamma_down: 0.0,
                gamma_up: 0.0
            };
            4
        ];
        assert!(extract_tls_from_rates(&samples, |p| Ok(p), &TlsExtractOptions::default()).is_err());
    }
}
