//! Dressed-coherent-state MIST metric and multiphoton frequency collisions.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{ensure_finite, FluxError, Result};
use crate::spectrum::{
    label_with_basis, minus_i_pow, DeviceParams, DressedLabeling, FluxoniumBasis, NumericsConfig,
};

/// Residual below which a bisected collision is accepted, GHz.
pub const COLLISION_TOLERANCE: f64 = 1e-4;

/// `|k, alpha>` in the physical frame of the product basis (index `k' * n_ph + n'`).
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub level: usize,
    pub alpha: Complex64,
    pub amplitudes: Vec<Complex64>,
    /// `1 - ||psi||^2` before renormalization.
    pub norm_deficit: f64,
}

/// Largest `|alpha|^2` the truncation guard admits for `n_ph` photon states.
pub fn max_mean_photons(n_ph: usize) -> f64 {
    let root = (n_ph as f64).sqrt() - 3.0;
    if root <= 0.0 {
        0.0
    } else {
        root * root
    }
}

/// Coherent superposition `exp(-|a|^2/2) sum_n a^n / sqrt(n!) |k, n>` of the
/// labeled dressed states.
pub fn dressed_coherent_state(
    labeling: &DressedLabeling,
    k: usize,
    alpha: Complex64,
) -> Result<CoherentState> {
    ensure_finite("alpha", alpha.re)?;
    ensure_finite("alpha", alpha.im)?;
    if k >= labeling.n_keep {
        return Err(FluxError::validation(
            "level",
            format!("{k} outside the {} retained levels", labeling.n_keep),
        ));
    }
    let r = alpha.norm();
    let n_ph = labeling.n_ph;
    if r * r + 6.0 * r + 9.0 > n_ph as f64 {
        return Err(FluxError::Resource(format!(
            "|alpha|^2 = {:.3} needs |alpha|^2 + 6|alpha| + 9 <= n_ph = {n_ph}; raise n_ph to at least {}",
            r * r,
            (r * r + 6.0 * r + 9.0).ceil()
        )));
    }

    let dim = labeling.dim();
    let mut rotated = vec![Complex64::new(0.0, 0.0); dim];
    let mut weight = 0.0;
    let mut log_fact = 0.0;
    let phase = alpha.arg();
    for n in 0..n_ph {
        if n > 0 {
            log_fact += (n as f64).ln();
        }
        let log_mag = if r > 0.0 {
            -0.5 * r * r + n as f64 * r.ln() - 0.5 * log_fact
        } else if n == 0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        let mag = log_mag.exp();
        if mag == 0.0 {
            continue;
        }
        weight += mag * mag;
        // i^n from the rotated frame, (alpha / |alpha|)^n from the amplitude.
        let coeff = Complex64::from_polar(mag, n as f64 * (phase + std::f64::consts::FRAC_PI_2));
        let idx = labeling
            .index_of(k, n)
            .ok_or_else(|| FluxError::Labeling(format!("missing label ({k}, {n})")))?;
        for (row, amp) in rotated.iter_mut().enumerate() {
            let v = labeling.dressed_vectors[(row, idx)];
            if v != 0.0 {
                *amp += coeff * v;
            }
        }
    }
    let norm = weight.sqrt();
    let amplitudes = rotated
        .iter()
        .enumerate()
        .map(|(row, &a)| minus_i_pow(row % n_ph) * a / norm)
        .collect();
    Ok(CoherentState {
        level: k,
        alpha,
        amplitudes,
        norm_deficit: 1.0 - weight,
    })
}

fn expect_annihilation(state: &[Complex64], n_ph: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (row, amp) in state.iter().enumerate() {
        let n = row % n_ph;
        if n + 1 < n_ph {
            acc += amp.conj() * state[row + 1] * ((n + 1) as f64).sqrt();
        }
    }
    acc
}

/// `|1 - <k,alpha| a |k,alpha> / alpha|`.
pub fn mist_error_metric(state: &CoherentState, labeling: &DressedLabeling, alpha: Complex64) -> Result<f64> {
    if alpha.norm() == 0.0 {
        return Err(FluxError::validation("alpha", "metric undefined at alpha = 0"));
    }
    if state.amplitudes.len() != labeling.dim() {
        return Err(FluxError::validation(
            "state",
            format!("length {} does not match labeling dimension {}", state.amplitudes.len(), labeling.dim()),
        ));
    }
    let ratio = expect_annihilation(&state.amplitudes, labeling.n_ph) / alpha;
    Ok((Complex64::new(1.0, 0.0) - ratio).norm())
}

/// Photon-addition diagnostic `|1 - <a a^+> / (|alpha|^2 + 1)|`; zero for a
/// coherent state. Not used by the map.
pub fn mist_creation_metric(state: &CoherentState, labeling: &DressedLabeling) -> f64 {
    let n_ph = labeling.n_ph;
    let mut aa_dag = 0.0;
    for (row, amp) in state.amplitudes.iter().enumerate() {
        let n = row % n_ph;
        if n + 1 < n_ph {
            aa_dag += amp.norm_sqr() * (n + 1) as f64;
        }
    }
    (1.0 - aa_dag / (state.alpha.norm_sqr() + 1.0)).abs()
}

/// One cell of a MIST map; failures are kept in place.
#[derive(Debug, Clone, PartialEq)]
pub struct MistPoint {
    pub phi_ext: f64,
    pub n_bar: f64,
    pub level: usize,
    pub epsilon: std::result::Result<f64, String>,
}

impl MistPoint {
    pub fn value(&self) -> Option<f64> {
        self.epsilon.as_ref().ok().copied()
    }
}

fn metric_at(labeling: &DressedLabeling, k: usize, n_bar: f64) -> Result<f64> {
    if !(n_bar >= 0.0) || !n_bar.is_finite() {
        return Err(FluxError::validation("n_bar", format!("must be >= 0, got {n_bar}")));
    }
    let alpha = Complex64::new(n_bar.sqrt(), 0.0);
    let state = dressed_coherent_state(labeling, k, alpha)?;
    mist_error_metric(&state, labeling, alpha)
}

/// Evaluate the metric for `alpha = sqrt(n_bar)` at every flux and photon
/// number; output is row-major with flux as the outer index.
pub fn mist_map(
    params: &DeviceParams,
    numerics: &NumericsConfig,
    phis: &[f64],
    n_bars: &[f64],
    k: usize,
) -> Result<Vec<MistPoint>> {
    if phis.is_empty() || n_bars.is_empty() {
        return Err(FluxError::validation("grid", "flux and photon grids must be non-empty"));
    }
    numerics.validate(params)?;
    if k >= numerics.n_keep {
        return Err(FluxError::validation(
            "level",
            format!("{k} outside the {} retained levels", numerics.n_keep),
        ));
    }
    let basis = FluxoniumBasis::new(params, numerics.n_osc)?;
    let rows: Vec<Vec<MistPoint>> = phis
        .par_iter()
        .map(|&phi| {
            let labeling = label_with_basis(&basis, phi, numerics);
            n_bars
                .iter()
                .map(|&n_bar| MistPoint {
                    phi_ext: phi,
                    n_bar,
                    level: k,
                    epsilon: match &labeling {
                        Ok(lab) => metric_at(lab, k, n_bar).map_err(|e| e.to_string()),
                        Err(e) => Err(e.to_string()),
                    },
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

/// Where `f_ij(phi) = m * f_drive(phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionLocus {
    pub transition: (usize, usize),
    pub m: u32,
    /// `(phi_ext, drive frequency in GHz)` at each root.
    pub curve: Vec<(f64, f64)>,
}

/// Piecewise-linear function of flux, clamped outside its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(FluxError::validation("nodes", "need matching, non-empty node lists"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FluxError::validation("nodes", "abscissae must be strictly increasing"));
        }
        Ok(PiecewiseLinear { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let hi = self.xs.partition_point(|&v| v <= x).min(n - 1);
        let lo = hi - 1;
        let t = (x - self.xs[lo]) / (self.xs[hi] - self.xs[lo]);
        self.ys[lo] + t * (self.ys[hi] - self.ys[lo])
    }
}

/// Qubit-state-dressed resonator frequency `E(k,1) - E(k,0)` for each level
/// in `levels`, sampled on `phis` and interpolated linearly in between.
///
/// The dressed frequency jumps across avoided crossings with the fluxonium
/// ladder; interpolating between grid samples keeps the drive continuous so
/// bisection converges to a genuine root.
pub fn dressed_resonator_drive(
    params: &DeviceParams,
    numerics: &NumericsConfig,
    levels: &[usize],
    phis: &[f64],
) -> Result<BTreeMap<usize, PiecewiseLinear>> {
    let reduced = numerics.with_photons(numerics.n_ph.min(3).max(2));
    reduced.validate(params)?;
    let basis = FluxoniumBasis::new(params, reduced.n_osc)?;
    let labelings = phis
        .par_iter()
        .map(|&phi| label_with_basis(&basis, phi, &reduced))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for &k in levels {
        if k >= reduced.n_keep {
            return Err(FluxError::validation(
                "level",
                format!("{k} outside the {} retained levels", reduced.n_keep),
            ));
        }
        let ys = labelings
            .iter()
            .map(|lab| {
                let e0 = lab.dressed_energies[lab.index_of(k, 0).expect("label in range")];
                let e1 = lab.dressed_energies[lab.index_of(k, 1).expect("label in range")];
                e1 - e0
            })
            .collect();
        out.insert(k, PiecewiseLinear::new(phis.to_vec(), ys)?);
    }
    Ok(out)
}

/// Bracket sign changes of `f_ij(phi) - m f_drive(i, phi)` on the flux grid
/// and bisect each one. The drive is called with the transition's lower level.
pub fn find_collisions<D>(
    params: &DeviceParams,
    numerics: &NumericsConfig,
    transitions: &[(usize, usize)],
    phis: &[f64],
    m_range: RangeInclusive<u32>,
    drive: D,
) -> Result<Vec<CollisionLocus>>
where
    D: Fn(usize, f64) -> Result<f64> + Sync,
{
    if phis.len() < 2 || phis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FluxError::validation("phi grid", "need >= 2 strictly increasing points"));
    }
    if *m_range.start() == 0 {
        return Err(FluxError::validation("m", "photon count must be >= 1"));
    }
    let basis = FluxoniumBasis::new(params, numerics.n_osc)?;
    for &(i, j) in transitions {
        if i >= j || j >= numerics.n_osc {
            return Err(FluxError::validation(
                "transitions",
                format!("need i < j < n_osc, got ({i}, {j})"),
            ));
        }
    }
    let transition_at = |phi: f64, i: usize, j: usize| -> Result<f64> {
        let spec = basis.diagonalize(phi)?;
        Ok(spec.energies[j] - spec.energies[i])
    };
    let spectra = phis
        .par_iter()
        .map(|&phi| basis.diagonalize(phi))
        .collect::<Result<Vec<_>>>()?;

    let mut loci = Vec::new();
    for &(i, j) in transitions {
        let drives = phis.iter().map(|&phi| drive(i, phi)).collect::<Result<Vec<_>>>()?;
        for m in m_range.clone() {
            let mf = m as f64;
            let values: Vec<f64> = spectra
                .iter()
                .zip(&drives)
                .map(|(s, d)| s.energies[j] - s.energies[i] - mf * d)
                .collect();
            let residual = |phi: f64| -> Result<f64> { Ok(transition_at(phi, i, j)? - mf * drive(i, phi)?) };
            let mut curve = Vec::new();
            if values[0] == 0.0 {
                curve.push((phis[0], drives[0]));
            }
            for w in 0..phis.len() - 1 {
                let (va, vb) = (values[w], values[w + 1]);
                let root = if vb == 0.0 {
                    Some(phis[w + 1])
                } else if va * vb < 0.0 {
                    Some(bisect(&residual, phis[w], phis[w + 1], va)?)
                } else {
                    None
                };
                if let Some(phi) = root {
                    let r = residual(phi)?;
                    if r.abs() < COLLISION_TOLERANCE {
                        curve.push((phi, drive(i, phi)?));
                    } else {
                        log::debug!("rejected ({i},{j}) m={m} root at {phi}: residual {r:.3e} GHz");
                    }
                }
            }
            if !curve.is_empty() {
                loci.push(CollisionLocus {
                    transition: (i, j),
                    m,
                    curve,
                });
            }
        }
    }
    Ok(loci)
}

fn bisect<F>(f: &F, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let lo_sign = f_lo.signum();
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::build_coupled_and_label;

    fn numerics() -> NumericsConfig {
        NumericsConfig {
            n_osc: 60,
            n_keep: 4,
            n_ph: 30,
            dasi_dg: 0.01,
        }
    }

    #[test]
    fn zero_alpha_gives_the_dressed_vacuum() {
        let p = DeviceParams::measured();
        let lab = build_coupled_and_label(&p, 2.8, &numerics()).unwrap();
        let st = dressed_coherent_state(&lab, 1, Complex64::new(0.0, 0.0)).unwrap();
        let want = lab.physical_state(1, 0).unwrap();
        for (a, b) in st.amplitudes.iter().zip(&want) {
            assert!((a - b).norm() < 1e-14);
        }
        assert!(st.norm_deficit.abs() < 1e-14);
    }

    #[test]
    fn uncoupled_state_is_a_bare_coherent_state_with_zero_metric() {
        let p = DeviceParams::measured().with_coupling(0.0);
        let lab = build_coupled_and_label(&p, 2.8, &numerics()).unwrap();
        let alpha = Complex64::new(1.2, -0.7);
        let st = dressed_coherent_state(&lab, 2, alpha).unwrap();
        let mut fact = 1.0;
        for n in 0..30 {
            if n > 0 {
                fact *= n as f64;
            }
            let want = (-alpha.norm_sqr() / 2.0).exp() * alpha.powu(n as u32) / fact.sqrt();
            let got = st.amplitudes[2 * 30 + n] * (1.0 - st.norm_deficit).sqrt();
            assert!((got - want).norm() < 1e-12, "n = {n}");
        }
        assert!(mist_error_metric(&st, &lab, alpha).unwrap() < 1e-9);
        assert!(mist_creation_metric(&st, &lab) < 1e-9);
    }

    #[test]
    fn guard_and_zero_alpha_errors() {
        let lab = build_coupled_and_label(&DeviceParams::measured(), 2.8, &numerics()).unwrap();
        // n_ph = 30 admits |alpha| <= sqrt(30) - 3
        let too_big = Complex64::new(2.5, 0.0);
        assert!(matches!(dressed_coherent_state(&lab, 0, too_big), Err(FluxError::Resource(_))));
        let st = dressed_coherent_state(&lab, 0, Complex64::new(0.0, 0.0)).unwrap();
        assert!(mist_error_metric(&st, &lab, Complex64::new(0.0, 0.0)).is_err());
        assert!((max_mean_photons(60) - (60f64.sqrt() - 3.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn piecewise_linear_interpolates_and_clamps() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, -1.0]).unwrap();
        assert_eq!(f.eval(-1.0), 1.0);
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(5.0), -1.0);
        assert!(PiecewiseLinear::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn constructed_crossing_is_found() {
        let p = DeviceParams::measured();
        let n = numerics();
        let basis = FluxoniumBasis::new(&p, n.n_osc).unwrap();
        let target_phi = 2.7;
        let f = basis.diagonalize(target_phi).unwrap().energies[1];
        let phis: Vec<f64> = (0..11).map(|i| 2.5 + 0.05 * i as f64).collect();
        let loci = find_collisions(&p, &n, &[(0, 1)], &phis, 1..=1, |_, _| Ok(f)).unwrap();
        assert_eq!(loci.len(), 1);
        // f01 is symmetric about pi, so the only root in [2.5, 3.0] is at 2.7
        assert_eq!(loci[0].curve.len(), 1);
        assert!((loci[0].curve[0].0 - target_phi).abs() < 1e-8);
    }
}
