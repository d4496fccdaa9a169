//! Output-only spectral estimation and frequency-domain decomposition.
//!
//! The cross-spectral density matrix of the measured outputs is estimated
//! with Welch averaging, decomposed by a singular value decomposition at
//! every frequency bin, and the peaks of the first singular value give the
//! natural frequencies. The first singular vector at a peak is the mode
//! shape estimate and the half-power bandwidth of the first singular value
//! gives a damping estimate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::TimeSeriesSet;

/// Default damping ratio used when the half-power bandwidth is unresolved.
pub const FALLBACK_DAMPING: f64 = 0.013;

const MIN_DAMPING: f64 = 1e-4;
const MAX_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            // periodic Hann
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    /// Segment length in samples, a power of two.
    pub segment_length: usize,
    pub overlap_fraction: f64,
    pub window: Window,
}

impl WelchConfig {
    /// Hann window, 50 % overlap, largest power of two not above `n_samples / 8`.
    pub fn for_record(n_samples: usize) -> Self {
        let target = (n_samples / 8).max(2);
        let segment_length = 1usize << (usize::BITS - 1 - target.leading_zeros());
        Self {
            segment_length,
            overlap_fraction: 0.5,
            window: Window::Hann,
        }
    }

    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.segment_length < 2 || !self.segment_length.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "segment length {} is not a power of two >= 2",
                self.segment_length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidParameter(format!(
                "overlap fraction {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        if n_samples < self.segment_length {
            return Err(Error::RecordTooShort {
                samples: n_samples,
                segment: self.segment_length,
            });
        }
        Ok(())
    }

    fn hop(&self) -> usize {
        ((self.segment_length as f64 * (1.0 - self.overlap_fraction)).round() as usize).max(1)
    }
}

/// One-sided cross-spectral density matrices, bins `Δf ..= fs/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectralDensity {
    frequencies_hz: Vec<f64>,
    matrices: Vec<DMatrix<Complex64>>,
    welch_config: WelchConfig,
    n_segments: usize,
}

impl CrossSpectralDensity {
    /// Wraps externally computed matrices. Each matrix is made exactly
    /// Hermitian by averaging it with its conjugate transpose.
    pub fn from_matrices(
        frequencies_hz: Vec<f64>,
        matrices: Vec<DMatrix<Complex64>>,
        welch_config: WelchConfig,
    ) -> Result<Self> {
        if frequencies_hz.len() != matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: frequencies_hz.len(),
                found: matrices.len(),
            });
        }
        if frequencies_hz.len() < 3 {
            return Err(Error::InvalidParameter(
                "need at least three frequency bins".into(),
            ));
        }
        if frequencies_hz.windows(2).any(|w| w[1] <= w[0]) || frequencies_hz[0] <= 0.0 {
            return Err(Error::InvalidParameter(
                "frequencies must be positive and ascending".into(),
            ));
        }
        let d = matrices[0].nrows();
        let matrices = matrices
            .into_iter()
            .map(|m| {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: m.nrows(),
                    });
                }
                Ok(hermitian_part(m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frequencies_hz,
            matrices,
            welch_config,
            n_segments: 1,
        })
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    pub fn welch_config(&self) -> &WelchConfig {
        &self.welch_config
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn n_channels(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.frequencies_hz[1] - self.frequencies_hz[0]
    }

    /// Real auto-spectrum of one channel.
    pub fn auto_spectrum(&self, channel: usize) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|m| m[(channel, channel)].re)
            .collect()
    }
}

fn hermitian_part(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let adj = m.adjoint();
    (m + adj) * Complex64::new(0.5, 0.0)
}

/// Welch-averaged one-sided cross-spectral density matrix.
///
/// `S_ij(f) = scale · mean_seg(X_i(f) · conj(X_j(f)))` with
/// `scale = 2 / (fs · Σ w²)` (no doubling at Nyquist), so integrating an
/// auto-spectrum over frequency returns the channel variance.
pub fn welch_csd(data: &TimeSeriesSet, cfg: &WelchConfig) -> Result<CrossSpectralDensity> {
    let n = data.n_samples();
    cfg.validate(n)?;
    let len = cfg.segment_length;
    let hop = cfg.hop();
    let window = cfg.window.coefficients(len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fs = data.sample_rate_hz();
    let d = data.n_channels();
    let n_bins = len / 2;
    let n_segments = (n - len) / hop + 1;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut acc = vec![DMatrix::<Complex64>::zeros(d, d); n_bins];
    let mut spectra = vec![vec![Complex64::new(0.0, 0.0); len]; d];
    for seg in 0..n_segments {
        let start = seg * hop;
        for (c, buf) in spectra.iter_mut().enumerate() {
            let x = &data.channel(c)[start..start + len];
            for ((b, xv), w) in buf.iter_mut().zip(x).zip(&window) {
                *b = Complex64::new(xv * w, 0.0);
            }
            fft.process(buf);
        }
        for (k, m) in acc.iter_mut().enumerate() {
            let bin = k + 1;
            for i in 0..d {
                let xi = spectra[i][bin];
                for j in 0..d {
                    m[(i, j)] += xi * spectra[j][bin].conj();
                }
            }
        }
    }
    let frequencies_hz = (1..=n_bins).map(|k| k as f64 * fs / len as f64).collect();
    let base = 1.0 / (fs * window_power * n_segments as f64);
    let matrices = acc
        .into_iter()
        .enumerate()
        .map(|(k, m)| {
            let one_sided = if k + 1 == n_bins { 1.0 } else { 2.0 };
            hermitian_part(m * Complex64::new(base * one_sided, 0.0))
        })
        .collect();
    Ok(CrossSpectralDensity {
        frequencies_hz,
        matrices,
        welch_config: *cfg,
        n_segments,
    })
}

/// Per-bin singular values (descending) and first singular vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    frequencies_hz: Vec<f64>,
    singular_values: Vec<Vec<f64>>,
    first_singular_vectors: Vec<Vec<Complex64>>,
}

impl SingularSpectrum {
    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    /// `singular_values()[bin][rank]`, descending in rank.
    pub fn singular_values(&self) -> &[Vec<f64>] {
        &self.singular_values
    }

    pub fn first_singular_vectors(&self) -> &[Vec<Complex64>] {
        &self.first_singular_vectors
    }

    /// First singular value curve.
    pub fn sv1(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s[0]).collect()
    }

    pub fn n_bins(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn n_channels(&self) -> usize {
        self.singular_values[0].len()
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.frequencies_hz[1] - self.frequencies_hz[0]
    }
}

/// SVD of the spectral matrix at every bin.
pub fn svd_spectrum(csd: &CrossSpectralDensity) -> SingularSpectrum {
    let mut singular_values = Vec::with_capacity(csd.matrices.len());
    let mut first_singular_vectors = Vec::with_capacity(csd.matrices.len());
    for m in &csd.matrices {
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        singular_values.push(
            order
                .iter()
                .map(|&i| svd.singular_values[i].max(0.0))
                .collect::<Vec<_>>(),
        );
        let v = u.column(order[0]);
        let norm = v.norm();
        first_singular_vectors.push(v.iter().map(|z| z / norm).collect());
    }
    SingularSpectrum {
        frequencies_hz: csd.frequencies_hz.clone(),
        singular_values,
        first_singular_vectors,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakConfig {
    /// Required prominence as a fraction of the dB range `max − median`.
    pub min_prominence_rel: f64,
    pub min_separation_hz: f64,
    pub max_peaks: usize,
}

impl Default for PeakConfig {
    // 0.25 clears Welch noise-floor ripple (about 0.2 of the dB range at
    // ~30 averaged segments) while keeping genuine modes
    fn default() -> Self {
        Self {
            min_prominence_rel: 0.25,
            min_separation_hz: 0.5,
            max_peaks: 10,
        }
    }
}

fn to_db(x: f64) -> f64 {
    10.0 * x.max(f64::MIN_POSITIVE).log10()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Topographic prominence of the local maximum at `i`.
fn prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left_min = h;
    for j in (0..i).rev() {
        if y[j] > h {
            break;
        }
        left_min = left_min.min(y[j]);
    }
    let mut right_min = h;
    for &v in &y[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peaks of the first singular value curve, ascending in frequency.
///
/// Works on the dB curve: a bin qualifies if it is a local maximum (the
/// first and last bins never are) whose prominence reaches
/// `min_prominence_rel × (max − median)`. Candidates are taken by
/// descending height subject to the separation constraint, at most
/// `max_peaks` of them.
pub fn pick_peaks(spec: &SingularSpectrum, cfg: &PeakConfig) -> Result<Vec<usize>> {
    if !(cfg.min_prominence_rel > 0.0 && cfg.min_prominence_rel <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "min_prominence_rel {} outside (0, 1]",
            cfg.min_prominence_rel
        )));
    }
    let df = spec.bin_width_hz();
    if cfg.min_separation_hz < df * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "min_separation_hz {} below bin width {df}",
            cfg.min_separation_hz
        )));
    }
    if cfg.max_peaks == 0 {
        return Err(Error::InvalidParameter(
            "max_peaks must be at least 1".into(),
        ));
    }
    let db: Vec<f64> = spec.sv1().into_iter().map(to_db).collect();
    let max_db = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = cfg.min_prominence_rel * (max_db - median(&db));

    let mut candidates: Vec<usize> = (1..db.len() - 1)
        .filter(|&i| db[i] > db[i - 1] && db[i] >= db[i + 1])
        .filter(|&i| {
            let p = prominence(&db, i);
            p > 0.0 && p >= threshold
        })
        .collect();
    candidates.sort_by(|&a, &b| db[b].total_cmp(&db[a]).then(a.cmp(&b)));

    let freqs = spec.frequencies_hz();
    let sep = cfg.min_separation_hz - 1e-9 * df;
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.len() == cfg.max_peaks {
            break;
        }
        if kept.iter().all(|&k| (freqs[k] - freqs[c]).abs() >= sep) {
            kept.push(c);
        }
    }
    if kept.is_empty() {
        return Err(Error::NoPeaksFound);
    }
    kept.sort_unstable();
    Ok(kept)
}

/// Rotates `v` so its first entry with magnitude above 1e-12 is real and
/// nonnegative, and scales it to unit 2-norm.
pub fn normalize_phase(v: &[Complex64]) -> Vec<Complex64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    let rot = v
        .iter()
        .find(|z| z.norm() > 1e-12)
        .map(|z| z.conj() / z.norm())
        .unwrap_or(Complex64::new(1.0, 0.0));
    v.iter().map(|z| z * rot / norm).collect()
}

/// Phase-normalised first singular vector at `bin_index`.
pub fn extract_mode_shape(spec: &SingularSpectrum, bin_index: usize) -> Vec<Complex64> {
    normalize_phase(&spec.first_singular_vectors[bin_index])
}

/// Half-power bandwidth damping estimate on the first singular value.
///
/// `ζ = (f₂ − f₁) / (2 f_peak)` with linearly interpolated −3 dB crossings,
/// clamped to `[1e-4, 0.5]`. The crossing on each side must be found before
/// the curve turns upward again, and both neighbouring bins of the peak
/// must sit above the half-power level (the peak spans more than one bin).
pub fn estimate_damping(spec: &SingularSpectrum, bin_index: usize) -> Result<f64> {
    let p = spec.sv1();
    let f = spec.frequencies_hz();
    let b = bin_index;
    if b == 0 || b + 1 >= p.len() {
        return Err(Error::BandwidthUnresolved(b));
    }
    let half = 0.5 * p[b];
    if p[b - 1] <= half || p[b + 1] <= half {
        return Err(Error::BandwidthUnresolved(b));
    }
    let interp = |j0: usize, j1: usize| f[j0] + (half - p[j0]) / (p[j1] - p[j0]) * (f[j1] - f[j0]);

    let mut f1 = None;
    for j in (0..b).rev() {
        if p[j] > p[j + 1] {
            break;
        }
        if p[j] <= half {
            f1 = Some(interp(j, j + 1));
            break;
        }
    }
    let mut f2 = None;
    for j in (b + 1)..p.len() {
        if p[j] > p[j - 1] {
            break;
        }
        if p[j] <= half {
            f2 = Some(interp(j, j - 1));
            break;
        }
    }
    match (f1, f2) {
        (Some(f1), Some(f2)) => Ok(((f2 - f1) / (2.0 * f[b])).clamp(MIN_DAMPING, MAX_DAMPING)),
        _ => Err(Error::BandwidthUnresolved(b)),
    }
}

/// One identified mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePeak {
    pub frequency_hz: f64,
    pub bin_index: usize,
    pub damping_ratio: f64,
    /// `false` when the half-power estimate failed and the fallback was used.
    pub damping_resolved: bool,
    pub mode_shape: Vec<Complex64>,
    pub sv1_at_peak: f64,
}

/// Peak picking, mode-shape extraction and damping estimation in one pass.
pub fn identify_modes(
    spec: &SingularSpectrum,
    cfg: &PeakConfig,
    fallback_damping: f64,
) -> Result<Vec<ModePeak>> {
    let peaks = pick_peaks(spec, cfg)?;
    Ok(peaks
        .into_iter()
        .map(|bin| {
            let (damping_ratio, damping_resolved) = match estimate_damping(spec, bin) {
                Ok(z) => (z, true),
                Err(_) => (fallback_damping, false),
            };
            ModePeak {
                frequency_hz: spec.frequencies_hz[bin],
                bin_index: bin,
                damping_ratio,
                damping_resolved,
                mode_shape: extract_mode_shape(spec, bin),
                sv1_at_peak: spec.singular_values[bin][0],
            }
        })
        .collect())
}

/// Modal assurance criterion `|aᴴb|² / (aᴴa · bᴴb)`.
pub fn mac(a: &[Complex64], b: &[Complex64]) -> f64 {
    let a = DVector::from_column_slice(a);
    let b = DVector::from_column_slice(b);
    let num = a.dotc(&b).norm_sqr();
    let den = a.norm_squared() * b.norm_squared();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Same as [`mac`] for real shapes.
pub fn mac_real(a: &[f64], b: &[f64]) -> f64 {
    let ca: Vec<Complex64> = a.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let cb: Vec<Complex64> = b.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    mac(&ca, &cb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spectrum_from_sv1(freqs: Vec<f64>, sv1: Vec<f64>) -> SingularSpectrum {
        let matrices = sv1
            .iter()
            .map(|s| DMatrix::from_element(1, 1, c(*s, 0.0)))
            .collect();
        let csd =
            CrossSpectralDensity::from_matrices(freqs, matrices, WelchConfig::for_record(1024))
                .unwrap();
        svd_spectrum(&csd)
    }

    /// Acceleration response power of an SDOF oscillator, |ω² H(ω)|².
    fn sdof_accel_psd(f: f64, fn_: f64, zeta: f64) -> f64 {
        let r = f / fn_;
        r.powi(4) / ((1.0 - r * r).powi(2) + (2.0 * zeta * r).powi(2))
    }

    #[test]
    fn default_segment_length() {
        assert_eq!(WelchConfig::for_record(30720).segment_length, 2048);
        assert_eq!(WelchConfig::for_record(15000).segment_length, 1024);
        assert_eq!(WelchConfig::for_record(8 * 512).segment_length, 512);
    }

    #[test]
    fn record_too_short() {
        let ts = TimeSeriesSet::from_columns(100.0, vec![vec![0.0; 100]]).unwrap();
        let cfg = WelchConfig {
            segment_length: 128,
            overlap_fraction: 0.5,
            window: Window::Hann,
        };
        assert!(matches!(
            welch_csd(&ts, &cfg),
            Err(Error::RecordTooShort { .. })
        ));
    }

    #[test]
    fn sine_power_integrates_to_half_amplitude_squared() {
        let fs = 256.0;
        let amp = 3.0;
        let n = 256 * 32;
        let x: Vec<f64> = (0..n)
            .map(|k| amp * (2.0 * std::f64::consts::PI * 10.0 * k as f64 / fs).sin())
            .collect();
        let ts = TimeSeriesSet::from_columns(fs, vec![x]).unwrap();
        let cfg = WelchConfig {
            segment_length: 256,
            overlap_fraction: 0.5,
            window: Window::Hann,
        };
        let csd = welch_csd(&ts, &cfg).unwrap();
        let power: f64 = csd.auto_spectrum(0).iter().sum::<f64>() * csd.bin_width_hz();
        let want = amp * amp / 2.0;
        assert!((power - want).abs() < 0.05 * want, "{power} vs {want}");
    }

    #[test]
    fn duplicated_channel_has_unit_coherence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4096).map(|_| rng.sample(StandardNormal)).collect();
        let ts = TimeSeriesSet::from_columns(100.0, vec![x.clone(), x]).unwrap();
        let csd = welch_csd(&ts, &WelchConfig::for_record(4096)).unwrap();
        for m in csd.matrices() {
            let coh = m[(0, 1)].norm_sqr() / (m[(0, 0)].re * m[(1, 1)].re);
            assert!((coh - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = WelchConfig {
            segment_length: 256,
            overlap_fraction: 0.5,
            window: Window::Hann,
        };
        let n = 128 * 70 + 128;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ts = TimeSeriesSet::from_columns(200.0, vec![x]).unwrap();
        let csd = welch_csd(&ts, &cfg).unwrap();
        assert!(csd.n_segments() >= 64);
        let s = csd.auto_spectrum(0);
        // exclude the Nyquist bin, which carries no one-sided doubling
        let body = &s[..s.len() - 1];
        let max = body.iter().cloned().fold(0.0, f64::max);
        let min = body.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "ratio {}", max / min);
        // level: variance 1 spread over fs/2
        let mean = body.iter().sum::<f64>() / body.len() as f64;
        assert!((mean - 1.0 / 100.0).abs() < 0.1 / 100.0);
    }

    #[test]
    fn csd_matrices_are_hermitian_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2048).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let ts = TimeSeriesSet::from_columns(64.0, cols).unwrap();
        let csd = welch_csd(&ts, &WelchConfig::for_record(2048)).unwrap();
        for m in csd.matrices() {
            assert_eq!(m, &m.adjoint());
            let tr = m.trace().re;
            let eig = m.clone().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-8 * tr));
        }
        assert!(csd.frequencies_hz()[0] > 0.0);
        assert!((csd.frequencies_hz().last().unwrap() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_svd_is_magnitude() {
        let freqs = vec![1.0, 2.0, 3.0];
        let spec = spectrum_from_sv1(freqs, vec![2.0, 5.0, 0.5]);
        assert_eq!(spec.sv1(), vec![2.0, 5.0, 0.5]);
        assert!((spec.first_singular_vectors()[1][0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(extract_mode_shape(&spec, 1), vec![c(1.0, 0.0)]);
    }

    #[test]
    fn identity_matrix_has_unit_singular_values() {
        let m = DMatrix::<Complex64>::identity(3, 3);
        let csd = CrossSpectralDensity::from_matrices(
            vec![1.0, 2.0, 3.0],
            vec![m.clone(), m.clone(), m],
            WelchConfig::for_record(1024),
        )
        .unwrap();
        let spec = svd_spectrum(&csd);
        for s in spec.singular_values() {
            assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    fn random_hermitian_psd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(d, d, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        &a * a.adjoint()
    }

    #[test]
    fn random_psd_reconstruction_and_eigen_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mats: Vec<_> = (0..16).map(|_| random_hermitian_psd(&mut rng, 3)).collect();
        let freqs = (1..=16).map(|k| k as f64).collect();
        let csd =
            CrossSpectralDensity::from_matrices(freqs, mats.clone(), WelchConfig::for_record(1024))
                .unwrap();
        let spec = svd_spectrum(&csd);
        for (bin, m) in mats.iter().enumerate() {
            let sv = &spec.singular_values()[bin];
            assert!(sv.windows(2).all(|w| w[0] >= w[1]));
            // independent route: Hermitian eigen-decomposition
            let eig = m.clone().symmetric_eigen();
            let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            for (s, e) in sv.iter().zip(&ev) {
                assert!((s - e).abs() <= 1e-8 * ev[0]);
            }
            // U Σ Uᴴ reconstruction from the eigenvectors ordered like the SVD
            let svd = m.clone().svd(true, true);
            let u = svd.u.unwrap();
            let s = DMatrix::from_diagonal(&svd.singular_values.map(|x| c(x, 0.0)));
            let rec = &u * s * u.adjoint();
            assert!((rec - m).norm() <= 1e-8 * m.norm());
            // sv1 dominates every auto-spectrum / n_channels
            for i in 0..3 {
                assert!(sv[0] >= m[(i, i)].re / 3.0);
            }
            let v = &spec.first_singular_vectors()[bin];
            let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn phase_convention_is_rotation_invariant() {
        let v = vec![c(0.0, 0.0), c(0.3, -0.4), c(1.0, 2.0)];
        let base = normalize_phase(&v);
        assert!(base[1].im.abs() < 1e-15 && base[1].re > 0.0);
        for theta in [0.3, 1.7, -2.9, std::f64::consts::PI] {
            let rot = Complex64::from_polar(1.0, theta);
            let rotated: Vec<_> = v.iter().map(|z| z * rot).collect();
            let got = normalize_phase(&rotated);
            for (a, b) in got.iter().zip(&base) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn monotone_spectrum_has_no_peaks() {
        let freqs: Vec<f64> = (1..=100).map(|k| k as f64 * 0.1).collect();
        let sv1 = freqs.iter().map(|f| 1.0 / f).collect();
        let spec = spectrum_from_sv1(freqs, sv1);
        assert_eq!(
            pick_peaks(&spec, &PeakConfig::default()),
            Err(Error::NoPeaksFound)
        );
    }

    #[test]
    fn keeps_dominant_peaks_ascending() {
        let df = 0.05;
        let freqs: Vec<f64> = (1..=1200).map(|k| k as f64 * df).collect();
        let centers: Vec<f64> = (0..15).map(|i| 2.0 + 3.7 * i as f64).collect();
        let heights: Vec<f64> = (0..15)
            .map(|i| 10f64.powf(1.0 + ((i * 7) % 15) as f64 * 0.2))
            .collect();
        let sv1: Vec<f64> = freqs
            .iter()
            .map(|f| {
                1e-2 + centers
                    .iter()
                    .zip(&heights)
                    .map(|(c, h)| h * sdof_accel_psd(*f, *c, 0.01) / sdof_accel_psd(*c, *c, 0.01))
                    .sum::<f64>()
            })
            .collect();
        let spec = spectrum_from_sv1(freqs.clone(), sv1);
        let cfg = PeakConfig {
            min_prominence_rel: 0.05,
            min_separation_hz: 1.0,
            max_peaks: 10,
        };
        let peaks = pick_peaks(&spec, &cfg).unwrap();
        assert_eq!(peaks.len(), 10);
        assert!(peaks.windows(2).all(|w| freqs[w[1]] - freqs[w[0]] >= 1.0));
        let mut order: Vec<usize> = (0..15).collect();
        order.sort_by(|a, b| heights[*b].total_cmp(&heights[*a]));
        let mut want: Vec<f64> = order[..10].iter().map(|&i| centers[i]).collect();
        want.sort_by(f64::total_cmp);
        for (p, w) in peaks.iter().zip(&want) {
            assert!((freqs[*p] - w).abs() <= df + 1e-9);
        }
    }

    #[test]
    fn separation_and_config_validation() {
        let freqs: Vec<f64> = (1..=200).map(|k| k as f64 * 0.1).collect();
        let sv1: Vec<f64> = freqs
            .iter()
            .map(|f| sdof_accel_psd(*f, 5.0, 0.01) + 0.8 * sdof_accel_psd(*f, 5.5, 0.01))
            .collect();
        let spec = spectrum_from_sv1(freqs, sv1);
        let mut cfg = PeakConfig {
            min_prominence_rel: 0.05,
            min_separation_hz: 0.2,
            max_peaks: 5,
        };
        assert_eq!(pick_peaks(&spec, &cfg).unwrap().len(), 2);
        cfg.min_separation_hz = 1.0;
        assert_eq!(pick_peaks(&spec, &cfg).unwrap().len(), 1);
        cfg.min_separation_hz = 0.01;
        assert!(matches!(
            pick_peaks(&spec, &cfg),
            Err(Error::InvalidParameter(_))
        ));
        cfg.min_separation_hz = 0.5;
        cfg.min_prominence_rel = 0.0;
        assert!(matches!(
            pick_peaks(&spec, &cfg),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn half_power_damping_on_fine_sdof_spectrum() {
        let (fn_, zeta) = (5.0, 0.02);
        let df = zeta * fn_ / 5.0;
        let freqs: Vec<f64> = (1..2000).map(|k| k as f64 * df).collect();
        let sv1: Vec<f64> = freqs
            .iter()
            .map(|f| sdof_accel_psd(*f, fn_, zeta))
            .collect();
        let spec = spectrum_from_sv1(freqs, sv1);
        let peaks = pick_peaks(
            &spec,
            &PeakConfig {
                min_prominence_rel: 0.1,
                min_separation_hz: 0.5,
                max_peaks: 1,
            },
        )
        .unwrap();
        let est = estimate_damping(&spec, peaks[0]).unwrap();
        assert!((est - zeta).abs() <= 0.3 * zeta, "{est}");
    }

    #[test]
    fn benchmark_like_damping_at_coarse_resolution() {
        let (fn_, zeta) = (8.362, 0.013);
        let df = 250.0 / 4096.0;
        let freqs: Vec<f64> = (1..=2048).map(|k| k as f64 * df).collect();
        let sv1: Vec<f64> = freqs
            .iter()
            .map(|f| sdof_accel_psd(*f, fn_, zeta))
            .collect();
        let spec = spectrum_from_sv1(freqs, sv1);
        let bin = pick_peaks(&spec, &PeakConfig::default()).unwrap()[0];
        let est = estimate_damping(&spec, bin).unwrap();
        assert!((0.005..=0.03).contains(&est), "{est}");
    }

    #[test]
    fn sub_bin_peak_is_unresolved() {
        let freqs: Vec<f64> = (1..=9).map(|k| k as f64).collect();
        let sv1 = vec![1.0, 1.0, 1.0, 1.0, 100.0, 1.0, 1.0, 1.0, 1.0];
        let spec = spectrum_from_sv1(freqs, sv1);
        assert_eq!(
            estimate_damping(&spec, 4),
            Err(Error::BandwidthUnresolved(4))
        );
        let modes = identify_modes(
            &spec,
            &PeakConfig {
                min_prominence_rel: 0.5,
                min_separation_hz: 1.0,
                max_peaks: 3,
            },
            FALLBACK_DAMPING,
        )
        .unwrap();
        assert_eq!(modes.len(), 1);
        assert!(!modes[0].damping_resolved);
        assert_eq!(modes[0].damping_ratio, FALLBACK_DAMPING);
    }

    #[test]
    fn mac_basics() {
        let a = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let b: Vec<_> = a.iter().map(|z| z * c(0.0, 2.0)).collect();
        assert!((mac(&a, &b) - 1.0).abs() < 1e-12);
        assert!(mac_real(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-15);
    }
}
