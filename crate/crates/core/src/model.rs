//! Modal-superposition response model built from identified modes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::TimeSeriesSet;
use crate::spectral::ModePeak;

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub frequency_hz: f64,
    /// Base damping ratio, before `damping_scale` is applied.
    pub damping_ratio: f64,
    pub modal_amplitude: f64,
    /// Unit-norm complex shape, one entry per channel.
    pub shape: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    frequency_hz: f64,
    damping_ratio: f64,
    modal_amplitude: f64,
    shape_re: Vec<f64>,
    shape_im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    n_channels: usize,
    damping_scale: f64,
    global_gain: f64,
    modes: Vec<ModeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRecord", try_from = "ModelRecord")]
pub struct ModalModel {
    modes: Vec<Mode>,
    n_channels: usize,
    damping_scale: f64,
    global_gain: f64,
}

impl From<ModalModel> for ModelRecord {
    fn from(m: ModalModel) -> Self {
        ModelRecord {
            n_channels: m.n_channels,
            damping_scale: m.damping_scale,
            global_gain: m.global_gain,
            modes: m
                .modes
                .into_iter()
                .map(|md| ModeRecord {
                    frequency_hz: md.frequency_hz,
                    damping_ratio: md.damping_ratio,
                    modal_amplitude: md.modal_amplitude,
                    shape_re: md.shape.iter().map(|z| z.re).collect(),
                    shape_im: md.shape.iter().map(|z| z.im).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ModelRecord> for ModalModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let modes = r
            .modes
            .into_iter()
            .map(|md| {
                if md.shape_re.len() != md.shape_im.len() {
                    return Err(Error::DimensionMismatch {
                        expected: md.shape_re.len(),
                        found: md.shape_im.len(),
                    });
                }
                Ok(Mode {
                    frequency_hz: md.frequency_hz,
                    damping_ratio: md.damping_ratio,
                    modal_amplitude: md.modal_amplitude,
                    shape: md
                        .shape_re
                        .iter()
                        .zip(&md.shape_im)
                        .map(|(re, im)| Complex64::new(*re, *im))
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = ModalModel::new(modes, r.n_channels)?;
        m.with_gain(r.global_gain)?.scale_damping(r.damping_scale)
    }
}

impl ModalModel {
    /// Validates and wraps a mode list with `damping_scale = 1`, `global_gain = 1`.
    pub fn new(modes: Vec<Mode>, n_channels: usize) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::EmptyModeSet);
        }
        if n_channels == 0 {
            return Err(Error::InvalidParameter(
                "model needs at least one channel".into(),
            ));
        }
        for (i, md) in modes.iter().enumerate() {
            if !(md.frequency_hz.is_finite() && md.frequency_hz > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mode {i}: frequency {} is not positive",
                    md.frequency_hz
                )));
            }
            if !(0.0..1.0).contains(&md.damping_ratio) {
                return Err(Error::InvalidParameter(format!(
                    "mode {i}: damping ratio {} outside [0, 1)",
                    md.damping_ratio
                )));
            }
            if !(md.modal_amplitude.is_finite() && md.modal_amplitude >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mode {i}: modal amplitude {} is negative",
                    md.modal_amplitude
                )));
            }
            if md.shape.len() != n_channels {
                return Err(Error::DimensionMismatch {
                    expected: n_channels,
                    found: md.shape.len(),
                });
            }
            let norm = md.shape.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "mode {i}: shape norm {norm} is not 1"
                )));
            }
        }
        if modes
            .windows(2)
            .any(|w| w[1].frequency_hz <= w[0].frequency_hz)
        {
            return Err(Error::AssemblyConflict(
                "mode frequencies are not strictly ascending".into(),
            ));
        }
        Ok(Self {
            modes,
            n_channels,
            damping_scale: 1.0,
            global_gain: 1.0,
        })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn damping_scale(&self) -> f64 {
        self.damping_scale
    }

    pub fn global_gain(&self) -> f64 {
        self.global_gain
    }

    pub fn max_frequency_hz(&self) -> f64 {
        self.modes.last().map_or(0.0, |m| m.frequency_hz)
    }

    /// Damping ratios after scaling.
    pub fn effective_damping(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| self.damping_scale * m.damping_ratio)
            .collect()
    }

    /// Copy with an absolute damping scale; factors do not compound.
    pub fn scale_damping(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "damping scale {factor} must be positive"
            )));
        }
        let max_zeta = self
            .modes
            .iter()
            .map(|m| m.damping_ratio)
            .fold(0.0, f64::max);
        if factor * max_zeta >= 1.0 {
            return Err(Error::OverdampedModel(factor * max_zeta));
        }
        Ok(Self {
            damping_scale: factor,
            ..self.clone()
        })
    }

    /// Copy with a different global gain. The gain may be negative.
    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        if !(gain.is_finite() && gain != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "global gain {gain} must be finite and nonzero"
            )));
        }
        Ok(Self {
            global_gain: gain,
            ..self.clone()
        })
    }

    /// Free-decay response with every mode released in phase at `onset_index`.
    ///
    /// `a_s[k] = g Σ_r Re(φ_r[s]) A_r e^{−ζ'ωτ} cos(ω_d τ)` for `k ≥ onset`,
    /// zero before.
    pub fn simulate_response(
        &self,
        n_samples: usize,
        sample_rate_hz: f64,
        onset_index: usize,
    ) -> Result<TimeSeriesSet> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        if onset_index >= n_samples {
            return Err(Error::InvalidParameter(format!(
                "onset {onset_index} outside record of {n_samples} samples"
            )));
        }
        let f_max = self.max_frequency_hz();
        if f_max >= sample_rate_hz / 2.0 {
            return Err(Error::NyquistViolation {
                frequency_hz: f_max,
                sample_rate_hz,
            });
        }
        let mut columns = vec![vec![0.0; n_samples]; self.n_channels];
        for md in &self.modes {
            let zeta = self.damping_scale * md.damping_ratio;
            let omega = 2.0 * std::f64::consts::PI * md.frequency_hz;
            let omega_d = omega * (1.0 - zeta * zeta).sqrt();
            let weights: Vec<f64> = md
                .shape
                .iter()
                .map(|z| self.global_gain * z.re * md.modal_amplitude)
                .collect();
            for k in onset_index..n_samples {
                let tau = (k - onset_index) as f64 / sample_rate_hz;
                let q = (-zeta * omega * tau).exp() * (omega_d * tau).cos();
                for (col, w) in columns.iter_mut().zip(&weights) {
                    col[k] += w * q;
                }
            }
        }
        TimeSeriesSet::from_columns(sample_rate_hz, columns)
    }
}

/// Builds a model from identified peaks.
///
/// Modes are sorted by frequency; amplitudes are `sqrt(sv1_at_peak)`
/// normalised so the largest is 1.
pub fn assemble_model(peaks: &[ModePeak]) -> Result<ModalModel> {
    let first = peaks.first().ok_or(Error::EmptyModeSet)?;
    let n_channels = first.mode_shape.len();
    if let Some(p) = peaks.iter().find(|p| p.mode_shape.len() != n_channels) {
        return Err(Error::AssemblyConflict(format!(
            "peak at {} Hz has {} channels, expected {n_channels}",
            p.frequency_hz,
            p.mode_shape.len()
        )));
    }
    let mut sorted: Vec<&ModePeak> = peaks.iter().collect();
    sorted.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    let amps: Vec<f64> = sorted
        .iter()
        .map(|p| p.sv1_at_peak.max(0.0).sqrt())
        .collect();
    let max_amp = amps.iter().cloned().fold(0.0, f64::max);
    let modes = sorted
        .iter()
        .zip(&amps)
        .map(|(p, a)| Mode {
            frequency_hz: p.frequency_hz,
            damping_ratio: p.damping_ratio,
            modal_amplitude: if max_amp > 0.0 { a / max_amp } else { 0.0 },
            shape: crate::spectral::normalize_phase(&p.mode_shape),
        })
        .collect();
    ModalModel::new(modes, n_channels)
}

/// Onset index for an impulse-type record: the earliest sample holding the
/// largest absolute value on the channel with the largest peak.
pub fn align_onset(measured: &TimeSeriesSet) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for c in 0..measured.n_channels() {
        let m = measured
            .channel(c)
            .iter()
            .fold(0.0f64, |a, x| a.max(x.abs()));
        if m > best.1 {
            best = (c, m);
        }
    }
    let x = measured.channel(best.0);
    let mut idx = 0;
    for (k, v) in x.iter().enumerate() {
        if v.abs() > x[idx].abs() {
            idx = k;
        }
    }
    idx
}

/// Scales `sim` so its global absolute maximum equals that of `measured`.
///
/// The gain magnitude is the ratio of the two global maxima. Its sign is
/// that of the inner product of the two records, so a simulation of
/// opposite polarity is flipped rather than left anti-correlated.
pub fn amplitude_match(
    sim: &TimeSeriesSet,
    measured: &TimeSeriesSet,
) -> Result<(TimeSeriesSet, f64)> {
    if sim.n_channels() != measured.n_channels() {
        return Err(Error::ChannelMismatch {
            expected: measured.n_channels(),
            found: sim.n_channels(),
        });
    }
    if (sim.sample_rate_hz() - measured.sample_rate_hz()).abs() > 1e-9 * measured.sample_rate_hz() {
        return Err(Error::RateMismatch(
            sim.sample_rate_hz(),
            measured.sample_rate_hz(),
        ));
    }
    let sim_max = sim.max_abs();
    if sim_max == 0.0 {
        return Err(Error::ZeroSimulation);
    }
    let dot: f64 = (0..sim.n_channels())
        .map(|c| {
            sim.channel(c)
                .iter()
                .zip(measured.channel(c))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let gain = sign * measured.max_abs() / sim_max;
    Ok((sim.scaled(gain), gain))
}
