//! End-to-end configuration and drivers shared by the front ends.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::alerts::{
    duration_curve, duration_discrepancy, threshold_grid, AlertProfile, DEFAULT_GRID_POINTS,
};
use crate::error::{Error, Result};
use crate::infotheory::{sweep_detailed, CandidateConfig, CandidateEvaluation, SweepReport};
use crate::model::{assemble_model, ModalModel};
use crate::signals::TimeSeriesSet;
use crate::spectral::{
    identify_modes, svd_spectrum, welch_csd, ModePeak, PeakConfig, SingularSpectrum, WelchConfig,
    Window, FALLBACK_DAMPING,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelchSettings {
    /// Power-of-two segment length; chosen from the record length when absent.
    pub segment_length: Option<usize>,
    pub overlap_fraction: f64,
    pub window: Window,
}

impl Default for WelchSettings {
    fn default() -> Self {
        Self {
            segment_length: None,
            overlap_fraction: 0.5,
            window: Window::Hann,
        }
    }
}

impl WelchSettings {
    pub fn resolve(&self, n_samples: usize) -> WelchConfig {
        let auto = WelchConfig::for_record(n_samples);
        WelchConfig {
            segment_length: self.segment_length.unwrap_or(auto.segment_length),
            overlap_fraction: self.overlap_fraction,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub scale_factors: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            scale_factors: vec![0.1, 1.0, 2.0, 4.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertSettings {
    /// Explicit ascending grid; otherwise `n_points` from 0 to the measured maximum.
    pub thresholds: Option<Vec<f64>>,
    pub n_points: usize,
}

impl Default for AlertSettings {
    fn default() -> Self {
        Self {
            thresholds: None,
            n_points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSettings {
    /// Residual KL bound for divergence alerts; none disables them.
    pub divergence_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub welch: WelchSettings,
    pub peak: PeakConfig,
    pub sweep: SweepSettings,
    pub prior_cov_scale: f64,
    pub alerts: AlertSettings,
    pub renyi_alpha: f64,
    pub trip_ratio: f64,
    pub fallback_damping: f64,
    pub monitor: MonitorSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            welch: WelchSettings::default(),
            peak: PeakConfig::default(),
            sweep: SweepSettings::default(),
            prior_cov_scale: 1.0,
            alerts: AlertSettings::default(),
            renyi_alpha: 2.0,
            trip_ratio: 2.0,
            fallback_damping: FALLBACK_DAMPING,
            monitor: MonitorSettings::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if let Some(len) = self.welch.segment_length {
            if len < 2 || !len.is_power_of_two() {
                return Err(Error::InvalidConfig(format!(
                    "segment_length {len} is not a power of two"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.welch.overlap_fraction) {
            return Err(Error::InvalidConfig(format!(
                "overlap_fraction {} outside [0, 1)",
                self.welch.overlap_fraction
            )));
        }
        if !(self.peak.min_prominence_rel > 0.0 && self.peak.min_prominence_rel <= 1.0) {
            return Err(Error::InvalidConfig(
                "peak.min_prominence_rel outside (0, 1]".into(),
            ));
        }
        positive("peak.min_separation_hz", self.peak.min_separation_hz)?;
        if self.peak.max_peaks == 0 {
            return Err(Error::InvalidConfig(
                "peak.max_peaks must be at least 1".into(),
            ));
        }
        if self.sweep.scale_factors.is_empty() {
            return Err(Error::InvalidConfig("sweep.scale_factors is empty".into()));
        }
        for f in &self.sweep.scale_factors {
            positive("sweep scale factor", *f)?;
        }
        positive("prior_cov_scale", self.prior_cov_scale)?;
        positive("renyi_alpha", self.renyi_alpha)?;
        if !(self.trip_ratio.is_finite() && self.trip_ratio > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "trip_ratio {} must exceed 1",
                self.trip_ratio
            )));
        }
        if !(self.fallback_damping > 0.0 && self.fallback_damping < 1.0) {
            return Err(Error::InvalidConfig(
                "fallback_damping outside (0, 1)".into(),
            ));
        }
        if let Some(t) = &self.alerts.thresholds {
            if t.len() < 2
                || t.iter().any(|x| !x.is_finite() || *x < 0.0)
                || t.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::UnsortedThresholds);
            }
        } else if self.alerts.n_points < 2 {
            return Err(Error::InvalidConfig(
                "alerts.n_points must be at least 2".into(),
            ));
        }
        if let Some(b) = self.monitor.divergence_bound {
            if b.is_nan() {
                return Err(Error::InvalidConfig(
                    "monitor.divergence_bound is NaN".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn candidate_config(&self) -> CandidateConfig {
        CandidateConfig {
            prior_cov_scale: self.prior_cov_scale,
            renyi_alpha: self.renyi_alpha,
        }
    }

    pub fn thresholds_for(&self, measured: &TimeSeriesSet) -> Vec<f64> {
        match &self.alerts.thresholds {
            Some(t) => t.clone(),
            None => threshold_grid(measured.max_abs(), self.alerts.n_points),
        }
    }
}

/// Output of the identification stage.
#[derive(Debug, Clone)]
pub struct Identification {
    pub welch: WelchConfig,
    pub spectrum: SingularSpectrum,
    pub peaks: Vec<ModePeak>,
    pub model: ModalModel,
}

/// Welch CSD, SVD, peak picking and model assembly. The peak separation is
/// never allowed below one frequency bin.
pub fn identify(data: &TimeSeriesSet, cfg: &PipelineConfig) -> Result<Identification> {
    let welch = cfg.welch.resolve(data.n_samples());
    let csd = welch_csd(data, &welch)?;
    let spectrum = svd_spectrum(&csd);
    let peak_cfg = PeakConfig {
        min_separation_hz: cfg.peak.min_separation_hz.max(spectrum.bin_width_hz()),
        ..cfg.peak
    };
    let peaks = identify_modes(&spectrum, &peak_cfg, cfg.fallback_damping)?;
    let model = assemble_model(&peaks)?;
    Ok(Identification {
        welch,
        spectrum,
        peaks,
        model,
    })
}

/// Damping sweep of `model` against `measured` with KL selection.
pub fn select(
    model: &ModalModel,
    measured: &TimeSeriesSet,
    cfg: &PipelineConfig,
) -> Result<(SweepReport, Vec<CandidateEvaluation>)> {
    sweep_detailed(
        model,
        measured,
        &cfg.sweep.scale_factors,
        &cfg.candidate_config(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertComparison {
    pub measured: AlertProfile,
    pub model: AlertProfile,
    pub duration_discrepancy: f64,
}

/// Duration curves of a measured record and a model response on a shared grid.
pub fn compare_alerts(
    measured: &TimeSeriesSet,
    model_response: &TimeSeriesSet,
    cfg: &PipelineConfig,
) -> Result<AlertComparison> {
    if measured.n_channels() != model_response.n_channels() {
        return Err(Error::ChannelMismatch {
            expected: measured.n_channels(),
            found: model_response.n_channels(),
        });
    }
    if (measured.sample_rate_hz() - model_response.sample_rate_hz()).abs()
        > 1e-9 * measured.sample_rate_hz()
    {
        return Err(Error::RateMismatch(
            model_response.sample_rate_hz(),
            measured.sample_rate_hz(),
        ));
    }
    let grid = cfg.thresholds_for(measured);
    let measured_profile = duration_curve(measured, &grid)?;
    let model_profile = duration_curve(model_response, &grid)?;
    let duration_discrepancy = duration_discrepancy(&model_profile, &measured_profile)?;
    Ok(AlertComparison {
        measured: measured_profile,
        model: model_profile,
        duration_discrepancy,
    })
}

/// `freq_hz,sv1,...,svN` rows.
pub fn write_singular_spectrum<W: Write>(
    spec: &SingularSpectrum,
    mut out: W,
) -> std::io::Result<()> {
    write!(out, "freq_hz")?;
    for i in 1..=spec.n_channels() {
        write!(out, ",sv{i}")?;
    }
    writeln!(out)?;
    for (f, sv) in spec.frequencies_hz().iter().zip(spec.singular_values()) {
        write!(out, "{f}")?;
        for s in sv {
            write!(out, ",{s}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let cfg = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.peak.max_peaks, 10);
        let cfg = PipelineConfig::from_json(
            r#"{"sweep": {"scale_factors": [0.1, 0.3, 0.7, 1, 1.5]}, "prior_cov_scale": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.sweep.scale_factors.len(), 5);
        assert_eq!(cfg.prior_cov_scale, 2.0);
        assert_eq!(cfg.renyi_alpha, 2.0);
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            r#"{"sweep": {"scale_factors": []}}"#,
            r#"{"sweep": {"scale_factors": [1, -2]}}"#,
            r#"{"prior_cov_scale": 0}"#,
            r#"{"trip_ratio": 1}"#,
            r#"{"welch": {"segment_length": 1000}}"#,
            r#"{"unknown": 1}"#,
            r#"{"peak": {"max_peaks": 0}}"#,
            "not json",
        ] {
            let err = PipelineConfig::from_json(bad).unwrap_err();
            assert_eq!(err.category(), crate::ErrorCategory::Config, "{bad}");
        }
        let err = PipelineConfig::from_json(r#"{"alerts": {"thresholds": [2, 1]}}"#).unwrap_err();
        assert_eq!(err, Error::UnsortedThresholds);
    }

    #[test]
    fn spectrum_csv_header() {
        let ts = TimeSeriesSet::from_columns(
            64.0,
            vec![
                (0..512).map(|k| (k as f64 * 0.9).sin()).collect(),
                vec![0.5; 512],
            ],
        )
        .unwrap();
        let spec = svd_spectrum(&welch_csd(&ts, &WelchConfig::for_record(512)).unwrap());
        let mut out = Vec::new();
        write_singular_spectrum(&spec, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("freq_hz,sv1,sv2\n"));
        assert_eq!(text.lines().count(), spec.n_bins() + 1);
    }
}
