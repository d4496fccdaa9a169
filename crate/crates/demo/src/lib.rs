//! Browser demo over synthetic oracle records. Each exported function
//! returns a JSON string for the page to plot.

use std::f64::consts::PI;

use modalkl::infotheory::{evaluate_candidate_detailed, sweep_detailed, CandidateConfig};
use modalkl::oracle::{
    exact_modes, integrate_response, rayleigh_coefficients, reference_model, shear_building,
    Excitation,
};
use modalkl::pipeline::{compare_alerts, identify, PipelineConfig};
use modalkl::{ModalModel, Result, TimeSeriesSet};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const FS: f64 = 250.0;
const SDOF_SAMPLES: usize = 5000;
const SDOF_FREQ_HZ: f64 = 5.0;
const SDOF_ZETA: f64 = 0.02;
const SWEEP: [f64; 5] = [0.1, 1.0, 2.0, 4.0, 5.0];
/// Samples sent to the page for time-history plots.
const PLOT_SAMPLES: usize = 1500;

fn sdof_record(true_scale: f64, noise_std: f64, seed: u64) -> Result<(TimeSeriesSet, ModalModel)> {
    let omega = 2.0 * PI * SDOF_FREQ_HZ;
    let a1 = 2.0 * SDOF_ZETA / omega;
    let ex = Excitation::Impulse {
        dof: 0,
        amplitude: 2.0,
        time_s: 1.0,
    };
    let base = shear_building(1, 1.0, omega * omega, 0.0, a1)?;
    let truth = shear_building(1, 1.0, omega * omega, 0.0, a1 * true_scale)?;
    let record = integrate_response(&truth, &ex, 1.0 / FS, SDOF_SAMPLES, noise_std, seed)?;
    Ok((record, reference_model(&base, &ex)?))
}

fn head(x: &[f64]) -> Vec<f64> {
    x[..x.len().min(PLOT_SAMPLES)].to_vec()
}

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub factors: Vec<f64>,
    pub kl: Vec<f64>,
    pub jensen_shannon: Vec<f64>,
    pub renyi: Vec<f64>,
    pub selected_index: usize,
    pub sample_rate_hz: f64,
    pub measured: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
}

/// Damping sweep of the unit-scale model against a record whose true scale
/// is `true_scale`.
pub fn sweep_view(
    true_scale: f64,
    noise_std: f64,
    prior_cov_scale: f64,
    seed: u64,
) -> Result<SweepView> {
    let (record, model) = sdof_record(true_scale, noise_std, seed)?;
    let cfg = CandidateConfig {
        prior_cov_scale,
        ..CandidateConfig::default()
    };
    let (report, evals) = sweep_detailed(&model, &record, &SWEEP, &cfg)?;
    Ok(SweepView {
        factors: SWEEP.to_vec(),
        kl: report.candidates.iter().map(|c| c.kl_divergence).collect(),
        jensen_shannon: report.candidates.iter().map(|c| c.jensen_shannon).collect(),
        renyi: report.candidates.iter().map(|c| c.renyi_entropy).collect(),
        selected_index: report.selected_index,
        sample_rate_hz: FS,
        measured: head(record.channel(0)),
        candidates: evals.iter().map(|e| head(e.simulated.channel(0))).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct SpectrumView {
    pub frequencies_hz: Vec<f64>,
    /// Singular values in dB, one curve per rank.
    pub sv_db: Vec<Vec<f64>>,
    pub peaks_hz: Vec<f64>,
    pub peak_damping: Vec<f64>,
    pub exact_hz: Vec<f64>,
    pub exact_damping: Vec<f64>,
}

/// Singular-value spectrum of a white-noise driven four-story building.
pub fn spectrum_view(damping_pct: f64, noise_pct: f64, seed: u64) -> Result<SpectrumView> {
    let (fs, n) = (256.0, 256 * 60);
    let bare = shear_building(4, 1000.0, 2e6, 0.0, 0.0)?;
    let m = exact_modes(&bare)?;
    let (a0, a1) = rayleigh_coefficients(
        damping_pct / 100.0,
        2.0 * PI * m[0].frequency_hz,
        2.0 * PI * m[3].frequency_hz,
    );
    let sys = shear_building(4, 1000.0, 2e6, a0, a1)?;
    let ex = Excitation::White {
        dof: 0,
        amplitude: 1000.0,
    };
    let clean = integrate_response(&sys, &ex, 1.0 / fs, n, 0.0, seed)?;
    let rms = (clean
        .channels()
        .iter()
        .flat_map(|c| c.samples.iter())
        .map(|x| x * x)
        .sum::<f64>()
        / (clean.n_channels() * n) as f64)
        .sqrt();
    let data = integrate_response(&sys, &ex, 1.0 / fs, n, rms * noise_pct / 100.0, seed)?;
    let id = identify(&data, &PipelineConfig::default())?;
    let ranks = id.spectrum.n_channels();
    let sv_db = (0..ranks)
        .map(|r| {
            id.spectrum
                .singular_values()
                .iter()
                .map(|s| 10.0 * s[r].max(1e-300).log10())
                .collect()
        })
        .collect();
    let exact = exact_modes(&sys)?;
    Ok(SpectrumView {
        frequencies_hz: id.spectrum.frequencies_hz().to_vec(),
        sv_db,
        peaks_hz: id.peaks.iter().map(|p| p.frequency_hz).collect(),
        peak_damping: id.peaks.iter().map(|p| p.damping_ratio).collect(),
        exact_hz: exact.iter().map(|e| e.frequency_hz).collect(),
        exact_damping: exact.iter().map(|e| e.damping_ratio).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct AlertView {
    pub thresholds: Vec<f64>,
    pub measured_s: Vec<f64>,
    pub model_s: Vec<f64>,
    pub duration_discrepancy: f64,
}

/// Alert-duration curves of a record and of one gain-matched candidate.
pub fn alert_view(
    true_scale: f64,
    candidate_scale: f64,
    noise_std: f64,
    seed: u64,
) -> Result<AlertView> {
    let (record, model) = sdof_record(true_scale, noise_std, seed)?;
    let eval = evaluate_candidate_detailed(
        &model.scale_damping(candidate_scale)?,
        &record,
        &CandidateConfig::default(),
    )?;
    let cmp = compare_alerts(&record, &eval.simulated, &PipelineConfig::default())?;
    Ok(AlertView {
        thresholds: cmp.measured.thresholds.clone(),
        measured_s: cmp.measured.duration_s.iter().map(|row| row[0]).collect(),
        model_s: cmp.model.duration_s.iter().map(|row| row[0]).collect(),
        duration_discrepancy: cmp.duration_discrepancy,
    })
}

fn to_js<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let v = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn damping_sweep(
    true_scale: f64,
    noise_std: f64,
    prior_cov_scale: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(sweep_view(
        true_scale,
        noise_std,
        prior_cov_scale,
        seed.into(),
    ))
}

#[wasm_bindgen]
pub fn sv_spectrum(
    damping_pct: f64,
    noise_pct: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(spectrum_view(damping_pct, noise_pct, seed.into()))
}

#[wasm_bindgen]
pub fn alert_curves(
    true_scale: f64,
    candidate_scale: f64,
    noise_std: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    to_js(alert_view(
        true_scale,
        candidate_scale,
        noise_std,
        seed.into(),
    ))
}
