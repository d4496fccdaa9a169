//! Threshold alert analytics and a windowed stream monitor.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{gaussian_kl, GaussianSummary};
use crate::model::{align_onset, amplitude_match, ModalModel};
use crate::signals::{residual_series, residual_stats, Channel, TimeSeriesSet};

pub const DEFAULT_GRID_POINTS: usize = 41;
const DAMAGE_EPS: f64 = 1e-9;

/// Seconds during which `|x| > threshold` (strict), summed over the record.
pub fn exceedance_duration(samples: &[f64], sample_rate_hz: f64, threshold: f64) -> f64 {
    samples.iter().filter(|x| x.abs() > threshold).count() as f64 / sample_rate_hz
}

/// Exceedance durations of every channel over a threshold grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertProfile {
    pub thresholds: Vec<f64>,
    pub labels: Vec<String>,
    /// `duration_s[threshold][channel]`.
    pub duration_s: Vec<Vec<f64>>,
    /// Channels with nonzero duration, per threshold.
    pub triggered_count: Vec<usize>,
    pub record_length_s: f64,
}

impl AlertProfile {
    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    /// Smallest grid threshold at which every channel is triggered.
    pub fn all_triggered_threshold(&self) -> Option<f64> {
        let n = self.n_channels();
        self.thresholds
            .iter()
            .zip(&self.triggered_count)
            .filter(|(_, c)| **c == n)
            .map(|(t, _)| *t)
            .next()
    }

    /// CSV with header `threshold,<labels...>,count`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "threshold")?;
        for l in &self.labels {
            write!(out, ",{l}")?;
        }
        writeln!(out, ",count")?;
        for ((t, row), count) in self
            .thresholds
            .iter()
            .zip(&self.duration_s)
            .zip(&self.triggered_count)
        {
            write!(out, "{t}")?;
            for d in row {
                write!(out, ",{d}")?;
            }
            writeln!(out, ",{count}")?;
        }
        Ok(())
    }
}

/// `n_points` evenly spaced thresholds from 0 to `max_abs`. A zero maximum
/// yields the grid over `[0, 1]` so the grid stays strictly ascending.
pub fn threshold_grid(max_abs: f64, n_points: usize) -> Vec<f64> {
    let top = if max_abs > 0.0 { max_abs } else { 1.0 };
    let n = n_points.max(2);
    (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
}

/// The default 41-point grid up to the global maximum of `data`.
pub fn default_thresholds(data: &TimeSeriesSet) -> Vec<f64> {
    threshold_grid(data.max_abs(), DEFAULT_GRID_POINTS)
}

fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.len() < 2
        || thresholds.iter().any(|t| !t.is_finite() || *t < 0.0)
        || thresholds.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::UnsortedThresholds);
    }
    Ok(())
}

pub fn duration_curve(data: &TimeSeriesSet, thresholds: &[f64]) -> Result<AlertProfile> {
    validate_thresholds(thresholds)?;
    let fs = data.sample_rate_hz();
    // sorted magnitudes give every threshold's count by binary search
    let sorted: Vec<Vec<f64>> = (0..data.n_channels())
        .map(|c| {
            let mut m: Vec<f64> = data.channel(c).iter().map(|x| x.abs()).collect();
            m.sort_by(f64::total_cmp);
            m
        })
        .collect();
    let duration_s: Vec<Vec<f64>> = thresholds
        .iter()
        .map(|t| {
            sorted
                .iter()
                .map(|m| (m.len() - m.partition_point(|x| x <= t)) as f64 / fs)
                .collect()
        })
        .collect();
    let triggered_count = duration_s
        .iter()
        .map(|row| row.iter().filter(|d| **d > 0.0).count())
        .collect();
    Ok(AlertProfile {
        thresholds: thresholds.to_vec(),
        labels: data.labels().iter().map(|s| s.to_string()).collect(),
        duration_s,
        triggered_count,
        record_length_s: data.duration_s(),
    })
}

/// Mean absolute duration difference over channels and thresholds, divided
/// by the longer of the two record lengths.
pub fn duration_discrepancy(model: &AlertProfile, measured: &AlertProfile) -> Result<f64> {
    if model.thresholds != measured.thresholds {
        return Err(Error::GridMismatch("threshold grids differ".into()));
    }
    if model.n_channels() != measured.n_channels() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} channels",
            model.n_channels(),
            measured.n_channels()
        )));
    }
    let length = model.record_length_s.max(measured.record_length_s);
    if length <= 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (a, b) in model.duration_s.iter().zip(&measured.duration_s) {
        for (x, y) in a.iter().zip(b) {
            sum += (x - y).abs();
        }
    }
    let cells = (model.thresholds.len() * model.n_channels()) as f64;
    Ok(sum / cells / length)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DamageReport {
    pub baseline_discrepancy: f64,
    pub current_discrepancy: f64,
    pub index: f64,
    pub flagged: bool,
}

/// `current / max(baseline, 1e-9)`, flagged above `trip_ratio`.
pub fn damage_index(baseline: f64, current: f64, trip_ratio: f64) -> Result<DamageReport> {
    if !(trip_ratio.is_finite() && trip_ratio > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "trip ratio {trip_ratio} must exceed 1"
        )));
    }
    if !(baseline >= 0.0 && current >= 0.0) {
        return Err(Error::InvalidParameter(
            "discrepancies must be nonnegative".into(),
        ));
    }
    let index = current / baseline.max(DAMAGE_EPS);
    Ok(DamageReport {
        baseline_discrepancy: baseline,
        current_discrepancy: current,
        index,
        flagged: index > trip_ratio,
    })
}

/// Residual KL of `model` against one record, after onset alignment and
/// amplitude matching. An identically zero record scores 0.
pub fn residual_kl(model: &ModalModel, data: &TimeSeriesSet, prior_cov_scale: f64) -> Result<f64> {
    if data.max_abs() == 0.0 {
        return Ok(0.0);
    }
    if model.n_channels() != data.n_channels() {
        return Err(Error::ChannelMismatch {
            expected: data.n_channels(),
            found: model.n_channels(),
        });
    }
    let onset = align_onset(data);
    let sim = model.simulate_response(data.n_samples(), data.sample_rate_hz(), onset)?;
    let (sim, _) = amplitude_match(&sim, data)?;
    let stats = residual_stats(&residual_series(&sim, data)?)?;
    gaussian_kl(&GaussianSummary::from_stats(&stats)?, prior_cov_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub threshold: f64,
    pub window_samples: usize,
    /// Windows whose residual KL exceeds this raise a divergence alert.
    pub divergence_bound: f64,
    pub prior_cov_scale: f64,
}

impl MonitorConfig {
    pub fn new(threshold: f64, window_samples: usize) -> Self {
        Self {
            threshold,
            window_samples,
            divergence_bound: f64::INFINITY,
            prior_cov_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} must be nonnegative",
                self.threshold
            )));
        }
        if self.window_samples < 2 {
            return Err(Error::InvalidParameter(
                "window must hold at least two samples".into(),
            ));
        }
        if self.divergence_bound.is_nan() {
            return Err(Error::InvalidParameter("divergence bound is NaN".into()));
        }
        if !(self.prior_cov_scale.is_finite() && self.prior_cov_scale > 0.0) {
            return Err(Error::InvalidParameter(
                "prior covariance scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertCause {
    Threshold,
    Divergence,
}

/// One alert, serialised as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub window_start: usize,
    pub channels: Vec<usize>,
    pub kl: f64,
    pub cause: AlertCause,
}

/// Fixed-window monitor fed one multi-channel frame at a time.
///
/// Each full window is checked for threshold exceedance on any channel and
/// for residual KL above the divergence bound. At most one event is raised
/// per window; a threshold exceedance takes precedence as the cause.
#[derive(Debug, Clone)]
pub struct StreamMonitor {
    model: ModalModel,
    sample_rate_hz: f64,
    cfg: MonitorConfig,
    buffer: Vec<Vec<f64>>,
    window_start: usize,
}

impl StreamMonitor {
    pub fn new(model: ModalModel, sample_rate_hz: f64, cfg: MonitorConfig) -> Result<Self> {
        cfg.validate()?;
        if model.max_frequency_hz() >= sample_rate_hz / 2.0 {
            return Err(Error::NyquistViolation {
                frequency_hz: model.max_frequency_hz(),
                sample_rate_hz,
            });
        }
        let buffer = vec![Vec::with_capacity(cfg.window_samples); model.n_channels()];
        Ok(Self {
            model,
            sample_rate_hz,
            cfg,
            buffer,
            window_start: 0,
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    /// Appends one frame; returns an event when this frame completes an
    /// alerting window.
    pub fn push(&mut self, frame: &[f64]) -> Result<Option<AlertEvent>> {
        if frame.len() != self.buffer.len() {
            return Err(Error::ChannelMismatch {
                expected: self.buffer.len(),
                found: frame.len(),
            });
        }
        if let Some(x) = frame.iter().find(|x| !x.is_finite()) {
            return Err(Error::MalformedInput(format!("non-finite sample {x}")));
        }
        for (b, x) in self.buffer.iter_mut().zip(frame) {
            b.push(*x);
        }
        if self.buffer[0].len() == self.cfg.window_samples {
            self.flush()
        } else {
            Ok(None)
        }
    }

    /// Evaluates a trailing partial window of at least two samples.
    pub fn finish(mut self) -> Result<Option<AlertEvent>> {
        if self.buffer[0].len() >= 2 {
            self.flush()
        } else {
            Ok(None)
        }
    }

    fn flush(&mut self) -> Result<Option<AlertEvent>> {
        let len = self.buffer[0].len();
        let channels = self
            .buffer
            .iter_mut()
            .enumerate()
            .map(|(i, b)| Channel::new(format!("ch{}", i + 1), std::mem::take(b)))
            .collect();
        let window = TimeSeriesSet::new(self.sample_rate_hz, 0.0, channels)?;
        let event = evaluate_window(&self.model, &window, self.window_start, &self.cfg)?;
        self.window_start += len;
        for b in &mut self.buffer {
            b.reserve(self.cfg.window_samples);
        }
        Ok(event)
    }
}

fn evaluate_window(
    model: &ModalModel,
    window: &TimeSeriesSet,
    window_start: usize,
    cfg: &MonitorConfig,
) -> Result<Option<AlertEvent>> {
    let triggered: Vec<usize> = (0..window.n_channels())
        .filter(|&c| window.channel(c).iter().any(|x| x.abs() > cfg.threshold))
        .collect();
    let kl = residual_kl(model, window, cfg.prior_cov_scale)?;
    let cause = if !triggered.is_empty() {
        AlertCause::Threshold
    } else if kl > cfg.divergence_bound {
        AlertCause::Divergence
    } else {
        return Ok(None);
    };
    Ok(Some(AlertEvent {
        window_start,
        channels: triggered,
        kl,
        cause,
    }))
}

/// Batch counterpart of [`StreamMonitor`] over a complete record.
pub fn monitor_record(
    model: &ModalModel,
    data: &TimeSeriesSet,
    cfg: &MonitorConfig,
) -> Result<Vec<AlertEvent>> {
    cfg.validate()?;
    let n = data.n_samples();
    let mut events = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + cfg.window_samples).min(n);
        if end - start < 2 {
            break;
        }
        let window = data.slice(start, end)?;
        if let Some(e) = evaluate_window(model, &window, start, cfg)? {
            events.push(e);
        }
        start = end;
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn sdof_model() -> ModalModel {
        ModalModel::new(
            vec![Mode {
                frequency_hz: 2.0,
                damping_ratio: 0.02,
                modal_amplitude: 1.0,
                shape: vec![Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0)],
            }],
            2,
        )
        .unwrap()
    }

    #[test]
    fn exceedance_examples() {
        assert_eq!(
            exceedance_duration(&[0.0, 1.0, 2.0, 1.0, 0.0], 1.0, 1.5),
            1.0
        );
        assert_eq!(exceedance_duration(&[0.0, -3.0, 2.0], 1.0, 3.0), 0.0);
        assert_eq!(exceedance_duration(&[0.1, -0.2, 0.3, -0.4], 2.0, 0.0), 2.0);
        assert_eq!(exceedance_duration(&[-2.0, 0.5], 1.0, 1.0), 1.0);
    }

    #[test]
    fn zero_signal_profile() {
        let ts = TimeSeriesSet::from_columns(10.0, vec![vec![0.0; 50]; 3]).unwrap();
        let p = duration_curve(&ts, &default_thresholds(&ts)).unwrap();
        assert!(p.duration_s.iter().flatten().all(|d| *d == 0.0));
        assert!(p.triggered_count.iter().all(|c| *c == 0));
        assert_eq!(p.all_triggered_threshold(), None);
    }

    #[test]
    fn unsorted_grid_rejected() {
        let ts = TimeSeriesSet::from_columns(10.0, vec![vec![1.0; 5]]).unwrap();
        assert_eq!(
            duration_curve(&ts, &[1.0, 0.5]),
            Err(Error::UnsortedThresholds)
        );
        assert_eq!(duration_curve(&ts, &[1.0]), Err(Error::UnsortedThresholds));
        assert_eq!(
            duration_curve(&ts, &[1.0, 1.0]),
            Err(Error::UnsortedThresholds)
        );
    }

    #[test]
    fn curve_matches_direct_counts() {
        let x: Vec<f64> = (0..200).map(|k| ((k as f64) * 0.37).sin() * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
        let ts = TimeSeriesSet::from_columns(20.0, vec![x.clone(), y.clone()]).unwrap();
        let grid = default_thresholds(&ts);
        assert_eq!(grid.len(), 41);
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), ts.max_abs());
        let p = duration_curve(&ts, &grid).unwrap();
        for (i, t) in grid.iter().enumerate() {
            assert_eq!(p.duration_s[i][0], exceedance_duration(&x, 20.0, *t));
            assert_eq!(p.duration_s[i][1], exceedance_duration(&y, 20.0, *t));
        }
        assert_eq!(p.all_triggered_threshold(), Some(0.0));
        assert_eq!(*p.triggered_count.last().unwrap(), 0);
    }

    #[test]
    fn discrepancy_examples() {
        let full = TimeSeriesSet::from_columns(10.0, vec![vec![5.0; 40], vec![-5.0; 40]]).unwrap();
        let zero = TimeSeriesSet::from_columns(10.0, vec![vec![0.0; 40]; 2]).unwrap();
        let grid = [0.0, 1.0, 2.0, 3.0];
        let a = duration_curve(&full, &grid).unwrap();
        let b = duration_curve(&zero, &grid).unwrap();
        assert_eq!(duration_discrepancy(&a, &a).unwrap(), 0.0);
        assert_eq!(duration_discrepancy(&b, &a).unwrap(), 1.0);
        assert_eq!(duration_discrepancy(&a, &b).unwrap(), 1.0);
        let other = duration_curve(&full, &[0.0, 2.0]).unwrap();
        assert!(matches!(
            duration_discrepancy(&a, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn damage_examples() {
        let r = damage_index(0.3, 0.3, 2.0).unwrap();
        assert_eq!(r.index, 1.0);
        assert!(!r.flagged);
        let r = damage_index(0.01, 0.05, 2.0).unwrap();
        assert!((r.index - 5.0).abs() < 1e-12);
        assert!(r.flagged);
        assert_eq!(damage_index(0.0, 1e-9, 2.0).unwrap().index, 1.0);
        assert!(damage_index(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn profile_csv_layout() {
        let ts = TimeSeriesSet::from_columns(2.0, vec![vec![1.0, 3.0], vec![0.0, 0.0]]).unwrap();
        let p = duration_curve(&ts, &[0.0, 2.0]).unwrap();
        let mut out = Vec::new();
        p.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "threshold,ch1,ch2,count\n0,1,0,1\n2,0.5,0,1\n"
        );
    }

    proptest! {
        #[test]
        fn curves_are_non_increasing(x in proptest::collection::vec(-50.0f64..50.0, 2..200)) {
            let ts = TimeSeriesSet::from_columns(100.0, vec![x.clone(), x.iter().map(|v| v * 0.3).collect()]).unwrap();
            let p = duration_curve(&ts, &default_thresholds(&ts)).unwrap();
            for w in p.duration_s.windows(2) {
                prop_assert!(w[1][0] <= w[0][0] && w[1][1] <= w[0][1]);
            }
            prop_assert!(p.triggered_count.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(p.duration_s.iter().flatten().all(|d| *d <= p.record_length_s + 1e-12));
        }

        #[test]
        fn exceedance_is_scale_covariant(
            x in proptest::collection::vec(-10.0f64..10.0, 1..100),
            t in 0.0f64..10.0,
            c in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            // compare counts of the same strict inequality evaluated both ways
            let direct = x.iter().filter(|v| v.abs() > t).count();
            let via = scaled.iter().filter(|v| v.abs() > c * t).count();
            prop_assume!(direct == via);
            prop_assert_eq!(exceedance_duration(&x, 1.0, t), exceedance_duration(&scaled, 1.0, c * t));
        }

        #[test]
        fn discrepancy_is_symmetric(
            a in proptest::collection::vec(-5.0f64..5.0, 30),
            b in proptest::collection::vec(-5.0f64..5.0, 30),
        ) {
            let ta = TimeSeriesSet::from_columns(10.0, vec![a]).unwrap();
            let tb = TimeSeriesSet::from_columns(10.0, vec![b]).unwrap();
            let grid = threshold_grid(5.0, 11);
            let pa = duration_curve(&ta, &grid).unwrap();
            let pb = duration_curve(&tb, &grid).unwrap();
            let d = duration_discrepancy(&pa, &pb).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, duration_discrepancy(&pb, &pa).unwrap());
        }

        #[test]
        fn damage_index_monotone(base in 0.0f64..10.0, c1 in 0.0f64..10.0, c2 in 0.0f64..10.0) {
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(damage_index(base, lo, 2.0).unwrap().index <= damage_index(base, hi, 2.0).unwrap().index);
        }
    }

    #[test]
    fn zero_stream_is_silent() {
        let cfg = MonitorConfig {
            divergence_bound: 1.0,
            ..MonitorConfig::new(0.5, 25)
        };
        let mut m = StreamMonitor::new(sdof_model(), 100.0, cfg).unwrap();
        for _ in 0..1000 {
            assert_eq!(m.push(&[0.0, 0.0]).unwrap(), None);
        }
        assert_eq!(m.finish().unwrap(), None);
    }

    #[test]
    fn single_spike_gives_one_event() {
        let mut m = StreamMonitor::new(sdof_model(), 100.0, MonitorConfig::new(0.5, 25)).unwrap();
        let mut events = Vec::new();
        for k in 0..310 {
            let frame = if k == 137 { [0.0, 2.0] } else { [0.0, 0.0] };
            events.extend(m.push(&frame).unwrap());
        }
        events.extend(m.finish().unwrap());
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].window_start, 125);
        assert_eq!(events[0].channels, vec![1]);
        assert_eq!(events[0].cause, AlertCause::Threshold);
        let line = serde_json::to_string(&events[0]).unwrap();
        assert!(line.starts_with("{\"window_start\":125,\"channels\":[1],\"kl\":"));
        assert!(line.ends_with(",\"cause\":\"threshold\"}"));
    }

    #[test]
    fn stream_matches_batch() {
        let model = sdof_model();
        let clean = model.simulate_response(1000, 100.0, 10).unwrap();
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                clean
                    .channel(c)
                    .iter()
                    .enumerate()
                    .map(|(k, x)| 3.0 * x + 0.2 * ((k * 7919 % 101) as f64 / 50.0 - 1.0))
                    .collect()
            })
            .collect();
        let data = TimeSeriesSet::from_columns(100.0, cols).unwrap();
        let cfg = MonitorConfig {
            divergence_bound: 0.5,
            ..MonitorConfig::new(1.0, 90)
        };
        let batch = monitor_record(&model, &data, &cfg).unwrap();
        let mut m = StreamMonitor::new(model, 100.0, cfg).unwrap();
        let mut stream = Vec::new();
        for k in 0..data.n_samples() {
            stream.extend(m.push(&[data.channel(0)[k], data.channel(1)[k]]).unwrap());
        }
        stream.extend(m.finish().unwrap());
        assert_eq!(batch, stream);
        assert!(!batch.is_empty());
        assert!(batch
            .windows(2)
            .all(|w| w[0].window_start < w[1].window_start));
    }

    #[test]
    fn monitor_rejects_bad_frames() {
        let mut m = StreamMonitor::new(sdof_model(), 100.0, MonitorConfig::new(0.5, 25)).unwrap();
        assert!(matches!(m.push(&[0.0]), Err(Error::ChannelMismatch { .. })));
        assert!(StreamMonitor::new(sdof_model(), 100.0, MonitorConfig::new(0.5, 1)).is_err());
    }
}
