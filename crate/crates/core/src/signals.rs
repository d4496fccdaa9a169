//! Multi-channel acceleration records, CSV ingestion, residuals and
//! residual statistics.
//!
//! A [`TimeSeriesSet`] is immutable once built: every constructor validates
//! that channels have equal length (at least two samples), the sample rate
//! is positive and every sample is finite.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance used when comparing sample rates of two records.
const RATE_RTOL: f64 = 1e-9;

/// Maximum relative deviation of any time step from the median step.
const GAP_RTOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: String,
    /// Acceleration samples in m/s².
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn new(label: impl Into<String>, samples: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            samples,
        }
    }
}

/// Uniformly sampled multi-channel record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSet {
    sample_rate_hz: f64,
    t0_s: f64,
    channels: Vec<Channel>,
}

impl TimeSeriesSet {
    pub fn new(sample_rate_hz: f64, t0_s: f64, channels: Vec<Channel>) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !t0_s.is_finite() {
            return Err(Error::InvalidParameter("start time must be finite".into()));
        }
        let first = channels.first().ok_or(Error::EmptyRecord)?;
        let n = first.samples.len();
        if n == 0 {
            return Err(Error::EmptyRecord);
        }
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        for ch in &channels {
            if ch.samples.len() != n {
                return Err(Error::MalformedInput(format!(
                    "channel '{}' has {} samples, expected {n}",
                    ch.label,
                    ch.samples.len()
                )));
            }
            if let Some(k) = ch.samples.iter().position(|x| !x.is_finite()) {
                return Err(Error::MalformedInput(format!(
                    "non-finite sample in channel '{}' at index {k}",
                    ch.label
                )));
            }
        }
        Ok(Self {
            sample_rate_hz,
            t0_s,
            channels,
        })
    }

    /// Builds a record from unlabelled columns; labels become `ch1..chN`.
    pub fn from_columns(sample_rate_hz: f64, columns: Vec<Vec<f64>>) -> Result<Self> {
        let channels = columns
            .into_iter()
            .enumerate()
            .map(|(i, s)| Channel::new(format!("ch{}", i + 1), s))
            .collect();
        Self::new(sample_rate_hz, 0.0, channels)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index].samples
    }

    pub fn labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Largest absolute sample over all channels.
    pub fn max_abs(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.samples.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> TimeSeriesSet {
        let channels = self
            .channels
            .iter()
            .map(|c| {
                Channel::new(
                    c.label.clone(),
                    c.samples.iter().map(|x| x * gain).collect(),
                )
            })
            .collect();
        TimeSeriesSet {
            sample_rate_hz: self.sample_rate_hz,
            t0_s: self.t0_s,
            channels,
        }
    }

    /// Copy restricted to samples `start..end` (clamped to the record).
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeriesSet> {
        let end = end.min(self.n_samples());
        let start = start.min(end);
        let channels = self
            .channels
            .iter()
            .map(|c| Channel::new(c.label.clone(), c.samples[start..end].to_vec()))
            .collect();
        TimeSeriesSet::new(
            self.sample_rate_hz,
            self.t0_s + start as f64 / self.sample_rate_hz,
            channels,
        )
    }

    /// Copy with new channel labels (length must match).
    pub fn with_labels(mut self, labels: &[String]) -> Result<Self> {
        if labels.len() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                found: labels.len(),
            });
        }
        for (c, l) in self.channels.iter_mut().zip(labels) {
            c.label = l.clone();
        }
        Ok(self)
    }
}

/// How to interpret an incoming CSV record.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CsvFormat {
    /// Explicit sample rate; when `None` the rate is inferred from the time column.
    pub sample_rate_hz: Option<f64>,
}

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::MalformedInput(format!("row {row}, column {col}: '{cell}'")))?;
    if !v.is_finite() {
        return Err(Error::MalformedInput(format!(
            "row {row}, column {col}: non-finite value '{cell}'"
        )));
    }
    Ok(v)
}

/// Parses one data row `t,a1,...,aN`, returning the time stamp and samples.
fn parse_row(record: &csv::StringRecord, width: usize, row: usize) -> Result<(f64, Vec<f64>)> {
    if record.len() != width {
        return Err(Error::MalformedInput(format!(
            "row {row} has {} fields, expected {width}",
            record.len()
        )));
    }
    let t = parse_cell(&record[0], row, 0)?;
    let values = (1..width)
        .map(|c| parse_cell(&record[c], row, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((t, values))
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source)
}

/// Reads the header row; returns the channel labels (time column dropped).
fn read_header<R: Read>(reader: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedInput(e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyRecord);
    }
    if header.len() < 2 {
        return Err(Error::MalformedInput(
            "header needs a time column and at least one data channel".into(),
        ));
    }
    Ok(header.iter().skip(1).map(str::to_string).collect())
}

/// Median-step sample-rate inference with a uniformity check.
pub(crate) fn infer_sample_rate(times: &[f64]) -> Result<f64> {
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if steps.iter().any(|d| *d <= 0.0) {
        return Err(Error::IrregularSampling(
            "time column is not strictly increasing".into(),
        ));
    }
    let mut sorted = steps.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    steps.retain(|d| (d - median).abs() > GAP_RTOL * median);
    if let Some(bad) = steps.first() {
        return Err(Error::IrregularSampling(format!(
            "step {bad} s deviates from median step {median} s"
        )));
    }
    Ok(1.0 / median)
}

/// Row-by-row reader over the CSV schema, for consumers that cannot hold
/// the whole record (e.g. a live stream). Yields `(t, samples)` per row.
pub struct RowStream<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    labels: Vec<String>,
    row: usize,
}

impl<R: Read> RowStream<R> {
    pub fn new(source: R) -> Result<Self> {
        let mut reader = csv_reader(source);
        let labels = read_header(&mut reader)?;
        Ok(Self {
            records: reader.into_records(),
            labels,
            row: 0,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

impl<R: Read> Iterator for RowStream<R> {
    type Item = Result<(f64, Vec<f64>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        self.row += 1;
        Some(
            rec.map_err(|e| Error::MalformedInput(e.to_string()))
                .and_then(|rec| parse_row(&rec, self.labels.len() + 1, self.row)),
        )
    }
}

/// Loads a CSV record (`t,<label1>,...`) and validates it.
pub fn load_timeseries<R: Read>(source: R, format: &CsvFormat) -> Result<TimeSeriesSet> {
    let rows = RowStream::new(source)?;
    let labels = rows.labels().to_vec();
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); labels.len()];
    for row in rows {
        let (t, values) = row?;
        times.push(t);
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let rate = match format.sample_rate_hz {
        Some(r) => r,
        None => {
            if times.len() < 2 {
                return Err(Error::InsufficientSamples {
                    needed: 2,
                    got: times.len(),
                });
            }
            infer_sample_rate(&times)?
        }
    };
    let channels = labels
        .into_iter()
        .zip(columns)
        .map(|(l, s)| Channel::new(l, s))
        .collect();
    TimeSeriesSet::new(rate, times[0], channels)
}

/// Writes a record in the CSV schema accepted by [`load_timeseries`].
pub fn write_timeseries<W: Write>(data: &TimeSeriesSet, mut out: W) -> std::io::Result<()> {
    write!(out, "t")?;
    for c in data.channels() {
        write!(out, ",{}", c.label)?;
    }
    writeln!(out)?;
    let dt = 1.0 / data.sample_rate_hz();
    for k in 0..data.n_samples() {
        write!(out, "{}", data.t0_s() + k as f64 * dt)?;
        for c in data.channels() {
            write!(out, ",{}", c.samples[k])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Discrete signal energy `Σ |x[k]|²` over the finite record.
pub fn signal_energy(samples: &[f64]) -> f64 {
    samples.iter().map(|x| x * x).sum()
}

/// Per-channel difference `model − measured`.
///
/// Records may differ in length by one sample; the longer one is truncated.
pub fn residual_series(model: &TimeSeriesSet, measured: &TimeSeriesSet) -> Result<TimeSeriesSet> {
    if model.n_channels() != measured.n_channels() {
        return Err(Error::ChannelMismatch {
            expected: measured.n_channels(),
            found: model.n_channels(),
        });
    }
    let (fm, fy) = (model.sample_rate_hz(), measured.sample_rate_hz());
    if (fm - fy).abs() > RATE_RTOL * fy {
        return Err(Error::RateMismatch(fm, fy));
    }
    let (nm, ny) = (model.n_samples(), measured.n_samples());
    if nm.abs_diff(ny) > 1 {
        return Err(Error::DimensionMismatch {
            expected: ny,
            found: nm,
        });
    }
    let n = nm.min(ny);
    let channels = model
        .channels()
        .iter()
        .zip(measured.channels())
        .map(|(a, b)| {
            let diff = a.samples[..n]
                .iter()
                .zip(&b.samples[..n])
                .map(|(x, y)| x - y)
                .collect();
            Channel::new(b.label.clone(), diff)
        })
        .collect();
    TimeSeriesSet::new(fy, measured.t0_s(), channels)
}

/// Pooled-over-time statistics of a residual record.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub mean: Vec<f64>,
    /// Unbiased (N−1) sample covariance of the channel vector.
    pub covariance: DMatrix<f64>,
    pub std_per_channel: Vec<f64>,
    /// `sqrt(Σ z² / (channels × samples))`, not mean-removed.
    pub pooled_std: f64,
    /// Residual energy summed over all channels.
    pub energy: f64,
    pub n_samples: usize,
}

/// Mean, covariance, spread and energy of a residual record.
///
/// The covariance is accumulated with a one-pass co-moment update.
pub fn residual_stats(residual: &TimeSeriesSet) -> Result<ResidualStats> {
    let n = residual.n_samples();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let d = residual.n_channels();
    let mut mean = vec![0.0; d];
    let mut comoment = DMatrix::<f64>::zeros(d, d);
    let mut delta = vec![0.0; d];
    for k in 0..n {
        let count = (k + 1) as f64;
        for (c, m) in mean.iter_mut().enumerate() {
            let x = residual.channel(c)[k];
            delta[c] = x - *m;
            *m += delta[c] / count;
        }
        // C += (x - mean_old)(x - mean_new)^T
        for i in 0..d {
            let xi_new = residual.channel(i)[k] - mean[i];
            for j in 0..d {
                comoment[(j, i)] += delta[j] * xi_new;
            }
        }
    }
    let mut covariance = comoment / (n as f64 - 1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = s;
            covariance[(j, i)] = s;
        }
        covariance[(i, i)] = covariance[(i, i)].max(0.0);
    }
    let std_per_channel = (0..d).map(|i| covariance[(i, i)].sqrt()).collect();
    let energy: f64 = residual
        .channels()
        .iter()
        .map(|c| signal_energy(&c.samples))
        .sum();
    let pooled_std = (energy / (n * d) as f64).sqrt();
    Ok(ResidualStats {
        mean,
        covariance,
        std_per_channel,
        pooled_std,
        energy,
        n_samples: n,
    })
}
