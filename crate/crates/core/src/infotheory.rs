//! Entropies, divergences and KL-based damping model selection.
//!
//! All logarithms are natural, so every quantity is in nats.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{align_onset, amplitude_match, ModalModel};
use crate::signals::{residual_series, residual_stats, ResidualStats, TimeSeriesSet};

const SUM_TOLERANCE: f64 = 1e-9;
const SHANNON_LIMIT: f64 = 1e-6;
pub const HISTOGRAM_BINS: usize = 64;
const HISTOGRAM_HALF_WIDTH: f64 = 5.0;

/// Multivariate normal summary `N(mean, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidParameter("zero-dimensional summary".into()));
        }
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite Gaussian summary".into(),
            ));
        }
        let scale = covariance.amax().max(1.0);
        if (&covariance - covariance.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidParameter(
                "covariance is not symmetric".into(),
            ));
        }
        Ok(Self { mean, covariance })
    }

    pub fn from_stats(stats: &ResidualStats) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(&stats.mean),
            stats.covariance.clone(),
        )
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn validate_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::NotADistribution("empty vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::NotADistribution(format!(
            "entry {x} is not a probability"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::NotADistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

fn same_length(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(())
}

/// `−Σ p ln p`, with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    validate_distribution(p)?;
    Ok(-p
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>())
}

/// `Σ p ln(p/q)`. Returns `+∞` when `p` puts mass where `q` has none.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    validate_distribution(p)?;
    validate_distribution(q)?;
    same_length(p, q)?;
    let mut sum = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum)
}

/// `ln(Σ p^α) / (1 − α)`; orders within 1e-6 of 1 use the Shannon entropy.
pub fn renyi_entropy(p: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Renyi order {alpha} must be positive"
        )));
    }
    if (alpha - 1.0).abs() < SHANNON_LIMIT {
        return shannon_entropy(p);
    }
    validate_distribution(p)?;
    let s: f64 = p.iter().filter(|x| **x > 0.0).map(|x| x.powf(alpha)).sum();
    Ok(s.ln() / (1.0 - alpha))
}

/// Symmetrised divergence against the midpoint distribution, bounded by ln 2.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> Result<f64> {
    validate_distribution(p)?;
    validate_distribution(q)?;
    same_length(p, q)?;
    let half_kl = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (2.0 * x / (x + y)).ln())
            .sum::<f64>()
    };
    Ok((0.5 * (half_kl(p, q) + half_kl(q, p))).max(0.0))
}

/// `KL(N(μ, Σ) ‖ N(0, σ² I))` in closed form.
///
/// `Σ` is regularised by `ε I` with `ε = max(1e-12, 1e-10 tr Σ / n)` before
/// taking its log-determinant, which keeps near-perfect fits finite.
pub fn gaussian_kl(post: &GaussianSummary, prior_cov_scale: f64) -> Result<f64> {
    if !(prior_cov_scale.is_finite() && prior_cov_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "prior covariance scale {prior_cov_scale} must be positive"
        )));
    }
    let n = post.dim() as f64;
    let sigma2 = prior_cov_scale;
    let trace = post.covariance.trace();
    let eps = (1e-10 * trace / n).max(1e-12);
    let eig = post.covariance.clone().symmetric_eigen();
    let log_det: f64 = eig
        .eigenvalues
        .iter()
        .map(|l| (l.max(0.0) + eps).ln())
        .sum();
    let reg_trace = trace + n * eps;
    Ok(0.5
        * (reg_trace / sigma2 + post.mean.norm_squared() / sigma2 - n + n * sigma2.ln() - log_det))
}

fn normal_cdf(x: f64, sigma: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / (sigma * std::f64::consts::SQRT_2)))
}

/// Normalised histograms of the pooled residual samples and of the
/// `N(0, σ²)` prior on the same bins.
///
/// Bins are equal width over `±5 s`, with `s` the pooled residual RMS (the
/// prior standard deviation when the residual is identically zero). Samples
/// outside the range are dropped. The prior is discretised by CDF
/// differences and renormalised over the range.
pub fn histogram_summaries(
    residual: &TimeSeriesSet,
    pooled_std: f64,
    prior_cov_scale: f64,
    bins: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if bins < 2 {
        return Err(Error::InvalidParameter(
            "need at least two histogram bins".into(),
        ));
    }
    let prior_std = prior_cov_scale.sqrt();
    let spread = if pooled_std > 0.0 {
        pooled_std
    } else {
        prior_std
    };
    let lo = -HISTOGRAM_HALF_WIDTH * spread;
    let width = 2.0 * HISTOGRAM_HALF_WIDTH * spread / bins as f64;

    let mut counts = vec![0.0; bins];
    for c in 0..residual.n_channels() {
        for x in residual.channel(c) {
            let pos = (x - lo) / width;
            if (0.0..=bins as f64).contains(&pos) {
                counts[(pos as usize).min(bins - 1)] += 1.0;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::NotADistribution(
            "no residual samples inside histogram range".into(),
        ));
    }
    counts.iter_mut().for_each(|v| *v /= total);

    let mut prior: Vec<f64> = (0..bins)
        .map(|k| {
            let a = lo + k as f64 * width;
            normal_cdf(a + width, prior_std) - normal_cdf(a, prior_std)
        })
        .collect();
    let prior_total: f64 = prior.iter().sum();
    if prior_total <= 0.0 {
        return Err(Error::NotADistribution(
            "prior has no mass inside histogram range".into(),
        ));
    }
    prior.iter_mut().for_each(|v| *v /= prior_total);
    Ok((counts, prior))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub prior_cov_scale: f64,
    pub renyi_alpha: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            prior_cov_scale: 1.0,
            renyi_alpha: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingCandidateResult {
    pub scale_factor: f64,
    pub kl_divergence: f64,
    pub residual_energy: f64,
    pub residual_std: f64,
    pub renyi_entropy: f64,
    pub jensen_shannon: f64,
}

/// A scored candidate together with the matched simulation behind it.
#[derive(Debug, Clone)]
pub struct CandidateEvaluation {
    pub result: DampingCandidateResult,
    pub simulated: TimeSeriesSet,
    pub gain: f64,
    pub onset_index: usize,
}

/// Simulates `model` against `measured`, matches onset and amplitude, and
/// scores the residual.
pub fn evaluate_candidate_detailed(
    model: &ModalModel,
    measured: &TimeSeriesSet,
    cfg: &CandidateConfig,
) -> Result<CandidateEvaluation> {
    if model.n_channels() != measured.n_channels() {
        return Err(Error::ChannelMismatch {
            expected: measured.n_channels(),
            found: model.n_channels(),
        });
    }
    let onset_index = align_onset(measured);
    let sim =
        model.simulate_response(measured.n_samples(), measured.sample_rate_hz(), onset_index)?;
    let (simulated, gain) = amplitude_match(&sim, measured)?;
    let simulated = simulated.with_labels(
        &measured
            .labels()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    )?;
    let residual = residual_series(&simulated, measured)?;
    let stats = residual_stats(&residual)?;
    let kl_divergence = gaussian_kl(&GaussianSummary::from_stats(&stats)?, cfg.prior_cov_scale)?;
    let (hist, prior) = histogram_summaries(
        &residual,
        stats.pooled_std,
        cfg.prior_cov_scale,
        HISTOGRAM_BINS,
    )?;
    Ok(CandidateEvaluation {
        result: DampingCandidateResult {
            scale_factor: model.damping_scale(),
            kl_divergence,
            residual_energy: stats.energy,
            residual_std: stats.pooled_std,
            renyi_entropy: renyi_entropy(&hist, cfg.renyi_alpha)?,
            jensen_shannon: jensen_shannon(&hist, &prior)?,
        },
        simulated,
        gain,
        onset_index,
    })
}

pub fn evaluate_candidate(
    model: &ModalModel,
    measured: &TimeSeriesSet,
    cfg: &CandidateConfig,
) -> Result<DampingCandidateResult> {
    evaluate_candidate_detailed(model, measured, cfg).map(|e| e.result)
}

/// Index of the smallest KL divergence; ties go to the smaller scale factor.
pub fn select_damping_model(candidates: &[DampingCandidateResult]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateList);
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let b = &candidates[best];
        let better = match c.kl_divergence.total_cmp(&b.kl_divergence) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Equal => c.scale_factor < b.scale_factor,
            std::cmp::Ordering::Greater => false,
        };
        if better {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub candidates: Vec<DampingCandidateResult>,
    pub selected_index: usize,
    pub prior_cov_scale: f64,
}

impl SweepReport {
    pub fn selected(&self) -> &DampingCandidateResult {
        &self.candidates[self.selected_index]
    }
}

/// Evaluates `base` at every damping factor and selects the best.
pub fn sweep_detailed(
    base: &ModalModel,
    measured: &TimeSeriesSet,
    factors: &[f64],
    cfg: &CandidateConfig,
) -> Result<(SweepReport, Vec<CandidateEvaluation>)> {
    if factors.is_empty() {
        return Err(Error::EmptyCandidateList);
    }
    let evals = factors
        .iter()
        .map(|f| evaluate_candidate_detailed(&base.scale_damping(*f)?, measured, cfg))
        .collect::<Result<Vec<_>>>()?;
    let candidates: Vec<_> = evals.iter().map(|e| e.result).collect();
    let selected_index = select_damping_model(&candidates)?;
    Ok((
        SweepReport {
            candidates,
            selected_index,
            prior_cov_scale: cfg.prior_cov_scale,
        },
        evals,
    ))
}

pub fn sweep(
    base: &ModalModel,
    measured: &TimeSeriesSet,
    factors: &[f64],
    cfg: &CandidateConfig,
) -> Result<SweepReport> {
    sweep_detailed(base, measured, factors, cfg).map(|(r, _)| r)
}
