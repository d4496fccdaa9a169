//! Synthetic structures with exact modal solutions and time integration.
//!
//! Used as ground truth: a lumped-mass system with proportional damping has
//! closed-form modal frequencies, damping ratios and shapes, and its
//! response can be integrated to produce records with known properties.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModalModel, Mode};
use crate::signals::{Channel, TimeSeriesSet};

const PROPORTIONAL_TOL: f64 = 1e-8;
const NEWMARK_BETA: f64 = 0.25;
const NEWMARK_GAMMA: f64 = 0.5;

/// `M ẍ + C ẋ + K x = f`, observed through `y = C_d ẍ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSystem {
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    damping: DMatrix<f64>,
    sensor_map: DMatrix<f64>,
    rayleigh: Option<(f64, f64)>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl SyntheticSystem {
    pub fn new(
        mass: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        damping: DMatrix<f64>,
        sensor_map: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter(
                "system has no degrees of freedom".into(),
            ));
        }
        for (name, m) in [
            ("mass", &mass),
            ("stiffness", &stiffness),
            ("damping", &damping),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.nrows(),
                });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} matrix is not finite"
                )));
            }
        }
        let off_diagonal_mass = (0..n).any(|i| (0..n).any(|j| i != j && mass[(i, j)] != 0.0));
        if off_diagonal_mass || (0..n).any(|i| mass[(i, i)] <= 0.0) {
            return Err(Error::InvalidParameter(
                "mass matrix must be diagonal positive".into(),
            ));
        }
        if sensor_map.ncols() != n || sensor_map.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sensor_map.ncols(),
            });
        }
        if !is_symmetric(&stiffness) || stiffness.clone().cholesky().is_none() {
            return Err(Error::IndefiniteStiffness);
        }
        if !is_symmetric(&damping) {
            return Err(Error::InvalidParameter(
                "damping matrix is not symmetric".into(),
            ));
        }
        Ok(Self {
            mass,
            stiffness,
            damping,
            sensor_map,
            rayleigh: None,
        })
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }

    pub fn sensor_map(&self) -> &DMatrix<f64> {
        &self.sensor_map
    }

    /// Rayleigh coefficients `(a0, a1)` when `C = a0 M + a1 K`.
    pub fn rayleigh(&self) -> Option<(f64, f64)> {
        self.rayleigh
    }

    pub fn n_dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_map.nrows()
    }

    pub fn with_sensor_map(mut self, sensor_map: DMatrix<f64>) -> Result<Self> {
        if sensor_map.ncols() != self.n_dof() || sensor_map.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: self.n_dof(),
                found: sensor_map.ncols(),
            });
        }
        self.sensor_map = sensor_map;
        Ok(self)
    }

    /// `gains.len()` sensors per degree of freedom, each reading that
    /// degree of freedom times its gain.
    pub fn with_sensor_gains(self, gains: &[f64]) -> Result<Self> {
        let n = self.n_dof();
        let g = gains.len();
        if g == 0 {
            return Err(Error::InvalidParameter("no sensor gains".into()));
        }
        let map = DMatrix::from_fn(n * g, n, |r, c| if r / g == c { gains[r % g] } else { 0.0 });
        self.with_sensor_map(map)
    }

    /// Copy with the damping matrix multiplied by `factor`.
    pub fn with_damping_scale(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "damping scale {factor} is negative"
            )));
        }
        Ok(Self {
            damping: &self.damping * factor,
            rayleigh: self.rayleigh.map(|(a0, a1)| (a0 * factor, a1 * factor)),
            ..self.clone()
        })
    }

    /// Story stiffnesses of a shear-building stiffness matrix.
    fn story_stiffnesses(&self) -> Vec<f64> {
        let k = &self.stiffness;
        let n = self.n_dof();
        (0..n)
            .map(|i| {
                if i == 0 {
                    if n > 1 {
                        k[(0, 0)] + k[(0, 1)]
                    } else {
                        k[(0, 0)]
                    }
                } else {
                    -k[(i - 1, i)]
                }
            })
            .collect()
    }
}

fn shear_stiffness(stories: &[f64]) -> DMatrix<f64> {
    let n = stories.len();
    let mut k = DMatrix::zeros(n, n);
    for (i, ki) in stories.iter().enumerate() {
        k[(i, i)] += ki;
        if i > 0 {
            k[(i - 1, i - 1)] += ki;
            k[(i - 1, i)] -= ki;
            k[(i, i - 1)] -= ki;
        }
    }
    k
}

/// Lumped-mass shear building with `C = a0 M + a1 K` and one sensor per floor.
pub fn shear_building(
    n_stories: usize,
    story_mass: f64,
    story_stiffness: f64,
    rayleigh_a0: f64,
    rayleigh_a1: f64,
) -> Result<SyntheticSystem> {
    if n_stories == 0 {
        return Err(Error::InvalidParameter("need at least one story".into()));
    }
    if !(story_mass.is_finite() && story_mass > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "story mass {story_mass} must be positive"
        )));
    }
    if !(story_stiffness.is_finite() && story_stiffness > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "story stiffness {story_stiffness} must be positive"
        )));
    }
    if !(rayleigh_a0.is_finite()
        && rayleigh_a0 >= 0.0
        && rayleigh_a1.is_finite()
        && rayleigh_a1 >= 0.0)
    {
        return Err(Error::InvalidParameter(
            "Rayleigh coefficients must be nonnegative".into(),
        ));
    }
    let m = DMatrix::identity(n_stories, n_stories) * story_mass;
    let k = shear_stiffness(&vec![story_stiffness; n_stories]);
    let c = &m * rayleigh_a0 + &k * rayleigh_a1;
    let mut sys = SyntheticSystem::new(m, k, c, DMatrix::identity(n_stories, n_stories))?;
    sys.rayleigh = Some((rayleigh_a0, rayleigh_a1));
    Ok(sys)
}

/// Rayleigh coefficients giving damping ratio `zeta` at both `omega_a` and `omega_b` (rad/s).
pub fn rayleigh_coefficients(zeta: f64, omega_a: f64, omega_b: f64) -> (f64, f64) {
    let a1 = 2.0 * zeta / (omega_a + omega_b);
    (a1 * omega_a * omega_b, a1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMode {
    pub frequency_hz: f64,
    pub damping_ratio: f64,
    /// Unit-norm shape over degrees of freedom.
    pub shape: Vec<f64>,
    /// Unit-norm shape as seen by the sensors.
    pub sensor_shape: Vec<f64>,
}

impl ExactMode {
    pub fn sensor_shape_complex(&self) -> Vec<Complex64> {
        self.sensor_shape
            .iter()
            .map(|x| Complex64::new(*x, 0.0))
            .collect()
    }
}

/// Natural circular frequencies (ascending) and mass-normalised shapes.
fn modal_basis(sys: &SyntheticSystem) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = sys.n_dof();
    let m_inv_sqrt = DVector::from_fn(n, |i, _| 1.0 / sys.mass[(i, i)].sqrt());
    let a = DMatrix::from_fn(n, n, |i, j| {
        m_inv_sqrt[i] * sys.stiffness[(i, j)] * m_inv_sqrt[j]
    });
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    if eig.eigenvalues.iter().any(|l| *l <= 0.0) {
        return Err(Error::IndefiniteStiffness);
    }
    let omegas = order.iter().map(|&i| eig.eigenvalues[i].sqrt()).collect();
    let phi = DMatrix::from_fn(n, n, |r, c| m_inv_sqrt[r] * eig.eigenvectors[(r, order[c])]);
    Ok((omegas, phi))
}

fn unit_real(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    let sign = v
        .iter()
        .find(|x| x.abs() > 1e-12 * norm)
        .map_or(1.0, |x| x.signum());
    v.iter().map(|x| sign * x / norm).collect()
}

/// Undamped modes with modal damping ratios from `ΦᵀCΦ`.
pub fn exact_modes(sys: &SyntheticSystem) -> Result<Vec<ExactMode>> {
    let (omegas, phi) = modal_basis(sys)?;
    let modal_c = phi.transpose() * &sys.damping * &phi;
    let n = sys.n_dof();
    let diag_scale = (0..n).map(|i| modal_c[(i, i)].abs()).fold(0.0, f64::max);
    let worst = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| modal_c[(i, j)].abs())
        .fold(0.0, f64::max);
    if worst > PROPORTIONAL_TOL * diag_scale.max(f64::MIN_POSITIVE) && worst > 0.0 {
        return Err(Error::NonProportionalDamping(worst));
    }
    Ok(omegas
        .iter()
        .enumerate()
        .map(|(r, w)| {
            let col: Vec<f64> = phi.column(r).iter().copied().collect();
            let sensor: Vec<f64> = (&sys.sensor_map * phi.column(r)).iter().copied().collect();
            ExactMode {
                frequency_hz: w / (2.0 * std::f64::consts::PI),
                damping_ratio: modal_c[(r, r)] / (2.0 * w),
                shape: unit_real(&col),
                sensor_shape: unit_real(&sensor),
            }
        })
        .collect())
}

/// Load cases for [`integrate_response`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Excitation {
    /// Velocity jump `amplitude / m` (an impulse in N·s) at one degree of freedom.
    Impulse {
        dof: usize,
        amplitude: f64,
        #[serde(default = "default_event_time")]
        time_s: f64,
    },
    /// Gaussian white force of standard deviation `amplitude` (N) at every step.
    White { dof: usize, amplitude: f64 },
    /// Release from the static deflection under force `amplitude` (N). The
    /// structure is held, and reads zero, until `time_s`.
    Snapback {
        dof: usize,
        amplitude: f64,
        #[serde(default = "default_event_time")]
        time_s: f64,
    },
}

fn default_event_time() -> f64 {
    1.0
}

impl Excitation {
    pub fn dof(&self) -> usize {
        match *self {
            Excitation::Impulse { dof, .. }
            | Excitation::White { dof, .. }
            | Excitation::Snapback { dof, .. } => dof,
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Excitation::Impulse { amplitude, .. }
            | Excitation::White { amplitude, .. }
            | Excitation::Snapback { amplitude, .. } => amplitude,
        }
    }

    fn event_time_s(&self) -> Option<f64> {
        match *self {
            Excitation::Impulse { time_s, .. } | Excitation::Snapback { time_s, .. } => {
                Some(time_s)
            }
            Excitation::White { .. } => None,
        }
    }

    /// Copy with every force and displacement amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut e = *self;
        match &mut e {
            Excitation::Impulse { amplitude, .. }
            | Excitation::White { amplitude, .. }
            | Excitation::Snapback { amplitude, .. } => *amplitude *= factor,
        }
        e
    }
}

/// Newmark average-acceleration integration of the sensor accelerations.
///
/// Excitation forces and sensor noise come from two separate streams of
/// the same seeded generator, so the noise-free part of the output does not
/// depend on `noise_std`.
pub fn integrate_response(
    sys: &SyntheticSystem,
    excitation: &Excitation,
    dt_s: f64,
    n_samples: usize,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeriesSet> {
    let n = sys.n_dof();
    if !(dt_s.is_finite() && dt_s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step {dt_s} must be positive"
        )));
    }
    if n_samples < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: n_samples,
        });
    }
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise std {noise_std} is negative"
        )));
    }
    if excitation.dof() >= n {
        return Err(Error::InvalidParameter(format!(
            "excitation dof {} outside 0..{n}",
            excitation.dof()
        )));
    }
    if !excitation.amplitude().is_finite() {
        return Err(Error::InvalidParameter(
            "excitation amplitude is not finite".into(),
        ));
    }
    let (omegas, _) = modal_basis(sys)?;
    let f_max = omegas.last().copied().unwrap_or(0.0) / (2.0 * std::f64::consts::PI);
    if dt_s >= 1.0 / (10.0 * f_max) {
        return Err(Error::StepTooLarge {
            dt_s,
            f_max_hz: f_max,
        });
    }
    let event_index = match excitation.event_time_s() {
        Some(t) => {
            let k = (t / dt_s).round();
            if !(t >= 0.0 && k < n_samples as f64) {
                return Err(Error::InvalidParameter(format!(
                    "event time {t} s outside the record"
                )));
            }
            Some(k as usize)
        }
        None => None,
    };

    let mut force_rng = ChaCha8Rng::seed_from_u64(seed);
    force_rng.set_stream(0);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);

    let h = dt_s;
    let (b, g) = (NEWMARK_BETA, NEWMARK_GAMMA);
    let m = &sys.mass;
    let c = &sys.damping;
    let k = &sys.stiffness;
    let m_inv = DVector::from_fn(n, |i, _| 1.0 / m[(i, i)]);
    let k_eff = k + c * (g / (b * h)) + m * (1.0 / (b * h * h));
    let k_eff = k_eff.cholesky().ok_or(Error::IndefiniteStiffness)?;

    let dof = excitation.dof();
    let white = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        let mut f = DVector::zeros(n);
        if let Excitation::White { amplitude, .. } = excitation {
            f[dof] = amplitude * rng.sample::<f64, _>(StandardNormal);
        }
        f
    };

    let mut x = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);
    let f0 = white(&mut force_rng);
    let mut a = f0.component_mul(&m_inv);

    let n_sensors = sys.n_sensors();
    let mut columns = vec![Vec::with_capacity(n_samples); n_sensors];
    for i in 0..n_samples {
        if i > 0 {
            let f = white(&mut force_rng);
            let rhs = f
                + m * (&x * (1.0 / (b * h * h))
                    + &v * (1.0 / (b * h))
                    + &a * (1.0 / (2.0 * b) - 1.0))
                + c * (&x * (g / (b * h)) + &v * (g / b - 1.0) + &a * (h * (g / (2.0 * b) - 1.0)));
            let x_new = k_eff.solve(&rhs);
            let a_new = (&x_new - &x) * (1.0 / (b * h * h))
                - &v * (1.0 / (b * h))
                - &a * (1.0 / (2.0 * b) - 1.0);
            v += (&a * (1.0 - g) + &a_new * g) * h;
            x = x_new;
            a = a_new;
        }
        if event_index == Some(i) {
            match *excitation {
                Excitation::Impulse { amplitude, .. } => {
                    v[dof] += amplitude * m_inv[dof];
                    a = (-(c * &v) - k * &x).component_mul(&m_inv);
                }
                Excitation::Snapback { amplitude, .. } => {
                    let mut f = DVector::zeros(n);
                    f[dof] = amplitude;
                    x = k
                        .clone()
                        .cholesky()
                        .ok_or(Error::IndefiniteStiffness)?
                        .solve(&f);
                    v.fill(0.0);
                    a = (-(k * &x)).component_mul(&m_inv);
                }
                Excitation::White { .. } => {}
            }
        }
        let y = &sys.sensor_map * &a;
        for (col, yv) in columns.iter_mut().zip(y.iter()) {
            let noise = if noise_std > 0.0 {
                noise_std * noise_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            col.push(yv + noise);
        }
    }
    let channels = columns
        .into_iter()
        .enumerate()
        .map(|(i, s)| Channel::new(format!("s{}", i + 1), s))
        .collect();
    TimeSeriesSet::new(1.0 / dt_s, 0.0, channels)
}

/// Copy with one story's stiffness multiplied by `1 + relative_change`.
/// Rayleigh damping is rebuilt from the new stiffness.
pub fn perturb_stiffness(
    sys: &SyntheticSystem,
    story_index: usize,
    relative_change: f64,
) -> Result<SyntheticSystem> {
    if story_index >= sys.n_dof() {
        return Err(Error::InvalidParameter(format!(
            "story {story_index} outside 0..{}",
            sys.n_dof()
        )));
    }
    if !relative_change.is_finite() {
        return Err(Error::InvalidParameter(
            "relative change is not finite".into(),
        ));
    }
    let mut stories = sys.story_stiffnesses();
    stories[story_index] *= 1.0 + relative_change;
    let k = shear_stiffness(&stories);
    if k.clone().cholesky().is_none() {
        return Err(Error::IndefiniteStiffness);
    }
    let c = match sys.rayleigh {
        Some((a0, a1)) => &sys.mass * a0 + &k * a1,
        None => sys.damping.clone(),
    };
    Ok(SyntheticSystem {
        stiffness: k,
        damping: c,
        ..sys.clone()
    })
}

/// Modal model whose free decay reproduces the sensor response to a
/// snap-back (or, up to phase, an impulse) excitation.
///
/// Each mode's sensor-space coefficient vector sets its shape (direction)
/// and modal amplitude (norm, scaled so the largest is 1). Modes the
/// excitation does not reach are omitted.
pub fn reference_model(sys: &SyntheticSystem, excitation: &Excitation) -> Result<ModalModel> {
    let (omegas, phi) = modal_basis(sys)?;
    let exact = exact_modes(sys)?;
    let dof = excitation.dof();
    if dof >= sys.n_dof() {
        return Err(Error::InvalidParameter(format!(
            "excitation dof {dof} outside system"
        )));
    }
    let coefficients: Vec<DVector<f64>> = (0..sys.n_dof())
        .map(|r| {
            let w = match excitation {
                Excitation::Snapback { amplitude, .. } => Ok(-amplitude * phi[(dof, r)]),
                Excitation::Impulse { amplitude, .. } => Ok(-amplitude * phi[(dof, r)] * omegas[r]),
                Excitation::White { .. } => Err(Error::InvalidParameter(
                    "white-noise excitation has no deterministic free decay".into(),
                )),
            }?;
            Ok(&sys.sensor_map * phi.column(r) * w)
        })
        .collect::<Result<_>>()?;
    let max_norm = coefficients.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let modes: Vec<Mode> = coefficients
        .iter()
        .zip(&exact)
        .filter(|(c, _)| c.norm() > 1e-12 * max_norm)
        .map(|(c, e)| Mode {
            frequency_hz: e.frequency_hz,
            damping_ratio: e.damping_ratio,
            modal_amplitude: c.norm() / max_norm,
            shape: c
                .iter()
                .map(|x| Complex64::new(x / c.norm(), 0.0))
                .collect(),
        })
        .collect();
    ModalModel::new(modes, sys.n_sensors())
}

/// Scenario file for synthetic records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_stories: usize,
    pub story_mass_kg: f64,
    pub story_stiffness_n_per_m: f64,
    pub rayleigh_a0: f64,
    pub rayleigh_a1: f64,
    pub excitation: Excitation,
    pub dt_s: f64,
    pub n_samples: usize,
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Sensors per floor and their gains; one unit-gain sensor when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_gains: Option<Vec<f64>>,
}

impl ScenarioConfig {
    pub fn system(&self) -> Result<SyntheticSystem> {
        let sys = shear_building(
            self.n_stories,
            self.story_mass_kg,
            self.story_stiffness_n_per_m,
            self.rayleigh_a0,
            self.rayleigh_a1,
        )?;
        match &self.sensor_gains {
            Some(g) => sys.with_sensor_gains(g),
            None => Ok(sys),
        }
    }

    pub fn run(&self) -> Result<TimeSeriesSet> {
        integrate_response(
            &self.system()?,
            &self.excitation,
            self.dt_s,
            self.n_samples,
            self.noise_std,
            self.seed,
        )
    }
}
