//! Oracle scenarios shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use modalkl::model::ModalModel;
use modalkl::oracle::{
    exact_modes, integrate_response, perturb_stiffness, rayleigh_coefficients, reference_model,
    shear_building, Excitation, SyntheticSystem,
};
use modalkl::signals::TimeSeriesSet;

pub const FS: f64 = 250.0;
pub const N_SAMPLES: usize = 5000;

/// Single oscillator at 5 Hz with 2 % damping at unit scale.
pub const SDOF_FREQ_HZ: f64 = 5.0;
pub const SDOF_ZETA: f64 = 0.02;
pub const SDOF_IMPULSE: f64 = 2.0;
pub const SDOF_NOISE: f64 = 1.2;

pub fn sdof_system(damping_scale: f64) -> SyntheticSystem {
    let k = (2.0 * PI * SDOF_FREQ_HZ).powi(2);
    // a0 = 0, a1 chosen so that zeta = scale * 2 %
    let a1 = 2.0 * SDOF_ZETA / (2.0 * PI * SDOF_FREQ_HZ);
    shear_building(1, 1.0, k, 0.0, a1 * damping_scale).unwrap()
}

pub fn sdof_excitation() -> Excitation {
    Excitation::Impulse {
        dof: 0,
        amplitude: SDOF_IMPULSE,
        time_s: 1.0,
    }
}

pub fn sdof_record(true_scale: f64, seed: u64) -> TimeSeriesSet {
    integrate_response(
        &sdof_system(true_scale),
        &sdof_excitation(),
        1.0 / FS,
        N_SAMPLES,
        SDOF_NOISE,
        seed,
    )
    .unwrap()
}

pub fn sdof_model() -> ModalModel {
    reference_model(&sdof_system(1.0), &sdof_excitation()).unwrap()
}

/// Four-story shear building, 1000 kg floors, 2e6 N/m stories, 2 %
/// Rayleigh damping at the first and last modes, three sensors per floor.
pub const SENSOR_GAINS: [f64; 3] = [1.0, 0.8, 1.2];
pub const BUILDING_NOISE: f64 = 1.5;
pub const SNAPBACK_FORCE: f64 = 25_000.0;

pub fn building(damping_scale: f64) -> SyntheticSystem {
    let bare = shear_building(4, 1000.0, 2e6, 0.0, 0.0).unwrap();
    let modes = exact_modes(&bare).unwrap();
    let (a0, a1) = rayleigh_coefficients(
        0.02,
        2.0 * PI * modes[0].frequency_hz,
        2.0 * PI * modes[3].frequency_hz,
    );
    shear_building(4, 1000.0, 2e6, a0, a1)
        .unwrap()
        .with_sensor_gains(&SENSOR_GAINS)
        .unwrap()
        .with_damping_scale(damping_scale)
        .unwrap()
}

pub fn snapback(force: f64) -> Excitation {
    Excitation::Snapback {
        dof: 3,
        amplitude: force,
        time_s: 1.0,
    }
}

pub fn building_record(sys: &SyntheticSystem, seed: u64) -> TimeSeriesSet {
    integrate_response(
        sys,
        &snapback(SNAPBACK_FORCE),
        1.0 / FS,
        N_SAMPLES,
        BUILDING_NOISE,
        seed,
    )
    .unwrap()
}

pub fn building_model() -> ModalModel {
    reference_model(&building(1.0), &snapback(SNAPBACK_FORCE)).unwrap()
}

pub const BUILDING_TRUE_SCALE: f64 = 0.7;
pub const BUILDING_SWEEP: [f64; 5] = [0.1, 0.3, 0.7, 1.0, 1.5];
pub const SDOF_SWEEP: [f64; 5] = [0.1, 1.0, 2.0, 4.0, 5.0];

/// The building with +5 % stiffness on the ground story.
pub fn damaged_building(damping_scale: f64) -> SyntheticSystem {
    perturb_stiffness(&building(damping_scale), 0, 0.05).unwrap()
}
