// Copyright 2026 The dpaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! The estimators under audit.
//!
//! Besides the tracking benchmark (oscillating target observed by a ring of
//! saturating range sensors) this module ships reference mechanisms whose
//! privacy level is known in closed form, used to validate the test itself.

mod ekf;
mod mhe;
mod noise;
mod oscillator;
mod perturbation;
mod reference;
mod sensors;

use std::fmt::Debug;

use rand::RngCore;
use rayon::prelude::*;

pub use ekf::{
    make_dp_ekf, DpEkf, EkfOptions, ExtendedKalmanFilter, LinearMeasurement, MeasurementModel,
};
pub use mhe::{make_surrogate_mhe, MheOptions, SurrogateMhe, WindowEstimate};
pub use noise::TruncatedGaussianMixture;
pub use oscillator::{simulate_target, OscillatorSystem};
pub use perturbation::{make_input_perturbation, InputPerturbation};
pub use reference::{
    make_laplace_reference, ConstantMechanism, GaussianReference, LaplaceReference,
    UniformReference,
};
pub use sensors::{
    adjacent_sensor_pair, certified_rotation, nominal_rotation, sensor_observe, AdjacencyRule,
    AdjacentPair, SensorNetwork, SensorSetup, DEFAULT_RADIUS, GAIN, SENSOR_COUNT, SLOPE,
};

use crate::error::{Error, Result};
use crate::rng::RunStream;
use crate::trajectory::{SensorData, Trajectory};

/// A stochastic map from sensor data to a trajectory estimate.
///
/// Repeated draws from a prepared sampler with independent generators must be
/// i.i.d.; implementations hold no state between draws.
pub trait Mechanism: Send + Sync + Debug {
    fn name(&self) -> String;

    /// Dimension of each released estimate.
    fn step_dim(&self) -> usize;

    /// Number of released estimates per run.
    fn steps(&self) -> usize;

    /// Binds the mechanism to fixed input data, doing any deterministic work
    /// once.
    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>>;

    fn sample(&self, data: &SensorData, rng: &mut dyn RngCore) -> Result<Trajectory> {
        Ok(self.prepare(data)?.sample(rng))
    }
}

/// A mechanism bound to its input.
pub trait Sampler: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> Trajectory;
}

impl<F> Sampler for F
where
    F: Fn(&mut dyn RngCore) -> Trajectory + Send + Sync,
{
    fn sample(&self, rng: &mut dyn RngCore) -> Trajectory {
        self(rng)
    }
}

/// Draws `count` runs in parallel; run `i` uses stream `i` of `stream`, so the
/// result does not depend on the thread pool size.
pub fn sample_runs(sampler: &dyn Sampler, stream: RunStream, count: usize) -> Vec<Trajectory> {
    (0..count)
        .into_par_iter()
        .map(|i| sampler.sample(&mut stream.rng(i as u64)))
        .collect()
}

/// Checks that `t` has the shape `mechanism` promises.
pub fn check_output(mechanism: &dyn Mechanism, t: &Trajectory) -> Result<()> {
    if t.len() != mechanism.steps() {
        return Err(Error::Mechanism(format!(
            "{} released {} steps, expected {}",
            mechanism.name(),
            t.len(),
            mechanism.steps()
        )));
    }
    if let Some(s) = t.steps().iter().find(|s| s.len() != mechanism.step_dim()) {
        return Err(Error::Mechanism(format!(
            "{} released a {}-dimensional estimate, expected {}",
            mechanism.name(),
            s.len(),
            mechanism.step_dim()
        )));
    }
    Ok(())
}

impl<M: Mechanism + ?Sized> Mechanism for Box<M> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn step_dim(&self) -> usize {
        (**self).step_dim()
    }

    fn steps(&self) -> usize {
        (**self).steps()
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        (**self).prepare(data)
    }
}
