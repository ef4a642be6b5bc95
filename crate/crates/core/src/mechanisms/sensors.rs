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

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::noise::TruncatedGaussianMixture;
use super::oscillator::OscillatorSystem;
use crate::error::{Error, Result};
use crate::trajectory::SensorData;

/// Sensor readings saturate at `GAIN`; the slope at the origin is
/// `GAIN * SLOPE`.
pub const GAIN: f64 = 100.0;
pub const SLOPE: f64 = 0.1;

pub const DEFAULT_RADIUS: f64 = 10.0 * SQRT_2;
pub const SENSOR_COUNT: usize = 10;

/// Sensor angle layouts on the circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSetup {
    /// Uniform spacing with sensor 0 moved half a spacing toward sensor 1.
    Q1,
    /// Ten sensors uniformly spaced, starting at angle 0.
    Q2,
    /// Ten sensors clustered on the quarter arc `[0, pi/2]`.
    Q3,
    Custom(Vec<f64>),
}

impl SensorSetup {
    pub fn angles(&self) -> Vec<f64> {
        let spacing = 2.0 * PI / SENSOR_COUNT as f64;
        match self {
            SensorSetup::Q1 => (0..SENSOR_COUNT)
                .map(|i| {
                    let base = spacing * i as f64;
                    if i == 0 {
                        base + spacing / 2.0
                    } else {
                        base
                    }
                })
                .collect(),
            SensorSetup::Q2 => (0..SENSOR_COUNT).map(|i| spacing * i as f64).collect(),
            SensorSetup::Q3 => (0..SENSOR_COUNT)
                .map(|i| (PI / 2.0) * i as f64 / (SENSOR_COUNT - 1) as f64)
                .collect(),
            SensorSetup::Custom(angles) => angles.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SensorSetup::Q1 => "q1".into(),
            SensorSetup::Q2 => "q2".into(),
            SensorSetup::Q3 => "q3".into(),
            SensorSetup::Custom(_) => "custom".into(),
        }
    }
}

/// Range-like sensors on a circle centered at the origin. Observation of a
/// planar position `x` by sensor `i` is `100 tanh(0.1 (x - q_i)) + v`
/// (element-wise); readings are stacked in sensor order, two rows per
/// sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNetwork {
    pub radius: f64,
    pub angles: Vec<f64>,
    pub noise: TruncatedGaussianMixture,
}

impl SensorNetwork {
    pub fn new(radius: f64, angles: Vec<f64>, noise: TruncatedGaussianMixture) -> Result<Self> {
        if angles.is_empty() || !(radius > 0.0) {
            return Err(Error::Mechanism(
                "sensor network needs at least one sensor and a positive radius".into(),
            ));
        }
        if noise.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: noise.dim(),
            });
        }
        Ok(Self {
            radius,
            angles,
            noise,
        })
    }

    pub fn from_setup(setup: &SensorSetup) -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            angles: setup.angles(),
            noise: TruncatedGaussianMixture::standard(DVector::zeros(2)),
        }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Stacked observation dimension.
    pub fn output_dim(&self) -> usize {
        2 * self.len()
    }

    pub fn position(&self, i: usize) -> DVector<f64> {
        let (s, c) = self.angles[i].sin_cos();
        DVector::from_vec(vec![self.radius * c, self.radius * s])
    }

    /// Copy with sensor `i` rotated by `angle` radians along the circle.
    pub fn with_rotated(&self, i: usize, angle: f64) -> Self {
        let mut moved = self.clone();
        moved.angles[i] += angle;
        moved
    }

    /// Noiseless stacked reading at planar position `x`.
    pub fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.output_dim());
        for i in 0..self.len() {
            let (s, c) = self.angles[i].sin_cos();
            let q = [self.radius * c, self.radius * s];
            for a in 0..2 {
                y[2 * i + a] = GAIN * (SLOPE * (x[a] - q[a])).tanh();
            }
        }
        y
    }

    /// Jacobian of [`measure`](Self::measure) with respect to the planar
    /// position (`2n x 2`, diagonal blocks).
    pub fn measure_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.output_dim(), 2);
        for i in 0..self.len() {
            let (s, c) = self.angles[i].sin_cos();
            let q = [self.radius * c, self.radius * s];
            for a in 0..2 {
                let t = (SLOPE * (x[a] - q[a])).tanh();
                jac[(2 * i + a, a)] = GAIN * SLOPE * (1.0 - t * t);
            }
        }
        jac
    }

    /// Draws one noise vector per sensor, stacked.
    pub fn draw_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let mut v = DVector::zeros(self.output_dim());
        for i in 0..self.len() {
            let n = self.noise.sample(rng);
            v[2 * i] = n[0];
            v[2 * i + 1] = n[1];
        }
        v
    }
}

/// Noisy stacked reading of planar position `x`.
pub fn sensor_observe(
    network: &SensorNetwork,
    x: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> DVector<f64> {
    network.measure(x) + network.draw_noise(rng)
}

/// How far the probed sensor is rotated for a requested adjacency radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyRule {
    /// `delta / (20 sqrt 2)`, the benchmark's customary rotation.
    #[default]
    Nominal,
    /// Rotation small enough that the stacked-data distance provably stays
    /// within `delta`, from the slope bound `GAIN * SLOPE` of each reading
    /// and chord <= arc: `delta / (GAIN * SLOPE * radius * sqrt(T + 1))`.
    Certified,
}

pub fn nominal_rotation(delta: f64) -> f64 {
    delta / (20.0 * SQRT_2)
}

pub fn certified_rotation(delta: f64, radius: f64, horizon: usize) -> f64 {
    delta / (GAIN * SLOPE * radius * ((horizon + 1) as f64).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjacentPair {
    pub y1: SensorData,
    pub y2: SensorData,
    pub rotation: f64,
    pub distance: f64,
}

/// Observes `states` (full oscillator states) with the nominal network and
/// with a copy whose sensor `sensor_index` is rotated, sharing every noise
/// draw between the two.
pub fn adjacent_sensor_pair(
    network: &SensorNetwork,
    sensor_index: usize,
    delta: f64,
    rule: AdjacencyRule,
    states: &[DVector<f64>],
    rng: &mut dyn RngCore,
) -> Result<AdjacentPair> {
    if sensor_index >= network.len() {
        return Err(Error::Domain {
            name: "sensor_index",
            value: sensor_index as f64,
            expected: "an index below the sensor count",
        });
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain {
            name: "delta",
            value: delta,
            expected: "a value >= 0",
        });
    }
    let rotation = match rule {
        AdjacencyRule::Nominal => nominal_rotation(delta),
        AdjacencyRule::Certified => {
            certified_rotation(delta, network.radius, states.len().saturating_sub(1))
        }
    };
    let moved = network.with_rotated(sensor_index, rotation);
    let mut y1 = Vec::with_capacity(states.len());
    let mut y2 = Vec::with_capacity(states.len());
    for state in states {
        let pos = OscillatorSystem::position(state);
        let v = network.draw_noise(rng);
        y1.push(network.measure(&pos) + &v);
        y2.push(moved.measure(&pos) + v);
    }
    let (y1, y2) = (SensorData::new(y1), SensorData::new(y2));
    let distance = y1.distance(&y2)?;
    Ok(AdjacentPair {
        y1,
        y2,
        rotation,
        distance,
    })
}
