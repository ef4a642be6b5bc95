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

//! Sensor data sequences and per-step estimate trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor data `y_0, ..., y_T`, one stacked observation vector per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SensorData(Vec<DVector<f64>>);

impl SensorData {
    pub fn new(steps: Vec<DVector<f64>>) -> Self {
        Self(steps)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        Self(rows.iter().map(|r| DVector::from_vec(r.clone())).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Horizon `T` (index of the last observation).
    pub fn horizon(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn steps(&self) -> &[DVector<f64>] {
        &self.0
    }

    pub fn steps_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.0
    }

    /// Euclidean distance of the two stacked sequences.
    pub fn distance(&self, other: &SensorData) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let mut sq = 0.0;
        for (a, b) in self.0.iter().zip(&other.0) {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: a.len(),
                    got: b.len(),
                });
            }
            sq += (a - b).norm_squared();
        }
        Ok(sq.sqrt())
    }
}

/// A mechanism output: one estimate vector per released step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory(Vec<DVector<f64>>);

impl Trajectory {
    pub fn new(steps: Vec<DVector<f64>>) -> Self {
        Self(steps)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn step(&self, k: usize) -> &DVector<f64> {
        &self.0[k]
    }

    pub fn steps(&self) -> &[DVector<f64>] {
        &self.0
    }

    pub fn into_steps(self) -> Vec<DVector<f64>> {
        self.0
    }
}

impl FromIterator<DVector<f64>> for Trajectory {
    fn from_iter<I: IntoIterator<Item = DVector<f64>>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
