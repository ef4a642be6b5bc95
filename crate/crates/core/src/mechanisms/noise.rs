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

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-weight Gaussian mixture truncated to the box
/// `center +- half_width` (per coordinate). Component means are
/// `center + offset * (+-1, ..., +-1)`, one component per sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussianMixture {
    pub center: DVector<f64>,
    pub offset: f64,
    pub sd: f64,
    pub half_width: f64,
}

impl TruncatedGaussianMixture {
    pub fn new(center: DVector<f64>, offset: f64, sd: f64, half_width: f64) -> Result<Self> {
        if !(sd >= 0.0) || !(half_width > 0.0) || offset.abs() >= half_width {
            return Err(Error::Domain {
                name: "truncated mixture",
                value: sd,
                expected: "sd >= 0, half_width > 0 and |offset| < half_width",
            });
        }
        Ok(Self {
            center,
            offset,
            sd,
            half_width,
        })
    }

    /// Two components at `+-0.01`, standard deviation `0.02`, support
    /// `+-0.025` per coordinate.
    pub fn standard(center: DVector<f64>) -> Self {
        Self {
            center,
            offset: 0.01,
            sd: 0.02,
            half_width: 0.025,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Euclidean diameter of the support box.
    pub fn support_diameter(&self) -> f64 {
        2.0 * self.half_width * (self.dim() as f64).sqrt()
    }

    /// Per-coordinate variance of the untruncated mixture; an upper bound
    /// for the truncated one.
    pub fn variance_bound(&self) -> f64 {
        self.sd * self.sd + self.offset * self.offset
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(d);
        loop {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut inside = true;
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let dev = sign * self.offset + self.sd * z;
                if dev.abs() > self.half_width {
                    inside = false;
                    break;
                }
                out[i] = self.center[i] + dev;
            }
            if inside {
                return out;
            }
        }
    }
}
