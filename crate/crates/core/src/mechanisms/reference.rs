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

//! Mechanisms with privacy levels known in closed form.
//!
//! Each releases `mean(y_k) * 1 + noise` per step, where `mean(y_k)` is the
//! average of the components of the `k`-th input vector.

use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{Mechanism, Sampler};
use crate::error::{Error, Result};
use crate::trajectory::{SensorData, Trajectory};

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "a finite positive value",
        })
    }
}

fn step_means(data: &SensorData, steps: usize) -> Result<Vec<f64>> {
    if data.len() != steps {
        return Err(Error::DimensionMismatch {
            expected: steps,
            got: data.len(),
        });
    }
    data.steps()
        .iter()
        .map(|y| {
            if y.is_empty() {
                Err(Error::Mechanism("empty input vector".into()))
            } else {
                Ok(y.mean())
            }
        })
        .collect()
}

/// Draws from Laplace(0, b) by inverting the CDF.
pub(crate) fn laplace(scale: f64, rng: &mut dyn RngCore) -> f64 {
    let u: f64 = rng.gen::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn noisy_release<'a, F>(means: Vec<f64>, dim: usize, noise: F) -> Box<dyn Sampler + 'a>
where
    F: Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'a,
{
    Box::new(move |rng: &mut dyn RngCore| -> Trajectory {
        means
            .iter()
            .map(|&m| DVector::from_fn(dim, |_, _| m + noise(&mut *rng)))
            .collect()
    })
}

/// Laplace mechanism: exactly `(sensitivity / scale)`-DP for scalar inputs
/// whose adjacent versions differ by at most `sensitivity` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceReference {
    pub sensitivity: f64,
    pub scale: f64,
    pub dim: usize,
    pub steps: usize,
}

pub fn make_laplace_reference(
    sensitivity: f64,
    scale: f64,
    dim: usize,
    steps: usize,
) -> Result<LaplaceReference> {
    check_positive("sensitivity", sensitivity)?;
    check_positive("scale", scale)?;
    if dim == 0 || steps == 0 {
        return Err(Error::Config(
            "reference mechanism needs dim, steps >= 1".into(),
        ));
    }
    Ok(LaplaceReference {
        sensitivity,
        scale,
        dim,
        steps,
    })
}

impl LaplaceReference {
    pub fn true_epsilon(&self) -> f64 {
        self.sensitivity / self.scale
    }

    /// Scalar adjacent inputs `0` and `sensitivity` at every step.
    pub fn adjacent_inputs(&self) -> (SensorData, SensorData) {
        let y1 = SensorData::new(vec![DVector::zeros(1); self.steps]);
        let y2 = SensorData::new(vec![DVector::from_element(1, self.sensitivity); self.steps]);
        (y1, y2)
    }
}

impl Mechanism for LaplaceReference {
    fn name(&self) -> String {
        format!(
            "laplace(sensitivity={}, scale={})",
            self.sensitivity, self.scale
        )
    }

    fn step_dim(&self) -> usize {
        self.dim
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        let scale = self.scale;
        Ok(noisy_release(
            step_means(data, self.steps)?,
            self.dim,
            move |rng| laplace(scale, rng),
        ))
    }
}

/// Gaussian mechanism with standard deviation `sd`. Not pure-DP for any
/// finite epsilon; useful as a mechanism the test must eventually reject.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianReference {
    pub sd: f64,
    pub dim: usize,
    pub steps: usize,
}

impl GaussianReference {
    pub fn new(sd: f64, dim: usize, steps: usize) -> Result<Self> {
        check_positive("sd", sd)?;
        Ok(Self { sd, dim, steps })
    }
}

impl Mechanism for GaussianReference {
    fn name(&self) -> String {
        format!("gaussian(sd={})", self.sd)
    }

    fn step_dim(&self) -> usize {
        self.dim
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        let sd = self.sd;
        Ok(noisy_release(
            step_means(data, self.steps)?,
            self.dim,
            move |rng| sd * rng.sample::<f64, _>(StandardNormal),
        ))
    }
}

/// Noise uniform on `[-half_width, half_width]`. Inputs shifted by less than
/// the support width give disjoint-mass regions, so no finite epsilon holds.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformReference {
    pub half_width: f64,
    pub dim: usize,
    pub steps: usize,
}

impl UniformReference {
    pub fn new(half_width: f64, dim: usize, steps: usize) -> Result<Self> {
        check_positive("half_width", half_width)?;
        Ok(Self {
            half_width,
            dim,
            steps,
        })
    }
}

impl Mechanism for UniformReference {
    fn name(&self) -> String {
        format!("uniform(half_width={})", self.half_width)
    }

    fn step_dim(&self) -> usize {
        self.dim
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        let w = self.half_width;
        Ok(noisy_release(
            step_means(data, self.steps)?,
            self.dim,
            move |rng| rng.gen_range(-w..=w),
        ))
    }
}

/// Ignores its input. 0-DP.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMechanism {
    output: Trajectory,
}

impl ConstantMechanism {
    pub fn new(output: Trajectory) -> Self {
        Self { output }
    }
}

impl Mechanism for ConstantMechanism {
    fn name(&self) -> String {
        "constant".into()
    }

    fn step_dim(&self) -> usize {
        self.output.steps().first().map_or(0, |s| s.len())
    }

    fn steps(&self) -> usize {
        self.output.len()
    }

    fn prepare<'a>(&'a self, _data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        Ok(Box::new(move |_: &mut dyn RngCore| self.output.clone()))
    }
}
