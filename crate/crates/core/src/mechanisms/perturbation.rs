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

//! Input perturbation: Gaussian noise on every sensor reading, then a
//! deterministic estimator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{Mechanism, Sampler};
use crate::error::{Error, Result};
use crate::rng::{Phase, RunStream};
use crate::trajectory::{SensorData, Trajectory};

const MAX_REDRAWS: usize = 100;

/// Adds `N(0, Q)` to each sensor's two-row block of every observation, with
/// `Q = (1 - s_bar) (I + (R + R^T) / 2)` and `R` a fixed 2x2 matrix of
/// uniform `(0, 1)` entries drawn at construction. The same `Q` applies to
/// every sensor and step.
#[derive(Debug)]
pub struct InputPerturbation<M> {
    base: M,
    level: f64,
    random_part: DMatrix<f64>,
    covariance: DMatrix<f64>,
    chol: Option<DMatrix<f64>>,
    redraws: usize,
}

pub fn make_input_perturbation<M: Mechanism>(
    base: M,
    s_bar: f64,
    seed: u64,
) -> Result<InputPerturbation<M>> {
    InputPerturbation::new(base, s_bar, seed)
}

impl<M: Mechanism> InputPerturbation<M> {
    pub fn new(base: M, s_bar: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s_bar) {
            return Err(Error::Domain {
                name: "s_bar",
                value: s_bar,
                expected: "a value in [0, 1]",
            });
        }
        let stream = RunStream::new(seed, Phase::Construction);
        for attempt in 0..MAX_REDRAWS {
            let mut rng = stream.rng(attempt as u64);
            let r = DMatrix::from_fn(2, 2, |_, _| rng.gen::<f64>());
            let covariance = (DMatrix::identity(2, 2) + (&r + r.transpose()) * 0.5) * (1.0 - s_bar);
            if s_bar >= 1.0 {
                return Ok(Self {
                    base,
                    level: s_bar,
                    random_part: r,
                    covariance,
                    chol: None,
                    redraws: attempt,
                });
            }
            if let Some(chol) = covariance.clone().cholesky() {
                return Ok(Self {
                    base,
                    level: s_bar,
                    random_part: r,
                    covariance,
                    chol: Some(chol.l()),
                    redraws: attempt,
                });
            }
            log::debug!("perturbation covariance not positive definite, redrawing R");
        }
        Err(Error::Mechanism(format!(
            "no positive definite perturbation covariance after {MAX_REDRAWS} draws"
        )))
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn random_part(&self) -> &DMatrix<f64> {
        &self.random_part
    }

    /// Number of rejected `R` draws before a positive definite `Q`.
    pub fn redraws(&self) -> usize {
        self.redraws
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// One draw of the 2-D block noise.
    pub fn injected_noise(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        match &self.chol {
            Some(l) => l * DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal)),
            None => DVector::zeros(2),
        }
    }

    fn perturb(&self, data: &SensorData, rng: &mut dyn RngCore) -> SensorData {
        let mut noisy = data.clone();
        if self.chol.is_some() {
            for y in noisy.steps_mut() {
                for block in 0..y.len() / 2 {
                    let v = self.injected_noise(rng);
                    y[2 * block] += v[0];
                    y[2 * block + 1] += v[1];
                }
            }
        }
        noisy
    }
}

impl<M: Mechanism> Mechanism for InputPerturbation<M> {
    fn name(&self) -> String {
        format!(
            "input-perturbation(s_bar={}, {})",
            self.level,
            self.base.name()
        )
    }

    fn step_dim(&self) -> usize {
        self.base.step_dim()
    }

    fn steps(&self) -> usize {
        self.base.steps()
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        if data.steps().iter().any(|y| y.len() % 2 != 0) {
            return Err(Error::Mechanism(
                "input perturbation expects two rows per sensor".into(),
            ));
        }
        if self.chol.is_none() {
            return self.base.prepare(data);
        }
        // validate once against the clean data
        drop(self.base.prepare(data)?);
        Ok(Box::new(move |rng: &mut dyn RngCore| -> Trajectory {
            let noisy = self.perturb(data, rng);
            let sampler = self
                .base
                .prepare(&noisy)
                .expect("perturbed data has the validated shape");
            sampler.sample(rng)
        }))
    }
}
