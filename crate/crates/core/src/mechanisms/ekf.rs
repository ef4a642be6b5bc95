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

//! Extended Kalman filter and its output-noised variant.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::oscillator::OscillatorSystem;
use super::sensors::SensorNetwork;
use super::{Mechanism, Sampler};
use crate::error::{Error, Result};
use crate::geometry::symmetrize;
use crate::trajectory::{SensorData, Trajectory};

/// Observation model `y = h(x) + v` for the filter state.
pub trait MeasurementModel: Send + Sync + std::fmt::Debug {
    fn output_dim(&self) -> usize;
    fn observe(&self, state: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, state: &DVector<f64>) -> DMatrix<f64>;
}

/// The sensor network seen as a function of the full oscillator state.
impl MeasurementModel for SensorNetwork {
    fn output_dim(&self) -> usize {
        SensorNetwork::output_dim(self)
    }

    fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        self.measure(&OscillatorSystem::position(state))
    }

    fn jacobian(&self, state: &DVector<f64>) -> DMatrix<f64> {
        let pos = self.measure_jacobian(&OscillatorSystem::position(state));
        let mut jac = DMatrix::zeros(pos.nrows(), state.len());
        jac.columns_mut(0, 2).copy_from(&pos);
        jac
    }
}

/// `y = H x`.
#[derive(Debug, Clone)]
pub struct LinearMeasurement(pub DMatrix<f64>);

impl MeasurementModel for LinearMeasurement {
    fn output_dim(&self) -> usize {
        self.0.nrows()
    }

    fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        &self.0 * state
    }

    fn jacobian(&self, _state: &DVector<f64>) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// Floor applied to covariance eigenvalues after each update.
pub const COVARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExtendedKalmanFilter<H> {
    pub transition: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    pub measurement: H,
    pub measurement_cov: DMatrix<f64>,
    pub initial_mean: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
}

impl<H: MeasurementModel> ExtendedKalmanFilter<H> {
    /// Filters `data`, returning the posterior mean after each update.
    /// `after_update` may modify the posterior mean before it is recorded
    /// and propagated.
    pub fn run<F>(&self, data: &SensorData, mut after_update: F) -> Vec<DVector<f64>>
    where
        F: FnMut(&mut DVector<f64>),
    {
        let n = self.initial_mean.len();
        let mut mean = self.initial_mean.clone();
        let mut cov = self.initial_cov.clone();
        let mut out = Vec::with_capacity(data.len());
        for (k, y) in data.steps().iter().enumerate() {
            if k > 0 {
                mean = &self.transition * &mean;
                cov = &self.transition * &cov * self.transition.transpose() + &self.process_cov;
            }
            let jac = self.measurement.jacobian(&mean);
            let innovation = y - self.measurement.observe(&mean);
            let s = &jac * &cov * jac.transpose() + &self.measurement_cov;
            let s_inv = symmetrize(&s)
                .cholesky()
                .map(|c| c.inverse())
                .unwrap_or_else(|| s.clone().pseudo_inverse(1e-12).expect("svd"));
            let gain = &cov * jac.transpose() * s_inv;
            mean += &gain * innovation;
            let joseph = DMatrix::identity(n, n) - &gain * &jac;
            cov = &joseph * &cov * joseph.transpose()
                + &gain * &self.measurement_cov * gain.transpose();
            cov = floor_covariance(&cov);
            after_update(&mut mean);
            out.push(mean.clone());
        }
        out
    }
}

fn floor_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(cov);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= COVARIANCE_FLOOR {
        return sym;
    }
    log::debug!("filter covariance lost definiteness; clipping eigenvalues");
    let clipped = eig.eigenvalues.map(|l| l.max(COVARIANCE_FLOOR));
    symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfOptions {
    /// Privacy level `s_hat` in `(0, 1]`.
    pub level: f64,
}

impl Default for EkfOptions {
    fn default() -> Self {
        Self { level: 1.0 }
    }
}

/// EKF on the oscillator whose posterior mean receives
/// `(1 - s_hat) / s_hat * w`, `w ~ U[0, 1]` per component, at every update.
/// Releases the planar position for all `T + 1` steps.
#[derive(Debug)]
pub struct DpEkf {
    filter: ExtendedKalmanFilter<SensorNetwork>,
    horizon: usize,
    level: f64,
}

pub fn make_dp_ekf(
    system: &OscillatorSystem,
    network: SensorNetwork,
    horizon: usize,
    s_hat: f64,
) -> Result<DpEkf> {
    if !(s_hat > 0.0 && s_hat <= 1.0) {
        return Err(Error::Domain {
            name: "s_hat",
            value: s_hat,
            expected: "a value in (0, 1]",
        });
    }
    // uniform [-b, b] has variance b^2 / 3
    let mut process_cov = DMatrix::zeros(4, 4);
    let pv = (system.process_noise * system.process_noise / 3.0).max(COVARIANCE_FLOOR);
    process_cov[(0, 0)] = pv;
    process_cov[(1, 1)] = pv;
    for i in 2..4 {
        process_cov[(i, i)] = COVARIANCE_FLOOR;
    }
    let measurement_cov = DMatrix::identity(network.output_dim(), network.output_dim())
        * network.noise.variance_bound().max(COVARIANCE_FLOOR);
    let initial_cov =
        DMatrix::identity(4, 4) * system.initial.variance_bound().max(COVARIANCE_FLOOR);
    Ok(DpEkf {
        filter: ExtendedKalmanFilter {
            transition: system.transition().clone(),
            process_cov,
            measurement: network,
            measurement_cov,
            initial_mean: system.initial_mean().clone(),
            initial_cov,
        },
        horizon,
        level: s_hat,
    })
}

impl DpEkf {
    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn noise_bound(&self) -> f64 {
        (1.0 - self.level) / self.level
    }

    pub fn filter(&self) -> &ExtendedKalmanFilter<SensorNetwork> {
        &self.filter
    }
}

impl Mechanism for DpEkf {
    fn name(&self) -> String {
        format!("dp-ekf(s_hat={})", self.level)
    }

    fn step_dim(&self) -> usize {
        2
    }

    fn steps(&self) -> usize {
        self.horizon + 1
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        if data.len() != self.horizon + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.horizon + 1,
                got: data.len(),
            });
        }
        let dim = self.filter.measurement.output_dim();
        if let Some(y) = data.steps().iter().find(|y| y.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: y.len(),
            });
        }
        let bound = self.noise_bound();
        if bound == 0.0 {
            let states = self.filter.run(data, |_| {});
            let release: Trajectory = states.iter().map(OscillatorSystem::position).collect();
            return Ok(Box::new(move |_: &mut dyn RngCore| release.clone()));
        }
        Ok(Box::new(move |rng: &mut dyn RngCore| -> Trajectory {
            self.filter
                .run(data, |mean| {
                    for v in mean.iter_mut() {
                        *v += bound * rng.gen::<f64>();
                    }
                })
                .iter()
                .map(OscillatorSystem::position)
                .collect()
        }))
    }
}
