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

//! High-likely output sets and the event partitions built on them.
//!
//! A high-likely set is a list of per-step ellipsoids, each the minimum-volume
//! ellipsoid around `Γ` sampled estimates. By the scenario approach each one
//! holds at least `1 - beta` of its step's output mass with confidence
//! `1 - gamma`. All `Γ` runs are full trajectories sliced per step.

mod bounded;
mod partition;

use serde::{Deserialize, Serialize};

pub use bounded::{
    bounded_probability_partition, bounded_probability_partition_with, BoundedPartitionOptions,
};
pub use partition::{
    event_contains, flatten, grid_partition, BoxCell, Event, EventList, EventRegion, Partition,
    StepGrid, DEFAULT_EVENT_CAP,
};

use crate::error::{check_open_unit, Result};
use crate::geometry::{mvee_with, required_sample_count, Ellipsoid, MveeOptions};
use crate::mechanisms::{check_output, sample_runs, Mechanism, Sampler};
use crate::rng::RunStream;
use crate::trajectory::{SensorData, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLikelySet {
    per_step: Vec<Ellipsoid>,
    beta: f64,
    gamma: f64,
    /// Number of runs the ellipsoids were fitted on.
    samples: usize,
    /// Steps whose sample cloud was rank-deficient and needed a ridge.
    regularized_steps: Vec<usize>,
}

impl HighLikelySet {
    pub fn from_parts(per_step: Vec<Ellipsoid>, beta: f64, gamma: f64, samples: usize) -> Self {
        Self {
            per_step,
            beta,
            gamma,
            samples,
            regularized_steps: vec![],
        }
    }

    pub fn per_step(&self) -> &[Ellipsoid] {
        &self.per_step
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn regularized_steps(&self) -> &[usize] {
        &self.regularized_steps
    }

    /// Whether every step of `t` lies in its ellipsoid.
    pub fn contains(&self, t: &Trajectory) -> bool {
        t.len() == self.per_step.len()
            && self
                .per_step
                .iter()
                .zip(t.steps())
                .all(|(e, x)| e.contains(x, 0.0).unwrap_or(false))
    }
}

/// Samples `Γ(beta, gamma, step_dim)` runs of `mechanism` on `data` from
/// `stream` and fits one ellipsoid per released step.
pub fn estimate_high_likely_set(
    mechanism: &dyn Mechanism,
    data: &SensorData,
    beta: f64,
    gamma: f64,
    stream: RunStream,
) -> Result<HighLikelySet> {
    let sampler = mechanism.prepare(data)?;
    fit_high_likely_set(mechanism, sampler.as_ref(), beta, gamma, stream)
}

pub(crate) fn fit_high_likely_set(
    mechanism: &dyn Mechanism,
    sampler: &dyn Sampler,
    beta: f64,
    gamma: f64,
    stream: RunStream,
) -> Result<HighLikelySet> {
    check_open_unit("beta", beta)?;
    check_open_unit("gamma", gamma)?;
    let count = required_sample_count(beta, gamma, mechanism.step_dim())?;
    let runs = sample_runs(sampler, stream, count);
    for t in &runs {
        check_output(mechanism, t)?;
    }
    let opts = MveeOptions::default();
    let mut per_step = Vec::with_capacity(mechanism.steps());
    let mut regularized_steps = vec![];
    for k in 0..mechanism.steps() {
        let points: Vec<_> = runs.iter().map(|t| t.step(k).clone()).collect();
        let fit = mvee_with(&points, &opts)?;
        if fit.regularized {
            log::warn!("step {k}: estimates are rank-deficient; ellipsoid was regularized");
            regularized_steps.push(k);
        }
        if !fit.converged {
            log::warn!("step {k}: ellipsoid solver hit its iteration cap");
        }
        per_step.push(fit.ellipsoid);
    }
    Ok(HighLikelySet {
        per_step,
        beta,
        gamma,
        samples: count,
        regularized_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{ConstantMechanism, GaussianReference};
    use crate::rng::Phase;
    use nalgebra::DVector;

    #[test]
    fn uses_the_required_number_of_runs() {
        let mech = GaussianReference::new(1.0, 2, 3).unwrap();
        let data = SensorData::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let hls = estimate_high_likely_set(
            &mech,
            &data,
            0.05,
            1e-9,
            RunStream::new(1, Phase::HighLikely),
        )
        .unwrap();
        assert_eq!(hls.samples(), 814);
        assert_eq!(hls.steps(), 3);
        assert!(hls.regularized_steps().is_empty());
        for (k, e) in hls.per_step().iter().enumerate() {
            assert!(e
                .contains(&DVector::from_element(2, k as f64), 0.0)
                .unwrap());
        }
    }

    #[test]
    fn deterministic_output_gives_tiny_regularized_ellipsoid() {
        let point = DVector::from_vec(vec![3.0, -1.0]);
        let mech = ConstantMechanism::new(Trajectory::new(vec![point.clone()]));
        let data = SensorData::from_rows(&[vec![0.0]]);
        let hls = estimate_high_likely_set(
            &mech,
            &data,
            0.1,
            0.01,
            RunStream::new(2, Phase::HighLikely),
        )
        .unwrap();
        assert_eq!(hls.regularized_steps(), &[0]);
        let e = &hls.per_step()[0];
        assert!((e.center() - &point).amax() < 1e-9);
        let (lo, hi) = e.bounding_box();
        assert!((hi - lo).amax() < 1e-3);
    }

    #[test]
    fn same_stream_same_set() {
        let mech = GaussianReference::new(1.0, 2, 1).unwrap();
        let data = SensorData::from_rows(&[vec![0.0]]);
        let s = RunStream::new(9, Phase::HighLikely);
        let a = estimate_high_likely_set(&mech, &data, 0.1, 0.01, s).unwrap();
        let b = estimate_high_likely_set(&mech, &data, 0.1, 0.01, s).unwrap();
        assert_eq!(a, b);
    }
}
