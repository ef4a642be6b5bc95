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

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::noise::TruncatedGaussianMixture;

/// Planar anisotropic oscillator with potential `((x1)^2 + 4 (x2)^2) / 2`,
/// state `(x1, x2, v1, v2)`, discretized exactly with step `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSystem {
    pub dt: f64,
    transition: DMatrix<f64>,
    /// Half-width of the uniform per-step position perturbation.
    pub process_noise: f64,
    pub initial: TruncatedGaussianMixture,
}

impl OscillatorSystem {
    pub const FREQUENCIES: [f64; 2] = [1.0, 2.0];

    pub fn new(dt: f64, process_noise: f64, initial: TruncatedGaussianMixture) -> Self {
        Self {
            dt,
            transition: Self::exact_transition(dt),
            process_noise,
            initial,
        }
    }

    /// `dt = 0.1`, perturbation `[-0.001, 0.001]^2`, initial mean
    /// `(5, 0, 0, 2.5)`.
    pub fn benchmark() -> Self {
        Self::new(
            0.1,
            0.001,
            TruncatedGaussianMixture::standard(DVector::from_vec(vec![5.0, 0.0, 0.0, 2.5])),
        )
    }

    /// Matrix exponential of the harmonic flow over `dt`.
    pub fn exact_transition(dt: f64) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(4, 4);
        for (axis, &w) in Self::FREQUENCIES.iter().enumerate() {
            let (s, c) = (w * dt).sin_cos();
            let (x, v) = (axis, axis + 2);
            a[(x, x)] = c;
            a[(x, v)] = s / w;
            a[(v, x)] = -w * s;
            a[(v, v)] = c;
        }
        a
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn initial_mean(&self) -> &DVector<f64> {
        &self.initial.center
    }

    /// Modal energies `(v1^2 + x1^2) / 2` and `(v2^2 + 4 x2^2) / 2`.
    pub fn energies(state: &DVector<f64>) -> [f64; 2] {
        [
            0.5 * (state[2] * state[2] + state[0] * state[0]),
            0.5 * (state[3] * state[3] + 4.0 * state[1] * state[1]),
        ]
    }

    pub fn position(state: &DVector<f64>) -> DVector<f64> {
        state.rows(0, 2).into_owned()
    }

    /// Propagates `x0` for `horizon` steps, adding the uniform position
    /// perturbation after each transition.
    pub fn simulate_from(
        &self,
        x0: DVector<f64>,
        horizon: usize,
        rng: &mut dyn RngCore,
    ) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(horizon + 1);
        states.push(x0);
        for _ in 0..horizon {
            let mut next = &self.transition * states.last().unwrap();
            if self.process_noise > 0.0 {
                for i in 0..2 {
                    next[i] += rng.gen_range(-self.process_noise..=self.process_noise);
                }
            }
            states.push(next);
        }
        states
    }
}

/// Samples an initial state and simulates `horizon` steps: `horizon + 1`
/// states in total.
pub fn simulate_target(
    system: &OscillatorSystem,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Vec<DVector<f64>> {
    let x0 = system.initial.sample(rng);
    system.simulate_from(x0, horizon, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noiseless(dt: f64) -> OscillatorSystem {
        let mut sys = OscillatorSystem::benchmark();
        sys = OscillatorSystem::new(dt, 0.0, sys.initial);
        sys
    }

    #[test]
    fn energies_are_conserved_without_noise() {
        let sys = noiseless(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states = simulate_target(&sys, 100, &mut rng);
        assert_eq!(states.len(), 101);
        let e0 = OscillatorSystem::energies(&states[0]);
        for s in &states {
            let e = OscillatorSystem::energies(s);
            assert!((e[0] - e0[0]).abs() < 1e-12);
            assert!((e[1] - e0[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_one_returns_after_full_period() {
        let steps = 100;
        let sys = noiseless(2.0 * PI / steps as f64);
        let x0 = DVector::from_vec(vec![5.0, 0.0, 0.0, 2.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states = sys.simulate_from(x0.clone(), steps, &mut rng);
        let last = states.last().unwrap();
        assert!((last[0] - x0[0]).abs() < 1e-9);
        assert!((last[2] - x0[2]).abs() < 1e-9);
        // mode two completes two periods in the same time
        assert!((last[1] - x0[1]).abs() < 1e-9);
        assert!((last[3] - x0[3]).abs() < 1e-9);
    }

    #[test]
    fn closed_form_solution_matches() {
        let sys = noiseless(0.1);
        let x0 = DVector::from_vec(vec![5.0, 0.0, 0.0, 2.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states = sys.simulate_from(x0, 50, &mut rng);
        for (k, s) in states.iter().enumerate() {
            let t = 0.1 * k as f64;
            assert!((s[0] - 5.0 * t.cos()).abs() < 1e-10);
            assert!((s[1] - 1.25 * (2.0 * t).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn perturbation_growth_is_bounded() {
        let sys = OscillatorSystem::benchmark();
        let clean = noiseless(0.1);
        let x0 = DVector::from_vec(vec![5.0, 0.0, 0.0, 2.5]);
        let horizon = 40;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy = sys.simulate_from(x0.clone(), horizon, &mut rng);
            let reference = clean.simulate_from(x0.clone(), horizon, &mut rng);
            for (k, (a, b)) in noisy.iter().zip(&reference).enumerate() {
                // each kick has norm <= 0.001 * sqrt(2); the flow amplifies
                // position offsets by at most the modal condition number 2
                let bound = 0.001 * 2f64.sqrt() * 2.0 * k as f64;
                let dev = (OscillatorSystem::position(a) - OscillatorSystem::position(b)).norm();
                assert!(dev <= bound + 1e-15, "step {k}: {dev} > {bound}");
            }
        }
    }
}
