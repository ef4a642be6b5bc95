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

//! Surrogate moving-horizon estimator with an entropy factor.
//!
//! For each released step `k` the state `x_k` is fitted by damped
//! Gauss-Newton to the window `y_{k+1}, ..., y_{k+N}` under the noiseless
//! dynamics, i.e. it minimizes `J(x) = sum_j |y_{k+j} - h(P A^j x)|^2`.
//! The released position is then drawn from the Gibbs law
//! `exp(-(s / (1 - s)) J(x) / (2 sigma^2))` over the support box, using the
//! Laplace approximation of `J` around its minimizer. `s = 1` releases the
//! minimizer itself; `s = 0` releases a uniform point of the support box.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::oscillator::OscillatorSystem;
use super::sensors::SensorNetwork;
use super::{Mechanism, Sampler};
use crate::error::{Error, Result};
use crate::trajectory::{SensorData, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MheOptions {
    /// Moving-horizon window length `N`.
    pub window: usize,
    /// Entropy factor `s` in `[0, 1]`.
    pub entropy: f64,
    /// Reference measurement scale `sigma` of the Gibbs law.
    pub noise_scale: f64,
    pub support_lower: [f64; 2],
    pub support_upper: [f64; 2],
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MheOptions {
    fn default() -> Self {
        Self {
            window: 5,
            entropy: 1.0,
            noise_scale: 100.0,
            support_lower: [-10.0, -10.0],
            support_upper: [10.0, 10.0],
            max_iterations: 100,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    pub state: DVector<f64>,
    /// Position block of `(G^T G)^{-1}` at the minimizer, `G` the model
    /// Jacobian.
    pub position_cov: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug)]
pub struct SurrogateMhe {
    system: OscillatorSystem,
    network: SensorNetwork,
    horizon: usize,
    opts: MheOptions,
    powers: Vec<DMatrix<f64>>,
}

/// Builds the surrogate estimator for data of horizon `T`, releasing
/// `T - N + 1` planar positions.
pub fn make_surrogate_mhe(
    system: OscillatorSystem,
    network: SensorNetwork,
    horizon: usize,
    window: usize,
    entropy: f64,
) -> Result<SurrogateMhe> {
    SurrogateMhe::new(
        system,
        network,
        horizon,
        MheOptions {
            window,
            entropy,
            ..MheOptions::default()
        },
    )
}

impl SurrogateMhe {
    pub fn new(
        system: OscillatorSystem,
        network: SensorNetwork,
        horizon: usize,
        opts: MheOptions,
    ) -> Result<Self> {
        if opts.window == 0 || opts.window > horizon {
            return Err(Error::Mechanism(format!(
                "window {} must be in 1..={horizon}",
                opts.window
            )));
        }
        if !(0.0..=1.0).contains(&opts.entropy) {
            return Err(Error::Domain {
                name: "entropy",
                value: opts.entropy,
                expected: "a value in [0, 1]",
            });
        }
        if !(opts.noise_scale > 0.0)
            || (0..2).any(|a| !(opts.support_lower[a] < opts.support_upper[a]))
        {
            return Err(Error::Mechanism(
                "noise_scale must be positive and the support box non-empty".into(),
            ));
        }
        let mut powers = Vec::with_capacity(opts.window);
        let mut p = system.transition().clone();
        for _ in 0..opts.window {
            powers.push(p.clone());
            p = system.transition() * p;
        }
        Ok(Self {
            system,
            network,
            horizon,
            opts,
            powers,
        })
    }

    pub fn options(&self) -> &MheOptions {
        &self.opts
    }

    pub fn entropy(&self) -> f64 {
        self.opts.entropy
    }

    /// Deterministic window fits for every released step.
    pub fn estimate_windows(&self, data: &SensorData) -> Result<Vec<WindowEstimate>> {
        self.check(data)?;
        let mut out: Vec<WindowEstimate> = Vec::with_capacity(self.steps());
        let mut guess = self.system.initial_mean().clone();
        for k in 0..self.steps() {
            let window = &data.steps()[k + 1..=k + self.opts.window];
            let mut est = self.fit_window(window, guess.clone());
            if !est.converged {
                log::warn!("window fit at step {k} did not converge; carrying previous estimate");
                est.state = guess.clone();
            }
            guess = self.system.transition() * &est.state;
            out.push(est);
        }
        Ok(out)
    }

    fn check(&self, data: &SensorData) -> Result<()> {
        if data.len() != self.horizon + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.horizon + 1,
                got: data.len(),
            });
        }
        let dim = self.network.output_dim();
        if let Some(y) = data.steps().iter().find(|y| y.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Residuals `y - h(P A^j x)` and model Jacobian `d h(P A^j x) / dx`.
    fn linearize(&self, window: &[DVector<f64>], x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.network.output_dim();
        let mut r = DVector::zeros(m * window.len());
        let mut g = DMatrix::zeros(m * window.len(), 4);
        for (j, (y, a)) in window.iter().zip(&self.powers).enumerate() {
            let state = a * x;
            let pos = OscillatorSystem::position(&state);
            r.rows_mut(j * m, m)
                .copy_from(&(y - self.network.measure(&pos)));
            let dpos = self.network.measure_jacobian(&pos) * a.rows(0, 2);
            g.rows_mut(j * m, m).copy_from(&dpos);
        }
        (r, g)
    }

    fn fit_window(&self, window: &[DVector<f64>], mut x: DVector<f64>) -> WindowEstimate {
        let (mut r, mut g) = self.linearize(window, &x);
        let mut cost = r.norm_squared();
        let mut damping = 1e-6;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.opts.max_iterations {
            iterations += 1;
            let gtg = g.transpose() * &g;
            let rhs = g.transpose() * &r;
            let mut lhs = gtg.clone();
            for i in 0..4 {
                lhs[(i, i)] += damping * (1.0 + gtg[(i, i)]);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&rhs)) else {
                break;
            };
            let trial = &x + &step;
            let (tr, tg) = self.linearize(window, &trial);
            let trial_cost = tr.norm_squared();
            if trial_cost.is_finite() && trial_cost <= cost {
                let small = step.norm() <= self.opts.tolerance * (1.0 + x.norm());
                x = trial;
                r = tr;
                g = tg;
                cost = trial_cost;
                damping = (damping * 0.1).max(1e-12);
                if small {
                    converged = true;
                    break;
                }
            } else {
                damping *= 10.0;
                if damping > 1e12 {
                    // no descent direction left: at a minimizer to precision
                    converged = step.norm() <= 1e-6 * (1.0 + x.norm());
                    break;
                }
            }
        }
        let gtg = g.transpose() * &g;
        let position_cov = match gtg.try_inverse() {
            Some(inv) => crate::geometry::symmetrize(&inv.view((0, 0), (2, 2)).into_owned()),
            None => {
                converged = false;
                DMatrix::identity(2, 2)
            }
        };
        WindowEstimate {
            state: x,
            position_cov,
            converged,
            iterations,
        }
    }

    fn gibbs_factor(&self) -> f64 {
        let s = self.opts.entropy;
        (1.0 - s) / s * self.opts.noise_scale * self.opts.noise_scale
    }
}

impl Mechanism for SurrogateMhe {
    fn name(&self) -> String {
        format!("surrogate-mhe(s={})", self.opts.entropy)
    }

    fn step_dim(&self) -> usize {
        2
    }

    fn steps(&self) -> usize {
        self.horizon - self.opts.window + 1
    }

    fn prepare<'a>(&'a self, data: &'a SensorData) -> Result<Box<dyn Sampler + 'a>> {
        let estimates = self.estimate_windows(data)?;
        let lower = DVector::from_row_slice(&self.opts.support_lower);
        let upper = DVector::from_row_slice(&self.opts.support_upper);
        let s = self.opts.entropy;
        let release = if s >= 1.0 {
            Release::Exact
        } else if s <= 0.0 {
            Release::Uniform
        } else {
            let factor = self.gibbs_factor();
            let mut chols = Vec::with_capacity(estimates.len());
            for e in &estimates {
                let cov = &e.position_cov * factor;
                let chol = cov.cholesky().ok_or_else(|| {
                    Error::Mechanism("window covariance is not positive definite".into())
                })?;
                chols.push(chol.l());
            }
            Release::Gibbs(chols)
        };
        Ok(Box::new(PreparedMhe {
            means: estimates
                .iter()
                .map(|e| OscillatorSystem::position(&e.state))
                .collect(),
            release,
            lower,
            upper,
        }))
    }
}

enum Release {
    Exact,
    Uniform,
    Gibbs(Vec<DMatrix<f64>>),
}

struct PreparedMhe {
    means: Vec<DVector<f64>>,
    release: Release,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Sampler for PreparedMhe {
    fn sample(&self, rng: &mut dyn RngCore) -> Trajectory {
        match &self.release {
            Release::Exact => Trajectory::new(self.means.clone()),
            Release::Uniform => self
                .means
                .iter()
                .map(|_| uniform_in_box(&self.lower, &self.upper, rng))
                .collect(),
            Release::Gibbs(chols) => self
                .means
                .iter()
                .zip(chols)
                .map(|(m, l)| truncated_gaussian(m, l, &self.lower, &self.upper, rng))
                .collect(),
        }
    }
}

fn uniform_in_box(
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> DVector<f64> {
    DVector::from_iterator(
        lower.len(),
        lower
            .iter()
            .zip(upper.iter())
            .map(|(&lo, &hi)| rng.gen_range(lo..hi)),
    )
}

fn inside(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> bool {
    x.iter()
        .zip(lower.iter().zip(upper.iter()))
        .all(|(&v, (&lo, &hi))| lo <= v && v < hi)
}

const GAUSSIAN_PROPOSALS: usize = 64;
const UNIFORM_PROPOSALS: usize = 1_000_000;

/// `N(mean, L L^T)` conditioned on the box. Gaussian proposals first, then
/// uniform proposals with Gaussian acceptance; both are exact rejection
/// samplers of the same law.
pub(crate) fn truncated_gaussian(
    mean: &DVector<f64>,
    chol: &DMatrix<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    rng: &mut dyn RngCore,
) -> DVector<f64> {
    let d = mean.len();
    for _ in 0..GAUSSIAN_PROPOSALS {
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = mean + chol * z;
        if inside(&x, lower, upper) {
            return x;
        }
    }
    for _ in 0..UNIFORM_PROPOSALS {
        let x = uniform_in_box(lower, upper, rng);
        let w = chol
            .solve_lower_triangular(&(&x - mean))
            .map(|w| w.norm_squared())
            .unwrap_or(f64::INFINITY);
        if rng.gen::<f64>() < (-0.5 * w).exp() {
            return x;
        }
    }
    // Mass of the box is negligible; release the nearest box point.
    DVector::from_iterator(
        d,
        (0..d).map(|i| mean[i].clamp(lower[i], upper[i] - f64::EPSILON * upper[i].abs().max(1.0))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::oscillator::simulate_target;
    use crate::mechanisms::sensors::{SensorNetwork, SensorSetup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless_setup() -> (
        OscillatorSystem,
        SensorNetwork,
        SensorData,
        Vec<DVector<f64>>,
    ) {
        let sys = OscillatorSystem::new(0.1, 0.0, OscillatorSystem::benchmark().initial.clone());
        let mut net = SensorNetwork::from_setup(&SensorSetup::Q1);
        net.noise.sd = 0.0;
        net.noise.offset = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let states = simulate_target(&sys, 8, &mut rng);
        let data = SensorData::new(
            states
                .iter()
                .map(|s| net.measure(&OscillatorSystem::position(s)))
                .collect(),
        );
        (sys, net, data, states)
    }

    #[test]
    fn recovers_state_from_clean_data() {
        let (sys, net, data, states) = noiseless_setup();
        let mhe = make_surrogate_mhe(sys, net, 8, 5, 1.0).unwrap();
        assert_eq!(mhe.steps(), 4);
        let fits = mhe.estimate_windows(&data).unwrap();
        for (k, fit) in fits.iter().enumerate() {
            assert!(fit.converged);
            assert!((&fit.state - &states[k]).amax() < 1e-8, "step {k}");
        }
    }

    #[test]
    fn deterministic_at_full_entropy_factor() {
        let (sys, net, data, _) = noiseless_setup();
        let mhe = make_surrogate_mhe(sys, net, 8, 5, 1.0).unwrap();
        let a = mhe
            .sample(&data, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let b = mhe
            .sample(&data, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        assert_eq!(a, b);
        let fits = mhe.estimate_windows(&data).unwrap();
        for (k, fit) in fits.iter().enumerate() {
            assert_eq!(a.step(k), &OscillatorSystem::position(&fit.state));
        }
    }

    #[test]
    fn zero_entropy_factor_is_uniform_on_support() {
        let (sys, net, data, _) = noiseless_setup();
        let mhe = make_surrogate_mhe(sys, net, 8, 5, 0.0).unwrap();
        let sampler = mhe.prepare(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut left = 0;
        let runs = 20_000;
        for _ in 0..runs {
            let t = sampler.sample(&mut rng);
            for x in t.steps() {
                assert!(x.amax() <= 10.0);
            }
            if t.step(0)[0] < 0.0 {
                left += 1;
            }
        }
        let frac = left as f64 / runs as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn spread_grows_as_entropy_factor_drops() {
        let (sys, net, data, _) = noiseless_setup();
        let spread = |s: f64| {
            let mhe = make_surrogate_mhe(sys.clone(), net.clone(), 8, 5, s).unwrap();
            let sampler = mhe.prepare(&data).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let xs: Vec<f64> = (0..4000)
                .map(|_| sampler.sample(&mut rng).step(0)[0])
                .collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let (a, b, c) = (spread(0.9), spread(0.8), spread(0.7));
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn truncated_gaussian_respects_box_far_from_mean() {
        let mean = DVector::from_vec(vec![30.0, 0.0]);
        let chol = DMatrix::identity(2, 2);
        let lo = DVector::from_vec(vec![-1.0, -1.0]);
        let hi = DVector::from_vec(vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = truncated_gaussian(&mean, &chol, &lo, &hi, &mut rng);
        assert!(x[0] < 1.0 && x[0] > 0.9);
    }

    #[test]
    fn rejects_bad_window() {
        let (sys, net, _, _) = noiseless_setup();
        assert!(make_surrogate_mhe(sys.clone(), net.clone(), 8, 9, 0.5).is_err());
        assert!(make_surrogate_mhe(sys, net, 8, 5, 1.5).is_err());
    }
}
