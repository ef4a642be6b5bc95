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

//! Privacy budget arithmetic and estimation error.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::trajectory::Trajectory;

/// Where the per-event probability bound `eta` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSource {
    /// Largest per-event frequency observed while selecting the worst event.
    Empirical,
    /// Bound enforced by construction of a bounded-probability partition.
    Certified,
}

/// Approximate-DP guarantee implied by passing the test:
/// `lambda = theta + 2 eta e^epsilon` with confidence `(1 - alpha)(1 - gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxDpBudget {
    pub lambda: f64,
    /// Mass allowed outside the high-likely set (`beta`).
    pub theta: f64,
    pub eta: f64,
    pub eta_source: EtaSource,
    pub confidence: f64,
}

pub fn approx_dp_budget(
    beta: f64,
    eta: f64,
    epsilon: f64,
    alpha: f64,
    gamma: f64,
) -> Result<ApproxDpBudget> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain {
            name: "beta",
            value: beta,
            expected: "a value in [0, 1)",
        });
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain {
            name: "eta",
            value: eta,
            expected: "a value in [0, 1]",
        });
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Domain {
            name: "epsilon",
            value: epsilon,
            expected: "a nonnegative value",
        });
    }
    check_open_unit("alpha", alpha)?;
    check_open_unit("gamma", gamma)?;
    Ok(ApproxDpBudget {
        lambda: beta + 2.0 * eta * epsilon.exp(),
        theta: beta,
        eta,
        eta_source: EtaSource::Empirical,
        confidence: (1.0 - alpha) * (1.0 - gamma),
    })
}

/// Root-mean-square error over all runs and steps:
/// `sqrt(mean_{runs, k} |est_k - truth_k|^2)`.
pub fn estimation_error(estimates: &[Trajectory], truth: &Trajectory) -> Result<f64> {
    if estimates.is_empty() || truth.is_empty() {
        return Err(Error::Config(
            "estimation error needs at least one run and step".into(),
        ));
    }
    let mut sum = 0.0;
    for est in estimates {
        if est.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: est.len(),
            });
        }
        for (a, b) in est.steps().iter().zip(truth.steps()) {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: b.len(),
                    got: a.len(),
                });
            }
            sum += (a - b).norm_squared();
        }
    }
    Ok((sum / (estimates.len() * truth.len()) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_examples() {
        let b = approx_dp_budget(0.05, 0.05, 0.0, 0.05, 1e-9).unwrap();
        assert!((b.lambda - 0.15).abs() < 1e-15);
        assert!((b.confidence - 0.95).abs() < 1e-8);
        let b = approx_dp_budget(0.0, 0.1, 0.7, 0.05, 0.01).unwrap();
        assert_eq!(b.lambda, 2.0 * 0.1 * 0.7f64.exp());
        assert!(approx_dp_budget(1.0, 0.1, 0.7, 0.05, 0.01).is_err());
        assert!(approx_dp_budget(0.1, 0.1, 0.7, 0.0, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn lambda_is_monotone(
            b in 0.0f64..0.5, e in 0.0f64..0.5, eps in 0.0f64..3.0, db in 0.0f64..0.4, de in 0.0f64..0.4, deps in 0.0f64..1.0,
        ) {
            let base = approx_dp_budget(b, e, eps, 0.05, 0.01).unwrap().lambda;
            prop_assert!(approx_dp_budget(b + db, e, eps, 0.05, 0.01).unwrap().lambda >= base);
            prop_assert!(approx_dp_budget(b, e + de, eps, 0.05, 0.01).unwrap().lambda >= base);
            prop_assert!(approx_dp_budget(b, e, eps + deps, 0.05, 0.01).unwrap().lambda >= base);
        }
    }

    #[test]
    fn error_examples() {
        let truth = Trajectory::new(vec![DVector::from_vec(vec![1.0, 2.0]); 3]);
        assert_eq!(
            estimation_error(&[truth.clone(), truth.clone()], &truth).unwrap(),
            0.0
        );
        let offset = DVector::from_vec(vec![3.0, 4.0]);
        let shifted: Trajectory = truth.steps().iter().map(|s| s + &offset).collect();
        assert!((estimation_error(&[shifted], &truth).unwrap() - 5.0).abs() < 1e-12);
        let short = Trajectory::new(vec![DVector::zeros(2)]);
        assert!(estimation_error(&[short], &truth).is_err());
    }

    #[test]
    fn error_matches_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Trajectory = (0..5)
            .map(|_| DVector::from_fn(2, |_, _| rng.gen::<f64>()))
            .collect();
        let runs: Vec<Trajectory> = (0..7)
            .map(|_| {
                (0..5)
                    .map(|_| DVector::from_fn(2, |_, _| rng.gen::<f64>()))
                    .collect()
            })
            .collect();
        let mut sq = vec![];
        for r in &runs {
            for k in 0..5 {
                for i in 0..2 {
                    sq.push((r.step(k)[i] - truth.step(k)[i]).powi(2));
                }
            }
        }
        let direct = (sq.iter().sum::<f64>() / 35.0).sqrt();
        assert!((estimation_error(&runs, &truth).unwrap() - direct).abs() < 1e-12);
    }
}
