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

//! Statistical verification of differential privacy for stochastic
//! estimators.
//!
//! The toolkit treats a mechanism as a black box that maps sensor data to a
//! trajectory of estimates. Given two adjacent inputs it fits a high-likely
//! output set, partitions it into events, picks the event that most
//! contradicts `epsilon`-differential privacy on one batch of runs and tests
//! it with an exact Fisher test on a fresh batch.
//!
//! ```
//! use dpaudit_core::mechanisms::{make_laplace_reference, Mechanism};
//! use dpaudit_core::testkit::{run_test, TestConfig};
//!
//! let mech = make_laplace_reference(1.0, 1.0, 1, 1).unwrap();
//! let (y1, y2) = mech.adjacent_inputs();
//! let config = TestConfig { epsilon: 3.0, delta: 1.0, n: 2_000, ..TestConfig::default() };
//! let verdict = run_test(&config, &mech, &y1, &y2).unwrap();
//! assert!(verdict.accepted);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod highlikely;
pub mod mechanisms;
pub mod report;
pub mod rng;
pub mod stats;
pub mod testkit;
pub mod trajectory;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use geometry::{ellipsoid_contains, mvee, required_sample_count, Ellipsoid};
pub use highlikely::{estimate_high_likely_set, grid_partition, Event, EventList, HighLikelySet};
pub use mechanisms::{Mechanism, Sampler};
pub use report::RunReport;
pub use rng::{Phase, RunStream};
pub use stats::{hypergeom_sf, pvalue, CountPair, PValuePair};
pub use testkit::{
    critical_epsilon_sweep, run_test, ApproxDpBudget, SweepResult, TestConfig, TestVerdict,
};
pub use trajectory::{SensorData, Trajectory};
