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

//! The two-phase hypothesis test and critical-epsilon sweeps.
//!
//! A test runs in four stages, each on its own random streams:
//!
//! 1. fit a high-likely set on runs with the first input and grid it into
//!    events;
//! 2. count events over `n` runs per input and pick the event with the
//!    smallest p-value (the selection phase);
//! 3. count that event over `n` fresh runs per input;
//! 4. report the thinned Fisher p-values of the fresh counts.
//!
//! The mechanism is rejected when the smaller p-value is at most `alpha`.

mod budget;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use budget::{approx_dp_budget, estimation_error, ApproxDpBudget, EtaSource};
pub use sweep::{critical_epsilon_sweep, linear_grid, sweep_audit, SweepPoint, SweepResult};

use crate::error::{check_open_unit, Error, Result};
use crate::highlikely::{
    event_contains, fit_high_likely_set, grid_partition, Event, EventList, HighLikelySet,
    DEFAULT_EVENT_CAP,
};
use crate::mechanisms::{check_output, Mechanism, Sampler};
use crate::rng::{Phase, RunStream};
use crate::stats::{pvalue_averaged, CountPair, PValuePair};
use crate::trajectory::SensorData;

/// How thinning draws relate across the points of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinningMode {
    /// Independent thinning draws at every epsilon.
    #[default]
    PerEpsilon,
    /// The same uniforms at every epsilon; p-values are then monotone in
    /// epsilon for fixed counts.
    Shared,
}

/// Whether the selection and test runs are redrawn at every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepRuns {
    #[default]
    Shared,
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub epsilon: f64,
    /// Adjacency radius for the input pair.
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Grid subdivisions per axis.
    pub r: usize,
    /// Runs per input per phase.
    pub n: usize,
    pub seed: u64,
    pub thinning_replicates: usize,
    pub event_cap: u64,
    pub thinning: ThinningMode,
    pub sweep_runs: SweepRuns,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            delta: 10.0,
            alpha: 0.05,
            beta: 0.05,
            gamma: 1e-9,
            r: 2,
            n: 10_000,
            seed: 0,
            thinning_replicates: 1,
            event_cap: DEFAULT_EVENT_CAP,
            thinning: ThinningMode::PerEpsilon,
            sweep_runs: SweepRuns::Shared,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain {
                name: "epsilon",
                value: self.epsilon,
                expected: "a finite nonnegative value",
            });
        }
        if !(self.delta > 0.0) {
            return Err(Error::Domain {
                name: "delta",
                value: self.delta,
                expected: "a positive value",
            });
        }
        check_open_unit("alpha", self.alpha)?;
        check_open_unit("beta", self.beta)?;
        check_open_unit("gamma", self.gamma)?;
        for (name, v) in [
            ("r", self.r),
            ("n", self.n),
            ("thinning_replicates", self.thinning_replicates),
        ] {
            if v == 0 {
                return Err(Error::Domain {
                    name,
                    value: 0.0,
                    expected: "a positive integer",
                });
            }
        }
        Ok(())
    }

    fn thinning_key(&self, epsilon: f64) -> u64 {
        match self.thinning {
            ThinningMode::PerEpsilon => epsilon.to_bits(),
            ThinningMode::Shared => 0,
        }
    }
}

/// Distance between the two inputs and whether it is within `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub distance: f64,
    pub delta: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub epsilon: f64,
    pub accepted: bool,
    pub pvalues: PValuePair,
    pub min_pvalue: f64,
    pub worst_event: Event,
    /// Fresh-phase counts of the worst event.
    pub counts: CountPair,
    /// Selection-phase counts of the worst event.
    pub selection_counts: CountPair,
    pub budget: ApproxDpBudget,
    pub event_count: u64,
    pub adjacency: Adjacency,
}

/// Random stream of one input (`0` or `1`) in a sampling phase.
pub fn input_stream(seed: u64, phase: Phase, input: u64, run_key: u64) -> RunStream {
    RunStream::new(seed, phase).child(input).child(run_key)
}

fn locate_runs(
    mechanism: &dyn Mechanism,
    sampler: &dyn Sampler,
    events: &EventList,
    n: usize,
    stream: RunStream,
) -> Result<Vec<Option<u64>>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let t = sampler.sample(&mut stream.rng(i as u64));
            check_output(mechanism, &t)?;
            Ok(events.locate(&t))
        })
        .collect()
}

fn tally(hits: &[Option<u64>], len: u64) -> Vec<u64> {
    let mut counts = vec![0u64; len as usize];
    for id in hits.iter().flatten() {
        counts[*id as usize] += 1;
    }
    counts
}

/// Per-event occurrence counts over `n` runs; runs outside every event are
/// not counted.
pub fn count_occurrences(
    mechanism: &dyn Mechanism,
    data: &SensorData,
    events: &EventList,
    n: usize,
    stream: RunStream,
) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
            expected: "a positive integer",
        });
    }
    let sampler = mechanism.prepare(data)?;
    Ok(tally(
        &locate_runs(mechanism, sampler.as_ref(), events, n, stream)?,
        events.len(),
    ))
}

/// Outcome of the selection phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub event_id: u64,
    pub pvalues: PValuePair,
    pub counts: CountPair,
}

/// Picks the event with the smallest `min(p_upper, p_lower)`; ties go to the
/// lowest id. Event `i` thins with stream `i` of `thinning`.
pub fn select_worst_event(
    c1: &[u64],
    c2: &[u64],
    n: u64,
    epsilon: f64,
    replicates: usize,
    thinning: RunStream,
) -> Result<Selection> {
    if c1.is_empty() || c1.len() != c2.len() {
        return Err(Error::DimensionMismatch {
            expected: c1.len().max(1),
            got: c2.len(),
        });
    }
    let mut best: Option<Selection> = None;
    for (id, (&a, &b)) in c1.iter().zip(c2).enumerate() {
        let counts = CountPair::new(a, b, n)?;
        let pvalues = if a + b == 0 {
            PValuePair {
                p_upper: 1.0,
                p_lower: 1.0,
            }
        } else {
            pvalue_averaged(counts, epsilon, replicates, &mut thinning.rng(id as u64))?
        };
        if best.is_none_or(|s| pvalues.min() < s.pvalues.min()) {
            best = Some(Selection {
                event_id: id as u64,
                pvalues,
                counts,
            });
        }
    }
    Ok(best.expect("nonempty"))
}

/// Selection phase on its own: returns the worst event for `epsilon`.
pub fn worst_event_selector(
    mechanism: &dyn Mechanism,
    epsilon: f64,
    y1: &SensorData,
    y2: &SensorData,
    events: &EventList,
    n: usize,
    seed: u64,
) -> Result<Event> {
    let c1 = count_occurrences(
        mechanism,
        y1,
        events,
        n,
        input_stream(seed, Phase::Selection, 0, 0),
    )?;
    let c2 = count_occurrences(
        mechanism,
        y2,
        events,
        n,
        input_stream(seed, Phase::Selection, 1, 0),
    )?;
    let thinning = RunStream::new(seed, Phase::SelectionThinning).child(epsilon.to_bits());
    let s = select_worst_event(&c1, &c2, n as u64, epsilon, 1, thinning)?;
    events.event(s.event_id)
}

/// Test phase on its own: counts `worst_event` over `n` fresh runs per input
/// and returns both p-values.
pub fn hypothesis_test(
    mechanism: &dyn Mechanism,
    epsilon: f64,
    y1: &SensorData,
    y2: &SensorData,
    worst_event: &Event,
    n: usize,
    seed: u64,
) -> Result<PValuePair> {
    Ok(fresh_test(mechanism, epsilon, y1, y2, worst_event, n, seed, 1)?.0)
}

#[allow(clippy::too_many_arguments)]
fn fresh_test(
    mechanism: &dyn Mechanism,
    epsilon: f64,
    y1: &SensorData,
    y2: &SensorData,
    event: &Event,
    n: usize,
    seed: u64,
    replicates: usize,
) -> Result<(PValuePair, CountPair)> {
    let mut counts = [0u64; 2];
    for (input, data) in [y1, y2].into_iter().enumerate() {
        let sampler = mechanism.prepare(data)?;
        let stream = input_stream(seed, Phase::Test, input as u64, 0);
        let hits: Result<Vec<bool>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let t = sampler.sample(&mut stream.rng(i as u64));
                check_output(mechanism, &t)?;
                event_contains(event, &t)
            })
            .collect();
        counts[input] = hits?.into_iter().filter(|&h| h).count() as u64;
    }
    let counts = CountPair::new(counts[0], counts[1], n as u64)?;
    let thinning = RunStream::new(seed, Phase::TestThinning).child(epsilon.to_bits());
    let p = pvalue_averaged(counts, epsilon, replicates, &mut thinning.rng(0))?;
    Ok((p, counts))
}

/// Everything a test needs that does not depend on epsilon: the partition
/// and where every selection and test run landed.
#[derive(Debug)]
pub struct Audit<'m> {
    config: TestConfig,
    mechanism: &'m dyn Mechanism,
    y1: &'m SensorData,
    y2: &'m SensorData,
    high_likely: Option<HighLikelySet>,
    events: EventList,
    eta_source: EtaSource,
    selection: [Vec<u64>; 2],
    test_hits: [Vec<Option<u64>>; 2],
    adjacency: Adjacency,
}

impl<'m> Audit<'m> {
    /// Fits the high-likely set on `y1`, grids it, and draws the selection
    /// and test runs.
    pub fn prepare(
        config: &TestConfig,
        mechanism: &'m dyn Mechanism,
        y1: &'m SensorData,
        y2: &'m SensorData,
    ) -> Result<Self> {
        config.validate()?;
        let sampler = mechanism.prepare(y1)?;
        let hls = fit_high_likely_set(
            mechanism,
            sampler.as_ref(),
            config.beta,
            config.gamma,
            RunStream::new(config.seed, Phase::HighLikely),
        )?;
        let events = grid_partition(&hls, config.r, config.event_cap)?;
        Self::build(
            config,
            mechanism,
            y1,
            y2,
            Some(hls),
            events,
            EtaSource::Empirical,
        )
    }

    /// Uses a caller-supplied partition. With a bounded-probability partition
    /// the budget reports its certified `eta`.
    pub fn with_events(
        config: &TestConfig,
        mechanism: &'m dyn Mechanism,
        y1: &'m SensorData,
        y2: &'m SensorData,
        events: EventList,
    ) -> Result<Self> {
        config.validate()?;
        let source = if events.eta().is_some() {
            EtaSource::Certified
        } else {
            EtaSource::Empirical
        };
        Self::build(config, mechanism, y1, y2, None, events, source)
    }

    fn build(
        config: &TestConfig,
        mechanism: &'m dyn Mechanism,
        y1: &'m SensorData,
        y2: &'m SensorData,
        high_likely: Option<HighLikelySet>,
        events: EventList,
        eta_source: EtaSource,
    ) -> Result<Self> {
        let distance = y1.distance(y2)?;
        let adjacency = Adjacency {
            distance,
            delta: config.delta,
            within: distance <= config.delta,
        };
        if !adjacency.within {
            log::warn!(
                "inputs are {distance:.6} apart, more than delta = {}; the verdict does not cover delta-adjacency",
                config.delta
            );
        }
        let mut audit = Self {
            config: config.clone(),
            mechanism,
            y1,
            y2,
            high_likely,
            events,
            eta_source,
            selection: [vec![], vec![]],
            test_hits: [vec![], vec![]],
            adjacency,
        };
        audit.draw_runs(0)?;
        Ok(audit)
    }

    /// Redraws the selection and test runs under `run_key`.
    pub fn draw_runs(&mut self, run_key: u64) -> Result<()> {
        let n = self.config.n;
        for (input, data) in [self.y1, self.y2].into_iter().enumerate() {
            let sampler = self.mechanism.prepare(data)?;
            let seed = self.config.seed;
            let sel = locate_runs(
                self.mechanism,
                sampler.as_ref(),
                &self.events,
                n,
                input_stream(seed, Phase::Selection, input as u64, run_key),
            )?;
            self.selection[input] = tally(&sel, self.events.len());
            self.test_hits[input] = locate_runs(
                self.mechanism,
                sampler.as_ref(),
                &self.events,
                n,
                input_stream(seed, Phase::Test, input as u64, run_key),
            )?;
        }
        Ok(())
    }

    pub fn config(&self) -> &TestConfig {
        &self.config
    }

    pub fn high_likely(&self) -> Option<&HighLikelySet> {
        self.high_likely.as_ref()
    }

    pub fn events(&self) -> &EventList {
        &self.events
    }

    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
    }

    /// Selection-phase counts per event for input `0` or `1`.
    pub fn selection_counts(&self, input: usize) -> &[u64] {
        &self.selection[input]
    }

    /// Largest per-event frequency seen in the selection phase.
    pub fn empirical_eta(&self) -> f64 {
        let max = self.selection.iter().flatten().copied().max().unwrap_or(0);
        max as f64 / self.config.n as f64
    }

    pub fn evaluate(&self, epsilon: f64) -> Result<TestVerdict> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain {
                name: "epsilon",
                value: epsilon,
                expected: "a finite nonnegative value",
            });
        }
        let cfg = &self.config;
        let key = cfg.thinning_key(epsilon);
        let selection = select_worst_event(
            &self.selection[0],
            &self.selection[1],
            cfg.n as u64,
            epsilon,
            cfg.thinning_replicates,
            RunStream::new(cfg.seed, Phase::SelectionThinning).child(key),
        )?;
        let id = selection.event_id;
        let count = |hits: &[Option<u64>]| hits.iter().filter(|h| **h == Some(id)).count() as u64;
        let counts = CountPair::new(
            count(&self.test_hits[0]),
            count(&self.test_hits[1]),
            cfg.n as u64,
        )?;
        let thinning = RunStream::new(cfg.seed, Phase::TestThinning).child(key);
        let pvalues = pvalue_averaged(
            counts,
            epsilon,
            cfg.thinning_replicates,
            &mut thinning.rng(0),
        )?;
        let min_pvalue = pvalues.min();
        let eta = match (self.eta_source, self.events.eta()) {
            (EtaSource::Certified, Some(eta)) => eta.min(1.0),
            _ => self.empirical_eta(),
        };
        let mut budget = approx_dp_budget(cfg.beta, eta, epsilon, cfg.alpha, cfg.gamma)?;
        budget.eta_source = self.eta_source;
        Ok(TestVerdict {
            epsilon,
            accepted: min_pvalue > cfg.alpha,
            pvalues,
            min_pvalue,
            worst_event: self.events.event(id)?,
            counts,
            selection_counts: selection.counts,
            budget,
            event_count: self.events.len(),
            adjacency: self.adjacency,
        })
    }
}

/// Full test at `config.epsilon`.
pub fn run_test(
    config: &TestConfig,
    mechanism: &dyn Mechanism,
    y1: &SensorData,
    y2: &SensorData,
) -> Result<TestVerdict> {
    Audit::prepare(config, mechanism, y1, y2)?.evaluate(config.epsilon)
}
