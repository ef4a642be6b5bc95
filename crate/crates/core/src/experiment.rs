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

//! Experiment drivers behind the command-line subcommands.

use std::cmp::Ordering;

use nalgebra::DVector;

use crate::config::{BuildContext, ExperimentConfig, InputsConfig, PartitionConfig};
use crate::error::Result;
use crate::highlikely::{bounded_probability_partition, estimate_high_likely_set, grid_partition};
use crate::mechanisms::{
    adjacent_sensor_pair, sample_runs, simulate_target, Mechanism, OscillatorSystem, SensorSetup,
};
use crate::report::{BenchRow, HighLikelyEntry, InputSummary, RunReport, SweepEntry, VerdictEntry};
use crate::rng::{Phase, RunStream};
use crate::testkit::{estimation_error, sweep_audit, Audit, SweepRuns};
use crate::trajectory::{SensorData, Trajectory};

/// Input pair for one sensor setup, with the true positions when simulated.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub y1: SensorData,
    pub y2: SensorData,
    pub truth: Option<Vec<DVector<f64>>>,
    pub summary: InputSummary,
}

pub fn prepare_inputs(
    cfg: &ExperimentConfig,
    setup: &SensorSetup,
) -> Result<(PreparedInputs, BuildContext)> {
    let system = cfg.system.build()?;
    let network = cfg.network.build(setup)?;
    let (y1, y2, truth, rotation) = match &cfg.inputs {
        InputsConfig::SensorPair { sensor, rule, seed } => {
            let stream = RunStream::new(seed.unwrap_or(cfg.test.seed), Phase::Simulation);
            let states = simulate_target(&system, cfg.system.horizon, &mut stream.rng(0));
            let pair = adjacent_sensor_pair(
                &network,
                *sensor,
                cfg.test.delta,
                *rule,
                &states,
                &mut stream.rng(1),
            )?;
            let truth = states.iter().map(OscillatorSystem::position).collect();
            (pair.y1, pair.y2, Some(truth), Some(pair.rotation))
        }
        InputsConfig::Explicit { y1, y2 } => (
            SensorData::from_rows(y1),
            SensorData::from_rows(y2),
            None,
            None,
        ),
    };
    let distance = y1.distance(&y2)?;
    let summary = InputSummary {
        setup: setup.label(),
        steps: y1.len(),
        distance,
        delta: cfg.test.delta,
        within_delta: distance <= cfg.test.delta,
        rotation,
    };
    let ctx = BuildContext {
        system,
        network,
        horizon: cfg.system.horizon,
        input_steps: y1.len(),
        seed: cfg.test.seed,
    };
    Ok((
        PreparedInputs {
            y1,
            y2,
            truth,
            summary,
        },
        ctx,
    ))
}

fn audit<'m>(
    cfg: &ExperimentConfig,
    mechanism: &'m dyn Mechanism,
    inputs: &'m PreparedInputs,
) -> Result<Audit<'m>> {
    match &cfg.partition {
        PartitionConfig::Grid => Audit::prepare(&cfg.test, mechanism, &inputs.y1, &inputs.y2),
        PartitionConfig::Bounded { eta, beta } => {
            let events = bounded_probability_partition(
                mechanism,
                &inputs.y1,
                beta.unwrap_or(cfg.test.beta),
                *eta,
                cfg.test.gamma,
                cfg.test.seed,
            )?;
            Audit::with_events(&cfg.test, mechanism, &inputs.y1, &inputs.y2, events)
        }
    }
}

fn audit_runs(audit: &Audit<'_>, points: usize) -> u64 {
    let cfg = audit.config();
    let hls = audit.high_likely().map_or(0, |h| h.samples()) as u64;
    let rounds = match cfg.sweep_runs {
        SweepRuns::Shared => 1,
        SweepRuns::Fresh => points.max(1) as u64,
    };
    hls + 4 * cfg.n as u64 * rounds
}

/// `run_test` at `test.epsilon` for every mechanism.
pub fn verify(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("verify", cfg.clone());
    let setup = cfg.network.setup.clone();
    let (inputs, ctx) = prepare_inputs(cfg, &setup)?;
    for m in &cfg.mechanisms {
        let mechanism = m.build(&ctx)?;
        let audit = audit(cfg, mechanism.as_ref(), &inputs)?;
        let verdict = audit.evaluate(cfg.test.epsilon)?;
        report.mechanism_runs += audit_runs(&audit, 1);
        report.verdicts.push(VerdictEntry {
            setup: setup.label(),
            mechanism: m.label(),
            verdict,
            high_likely: audit.high_likely().cloned(),
        });
    }
    report.inputs.push(inputs.summary);
    Ok(report)
}

/// Critical-epsilon sweep over the configured grid for every mechanism.
pub fn sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("sweep", cfg.clone());
    let grid = cfg.sweep.epsilons()?;
    let setup = cfg.network.setup.clone();
    let (inputs, ctx) = prepare_inputs(cfg, &setup)?;
    for m in &cfg.mechanisms {
        let mechanism = m.build(&ctx)?;
        let mut audit = audit(cfg, mechanism.as_ref(), &inputs)?;
        let sweep = sweep_audit(&mut audit, &grid)?;
        report.mechanism_runs += audit_runs(&audit, grid.len());
        report.sweeps.push(SweepEntry {
            setup: setup.label(),
            mechanism: m.label(),
            sweep,
        });
    }
    report.inputs.push(inputs.summary);
    Ok(report)
}

fn truth_for(mechanism: &dyn Mechanism, truth: &[DVector<f64>]) -> Option<Trajectory> {
    let steps = mechanism.steps();
    (steps <= truth.len()
        && truth
            .first()
            .is_some_and(|t| t.len() == mechanism.step_dim()))
    .then(|| Trajectory::new(truth[..steps].to_vec()))
}

fn rmse(
    mechanism: &dyn Mechanism,
    data: &SensorData,
    truth: &Trajectory,
    runs: usize,
    stream: RunStream,
) -> Result<f64> {
    let sampler = mechanism.prepare(data)?;
    estimation_error(&sample_runs(sampler.as_ref(), stream, runs), truth)
}

/// Sweep plus estimation errors for every (setup, mechanism) pair.
pub fn bench(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("bench", cfg.clone());
    let grid = cfg.sweep.epsilons()?;
    for setup in cfg.bench_setups() {
        let (inputs, ctx) = prepare_inputs(cfg, &setup)?;
        let first_row = report.bench.len();
        for m in &cfg.mechanisms {
            let mechanism = m.build(&ctx)?;
            let mut audit = audit(cfg, mechanism.as_ref(), &inputs)?;
            let sweep = sweep_audit(&mut audit, &grid)?;
            report.mechanism_runs += audit_runs(&audit, grid.len());
            let truth = inputs
                .truth
                .as_deref()
                .and_then(|t| truth_for(mechanism.as_ref(), t));
            let (e_correct, e_adjacent) = match &truth {
                Some(truth) => {
                    let runs = cfg.bench.error_runs;
                    let errors = RunStream::new(cfg.test.seed, Phase::Error);
                    report.mechanism_runs += 2 * runs as u64;
                    (
                        Some(rmse(
                            mechanism.as_ref(),
                            &inputs.y1,
                            truth,
                            runs,
                            errors.child(0),
                        )?),
                        Some(rmse(
                            mechanism.as_ref(),
                            &inputs.y2,
                            truth,
                            runs,
                            errors.child(1),
                        )?),
                    )
                }
                None => (None, None),
            };
            report.bench.push(BenchRow {
                setup: setup.label(),
                mechanism: m.label(),
                epsilon_critical: sweep.epsilon_critical,
                epsilon_crossing: sweep.epsilon_crossing,
                e_correct,
                e_adjacent,
                better_choice: false,
            });
            report.sweeps.push(SweepEntry {
                setup: setup.label(),
                mechanism: m.label(),
                sweep,
            });
        }
        mark_better_choice(&mut report.bench[first_row..]);
        report.inputs.push(inputs.summary);
    }
    Ok(report)
}

/// Flags the row with the smallest critical epsilon (missing counts as
/// infinite), breaking ties by the smaller correct-data error.
fn mark_better_choice(rows: &mut [BenchRow]) {
    let key = |r: &BenchRow| {
        (
            r.epsilon_critical.unwrap_or(f64::INFINITY),
            r.e_correct.unwrap_or(f64::INFINITY),
        )
    };
    let best = rows
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
        .map(|(i, _)| i);
    if let Some(best) = best {
        let k = key(&rows[best]);
        for r in rows.iter_mut() {
            r.better_choice = key(r).0.total_cmp(&k.0) == Ordering::Equal
                && key(r).1.total_cmp(&k.1) == Ordering::Equal;
        }
    }
}

/// High-likely set and partition of the first input for every mechanism.
pub fn highlikely(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut report = RunReport::new("highlikely", cfg.clone());
    let setup = cfg.network.setup.clone();
    let (inputs, ctx) = prepare_inputs(cfg, &setup)?;
    for m in &cfg.mechanisms {
        let mechanism = m.build(&ctx)?;
        let set = estimate_high_likely_set(
            mechanism.as_ref(),
            &inputs.y1,
            cfg.test.beta,
            cfg.test.gamma,
            RunStream::new(cfg.test.seed, Phase::HighLikely),
        )?;
        report.mechanism_runs += set.samples() as u64;
        let events = match &cfg.partition {
            PartitionConfig::Grid => grid_partition(&set, cfg.test.r, cfg.test.event_cap)?,
            PartitionConfig::Bounded { eta, beta } => bounded_probability_partition(
                mechanism.as_ref(),
                &inputs.y1,
                beta.unwrap_or(cfg.test.beta),
                *eta,
                cfg.test.gamma,
                cfg.test.seed,
            )?,
        };
        report.high_likely.push(HighLikelyEntry {
            setup: setup.label(),
            mechanism: m.label(),
            set,
            events,
        });
    }
    report.inputs.push(inputs.summary);
    Ok(report)
}
