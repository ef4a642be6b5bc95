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

//! Partitions whose events each carry at most a prescribed probability.
//!
//! The outer region `R` is the minimum-volume ellipsoid around the stacked
//! trajectories of `Γ(beta_bar)` runs. It is peeled into layers: layer `j` is
//! the ellipsoid around the innermost `(j + 1) k` construction points (ranked
//! by their level in `R`), and its event is what it adds to earlier layers.
//! The remainder of `R` is the last event. Every event's frequency is then
//! checked on fresh runs.

use nalgebra::DVector;

use super::partition::{flatten, EventList};
use crate::error::{check_open_unit, Error, Result};
use crate::geometry::{mvee_with, required_sample_count, Ellipsoid, MveeOptions};
use crate::mechanisms::{check_output, sample_runs, Mechanism};
use crate::rng::{Phase, RunStream};
use crate::trajectory::SensorData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedPartitionOptions {
    /// Construction attempts before giving up.
    pub attempts: usize,
    /// Fresh runs used to check the event frequencies.
    pub validation_samples: usize,
}

impl Default for BoundedPartitionOptions {
    fn default() -> Self {
        Self {
            attempts: 50,
            validation_samples: 10_000,
        }
    }
}

/// See [`bounded_probability_partition_with`].
pub fn bounded_probability_partition(
    mechanism: &dyn Mechanism,
    data: &SensorData,
    beta_d: f64,
    eta_d: f64,
    gamma: f64,
    seed: u64,
) -> Result<EventList> {
    bounded_probability_partition_with(
        mechanism,
        data,
        beta_d,
        eta_d,
        gamma,
        seed,
        &BoundedPartitionOptions::default(),
    )
}

/// Disjoint events covering a high-likely region, each with validated
/// frequency at most `eta_d`.
pub fn bounded_probability_partition_with(
    mechanism: &dyn Mechanism,
    data: &SensorData,
    beta_d: f64,
    eta_d: f64,
    gamma: f64,
    seed: u64,
    opts: &BoundedPartitionOptions,
) -> Result<EventList> {
    check_open_unit("beta_d", beta_d)?;
    check_open_unit("gamma", gamma)?;
    if !(eta_d > 0.0) {
        return Err(Error::Domain {
            name: "eta_d",
            value: eta_d,
            expected: "a positive value",
        });
    }
    let sampler = mechanism.prepare(data)?;
    let dim = mechanism.steps() * mechanism.step_dim();
    let stacked = |stream: RunStream, count: usize| -> Result<Vec<DVector<f64>>> {
        sample_runs(sampler.as_ref(), stream, count)
            .iter()
            .map(|t| check_output(mechanism, t).map(|_| flatten(t)))
            .collect()
    };
    let mvee_opts = MveeOptions::default();

    let beta_bar = if eta_d >= 1.0 {
        beta_d
    } else {
        beta_d.min(eta_d / 4.0)
    };
    let outer_runs = required_sample_count(beta_bar, gamma, dim)?;
    let outer_points = stacked(RunStream::new(seed, Phase::Partition), outer_runs)?;
    let outer = mvee_with(&outer_points, &mvee_opts)?.ellipsoid;
    if eta_d >= 1.0 {
        return Ok(EventList::layered(eta_d, vec![], outer));
    }
    let eta_bar = eta_d - beta_bar;

    for attempt in 0..opts.attempts {
        let target = 0.5 * eta_bar * 0.85f64.powi(attempt as i32);
        let m = required_sample_count(eta_bar, gamma, dim)?.max((50.0 / target).ceil() as usize);
        let stream = RunStream::new(seed, Phase::Partition).child(attempt as u64 + 1);
        let mut ranked: Vec<(f64, DVector<f64>)> = stacked(stream, m)?
            .into_iter()
            .filter_map(|x| {
                let level = outer.level(&x).ok()?;
                (level <= 1.0).then_some((level, x))
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
        let points: Vec<DVector<f64>> = ranked.into_iter().map(|(_, x)| x).collect();

        match peel(&points, m, target, eta_bar, &mvee_opts) {
            Some(layers) => {
                let list = EventList::layered(eta_d, layers, outer.clone());
                let fresh = stacked(
                    RunStream::new(seed, Phase::Validation).child(attempt as u64),
                    opts.validation_samples,
                )?;
                let mut counts = vec![0usize; list.len() as usize];
                for x in &fresh {
                    if let Some(id) = locate_flat(&list, x) {
                        counts[id] += 1;
                    }
                }
                let worst = counts.iter().copied().max().unwrap_or(0) as f64
                    / opts.validation_samples as f64;
                if worst <= eta_d {
                    return Ok(list);
                }
                log::debug!("partition attempt {attempt}: largest event frequency {worst}");
            }
            None => log::debug!("partition attempt {attempt}: could not peel layers"),
        }
    }
    Err(Error::PartitionBudget {
        eta: eta_d,
        attempts: opts.attempts,
    })
}

/// Nested layers whose increments each hold at most `0.8 eta_bar` of the `m`
/// construction runs, stopping once the uncovered remainder is at most
/// `target`.
fn peel(
    points: &[DVector<f64>],
    m: usize,
    target: f64,
    eta_bar: f64,
    opts: &MveeOptions,
) -> Option<Vec<Ellipsoid>> {
    let dim = points.first()?.len();
    let step = ((target * m as f64).ceil() as usize).max(dim + 1);
    let limit = 0.8 * eta_bar * m as f64;
    let mut covered = vec![false; points.len()];
    let mut layers: Vec<Ellipsoid> = vec![];
    let mut end = 0;
    loop {
        let uncovered = covered.iter().filter(|&&c| !c).count();
        if uncovered as f64 <= target * m as f64 {
            return Some(layers);
        }
        let mut take = step;
        let layer = loop {
            let upto = (end + take).min(points.len());
            let e = mvee_with(&points[..upto], opts).ok()?.ellipsoid;
            let added = points
                .iter()
                .zip(&covered)
                .filter(|(x, &c)| !c && e.contains(x, 0.0).unwrap_or(false))
                .count();
            if (added as f64) <= limit && added > 0 {
                end = upto;
                break e;
            }
            if take <= dim + 1 {
                return None;
            }
            take = (take / 2).max(dim + 1);
        };
        for (x, c) in points.iter().zip(covered.iter_mut()) {
            if !*c && layer.contains(x, 0.0).unwrap_or(false) {
                *c = true;
            }
        }
        layers.push(layer);
    }
}

fn locate_flat(list: &EventList, x: &DVector<f64>) -> Option<usize> {
    match list.partition() {
        super::Partition::Layered { layers, outer, .. } => {
            if !outer.contains(x, 0.0).ok()? {
                return None;
            }
            Some(
                layers
                    .iter()
                    .position(|e| e.contains(x, 0.0).unwrap_or(false))
                    .unwrap_or(layers.len()),
            )
        }
        super::Partition::Grid { .. } => None,
    }
}
