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

//! Critical-epsilon sweeps.

use serde::{Deserialize, Serialize};

use super::{Audit, SweepRuns, TestConfig, TestVerdict};
use crate::error::{Error, Result};
use crate::mechanisms::Mechanism;
use crate::stats::{CountPair, PValuePair};
use crate::trajectory::SensorData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub pvalues: PValuePair,
    pub min_pvalue: f64,
    pub accepted: bool,
    pub worst_event_id: u64,
    pub counts: CountPair,
}

impl From<&TestVerdict> for SweepPoint {
    fn from(v: &TestVerdict) -> Self {
        Self {
            epsilon: v.epsilon,
            pvalues: v.pvalues,
            min_pvalue: v.min_pvalue,
            accepted: v.accepted,
            worst_event_id: v.worst_event.id,
            counts: v.counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub alpha: f64,
    pub epsilon_grid: Vec<f64>,
    pub min_pvalues: Vec<f64>,
    /// Smallest grid point whose minimum p-value exceeds `alpha`.
    pub epsilon_critical: Option<f64>,
    /// Where the p-value curve crosses `alpha`, interpolated linearly between
    /// `epsilon_critical` and the grid point before it.
    pub epsilon_crossing: Option<f64>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn from_points(alpha: f64, points: Vec<SweepPoint>) -> Self {
        let epsilon_grid: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
        let min_pvalues: Vec<f64> = points.iter().map(|p| p.min_pvalue).collect();
        let first = min_pvalues.iter().position(|&p| p > alpha);
        let epsilon_critical = first.map(|i| epsilon_grid[i]);
        let epsilon_crossing = first.map(|i| {
            if i == 0 {
                return epsilon_grid[0];
            }
            let (e0, e1) = (epsilon_grid[i - 1], epsilon_grid[i]);
            let (p0, p1) = (min_pvalues[i - 1], min_pvalues[i]);
            e0 + (alpha - p0) / (p1 - p0) * (e1 - e0)
        });
        Self {
            alpha,
            epsilon_grid,
            min_pvalues,
            epsilon_critical,
            epsilon_crossing,
            points,
        }
    }
}

/// `points` evenly spaced values from `min` to `max` inclusive.
pub fn linear_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(min >= 0.0) || !(max >= min) || (points > 1 && max == min) {
        return Err(Error::Config(format!(
            "invalid epsilon grid: {points} points on [{min}, {max}]"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                max
            } else {
                min + (max - min) * i as f64 / (points - 1) as f64
            }
        })
        .collect())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("epsilon grid is empty".into()));
    }
    if grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::Config(
            "epsilon grid values must be finite and nonnegative".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "epsilon grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// Tests every grid point against one high-likely set and partition. The
/// worst event is reselected at every point.
pub fn critical_epsilon_sweep(
    config: &TestConfig,
    mechanism: &dyn Mechanism,
    y1: &SensorData,
    y2: &SensorData,
    grid: &[f64],
) -> Result<SweepResult> {
    check_grid(grid)?;
    let mut audit = Audit::prepare(config, mechanism, y1, y2)?;
    sweep_audit(&mut audit, grid)
}

/// [`critical_epsilon_sweep`] over an already prepared audit.
pub fn sweep_audit(audit: &mut Audit<'_>, grid: &[f64]) -> Result<SweepResult> {
    check_grid(grid)?;
    let mut points = Vec::with_capacity(grid.len());
    for (i, &eps) in grid.iter().enumerate() {
        if audit.config().sweep_runs == SweepRuns::Fresh && i > 0 {
            audit.draw_runs(i as u64)?;
        }
        points.push(SweepPoint::from(&audit.evaluate(eps)?));
    }
    if audit.config().sweep_runs == SweepRuns::Fresh && grid.len() > 1 {
        audit.draw_runs(0)?;
    }
    Ok(SweepResult::from_points(audit.config().alpha, points))
}
