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

//! Event partitions of the output space.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::HighLikelySet;
use crate::error::{Error, Result};
use crate::geometry::Ellipsoid;
use crate::trajectory::Trajectory;

/// Default upper limit on the number of grid events.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000;

/// Axis-aligned box, half-open `[lower, upper)` on every axis except those
/// flagged in `closed`, which include their upper face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCell {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub closed: Vec<bool>,
}

impl BoxCell {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.lower.len()
            && x.iter().enumerate().all(|(i, &v)| {
                self.lower[i] <= v && (v < self.upper[i] || (self.closed[i] && v <= self.upper[i]))
            })
    }
}

/// The region of one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventRegion {
    /// One box per released step.
    Boxes { cells: Vec<BoxCell> },
    /// Points of the stacked trajectory inside `include` and outside every
    /// ellipsoid in `exclude`.
    Layer {
        include: Ellipsoid,
        exclude: Vec<Ellipsoid>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: u64,
    pub region: EventRegion,
}

impl Event {
    /// Per-step boxes, if this is a grid event.
    pub fn cells(&self) -> Option<&[BoxCell]> {
        match &self.region {
            EventRegion::Boxes { cells } => Some(cells),
            EventRegion::Layer { .. } => None,
        }
    }
}

/// Stacks the steps of `t` into one vector.
pub fn flatten(t: &Trajectory) -> DVector<f64> {
    DVector::from_iterator(
        t.steps().iter().map(|s| s.len()).sum(),
        t.steps().iter().flat_map(|s| s.iter().copied()),
    )
}

/// Whether `trajectory` lies in `event`.
pub fn event_contains(event: &Event, trajectory: &Trajectory) -> Result<bool> {
    match &event.region {
        EventRegion::Boxes { cells } => {
            if cells.len() != trajectory.len() {
                return Err(Error::DimensionMismatch {
                    expected: cells.len(),
                    got: trajectory.len(),
                });
            }
            for (cell, x) in cells.iter().zip(trajectory.steps()) {
                if cell.lower.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: cell.lower.len(),
                        got: x.len(),
                    });
                }
            }
            Ok(cells
                .iter()
                .zip(trajectory.steps())
                .all(|(c, x)| c.contains(x)))
        }
        EventRegion::Layer { include, exclude } => {
            let x = flatten(trajectory);
            if !include.contains(&x, 0.0)? {
                return Ok(false);
            }
            for e in exclude {
                if e.contains(&x, 0.0)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Grid over one step's bounding box: `r + 1` edges per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepGrid {
    pub edges: Vec<Vec<f64>>,
}

impl StepGrid {
    fn new(lower: &DVector<f64>, upper: &DVector<f64>, r: usize) -> Self {
        let edges = lower
            .iter()
            .zip(upper.iter())
            .map(|(&lo, &hi)| {
                let mut e: Vec<f64> = (0..=r)
                    .map(|j| lo + (hi - lo) * j as f64 / r as f64)
                    .collect();
                e[r] = hi;
                e
            })
            .collect();
        Self { edges }
    }

    fn dim(&self) -> usize {
        self.edges.len()
    }

    fn resolution(&self) -> usize {
        self.edges[0].len() - 1
    }

    /// Cell index of `x` (axis 0 least significant).
    fn locate(&self, x: &DVector<f64>) -> Option<u64> {
        let r = self.resolution();
        let mut id = 0u64;
        let mut weight = 1u64;
        for (axis, edges) in self.edges.iter().enumerate() {
            let v = x[axis];
            if !(edges[0] <= v && v <= edges[r]) {
                return None;
            }
            let j = edges[1..r].partition_point(|&e| e <= v);
            id += j as u64 * weight;
            weight *= r as u64;
        }
        Some(id)
    }

    fn cell(&self, mut id: u64) -> BoxCell {
        let r = self.resolution();
        let d = self.dim();
        let mut lower = DVector::zeros(d);
        let mut upper = DVector::zeros(d);
        let mut closed = vec![false; d];
        for (axis, edges) in self.edges.iter().enumerate() {
            let j = (id % r as u64) as usize;
            id /= r as u64;
            lower[axis] = edges[j];
            upper[axis] = edges[j + 1];
            closed[axis] = j + 1 == r;
        }
        BoxCell {
            lower,
            upper,
            closed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Partition {
    Grid {
        r: usize,
        steps: Vec<StepGrid>,
    },
    /// Nested-ellipsoid layers over the stacked trajectory; event `i` is
    /// `layers[i]` minus all earlier layers, and the last event is the
    /// remainder of `outer`.
    Layered {
        eta: f64,
        layers: Vec<Ellipsoid>,
        outer: Ellipsoid,
    },
}

/// A finite, disjoint family of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventList {
    partition: Partition,
    count: u64,
}

impl EventList {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Grid resolution `r`, if this is a grid.
    pub fn resolution(&self) -> Option<usize> {
        match &self.partition {
            Partition::Grid { r, .. } => Some(*r),
            Partition::Layered { .. } => None,
        }
    }

    /// Certified probability bound per event, if this is a bounded partition.
    pub fn eta(&self) -> Option<f64> {
        match &self.partition {
            Partition::Layered { eta, .. } => Some(*eta),
            Partition::Grid { .. } => None,
        }
    }

    /// Id of the unique event containing `t`, if any. Trajectories of the
    /// wrong shape belong to no event.
    pub fn locate(&self, t: &Trajectory) -> Option<u64> {
        match &self.partition {
            Partition::Grid { steps, .. } => {
                if t.len() != steps.len() {
                    return None;
                }
                let mut id = 0u64;
                let mut weight = 1u64;
                for (grid, x) in steps.iter().zip(t.steps()) {
                    if x.len() != grid.dim() {
                        return None;
                    }
                    id += grid.locate(x)? * weight;
                    weight =
                        weight.saturating_mul((grid.resolution() as u64).pow(grid.dim() as u32));
                }
                Some(id)
            }
            Partition::Layered { layers, outer, .. } => {
                let x = flatten(t);
                if x.len() != outer.dim() || !outer.contains(&x, 0.0).ok()? {
                    return None;
                }
                let hit = layers
                    .iter()
                    .position(|e| e.contains(&x, 0.0).unwrap_or(false))
                    .unwrap_or(layers.len());
                Some(hit as u64)
            }
        }
    }

    /// Builds event `id`.
    pub fn event(&self, id: u64) -> Result<Event> {
        if id >= self.count {
            return Err(Error::Domain {
                name: "event id",
                value: id as f64,
                expected: "an id below the event count",
            });
        }
        let region = match &self.partition {
            Partition::Grid { steps, .. } => {
                let mut rest = id;
                let cells = steps
                    .iter()
                    .map(|grid| {
                        let per_step = (grid.resolution() as u64).pow(grid.dim() as u32);
                        let cell = grid.cell(rest % per_step);
                        rest /= per_step;
                        cell
                    })
                    .collect();
                EventRegion::Boxes { cells }
            }
            Partition::Layered { layers, outer, .. } => {
                let i = id as usize;
                let include = if i < layers.len() {
                    layers[i].clone()
                } else {
                    outer.clone()
                };
                EventRegion::Layer {
                    include,
                    exclude: layers[..i.min(layers.len())].to_vec(),
                }
            }
        };
        Ok(Event { id, region })
    }

    pub(crate) fn layered(eta: f64, layers: Vec<Ellipsoid>, outer: Ellipsoid) -> Self {
        let count = layers.len() as u64 + 1;
        Self {
            partition: Partition::Layered { eta, layers, outer },
            count,
        }
    }
}

/// Splits each step's bounding box into `r` slabs per axis and takes all
/// cross-step combinations: `(r^d)^steps` events. Event ids are mixed-radix
/// with step 0 least significant.
pub fn grid_partition(hls: &HighLikelySet, r: usize, cap: u64) -> Result<EventList> {
    if r == 0 {
        return Err(Error::Domain {
            name: "r",
            value: 0.0,
            expected: "a positive integer",
        });
    }
    let mut count: u128 = 1;
    for e in hls.per_step() {
        let per_step = (r as u128).checked_pow(e.dim() as u32).unwrap_or(u128::MAX);
        count = count.saturating_mul(per_step);
    }
    if count > cap as u128 {
        return Err(Error::TooManyEvents { count, cap });
    }
    let steps = hls
        .per_step()
        .iter()
        .map(|e| {
            let (lo, hi) = e.bounding_box();
            StepGrid::new(&lo, &hi, r)
        })
        .collect();
    Ok(EventList {
        partition: Partition::Grid { r, steps },
        count: count as u64,
    })
}
