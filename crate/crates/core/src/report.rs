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

//! Run reports and their CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::highlikely::{EventList, HighLikelySet};
use crate::testkit::{SweepResult, TestVerdict};

pub const TOOLKIT_VERSION: &str = concat!("dpaudit ", env!("CARGO_PKG_VERSION"));

/// The data one report was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub setup: String,
    pub steps: usize,
    pub distance: f64,
    pub delta: f64,
    pub within_delta: bool,
    /// Sensor rotation used to build the pair, for simulated inputs.
    pub rotation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub setup: String,
    pub mechanism: String,
    pub verdict: TestVerdict,
    pub high_likely: Option<HighLikelySet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub setup: String,
    pub mechanism: String,
    pub sweep: SweepResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub setup: String,
    pub mechanism: String,
    pub epsilon_critical: Option<f64>,
    pub epsilon_crossing: Option<f64>,
    /// RMSE against the true positions using the first input.
    pub e_correct: Option<f64>,
    /// RMSE against the true positions using the adjacent input.
    pub e_adjacent: Option<f64>,
    /// Smallest critical epsilon within its setup (ties: smaller error).
    pub better_choice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLikelyEntry {
    pub setup: String,
    pub mechanism: String,
    pub set: HighLikelySet,
    pub events: EventList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub toolkit: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub inputs: Vec<InputSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub verdicts: Vec<VerdictEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sweeps: Vec<SweepEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bench: Vec<BenchRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub high_likely: Vec<HighLikelyEntry>,
    /// Mechanism runs drawn, excluding partition construction.
    pub mechanism_runs: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_seconds: Option<f64>,
}

impl RunReport {
    pub fn new(command: &str, config: ExperimentConfig) -> Self {
        Self {
            toolkit: TOOLKIT_VERSION.to_string(),
            command: command.to_string(),
            config,
            inputs: vec![],
            verdicts: vec![],
            sweeps: vec![],
            bench: vec![],
            high_likely: vec![],
            mechanism_runs: 0,
            wall_seconds: None,
        }
    }

    /// Whether every verdict in the report accepted.
    pub fn all_accepted(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict.accepted)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// The report's main table as CSV: verdicts for `verify`, p-value curves
    /// for `sweep`, the comparison table for `bench` and event counts for
    /// `highlikely`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        match self.command.as_str() {
            "verify" => {
                w.write_record([
                    "setup",
                    "mechanism",
                    "epsilon",
                    "accepted",
                    "p_upper",
                    "p_lower",
                    "min_pvalue",
                    "worst_event",
                    "c1",
                    "c2",
                    "n",
                    "lambda",
                    "confidence",
                ])?;
                for e in &self.verdicts {
                    let v = &e.verdict;
                    w.write_record([
                        e.setup.clone(),
                        e.mechanism.clone(),
                        v.epsilon.to_string(),
                        v.accepted.to_string(),
                        v.pvalues.p_upper.to_string(),
                        v.pvalues.p_lower.to_string(),
                        v.min_pvalue.to_string(),
                        v.worst_event.id.to_string(),
                        v.counts.c1.to_string(),
                        v.counts.c2.to_string(),
                        v.counts.n.to_string(),
                        v.budget.lambda.to_string(),
                        v.budget.confidence.to_string(),
                    ])?;
                }
            }
            "sweep" => {
                w.write_record([
                    "setup",
                    "mechanism",
                    "epsilon",
                    "min_pvalue",
                    "p_upper",
                    "p_lower",
                    "accepted",
                    "worst_event",
                    "epsilon_critical",
                ])?;
                for e in &self.sweeps {
                    for p in &e.sweep.points {
                        w.write_record([
                            e.setup.clone(),
                            e.mechanism.clone(),
                            p.epsilon.to_string(),
                            p.min_pvalue.to_string(),
                            p.pvalues.p_upper.to_string(),
                            p.pvalues.p_lower.to_string(),
                            p.accepted.to_string(),
                            p.worst_event_id.to_string(),
                            opt(e.sweep.epsilon_critical),
                        ])?;
                    }
                }
            }
            "bench" => {
                w.write_record([
                    "setup",
                    "mechanism",
                    "epsilon_critical",
                    "epsilon_crossing",
                    "e_correct",
                    "e_adjacent",
                    "better_choice",
                ])?;
                for r in &self.bench {
                    w.write_record([
                        r.setup.clone(),
                        r.mechanism.clone(),
                        opt(r.epsilon_critical),
                        opt(r.epsilon_crossing),
                        opt(r.e_correct),
                        opt(r.e_adjacent),
                        r.better_choice.to_string(),
                    ])?;
                }
            }
            _ => {
                w.write_record(["setup", "mechanism", "steps", "samples", "events"])?;
                for e in &self.high_likely {
                    w.write_record([
                        e.setup.clone(),
                        e.mechanism.clone(),
                        e.set.steps().to_string(),
                        e.set.samples().to_string(),
                        e.events.len().to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}
