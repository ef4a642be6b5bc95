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

//! Experiment configuration files.
//!
//! A configuration is one JSON document:
//!
//! ```json
//! {
//!   "system":     { "dt": 0.1, "process_noise": 0.001, "initial_mean": [5, 0, 0, 2.5], "horizon": 8 },
//!   "network":    { "setup": "q1", "radius": 14.142135623730951 },
//!   "inputs":     { "kind": "sensor_pair", "sensor": 0, "rule": "nominal" },
//!   "mechanisms": [ { "kind": "surrogate_mhe", "entropy": 0.8 } ],
//!   "test":       { "epsilon": 0.5, "n": 10000, "seed": 1 },
//!   "sweep":      { "min": 0.1, "max": 2.0, "points": 20 },
//!   "setups":     ["q1", "q2", "q3"]
//! }
//! ```
//!
//! Only `inputs` and `mechanisms` are required. Individual fields can be
//! overridden with dotted paths such as `test.n=2000`.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mechanisms::{
    make_dp_ekf, make_laplace_reference, AdjacencyRule, GaussianReference, InputPerturbation,
    Mechanism, MheOptions, OscillatorSystem, SensorNetwork, SensorSetup, SurrogateMhe,
    TruncatedGaussianMixture, UniformReference,
};
use crate::testkit::{linear_grid, TestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub offset: f64,
    pub sd: f64,
    pub half_width: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            offset: 0.01,
            sd: 0.02,
            half_width: 0.025,
        }
    }
}

impl NoiseConfig {
    fn build(&self, center: DVector<f64>) -> Result<TruncatedGaussianMixture> {
        TruncatedGaussianMixture::new(center, self.offset, self.sd, self.half_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub dt: f64,
    /// Half-width of the uniform position perturbation per step.
    pub process_noise: f64,
    pub initial_mean: [f64; 4],
    pub initial_noise: NoiseConfig,
    /// Final time index `T`; data has `T + 1` steps.
    pub horizon: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            process_noise: 0.001,
            initial_mean: [5.0, 0.0, 0.0, 2.5],
            initial_noise: NoiseConfig::default(),
            horizon: 8,
        }
    }
}

impl SystemConfig {
    pub fn build(&self) -> Result<OscillatorSystem> {
        if !(self.dt > 0.0) || !(self.process_noise >= 0.0) {
            return Err(Error::Config(
                "system.dt must be positive and system.process_noise nonnegative".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("system.horizon must be at least 1".into()));
        }
        let initial = self
            .initial_noise
            .build(DVector::from_row_slice(&self.initial_mean))?;
        Ok(OscillatorSystem::new(self.dt, self.process_noise, initial))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub setup: SensorSetup,
    pub radius: f64,
    pub noise: NoiseConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            setup: SensorSetup::Q1,
            radius: crate::mechanisms::DEFAULT_RADIUS,
            noise: NoiseConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn build(&self, setup: &SensorSetup) -> Result<SensorNetwork> {
        let angles = setup.angles();
        let noise = self.noise.build(DVector::zeros(2))?;
        SensorNetwork::new(self.radius, angles, noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputsConfig {
    /// Simulated target observed by the nominal network and by a copy with
    /// one sensor rotated (adjacency radius `test.delta`).
    SensorPair {
        #[serde(default)]
        sensor: usize,
        #[serde(default)]
        rule: AdjacencyRule,
        /// Seed for the target and sensor noise; defaults to `test.seed`.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Literal data, one row per step.
    Explicit {
        y1: Vec<Vec<f64>>,
        y2: Vec<Vec<f64>>,
    },
}

fn default_dim() -> usize {
    1
}

fn default_window() -> usize {
    MheOptions::default().window
}

fn default_noise_scale() -> f64 {
    MheOptions::default().noise_scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismConfig {
    Laplace {
        #[serde(default)]
        label: Option<String>,
        sensitivity: f64,
        scale: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Gaussian {
        #[serde(default)]
        label: Option<String>,
        sd: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Uniform {
        #[serde(default)]
        label: Option<String>,
        half_width: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    SurrogateMhe {
        #[serde(default)]
        label: Option<String>,
        entropy: f64,
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
    },
    InputPerturbation {
        #[serde(default)]
        label: Option<String>,
        level: f64,
        base: Box<MechanismConfig>,
        /// Seed for the random part of the noise covariance; defaults to
        /// `test.seed`.
        #[serde(default)]
        seed: Option<u64>,
    },
    DpEkf {
        #[serde(default)]
        label: Option<String>,
        level: f64,
    },
}

/// What a mechanism needs besides its own parameters.
#[derive(Debug, Clone)]
pub struct BuildContext {
    pub system: OscillatorSystem,
    pub network: SensorNetwork,
    pub horizon: usize,
    /// Steps in the input data.
    pub input_steps: usize,
    pub seed: u64,
}

impl MechanismConfig {
    pub fn label(&self) -> String {
        let explicit = match self {
            MechanismConfig::Laplace { label, .. }
            | MechanismConfig::Gaussian { label, .. }
            | MechanismConfig::Uniform { label, .. }
            | MechanismConfig::SurrogateMhe { label, .. }
            | MechanismConfig::InputPerturbation { label, .. }
            | MechanismConfig::DpEkf { label, .. } => label.clone(),
        };
        explicit.unwrap_or_else(|| match self {
            MechanismConfig::Laplace {
                sensitivity, scale, ..
            } => {
                format!("laplace(sensitivity={sensitivity},scale={scale})")
            }
            MechanismConfig::Gaussian { sd, .. } => format!("gaussian(sd={sd})"),
            MechanismConfig::Uniform { half_width, .. } => {
                format!("uniform(half_width={half_width})")
            }
            MechanismConfig::SurrogateMhe { entropy, .. } => format!("mhe(s={entropy})"),
            MechanismConfig::InputPerturbation { level, base, .. } => {
                format!("input-perturbation(s_bar={level},{})", base.label())
            }
            MechanismConfig::DpEkf { level, .. } => format!("dp-ekf(s_hat={level})"),
        })
    }

    pub fn build(&self, ctx: &BuildContext) -> Result<Box<dyn Mechanism>> {
        Ok(match self {
            MechanismConfig::Laplace {
                sensitivity,
                scale,
                dim,
                ..
            } => Box::new(make_laplace_reference(
                *sensitivity,
                *scale,
                *dim,
                ctx.input_steps,
            )?),
            MechanismConfig::Gaussian { sd, dim, .. } => {
                Box::new(GaussianReference::new(*sd, *dim, ctx.input_steps)?)
            }
            MechanismConfig::Uniform {
                half_width, dim, ..
            } => Box::new(UniformReference::new(*half_width, *dim, ctx.input_steps)?),
            MechanismConfig::SurrogateMhe {
                entropy,
                window,
                noise_scale,
                ..
            } => Box::new(SurrogateMhe::new(
                ctx.system.clone(),
                ctx.network.clone(),
                ctx.horizon,
                MheOptions {
                    window: *window,
                    entropy: *entropy,
                    noise_scale: *noise_scale,
                    ..MheOptions::default()
                },
            )?),
            MechanismConfig::InputPerturbation {
                level, base, seed, ..
            } => Box::new(InputPerturbation::new(
                base.build(ctx)?,
                *level,
                seed.unwrap_or(ctx.seed),
            )?),
            MechanismConfig::DpEkf { level, .. } => Box::new(make_dp_ekf(
                &ctx.system,
                ctx.network.clone(),
                ctx.horizon,
                *level,
            )?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Explicit grid; overrides `min`, `max` and `points` when set.
    pub grid: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            min: 0.1,
            max: 2.0,
            points: 20,
            grid: None,
        }
    }
}

impl SweepConfig {
    pub fn epsilons(&self) -> Result<Vec<f64>> {
        match &self.grid {
            Some(g) => Ok(g.clone()),
            None => {
                if self.points < 2 {
                    return Err(Error::Config("sweep.points must be at least 2".into()));
                }
                linear_grid(self.min, self.max, self.points)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Runs per input used for the estimation errors.
    pub error_runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { error_runs: 200 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    #[default]
    Grid,
    /// Events with validated probability at most `eta`.
    Bounded {
        eta: f64,
        #[serde(default)]
        beta: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    pub inputs: InputsConfig,
    pub mechanisms: Vec<MechanismConfig>,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Sensor setups for `bench`; defaults to `network.setup`.
    #[serde(default)]
    pub setups: Vec<SensorSetup>,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `overrides` (`dotted.path=value`) in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut value: Value = serde_json::from_str(&text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mechanisms.is_empty() {
            return Err(Error::Config(
                "mechanisms: at least one mechanism is required".into(),
            ));
        }
        self.test
            .validate()
            .map_err(|e| Error::Config(format!("test: {e}")))?;
        self.system.build()?;
        if let InputsConfig::Explicit { y1, y2 } = &self.inputs {
            if y1.is_empty() || y1.len() != y2.len() {
                return Err(Error::Config(
                    "inputs: y1 and y2 must have the same nonzero number of rows".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn bench_setups(&self) -> Vec<SensorSetup> {
        if self.setups.is_empty() {
            vec![self.network.setup.clone()]
        } else {
            self.setups.clone()
        }
    }
}

/// Sets `path=value` in a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise; missing objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override `{assignment}` is not of the form path=value"
        ))
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(Error::Config(format!(
                "override path `{path}` has an empty segment"
            )));
        }
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| {
                    Error::Config(format!("override path `{path}`: `{key}` is not an index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::Config(format!(
                        "override path `{path}`: index {idx} out of range ({len} items)"
                    ))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "override path `{path}`: `{key}` is inside a non-object value"
                )))
            }
        };
    }
    Ok(())
}
