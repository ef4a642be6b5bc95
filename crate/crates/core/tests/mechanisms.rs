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

use dpaudit_core::config::ExperimentConfig;
use dpaudit_core::experiment::prepare_inputs;
use dpaudit_core::mechanisms::{sample_runs, Mechanism};
use dpaudit_core::{Phase, RunStream, SensorData};
use statrs::distribution::{ContinuousCDF, Normal};

const BATCH: usize = 10_000;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (
        m,
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

/// Two-sided Welch z-test p-value for equal means.
fn location_pvalue(a: &[f64], b: &[f64]) -> f64 {
    let ((ma, va), (mb, vb)) = (mean_var(a), mean_var(b));
    let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    if se == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    2.0 * Normal::standard().sf(((ma - mb) / se).abs())
}

fn assert_stationary(mechanism: &dyn Mechanism, data: &SensorData) {
    let sampler = mechanism.prepare(data).unwrap();
    let batch = |seed| {
        sample_runs(
            sampler.as_ref(),
            RunStream::new(seed, Phase::Selection),
            BATCH,
        )
        .iter()
        .map(|t| t.step(mechanism.steps() - 1)[0])
        .collect::<Vec<_>>()
    };
    let p = location_pvalue(&batch(1), &batch(2));
    assert!(p > 0.01, "{}: p = {p}", mechanism.name());
}

#[test]
fn every_mechanism_is_stationary() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "inputs": { "kind": "sensor_pair" },
            "mechanisms": [
                { "kind": "surrogate_mhe", "entropy": 0.8 },
                { "kind": "input_perturbation", "level": 0.9, "base": { "kind": "surrogate_mhe", "entropy": 1.0 } },
                { "kind": "dp_ekf", "level": 0.5 },
                { "kind": "laplace", "sensitivity": 1.0, "scale": 1.0 },
                { "kind": "gaussian", "sd": 1.0 },
                { "kind": "uniform", "half_width": 1.0 }
            ]
        }"#,
    )
    .unwrap();
    let (inputs, ctx) = prepare_inputs(&cfg, &cfg.network.setup).unwrap();
    for m in &cfg.mechanisms {
        let mechanism = m.build(&ctx).unwrap();
        assert_stationary(mechanism.as_ref(), &inputs.y1);
    }
}

#[test]
fn repeated_sampling_is_reproducible() {
    let cfg = ExperimentConfig::from_json(
        r#"{ "inputs": { "kind": "sensor_pair" }, "mechanisms": [ { "kind": "dp_ekf", "level": 0.5 } ] }"#,
    )
    .unwrap();
    let (inputs, ctx) = prepare_inputs(&cfg, &cfg.network.setup).unwrap();
    let mechanism = cfg.mechanisms[0].build(&ctx).unwrap();
    let sampler = mechanism.prepare(&inputs.y1).unwrap();
    let stream = RunStream::new(3, Phase::Test);
    assert_eq!(
        sample_runs(sampler.as_ref(), stream, 50),
        sample_runs(sampler.as_ref(), stream, 50)
    );
}
