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

//! `dpaudit` command-line front end.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dpaudit_core::config::ExperimentConfig;
use dpaudit_core::{experiment, Error, RunReport};
use log::info;

#[derive(Parser)]
#[command(
    name = "dpaudit",
    version,
    about = "Statistical differential-privacy audits of stochastic estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every configured mechanism at one epsilon.
    Verify(Common),
    /// Minimum p-value against epsilon and the critical epsilon.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon_min: Option<f64>,
        #[arg(long)]
        epsilon_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Critical epsilon and estimation error for every setup and mechanism.
    Bench(Common),
    /// High-likely set and event partition of the first input.
    Highlikely(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report's table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Dotted-path override such as `test.n=20000`; repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Exit with status 1 if any verdict rejects.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    grid_r: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn overrides(&self, extra: Vec<String>) -> Vec<String> {
        let mut all = self.overrides.clone();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                all.push(format!("{key}={v}"));
            }
        };
        push("test.seed", self.seed.map(|v| v.to_string()));
        push("test.epsilon", self.epsilon.map(|v| v.to_string()));
        push("test.n", self.n.map(|v| v.to_string()));
        push("test.r", self.grid_r.map(|v| v.to_string()));
        push("test.beta", self.beta.map(|v| v.to_string()));
        push("test.gamma", self.gamma.map(|v| v.to_string()));
        push("test.alpha", self.alpha.map(|v| v.to_string()));
        all.extend(extra);
        all
    }
}

type Driver = fn(&ExperimentConfig) -> dpaudit_core::Result<RunReport>;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::PartitionBudget { .. } | Error::Degenerate(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let (common, extra, command): (&Common, Vec<String>, Driver) = match &cli.command {
        Command::Verify(c) => (c, vec![], experiment::verify),
        Command::Sweep {
            common,
            epsilon_min,
            epsilon_max,
            points,
        } => {
            let mut extra = vec![];
            if let Some(v) = epsilon_min {
                extra.push(format!("sweep.min={v}"));
            }
            if let Some(v) = epsilon_max {
                extra.push(format!("sweep.max={v}"));
            }
            if let Some(v) = points {
                extra.push(format!("sweep.points={v}"));
            }
            (common, extra, experiment::sweep)
        }
        Command::Bench(c) => (c, vec![], experiment::bench),
        Command::Highlikely(c) => (c, vec![], experiment::highlikely),
    };
    let config = ExperimentConfig::load(&common.config, &common.overrides(extra))?;
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--workers: {e}")))?;
    }
    let start = Instant::now();
    let mut report = command(&config)?;
    if common.timing {
        report.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    info!(
        "{} finished after {} mechanism runs",
        report.command, report.mechanism_runs
    );

    let json = report.to_json()?;
    match &common.out {
        Some(path) => fs::write(path, json)?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    if let Some(path) = &common.csv {
        report.write_csv(fs::File::create(path)?)?;
    }
    if common.strict && !report.all_accepted() {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
