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

//! Deterministic random substreams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 generator keyed by
//! the master seed and positioned on a 64-bit stream id. The stream id packs a
//! [`Phase`] tag in the high 16 bits and a per-phase index (run id, event id,
//! grid point) in the low 48 bits, so two different `(phase, index)` pairs
//! never share keystream. Results do not depend on how runs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Logical consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    HighLikely,
    Selection,
    Test,
    SelectionThinning,
    TestThinning,
    Partition,
    Validation,
    Construction,
    Simulation,
    Error,
}

impl Phase {
    pub const ALL: [Phase; 10] = [
        Phase::HighLikely,
        Phase::Selection,
        Phase::Test,
        Phase::SelectionThinning,
        Phase::TestThinning,
        Phase::Partition,
        Phase::Validation,
        Phase::Construction,
        Phase::Simulation,
        Phase::Error,
    ];

    pub fn tag(self) -> u16 {
        match self {
            Phase::HighLikely => 1,
            Phase::Selection => 2,
            Phase::Test => 3,
            Phase::SelectionThinning => 4,
            Phase::TestThinning => 5,
            Phase::Partition => 6,
            Phase::Validation => 7,
            Phase::Construction => 8,
            Phase::Simulation => 9,
            Phase::Error => 10,
        }
    }
}

const INDEX_BITS: u32 = 48;
const INDEX_MASK: u64 = (1 << INDEX_BITS) - 1;

/// A family of independent random streams for one phase, optionally nested
/// under a sub-key (e.g. an input id or a sweep grid index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunStream {
    seed: u64,
    phase: Phase,
    subkey: u64,
}

impl RunStream {
    pub fn new(seed: u64, phase: Phase) -> Self {
        Self {
            seed,
            phase,
            subkey: 0,
        }
    }

    /// Derives a child family. Sub-keys are mixed into the master seed so
    /// children of one phase stay on the same stream-id layout.
    pub fn child(self, key: u64) -> Self {
        Self {
            seed: self.seed,
            phase: self.phase,
            subkey: splitmix64(self.subkey ^ splitmix64(key.wrapping_add(0x51_7c_c1_b7))),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The 64-bit ChaCha stream id used for run `index`.
    pub fn stream_id(&self, index: u64) -> u64 {
        ((self.phase.tag() as u64) << INDEX_BITS) | (index & INDEX_MASK)
    }

    pub fn key(&self) -> u64 {
        if self.subkey == 0 {
            self.seed
        } else {
            splitmix64(self.seed ^ self.subkey)
        }
    }

    pub fn rng(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key());
        rng.set_stream(self.stream_id(index));
        rng
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
