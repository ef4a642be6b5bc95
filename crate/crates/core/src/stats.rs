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

//! Exact statistical kernels for the privacy test.
//!
//! The null hypothesis `p1 <= e^eps * p2` is reduced to an equality test by
//! thinning `c1` with retention probability `e^-eps`: if `c1 ~ B(n, p1)` then
//! the thinned count is `B(n, p1 e^-eps)`. The one-sided Fisher exact test on
//! the thinned 2x2 table then yields an exact p-value.

use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, Error, Result};

/// Event occurrence counts under the two inputs, `n` runs each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPair {
    pub c1: u64,
    pub c2: u64,
    pub n: u64,
}

impl CountPair {
    pub fn new(c1: u64, c2: u64, n: u64) -> Result<Self> {
        if n == 0 || c1 > n || c2 > n {
            return Err(Error::Domain {
                name: "counts",
                value: c1.max(c2) as f64,
                expected: "0 <= c1, c2 <= n with n >= 1",
            });
        }
        Ok(Self { c1, c2, n })
    }

    pub fn swapped(self) -> Self {
        Self {
            c1: self.c2,
            c2: self.c1,
            n: self.n,
        }
    }
}

/// `p_upper` tests `p1 <= e^eps p2`; `p_lower` tests `p2 <= e^eps p1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValuePair {
    pub p_upper: f64,
    pub p_lower: f64,
}

impl PValuePair {
    pub fn min(&self) -> f64 {
        self.p_upper.min(self.p_lower)
    }
}

/// Counts how many of the first `c` uniforms fall below `e^-epsilon`.
///
/// # Panics
///
/// Panics if `uniforms` yields fewer than `c` values.
pub fn binomial_thin<I>(c: u64, epsilon: f64, uniforms: I) -> u64
where
    I: IntoIterator<Item = f64>,
{
    let keep = (-epsilon).exp();
    let mut it = uniforms.into_iter();
    let mut kept = 0;
    for _ in 0..c {
        let u = it.next().expect("uniform stream shorter than count");
        if u < keep {
            kept += 1;
        }
    }
    kept
}

/// [`binomial_thin`] drawing its `c` uniforms from `rng`.
pub fn binomial_thin_rng<R: Rng + ?Sized>(c: u64, epsilon: f64, rng: &mut R) -> u64 {
    binomial_thin(c, epsilon, std::iter::repeat_with(|| rng.gen::<f64>()))
}

/// Table of `ln(k!)`, grown on demand. Entries are compensated running sums
/// of `ln(i)`, which keeps them within a few ulps of the exact value.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
    sum: f64,
    compensation: f64,
}

impl Default for LnFactorial {
    fn default() -> Self {
        Self::new()
    }
}

impl LnFactorial {
    pub fn new() -> Self {
        Self {
            table: vec![0.0, 0.0],
            sum: 0.0,
            compensation: 0.0,
        }
    }

    pub fn ensure(&mut self, n: u64) {
        let n = n as usize;
        while self.table.len() <= n {
            // Neumaier summation
            let term = (self.table.len() as f64).ln();
            let t = self.sum + term;
            if self.sum.abs() >= term.abs() {
                self.compensation += (self.sum - t) + term;
            } else {
                self.compensation += (term - t) + self.sum;
            }
            self.sum = t;
            self.table.push(self.sum + self.compensation);
        }
    }

    pub fn get(&self, n: u64) -> f64 {
        self.table[n as usize]
    }

    fn ln_choose(&self, n: u64, k: u64) -> f64 {
        self.get(n) - self.get(k) - self.get(n - k)
    }
}

thread_local! {
    static LN_FACTORIAL: RefCell<LnFactorial> = RefCell::new(LnFactorial::new());
}

/// Hypergeometric law: `draws` items taken without replacement from
/// `population` items of which `successes` are marked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hypergeometric {
    population: u64,
    draws: u64,
    successes: u64,
}

impl Hypergeometric {
    pub fn new(population: u64, draws: u64, successes: u64) -> Result<Self> {
        if draws > population || successes > population {
            return Err(Error::Domain {
                name: "hypergeometric",
                value: draws.max(successes) as f64,
                expected: "draws <= population and successes <= population",
            });
        }
        Ok(Self {
            population,
            draws,
            successes,
        })
    }

    pub fn support(&self) -> (u64, u64) {
        let lo = (self.draws + self.successes).saturating_sub(self.population);
        let hi = self.draws.min(self.successes);
        (lo, hi)
    }

    pub fn mode(&self) -> u64 {
        let m = ((self.draws + 1) as u128 * (self.successes + 1) as u128
            / (self.population + 2) as u128) as u64;
        let (lo, hi) = self.support();
        m.clamp(lo, hi)
    }

    fn ln_pmf(&self, table: &LnFactorial, x: u64) -> f64 {
        table.ln_choose(self.successes, x)
            + table.ln_choose(self.population - self.successes, self.draws - x)
            - table.ln_choose(self.population, self.draws)
    }

    pub fn pmf(&self, x: u64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        LN_FACTORIAL.with(|t| {
            let mut t = t.borrow_mut();
            t.ensure(self.population);
            self.ln_pmf(&t, x).exp()
        })
    }

    /// `P(X > k)`.
    pub fn sf(&self, k: i64) -> f64 {
        let (lo, hi) = self.support();
        if k < lo as i64 {
            return 1.0;
        }
        if k >= hi as i64 {
            return 0.0;
        }
        let k = k as u64;
        LN_FACTORIAL.with(|t| {
            let mut t = t.borrow_mut();
            t.ensure(self.population);
            if k + 1 >= self.mode() {
                // Upper tail is decreasing from k + 1 onwards.
                tail_sum((k + 1..=hi).map(|x| self.ln_pmf(&t, x).exp()))
            } else {
                // Lower tail is decreasing from k downwards.
                let lower = tail_sum((lo..=k).rev().map(|x| self.ln_pmf(&t, x).exp()));
                (1.0 - lower).clamp(0.0, 1.0)
            }
        })
    }
}

/// Sums a monotonically decreasing sequence, stopping once terms no longer
/// change the total.
fn tail_sum<I: Iterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0;
    for term in terms {
        if term < sum * 1e-18 {
            break;
        }
        sum += term;
    }
    sum.min(1.0)
}

/// `P(X > k)` for `X ~ Hypergeometric(population, successes, draws)`.
pub fn hypergeom_sf(k: i64, population: u64, draws: u64, successes: u64) -> Result<f64> {
    Ok(Hypergeometric::new(population, draws, successes)?.sf(k))
}

/// One-sided Fisher p-value for "the thinned first proportion does not exceed
/// the second": `P(X >= c1_thinned)` with `X ~ Hyp(2n, c1_thinned + c2, n)`.
pub fn fisher_upper(c1_thinned: u64, c2: u64, n: u64) -> f64 {
    let s = c1_thinned + c2;
    if s == 0 {
        return 1.0;
    }
    Hypergeometric::new(2 * n, n, s)
        .expect("counts bounded by n")
        .sf(c1_thinned as i64 - 1)
}

/// Both one-sided p-values for `counts` at privacy level `epsilon`, using one
/// thinning draw per count from `rng` (`c1` first, then `c2`).
pub fn pvalue<R: Rng + ?Sized>(counts: CountPair, epsilon: f64, rng: &mut R) -> Result<PValuePair> {
    check_nonnegative("epsilon", epsilon)?;
    let c1_thinned = binomial_thin_rng(counts.c1, epsilon, rng);
    let p_upper = fisher_upper(c1_thinned, counts.c2, counts.n);
    let c2_thinned = binomial_thin_rng(counts.c2, epsilon, rng);
    let p_lower = fisher_upper(c2_thinned, counts.c1, counts.n);
    Ok(PValuePair { p_upper, p_lower })
}

/// Mean of [`pvalue`] over `replicates` independent thinning draws.
pub fn pvalue_averaged<R: Rng + ?Sized>(
    counts: CountPair,
    epsilon: f64,
    replicates: usize,
    rng: &mut R,
) -> Result<PValuePair> {
    if replicates == 0 {
        return Err(Error::Domain {
            name: "thinning_replicates",
            value: 0.0,
            expected: "a positive integer",
        });
    }
    let mut acc = PValuePair {
        p_upper: 0.0,
        p_lower: 0.0,
    };
    for _ in 0..replicates {
        let p = pvalue(counts, epsilon, rng)?;
        acc.p_upper += p.p_upper;
        acc.p_lower += p.p_lower;
    }
    acc.p_upper /= replicates as f64;
    acc.p_lower /= replicates as f64;
    Ok(acc)
}
