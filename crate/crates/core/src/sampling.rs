//! Seeded sampling over axis-aligned boxes.
//!
//! Every randomized operation takes an explicit 64-bit seed and draws from a
//! SplitMix64 stream, so runs are bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn seeded_rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Interval { lo, hi }
    }
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Axis-aligned box `∏ [lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchBox(Vec<Interval>);

impl SearchBox {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidInput("box needs at least one axis".into()));
        }
        for iv in &intervals {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo < iv.hi) {
                return Err(Error::InvalidInput(format!(
                    "degenerate box axis [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(SearchBox(intervals))
    }

    /// The cube `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Interval { lo, hi }; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn axes(&self) -> &[Interval] {
        &self.0
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.0.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.0
            .iter()
            .map(|iv| iv.lo + iv.width() * rng.random::<f64>())
            .collect()
    }
}

impl std::str::FromStr for SearchBox {
    type Err = Error;

    /// Parses `lo:hi[,lo:hi...]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("box must look like lo:hi[,lo:hi...], got `{s}`"));
        let intervals = s
            .split(',')
            .map(|axis| {
                let (lo, hi) = axis.split_once(':').ok_or_else(bad)?;
                let lo = lo.trim().parse::<f64>().map_err(|_| bad())?;
                let hi = hi.trim().parse::<f64>().map_err(|_| bad())?;
                Ok(Interval { lo, hi })
            })
            .collect::<Result<Vec<_>>>()?;
        SearchBox::new(intervals)
    }
}
