//! Comparator wirings for odd-even transposition and bitonic sorting networks.
//!
//! A schedule is a sequence of layers; each layer holds lane-disjoint
//! comparators that can execute in parallel. Direction is positional: after a
//! comparator fires, the smaller value sits at `min_pos` and the larger at
//! `max_pos`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest lane count accepted by [`ComparatorSchedule::validate_discrete`].
pub const EXHAUSTIVE_MAX_N: usize = 20;

/// One compare-and-swap between two lanes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Comparator {
    pub min_pos: usize,
    pub max_pos: usize,
}

impl Comparator {
    pub const fn new(min_pos: usize, max_pos: usize) -> Self {
        Self { min_pos, max_pos }
    }

    /// True when the smaller value ends up at the lower lane index.
    pub fn is_ascending(&self) -> bool {
        self.min_pos < self.max_pos
    }
}

impl From<[usize; 2]> for Comparator {
    fn from([min_pos, max_pos]: [usize; 2]) -> Self {
        Self { min_pos, max_pos }
    }
}

impl From<Comparator> for [usize; 2] {
    fn from(c: Comparator) -> Self {
        [c.min_pos, c.max_pos]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetworkKind {
    #[serde(rename = "odd-even")]
    OddEven,
    #[serde(rename = "bitonic")]
    Bitonic,
}

impl NetworkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetworkKind::OddEven => "odd-even",
            NetworkKind::Bitonic => "bitonic",
        }
    }

    /// Number of layers the generated network has for `n` lanes.
    pub fn layer_count(&self, n: usize) -> Result<usize> {
        match self {
            NetworkKind::OddEven => {
                if n == 0 {
                    return Err(Error::InvalidSize("lane count must be positive".into()));
                }
                Ok(n)
            }
            NetworkKind::Bitonic => {
                let k = log2_exact(n)?;
                Ok(k * (k + 1) / 2)
            }
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "odd-even" | "oddeven" | "odd_even" => Ok(NetworkKind::OddEven),
            "bitonic" => Ok(NetworkKind::Bitonic),
            other => Err(Error::Parse(format!("unknown network kind `{other}`"))),
        }
    }
}

fn log2_exact(n: usize) -> Result<usize> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(n.trailing_zeros() as usize)
}

/// Fixed wiring of a sorting network. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct ComparatorSchedule {
    n: usize,
    kind: NetworkKind,
    layers: Vec<Vec<Comparator>>,
}

#[derive(Deserialize)]
struct RawSchedule {
    n: usize,
    kind: NetworkKind,
    layers: Vec<Vec<Comparator>>,
}

impl TryFrom<RawSchedule> for ComparatorSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        ComparatorSchedule::from_layers(raw.n, raw.kind, raw.layers)
    }
}

impl ComparatorSchedule {
    /// Builds a schedule from explicit layers, checking that every comparator
    /// is in range and non-degenerate and that each layer is lane-disjoint.
    ///
    /// The layer count is not tied to `kind` here, so truncated or hand-made
    /// networks can be represented (and then shown to fail validation).
    pub fn from_layers(n: usize, kind: NetworkKind, layers: Vec<Vec<Comparator>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("lane count must be positive".into()));
        }
        let mut seen = vec![usize::MAX; n];
        for (l, layer) in layers.iter().enumerate() {
            for c in layer {
                for lane in [c.min_pos, c.max_pos] {
                    if lane >= n {
                        return Err(Error::LaneOutOfRange { lane, n });
                    }
                }
                if c.min_pos == c.max_pos {
                    return Err(Error::DegenerateComparator {
                        lane: c.min_pos,
                        layer: l,
                    });
                }
                for lane in [c.min_pos, c.max_pos] {
                    if seen[lane] == l {
                        return Err(Error::DuplicateLane { lane, layer: l });
                    }
                    seen[lane] = l;
                }
            }
        }
        Ok(Self { n, kind, layers })
    }

    /// Odd-even transposition network: `n` layers alternating between
    /// even-offset pairs `(0,1), (2,3), ...` and odd-offset pairs `(1,2), (3,4), ...`.
    ///
    /// The first layer uses even offsets. For `n = 1` there is a single empty
    /// layer, and for `n = 2` every second layer is empty.
    pub fn odd_even(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("lane count must be positive".into()));
        }
        let layers = (0..n)
            .map(|t| {
                (t % 2..n.saturating_sub(1))
                    .step_by(2)
                    .map(|i| Comparator::new(i, i + 1))
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            kind: NetworkKind::OddEven,
            layers,
        })
    }

    /// Bitonic sorting network for `n = 2^k` lanes with `k(k+1)/2` layers.
    pub fn bitonic(n: usize) -> Result<Self> {
        log2_exact(n)?;
        let mut layers = Vec::new();
        let mut block = 2;
        while block <= n {
            let mut stride = block / 2;
            while stride >= 1 {
                let layer = (0..n)
                    .filter(|&i| i & stride == 0 && (i ^ stride) < n)
                    .map(|i| {
                        let partner = i ^ stride;
                        if i & block == 0 {
                            Comparator::new(i, partner)
                        } else {
                            Comparator::new(partner, i)
                        }
                    })
                    .collect();
                layers.push(layer);
                stride /= 2;
            }
            block *= 2;
        }
        Ok(Self {
            n,
            kind: NetworkKind::Bitonic,
            layers,
        })
    }

    pub fn new(kind: NetworkKind, n: usize) -> Result<Self> {
        match kind {
            NetworkKind::OddEven => Self::odd_even(n),
            NetworkKind::Bitonic => Self::bitonic(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn layers(&self) -> &[Vec<Comparator>] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn comparator_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Copy of this schedule keeping only the first `layers` layers.
    pub fn truncated(&self, layers: usize) -> Self {
        Self {
            n: self.n,
            kind: self.kind,
            layers: self.layers[..layers.min(self.layers.len())].to_vec(),
        }
    }

    /// Runs the network with exact min/max on `values` in place.
    pub fn apply_hard<T: PartialOrd>(&self, values: &mut [T]) -> Result<()> {
        if values.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                found: values.len(),
            });
        }
        for layer in &self.layers {
            for c in layer {
                if values[c.max_pos] < values[c.min_pos] {
                    values.swap(c.min_pos, c.max_pos);
                }
            }
        }
        Ok(())
    }

    /// Checks via the 0-1 principle that the network sorts every input:
    /// all `2^n` binary sequences are run through the comparators.
    pub fn validate_discrete(&self) -> Result<bool> {
        if self.n > EXHAUSTIVE_MAX_N {
            return Err(Error::ExhaustiveBound {
                n: self.n,
                max: EXHAUSTIVE_MAX_N,
            });
        }
        let n = self.n;
        for input in 0u32..(1u32 << n) {
            let mut word = input;
            for layer in &self.layers {
                for c in layer {
                    let lo = (word >> c.min_pos) & 1;
                    let hi = (word >> c.max_pos) & 1;
                    // min lands on min_pos, max on max_pos
                    word &= !((1 << c.min_pos) | (1 << c.max_pos));
                    word |= ((lo & hi) << c.min_pos) | ((lo | hi) << c.max_pos);
                }
            }
            // Sorted non-descending binary word: all zeros in low lanes, then ones.
            let ones = word.count_ones();
            let expected = if ones == 0 {
                0
            } else {
                ((1u32 << ones) - 1) << (n as u32 - ones)
            };
            if word != expected {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serialization cannot fail")
    }

    /// Parses the `.schedule.json` text format. Besides structural checks,
    /// the layer count must match the network kind's formula.
    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: Self = serde_json::from_str(text)?;
        let expected = schedule.kind.layer_count(schedule.n)?;
        if schedule.layer_count() != expected {
            return Err(Error::InvalidConfig(format!(
                "{} network on {} lanes needs {} layers, found {}",
                schedule.kind,
                schedule.n,
                expected,
                schedule.layer_count()
            )));
        }
        Ok(schedule)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
