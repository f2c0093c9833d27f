//! Ranking-supervision datasets: synthetic generation and CSV persistence.
//!
//! CSV layout, UTF-8 with a header row:
//!
//! ```text
//! group,rank,f0,f1,...,f{d-1}
//! ```
//!
//! `rank` is the 0-based ground-truth rank inside the group (0 = smallest).
//! Only ranks are stored, never the latent keys that produced them.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::objective::GroundTruthPermutation;

/// `n` feature vectors and their ground-truth order.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingGroup {
    pub items: Vec<Vec<f64>>,
    pub true_perm: GroundTruthPermutation,
}

impl RankingGroup {
    pub fn new(items: Vec<Vec<f64>>, true_perm: GroundTruthPermutation) -> Result<Self> {
        if items.len() != true_perm.n() {
            return Err(Error::ShapeMismatch {
                expected: true_perm.n(),
                found: items.len(),
            });
        }
        if let Some(d) = items.first().map(Vec::len) {
            if let Some(bad) = items.iter().find(|x| x.len() != d) {
                return Err(Error::ShapeMismatch {
                    expected: d,
                    found: bad.len(),
                });
            }
        }
        Ok(Self { items, true_perm })
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    groups: Vec<RankingGroup>,
}

impl Dataset {
    pub fn new(groups: Vec<RankingGroup>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidSize("dataset has no groups".into()))?;
        let n = first.n();
        let d = first.items.first().map_or(0, Vec::len);
        if n == 0 || d == 0 {
            return Err(Error::InvalidSize(
                "groups need at least one item and one feature".into(),
            ));
        }
        for g in &groups {
            if g.n() != n {
                return Err(Error::InvalidSize(format!(
                    "inconsistent group sizes {} and {}",
                    n,
                    g.n()
                )));
            }
            if let Some(bad) = g.items.iter().find(|x| x.len() != d) {
                return Err(Error::ShapeMismatch {
                    expected: d,
                    found: bad.len(),
                });
            }
        }
        Ok(Self { n, d, groups })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn groups(&self) -> &[RankingGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// All items in group-major order.
    pub fn items(&self) -> impl Iterator<Item = &[f64]> {
        self.groups
            .iter()
            .flat_map(|g| g.items.iter().map(Vec::as_slice))
    }

    /// Splits into the first `groups` groups and the rest.
    pub fn split_at(&self, groups: usize) -> Result<(Dataset, Dataset)> {
        if groups == 0 || groups >= self.groups.len() {
            return Err(Error::InvalidSize(format!(
                "split point {groups} must leave both halves non-empty ({} groups)",
                self.groups.len()
            )));
        }
        Ok((
            Dataset {
                groups: self.groups[..groups].to_vec(),
                ..*self
            },
            Dataset {
                groups: self.groups[groups..].to_vec(),
                ..*self
            },
        ))
    }

    /// Writes the dataset as CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["group".to_string(), "rank".to_string()];
        header.extend((0..self.d).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for (gi, g) in self.groups.iter().enumerate() {
            for (item, &rank) in g.items.iter().zip(g.true_perm.ranks()) {
                let mut row = vec![gi.to_string(), rank.to_string()];
                row.extend(item.iter().map(|v| format!("{v:?}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dataset from CSV. Groups are ordered by group id, and items
    /// keep their row order within a group.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "group" || &header[1] != "rank" {
            return Err(Error::Parse(
                "header must start with `group,rank,f0`".into(),
            ));
        }
        for (i, name) in header.iter().skip(2).enumerate() {
            if name != format!("f{i}") {
                return Err(Error::Parse(format!(
                    "expected column `f{i}`, found `{name}`"
                )));
            }
        }
        let d = header.len() - 2;
        let mut grouped: BTreeMap<u64, (Vec<usize>, Vec<Vec<f64>>)> = BTreeMap::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let row = line + 2;
            if record.len() != d + 2 {
                return Err(Error::Parse(format!(
                    "row {row}: expected {} fields, found {}",
                    d + 2,
                    record.len()
                )));
            }
            let group: u64 = record[0]
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}: bad group id `{}`", &record[0])))?;
            let rank: usize = record[1]
                .parse()
                .map_err(|_| Error::Parse(format!("row {row}: bad rank `{}`", &record[1])))?;
            let features = record
                .iter()
                .skip(2)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("row {row}: bad feature `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let entry = grouped.entry(group).or_default();
            entry.0.push(rank);
            entry.1.push(features);
        }
        let groups = grouped
            .into_iter()
            .map(|(id, (ranks, items))| {
                let perm = GroundTruthPermutation::from_ranks(ranks)
                    .map_err(|e| Error::InvalidPermutation(format!("group {id}: {e}")))?;
                RankingGroup::new(items, perm)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Parameters of the synthetic linear ranking task.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub d: usize,
    pub n: usize,
    pub groups: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Latent weights; sampled from a standard normal when absent.
    pub weights: Option<Vec<f64>>,
}

impl SynthSpec {
    pub fn new(d: usize, n: usize, groups: usize, noise_std: f64, seed: u64) -> Self {
        Self {
            d,
            n,
            groups,
            noise_std,
            seed,
            weights: None,
        }
    }
}

/// Generated dataset plus the evaluation-only latent keys.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: Dataset,
    /// Latent key of every item, group-major, aligned with [`Dataset::items`].
    pub keys: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SynthData {
    /// Splits into train and held-out parts at a group boundary.
    pub fn split_at(&self, groups: usize) -> Result<(SynthData, SynthData)> {
        let (a, b) = self.dataset.split_at(groups)?;
        let cut = groups * self.dataset.n();
        Ok((
            SynthData {
                dataset: a,
                keys: self.keys[..cut].to_vec(),
                weights: self.weights.clone(),
            },
            SynthData {
                dataset: b,
                keys: self.keys[cut..].to_vec(),
                weights: self.weights.clone(),
            },
        ))
    }
}

/// Samples the synthetic task: standard-normal features, key `w . x + noise`,
/// consecutive items grouped into sets of `n` and ranked by key.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    if spec.d == 0 || spec.n < 2 || spec.groups == 0 {
        return Err(Error::InvalidSize(format!(
            "need d >= 1, n >= 2 and at least one group (d = {}, n = {}, groups = {})",
            spec.d, spec.n, spec.groups
        )));
    }
    if !(spec.noise_std >= 0.0) || !spec.noise_std.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise_std must be finite and >= 0, got {}",
            spec.noise_std
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights = match &spec.weights {
        Some(w) if w.len() != spec.d => {
            return Err(Error::ShapeMismatch {
                expected: spec.d,
                found: w.len(),
            })
        }
        Some(w) => w.clone(),
        None => (0..spec.d).map(|_| rng.sample(StandardNormal)).collect(),
    };
    let noise =
        Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut groups = Vec::with_capacity(spec.groups);
    let mut keys = Vec::with_capacity(spec.groups * spec.n);
    for _ in 0..spec.groups {
        let items: Vec<Vec<f64>> = (0..spec.n)
            .map(|_| (0..spec.d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let group_keys: Vec<f64> = items
            .iter()
            .map(|x| {
                let signal: f64 = x.iter().zip(&weights).map(|(a, b)| a * b).sum();
                signal + noise.sample(&mut rng)
            })
            .collect();
        groups.push(RankingGroup::new(
            items,
            GroundTruthPermutation::from_keys(&group_keys),
        )?);
        keys.extend(group_keys);
    }
    Ok(SynthData {
        dataset: Dataset::new(groups)?,
        keys,
        weights,
    })
}
