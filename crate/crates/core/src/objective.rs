//! Losses over soft permutations and discrete ranking metrics.
//!
//! Ranks are ascending: rank 0 is the smallest element and rank `n - 1` the
//! largest, so "top-k" refers to the last `k` rows of a permutation matrix.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::scalar::Scalar;
use crate::softsort::{hard_ranks, SoftPermutation};

/// Hard permutation matrix `Q[rank][element]`, stored as the rank of each element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthPermutation {
    ranks: Vec<usize>,
}

impl GroundTruthPermutation {
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r >= n || std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidPermutation(format!(
                    "{ranks:?} is not a permutation of 0..{n}"
                )));
            }
        }
        Ok(Self { ranks })
    }

    /// Ground truth ordering of `keys` (stable on ties).
    pub fn from_keys<T: PartialOrd>(keys: &[T]) -> Self {
        Self {
            ranks: hard_ranks(keys),
        }
    }

    pub fn from_matrix<T: Scalar>(m: &SquareMatrix<T>) -> Result<Self> {
        let n = m.n();
        let mut ranks = vec![usize::MAX; n];
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v == T::one() {
                    if ranks[c] != usize::MAX {
                        return Err(Error::InvalidPermutation(format!(
                            "column {c} has several ones"
                        )));
                    }
                    ranks[c] = r;
                } else if v != T::zero() {
                    return Err(Error::InvalidPermutation(format!(
                        "entry ({r},{c}) is not 0 or 1"
                    )));
                }
            }
        }
        if ranks.contains(&usize::MAX) {
            return Err(Error::InvalidPermutation("a column has no one".into()));
        }
        Self::from_ranks(ranks)
    }

    pub fn n(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Element holding rank `r`.
    pub fn element_at(&self, r: usize) -> usize {
        self.ranks
            .iter()
            .position(|&x| x == r)
            .expect("rank in range")
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.ranks[c] == r
    }

    pub fn to_matrix<T: Scalar>(&self) -> SquareMatrix<T> {
        let n = self.n();
        let mut m = SquareMatrix::zeros(n);
        for (c, &r) in self.ranks.iter().enumerate() {
            m[(r, c)] = T::one();
        }
        m
    }
}

/// Flavor of cross-entropy used by [`ranking_loss`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossEntropy {
    /// Element-wise binary cross-entropy; column-wise and row-wise grouping agree.
    #[default]
    Binary,
    /// Categorical cross-entropy per column (ablation only).
    Categorical,
}

/// Column-wise ranking loss with element-wise binary cross-entropy:
/// `(1/n) * sum_{r,c} -[q ln p + (1-q) ln(1-p)]`, probabilities clamped to
/// `[floor, 1 - floor]` where the gradient is zero.
pub fn ranking_ce_loss<T: Scalar>(
    p: &SoftPermutation<T>,
    q: &GroundTruthPermutation,
) -> Result<(T, SquareMatrix<T>)> {
    ranking_loss(p, q, CrossEntropy::Binary)
}

pub fn ranking_loss<T: Scalar>(
    p: &SoftPermutation<T>,
    q: &GroundTruthPermutation,
    kind: CrossEntropy,
) -> Result<(T, SquareMatrix<T>)> {
    let n = p.n();
    if q.n() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: q.n(),
        });
    }
    let floor = T::PROB_FLOOR;
    let ceil = T::one() - floor;
    let scale = T::one() / T::lit(n as f64);
    let mut grad = SquareMatrix::zeros(n);
    let mut loss = T::zero();
    for r in 0..n {
        for c in 0..n {
            let raw = p[(r, c)];
            let clamped = raw.max(floor).min(ceil);
            let active = raw >= floor && raw <= ceil;
            let (term, d) = match (q.get(r, c), kind) {
                (true, _) => (-clamped.ln(), -T::one() / clamped),
                (false, CrossEntropy::Binary) => {
                    (-(T::one() - clamped).ln(), T::one() / (T::one() - clamped))
                }
                (false, CrossEntropy::Categorical) => (T::zero(), T::zero()),
            };
            loss = loss + term;
            grad[(r, c)] = if active { d * scale } else { T::zero() };
        }
    }
    Ok((loss * scale, grad))
}

/// Soft probability that each element lands among the `k` largest.
pub fn top_k_probs<T: Scalar>(p: &SoftPermutation<T>, k: usize) -> Result<Vec<T>> {
    let n = p.n();
    if k == 0 || k > n {
        return Err(Error::InvalidSize(format!("k = {k} must lie in 1..={n}")));
    }
    let mut v = vec![T::zero(); n];
    for r in n - k..n {
        for (acc, &x) in v.iter_mut().zip(p.row(r)) {
            *acc = *acc + x;
        }
    }
    Ok(v)
}

/// `-ln(top_k_probs(P, k)[true_element])`, clamped below at the probability floor.
pub fn top_k_loss<T: Scalar>(
    p: &SoftPermutation<T>,
    true_element: usize,
    k: usize,
) -> Result<(T, SquareMatrix<T>)> {
    let n = p.n();
    if true_element >= n {
        return Err(Error::InvalidSize(format!(
            "element {true_element} out of range for n = {n}"
        )));
    }
    let prob = top_k_probs(p, k)?[true_element];
    let floor = T::PROB_FLOOR;
    let clamped = prob.max(floor).min(T::one());
    let mut grad = SquareMatrix::zeros(n);
    if prob >= floor && prob <= T::one() {
        let d = -T::one() / clamped;
        for r in n - k..n {
            grad[(r, true_element)] = d;
        }
    }
    Ok((-clamped.ln(), grad))
}

/// 1 when the rank vectors are identical.
pub fn exact_match(pred: &[usize], truth: &[usize]) -> Result<bool> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    Ok(pred == truth)
}

/// Fraction of positions whose rank is correct.
pub fn elementwise_fraction(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Ok(1.0);
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Exact-match rate over seeded disjoint groups of `k` items. Leftover items
/// that do not fill a group are dropped.
pub fn em_k_eval<T: Scalar>(scores: &[T], true_keys: &[T], k: usize, seed: u64) -> Result<f64> {
    if scores.len() != true_keys.len() {
        return Err(Error::ShapeMismatch {
            expected: true_keys.len(),
            found: scores.len(),
        });
    }
    if k == 0 || scores.len() < k {
        return Err(Error::InvalidSize(format!(
            "need at least k = {k} items, got {}",
            scores.len()
        )));
    }
    let (hits, groups) = em_k_counts(scores, true_keys, k, seed);
    Ok(hits as f64 / groups as f64)
}

/// `(exact matches, groups)` for [`em_k_eval`]; `groups` may be zero.
pub(crate) fn em_k_counts<T: Scalar>(
    scores: &[T],
    true_keys: &[T],
    k: usize,
    seed: u64,
) -> (usize, usize) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut hits = 0;
    let mut groups = 0;
    for chunk in order.chunks_exact(k) {
        let s: Vec<T> = chunk.iter().map(|&i| scores[i]).collect();
        let t: Vec<T> = chunk.iter().map(|&i| true_keys[i]).collect();
        groups += 1;
        if hard_ranks(&s) == hard_ranks(&t) {
            hits += 1;
        }
    }
    (hits, groups)
}

/// Aggregate evaluation metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub em: f64,
    pub ew: f64,
    pub em_k: f64,
    pub k: usize,
    pub count: usize,
}
