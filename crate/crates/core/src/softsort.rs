//! Relaxed execution of a sorting network.
//!
//! [`forward`] runs the layers in order, producing the softly sorted values
//! and the composed soft permutation `P = P_L ... P_1`. Rows of `P` are ranks
//! (ascending, row 0 = smallest) and columns are input elements, so
//! `sorted = P * input`.
//!
//! [`backward`] is the matching reverse pass. The value path is a plain
//! layer-reversed adjoint sweep over the trace. The permutation path needs,
//! at every layer `l`, the running product of the layers before it; those are
//! recomputed from `sqrt(L)` checkpoints instead of being stored.

use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::objective::{ranking_ce_loss, GroundTruthPermutation};
use crate::relax::{soft_swap, Mix, RelaxConfig};
use crate::scalar::Scalar;
use crate::schedule::{Comparator, ComparatorSchedule};

/// Doubly-stochastic matrix; column `c` is a distribution over the ranks of
/// input element `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftPermutation<T>(SquareMatrix<T>);

impl<T: Scalar> SoftPermutation<T> {
    pub fn identity(n: usize) -> Self {
        Self(SquareMatrix::identity(n))
    }

    /// Wraps a matrix without checking stochasticity.
    pub fn from_matrix(m: SquareMatrix<T>) -> Self {
        Self(m)
    }

    /// Hard permutation matrix with `P[ranks[c]][c] = 1`.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let q = GroundTruthPermutation::from_ranks(ranks.to_vec())?;
        Ok(Self(q.to_matrix()))
    }

    /// Uniform matrix with every entry `1/n`.
    pub fn uniform(n: usize) -> Self {
        Self(SquareMatrix::filled(n, T::one() / T::lit(n as f64)))
    }

    pub fn matrix(&self) -> &SquareMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> SquareMatrix<T> {
        self.0
    }

    pub fn is_doubly_stochastic(&self, tol: T) -> bool {
        let in_range = self
            .0
            .as_slice()
            .iter()
            .all(|&p| p >= -tol && p <= T::one() + tol);
        let ok = |sums: Vec<T>| sums.iter().all(|&s| (s - T::one()).abs() <= tol);
        in_range && ok(self.0.row_sums()) && ok(self.0.column_sums())
    }
}

impl<T> Deref for SoftPermutation<T> {
    type Target = SquareMatrix<T>;

    fn deref(&self) -> &SquareMatrix<T> {
        &self.0
    }
}

/// Sparse form of one layer's matrix: identity except for a symmetric 2x2
/// block `[[alpha, 1-alpha], [1-alpha, alpha]]` on each comparator's lanes.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMatrix<T> {
    n: usize,
    blocks: Vec<(Comparator, Mix<T>)>,
}

impl<T: Scalar> LayerMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[(Comparator, Mix<T>)] {
        &self.blocks
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        for &(cmp, mix) in &self.blocks {
            let (i, j) = (cmp.min_pos, cmp.max_pos);
            if (r == i || r == j) && (c == i || c == j) {
                return if r == c { mix.alpha } else { mix.complement };
            }
        }
        if r == c {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn to_dense(&self) -> SquareMatrix<T> {
        let mut m = SquareMatrix::identity(self.n);
        for &(cmp, mix) in &self.blocks {
            let (i, j) = (cmp.min_pos, cmp.max_pos);
            m[(i, i)] = mix.alpha;
            m[(j, j)] = mix.alpha;
            m[(i, j)] = mix.complement;
            m[(j, i)] = mix.complement;
        }
        m
    }
}

/// Cached quantities of one comparator application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparatorRecord<T> {
    pub comparator: Comparator,
    pub mix: Mix<T>,
    /// `a_j - a_i` at the layer input.
    pub diff: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRecord<T> {
    pub inputs: Vec<T>,
    pub comparators: Vec<ComparatorRecord<T>>,
}

/// Reverse-mode cache of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<'s, T> {
    schedule: &'s ComparatorSchedule,
    cfg: RelaxConfig<T>,
    layers: Vec<LayerRecord<T>>,
    output: Vec<T>,
}

impl<'s, T: Scalar> ForwardTrace<'s, T> {
    pub fn schedule(&self) -> &'s ComparatorSchedule {
        self.schedule
    }

    pub fn config(&self) -> &RelaxConfig<T> {
        &self.cfg
    }

    pub fn layers(&self) -> &[LayerRecord<T>] {
        &self.layers
    }

    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    pub fn output(&self) -> &[T] {
        &self.output
    }

    /// Re-runs the forward pass from the recorded input.
    pub fn replay(&self) -> Result<Vec<T>> {
        let input = self.layers.first().map_or(&self.output, |l| &l.inputs);
        Ok(forward_values(input, self.schedule, &self.cfg)?.0)
    }

    /// Checks that layer count and comparators match the schedule.
    pub fn check_consistency(&self) -> Result<()> {
        if self.layers.len() != self.schedule.layer_count() {
            return Err(Error::ShapeMismatch {
                expected: self.schedule.layer_count(),
                found: self.layers.len(),
            });
        }
        for (rec, layer) in self.layers.iter().zip(self.schedule.layers()) {
            let same = rec.comparators.len() == layer.len()
                && rec
                    .comparators
                    .iter()
                    .zip(layer)
                    .all(|(r, c)| r.comparator == *c);
            if !same || rec.inputs.len() != self.n() {
                return Err(Error::InvalidConfig(
                    "trace does not match its schedule".into(),
                ));
            }
        }
        Ok(())
    }

    /// Running products `R_t = P_t ... P_1` for `t` in `start..end`, starting
    /// from `R_start`.
    fn products_from(
        &self,
        start: usize,
        end: usize,
        mut current: SquareMatrix<T>,
    ) -> Vec<SquareMatrix<T>> {
        let mut out = Vec::with_capacity(end - start);
        for t in start..end {
            if t > start {
                self.left_multiply(t - 1, &mut current);
            }
            out.push(current.clone());
        }
        out
    }

    fn left_multiply(&self, layer: usize, m: &mut SquareMatrix<T>) {
        for rec in &self.layers[layer].comparators {
            m.mix_rows(
                rec.comparator.min_pos,
                rec.comparator.max_pos,
                rec.mix.alpha,
                rec.mix.complement,
            );
        }
    }
}

/// Result of a forward pass with the permutation matrix.
#[derive(Clone, Debug)]
pub struct SortOutput<'s, T> {
    pub sorted: Vec<T>,
    pub perm: SoftPermutation<T>,
    pub trace: ForwardTrace<'s, T>,
}

fn comparator_record<T: Scalar>(
    c: Comparator,
    values: &[T],
    cfg: &RelaxConfig<T>,
) -> (ComparatorRecord<T>, T, T) {
    let (a_i, a_j) = (values[c.min_pos], values[c.max_pos]);
    let diff = a_j - a_i;
    let mix = Mix::at(diff, cfg);
    let (lo, hi) = soft_swap(a_i, a_j, cfg);
    (
        ComparatorRecord {
            comparator: c,
            mix,
            diff,
        },
        lo,
        hi,
    )
}

fn check_lanes(layer: &[Comparator], n: usize) -> Result<()> {
    for c in layer {
        for lane in [c.min_pos, c.max_pos] {
            if lane >= n {
                return Err(Error::LaneOutOfRange { lane, n });
            }
        }
    }
    Ok(())
}

/// Applies one layer of relaxed comparators.
pub fn apply_layer<T: Scalar>(
    values: &[T],
    layer: &[Comparator],
    cfg: &RelaxConfig<T>,
) -> Result<(Vec<T>, LayerMatrix<T>)> {
    check_lanes(layer, values.len())?;
    let mut out = values.to_vec();
    let mut blocks = Vec::with_capacity(layer.len());
    for &c in layer {
        let (rec, lo, hi) = comparator_record(c, values, cfg);
        out[c.min_pos] = lo;
        out[c.max_pos] = hi;
        blocks.push((c, rec.mix));
    }
    Ok((
        out,
        LayerMatrix {
            n: values.len(),
            blocks,
        },
    ))
}

fn run_layers<'s, T: Scalar>(
    values: &[T],
    schedule: &'s ComparatorSchedule,
    cfg: &RelaxConfig<T>,
    mut perm: Option<&mut SquareMatrix<T>>,
) -> Result<ForwardTrace<'s, T>> {
    cfg.validate()?;
    if values.len() != schedule.n() {
        return Err(Error::ShapeMismatch {
            expected: schedule.n(),
            found: values.len(),
        });
    }
    let mut current = values.to_vec();
    let mut layers = Vec::with_capacity(schedule.layer_count());
    for layer in schedule.layers() {
        let inputs = current.clone();
        let mut comparators = Vec::with_capacity(layer.len());
        for &c in layer {
            let (rec, lo, hi) = comparator_record(c, &inputs, cfg);
            current[c.min_pos] = lo;
            current[c.max_pos] = hi;
            if let Some(p) = perm.as_deref_mut() {
                p.mix_rows(c.min_pos, c.max_pos, rec.mix.alpha, rec.mix.complement);
            }
            comparators.push(rec);
        }
        layers.push(LayerRecord {
            inputs,
            comparators,
        });
    }
    Ok(ForwardTrace {
        schedule,
        cfg: *cfg,
        layers,
        output: current,
    })
}

/// Relaxed sort of `values`, also accumulating the soft permutation matrix.
pub fn forward<'s, T: Scalar>(
    values: &[T],
    schedule: &'s ComparatorSchedule,
    cfg: &RelaxConfig<T>,
) -> Result<SortOutput<'s, T>> {
    let mut perm = SquareMatrix::identity(schedule.n());
    let trace = run_layers(values, schedule, cfg, Some(&mut perm))?;
    Ok(SortOutput {
        sorted: trace.output.clone(),
        perm: SoftPermutation(perm),
        trace,
    })
}

/// Relaxed sort without the permutation matrix: `O(n L)` instead of `O(n^2 L)`.
pub fn forward_values<'s, T: Scalar>(
    values: &[T],
    schedule: &'s ComparatorSchedule,
    cfg: &RelaxConfig<T>,
) -> Result<(Vec<T>, ForwardTrace<'s, T>)> {
    let trace = run_layers(values, schedule, cfg, None)?;
    Ok((trace.output.clone(), trace))
}

/// Gradient of a scalar objective with respect to the input values, given
/// its gradients with respect to the sorted output and/or the permutation.
pub fn backward<T: Scalar>(
    trace: &ForwardTrace<'_, T>,
    grad_sorted: Option<&[T]>,
    grad_perm: Option<&SquareMatrix<T>>,
) -> Result<Vec<T>> {
    let n = trace.n();
    if grad_sorted.is_none() && grad_perm.is_none() {
        return Err(Error::InvalidConfig(
            "backward needs at least one upstream gradient".into(),
        ));
    }
    trace.check_consistency()?;
    let mut grad = match grad_sorted {
        Some(g) if g.len() != n => {
            return Err(Error::ShapeMismatch {
                expected: n,
                found: g.len(),
            })
        }
        Some(g) => g.to_vec(),
        None => vec![T::zero(); n],
    };
    let Some(gp) = grad_perm else {
        for rec in trace.layers.iter().rev() {
            value_adjoint(rec, &mut grad, |_| T::zero());
        }
        return Ok(grad);
    };
    if gp.n() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            found: gp.n(),
        });
    }

    // adjoint of P carried back through the layers: U_l = (P_L ... P_{l+1})^T G
    let mut adjoint = gp.clone();
    let layer_count = trace.layers.len();
    let segment = ((layer_count as f64).sqrt().ceil() as usize).max(1);
    let starts: Vec<usize> = (0..layer_count).step_by(segment).collect();
    let checkpoints = {
        let mut cps = Vec::with_capacity(starts.len());
        let mut running = SquareMatrix::identity(n);
        for (k, &s) in starts.iter().enumerate() {
            if k > 0 {
                for l in starts[k - 1]..s {
                    trace.left_multiply(l, &mut running);
                }
            }
            cps.push(running.clone());
        }
        cps
    };
    for (&start, checkpoint) in starts.iter().zip(checkpoints).rev() {
        let end = (start + segment).min(layer_count);
        let before = trace.products_from(start, end, checkpoint);
        for l in (start..end).rev() {
            let running = &before[l - start];
            let rec = &trace.layers[l];
            value_adjoint(rec, &mut grad, |c| {
                adjoint.row_diff_dot(running, c.min_pos, c.max_pos)
            });
            for c in &rec.comparators {
                adjoint.mix_rows(
                    c.comparator.min_pos,
                    c.comparator.max_pos,
                    c.mix.alpha,
                    c.mix.complement,
                );
            }
        }
    }
    Ok(grad)
}

/// Pulls `grad` (w.r.t. the layer outputs) back to the layer inputs.
/// `extra_alpha` supplies any additional gradient w.r.t. each comparator's alpha.
fn value_adjoint<T: Scalar>(
    rec: &LayerRecord<T>,
    grad: &mut [T],
    mut extra_alpha: impl FnMut(&Comparator) -> T,
) {
    for c in &rec.comparators {
        let (i, j) = (c.comparator.min_pos, c.comparator.max_pos);
        let (g_min, g_max) = (grad[i], grad[j]);
        let spread = g_min - g_max;
        let d_alpha = spread * (rec.inputs[i] - rec.inputs[j]) + extra_alpha(&c.comparator);
        let d_diff = if c.mix.slope == T::zero() {
            T::zero()
        } else {
            d_alpha * c.mix.slope
        };
        grad[i] = g_max + c.mix.alpha * spread - d_diff;
        grad[j] = g_min - c.mix.alpha * spread + d_diff;
    }
}

/// [`forward`] over a batch sharing one schedule. Order of results matches input.
pub fn forward_batch<'s, T: Scalar>(
    batch: &[Vec<T>],
    schedule: &'s ComparatorSchedule,
    cfg: &RelaxConfig<T>,
) -> Result<Vec<SortOutput<'s, T>>> {
    batch
        .par_iter()
        .map(|v| forward(v, schedule, cfg))
        .collect()
}

/// [`backward`] over a batch of traces with matching upstream gradients.
pub fn backward_batch<T: Scalar>(
    traces: &[&ForwardTrace<'_, T>],
    grad_sorted: Option<&[Vec<T>]>,
    grad_perm: Option<&[SquareMatrix<T>]>,
) -> Result<Vec<Vec<T>>> {
    let len = traces.len();
    for found in [grad_sorted.map(<[_]>::len), grad_perm.map(<[_]>::len)]
        .into_iter()
        .flatten()
    {
        if found != len {
            return Err(Error::ShapeMismatch {
                expected: len,
                found,
            });
        }
    }
    (0..len)
        .into_par_iter()
        .map(|b| {
            backward(
                traces[b],
                grad_sorted.map(|g| g[b].as_slice()),
                grad_perm.map(|g| &g[b]),
            )
        })
        .collect()
}

/// Stable 0-based ranks: `rank[c]` is the position of element `c` after sorting
/// ascending, with ties broken by index.
pub fn hard_ranks<T: PartialOrd>(values: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![0; values.len()];
    for (r, &c) in order.iter().enumerate() {
        ranks[c] = r;
    }
    ranks
}

/// Scalar objective used by [`gradient_check_with`].
#[derive(Clone, Debug)]
pub enum CheckObjective<T> {
    /// Ranking cross-entropy of `P` against a ground-truth permutation.
    RankingLoss(GroundTruthPermutation),
    /// Inner product of the sorted output with fixed weights.
    SortedDot(Vec<T>),
}

impl<T: Scalar> CheckObjective<T> {
    fn value_and_grad(
        &self,
        values: &[T],
        schedule: &ComparatorSchedule,
        cfg: &RelaxConfig<T>,
    ) -> Result<(T, Option<Vec<T>>)> {
        match self {
            CheckObjective::RankingLoss(q) => {
                let out = forward(values, schedule, cfg)?;
                let (loss, grad_p) = ranking_ce_loss(&out.perm, q)?;
                Ok((loss, Some(backward(&out.trace, None, Some(&grad_p))?)))
            }
            CheckObjective::SortedDot(w) => {
                let (sorted, trace) = forward_values(values, schedule, cfg)?;
                if w.len() != sorted.len() {
                    return Err(Error::ShapeMismatch {
                        expected: sorted.len(),
                        found: w.len(),
                    });
                }
                let v = sorted.iter().zip(w).map(|(&a, &b)| a * b).sum();
                Ok((v, Some(backward(&trace, Some(w), None)?)))
            }
        }
    }

    fn value(
        &self,
        values: &[T],
        schedule: &ComparatorSchedule,
        cfg: &RelaxConfig<T>,
    ) -> Result<T> {
        match self {
            CheckObjective::RankingLoss(q) => {
                let out = forward(values, schedule, cfg)?;
                Ok(ranking_ce_loss(&out.perm, q)?.0)
            }
            CheckObjective::SortedDot(w) => {
                let (sorted, _) = forward_values(values, schedule, cfg)?;
                Ok(sorted.iter().zip(w).map(|(&a, &b)| a * b).sum())
            }
        }
    }
}

/// Seed of the fixed target permutation used by [`gradient_check`].
pub const GRADCHECK_TARGET_SEED: u64 = 0x005e_ed0f_50f7;

/// Fixed pseudo-random target permutation for gradient checks.
pub fn gradcheck_target(n: usize) -> GroundTruthPermutation {
    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(&mut ChaCha8Rng::seed_from_u64(GRADCHECK_TARGET_SEED));
    GroundTruthPermutation::from_ranks(ranks).expect("shuffled identity is a permutation")
}

/// Max coordinate-wise relative error between [`backward`] and central finite
/// differences of the ranking loss against [`gradcheck_target`].
pub fn gradient_check<T: Scalar>(
    schedule: &ComparatorSchedule,
    cfg: &RelaxConfig<T>,
    values: &[T],
    h: T,
) -> Result<T> {
    let objective = CheckObjective::RankingLoss(gradcheck_target(schedule.n()));
    gradient_check_with(schedule, cfg, values, h, &objective)
}

/// Relative errors below this gradient magnitude are measured against it.
const GRADCHECK_FLOOR: f64 = 1e-6;

pub fn gradient_check_with<T: Scalar>(
    schedule: &ComparatorSchedule,
    cfg: &RelaxConfig<T>,
    values: &[T],
    h: T,
    objective: &CheckObjective<T>,
) -> Result<T> {
    if values.len() != schedule.n() {
        return Err(Error::ShapeMismatch {
            expected: schedule.n(),
            found: values.len(),
        });
    }
    let min_gap = min_pairwise_gap(values);
    let required = h * T::lit(10.0);
    if min_gap < required {
        return Err(Error::GapTooSmall {
            gap: min_gap.to_f64().unwrap_or(f64::NAN),
            required: required.to_f64().unwrap_or(f64::NAN),
        });
    }
    let (_, analytic) = objective.value_and_grad(values, schedule, cfg)?;
    let analytic = analytic.expect("objective provides a gradient");
    let mut probe = values.to_vec();
    let mut worst = T::zero();
    for k in 0..values.len() {
        probe[k] = values[k] + h;
        let up = objective.value(&probe, schedule, cfg)?;
        probe[k] = values[k] - h;
        let down = objective.value(&probe, schedule, cfg)?;
        probe[k] = values[k];
        let numeric = (up - down) / (h + h);
        let scale = analytic[k]
            .abs()
            .max(numeric.abs())
            .max(T::lit(GRADCHECK_FLOOR));
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Smallest `|a - b|` over distinct pairs; infinite for fewer than two values.
pub fn min_pairwise_gap<T: Scalar>(values: &[T]) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::infinity(), T::min)
}
