//! Forward/backward timing of the relaxed networks.

use std::mem::size_of;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::objective::ranking_ce_loss;
use crate::relax::{default_steepness, Mode, RelaxConfig, DEFAULT_ART_LAMBDA, DEFAULT_EPSILON};
use crate::schedule::{ComparatorSchedule, NetworkKind};
use crate::softsort::{backward_batch, forward_batch, gradcheck_target, ComparatorRecord};

/// One row of the benchmark CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub kind: NetworkKind,
    pub layers: usize,
    pub forward_us: f64,
    pub backward_us: f64,
    pub peak_alloc_bytes: u64,
    pub batch: usize,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str =
        "n,kind,layers,forward_us,backward_us,peak_alloc_bytes,batch";

    pub fn total_us(&self) -> f64 {
        self.forward_us + self.backward_us
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{},{}",
            self.n,
            self.kind,
            self.layers,
            self.forward_us,
            self.backward_us,
            self.peak_alloc_bytes,
            self.batch
        )
    }
}

/// Working-set estimate of one forward+backward pass over `batch` instances
/// with `workers` concurrent backward passes.
pub fn peak_alloc_estimate(schedule: &ComparatorSchedule, batch: usize, workers: usize) -> u64 {
    let n = schedule.n() as u64;
    let layers = schedule.layer_count() as u64;
    let word = size_of::<f64>() as u64;
    let dense = n * n * word;
    let trace = layers * n * word
        + schedule.comparator_count() as u64 * size_of::<ComparatorRecord<f64>>() as u64
        + n * word;
    // forward: trace, P and sorted values; loss gradient per instance
    let per_instance = trace + dense + n * word + dense;
    let segment = (layers as f64).sqrt().ceil().max(1.0) as u64;
    let checkpoints = layers.div_ceil(segment);
    // backward: adjoint, running product, checkpoints, replayed segment
    let per_worker = dense * (2 + checkpoints + segment) + n * word;
    batch as u64 * per_instance + workers.min(batch) as u64 * per_worker
}

/// Times a forward pass (with permutation matrix) and a backward pass of the
/// ranking loss over a batch of standard-normal inputs. Reports medians over
/// `repeats` runs in microseconds.
pub fn run_bench(
    kind: NetworkKind,
    n: usize,
    batch: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchRecord> {
    if batch == 0 || repeats == 0 {
        return Err(Error::InvalidConfig(
            "batch and repeats must be positive".into(),
        ));
    }
    let schedule = ComparatorSchedule::new(kind, n)?;
    let cfg = RelaxConfig::with_params(
        default_steepness::<f64>(&schedule).max(1.0),
        DEFAULT_ART_LAMBDA,
        DEFAULT_EPSILON,
        Mode::Soft,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let target = gradcheck_target(n);

    let mut forward_times = Vec::with_capacity(repeats);
    let mut backward_times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let outputs = forward_batch(&inputs, &schedule, &cfg)?;
        forward_times.push(start.elapsed().as_secs_f64() * 1e6);

        let start = Instant::now();
        let grads: Vec<SquareMatrix<f64>> = outputs
            .iter()
            .map(|o| ranking_ce_loss(&o.perm, &target).map(|(_, g)| g))
            .collect::<Result<_>>()?;
        let traces: Vec<_> = outputs.iter().map(|o| &o.trace).collect();
        let grad_in = backward_batch(&traces, None, Some(&grads))?;
        backward_times.push(start.elapsed().as_secs_f64() * 1e6);
        debug_assert_eq!(grad_in.len(), batch);
    }
    Ok(BenchRecord {
        n,
        kind,
        layers: schedule.layer_count(),
        forward_us: median(&mut forward_times).max(f64::MIN_POSITIVE),
        backward_us: median(&mut backward_times).max(f64::MIN_POSITIVE),
        peak_alloc_bytes: peak_alloc_estimate(&schedule, batch, rayon::current_num_threads()),
        batch,
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}
