#![allow(dead_code)]

use diffsort::schedule::{ComparatorSchedule, NetworkKind};
use diffsort::SquareMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

/// Every permutation of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

/// Shuffled values on a jittered grid; every pairwise gap is at least `gap`.
pub fn gapped_values<R: Rng>(rng: &mut R, n: usize, gap: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|k| k as f64 * 2.5 * gap + rng.random_range(0.0..1.5 * gap))
        .collect();
    let offset = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|x| *x -= offset);
    v.shuffle(rng);
    v
}

/// Plain triple-loop product `a * b`.
pub fn dense_mul(a: &SquareMatrix<f64>, b: &SquareMatrix<f64>) -> SquareMatrix<f64> {
    let n = a.n();
    let mut c = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[(i, k)] * b[(k, j)];
            }
            c[(i, j)] = s;
        }
    }
    c
}

/// Stride of a bitonic layer (all comparators share it).
pub fn layer_stride(layer: &[diffsort::Comparator]) -> usize {
    let c = layer[0];
    c.min_pos.abs_diff(c.max_pos)
}

/// Checks the half-cleaner separation after one hard bitonic layer: inside
/// every aligned block of `2 * stride` lanes, all values at min lanes are
/// at most all values at max lanes. Returns the number of violating blocks.
pub fn merge_violations(layer: &[diffsort::Comparator], values: &[f64]) -> usize {
    let stride = layer_stride(layer);
    let block = 2 * stride;
    let blocks = values.len() / block;
    let mut lo_max = vec![f64::NEG_INFINITY; blocks];
    let mut hi_min = vec![f64::INFINITY; blocks];
    for c in layer {
        let b = c.min_pos / block;
        lo_max[b] = lo_max[b].max(values[c.min_pos]);
        hi_min[b] = hi_min[b].min(values[c.max_pos]);
    }
    lo_max.iter().zip(&hi_min).filter(|(l, h)| l > h).count()
}

pub fn schedules_up_to(n_max: usize) -> Vec<ComparatorSchedule> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        out.push(ComparatorSchedule::new(NetworkKind::OddEven, n).unwrap());
        if n.is_power_of_two() {
            out.push(ComparatorSchedule::new(NetworkKind::Bitonic, n).unwrap());
        }
    }
    out
}
