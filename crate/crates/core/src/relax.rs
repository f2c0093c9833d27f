//! Smooth replacements for the conditional swap.
//!
//! A comparator on lanes `(i, j)` with inputs `a_i`, `a_j` mixes them with a
//! coefficient `alpha = logistic(art(a_j - a_i) * steepness)`:
//!
//! ```text
//! min_out = alpha * a_i + (1 - alpha) * a_j
//! max_out = (1 - alpha) * a_i + alpha * a_j
//! ```
//!
//! `art` is the activation replacement `x / (|x|^lambda + epsilon)`, which
//! pushes small differences away from zero and compresses large ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schedule::ComparatorSchedule;

pub const DEFAULT_ART_LAMBDA: f64 = 0.25;
pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Soft,
    Hard,
}

/// Hyperparameters of the relaxed comparator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct RelaxConfig<T> {
    pub steepness: T,
    pub art_lambda: T,
    pub epsilon: T,
    pub mode: Mode,
}

impl<T: Scalar> RelaxConfig<T> {
    /// Soft mode with the default ART strength (0.25) and epsilon (1e-10).
    pub fn new(steepness: T) -> Result<Self> {
        Self::with_params(
            steepness,
            T::lit(DEFAULT_ART_LAMBDA),
            T::lit(DEFAULT_EPSILON),
            Mode::Soft,
        )
    }

    pub fn with_params(steepness: T, art_lambda: T, epsilon: T, mode: Mode) -> Result<Self> {
        let cfg = Self {
            steepness,
            art_lambda,
            epsilon,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Exact min/max. The steepness is kept only for bookkeeping.
    pub fn hard() -> Self {
        Self {
            steepness: T::one(),
            art_lambda: T::zero(),
            epsilon: T::lit(DEFAULT_EPSILON),
            mode: Mode::Hard,
        }
    }

    pub fn lambda(mut self, art_lambda: T) -> Result<Self> {
        self.art_lambda = art_lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.steepness > T::zero()) || !self.steepness.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "steepness must be positive and finite, got {}",
                self.steepness
            )));
        }
        if !(self.art_lambda >= T::zero() && self.art_lambda <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "ART lambda must lie in [0, 1], got {}",
                self.art_lambda
            )));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn is_hard(&self) -> bool {
        self.mode == Mode::Hard
    }
}

/// Numerically stable logistic sigmoid; never exponentiates a positive argument.
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Activation replacement `x / (|x|^lambda + epsilon)`.
pub fn art<T: Scalar>(x: T, lambda: T, epsilon: T) -> T {
    x / (x.abs().powf(lambda) + epsilon)
}

/// Derivative of [`art`]: `(epsilon + (1 - lambda)|x|^lambda) / (|x|^lambda + epsilon)^2`.
///
/// At `x = 0` with `lambda > 0` this evaluates to `1 / epsilon`.
pub fn art_derivative<T: Scalar>(x: T, lambda: T, epsilon: T) -> T {
    let p = x.abs().powf(lambda);
    let denom = p + epsilon;
    (epsilon + (T::one() - lambda) * p) / (denom * denom)
}

/// Mix coefficient `alpha` for a comparator whose inputs are `a_i` (min lane)
/// and `a_j` (max lane). Close to 1 when the pair is already in order.
pub fn mix_coefficient<T: Scalar>(a_i: T, a_j: T, cfg: &RelaxConfig<T>) -> T {
    Mix::at(a_j - a_i, cfg).alpha
}

/// Mix coefficient of one comparator with its complement and slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mix<T> {
    pub alpha: T,
    /// `1 - alpha`, evaluated directly so it keeps full relative precision
    /// when `alpha` rounds to 1.
    pub complement: T,
    /// `d alpha / d x`.
    pub slope: T,
}

impl<T: Scalar> Mix<T> {
    /// Mix for the difference `x = a_j - a_i`.
    pub fn at(x: T, cfg: &RelaxConfig<T>) -> Self {
        match cfg.mode {
            Mode::Hard => {
                let alpha = if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    T::zero()
                } else {
                    T::lit(0.5)
                };
                Self {
                    alpha,
                    complement: T::one() - alpha,
                    slope: T::zero(),
                }
            }
            Mode::Soft => {
                let z = art(x, cfg.art_lambda, cfg.epsilon) * cfg.steepness;
                let alpha = logistic(z);
                let complement = logistic(-z);
                let slope = cfg.steepness
                    * art_derivative(x, cfg.art_lambda, cfg.epsilon)
                    * alpha
                    * complement;
                Self {
                    alpha,
                    complement,
                    slope,
                }
            }
        }
    }
}

/// Relaxed compare-and-swap. Returns `(min_out, max_out)`.
///
/// The result depends only on the unordered pair, so swapping the arguments
/// gives bit-identical outputs, and `min_out + max_out` rounds to the same
/// value as `a_i + a_j`.
pub fn soft_swap<T: Scalar>(a_i: T, a_j: T, cfg: &RelaxConfig<T>) -> (T, T) {
    let (lo, hi) = if a_i <= a_j { (a_i, a_j) } else { (a_j, a_i) };
    let gap = hi - lo;
    // weight of the "wrong" side, in [0, 0.5]
    let leak = match cfg.mode {
        Mode::Hard => {
            if gap > T::zero() {
                T::zero()
            } else {
                T::lit(0.5)
            }
        }
        Mode::Soft => logistic(-(art(gap, cfg.art_lambda, cfg.epsilon) * cfg.steepness)),
    };
    let shift = leak * gap;
    conserve_sum(lo, hi, lo + shift, hi - shift)
}

/// Adjusts the smaller-magnitude output so that `min_out + max_out` rounds to
/// `lo + hi` exactly.
fn conserve_sum<T: Scalar>(lo: T, hi: T, min_out: T, max_out: T) -> (T, T) {
    let total = lo + hi;
    if min_out + max_out == total {
        return (min_out, max_out);
    }
    let keep_max = max_out.abs() >= min_out.abs();
    let (kept, mut other) = if keep_max {
        (max_out, total - max_out)
    } else {
        (min_out, total - min_out)
    };
    for _ in 0..4 {
        let s = kept + other;
        if s == total {
            break;
        }
        // step one ulp toward the target
        let delta = if s < total {
            other.abs() * T::epsilon()
        } else {
            -(other.abs() * T::epsilon())
        };
        let delta = if delta == T::zero() {
            if s < total {
                T::min_positive_value()
            } else {
                -T::min_positive_value()
            }
        } else {
            delta
        };
        other = other + delta;
    }
    let (min_out, max_out) = if keep_max {
        (other, kept)
    } else {
        (kept, other)
    };
    (min_out.max(lo).min(hi), max_out.max(lo).min(hi))
}

/// Default steepness: twice the number of layers of the network.
pub fn default_steepness<T: Scalar>(schedule: &ComparatorSchedule) -> T {
    T::lit(2.0 * schedule.layer_count() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ComparatorSchedule;
    use proptest::prelude::*;

    fn cfg(s: f64, lambda: f64) -> RelaxConfig<f64> {
        RelaxConfig::with_params(s, lambda, 1e-10, Mode::Soft).unwrap()
    }

    // exact-arithmetic reference for sigma(-1)
    const SIGMA_MINUS_ONE: f64 = 0.268_941_421_369_995_1;

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0_f64), 0.5);
        for x in [0.3_f64, 2.0, 40.0] {
            assert!((logistic(x) + logistic(-x) - 1.0).abs() < 1e-15);
        }
        assert!((logistic(3.0_f64.ln()) - 0.75).abs() < 1e-15);
        for x in [-1e3_f64, 1e3, -745.0, 745.0] {
            let y = logistic(x);
            assert!(y.is_finite() && (0.0..=1.0).contains(&y));
        }
        assert!((logistic(-1.0_f32) - SIGMA_MINUS_ONE as f32).abs() < 1e-7);
    }

    #[test]
    fn art_values() {
        assert_eq!(art(0.0, 0.25, 1e-10), 0.0);
        assert!((art(16.0_f64, 0.5, 1e-10) - 4.0).abs() < 1e-8);
        assert!((art(-1.0_f64, 0.25, 1e-10) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn art_derivative_values() {
        for x in [-3.0_f64, 0.5, 7.0] {
            assert!((art_derivative(x, 0.0, 1e-10) - 1.0 / (1.0 + 1e-10)).abs() < 1e-15);
        }
        assert!((art_derivative(0.0_f64, 0.25, 1e-10) - 1e10).abs() < 1e-2);
        let h = 1e-6_f64;
        let fd = (art(2.0 + h, 0.25, 1e-10) - art(2.0 - h, 0.25, 1e-10)) / (2.0 * h);
        let an = art_derivative(2.0, 0.25, 1e-10);
        assert!(((an - fd) / an).abs() < 1e-5);
    }

    #[test]
    fn mix_coefficient_values() {
        let c = cfg(1.0, 0.0);
        for a in [-2.0, 0.0, 3.5] {
            assert_eq!(mix_coefficient(a, a, &c), 0.5);
            assert_eq!(mix_coefficient(a, a, &RelaxConfig::hard()), 0.5);
        }
        assert!((mix_coefficient(1.0, 0.0, &c) - SIGMA_MINUS_ONE).abs() < 1e-9);
        assert!(mix_coefficient(0.0, 5.0, &cfg(100.0, 0.25)) > 1.0 - 1e-10);
        let h = RelaxConfig::<f64>::hard();
        assert_eq!(mix_coefficient(0.0, 1.0, &h), 1.0);
        assert_eq!(mix_coefficient(1.0, 0.0, &h), 0.0);
    }

    #[test]
    fn soft_swap_values() {
        let c = cfg(1.0, 0.0);
        assert_eq!(soft_swap(2.5, 2.5, &c), (2.5, 2.5));
        let (lo, hi) = soft_swap(1.0, 0.0, &c);
        assert!((lo - SIGMA_MINUS_ONE).abs() < 1e-9);
        assert!((hi - (1.0 - SIGMA_MINUS_ONE)).abs() < 1e-9);
        assert_eq!(soft_swap(0.0, 1.0, &RelaxConfig::hard()), (0.0, 1.0));
        assert_eq!(soft_swap(1.0, 0.0, &RelaxConfig::hard()), (0.0, 1.0));
    }

    #[test]
    fn default_steepness_values() {
        let oe = ComparatorSchedule::odd_even(16).unwrap();
        let bi = ComparatorSchedule::bitonic(16).unwrap();
        assert_eq!(default_steepness::<f64>(&oe), 32.0);
        assert_eq!(default_steepness::<f64>(&bi), 20.0);
        assert_eq!(
            default_steepness::<f64>(&ComparatorSchedule::bitonic(2).unwrap()),
            2.0
        );
    }

    #[test]
    fn config_validation() {
        assert!(RelaxConfig::with_params(0.0, 0.25, 1e-10, Mode::Soft).is_err());
        assert!(RelaxConfig::with_params(1.0, 1.5, 1e-10, Mode::Soft).is_err());
        assert!(RelaxConfig::with_params(1.0, 0.25, 0.0, Mode::Soft).is_err());
        assert!(RelaxConfig::with_params(f64::NAN, 0.25, 1e-10, Mode::Soft).is_err());
        assert_eq!(RelaxConfig::new(3.0).unwrap().art_lambda, 0.25);
    }

    #[test]
    fn art_monotone_on_grid() {
        for lambda in [0.0, 0.25, 0.5, 0.9] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=10_000 {
                let x = -10.0 + 20.0 * k as f64 / 10_000.0;
                let y = art(x, lambda, 1e-10);
                assert!(y > prev, "lambda {lambda} not increasing at {x}");
                prev = y;
            }
        }
    }

    #[test]
    fn art_amplifies_gradients() {
        let grad = |x: f64, s: f64, lambda: f64| {
            let z = art(x, lambda, 1e-10) * s;
            s * art_derivative(x, lambda, 1e-10) * logistic(z) * logistic(-z)
        };
        for x in [1.5, 2.0, 4.0] {
            for s in [10.0, 20.0] {
                assert!(
                    grad(x, s, 0.25).abs() > grad(x, s, 0.0).abs(),
                    "x={x} s={s}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn art_is_odd(x in -1e3f64..1e3, lambda in 0.0f64..=1.0) {
            prop_assert_eq!(art(-x, lambda, 1e-10), -art(x, lambda, 1e-10));
        }

        #[test]
        fn art_pushes_toward_unit(x in -50.0f64..50.0, lambda in 0.0f64..=1.0) {
            let y = art(x, lambda, 1e-10).abs();
            if x.abs() <= 1.0 {
                prop_assert!(y >= x.abs() / (1.0 + 1e-10) * (1.0 - 1e-15));
            } else {
                prop_assert!(y <= x.abs());
            }
        }

        #[test]
        fn mix_is_complementary(a in -100.0f64..100.0, b in -100.0f64..100.0,
                                s in 0.1f64..100.0, lambda in 0.0f64..=0.5) {
            let c = cfg(s, lambda);
            prop_assert!((mix_coefficient(a, b, &c) + mix_coefficient(b, a, &c) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn soft_swap_conserves_and_is_symmetric(a in -1e3f64..1e3, b in -1e3f64..1e3,
                                                 s in 0.1f64..1e3, lambda in 0.0f64..=1.0) {
            let c = cfg(s, lambda);
            let (lo, hi) = soft_swap(a, b, &c);
            prop_assert_eq!(lo + hi, a + b);
            prop_assert_eq!(soft_swap(b, a, &c), (lo, hi));
            prop_assert!(a.min(b) <= lo && lo <= hi && hi <= a.max(b));
        }

        #[test]
        fn soft_swap_f32_conserves(a in -1e3f32..1e3, b in -1e3f32..1e3, s in 0.1f32..1e2) {
            let c = RelaxConfig::<f32>::new(s).unwrap();
            let (lo, hi) = soft_swap(a, b, &c);
            prop_assert_eq!(lo + hi, a + b);
        }
    }
}
