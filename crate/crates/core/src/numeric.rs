//! Small numeric helpers shared by the engines and the analysis code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One independent stream per node, derived from a run seed. Stream 0 is
/// reserved for centralized baselines.
pub fn node_streams(seed: u64, num_nodes: usize) -> Vec<ChaCha8Rng> {
    (0..num_nodes).map(|i| stream(seed, i as u64 + 1)).collect()
}

pub fn central_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, 0)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `ε^x` via `exp(x ln ε)`.
#[inline]
pub fn eps_pow(ln_eps: f64, x: f64) -> f64 {
    (x * ln_eps).exp()
}

/// `1 - ε^x` without cancellation for small `x`.
#[inline]
pub fn one_minus_eps_pow(ln_eps: f64, x: f64) -> f64 {
    -(x * ln_eps).exp_m1()
}

/// Shewchuk's exact partials: the returned partials sum exactly to the real
/// sum of `values`.
fn exact_partials(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = ExactSum::default();
    for x in values {
        acc.add(x);
    }
    acc.partials
}

/// Running sum kept as exact partials; `value` is the sum of the partials
/// and is accurate to the last bit for the sums seen here.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        self.partials.iter().sum()
    }

    pub fn clear(&mut self) {
        self.partials.clear();
    }
}

/// Exact test of `Σ a == Σ b` over finite floats.
pub fn sums_equal_exactly(a: &[f64], b: &[f64]) -> bool {
    let partials = exact_partials(a.iter().copied().chain(b.iter().map(|v| -v)));
    partials.iter().all(|&p| p == 0.0)
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Total-variation distance `½ Σ |p - q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_sum_detects_rounding_coincidences() {
        // (0.1 + 0.2) + 0.3 != 0.1 + (0.2 + 0.3) in floating point, but the
        // multisets are equal.
        assert!(sums_equal_exactly(&[0.1, 0.2, 0.3], &[0.3, 0.1, 0.2]));
        let tiny = f64::EPSILON / 8.0;
        assert!(!sums_equal_exactly(&[1.0, 1.0, tiny], &[1.0, 1.0, 0.0]));
        assert_eq!(1.0 + 1.0 + tiny, 2.0);
    }

    #[test]
    fn one_minus_pow_matches_direct_form() {
        let ln = 0.1f64.ln();
        assert!((one_minus_eps_pow(ln, 3.0) - 0.999).abs() < 1e-15);
        assert!((eps_pow(ln, 3.0) - 0.001).abs() < 1e-18);
        assert_eq!(one_minus_eps_pow(ln, 0.0), 0.0);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        use rand::Rng;
        let mut a = node_streams(7, 2);
        let mut b = node_streams(7, 2);
        let xa: f64 = a[0].random();
        let ya: f64 = a[1].random();
        assert_eq!(xa, b[0].random::<f64>());
        assert_eq!(ya, b[1].random::<f64>());
        assert_ne!(xa, ya);
    }

    proptest! {
        #[test]
        fn shared_terms_reduce_to_single_comparison(
            shared in proptest::collection::vec(0.0f64..=1.0, 0..6),
            x in 0.0f64..=1.0,
            y in 0.0f64..=1.0,
        ) {
            let mut a = shared.clone();
            a.push(x);
            let mut b = vec![y];
            b.extend_from_slice(&shared);
            prop_assert_eq!(sums_equal_exactly(&a, &b), x == y);
        }
    }
}
