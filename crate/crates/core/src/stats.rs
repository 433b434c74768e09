//! Reproducible random streams and small Monte Carlo summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one path: stream `path` of the ChaCha8 key derived from `seed`.
///
/// Draws depend only on `(seed, path)` and their order within the path, so
/// results do not depend on how paths are scheduled across threads.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = Kahan::default();
    for x in xs {
        k.add(x);
    }
    k.value()
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanEstimate { mean: f64::NAN, std_err: f64::NAN, n };
        }
        let mean = kahan_sum(xs.iter().copied()) / n as f64;
        let ss = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        MeanEstimate { mean, std_err: (var / n as f64).sqrt(), n }
    }

    /// `(mean − target)/std_err`; exact agreement with zero error gives 0.
    pub fn z(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.std_err
        }
    }
}

/// Binomial frequency with its standard error.
pub fn frequency(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed_by_path() {
        let a: u64 = path_rng(7, 3).random();
        let b: u64 = path_rng(7, 3).random();
        let c: u64 = path_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let xs = std::iter::once(1.0).chain(std::iter::repeat_n(1e-16, 10_000));
        assert!((kahan_sum(xs) - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_distance(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert!((ks_distance(&[0.0, 2.0], &[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_estimate() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std_err - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
