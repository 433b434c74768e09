//! Chi-square and permanental vectors, the permanental Laplace transform, the
//! sandwich interval for non-symmetric kernels, and the LIL ratio harness.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excessive::{Excessive, ExcessiveSpec};
use crate::kernel::{AugmentedKernel, GridSpec, IsymiDecomposition};
use crate::linalg::{cholesky_psd, Lu, Matrix};
use crate::potential::{PotentialSpec, SymmetricPotential};
use crate::scalar::{lit, to_f64, Scalar};
use crate::stats::{frequency, kahan_sum, path_rng, MeanEstimate};

/// ε schedule of the LIL harness.
pub const EPSILONS: [f64; 3] = [0.1, 0.2, 0.3];

/// Samples, one row of length `dim` per path.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples<T> {
    pub dim: usize,
    pub n_paths: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Samples<T> {
    pub fn path(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn paths(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.dim.max(1))
    }

    /// Empirical mean of each coordinate.
    pub fn means(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|j| kahan_sum(self.paths().map(|p| to_f64(p[j]))) / self.n_paths as f64)
            .collect()
    }
}

/// Centered Gaussian vectors `L z + a ξ` with `L Lᵀ` the base covariance and
/// an optional independent common factor `ξ` loaded by `a`.
#[derive(Debug, Clone)]
pub struct GaussianSampler<T: Scalar> {
    chol: Matrix<T>,
    shift: Option<Vec<T>>,
}

impl<T: Scalar> GaussianSampler<T> {
    pub fn new(cov: &Matrix<T>) -> Result<Self> {
        Ok(GaussianSampler { chol: cholesky_psd(cov)?, shift: None })
    }

    /// Covariance `cov + a aᵀ`, sampled as `η + a ξ`.
    pub fn with_shift(cov: &Matrix<T>, a: Vec<T>) -> Result<Self> {
        if a.len() != cov.rows() {
            return Err(Error::invalid("shift vector length differs from covariance size"));
        }
        Ok(GaussianSampler { chol: cholesky_psd(cov)?, shift: Some(a) })
    }

    pub fn dim(&self) -> usize {
        self.chol.rows()
    }

    /// Covariance of the sampled vectors.
    pub fn covariance(&self) -> Matrix<T> {
        let c = self.chol.matmul(&self.chol.transpose());
        match &self.shift {
            Some(a) => Matrix::from_fn(c.rows(), c.cols(), |i, j| c[(i, j)] + a[i] * a[j]),
            None => c,
        }
    }

    fn draw<R: rand::Rng>(&self, rng: &mut R, z: &mut [T], out: &mut [T]) {
        let n = self.dim();
        for zi in z.iter_mut() {
            let x: f64 = StandardNormal.sample(rng);
            *zi = lit(x);
        }
        for i in 0..n {
            let mut s = T::zero();
            for j in 0..=i {
                s = s + self.chol[(i, j)] * z[j];
            }
            out[i] = s;
        }
        if let Some(a) = &self.shift {
            let xi: f64 = StandardNormal.sample(rng);
            for i in 0..n {
                out[i] = out[i] + a[i] * lit::<T>(xi);
            }
        }
    }

    /// Applies `f` to `n_paths` chi-square vectors `Σ_{i≤k} η_i²/2`; results
    /// are in path order and independent of the thread count.
    pub fn map_chi_square<R: Send, F: Fn(&[T]) -> R + Sync>(&self, k: usize, n_paths: usize, seed: u64, f: F) -> Result<Vec<R>> {
        if k == 0 {
            return Err(Error::domain("chi-square order k must be ≥ 1"));
        }
        let n = self.dim();
        let half = lit::<T>(0.5);
        Ok((0..n_paths)
            .into_par_iter()
            .map_init(
                || (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]),
                |(z, eta, x), path| {
                    let mut rng = path_rng(seed, path as u64);
                    x.iter_mut().for_each(|v| *v = T::zero());
                    for _ in 0..k {
                        self.draw(&mut rng, z, eta);
                        for (xi, &e) in x.iter_mut().zip(eta.iter()) {
                            *xi = *xi + half * e * e;
                        }
                    }
                    f(x)
                },
            )
            .collect())
    }

    pub fn chi_square(&self, k: usize, n_paths: usize, seed: u64) -> Result<Samples<T>> {
        let rows = self.map_chi_square(k, n_paths, seed, |x| x.to_vec())?;
        Ok(Samples { dim: self.dim(), n_paths, data: rows.concat() })
    }

    /// The Gaussian vectors themselves.
    pub fn gaussians(&self, n_paths: usize, seed: u64) -> Samples<T> {
        let n = self.dim();
        let rows: Vec<Vec<T>> = (0..n_paths)
            .into_par_iter()
            .map(|path| {
                let mut rng = path_rng(seed, path as u64);
                let mut z = vec![T::zero(); n];
                let mut out = vec![T::zero(); n];
                self.draw(&mut rng, &mut z, &mut out);
                out
            })
            .collect();
        Samples { dim: n, n_paths, data: rows.concat() }
    }
}

pub fn sample_chi_square<T: Scalar>(cov: &Matrix<T>, k: usize, n_paths: usize, seed: u64) -> Result<Samples<T>> {
    GaussianSampler::new(cov)?.chi_square(k, n_paths, seed)
}

/// `det(I + cov·diag(s))^{−k/2}`.
pub fn laplace_transform<T: Scalar>(cov: &Matrix<T>, k: usize, s: &[T]) -> Result<T> {
    let n = cov.rows();
    if s.len() != n {
        return Err(Error::invalid("s has the wrong length"));
    }
    if s.iter().any(|&x| x < T::zero()) {
        return Err(Error::domain("Laplace arguments must be non-negative"));
    }
    let m = Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() } + cov[(i, j)] * s[j]);
    let lu = Lu::new(&m)?;
    Ok((-lit::<T>(k as f64 / 2.0) * lu.log_abs_det()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceReport {
    pub empirical: f64,
    pub analytic: f64,
    pub std_err: f64,
    pub z: f64,
}

pub fn laplace_check<T: Scalar>(cov: &Matrix<T>, k: usize, s: &[T], n_paths: usize, seed: u64) -> Result<LaplaceReport> {
    let analytic = to_f64(laplace_transform(cov, k, s)?);
    let vals = GaussianSampler::new(cov)?.map_chi_square(k, n_paths, seed, |x| {
        let e: T = x.iter().zip(s).map(|(&xi, &si)| xi * si).sum();
        to_f64((-e).exp())
    })?;
    let est = MeanEstimate::from_samples(&vals);
    Ok(LaplaceReport { empirical: est.mean, analytic, std_err: est.std_err, z: est.z(analytic) })
}

/// `G + a aᵀ`, the covariance of `η + a ξ`.
pub fn representation_covariance<T: Scalar>(kernel: &AugmentedKernel<T>, dec: &IsymiDecomposition<T>) -> Matrix<T> {
    let g = &kernel.g_mat;
    Matrix::from_fn(g.rows(), g.cols(), |i, j| g[(i, j)] + dec.a[i] * dec.a[j])
}

/// Chi-square process built from `η(t'_j) + a_j ξ`; its kernel is the
/// `0..m` block of `K_isymi`.
pub fn sample_isymi_representation<T: Scalar>(
    kernel: &AugmentedKernel<T>,
    dec: &IsymiDecomposition<T>,
    k: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Samples<T>> {
    GaussianSampler::with_shift(&kernel.g_mat, dec.a.clone())?.chi_square(k, n_paths, seed)
}

/// `[ν^{−k/2} P̃, 1 − ν^{−k/2} + ν^{−k/2} P̃]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    pub nu: f64,
    pub p_tilde: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

pub fn sandwich_interval(nu: f64, k: usize, p_tilde: f64) -> SandwichReport {
    let w = nu.powf(-(k as f64) / 2.0);
    SandwichReport { nu, p_tilde, lower: w * p_tilde, upper: 1.0 - w + w * p_tilde, width: 1.0 - w }
}

/// Estimates `P̃` of `event` under the symmetric surrogate and returns the
/// interval that must contain the non-symmetric probability.
pub fn sandwich_check<T: Scalar, E: Fn(&[T]) -> bool + Sync>(
    kernel: &AugmentedKernel<T>,
    dec: &IsymiDecomposition<T>,
    k: usize,
    event: E,
    n_paths: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let hits = GaussianSampler::with_shift(&kernel.g_mat, dec.a.clone())?.map_chi_square(k, n_paths, seed, |x| event(x))?;
    let (p, _) = frequency(hits.iter().filter(|&&h| h).count(), n_paths);
    Ok(sandwich_interval(to_f64(dec.nu), k, p))
}

/// Per-path LIL statistics: the one-sided maximum `S`, the two-sided maximum
/// `T` and the target `√(2X(d))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LilPath {
    pub s: f64,
    pub t: f64,
    pub target: f64,
}

/// `ψ_d(t) = √(2σ²(d+t, d) log log 1/t)`.
pub fn psi_d<T: Scalar>(u: &SymmetricPotential<T>, d: T, t: T) -> Result<T> {
    let s2 = u.sigma2(d + t, d)?;
    Ok((lit::<T>(2.0) * s2 * (T::one() / t).ln().ln()).sqrt())
}

/// Statistics for coordinate 0 as `d` and coordinates `1..` normalized by
/// `psi`. Returns the per-path values and whether some `ψ` vanished.
pub fn lil_statistics<T: Scalar>(
    sampler: &GaussianSampler<T>,
    psi: &[T],
    k: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(Vec<LilPath>, bool)> {
    if psi.len() + 1 != sampler.dim() {
        return Err(Error::invalid("ψ must have one entry per grid point after d"));
    }
    let degenerate = psi.iter().any(|&p| !(p > T::zero()) || !p.is_finite());
    let paths = sampler.map_chi_square(k, n_paths, seed, |x| {
        let (mut s, mut t) = (0.0f64, 0.0f64);
        let mut any = false;
        for (j, &p) in psi.iter().enumerate() {
            if !(p > T::zero()) || !p.is_finite() {
                continue;
            }
            let r = to_f64((x[j + 1] - x[0]) / p);
            s = if any { s.max(r) } else { r };
            t = t.max(r.abs());
            any = true;
        }
        LilPath { s, t, target: to_f64((lit::<T>(2.0) * x[0]).sqrt()) }
    })?;
    Ok((paths, degenerate))
}

/// LIL run description; `f` and `g` are both present or both absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilConfig {
    pub base: PotentialSpec,
    #[serde(default)]
    pub f: Option<ExcessiveSpec>,
    #[serde(default)]
    pub g: Option<ExcessiveSpec>,
    pub d: f64,
    pub theta: f64,
    pub q: f64,
    pub schedule: Vec<usize>,
    pub k: usize,
    pub n_paths: usize,
    pub seed: u64,
}

/// One CSV row of the LIL report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LilRow {
    pub n: usize,
    pub m_n: usize,
    pub epsilon: f64,
    pub freq_lower: f64,
    pub freq_upper: f64,
    pub nu: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LilLevel {
    pub n: usize,
    pub m_n: usize,
    pub nu: f64,
    pub paths: Vec<LilPath>,
    pub degenerate: bool,
}

impl LilLevel {
    /// `(P(S ≥ (1−ε)√(2X(d))), standard error)`.
    pub fn freq_lower(&self, eps: f64) -> (f64, f64) {
        let hits = self.paths.iter().filter(|p| p.s >= (1.0 - eps) * p.target).count();
        frequency(hits, self.paths.len())
    }

    /// `(P(T ≤ (1+ε)√(2X(d))), standard error)`.
    pub fn freq_upper(&self, eps: f64) -> (f64, f64) {
        let hits = self.paths.iter().filter(|p| p.t <= (1.0 + eps) * p.target).count();
        frequency(hits, self.paths.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LilReport {
    pub levels: Vec<LilLevel>,
}

impl LilReport {
    pub fn degenerate(&self) -> bool {
        self.levels.iter().any(|l| l.degenerate)
    }

    pub fn rows(&self) -> Vec<LilRow> {
        let mut rows = Vec::new();
        for l in &self.levels {
            for &eps in &EPSILONS {
                rows.push(LilRow {
                    n: l.n,
                    m_n: l.m_n,
                    epsilon: eps,
                    freq_lower: l.freq_lower(eps).0,
                    freq_upper: l.freq_upper(eps).0,
                    nu: l.nu,
                    paths: l.paths.len(),
                });
            }
        }
        rows
    }
}

/// Runs the LIL statistics on each grid of the schedule. Without `(f, g)`
/// the process has kernel `u`; with them it is the `K_isymi` surrogate.
#[allow(clippy::too_many_arguments)]
pub fn lil_harness<T: Scalar>(
    u: &SymmetricPotential<T>,
    pair: Option<(&Excessive<T>, &Excessive<T>)>,
    d: f64,
    theta: f64,
    q: f64,
    schedule: &[usize],
    k: usize,
    n_paths: usize,
    seed: u64,
) -> Result<LilReport> {
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be ≥ 1"));
    }
    let mut levels = Vec::new();
    for &n in schedule {
        let spec = GridSpec::new(d, theta, n, q);
        let pts = spec.build_grid::<T>()?;
        let dd = pts[0];
        let psi = pts[1..].iter().map(|&t| psi_d(u, dd, t - dd)).collect::<Result<Vec<T>>>()?;
        let (sampler, nu) = match pair {
            Some((f, g)) => {
                let kernel = AugmentedKernel::assemble(u, f, g, &pts)?;
                let dec = kernel.decompose()?;
                (GaussianSampler::with_shift(&kernel.g_mat, dec.a.clone())?, to_f64(dec.nu))
            }
            None => (GaussianSampler::new(&u.gram(&pts)?)?, 1.0),
        };
        let (paths, degenerate) = lil_statistics(&sampler, &psi, k, n_paths, seed)?;
        levels.push(LilLevel { n, m_n: spec.m(), nu, paths, degenerate });
    }
    Ok(LilReport { levels })
}

pub fn run_lil(cfg: &LilConfig, tol_scale: f64) -> Result<LilReport> {
    let u = SymmetricPotential::<f64>::from_spec(&cfg.base, tol_scale)?;
    let pair = match (&cfg.f, &cfg.g) {
        (Some(f), Some(g)) => Some((Excessive::from_spec(f, u.clone())?, Excessive::from_spec(g, u.clone())?)),
        (None, None) => None,
        _ => return Err(Error::config("f", "f and g must be given together")),
    };
    lil_harness(&u, pair.as_ref().map(|(f, g)| (f, g)), cfg.d, cfg.theta, cfg.q, &cfg.schedule, cfg.k, cfg.n_paths, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou(points: &[f64]) -> Matrix<f64> {
        Matrix::from_fn(points.len(), points.len(), |i, j| (-(points[i] - points[j]).abs()).exp())
    }

    #[test]
    fn exp_one_from_order_two() {
        let s = sample_chi_square(&Matrix::from_rows(&[vec![1.0]]), 2, 20_000, 1).unwrap();
        let m = s.means()[0];
        assert!((m - 1.0).abs() < 3.0 / (20_000f64).sqrt());
    }

    #[test]
    fn ou_means_are_half_diagonal() {
        let cov = ou(&[0.0, 0.3, 1.0]);
        let s = sample_chi_square(&cov, 1, 40_000, 2).unwrap();
        for m in s.means() {
            assert!((m - 0.5).abs() < 0.02, "{}", m);
        }
    }

    #[test]
    fn determinism() {
        let cov = ou(&[0.0, 0.5]);
        let a = sample_chi_square(&cov, 3, 500, 9).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sample_chi_square(&cov, 3, 500, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn laplace_examples() {
        let one = Matrix::from_rows(&[vec![1.0]]);
        assert!((laplace_transform(&one, 1, &[1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let r = laplace_check(&one, 1, &[0.0], 100, 3).unwrap();
        assert_eq!((r.empirical, r.analytic, r.z), (1.0, 1.0, 0.0));
        assert!(sample_chi_square(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]), 1, 10, 0).is_err());
    }

    #[test]
    fn sandwich_collapses_at_unit_nu() {
        let r = sandwich_interval(1.0, 2, 0.3);
        assert_eq!((r.lower, r.upper, r.width), (0.3, 0.3, 0.0));
        let r = sandwich_interval(1.5, 2, 0.3);
        assert!((r.width - (1.0 - 1.0 / 1.5)).abs() < 1e-15);
    }

    #[test]
    fn flat_pair_statistic_matches_symmetric_kernel() {
        use crate::diffusion::PQPotential;
        use crate::excessive::make_flat_pair;
        use crate::expr::Expr;
        use crate::stats::ks_distance;
        let u = SymmetricPotential::PQ(
            PQPotential::new(Expr::parse("exp(x)").unwrap(), Expr::parse("exp(-x)").unwrap(), 0.5, (-3.0, 3.0)).unwrap(),
        );
        let (f, g) = make_flat_pair(0.0, &u).unwrap();
        let flat = lil_harness(&u, Some((&f, &g)), 0.0, 0.7, 0.7, &[40], 1, 5000, 11).unwrap();
        let sym = lil_harness(&u, None, 0.0, 0.7, 0.7, &[40], 1, 5000, 12).unwrap();
        assert!(flat.levels[0].nu - 1.0 < 1e-3);
        let stat = |r: &LilReport| r.levels[0].paths.iter().map(|p| p.s / p.target).collect::<Vec<_>>();
        let ks = ks_distance(&stat(&flat), &stat(&sym));
        assert!(ks <= 0.05, "KS distance {}", ks);
    }

    #[test]
    fn degenerate_kernel_is_flagged() {
        let cov = Matrix::from_fn(4, 4, |_, _| 1.0);
        let sampler = GaussianSampler::new(&cov).unwrap();
        let (paths, degenerate) = lil_statistics(&sampler, &[0.0, 0.0, 0.0], 1, 200, 5).unwrap();
        assert!(degenerate);
        assert!(paths.iter().all(|p| p.s == 0.0 && p.s < p.target));
    }
}
