//! Finite symmetric Markov chains, their rebirthed extensions, local times
//! and the Eisenbaum–Kaspi isomorphism identity.
//!
//! Potentials are densities with respect to the reference measure `m`:
//! `u = (−Q)⁻¹ diag(1/m)`, so that `E^x L^y_∞ = u(x, y)` when `L^y`
//! accumulates holding time at `y` divided by `m(y)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{negativity, z_violation};
use crate::linalg::{inverse_with_condition, Matrix};
use crate::sampling::GaussianSampler;
use crate::scalar::{lit, to_f64, Scalar};
use crate::stats::{path_rng, MeanEstimate};

/// Default cap on jumps per simulated path.
pub const EVENT_CAP: usize = 1_000_000;

const CHAIN_TOL: f64 = 1e-10;

/// Continuous-time chain on `0..n` with sub-Markov generator `Q`, symmetric
/// with respect to `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain<T: Scalar> {
    pub q: Matrix<T>,
    pub m: Vec<T>,
}

impl<T: Scalar> FiniteChain<T> {
    pub fn new(q: Matrix<T>, m: Vec<T>) -> Result<Self> {
        let n = m.len();
        if n == 0 || !q.is_square() || q.rows() != n {
            return Err(Error::invalid("generator and measure sizes differ"));
        }
        if m.iter().any(|&x| !(x > T::zero())) {
            return Err(Error::domain("reference measure must be strictly positive"));
        }
        let tol = lit::<T>(CHAIN_TOL);
        for i in 0..n {
            let scale = q[(i, i)].abs().max(T::one());
            if !(q[(i, i)] < T::zero()) {
                return Err(Error::domain(format!("state {} has no positive holding rate", i)));
            }
            let mut row = T::zero();
            for j in 0..n {
                row = row + q[(i, j)];
                if i != j {
                    if q[(i, j)] < -tol * scale {
                        return Err(Error::domain(format!("negative jump rate Q({}, {})", i, j)));
                    }
                    let asym = m[i] * q[(i, j)] - m[j] * q[(j, i)];
                    if asym.abs() > tol * scale * m[i].max(m[j]) {
                        return Err(Error::domain(format!("generator is not m-symmetric at ({}, {})", i, j)));
                    }
                }
            }
            if row > tol * scale {
                return Err(Error::domain(format!("row {} of the generator has positive sum", i)));
            }
        }
        Ok(FiniteChain { q, m })
    }

    /// Chain whose potential is `u`: `Q = −diag(1/m) u⁻¹`.
    pub fn from_potential(u: &Matrix<T>, m: Vec<T>) -> Result<Self> {
        if !u.is_symmetric(lit(1e-12)) {
            return Err(Error::domain("potential matrix must be symmetric"));
        }
        let (inv, _) = inverse_with_condition(u)?;
        let q = Matrix::from_fn(u.rows(), u.cols(), |i, j| -inv[(i, j)] / m[i]);
        Self::new(q, m)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Adds exponential killing at rate `alpha`.
    pub fn killed(&self, alpha: T) -> Result<Self> {
        if alpha < T::zero() {
            return Err(Error::domain("killing rate must be ≥ 0"));
        }
        let n = self.len();
        let q = Matrix::from_fn(n, n, |i, j| if i == j { self.q[(i, j)] - alpha } else { self.q[(i, j)] });
        Self::new(q, self.m.clone())
    }

    /// `(pI − Q)⁻¹ diag(1/m)` for `p ≥ 0`.
    pub fn resolvent(&self, p: T) -> Result<Matrix<T>> {
        let n = self.len();
        let a = Matrix::from_fn(n, n, |i, j| if i == j { p } else { T::zero() } - self.q[(i, j)]);
        let (inv, _) = inverse_with_condition(&a)?;
        Ok(Matrix::from_fn(n, n, |i, j| inv[(i, j)] / self.m[j]))
    }

    /// 0-potential; errors for recurrent chains.
    pub fn potential(&self) -> Result<Matrix<T>> {
        self.resolvent(T::zero())
    }

    /// Killing rate `−Σ_z Q(x, z)` at each state.
    pub fn killing_rates(&self) -> Vec<T> {
        (0..self.len()).map(|i| -self.q.row(i).iter().copied().sum::<T>()).collect()
    }
}

/// `f(y) = Σ_x u(x, y) μ(x)`.
pub fn left_potential<T: Scalar>(u: &Matrix<T>, mu: &[T]) -> Vec<T> {
    (0..u.cols()).map(|y| (0..u.rows()).map(|x| u[(x, y)] * mu[x]).sum()).collect()
}

/// Potential of the partially rebirthed chain on `{*} ∪ S`, with `*` at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedPotential<T: Scalar> {
    pub matrix: Matrix<T>,
    pub f: Vec<T>,
    pub mu_mass: T,
    /// Whether the inverse is an M-matrix within the sign tolerance.
    pub inverse_m_matrix: bool,
}

/// `ũ(x, y) = u(x, y) + f(y)`, `ũ(*, y) = f(y)`, `ũ(x, *) = ũ(*, *) = 1`.
pub fn partial_rebirth_potential<T: Scalar>(u: &Matrix<T>, mu: &[T]) -> Result<ExtendedPotential<T>> {
    let n = u.rows();
    if !u.is_square() || mu.len() != n {
        return Err(Error::invalid("μ and u have different sizes"));
    }
    if mu.iter().any(|&x| x < T::zero()) {
        return Err(Error::domain("μ must be a non-negative measure"));
    }
    if !u.is_symmetric(lit(1e-12)) {
        return Err(Error::domain("u must be symmetric"));
    }
    let f = left_potential(u, mu);
    let matrix = Matrix::from_fn(n + 1, n + 1, |i, j| match (i, j) {
        (_, 0) => T::one(),
        (0, j) => f[j - 1],
        (i, j) => u[(i - 1, j - 1)] + f[j - 1],
    });
    let (inv, _) = inverse_with_condition(&matrix)?;
    let tol = lit::<f64>(1e-10);
    let inverse_m_matrix = to_f64(z_violation(&inv)) <= tol && to_f64(negativity(&matrix)) <= tol;
    Ok(ExtendedPotential { matrix, f, mu_mass: mu.iter().copied().sum(), inverse_m_matrix })
}

/// Resolvent density of the fully rebirthed process:
/// `w^p = ū^p + (1/p − Σ_z ū^p(·, z) m(z)) f/‖f‖₁` with `‖f‖₁ = Σ f m`.
pub fn full_rebirth_potential<T: Scalar>(ubar: &Matrix<T>, mu: &[T], m: &[T], p: T) -> Result<Matrix<T>> {
    let n = ubar.rows();
    if mu.len() != n || m.len() != n {
        return Err(Error::invalid("μ, m and ū have different sizes"));
    }
    if !(p > T::zero()) {
        return Err(Error::domain("p must be > 0"));
    }
    let mass: T = mu.iter().copied().sum();
    if mu.iter().any(|&x| x < T::zero()) || (mass - T::one()).abs() > lit(1e-12) {
        return Err(Error::domain("μ must be a probability measure"));
    }
    let f = left_potential(ubar, mu);
    let norm: T = f.iter().zip(m).map(|(&a, &b)| a * b).sum();
    let rows: Vec<T> = (0..n).map(|x| (0..n).map(|z| ubar[(x, z)] * m[z]).sum()).collect();
    if let Some(x) = rows.iter().position(|&r| p * r >= T::one()) {
        return Err(Error::invalid(format!("p·Σ ū^p m ≥ 1 at state {}: the base is not killed", x)));
    }
    Ok(Matrix::from_fn(n, n, |x, y| ubar[(x, y)] + (T::one() / p - rows[x]) * f[y] / norm))
}

/// `max_x |p Σ_y w(x, y) m(y) − 1|`.
pub fn resolvent_mass_residual<T: Scalar>(w: &Matrix<T>, m: &[T], p: T) -> f64 {
    (0..w.rows())
        .map(|x| to_f64((p * (0..w.cols()).map(|y| w[(x, y)] * m[y]).sum::<T>() - T::one()).abs()))
        .fold(0.0, f64::max)
}

/// Jump chain used for simulation: holding rates, measure and the jump law;
/// the probability missing from a row is the death probability.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpChain {
    pub rates: Vec<f64>,
    pub m: Vec<f64>,
    pub jumps: Vec<Vec<(usize, f64)>>,
}

impl JumpChain {
    /// Embedded jump chain of a finite chain; death ends the path.
    pub fn from_chain<T: Scalar>(c: &FiniteChain<T>) -> Self {
        let n = c.len();
        let rates: Vec<f64> = (0..n).map(|i| -to_f64(c.q[(i, i)])).collect();
        let jumps = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && c.q[(i, j)] > T::zero()).map(|j| (j, to_f64(c.q[(i, j)]) / rates[i])).collect())
            .collect();
        JumpChain { rates, m: c.m.iter().map(|&x| to_f64(x)).collect(), jumps }
    }

    /// Partial rebirth: state 0 is `*`, base states shift by one; the base's
    /// death sends the path to `*`, which waits with rate `1 + |μ|` and then
    /// returns with law `μ/(1+|μ|)` or dies.
    pub fn partial_rebirth<T: Scalar>(c: &FiniteChain<T>, mu: &[T]) -> Result<Self> {
        let mass: f64 = mu.iter().map(|&x| to_f64(x)).sum();
        if mu.len() != c.len() || mu.iter().any(|&x| x < T::zero()) {
            return Err(Error::domain("μ must be a non-negative measure on the states"));
        }
        if mass > 1.0 + 1e-12 {
            return Err(Error::domain(format!("|μ| = {} > 1 cannot be simulated", mass)));
        }
        let base = Self::from_chain(c);
        let mut rates = vec![1.0 + mass];
        rates.extend(&base.rates);
        let mut m = vec![1.0];
        m.extend(&base.m);
        let star: Vec<(usize, f64)> = mu
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > T::zero())
            .map(|(j, &w)| (j + 1, to_f64(w) / (1.0 + mass)))
            .collect();
        let mut jumps = vec![star];
        for (i, row) in base.jumps.iter().enumerate() {
            let mut r: Vec<(usize, f64)> = row.iter().map(|&(j, p)| (j + 1, p)).collect();
            let death = to_f64(c.killing_rates()[i]) / base.rates[i];
            if death > 0.0 {
                r.push((0, death));
            }
            jumps.push(r);
        }
        Ok(JumpChain { rates, m, jumps })
    }

    /// `h`-transform with `h = v(·, y)`: jumps reweighted by `h(z)/h(x)`, death
    /// only at `y` with rate `1/(m(y) v(y, y))`.
    pub fn h_transform<T: Scalar>(c: &FiniteChain<T>, v: &Matrix<T>, y: usize) -> Result<Self> {
        let n = c.len();
        if y >= n {
            return Err(Error::domain("reference state out of range"));
        }
        if (0..n).any(|x| !(v[(x, y)] > T::zero())) {
            return Err(Error::domain("h_y = v(·, y) must be strictly positive"));
        }
        let rates: Vec<f64> = (0..n).map(|i| -to_f64(c.q[(i, i)])).collect();
        let jumps = (0..n)
            .map(|x| {
                (0..n)
                    .filter(|&z| z != x && c.q[(x, z)] > T::zero())
                    .map(|z| (z, to_f64(c.q[(x, z)] * v[(z, y)] / v[(x, y)]) / rates[x]))
                    .collect()
            })
            .collect();
        Ok(JumpChain { rates, m: c.m.iter().map(|&x| to_f64(x)).collect(), jumps })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Total jump probability out of each state.
    pub fn jump_mass(&self) -> Vec<f64> {
        self.jumps.iter().map(|r| r.iter().map(|&(_, p)| p).sum()).collect()
    }
}

/// Local times of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimeField {
    pub l: Vec<f64>,
    pub elapsed: f64,
    pub events: usize,
}

impl LocalTimeField {
    /// `|Σ_y L^y m(y) − elapsed| / elapsed`.
    pub fn occupation_residual(&self, m: &[f64]) -> f64 {
        let s: f64 = self.l.iter().zip(m).map(|(l, m)| l * m).sum();
        if self.elapsed == 0.0 {
            s.abs()
        } else {
            (s - self.elapsed).abs() / self.elapsed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: Option<f64>,
    pub event_cap: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { horizon: None, event_cap: EVENT_CAP }
    }
}

fn simulate_path<R: Rng>(chain: &JumpChain, start: usize, opts: &SimOptions, rng: &mut R) -> Result<LocalTimeField> {
    let mut l = vec![0.0; chain.len()];
    let mut elapsed = 0.0;
    let mut state = start;
    let mut events = 0;
    loop {
        let e: f64 = Exp1.sample(rng);
        let mut hold = e / chain.rates[state];
        let mut stop = false;
        if let Some(h) = opts.horizon {
            if elapsed + hold >= h {
                hold = h - elapsed;
                stop = true;
            }
        }
        l[state] += hold / chain.m[state];
        elapsed += hold;
        if stop {
            break;
        }
        events += 1;
        if events > opts.event_cap {
            return Err(Error::Simulation(format!(
                "path exceeded {} events at time {:.6e} in state {}",
                opts.event_cap, elapsed, state
            )));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = None;
        for &(j, p) in &chain.jumps[state] {
            acc += p;
            if u < acc {
                next = Some(j);
                break;
            }
        }
        match next {
            Some(j) => state = j,
            None => break,
        }
    }
    Ok(LocalTimeField { l, elapsed, events })
}

/// Simulates `n_paths` independent paths from `start`.
pub fn simulate_local_times(chain: &JumpChain, start: usize, n_paths: usize, seed: u64, opts: SimOptions) -> Result<Vec<LocalTimeField>> {
    if start >= chain.len() {
        return Err(Error::domain("start state out of range"));
    }
    if chain.rates.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::domain("holding rates must be strictly positive"));
    }
    (0..n_paths)
        .into_par_iter()
        .map(|path| simulate_path(chain, start, &opts, &mut path_rng(seed, path as u64)))
        .collect()
}

/// Empirical `E L^y` for every state.
pub fn local_time_means(fields: &[LocalTimeField]) -> Vec<MeanEstimate> {
    let n = fields.first().map_or(0, |f| f.l.len());
    (0..n).map(|y| MeanEstimate::from_samples(&fields.iter().map(|f| f.l[y]).collect::<Vec<_>>())).collect()
}

/// Bounded test functions for the isomorphism identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `F ≡ 1`.
    One,
    /// `exp(−Σ s_i z_i)`.
    Laplace { s: Vec<f64> },
    /// Indicator of `z_i ≤ upper_i` for all `i`.
    Box { upper: Vec<f64> },
}

impl TestFunction {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Laplace { s } => (-s.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()).exp(),
            TestFunction::Box { upper } => {
                if z.iter().zip(upper).all(|(a, b)| a <= b) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        let len = match self {
            TestFunction::One => return Ok(()),
            TestFunction::Laplace { s } => s.len(),
            TestFunction::Box { upper } => upper.len(),
        };
        if len != n {
            return Err(Error::config("F", format!("test function has {} coordinates, chain has {}", len, n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EkReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub z: f64,
}

const X_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
const RHS_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

/// Estimates `E^{y/h_y} E_X F(L_∞ + X)` and `E_X[(2X(y)/v(y,y)) F(X)]`, with
/// `X` the chi-square process of order 1 on the 0-potential `v`.
pub fn ek_identity_check<T: Scalar>(chain: &FiniteChain<T>, y: usize, f: &TestFunction, n_paths: usize, seed: u64) -> Result<EkReport> {
    let n = chain.len();
    f.check_dim(n)?;
    let v = chain.potential()?;
    if (0..n).any(|i| (0..n).any(|j| !(v[(i, j)] > T::zero()))) {
        return Err(Error::domain("0-potential must be strictly positive"));
    }
    let hchain = JumpChain::h_transform(chain, &v, y)?;
    let fields = simulate_local_times(&hchain, y, n_paths, seed, SimOptions::default())?;
    let vf = Matrix::from_fn(n, n, |i, j| to_f64(v[(i, j)]));
    let sampler = GaussianSampler::new(&vf)?;
    let lhs_vals = sampler.map_chi_square(1, n_paths, seed ^ X_STREAM, |x| x.to_vec())?;
    let lhs_vals: Vec<f64> = fields
        .iter()
        .zip(&lhs_vals)
        .map(|(fl, x)| f.eval(&fl.l.iter().zip(x).map(|(a, b)| a + b).collect::<Vec<_>>()))
        .collect();
    let vyy = vf[(y, y)];
    let rhs_vals = sampler.map_chi_square(1, n_paths, seed ^ RHS_STREAM, |x| 2.0 * x[y] / vyy * f.eval(x))?;
    let l = MeanEstimate::from_samples(&lhs_vals);
    let r = MeanEstimate::from_samples(&rhs_vals);
    let se = (l.std_err * l.std_err + r.std_err * r.std_err).sqrt();
    let diff = l.mean - r.mean;
    Ok(EkReport { lhs: l.mean, lhs_se: l.std_err, rhs: r.mean, rhs_se: r.std_err, z: if diff == 0.0 { 0.0 } else { diff / se } })
}

/// JSON model: a generator or a potential matrix, plus optional rebirth
/// measure, resolvent rate and killing rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub states: usize,
    pub m: Vec<f64>,
    #[serde(default)]
    pub generator: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub potential: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

/// Parsed model; `chain` already includes the killing at rate `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct RebirthModel<T: Scalar> {
    pub chain: FiniteChain<T>,
    pub mu: Option<Vec<T>>,
    pub p: Option<T>,
    pub alpha: T,
}

impl<T: Scalar> RebirthModel<T> {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let n = spec.states;
        let check = |key: &str, rows: &Vec<Vec<f64>>| -> Result<Matrix<T>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::config(key, format!("expected a {}×{} matrix", n, n)));
            }
            Ok(Matrix::from_fn(n, n, |i, j| lit(rows[i][j])))
        };
        if spec.m.len() != n {
            return Err(Error::config("m", format!("expected {} entries", n)));
        }
        let m: Vec<T> = spec.m.iter().map(|&x| lit(x)).collect();
        let chain = match (&spec.generator, &spec.potential) {
            (Some(g), None) => FiniteChain::new(check("generator", g)?, m),
            (None, Some(u)) => FiniteChain::from_potential(&check("potential", u)?, m),
            _ => return Err(Error::config("generator", "give exactly one of generator and potential")),
        }
        .map_err(|e| Error::config("generator", e.to_string()))?;
        let alpha = lit::<T>(spec.alpha.unwrap_or(0.0));
        let chain = chain.killed(alpha).map_err(|e| Error::config("alpha", e.to_string()))?;
        let mu = match &spec.mu {
            Some(v) if v.len() != n => return Err(Error::config("mu", format!("expected {} entries", n))),
            Some(v) => Some(v.iter().map(|&x| lit(x)).collect()),
            None => None,
        };
        let p = match spec.p {
            Some(p) if !(p > 0.0) => return Err(Error::config("p", "must be > 0")),
            p => p.map(lit),
        };
        Ok(RebirthModel { chain, mu, p, alpha })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }

    /// Jump chain for simulation: partial rebirth when `mu` is given.
    pub fn jump_chain(&self) -> Result<JumpChain> {
        match &self.mu {
            Some(mu) => JumpChain::partial_rebirth(&self.chain, mu),
            None => Ok(JumpChain::from_chain(&self.chain)),
        }
    }

    /// Potential whose rows the simulated local-time means estimate.
    pub fn simulated_potential(&self) -> Result<Matrix<T>> {
        let u = self.chain.potential()?;
        match &self.mu {
            Some(mu) => Ok(partial_rebirth_potential(&u, mu)?.matrix),
            None => Ok(u),
        }
    }
}
