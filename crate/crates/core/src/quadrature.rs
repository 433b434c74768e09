//! Numerical integration used by the potential-density evaluators.
//!
//! Three building blocks:
//! * [`adaptive`] — globally adaptive 21-point Gauss–Kronrod on a finite interval;
//! * [`decaying_tail`] — `∫_A^∞ g` for slowly decaying non-oscillatory `g`,
//!   integrated in the variable `t = ln(λ/A)` until a caller-supplied
//!   analytic bound on the remainder falls below tolerance;
//! * [`oscillatory_tail`] — `∫_A^∞ g(λ) cos(ωλ + φ) dλ` for positive decreasing
//!   `g`, summed half-period by half-period between the zeros of the cosine and
//!   accelerated with the Euler transform of the alternating partial sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Integral value with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub err: T,
}

impl<T: Scalar> Estimate<T> {
    pub fn new(value: T, err: T) -> Self {
        Estimate { value, err }
    }

    pub fn zero() -> Self {
        Estimate { value: T::zero(), err: T::zero() }
    }

    pub fn add(self, other: Self) -> Self {
        Estimate { value: self.value + other.value, err: self.err + other.err }
    }

    pub fn sub(self, other: Self) -> Self {
        Estimate { value: self.value - other.value, err: self.err + other.err }
    }

    pub fn scale(self, c: T) -> Self {
        Estimate { value: self.value * c, err: self.err * c.abs() }
    }
}

/// Tolerances for every integral evaluated by a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of subintervals for a single adaptive integral.
    #[serde(default = "default_max_intervals")]
    pub max_intervals: usize,
    /// Maximum number of half-periods summed in an oscillatory tail.
    #[serde(default = "default_max_periods")]
    pub max_periods: usize,
}

fn default_max_intervals() -> usize {
    4000
}

fn default_max_periods() -> usize {
    4096
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { abs_tol: 1e-9, rel_tol: 1e-7, max_intervals: 4000, max_periods: 4096 }
    }
}

impl QuadratureConfig {
    /// Same configuration with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        QuadratureConfig { abs_tol: self.abs_tol * factor, rel_tol: self.rel_tol * factor, ..*self }
    }

    pub fn budget(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208745923775,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// One 21-point Kronrod rule on `[a, b]` with the QUADPACK error heuristic.
pub fn gk21<T: Scalar, F: Fn(T) -> T + ?Sized>(f: &F, a: T, b: T) -> Estimate<T> {
    let half = lit::<T>(0.5);
    let center = half * (a + b);
    let h = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * lit(WGK[10]);
    let mut gauss = T::zero();
    let mut resabs = kronrod.abs();
    let mut fv1 = [T::zero(); 10];
    let mut fv2 = [T::zero(); 10];
    for j in 0..10 {
        let dx = h * lit(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod = kronrod + lit::<T>(WGK[j]) * (f1 + f2);
        resabs = resabs + lit::<T>(WGK[j]) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + lit::<T>(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = kronrod * half;
    let mut resasc = lit::<T>(WGK[10]) * (fc - mean).abs();
    for j in 0..10 {
        resasc = resasc + lit::<T>(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((kronrod - gauss) * h).abs();
    if resasc != T::zero() && err != T::zero() {
        let ratio = (lit::<T>(200.0) * err / resasc).powf(lit(1.5));
        err = resasc * ratio.min(T::one());
    }
    let floor = lit::<T>(50.0) * T::epsilon() * resabs;
    if resabs > T::min_positive_value() / (lit::<T>(50.0) * T::epsilon()) {
        err = err.max(floor);
    }
    if !value.is_finite() {
        err = T::infinity();
    }
    Estimate { value, err }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn adaptive<T: Scalar, F: Fn(T) -> T + ?Sized>(
    f: &F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_intervals: usize,
) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate::zero());
    }
    let first = gk21(f, a, b);
    let mut pieces: Vec<(T, T, Estimate<T>)> = vec![(a, b, first)];
    let mut total = first;
    loop {
        let budget = abs_tol.max(rel_tol * total.value.abs());
        if total.err <= budget {
            return Ok(total);
        }
        if pieces.len() >= max_intervals || !total.value.is_finite() {
            return Err(Error::Quadrature { bound: to_f64(total.err), budget: to_f64(budget) });
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0usize, -T::one()), |(bi, be), (i, p)| if p.2.err > be { (i, p.2.err) } else { (bi, be) });
        let (lo, hi, est) = pieces.swap_remove(idx);
        let mid = lit::<T>(0.5) * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            // interval cannot be split further at this precision
            return Err(Error::Quadrature { bound: to_f64(total.err), budget: to_f64(budget) });
        }
        let left = gk21(f, lo, mid);
        let right = gk21(f, mid, hi);
        total = Estimate {
            value: total.value - est.value + left.value + right.value,
            err: total.err - est.err + left.err + right.err,
        };
        pieces.push((lo, mid, left));
        pieces.push((mid, hi, right));
        // refresh the running sums occasionally to shed accumulated cancellation
        if pieces.len() % 64 == 0 {
            total = pieces.iter().fold(Estimate::zero(), |acc, p| acc.add(p.2));
        }
    }
}

/// Integrates `f` over `[a, b]` with `b/a` possibly huge by splitting into
/// geometric panels `[a·2^k, a·2^(k+1)]`; `a = 0` gets a first panel `[0, min(1,b)]`.
pub fn geometric_panels<T: Scalar, F: Fn(T) -> T + ?Sized>(
    f: &F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_intervals: usize,
) -> Result<Estimate<T>> {
    if b <= a {
        return Ok(Estimate::zero());
    }
    let two = lit::<T>(2.0);
    let mut edges = vec![a];
    let mut x = if a == T::zero() { T::one().min(b) } else { a * two };
    if a == T::zero() {
        edges.push(x);
        x = x * two;
    }
    while x < b {
        edges.push(x);
        x = x * two;
    }
    if *edges.last().unwrap() < b {
        edges.push(b);
    }
    let panels = (edges.len() - 1).max(1);
    let per_panel_abs = abs_tol / lit::<T>(panels as f64);
    let mut total = Estimate::zero();
    for w in edges.windows(2) {
        let est = adaptive(f, w[0], w[1], per_panel_abs, rel_tol, max_intervals)?;
        total = total.add(est);
    }
    Ok(total)
}

/// `∫_A^∞ g(λ) dλ` for positive, eventually decreasing `g`.
///
/// Integrates in `t = ln(λ/A)` over unit panels until `tail_bound(Λ)`, an
/// analytic upper bound for `∫_Λ^∞ g`, drops below a tenth of the absolute
/// tolerance. The final bound is added to the reported error.
pub fn decaying_tail<T: Scalar, F, B>(g: &F, start: T, tail_bound: B, cfg: &QuadratureConfig) -> Result<Estimate<T>>
where
    F: Fn(T) -> T + ?Sized,
    B: Fn(T) -> T,
{
    assert!(start > T::zero(), "tail start must be positive");
    let abs_tol = lit::<T>(cfg.abs_tol);
    let rel_tol = lit::<T>(cfg.rel_tol);
    let mapped = |t: T| {
        let lam = start * t.exp();
        g(lam) * lam
    };
    let mut total: Estimate<T> = Estimate::zero();
    let mut t = T::zero();
    let width = lit::<T>(2.0);
    let mut panels = 0usize;
    loop {
        let lam = start * t.exp();
        let bound = tail_bound(lam);
        if bound <= lit::<T>(0.1) * abs_tol.max(rel_tol * total.value.abs()) {
            total.err = total.err + bound;
            return Ok(total);
        }
        if panels > 2000 || !lam.is_finite() {
            return Err(Error::Quadrature { bound: to_f64(bound), budget: cfg.abs_tol });
        }
        let est = adaptive(&mapped, t, t + width, lit::<T>(0.01) * abs_tol, rel_tol, cfg.max_intervals)?;
        total = total.add(est);
        t = t + width;
        panels += 1;
    }
}

/// `∫_A^∞ g(λ) cos(ωλ + φ) dλ` for positive decreasing `g` and `ω > 0`.
pub fn oscillatory_tail<T: Scalar, F: Fn(T) -> T + ?Sized>(
    g: &F,
    omega: T,
    phase: T,
    start: T,
    cfg: &QuadratureConfig,
) -> Result<Estimate<T>> {
    assert!(omega > T::zero(), "oscillatory_tail needs omega > 0");
    let pi = T::PI();
    let half = lit::<T>(0.5);
    let abs_tol = lit::<T>(cfg.abs_tol);
    let rel_tol = lit::<T>(cfg.rel_tol);
    let integrand = |lam: T| g(lam) * (omega * lam + phase).cos();
    // first zero of cos(ωλ + φ) at or beyond `start`
    let k0 = ((omega * start + phase) / pi - half).ceil();
    let zero_at = |k: T| ((k + half) * pi - phase) / omega;
    let mut first_zero = zero_at(k0);
    if first_zero < start {
        first_zero = zero_at(k0 + T::one());
    }
    let head = adaptive(&integrand, start, first_zero, lit::<T>(0.01) * abs_tol, rel_tol, cfg.max_intervals)?;

    let mut terms: Vec<T> = Vec::new();
    let mut term_err = T::zero();
    let mut prev_accel: Option<T> = None;
    let mut k = T::zero();
    let batch = 16;
    while terms.len() < cfg.max_periods {
        for _ in 0..batch {
            let lo = zero_at(k0 + k);
            let lo = if lo < first_zero { first_zero } else { lo };
            let hi = zero_at(k0 + k + T::one());
            let est = adaptive(&integrand, lo, hi, lit::<T>(1e-3) * abs_tol, rel_tol, cfg.max_intervals)?;
            terms.push(est.value);
            term_err = term_err + est.err;
            k = k + T::one();
        }
        let accel = euler_sum(&terms);
        let last = terms.last().copied().unwrap_or(T::zero()).abs();
        if let Some(p) = prev_accel {
            let diff = (accel - p).abs();
            let budget = lit::<T>(0.1) * abs_tol.max(rel_tol * (accel + head.value).abs());
            if diff <= budget || last <= lit::<T>(0.1) * budget {
                return Ok(Estimate { value: head.value + accel, err: head.err + term_err + diff });
            }
        }
        prev_accel = Some(accel);
    }
    let diff = prev_accel.map_or(T::infinity(), |p| (euler_sum(&terms) - p).abs());
    Err(Error::Quadrature { bound: to_f64(diff), budget: cfg.abs_tol })
}

/// Euler transform of an alternating series given by its terms.
///
/// The plain partial sums up to the midpoint are kept and the remaining
/// partial sums are repeatedly averaged (the van Wijngaarden variant), which
/// converges geometrically for terms with smooth magnitude.
pub fn euler_sum<T: Scalar>(terms: &[T]) -> T {
    if terms.is_empty() {
        return T::zero();
    }
    let n = terms.len();
    let keep = n / 3;
    let mut partial: Vec<T> = Vec::with_capacity(n);
    let mut s = T::zero();
    for &t in terms {
        s = s + t;
        partial.push(s);
    }
    let mut level: Vec<T> = partial[keep..].to_vec();
    let half = lit::<T>(0.5);
    while level.len() > 1 {
        level = level.windows(2).map(|w| half * (w[0] + w[1])).collect();
    }
    level[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn gk21_exact_for_polynomials() {
        let est = gk21(&|x: f64| x.powi(5) - 3.0 * x * x, 0.0, 2.0);
        assert!((est.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let est = adaptive(&|x: f64| if x > 0.0 { x.powf(-0.5) } else { 0.0 }, 0.0, 1.0, 1e-10, 1e-10, 4000).unwrap();
        assert!((est.value - 2.0).abs() < 1e-8, "{:?}", est);
    }

    #[test]
    fn decaying_tail_power_law() {
        // ∫_1^∞ λ^{-1.5} dλ = 2
        let est = decaying_tail(&|l: f64| l.powf(-1.5), 1.0, |l: f64| 2.0 * l.powf(-0.5), &cfg()).unwrap();
        assert!((est.value - 2.0).abs() <= est.err, "{:?}", est);
        assert!(est.err < 2e-7);
    }

    #[test]
    fn oscillatory_tail_against_closed_form() {
        // ∫_0^∞ cos(λx)/(1+λ²) dλ = π e^{-x}/2; integrate from 3 and add the head
        let x = 0.7;
        let g = |l: f64| 1.0 / (1.0 + l * l);
        let head = adaptive(&|l: f64| g(l) * (l * x).cos(), 0.0, 3.0, 1e-13, 1e-13, 4000).unwrap();
        let tail = oscillatory_tail(&g, x, 0.0, 3.0, &cfg()).unwrap();
        let want = std::f64::consts::PI * (-x).exp() / 2.0;
        assert!((head.value + tail.value - want).abs() < 1e-8, "{} vs {}", head.value + tail.value, want);
    }

    #[test]
    fn oscillatory_tail_with_phase_is_sine() {
        // ∫_0^∞ sin(λ)/λ dλ = π/2, written with phase -π/2
        let g = |l: f64| 1.0 / l;
        let head = adaptive(&|l: f64| if l == 0.0 { 1.0 } else { l.sin() / l }, 0.0, 1.0, 1e-13, 1e-13, 4000).unwrap();
        let tail = oscillatory_tail(&g, 1.0, -std::f64::consts::FRAC_PI_2, 1.0, &cfg()).unwrap();
        assert!((head.value + tail.value - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
    }

    #[test]
    fn euler_sum_alternating_harmonic() {
        let terms: Vec<f64> = (1..=48).map(|k| if k % 2 == 1 { 1.0 / k as f64 } else { -1.0 / k as f64 }).collect();
        assert!((euler_sum(&terms) - 2f64.ln()).abs() < 1e-10);
    }
}
