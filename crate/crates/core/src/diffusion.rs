//! Potentials of one-dimensional diffusions.
//!
//! * [`PQPotential`]: `ũ^β(x,y) = p(x∧y) q(x∨y)` with `p` increasing and `q`
//!   decreasing, and its version `ṽ^β` killed at the first hit of 0;
//! * [`ScalePotential`]: `2(s(x) ∧ s(y))` for a time-changed Brownian motion
//!   killed at 0 with scale function `s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Jet, Smooth};
use crate::quadrature::adaptive;
use crate::scalar::{from_usize, lit, Scalar};

/// Number of sample points used for the sampled invariant checks.
pub const SAMPLE_POINTS: usize = 101;
/// Relative tolerance of the eigen-relation `Lp = βp`, `Lq = βq`.
pub const EIGEN_TOL: f64 = 1e-6;

fn sample_grid<T: Scalar>(lo: T, hi: T, n: usize) -> impl Iterator<Item = T> {
    let step = (hi - lo) / from_usize::<T>(n - 1);
    (0..n).map(move |i| lo + step * from_usize::<T>(i))
}

/// JSON form of a `(p, q, β)` family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PQSpec {
    pub p: Expr,
    pub q: Expr,
    pub beta: f64,
    /// Working interval `[lo, hi]`.
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PQPotential<T> {
    pub p: Expr,
    pub q: Expr,
    pub beta: T,
    pub interval: (T, T),
}

/// Result of [`PQPotential::wronskian_defect`].
#[derive(Debug, Clone, PartialEq)]
pub struct WronskianReport<T> {
    pub c_pq: T,
    /// `(x, (L−β)f(x) + c_{p,q} h(x))`.
    pub residuals: Vec<(T, T)>,
    pub max_residual: T,
    /// `(x, W(x))` with `W = ½ b (p'q − pq')`.
    pub wronskian: Vec<(T, T)>,
    pub wronskian_spread: T,
}

impl<T: Scalar> PQPotential<T> {
    /// Builds the potential and checks positivity, monotonicity and convexity
    /// of `p`, `q` on a sampled working interval.
    pub fn new(p: Expr, q: Expr, beta: T, interval: (T, T)) -> Result<Self> {
        if !(beta > T::zero()) {
            return Err(Error::domain("pq potential needs β > 0"));
        }
        if !(interval.0 < interval.1) {
            return Err(Error::domain("working interval must have lo < hi"));
        }
        for x in sample_grid(interval.0, interval.1, SAMPLE_POINTS) {
            let jp: Jet<T> = p.jet(x);
            let jq: Jet<T> = q.jet(x);
            let ok = jp.v > T::zero()
                && jq.v > T::zero()
                && jp.d1 > T::zero()
                && jq.d1 < T::zero()
                && jp.d2 > T::zero()
                && jq.d2 > T::zero();
            if !ok {
                return Err(Error::invalid(format!(
                    "p, q fail positivity/monotonicity/convexity at x = {}: p = {:?}, q = {:?}",
                    x, jp, jq
                )));
            }
        }
        Ok(PQPotential { p, q, beta, interval })
    }

    pub fn from_spec(spec: &PQSpec) -> Result<Self> {
        Self::new(spec.p.clone(), spec.q.clone(), lit(spec.beta), (lit(spec.interval.0), lit(spec.interval.1)))
    }

    /// `p(x)q(y)` if `x ≤ y`, else `q(x)p(y)`.
    pub fn eval_pq(&self, x: T, y: T) -> T {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        self.p.eval(lo) * self.q.eval(hi)
    }

    /// `ũ^β(x,y) − (p(0)/q(0)) q(x)q(y)`, the potential killed at 0.
    pub fn eval_v_pq(&self, x: T, y: T) -> Result<T> {
        if !(x > T::zero() && y > T::zero()) {
            return Err(Error::domain("ṽ^β is defined for x, y > 0"));
        }
        let ratio = self.p.eval(T::zero()) / self.q.eval(T::zero());
        Ok(self.eval_pq(x, y) - ratio * self.q.eval(x) * self.q.eval(y))
    }

    /// `τ(d) = q(d)p'(d) − p(d)q'(d)`.
    pub fn tau(&self, d: T) -> Result<T> {
        let jp: Jet<T> = self.p.jet(d);
        let jq: Jet<T> = self.q.jet(d);
        let t = jq.v * jp.d1 - jp.v * jq.d1;
        if !(t > T::zero()) {
            return Err(Error::invalid(format!("τ({}) = {} is not positive", d, t)));
        }
        Ok(t)
    }

    /// `ũ(x,x) + ũ(y,y) − 2ũ(x,y)`.
    pub fn sigma2(&self, x: T, y: T) -> T {
        self.eval_pq(x, x) + self.eval_pq(y, y) - lit::<T>(2.0) * self.eval_pq(x, y)
    }

    /// `L f = ½(b f'' + b' f')` from jets.
    fn generator(b: Jet<T>, f: Jet<T>) -> T {
        lit::<T>(0.5) * (b.v * f.d2 + b.d1 * f.d1)
    }

    /// Checks `Lp = βp` and `Lq = βq` to [`EIGEN_TOL`] relative on the sampled interval.
    pub fn check_eigen(&self, b: &Expr) -> Result<()> {
        let tol = lit::<T>(EIGEN_TOL);
        for x in sample_grid(self.interval.0, self.interval.1, SAMPLE_POINTS) {
            let jb: Jet<T> = b.jet(x);
            for (name, f) in [("p", &self.p), ("q", &self.q)] {
                let jf: Jet<T> = f.jet(x);
                let lf = Self::generator(jb, jf);
                let bf = self.beta * jf.v;
                if (lf - bf).abs() > tol * bf.abs() {
                    return Err(Error::invalid(format!(
                        "eigen-relation L{} = β{} fails at x = {}: {} vs {}",
                        name, name, x, lf, bf
                    )));
                }
            }
        }
        Ok(())
    }

    /// `W(x) = ½ b(x) (p'(x)q(x) − p(x)q'(x))`.
    pub fn wronskian(&self, b: &Expr, x: T) -> T {
        let jp: Jet<T> = self.p.jet(x);
        let jq: Jet<T> = self.q.jet(x);
        lit::<T>(0.5) * b.eval(x) * (jp.d1 * jq.v - jp.v * jq.d1)
    }

    /// `f(x) = ∫ ũ^β(x,y) h(y) dy` for `h` supported on `support`.
    pub fn potential_of<H: Fn(T) -> T>(&self, h: &H, support: (T, T), x: T) -> Result<T> {
        let (tol, rtol) = (lit::<T>(1e-13), lit::<T>(1e-12));
        let (a, b) = support;
        let left_hi = x.min(b);
        let right_lo = x.max(a);
        let left = if left_hi > a {
            adaptive(&|y: T| self.p.eval(y) * h(y), a, left_hi, tol, rtol, 4000)?.value
        } else {
            T::zero()
        };
        let right = if b > right_lo {
            adaptive(&|y: T| self.q.eval(y) * h(y), right_lo, b, tol, rtol, 4000)?.value
        } else {
            T::zero()
        };
        Ok(self.q.eval(x) * left + self.p.eval(x) * right)
    }

    /// Residual table of `(L − β)f + c_{p,q} h` with `f = ∫ũ^β(·,y)h(y)dy`.
    ///
    /// `L` is applied to the quadrature values of `f` with a 5-point
    /// finite-difference stencil of step `step`.
    pub fn wronskian_defect<H: Fn(T) -> T>(
        &self,
        b: &Expr,
        h: &H,
        support: (T, T),
        x_grid: &[T],
        step: T,
    ) -> Result<WronskianReport<T>> {
        self.check_eigen(b)?;
        let mid = lit::<T>(0.5) * (self.interval.0 + self.interval.1);
        let c_pq = self.wronskian(b, mid);
        let mut residuals = Vec::with_capacity(x_grid.len());
        let mut max_residual = T::zero();
        let twelve = lit::<T>(12.0);
        for &x in x_grid {
            let f = |t: T| self.potential_of(h, support, t);
            let (fm2, fm1, f0, fp1, fp2) = (f(x - step - step)?, f(x - step)?, f(x)?, f(x + step)?, f(x + step + step)?);
            let d1 = (fm2 - lit::<T>(8.0) * fm1 + lit::<T>(8.0) * fp1 - fp2) / (twelve * step);
            let d2 = (-fm2 + lit::<T>(16.0) * fm1 - lit::<T>(30.0) * f0 + lit::<T>(16.0) * fp1 - fp2) / (twelve * step * step);
            let jb: Jet<T> = b.jet(x);
            let lf = Self::generator(jb, Jet { v: f0, d1, d2 });
            let r = lf - self.beta * f0 + c_pq * h(x);
            max_residual = max_residual.max(r.abs());
            residuals.push((x, r));
        }
        let wronskian: Vec<(T, T)> = x_grid.iter().map(|&x| (x, self.wronskian(b, x))).collect();
        let (lo, hi) = wronskian
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &(_, w)| (lo.min(w), hi.max(w)));
        Ok(WronskianReport { c_pq, residuals, max_residual, wronskian, wronskian_spread: hi - lo })
    }
}

/// JSON form of a scale potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub s: Expr,
    /// Right end of the working interval `(0, upper]`.
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePotential<T> {
    pub s: Expr,
    pub upper: T,
}

/// Witness returned by [`ScalePotential::is_excessive_for_scale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessiveVerdict<T> {
    pub excessive: bool,
    /// Largest `g''` seen and where, in the `x` variable.
    pub max_g2: T,
    pub first_violation: Option<T>,
}

/// `f̂(y) = 1 − ((y₀ − y)/y₀)^p` on `[0, y₀]` and `1` beyond: concave,
/// `f̂(0) = 0`, and flat after `y₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatConcave<T> {
    pub p: T,
    pub y0: T,
}

impl<T: Scalar> FlatConcave<T> {
    pub fn new(p: T, y0: T) -> Result<Self> {
        if !(p > lit(2.0)) {
            return Err(Error::domain("f̂^(p) needs p > 2 for a continuous second derivative"));
        }
        if !(y0 > T::zero()) {
            return Err(Error::domain("f̂^(p) needs y₀ > 0"));
        }
        Ok(FlatConcave { p, y0 })
    }
}

impl<T: Scalar> Smooth<T> for FlatConcave<T> {
    fn jet(&self, y: T) -> Jet<T> {
        if y >= self.y0 {
            return Jet::constant(T::one());
        }
        let one = T::one();
        let z = (self.y0 - y) / self.y0;
        let p = self.p;
        Jet {
            v: one - z.powf(p),
            d1: p / self.y0 * z.powf(p - one),
            d2: -p * (p - one) / (self.y0 * self.y0) * z.powf(p - lit(2.0)),
        }
    }
}

/// `g ∘ s` as a smooth function of `x`.
pub struct Composed<'a, T, G> {
    pub outer: &'a G,
    pub scale: &'a ScalePotential<T>,
}

impl<T: Scalar, G: Smooth<T>> Smooth<T> for Composed<'_, T, G> {
    fn jet(&self, x: T) -> Jet<T> {
        let js: Jet<T> = self.scale.s.jet(x);
        let jg = self.outer.jet(js.v);
        js.compose(jg.v, jg.d1, jg.d2)
    }
}

impl<T: Scalar> ScalePotential<T> {
    pub fn new(s: Expr, upper: T) -> Result<Self> {
        if !(upper > T::zero()) {
            return Err(Error::domain("scale interval (0, upper] needs upper > 0"));
        }
        let s0: T = s.eval(T::zero());
        if s0.abs() > lit(1e-12) {
            return Err(Error::invalid(format!("scale function must vanish at 0, s(0) = {}", s0)));
        }
        let mut prev = s0;
        for x in sample_grid(T::zero(), upper, SAMPLE_POINTS).skip(1) {
            let j: Jet<T> = s.jet(x);
            if !(j.d1 > T::zero()) || !(j.v > prev) {
                return Err(Error::invalid(format!("scale function not strictly increasing near x = {}", x)));
            }
            prev = j.v;
        }
        Ok(ScalePotential { s, upper })
    }

    pub fn from_spec(spec: &ScaleSpec) -> Result<Self> {
        Self::new(spec.s.clone(), lit(spec.upper))
    }

    /// `2(s(x) ∧ s(y))`.
    pub fn eval_scale_min(&self, x: T, y: T) -> Result<T> {
        if !(x > T::zero() && y > T::zero()) {
            return Err(Error::domain("scale potential is defined for x, y > 0"));
        }
        Ok(lit::<T>(2.0) * self.s.eval(x).min(self.s.eval(y)))
    }

    /// Generator coefficient `b = 1/s'`.
    pub fn b(&self, x: T) -> T {
        T::one() / self.s.jet(x).d1
    }

    /// `s⁻¹(y)` by bisection on `[0, upper]` to `1e-12`.
    pub fn inverse(&self, y: T) -> Result<T> {
        let (mut lo, mut hi) = (T::zero(), self.upper);
        let (slo, shi): (T, T) = (self.s.eval(lo), self.s.eval(hi));
        if !(y >= slo && y <= shi) {
            return Err(Error::domain(format!("{} outside the range [{}, {}] of s", y, slo, shi)));
        }
        let tol = lit::<T>(1e-12);
        while hi - lo > tol {
            let mid = lit::<T>(0.5) * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.s.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lit::<T>(0.5) * (lo + hi))
    }

    /// Whether `f = g ∘ s` has `g'' ≤ tol` at `n` points of the scale range.
    ///
    /// Points are spread uniformly in `y = s(x)` and mapped back with
    /// [`inverse`](Self::inverse); `g''` comes from the chain rule
    /// `g'' = (f'' − f' s''/s')/s'²`.
    pub fn is_excessive_for_scale<F: Smooth<T> + ?Sized>(&self, f: &F, n: usize, tol: T) -> Result<ExcessiveVerdict<T>> {
        if n < 2 {
            return Err(Error::invalid("need at least two sample points"));
        }
        let top: T = self.s.eval(self.upper);
        let mut verdict = ExcessiveVerdict { excessive: true, max_g2: T::neg_infinity(), first_violation: None };
        for i in 1..=n {
            let y = top * from_usize::<T>(i) / from_usize::<T>(n);
            let x = self.inverse(y)?;
            let jf = f.jet(x);
            if jf.v < -tol {
                return Err(Error::NotExcessive(format!("f({}) = {} is negative", x, jf.v)));
            }
            let js: Jet<T> = self.s.jet(x);
            let g2 = (jf.d2 - jf.d1 * js.d2 / js.d1) / (js.d1 * js.d1);
            verdict.max_g2 = verdict.max_g2.max(g2);
            if g2 > tol {
                verdict.excessive = false;
                verdict.first_violation.get_or_insert(x);
            }
        }
        Ok(verdict)
    }

    /// Residuals of `∫₀^{s(x₀)} 2(s(x)∧y)(−½ f̂''(y)) dy − f̂(s(x))` with `f̂ = f̂^{(p)}` flat after `s(x₀)`.
    pub fn riesz_reconstruct(&self, p: T, x0: T, x_grid: &[T]) -> Result<Vec<(T, T)>> {
        let f = FlatConcave::new(p, self.s.eval(x0))?;
        let (tol, rtol) = (lit::<T>(1e-13), lit::<T>(1e-12));
        x_grid
            .iter()
            .map(|&x| {
                let sx: T = self.s.eval(x);
                let cut = sx.min(f.y0);
                let lower = adaptive(&|y: T| -y * f.jet(y).d2, T::zero(), cut, tol, rtol, 2000)?.value;
                let upper = if f.y0 > cut {
                    sx * adaptive(&|y: T| -f.jet(y).d2, cut, f.y0, tol, rtol, 2000)?.value
                } else {
                    T::zero()
                };
                Ok((x, lower + upper - f.value(sx)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_pair(beta: f64) -> PQPotential<f64> {
        PQPotential::new(Expr::parse("exp(x)").unwrap(), Expr::parse("exp(-x)").unwrap(), beta, (-3.0, 3.0)).unwrap()
    }

    #[test]
    fn pq_examples() {
        let p = exp_pair(0.5);
        assert!((p.eval_pq(0.7, 0.7) - 1.0).abs() < 1e-15);
        assert!((p.eval_pq(0.0, 2.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(p.eval_pq(2.0, 1.0), p.eval_pq(1.0, 2.0));
        let v = p.eval_v_pq(1.0, 2.0).unwrap();
        assert!((v - ((-1.0f64).exp() - (-3.0f64).exp())).abs() < 1e-15);
        assert!(p.eval_v_pq(1e-12, 2.0).unwrap().abs() < 1e-11);
        assert!((p.tau(0.3).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tau_matches_local_increment() {
        let p = exp_pair(0.5);
        let (d, h) = (0.4, 1e-5);
        let lhs = p.eval_pq(d, d) - p.eval_pq(d, d - h);
        let jq = p.q.jet(d);
        let want = jq.v * p.p.jet(d).d1 * h;
        assert!((lhs / want - 1.0).abs() < 1e-2);
    }

    #[test]
    fn invalid_pairs_rejected() {
        let bad = PQPotential::new(Expr::parse("exp(-x)").unwrap(), Expr::parse("exp(-x)").unwrap(), 0.5, (0.0, 1.0));
        assert!(bad.is_err());
        // correct shape but wrong β for b ≡ 1
        let p = exp_pair(0.7);
        assert!(p.check_eigen(&Expr::parse("1").unwrap()).is_err());
    }

    #[test]
    fn wronskian_zero_density() {
        let p = exp_pair(0.5);
        let rep = p.wronskian_defect(&Expr::parse("1").unwrap(), &|_x: f64| 0.0, (-1.0, 1.0), &[0.0, 0.5], 1e-3).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert!((rep.c_pq - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scale_examples() {
        let s = ScalePotential::new(Expr::parse("x").unwrap(), 5.0).unwrap();
        assert_eq!(s.eval_scale_min(2.0, 3.0).unwrap(), 4.0);
        let s2 = ScalePotential::new(Expr::parse("x^2").unwrap(), 5.0).unwrap();
        assert_eq!(s2.eval_scale_min(2.0, 3.0).unwrap(), 8.0);
        assert_eq!(s2.eval_scale_min(1.5, 1.5).unwrap(), 2.0 * 2.25);
        assert!((s2.inverse(2.0).unwrap() - 2f64.sqrt()).abs() < 1e-11);
        assert!(ScalePotential::new(Expr::parse("x + 1").unwrap(), 1.0).is_err());
        assert!(ScalePotential::new(Expr::parse("-x").unwrap(), 1.0).is_err());
    }

    #[test]
    fn excessiveness_by_concavity() {
        let s = ScalePotential::new(Expr::parse("x + x^2").unwrap(), 3.0).unwrap();
        let square = Expr::parse("(x + x^2)^2").unwrap();
        let v = s.is_excessive_for_scale(&square, 50, 1e-9).unwrap();
        assert!(!v.excessive && v.first_violation.is_some());
        let constant = Expr::parse("2").unwrap();
        assert!(s.is_excessive_for_scale(&constant, 50, 1e-9).unwrap().excessive);
        let f = FlatConcave::new(3.0, s.s.eval(1.0)).unwrap();
        let fs = Composed { outer: &f, scale: &s };
        assert!(s.is_excessive_for_scale(&fs, 200, 1e-9).unwrap().excessive);
        assert!(fs.jet(1.0f64).d1.abs() < 1e-15);
    }

    #[test]
    fn riesz_identity_on_identity_scale() {
        let s = ScalePotential::new(Expr::parse("x").unwrap(), 3.0).unwrap();
        let grid: Vec<f64> = (1..=12).map(|i| 0.2 * i as f64).collect();
        for (x, r) in s.riesz_reconstruct(3.0, 1.0, &grid).unwrap() {
            assert!(r.abs() < 1e-12, "x={} residual {}", x, r);
        }
    }
}
