//! Potential densities of symmetric Lévy processes with exponent `ψ`.
//!
//! All quantities are Fourier cosine integrals against `1/(β + ψ(λ))`:
//!
//! * `u^β(x) = (1/π)∫₀^∞ cos(λx)/(β+ψ(λ)) dλ`, `β > 0`;
//! * `σ²_β(x) = (2/π)∫₀^∞ (1 − cos λx)/(β+ψ(λ)) dλ`, `β ≥ 0`;
//! * `φ(x) = σ²₀(x)/2` and `u⁽⁰⁾(x,y) = φ(x) + φ(y) − φ(x−y)`;
//! * `v^β(x,y) = u^β(x−y) − u^β(x)u^β(y)/u^β(0)`.

use statrs::function::gamma::gamma;

use crate::char_exponent::{CharExponent, DEFAULT_BAND};
use crate::error::{Error, Result};
use crate::quadrature::{decaying_tail, geometric_panels, oscillatory_tail, Estimate, QuadratureConfig};
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LevyPotential<T> {
    pub psi: CharExponent<T>,
    pub beta: T,
    pub quad: QuadratureConfig,
}

/// `C_r = (4/π)∫₀^∞ sin²(s/2)/s^r ds` for `r ∈ (1, 2]`.
///
/// Evaluated as `(2/π) Γ(3−r) S(2−r)/(r−1)` with `S(e) = sin(πe/2)/e`,
/// which is regular at `r = 2` where `C₂ = 1`.
pub fn c_r_constant<T: Scalar>(r: T) -> Result<T> {
    let r = to_f64(r);
    if !(r >= 1.0 + 1e-6 && r <= 2.0) {
        return Err(Error::domain(format!("C_r needs r in (1, 2], got {}", r)));
    }
    let e = 2.0 - r;
    let s = if e.abs() < 1e-8 {
        let h = std::f64::consts::FRAC_PI_2;
        // sin(he)/e = h(1 − (he)²/6 + …)
        h * (1.0 - (h * e).powi(2) / 6.0)
    } else {
        (std::f64::consts::FRAC_PI_2 * e).sin() / e
    };
    Ok(lit(2.0 / std::f64::consts::PI * gamma(3.0 - r) * s / (r - 1.0)))
}

/// One row of [`LevyPotential::check_sigma2_asymptotics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticRow<T> {
    pub x: T,
    pub sigma2: T,
    pub ratio: T,
}

/// Outcome of [`LevyPotential::check_sigma2_regularity`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport<T> {
    /// Largest `x|σ²'(x)|/σ²(x)` seen on the grid.
    pub max_derivative_ratio: T,
    pub derivative_ok: bool,
    /// Largest second difference of `σ²`, `None` when the concavity check is skipped.
    pub max_second_difference: Option<T>,
    pub concavity_ok: bool,
    /// First grid point where a check failed.
    pub first_violation: Option<T>,
}

impl<T: Scalar> LevyPotential<T> {
    pub fn new(psi: CharExponent<T>, beta: T) -> Result<Self> {
        Self::with_config(psi, beta, QuadratureConfig::default())
    }

    pub fn with_config(psi: CharExponent<T>, beta: T, quad: QuadratureConfig) -> Result<Self> {
        if !(beta >= T::zero()) || !beta.is_finite() {
            return Err(Error::domain(format!("killing rate β = {} must be non-negative", beta)));
        }
        let (g0, _) = psi.index_range();
        if !(g0 > T::one()) {
            return Err(Error::domain("exponents with index ≤ 1 at the origin are not supported"));
        }
        Ok(LevyPotential { psi, beta, quad })
    }

    fn denom(&self, lambda: T) -> T {
        self.beta + self.psi.eval_psi(lambda)
    }

    fn split(&self, x: T) -> T {
        let ten = lit::<T>(10.0);
        if x == T::zero() {
            T::one()
        } else {
            T::one().max(ten / x.abs())
        }
    }

    fn abs_tol(&self) -> T {
        lit(self.quad.abs_tol)
    }

    fn rel_tol(&self) -> T {
        lit(self.quad.rel_tol)
    }

    /// `∫_Λ^∞ dλ/(β+ψ)` on `[start, ∞)` together with its reported truncation bound.
    fn plain_tail(&self, start: T) -> Result<Estimate<T>> {
        let (c, g) = self.psi.tail_lower_bound(lit(DEFAULT_BAND));
        let g_minus = g - T::one();
        let bound = move |lam: T| lam.powf(-g_minus) / (c * g_minus);
        decaying_tail(&|l: T| T::one() / self.denom(l), start, bound, &self.quad)
    }

    fn cos_tail(&self, x: T, start: T) -> Result<Estimate<T>> {
        oscillatory_tail(&|l: T| T::one() / self.denom(l), x.abs(), T::zero(), start, &self.quad)
    }

    fn check_budget(&self, est: Estimate<T>) -> Result<Estimate<T>> {
        let budget = self.quad.budget(to_f64(est.value));
        // the pieces each meet their own tolerance; allow them to add up
        if !(to_f64(est.err) <= 10.0 * budget) {
            return Err(Error::Quadrature { bound: to_f64(est.err), budget });
        }
        Ok(est)
    }

    /// `u^β(x)` with its error bound.
    pub fn u_beta_estimate(&self, x: T) -> Result<Estimate<T>> {
        if !(self.beta > T::zero()) {
            return Err(Error::domain("u^β needs β > 0; use σ², φ or u⁽⁰⁾ at β = 0"));
        }
        let split = self.split(x);
        let x = x.abs();
        let head = geometric_panels(
            &|l: T| (l * x).cos() / self.denom(l),
            T::zero(),
            split,
            lit::<T>(0.25) * self.abs_tol(),
            self.rel_tol(),
            self.quad.max_intervals,
        )?;
        let tail = if x == T::zero() { self.plain_tail(split)? } else { self.cos_tail(x, split)? };
        self.check_budget(head.add(tail).scale(T::FRAC_1_PI()))
    }

    pub fn eval_u_beta(&self, x: T) -> Result<T> {
        self.u_beta_estimate(x).map(|e| e.value)
    }

    /// `σ²_β(x)` with its error bound.
    pub fn sigma2_estimate(&self, x: T) -> Result<Estimate<T>> {
        if x == T::zero() {
            return Ok(Estimate::zero());
        }
        let x = x.abs();
        let split = self.split(x);
        let half = lit::<T>(0.5);
        let two = lit::<T>(2.0);
        let head = geometric_panels(
            &|l: T| {
                let s = (half * l * x).sin();
                two * s * s / self.denom(l)
            },
            T::zero(),
            split,
            lit::<T>(0.25) * self.abs_tol(),
            self.rel_tol(),
            self.quad.max_intervals,
        )?;
        let plain = self.plain_tail(split)?;
        let osc = self.cos_tail(x, split)?;
        self.check_budget(head.add(plain).sub(osc).scale(two * T::FRAC_1_PI()))
    }

    pub fn eval_sigma2(&self, x: T) -> Result<T> {
        self.sigma2_estimate(x).map(|e| e.value)
    }

    /// `φ(x) = (1/π)∫₀^∞ (1 − cos λx)/ψ(λ) dλ`, independent of `β`.
    pub fn phi_estimate(&self, x: T) -> Result<Estimate<T>> {
        let zero = LevyPotential { psi: self.psi.clone(), beta: T::zero(), quad: self.quad };
        zero.sigma2_estimate(x).map(|e| e.scale(lit(0.5)))
    }

    pub fn eval_phi(&self, x: T) -> Result<T> {
        self.phi_estimate(x).map(|e| e.value)
    }

    /// `u⁽⁰⁾(x,y) = φ(x) + φ(y) − φ(x−y)`, the potential killed at the first hit of 0.
    pub fn u0_estimate(&self, x: T, y: T) -> Result<Estimate<T>> {
        Ok(self.phi_estimate(x)?.add(self.phi_estimate(y)?).sub(self.phi_estimate(x - y)?))
    }

    pub fn eval_u0_kernel(&self, x: T, y: T) -> Result<T> {
        self.u0_estimate(x, y).map(|e| e.value)
    }

    /// `v^β(x,y) = u^β(x−y) − u^β(x)u^β(y)/u^β(0)`.
    pub fn v_beta_estimate(&self, x: T, y: T) -> Result<Estimate<T>> {
        let u0 = self.u_beta_estimate(T::zero())?;
        let uxy = self.u_beta_estimate(x - y)?;
        let ux = self.u_beta_estimate(x)?;
        let uy = self.u_beta_estimate(y)?;
        let prod = ux.value * uy.value / u0.value;
        let prod_err = prod.abs() * (ux.err / ux.value.abs() + uy.err / uy.value.abs() + u0.err / u0.value);
        Ok(Estimate::new(uxy.value - prod, uxy.err + prod_err))
    }

    pub fn eval_v_beta(&self, x: T, y: T) -> Result<T> {
        self.v_beta_estimate(x, y).map(|e| e.value)
    }

    /// `(1/π)∫₀^∞ sin(λc)/(λ(β+ψ(λ))) dλ`, so that `∫_a^b u^β(x−y) dy`
    /// equals the difference of this at `c = x−a` and `c = x−b`.
    pub fn sine_potential_estimate(&self, c: T) -> Result<Estimate<T>> {
        if !(self.beta > T::zero()) {
            return Err(Error::domain("indicator potentials of a Lévy base need β > 0"));
        }
        if c == T::zero() {
            return Ok(Estimate::zero());
        }
        let sign = c.signum();
        let c = c.abs();
        let split = self.split(c);
        let head = geometric_panels(
            &|l: T| (l * c).sin() / (l * self.denom(l)),
            T::zero(),
            split,
            lit::<T>(0.25) * self.abs_tol(),
            self.rel_tol(),
            self.quad.max_intervals,
        )?;
        let tail = oscillatory_tail(
            &|l: T| T::one() / (l * self.denom(l)),
            c,
            -T::FRAC_PI_2(),
            split,
            &self.quad,
        )?;
        self.check_budget(head.add(tail).scale(sign * T::FRAC_1_PI()))
    }

    /// `σ²_β(x)·|x|·ψ(1/x)/C_r` for each `x`, with `r` the index at infinity.
    pub fn check_sigma2_asymptotics(&self, xs: &[T]) -> Result<Vec<AsymptoticRow<T>>> {
        let r = self.psi.index_at_infinity();
        let cr = if self.psi.is_pure_gaussian() {
            // σ² ~ |x|/C: normalise by 1/C through ψ(1/x)·|x| = C/|x|
            T::one()
        } else {
            c_r_constant(r)?
        };
        xs.iter()
            .map(|&x| {
                if !(x > T::zero()) {
                    return Err(Error::domain("asymptotic check needs positive x"));
                }
                let s2 = self.eval_sigma2(x)?;
                let ratio = s2 * x * self.psi.eval_psi(T::one() / x) / cr;
                Ok(AsymptoticRow { x, sigma2: s2, ratio })
            })
            .collect()
    }

    /// Derivative bound `|σ²'(x)| ≤ σ²(x)/x` and, at `β = 0`, concavity of `σ²`,
    /// both checked by finite differences on `grid` (positive, increasing).
    pub fn check_sigma2_regularity(&self, grid: &[T], tol: T) -> Result<RegularityReport<T>> {
        if !self.psi.is_stable_mixture() && !self.psi.is_pure_gaussian() {
            return Err(Error::domain("regularity check needs a stable mixture"));
        }
        let do_concavity = self.beta == T::zero() && !self.psi.is_pure_gaussian();
        let mut report = RegularityReport {
            max_derivative_ratio: T::zero(),
            derivative_ok: true,
            max_second_difference: if do_concavity { Some(T::neg_infinity()) } else { None },
            concavity_ok: true,
            first_violation: None,
        };
        let rel = lit::<T>(1e-3);
        for &x in grid {
            if !(x > T::zero()) {
                return Err(Error::domain("regularity grid must be positive"));
            }
            let h = rel * x;
            let s_m = self.eval_sigma2(x - h)?;
            let s_0 = self.eval_sigma2(x)?;
            let s_p = self.eval_sigma2(x + h)?;
            let d1 = (s_p - s_m) / (lit::<T>(2.0) * h);
            let ratio = x * d1.abs() / s_0;
            report.max_derivative_ratio = report.max_derivative_ratio.max(ratio);
            if d1.abs() > s_0 / x + tol {
                report.derivative_ok = false;
                report.first_violation.get_or_insert(x);
            }
            if do_concavity {
                let second = s_p - lit::<T>(2.0) * s_0 + s_m;
                let worst = report.max_second_difference.unwrap();
                report.max_second_difference = Some(worst.max(second));
                if second > tol {
                    report.concavity_ok = false;
                    report.first_violation.get_or_insert(x);
                }
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian_half() -> LevyPotential<f64> {
        LevyPotential::new(CharExponent::brownian(0.5).unwrap(), 0.5).unwrap()
    }

    #[test]
    fn brownian_closed_form() {
        let p = brownian_half();
        for &x in &[0.0, 0.1, 1.0, 5.0, -2.0] {
            let got = p.eval_u_beta(x).unwrap();
            let want = (-(x as f64).abs()).exp();
            assert!(((got - want) / want).abs() < 1e-7, "x={} {} vs {}", x, got, want);
        }
        let s = p.eval_sigma2(0.5).unwrap();
        assert!((s - 2.0 * (1.0 - (-0.5f64).exp())).abs() < 1e-7);
        assert_eq!(p.eval_sigma2(0.0).unwrap(), 0.0);
    }

    #[test]
    fn general_brownian_coefficients() {
        // u^β(x) = e^{−√(β/C)|x|}/(2√(βC))
        let (c, beta) = (2.0f64, 0.3f64);
        let p = LevyPotential::new(CharExponent::brownian(c).unwrap(), beta).unwrap();
        for &x in &[0.0f64, 0.4, 3.0] {
            let want = (-(beta / c).sqrt() * x).exp() / (2.0 * (beta * c).sqrt());
            assert!((p.eval_u_beta(x).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn v_beta_brownian() {
        let p = brownian_half();
        let want = (-1.0f64).exp() * (1.0 - (-2.0f64).exp());
        assert!((p.eval_v_beta(1.0, 2.0).unwrap() - want).abs() < 1e-8);
        assert!(p.eval_v_beta(1.0, 0.0).unwrap().abs() < 1e-8);
    }

    #[test]
    fn u_beta_requires_positive_beta() {
        let p = LevyPotential::new(CharExponent::stable(1.5).unwrap(), 0.0).unwrap();
        assert!(matches!(p.eval_u_beta(1.0), Err(Error::Domain(_))));
        assert!(p.eval_sigma2(1.0).is_ok());
    }

    #[test]
    fn sine_potential_gives_indicator_potential() {
        // ∫_0^2 e^{−|1−y|} dy = 2(1 − e^{−1})
        let p = brownian_half();
        let f = p.sine_potential_estimate(1.0).unwrap().value - p.sine_potential_estimate(-1.0).unwrap().value;
        assert!((f - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-8);
    }

    #[test]
    fn c_r_domain_and_value_at_two() {
        assert!((c_r_constant(2.0f64).unwrap() - 1.0).abs() < 1e-12);
        assert!((c_r_constant(2.0f64 - 1e-10).unwrap() - 1.0).abs() < 1e-8);
        assert!(c_r_constant(1.0f64 + 1e-7).is_err());
        assert!(c_r_constant(2.01f64).is_err());
    }

    #[test]
    fn stable_sigma2_is_exact_power() {
        // σ²₀(x) = C_r|x|^{r−1} for ψ = |λ|^r
        let p = LevyPotential::new(CharExponent::stable(1.5).unwrap(), 0.0).unwrap();
        let cr = c_r_constant(1.5).unwrap();
        for &x in &[1e-3f64, 0.3, 2.0] {
            let got = p.eval_sigma2(x).unwrap();
            assert!((got / (cr * x.powf(0.5)) - 1.0).abs() < 1e-6, "x={} ratio {}", x, got / (cr * x.powf(0.5)));
        }
    }

    #[test]
    fn u0_for_brownian_with_unit_phi() {
        // ψ = λ²/2 gives φ(x) = |x| and u⁽⁰⁾(x,y) = 2(x∧y) on the positive axis
        let p = LevyPotential::<f64>::new(CharExponent::brownian(0.5).unwrap(), 0.0).unwrap();
        assert!((p.eval_phi(0.7).unwrap() - 0.7).abs() < 1e-7);
        assert!((p.eval_u0_kernel(0.5, 1.25).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn regularity_report_for_stable() {
        let p = LevyPotential::<f64>::new(CharExponent::stable(1.5).unwrap(), 0.0).unwrap();
        let rep = p.check_sigma2_regularity(&[0.05, 0.5, 2.0], 1e-7).unwrap();
        assert!(rep.derivative_ok && rep.concavity_ok);
        assert!((rep.max_derivative_ratio - 0.5).abs() < 1e-4);
        let g = LevyPotential::new(CharExponent::brownian(1.0).unwrap(), 0.0).unwrap();
        assert!(g.check_sigma2_regularity(&[0.5], 1e-7).unwrap().max_second_difference.is_none());
    }
}
