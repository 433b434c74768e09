//! Excessive functions built as potentials of measures.

use serde::{Deserialize, Serialize};

use crate::diffusion::FlatConcave;
use crate::error::{Error, Result};
use crate::expr::{Jet, Smooth};
use crate::potential::SymmetricPotential;
use crate::quadrature::adaptive;
use crate::scalar::{lit, to_f64, Scalar};

/// Width of the inner interval of a flat pair.
pub const FLAT_INNER_WIDTH: f64 = 1.0;
/// Width of the outer interval of a flat pair.
pub const FLAT_OUTER_WIDTH: f64 = 1.5;
/// Exponents of the `f̂^{(p)}` pair used on scale bases.
pub const FLAT_SCALE_EXPONENTS: (f64, f64) = (3.0, 4.0);

/// JSON form, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExcessiveSpec {
    Indicator { a: f64, b: f64 },
    Atoms { atoms: Vec<(f64, f64)> },
    Const { c: f64 },
    ScaleConcave { p: f64, x0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExcessiveKind<T> {
    /// `∫_a^b u(x, y) dy`.
    Indicator { a: T, b: T },
    /// `Σ wᵢ u(x, lᵢ)`.
    Atoms(Vec<(T, T)>),
    Const(T),
    /// `f̂^{(p)}(s(x))`, concave in the scale and flat after `x₀`.
    ScaleConcave { p: T, x0: T },
}

/// An excessive function for a given base potential.
#[derive(Debug, Clone, PartialEq)]
pub struct Excessive<T> {
    pub kind: ExcessiveKind<T>,
    pub base: SymmetricPotential<T>,
}

impl<T: Scalar> ExcessiveKind<T> {
    pub fn from_spec(spec: &ExcessiveSpec) -> Self {
        match spec {
            ExcessiveSpec::Indicator { a, b } => ExcessiveKind::Indicator { a: lit(*a), b: lit(*b) },
            ExcessiveSpec::Atoms { atoms } => {
                ExcessiveKind::Atoms(atoms.iter().map(|&(l, w)| (lit(l), lit(w))).collect())
            }
            ExcessiveSpec::Const { c } => ExcessiveKind::Const(lit(*c)),
            ExcessiveSpec::ScaleConcave { p, x0 } => ExcessiveKind::ScaleConcave { p: lit(*p), x0: lit(*x0) },
        }
    }

    pub fn to_spec(&self) -> ExcessiveSpec {
        match self {
            ExcessiveKind::Indicator { a, b } => ExcessiveSpec::Indicator { a: to_f64(*a), b: to_f64(*b) },
            ExcessiveKind::Atoms(atoms) => {
                ExcessiveSpec::Atoms { atoms: atoms.iter().map(|&(l, w)| (to_f64(l), to_f64(w))).collect() }
            }
            ExcessiveKind::Const(c) => ExcessiveSpec::Const { c: to_f64(*c) },
            ExcessiveKind::ScaleConcave { p, x0 } => ExcessiveSpec::ScaleConcave { p: to_f64(*p), x0: to_f64(*x0) },
        }
    }
}

fn tight<T: Scalar>() -> (T, T) {
    (lit(1e-15), lit(1e-13))
}

impl<T: Scalar> Excessive<T> {
    pub fn new(kind: ExcessiveKind<T>, base: SymmetricPotential<T>) -> Result<Self> {
        match &kind {
            ExcessiveKind::Indicator { a, b } => {
                if !(a < b) {
                    return Err(Error::domain("indicator potential needs a < b"));
                }
                if let SymmetricPotential::Levy(p) = &base {
                    if !(p.beta > T::zero()) {
                        return Err(Error::domain("indicator potential of a Lévy base needs β > 0"));
                    }
                }
                if base.pq_factors(*a).is_some() {
                    base.check_domain(*a)?;
                    base.check_domain(*b)?;
                }
            }
            ExcessiveKind::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::domain("atomic measure needs at least one atom"));
                }
                for &(l, w) in atoms {
                    if !(w > T::zero()) {
                        return Err(Error::domain("atom weights must be positive"));
                    }
                    base.check_domain(l)?;
                }
            }
            ExcessiveKind::Const(c) => {
                if !(*c >= T::zero()) {
                    return Err(Error::domain("constant excessive function must be non-negative"));
                }
            }
            ExcessiveKind::ScaleConcave { p, x0 } => match &base {
                SymmetricPotential::Scale(s) => {
                    if !(*x0 > T::zero() && *x0 <= s.upper) {
                        return Err(Error::domain("x₀ must lie in (0, upper]"));
                    }
                    FlatConcave::new(*p, s.s.eval(*x0))?;
                }
                _ => return Err(Error::invalid("scale_concave needs a scale base")),
            },
        }
        Ok(Excessive { kind, base })
    }

    pub fn from_spec(spec: &ExcessiveSpec, base: SymmetricPotential<T>) -> Result<Self> {
        Self::new(ExcessiveKind::from_spec(spec), base)
    }

    /// Points where `f'` or `f''` may jump.
    pub fn breakpoints(&self) -> Vec<T> {
        match &self.kind {
            ExcessiveKind::Indicator { a, b } => vec![*a, *b],
            ExcessiveKind::Atoms(atoms) => atoms.iter().map(|a| a.0).collect(),
            ExcessiveKind::Const(_) => Vec::new(),
            ExcessiveKind::ScaleConcave { x0, .. } => vec![*x0],
        }
    }

    fn flat_concave(&self) -> Option<(FlatConcave<T>, &crate::diffusion::ScalePotential<T>)> {
        match (&self.kind, &self.base) {
            (ExcessiveKind::ScaleConcave { p, x0 }, SymmetricPotential::Scale(s)) => {
                Some((FlatConcave { p: *p, y0: s.s.eval(*x0) }, s))
            }
            _ => None,
        }
    }

    /// `(∫_a^c P, ∫_c^b Q)` with `c = clamp(x, a, b)` for product-form bases.
    fn pq_integrals(&self, a: T, b: T, x: T) -> Result<(T, T)> {
        let (tol, rtol) = tight::<T>();
        let c = x.max(a).min(b);
        let left = if c > a {
            adaptive(&|y: T| self.base.pq_factors(y).unwrap().0.v, a, c, tol, rtol, 4000)?.value
        } else {
            T::zero()
        };
        let right = if b > c {
            adaptive(&|y: T| self.base.pq_factors(y).unwrap().1.v, c, b, tol, rtol, 4000)?.value
        } else {
            T::zero()
        };
        Ok((left, right))
    }

    pub fn eval(&self, x: T) -> Result<T> {
        self.base.check_domain(x)?;
        match &self.kind {
            ExcessiveKind::Const(c) => Ok(*c),
            ExcessiveKind::Atoms(atoms) => {
                let mut s = T::zero();
                for &(l, w) in atoms {
                    s = s + w * self.base.eval(x, l)?;
                }
                Ok(s)
            }
            ExcessiveKind::ScaleConcave { .. } => {
                let (f, s) = self.flat_concave().unwrap();
                Ok(f.value(s.s.eval(x)))
            }
            ExcessiveKind::Indicator { a, b } => {
                if let SymmetricPotential::Levy(p) = &self.base {
                    let hi = p.sine_potential_estimate(x - *a)?;
                    let lo = p.sine_potential_estimate(x - *b)?;
                    return Ok(hi.value - lo.value);
                }
                if let Some((px, qx)) = self.base.pq_factors(x) {
                    let (ip, iq) = self.pq_integrals(*a, *b, x)?;
                    return Ok(qx.v * ip + px.v * iq);
                }
                self.indicator_by_quadrature(*a, *b, x)
            }
        }
    }

    fn indicator_by_quadrature(&self, a: T, b: T, x: T) -> Result<T> {
        let mut cuts = vec![a];
        for c in [x, T::zero()] {
            if c > a && c < b {
                cuts.push(c);
            }
        }
        cuts.push(b);
        cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        let mut total = T::zero();
        for w in cuts.windows(2) {
            let est = adaptive(
                &|y: T| if y == T::zero() { T::zero() } else { self.base.eval(x, y).unwrap_or(T::nan()) },
                w[0],
                w[1],
                lit(1e-9),
                lit(1e-7),
                2000,
            )?;
            total = total + est.value;
        }
        Ok(total)
    }

    /// `f'(x)`.
    ///
    /// Available for indicator potentials of translation-invariant and
    /// product-form bases (`u(x−a) − u(x−b)` in the first case), atoms and
    /// constants on product-form bases, and the scale-concave kind.
    pub fn eval_deriv(&self, x: T) -> Result<T> {
        self.base.check_domain(x)?;
        match &self.kind {
            ExcessiveKind::Const(_) => Ok(T::zero()),
            ExcessiveKind::ScaleConcave { .. } => {
                let (f, s) = self.flat_concave().unwrap();
                let js: Jet<T> = s.s.jet(x);
                Ok(f.jet(js.v).d1 * js.d1)
            }
            ExcessiveKind::Indicator { a, b } => {
                if let SymmetricPotential::Levy(p) = &self.base {
                    return Ok(p.eval_u_beta(x - *a)? - p.eval_u_beta(x - *b)?);
                }
                if let Some((px, qx)) = self.base.pq_factors(x) {
                    let (ip, iq) = self.pq_integrals(*a, *b, x)?;
                    return Ok(qx.d1 * ip + px.d1 * iq);
                }
                Err(Error::invalid("derivative of an indicator potential needs a translation-invariant or pq base"))
            }
            ExcessiveKind::Atoms(atoms) => {
                if self.base.pq_factors(x).is_none() {
                    return Err(Error::invalid("derivative of an atomic potential needs a pq base"));
                }
                let mut s = T::zero();
                for &(l, w) in atoms {
                    let (px, qx) = self.base.pq_factors(x).unwrap();
                    let (pl, ql) = self.base.pq_factors(l).unwrap();
                    if x < l {
                        s = s + w * px.d1 * ql.v;
                    } else if x > l {
                        s = s + w * pl.v * qx.d1;
                    } else {
                        return Err(Error::domain("atomic potential is not differentiable at an atom"));
                    }
                }
                Ok(s)
            }
        }
    }
}

/// Builds two excessive functions with `f'(x₀) = g'(x₀) = 0` whose ratio is
/// not constant near `x₀`.
///
/// Translation-invariant and product-form bases get nested indicator
/// potentials of widths [`FLAT_INNER_WIDTH`] and [`FLAT_OUTER_WIDTH`]; on a
/// product-form base the right end of each interval is moved until the
/// derivative at `x₀` vanishes. Scale bases get `f̂^{(3)}` and `f̂^{(4)}`.
pub fn make_flat_pair<T: Scalar>(x0: T, base: &SymmetricPotential<T>) -> Result<(Excessive<T>, Excessive<T>)> {
    base.check_domain(x0)?;
    let (f, g) = match base {
        SymmetricPotential::Scale(_) => {
            let (p, q) = FLAT_SCALE_EXPONENTS;
            (
                Excessive::new(ExcessiveKind::ScaleConcave { p: lit(p), x0 }, base.clone())?,
                Excessive::new(ExcessiveKind::ScaleConcave { p: lit(q), x0 }, base.clone())?,
            )
        }
        SymmetricPotential::Levy(_) => {
            let nest = |w: f64| {
                let h = lit::<T>(0.5 * w);
                Excessive::new(ExcessiveKind::Indicator { a: x0 - h, b: x0 + h }, base.clone())
            };
            (nest(FLAT_INNER_WIDTH)?, nest(FLAT_OUTER_WIDTH)?)
        }
        SymmetricPotential::PQ(_) | SymmetricPotential::PQKilled(_) => {
            (balanced_indicator(x0, lit(FLAT_INNER_WIDTH), base)?, balanced_indicator(x0, lit(FLAT_OUTER_WIDTH), base)?)
        }
        SymmetricPotential::LevyKilled(_) | SymmetricPotential::LevyHit(_) => {
            return Err(Error::invalid(
                "flat pairs are built for translation-invariant, pq and scale bases only",
            ))
        }
    };
    verify_flat_pair(x0, &f, &g)?;
    Ok((f, g))
}

/// Indicator `[x₀ − w/2, b]` on a product-form base with `b` chosen so the
/// derivative at `x₀` vanishes.
fn balanced_indicator<T: Scalar>(x0: T, w: T, base: &SymmetricPotential<T>) -> Result<Excessive<T>> {
    let a = x0 - lit::<T>(0.5) * w;
    let (lo_lim, hi_lim) = match base {
        SymmetricPotential::PQ(p) | SymmetricPotential::PQKilled(p) => (p.interval.0, p.interval.1),
        _ => unreachable!(),
    };
    if a < lo_lim || (matches!(base, SymmetricPotential::PQKilled(_)) && !(a > T::zero())) {
        return Err(Error::domain("flat pair interval leaves the state space; move x₀ inward"));
    }
    let deriv_at = |b: T| -> Result<T> {
        Excessive::new(ExcessiveKind::Indicator { a, b }, base.clone())?.eval_deriv(x0)
    };
    let (mut lo, mut hi) = (x0, hi_lim);
    if deriv_at(hi)? < T::zero() {
        return Err(Error::domain("no balancing right end inside the working interval"));
    }
    for _ in 0..200 {
        let mid = lit::<T>(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv_at(mid)? < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = lit::<T>(0.5) * (lo + hi);
    Excessive::new(ExcessiveKind::Indicator { a, b }, base.clone())
}

fn verify_flat_pair<T: Scalar>(x0: T, f: &Excessive<T>, g: &Excessive<T>) -> Result<()> {
    let tol = lit::<T>(1e-8);
    for (name, e) in [("f", f), ("g", g)] {
        let d = e.eval_deriv(x0)?;
        if d.abs() > tol {
            return Err(Error::invalid(format!("{}'(x₀) = {} is not flat", name, d)));
        }
    }
    let h = lit::<T>(0.1);
    let ratio = |x: T| -> Result<T> { Ok(f.eval(x)? / g.eval(x)?) };
    let (rm, r0, rp) = (ratio(x0 - h)?, ratio(x0)?, ratio(x0 + h)?);
    let second = rp - lit::<T>(2.0) * r0 + rm;
    if second.abs() <= lit::<T>(1e-12) * r0.abs() {
        return Err(Error::invalid("f/g is numerically constant near x₀"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::char_exponent::CharExponent;
    use crate::diffusion::{PQPotential, ScalePotential};
    use crate::expr::Expr;
    use crate::levy::LevyPotential;

    fn exp_base() -> SymmetricPotential<f64> {
        SymmetricPotential::PQ(
            PQPotential::new(Expr::parse("exp(x)").unwrap(), Expr::parse("exp(-x)").unwrap(), 0.5, (-4.0, 4.0)).unwrap(),
        )
    }

    fn brownian_levy() -> SymmetricPotential<f64> {
        SymmetricPotential::Levy(LevyPotential::new(CharExponent::brownian(0.5).unwrap(), 0.5).unwrap())
    }

    #[test]
    fn indicator_closed_form() {
        let want = 2.0 * (1.0 - (-1.0f64).exp());
        for base in [exp_base(), brownian_levy()] {
            let e = Excessive::new(ExcessiveKind::Indicator { a: 0.0, b: 2.0 }, base).unwrap();
            assert!((e.eval(1.0).unwrap() - want).abs() < 1e-8);
            assert!(e.eval_deriv(1.0).unwrap().abs() < 1e-12);
            assert!((e.eval_deriv(0.0).unwrap() - (1.0 - (-2.0f64).exp())).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_and_single_atom() {
        let c = Excessive::new(ExcessiveKind::Const(1.0), exp_base()).unwrap();
        assert_eq!(c.eval(0.3).unwrap(), 1.0);
        let a = Excessive::new(ExcessiveKind::Atoms(vec![(0.0, 1.0)]), exp_base()).unwrap();
        assert!((a.eval(0.7).unwrap() - (-0.7f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pq_derivative_matches_finite_difference() {
        let e = Excessive::new(ExcessiveKind::Indicator { a: -0.5, b: 1.0 }, exp_base()).unwrap();
        let (x, h) = (0.3, 1e-5);
        let fd = (e.eval(x + h).unwrap() - e.eval(x - h).unwrap()) / (2.0 * h);
        assert!((fd - e.eval_deriv(x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn flat_pairs() {
        let (f, g) = make_flat_pair(1.0, &exp_base()).unwrap();
        assert!(matches!(f.kind, ExcessiveKind::Indicator { a, b } if (a - 0.5).abs() < 1e-15 && (b - 1.5).abs() < 1e-9));
        assert!(matches!(g.kind, ExcessiveKind::Indicator { a, .. } if (a - 0.25).abs() < 1e-15));
        let scale = SymmetricPotential::Scale(ScalePotential::new(Expr::parse("x").unwrap(), 3.0).unwrap());
        let (f, g) = make_flat_pair(1.0, &scale).unwrap();
        assert_eq!(f.eval_deriv(1.0).unwrap(), 0.0);
        assert_eq!(g.eval_deriv(1.0).unwrap(), 0.0);
        assert!(make_flat_pair(0.0, &scale).is_err());
    }

    #[test]
    fn spec_roundtrip_and_unknown_keys() {
        let spec: ExcessiveSpec = serde_json::from_str(r#"{"kind":"indicator","a":0,"b":2}"#).unwrap();
        assert_eq!(ExcessiveKind::<f64>::from_spec(&spec).to_spec(), spec);
        assert!(serde_json::from_str::<ExcessiveSpec>(r#"{"kind":"const","c":1,"d":2}"#).is_err());
    }
}
