//! Symmetric Lévy characteristic exponents `ψ(λ) = Cλ² + Σ wᵢ|λ|^{sᵢ}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Default width of the exponent band used by [`CharExponent::psi_bounds`].
pub const DEFAULT_BAND: f64 = 0.05;

/// A symmetric characteristic exponent built from stable atoms and an
/// optional Gaussian part.
#[derive(Debug, Clone, PartialEq)]
pub enum CharExponent<T> {
    /// `|λ|^r` with `r ∈ (1, 2]`.
    PureStable { index: T },
    /// `Σ wᵢ|λ|^{sᵢ}` with `sᵢ ∈ (1, 2)` and `wᵢ > 0`.
    StableMixture { atoms: Vec<(T, T)> },
    /// `Cλ² + Σ wᵢ|λ|^{sᵢ}`; the atom list may be empty.
    GaussianPlus { c: T, atoms: Vec<(T, T)> },
}

/// JSON form: `{"kind": "stable"|"mixture"|"gaussian_plus", "index", "atoms", "C"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiSpec {
    pub kind: PsiKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiKind {
    Stable,
    Mixture,
    GaussianPlus,
}

fn check_atoms<T: Scalar>(atoms: &[(T, T)]) -> Result<()> {
    for &(s, w) in atoms {
        if !(s > T::one() && s < lit(2.0)) {
            return Err(Error::domain(format!(
                "mixture atom index {} must lie in (1, 2); put a Gaussian part in C instead",
                s
            )));
        }
        if !(w > T::zero()) || !w.is_finite() {
            return Err(Error::domain(format!("mixture atom weight {} must be positive", w)));
        }
    }
    Ok(())
}

impl<T: Scalar> CharExponent<T> {
    pub fn stable(index: T) -> Result<Self> {
        if !(index > T::one() && index <= lit(2.0)) {
            return Err(Error::domain(format!("stable index {} outside (1, 2]", index)));
        }
        Ok(CharExponent::PureStable { index })
    }

    pub fn mixture(atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::domain("stable mixture needs at least one atom"));
        }
        check_atoms(&atoms)?;
        Ok(CharExponent::StableMixture { atoms })
    }

    pub fn gaussian_plus(c: T, atoms: Vec<(T, T)>) -> Result<Self> {
        if !(c >= T::zero()) || !c.is_finite() {
            return Err(Error::domain(format!("Gaussian coefficient {} must be non-negative", c)));
        }
        check_atoms(&atoms)?;
        if c == T::zero() && atoms.is_empty() {
            return Err(Error::domain("exponent is identically zero"));
        }
        Ok(CharExponent::GaussianPlus { c, atoms })
    }

    /// `Cλ²`, the Brownian exponent.
    pub fn brownian(c: T) -> Result<Self> {
        Self::gaussian_plus(c, Vec::new())
    }

    pub fn from_spec(spec: &PsiSpec) -> Result<Self> {
        let conv = |v: &Vec<(f64, f64)>| v.iter().map(|&(s, w)| (lit::<T>(s), lit::<T>(w))).collect::<Vec<_>>();
        match spec.kind {
            PsiKind::Stable => {
                if spec.atoms.is_some() || spec.c.is_some() {
                    return Err(Error::config("kind", "\"stable\" takes only \"index\""));
                }
                let r = spec.index.ok_or_else(|| Error::config("index", "missing for kind \"stable\""))?;
                Self::stable(lit(r))
            }
            PsiKind::Mixture => {
                if spec.index.is_some() || spec.c.is_some() {
                    return Err(Error::config("kind", "\"mixture\" takes only \"atoms\""));
                }
                let atoms = spec.atoms.as_ref().ok_or_else(|| Error::config("atoms", "missing for kind \"mixture\""))?;
                Self::mixture(conv(atoms))
            }
            PsiKind::GaussianPlus => {
                if spec.index.is_some() {
                    return Err(Error::config("index", "not allowed for kind \"gaussian_plus\""));
                }
                let c = spec.c.ok_or_else(|| Error::config("C", "missing for kind \"gaussian_plus\""))?;
                Self::gaussian_plus(lit(c), spec.atoms.as_ref().map(conv).unwrap_or_default())
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PsiSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> PsiSpec {
        let conv = |a: &Vec<(T, T)>| a.iter().map(|&(s, w)| (to_f64(s), to_f64(w))).collect::<Vec<_>>();
        match self {
            CharExponent::PureStable { index } => {
                PsiSpec { kind: PsiKind::Stable, index: Some(to_f64(*index)), atoms: None, c: None }
            }
            CharExponent::StableMixture { atoms } => {
                PsiSpec { kind: PsiKind::Mixture, index: None, atoms: Some(conv(atoms)), c: None }
            }
            CharExponent::GaussianPlus { c, atoms } => PsiSpec {
                kind: PsiKind::GaussianPlus,
                index: None,
                atoms: if atoms.is_empty() { None } else { Some(conv(atoms)) },
                c: Some(to_f64(*c)),
            },
        }
    }

    /// The `C` in `ψ(λ) = Cλ² + ψ₁(λ)`.
    pub fn gaussian_coeff(&self) -> T {
        match self {
            CharExponent::PureStable { index } if *index == lit(2.0) => T::one(),
            CharExponent::GaussianPlus { c, .. } => *c,
            _ => T::zero(),
        }
    }

    /// Stable atoms `(s, w)`; a pure stable exponent is a single unit atom
    /// (for `r = 2` that atom is the Gaussian part, reported with `s = 2`).
    pub fn atoms(&self) -> Vec<(T, T)> {
        match self {
            CharExponent::PureStable { index } => vec![(*index, T::one())],
            CharExponent::StableMixture { atoms } => atoms.clone(),
            CharExponent::GaussianPlus { atoms, .. } => atoms.clone(),
        }
    }

    /// True for `Cλ²` alone (including the stable index 2).
    pub fn is_pure_gaussian(&self) -> bool {
        match self {
            CharExponent::PureStable { index } => *index == lit(2.0),
            CharExponent::StableMixture { .. } => false,
            CharExponent::GaussianPlus { atoms, .. } => atoms.is_empty(),
        }
    }

    /// True when `ψ` is a stable mixture with no Gaussian component.
    pub fn is_stable_mixture(&self) -> bool {
        match self {
            CharExponent::PureStable { .. } | CharExponent::StableMixture { .. } => true,
            CharExponent::GaussianPlus { c, .. } => *c == T::zero(),
        }
    }

    /// `(γ₀, γ₁)`: smallest and largest power present, the Gaussian part counting as 2.
    pub fn index_range(&self) -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for (s, _) in self.atoms() {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if let CharExponent::GaussianPlus { c, .. } = self {
            if *c > T::zero() {
                lo = lo.min(lit(2.0));
                hi = lit(2.0);
            }
        }
        (lo, hi)
    }

    /// Index of regular variation at infinity.
    pub fn index_at_infinity(&self) -> T {
        self.index_range().1
    }

    pub fn eval_psi(&self, lambda: T) -> T {
        let a = lambda.abs();
        if a == T::zero() {
            return T::zero();
        }
        match self {
            CharExponent::PureStable { index } => a.powf(*index),
            CharExponent::StableMixture { atoms } => atoms.iter().map(|&(s, w)| w * a.powf(s)).sum(),
            CharExponent::GaussianPlus { c, atoms } => {
                *c * a * a + atoms.iter().map(|&(s, w)| w * a.powf(s)).sum::<T>()
            }
        }
    }

    /// `(ψ'(λ), ψ''(λ))` in closed form.
    ///
    /// Defined for `λ > 0`; a pure Gaussian exponent is smooth at the origin
    /// and accepts any `λ`.
    pub fn eval_psi_derivs(&self, lambda: T) -> Result<(T, T)> {
        let two = lit::<T>(2.0);
        if self.is_pure_gaussian() {
            let c = self.gaussian_coeff();
            return Ok((two * c * lambda, two * c));
        }
        if !(lambda > T::zero()) {
            return Err(Error::domain(format!("ψ derivatives need λ > 0, got {}", lambda)));
        }
        let c = self.gaussian_coeff();
        let mut d1 = two * c * lambda;
        let mut d2 = two * c;
        let atoms = match self {
            CharExponent::GaussianPlus { atoms, .. } => atoms.clone(),
            _ => self.atoms(),
        };
        for (s, w) in atoms {
            d1 = d1 + w * s * lambda.powf(s - T::one());
            d2 = d2 + w * s * (s - T::one()) * lambda.powf(s - two);
        }
        Ok((d1, d2))
    }

    /// Two-sided power bounds `lower ≤ ψ(λ) ≤ upper` for a stable mixture.
    ///
    /// With `μ` supported on `[γ₀, γ₁]`: for `|λ| ≤ 1` the bounds are
    /// `μ([γ₀, γ₀+ε])|λ|^{γ₀+ε}` and `|μ||λ|^{γ₀}`; for `|λ| ≥ 1` they are
    /// `μ([γ₁−ε, γ₁])|λ|^{γ₁−ε}` and `|μ||λ|^{γ₁}`. An empty band gives a zero
    /// lower bound.
    pub fn psi_bounds(&self, lambda: T, eps: T) -> Result<(T, T)> {
        if !self.is_stable_mixture() {
            return Err(Error::domain("psi_bounds needs a stable mixture without Gaussian part"));
        }
        if !(eps > T::zero()) {
            return Err(Error::domain("psi_bounds needs ε > 0"));
        }
        let atoms = self.atoms();
        let (g0, g1) = self.index_range();
        let total: T = atoms.iter().map(|a| a.1).sum();
        let a = lambda.abs();
        if a == T::zero() {
            return Ok((T::zero(), T::zero()));
        }
        let (band_mass, lower_exp, upper_exp) = if a <= T::one() {
            (atoms.iter().filter(|p| p.0 <= g0 + eps).map(|p| p.1).sum::<T>(), g0 + eps, g0)
        } else {
            (atoms.iter().filter(|p| p.0 >= g1 - eps).map(|p| p.1).sum::<T>(), g1 - eps, g1)
        };
        Ok((band_mass * a.powf(lower_exp), total * a.powf(upper_exp)))
    }

    /// `(c, γ)` with `ψ(λ) ≥ cλ^γ` for all `λ ≥ 1` and `γ > 1`.
    ///
    /// Uses the Gaussian coefficient when present, otherwise the ε-band lower
    /// bound of [`psi_bounds`](Self::psi_bounds) at `λ ≥ 1`.
    pub fn tail_lower_bound(&self, eps: T) -> (T, T) {
        let c = self.gaussian_coeff();
        if c > T::zero() {
            return (c, lit(2.0));
        }
        let (_, g1) = self.index_range();
        let mut e = eps;
        // keep γ₁ − ε above 1 so the tail bound stays finite
        if g1 - e <= T::one() {
            e = lit::<T>(0.5) * (g1 - T::one());
        }
        let band: T = self.atoms().iter().filter(|p| p.0 >= g1 - e).map(|p| p.1).sum();
        (band, g1 - e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        let p = CharExponent::stable(1.5f64).unwrap();
        assert!((p.eval_psi(4.0) - 8.0).abs() < 1e-14);
        assert_eq!(p.eval_psi(0.0), 0.0);
        let m = CharExponent::gaussian_plus(1.0f64, vec![(1.2, 1.0)]).unwrap();
        assert!((m.eval_psi(1.0) - 2.0).abs() < 1e-15);
        let g = CharExponent::stable(2.0f64).unwrap();
        assert_eq!(g.eval_psi_derivs(3.0).unwrap(), (6.0, 2.0));
        let (d1, d2) = p.eval_psi_derivs(1.0).unwrap();
        assert!((d1 - 1.5).abs() < 1e-14 && (d2 - 0.75).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = CharExponent::stable(1.5f64).unwrap();
        let h = 1e-6;
        let fd1 = (p.eval_psi(1.0 + h) - p.eval_psi(1.0 - h)) / (2.0 * h);
        let fd2 = (p.eval_psi(1.0 + 1e-4) - 2.0 * p.eval_psi(1.0) + p.eval_psi(1.0 - 1e-4)) / 1e-8;
        assert!((fd1 - 1.5).abs() < 1e-8);
        assert!((fd2 - 0.75).abs() < 1e-5);
    }

    #[test]
    fn nonpositive_lambda_rejected_for_stable() {
        let p = CharExponent::stable(1.5f64).unwrap();
        assert!(p.eval_psi_derivs(0.0).is_err());
        assert!(p.eval_psi_derivs(-1.0).is_err());
    }

    #[test]
    fn bounds_examples() {
        let p = CharExponent::mixture(vec![(1.5f64, 1.0)]).unwrap();
        let (lo, hi) = p.psi_bounds(0.5, 0.1).unwrap();
        assert!((lo - 0.5f64.powf(1.6)).abs() < 1e-15 && (hi - 0.5f64.powf(1.5)).abs() < 1e-15);
        let psi = p.eval_psi(0.5);
        assert!(lo <= psi && psi <= hi);
        let (lo, hi) = p.psi_bounds(1.0, 0.1).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
        let two = CharExponent::mixture(vec![(1.2f64, 1.0), (1.8, 1.0)]).unwrap();
        let (lo, hi) = two.psi_bounds(2.0, 0.05).unwrap();
        let v = 2f64.powf(1.2) + 2f64.powf(1.8);
        assert!(lo <= v && v <= hi);
        assert!(CharExponent::brownian(1.0f64).unwrap().psi_bounds(1.0, 0.05).is_err());
    }

    #[test]
    fn construction_guards() {
        assert!(CharExponent::stable(1.0f64).is_err());
        assert!(CharExponent::stable(2.1f64).is_err());
        assert!(CharExponent::mixture(vec![(2.0f64, 1.0)]).is_err());
        assert!(CharExponent::mixture(vec![(1.5f64, 0.0)]).is_err());
        assert!(CharExponent::mixture(Vec::<(f64, f64)>::new()).is_err());
        assert!(CharExponent::gaussian_plus(0.0f64, vec![]).is_err());
    }

    #[test]
    fn json_roundtrip_and_unknown_keys() {
        let p = CharExponent::<f64>::from_json(r#"{"kind":"mixture","atoms":[[1.3,1],[1.9,0.5]]}"#).unwrap();
        assert_eq!(p, CharExponent::mixture(vec![(1.3, 1.0), (1.9, 0.5)]).unwrap());
        let back = serde_json::to_string(&p.to_spec()).unwrap();
        assert_eq!(CharExponent::<f64>::from_json(&back).unwrap(), p);
        let g = CharExponent::<f64>::from_json(r#"{"kind":"gaussian_plus","C":0.5}"#).unwrap();
        assert_eq!(g.gaussian_coeff(), 0.5);
        assert!(CharExponent::<f64>::from_json(r#"{"kind":"stable","index":1.5,"extra":1}"#).is_err());
        assert!(CharExponent::<f64>::from_json(r#"{"kind":"stable","index":1.5,"C":1}"#).is_err());
        assert!(CharExponent::<f64>::from_json(r#"{"kind":"stable"}"#).is_err());
    }

    #[test]
    fn single_precision_instantiation() {
        let p = CharExponent::stable(1.5f32).unwrap();
        assert!((p.eval_psi(4.0f32) - 8.0).abs() < 1e-5);
    }
}
