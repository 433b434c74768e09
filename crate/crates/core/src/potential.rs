//! Symmetric potential kernels `u(x, y)` used as bases for permanental kernels.

use serde::{Deserialize, Serialize};

use crate::char_exponent::{CharExponent, PsiSpec};
use crate::diffusion::{PQPotential, PQSpec, ScalePotential, ScaleSpec};
use crate::error::{Error, Result};
use crate::expr::Jet;
use crate::levy::LevyPotential;
use crate::linalg::Matrix;
use crate::quadrature::QuadratureConfig;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum SymmetricPotential<T> {
    /// `u^β(x − y)` of a Lévy process killed at an exponential time.
    Levy(LevyPotential<T>),
    /// `u⁽⁰⁾(x, y)` of a Lévy process killed at the first hit of 0.
    LevyKilled(LevyPotential<T>),
    /// `v^β(x, y)`: exponential killing and killing at the first hit of 0.
    LevyHit(LevyPotential<T>),
    /// `p(x∧y) q(x∨y)`.
    PQ(PQPotential<T>),
    /// `p(x∧y) q(x∨y) − (p(0)/q(0)) q(x)q(y)` on `x, y > 0`.
    PQKilled(PQPotential<T>),
    /// `2(s(x) ∧ s(y))` on `x, y > 0`.
    Scale(ScalePotential<T>),
}

/// JSON form of a base potential, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Levy {
        psi: PsiSpec,
        beta: f64,
        #[serde(default)]
        quad: Option<QuadratureConfig>,
    },
    LevyKilled {
        psi: PsiSpec,
        #[serde(default)]
        quad: Option<QuadratureConfig>,
    },
    LevyHit {
        psi: PsiSpec,
        beta: f64,
        #[serde(default)]
        quad: Option<QuadratureConfig>,
    },
    Pq(PQSpec),
    PqKilled(PQSpec),
    Scale(ScaleSpec),
}

impl<T: Scalar> SymmetricPotential<T> {
    pub fn from_spec(spec: &PotentialSpec, tol_scale: f64) -> Result<Self> {
        let levy = |psi: &PsiSpec, beta: f64, quad: &Option<QuadratureConfig>| {
            let cfg = quad.unwrap_or_default().scaled(tol_scale);
            LevyPotential::with_config(CharExponent::from_spec(psi)?, lit(beta), cfg)
        };
        Ok(match spec {
            PotentialSpec::Levy { psi, beta, quad } => {
                let p = levy(psi, *beta, quad)?;
                if !(p.beta > T::zero()) {
                    return Err(Error::config("beta", "the exponentially killed Lévy base needs beta > 0"));
                }
                SymmetricPotential::Levy(p)
            }
            PotentialSpec::LevyKilled { psi, quad } => SymmetricPotential::LevyKilled(levy(psi, 0.0, quad)?),
            PotentialSpec::LevyHit { psi, beta, quad } => {
                let p = levy(psi, *beta, quad)?;
                if !(p.beta > T::zero()) {
                    return Err(Error::config("beta", "v^β needs beta > 0"));
                }
                SymmetricPotential::LevyHit(p)
            }
            PotentialSpec::Pq(s) => SymmetricPotential::PQ(PQPotential::from_spec(s)?),
            PotentialSpec::PqKilled(s) => SymmetricPotential::PQKilled(PQPotential::from_spec(s)?),
            PotentialSpec::Scale(s) => SymmetricPotential::Scale(ScalePotential::from_spec(s)?),
        })
    }

    pub fn from_json(text: &str, tol_scale: f64) -> Result<Self> {
        let spec: PotentialSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec, tol_scale)
    }

    /// Whether `u(x, y)` depends on `x − y` only.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(self, SymmetricPotential::Levy(_))
    }

    /// Whether the state 0 is excluded (killing at the first hit of 0).
    pub fn excludes_zero(&self) -> bool {
        matches!(
            self,
            SymmetricPotential::LevyKilled(_)
                | SymmetricPotential::LevyHit(_)
                | SymmetricPotential::PQKilled(_)
                | SymmetricPotential::Scale(_)
        )
    }

    pub fn check_domain(&self, x: T) -> Result<()> {
        match self {
            SymmetricPotential::LevyKilled(_) | SymmetricPotential::LevyHit(_) if x == T::zero() => {
                Err(Error::domain("0 is not in the state space of a process killed at 0"))
            }
            SymmetricPotential::PQKilled(_) | SymmetricPotential::Scale(_) if !(x > T::zero()) => {
                Err(Error::domain(format!("{} is outside the state space (0, ∞)", x)))
            }
            SymmetricPotential::PQ(p) | SymmetricPotential::PQKilled(p)
                if x < p.interval.0 || x > p.interval.1 =>
            {
                Err(Error::domain(format!("{} is outside the working interval", x)))
            }
            SymmetricPotential::Scale(s) if x > s.upper => {
                Err(Error::domain(format!("{} is outside the working interval", x)))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: T, y: T) -> Result<T> {
        match self {
            SymmetricPotential::Levy(p) => p.eval_u_beta(x - y),
            SymmetricPotential::LevyKilled(p) => p.eval_u0_kernel(x, y),
            SymmetricPotential::LevyHit(p) => p.eval_v_beta(x, y),
            SymmetricPotential::PQ(p) => Ok(p.eval_pq(x, y)),
            SymmetricPotential::PQKilled(p) => p.eval_v_pq(x, y),
            SymmetricPotential::Scale(s) => s.eval_scale_min(x, y),
        }
    }

    /// `u(x,x) + u(y,y) − 2u(x,y)`.
    pub fn sigma2(&self, x: T, y: T) -> Result<T> {
        if let SymmetricPotential::Levy(p) = self {
            return p.eval_sigma2(x - y);
        }
        Ok(self.eval(x, x)? + self.eval(y, y)? - lit::<T>(2.0) * self.eval(x, y)?)
    }

    /// Factors `(P, Q)` with `u(x, y) = P(x∧y) Q(x∨y)`, as jets, when the
    /// kernel has that product form.
    pub fn pq_factors(&self, x: T) -> Option<(Jet<T>, Jet<T>)> {
        match self {
            SymmetricPotential::PQ(p) => Some((p.p.jet(x), p.q.jet(x))),
            SymmetricPotential::PQKilled(p) => {
                let c: T = p.p.eval(T::zero()) / p.q.eval(T::zero());
                let jp: Jet<T> = p.p.jet(x);
                let jq: Jet<T> = p.q.jet(x);
                Some((Jet { v: jp.v - c * jq.v, d1: jp.d1 - c * jq.d1, d2: jp.d2 - c * jq.d2 }, jq))
            }
            SymmetricPotential::Scale(s) => {
                let js: Jet<T> = s.s.jet(x);
                let two = lit::<T>(2.0);
                Some((Jet { v: two * js.v, d1: two * js.d1, d2: two * js.d2 }, Jet::constant(T::one())))
            }
            _ => None,
        }
    }

    /// Gram matrix `G_{jk} = u(t_j, t_k)`.
    pub fn gram(&self, points: &[T]) -> Result<Matrix<T>> {
        for &t in points {
            self.check_domain(t)?;
        }
        let n = points.len();
        let mut g = Matrix::zeros(n, n);
        // translation-invariant kernels only need the distinct differences
        if let SymmetricPotential::Levy(p) = self {
            let mut cache: Vec<(T, T)> = Vec::new();
            for i in 0..n {
                for j in i..n {
                    let d = (points[i] - points[j]).abs();
                    let v = match cache.iter().find(|c| c.0 == d) {
                        Some(c) => c.1,
                        None => {
                            let v = p.eval_u_beta(d)?;
                            cache.push((d, v));
                            v
                        }
                    };
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            return Ok(g);
        }
        for i in 0..n {
            for j in i..n {
                let v = self.eval(points[i], points[j])?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        let s: SymmetricPotential<f64> = SymmetricPotential::from_json(
            r#"{"kind":"pq","p":"exp(x)","q":"exp(-x)","beta":0.5,"interval":[-2,2]}"#,
            1.0,
        )
        .unwrap();
        assert!((s.eval(0.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let l: SymmetricPotential<f64> =
            SymmetricPotential::from_json(r#"{"kind":"levy","psi":{"kind":"gaussian_plus","C":0.5},"beta":0.5}"#, 1.0)
                .unwrap();
        assert!((l.eval(1.0, 0.0).unwrap() - (-1.0f64).exp()).abs() < 1e-8);
        assert!(SymmetricPotential::<f64>::from_json(r#"{"kind":"scale","s":"x","upper":2,"bogus":1}"#, 1.0).is_err());
        assert!(SymmetricPotential::<f64>::from_json(r#"{"kind":"levy","psi":{"kind":"stable","index":1.5},"beta":0}"#, 1.0).is_err());
    }

    #[test]
    fn pq_factors_reproduce_kernel() {
        let s: SymmetricPotential<f64> = SymmetricPotential::from_json(
            r#"{"kind":"pq_killed","p":"exp(x)","q":"exp(-x)","beta":0.5,"interval":[0,3]}"#,
            1.0,
        )
        .unwrap();
        let (x, y) = (0.4, 1.7);
        let (px, _) = s.pq_factors(x).unwrap();
        let (_, qy) = s.pq_factors(y).unwrap();
        assert!((px.v * qy.v - s.eval(x, y).unwrap()).abs() < 1e-15);
        assert!(s.check_domain(0.0).is_err());
    }
}
