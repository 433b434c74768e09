//! Numerical toolkit for permanental processes built from Lévy and diffusion
//! potentials: potential densities, excessive functions, augmented kernels and
//! their M-matrix decompositions, chi-square sampling, LIL statistics and
//! local times of finite Markov chains with rebirth.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod char_exponent;
pub mod diffusion;
pub mod error;
pub mod excessive;
pub mod expr;
pub mod kernel;
pub mod levy;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod rebirth;
pub mod sampling;
pub mod scalar;
pub mod stats;
pub mod verify;

pub use char_exponent::{PsiKind, PsiSpec};
pub use error::{Error, Result};
pub use quadrature::{Estimate, QuadratureConfig};
pub use scalar::Scalar;

pub type CharExponent = char_exponent::CharExponent<f64>;
pub type LevyPotential = levy::LevyPotential<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type PQPotential = diffusion::PQPotential<f64>;
pub type ScalePotential = diffusion::ScalePotential<f64>;
pub type SymmetricPotential = potential::SymmetricPotential<f64>;
pub type Excessive = excessive::Excessive<f64>;
pub type AugmentedKernel = kernel::AugmentedKernel<f64>;
pub type IsymiDecomposition = kernel::IsymiDecomposition<f64>;
pub type GaussianSampler = sampling::GaussianSampler<f64>;
pub type FiniteChain = rebirth::FiniteChain<f64>;
pub type RebirthModel = rebirth::RebirthModel<f64>;
