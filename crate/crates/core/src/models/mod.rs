//! Concrete conjugate families for [`crate::expfam`].

mod gaussian;
mod multinomial;

pub use gaussian::{gaussian_expectations, DiagonalGaussianFamily, NormalGamma};
pub use multinomial::{multinomial_expectations, MultinomialFamily};
