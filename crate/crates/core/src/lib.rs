pub mod correlation;
pub mod error;
pub mod pair;
pub mod rank1;
pub mod scalar;
pub mod schedule;
pub mod spectral;
pub mod suspension;
pub mod walsh;

pub use error::{Error, Result};
pub use scalar::{parse_rational, rat, Rational, Scalar};

pub type ExactLevelFunction = rank1::LevelFunction<Rational>;
pub type FloatLevelFunction = rank1::LevelFunction<f64>;
pub type ExactBounds = correlation::Bounds<Rational>;
pub type ExactCorrelation = correlation::CorrelationSequence<Rational>;
pub type FloatCorrelation = correlation::CorrelationSequence<f64>;
pub type ExactWalsh = walsh::WalshPolynomial<Rational>;
pub type FloatWalsh = walsh::WalshPolynomial<f64>;
