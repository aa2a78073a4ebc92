pub mod kg;
pub mod model;
pub mod nn;
pub mod scalar;

pub use scalar::Scalar;
pub type Real = f64;
