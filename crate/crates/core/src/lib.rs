//! Time-harmonic elastic scattering by many small rigid bodies: Foldy–Lax
//! point interactions, elastic capacitance extraction by BEM, and the
//! equivalent-medium Lippmann–Schwinger limit.

pub mod bounds;
pub mod capacitance;
pub mod distribution;
pub mod effective;
pub mod error;
pub mod experiments;
pub mod foldy;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod medium;
pub mod mesh;
pub mod quadrature;

pub use bounds::{green_bound_constants, GreenBoundConstants};
pub use error::{Error, Result};
pub use kernel::{kupradze_gradient, kupradze_tensor, Kupradze};
pub use medium::{ElasticMedium, IncidentPlaneWave};

pub use num_complex::Complex64;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type CVec3 = nalgebra::Vector3<Complex64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type CMat3 = nalgebra::Matrix3<Complex64>;
