// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curve;
pub mod evolution;
pub mod field_solver;
pub mod kernels;
pub mod linalg;
pub mod linear_theory;
pub mod params;
pub mod scenario;
pub mod specfun;
pub mod spectral;
