//! Small numerical kernels shared by the solvers: adaptive quadrature,
//! bracketed scalar root finding and maximization, an embedded Runge-Kutta
//! integrator, and symmetric-matrix functions.

pub mod linalg;
pub mod ode;
pub mod quadrature;
pub mod roots;
