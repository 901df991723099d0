//! Continuous-time proximal controlled-multiplier dynamics for composite
//! optimization `min f(x) + g(x)` subject to `h(x) = 0`.

pub mod dynamics;
pub mod experiments;
pub mod gains;
pub mod integrate;
pub mod problem;
pub mod prox;
