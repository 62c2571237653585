pub mod error;
pub mod estimator;
pub mod grid;
pub mod minimax;
pub mod operator;
pub mod risk;
pub mod rng;
pub mod synthetic;
