//! Learning vectorized planning domain models from partially observed plan
//! traces, and planning with them.

pub mod domains;
pub mod strips;
pub mod rng;
pub mod traces;
pub mod nn;
pub mod learner;
pub mod extract;
pub mod selector;
pub mod planner;
pub mod eval;
