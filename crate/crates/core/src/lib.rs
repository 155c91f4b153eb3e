pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod stability;
pub mod topology;
