pub mod algorithms;
pub mod analysis;
pub mod convexcore;
pub mod error;
pub mod oracle;
pub mod pareto;
pub mod physics;
pub mod scenario;
pub mod validation;

pub use error::{Result, SwiptError};
