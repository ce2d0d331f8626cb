pub mod error;
pub mod numerics;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub mod action;
pub mod checks;
pub mod envs;
pub mod mpo;
pub mod oracle;
pub mod policy;
pub mod retrace;
pub mod trainer;

/// Double-precision instantiations used by the trainer and the CLI.
pub type Mlp = numerics::MlpParams<f64>;
pub type Policy = policy::PolicyParams<f64>;
pub type PolicyHead = policy::Head<f64>;
pub type EStepBatch = mpo::EStepBatch<f64>;
pub type SampleBatch = mpo::SampleBatch<f64>;
