pub mod error;
pub mod exec;
pub mod lattice;
pub mod fermion_tfim;
pub mod lzcid;
pub mod tn_ising;
pub mod born_models;
pub mod sampler;
pub mod estimators;
pub mod analysis;

pub use error::{Error, Result};
pub use exec::Exec;
