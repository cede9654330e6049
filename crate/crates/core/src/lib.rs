pub mod dynamics;
pub mod error;
pub mod fock;
pub mod interactions;
pub mod lattice;
pub mod liouvillian;
pub mod linalg;
pub mod models;
pub mod neass;
pub mod quasilocality;

pub use error::{Error, Result};
