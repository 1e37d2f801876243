//! Finite-time Lyapunov function construction and domain-of-attraction certification.

pub mod doa;
pub mod dynamics;
pub mod error;
mod float;
pub mod ftlf;
pub mod io;
pub mod linalg;
pub mod lyap;
pub mod ode;
pub mod pipeline;
pub mod reproduce;
pub mod search;

pub use error::{Error, Result};
