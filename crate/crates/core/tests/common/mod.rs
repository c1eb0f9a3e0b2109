//! Oracles and fixtures shared by the integration tests.

#![allow(dead_code, unused_imports)]

mod closed_loop;
mod oracles;

pub use closed_loop::*;
pub use oracles::*;
