//! Self-contained numerical building blocks.

pub mod fit;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod stats;
pub mod sum;
