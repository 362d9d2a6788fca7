pub mod expr;
pub mod feller;
pub mod gallery;
pub mod grid;
pub mod lyapunov;
pub mod mc;
pub mod model;
pub mod quad;
pub mod report;
pub mod verdict;

pub use verdict::{Holds, Verdict};
