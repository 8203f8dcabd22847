//! Sparse storage, block composition and direct solves.

pub mod block;
pub mod csr;
pub mod lu;
pub mod multifrontal;
pub mod ordering;

pub use block::BlockSystem;
pub use csr::{finalize, SparseMatrix, Triplets};
pub use lu::{backward_error, lu_solve, DirectSolver, LuFactors};
pub use multifrontal::{Multifrontal, Symbolic};
pub use ordering::Ordering;
