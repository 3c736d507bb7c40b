//! Level-blocked matrix power kernels.
//!
//! Computes `y_p = A^p x` for `p = 1..=p_m` on a sparse matrix in CRS form,
//! blocking the matrix data across powers with BFS levels of the matrix
//! graph. The pipeline is:
//!
//! 1. [`levels`]: BFS levels, level groups that fit a cache budget, and
//!    recursive refinement of bulky groups.
//! 2. [`schedule`]: diagonal traversal of the level/power diagram with
//!    dependency metadata for point-to-point synchronization.
//! 3. [`exec`]: baseline and level-blocked executors on a fixed worker pool.
//! 4. [`traffic`]: an LRU cache model that replays an execution order and
//!    reports main-memory bytes per flop.
//! 5. [`cheb`]: Chebyshev time propagation of the heat equation running its
//!    recurrence through the blocked executor.

pub mod cheb;
mod error;
pub mod exec;
pub mod levels;
pub mod matrix;
pub mod schedule;
pub mod traffic;

pub use error::{Error, Result};
pub use exec::{MpkConfig, MpkEngine, PowerVectors, Variant};
pub use levels::{GroupBudget, LevelGroup, LevelGroupTree, LevelSet};
pub use matrix::{CrsMatrix, Permutation};
pub use schedule::LpSchedule;
