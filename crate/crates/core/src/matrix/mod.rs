//! CRS storage, Matrix Market I/O, stencil generators, symmetric
//! permutation and the row-range SpMV kernel.

mod crs;
mod market;
mod perm;
mod stencil;

pub use crs::{spmv_range, CrsMatrix, MAX_NNZ};
pub use market::{load_matrix_market, read_matrix_market, write_matrix_market};
pub use perm::{permute_symmetric, Permutation};
pub use stencil::{gen_random_symmetric, gen_stencil_2d7pt, gen_stencil_3d};
