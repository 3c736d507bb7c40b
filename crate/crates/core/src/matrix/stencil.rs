use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{invalid, Result};

use super::CrsMatrix;

/// Two-dimensional seven-point stencil on an `nx x ny` grid.
///
/// Vertex `(x, y)` has index `y * nx + x` and couples to itself, its four
/// axis neighbours and the anti-diagonal pair `(x + 1, y - 1)`,
/// `(x - 1, y + 1)`. Diagonal 7, off-diagonals -1.
pub fn gen_stencil_2d7pt(nx: usize, ny: usize) -> Result<CrsMatrix> {
    if nx < 2 || ny < 2 {
        return invalid(format!("2d-7pt grid must be at least 2 x 2, got {nx} x {ny}"));
    }
    // offsets in ascending index order: (dx, dy) with index delta dy * nx + dx
    const OFFSETS: [(isize, isize); 7] = [(0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1)];
    let n = nx * ny;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::with_capacity(7 * n);
    let mut val = Vec::with_capacity(7 * n);
    row_ptr.push(0u32);
    for y in 0..ny as isize {
        for x in 0..nx as isize {
            for &(dx, dy) in &OFFSETS {
                let (cx, cy) = (x + dx, y + dy);
                if cx < 0 || cy < 0 || cx >= nx as isize || cy >= ny as isize {
                    continue;
                }
                col.push((cy as usize * nx + cx as usize) as u32);
                val.push(if dx == 0 && dy == 0 { 7.0 } else { -1.0 });
            }
            row_ptr.push(col.len() as u32);
        }
    }
    CrsMatrix::from_raw_parts(n, row_ptr, col, val)
}

/// Central finite-difference weights of `-d^2/dx^2`, index = offset.
fn fd_weights(order: usize) -> Option<&'static [f64]> {
    match order {
        2 => Some(&[2.0, -1.0]),
        4 => Some(&[5.0 / 2.0, -4.0 / 3.0, 1.0 / 12.0]),
        6 => Some(&[49.0 / 18.0, -3.0 / 2.0, 3.0 / 20.0, -1.0 / 90.0]),
        _ => None,
    }
}

/// Finite-difference `-Laplacian` of the given spatial order (2, 4 or 6) on
/// an `n^3` grid with unit spacing and Dirichlet truncation at the faces.
///
/// Interior rows have `3 * order + 1` nonzeros. Vertex `(x, y, z)` has index
/// `x + n * y + n^2 * z`.
pub fn gen_stencil_3d(n: usize, order: usize) -> Result<CrsMatrix> {
    let w = match fd_weights(order) {
        Some(w) => w,
        None => return invalid(format!("unsupported stencil order {order}; expected 2, 4 or 6")),
    };
    if n < order + 1 {
        return invalid(format!("grid size {n} too small for order {order}"));
    }
    let radius = w.len() as isize - 1;
    let diag = 3.0 * w[0];

    // (index delta, weight) sorted by delta
    let mut offsets: Vec<((isize, isize, isize), f64)> = Vec::new();
    for d in 1..=radius {
        let c = w[d as usize];
        for s in [-d, d] {
            offsets.push(((s, 0, 0), c));
            offsets.push(((0, s, 0), c));
            offsets.push(((0, 0, s), c));
        }
    }
    offsets.push(((0, 0, 0), diag));
    let ni = n as isize;
    offsets.sort_by_key(|&((dx, dy, dz), _)| dx + ni * dy + ni * ni * dz);

    let rows = n * n * n;
    let mut row_ptr = Vec::with_capacity(rows + 1);
    let mut col = Vec::with_capacity(rows * offsets.len());
    let mut val = Vec::with_capacity(rows * offsets.len());
    row_ptr.push(0u32);
    for z in 0..ni {
        for y in 0..ni {
            for x in 0..ni {
                for &((dx, dy, dz), c) in &offsets {
                    let (cx, cy, cz) = (x + dx, y + dy, z + dz);
                    if cx < 0 || cy < 0 || cz < 0 || cx >= ni || cy >= ni || cz >= ni {
                        continue;
                    }
                    col.push((cx + ni * cy + ni * ni * cz) as u32);
                    val.push(c);
                }
                row_ptr.push(col.len() as u32);
            }
        }
    }
    CrsMatrix::from_raw_parts(rows, row_ptr, col, val)
}

/// Random matrix with a symmetric sparsity pattern: a diagonal plus about
/// `avg_offdiag` off-diagonal entries per row, values drawn from `[-1, 1)`
/// (not symmetric in value).
pub fn gen_random_symmetric(n: usize, avg_offdiag: usize, seed: u64) -> Result<CrsMatrix> {
    if n == 0 {
        return invalid("matrix must have at least one row");
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut trip: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 2.0 + rng.gen::<f64>())).collect();
    let pairs = n * avg_offdiag / 2;
    for _ in 0..pairs {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        trip.push((i, j, rng.gen_range(-1.0..1.0)));
        trip.push((j, i, rng.gen_range(-1.0..1.0)));
    }
    CrsMatrix::from_triplets(n, &trip)
}
