//! Shared fixtures for the acceptance suite: the matrix corpus and a
//! deterministic input vector.

use lbmpk::matrix::{gen_random_symmetric, gen_stencil_2d7pt, gen_stencil_3d};
use lbmpk::CrsMatrix;

/// Deterministic input in [-1, 1].
pub fn input(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect()
}

/// Two components plus five isolated vertices.
pub fn disconnected() -> CrsMatrix {
    let a = gen_stencil_2d7pt(6, 6).unwrap();
    let b = gen_random_symmetric(30, 3, 11).unwrap();
    let mut t = a.to_triplets();
    t.extend(b.to_triplets().into_iter().map(|(i, j, v)| (i + 36, j + 36, v)));
    t.extend((66..71).map(|i| (i, i, 1.0)));
    CrsMatrix::from_triplets(71, &t).unwrap()
}

/// Stencils, random symmetric patterns and a disconnected graph.
pub fn corpus() -> Vec<(String, CrsMatrix)> {
    let mut out: Vec<(String, CrsMatrix)> = Vec::new();
    for n in [8, 16, 32, 64] {
        out.push((format!("2d7pt {n}x{n}"), gen_stencil_2d7pt(n, n).unwrap()));
    }
    for (n, order) in [(8, 2), (16, 2), (8, 4), (16, 4), (24, 6)] {
        out.push((format!("3d n={n} order {order}"), gen_stencil_3d(n, order).unwrap()));
    }
    out.push(("random 500".into(), gen_random_symmetric(500, 4, 1).unwrap()));
    out.push(("random 2000".into(), gen_random_symmetric(2000, 6, 2).unwrap()));
    out.push(("disconnected".into(), disconnected()));
    out
}
