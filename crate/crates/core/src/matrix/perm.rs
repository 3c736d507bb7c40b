use serde::Serialize;

use crate::error::{invalid, Result};

use super::CrsMatrix;

/// Bijection on `[0, n)`. `perm[new] = old`, `inv_perm[old] = new`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Permutation {
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from its new-to-old map.
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut inv_perm = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inv_perm[old] != usize::MAX {
                return invalid(format!("not a permutation: entry {old} at position {new}"));
            }
            inv_perm[old] = new;
        }
        Ok(Self { perm, inv_perm })
    }

    pub fn identity(n: usize) -> Self {
        let perm: Vec<usize> = (0..n).collect();
        Self { inv_perm: perm.clone(), perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// New-to-old map.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Old-to-new map.
    pub fn inv_perm(&self) -> &[usize] {
        &self.inv_perm
    }

    pub fn inverse(&self) -> Self {
        Self { perm: self.inv_perm.clone(), inv_perm: self.perm.clone() }
    }

    /// Applies `self` first, then `then` (which reorders the already permuted
    /// numbering).
    pub fn then(&self, then: &Permutation) -> Result<Self> {
        if then.len() != self.len() {
            return invalid("permutation lengths differ");
        }
        Self::new(then.perm.iter().map(|&mid| self.perm[mid]).collect())
    }

    /// `out[new] = x[perm[new]]`.
    pub fn apply<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.len());
        self.perm.iter().map(|&old| x[old]).collect()
    }

    /// Inverse of [`apply`](Self::apply): `out[perm[new]] = y[new]`.
    pub fn unapply<T: Copy>(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.len());
        self.inv_perm.iter().map(|&new| y[new]).collect()
    }
}

/// Symmetric permutation `B[i, j] = A[perm[i], perm[j]]`.
pub fn permute_symmetric(a: &CrsMatrix, perm: &Permutation) -> Result<CrsMatrix> {
    let n = a.n_rows();
    if perm.len() != n {
        return invalid(format!("permutation length {} != n_rows {n}", perm.len()));
    }
    let inv = perm.inv_perm();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::with_capacity(a.nnz());
    let mut val = Vec::with_capacity(a.nnz());
    let mut scratch: Vec<(u32, f64)> = Vec::new();
    row_ptr.push(0u32);
    for &old in perm.perm() {
        let (cols, vals) = a.row(old);
        scratch.clear();
        scratch.extend(cols.iter().zip(vals).map(|(&c, &v)| (inv[c as usize] as u32, v)));
        scratch.sort_unstable_by_key(|&(c, _)| c);
        for &(c, v) in &scratch {
            col.push(c);
            val.push(v);
        }
        row_ptr.push(col.len() as u32);
    }
    CrsMatrix::from_raw_parts(n, row_ptr, col, val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_random_symmetric, gen_stencil_2d7pt};

    #[test]
    fn rejects_non_bijection() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let a = gen_stencil_2d7pt(5, 4).unwrap();
        let b = permute_symmetric(&a, &Permutation::identity(a.n_rows())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch() {
        let a = CrsMatrix::identity(3);
        assert!(permute_symmetric(&a, &Permutation::identity(4)).is_err());
    }

    #[test]
    fn entries_follow_permutation() {
        let a = gen_random_symmetric(30, 4, 3).unwrap();
        let p = Permutation::new((0..30).map(|i| (i * 7) % 30).collect()).unwrap();
        let b = permute_symmetric(&a, &p).unwrap();
        let (da, db) = (a.to_dense(), b.to_dense());
        for i in 0..30 {
            for j in 0..30 {
                assert_eq!(db[i * 30 + j], da[p.perm()[i] * 30 + p.perm()[j]]);
            }
        }
        let back = permute_symmetric(&b, &p.inverse()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn composition_and_vectors() {
        let p = Permutation::new(vec![2, 0, 1, 3]).unwrap();
        let q = Permutation::new(vec![3, 1, 0, 2]).unwrap();
        let x = [10, 11, 12, 13];
        let pq = p.then(&q).unwrap();
        assert_eq!(pq.apply(&x), q.apply(&p.apply(&x)));
        assert_eq!(p.unapply(&p.apply(&x)), x.to_vec());
    }
}
