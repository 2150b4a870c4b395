//! Dense three-way tensors and Kronecker-structured matrices.
//!
//! All three-index objects in the crate share one memory order: the last
//! index (z) runs fastest. Vectorizing a [`Tensor3`] therefore matches the
//! row/column order of `A ⊗ B ⊗ C` for per-axis matrices `A`, `B`, `C`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// Cartesian direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl TryFrom<usize> for Axis {
    type Error = crate::Error;

    fn try_from(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Axis::X),
            1 => Ok(Axis::Y),
            2 => Ok(Axis::Z),
            _ => arg(format!("axis index {i} out of range (expected 0..3)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return arg(format!(
                "tensor data has {} entries, dims {:?} need {}",
                data.len(),
                dims,
                n
            ));
        }
        Ok(Self { dims, data })
    }

    /// `x ⊗ y ⊗ z`.
    pub fn outer(x: &[f64], y: &[f64], z: &[f64]) -> Self {
        let mut t = Self::zeros([x.len(), y.len(), z.len()]);
        t.add_outer(1.0, x, y, z);
        t
    }

    /// `self += w · x ⊗ y ⊗ z`.
    pub fn add_outer(&mut self, w: f64, x: &[f64], y: &[f64], z: &[f64]) {
        debug_assert_eq!([x.len(), y.len(), z.len()], self.dims);
        let (ny, nz) = (self.dims[1], self.dims[2]);
        for (i, &xi) in x.iter().enumerate() {
            let wx = w * xi;
            if wx == 0.0 {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                let wxy = wx * yj;
                let row = &mut self.data[(i * ny + j) * nz..(i * ny + j + 1) * nz];
                for (r, &zk) in row.iter_mut().zip(z) {
                    *r += wxy * zk;
                }
            }
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Tensor3) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Contracts mode `axis` with `m` (shape `out × in`): the result has
    /// `out` entries along that axis.
    pub fn mode_product(&self, axis: Axis, m: &DMatrix<f64>) -> Tensor3 {
        let a = axis.index();
        assert_eq!(m.ncols(), self.dims[a], "mode product dimension mismatch");
        let mut dims = self.dims;
        dims[a] = m.nrows();
        let mut out = Tensor3::zeros(dims);
        let [n0, n1, n2] = self.dims;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let v = self.get(i, j, k);
                    if v == 0.0 {
                        continue;
                    }
                    let idx = [i, j, k];
                    for p in 0..m.nrows() {
                        let mut o = idx;
                        o[a] = p;
                        let off = out.offset(o[0], o[1], o[2]);
                        out.data[off] += m[(p, idx[a])] * v;
                    }
                }
            }
        }
        out
    }

    /// Gram matrix of the mode-`axis` unfoldings of `self` and `other`:
    /// `W_ij = Σ self[..i..] · other[..j..]` summed over the other two indices.
    pub fn mode_gram(&self, other: &Tensor3, axis: Axis) -> DMatrix<f64> {
        assert_eq!(self.dims, other.dims);
        let a = axis.index();
        let n = self.dims[a];
        let mut w = DMatrix::zeros(n, n);
        let [n0, n1, n2] = self.dims;
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let idx = [i, j, k];
                    let s = self.get(i, j, k);
                    if s == 0.0 {
                        continue;
                    }
                    for q in 0..n {
                        let mut o = idx;
                        o[a] = q;
                        w[(idx[a], q)] += s * other.get(o[0], o[1], o[2]);
                    }
                }
            }
        }
        w
    }
}

/// A symmetric matrix with the structure `A_x ⊗ A_y ⊗ A_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kron3 {
    pub factors: [DMatrix<f64>; 3],
}

/// Eigendecomposition of a [`Kron3`]: eigenpairs are products of the
/// per-axis eigenpairs.
#[derive(Debug, Clone)]
pub struct KronEigen {
    pub vectors: [DMatrix<f64>; 3],
    pub values: [DVector<f64>; 3],
}

impl Kron3 {
    pub fn new(factors: [DMatrix<f64>; 3]) -> Self {
        Self { factors }
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        ]
    }

    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn apply(&self, t: &Tensor3) -> Tensor3 {
        t.mode_product(Axis::X, &self.factors[0])
            .mode_product(Axis::Y, &self.factors[1])
            .mode_product(Axis::Z, &self.factors[2])
    }

    /// `aᵀ (A_x ⊗ A_y ⊗ A_z) b`.
    pub fn bilinear(&self, a: &Tensor3, b: &Tensor3) -> f64 {
        a.dot(&self.apply(b))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.factors[0]
            .kronecker(&self.factors[1])
            .kronecker(&self.factors[2])
    }

    /// `Tr(M²)` for symmetric factors.
    pub fn trace_of_square(&self) -> f64 {
        self.factors.iter().map(|f| f.norm_squared()).product()
    }

    pub fn trace(&self) -> f64 {
        self.factors.iter().map(|f| f.trace()).product()
    }

    pub fn eigen(&self) -> KronEigen {
        let mut vectors: [DMatrix<f64>; 3] = Default::default();
        let mut values: [DVector<f64>; 3] = Default::default();
        for (a, f) in self.factors.iter().enumerate() {
            let e = SymmetricEigen::new(f.clone());
            vectors[a] = e.eigenvectors;
            values[a] = e.eigenvalues;
        }
        KronEigen { vectors, values }
    }
}

impl KronEigen {
    /// Product eigenvalues laid out like a [`Tensor3`].
    pub fn product_values(&self) -> Tensor3 {
        Tensor3::outer(
            self.values[0].as_slice(),
            self.values[1].as_slice(),
            self.values[2].as_slice(),
        )
    }

    /// Coordinates of `t` in the product eigenbasis (`Vᵀ t`).
    pub fn to_eigenbasis(&self, t: &Tensor3) -> Tensor3 {
        t.mode_product(Axis::X, &self.vectors[0].transpose())
            .mode_product(Axis::Y, &self.vectors[1].transpose())
            .mode_product(Axis::Z, &self.vectors[2].transpose())
    }

    /// Inverse of [`Self::to_eigenbasis`] (`V c`).
    pub fn from_eigenbasis(&self, c: &Tensor3) -> Tensor3 {
        c.mode_product(Axis::X, &self.vectors[0])
            .mode_product(Axis::Y, &self.vectors[1])
            .mode_product(Axis::Z, &self.vectors[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = DMatrix::from_fn(n, n, |_, _| next());
        &m + m.transpose()
    }

    #[test]
    fn kron_apply_matches_dense() {
        let k = Kron3::new([sym(2, 1), sym(3, 2), sym(2, 3)]);
        let t = Tensor3::from_vec([2, 3, 2], (0..12).map(|i| i as f64 * 0.3 - 1.0).collect())
            .unwrap();
        let dense = k.to_dense() * DVector::from_column_slice(t.as_slice());
        let fast = k.apply(&t);
        for (a, b) in dense.iter().zip(fast.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!((k.trace_of_square() - (k.to_dense().norm_squared())).abs() < 1e-12);
    }

    #[test]
    fn kron_eigen_roundtrip() {
        let k = Kron3::new([sym(3, 5), sym(2, 6), sym(2, 7)]);
        let e = k.eigen();
        let t = Tensor3::from_vec([3, 2, 2], (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let back = e.from_eigenbasis(&e.to_eigenbasis(&t));
        assert!(back.max_abs_diff(&t) < 1e-13);
    }

    #[test]
    fn mode_gram_is_unfolding_product() {
        let t = Tensor3::from_vec([2, 2, 3], (0..12).map(|i| i as f64).collect()).unwrap();
        let w = t.mode_gram(&t, Axis::Y);
        let mut expect = DMatrix::zeros(2, 2);
        for p in 0..2 {
            for q in 0..2 {
                for i in 0..2 {
                    for k in 0..3 {
                        expect[(p, q)] += t.get(i, p, k) * t.get(i, q, k);
                    }
                }
            }
        }
        assert_eq!(w, expect);
    }

    #[test]
    fn axis_out_of_range() {
        assert!(Axis::try_from(3).is_err());
        assert_eq!(Axis::try_from(2).unwrap(), Axis::Z);
    }
}
