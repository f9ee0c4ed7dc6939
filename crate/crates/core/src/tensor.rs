//! Dense complex tensors.
//!
//! Storage is row-major: the last axis varies fastest. Operators on a
//! composite space `A ⊗ B` are stored as rank-2 tensors `[dim_A·dim_B, dim_A·dim_B]`
//! with the `A` index as the more significant digit, so `kron(a, b)` of two
//! matrices acts on `A ⊗ B` in that order.
//!
//! Leg ordering conventions:
//! - [`DenseTensor::contract`] returns the free legs of `a` in their original
//!   order followed by the free legs of `b` in their original order.
//! - [`DenseTensor::permute`] with `axes` produces a tensor whose axis `i` is
//!   axis `axes[i]` of the input.
//! - [`DenseTensor::kron`] multiplies shapes axis by axis; the index of `a` is
//!   the more significant digit on every axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

/// Serialized form: shape metadata plus `[re, im]` pairs in row-major order.
#[derive(Serialize, Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    entries: Vec<[f64; 2]>,
}

impl TryFrom<RawTensor> for DenseTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        let data = raw.entries.iter().map(|e| C64::new(e[0], e[1])).collect();
        DenseTensor::new(raw.shape, data)
    }
}

impl From<DenseTensor> for RawTensor {
    fn from(t: DenseTensor) -> Self {
        RawTensor {
            entries: t.data.iter().map(|z| [z.re, z.im]).collect(),
            shape: t.shape,
        }
    }
}

pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidDimension(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {count} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let count = shape.iter().product();
        DenseTensor {
            shape,
            data: vec![ZERO; count],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = DenseTensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = ONE;
        }
        t
    }

    pub fn from_fn_matrix(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseTensor {
            shape: vec![rows, cols],
            data,
        }
    }

    /// Column vector `|index⟩` of dimension `n`, as a rank-1 tensor.
    pub fn basis_vector(n: usize, index: usize) -> Self {
        let mut t = DenseTensor::zeros(vec![n]);
        t.data[index] = ONE;
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn nrows(&self) -> usize {
        self.shape[0]
    }

    pub fn ncols(&self) -> usize {
        self.shape[1]
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::shape(format!(
                "{what} needs a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    fn require_square(&self, what: &str) -> Result<usize> {
        let (r, c) = self.require_matrix(what)?;
        if r != c {
            return Err(Error::shape(format!("{what} needs a square matrix, got {r}x{c}")));
        }
        Ok(r)
    }

    #[inline]
    pub fn get2(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set2(&mut self, r: usize, c: usize, v: C64) {
        let n = self.shape[1];
        self.data[r * n + c] = v;
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        DenseTensor::new(shape, self.data.clone())
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.shape.len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape(format!(
                "{axes:?} is not a permutation of {rank} axes"
            )));
        }
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let old_strides = row_major_strides(&self.shape);
        let gather: Vec<usize> = axes.iter().map(|&a| old_strides[a]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut offset = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[offset]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                offset += gather[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                offset -= gather[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(DenseTensor {
            shape: new_shape,
            data,
        })
    }

    /// Contracts pairs `(axis of a, axis of b)`. The output carries the free
    /// legs of `a` followed by the free legs of `b`, each in original order.
    pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut bad = Vec::new();
        for &(ia, ib) in pairs {
            if ia >= a.rank() || ib >= b.rank() {
                return Err(Error::shape(format!(
                    "contraction legs ({ia}, {ib}) out of range for ranks {} and {}",
                    a.rank(),
                    b.rank()
                )));
            }
            if a.shape[ia] != b.shape[ib] {
                bad.push(format!("a[{ia}]={} vs b[{ib}]={}", a.shape[ia], b.shape[ib]));
            }
        }
        if !bad.is_empty() {
            return Err(Error::shape(format!("contracted legs differ: {}", bad.join(", "))));
        }
        let a_free: Vec<usize> = (0..a.rank()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
        let b_free: Vec<usize> = (0..b.rank()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
        let mut a_axes = a_free.clone();
        a_axes.extend(pairs.iter().map(|p| p.0));
        let mut b_axes: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        b_axes.extend(b_free.iter().copied());
        let ap = a.permute(&a_axes)?;
        let bp = b.permute(&b_axes)?;
        let m: usize = a_free.iter().map(|&i| a.shape[i]).product();
        let k: usize = pairs.iter().map(|p| a.shape[p.0]).product();
        let n: usize = b_free.iter().map(|&i| b.shape[i]).product();
        let mut out = vec![ZERO; m * n];
        gemm_into(&ap.data, &bp.data, &mut out, m, k, n);
        let mut shape: Vec<usize> = a_free.iter().map(|&i| a.shape[i]).collect();
        shape.extend(b_free.iter().map(|&i| b.shape[i]));
        if shape.is_empty() {
            shape.push(1);
        }
        DenseTensor::new(shape, out)
    }

    /// Axis-wise Kronecker product; both tensors must have equal rank.
    pub fn kron(a: &DenseTensor, b: &DenseTensor) -> Result<Self> {
        if a.rank() != b.rank() {
            return Err(Error::shape(format!(
                "kron needs equal ranks, got {:?} and {:?}",
                a.shape, b.shape
            )));
        }
        let shape: Vec<usize> = a.shape.iter().zip(&b.shape).map(|(x, y)| x * y).collect();
        if a.rank() == 2 {
            let (ar, ac) = (a.shape[0], a.shape[1]);
            let (br, bc) = (b.shape[0], b.shape[1]);
            let cols = ac * bc;
            let mut data = vec![ZERO; ar * br * cols];
            for i in 0..ar {
                for j in 0..ac {
                    let x = a.data[i * ac + j];
                    if x == ZERO {
                        continue;
                    }
                    for k in 0..br {
                        let row = (i * br + k) * cols + j * bc;
                        for l in 0..bc {
                            data[row + l] = x * b.data[k * bc + l];
                        }
                    }
                }
            }
            return DenseTensor::new(shape, data);
        }
        let mut data = vec![ZERO; shape.iter().product()];
        let a_strides = row_major_strides(&a.shape);
        let b_strides = row_major_strides(&b.shape);
        let out_strides = row_major_strides(&shape);
        for (ia, &x) in a.data.iter().enumerate() {
            for (ib, &y) in b.data.iter().enumerate() {
                let mut off = 0;
                for ax in 0..shape.len() {
                    let da = (ia / a_strides[ax]) % a.shape[ax];
                    let db = (ib / b_strides[ax]) % b.shape[ax];
                    off += (da * b.shape[ax] + db) * out_strides[ax];
                }
                data[off] = x * y;
            }
        }
        DenseTensor::new(shape, data)
    }

    /// Partial trace of a square operator on `⊗ dims`, tracing out the listed
    /// subsystems; the remaining subsystems keep their relative order.
    pub fn partial_trace(&self, dims: &[usize], traced: &[usize]) -> Result<Self> {
        let n = self.require_square("partial trace")?;
        let total: usize = dims.iter().product();
        if total != n {
            return Err(Error::shape(format!(
                "subsystem dims {dims:?} give {total}, operator has dimension {n}"
            )));
        }
        if let Some(&bad) = traced.iter().find(|&&t| t >= dims.len()) {
            return Err(Error::shape(format!("subsystem {bad} out of range for {dims:?}")));
        }
        let strides = row_major_strides(dims);
        let kept: Vec<usize> = (0..dims.len()).filter(|i| !traced.contains(i)).collect();
        let kept_dims: Vec<usize> = kept.iter().map(|&i| dims[i]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&i| dims[i]).collect();
        let kept_offsets = multi_offsets(&kept_dims, &kept.iter().map(|&i| strides[i]).collect::<Vec<_>>());
        let traced_offsets = multi_offsets(&traced_dims, &traced.iter().map(|&i| strides[i]).collect::<Vec<_>>());
        let m = kept_offsets.len();
        let mut out = vec![ZERO; m * m];
        for (r, &ro) in kept_offsets.iter().enumerate() {
            for (c, &co) in kept_offsets.iter().enumerate() {
                let mut acc = ZERO;
                for &t in &traced_offsets {
                    acc += self.data[(ro + t) * n + co + t];
                }
                out[r * m + c] = acc;
            }
        }
        DenseTensor::new(vec![m, m], out)
    }

    pub fn matmul(&self, other: &DenseTensor) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::shape(format!("matmul inner dimensions {k} and {k2}")));
        }
        let mut out = vec![ZERO; m * n];
        gemm_into(&self.data, &other.data, &mut out, m, k, n);
        DenseTensor::new(vec![m, n], out)
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Self {
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = vec![ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j].conj();
            }
        }
        DenseTensor {
            shape: vec![c, r],
            data,
        }
    }

    pub fn conj(&self) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        let n = self.shape[0];
        (0..n).map(|i| self.data[i * n + i]).sum()
    }

    /// Hilbert–Schmidt inner product `Tr(a† b) = Σ conj(a) b`.
    pub fn hs_inner(a: &DenseTensor, b: &DenseTensor) -> C64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign_scaled(&mut self, other: &DenseTensor, s: C64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
        Ok(())
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-norm distance between the matrix and its adjoint.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.shape[0];
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    /// `max |A†A − 1|` over entries.
    pub fn isometry_residual(&self) -> f64 {
        let gram = self.adjoint().matmul(self).expect("square gram");
        gram.max_abs_diff(&DenseTensor::identity(gram.nrows()))
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<C64> {
        let (r, c) = (self.shape[0], self.shape[1]);
        nalgebra::DMatrix::from_fn(r, c, |i, j| self.data[i * c + j])
    }

    pub fn from_nalgebra(m: &nalgebra::DMatrix<C64>) -> Self {
        DenseTensor::from_fn_matrix(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

/// All offsets `Σ idx_k stride_k` over the multi-index box `dims`, in
/// row-major order of the box.
pub(crate) fn multi_offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for (&d, &s) in dims.iter().zip(strides) {
        let mut next = Vec::with_capacity(out.len() * d);
        for &o in &out {
            for i in 0..d {
                next.push(o + i * s);
            }
        }
        out = next;
    }
    out
}

/// `out += a (m×k) · b (k×n)`, row-major.
pub(crate) fn gemm_into(a: &[C64], b: &[C64], out: &mut [C64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_z() -> DenseTensor {
        DenseTensor::new(vec![2, 2], vec![ONE, ZERO, ZERO, -ONE]).unwrap()
    }

    #[test]
    fn entry_count_is_checked() {
        assert!(matches!(
            DenseTensor::new(vec![2, 3], vec![ZERO; 5]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            DenseTensor::new(vec![0, 3], vec![]),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn identity_contraction_returns_vector() {
        let v = DenseTensor::new(vec![3], vec![ONE, I, C64::new(2.0, -1.0)]).unwrap();
        let out = DenseTensor::contract(&DenseTensor::identity(3), &v, &[(1, 0)]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn contraction_reports_mismatched_legs() {
        let a = DenseTensor::zeros(vec![2, 3]);
        let b = DenseTensor::zeros(vec![4]);
        match DenseTensor::contract(&a, &b, &[(1, 0)]) {
            Err(Error::Shape(msg)) => assert!(msg.contains("a[1]=3") && msg.contains("b[0]=4")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kron_of_pauli_z() {
        let zz = DenseTensor::kron(&pauli_z(), &pauli_z()).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| zz.get2(i, i).re).collect();
        assert_eq!(diag, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn partial_trace_of_product() {
        let rho = DenseTensor::new(vec![2, 2], vec![C64::new(0.7, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.3, 0.0)]).unwrap();
        let sigma = DenseTensor::from_fn_matrix(3, 3, |r, c| C64::new((r + 2 * c) as f64, r as f64 - c as f64));
        let prod = DenseTensor::kron(&rho, &sigma).unwrap();
        let reduced = prod.partial_trace(&[2, 3], &[1]).unwrap();
        let expected = rho.scale(sigma.trace());
        assert!(reduced.max_abs_diff(&expected) < 1e-14);
        let other = prod.partial_trace(&[2, 3], &[0]).unwrap();
        assert!(other.max_abs_diff(&sigma.scale(rho.trace())) < 1e-14);
    }

    #[test]
    fn permute_and_reshape_conventions() {
        let t = DenseTensor::new(vec![2, 3], (0..6).map(|x| C64::new(x as f64, 0.0)).collect()).unwrap();
        let p = t.permute(&[1, 0]).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.get2(2, 1), t.get2(1, 2));
        let flat = t.reshape(vec![6]).unwrap();
        assert_eq!(flat.data(), t.data());
        assert!(t.permute(&[0, 0]).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let t = DenseTensor::from_fn_matrix(2, 2, |r, c| C64::new(r as f64, c as f64 + 0.5));
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"shape\""));
        let back: DenseTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<DenseTensor>(r#"{"shape":[2],"entries":[[1,0]]}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
            prop::collection::vec(1usize..4, 1..4).prop_flat_map(|shape| {
                let n: usize = shape.iter().product();
                prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(move |v| {
                    DenseTensor::new(shape.clone(), v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn permute_preserves_entry_multiset(t in tensor_strategy(), seed in any::<u64>()) {
                let rank = t.rank();
                let mut axes: Vec<usize> = (0..rank).collect();
                let mut s = seed;
                for i in (1..rank).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    axes.swap(i, (s >> 33) as usize % (i + 1));
                }
                let p = t.permute(&axes).unwrap();
                let key = |z: &C64| (z.re.to_bits(), z.im.to_bits());
                let mut a: Vec<_> = t.data().iter().map(key).collect();
                let mut b: Vec<_> = p.data().iter().map(key).collect();
                a.sort();
                b.sort();
                prop_assert_eq!(a, b);
                let mut inverse = vec![0; rank];
                for (i, &ax) in axes.iter().enumerate() { inverse[ax] = i; }
                prop_assert_eq!(p.permute(&inverse).unwrap(), t);
            }
        }
    }
}
