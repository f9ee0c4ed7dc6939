//! Operators on a set of labelled tensor legs.
//!
//! A [`Register`] stores a `D × D` matrix over `⊗_k C^{dims[k]}` with the legs
//! in `labels` order, first leg slowest (row-major). Gates act on legs named by
//! label, so contraction code never tracks positions by hand.

use crate::error::{Error, Result};
use crate::tensor::{multi_offsets, row_major_strides, DenseTensor, C64, ONE, ZERO};

pub type Label = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct Register {
    labels: Vec<Label>,
    dims: Vec<usize>,
    mat: Vec<C64>,
}

/// What a freshly inserted leg carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    /// `|0⟩⟨0|`
    Reference,
    /// `1`
    Identity,
}

impl Register {
    pub fn new(labels: Vec<Label>, dims: Vec<usize>, mat: DenseTensor) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::shape("one dimension per leg label required"));
        }
        let d: usize = dims.iter().product();
        if mat.shape() != [d, d] {
            return Err(Error::shape(format!(
                "legs {dims:?} need a {d}x{d} matrix, got {:?}",
                mat.shape()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::shape(format!("duplicate leg labels in {labels:?}")));
        }
        Ok(Register {
            labels,
            dims,
            mat: mat.into_data(),
        })
    }

    /// The scalar `c` on no legs.
    pub fn scalar(c: C64) -> Self {
        Register {
            labels: vec![],
            dims: vec![],
            mat: vec![c],
        }
    }

    /// `|0⟩⟨0|` on every listed leg.
    pub fn reference(labels: &[Label], dims: &[usize]) -> Self {
        let mut r = Register::scalar(ONE);
        for (&l, &d) in labels.iter().zip(dims) {
            r.insert_leg(r.labels.len(), l, d, Fill::Reference);
        }
        r
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[C64] {
        &self.mat
    }

    pub fn to_tensor(&self) -> DenseTensor {
        let d = self.dim();
        DenseTensor::new(vec![d, d], self.mat.clone()).expect("consistent size")
    }

    pub fn position(&self, label: Label) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    fn positions(&self, labels: &[Label]) -> Vec<usize> {
        labels
            .iter()
            .map(|&l| self.position(l).unwrap_or_else(|| panic!("leg {l} not in register {:?}", self.labels)))
            .collect()
    }

    /// Offsets of the listed leg positions and of the complementary legs.
    fn split_offsets(&self, pos: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let strides = row_major_strides(&self.dims);
        let gd: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let gs: Vec<usize> = pos.iter().map(|&p| strides[p]).collect();
        let rest: Vec<usize> = (0..self.dims.len()).filter(|p| !pos.contains(p)).collect();
        let rd: Vec<usize> = rest.iter().map(|&p| self.dims[p]).collect();
        let rs: Vec<usize> = rest.iter().map(|&p| strides[p]).collect();
        (multi_offsets(&gd, &gs), multi_offsets(&rd, &rs))
    }

    /// `M ← (U ⊗ 1) M` with `U` acting on `legs` in the given order.
    pub fn left_apply(&mut self, u: &DenseTensor, legs: &[Label]) {
        let pos = self.positions(legs);
        let (g, r) = self.split_offsets(&pos);
        let n = g.len();
        assert_eq!(u.shape(), [n, n], "gate dimension");
        let d = self.dim();
        let ud = u.data();
        let mut buf = vec![ZERO; n * d];
        for &ro in &r {
            for (k, &go) in g.iter().enumerate() {
                buf[k * d..(k + 1) * d].copy_from_slice(&self.mat[(ro + go) * d..(ro + go + 1) * d]);
            }
            for (a, &go) in g.iter().enumerate() {
                let row = &mut self.mat[(ro + go) * d..(ro + go + 1) * d];
                row.fill(ZERO);
                for k in 0..n {
                    let x = ud[a * n + k];
                    if x == ZERO {
                        continue;
                    }
                    for (o, &y) in row.iter_mut().zip(&buf[k * d..(k + 1) * d]) {
                        *o += x * y;
                    }
                }
            }
        }
    }

    /// `M ← M (U ⊗ 1)†`.
    pub fn right_apply_adjoint(&mut self, u: &DenseTensor, legs: &[Label]) {
        let pos = self.positions(legs);
        let (g, r) = self.split_offsets(&pos);
        let n = g.len();
        assert_eq!(u.shape(), [n, n], "gate dimension");
        let d = self.dim();
        let uc: Vec<C64> = u.data().iter().map(|z| z.conj()).collect();
        let mut v = vec![ZERO; n];
        for row in self.mat.chunks_exact_mut(d) {
            for &ro in &r {
                for (k, &go) in g.iter().enumerate() {
                    v[k] = row[ro + go];
                }
                for (a, &go) in g.iter().enumerate() {
                    let mut acc = ZERO;
                    for k in 0..n {
                        acc += v[k] * uc[a * n + k];
                    }
                    row[ro + go] = acc;
                }
            }
        }
    }

    /// `M ← (U ⊗ 1) M (U ⊗ 1)†`.
    pub fn conjugate(&mut self, u: &DenseTensor, legs: &[Label]) {
        self.left_apply(u, legs);
        self.right_apply_adjoint(u, legs);
    }

    /// Inserts a leg at position `pos` carrying `fill`.
    pub fn insert_leg(&mut self, pos: usize, label: Label, dim: usize, fill: Fill) {
        assert!(self.position(label).is_none(), "leg {label} already present");
        let mut dims = self.dims.clone();
        dims.insert(pos, dim);
        let strides = row_major_strides(&dims);
        let old_strides: Vec<usize> = (0..dims.len()).filter(|&p| p != pos).map(|p| strides[p]).collect();
        let kept = multi_offsets(&self.dims, &old_strides);
        let s = strides[pos];
        let nd = self.dim() * dim;
        let mut mat = vec![ZERO; nd * nd];
        let od = self.dim();
        for (i, &ri) in kept.iter().enumerate() {
            for (j, &cj) in kept.iter().enumerate() {
                let x = self.mat[i * od + j];
                match fill {
                    Fill::Reference => mat[ri * nd + cj] = x,
                    Fill::Identity => {
                        for t in 0..dim {
                            mat[(ri + t * s) * nd + cj + t * s] = x;
                        }
                    }
                }
            }
        }
        self.labels.insert(pos, label);
        self.dims = dims;
        self.mat = mat;
    }

    /// Removes leg `label` by `⟨t|·|t⟩` summed over `t` (trace) or at `t = 0`
    /// only (projection onto the reference state). Returns the old position.
    fn remove_leg(&mut self, label: Label, project: bool) -> usize {
        let pos = self.positions(&[label])[0];
        let (g, r) = self.split_offsets(&[pos]);
        let nd = r.len();
        let od = self.dim();
        let taps: &[usize] = if project { &g[..1] } else { &g };
        let mut mat = vec![ZERO; nd * nd];
        for (i, &ri) in r.iter().enumerate() {
            for (j, &cj) in r.iter().enumerate() {
                let mut acc = ZERO;
                for &t in taps {
                    acc += self.mat[(ri + t) * od + cj + t];
                }
                mat[i * nd + j] = acc;
            }
        }
        self.labels.remove(pos);
        self.dims.remove(pos);
        self.mat = mat;
        pos
    }

    pub fn trace_leg(&mut self, label: Label) -> usize {
        self.remove_leg(label, false)
    }

    pub fn project_leg(&mut self, label: Label) -> usize {
        self.remove_leg(label, true)
    }

    pub fn relabel(&mut self, from: Label, to: Label) {
        let p = self.positions(&[from])[0];
        assert!(from == to || self.position(to).is_none(), "leg {to} already present");
        self.labels[p] = to;
    }

    /// Permutes the legs into `order`, which must list every label once.
    pub fn reorder(&mut self, order: &[Label]) {
        if order == self.labels.as_slice() {
            return;
        }
        assert_eq!(order.len(), self.labels.len(), "reorder must list every leg");
        let pos = self.positions(order);
        let strides = row_major_strides(&self.dims);
        let dims: Vec<usize> = pos.iter().map(|&p| self.dims[p]).collect();
        let gather: Vec<usize> = pos.iter().map(|&p| strides[p]).collect();
        let offs = multi_offsets(&dims, &gather);
        let d = self.dim();
        let mut mat = vec![ZERO; d * d];
        for (a, &oa) in offs.iter().enumerate() {
            for (b, &ob) in offs.iter().enumerate() {
                mat[a * d + b] = self.mat[oa * d + ob];
            }
        }
        self.labels = order.to_vec();
        self.dims = dims;
        self.mat = mat;
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.mat[i * d + i]).sum()
    }

    /// `Tr(A B)` for registers on the same legs (in any order).
    pub fn trace_product(a: &Register, b: &Register) -> C64 {
        let b = b.aligned_to(a);
        let d = a.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += a.mat[i * d + j] * b.mat[j * d + i];
            }
        }
        acc
    }

    fn aligned_to<'a>(&'a self, other: &Register) -> std::borrow::Cow<'a, Register> {
        if self.labels == other.labels {
            std::borrow::Cow::Borrowed(self)
        } else {
            let mut c = self.clone();
            c.reorder(&other.labels);
            std::borrow::Cow::Owned(c)
        }
    }

    /// `Tr_M(A B)` where `M` are all legs except `legs`; the result is the
    /// matrix on `legs` in the given order.
    pub fn reduced_product(a: &Register, b: &Register, legs: &[Label]) -> DenseTensor {
        let b = b.aligned_to(a);
        let pos = a.positions(legs);
        let (g, r) = a.split_offsets(&pos);
        let n = g.len();
        let d = a.dim();
        let mut bt = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                bt[j * d + i] = b.mat[i * d + j];
            }
        }
        let mut out = vec![ZERO; n * n];
        for &ro in &r {
            for (x, &gx) in g.iter().enumerate() {
                let arow = &a.mat[(gx + ro) * d..(gx + ro + 1) * d];
                for (y, &gy) in g.iter().enumerate() {
                    let bcol = &bt[(gy + ro) * d..(gy + ro + 1) * d];
                    let mut acc = ZERO;
                    for (p, q) in arow.iter().zip(bcol) {
                        acc += p * q;
                    }
                    out[x * n + y] += acc;
                }
            }
        }
        DenseTensor::new(vec![n, n], out).expect("square")
    }

    /// Reduced matrix on `keep` (in that order), tracing every other leg.
    pub fn reduced(&self, keep: &[Label]) -> Register {
        let mut r = self.clone();
        for &l in &self.labels {
            if !keep.contains(&l) {
                r.trace_leg(l);
            }
        }
        r.reorder(keep);
        r
    }

    pub fn scale(&mut self, s: C64) {
        for z in &mut self.mat {
            *z *= s;
        }
    }

    /// `self += s · other`, aligning leg order.
    pub fn add_scaled(&mut self, other: &Register, s: C64) {
        let o = other.aligned_to(self);
        assert_eq!(o.labels, self.labels, "registers on different legs");
        for (x, y) in self.mat.iter_mut().zip(&o.mat) {
            *x += s * y;
        }
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.to_tensor().hermiticity_residual()
    }
}
