//! Haar-averaged doubled transition channels `𝓔 = Avg ℳ⊗ℳ` and their spectra.
//!
//! Every tensor of a heterogeneous network is an independent Haar unitary,
//! so the average of a doubled move factorizes into one second-moment twirl
//! per gate. After a twirl on legs `G` the doubled operator is a combination
//! of `1` and the copy swap `S` on all of `G`; both are products over legs.
//! Working with per-leg symbols `{1, S, |00⟩⟨00|}` the whole channel is
//! therefore exact and closed on the span of `{1, S}^{⊗k}` over the `k`
//! window legs. That span contains the range of `𝓔` and of `𝓔†`, so it
//! carries every nonzero eigenvalue together with the right and left
//! eigenoperators. A dense Hilbert–Schmidt construction on registers is
//! kept for small windows as an independent check.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzSpec, Family};
use crate::cone::{GateSource, Geometry, Op, Program};
use crate::error::{Error, Result};
use crate::expectation::TransitionMap;
use crate::register::{Fill, Label, Register};
use crate::tensor::{DenseTensor, C64, ONE, ZERO};

/// Second-moment Weingarten coefficients of U(N).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weingarten {
    pub n: usize,
    /// `Wg(e) = 1/(N²−1)`
    pub identity: f64,
    /// `Wg(swap) = −1/(N(N²−1))`
    pub swap: f64,
}

pub fn weingarten_second_moment(n: usize) -> Result<Weingarten> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("second-moment Weingarten calculus needs N >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok(Weingarten {
        n,
        identity: 1.0 / (nf * nf - 1.0),
        swap: -1.0 / (nf * (nf * nf - 1.0)),
    })
}

impl Weingarten {
    /// Coefficients of `(1, S)` in the twirl given `(Tr Z, Tr SZ)`.
    pub fn project(&self, t_id: f64, t_swap: f64) -> (f64, f64) {
        (self.identity * t_id + self.swap * t_swap, self.swap * t_id + self.identity * t_swap)
    }
}

const COPY: Label = 1 << 31;

fn copy_of(l: Label) -> Label {
    l | COPY
}

/// Swap of two blocks of dimension `n`.
fn block_swap(n: usize) -> DenseTensor {
    DenseTensor::from_fn_matrix(n * n, n * n, |r, c| if r == (c % n) * n + c / n { ONE } else { ZERO })
}

/// `Avg (U⊗U) Z (U⊗U)†` with `U` on `legs` of copy A and their images in copy B.
pub fn twirl(z: &Register, legs: &[Label]) -> Result<Register> {
    let n: usize = legs.iter().map(|&l| z.dims()[z.position(l).expect("gate leg")]).product();
    let wg = weingarten_second_moment(n)?;
    let mut doubled: Vec<Label> = legs.to_vec();
    doubled.extend(legs.iter().map(|&l| copy_of(l)));
    let dims: Vec<usize> = doubled.iter().map(|&l| z.dims()[z.position(l).expect("gate leg")]).collect();
    let swap = block_swap(n);
    let reduce = |m: &Register| {
        let mut r = m.clone();
        for &l in &doubled {
            r.trace_leg(l);
        }
        r
    };
    let c_id = reduce(z);
    let mut sz = z.clone();
    sz.left_apply(&swap, &doubled);
    let c_sw = reduce(&sz);
    let mut out: Option<Register> = None;
    for (k, coef) in [(0, (wg.identity, wg.swap)), (1, (wg.swap, wg.identity))] {
        let mut r = c_id.clone();
        r.scale(C64::new(coef.0, 0.0));
        r.add_scaled(&c_sw, C64::new(coef.1, 0.0));
        for (&l, &d) in doubled.iter().zip(&dims) {
            r.insert_leg(r.labels().len(), l, d, Fill::Identity);
        }
        if k == 1 {
            r.left_apply(&swap, &doubled);
        }
        match &mut out {
            None => out = Some(r),
            Some(o) => o.add_scaled(&r, ONE),
        }
    }
    let mut out = out.expect("two terms");
    out.reorder(z.labels());
    Ok(out)
}

/// Runs a program on both copies of a doubled operator. Gates are twirled
/// (`gates = None`) or applied as the fixed unitaries of an instance.
pub fn apply_doubled(p: &Program, z: &Register, gates: Option<&dyn GateSource>) -> Result<Register> {
    let mut r = z.clone();
    for op in &p.ops {
        match op {
            Op::Trace { label, .. } => {
                r.trace_leg(*label);
                r.trace_leg(copy_of(*label));
            }
            Op::AddRef { label, dim, .. } => {
                r.insert_leg(r.labels().len(), *label, *dim, Fill::Reference);
                r.insert_leg(r.labels().len(), copy_of(*label), *dim, Fill::Reference);
            }
            Op::Relabel { from, to } => {
                r.relabel(*from, *to);
                r.relabel(copy_of(*from), copy_of(*to));
            }
            Op::Gate { gate, legs, .. } => match gates {
                None => r = twirl(&r, legs)?,
                Some(g) => {
                    let copies: Vec<Label> = legs.iter().map(|&l| copy_of(l)).collect();
                    r.conjugate(g.gate(*gate), legs);
                    r.conjugate(g.gate(*gate), &copies);
                }
            },
            Op::Reorder { .. } => {}
        }
    }
    r.reorder(&doubled_labels(&p.output));
    Ok(r)
}

fn doubled_labels(labels: &[Label]) -> Vec<Label> {
    labels.iter().copied().chain(labels.iter().map(|&l| copy_of(l))).collect()
}

fn doubled_dims(dims: &[usize]) -> Vec<usize> {
    dims.iter().chain(dims).copied().collect()
}

const ID: u8 = 0;
const SW: u8 = 1;
const REF: u8 = 2;

/// A doubled operator as a combination of products of per-leg symbols.
#[derive(Clone, Debug)]
struct Patterns {
    labels: Vec<Label>,
    dims: Vec<usize>,
    terms: BTreeMap<Vec<u8>, f64>,
}

fn tr_id(sym: u8, d: f64) -> f64 {
    match sym {
        ID => d * d,
        SW => d,
        _ => 1.0,
    }
}

fn tr_swap(sym: u8, d: f64) -> f64 {
    match sym {
        ID => d,
        SW => d * d,
        _ => 1.0,
    }
}

impl Patterns {
    fn basis(labels: &[Label], dims: &[usize], index: usize) -> Self {
        let pattern = (0..labels.len()).map(|k| ((index >> (labels.len() - 1 - k)) & 1) as u8).collect();
        Patterns {
            labels: labels.to_vec(),
            dims: dims.to_vec(),
            terms: BTreeMap::from([(pattern, 1.0)]),
        }
    }

    fn pos(&self, l: Label) -> usize {
        self.labels.iter().position(|&x| x == l).expect("leg present")
    }

    fn map_terms(&mut self, mut f: impl FnMut(Vec<u8>, f64, &mut BTreeMap<Vec<u8>, f64>)) {
        let mut next = BTreeMap::new();
        for (p, c) in std::mem::take(&mut self.terms) {
            f(p, c, &mut next);
        }
        next.retain(|_, c| *c != 0.0);
        self.terms = next;
    }

    fn remove(&mut self, l: Label, factor: impl Fn(u8, f64) -> f64) {
        let k = self.pos(l);
        let d = self.dims[k] as f64;
        self.labels.remove(k);
        self.dims.remove(k);
        self.map_terms(|mut p, c, out| {
            let s = p.remove(k);
            *out.entry(p).or_insert(0.0) += c * factor(s, d);
        });
    }

    fn insert(&mut self, l: Label, dim: usize, sym: u8) {
        self.labels.push(l);
        self.dims.push(dim);
        self.map_terms(|mut p, c, out| {
            p.push(sym);
            *out.entry(p).or_insert(0.0) += c;
        });
    }

    fn twirl(&mut self, legs: &[Label]) -> Result<()> {
        let pos: Vec<usize> = legs.iter().map(|&l| self.pos(l)).collect();
        let n: usize = pos.iter().map(|&k| self.dims[k]).product();
        let wg = weingarten_second_moment(n)?;
        let dims = self.dims.clone();
        self.map_terms(|p, c, out| {
            let t_id: f64 = pos.iter().map(|&k| tr_id(p[k], dims[k] as f64)).product();
            let t_sw: f64 = pos.iter().map(|&k| tr_swap(p[k], dims[k] as f64)).product();
            let (a, b) = wg.project(t_id, t_sw);
            for (sym, coef) in [(ID, a), (SW, b)] {
                let mut q = p.clone();
                for &k in &pos {
                    q[k] = sym;
                }
                *out.entry(q).or_insert(0.0) += c * coef;
            }
        });
        Ok(())
    }

    fn forward(&mut self, op: &Op) -> Result<()> {
        match op {
            Op::Trace { label, .. } => self.remove(*label, tr_id),
            Op::AddRef { label, dim, .. } => self.insert(*label, *dim, REF),
            Op::Relabel { from, to } => {
                let k = self.pos(*from);
                self.labels[k] = *to;
            }
            Op::Gate { legs, .. } => self.twirl(legs)?,
            Op::Reorder { .. } => {}
        }
        Ok(())
    }

    fn backward(&mut self, op: &Op) -> Result<()> {
        match op {
            Op::Trace { label, dim, .. } => self.insert(*label, *dim, ID),
            // ⟨00|1|00⟩ = ⟨00|S|00⟩ = 1
            Op::AddRef { label, .. } => self.remove(*label, |_, _| 1.0),
            Op::Relabel { from, to } => {
                let k = self.pos(*to);
                self.labels[k] = *from;
            }
            Op::Gate { legs, .. } => self.twirl(legs)?,
            Op::Reorder { .. } => {}
        }
        Ok(())
    }

    /// Coefficient vector over the `{1,S}^k` basis of `order`.
    fn coefficients(&self, order: &[Label]) -> Result<Vec<f64>> {
        let perm: Vec<usize> = order.iter().map(|&l| self.pos(l)).collect();
        let mut out = vec![0.0; 1 << order.len()];
        for (p, &c) in &self.terms {
            let mut idx = 0;
            for &k in &perm {
                if p[k] == REF {
                    return Err(Error::Integrity("reference leg left untwirled".into()));
                }
                idx = (idx << 1) | p[k] as usize;
            }
            out[idx] += c;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelTag {
    MpsSite,
    MeraBinaryLeft,
    MeraBinaryRight,
    MeraBinaryAverage,
    TtnsBinary,
    TtnsTernary,
    MeraTernary,
}

impl ChannelTag {
    pub fn name(self) -> &'static str {
        match self {
            ChannelTag::MpsSite => "mps-site",
            ChannelTag::MeraBinaryLeft => "mera-binary-left",
            ChannelTag::MeraBinaryRight => "mera-binary-right",
            ChannelTag::MeraBinaryAverage => "mera-binary-average",
            ChannelTag::TtnsBinary => "ttns-binary",
            ChannelTag::TtnsTernary => "ttns-ternary",
            ChannelTag::MeraTernary => "mera-ternary",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ChannelTag::all()
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown channel tag '{s}'")))
    }

    pub fn all() -> [ChannelTag; 7] {
        [
            ChannelTag::MpsSite,
            ChannelTag::MeraBinaryLeft,
            ChannelTag::MeraBinaryRight,
            ChannelTag::MeraBinaryAverage,
            ChannelTag::TtnsBinary,
            ChannelTag::TtnsTernary,
            ChannelTag::MeraTernary,
        ]
    }

    /// The average channel of a family.
    pub fn for_spec(spec: &AnsatzSpec) -> Result<Self> {
        match (spec.family, spec.branching) {
            (Family::Mps, _) => Ok(ChannelTag::MpsSite),
            (Family::Mera, 2) => Ok(ChannelTag::MeraBinaryAverage),
            (Family::Mera, 3) => Ok(ChannelTag::MeraTernary),
            (Family::Ttns, 2) => Ok(ChannelTag::TtnsBinary),
            (Family::Ttns, 3) => Ok(ChannelTag::TtnsTernary),
            _ => Err(Error::Unsupported(format!("no channel for {:?}", spec))),
        }
    }

    fn family(self) -> (Family, usize) {
        match self {
            ChannelTag::MpsSite => (Family::Mps, 1),
            ChannelTag::MeraBinaryLeft | ChannelTag::MeraBinaryRight | ChannelTag::MeraBinaryAverage => (Family::Mera, 2),
            ChannelTag::TtnsBinary => (Family::Ttns, 2),
            ChannelTag::TtnsTernary => (Family::Ttns, 3),
            ChannelTag::MeraTernary => (Family::Mera, 3),
        }
    }
}

/// Move programs averaged by a tag, all mapping a bulk window to the next
/// level down.
pub fn channel_programs(spec: &AnsatzSpec, tag: ChannelTag) -> Result<Vec<Program>> {
    let (family, b) = tag.family();
    if spec.family != family || (family != Family::Mps && spec.branching != b) {
        return Err(Error::Configuration(format!("channel {} does not belong to a {}", tag.name(), spec.family.name())));
    }
    if spec.homogeneous {
        return Err(Error::Unsupported("averaged channels factorize only for heterogeneous networks".into()));
    }
    if family == Family::Mps {
        let s = AnsatzSpec::mps(spec.chi, spec.d, 3);
        return Ok(vec![TransitionMap::mps_site(&s, 2)?.program]);
    }
    // a deep enough ring that the windows never wrap
    let mut bulk = spec.clone();
    bulk.size = 6;
    let geom = Geometry::new(&bulk)?;
    let base = 4 * b;
    let tags: Vec<usize> = match tag {
        ChannelTag::MeraBinaryLeft => vec![1],
        ChannelTag::MeraBinaryRight => vec![0],
        _ => (0..b).collect(),
    };
    tags.into_iter()
        .map(|r| Ok(geom.move_program(2, base + r)?.program))
        .collect()
}

#[derive(Clone, Debug)]
pub enum ChannelRepr {
    /// Restriction to `span{1,S}^{⊗k}`, basis index bits ordered like the legs
    /// (most significant first), `S` = 1.
    Invariant(DMatrix<f64>),
    /// Full matrix in the row-major Hilbert–Schmidt basis of the doubled window.
    Dense(DMatrix<C64>),
}

#[derive(Clone, Debug)]
pub struct SuperOperatorMatrix {
    pub tag: ChannelTag,
    /// Dimension of the doubled window space.
    pub operand_dim: usize,
    /// Dimension of every window leg of one copy.
    pub leg_dims: Vec<usize>,
    pub repr: ChannelRepr,
}

/// Exact averaged channel on the invariant span.
pub fn build_doubled_channel(spec: &AnsatzSpec, tag: ChannelTag) -> Result<SuperOperatorMatrix> {
    let programs = channel_programs(spec, tag)?;
    let p0 = &programs[0];
    let k = p0.input.len();
    if k > 16 {
        return Err(Error::Resource(format!("invariant basis of 2^{k} elements")));
    }
    let mut m = DMatrix::<f64>::zeros(1 << k, 1 << k);
    let w = 1.0 / programs.len() as f64;
    for p in &programs {
        for q in 0..1 << k {
            let mut z = Patterns::basis(&p.input, &p.input_dims, q);
            for op in &p.ops {
                z.forward(op)?;
            }
            for (r, c) in z.coefficients(&p.output)?.into_iter().enumerate() {
                m[(r, q)] += w * c;
            }
        }
    }
    Ok(SuperOperatorMatrix {
        tag,
        operand_dim: p0.input_dims.iter().product::<usize>().pow(2),
        leg_dims: p0.input_dims.clone(),
        repr: ChannelRepr::Invariant(m),
    })
}

/// Adjoint channel `𝓔†` on the invariant span.
pub fn build_adjoint_channel(spec: &AnsatzSpec, tag: ChannelTag) -> Result<DMatrix<f64>> {
    let programs = channel_programs(spec, tag)?;
    let k = programs[0].output.len();
    let mut m = DMatrix::<f64>::zeros(1 << k, 1 << k);
    let w = 1.0 / programs.len() as f64;
    for p in &programs {
        for q in 0..1 << k {
            let mut z = Patterns::basis(&p.output, &p.output_dims, q);
            for op in p.ops.iter().rev() {
                z.backward(op)?;
            }
            for (r, c) in z.coefficients(&p.input)?.into_iter().enumerate() {
                m[(r, q)] += w * c;
            }
        }
    }
    Ok(m)
}

/// Largest `D²` for the dense construction.
pub const DENSE_BUDGET: usize = 1024;

/// Dense Hilbert–Schmidt matrix of the averaged channel, built by twirling
/// registers. Feasible only for small windows.
pub fn build_dense_channel(spec: &AnsatzSpec, tag: ChannelTag) -> Result<SuperOperatorMatrix> {
    let programs = channel_programs(spec, tag)?;
    let p0 = &programs[0];
    let d: usize = p0.input_dims.iter().product::<usize>().pow(2);
    let peak = programs.iter().map(|p| p.peak_dim().pow(2)).max().unwrap_or(0);
    if d * d > DENSE_BUDGET || peak > 1024 {
        return Err(Error::Resource(format!(
            "dense channel needs D² = {} (budget {DENSE_BUDGET}) and doubled registers of dimension {peak}",
            d * d
        )));
    }
    let mut m = DMatrix::<C64>::zeros(d * d, d * d);
    let w = C64::new(1.0 / programs.len() as f64, 0.0);
    for p in &programs {
        // windows are matched by position, not by label
        let labels = doubled_labels(&p.input);
        let dims = doubled_dims(&p.input_dims);
        for col in 0..d * d {
            let mut e = DenseTensor::zeros(vec![d, d]);
            e.set2(col / d, col % d, ONE);
            let z = Register::new(labels.clone(), dims.clone(), e)?;
            let out = apply_doubled(p, &z, None)?;
            for (row, &v) in out.data().iter().enumerate() {
                m[(row, col)] += w * v;
            }
        }
    }
    Ok(SuperOperatorMatrix {
        tag,
        operand_dim: d,
        leg_dims: p0.input_dims.clone(),
        repr: ChannelRepr::Dense(m),
    })
}

impl SuperOperatorMatrix {
    /// Hilbert–Schmidt Gram matrix of the basis.
    pub fn gram(&self) -> DMatrix<f64> {
        match &self.repr {
            ChannelRepr::Dense(m) => DMatrix::identity(m.nrows(), m.nrows()),
            ChannelRepr::Invariant(m) => {
                let k = self.leg_dims.len();
                DMatrix::from_fn(m.nrows(), m.nrows(), |p, q| {
                    (0..k)
                        .map(|l| {
                            let d = self.leg_dims[l] as f64;
                            let bit = 1 << (k - 1 - l);
                            if (p & bit) == (q & bit) { d * d } else { d }
                        })
                        .product()
                })
            }
        }
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        match &self.repr {
            ChannelRepr::Dense(m) => m.clone(),
            ChannelRepr::Invariant(m) => m.map(|x| C64::new(x, 0.0)),
        }
    }

    /// Coordinates of the identity on the doubled window.
    pub fn identity_vector(&self) -> DMatrix<C64> {
        let n = self.matrix().nrows();
        let mut v = DMatrix::zeros(n, 1);
        match &self.repr {
            ChannelRepr::Invariant(_) => v[(0, 0)] = ONE,
            ChannelRepr::Dense(_) => {
                let d = self.operand_dim;
                for i in 0..d {
                    v[(i * d + i, 0)] = ONE;
                }
            }
        }
        v
    }

    /// `max |⟨⟨1|𝓔(B)⟩⟩ − ⟨⟨1|B⟩⟩|` over basis elements, relative to `⟨⟨1|1⟩⟩`.
    pub fn trace_residual(&self) -> f64 {
        let g = self.gram().map(|x| C64::new(x, 0.0));
        let one = self.identity_vector();
        let functional = one.adjoint() * &g;
        let diff = &functional * self.matrix() - &functional;
        let scale = (one.adjoint() * &g * &one)[(0, 0)].norm();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
    }

    /// `(a + b)/2` of two channels on the same space.
    pub fn average(a: &SuperOperatorMatrix, b: &SuperOperatorMatrix, tag: ChannelTag) -> Result<SuperOperatorMatrix> {
        let repr = match (&a.repr, &b.repr) {
            (ChannelRepr::Invariant(x), ChannelRepr::Invariant(y)) if x.shape() == y.shape() => ChannelRepr::Invariant((x + y) * 0.5),
            (ChannelRepr::Dense(x), ChannelRepr::Dense(y)) if x.shape() == y.shape() => ChannelRepr::Dense((x + y) * C64::new(0.5, 0.0)),
            _ => return Err(Error::shape("channels on different spaces")),
        };
        Ok(SuperOperatorMatrix {
            tag,
            operand_dim: a.operand_dim,
            leg_dims: a.leg_dims.clone(),
            repr,
        })
    }

    /// Doubled-window operator of a coordinate vector, legs ordered copy A
    /// then copy B.
    pub fn operator(&self, coeffs: &[C64]) -> Result<DenseTensor> {
        let d = self.operand_dim;
        match &self.repr {
            ChannelRepr::Dense(_) => DenseTensor::new(vec![d, d], coeffs.to_vec()),
            ChannelRepr::Invariant(_) => {
                if d > 4096 {
                    return Err(Error::Resource(format!("operator of dimension {d}")));
                }
                let k = self.leg_dims.len();
                let labels: Vec<Label> = (0..k as Label).collect();
                let order = doubled_labels(&labels);
                let mut out = DenseTensor::zeros(vec![d, d]);
                for (idx, &c) in coeffs.iter().enumerate() {
                    if c == ZERO {
                        continue;
                    }
                    let mut r = Register::scalar(c);
                    for (l, &dim) in self.leg_dims.iter().enumerate() {
                        let (a, b) = (l as Label, copy_of(l as Label));
                        r.insert_leg(r.labels().len(), a, dim, Fill::Identity);
                        r.insert_leg(r.labels().len(), b, dim, Fill::Identity);
                        if (idx >> (k - 1 - l)) & 1 == 1 {
                            r.left_apply(&block_swap(dim), &[a, b]);
                        }
                    }
                    r.reorder(&order);
                    out.add_assign_scaled(&r.to_tensor(), ONE)?;
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: C64,
    /// Coordinates of `r̂_n` and `ℓ̂_n` in the channel's basis.
    pub right: Vec<C64>,
    pub left: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    /// All eigenvalues of the represented matrix, by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    pub pairs: Vec<EigenPair>,
    /// `(first index, multiplicity)` of every cluster with multiplicity > 1
    /// among the returned pairs.
    pub degeneracies: Vec<(usize, usize)>,
    pub biorthogonality_residual: f64,
}

pub const CLUSTER_TOL: f64 = 1e-8;

fn order_key(a: &C64, b: &C64) -> std::cmp::Ordering {
    b.norm()
        .partial_cmp(&a.norm())
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
        .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
}

/// `m` vectors spanning the approximate null space of `a`.
fn null_space(a: &DMatrix<C64>, m: usize) -> DMatrix<C64> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let n = a.ncols();
    DMatrix::from_fn(n, m, |r, c| v_t[(idx[c], r)].conj())
}

/// Leading eigenvalues and biorthogonal eigenoperators of a channel.
pub fn spectrum(channel: &SuperOperatorMatrix, top_k: usize) -> Result<SpectrumResult> {
    let k = channel.matrix();
    let n = k.nrows();
    let schur = nalgebra::linalg::Schur::try_new(k.clone(), 1e-14, 10_000).ok_or_else(|| Error::Numerical {
        message: "Schur iteration did not converge".into(),
        residual: f64::NAN,
    })?;
    let (_, t) = schur.unpack();
    let mut eig: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    eig.sort_by(order_key);
    let top_k = top_k.min(n);
    // clusters among the first top_k values; extend the last one if it is cut
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < top_k {
        let mut j = i + 1;
        while j < n && (eig[j] - eig[i]).norm() < CLUSTER_TOL * eig[i].norm().max(1.0) {
            j += 1;
        }
        clusters.push((i, j - i));
        i = j;
    }
    let g = channel.gram().map(|x| C64::new(x, 0.0));
    let g_inv = g.clone().try_inverse().ok_or_else(|| Error::Numerical {
        message: "singular Gram matrix".into(),
        residual: f64::NAN,
    })?;
    let id = DMatrix::<C64>::identity(n, n);
    let mut pairs = Vec::new();
    let mut worst: f64 = 0.0;
    for &(start, mult) in &clusters {
        let lam = eig[start];
        let shifted = &k - &id * lam;
        let right = null_space(&shifted, mult);
        let res = (&shifted * &right).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if res > 1e-8 {
            return Err(Error::Numerical {
                message: format!("right eigenvector of {lam} not resolved"),
                residual: res,
            });
        }
        // w† K = λ w†, then ℓ = G⁻¹ w so that ⟨⟨ℓ|·⟩⟩ = w†
        let w = null_space(&shifted.adjoint(), mult);
        let left = &g_inv * &w;
        let overlap = left.adjoint() * &g * &right;
        let inv = overlap.clone().try_inverse().ok_or_else(|| Error::Numerical {
            message: format!("left and right eigenvectors of {lam} are orthogonal (defective)"),
            residual: overlap.iter().map(|z| z.norm()).fold(0.0, f64::max),
        })?;
        let right = right * inv;
        for c in 0..mult {
            pairs.push(EigenPair {
                value: eig[start + c],
                right: right.column(c).iter().copied().collect(),
                left: left.column(c).iter().copied().collect(),
            });
        }
    }
    for (a, pa) in pairs.iter().enumerate() {
        for (b, pb) in pairs.iter().enumerate() {
            let l = DMatrix::from_column_slice(n, 1, &pa.left);
            let r = DMatrix::from_column_slice(n, 1, &pb.right);
            let v = (l.adjoint() * &g * r)[(0, 0)];
            let expected = if a == b { ONE } else { ZERO };
            worst = worst.max((v - expected).norm());
        }
    }
    Ok(SpectrumResult {
        eigenvalues: eig,
        pairs,
        degeneracies: clusters.into_iter().filter(|c| c.1 > 1).collect(),
        biorthogonality_residual: worst,
    })
}

impl SpectrumResult {
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0)
    }

    /// Second eigenvalue by modulus (`η`).
    pub fn eta(&self) -> f64 {
        self.eigenvalues.get(1).map(|z| z.re).unwrap_or(0.0)
    }
}

/// Second-largest eigenvalue `η` of the averaged doubled channel in closed
/// form. For ternary MERA only the leading order `1/(3χ²)` is known.
pub fn analytic_eta(family: Family, branching: usize, chi: usize, d: usize) -> Result<f64> {
    let x = chi as f64;
    if chi < 1 {
        return Err(Error::InvalidDimension("chi must be >= 1".into()));
    }
    match (family, branching) {
        (Family::Mps, _) => {
            let d = d as f64;
            Ok((1.0 - 1.0 / (x * x)) / (d - 1.0 / (x * x * d)))
        }
        (Family::Mera, 2) => Ok(x * x * (1.0 + x).powi(4) / (2.0 * (1.0 + x * x).powi(4))),
        (Family::Ttns, 2) => Ok(x / (1.0 + x * x)),
        (Family::Ttns, 3) => Ok(x * x / (1.0 + x * x + x.powi(4))),
        (Family::Mera, 3) => Ok(1.0 / (3.0 * x * x)),
        _ => Err(Error::Unsupported(format!("no closed form for {} with b = {branching}", family.name()))),
    }
}

/// `λ₃` of the binary MERA average channel.
pub fn analytic_lambda3_binary_mera(chi: usize) -> f64 {
    let x = chi as f64;
    x * x * (1.0 + x).powi(2) / (2.0 * (1.0 + x * x).powi(3))
}

/// `η` of the 2D `3×3 ↦ 1` MERA to leading order.
pub fn analytic_eta_mera_2d(chi: usize) -> f64 {
    1.0 / (9.0 * (chi as f64).powi(8))
}

/// `b·η`, the per-layer decay factor of the gradient variance (`b = 1` for MPS).
pub fn predicted_layer_scaling(family: Family, branching: usize, chi: usize) -> Result<f64> {
    let b = if family == Family::Mps { 1 } else { branching };
    Ok(b as f64 * analytic_eta(family, branching, chi, chi)?)
}

/// Contribution of the term at `i ≤ j` to the MPS variance at site `j`.
pub fn predicted_mps_term_variance(chi: usize, d: usize, trh2: f64, j: usize, i: usize) -> Result<f64> {
    if i > j {
        return Ok(0.0);
    }
    let eta = analytic_eta(Family::Mps, 1, chi, d)?;
    let (x, d) = (chi as f64, d as f64);
    Ok(2.0 * trh2 / (d * (x * x * d + 1.0)) * eta.powi((j - i) as i32))
}

/// Leading MPS variance at site `j` of an `L`-site chain for single-site
/// terms: the sum of term contributions `i = 1..j`, dropping the `O(η^{L−i})`
/// corrections from the right boundary.
pub fn predicted_mps_variance(chi: usize, d: usize, trh2: f64, j: usize, l: usize) -> Result<f64> {
    if j < 1 || j > l {
        return Err(Error::Index(format!("site {j} outside 1..={l}")));
    }
    (1..=j).map(|i| predicted_mps_term_variance(chi, d, trh2, j, i)).sum()
}

/// Bulk value `2Tr(h²)(χ²d²−1)/(d(d−1)(χ²d+1)²)`.
pub fn predicted_mps_bulk_variance(chi: usize, d: usize, trh2: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("physical dimension must be >= 2, got {d}")));
    }
    let (x, d) = (chi as f64, d as f64);
    Ok(2.0 * trh2 * (x * x * d * d - 1.0) / (d * (d - 1.0) * (x * x * d + 1.0).powi(2)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaEntry {
    pub family: String,
    pub branching: usize,
    pub chi: usize,
    pub d: usize,
    pub eta: f64,
    pub lambda3: Option<f64>,
    pub b_eta: f64,
    /// False where only the leading order is known.
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalyticEtaTable {
    pub entries: Vec<EtaEntry>,
}

pub fn analytic_table(chis: &[usize]) -> Result<AnalyticEtaTable> {
    let mut entries = Vec::new();
    for &chi in chis {
        for (family, b, name) in [
            (Family::Mps, 1, "mps"),
            (Family::Ttns, 2, "ttns"),
            (Family::Ttns, 3, "ttns"),
            (Family::Mera, 2, "mera"),
            (Family::Mera, 3, "mera"),
        ] {
            let eta = analytic_eta(family, b, chi, chi)?;
            entries.push(EtaEntry {
                family: name.into(),
                branching: b,
                chi,
                d: chi,
                eta,
                lambda3: (family == Family::Mera && b == 2).then(|| analytic_lambda3_binary_mera(chi)),
                b_eta: b as f64 * eta,
                exact: !(family == Family::Mera && b == 3),
            });
        }
        let eta = analytic_eta_mera_2d(chi);
        entries.push(EtaEntry {
            family: "mera-2d-3x3".into(),
            branching: 9,
            chi,
            d: chi,
            eta,
            lambda3: None,
            b_eta: 9.0 * eta,
            exact: false,
        });
    }
    Ok(AnalyticEtaTable { entries })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumExport {
    pub family: String,
    pub chi: usize,
    pub d: usize,
    pub tag: ChannelTag,
    pub eigenvalues: Vec<f64>,
    pub eigenvalues_imag: Vec<f64>,
    pub analytic_eta: Option<f64>,
    pub b_eta: Option<f64>,
}

pub fn spectrum_export(spec: &AnsatzSpec, channel: &SuperOperatorMatrix, s: &SpectrumResult, count: usize) -> SpectrumExport {
    let b = if spec.family == Family::Mps { 1 } else { spec.branching };
    let eta = match channel.tag {
        ChannelTag::MeraBinaryLeft | ChannelTag::MeraBinaryRight => None,
        _ => analytic_eta(spec.family, b, spec.chi, spec.d).ok(),
    };
    let vals: Vec<C64> = s.eigenvalues.iter().take(count).copied().collect();
    SpectrumExport {
        family: spec.family.name().into(),
        chi: spec.chi,
        d: spec.d,
        tag: channel.tag,
        eigenvalues: vals.iter().map(|z| z.re).collect(),
        eigenvalues_imag: vals.iter().map(|z| z.im).collect(),
        analytic_eta: eta,
        b_eta: eta.map(|e| e * b as f64),
    }
}
