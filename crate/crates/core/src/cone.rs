//! Causal-cone geometry of hierarchical networks and gate programs.
//!
//! A [`Program`] is the sequence of leg operations that maps the density
//! operator on a parent window at level `τ` to the density operator on a
//! child window at level `τ−1`: trace legs that leave the cone, append
//! reference legs for isometries, apply gates. The same program run backwards
//! with adjoint operations ascends operators, and a forward/backward pair of
//! passes yields every gate's environment.
//!
//! Windows are `W_ℓ(x) = {x, x+1, …, x+w−1} mod n_ℓ` with `w` the cone width
//! (3 for binary MERA, 2 otherwise), deduplicated on rings shorter than `w`.
//! For binary MERA an odd child window traces one site on the left and two on
//! the right of the six intermediate sites; this is the left-moving map.

use std::collections::BTreeSet;

use crate::ansatz::{AnsatzSpec, Family, Position, TensorKind, TnsInstance, TrotterLayout};
use crate::error::{Error, Result};
use crate::register::{Fill, Label, Register};
use crate::tensor::DenseTensor;

/// Leg label of `site` on `level`; distinct levels never collide.
pub fn site_label(level: usize, site: usize) -> Label {
    ((level as u32) << 20) | site as u32
}

/// A gate matrix in an instance: slot and brickwall sub-gate (0 for full tensors).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateRef {
    pub slot: usize,
    pub sub: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Trace { label: Label, dim: usize, pos: usize },
    AddRef { label: Label, dim: usize, pos: usize },
    Relabel { from: Label, to: Label },
    Gate { gate: GateRef, position: Position, legs: Vec<Label> },
    Reorder { from: Vec<Label>, to: Vec<Label> },
}

/// Supplies gate matrices by reference.
pub trait GateSource {
    fn gate(&self, g: GateRef) -> &DenseTensor;
}

impl GateSource for TnsInstance {
    fn gate(&self, g: GateRef) -> &DenseTensor {
        self.pool(g.slot).gates[g.sub].matrix()
    }
}

/// A gate source with one gate replaced.
pub struct Override<'a> {
    pub base: &'a dyn GateSource,
    pub gate: GateRef,
    pub matrix: DenseTensor,
}

impl GateSource for Override<'_> {
    fn gate(&self, g: GateRef) -> &DenseTensor {
        if g == self.gate {
            &self.matrix
        } else {
            self.base.gate(g)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub input: Vec<Label>,
    pub input_dims: Vec<usize>,
    pub output: Vec<Label>,
    pub output_dims: Vec<usize>,
    pub ops: Vec<Op>,
}

/// Tracks the leg order while a program is assembled so every removal and
/// insertion records its position.
pub(crate) struct Builder {
    labels: Vec<Label>,
    dims: Vec<usize>,
    ops: Vec<Op>,
    input: Vec<Label>,
    input_dims: Vec<usize>,
    peak: usize,
}

impl Builder {
    pub(crate) fn new(input: Vec<Label>, dims: Vec<usize>) -> Self {
        Builder {
            peak: input.len(),
            labels: input.clone(),
            dims: dims.clone(),
            ops: vec![],
            input,
            input_dims: dims,
        }
    }

    pub(crate) fn has(&self, l: Label) -> bool {
        self.labels.contains(&l)
    }

    pub(crate) fn trace(&mut self, label: Label) {
        let pos = self.labels.iter().position(|&l| l == label).expect("leg present");
        self.labels.remove(pos);
        let dim = self.dims.remove(pos);
        self.ops.push(Op::Trace { label, dim, pos });
    }

    pub(crate) fn add_ref(&mut self, label: Label, dim: usize) {
        let pos = self.labels.len();
        self.labels.push(label);
        self.dims.push(dim);
        self.peak = self.peak.max(self.labels.len());
        self.ops.push(Op::AddRef { label, dim, pos });
    }

    pub(crate) fn relabel(&mut self, from: Label, to: Label) {
        let pos = self.labels.iter().position(|&l| l == from).expect("leg present");
        self.labels[pos] = to;
        self.ops.push(Op::Relabel { from, to });
    }

    pub(crate) fn gate(&mut self, gate: GateRef, position: Position, legs: Vec<Label>) {
        debug_assert!(legs.iter().all(|l| self.labels.contains(l)));
        self.ops.push(Op::Gate { gate, position, legs });
    }

    pub(crate) fn finish(mut self, order: Vec<Label>) -> Program {
        let dims: Vec<usize> = order
            .iter()
            .map(|l| self.dims[self.labels.iter().position(|x| x == l).expect("output leg present")])
            .collect();
        if order != self.labels {
            self.ops.push(Op::Reorder {
                from: self.labels.clone(),
                to: order.clone(),
            });
        }
        Program {
            input: self.input,
            input_dims: self.input_dims,
            output: order,
            output_dims: dims,
            ops: self.ops,
        }
    }
}

impl Program {
    /// Runs the program on a density operator over `input`.
    pub fn descend(&self, rho: &Register, gates: &dyn GateSource) -> Register {
        let mut r = rho.clone();
        for op in &self.ops {
            forward(&mut r, op, gates);
        }
        r
    }

    /// Heisenberg-picture adjoint: maps an operator on `output` back to `input`.
    pub fn ascend(&self, op: &Register, gates: &dyn GateSource) -> Register {
        let mut r = op.clone();
        for o in self.ops.iter().rev() {
            backward(&mut r, o, gates);
        }
        r
    }

    /// Forward pass on `rho` and adjoint pass on `op`. For every gate,
    /// `visit(gate op, X, Y)` receives the density before the gate and the
    /// ascended operator after it, on identical legs, so that the program's
    /// `Tr(op · descend(rho)) = Tr(Y U X U†)`. Returns the ascended `op`.
    pub fn backprop(
        &self,
        rho: &Register,
        op: &Register,
        gates: &dyn GateSource,
        visit: &mut dyn FnMut(&Op, &Register, &Register),
    ) -> Register {
        let mut states = Vec::new();
        let mut r = rho.clone();
        for o in &self.ops {
            if matches!(o, Op::Gate { .. }) {
                states.push(r.clone());
            }
            forward(&mut r, o, gates);
        }
        let mut y = op.clone();
        for o in self.ops.iter().rev() {
            if matches!(o, Op::Gate { .. }) {
                let x = states.pop().expect("one state per gate");
                visit(o, &x, &y);
            }
            backward(&mut y, o, gates);
        }
        y
    }

    pub fn gates(&self) -> impl Iterator<Item = (&GateRef, &Position, &Vec<Label>)> {
        self.ops.iter().filter_map(|o| match o {
            Op::Gate { gate, position, legs } => Some((gate, position, legs)),
            _ => None,
        })
    }

    /// Largest register dimension reached during the forward pass.
    pub fn peak_dim(&self) -> usize {
        let mut dims = self.input_dims.clone();
        let mut labels = self.input.clone();
        let mut peak: usize = dims.iter().product();
        for op in &self.ops {
            match op {
                Op::Trace { pos, .. } => {
                    dims.remove(*pos);
                    labels.remove(*pos);
                }
                Op::AddRef { label, dim, pos } => {
                    dims.insert(*pos, *dim);
                    labels.insert(*pos, *label);
                }
                _ => {}
            }
            peak = peak.max(dims.iter().product());
        }
        peak
    }
}

fn forward(r: &mut Register, op: &Op, gates: &dyn GateSource) {
    match op {
        Op::Trace { label, .. } => {
            r.trace_leg(*label);
        }
        Op::AddRef { label, dim, pos } => r.insert_leg(*pos, *label, *dim, Fill::Reference),
        Op::Relabel { from, to } => r.relabel(*from, *to),
        Op::Gate { gate, legs, .. } => r.conjugate(gates.gate(*gate), legs),
        Op::Reorder { to, .. } => r.reorder(to),
    }
}

fn backward(r: &mut Register, op: &Op, gates: &dyn GateSource) {
    match op {
        Op::Trace { label, dim, pos } => r.insert_leg(*pos, *label, *dim, Fill::Identity),
        Op::AddRef { label, .. } => {
            r.project_leg(*label);
        }
        Op::Relabel { from, to } => r.relabel(*to, *from),
        Op::Gate { gate, legs, .. } => r.conjugate(&gates.gate(*gate).adjoint(), legs),
        Op::Reorder { from, .. } => r.reorder(from),
    }
}

/// One step of the descent: the program mapping parent window `parent` on
/// level `ℓ+1` to a child window on level `ℓ`.
#[derive(Clone, Debug)]
pub struct Move {
    pub parent: usize,
    pub program: Program,
}

/// Periodic hierarchical geometry of a TTNS or MERA.
#[derive(Clone, Debug)]
pub struct Geometry {
    spec: AnsatzSpec,
    width: usize,
    units: usize,
    unit_dim: usize,
    iso_layout: Option<TrotterLayout>,
    dis_layout: Option<TrotterLayout>,
}

impl Geometry {
    pub fn new(spec: &AnsatzSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.is_hierarchical() {
            return Err(Error::Precondition("cone geometry is defined for ttns and mera".into()));
        }
        let iso_layout = spec.trotter_layout(TensorKind::Isometry);
        let dis_layout = if spec.family == Family::Mera {
            spec.trotter_layout(TensorKind::Disentangler)
        } else {
            None
        };
        // trotterized networks keep every leg split into qubits
        let (units, unit_dim) = match &iso_layout {
            Some(l) => (l.qubits_per_leg, 2),
            None => (1, spec.chi),
        };
        Ok(Geometry {
            spec: spec.clone(),
            width: spec.cone_width(),
            units,
            unit_dim,
            iso_layout,
            dis_layout,
        })
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn layers(&self) -> usize {
        self.spec.size
    }

    pub fn sites(&self, level: usize) -> usize {
        self.spec.level_sites(level)
    }

    /// `W_ℓ(x)` in canonical order.
    pub fn window(&self, level: usize, start: usize) -> Vec<usize> {
        let n = self.sites(level);
        let mut out = Vec::with_capacity(self.width);
        for r in 0..self.width.min(n) {
            out.push((start + r) % n);
        }
        out
    }

    fn unit_labels(&self, level: usize, site: usize) -> Vec<Label> {
        let base = site_label(level, site) * self.units as u32;
        (0..self.units as u32).map(|r| base + r).collect()
    }

    /// Unit-leg labels and dimensions of a window. Trotterized networks
    /// split every χ-leg into `log₂ χ` qubit legs; the matrix layout is the
    /// same either way.
    pub fn window_legs(&self, level: usize, start: usize) -> (Vec<Label>, Vec<usize>) {
        let labels: Vec<Label> = self
            .window(level, start)
            .into_iter()
            .flat_map(|s| self.unit_labels(level, s))
            .collect();
        let dims = vec![self.unit_dim; labels.len()];
        (labels, dims)
    }

    /// The two sites (on level `τ−1`) acted on by disentangler `(τ, k)`.
    pub fn dis_sites(&self, layer: usize, k: usize) -> [usize; 2] {
        let b = self.spec.branching;
        let n = self.sites(layer - 1);
        [b * k + b - 1, (b * k + b) % n]
    }

    /// Sites on level `τ−1` produced by isometry `(τ, k)`.
    pub fn iso_sites(&self, _layer: usize, k: usize) -> Vec<usize> {
        let b = self.spec.branching;
        (b * k..b * k + b).collect()
    }

    /// Unit legs a tensor acts on, in the order of its matrix.
    pub fn tensor_units(&self, pos: Position) -> Vec<Label> {
        let lo = pos.layer - 1;
        let sites = match pos.kind {
            TensorKind::Disentangler => self.dis_sites(pos.layer, pos.index).to_vec(),
            _ => self.iso_sites(pos.layer, pos.index),
        };
        sites.into_iter().flat_map(|m| self.unit_labels(lo, m)).collect()
    }

    fn dis_of(&self, layer: usize, m: usize) -> Option<usize> {
        if self.spec.family != Family::Mera {
            return None;
        }
        let b = self.spec.branching;
        let np = self.sites(layer);
        if m % b == b - 1 {
            Some(m / b)
        } else if m % b == 0 {
            Some((m / b + np - 1) % np)
        } else {
            None
        }
    }

    /// Disentanglers and isometries of layer `τ` that `child` (sites on
    /// level `τ−1`) depends on.
    pub fn parents(&self, layer: usize, child: &BTreeSet<usize>) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let dis: BTreeSet<usize> = child.iter().filter_map(|&m| self.dis_of(layer, m)).collect();
        let mut inter = child.clone();
        for &k in &dis {
            inter.extend(self.dis_sites(layer, k));
        }
        let b = self.spec.branching;
        let isos = inter.iter().map(|&m| m / b).collect();
        (dis, isos)
    }

    fn arc_start(&self, level: usize, set: &BTreeSet<usize>) -> Result<usize> {
        for &s in set {
            let w: BTreeSet<usize> = self.window(level, s).into_iter().collect();
            if set.is_subset(&w) {
                return Ok(s);
            }
        }
        Err(Error::Integrity(format!("parent set {set:?} on level {level} exceeds the cone width")))
    }

    /// Start of the level-`τ` window feeding child window `x` on level `τ−1`.
    pub fn parent_start(&self, layer: usize, x: usize) -> Result<usize> {
        let child: BTreeSet<usize> = self.window(layer - 1, x).into_iter().collect();
        let (_, isos) = self.parents(layer, &child);
        self.arc_start(layer, &isos)
    }

    fn emit_gate(&self, b: &mut Builder, pos: Position, legs: &[(usize, usize)]) {
        let slot = self.spec.pool_of(pos);
        let units: Vec<Label> = legs.iter().flat_map(|&(l, s)| self.unit_labels(l, s)).collect();
        let layout = match pos.kind {
            TensorKind::Disentangler => &self.dis_layout,
            _ => &self.iso_layout,
        };
        match layout {
            None => b.gate(GateRef { slot, sub: 0 }, pos, units),
            Some(l) => {
                for (sub, &(a, c)) in l.pairs.iter().enumerate() {
                    b.gate(GateRef { slot, sub }, pos, vec![units[a], units[c]]);
                }
            }
        }
    }

    fn build(&self, layer: usize, child: &[usize], parent: usize, isos: &[usize], dis: &BTreeSet<usize>) -> (Program, usize) {
        let lo = layer - 1;
        let (input, dims) = self.window_legs(layer, parent);
        let mut b = Builder::new(input, dims);
        let needed: BTreeSet<usize> = isos.iter().copied().collect();
        for p in self.window(layer, parent) {
            if !needed.contains(&p) {
                for u in self.unit_labels(layer, p) {
                    b.trace(u);
                }
            }
        }
        let keep: BTreeSet<usize> = child.iter().copied().collect();
        let mut applied = BTreeSet::new();
        let has_site = |b: &Builder, m: usize| b.has(self.unit_labels(lo, m)[0]);
        for &k in isos {
            let out = self.iso_sites(layer, k);
            let from = self.unit_labels(layer, k);
            let to = self.unit_labels(lo, out[0]);
            for (f, t) in from.into_iter().zip(to) {
                b.relabel(f, t);
            }
            for &m in &out[1..] {
                for u in self.unit_labels(lo, m) {
                    b.add_ref(u, self.unit_dim);
                }
            }
            let legs: Vec<(usize, usize)> = out.iter().map(|&m| (lo, m)).collect();
            self.emit_gate(&mut b, Position::isometry(layer, k), &legs);
            for &d in dis {
                let [p, q] = self.dis_sites(layer, d);
                if !applied.contains(&d) && has_site(&b, p) && has_site(&b, q) {
                    self.emit_gate(&mut b, Position::disentangler(layer, d), &[(lo, p), (lo, q)]);
                    applied.insert(d);
                }
            }
            let present: Vec<usize> = (0..self.sites(lo)).filter(|&m| has_site(&b, m)).collect();
            for m in present {
                let pending = dis
                    .iter()
                    .any(|&d| !applied.contains(&d) && self.dis_sites(layer, d).contains(&m));
                if !keep.contains(&m) && !pending {
                    for u in self.unit_labels(lo, m) {
                        b.trace(u);
                    }
                }
            }
        }
        let peak = b.peak;
        let order: Vec<Label> = child.iter().flat_map(|&m| self.unit_labels(lo, m)).collect();
        (b.finish(order), peak)
    }

    /// Program for child window `x` on level `τ−1`. Isometries are applied in
    /// the order that keeps the register smallest.
    pub fn move_program(&self, layer: usize, x: usize) -> Result<Move> {
        if layer < 1 || layer > self.layers() {
            return Err(Error::Index(format!("layer {layer} out of range 1..={}", self.layers())));
        }
        let child = self.window(layer - 1, x);
        let set: BTreeSet<usize> = child.iter().copied().collect();
        let (dis, isos) = self.parents(layer, &set);
        let parent = self.arc_start(layer, &isos)?;
        let isos: Vec<usize> = isos.into_iter().collect();
        let mut best: Option<(Program, usize)> = None;
        for order in permutations(&isos) {
            let (p, peak) = self.build(layer, &child, parent, &order, &dis);
            if best.as_ref().is_none_or(|(_, bp)| peak < *bp) {
                best = Some((p, peak));
            }
        }
        Ok(Move {
            parent,
            program: best.expect("at least one isometry").0,
        })
    }

    /// All descent programs: `moves[ℓ][x]` maps level `ℓ+1` to window `x` on level `ℓ`.
    pub fn plan(&self) -> Result<Vec<Vec<Move>>> {
        (0..self.layers())
            .map(|l| (0..self.sites(l)).map(|x| self.move_program(l + 1, x)).collect())
            .collect()
    }

    /// `|0⟩⟨0|` on the single top window.
    pub fn top_state(&self) -> Register {
        let (labels, dims) = self.window_legs(self.layers(), 0);
        Register::reference(&labels, &dims)
    }

    /// Physical sites `i` whose `width`-site term (on sites `i..i+width−1`)
    /// depends on the tensor at `pos`.
    pub fn cone_sites(&self, pos: Position, width: usize) -> Result<BTreeSet<usize>> {
        self.spec.check_position(pos)?;
        let n0 = self.sites(0);
        let mut out = BTreeSet::new();
        for x in 0..n0 {
            let mut set: BTreeSet<usize> = (0..width.min(n0)).map(|r| (x + r) % n0).collect();
            for layer in 1..=pos.layer {
                let (dis, isos) = self.parents(layer, &set);
                if layer == pos.layer {
                    let hit = match pos.kind {
                        TensorKind::Disentangler => dis.contains(&pos.index),
                        _ => isos.contains(&pos.index),
                    };
                    if hit {
                        out.insert(x);
                    }
                }
                set = isos;
            }
        }
        Ok(out)
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}
