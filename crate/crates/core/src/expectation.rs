//! Local expectation values and gradient environments through causal cones.
//!
//! MPS legs are labelled `bond(j)` for the bond to the right of site `j` and
//! `phys(j)` for the physical leg of site `j`. A site program appends the
//! reference leg, applies `U_j` on `(bond, ref)` and hands the left output
//! on as `bond(j−1)`. Hierarchical networks use the window programs of
//! [`crate::cone`].

use crate::ansatz::{AnsatzSpec, Family, Position, TensorKind, TnsInstance};
use crate::basis::LocalOperator;
use crate::cone::{Builder, GateRef, GateSource, Geometry, Move, Op, Program};
use crate::error::{Error, Result};
use crate::register::{Fill, Label, Register};
use crate::tensor::DenseTensor;

pub fn bond(j: usize) -> Label {
    2 * j as Label
}

pub fn phys(j: usize) -> Label {
    2 * j as Label + 1
}

/// A sum of local terms. MPS term starts are 1-based on the open chain,
/// hierarchical ones 0-based on the periodic ring.
#[derive(Clone, Debug, Default)]
pub struct Hamiltonian {
    pub terms: Vec<LocalOperator>,
}

impl Hamiltonian {
    pub fn new(terms: Vec<LocalOperator>) -> Self {
        Hamiltonian { terms }
    }

    /// `Σ_i h_i` over every placement of `h` that fits the network.
    pub fn translation_invariant(spec: &AnsatzSpec, h: &LocalOperator) -> Result<Self> {
        let n = h.width();
        let starts: Vec<usize> = match spec.family {
            Family::Mps => {
                if n > spec.size {
                    return Err(Error::Configuration(format!("{n}-site term on a chain of {}", spec.size)));
                }
                (1..=spec.size + 1 - n).collect()
            }
            _ => (0..spec.sites()).collect(),
        };
        Ok(Hamiltonian {
            terms: starts.into_iter().map(|i| h.at(i)).collect(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Checks every term against the network's site dimension and range.
    pub fn check(&self, spec: &AnsatzSpec) -> Result<()> {
        for t in &self.terms {
            check_term(spec, t)?;
        }
        Ok(())
    }
}

fn check_term(spec: &AnsatzSpec, h: &LocalOperator) -> Result<()> {
    let dim = if spec.family == Family::Mps { spec.d } else { spec.chi };
    if h.site_dim() != dim {
        return Err(Error::shape(format!("term on dimension {} for sites of dimension {dim}", h.site_dim())));
    }
    match spec.family {
        Family::Mps => {
            let (i, n) = (h.start(), h.width());
            if i < 1 || i + n - 1 > spec.size {
                return Err(Error::Index(format!("support {i}..={} outside 1..={}", i + n - 1, spec.size)));
            }
        }
        _ => {
            if h.start() >= spec.sites() {
                return Err(Error::Index(format!("site {} outside 0..{}", h.start(), spec.sites())));
            }
            let w = spec.cone_width().min(spec.sites());
            if h.width() > w {
                return Err(Error::Configuration(format!(
                    "{}-site term exceeds the cone width {w} of this {}",
                    h.width(),
                    spec.family.name()
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn site_gate(spec: &AnsatzSpec, j: usize) -> GateRef {
    GateRef {
        slot: spec.pool_of(Position::site(j)),
        sub: 0,
    }
}

fn push_site(b: &mut Builder, spec: &AnsatzSpec, j: usize) {
    b.add_ref(phys(j), spec.d);
    b.gate(site_gate(spec, j), Position::site(j), vec![bond(j), phys(j)]);
    b.relabel(bond(j), bond(j - 1));
}

/// Program from `|0⟩` on `bond(L)` down to the physical legs of sites
/// `i..i+n−1`, tracing every other leg.
pub fn mps_term_program(spec: &AnsatzSpec, i: usize, n: usize) -> Program {
    let e = i + n - 1;
    let mut b = Builder::new(vec![bond(spec.size)], vec![spec.chi]);
    for j in (i..=spec.size).rev() {
        push_site(&mut b, spec, j);
        if j > e {
            b.trace(phys(j));
        }
    }
    b.trace(bond(i - 1));
    b.finish((i..=e).map(phys).collect())
}

/// Move programs from the top window down to window `x` on the physical
/// level, ordered from the top layer down.
pub fn hierarchical_chain(geom: &Geometry, x: usize) -> Result<Vec<(usize, Move)>> {
    let mut out = Vec::with_capacity(geom.layers());
    let mut start = x;
    for layer in 1..=geom.layers() {
        let mv = geom.move_program(layer, start)?;
        start = mv.parent;
        out.push((layer, mv));
    }
    out.reverse();
    Ok(out)
}

/// `h` on the first sites of physical window `x`, tensored with the identity
/// on the rest of the window.
pub fn embed_term(geom: &Geometry, h: &LocalOperator) -> Register {
    let (labels, dims) = geom.window_legs(0, h.start());
    let per_site = labels.len() / geom.window(0, h.start()).len();
    let k = h.width() * per_site;
    let mut r = Register::new(labels[..k].to_vec(), dims[..k].to_vec(), h.op().clone()).expect("term shape checked");
    for p in k..labels.len() {
        r.insert_leg(p, labels[p], dims[p], Fill::Identity);
    }
    r
}

/// `⟨Ψ|h_i|Ψ⟩` for an MPS term starting at site `i = h.start()` (1-based).
pub fn mps_local_expectation(inst: &TnsInstance, h: &LocalOperator) -> Result<f64> {
    let spec = inst.spec();
    if spec.family != Family::Mps {
        return Err(Error::Precondition("mps_local_expectation needs an mps".into()));
    }
    check_term(spec, h)?;
    let p = mps_term_program(spec, h.start(), h.width());
    let rho = p.descend(&Register::reference(&p.input, &p.input_dims), inst);
    let op = Register::new(p.output.clone(), p.output_dims.clone(), h.op().clone())?;
    Ok(Register::trace_product(&op, &rho).re)
}

/// Same value from the Heisenberg picture: `h` ascended to `bond(L)` and
/// read off in the reference state.
pub fn mps_local_expectation_ascending(inst: &TnsInstance, h: &LocalOperator) -> Result<f64> {
    let spec = inst.spec();
    check_term(spec, h)?;
    let p = mps_term_program(spec, h.start(), h.width());
    let op = Register::new(p.output.clone(), p.output_dims.clone(), h.op().clone())?;
    let up = p.ascend(&op, inst);
    Ok(up.data()[0].re)
}

/// `⟨Ψ|h_i|Ψ⟩` for a TTNS/MERA term starting at site `i = h.start()` (0-based).
/// Terms narrower than the cone width are padded with identities.
pub fn mera_local_expectation(inst: &TnsInstance, h: &LocalOperator) -> Result<f64> {
    let spec = inst.spec();
    if !spec.is_hierarchical() {
        return Err(Error::Precondition("mera_local_expectation needs a ttns or mera".into()));
    }
    check_term(spec, h)?;
    let geom = Geometry::new(spec)?;
    let mut rho = geom.top_state();
    for (_, mv) in hierarchical_chain(&geom, h.start())? {
        rho = mv.program.descend(&rho, inst);
    }
    Ok(Register::trace_product(&embed_term(&geom, h), &rho).re)
}

pub fn local_expectation(inst: &TnsInstance, h: &LocalOperator) -> Result<f64> {
    match inst.spec().family {
        Family::Mps => mps_local_expectation(inst, h),
        _ => mera_local_expectation(inst, h),
    }
}

/// `⟨Ψ|H|Ψ⟩` term by term.
pub fn energy(inst: &TnsInstance, ham: &Hamiltonian) -> Result<f64> {
    ham.terms.iter().map(|h| local_expectation(inst, h)).sum()
}

/// Environment of one tensor for one term: `⟨h⟩ = Tr(X U† Y U)` with `U`
/// acting on `legs` of the registers and the identity on the spectators.
#[derive(Clone, Debug)]
pub struct Environment {
    pub position: Position,
    pub legs: Vec<Label>,
    pub x: Register,
    pub y: Register,
}

impl Environment {
    /// Dimension `M` of the spectator legs.
    pub fn spectator_dim(&self) -> usize {
        let n: usize = self.legs.iter().map(|&l| self.x.dims()[self.x.position(l).expect("gate leg")]).product();
        self.x.dim() / n
    }

    pub fn gate_dim(&self) -> usize {
        self.x.dim() / self.spectator_dim()
    }

    /// `Tr(Y Ũ X Ũ†)` for any unitary `u` in place of the tensor.
    pub fn value(&self, u: &DenseTensor) -> f64 {
        let mut ux = self.x.clone();
        ux.conjugate(u, &self.legs);
        Register::trace_product(&self.y, &ux).re
    }

    /// `Tr_M(Y Ũ X)`, the Euclidean derivative of the value with respect to `Ū`.
    pub fn reduced_gradient(&self, u: &DenseTensor) -> Result<DenseTensor> {
        let n = self.gate_dim();
        if u.shape() != [n, n] {
            return Err(Error::shape(format!("environment of a U({n}) tensor, got {:?}", u.shape())));
        }
        let mut ux = self.x.clone();
        ux.left_apply(u, &self.legs);
        Ok(Register::reduced_product(&self.y, &ux, &self.legs))
    }
}

/// Runs `program` backwards and captures the environment of `pos`. For
/// brickwall tensors `X` is taken before the first gate and `Y` after the
/// last, which makes it the environment of the composed tensor.
fn capture(program: &Program, rho: &Register, op: &Register, gates: &dyn GateSource, pos: Position, legs: Vec<Label>) -> Option<Environment> {
    let mut x = None;
    let mut y = None;
    program.backprop(rho, op, gates, &mut |o, xs, ys| {
        if let Op::Gate { position, .. } = o {
            if *position == pos {
                if y.is_none() {
                    y = Some(ys.clone());
                }
                x = Some(xs.clone());
            }
        }
    });
    Some(Environment {
        position: pos,
        legs,
        x: x?,
        y: y?,
    })
}

/// Environment of the tensor at `pos` for the term `h` (starting at `h.start()`).
pub fn environment(inst: &TnsInstance, pos: Position, h: &LocalOperator) -> Result<Environment> {
    let spec = inst.spec();
    spec.check_position(pos)?;
    check_term(spec, h)?;
    let i = h.start();
    let outside = || Error::ConeMembership {
        site: i,
        tensor: pos.to_string(),
    };
    match spec.family {
        Family::Mps => {
            let j = pos.index;
            if i > j {
                return Err(outside());
            }
            let p = mps_term_program(spec, i, h.width());
            let rho = Register::reference(&p.input, &p.input_dims);
            let op = Register::new(p.output.clone(), p.output_dims.clone(), h.op().clone())?;
            capture(&p, &rho, &op, inst, pos, vec![bond(j), phys(j)])
                .ok_or_else(|| Error::Integrity(format!("{pos} missing from the program of site {i}")))
        }
        _ => {
            let geom = Geometry::new(spec)?;
            if !geom.cone_sites(pos, h.width())?.contains(&i) {
                return Err(outside());
            }
            let chain = hierarchical_chain(&geom, i)?;
            let mut rho = geom.top_state();
            let mut target = None;
            for (layer, mv) in &chain {
                if *layer == pos.layer {
                    target = Some(mv);
                    break;
                }
                rho = mv.program.descend(&rho, inst);
            }
            let mut y = embed_term(&geom, h);
            for (layer, mv) in chain.iter().rev() {
                if *layer == pos.layer {
                    break;
                }
                y = mv.program.ascend(&y, inst);
            }
            let mv = target.expect("every layer is on the chain");
            capture(&mv.program, &rho, &y, inst, pos, geom.tensor_units(pos))
                .ok_or_else(|| Error::Integrity(format!("{pos} missing from the cone of site {i}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    DescendDensity,
    AscendOperator,
}

/// One step of the descent, as a map on density operators or its adjoint on
/// operators.
#[derive(Clone, Debug)]
pub struct TransitionMap {
    pub direction: Direction,
    pub program: Program,
    tag: usize,
}

impl TransitionMap {
    /// `ℳ_j(R) = Σ_s V_j^s R V_j^{s†}` from `bond(j)` to `bond(j−1)`.
    pub fn mps_site(spec: &AnsatzSpec, j: usize) -> Result<Self> {
        spec.check_position(Position::site(j))?;
        let mut b = Builder::new(vec![bond(j)], vec![spec.chi]);
        push_site(&mut b, spec, j);
        b.trace(phys(j));
        Ok(TransitionMap {
            direction: Direction::DescendDensity,
            program: b.finish(vec![bond(j - 1)]),
            tag: 0,
        })
    }

    /// Move from the parent of child window `x` on level `τ−1`.
    pub fn hierarchical(geom: &Geometry, layer: usize, x: usize) -> Result<Self> {
        let mv = geom.move_program(layer, x)?;
        Ok(TransitionMap {
            direction: Direction::DescendDensity,
            program: mv.program,
            tag: x % geom.spec().branching,
        })
    }

    /// Which of the `b` cone shifts this move applies (`x mod b` of the child
    /// window). In binary MERA, 1 is the left-moving and 0 the right-moving map.
    pub fn move_tag(&self) -> usize {
        self.tag
    }

    pub fn adjoint(&self) -> Self {
        let direction = match self.direction {
            Direction::DescendDensity => Direction::AscendOperator,
            Direction::AscendOperator => Direction::DescendDensity,
        };
        TransitionMap { direction, ..self.clone() }
    }

    pub fn apply(&self, r: &Register, gates: &dyn GateSource) -> Register {
        match self.direction {
            Direction::DescendDensity => self.program.descend(r, gates),
            Direction::AscendOperator => self.program.ascend(r, gates),
        }
    }
}

/// Identity-like instance: every parent unitary is the identity.
pub fn identity_instance(spec: &AnsatzSpec) -> Result<TnsInstance> {
    use crate::ansatz::Pool;
    use crate::unitary::UnitaryMatrix;
    let pools = spec
        .pool_positions()
        .into_iter()
        .map(|pos| {
            let n = spec.tensor_dim(pos.kind);
            match spec.trotter_layout(pos.kind) {
                None => Pool::full_tensor(UnitaryMatrix::identity(n)),
                Some(l) => Pool {
                    full: UnitaryMatrix::identity(n),
                    gates: vec![UnitaryMatrix::identity(4); l.pairs.len()],
                },
            }
        })
        .collect();
    TnsInstance::from_pools(spec.clone(), 0, pools)
}

/// Kinds present in layer `τ` of a network.
pub fn layer_kinds(spec: &AnsatzSpec) -> &'static [TensorKind] {
    match spec.family {
        Family::Mps => &[TensorKind::Site],
        Family::Ttns => &[TensorKind::Isometry],
        Family::Mera => &[TensorKind::Isometry, TensorKind::Disentangler],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::sample_instance;
    use crate::basis::build_interaction;
    use crate::reference::{hierarchical_state, local_expectation as sv_expectation, mps_state};

    #[test]
    fn mps_matches_statevector() {
        for (chi, d, l, n) in [(2, 2, 8, 1), (2, 2, 8, 2), (3, 2, 6, 3), (2, 3, 6, 2), (1, 3, 5, 2)] {
            let spec = AnsatzSpec::mps(chi, d, l);
            let inst = sample_instance(&spec, 11).unwrap();
            let psi = mps_state(&inst).unwrap();
            let h = build_interaction(d, n).unwrap();
            for i in 1..=l + 1 - n {
                let h = h.at(i);
                let a = mps_local_expectation(&inst, &h).unwrap();
                let b = sv_expectation(&inst, &psi, i, h.op(), n).unwrap();
                let c = mps_local_expectation_ascending(&inst, &h).unwrap();
                assert!((a - b).abs() < 1e-10, "chi={chi} d={d} i={i}: {a} vs {b}");
                assert!((a - c).abs() < 1e-12);
            }
            assert!(matches!(mps_local_expectation(&inst, &h.at(l + 2 - n)), Err(Error::Index(_))));
        }
    }

    #[test]
    fn hierarchical_matches_statevector() {
        for spec in [
            AnsatzSpec::mera(2, 2, 2),
            AnsatzSpec::mera(2, 2, 3),
            AnsatzSpec::ttns(2, 2, 3),
            AnsatzSpec::mera(3, 2, 2),
            AnsatzSpec::ttns(3, 2, 2),
            AnsatzSpec::mera(2, 2, 3).with_homogeneous(true),
            AnsatzSpec::mera(2, 2, 3).with_trotter(2),
            AnsatzSpec::ttns(2, 4, 2).with_trotter(1),
        ] {
            let inst = sample_instance(&spec, 7).unwrap();
            let psi = hierarchical_state(&inst).unwrap();
            for n in 1..=spec.cone_width() {
                let h = build_interaction(spec.chi, n).unwrap();
                for i in 0..spec.sites() {
                    let a = mera_local_expectation(&inst, &h.at(i)).unwrap();
                    let b = sv_expectation(&inst, &psi, i, h.op(), n).unwrap();
                    assert!((a - b).abs() < 1e-10, "{spec:?} n={n} i={i}: {a} vs {b}");
                }
            }
            let too_wide = build_interaction(spec.chi, spec.cone_width() + 1).unwrap();
            assert!(matches!(mera_local_expectation(&inst, &too_wide), Err(Error::Configuration(_))));
        }
    }

    #[test]
    fn identity_network_gives_zero() {
        for spec in [AnsatzSpec::mera(2, 2, 3), AnsatzSpec::ttns(3, 3, 2), AnsatzSpec::mera(3, 2, 2)] {
            // the state is |0…0⟩, so only the reference diagonal element survives
            let inst = identity_instance(&spec).unwrap();
            let h = build_interaction(spec.chi, spec.cone_width()).unwrap();
            let mut off = h.op().clone();
            for r in 0..off.nrows() {
                off.set2(r, r, crate::tensor::ZERO);
            }
            let off = LocalOperator::new(spec.chi, spec.cone_width(), 0, off).unwrap();
            for i in 0..spec.sites() {
                let v = mera_local_expectation(&inst, &h.at(i)).unwrap();
                assert!((v - h.op().get2(0, 0).re).abs() < 1e-14);
                assert!(mera_local_expectation(&inst, &off.at(i)).unwrap().abs() < 1e-14);
            }
        }
    }

    fn check_reconstruction(inst: &TnsInstance, h: &LocalOperator) {
        let spec = inst.spec();
        let w = h.width();
        let direct = local_expectation(inst, h).unwrap();
        for pos in spec.positions() {
            let members = inst.causal_cone_sites(pos, w).unwrap();
            match environment(inst, pos, h) {
                Ok(env) => {
                    assert!(members.contains(&h.start()), "{pos} has an environment for site {}", h.start());
                    assert!((env.x.trace().re - 1.0).abs() < 1e-10);
                    assert!(env.x.hermiticity_residual() < 1e-10);
                    assert!(env.y.hermiticity_residual() < 1e-10);
                    let v = env.value(inst.tensor(pos).matrix());
                    assert!((v - direct).abs() < 1e-10, "{pos}: {v} vs {direct}");
                }
                Err(Error::ConeMembership { .. }) => assert!(!members.contains(&h.start())),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn environments_reconstruct_the_expectation() {
        let spec = AnsatzSpec::mps(2, 2, 7);
        let inst = sample_instance(&spec, 3).unwrap();
        for n in 1..=3 {
            let h = build_interaction(2, n).unwrap();
            for i in 1..=8 - n {
                check_reconstruction(&inst, &h.at(i));
            }
        }
        for spec in [AnsatzSpec::mera(2, 2, 4), AnsatzSpec::ttns(3, 2, 3), AnsatzSpec::mera(2, 2, 3).with_trotter(1)] {
            let inst = sample_instance(&spec, 4).unwrap();
            let h = build_interaction(2, spec.cone_width()).unwrap();
            for i in [0, 5, spec.sites() - 1] {
                check_reconstruction(&inst, &h.at(i));
            }
        }
    }

    #[test]
    fn mps_environment_at_the_term_site() {
        // for j = i the operator side is the bare term on (left bond, s_j)
        let spec = AnsatzSpec::mps(2, 2, 5);
        let inst = sample_instance(&spec, 8).unwrap();
        let h = build_interaction(2, 1).unwrap().at(3);
        let env = environment(&inst, Position::site(3), &h).unwrap();
        let mut y = env.y.clone();
        y.reorder(&[bond(3), phys(3)]);
        let expected = DenseTensor::kron(&DenseTensor::identity(2), h.op()).unwrap();
        assert!(y.to_tensor().max_abs_diff(&expected) < 1e-14);
        assert!(matches!(
            environment(&inst, Position::site(2), &h),
            Err(Error::ConeMembership { site: 3, .. })
        ));
    }

    #[test]
    fn transition_maps_are_cptp_and_adjoint() {
        use crate::unitary::{haar_unitary, stream};
        let spec = AnsatzSpec::mps(3, 2, 4);
        let inst = sample_instance(&spec, 1).unwrap();
        let geom = Geometry::new(&AnsatzSpec::mera(2, 2, 3)).unwrap();
        let minst = sample_instance(geom.spec(), 1).unwrap();
        let mut maps: Vec<(TransitionMap, &TnsInstance)> = (1..=4).map(|j| (TransitionMap::mps_site(&spec, j).unwrap(), &inst)).collect();
        for x in 0..4 {
            maps.push((TransitionMap::hierarchical(&geom, 2, x).unwrap(), &minst));
        }
        for (k, (m, g)) in maps.iter().enumerate() {
            let p = &m.program;
            let d: usize = p.input_dims.iter().product();
            let u = haar_unitary(d, &mut stream(k as u64, 0)).unwrap();
            let diag = DenseTensor::from_fn_matrix(d, d, |r, c| {
                if r == c { crate::tensor::C64::new((r + 1) as f64, 0.0) } else { crate::tensor::ZERO }
            });
            let mut rho = Register::new(p.input.clone(), p.input_dims.clone(), u.matrix().matmul(&diag).unwrap().matmul(&u.matrix().adjoint()).unwrap()).unwrap();
            rho.scale(crate::tensor::C64::new(1.0 / rho.trace().re, 0.0));
            let out = m.apply(&rho, *g);
            assert!((out.trace().re - 1.0).abs() < 1e-12);
            let eig = out.to_tensor().to_nalgebra().symmetric_eigenvalues();
            assert!(eig.iter().all(|&e| e >= -1e-10));
            let e: usize = p.output_dims.iter().product();
            let a = Register::new(p.output.clone(), p.output_dims.clone(), haar_unitary(e, &mut stream(k as u64, 1)).unwrap().matrix().clone()).unwrap();
            let lhs = Register::trace_product(&a, &out);
            let rhs = Register::trace_product(&m.adjoint().apply(&a, *g), &rho);
            assert!((lhs - rhs).norm() < 1e-12);
        }
        assert_eq!(maps[5].0.move_tag(), 1);
    }
}
