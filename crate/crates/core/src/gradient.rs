//! Riemannian energy gradients on the unitary group and their variances.
//!
//! For a unitary `U` with environments `(X, Y)` the Euclidean derivative is
//! `G = Σ Tr_M(Y Ũ X)` and the Riemannian gradient is `g = G − U G† U`, so that
//! `dE = ε Re⟨⟨g|U A⟩⟩` along `U e^{εA}` for anti-Hermitian `A`.
//! A sweep collects `G` for every gate of an instance in one forward and one
//! backward pass; homogeneous tensors accumulate over all their positions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzSpec, Family, Position, TensorKind, TnsInstance};
use crate::basis::{pauli_product_basis, OperatorBasis};
use crate::cone::{GateRef, GateSource, Geometry, Move, Op};
use crate::error::{Error, Result};
use crate::expectation::{embed_term, environment, site_gate, Environment, Hamiltonian};
use crate::register::{Fill, Label, Register};
use crate::tensor::{DenseTensor, C64, I, ONE};
use crate::unitary::UnitaryMatrix;

#[derive(Clone, Debug)]
pub struct RiemannianGradient {
    pub position: Position,
    pub g: DenseTensor,
    /// Dimension of the tensor.
    pub n: usize,
    /// Dimension of the spectator legs.
    pub m: usize,
}

impl RiemannianGradient {
    /// `(1/N) Tr(g†g)`.
    pub fn value(&self) -> f64 {
        norm_value(&self.g)
    }

    /// Largest entry of `U†g + (U†g)†`.
    pub fn tangent_residual(&self, u: &DenseTensor) -> f64 {
        tangent_residual(u, &self.g)
    }
}

pub fn norm_value(g: &DenseTensor) -> f64 {
    g.frobenius_norm().powi(2) / g.nrows() as f64
}

pub fn tangent_residual(u: &DenseTensor, g: &DenseTensor) -> f64 {
    let a = u.adjoint().matmul(g).expect("square");
    a.add(&a.adjoint()).expect("square").max_abs()
}

/// `G − U G† U`.
pub fn project(u: &DenseTensor, euclid: &DenseTensor) -> DenseTensor {
    let back = u.matmul(&euclid.adjoint()).and_then(|t| t.matmul(u)).expect("square");
    euclid.sub(&back).expect("square")
}

/// Gradient of `Σ_k Tr(X_k U† Y_k U)` at `u`.
pub fn riemannian_gradient(envs: &[Environment], u: &UnitaryMatrix) -> Result<RiemannianGradient> {
    let n = u.dim();
    let mut euclid = DenseTensor::zeros(vec![n, n]);
    let mut m = 1;
    for env in envs {
        euclid.add_assign_scaled(&env.reduced_gradient(u.matrix())?, ONE)?;
        m = env.spectator_dim();
    }
    let position = envs.first().map(|e| e.position).unwrap_or(Position::site(0));
    Ok(RiemannianGradient {
        position,
        g: project(u.matrix(), &euclid),
        n,
        m,
    })
}

/// Environments of `pos` for every term of `ham` in its causal cone.
pub fn environments(inst: &TnsInstance, pos: Position, ham: &Hamiltonian) -> Result<Vec<Environment>> {
    ham.check(inst.spec())?;
    let mut out = Vec::new();
    for h in &ham.terms {
        match environment(inst, pos, h) {
            Ok(e) => out.push(e),
            Err(Error::ConeMembership { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Gradient of `⟨H⟩` with respect to the tensor at `pos`, summed over all
/// terms in its cone.
pub fn position_gradient(inst: &TnsInstance, pos: Position, ham: &Hamiltonian) -> Result<RiemannianGradient> {
    let envs = environments(inst, pos, ham)?;
    let mut g = riemannian_gradient(&envs, inst.tensor(pos))?;
    g.position = pos;
    Ok(g)
}

/// `e^{±iπσ/4} = (1 ± iσ)/√2` for an involution `σ`.
fn quarter_rotation(sigma: &DenseTensor, sign: f64) -> DenseTensor {
    let n = sigma.nrows();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut r = DenseTensor::identity(n).scale(C64::new(s, 0.0));
    r.add_assign_scaled(sigma, I * (sign * s)).expect("square");
    r
}

/// `α_n = E(U e^{iπσ_n/4}) − E(U e^{−iπσ_n/4})` over the Pauli-product basis.
/// Only the tensor at `pos` changes, so the energies are read off the fixed
/// environments; everything outside its cone cancels in the difference.
pub fn rotation_angle_derivatives(inst: &TnsInstance, pos: Position, ham: &Hamiltonian, basis: &OperatorBasis) -> Result<Vec<f64>> {
    let u = inst.tensor(pos);
    let n = u.dim();
    if !n.is_power_of_two() {
        return Err(Error::Unsupported(format!("rotation angles need N = 2^k, got N = {n}")));
    }
    if basis.dim != n {
        return Err(Error::shape(format!("basis of dimension {} for a U({n}) tensor", basis.dim)));
    }
    let envs = environments(inst, pos, ham)?;
    let energy = |v: &DenseTensor| envs.iter().map(|e| e.value(v)).sum::<f64>();
    basis
        .elements
        .iter()
        .map(|sigma| {
            let plus = u.matrix().matmul(&quarter_rotation(sigma, 1.0))?;
            let minus = u.matrix().matmul(&quarter_rotation(sigma, -1.0))?;
            Ok(energy(&plus) - energy(&minus))
        })
        .collect()
}

/// Rotation angles in the Pauli-product basis of the tensor's dimension.
pub fn rotation_angles(inst: &TnsInstance, pos: Position, ham: &Hamiltonian) -> Result<Vec<f64>> {
    let basis = pauli_product_basis(inst.tensor(pos).dim())?;
    rotation_angle_derivatives(inst, pos, ham, &basis)
}

/// One Monte Carlo draw of the gradient variance at a position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSample {
    pub position: Position,
    pub value: f64,
    pub seed: u64,
}

pub fn variance_sample(inst: &TnsInstance, pos: Position, ham: &Hamiltonian) -> Result<VarianceSample> {
    let g = position_gradient(inst, pos, ham)?;
    Ok(VarianceSample {
        position: pos,
        value: g.value(),
        seed: inst.seed(),
    })
}

/// Energy and Euclidean derivatives of every gate of an instance.
#[derive(Clone, Debug, Default)]
pub struct Sweep {
    pub energy: f64,
    pub euclidean: BTreeMap<GateRef, DenseTensor>,
}

impl Sweep {
    fn accumulate(&mut self, gate: GateRef, contrib: DenseTensor) {
        match self.euclidean.get_mut(&gate) {
            Some(acc) => acc.add_assign_scaled(&contrib, ONE).expect("same gate shape"),
            None => {
                self.euclidean.insert(gate, contrib);
            }
        }
    }

    /// Riemannian gradient of one gate; zero for gates outside every cone.
    pub fn gradient(&self, gates: &dyn GateSource, gate: GateRef) -> DenseTensor {
        let u = gates.gate(gate);
        match self.euclidean.get(&gate) {
            Some(e) => project(u, e),
            None => DenseTensor::zeros(u.shape().to_vec()),
        }
    }

    pub fn value(&self, gates: &dyn GateSource, gate: GateRef) -> f64 {
        norm_value(&self.gradient(gates, gate))
    }
}

fn euclidean_contribution(x: &Register, y: &Register, u: &DenseTensor, legs: &[Label]) -> DenseTensor {
    let mut ux = x.clone();
    ux.left_apply(u, legs);
    Register::reduced_product(y, &ux, legs)
}

/// Full sweep of an instance; `gates` may override the instance's tensors.
pub fn sweep(inst: &TnsInstance, gates: &dyn GateSource, ham: &Hamiltonian) -> Result<Sweep> {
    match inst.spec().family {
        Family::Mps => mps_sweep(inst.spec(), gates, ham),
        _ => HierarchicalSweeper::new(inst.spec())?.sweep(gates, ham),
    }
}

// local leg labels of the MPS sweep
const B: Label = 0;
const P: Label = 1;
fn spec_leg(k: usize) -> Label {
    2 + k as Label
}

/// Linear-time MPS sweep. Densities descend from the right; operators
/// ascend from the left, with open multi-site terms carrying their
/// not-yet-reached sites as spectator legs.
pub fn mps_sweep(spec: &AnsatzSpec, gates: &dyn GateSource, ham: &Hamiltonian) -> Result<Sweep> {
    if spec.family != Family::Mps {
        return Err(Error::Precondition("mps_sweep needs an mps".into()));
    }
    ham.check(spec)?;
    let (chi, d, l) = (spec.chi, spec.d, spec.size);
    let u = |j: usize| gates.gate(site_gate(spec, j));
    let mut rho = vec![Register::reference(&[B], &[chi]); l + 1];
    for j in (1..=l).rev() {
        let mut r = rho[j].clone();
        r.insert_leg(1, P, d, Fill::Reference);
        r.conjugate(u(j), &[B, P]);
        r.trace_leg(P);
        rho[j - 1] = r;
    }
    let nmax = ham.terms.iter().map(|h| h.width()).max().unwrap_or(1);
    let mut starts: Vec<Vec<&crate::basis::LocalOperator>> = vec![vec![]; l + 1];
    for h in &ham.terms {
        starts[h.start()].push(h);
    }
    // X for site j with m spectators s_{j+1..j+m}
    let spectator_density = |j: usize, m: usize| {
        let mut r = rho[j + m].clone();
        for k in (j + 1..=j + m).rev() {
            r.insert_leg(r.labels().len(), P, d, Fill::Reference);
            r.conjugate(u(k), &[B, P]);
            r.relabel(P, spec_leg(k - j - 1));
        }
        r.insert_leg(1, P, d, Fill::Reference);
        r
    };
    let mut out = Sweep::default();
    let mut acc = Register::new(vec![B], vec![chi], DenseTensor::zeros(vec![chi, chi]))?;
    let mut open: Vec<Option<Register>> = vec![None; nmax];
    for j in 1..=l {
        for h in &starts[j] {
            let n = h.width();
            let mut labels = vec![P];
            labels.extend((0..n - 1).map(spec_leg));
            let mut t = Register::new(labels, vec![d; n], h.op().clone())?;
            t.insert_leg(0, B, chi, Fill::Identity);
            match &mut open[n - 1] {
                Some(o) => o.add_scaled(&t, ONE),
                slot => *slot = Some(t),
            }
        }
        let mut y0 = acc.clone();
        y0.insert_leg(1, P, d, Fill::Identity);
        if let Some(o) = open[0].take() {
            y0.add_scaled(&o, ONE);
        }
        let uj = u(j);
        let mut x0 = rho[j].clone();
        x0.insert_leg(1, P, d, Fill::Reference);
        let gate = site_gate(spec, j);
        out.accumulate(gate, euclidean_contribution(&x0, &y0, uj, &[B, P]));
        let udag = uj.adjoint();
        let ascend = |mut y: Register| {
            y.conjugate(&udag, &[B, P]);
            y.project_leg(P);
            y
        };
        for m in 1..nmax {
            if let Some(o) = open[m].take() {
                let xm = spectator_density(j, m);
                out.accumulate(gate, euclidean_contribution(&xm, &o, uj, &[B, P]));
                let mut up = ascend(o);
                up.relabel(spec_leg(0), P);
                for k in 1..m {
                    up.relabel(spec_leg(k), spec_leg(k - 1));
                }
                open[m - 1] = Some(up);
            }
        }
        acc = ascend(y0);
    }
    out.energy = acc.data()[0].re;
    Ok(out)
}

/// Full forward/backward pass over every window of a TTNS or MERA.
#[derive(Clone, Debug)]
pub struct HierarchicalSweeper {
    geom: Geometry,
    moves: Vec<Vec<Move>>,
}

impl HierarchicalSweeper {
    pub fn new(spec: &AnsatzSpec) -> Result<Self> {
        let geom = Geometry::new(spec)?;
        let moves = geom.plan()?;
        Ok(HierarchicalSweeper { geom, moves })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn sweep(&self, gates: &dyn GateSource, ham: &Hamiltonian) -> Result<Sweep> {
        let spec = self.geom.spec();
        ham.check(spec)?;
        let t = self.geom.layers();
        // rho[ℓ][x]: density on window x of level ℓ
        let mut rho: Vec<Vec<Register>> = vec![vec![]; t + 1];
        rho[t] = vec![self.geom.top_state()];
        for lvl in (0..t).rev() {
            rho[lvl] = self.moves[lvl]
                .iter()
                .map(|mv| mv.program.descend(&rho[lvl + 1][mv.parent], gates))
                .collect();
        }
        let mut ops: Vec<Option<Register>> = vec![None; self.geom.sites(0)];
        for h in &ham.terms {
            let e = embed_term(&self.geom, h);
            match &mut ops[h.start()] {
                Some(o) => o.add_scaled(&e, ONE),
                slot => *slot = Some(e),
            }
        }
        let mut out = Sweep::default();
        out.energy = ops
            .iter()
            .zip(&rho[0])
            .filter_map(|(o, r)| o.as_ref().map(|o| Register::trace_product(o, r).re))
            .sum();
        for lvl in 0..t {
            let mut up: Vec<Option<Register>> = vec![None; self.geom.sites(lvl + 1)];
            for (x, op) in ops.iter().enumerate() {
                let Some(op) = op else { continue };
                let mv = &self.moves[lvl][x];
                let asc = mv.program.backprop(&rho[lvl + 1][mv.parent], op, gates, &mut |o, xs, ys| {
                    if let Op::Gate { gate, legs, .. } = o {
                        out.accumulate(*gate, euclidean_contribution(xs, ys, gates.gate(*gate), legs));
                    }
                });
                match &mut up[mv.parent] {
                    Some(a) => a.add_scaled(&asc, ONE),
                    slot => *slot = Some(asc),
                }
            }
            ops = up;
        }
        Ok(out)
    }
}

/// Mean over the slots of `kind` in each layer `τ = 1..=T` of `(1/N)Tr(g†g)`.
/// Brickwall tensors are averaged over their two-qubit gates (`N = 4`).
pub fn layer_values(inst: &TnsInstance, s: &Sweep, kind: TensorKind) -> Vec<f64> {
    let spec = inst.spec();
    let mut sums = vec![0.0; spec.size];
    let mut counts = vec![0usize; spec.size];
    for (slot, pos) in spec.pool_positions().into_iter().enumerate() {
        if pos.kind != kind {
            continue;
        }
        let subs = inst.pool(slot).gates.len();
        let v: f64 = (0..subs).map(|sub| s.value(inst, GateRef { slot, sub })).sum::<f64>() / subs as f64;
        sums[pos.layer - 1] += v;
        counts[pos.layer - 1] += 1;
    }
    sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect()
}

/// `(1/N)Tr(g†g)` at every MPS site `j = 1..=L` (index `j−1`).
pub fn site_values(inst: &TnsInstance, s: &Sweep) -> Vec<f64> {
    let spec = inst.spec();
    (1..=spec.size).map(|j| s.value(inst, site_gate(spec, j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{sample_instance, Pool};
    use crate::basis::build_interaction;
    use crate::expectation::energy;
    use crate::unitary::{haar_unitary, stream};

    fn random_antihermitian(n: usize, seed: u64) -> DenseTensor {
        let h = haar_unitary(n, &mut stream(seed, 9)).unwrap();
        let m = h.matrix();
        m.sub(&m.adjoint()).unwrap().scale(C64::new(0.5, 0.0))
    }

    fn expm(a: &DenseTensor) -> DenseTensor {
        DenseTensor::from_nalgebra(&a.to_nalgebra().exp())
    }

    fn rotated(inst: &TnsInstance, pos: Position, m: DenseTensor) -> TnsInstance {
        let slot = inst.spec().pool_of(pos);
        inst.with_pool(slot, Pool::full_tensor(UnitaryMatrix::new(m).unwrap())).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let eps = 1e-6;
        for (spec, n) in [
            (AnsatzSpec::mps(2, 2, 6), 2),
            (AnsatzSpec::mps(2, 3, 5), 1),
            (AnsatzSpec::mera(2, 2, 3), 3),
            (AnsatzSpec::ttns(3, 2, 2), 2),
        ] {
            let inst = sample_instance(&spec, 21).unwrap();
            let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(if spec.family == Family::Mps { spec.d } else { spec.chi }, n).unwrap()).unwrap();
            for (k, pos) in spec.positions().into_iter().enumerate().step_by(2) {
                let g = position_gradient(&inst, pos, &ham).unwrap();
                let u = inst.tensor(pos).matrix();
                assert!(g.tangent_residual(u) < 1e-10);
                for dir in 0..3 {
                    let a = random_antihermitian(u.nrows(), (k * 10 + dir) as u64);
                    let up = rotated(&inst, pos, u.matmul(&expm(&a.scale(C64::new(eps, 0.0)))).unwrap());
                    let um = rotated(&inst, pos, u.matmul(&expm(&a.scale(C64::new(-eps, 0.0)))).unwrap());
                    let fd = (energy(&up, &ham).unwrap() - energy(&um, &ham).unwrap()) / (2.0 * eps);
                    let an = DenseTensor::hs_inner(&g.g, &u.matmul(&a).unwrap()).re;
                    assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{spec:?} {pos}: {fd} vs {an}");
                }
            }
        }
    }

    #[test]
    fn rotation_angles_reproduce_the_norm() {
        for spec in [AnsatzSpec::mps(2, 2, 6), AnsatzSpec::mera(2, 2, 3), AnsatzSpec::ttns(2, 2, 3)] {
            let inst = sample_instance(&spec, 2).unwrap();
            let w = if spec.family == Family::Mps { 2 } else { spec.cone_width() };
            let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(2, w).unwrap()).unwrap();
            for pos in spec.positions().into_iter().take(5) {
                let alpha = rotation_angles(&inst, pos, &ham).unwrap();
                let n = alpha.len() as f64;
                let lhs = alpha.iter().map(|a| a * a).sum::<f64>() / n;
                let rhs = position_gradient(&inst, pos, &ham).unwrap().value();
                assert!((lhs - rhs).abs() < 1e-8, "{pos}: {lhs} vs {rhs}");
            }
        }
        let spec = AnsatzSpec::mps(3, 2, 4);
        let inst = sample_instance(&spec, 1).unwrap();
        let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(2, 1).unwrap()).unwrap();
        assert!(matches!(rotation_angles(&inst, Position::site(2), &ham), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_hamiltonian_gives_zero() {
        let spec = AnsatzSpec::mps(2, 2, 4);
        let inst = sample_instance(&spec, 2).unwrap();
        let ham = Hamiltonian::default();
        let g = position_gradient(&inst, Position::site(2), &ham).unwrap();
        assert_eq!(g.g.max_abs(), 0.0);
        assert!(rotation_angles(&inst, Position::site(2), &ham).unwrap().iter().all(|&a| a == 0.0));
    }

    fn check_sweep(spec: &AnsatzSpec, ham: &Hamiltonian, seed: u64) {
        let inst = sample_instance(spec, seed).unwrap();
        let s = sweep(&inst, &inst, ham).unwrap();
        let e = energy(&inst, ham).unwrap();
        assert!((s.energy - e).abs() < 1e-10, "{spec:?}: {} vs {e}", s.energy);
        for (slot, pos) in spec.pool_positions().into_iter().enumerate() {
            if inst.pool(slot).gates.len() > 1 {
                continue;
            }
            // homogeneous slots sum over every position sharing the tensor
            let mut expected = DenseTensor::zeros(vec![inst.tensor(pos).dim(); 2]);
            for p in spec.positions().into_iter().filter(|p| spec.pool_of(*p) == slot) {
                expected.add_assign_scaled(&position_gradient(&inst, p, ham).unwrap().g, ONE).unwrap();
            }
            let got = s.gradient(&inst, GateRef { slot, sub: 0 });
            assert!(got.max_abs_diff(&expected) < 1e-10, "{spec:?} {pos}");
        }
    }

    #[test]
    fn sweeps_agree_with_environments() {
        for n in 1..=3 {
            let spec = AnsatzSpec::mps(2, 2, 7);
            let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(2, n).unwrap()).unwrap();
            check_sweep(&spec, &ham, n as u64);
        }
        let spec = AnsatzSpec::mps(3, 2, 6).with_homogeneous(true);
        check_sweep(&spec, &Hamiltonian::translation_invariant(&spec, &build_interaction(2, 2).unwrap()).unwrap(), 4);
        let spec = AnsatzSpec::mps(2, 2, 8);
        let sparse = Hamiltonian::new(vec![build_interaction(2, 2).unwrap().at(3), build_interaction(2, 1).unwrap().at(8)]);
        check_sweep(&spec, &sparse, 3);
        for spec in [
            AnsatzSpec::mera(2, 2, 4),
            AnsatzSpec::ttns(2, 2, 4),
            AnsatzSpec::mera(3, 2, 2),
            AnsatzSpec::ttns(3, 3, 2),
            AnsatzSpec::mera(2, 2, 3).with_homogeneous(true),
            AnsatzSpec::mera(2, 2, 3).with_trotter(2),
        ] {
            for n in 1..=spec.cone_width() {
                let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(spec.chi, n).unwrap()).unwrap();
                check_sweep(&spec, &ham, 5);
            }
        }
    }

    #[test]
    fn trotter_gate_gradients_match_finite_differences() {
        let spec = AnsatzSpec::ttns(2, 4, 2).with_trotter(1);
        let inst = sample_instance(&spec, 3).unwrap();
        let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(4, 2).unwrap()).unwrap();
        let s = sweep(&inst, &inst, &ham).unwrap();
        let eps = 1e-6;
        for (gate, _) in s.euclidean.iter().take(6) {
            let u = inst.gate(*gate).clone();
            let g = s.gradient(&inst, *gate);
            assert!(tangent_residual(&u, &g) < 1e-10);
            let a = random_antihermitian(4, gate.slot as u64 * 7 + gate.sub as u64);
            let e = |sign: f64| {
                let m = u.matmul(&expm(&a.scale(C64::new(sign * eps, 0.0)))).unwrap();
                let o = crate::cone::Override { base: &inst, gate: *gate, matrix: m };
                sweep(&inst, &o, &ham).unwrap().energy
            };
            let fd = (e(1.0) - e(-1.0)) / (2.0 * eps);
            let an = DenseTensor::hs_inner(&g, &u.matmul(&a).unwrap()).re;
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{gate:?}: {fd} vs {an}");
        }
    }
}
