//! Network families and Haar-random sampling of their tensors.
//!
//! Every tensor is stored as its parent unitary. An MPS site tensor
//! `V_j = U_j (1_χ ⊗ |0_d⟩)` maps the right bond to (left bond, physical leg);
//! sites are numbered `1..=L`. Hierarchical networks are periodic with
//! `L = b^T`: level `ℓ` has `b^{T−ℓ}` sites, layer `τ` maps level `τ` to level
//! `τ−1`, the isometry `(τ, k)` produces sites `bk..bk+b−1` and the MERA
//! disentangler `(τ, k)` then acts on sites `(bk+b−1, bk+b mod n)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::register::Register;
use crate::tensor::DenseTensor;
use crate::unitary::{haar_unitary, stream, IsometryTensor, UnitaryMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mps,
    Ttns,
    Mera,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mps => "mps",
            Family::Ttns => "ttns",
            Family::Mera => "mera",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        match s {
            "mps" => Ok(Family::Mps),
            "ttns" => Ok(Family::Ttns),
            "mera" => Ok(Family::Mera),
            _ => Err(Error::Configuration(format!("unknown family '{s}' (mps, ttns, mera)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// MPS: the left bond of site 1 is an open leg that is traced out, the
    /// right bond of site `L` is fixed to `|0_χ⟩`.
    Open,
    /// Hierarchical: periodic layers closed by `|0_χ⟩` on every top site.
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub family: Family,
    pub branching: usize,
    pub chi: usize,
    pub d: usize,
    /// `L` for MPS, `T` for hierarchical families.
    pub size: usize,
    pub homogeneous: bool,
    pub trotter: usize,
    pub boundary: Boundary,
}

impl AnsatzSpec {
    pub fn mps(chi: usize, d: usize, sites: usize) -> Self {
        AnsatzSpec {
            family: Family::Mps,
            branching: 1,
            chi,
            d,
            size: sites,
            homogeneous: false,
            trotter: 0,
            boundary: Boundary::Open,
        }
    }

    pub fn ttns(branching: usize, chi: usize, layers: usize) -> Self {
        AnsatzSpec {
            family: Family::Ttns,
            branching,
            chi,
            d: chi,
            size: layers,
            homogeneous: false,
            trotter: 0,
            boundary: Boundary::Periodic,
        }
    }

    pub fn mera(branching: usize, chi: usize, layers: usize) -> Self {
        AnsatzSpec {
            family: Family::Mera,
            ..AnsatzSpec::ttns(branching, chi, layers)
        }
    }

    pub fn with_homogeneous(mut self, homogeneous: bool) -> Self {
        self.homogeneous = homogeneous;
        self
    }

    pub fn with_trotter(mut self, steps: usize) -> Self {
        self.trotter = steps;
        self
    }

    pub fn is_hierarchical(&self) -> bool {
        self.family != Family::Mps
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.chi < 1 {
            problems.push("bond dimension chi must be >= 1".to_string());
        }
        if self.size < 1 {
            problems.push("size must be >= 1".to_string());
        }
        match self.family {
            Family::Mps => {
                if self.branching != 1 {
                    problems.push("mps has branching ratio 1".into());
                }
                if self.d < 2 {
                    problems.push("physical dimension d must be >= 2".into());
                }
                if self.boundary != Boundary::Open {
                    problems.push("mps uses the open boundary".into());
                }
                if self.trotter > 0 {
                    return Err(Error::Unsupported("trotterized tensors are defined for ttns and mera".into()));
                }
            }
            Family::Ttns | Family::Mera => {
                if !(2..=3).contains(&self.branching) {
                    problems.push(format!("branching ratio must be 2 or 3, got {}", self.branching));
                }
                if self.d != self.chi {
                    problems.push(format!("hierarchical families use d = chi, got d={} chi={}", self.d, self.chi));
                }
                if self.chi < 2 {
                    problems.push("hierarchical families need chi >= 2".into());
                }
                if self.boundary != Boundary::Periodic {
                    problems.push("hierarchical families use the periodic boundary".into());
                }
                if self.size > 12 {
                    problems.push(format!("at most 12 layers supported, got {}", self.size));
                }
                if self.trotter > 0 && !self.chi.is_power_of_two() {
                    return Err(Error::Unsupported(format!(
                        "trotterized tensors need chi = 2^q, got chi={}",
                        self.chi
                    )));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Number of physical sites.
    pub fn sites(&self) -> usize {
        match self.family {
            Family::Mps => self.size,
            _ => self.branching.pow(self.size as u32),
        }
    }

    /// Number of layers (1 for MPS, meaning a single chain of site tensors).
    pub fn layers(&self) -> usize {
        if self.is_hierarchical() {
            self.size
        } else {
            1
        }
    }

    /// Sites on level `ℓ` of a hierarchical network.
    pub fn level_sites(&self, level: usize) -> usize {
        self.branching.pow((self.size - level) as u32)
    }

    /// Width of the causal-cone windows, which is also the default
    /// interaction width.
    pub fn cone_width(&self) -> usize {
        match (self.family, self.branching) {
            (Family::Mera, 2) => 3,
            (Family::Mps, _) => 1,
            _ => 2,
        }
    }

    /// Dimension of the parent unitary at `kind`.
    pub fn tensor_dim(&self, kind: TensorKind) -> usize {
        match kind {
            TensorKind::Site => self.chi * self.d,
            TensorKind::Isometry => self.chi.pow(self.branching as u32),
            TensorKind::Disentangler => self.chi * self.chi,
        }
    }

    /// Number of legs the parent unitary acts on (hierarchical only).
    pub fn tensor_legs(&self, kind: TensorKind) -> usize {
        match kind {
            TensorKind::Site => 2,
            TensorKind::Isometry => self.branching,
            TensorKind::Disentangler => 2,
        }
    }

    pub fn positions(&self) -> Vec<Position> {
        match self.family {
            Family::Mps => (1..=self.size).map(Position::site).collect(),
            _ => {
                let mut out = Vec::new();
                for tau in 1..=self.size {
                    let n = self.level_sites(tau);
                    out.extend((0..n).map(|k| Position::isometry(tau, k)));
                    if self.family == Family::Mera {
                        out.extend((0..n).map(|k| Position::disentangler(tau, k)));
                    }
                }
                out
            }
        }
    }

    pub fn check_position(&self, pos: Position) -> Result<()> {
        let ok = match (self.family, pos.kind) {
            (Family::Mps, TensorKind::Site) => pos.index >= 1 && pos.index <= self.size,
            (Family::Ttns, TensorKind::Isometry) | (Family::Mera, TensorKind::Isometry | TensorKind::Disentangler) => {
                pos.layer >= 1 && pos.layer <= self.size && pos.index < self.level_sites(pos.layer)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Index(format!("{pos} is not a tensor of this {} network", self.family.name())))
        }
    }

    fn kinds_per_layer(&self) -> usize {
        if self.family == Family::Mera {
            2
        } else {
            1
        }
    }

    pub fn pool_count(&self) -> usize {
        match (self.family, self.homogeneous) {
            (Family::Mps, false) => self.size,
            (Family::Mps, true) => 1,
            (_, true) => self.size * self.kinds_per_layer(),
            (_, false) => (1..=self.size).map(|t| self.level_sites(t) * self.kinds_per_layer()).sum(),
        }
    }

    /// Index of the storage slot backing `pos`. Homogeneous networks share
    /// one slot among all equivalent positions.
    pub fn pool_of(&self, pos: Position) -> usize {
        let kind_offset = usize::from(pos.kind == TensorKind::Disentangler);
        match (self.family, self.homogeneous) {
            (Family::Mps, false) => pos.index - 1,
            (Family::Mps, true) => 0,
            (_, true) => (pos.layer - 1) * self.kinds_per_layer() + kind_offset,
            (_, false) => {
                let base: usize = (1..pos.layer).map(|t| self.level_sites(t) * self.kinds_per_layer()).sum();
                base + kind_offset * self.level_sites(pos.layer) + pos.index
            }
        }
    }

    /// Representative position of every slot, in slot order.
    pub fn pool_positions(&self) -> Vec<Position> {
        let mut reps: Vec<Option<Position>> = vec![None; self.pool_count()];
        for p in self.positions() {
            let slot = self.pool_of(p);
            if reps[slot].is_none() {
                reps[slot] = Some(p);
            }
        }
        reps.into_iter().map(|p| p.expect("every slot used")).collect()
    }

    pub fn trotter_layout(&self, kind: TensorKind) -> Option<TrotterLayout> {
        if self.trotter == 0 {
            return None;
        }
        Some(TrotterLayout::new(self.chi, self.tensor_legs(kind), self.trotter).expect("validated spec"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Site,
    Isometry,
    Disentangler,
}

/// Position `j` of a tensor: an MPS site (`layer = 0`, `index = j`) or a
/// hierarchical `(τ, k)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub kind: TensorKind,
    pub layer: usize,
    pub index: usize,
}

impl Position {
    pub fn site(j: usize) -> Self {
        Position {
            kind: TensorKind::Site,
            layer: 0,
            index: j,
        }
    }

    pub fn isometry(layer: usize, k: usize) -> Self {
        Position {
            kind: TensorKind::Isometry,
            layer,
            index: k,
        }
    }

    pub fn disentangler(layer: usize, k: usize) -> Self {
        Position {
            kind: TensorKind::Disentangler,
            layer,
            index: k,
        }
    }
}

impl std::fmt::Display for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            TensorKind::Site => write!(f, "site {}", self.index),
            TensorKind::Isometry => write!(f, "isometry ({}, {})", self.layer, self.index),
            TensorKind::Disentangler => write!(f, "disentangler ({}, {})", self.layer, self.index),
        }
    }
}

/// Brickwall substructure of a tensor acting on `legs` legs of dimension
/// `χ = 2^q`. Qubits are numbered leg-major, most significant first within a
/// leg. One step applies the even row `(0,1), (2,3), …` and then the odd row
/// `(1,2), (3,4), …`; every gate is a two-qubit unitary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrotterLayout {
    pub qubits_per_leg: usize,
    pub legs: usize,
    pub steps: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl TrotterLayout {
    pub fn new(chi: usize, legs: usize, steps: usize) -> Result<Self> {
        if chi < 2 || !chi.is_power_of_two() {
            return Err(Error::Unsupported(format!("trotterized tensors need chi = 2^q >= 2, got {chi}")));
        }
        if steps == 0 {
            return Err(Error::Configuration("trotter layout needs at least one step".into()));
        }
        let q = chi.trailing_zeros() as usize;
        let total = q * legs;
        let mut pairs = Vec::new();
        for _ in 0..steps {
            for parity in 0..2 {
                let mut a = parity;
                while a + 1 < total {
                    pairs.push((a, a + 1));
                    a += 2;
                }
            }
        }
        Ok(TrotterLayout {
            qubits_per_leg: q,
            legs,
            steps,
            pairs,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits_per_leg * self.legs
    }

    /// Product `G_last ⋯ G_first` of the gates in application order.
    pub fn compose(&self, gates: &[UnitaryMatrix]) -> Result<UnitaryMatrix> {
        if gates.len() != self.pairs.len() {
            return Err(Error::shape(format!(
                "brickwall has {} gates, got {}",
                self.pairs.len(),
                gates.len()
            )));
        }
        let n = self.qubits();
        let labels: Vec<u32> = (0..n as u32).collect();
        let mut reg = Register::new(labels, vec![2; n], DenseTensor::identity(1 << n))?;
        for (g, &(a, b)) in gates.iter().zip(&self.pairs) {
            reg.left_apply(g.matrix(), &[a as u32, b as u32]);
        }
        UnitaryMatrix::new(reg.to_tensor())
    }
}

/// Storage slot: the parent unitary and, for trotterized tensors, its gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pool {
    pub full: UnitaryMatrix,
    pub gates: Vec<UnitaryMatrix>,
}

impl Pool {
    pub fn full_tensor(u: UnitaryMatrix) -> Self {
        Pool {
            gates: vec![u.clone()],
            full: u,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TnsInstance {
    spec: AnsatzSpec,
    seed: u64,
    pools: Vec<Pool>,
}

/// Samples every free tensor of `spec` from the Haar measure. Slot `p` draws
/// from the stream `(seed, p)`, so instances are reproducible and slots are
/// independent.
pub fn sample_instance(spec: &AnsatzSpec, seed: u64) -> Result<TnsInstance> {
    spec.validate()?;
    let pools = spec
        .pool_positions()
        .into_iter()
        .enumerate()
        .map(|(slot, pos)| {
            let mut rng = stream(seed, slot as u64);
            match spec.trotter_layout(pos.kind) {
                None => Ok(Pool::full_tensor(haar_unitary(spec.tensor_dim(pos.kind), &mut rng)?)),
                Some(layout) => {
                    let gates = (0..layout.pairs.len())
                        .map(|_| haar_unitary(4, &mut rng))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Pool {
                        full: layout.compose(&gates)?,
                        gates,
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TnsInstance {
        spec: spec.clone(),
        seed,
        pools,
    })
}

impl TnsInstance {
    /// Builds an instance from explicit slot contents, checking shapes and
    /// unitarity.
    pub fn from_pools(spec: AnsatzSpec, seed: u64, pools: Vec<Pool>) -> Result<Self> {
        spec.validate()?;
        let inst = TnsInstance { spec, seed, pools };
        inst.check_integrity()?;
        Ok(inst)
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn pool(&self, slot: usize) -> &Pool {
        &self.pools[slot]
    }

    /// Parent unitary of the tensor at `pos`.
    pub fn tensor(&self, pos: Position) -> &UnitaryMatrix {
        &self.pools[self.spec.pool_of(pos)].full
    }

    /// The isometry realised by the tensor at `pos` (for disentanglers the
    /// full unitary).
    pub fn isometry(&self, pos: Position) -> IsometryTensor {
        let input = match pos.kind {
            TensorKind::Site | TensorKind::Isometry => self.spec.chi,
            TensorKind::Disentangler => self.spec.tensor_dim(pos.kind),
        };
        IsometryTensor::from_parent(self.tensor(pos).clone(), input).expect("dimensions fixed by spec")
    }

    /// Replaces one storage slot. In a homogeneous network this changes every
    /// equivalent position at once.
    pub fn with_pool(&self, slot: usize, pool: Pool) -> Result<TnsInstance> {
        if slot >= self.pools.len() {
            return Err(Error::Index(format!("slot {slot} out of range")));
        }
        let mut out = self.clone();
        out.pools[slot] = pool;
        out.check_integrity()?;
        Ok(out)
    }

    /// Overwrites the tensor at `pos` with an arbitrary matrix, bypassing
    /// every check. Only useful to exercise integrity verification.
    pub fn overwrite_unchecked(&mut self, pos: Position, matrix: DenseTensor) {
        let slot = self.spec.pool_of(pos);
        let u = UnitaryMatrix::new_unchecked(matrix);
        self.pools[slot] = Pool {
            gates: vec![u.clone()],
            full: u,
        };
    }

    /// Shapes and unitarity of every slot.
    pub fn check_integrity(&self) -> Result<()> {
        if self.pools.len() != self.spec.pool_count() {
            return Err(Error::Integrity(format!(
                "expected {} tensor slots, found {}",
                self.spec.pool_count(),
                self.pools.len()
            )));
        }
        for (slot, pos) in self.spec.pool_positions().into_iter().enumerate() {
            let pool = &self.pools[slot];
            let n = self.spec.tensor_dim(pos.kind);
            if pool.full.dim() != n {
                return Err(Error::Integrity(format!("{pos}: expected U({n}), got dimension {}", pool.full.dim())));
            }
            let res = pool.full.residual();
            if res > 1e-10 {
                return Err(Error::Integrity(format!("{pos}: unitarity residual {res:e}")));
            }
            if let Some(layout) = self.spec.trotter_layout(pos.kind) {
                let composed = layout.compose(&pool.gates)?;
                let dev = composed.matrix().max_abs_diff(pool.full.matrix());
                if dev > 1e-10 {
                    return Err(Error::Integrity(format!("{pos}: brickwall gates do not compose to the tensor ({dev:e})")));
                }
            }
        }
        Ok(())
    }

    /// Verifies left orthonormality `V_j†V_j = 1_χ` of every MPS site.
    /// Sampled instances satisfy it by construction, so this returns a copy.
    pub fn mps_left_orthonormal_form(&self) -> Result<TnsInstance> {
        if self.spec.family != Family::Mps {
            return Err(Error::Precondition("left-orthonormal form is defined for mps".into()));
        }
        for j in 1..=self.spec.size {
            let pos = Position::site(j);
            let u = self.tensor(pos);
            if u.dim() != self.spec.chi * self.spec.d {
                return Err(Error::Integrity(format!("site {j}: wrong tensor dimension {}", u.dim())));
            }
            let res = self.isometry(pos).residual();
            if res > 1e-10 {
                return Err(Error::Integrity(format!("site {j} is not an isometry (residual {res:e})")));
            }
        }
        Ok(self.clone())
    }

    /// Physical sites `i` whose `width`-site term depends on the tensor at `pos`.
    pub fn causal_cone_sites(&self, pos: Position, width: usize) -> Result<BTreeSet<usize>> {
        self.spec.check_position(pos)?;
        match self.spec.family {
            Family::Mps => {
                let l = self.spec.size;
                Ok((1..=pos.index).filter(|&i| i + width <= l + 1).collect())
            }
            _ => crate::cone::Geometry::new(&self.spec)?.cone_sites(pos, width),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<TnsInstance> {
        let inst: TnsInstance = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        inst.spec.validate()?;
        inst.check_integrity()?;
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unitary::UNITARITY_TOL;

    #[test]
    fn mps_layout() {
        let spec = AnsatzSpec::mps(2, 2, 101);
        let inst = sample_instance(&spec, 1).unwrap();
        assert_eq!(inst.pools().len(), 101);
        for j in 1..=101 {
            let u = inst.tensor(Position::site(j));
            assert_eq!(u.dim(), 4);
            assert!(u.residual() < UNITARITY_TOL);
            assert!(inst.isometry(Position::site(j)).residual() < UNITARITY_TOL);
        }
    }

    #[test]
    fn binary_mera_layout() {
        let spec = AnsatzSpec::mera(2, 2, 3);
        assert_eq!(spec.sites(), 8);
        let inst = sample_instance(&spec, 4).unwrap();
        for tau in 1..=3 {
            let n = spec.level_sites(tau);
            for k in 0..n {
                assert_eq!(inst.tensor(Position::disentangler(tau, k)).dim(), 4);
                let v = inst.isometry(Position::isometry(tau, k));
                assert_eq!(v.tensor().shape(), &[4, 2]);
                assert!(v.residual() < UNITARITY_TOL);
            }
        }
        assert_eq!(inst.pools().len(), 2 * (4 + 2 + 1));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = AnsatzSpec::ttns(3, 2, 2).with_trotter(2);
        let a = sample_instance(&spec, 99).unwrap();
        let b = sample_instance(&spec, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_instance(&spec, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trotter_needs_power_of_two() {
        let spec = AnsatzSpec::mera(2, 3, 2).with_trotter(1);
        assert!(matches!(sample_instance(&spec, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn brickwall_wiring() {
        let l = TrotterLayout::new(2, 3, 2).unwrap();
        assert_eq!(l.pairs, vec![(0, 1), (1, 2), (0, 1), (1, 2)]);
        let l = TrotterLayout::new(4, 2, 1).unwrap();
        assert_eq!(l.pairs, vec![(0, 1), (2, 3), (1, 2)]);
        let spec = AnsatzSpec::mera(2, 4, 2).with_trotter(3);
        let inst = sample_instance(&spec, 5).unwrap();
        for pool in inst.pools() {
            assert!(pool.full.residual() < UNITARITY_TOL);
            assert_eq!(pool.gates.len(), 9);
        }
    }

    #[test]
    fn left_orthonormal_check() {
        let spec = AnsatzSpec::mps(2, 3, 6);
        let mut inst = sample_instance(&spec, 3).unwrap();
        assert_eq!(inst.mps_left_orthonormal_form().unwrap(), inst);
        let product = sample_instance(&AnsatzSpec::mps(1, 2, 4), 3).unwrap();
        assert!(product.mps_left_orthonormal_form().is_ok());
        inst.overwrite_unchecked(Position::site(4), DenseTensor::identity(6).scale(crate::tensor::C64::new(2.0, 0.0)));
        match inst.mps_left_orthonormal_form() {
            Err(Error::Integrity(msg)) => assert!(msg.contains("site 4"), "{msg}"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn homogeneous_slots_are_shared() {
        let spec = AnsatzSpec::mera(2, 2, 3).with_homogeneous(true);
        let inst = sample_instance(&spec, 8).unwrap();
        assert_eq!(inst.pools().len(), 6);
        let slot = spec.pool_of(Position::isometry(1, 0));
        let replacement = Pool::full_tensor(haar_unitary(4, &mut stream(77, 0)).unwrap());
        let changed = inst.with_pool(slot, replacement.clone()).unwrap();
        for k in 0..4 {
            assert_eq!(changed.tensor(Position::isometry(1, k)), &replacement.full);
            assert_eq!(changed.tensor(Position::disentangler(1, k)), inst.tensor(Position::disentangler(1, k)));
        }
        assert_eq!(changed.tensor(Position::isometry(2, 0)), inst.tensor(Position::isometry(2, 0)));
    }

    #[test]
    fn json_roundtrip() {
        let spec = AnsatzSpec::ttns(2, 2, 2);
        let inst = sample_instance(&spec, 12).unwrap();
        let back = TnsInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back.spec(), inst.spec());
        for p in spec.positions() {
            assert!(back.tensor(p).matrix().max_abs_diff(inst.tensor(p).matrix()) < 1e-15);
        }
    }

    #[test]
    fn mps_cone_sites() {
        let inst = sample_instance(&AnsatzSpec::mps(2, 2, 8), 0).unwrap();
        let s = inst.causal_cone_sites(Position::site(5), 1).unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        let s = inst.causal_cone_sites(Position::site(8), 2).unwrap();
        assert_eq!(s.len(), 7);
    }
}
