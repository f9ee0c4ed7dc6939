//! Per-sample invariants checked against independent computations. Used by
//! the `selftest` subcommand and the test suites.

use crate::ansatz::{sample_instance, AnsatzSpec, Family, Pool, Position, TensorKind, TnsInstance};
use crate::basis::build_interaction;
use crate::channels::{build_doubled_channel, spectrum, ChannelTag};
use crate::error::Result;
use crate::expectation::{energy, local_expectation, Hamiltonian};
use crate::gradient::{position_gradient, rotation_angles};
use crate::reference::{hierarchical_state, local_expectation as sv_expectation, mps_state};
use crate::tensor::{DenseTensor, C64};
use crate::unitary::{haar_unitary, stream, UnitaryMatrix};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    /// Worst observed deviation.
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }
}

fn site_dim(spec: &AnsatzSpec) -> usize {
    if spec.family == Family::Mps { spec.d } else { spec.chi }
}

fn default_width(spec: &AnsatzSpec) -> usize {
    if spec.family == Family::Mps { 2 } else { spec.cone_width() }
}

pub fn small_specs() -> Vec<AnsatzSpec> {
    vec![
        AnsatzSpec::mps(2, 2, 10),
        AnsatzSpec::mps(3, 2, 8),
        AnsatzSpec::ttns(2, 2, 3),
        AnsatzSpec::mera(2, 2, 3),
        AnsatzSpec::ttns(3, 2, 2),
        AnsatzSpec::mera(3, 2, 2),
    ]
}

/// Largest unitarity or isometry residual over `seeds` draws of each family.
pub fn isometry_residual(seeds: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for spec in small_specs().into_iter().chain([AnsatzSpec::mera(2, 4, 2).with_trotter(2), AnsatzSpec::ttns(2, 2, 4).with_homogeneous(true)]) {
        for seed in 0..seeds {
            let inst = sample_instance(&spec, seed)?;
            for pos in spec.positions() {
                worst = worst.max(inst.tensor(pos).residual());
                if spec.family == Family::Mps || pos.kind == TensorKind::Isometry {
                    worst = worst.max(inst.isometry(pos).residual());
                }
            }
        }
    }
    Ok(Check { name: "isometry residual", worst, tolerance: 1e-12 })
}

/// Causal-cone expectation values against the full statevector.
pub fn cone_vs_statevector(seeds: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for spec in small_specs() {
        for seed in 0..seeds {
            let inst = sample_instance(&spec, 100 + seed)?;
            let psi = if spec.is_hierarchical() { hierarchical_state(&inst)? } else { mps_state(&inst)? };
            let widths: Vec<usize> = if spec.is_hierarchical() { vec![1, spec.cone_width()] } else { vec![1, 2, 3] };
            for w in widths {
                let h = build_interaction(site_dim(&spec), w)?;
                let starts: Vec<usize> = if spec.is_hierarchical() { (0..spec.sites()).collect() } else { (1..=spec.size + 1 - w).collect() };
                for i in starts {
                    let term = h.at(i);
                    let a = local_expectation(&inst, &term)?;
                    let b = sv_expectation(&inst, &psi, i, term.op(), w)?;
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    Ok(Check { name: "cone expectation vs statevector", worst, tolerance: 1e-10 })
}

fn random_antihermitian(n: usize, seed: u64) -> Result<DenseTensor> {
    let m = haar_unitary(n, &mut stream(seed, 9))?.matrix().clone();
    Ok(m.sub(&m.adjoint())?.scale(C64::new(0.5, 0.0)))
}

fn rotated(inst: &TnsInstance, pos: Position, u: &DenseTensor, a: &DenseTensor, eps: f64) -> Result<TnsInstance> {
    let step = DenseTensor::from_nalgebra(&a.scale(C64::new(eps, 0.0)).to_nalgebra().exp());
    let slot = inst.spec().pool_of(pos);
    inst.with_pool(slot, Pool::full_tensor(UnitaryMatrix::new(u.matmul(&step)?)?))
}

/// Relative deviation of the Riemannian gradient from central differences
/// of the energy along random tangent directions.
pub fn gradient_vs_finite_differences(seed: u64) -> Result<Check> {
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for spec in [AnsatzSpec::mps(2, 2, 6), AnsatzSpec::mera(2, 2, 3), AnsatzSpec::ttns(2, 2, 3), AnsatzSpec::ttns(3, 2, 2)] {
        let inst = sample_instance(&spec, seed)?;
        let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(site_dim(&spec), default_width(&spec))?)?;
        for (k, pos) in spec.positions().into_iter().enumerate().step_by(3) {
            let g = position_gradient(&inst, pos, &ham)?;
            let u = inst.tensor(pos).matrix();
            let a = random_antihermitian(u.nrows(), seed ^ k as u64)?;
            let fd = (energy(&rotated(&inst, pos, u, &a, eps)?, &ham)? - energy(&rotated(&inst, pos, u, &a, -eps)?, &ham)?) / (2.0 * eps);
            let an = DenseTensor::hs_inner(&g.g, &u.matmul(&a)?).re;
            worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
        }
    }
    Ok(Check { name: "gradient vs finite differences (relative)", worst, tolerance: 1e-4 })
}

/// `|(1/N²)Σ α_n² − (1/N)Tr(g†g)|`.
pub fn rotation_identity(seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for spec in [AnsatzSpec::mps(2, 2, 6), AnsatzSpec::mera(2, 2, 3), AnsatzSpec::ttns(2, 2, 3)] {
        let inst = sample_instance(&spec, seed)?;
        let ham = Hamiltonian::translation_invariant(&spec, &build_interaction(site_dim(&spec), default_width(&spec))?)?;
        for pos in spec.positions().into_iter().step_by(2) {
            let alpha = rotation_angles(&inst, pos, &ham)?;
            let n2 = alpha.len() as f64;
            let lhs = alpha.iter().map(|a| a * a).sum::<f64>() / n2;
            let rhs = position_gradient(&inst, pos, &ham)?.value();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(Check { name: "rotation-angle identity", worst, tolerance: 1e-8 })
}

/// Trace preservation and `λ₁ = 1` of every averaged channel at χ = 2.
pub fn channel_fixed_point() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for (spec, tag) in [
        (AnsatzSpec::mps(2, 2, 4), ChannelTag::MpsSite),
        (AnsatzSpec::mps(3, 3, 4), ChannelTag::MpsSite),
        (AnsatzSpec::mera(2, 2, 4), ChannelTag::MeraBinaryLeft),
        (AnsatzSpec::mera(2, 2, 4), ChannelTag::MeraBinaryRight),
        (AnsatzSpec::mera(2, 2, 4), ChannelTag::MeraBinaryAverage),
        (AnsatzSpec::ttns(2, 2, 4), ChannelTag::TtnsBinary),
        (AnsatzSpec::ttns(3, 2, 4), ChannelTag::TtnsTernary),
        (AnsatzSpec::mera(3, 2, 4), ChannelTag::MeraTernary),
    ] {
        let c = build_doubled_channel(&spec, tag)?;
        let s = spectrum(&c, 2)?;
        worst = worst.max(c.trace_residual()).max((s.eigenvalues[0] - C64::new(1.0, 0.0)).norm());
    }
    Ok(Check { name: "channel trace preservation and leading eigenvalue", worst, tolerance: 1e-10 })
}

/// The whole per-sample suite.
pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![
        isometry_residual(5)?,
        cone_vs_statevector(2)?,
        gradient_vs_finite_differences(7)?,
        rotation_identity(3)?,
        channel_fixed_point()?,
    ])
}
