//! Operator bases and isotropic interaction terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C64, I, ONE, ZERO};

/// Tolerance for algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    GellMann,
    PauliProduct,
}

#[derive(Clone, Debug)]
pub struct OperatorBasis {
    pub dim: usize,
    pub kind: BasisKind,
    pub elements: Vec<DenseTensor>,
}

fn unit(n: usize, r: usize, c: usize) -> DenseTensor {
    let mut t = DenseTensor::zeros(vec![n, n]);
    t.set2(r, c, ONE);
    t
}

/// Generalized Gell-Mann matrices of SU(χ): for each pair `j < k` the
/// symmetric and antisymmetric off-diagonal elements, followed by the `χ−1`
/// diagonal ones. Normalized to `Tr(ΛᵃΛᵇ) = 2δ_ab`; at χ = 2 these are σˣ, σʸ, σᶻ.
pub fn gell_mann_basis(chi: usize) -> Result<OperatorBasis> {
    if chi < 2 {
        return Err(Error::InvalidDimension(format!(
            "Gell-Mann basis needs chi >= 2, got {chi}"
        )));
    }
    let mut elements = Vec::with_capacity(chi * chi - 1);
    for j in 0..chi {
        for k in j + 1..chi {
            let sym = unit(chi, j, k).add(&unit(chi, k, j))?;
            let anti = unit(chi, j, k).scale(-I).add(&unit(chi, k, j).scale(I))?;
            elements.push(sym);
            elements.push(anti);
        }
    }
    for l in 1..chi {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut d = DenseTensor::zeros(vec![chi, chi]);
        for m in 0..l {
            d.set2(m, m, C64::new(norm, 0.0));
        }
        d.set2(l, l, C64::new(-norm * l as f64, 0.0));
        elements.push(d);
    }
    Ok(OperatorBasis {
        dim: chi,
        kind: BasisKind::GellMann,
        elements,
    })
}

pub fn pauli_matrices() -> [DenseTensor; 4] {
    let m = |v: [C64; 4]| DenseTensor::new(vec![2, 2], v.to_vec()).unwrap();
    [
        DenseTensor::identity(2),
        m([ZERO, ONE, ONE, ZERO]),
        m([ZERO, -I, I, ZERO]),
        m([ONE, ZERO, ZERO, -ONE]),
    ]
}

/// All `4^k` tensor products of `{1, σˣ, σʸ, σᶻ}` for `N = 2^k`. Each element is
/// Hermitian and squares to one; `Tr(σ_m σ_n) = N δ_mn`.
pub fn pauli_product_basis(n: usize) -> Result<OperatorBasis> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Unsupported(format!(
            "pauli-product basis needs N = 2^k with k >= 1, got {n}"
        )));
    }
    let paulis = pauli_matrices();
    let mut elements = vec![DenseTensor::identity(1)];
    for _ in 0..n.trailing_zeros() {
        let mut next = Vec::with_capacity(elements.len() * 4);
        for e in &elements {
            for p in &paulis {
                next.push(DenseTensor::kron(e, p)?);
            }
        }
        elements = next;
    }
    Ok(OperatorBasis {
        dim: n,
        kind: BasisKind::PauliProduct,
        elements,
    })
}

/// A traceless Hermitian interaction term acting on `width` consecutive sites
/// of dimension `site_dim`, starting at `start`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalOperator {
    site_dim: usize,
    width: usize,
    start: usize,
    op: DenseTensor,
}

impl LocalOperator {
    /// Validates shape, hermiticity and tracelessness.
    pub fn new(site_dim: usize, width: usize, start: usize, op: DenseTensor) -> Result<Self> {
        if site_dim < 1 || width < 1 {
            return Err(Error::InvalidDimension("site dimension and width must be positive".into()));
        }
        let dim = site_dim.pow(width as u32);
        if op.shape() != [dim, dim] {
            return Err(Error::shape(format!(
                "{width}-site operator on dimension {site_dim} must be {dim}x{dim}, got {:?}",
                op.shape()
            )));
        }
        let herm = op.hermiticity_residual();
        if herm > ALGEBRA_TOL * op.max_abs().max(1.0) {
            return Err(Error::Precondition(format!("interaction is not Hermitian (residual {herm:e})")));
        }
        let tr = op.trace().norm();
        if tr > ALGEBRA_TOL * dim as f64 * op.max_abs().max(1.0) {
            return Err(Error::Precondition(format!("interaction must be traceless, Tr h = {tr:e}")));
        }
        Ok(LocalOperator {
            site_dim,
            width,
            start,
            op,
        })
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn op(&self) -> &DenseTensor {
        &self.op
    }

    /// Same operator placed at another starting site.
    pub fn at(&self, start: usize) -> LocalOperator {
        LocalOperator {
            start,
            ..self.clone()
        }
    }

    /// `Tr(h²)`.
    pub fn trace_square(&self) -> f64 {
        DenseTensor::hs_inner(&self.op, &self.op).re
    }

    /// Largest entry of `Tr_s h` over all single sites `s`.
    pub fn max_single_site_partial_trace(&self) -> f64 {
        let dims = vec![self.site_dim; self.width];
        (0..self.width)
            .map(|s| self.op.partial_trace(&dims, &[s]).expect("valid dims").max_abs())
            .fold(0.0, f64::max)
    }
}

/// `h = (2ⁿ(χ²−1))^{−1/2} Σ_a Λᵃ ⊗ … ⊗ Λᵃ` with `n` factors: traceless,
/// Hermitian, `Tr h² = 1`, with vanishing single-site partial traces.
pub fn build_interaction(chi: usize, width: usize) -> Result<LocalOperator> {
    if width < 1 {
        return Err(Error::InvalidDimension("interaction width must be >= 1".into()));
    }
    let basis = gell_mann_basis(chi)?;
    let dim = chi.pow(width as u32);
    let mut h = DenseTensor::zeros(vec![dim, dim]);
    for lam in &basis.elements {
        let mut term = lam.clone();
        for _ in 1..width {
            term = DenseTensor::kron(&term, lam)?;
        }
        h.add_assign_scaled(&term, ONE)?;
    }
    let norm = ((1u64 << width) as f64 * (chi * chi - 1) as f64).sqrt();
    LocalOperator::new(chi, width, 0, h.scale(C64::new(1.0 / norm, 0.0)))
}
