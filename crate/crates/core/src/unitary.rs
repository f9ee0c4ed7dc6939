//! Unitary and isometric tensors, Haar sampling and counter-based random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C64};

/// Tolerance for the unitarity and isometry invariants.
pub const UNITARITY_TOL: f64 = 1e-12;

/// Random stream for task `counter` under `master` seed. Streams for distinct
/// counters never overlap, so workers can derive their own without sharing.
pub fn stream(master: u64, counter: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(counter);
    rng
}

/// SplitMix64 finalizer, used to derive per-sample seeds from a master seed.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseTensor", into = "DenseTensor")]
pub struct UnitaryMatrix {
    matrix: DenseTensor,
}

impl UnitaryMatrix {
    /// Wraps a square matrix, checking `U†U = UU† = 1` to [`UNITARITY_TOL`].
    pub fn new(matrix: DenseTensor) -> Result<Self> {
        if matrix.rank() != 2 || matrix.nrows() != matrix.ncols() {
            return Err(Error::shape(format!(
                "unitary must be square, got {:?}",
                matrix.shape()
            )));
        }
        let u = UnitaryMatrix { matrix };
        let res = u.residual();
        if res > UNITARITY_TOL {
            return Err(Error::Integrity(format!("matrix is not unitary (residual {res:e})")));
        }
        Ok(u)
    }

    pub(crate) fn new_unchecked(matrix: DenseTensor) -> Self {
        UnitaryMatrix { matrix }
    }

    pub fn identity(n: usize) -> Self {
        UnitaryMatrix {
            matrix: DenseTensor::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DenseTensor {
        &self.matrix
    }

    /// Largest entrywise deviation of `U†U` and `UU†` from the identity.
    pub fn residual(&self) -> f64 {
        let left = self.matrix.isometry_residual();
        let right = self.matrix.adjoint().isometry_residual();
        left.max(right)
    }

    pub fn compose(&self, other: &UnitaryMatrix) -> UnitaryMatrix {
        UnitaryMatrix {
            matrix: self.matrix.matmul(&other.matrix).expect("equal dimensions"),
        }
    }
}

impl TryFrom<DenseTensor> for UnitaryMatrix {
    type Error = Error;
    fn try_from(t: DenseTensor) -> Result<Self> {
        // Deserialized matrices went through a decimal roundtrip.
        let u = UnitaryMatrix { matrix: t };
        if u.matrix.rank() != 2 || u.matrix.nrows() != u.matrix.ncols() || u.residual() > 1e-10 {
            return Err(Error::Integrity("deserialized matrix is not unitary".into()));
        }
        Ok(u)
    }
}

impl From<UnitaryMatrix> for DenseTensor {
    fn from(u: UnitaryMatrix) -> Self {
        u.matrix
    }
}

/// Samples `U ∈ U(n)` from the Haar measure: QR of a complex Ginibre matrix,
/// with the columns rephased by `R_ii/|R_ii|` so the result is exactly Haar.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("Haar unitary needs N >= 1".into()));
    }
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = nalgebra::DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    Ok(UnitaryMatrix::new_unchecked(DenseTensor::from_nalgebra(&q)))
}

/// An isometry `V: C^{N1} → C^{N1} ⊗ C^{N2}` realised as the parent unitary
/// applied to `1_{N1} ⊗ |0_{N2}⟩`; stored as the `[N1·N2, N1]` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometryTensor {
    input_dim: usize,
    ancilla_dim: usize,
    tensor: DenseTensor,
    parent: UnitaryMatrix,
}

impl IsometryTensor {
    pub fn from_parent(parent: UnitaryMatrix, input_dim: usize) -> Result<Self> {
        let n = parent.dim();
        if input_dim == 0 || n % input_dim != 0 {
            return Err(Error::InvalidDimension(format!(
                "input dimension {input_dim} does not divide parent dimension {n}"
            )));
        }
        let ancilla_dim = n / input_dim;
        let m = parent.matrix();
        let tensor = DenseTensor::from_fn_matrix(n, input_dim, |r, c| m.get2(r, c * ancilla_dim));
        Ok(IsometryTensor {
            input_dim,
            ancilla_dim,
            tensor,
            parent,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn parent(&self) -> &UnitaryMatrix {
        &self.parent
    }

    /// `max |V†V − 1|`.
    pub fn residual(&self) -> f64 {
        self.tensor.isometry_residual()
    }
}
