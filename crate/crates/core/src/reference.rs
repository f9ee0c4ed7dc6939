//! Brute-force statevector contraction of small networks.
//!
//! This path shares no code with the causal-cone machinery: it builds the
//! full wavefunction from the parent unitaries and evaluates expectation
//! values directly, so the two can be checked against each other.

use crate::ansatz::{Family, Position, TnsInstance};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, C64, ONE, ZERO};

/// A wavefunction over legs of the given dimensions, first leg slowest.
#[derive(Clone, Debug)]
pub struct StateVector {
    pub dims: Vec<usize>,
    pub amplitudes: Vec<C64>,
}

const MAX_AMPLITUDES: usize = 1 << 22;

impl StateVector {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    /// Replaces leg `pos` (dimension `n_in`) by legs `out_dims` through the
    /// matrix `m` of shape `[Π out_dims, n_in]`.
    fn expand_leg(&mut self, pos: usize, m: &DenseTensor, out_dims: &[usize]) {
        let n_in = self.dims[pos];
        let n_out: usize = out_dims.iter().product();
        let left: usize = self.dims[..pos].iter().product();
        let right: usize = self.dims[pos + 1..].iter().product();
        let mut out = vec![ZERO; left * n_out * right];
        for l in 0..left {
            for i in 0..n_in {
                for r in 0..right {
                    let a = self.amplitudes[(l * n_in + i) * right + r];
                    if a == ZERO {
                        continue;
                    }
                    for o in 0..n_out {
                        out[(l * n_out + o) * right + r] += m.get2(o, i) * a;
                    }
                }
            }
        }
        self.dims.splice(pos..pos + 1, out_dims.iter().copied());
        self.amplitudes = out;
    }

    /// Applies `u` to the legs `legs` (in that order, need not be adjacent).
    fn apply(&mut self, u: &DenseTensor, legs: &[usize]) {
        let strides = self.strides();
        let total = self.amplitudes.len();
        let sub: Vec<usize> = legs.iter().map(|&p| self.dims[p]).collect();
        let n: usize = sub.iter().product();
        let mut offs = vec![0usize; n];
        for (idx, off) in offs.iter_mut().enumerate() {
            let mut rem = idx;
            for k in (0..legs.len()).rev() {
                *off += (rem % sub[k]) * strides[legs[k]];
                rem /= sub[k];
            }
        }
        let mut done = vec![false; total];
        let mut v = vec![ZERO; n];
        for base in 0..total {
            // a base index has every gate leg at zero
            if done[base] || legs.iter().any(|&p| (base / strides[p]) % self.dims[p] != 0) {
                continue;
            }
            for k in 0..n {
                v[k] = self.amplitudes[base + offs[k]];
                done[base + offs[k]] = true;
            }
            for a in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += u.get2(a, k) * v[k];
                }
                self.amplitudes[base + offs[a]] = acc;
            }
        }
    }

    /// `⟨ψ| O_{legs} |ψ⟩` for an operator on the listed legs.
    pub fn expectation(&self, op: &DenseTensor, legs: &[usize]) -> C64 {
        let mut phi = self.clone();
        phi.apply(op, legs);
        self.amplitudes.iter().zip(&phi.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Full MPS wavefunction over `(ancilla, s_1, …, s_L)`; the ancilla is the
/// open left bond of site 1, of dimension `χ`.
pub fn mps_state(inst: &TnsInstance) -> Result<StateVector> {
    let spec = inst.spec();
    if spec.family != Family::Mps {
        return Err(Error::Precondition("mps_state needs an mps".into()));
    }
    let (chi, d, l) = (spec.chi, spec.d, spec.size);
    if chi * d.pow(l as u32) > MAX_AMPLITUDES {
        return Err(Error::Resource(format!("statevector of {} amplitudes", chi * d.pow(l as u32))));
    }
    let mut amps = vec![ZERO; chi];
    amps[0] = ONE;
    let mut psi = StateVector { dims: vec![chi], amplitudes: amps };
    for j in (1..=l).rev() {
        let v = inst.isometry(Position::site(j));
        psi.expand_leg(0, v.tensor(), &[chi, d]);
    }
    Ok(psi)
}

/// Full TTNS/MERA wavefunction over the `b^T` physical sites.
pub fn hierarchical_state(inst: &TnsInstance) -> Result<StateVector> {
    let spec = inst.spec();
    if !spec.is_hierarchical() {
        return Err(Error::Precondition("hierarchical_state needs a ttns or mera".into()));
    }
    let (chi, b, t) = (spec.chi, spec.branching, spec.size);
    if chi.pow(spec.sites() as u32) > MAX_AMPLITUDES {
        return Err(Error::Resource(format!("statevector on {} sites at chi={chi}", spec.sites())));
    }
    let mut amps = vec![ZERO; chi];
    amps[0] = ONE;
    let mut psi = StateVector { dims: vec![chi], amplitudes: amps };
    for tau in (1..=t).rev() {
        let n_parent = spec.level_sites(tau);
        // isometry k turns site k into sites bk..bk+b-1
        for k in (0..n_parent).rev() {
            let v = inst.isometry(Position::isometry(tau, k));
            psi.expand_leg(k, v.tensor(), &vec![chi; b]);
        }
        if spec.family == Family::Mera {
            let n = spec.level_sites(tau - 1);
            for k in 0..n_parent {
                let u = inst.tensor(Position::disentangler(tau, k));
                psi.apply(u.matrix(), &[b * k + b - 1, (b * k + b) % n]);
            }
        }
    }
    Ok(psi)
}

/// `⟨Ψ|ĥ_i|Ψ⟩` for an `n`-site operator on sites `i, i+1, …` (1-based and
/// open for MPS, 0-based and periodic for hierarchical networks).
pub fn local_expectation(inst: &TnsInstance, psi: &StateVector, i: usize, h: &DenseTensor, width: usize) -> Result<f64> {
    let spec = inst.spec();
    let legs: Vec<usize> = match spec.family {
        Family::Mps => {
            if i < 1 || i + width - 1 > spec.size {
                return Err(Error::Index(format!("support {i}..{} outside 1..={}", i + width - 1, spec.size)));
            }
            (i..i + width).collect()
        }
        _ => {
            let l = spec.sites();
            if width > l {
                return Err(Error::Index(format!("support width {width} exceeds {l} sites")));
            }
            (0..width).map(|r| (i + r) % l).collect()
        }
    };
    Ok(psi.expectation(h, &legs).re)
}
