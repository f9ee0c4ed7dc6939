//! C interface. Objects are opaque handles created by `*_new`/`*_sample`
//! and released by the matching `*_free`. Every fallible call returns an
//! [`IsotnsStatus`]; the message of the last failure on the calling thread is
//! available from [`isotns_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use isotns::ansatz::{sample_instance, AnsatzSpec, Family, TensorKind, TnsInstance};
use isotns::basis::build_interaction;
use isotns::channels::{analytic_eta, build_doubled_channel, spectrum, ChannelTag};
use isotns::expectation::{energy, Hamiltonian};
use isotns::gradient::{layer_values, site_values, sweep};
use isotns::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotnsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidDimension = 3,
    Shape = 4,
    Unsupported = 5,
    Index = 6,
    Configuration = 7,
    Validation = 8,
    Resource = 9,
    Numerical = 10,
    FitDomain = 11,
    Integrity = 12,
    Io = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotnsFamily {
    Mps = 0,
    Ttns = 1,
    Mera = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotnsTensorKind {
    /// Sites for an MPS, disentanglers for a MERA, isometries for a TTNS.
    Default = 0,
    Isometry = 1,
    Disentangler = 2,
}

/// Network description.
pub struct IsotnsSpec(AnsatzSpec);

/// One Haar-random draw of a network.
pub struct IsotnsInstance(TnsInstance);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> IsotnsStatus {
    match e {
        Error::InvalidDimension(_) => IsotnsStatus::InvalidDimension,
        Error::Shape(_) => IsotnsStatus::Shape,
        Error::Unsupported(_) => IsotnsStatus::Unsupported,
        Error::Integrity(_) => IsotnsStatus::Integrity,
        Error::Index(_) | Error::ConeMembership { .. } => IsotnsStatus::Index,
        Error::Configuration(_) | Error::Precondition(_) => IsotnsStatus::Configuration,
        Error::Validation(_) => IsotnsStatus::Validation,
        Error::Resource(_) => IsotnsStatus::Resource,
        Error::Numerical { .. } => IsotnsStatus::Numerical,
        Error::FitDomain(_) => IsotnsStatus::FitDomain,
        Error::Io { .. } | Error::Serialization(_) => IsotnsStatus::Io,
    }
}

enum Failure {
    Status(IsotnsStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IsotnsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IsotnsStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            IsotnsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(IsotnsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Copies `values` to `out[0..len]` and reports the count in `written`.
/// A short buffer is filled as far as it goes and reported as too small.
unsafe fn write_slice(values: &[f64], out: *mut f64, len: usize, written: *mut usize) -> Result<(), Failure> {
    if !written.is_null() {
        written.write(values.len());
    }
    if len > 0 && out.is_null() {
        return Err(null("out"));
    }
    let n = values.len().min(len);
    if n > 0 {
        std::ptr::copy_nonoverlapping(values.as_ptr(), out, n);
    }
    if values.len() > len {
        return Err(Failure::Status(
            IsotnsStatus::BufferTooSmall,
            format!("{} values do not fit a buffer of {len}", values.len()),
        ));
    }
    Ok(())
}

fn family(f: IsotnsFamily) -> Family {
    match f {
        IsotnsFamily::Mps => Family::Mps,
        IsotnsFamily::Ttns => Family::Ttns,
        IsotnsFamily::Mera => Family::Mera,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn isotns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (truncated, always
/// NUL-terminated when `len > 0`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn isotns_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            buf.add(n).write(0);
        }
        bytes.len()
    })
}

/// Validates and allocates a network description. `d` is used by MPS only;
/// hierarchical sites have dimension `chi`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_spec_new(
    family_: IsotnsFamily,
    branching: usize,
    chi: usize,
    d: usize,
    size: usize,
    homogeneous: bool,
    trotter: usize,
    out: *mut *mut IsotnsSpec,
) -> IsotnsStatus {
    guard(|| {
        let spec = match family(family_) {
            Family::Mps => AnsatzSpec::mps(chi, d, size),
            Family::Ttns => AnsatzSpec::ttns(branching, chi, size),
            Family::Mera => AnsatzSpec::mera(branching, chi, size),
        }
        .with_homogeneous(homogeneous)
        .with_trotter(trotter);
        spec.validate()?;
        write_out(out, Box::into_raw(Box::new(IsotnsSpec(spec))), "out")
    })
}

/// # Safety
/// `spec` must be null or come from [`isotns_spec_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn isotns_spec_free(spec: *mut IsotnsSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of physical sites of the network.
///
/// # Safety
/// `spec` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_spec_sites(spec: *const IsotnsSpec, out: *mut usize) -> IsotnsStatus {
    guard(|| write_out(out, deref(spec, "spec")?.0.sites(), "out"))
}

/// Samples every tensor from the Haar measure; equal seeds give equal draws.
///
/// # Safety
/// `spec` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_instance_sample(spec: *const IsotnsSpec, seed: u64, out: *mut *mut IsotnsInstance) -> IsotnsStatus {
    guard(|| {
        let inst = sample_instance(&deref(spec, "spec")?.0, seed)?;
        write_out(out, Box::into_raw(Box::new(IsotnsInstance(inst))), "out")
    })
}

/// # Safety
/// `inst` must be null or come from [`isotns_instance_sample`] and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn isotns_instance_free(inst: *mut IsotnsInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

fn hamiltonian(spec: &AnsatzSpec, width: usize) -> Result<Hamiltonian, Failure> {
    let site_dim = if spec.is_hierarchical() { spec.chi } else { spec.d };
    Ok(Hamiltonian::translation_invariant(spec, &build_interaction(site_dim, width)?)?)
}

/// Energy of the translation-invariant Gell-Mann Hamiltonian with
/// `width`-site terms (`Tr h² = 1`).
///
/// # Safety
/// `inst` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_instance_energy(inst: *const IsotnsInstance, width: usize, out: *mut f64) -> IsotnsStatus {
    guard(|| {
        let inst = &deref(inst, "inst")?.0;
        let e = energy(inst, &hamiltonian(inst.spec(), width)?)?;
        write_out(out, e, "out")
    })
}

/// `(1/N)Tr(g†g)` of this draw for the Gell-Mann Hamiltonian with
/// `width`-site terms: per site `j = 1..L` for an MPS, or per layer
/// `τ = 1..T` (mean over the layer's tensors of `kind`) otherwise.
/// `written` receives the number of values even when the buffer is short.
///
/// # Safety
/// `inst` must be a live handle, `out` valid for `len` writes and `written`
/// null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_gradient_values(
    inst: *const IsotnsInstance,
    width: usize,
    kind: IsotnsTensorKind,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> IsotnsStatus {
    guard(|| {
        let inst = &deref(inst, "inst")?.0;
        let spec = inst.spec();
        let s = sweep(inst, inst, &hamiltonian(spec, width)?)?;
        let values = match (spec.family, kind) {
            (Family::Mps, IsotnsTensorKind::Default) => site_values(inst, &s),
            (Family::Mps, _) => return Err(Failure::Status(IsotnsStatus::InvalidArgument, "an mps has only site tensors".into())),
            (Family::Mera, IsotnsTensorKind::Default | IsotnsTensorKind::Disentangler) => layer_values(inst, &s, TensorKind::Disentangler),
            (Family::Ttns, IsotnsTensorKind::Disentangler) => {
                return Err(Failure::Status(IsotnsStatus::InvalidArgument, "a ttns has no disentanglers".into()))
            }
            (_, _) => layer_values(inst, &s, TensorKind::Isometry),
        };
        write_slice(&values, out, len, written)
    })
}

/// Leading eigenvalues (by modulus) of the family's averaged doubled channel.
///
/// # Safety
/// `spec` must be a live handle, `re` and `im` valid for `len` writes and
/// `written` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_channel_spectrum(
    spec: *const IsotnsSpec,
    re: *mut f64,
    im: *mut f64,
    len: usize,
    written: *mut usize,
) -> IsotnsStatus {
    guard(|| {
        let spec = &deref(spec, "spec")?.0;
        let channel = build_doubled_channel(spec, ChannelTag::for_spec(spec)?)?;
        let s = spectrum(&channel, len.max(1))?;
        let n = s.eigenvalues.len().min(len);
        let vr: Vec<f64> = s.eigenvalues[..n].iter().map(|z| z.re).collect();
        let vi: Vec<f64> = s.eigenvalues[..n].iter().map(|z| z.im).collect();
        write_slice(&vi, im, len, std::ptr::null_mut())?;
        write_slice(&vr, re, len, written)
    })
}

/// Closed-form second eigenvalue `η` (leading order for ternary MERA).
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn isotns_analytic_eta(family_: IsotnsFamily, branching: usize, chi: usize, d: usize, out: *mut f64) -> IsotnsStatus {
    guard(|| write_out(out, analytic_eta(family(family_), branching, chi, d)?, "out"))
}
