use std::ffi::CStr;
use std::ptr;

use isotns_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe { isotns_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn spec(family: IsotnsFamily, b: usize, chi: usize, d: usize, size: usize) -> *mut IsotnsSpec {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { isotns_spec_new(family, b, chi, d, size, false, 0, &mut s) }, IsotnsStatus::Ok, "{}", last_error());
    s
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(isotns_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn sampling_and_gradients() {
    let s = spec(IsotnsFamily::Mera, 2, 2, 2, 3);
    let mut sites = 0;
    assert_eq!(unsafe { isotns_spec_sites(s, &mut sites) }, IsotnsStatus::Ok);
    assert_eq!(sites, 8);
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(isotns_instance_sample(s, 5, &mut a), IsotnsStatus::Ok);
        assert_eq!(isotns_instance_sample(s, 5, &mut b), IsotnsStatus::Ok);
    }
    let (mut ea, mut eb) = (0.0, 1.0);
    unsafe {
        assert_eq!(isotns_instance_energy(a, 3, &mut ea), IsotnsStatus::Ok);
        assert_eq!(isotns_instance_energy(b, 3, &mut eb), IsotnsStatus::Ok);
    }
    assert_eq!(ea, eb);
    let mut vals = [0.0; 3];
    let mut n = 0;
    let st = unsafe { isotns_gradient_values(a, 3, IsotnsTensorKind::Default, vals.as_mut_ptr(), 3, &mut n) };
    assert_eq!(st, IsotnsStatus::Ok);
    assert_eq!(n, 3);
    assert!(vals.iter().all(|v| v.is_finite() && *v >= 0.0));
    let mut short = [0.0; 2];
    let st = unsafe { isotns_gradient_values(a, 3, IsotnsTensorKind::Isometry, short.as_mut_ptr(), 2, &mut n) };
    assert_eq!(st, IsotnsStatus::BufferTooSmall);
    assert_eq!(n, 3);
    unsafe {
        isotns_instance_free(a);
        isotns_instance_free(b);
        isotns_spec_free(s);
    }
}

#[test]
fn channel_spectrum_and_closed_form() {
    let s = spec(IsotnsFamily::Mera, 2, 2, 2, 4);
    let (mut re, mut im) = ([0.0; 3], [0.0; 3]);
    let mut n = 0;
    let st = unsafe { isotns_channel_spectrum(s, re.as_mut_ptr(), im.as_mut_ptr(), 3, &mut n) };
    assert_eq!(st, IsotnsStatus::Ok, "{}", last_error());
    assert_eq!(n, 3);
    assert!((re[0] - 1.0).abs() < 1e-10);
    let mut eta = 0.0;
    assert_eq!(unsafe { isotns_analytic_eta(IsotnsFamily::Mera, 2, 2, 2, &mut eta) }, IsotnsStatus::Ok);
    assert!((re[1] - eta).abs() < 1e-8);
    assert!(im.iter().all(|x| x.abs() < 1e-12));
    unsafe { isotns_spec_free(s) };
}

#[test]
fn errors_are_reported() {
    let mut s = ptr::null_mut();
    let st = unsafe { isotns_spec_new(IsotnsFamily::Mera, 2, 3, 3, 3, false, 2, &mut s) };
    assert_ne!(st, IsotnsStatus::Ok);
    assert!(s.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { isotns_spec_sites(ptr::null(), ptr::null_mut()) }, IsotnsStatus::NullPointer);
    assert!(last_error().contains("null"));
    let mps = spec(IsotnsFamily::Mps, 1, 2, 2, 4);
    let mut inst = ptr::null_mut();
    assert_eq!(unsafe { isotns_instance_sample(mps, 1, &mut inst) }, IsotnsStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { isotns_instance_energy(inst, 9, &mut v) }, IsotnsStatus::Configuration, "{}", last_error());
    let st = unsafe { isotns_gradient_values(inst, 1, IsotnsTensorKind::Isometry, ptr::null_mut(), 0, ptr::null_mut()) };
    assert_eq!(st, IsotnsStatus::InvalidArgument);
    let mut eta = 0.0;
    assert_eq!(unsafe { isotns_analytic_eta(IsotnsFamily::Ttns, 4, 2, 2, &mut eta) }, IsotnsStatus::Unsupported);
    unsafe {
        isotns_instance_free(inst);
        isotns_spec_free(mps);
        isotns_spec_free(ptr::null_mut());
    }
}
