use std::ffi::{c_char, CStr, CString};
use std::ptr;

use paraxial_tr_ffi::*;

const HOMOGENEOUS: &str =
    "k0 = 1\nL = 6\nR_m = 16.522711641858304\nrho_0 = 4\nsigma = 0\nl_c = 1\n\
grid_n = 128\ngrid_extent = 64\nn_steps = 8\nseed = 1\n";

const SCATTERING: &str =
    "k0 = 1\nL = 6\nR_m = 16.522711641858304\nrho_0 = 4\nsigma = 1.4142135623730951\n\
l_c = 1\ngrid_n = 128\ngrid_extent = 64\nn_steps = 32\nseed = 7\n";

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { ptr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn parse(text: &str) -> *mut PtrConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { ptr_config_parse(text.as_ptr(), &mut cfg) },
        PtrStatus::Ok,
        "{}",
        last_error()
    );
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn version_matches_the_package() {
    let v = unsafe { CStr::from_ptr(ptr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_errors_map_to_status_codes() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("k0 = 1\nbogus = 3\n").unwrap();
    assert_eq!(
        unsafe { ptr_config_parse(bad.as_ptr(), &mut cfg) },
        PtrStatus::Config
    );
    assert!(last_error().contains("bogus"));
    assert!(cfg.is_null());

    let invalid = CString::new(HOMOGENEOUS.replace("k0 = 1", "k0 = -1")).unwrap();
    assert_eq!(
        unsafe { ptr_config_parse(invalid.as_ptr(), &mut cfg) },
        PtrStatus::Validation
    );

    assert_eq!(
        unsafe { ptr_config_parse(ptr::null(), &mut cfg) },
        PtrStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/dir/x.cfg").unwrap();
    assert_eq!(
        unsafe { ptr_config_load(missing.as_ptr(), &mut cfg) },
        PtrStatus::Io
    );
}

#[test]
fn last_error_is_cleared_and_truncated() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("nonsense").unwrap();
    unsafe { ptr_config_parse(bad.as_ptr(), &mut cfg) };
    let full = unsafe { ptr_last_error_message(ptr::null_mut(), 0) };
    assert!(full > 4);
    let mut small = [0 as c_char; 4];
    assert_eq!(
        unsafe { ptr_last_error_message(small.as_mut_ptr(), 4) },
        full
    );
    assert_eq!(
        unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(),
        3
    );

    let cfg = parse(HOMOGENEOUS);
    assert_eq!(unsafe { ptr_last_error_message(ptr::null_mut(), 0) }, 0);
    unsafe { ptr_config_free(cfg) };
}

#[test]
fn homogeneous_config_has_infinite_snr_and_refocuses() {
    let cfg = parse(HOMOGENEOUS);
    let mut d = PtrDerived {
        r_0: 0.0,
        l_sca: 0.0,
        depth: 0.0,
        r_tr: 0.0,
        alpha_l: 0.0,
        b_max: 0.0,
        r_max: 0.0,
        snr_closed_form: 0.0,
    };
    assert_eq!(
        unsafe { ptr_config_derived(cfg, &mut d) },
        PtrStatus::Ok,
        "{}",
        last_error()
    );
    assert!((d.r_0 - 17.0).abs() < 1e-9);
    assert!(d.l_sca.is_infinite() && d.snr_closed_form.is_infinite());

    let mut s = PtrSnr {
        peak_intensity: 0.0,
        background_intensity: 0.0,
        snr: 0.0,
        snr_closed_form: 0.0,
    };
    assert_eq!(
        unsafe { ptr_moments_snr(cfg, &mut s) },
        PtrStatus::Ok,
        "{}",
        last_error()
    );
    assert!(s.snr.is_infinite());
    assert_eq!(s.background_intensity, 0.0);

    let mut n = 0usize;
    assert_eq!(unsafe { ptr_config_grid_n(cfg, &mut n) }, PtrStatus::Ok);
    assert_eq!(n, 128);

    let mut field = ptr::null_mut();
    assert_eq!(
        unsafe { ptr_simulate(cfg, 0, &mut field) },
        PtrStatus::Ok,
        "{}",
        last_error()
    );
    let mut buf = vec![0.0; 2 * n * n];
    assert_eq!(
        unsafe { ptr_field_copy(field, buf.as_mut_ptr(), buf.len() - 1) },
        PtrStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { ptr_field_copy(field, buf.as_mut_ptr(), buf.len()) },
        PtrStatus::Ok
    );
    // The refocused intensity peaks at the source node (grid center).
    let abs2 = |i: usize| buf[2 * i].powi(2) + buf[2 * i + 1].powi(2);
    let argmax = (0..n * n)
        .max_by(|&a, &b| abs2(a).total_cmp(&abs2(b)))
        .unwrap();
    assert_eq!((argmax % n, argmax / n), (n / 2, n / 2));

    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(
        unsafe { ptr_moments_mean(cfg, 0.0, 0.0, &mut re, &mut im) },
        PtrStatus::Ok
    );
    assert!(re > 0.5 && re <= 1.0 + 1e-12, "re = {re}");

    unsafe {
        ptr_field_free(field);
        ptr_config_free(cfg);
    }
}

#[test]
fn ensemble_buffers_have_grid_shape() {
    let cfg = parse(SCATTERING);
    let mut ens = ptr::null_mut();
    assert_eq!(
        unsafe { ptr_ensemble_run(cfg, 1, &mut ens) },
        PtrStatus::Validation
    );
    assert_eq!(
        unsafe { ptr_ensemble_run(cfg, 4, &mut ens) },
        PtrStatus::Ok,
        "{}",
        last_error()
    );
    let n = 128;
    let mut mean = vec![f64::NAN; 2 * n * n];
    let mut var = vec![f64::NAN; 2 * n * n];
    assert_eq!(
        unsafe { ptr_ensemble_mean(ens, mean.as_mut_ptr(), mean.len()) },
        PtrStatus::Ok
    );
    assert_eq!(
        unsafe { ptr_ensemble_variance(ens, var.as_mut_ptr(), var.len()) },
        PtrStatus::Ok
    );
    assert!(mean.iter().all(|v| v.is_finite()));
    assert!(var.chunks(2).all(|c| c[0] >= 0.0 && c[1] == 0.0));
    assert!(var.chunks(2).any(|c| c[0] > 0.0));
    unsafe {
        ptr_ensemble_free(ens);
        ptr_config_free(cfg);
    }
}

#[test]
fn null_handles_are_rejected_and_free_accepts_null() {
    let mut n = 0usize;
    assert_eq!(
        unsafe { ptr_config_grid_n(ptr::null(), &mut n) },
        PtrStatus::NullPointer
    );
    assert_eq!(
        unsafe { ptr_field_copy(ptr::null(), ptr::null_mut(), 0) },
        PtrStatus::NullPointer
    );
    unsafe {
        ptr_config_free(ptr::null_mut());
        ptr_field_free(ptr::null_mut());
        ptr_ensemble_free(ptr::null_mut());
    }
}
