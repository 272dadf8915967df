use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use condnorm::synth::{simulate, LagRule, MeanFn, SimData, SimSpec, VarFn};
use condnorm_ffi::*;
use proptest::prelude::*;

fn last_error() -> String {
    let p = cn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn fixture(n: usize, seed: u64, missing: f64) -> SimData {
    let mut spec = SimSpec::basic(n, seed);
    spec.mean = MeanFn::Sine {
        amplitude: 2.0,
        frequency: 2.0,
    };
    spec.variance = VarFn::Exp { scale: 0.5, rate: 1.0 };
    spec.missing_fraction = missing;
    simulate(&spec).unwrap()
}

fn z_of(d: &SimData) -> Vec<f64> {
    d.z.column("z").unwrap().raw_values().to_vec()
}

fn fit(y: &[f64], z: &[f64]) -> *mut CnNormalizer {
    let mut h = ptr::null_mut();
    let s = unsafe { cn_normalizer_fit(y.as_ptr(), y.len(), z.as_ptr(), 1, 8, &mut h) };
    assert_eq!(s, CnStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

#[test]
fn version_and_link() {
    let v = unsafe { CStr::from_ptr(cn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    for c in [-0.9, -0.1, 0.0, 0.5, 0.99] {
        assert!((cn_corr_link_inv(cn_corr_link(c)) - c).abs() < 1e-12);
    }
    assert_eq!(cn_corr_link_inv(0.0), 0.0);
}

#[test]
fn normalizer_roundtrip_and_json_reload() {
    let d = fixture(1500, 3, 0.1);
    let y = d.y.raw_values().to_vec();
    let z = z_of(&d);
    let h = fit(&y, &z);
    assert_eq!(unsafe { cn_normalizer_covariates(h) }, 1);

    let n = y.len();
    let mut star = vec![0.0; n];
    let s = unsafe { cn_normalizer_normalize(h, y.as_ptr(), n, z.as_ptr(), 1, star.as_mut_ptr()) };
    assert_eq!(s, CnStatus::Ok);
    let mut back = vec![0.0; n];
    let s = unsafe { cn_normalizer_unnormalize(h, star.as_ptr(), n, z.as_ptr(), 1, back.as_mut_ptr()) };
    assert_eq!(s, CnStatus::Ok);
    for i in 0..n {
        if y[i].is_nan() {
            assert!(star[i].is_nan());
        } else {
            assert!((back[i] - y[i]).abs() < 1e-10);
        }
    }

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { cn_normalizer_to_json(h, &mut json) }, CnStatus::Ok);
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { cn_normalizer_from_json(json, &mut h2) }, CnStatus::Ok);
    let mut star2 = vec![0.0; n];
    let s = unsafe { cn_normalizer_normalize(h2, y.as_ptr(), n, z.as_ptr(), 1, star2.as_mut_ptr()) };
    assert_eq!(s, CnStatus::Ok);
    for (a, b) in star.iter().zip(&star2) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    unsafe {
        cn_string_free(json);
        cn_normalizer_free(h);
        cn_normalizer_free(h2);
        cn_normalizer_free(ptr::null_mut());
        cn_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut h = ptr::null_mut();
    let s = unsafe { cn_normalizer_fit(ptr::null(), 10, ptr::null(), 0, 8, &mut h) };
    assert_eq!(s, CnStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert!(h.is_null());

    let s = unsafe { cn_normalizer_fit([1.0].as_ptr(), 0, ptr::null(), 0, 8, &mut h) };
    assert_eq!(s, CnStatus::InvalidArgument);

    let d = fixture(400, 4, 0.0);
    let y = d.y.raw_values().to_vec();
    let z = z_of(&d);
    let h = fit(&y, &z);
    assert!(cn_last_error().is_null());
    let mut out = vec![0.0; y.len()];
    let zz: Vec<f64> = z.iter().chain(&z).copied().collect();
    let s = unsafe { cn_normalizer_normalize(h, y.as_ptr(), y.len(), zz.as_ptr(), 2, out.as_mut_ptr()) };
    assert_eq!(s, CnStatus::InvalidArgument);
    assert!(last_error().contains("covariates"));

    let mut g = ptr::null_mut();
    let s = unsafe { cn_normalizer_fit([1.0, 2.0].as_ptr(), 2, [0.1, 0.2].as_ptr(), 1, 8, &mut g) };
    assert_eq!(s, CnStatus::Estimation, "{}", last_error());
    unsafe { cn_normalizer_free(h) };

    let bad = c"{not json".as_ptr();
    assert_ne!(unsafe { cn_normalizer_from_json(bad, &mut g) }, CnStatus::Ok);
}

#[test]
fn impute_fills_gaps_and_keeps_observations() {
    let d = fixture(2000, 5, 0.1);
    let y = d.y.raw_values().to_vec();
    let z = z_of(&d);
    let n = y.len();
    let (mut out, mut lo, mut hi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let s = unsafe {
        cn_impute(
            y.as_ptr(),
            n,
            z.as_ptr(),
            1,
            8,
            5,
            out.as_mut_ptr(),
            lo.as_mut_ptr(),
            hi.as_mut_ptr(),
        )
    };
    assert_eq!(s, CnStatus::Ok, "{}", last_error());
    for i in 0..n {
        if y[i].is_nan() {
            assert!(out[i].is_finite());
            assert!(lo[i] < out[i] && out[i] < hi[i]);
        } else {
            assert_eq!(out[i].to_bits(), y[i].to_bits());
        }
    }
    let s = unsafe {
        cn_impute(
            y.as_ptr(),
            n,
            z.as_ptr(),
            1,
            8,
            5,
            out.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(s, CnStatus::Ok);
}

#[test]
fn lagtime_recovers_a_constant_lag() {
    let mut spec = SimSpec::basic(3000, 9);
    spec.lag = Some(LagRule::Constant { lag: 3 });
    spec.transport_noise = 0.5;
    let d = simulate(&spec).unwrap();
    let (x, y, z) = (d.x.raw_values().to_vec(), d.y.raw_values().to_vec(), z_of(&d));
    let n = x.len();
    let mut lag = vec![usize::MAX; n];
    let mut c = vec![0.0; n];
    let s = unsafe {
        cn_lagtime(
            x.as_ptr(),
            y.as_ptr(),
            n,
            z.as_ptr(),
            1,
            8,
            6,
            lag.as_mut_ptr(),
            c.as_mut_ptr(),
        )
    };
    assert_eq!(s, CnStatus::Ok, "{}", last_error());
    let rows: Vec<usize> = (0..n).filter(|i| lag[*i] != 0).collect();
    assert!(rows.len() > n / 2);
    let hits = rows.iter().filter(|i| lag[**i] == 3).count();
    assert!(hits as f64 >= 0.9 * rows.len() as f64);
    assert!(rows.iter().all(|i| c[*i] > 0.0 && c[*i] < 1.0));
    assert!((0..n).filter(|i| lag[*i] == 0).all(|i| c[i].is_nan()));

    let s = unsafe {
        cn_lagtime(
            x.as_ptr(),
            y.as_ptr(),
            n,
            z.as_ptr(),
            1,
            8,
            0,
            lag.as_mut_ptr(),
            c.as_mut_ptr(),
        )
    };
    assert_eq!(s, CnStatus::Estimation);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/condnorm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "cn_last_error",
        "cn_version",
        "cn_string_free",
        "cn_corr_link",
        "cn_corr_link_inv",
        "cn_normalizer_fit",
        "cn_normalizer_from_json",
        "cn_normalizer_covariates",
        "cn_normalizer_normalize",
        "cn_normalizer_unnormalize",
        "cn_normalizer_to_json",
        "cn_normalizer_free",
        "cn_impute",
        "cn_lagtime",
        "typedef struct CnNormalizer CnNormalizer;",
        "CN_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    let probe = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        probe.path(),
        "#include \"condnorm.h\"\nint main(void) { CnNormalizer *h = 0; return (int)cn_normalizer_covariates(h); }\n",
    )
    .unwrap();
    let Ok(o) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(probe.path())
        .output()
    else {
        return;
    };
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn link_matches_the_library(c in -0.999f64..0.999, u in -30.0f64..30.0) {
        prop_assert_eq!(cn_corr_link(c).to_bits(), condnorm::gam::corr_link(c).to_bits());
        prop_assert_eq!(cn_corr_link_inv(u).to_bits(), condnorm::gam::corr_link_inv(u).to_bits());
    }

    #[test]
    fn unnormalize_inverts_normalize(seed in 0u64..1000) {
        let d = fixture(300, seed, 0.05);
        let y = d.y.raw_values().to_vec();
        let z = z_of(&d);
        let h = fit(&y, &z);
        let n = y.len();
        let mut star = vec![0.0; n];
        let mut back = vec![0.0; n];
        unsafe {
            prop_assert_eq!(cn_normalizer_normalize(h, y.as_ptr(), n, z.as_ptr(), 1, star.as_mut_ptr()), CnStatus::Ok);
            prop_assert_eq!(cn_normalizer_unnormalize(h, star.as_ptr(), n, z.as_ptr(), 1, back.as_mut_ptr()), CnStatus::Ok);
            cn_normalizer_free(h);
        }
        for i in (0..n).filter(|i| y[*i].is_finite()) {
            prop_assert!((back[i] - y[i]).abs() < 1e-10);
        }
    }
}
