use std::ffi::{CStr, CString};
use std::ptr;

use cluster_edgeworth::data::{ClusterBlock, ClusteredDataset, Hypothesis};
use cluster_edgeworth::edgeworth::{critical_value, estimate_moments, MomentOptions};
use cluster_edgeworth::ols::{fit, score_components};
use cluster_edgeworth_ffi::*;
use nalgebra::{DMatrix, DVector};

const Y: [f64; 12] = [
    0.3, -1.1, 0.8, 2.4, -0.6, 0.1, 1.7, -0.9, 0.4, 3.1, -0.2, 0.5,
];
const X1: [f64; 12] = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
const IDS: [u64; 12] = [5, 5, 9, 9, 9, 2, 2, 7, 7, 4, 4, 4];

fn row_major() -> Vec<f64> {
    X1.iter().flat_map(|&v| [1.0, v]).collect()
}

fn make() -> *mut CeDataset {
    let mut d = ptr::null_mut();
    let x = row_major();
    let s = unsafe { ce_dataset_new(Y.as_ptr(), x.as_ptr(), IDS.as_ptr(), 12, 2, &mut d) };
    assert_eq!(s, CeStatus::Ok);
    assert!(!d.is_null());
    d
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ce_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

/// The same data assembled directly through the library.
fn reference() -> ClusteredDataset {
    let mut order: Vec<u64> = Vec::new();
    for id in IDS {
        if !order.contains(&id) {
            order.push(id);
        }
    }
    let clusters = order
        .iter()
        .map(|&id| {
            let rows: Vec<usize> = (0..12).filter(|&i| IDS[i] == id).collect();
            let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| Y[i]));
            let x = DMatrix::from_fn(rows.len(), 2, |r, c| if c == 0 { 1.0 } else { X1[rows[r]] });
            ClusterBlock::new(id.to_string(), y, x).unwrap()
        })
        .collect();
    ClusteredDataset::new(clusters).unwrap()
}

#[test]
fn dataset_handle_reports_shape() {
    let d = make();
    unsafe {
        assert_eq!(ce_dataset_num_clusters(d), 5);
        assert_eq!(ce_dataset_num_obs(d), 12);
        assert_eq!(ce_dataset_num_regressors(d), 2);
        ce_dataset_free(d);
        assert_eq!(ce_dataset_num_clusters(ptr::null()), 0);
        ce_dataset_free(ptr::null_mut());
    }
}

#[test]
fn infer_matches_the_library() {
    let d = make();
    let lambda = [0.0, 1.0];
    let mut out = CeInference::default();
    let s = unsafe { ce_infer(d, lambda.as_ptr(), 2, 0.25, 0.05, 0.0, &mut out) };
    assert_eq!(s, CeStatus::Ok, "{}", last_error());

    let data = reference();
    let h = Hypothesis::new(DVector::from_column_slice(&lambda), 0.25, 0.05).unwrap();
    let f = fit(&data, &h).unwrap();
    let m = estimate_moments(
        &score_components(&f, &data).unwrap(),
        MomentOptions::default(),
    )
    .unwrap();
    let c = critical_value(&m, 5, 0.05).unwrap();
    assert_eq!(out.num_clusters, 5);
    assert_eq!(out.t_stat, f.t_stat());
    assert_eq!(out.cv, c.cv);
    assert_eq!([out.k1, out.k2, out.k3, out.k4], m.kcum);
    assert_eq!(out.reject, i32::from(f.t_stat().abs() > c.cv));
    assert!((out.ci_upper - out.ci_lower - 2.0 * c.cv * f.std_error()).abs() < 1e-12);

    let mut beta = [0.0; 2];
    assert_eq!(
        unsafe { ce_beta_hat(d, beta.as_mut_ptr(), 2) },
        CeStatus::Ok
    );
    assert_eq!(beta.as_slice(), f.beta_hat().as_slice());
    unsafe { ce_dataset_free(d) };
}

#[test]
fn error_codes_and_messages() {
    let d = make();
    let mut out = CeInference::default();
    unsafe {
        assert_eq!(
            ce_infer(ptr::null(), [1.0].as_ptr(), 1, 0.0, 0.05, 0.0, &mut out),
            CeStatus::NullPointer
        );
        assert!(last_error().contains("dataset"));
        assert_eq!(
            ce_infer(d, [1.0].as_ptr(), 1, 0.0, 0.05, 0.0, &mut out),
            CeStatus::InvalidArgument
        );
        assert!(last_error().contains("lambda"));
        assert_eq!(
            ce_infer(d, [0.0, 1.0].as_ptr(), 2, 0.0, 1.5, 0.0, &mut out),
            CeStatus::InvalidArgument
        );
        let mut v = 0.0;
        assert_eq!(ce_hermite(4, 1.0, &mut v), CeStatus::InvalidArgument);
        assert_eq!(ce_hermite(3, 2.0, &mut v), CeStatus::Ok);
        assert_eq!(v, 2.0);
        assert_eq!(last_error(), "");

        // Collinear regressors.
        let x: Vec<f64> = (0..12).flat_map(|_| [1.0, 2.0]).collect();
        let mut bad = ptr::null_mut();
        assert_eq!(
            ce_dataset_new(Y.as_ptr(), x.as_ptr(), IDS.as_ptr(), 12, 2, &mut bad),
            CeStatus::Ok
        );
        assert_eq!(
            ce_infer(bad, [0.0, 1.0].as_ptr(), 2, 0.0, 0.05, 0.0, &mut out),
            CeStatus::Numerical
        );
        ce_dataset_free(bad);

        let ids = [1u64; 12];
        let mut one = ptr::null_mut();
        assert_eq!(
            ce_dataset_new(
                Y.as_ptr(),
                row_major().as_ptr(),
                ids.as_ptr(),
                12,
                2,
                &mut one
            ),
            CeStatus::InvalidData
        );
        assert!(one.is_null());
        ce_dataset_free(d);
    }
}

#[test]
fn student_and_bootstrap_values() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(
            ce_student_cv(10, 10, 1, CeStudentVariant::D1, 0.05, &mut v),
            CeStatus::Ok
        );
        assert!((v - 2.385).abs() < 1e-3);
        assert_eq!(
            ce_student_cv(10, 10, 1, CeStudentVariant::D3, 0.05, &mut v),
            CeStatus::InvalidArgument
        );

        let d = make();
        let lambda = [0.0, 1.0];
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(
            ce_wild_bootstrap_cv(d, lambda.as_ptr(), 2, 0.0, 0.05, 199, 3, &mut a),
            CeStatus::Ok
        );
        assert_eq!(
            ce_wild_bootstrap_cv(d, lambda.as_ptr(), 2, 0.0, 0.05, 199, 3, &mut b),
            CeStatus::Ok
        );
        assert_eq!(a, b);
        assert_eq!(
            ce_pairs_bootstrap_cv(d, lambda.as_ptr(), 2, 0.0, 0.05, 199, 3, &mut a),
            CeStatus::Ok
        );
        assert!(a > 0.0);
        assert_eq!(
            ce_pairs_bootstrap_cv(d, lambda.as_ptr(), 2, 0.0, 0.05, 0, 3, &mut a),
            CeStatus::InvalidArgument
        );
        ce_dataset_free(d);
    }
}

#[test]
fn csv_loading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut text = String::from("g,y,c,x\n");
    for i in 0..12 {
        text.push_str(&format!("{},{},1,{}\n", IDS[i], Y[i], X1[i]));
    }
    std::fs::write(&path, text).unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    let (g, y) = (CString::new("g").unwrap(), CString::new("y").unwrap());
    let cols = [CString::new("c").unwrap(), CString::new("x").unwrap()];
    let ptrs: Vec<_> = cols.iter().map(|c| c.as_ptr()).collect();
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(
            ce_dataset_from_csv(p.as_ptr(), g.as_ptr(), y.as_ptr(), ptrs.as_ptr(), 2, &mut d),
            CeStatus::Ok
        );
        assert_eq!(ce_dataset_num_clusters(d), 5);
        ce_dataset_free(d);
        let missing = CString::new("nope").unwrap();
        assert_eq!(
            ce_dataset_from_csv(
                p.as_ptr(),
                missing.as_ptr(),
                y.as_ptr(),
                ptrs.as_ptr(),
                2,
                &mut d
            ),
            CeStatus::InvalidData
        );
    }
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(ce_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/include/cluster_edgeworth.h"
    ))
    .unwrap();
    for name in [
        "ce_dataset_new",
        "ce_dataset_from_csv",
        "ce_dataset_free",
        "ce_infer",
        "ce_beta_hat",
        "ce_student_cv",
        "ce_pairs_bootstrap_cv",
        "ce_wild_bootstrap_cv",
        "ce_hermite",
        "ce_last_error_message",
        "ce_version",
        "typedef struct CeDataset CeDataset",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles the C smoke program against the static library when a C
/// compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Ok(exe) = std::env::current_exe() else {
        return;
    };
    // target/<profile>/deps/<test> -> target/<profile>
    let Some(profile_dir) = exe.parent().and_then(|p| p.parent()) else {
        return;
    };
    let lib = profile_dir.join("libcluster_edgeworth_ffi.a");
    if !lib.exists()
        || std::process::Command::new("cc")
            .arg("--version")
            .output()
            .is_err()
    {
        eprintln!("skipping: static library or C compiler not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new("cc")
        .arg(format!("{manifest}/tests/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("version "));
}
