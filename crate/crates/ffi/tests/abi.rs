use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use ssclust_ffi::*;

fn last_error() -> String {
    let p = ssc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn two_blobs() -> (Vec<f64>, usize) {
    // 30 points around (0, 0) and 30 around (8, 8), on a deterministic lattice.
    let mut x = Vec::new();
    for c in [0.0, 8.0] {
        for i in 0..30 {
            let a = i as f64 * 0.7;
            x.push(c + 0.5 * a.sin());
            x.push(c + 0.5 * (1.3 * a).cos());
        }
    }
    (x, 60)
}

#[test]
fn search_round_trip() {
    let (x, n) = two_blobs();
    let mut labels = vec![-1i64; n];
    labels[0] = 0;
    labels[1] = 0;
    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(ssc_dataset_new(x.as_ptr(), n, 2, labels.as_ptr(), &mut ds), SscStatus::Ok);
        assert_eq!(ssc_dataset_n_unlabeled(ds), 58);

        let mut opts = ssc_search_options_default();
        opts.g_max = 3;
        opts.restarts = 2;
        let mut res = ptr::null_mut();
        assert_eq!(ssc_model_search(ds, &opts, &mut res), SscStatus::Ok);
        assert_eq!(ssc_search_result_n_candidates(res), 12);

        let best = ssc_search_result_best(res);
        let mut cand = std::mem::zeroed::<SscCandidate>();
        assert_eq!(ssc_search_result_candidate(res, best, &mut cand), SscStatus::Ok);
        assert_eq!(cand.g, 2);
        assert!(!cand.failed);
        let mut expected = 0.0;
        assert_eq!(ssc_bic_star(cand.loglik, cand.d, 58, &mut expected), SscStatus::Ok);
        assert_eq!(cand.bic_star, expected);

        let mut assign = vec![0usize; n];
        assert_eq!(ssc_search_result_assignments(res, assign.as_mut_ptr(), n), SscStatus::Ok);
        assert!(assign[..30].iter().all(|&k| k == assign[0]));
        assert!(assign[30..].iter().all(|&k| k != assign[0]));

        let mut resp = vec![0.0; n * 2];
        assert_eq!(ssc_search_result_responsibilities(res, resp.as_mut_ptr(), n * 2), SscStatus::Ok);
        for row in resp.chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            ssc_search_result_responsibilities(res, resp.as_mut_ptr(), 3),
            SscStatus::InvalidArgument
        );

        let mut idx = usize::MAX;
        assert_eq!(ssc_search_result_select_with(res, 60.0, &mut idx), SscStatus::Ok);
        assert!(idx < 12);
        assert_eq!(ssc_search_result_select_with(res, 0.5, &mut idx), SscStatus::Domain);

        ssc_search_result_free(res);
        ssc_dataset_free(ds);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ssc_dataset_new(ptr::null(), 3, 2, ptr::null(), &mut ds), SscStatus::NullPointer);
        assert!(last_error().contains("x"));

        let x = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(ssc_dataset_new(x.as_ptr(), 4, 1, ptr::null(), &mut ds), SscStatus::Ok);
        assert!(ssc_last_error_message().is_null());

        let mut opts = ssc_search_options_default();
        opts.model_mask = 0;
        let mut res = ptr::null_mut();
        assert_eq!(ssc_model_search(ds, &opts, &mut res), SscStatus::InvalidArgument);
        opts = ssc_search_options_default();
        opts.penalty_kind = 7;
        assert_eq!(ssc_model_search(ds, &opts, &mut res), SscStatus::InvalidArgument);
        assert!(res.is_null());
        ssc_dataset_free(ds);
        ssc_dataset_free(ptr::null_mut());

        let mut v = 0.0;
        assert_eq!(ssc_bic_star(-1.0, 2, 1, &mut v), SscStatus::UndefinedPenalty);
        assert!(last_error().contains("BIC*"));
        let mut d = 0usize;
        assert_eq!(ssc_count_params(2, 2, 9, &mut d), SscStatus::InvalidArgument);
    }
}

#[test]
fn scalar_wrappers_match_core() {
    unsafe {
        let mut d = 0usize;
        assert_eq!(ssc_count_params(3, 2, SscCovModel::Eii as u32, &mut d), SscStatus::Ok);
        assert_eq!(d, 3 * (2 + 1));
        assert_eq!(ssc_count_params(3, 2, SscCovModel::Eee as u32, &mut d), SscStatus::Ok);
        assert_eq!(d, 3 * 2 + 3 - 1 + 3);

        let mut p = 0.0;
        assert_eq!(ssc_prob_case2b(200, 190, 1_000_000, std::f64::consts::E.powi(2), &mut p), SscStatus::Ok);
        let mut q = 0.0;
        assert_eq!(
            ssc_prob_nested_limit(200, 190, 1_000_000, std::f64::consts::E.powi(2), &mut q),
            SscStatus::Ok
        );
        assert_eq!(p, q);
        assert!((p - 0.029_252_688).abs() < 1e-8);
        assert_eq!(ssc_prob_case2a(200, 210, 10, 5.0, &mut p), SscStatus::Domain);

        assert!((ssc_chi2_cdf(20.0, 10.0) - 0.970_747_3).abs() < 1e-7);
        assert!(ssc_noncentral_chi2_cdf(1.0, -1.0, 0.0).is_nan());

        let a = [0usize, 0, 0, 1];
        let b = [0usize, 0, 1, 1];
        let mut r = 1.0;
        assert_eq!(ssc_ari(a.as_ptr(), b.as_ptr(), 4, &mut r), SscStatus::Ok);
        assert_eq!(r, 0.0);

        let pp = [1.0, 0.0];
        let qq = [0.5, 0.5];
        assert_eq!(ssc_hellinger(pp.as_ptr(), qq.as_ptr(), 2, &mut r), SscStatus::Ok);
        assert!((r - 0.541_196).abs() < 1e-6);

        let assign = [0usize, 0, 0, 0, 1, 1, 1, 1];
        let lines = [0usize, 0, 0, 0, 1, 1, 1, 1];
        let (mut h, mut pv) = (0.0, 0.0);
        let mut null = vec![0.0; 99];
        let status = ssc_line_difference_test(
            assign.as_ptr(),
            lines.as_ptr(),
            8,
            99,
            4,
            &mut h,
            &mut pv,
            null.as_mut_ptr(),
        );
        assert_eq!(status, SscStatus::Ok);
        assert_eq!(h, 1.0);
        assert!(pv < 0.2);
        assert!(null.iter().all(|v| (0.0..=1.0).contains(v)));

        let mut pvals = [0.2f64; 29];
        for v in pvals.iter_mut().skip(8) {
            *v = 0.01;
        }
        let mut t = 0i64;
        assert_eq!(ssc_answering_time(pvals.as_ptr(), 0.05, &mut t), SscStatus::Ok);
        assert_eq!(t, 10);
        let never = [0.5f64; 29];
        assert_eq!(ssc_answering_time(never.as_ptr(), 0.05, &mut t), SscStatus::Ok);
        assert_eq!(t, -1);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(ssc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_generated_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ssclust.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build.rs");
    for name in [
        "ssc_dataset_new",
        "ssc_model_search",
        "ssc_search_result_free",
        "ssc_last_error_message",
        "SSC_STATUS_UNDEFINED_PENALTY",
        "typedef struct SscDataset SscDataset",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check with a C compiler when one is installed.
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-x", "c"])
        .arg(&header)
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
