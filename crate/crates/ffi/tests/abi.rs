use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use lsqopt_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        lsqopt_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn spec() -> LsqoptProblemSpec {
    LsqoptProblemSpec {
        decay: LsqoptDecay::Exponential,
        kappa: 20.0,
        q: 0.7,
        lambda_d: 1.0,
        n: 2000,
        d: 10,
        noise_radius: 0.0,
        seed: 3,
    }
}

#[test]
fn generate_run_and_read_back() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(lsqopt_instance_generate(&spec(), &mut inst), LsqoptStatus::Ok);
        let (mut n, mut d) = (0, 0);
        assert_eq!(lsqopt_instance_dims(inst, &mut n, &mut d), LsqoptStatus::Ok);
        assert_eq!((n, d), (2000, 10));

        let mut opts = lsqopt_run_options_default();
        opts.batch_size = 1000;
        opts.seed = 11;
        let mut run = ptr::null_mut();
        assert_eq!(lsqopt_run(inst, &opts, &mut run), LsqoptStatus::Ok, "{}", last_error());
        let mut s = LsqoptRunSummary::default();
        assert_eq!(lsqopt_run_summary(run, &mut s), LsqoptStatus::Ok);
        assert!(s.iters_to_converge > 0);
        assert_eq!(s.switch_iter, -1);
        assert!(s.final_rel_error <= 1e-4);

        let mut trace = vec![0.0; s.trace_len];
        assert_eq!(
            lsqopt_run_trace(run, trace.as_mut_ptr(), 1),
            LsqoptStatus::BufferTooSmall
        );
        assert_eq!(lsqopt_run_trace(run, trace.as_mut_ptr(), trace.len()), LsqoptStatus::Ok);
        assert_eq!(trace[0], 1.0);
        assert_eq!(*trace.last().unwrap(), s.final_rel_error);

        let mut x = vec![0.0; d];
        let mut xs = vec![0.0; d];
        assert_eq!(lsqopt_run_final_x(run, x.as_mut_ptr(), d), LsqoptStatus::Ok);
        assert_eq!(lsqopt_instance_x_star(inst, xs.as_mut_ptr(), d), LsqoptStatus::Ok);
        let dist: f64 = x.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        assert!(dist > 0.0 && dist < 1e-2);

        lsqopt_run_free(run);
        lsqopt_instance_free(inst);
    }
}

#[test]
fn bounds_match_library() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(lsqopt_instance_generate(&spec(), &mut inst), LsqoptStatus::Ok);
        let mut b = LsqoptBounds::default();
        assert_eq!(lsqopt_bounds(inst, 1000, 1.0, 5.0, &mut b), LsqoptStatus::Ok);

        let p = spec();
        let direct = lsqopt::problem::generate_instance(&lsqopt::ProblemSpec::new(
            lsqopt::Decay::Exponential,
            p.kappa,
            p.q,
            p.n,
            p.d,
            p.seed,
        ))
        .unwrap();
        let dist = lsqopt::sampling::squared_norm_probs(&direct.spectral).unwrap();
        let r = lsqopt::bounds::bound_report(&direct, &dist, 1000, 1.0, 5.0).unwrap();
        assert_eq!(b.sigma, r.sigma);
        assert_eq!(b.batch_min, r.batch_min);
        assert_eq!(b.h_bound, 0.0);

        assert_eq!(lsqopt_bounds(inst, 1000, 5.0, 1.0, &mut b), LsqoptStatus::Config);
        assert!(last_error().contains("u_lower"));
        lsqopt_instance_free(inst);
    }
}

#[test]
fn save_load_and_from_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("i.bin").to_str().unwrap()).unwrap();
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(lsqopt_instance_generate(&spec(), &mut inst), LsqoptStatus::Ok);
        assert_eq!(lsqopt_instance_save(inst, path.as_ptr()), LsqoptStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(lsqopt_instance_load(path.as_ptr(), &mut back), LsqoptStatus::Ok);
        let (mut a, mut b) = (vec![0.0; 10], vec![0.0; 10]);
        lsqopt_instance_x_star(inst, a.as_mut_ptr(), 10);
        lsqopt_instance_x_star(back, b.as_mut_ptr(), 10);
        assert_eq!(a, b);
        lsqopt_instance_free(back);
        lsqopt_instance_free(inst);

        // 3x2 system with exact solution (1, -1)
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rhs = [1.0, -1.0, 0.0];
        let mut inst = ptr::null_mut();
        assert_eq!(
            lsqopt_instance_from_data(3, 2, a.as_ptr(), rhs.as_ptr(), &mut inst),
            LsqoptStatus::Ok
        );
        let mut x = [0.0; 2];
        lsqopt_instance_x_star(inst, x.as_mut_ptr(), 2);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] + 1.0).abs() < 1e-12);
        lsqopt_instance_free(inst);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut inst = ptr::null_mut();
        let missing = CString::new("/nonexistent/x.bin").unwrap();
        assert_eq!(lsqopt_instance_load(missing.as_ptr(), &mut inst), LsqoptStatus::Io);
        assert!(last_error().contains("/nonexistent/x.bin"));
        assert!(inst.is_null());

        let mut bad = spec();
        bad.kappa = 0.5;
        assert_eq!(lsqopt_instance_generate(&bad, &mut inst), LsqoptStatus::Domain);
        assert_eq!(
            lsqopt_instance_generate(ptr::null(), &mut inst),
            LsqoptStatus::NullPointer
        );
        assert_eq!(
            lsqopt_instance_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()),
            LsqoptStatus::NullPointer
        );

        // rank-deficient data
        let a = [1.0, 2.0, 2.0, 4.0];
        let rhs = [1.0, 2.0];
        assert_eq!(
            lsqopt_instance_from_data(2, 2, a.as_ptr(), rhs.as_ptr(), &mut inst),
            LsqoptStatus::RankDeficient
        );

        // the message slot is cleared by a successful call
        assert_eq!(lsqopt_instance_generate(&spec(), &mut inst), LsqoptStatus::Ok);
        assert_eq!(lsqopt_last_error(ptr::null_mut(), 0), 0);
        lsqopt_instance_free(inst);
        lsqopt_instance_free(ptr::null_mut());

        let v = CStr::from_ptr(lsqopt_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/lsqopt.h")).unwrap();
    for name in [
        "lsqopt_instance_generate",
        "lsqopt_instance_from_data",
        "lsqopt_instance_load",
        "lsqopt_instance_save",
        "lsqopt_instance_free",
        "lsqopt_bounds",
        "lsqopt_run",
        "lsqopt_run_trace",
        "lsqopt_run_free",
        "lsqopt_last_error",
        "typedef struct LsqoptInstance LsqoptInstance;",
        "LSQOPT_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles and runs a C client against the static library.
#[test]
fn c_client_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("liblsqopt_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "lsqopt.h"

int main(void) {
    LsqoptProblemSpec spec = {LSQOPT_DECAY_ALGEBRAIC, 20.0, 1.0, 1.0, 1000, 5, 0.0, 7};
    LsqoptInstance *inst = NULL;
    if (lsqopt_instance_generate(&spec, &inst) != LSQOPT_STATUS_OK) return 1;
    LsqoptRunOptions opts = lsqopt_run_options_default();
    opts.batch_size = 500;
    LsqoptRun *run = NULL;
    if (lsqopt_run(inst, &opts, &run) != LSQOPT_STATUS_OK) return 2;
    LsqoptRunSummary s;
    lsqopt_run_summary(run, &s);
    printf("%lld\n", (long long)s.iters_to_converge);
    lsqopt_run_free(run);
    lsqopt_instance_free(inst);
    LsqoptInstance *none = NULL;
    if (lsqopt_instance_load("/nonexistent", &none) != LSQOPT_STATUS_IO) return 3;
    char msg[128];
    lsqopt_last_error(msg, sizeof msg);
    printf("%s\n", msg);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("client");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exit {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let iters: i64 = lines.next().unwrap().parse().unwrap();
    assert!(iters > 0);
    assert!(lines.next().unwrap().contains("/nonexistent"));
}
