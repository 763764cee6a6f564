mod common;

use std::fs;

use common::small_config;
use hyperunmix::config::{PsiSource, RunConfig};
use hyperunmix::io;
use hyperunmix::pipeline::run;
use hyperunmix::tensor::Tensor4;
use hyperunmix::unmixing::{fcls, unmix};

#[test]
fn rerun_from_manifest_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    run(&small_config(&first)).unwrap();
    let mut cfg = RunConfig::load(first.join("manifest.txt")).unwrap();
    let second = dir.path().join("second");
    cfg.output_dir = second.clone();
    run(&cfg).unwrap();
    let a = fs::read(first.join("metrics.csv")).unwrap();
    let b = fs::read(second.join("metrics.csv")).unwrap();
    assert_eq!(a, b);
    for name in ["abundances.hsten", "psi.hsten", "endmembers.hsten"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn ones_mode_matches_direct_call() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.psi = PsiSource::Ones;
    cfg.dtype = io::Dtype::F64;
    let rep = run(&cfg).unwrap();
    let ones = Tensor4::ones([10, 9, 16, 3]);
    let baseline = fcls(&rep.cube, &rep.m0).unwrap();
    let direct = unmix(&rep.cube, &rep.m0, &ones, &cfg.unmix, Some(&baseline)).unwrap();
    assert_eq!(rep.abundances, direct.abundances);
    let stored = io::abundances_from_tensor(&io::read_tensor(dir.path().join("abundances.hsten")).unwrap()).unwrap();
    assert_eq!(stored, direct.abundances);
}

#[test]
fn loaded_cube_runs_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    run(&small_config(&scene)).unwrap();
    let mut cfg = small_config(&dir.path().join("real"));
    cfg.cube = Some(scene.join("cube.hscube"));
    cfg.m0 = Some(scene.join("m0.csv"));
    let rep = run(&cfg).unwrap();
    assert!(rep.metrics.is_empty());
    assert!(!dir.path().join("real/metrics.csv").exists());
    assert!(rep.abundances.is_feasible());
}

#[test]
fn traces_never_increase() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run(&small_config(dir.path())).unwrap();
    for w in rep.variability_trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9));
    }
    for w in rep.unmix_trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-8));
    }
}
