use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otmorph::io::{write_idx, write_pgm, IdxDataset};
use otmorph::{normalize_to_measure, GridShape};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_otmorph");
const SIDE: usize = 10;

fn otmorph(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("spawn otmorph")
}

fn ok(args: &[&str]) -> String {
    let out = otmorph(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    otmorph(args).status.code().expect("exit code")
}

/// A soft blob centred at `(r, c)` on a `SIDE × SIDE` grid.
fn blob(dir: &Path, name: &str, r: f64, c: f64, side: usize) -> String {
    let shape = GridShape::new(side, side).unwrap();
    let px: Vec<f64> = (0..shape.len())
        .map(|i| {
            let (y, x) = shape.coords(i);
            let d2 = (y as f64 - r).powi(2) + (x as f64 - c).powi(2);
            (-d2 / 3.0).exp()
        })
        .collect();
    let m = normalize_to_measure(&px, shape).unwrap();
    let path = dir.join(name);
    write_pgm(&m, &path, 1.0).unwrap();
    path.to_str().unwrap().to_string()
}

/// Blobs at random-ish positions, for dictionary learning.
fn blob_idx(dir: &Path) -> String {
    let shape = GridShape::new(SIDE, SIDE).unwrap();
    let count = 60;
    let mut pixels = Vec::with_capacity(count * shape.len());
    for k in 0..count {
        let (r, c) = ((k * 7 % 9) as f64 + 0.5, (k * 5 % 9) as f64 + 0.5);
        for i in 0..shape.len() {
            let (y, x) = shape.coords(i);
            let d2 = (y as f64 - r).powi(2) + (x as f64 - c).powi(2);
            pixels.push((255.0 * (-d2 / 3.0).exp()).round() as u8);
        }
    }
    let path = dir.join("blobs.idx");
    write_idx(&IdxDataset::new(count, shape, pixels).unwrap(), &path).unwrap();
    path.to_str().unwrap().to_string()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_str().unwrap().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

struct Fixture {
    dir: TempDir,
    a: String,
    b: String,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let a = blob(dir.path(), "a.pgm", 2.0, 2.0, SIDE);
    let b = blob(dir.path(), "b.pgm", 7.0, 6.0, SIDE);
    Fixture { dir, a, b }
}

impl Fixture {
    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }
}

/// The test-only echo projector is built by the core crate; find it next to
/// our own binary, or build it into a separate target directory when this
/// crate is tested on its own.
fn echo_binary() -> PathBuf {
    let dir = Path::new(BIN).parent().unwrap();
    let name = format!("otproj-echo{}", std::env::consts::EXE_SUFFIX);
    if dir.join(&name).exists() {
        return dir.join(name);
    }
    let target = dir.parent().unwrap().join("cli-tests");
    let release = dir.ends_with("release");
    let mut build = Command::new(env!("CARGO"));
    build
        .args([
            "build",
            "-p",
            "otmorph-core",
            "--bin",
            "otproj-echo",
            "--target-dir",
        ])
        .arg(&target);
    if release {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success());
    target
        .join(if release { "release" } else { "debug" })
        .join(name)
}

#[test]
fn morph_writes_endpoints_frames_and_metrics() {
    let fx = fixture();
    let out = fx.path("run");
    let stdout = ok(&[
        "morph",
        "--a",
        &fx.a,
        "--b",
        &fx.b,
        "--frames",
        "3",
        "--out-dir",
        &out,
    ]);
    let names: Vec<String> = files(Path::new(&out)).into_iter().map(|f| f.0).collect();
    assert_eq!(
        names,
        [
            "frame_000.pgm",
            "frame_001.pgm",
            "frame_002.pgm",
            "frame_003.pgm",
            "frame_004.pgm",
            "metrics.txt"
        ]
    );
    let metrics = std::fs::read_to_string(Path::new(&out).join("metrics.txt")).unwrap();
    assert_eq!(stdout, metrics);
    let keys: Vec<&str> = metrics
        .lines()
        .map(|l| l.split('=').next().unwrap())
        .collect();
    assert_eq!(
        keys,
        [
            "regularity",
            "total_distance",
            "manifold_distance",
            "per_step_distances",
            "transport_converged"
        ]
    );
    let steps = metrics.lines().nth(3).unwrap();
    assert_eq!(steps.split(',').count(), 4);
}

#[test]
fn evaluate_reproduces_the_morph_metrics() {
    let fx = fixture();
    let out = fx.path("run");
    let common = ["--seed", "7", "--epsilon", "0.01"];
    let mut args = vec![
        "morph",
        "--a",
        &fx.a,
        "--b",
        &fx.b,
        "--frames",
        "2",
        "--out-dir",
        &out,
    ];
    args.extend(common);
    ok(&args);
    let mut args = vec!["evaluate", "--frames", &out];
    args.extend(common);
    let printed = ok(&args);
    let metrics = std::fs::read_to_string(Path::new(&out).join("metrics.txt")).unwrap();
    assert_eq!(printed, metrics);
}

#[test]
fn self_distance_is_within_the_entropic_bias() {
    let fx = fixture();
    for eps in [0.002, 0.01] {
        let e = eps.to_string();
        let text = ok(&["distance", "--a", &fx.a, "--b", &fx.a, "--epsilon", &e]);
        let value = |key: &str| -> f64 {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{key}=")))
                .unwrap()
                .parse()
                .unwrap()
        };
        let bound = 2.0 * eps * ((SIDE * SIDE) as f64).ln();
        assert!(value("sharp") >= 0.0 && value("sharp") <= bound, "{text}");
        assert!(value("regularized") <= bound, "{text}");
        assert!(text.contains("converged=true"));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let fx = fixture();
    let idx = blob_idx(fx.dir.path());
    let (d1, d2) = (fx.path("d1.dict"), fx.path("d2.dict"));
    for d in [&d1, &d2] {
        ok(&[
            "learn-dict",
            "--idx",
            &idx,
            "--atoms",
            "16",
            "--sparsity",
            "3",
            "--epochs",
            "3",
            "--seed",
            "4",
            "--out",
            d,
        ]);
    }
    assert_eq!(std::fs::read(&d1).unwrap(), std::fs::read(&d2).unwrap());

    let prior = format!("sparse:{d1}");
    let run = |out: &str, jobs: &str| {
        ok(&[
            "morph",
            "--a",
            &fx.a,
            "--b",
            &fx.b,
            "--frames",
            "3",
            "--prior",
            &prior,
            "--sparsity",
            "3",
            "--fixed-iters",
            "2",
            "--seed",
            "11",
            "--jobs",
            jobs,
            "--out-dir",
            out,
        ])
    };
    let (r1, r2, r3) = (fx.path("r1"), fx.path("r2"), fx.path("r3"));
    run(&r1, "1");
    run(&r2, "1");
    run(&r3, "3");
    let first = files(Path::new(&r1));
    assert_eq!(first, files(Path::new(&r2)));
    assert_eq!(first, files(Path::new(&r3)));

    let c = fx.path("c.pgm");
    let d = blob(fx.dir.path(), "d.pgm", 8.0, 1.0, SIDE);
    blob(fx.dir.path(), "c.pgm", 1.0, 8.0, SIDE);
    let (l1, l2) = (fx.path("l1"), fx.path("l2"));
    for out in [&l1, &l2] {
        ok(&[
            "barycenter4",
            "--images",
            &fx.a,
            &fx.b,
            &c,
            &d,
            "--steps",
            "3",
            "--prior",
            &prior,
            "--sparsity",
            "3",
            "--fixed-iters",
            "1",
            "--out-dir",
            out,
        ]);
    }
    let lattice = files(Path::new(&l1));
    assert_eq!(lattice.len(), 9);
    assert_eq!(lattice, files(Path::new(&l2)));
}

#[test]
fn echo_projector_matches_the_identity_prior() {
    let fx = fixture();
    let echo = echo_binary();
    let external = format!("external:{}", echo.display());
    let (plain, piped) = (fx.path("plain"), fx.path("piped"));
    let base = [
        "morph",
        "--a",
        &fx.a,
        "--b",
        &fx.b,
        "--frames",
        "2",
        "--fixed-iters",
        "2",
    ];
    let mut args = base.to_vec();
    args.extend(["--prior", "none", "--out-dir", &plain]);
    ok(&args);
    let mut args = base.to_vec();
    args.extend(["--prior", &external, "--out-dir", &piped]);
    ok(&args);
    assert_eq!(files(Path::new(&plain)), files(Path::new(&piped)));

    let broken = format!("external:{} short", echo.display());
    let broken_out = fx.path("broken");
    let mut args = base.to_vec();
    args.extend(["--prior", &broken, "--out-dir", &broken_out]);
    assert_eq!(code(&args), 4);
}

#[test]
fn bad_usage_exits_with_two() {
    let fx = fixture();
    let out = fx.path("out");
    let morph = |extra: &[&str]| {
        let mut args = vec!["morph", "--a", &fx.a, "--b", &fx.b, "--out-dir", &out];
        args.extend(extra);
        code(&args)
    };
    assert_eq!(morph(&["--prior", "gan"]), 2);
    assert_eq!(morph(&["--epsilon=-1"]), 2);
    assert_eq!(morph(&["--frames", "0"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    let config = fx.path("run.toml");
    std::fs::write(&config, "epsilon = 0.01\nlearning_rate = 3\n").unwrap();
    assert_eq!(morph(&["--config", &config]), 2);

    let small = blob(fx.dir.path(), "small.pgm", 1.0, 1.0, 4);
    assert_eq!(code(&["distance", "--a", &fx.a, "--b", &small]), 2);

    let big = blob(fx.dir.path(), "big.pgm", 30.0, 30.0, 65);
    assert_eq!(code(&["distance", "--a", &big, "--b", &big]), 2);
    assert_eq!(
        code(&[
            "distance",
            "--a",
            &big,
            "--b",
            &big,
            "--allow-large",
            "--epsilon",
            "0.05"
        ]),
        0
    );
}

#[test]
fn missing_and_corrupt_files_exit_with_three() {
    let fx = fixture();
    let missing = fx.path("nope.pgm");
    assert_eq!(code(&["distance", "--a", &missing, "--b", &fx.a]), 3);
    let junk = fx.path("junk.idx");
    std::fs::write(&junk, [0u8, 0, 8, 1, 0, 0]).unwrap();
    assert_eq!(
        code(&["learn-dict", "--idx", &junk, "--out", &fx.path("x.dict")]),
        3
    );
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let fx = fixture();
    let config = fx.path("run.toml");
    std::fs::write(&config, "epsilon = 0.01\n").unwrap();
    let from_file = ok(&["distance", "--a", &fx.a, "--b", &fx.b, "--config", &config]);
    let direct = ok(&["distance", "--a", &fx.a, "--b", &fx.b, "--epsilon", "0.01"]);
    assert_eq!(from_file, direct);
    let overridden = ok(&[
        "distance",
        "--a",
        &fx.a,
        "--b",
        &fx.b,
        "--config",
        &config,
        "--epsilon",
        "0.02",
    ]);
    assert_ne!(overridden, direct);
}
