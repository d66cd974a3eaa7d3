use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn icaoct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icaoct"))
        .args(args)
        .env("ICAOCT_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = icaoct(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn estimate_gvd_prints_the_bk7_value() {
    let out = ok(&["estimate-gvd", "--lfront", "220", "--lobj", "700", "--bfront", "2000", "--bseg2", "-850"]);
    assert_eq!(out.trim(), "45.71");
}

#[test]
fn unknown_flags_and_missing_values_are_usage_errors() {
    assert_eq!(icaoct(&["estimate-gvd", "--lfront", "1"]).status.code(), Some(2));
    assert_eq!(icaoct(&["stack", "--bogus"]).status.code(), Some(2));
    assert_eq!(icaoct(&[]).status.code(), Some(2));
}

#[test]
fn missing_input_is_named_and_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.pgm");
    let missing = dir.path().join("nope.csv");
    let r = icaoct(&["stack", "--in", p(&missing), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nope.csv"));
    assert!(!out.exists());
}

#[test]
fn simulate_stack_filter_pipeline_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let sim = [
        "simulate", "--iface", "360:0.1", "--iface", "620:0.1", "--region", "360:0", "--region", "260:2500",
        "--autocorr",
    ];
    let mut a = sim.to_vec();
    let (s1, s2, prof) = (d("s1.csv"), d("s2.csv"), d("profile.csv"));
    a.extend(["--out", p(&s1), "--profile", p(&prof)]);
    ok(&a);
    let mut b = sim.to_vec();
    b.extend(["--out", p(&s2)]);
    ok(&b);
    assert_eq!(fs::read(&s1).unwrap(), fs::read(&s2).unwrap());
    let spectrum = fs::read_to_string(&s1).unwrap();
    assert!(spectrum.starts_with("sample_index,intensity\n"));
    assert_eq!(spectrum.lines().count(), 1025);

    let (pgm, raw, ascan) = (d("stack.pgm"), d("stack.f32"), d("ascan.csv"));
    ok(&["stack", "--in", p(&s1), "--out", p(&pgm), "--raw", p(&raw), "--ascan", p(&ascan)]);
    let bytes = fs::read(&pgm).unwrap();
    let header = b"P5\n1024 50\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 50 * 1024);
    assert_eq!(fs::metadata(&raw).unwrap().len(), 50 * 1024 * 4);
    assert_eq!(fs::read_to_string(ascan).unwrap().lines().count(), 1025);

    let filtered = d("filtered.csv");
    ok(&["filter-ac", "--in", p(&s1), "--zero", "240:280", "--out", p(&filtered)]);
    assert_eq!(fs::read_to_string(filtered).unwrap().lines().count(), 1025);
}

#[test]
fn dataset_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.icad"), dir.path().join("b.icad"));
    ok(&["dataset", "--count", "16", "--base-seed", "9", "--preset", "desk", "--threads", "1", "--out", p(&a)]);
    ok(&["dataset", "--count", "16", "--base-seed", "9", "--preset", "desk", "--threads", "4", "--out", p(&b)]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn train_predict_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let (data, model, hist, pred) = (d("d.icad"), d("m.icam"), d("h.csv"), d("pred.csv"));
    ok(&["dataset", "--count", "6", "--base-seed", "1", "--preset", "desk", "--out", p(&data)]);
    ok(&[
        "train", "--data", p(&data), "--epochs", "2", "--seed", "3", "--out", p(&model), "--history", p(&hist),
    ]);
    let history = fs::read_to_string(&hist).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,seconds\n"));
    assert_eq!(history.lines().count(), 3);

    ok(&["predict", "--model", p(&model), "--in", p(&data), "--out", p(&pred)]);
    let text = fs::read_to_string(&pred).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "pixel,u0,u1,u2,u3,u4,u5");
    assert_eq!(lines.count(), 128);

    let bscan = d("bscan");
    fs::create_dir(&bscan).unwrap();
    for i in 0..3 {
        let spec = bscan.join(format!("pos{i}.csv"));
        let pos = format!("{}:0.1", 40 + 10 * i);
        ok(&[
            "simulate", "--samples", "128", "--iface", &pos, "--iface", "100:0.1", "--region",
            &format!("{}:0", 40 + 10 * i), "--region", &format!("{}:1500", 60 - 10 * i), "--out", p(&spec),
        ]);
    }
    let map = d("map.pgm");
    ok(&["map", "--bscan-dir", p(&bscan), "--model", p(&model), "--out", p(&map)]);
    let bytes = fs::read(&map).unwrap();
    assert!(bytes.starts_with(b"P5\n128 3\n255\n"));
    assert_eq!(fs::read_to_string(d("map.csv")).unwrap().lines().count(), 4);
}
