use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinr::checkpoint::load_field;
use spinr::dataset::MeasurementSet;
use spinr::volume::Volume;

const PHANTOM: &str = r#"{
  "primitives": [
    {"type": "point", "position": [0.02, -0.01, 0.0], "sigma": 1.0},
    {"type": "sphere-shell", "center": [-0.03, 0.02, 0.01], "radius": 0.02, "sigma": 0.5, "count": 50}
  ],
  "bounds": {"min_corner": [-0.06, -0.06, -0.06], "max_corner": [0.06, 0.06, 0.06]}
}"#;

const APERTURE: &str = r#"{"radius": 0.2, "z_min": -0.03, "z_max": 0.03, "n_z": 2, "n_theta": 12}"#;

fn spinr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = spinr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn err_class(args: &[&str]) -> String {
    let out = spinr(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    let start = stderr.find("error[").expect("classed error line") + 6;
    stderr[start..start + stderr[start..].find(']').unwrap()].to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Files {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Files {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("phantom.json"), PHANTOM).unwrap();
        std::fs::write(root.join("aperture.json"), APERTURE).unwrap();
        Files { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn simulate(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(out);
        let (ph, ap) = (self.path("phantom.json"), self.path("aperture.json"));
        let mut args = vec!["simulate", "--phantom", s(&ph), "--aperture", s(&ap), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn simulate_is_byte_reproducible() {
    let f = Files::new();
    let a = f.simulate("a.spnr", &["--noise", "1e-6", "--seed", "9"]);
    let b = f.simulate("b.spnr", &["--noise", "1e-6", "--seed", "9"]);
    let c = f.simulate("c.spnr", &["--noise", "1e-6", "--seed", "10"]);
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    let set = MeasurementSet::from_bytes(&a).unwrap();
    assert_eq!(set.len(), 24);
    assert_eq!(set.seed, 9);
}

#[test]
fn fit_export_eval_pipeline() {
    let f = Files::new();
    let data = f.simulate("d.spnr", &["--f64-payload"]);
    let (ckpt, log) = (f.path("f.ckpt"), f.path("train.jsonl"));
    ok(&[
        "--threads", "1", "fit", "--data", s(&data), "--field", "grid", "--field-config", r#"{"resolution": 12}"#,
        "--epochs", "2", "--batch", "8", "--quadrature", "12", "--seed", "3", "--out", s(&ckpt), "--log", s(&log),
    ]);
    // 24 poses in batches of 8, two epochs
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 6);
    assert_eq!(load_field(&ckpt).unwrap().kind(), "grid");

    let (pred, bp, gt, report) = (f.path("pred.bin"), f.path("bp.bin"), f.path("gt.bin"), f.path("r.json"));
    ok(&["export-volume", "--ckpt", s(&ckpt), "--grid", "16", "--out", s(&pred)]);
    ok(&["backproject", "--data", s(&data), "--grid", "16", "--out", s(&bp)]);
    ok(&["phantom-volume", "--phantom", s(&f.path("phantom.json")), "--grid", "16", "--out", s(&gt)]);
    assert_eq!(Volume::load(&pred).unwrap().grid.dims, [16, 16, 16]);

    let out = ok(&["eval", "--pred", s(&bp), "--gt", s(&gt), "--report", s(&report)]);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["iou", "chamfer_m", "hausdorff_m", "psnr_db", "ssim"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap(), r);
}

#[test]
fn errors_carry_their_class() {
    let f = Files::new();
    let data = f.simulate("d.spnr", &[]);
    let bytes = std::fs::read(&data).unwrap();
    let cut = f.path("cut.spnr");
    std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
    let out = f.path("x");
    assert_eq!(err_class(&["backproject", "--data", s(&cut), "--out", s(&out)]), "truncated");

    let bad = f.path("bad.spnr");
    std::fs::write(&bad, b"NOPE0000000000000000").unwrap();
    assert_eq!(err_class(&["backproject", "--data", s(&bad), "--out", s(&out)]), "bad_magic");

    assert_eq!(
        err_class(&["fit", "--data", s(&data), "--mode", "magic", "--epochs", "1", "--out", s(&out)]),
        "unknown_strategy"
    );
    // tf-ts needs the full spectrum
    assert_eq!(
        err_class(&["fit", "--data", s(&data), "--mode", "tf-ts", "--epochs", "1", "--out", s(&out)]),
        "invalid_config"
    );

    let far = f.path("far.json");
    std::fs::write(&far, APERTURE.replace("0.2,", "30.0,")).unwrap();
    let ph = f.path("phantom.json");
    assert_eq!(
        err_class(&["simulate", "--phantom", s(&ph), "--aperture", s(&far), "--out", s(&out)]),
        "beyond_unambiguous_range"
    );
}

#[test]
fn bench_and_leakage_write_csv() {
    let f = Files::new();
    let csv = f.path("bench.csv");
    let out = ok(&["bench", "--counts", "1e1,20", "--reps", "2", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "model,count,reps,mean_ms,std_ms,ops_per_call");
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
    assert_eq!(err_class(&["bench", "--counts", "0", "--out", s(&csv)]), "invalid_config");

    let leak = f.path("leak.csv");
    ok(&["leakage", "--alpha", "2.5", "--n", "16", "--out", s(&leak)]);
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&leak)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 16);
    for r in &rows {
        assert!((r[3] - r[4]).abs() < 1e-12, "magnitude equals the envelope");
    }
}
