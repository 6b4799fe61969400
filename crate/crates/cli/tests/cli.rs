use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carkit::io;
use carkit::Matrix;

fn carkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn f64s(&self, name: &str, v: &[f64]) -> PathBuf {
        let path = self.path(name);
        io::write_f64_vec(&path, v).unwrap();
        path
    }

    fn mask(&self, name: &str, v: &[bool]) -> PathBuf {
        let path = self.path(name);
        io::write_mask(&path, v).unwrap();
        path
    }
}

#[test]
fn eval_identity_prints_zeros() {
    let fx = Fixture::new();
    let gt = fx.f64s("gt.npy", &[1.0, 2.0, 3.0]);
    let mask = fx.mask("m.npy", &[true, true, true]);
    let o = carkit(&["eval", "--pred", p(&gt), "--gt", p(&gt), "--mask", p(&mask), "--csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "rmse,abs_rel,sq_rel,rmse_log,log10,delta1,delta2,delta3,n_valid");
    assert_eq!(
        lines[1],
        "0.000000,0.000000,0.000000,0.000000,0.000000,1.000000,1.000000,1.000000,3"
    );
}

#[test]
fn eval_json_and_full_precision_file() {
    let fx = Fixture::new();
    let gt = fx.f64s("gt.npy", &[2.0, 4.0]);
    let pred = fx.f64s("pred.npy", &[1.0, 4.8]);
    let out = fx.path("m.json");
    let o = carkit(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--json", "-o", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("\"rmse\": 0.905539"));
    let m: carkit::metrics::DepthMetrics = io::read_json(&out).unwrap();
    assert_eq!(m.rmse, 0.82f64.sqrt());
}

#[test]
fn sparsify_anti_oracle_ause() {
    let fx = Fixture::new();
    let gt = fx.f64s("gt.npy", &[10.0; 4]);
    let pred = fx.f64s("pred.npy", &[14.0, 7.0, 12.0, 9.0]);
    let u = fx.f64s("u.npy", &[-4.0, -3.0, -2.0, -1.0]);
    let curve = fx.path("curve.csv");
    let o = carkit(&[
        "sparsify", "--pred", p(&pred), "--gt", p(&gt), "--uncert", p(&u), "--metric", "rmse", "--step", "0.25", "-o",
        p(&curve), "--ause",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "1.475819");
    let csv = fs::read_to_string(&curve).unwrap();
    assert_eq!(csv.lines().next(), Some("fraction,value"));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().last().unwrap().starts_with("0.75,4"));
}

#[test]
fn gradcheck_all_passes() {
    let o = carkit(&["gradcheck", "--loss", "all", "--points", "20"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    for name in ["ce", "wce", "mbce", "ordinal", "smoothl1", "si"] {
        assert!(out.lines().any(|l| l.starts_with(name) && l.ends_with("ok")), "{out}");
    }
}

#[test]
fn bins_encode_decode_pipeline() {
    let fx = Fixture::new();
    let table = fx.path("t.json");
    let o = carkit(&["bins", "--a", "1", "--b", "80", "--k", "16", "-o", p(&table)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(io::read_table(&table).unwrap().k(), 16);

    let gt = fx.f64s("gt.npy", &[1.5, 7.0, 30.0, 79.0]);
    let labels = fx.path("labels.npy");
    let o = carkit(&["encode", "--table", p(&table), "--scheme", "onehot", "--gt", p(&gt), "-o", p(&labels)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = io::read_matrix(&labels).unwrap();
    assert_eq!(m.shape(), (4, 16));

    let depth = fx.path("depth.npy");
    let o = carkit(&[
        "decode", "--table", p(&table), "--probs", p(&labels), "--method", "argmax", "-o", p(&depth), "--pgm",
        p(&fx.path("d.pgm")), "--width", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = io::read_depth_map(&depth, None).unwrap();
    let q = (80f64).ln() / 16.0;
    for (a, b) in d.values.iter().zip([1.5f64, 7.0, 30.0, 79.0]) {
        assert!((a.ln() - b.ln()).abs() <= q / 2.0 + 1e-12);
    }
    assert!(fs::read(fx.path("d.pgm")).unwrap().starts_with(b"P5\n2 2\n65535\n"));

    let u = fx.path("u.npy");
    let o = carkit(&[
        "uncert", "--method", "e-dist", "--table", p(&table), "--probs", p(&labels), "--depth", p(&depth), "-o",
        p(&u),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(io::read_f64_vec(&u).unwrap().iter().all(|&v| v.abs() < 1e-9));
}

#[test]
fn adaptive_bins_from_json_widths() {
    let fx = Fixture::new();
    let w = fx.path("w.json");
    fs::write(&w, "[1, 1, 1, 1]").unwrap();
    let table = fx.path("t.json");
    let o = carkit(&["bins", "--a", "0", "--b", "80", "--k", "4", "--adaptive-widths", p(&w), "-o", p(&table)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(io::read_table(&table).unwrap().values(), &[20.0, 40.0, 60.0, 80.0]);
    let o = carkit(&["bins", "--a", "0", "--b", "80", "--k", "3", "--adaptive-widths", p(&w), "-o", p(&table)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ensemble_variance_from_repeated_depths() {
    let fx = Fixture::new();
    let a = fx.f64s("a.npy", &[2.0, 1.0]);
    let b = fx.f64s("b.npy", &[4.0, 1.0]);
    let u = fx.path("u.npy");
    let o = carkit(&["uncert", "--method", "variance", "--depth", p(&a), "--depth", p(&b), "-o", p(&u)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(io::read_f64_vec(&u).unwrap(), vec![1.0, 0.0]);
    let o = carkit(&["uncert", "--method", "variance", "--depth", p(&a), "-o", p(&u)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("at least 2"));
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    let missing = fx.path("nope.npy");
    let o = carkit(&["eval", "--pred", p(&missing), "--gt", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));

    let zip = fx.path("bad.npy");
    fs::write(&zip, b"PK\x03\x04 not an array").unwrap();
    let o = carkit(&["eval", "--pred", p(&zip), "--gt", p(&zip)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"));

    let o = carkit(&["bins", "--a", "1", "--k", "4", "-o", "x.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--b"), "{err}");
    assert!(err.contains("Usage"), "{err}");

    let o = carkit(&["bins", "--a", "5", "--b", "1", "--k", "4", "-o", p(&fx.path("t.json"))]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(carkit(&["--help"]).status.code(), Some(0));
}

#[test]
fn big_endian_arrays_are_refused_by_name() {
    let fx = Fixture::new();
    let path = fx.f64s("be.npy", &[1.0]);
    let mut bytes = fs::read(&path).unwrap();
    let at = bytes.windows(3).position(|w| w == b"<f8").unwrap();
    bytes[at] = b'>';
    fs::write(&path, bytes).unwrap();
    let o = carkit(&["eval", "--pred", p(&path), "--gt", p(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(">f8"));
}

#[test]
fn subcommands_are_idempotent() {
    let fx = Fixture::new();
    let table = fx.path("t.json");
    assert!(carkit(&["bins", "--a", "1", "--b", "80", "--k", "8", "-o", p(&table)]).status.success());
    let probs = fx.path("p.npy");
    let rows: Vec<Vec<f64>> = (0..5).map(|j| (0..8).map(|p| if p == j { 0.65 } else { 0.05 }).collect()).collect();
    io::write_matrix(&probs, &Matrix::from_rows(&rows).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = fx.path(&format!("d{run}.npy"));
        let o = carkit(&["decode", "--table", p(&table), "--probs", p(&probs), "--method", "soft", "-o", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn synth_is_reproducible_across_thread_counts() {
    let fx = Fixture::new();
    let cfg = fx.path("cfg.json");
    fs::write(
        &cfg,
        r#"{"scene": {"width": 12, "height": 12}, "epochs": 15, "seeds": [0, 1],
            "strategies": ["yang-smo1-mbce", "dorn-ordinal", {"name": "adabins-si"}]}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let sub = fx.path(threads);
        fs::create_dir(&sub).unwrap();
        let out = sub.join("report.json");
        let o = carkit(&["synth", "--config", p(&cfg), "-o", p(&out), "--threads", threads]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(sub.join("dorn-ordinal_seed1_loss.csv").exists());
        reports.push(fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    // the embedded config reproduces the report
    let report: carkit::synth::BenchmarkReport = io::read_json(fx.path("1").join("report.json")).unwrap();
    let embedded = fx.path("embedded.json");
    io::write_json(&embedded, &report.config).unwrap();
    let again = fx.path("again.json");
    let o = carkit(&["synth", "--config", p(&embedded), "-o", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&again).unwrap(), reports[0]);
}
