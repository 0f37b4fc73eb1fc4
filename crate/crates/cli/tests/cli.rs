use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use torsion_core::io::ShapeFile;
use torsion_core::shape::rectangle;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_torsion"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

struct Shapes {
    _dir: tempfile::TempDir,
    disc: PathBuf,
    square: PathBuf,
}

fn shapes() -> Shapes {
    let dir = tempfile::tempdir().unwrap();
    let disc = dir.path().join("disc256.json");
    let square = dir.path().join("square.json");
    ShapeFile::Support { n: 256, h: vec![1.0; 256] }.save(&disc).unwrap();
    ShapeFile::from_polygon(&rectangle(1.0, 1.0).unwrap()).save(&square).unwrap();
    Shapes { _dir: dir, disc, square }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_disc_reports_j() {
    let sh = shapes();
    let o = run(&["eval", "--shape", s(&sh.disc)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let j = v["result"]["J"].as_f64().unwrap();
    assert!((j - 0.282_094_791_773_878_1).abs() <= 0.01 * 0.282_094_791_773_878_1, "{j}");
    assert!(v["version"].as_str().unwrap().starts_with("torsion "));
    assert_eq!(v["config"]["mesh"]["mesh_div"], 150.0);
}

#[test]
fn eval_key_order_is_stable() {
    let sh = shapes();
    let a = run(&["eval", "--shape", s(&sh.square), "--mesh-div", "30"]);
    let b = run(&["eval", "--shape", s(&sh.square), "--mesh-div", "30"]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let keys = ["\"shape_id\"", "\"measures\"", "\"g_max\"", "\"g_max_location\"", "\"J\"", "\"JP\"", "\"boundary_max\""];
    let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn check_square_passes() {
    let sh = shapes();
    let o = run(&["check", "--shape", s(&sh.square)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let checks = v["result"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|c| c["pass"] == true));
}

#[test]
fn render_view_box_fits_shape() {
    let sh = shapes();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.svg");
    let o = run(&["render", "--shape", s(&sh.square), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let svg = std::fs::read_to_string(&out).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<path").count(), 1);
    let vb = svg.split("viewBox=\"").nth(1).unwrap().split('"').next().unwrap();
    let nums: Vec<f64> = vb.split(' ').map(|t| t.parse().unwrap()).collect();
    // Unit square plus 5% per side keeps the aspect ratio 1.
    assert!((nums[2] / nums[3] - 1.0).abs() < 1e-6, "{vb}");

    let heat = dir.path().join("h.svg");
    let o = run(&["render", "--shape", s(&sh.square), "--out", s(&heat), "--heatmap", "--mesh-div", "10"]);
    assert_eq!(code(&o), 0);
    let svg = std::fs::read_to_string(&heat).unwrap();
    assert!(svg.matches("<polygon").count() > 50);
    assert!(svg.contains("id=\"gmax\"") && svg.contains("J = "));
}

#[test]
fn solve_writes_dumps_and_contour() {
    let sh = shapes();
    let dir = tempfile::tempdir().unwrap();
    let (sol, mesh, contour) = (dir.path().join("u.txt"), dir.path().join("m.txt"), dir.path().join("c.json"));
    let o = run(&[
        "solve", "--shape", s(&sh.square), "--mesh-div", "20", "--out", s(&sol), "--mesh-out", s(&mesh),
        "--contour-level", "0.5", "--contour-out", s(&contour),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let nodes = v["result"]["node_count"].as_u64().unwrap() as usize;
    assert_eq!(std::fs::read_to_string(&sol).unwrap().lines().count(), nodes + 1);
    let m = std::fs::read_to_string(&mesh).unwrap();
    assert_eq!(m.lines().filter(|l| l.starts_with("v ")).count(), nodes);
    assert!(m.lines().any(|l| l.starts_with("t ")));
    match ShapeFile::load(&contour).unwrap() {
        ShapeFile::Polygon { vertices } => assert!(vertices.len() >= 8),
        other => panic!("{other:?}"),
    }
}

#[test]
fn validate_auto5() {
    let sh = shapes();
    let o = run(&["validate", "--shape", s(&sh.square), "--points", "auto5", "--walks", "4000", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let pts = v["result"]["points"].as_array().unwrap();
    assert_eq!(pts.len(), 5);
    assert!(pts.iter().all(|p| p["wos"]["stderr"].as_f64().unwrap() > 0.0 && p["fem_u"].as_f64().unwrap() > 0.0));
    let again = run(&["validate", "--shape", s(&sh.square), "--points", "auto5", "--walks", "4000", "--seed", "3"]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn optimize_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let o = run(&[
        "optimize", "--objective", "JP", "--n-start", "16", "--n-angles", "16", "--max-evals", "900", "--restarts",
        "1", "--search-mesh-div", "20", "--mesh-div", "25", "--samples", "64", "--out", s(&run_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["best_shape.json", "report.json", "history.csv", "best_shape.svg"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["objective"], "JP");
    let jp = report["result"]["report"]["JP"].as_f64().unwrap();
    assert!(jp > 0.0796, "{jp}");
    let hist = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert!(hist.starts_with("eval,objective,best"));
    assert!(ShapeFile::load(run_dir.join("best_shape.json")).unwrap().to_polygon().is_ok());
}

#[test]
fn usage_errors_exit_one() {
    let sh = shapes();
    assert_eq!(code(&run(&["eval"])), 1);
    assert_eq!(code(&run(&["eval", "--shape", "/nonexistent.json"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["optimize", "--n-angles", "100"])), 1);
    assert_eq!(code(&run(&["optimize", "--objective", "K"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"unknown_key": 1}"#).unwrap();
    assert_eq!(code(&run(&["eval", "--shape", s(&sh.square), "--config", s(&cfg)])), 1);
    let o = bin().args(["eval", "--shape", s(&sh.square)]).env("TORSION_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["eval", "--shape", s(&sh.square), "--h", "-1"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn config_file_values_are_used_and_flags_override() {
    let sh = shapes();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, format!(r#"{{"shape": {:?}, "mesh": {{"mesh_div": 20}}}}"#, s(&sh.square))).unwrap();
    let v = json(&run(&["eval", "--config", s(&cfg)]));
    assert_eq!(v["config"]["mesh"]["mesh_div"], 20.0);
    let v = json(&run(&["eval", "--config", s(&cfg), "--mesh-div", "25"]));
    assert_eq!(v["config"]["mesh"]["mesh_div"], 25.0);
}

#[test]
fn numerical_failure_exits_two() {
    let sh = shapes();
    // Too coarse for the boundary probe depths to stay inside the mesh.
    let o = run(&["eval", "--shape", s(&sh.square), "--mesh-div", "3"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    // Coarse contours are visibly non-convex, so a check fails.
    let o = run(&["check", "--shape", s(&sh.square), "--mesh-div", "8"]);
    assert_eq!(code(&o), 2);
    assert_eq!(json(&o)["result"]["all_pass"], false);
}

#[test]
fn thread_cap_gives_identical_output() {
    let sh = shapes();
    let a = bin().args(["eval", "--shape", s(&sh.square), "--mesh-div", "30"]).env("TORSION_THREADS", "1").output().unwrap();
    let b = run(&["eval", "--shape", s(&sh.square), "--mesh-div", "30"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}
