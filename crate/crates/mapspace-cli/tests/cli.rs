//! End-to-end tests of the `mapspace` binary and the bundled data files.

use mapspace::workloads::{self, Conv2dParams};
use mapspace::{AcceleratorConfig, LoopNest};
use mapspace_cli::{parse_accel_file, parse_workload_file};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TINY_GEMM: &str = "\
[[operator]]
kind = \"gemm\"
name = \"g8\"
m = 8
n = 8
k = 8
";

#[test]
fn bundled_workloads_match_tables() {
    let dir = data_dir().join("workloads");
    let load = |file: &str| -> Vec<LoopNest> {
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        parse_workload_file(&text).unwrap()
    };

    let gemm: Vec<LoopNest> = workloads::gemm_table()
        .iter()
        .map(|p| workloads::make_gemm(p).unwrap())
        .collect();
    assert_eq!(load("gemm.toml"), gemm);

    let mlp: Vec<LoopNest> = workloads::mlp_table()
        .iter()
        .map(|(n, i, o)| workloads::make_mlp(n.clone(), *i, *o, 1).unwrap())
        .collect();
    assert_eq!(load("mlp.toml"), mlp);

    let lstm: Vec<LoopNest> = workloads::lstm_table()
        .iter()
        .map(|(n, e, b)| workloads::lstm_to_gemm(n.clone(), *e, *b).unwrap())
        .collect();
    assert_eq!(load("lstm.toml"), lstm);

    let models: [(&str, Vec<Conv2dParams>); 4] = [
        ("alexnet.toml", workloads::alexnet()),
        ("vgg16.toml", workloads::vgg16()),
        ("resnet50.toml", workloads::resnet50()),
        ("mobilenet_v2.toml", workloads::mobilenet_v2()),
    ];
    for (file, layers) in models {
        let want: Vec<LoopNest> =
            layers.iter().map(|p| workloads::make_conv2d(p).unwrap()).collect();
        assert_eq!(load(file), want, "{file}");
    }
}

#[test]
fn bundled_accelerators_match_presets() {
    let dir = data_dir().join("accelerators");
    for preset in ["p1", "p2"] {
        let text = std::fs::read_to_string(dir.join(format!("{preset}.toml"))).unwrap();
        let parsed = parse_accel_file(&text, preset).unwrap();
        assert_eq!(parsed, AcceleratorConfig::preset(preset).unwrap(), "{preset}");
    }
}

#[test]
fn roofline_reports_table_peaks() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    for (accel, gops) in [("p1", "67.2"), ("p2", "409.6")] {
        let out = bin(&["roofline", "--workload", w.to_str().unwrap(), "--accel", accel]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(
            stdout(&out).contains(&format!("peak {gops} GOPS")),
            "{accel}: {}",
            stdout(&out)
        );
    }
}

#[test]
fn check_flags_multicell_lstm_rule2() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(
        tmp.path(),
        "w.toml",
        "[[operator]]\nkind = \"lstm\"\nname = \"lstm_p\"\nembedding = 32\ncells = 4\n",
    );
    let out = bin(&["check", "--workload", w.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("NOT conformable"), "{text}");
    assert!(text.contains("r2 FAIL"), "{text}");
    assert!(text.contains("r1 ok"), "{text}");
}

#[test]
fn optimize_json_identical_across_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    let run = |workers: &str, file: &str| {
        let path = tmp.path().join(file);
        let out = bin(&[
            "optimize",
            "--workload",
            w.to_str().unwrap(),
            "--accel",
            "p1",
            "--format",
            "json",
            "--workers",
            workers,
            "-o",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("1", "a.json"), run("3", "b.json"));
}

#[test]
fn cost_reproduces_optimize_report() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    let out = bin(&[
        "optimize",
        "--workload",
        w.to_str().unwrap(),
        "--accel",
        "p1",
        "--goals",
        "runtime",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let goal = &v[0]["goals"][0];
    let mapping = &goal["mapping"];

    // A mapping file carries the layout as a flat tensor -> dimension map.
    let file = serde_json::json!({
        "t1": mapping["t1"],
        "t2": mapping["t2"],
        "order2": mapping["order2"],
        "t3": mapping["t3"],
        "order3": mapping["order3"],
        "layout": mapping["layout"]["innermost"],
    });
    let m = write(tmp.path(), "m.json", &serde_json::to_string(&file).unwrap());
    let out = bin(&[
        "cost",
        "--workload",
        w.to_str().unwrap(),
        "--accel",
        "p1",
        "--mapping",
        m.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cost: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(cost["report"], goal["report"]);
    assert_eq!(cost["mdc_text"], goal["mdc_text"]);
}

#[test]
fn mapping_file_round_trips_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    let m = write(
        tmp.path(),
        "m.toml",
        "t1 = [1, 1, 1]\nt2 = [2, 2, 1]\norder2 = [0, 1, 2]\nt3 = [8, 8, 8]\norder3 = [2, 1, 0]\n\n[layout]\nA = 0\nB = 1\nC = 1\n",
    );
    let args = |fmt: &str| {
        vec![
            "cost".to_string(),
            "--workload".into(),
            w.to_str().unwrap().into(),
            "--accel".into(),
            "p1".into(),
            "--mapping".into(),
            m.to_str().unwrap().into(),
            "--format".into(),
            fmt.into(),
        ]
    };
    let human = bin(&args("human").iter().map(|s| s.as_str()).collect::<Vec<_>>());
    assert!(human.status.success(), "{}", stderr(&human));
    assert!(stdout(&human).contains("operator g8 on p1"));
    let csv = bin(&args("csv").iter().map(|s| s.as_str()).collect::<Vec<_>>());
    assert!(csv.status.success());
    assert!(stdout(&csv).starts_with("operator,runtime_seconds"));
}

#[test]
fn verify_samples_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    let out = bin(&[
        "verify",
        "--workload",
        w.to_str().unwrap(),
        "--accel",
        "p1",
        "--samples",
        "10",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("model and executor agree"), "{}", stdout(&out));
}

#[test]
fn space_size_reports_reduction() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    let out = bin(&[
        "space-size",
        "--workload",
        w.to_str().unwrap(),
        "--accel",
        "p1",
        "--format",
        "json",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let row = &v[0];
    assert_eq!(row["operator"], "g8");
    assert!(row["reduction"].as_f64().unwrap() > 1.0);
}

#[test]
fn malformed_inputs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad_workload = write(tmp.path(), "bad.toml", "operator = 3\n");
    let out = bin(&["check", "--workload", bad_workload.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let w = write(tmp.path(), "w.toml", TINY_GEMM);
    let out = bin(&["roofline", "--workload", w.to_str().unwrap(), "--accel", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("neither a file nor a preset"));

    let bad_accel = write(tmp.path(), "a.toml", "num_pes = 4\n");
    let out = bin(&[
        "roofline",
        "--workload",
        w.to_str().unwrap(),
        "--accel",
        bad_accel.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_searches_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let w = write(
        tmp.path(),
        "w.toml",
        "[[operator]]\nkind = \"lstm\"\nname = \"lstm_p\"\nembedding = 32\ncells = 4\n",
    );
    let out = bin(&["optimize", "--workload", w.to_str().unwrap(), "--accel", "p1"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("not conformable"));

    let g = write(tmp.path(), "g.toml", TINY_GEMM);
    let out = bin(&[
        "baseline",
        "--workload",
        g.to_str().unwrap(),
        "--accel",
        "p1",
        "--style",
        "output_stationary",
    ]);
    assert_eq!(out.status.code(), Some(3));
}
