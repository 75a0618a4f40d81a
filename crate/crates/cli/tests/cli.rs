use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avf_core::mesh::{generate_tube, write_gmsh};

fn avf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avf")).args(args).output().expect("spawn avf")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MERGING: &str = "# period_s=0.8
t_s,Q_PA_mL_min,Q_DA_mL_min,Q_FV_mL_min
0.0,-400,0,520
0.2,-350,0,455
0.4,-300,0,390
0.6,-380,0,494
";

#[test]
fn rectify_reports_merging() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.csv"), dir.path().join("out.csv"));
    std::fs::write(&input, MERGING).unwrap();
    let out = avf(&["rectify", path_str(&input), path_str(&output)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let line = text(&out.stdout);
    assert!(line.starts_with("type=M mean_QDA_rel=-0.3"), "{line}");
    let written = std::fs::read_to_string(&output).unwrap();
    assert!(written.contains("0.0,-400,-120,520\n"), "{written}");
}

#[test]
fn conservative_file_keeps_trusted_columns() {
    let csv = "t_s,Q_PA_mL_min,Q_DA_mL_min,Q_FV_mL_min\n0,-400.50,100.25,300.25\n0.25,-3.5e2,50,300\n0.5,-300.0,0,300.0\n0.75,-380,80,300\n";
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("in.csv"), dir.path().join("out.csv"));
    std::fs::write(&input, csv).unwrap();
    assert_eq!(avf(&["rectify", path_str(&input), path_str(&output)]).status.code(), Some(0));
    let written = std::fs::read_to_string(&output).unwrap();
    let rows: Vec<Vec<&str>> = written.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').collect()).collect();
    let orig: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), orig.len());
    for (r, o) in rows.iter().zip(&orig) {
        assert_eq!([r[0], r[1], r[3]], [o[0], o[1], o[3]]);
        assert_eq!(r[2].parse::<f64>().unwrap(), o[2].parse::<f64>().unwrap());
    }
}

#[test]
fn malformed_csv_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "t_s,Q_PA_mL_min,Q_DA_mL_min,Q_FV_mL_min\n0,-1,0,1\n0.1,-1,zero,1\n").unwrap();
    let out = avf(&["rectify", path_str(&input), path_str(&dir.path().join("o.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("line 3"), "{}", text(&out.stderr));
}

#[test]
fn classify_without_rectification() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::write(&input, MERGING).unwrap();
    let out = avf(&["classify", "--no-rectify", path_str(&input)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).starts_with("type=O"), "{}", text(&out.stdout));
}

#[test]
fn mesh_info_on_single_tet() {
    let msh = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$PhysicalNames\n2\n2 1 \"WALL\"\n3 2 \"fluid\"\n$EndPhysicalNames\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n5\n1 4 2 2 1 1 2 3 4\n2 2 2 1 1 1 3 2\n3 2 2 1 1 1 2 4\n4 2 2 1 1 1 4 3\n5 2 2 1 1 2 3 4\n$EndElements\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tet.msh");
    std::fs::write(&path, msh).unwrap();
    let out = avf(&["mesh-info", path_str(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let s = text(&out.stdout);
    assert!(s.contains("nodes=4\n") && s.contains("tets=1\n") && s.contains("boundary_facets=4\n"), "{s}");
    assert!(s.contains("volume_m3=1.666666667e-1"), "{s}");
}

#[test]
fn mesh_info_json_on_tube() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tube.msh");
    let mesh = generate_tube(2e-3, 2e-2, 6, 3).unwrap();
    write_gmsh(&mesh, &path).unwrap();
    let info = avf_cli::cmd_mesh_info(&path, &[]).unwrap();
    assert_eq!((info.nodes, info.tets), (mesh.n_nodes(), mesh.n_el()));
    assert!((info.volume - mesh.total_volume()).abs() <= 1e-12 * info.volume);
    assert!(info.areas.contains_key("PA") && info.areas.contains_key("FV") && !info.areas.contains_key("DA"));

    let out = avf(&["mesh-info", "--json", path_str(&path)]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["nodes"], serde_json::json!(mesh.n_nodes()));
}

#[test]
fn missing_mesh_exits_2() {
    assert_eq!(avf(&["mesh-info", "/nonexistent/mesh.msh"]).status.code(), Some(2));
    assert_eq!(avf(&["mesh-info", "--label", "inlet", "x.msh"]).status.code(), Some(2));
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(avf(&["frobnicate"]).status.code(), Some(2));
}

const RUN_CSV: &str = "t_s,Q_PA_mL_min,Q_DA_mL_min,Q_FV_mL_min\n0.00,-300,0,300\n0.025,-420,0,420\n0.05,-510,0,510\n0.075,-320,0,320\n";

fn write_case(dir: &Path, dt: f64, extra: serde_json::Value) -> PathBuf {
    std::fs::write(dir.join("w.csv"), RUN_CSV).unwrap();
    let mut cfg = serde_json::json!({
        "mesh": {"tube": {"radius": 2e-3, "length": 1e-2, "n_axial": 4, "n_ring": 2}},
        "waveform": "w.csv",
        "period": 0.1,
        "n_periods": 2,
        "scheme": {"dt": dt},
        "solver": {"precond": "ilu0"},
        "output": {"dir": "out", "cadence": 5, "checkpoint_every": 10},
        "slices": [{"point": [5e-3, 0.0, 0.0], "normal": [1.0, 0.0, 0.0], "half_width": 2e-3, "resolution": 5}]
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("case.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn period_not_multiple_of_dt_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_case(dir.path(), 0.003, serde_json::json!({}));
    let out = avf(&["run", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("not a multiple"), "{}", text(&out.stderr));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_case(dir.path(), 0.01, serde_json::json!({"scheme": {"dt": 0.01, "thetta": 1.0}}));
    let out = avf(&["run", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("scheme.thetta"), "{}", text(&out.stderr));
}

#[test]
fn run_writes_manifest_logs_and_post_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_case(dir.path(), 0.01, serde_json::json!({}));
    let out = avf(&["--json-logs", "run", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let logs = text(&out.stderr);
    let step_lines: Vec<serde_json::Value> = logs
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).expect("json log line"))
        .filter(|v| v["message"].as_str().unwrap().starts_with("step="))
        .collect();
    assert_eq!(step_lines.len(), 20);
    assert!(step_lines[0]["message"].as_str().unwrap().contains("mass_balance="));

    let root = dir.path().join("out");
    let manifest: avf_cli::RunManifest = serde_json::from_str(&std::fs::read_to_string(root.join(avf_cli::MANIFEST_NAME)).unwrap()).unwrap();
    assert_eq!(manifest.total_steps, 20);
    assert_eq!(manifest.periods.len(), 2);
    assert_eq!(manifest.config_hash.len(), 64);
    for f in &manifest.files {
        assert!(root.join(f).is_file(), "{f} listed but missing");
    }
    for needed in ["pressure_trace.csv", "wss_summary.csv", "summary.json", "vtk/snapshot_0000010.vtk", "vtk/snapshot_0000010_wall.vtk", "slices/slice0_0000020.csv", "checkpoints/checkpoint_0000020.bin"] {
        assert!(manifest.files.iter().any(|f| f == needed), "{needed} missing from {:?}", manifest.files);
    }
    let trace = std::fs::read_to_string(root.join("pressure_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 11);

    let ckpt = root.join("checkpoints/checkpoint_0000020.bin");
    let out = avf(&["post", path_str(&cfg), path_str(&ckpt)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(root.join("post/pressure_trace.csv").is_file());
    assert!(text(&out.stdout).lines().count() >= 3);
}

#[test]
fn resumed_run_matches_uninterrupted_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_case(dir.path(), 0.01, serde_json::json!({}));
    avf_cli::cmd_run(&cfg, None).unwrap();
    let mid = dir.path().join("out/checkpoints/checkpoint_0000010.bin");
    let saved = dir.path().join("mid.bin");
    std::fs::copy(&mid, &saved).unwrap();
    let first = std::fs::read(dir.path().join("out/checkpoints/checkpoint_0000020.bin")).unwrap();
    avf_cli::cmd_run(&cfg, Some(&saved)).unwrap();
    let second = std::fs::read(dir.path().join("out/checkpoints/checkpoint_0000020.bin")).unwrap();
    assert_eq!(first, second);
}
