use std::path::Path;
use std::process::{Command, Output};

use spmap::fixtures;
use spmap::mesh_io::{load_mesh, save_mesh};
use spmap::spm::read_spm;

fn spmap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spmap"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPMAP_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_fixture(dir: &Path, id: &str) -> String {
    let name = format!("{id}.obj");
    save_mesh(&fixtures::fixture(id).unwrap().mesh, dir.join(&name)).unwrap();
    name
}

#[test]
fn encode_decode_info() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mesh = write_fixture(d, "nested_shells");

    let o = spmap(&["encode", &mesh, "--res", "32x64", "--layers", "3", "-o", "shells.spm"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let map = read_spm(d.join("shells.spm")).unwrap();
    assert_eq!((map.grid().height(), map.grid().width(), map.layers()), (32, 64, 3));
    assert!(stdout(&o).contains("layer histogram"));

    let o = spmap(&["decode", "shells.spm", "--voxels", "32", "-o", "shells_out.obj"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = load_mesh(d.join("shells_out.obj")).unwrap().mesh;
    assert!(out.topology().is_closed_manifold());

    let o = spmap(&["decode", "shells.spm", "--mode", "points", "-o", "shells.ply"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(d.join("shells.ply").exists());

    let o = spmap(&["info", "shells.spm"], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("32x64"));
}

#[test]
fn roundtrip_prints_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_fixture(dir.path(), "cube");
    let o = spmap(
        &["roundtrip", &mesh, "--res", "16x32", "--layers", "2", "--samples", "2000", "--workers", "2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("mesh_id,resolution,k,chamfer"));
    assert!(lines[1].starts_with("cube,16x32,2,"));
}

#[test]
fn sweep_writes_reports_and_honors_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_fixture(d, "sphere");
    write_fixture(d, "bowl");
    std::fs::write(
        d.join("corpus.toml"),
        "notes = \"two shapes\"\n[[mesh]]\nid = \"sphere\"\npath = \"sphere.obj\"\n[[mesh]]\nid = \"bowl\"\npath = \"bowl.obj\"\n",
    )
    .unwrap();
    std::fs::write(
        d.join("sweep.toml"),
        "resolutions = [\"32x64\"]\nlayers = [2]\nrepresentations = [\"sp\", \"nested\"]\nseed = 3\n[metrics]\nsamples = 2000\n",
    )
    .unwrap();
    let o = spmap(&["sweep", "corpus.toml", "--config", "sweep.toml", "-o", "out"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(d.join("out/results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
    assert!(rows.contains("bowl,32x32,2,") && rows.contains("sphere,32x64,2,"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 3);
    assert!(d.join("out/summary.csv").exists());
}

#[test]
fn coverage_and_quality() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mesh = write_fixture(d, "two_spheres");
    let o = spmap(&["coverage", &mesh, "--res", "32x64", "--layers", "3", "--samples", "3000"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 4);

    assert_eq!(spmap(&["encode", &mesh, "--res", "16x32", "-o", "a.spm"], d).status.code(), Some(0));
    let o = spmap(&["quality", "a.spm", "a.spm"], d);
    assert_eq!(o.status.code(), Some(0));
    let q: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(q["scores"]["l_total"], 0.0);
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(spmap(&["encode", "missing.obj", "-o", "x.spm"], d).status.code(), Some(2));
    assert_eq!(spmap(&["encode"], d).status.code(), Some(2));
    assert_eq!(spmap(&["frobnicate"], d).status.code(), Some(2));
    let mesh = write_fixture(d, "cube");
    assert_eq!(spmap(&["encode", &mesh, "--res", "30x40", "-o", "x.spm"], d).status.code(), Some(2));
    std::fs::write(d.join("bad.toml"), "resolutions = []\n").unwrap();
    assert_eq!(spmap(&["sweep", "--config", "bad.toml", "-o", "o"], d).status.code(), Some(2));
    std::fs::write(d.join("junk.spm"), b"not a map").unwrap();
    assert_eq!(spmap(&["info", "junk.spm"], d).status.code(), Some(2));
    assert_eq!(spmap(&["--help"], d).status.code(), Some(0));
}

#[test]
fn workers_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write_fixture(dir.path(), "cube");
    let o = Command::new(env!("CARGO_BIN_EXE_spmap"))
        .args(["roundtrip", &mesh, "--res", "8x16", "--layers", "1", "--samples", "500"])
        .current_dir(dir.path())
        .env("SPMAP_WORKERS", "0x")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_spmap"))
        .args(["roundtrip", &mesh, "--res", "8x16", "--layers", "1", "--samples", "500"])
        .current_dir(dir.path())
        .env("SPMAP_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failed_sweep_cells_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_fixture(d, "bowl");
    std::fs::write(d.join("corpus.toml"), "[[mesh]]\nid = \"bowl\"\npath = \"bowl.obj\"\n").unwrap();
    // the bowl wall is thinner than a voxel at 16, so nested decoding finds nothing
    let o = spmap(
        &["sweep", "corpus.toml", "--res", "16x32", "--layers", "2", "--repr", "nested", "--samples", "500", "-o", "out"],
        d,
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("out/report.json").exists());
}
