use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).display().to_string()
}

fn xbarmap(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xbarmap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("XBARMAP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pack_thirteen_items_dense_exact() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("thirteen-items");
    let o = xbarmap(&["pack", "--network", &net, "--tile", "512x512", "--mode", "dense", "--exact"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(": 2 bins (optimal"), "{}", stdout(&o));
    let report = json(&dir.path().join("pack.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["kind"], "pack");
    assert_eq!(report["bin_count"], 2);
    assert_eq!(report["exact"]["status"], "optimal");
    assert_eq!(report["placements"].as_array().unwrap().len(), 13);
    let csv = fs::read_to_string(dir.path().join("placements.csv")).unwrap();
    assert_eq!(csv.lines().count(), 14);
    assert!(csv.lines().nth(1).unwrap().contains("item"));
}

#[test]
fn layouts_have_one_panel_per_bin() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("thirteen-items");
    for (mode, bins) in [("dense", 2), ("pipeline", 4)] {
        let o = xbarmap(
            &["pack", "--network", &net, "--tile", "512x512", "--mode", mode, "--format", "svg,ascii"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let svg = fs::read_to_string(dir.path().join("layout.svg")).unwrap();
        assert_eq!(svg.matches(r#"class="bin""#).count(), bins, "{mode}");
        assert_eq!(svg.matches(r#"class="fragment""#).count(), 13);
        let txt = fs::read_to_string(dir.path().join("layout.txt")).unwrap();
        assert_eq!(txt.matches("\nbin ").count(), bins);
        assert!(!dir.path().join("pack.json").exists(), "only the requested formats are written");
    }
}

#[test]
fn zero_tile_dimension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("thirteen-items");
    let o = xbarmap(&["pack", "--network", &net, "--tile", "0x512"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("tile dimensions must be ≥ 1"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = xbarmap(&["sweep", "--network", "/no/such/net"], dir.path());
    assert!(!missing.status.success());
    let msg = stderr(&missing);
    assert_eq!(msg.trim().lines().count(), 1, "{msg}");
    assert!(msg.contains("/no/such/net"));

    let unknown = xbarmap(&["sweep", "--bogus"], dir.path());
    assert!(!unknown.status.success());

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[cost]\nanchor_efficiency = 1.5\n").unwrap();
    let net = fixture("lenet");
    let o = xbarmap(&["sweep", "--network", &net, "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert_eq!(stderr(&o).trim().lines().count(), 1, "{}", stderr(&o));

    let o = xbarmap(&["latency", "--network", &net, "--rapa-override", "nope=4"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested/out");
    let o = Command::new(env!("CARGO_BIN_EXE_xbarmap"))
        .args(["fragments", "--network", &fixture("lenet"), "--tile", "64x64"])
        .env("XBARMAP_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(target.join("fragments.csv")).unwrap();
    assert!(csv.starts_with("layer,replica,p_in,p_out,kind\nconv1,0,26,6,sparse\n"), "{csv}");
}

#[test]
fn seeded_random_instances_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = |seed: &'static str| ["pack", "--random-items", "25", "--seed", seed, "--tile", "64x64", "--mode", "pipeline"];
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = xbarmap(&args(seed), dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("placements.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(
        fs::read(a.path().join("pack.json")).unwrap(),
        fs::read(b.path().join("pack.json")).unwrap()
    );
}

#[test]
fn latency_with_replication() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("resnet18");
    let plain = xbarmap(&["latency", "--network", &net], dir.path());
    assert!(plain.status.success(), "{}", stderr(&plain));
    let base = json(&dir.path().join("latency.json"));
    let o = xbarmap(&["latency", "--network", &net, "--rapa", "128/4", "--rapa-override", "fc=2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rapa = json(&dir.path().join("latency.json"));
    assert_eq!(rapa["rapa"], "128/4");
    let reps = rapa["replication"].as_array().unwrap();
    assert_eq!(reps[0], 128);
    assert_eq!(reps.last().unwrap(), 2);
    assert!(rapa["pipelined"].as_f64().unwrap() < base["pipelined"].as_f64().unwrap());
    // Without replication the first layer dominates: 112 * 112 columns.
    assert_eq!(base["pipelined"], 12544.0);
}

#[test]
fn compare_reports_both_mappings() {
    let dir = tempfile::tempdir().unwrap();
    let o = xbarmap(&["compare", "--network", &fixture("resnet18"), "--tile", "256x256"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("compare.json"));
    let one = report["one_to_one"]["bin_count"].as_u64().unwrap();
    let packed = report["packed"]["bin_count"].as_u64().unwrap();
    assert!(packed <= one);
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sweep_respects_grid_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = xbarmap(
        &["sweep", "--network", &fixture("lenet"), "--rows", "64,128", "--aspects", "1,2,3", "--packer", "exact"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&dir.path().join("sweep.json"));
    assert_eq!(report["points"].as_array().unwrap().len(), 6);
    assert_eq!(report["aspect_minima"].as_array().unwrap().len(), 3);
    assert_eq!(report["packer"], "exact");
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}
