use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn prunesim(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prunesim"))
        .args(args)
        .env("PRUNESIM_OUT_DIR", out_dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    let prefix = format!("{key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(prefix.as_str()))
        .unwrap_or_else(|| panic!("no {key} in output:\n{text}"))
}

fn write_p3(dir: &Path) -> String {
    let p = dir.join("p3.txt");
    fs::write(&p, "3 2\n0 1\n1 2\n").unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn gen_writes_into_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = prunesim(&["gen", "--n", "40", "--grid", "30", "--seed", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(value(&text, "n"), "40");
    let path = value(&text, "path");
    assert!(Path::new(path).starts_with(dir.path()));
    let dump = fs::read_to_string(path).unwrap();
    assert!(dump.starts_with(&format!("40 {}\n", value(&text, "edges"))));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(prunesim(&["gen", "--n", "70000"], d).status.code(), Some(2));
    assert_eq!(prunesim(&["gen", "--n", "10", "--grid", "3"], d).status.code(), Some(2));
    assert_eq!(prunesim(&["run", "--graph"], d).status.code(), Some(2));
    assert_eq!(prunesim(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(prunesim(&["run", "--graph", "/no/such/file"], d).status.code(), Some(1));
    let p3 = write_p3(d);
    assert_eq!(prunesim(&["run", "--graph", &p3, "--m", "0"], d).status.code(), Some(1));
    assert_eq!(prunesim(&["--help"], d).status.code(), Some(0));
}

#[test]
fn run_reports_leaf_sends() {
    let dir = tempfile::tempdir().unwrap();
    let p3 = write_p3(dir.path());
    let orig = stdout(&prunesim(&["run", "--graph", &p3, "--m", "3"], dir.path()));
    assert_eq!(value(&orig, "packets_sent"), "3,6,3");
    assert_eq!(value(&orig, "leader"), "1");
    let enh = stdout(&prunesim(&["run", "--graph", &p3, "--m", "3", "--variant", "enhanced"], dir.path()));
    assert_eq!(value(&enh, "packets_sent"), "0,6,0");
    let json = dir.path().join("detail.json");
    let o = prunesim(&["run", "--graph", &p3, "--json", json.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 3);
}

#[test]
fn compare_pairs_variants() {
    let dir = tempfile::tempdir().unwrap();
    let p3 = write_p3(dir.path());
    let text = stdout(&prunesim(&["compare", "--graph", &p3], dir.path()));
    assert_eq!(value(&text, "leader_match"), "true");
    let p: f64 = value(&text, "avg_msgs_P").parse().unwrap();
    let i: f64 = value(&text, "avg_msgs_I").parse().unwrap();
    assert!(i < p);
}

#[test]
fn sweep_stats_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = d.join("plan.toml");
    fs::write(
        &plan,
        "m = [1]\nD = [6]\n[[geometric]]\nn = 30\ngrid = 28\nseed = 5\ncount = 8\nconnectivity = \"largest-component\"\n",
    )
    .unwrap();
    let o = prunesim(&["sweep", "--plan", plan.to_str().unwrap(), "--jobs", "2"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(value(&text, "rows"), "16");
    let results = value(&text, "output").to_owned();
    assert!(Path::new(&results).starts_with(d));

    let o = prunesim(&["stats", "--results", &results], d);
    let text = stdout(&o);
    assert!(text.contains("metric=avg_msgs pairs=8"));
    assert_eq!(o.status.code(), Some(0));

    let o = prunesim(&["stats", "--results", &results, "--metric", "ticks"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient data"));

    let o = prunesim(&["plotdata", "histogram", "--results", &results], d);
    assert_eq!(o.status.code(), Some(0));
    assert!(d.join("histogram.csv").exists());

    let g = write_p3(d);
    let o = prunesim(&["plotdata", "boxplot", "--graph", &g], d);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(d.join("boxplot.csv")).unwrap();
    assert_eq!(csv, "node,P,I\n0,1,0\n1,2,2\n2,1,0\n");

    assert_eq!(prunesim(&["plotdata", "curves"], d).status.code(), Some(2));
}
