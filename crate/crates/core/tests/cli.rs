mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{seltune_bin, write_surrogate_config};

fn seltune(args: &[&Path]) -> Output {
    Command::new(seltune_bin())
        .args(args)
        .env("SELTUNE_LOG", "warn")
        .output()
        .unwrap()
}

fn run_ok(args: &[&Path]) -> Output {
    let out = seltune(args);
    assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    out
}

fn p(s: &str) -> &Path {
    Path::new(s)
}

#[test]
fn same_config_gives_identical_topk() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_ok(&[p("run"), &write_surrogate_config(a.path(), "", 5)]);
    run_ok(&[p("run"), &write_surrogate_config(b.path(), "", 5)]);
    for f in ["topk.csv", "heatmap.csv", "params.csv", "generations.csv"] {
        assert_eq!(
            fs::read(a.path().join("run").join(f)).unwrap(),
            fs::read(b.path().join("run").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn topk_has_k_rows_sorted_by_phi() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[p("run"), &write_surrogate_config(dir.path(), "", 5)]);
    let mut r = csv::Reader::from_path(dir.path().join("run/topk.csv")).unwrap();
    let phis: Vec<f64> = r.records().map(|x| x.unwrap()[4].parse().unwrap()).collect();
    assert_eq!(phis.len(), 5);
    assert!(phis.windows(2).all(|w| w[0] <= w[1]));
    let gens = fs::read_to_string(dir.path().join("run/generations.csv")).unwrap();
    assert_eq!(gens.lines().count(), 11);
}

#[test]
fn report_prints_both_views() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[p("run"), &write_surrogate_config(dir.path(), "", 3)]);
    let out = run_ok(&[p("report"), &dir.path().join("run")]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("phi (minimized)"));
    assert!(text.contains("accuracy (1 - phi)"));
    assert!(text.contains("trainable fraction"));
    assert!(text.contains("artifact consistency: ok"));
}

#[test]
fn report_flags_tampered_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[p("run"), &write_surrogate_config(dir.path(), "", 3)]);
    let params = dir.path().join("run/params.csv");
    let text = fs::read_to_string(&params).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<&str> = lines[1].split(',').collect();
    cells[4] = "0.123";
    lines[1] = cells.join(",");
    fs::write(&params, lines.join("\n") + "\n").unwrap();
    let out = seltune(&[p("report"), &dir.path().join("run")]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stdout).contains("problem"));
}

#[test]
fn resuming_a_finished_run_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&[p("run"), &write_surrogate_config(dir.path(), "", 5)]);
    let cp = dir.path().join("run/checkpoint.json");
    let before = fs::read(&cp).unwrap();
    let topk = fs::read(dir.path().join("run/topk.csv")).unwrap();
    run_ok(&[p("resume"), &cp]);
    assert_eq!(fs::read(&cp).unwrap(), before);
    assert_eq!(fs::read(dir.path().join("run/topk.csv")).unwrap(), topk);
}

#[test]
fn resume_refuses_edited_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_surrogate_config(dir.path(), "", 5);
    run_ok(&[p("run"), &cfg, p("--stop-after"), p("2")]);
    let text = fs::read_to_string(&cfg).unwrap().replace("top_k = 5", "top_k = 4");
    fs::write(&cfg, text).unwrap();
    let out = seltune(&[p("resume"), &dir.path().join("run/checkpoint.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_surrogate_config(dir.path(), "elite_count = 20\n", 5);
    let out = seltune(&[p("run"), &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("elite"));

    let missing = seltune(&[p("run"), &dir.path().join("nope.toml")]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn trainer_crash_exits_with_3_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_surrogate_config(dir.path(), "", 5);
    let text = fs::read_to_string(&cfg).unwrap();
    let text = text[..text.find("[trainer]").unwrap()].to_string()
        + "[trainer]\nkind = \"process\"\ncommand = [\"sh\", \"-c\", \"read line; exit 0\"]\ntimeout_secs = 5\n";
    fs::write(&cfg, text).unwrap();
    let out = seltune(&[p("run"), &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("run/checkpoint.json").exists());
}

/// The process transport with the bundled surrogate server, including
/// injected faults, reproduces the in-process surrogate run exactly.
#[test]
fn process_trainer_with_faults_matches_in_process_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let direct = write_surrogate_config(a.path(), "", 5);

    let cfg = write_surrogate_config(b.path(), "", 5);
    let text = fs::read_to_string(&cfg).unwrap();
    let bin = seltune_bin().display().to_string();
    // The bundled server has uniform base rates, so use them on both sides.
    let uniform = |t: &str| {
        t.replace(
            "base_rates = [0.001, 0.001, 0.001, 0.001, 0.01, 0.01]",
            "base_rates = [0.01, 0.01, 0.01, 0.01, 0.01, 0.01]",
        )
    };
    fs::write(&direct, uniform(&fs::read_to_string(&direct).unwrap())).unwrap();
    run_ok(&[p("run"), &direct]);
    let process = format!(
        "[trainer]\nkind = \"process\"\ncapacity = 1\ntimeout_secs = 10\n\
         command = [{bin:?}, \"serve-surrogate\", \"--blocks\", \"6\", \"--instance-seed\", \"5\", \"--noise\", \"0.01\", \
         \"--garbage-every\", \"3\", \"--truncate-every\", \"4\", \"--duplicate-every\", \"5\", \"--fail-every\", \"7\"]\n"
    );
    let text = uniform(&text[..text.find("[trainer]").unwrap()]) + &process;
    fs::write(&cfg, text).unwrap();
    run_ok(&[p("run"), &cfg]);
    assert_eq!(
        fs::read(a.path().join("run/topk.csv")).unwrap(),
        fs::read(b.path().join("run/topk.csv")).unwrap()
    );
}
