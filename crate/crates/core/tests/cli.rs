use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
[model]
kind = "model1"

[method]
scheme = "B"
cutoff = 2

[sweep]
h = [0.2, 0.1, 0.05]
runs = 8
seed = 3
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn layerflow(args: &[&str], config: &Path, workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_layerflow"));
    cmd.args(args).arg("--config").arg(config);
    match workers {
        Some(n) => cmd.env("LAYERFLOW_WORKERS", n),
        None => cmd.env_remove("LAYERFLOW_WORKERS"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn converge_prints_one_row_per_step_and_a_fit() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", BASE);
    let out = layerflow(&["converge"], &cfg, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], layerflow::experiment::ERROR_CSV_HEADER);
    assert_eq!(lines.iter().filter(|l| l.starts_with("model1,B,")).count(), 3);
    assert!(lines.last().unwrap().starts_with("# fit order_v="));
}

#[test]
fn run_output_is_deterministic_and_written_to_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "r.toml", BASE);
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    for target in [&first, &second] {
        let out = layerflow(&["run", "--h", "0.1", "--out", target.to_str().unwrap()], &cfg, None);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
    let a = std::fs::read_to_string(&first).unwrap();
    assert_eq!(a, std::fs::read_to_string(&second).unwrap());
    assert!(a.starts_with(layerflow::experiment::TRAJECTORY_CSV_HEADER));
    assert!(a.trim_end().ends_with("# status=ok"));
    // 31 layers from k = 0 to N = 30
    assert_eq!(a.lines().filter(|l| l.contains(",layer,")).count(), 31);
}

#[test]
fn mc_does_not_depend_on_worker_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "m.toml", BASE);
    let one = layerflow(&["mc"], &cfg, Some("1"));
    let three = layerflow(&["mc"], &cfg, Some("3"));
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(stdout(&one), stdout(&three));
}

#[test]
fn overrides_replace_config_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "o.toml", BASE);
    let out = layerflow(&["converge", "--h", "0.1,0.05", "--method", "C", "--model", "2", "--seed", "9"], &cfg, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("model2,C,")).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').nth(5) == Some("9")));
    // two step sizes do not support a fit
    assert!(!text.contains("# fit"));
}

#[test]
fn plot_writes_side_files_next_to_the_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "p.toml", &format!("{BASE}\n[output]\nplot = true\n"));
    let target = dir.path().join("errors.csv");
    let out = layerflow(&["converge", "--out", target.to_str().unwrap()], &cfg, None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for suffix in ["errors.csv.velocity.dat", "errors.csv.pressure.dat"] {
        let text = std::fs::read_to_string(dir.path().join(suffix)).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3, "{suffix}");
    }
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(&dir, "u.toml", &BASE.replace("cutoff = 2", "cutof = 2"));
    let out = layerflow(&["converge"], &unknown, None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cutof"));

    let negative = write_config(&dir, "n.toml", &BASE.replace("[0.2, 0.1, 0.05]", "[0.2, -0.1]"));
    let out = layerflow(&["converge"], &negative, None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.h"));

    let missing = dir.path().join("absent.toml");
    assert_eq!(layerflow(&["mc"], &missing, None).status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_code_3_and_keeps_earlier_layers() {
    let dir = TempDir::new().unwrap();
    // model 1 starts at rest, so only the first noise step can cross the bound
    let text = BASE.replace("cutoff = 2", "cutoff = 2\nblowup_bound = 0.05");
    let cfg = write_config(&dir, "b.toml", &text);
    let out = layerflow(&["run", "--h", "0.1", "--seed", "1"], &cfg, None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    assert!(csv.lines().last().unwrap().starts_with("# status=blow-up layer="));
    assert!(csv.lines().any(|l| l.starts_with("0,")));

    let mc = layerflow(&["mc"], &cfg, None);
    assert_eq!(mc.status.code(), Some(3));
}

#[test]
fn unwritable_output_exits_with_code_4() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "w.toml", BASE);
    let target = dir.path().join("missing").join("out.csv");
    let out = layerflow(&["converge", "--out", target.to_str().unwrap()], &cfg, None);
    assert_eq!(out.status.code(), Some(4));
}
