use std::path::Path;
use std::process::{Command, Output};

use fdm_core::replay::read_dataset;
use fdm_core::run::RunConfig;

const SMALL: &[&str] = &[
    "--sim.kind=plane",
    "--sim.terrain_width=120",
    "--sim.terrain_height=120",
    "--sim.terrains_per_kind=1",
    "--sim.envs=16",
];

fn fdm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdm"))
        .args(args)
        .env("FDM_OUT", out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_data_writes_requested_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen-data", "--count=100"];
    args.extend_from_slice(SMALL);
    let o = fdm(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let ds = read_dataset(&dir.path().join("dataset.fdmrb")).unwrap();
    assert_eq!(ds.len(), 100);
    let resolved = std::fs::read_to_string(dir.path().join("config.resolved")).unwrap();
    let mut rc = RunConfig::default();
    rc.apply_text(&resolved).unwrap();
    assert_eq!(rc.sim.kinds, vec![fdm_core::terrain::TerrainKind::Plane]);
    assert_eq!(rc.run.out, dir.path());
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdm(dir.path(), &["gen-data", "--mppi.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mppi.bogus"), "{}", stderr(&o));
    let o = fdm(dir.path(), &["gen-data", "--fdm.n=x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fdm.n"), "{}", stderr(&o));
    let o = fdm(dir.path(), &["gen-data", "--fdm.n=0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fdm(dir.path(), &["teleport"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "gamma = 0.1\n").unwrap();
    let o = fdm(dir.path(), &["gen-data", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("dataset.fdmrb").exists());
}

#[test]
fn flag_overrides_file_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "[mppi]\ngamma = 0.2\n").unwrap();
    let mut args = vec!["gen-data", "--count=10", "--config", cfg.to_str().unwrap(), "--mppi.gamma=0.05"];
    args.extend_from_slice(SMALL);
    let o = fdm(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rc = RunConfig::default();
    rc.apply_text(&std::fs::read_to_string(dir.path().join("config.resolved")).unwrap()).unwrap();
    assert_eq!(rc.mppi.gamma, 0.05);
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdm(dir.path(), &["plan", "--goal=4,0,0", "--sim.kind=plane"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn train_plan_and_plot_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut train = vec![
        "train",
        "--train.rounds=1",
        "--train.samples_per_round=300",
        "--train.epochs=1",
        "--train.batch=100",
    ];
    train.extend_from_slice(SMALL);
    let o = fdm(dir.path(), &train);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("model.fdmck").exists());
    let metrics = dir.path().join("metrics.csv");
    assert_eq!(std::fs::read_to_string(&metrics).unwrap().lines().count(), 2);

    let plan = ["plan", "--goal=4,0,0", "--mppi.population=64", "--mppi.iterations=2", "--eval.max_time=20"];
    let mut args = plan.to_vec();
    args.extend_from_slice(SMALL);
    let o = fdm(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(dir.path().join("episode.csv")).unwrap();
    let rows = fdm_core::mppi::parse_episode_csv(&log).unwrap();
    assert!(rows.len() > 1);
    assert!(std::fs::read_to_string(dir.path().join("plan.svg")).unwrap().starts_with("<svg"));

    // The constant-velocity planner reaches a 4 m goal on flat ground.
    args.push("--planner=cv");
    let o = fdm(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("outcome success"), "{}", stdout(&o));

    let svg = dir.path().join("metrics.svg");
    std::fs::remove_file(&svg).unwrap();
    let o = fdm(dir.path(), &["plot", metrics.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(&svg).unwrap();
    let o = fdm(dir.path(), &["plot", metrics.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&svg).unwrap(), first);
    let o = fdm(dir.path(), &["plot", dir.path().join("episode.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}
