use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use i2gfp::io::{load_alpha, save_alpha, save_rgb, save_trimap};
use i2gfp::network::ModelConfig;
use i2gfp::network::NetworkParams;
use i2gfp::raster::{AlphaMatte, RgbImage, Trimap, TrimapLabel};
use i2gfp::toy::{toy_sample, write_toy_corpus};
use serde_json::Value;

fn i2gfp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_i2gfp"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn compose_config(root: &Path, out: &str) -> PathBuf {
    let cfg = root.join("compose.toml");
    std::fs::write(
        &cfg,
        format!(
            "[compose]\nforeground_dir = \"fg\"\nalpha_dir = \"alpha\"\nbackground_dir = \"bg\"\n\
             backgrounds_per_foreground = 3\noutput_dir = \"{out}\"\nseed = 7\n\
             trimap_radius_min = 1\ntrimap_radius_max = 4\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn compose_toy_corpus_is_counted_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 2, 3, 40, 1).unwrap();
    let cfg = compose_config(dir.path(), "data");
    let out = i2gfp(&["compose", "--config", p(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("effective config"));
    let data = dir.path().join("data");
    let merged = std::fs::read_dir(data.join("merged")).unwrap().count();
    assert_eq!(merged, 6);
    let manifest = std::fs::read(data.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.iter().filter(|&&b| b == b'\n').count(), 6);

    let rerun = dir.path().join("again");
    let out = i2gfp(&["compose", "--config", p(&cfg), "--set", &format!("compose.output_dir={}", p(&rerun))]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(rerun.join("manifest.jsonl")).unwrap(), manifest);
}

#[test]
fn compose_missing_alpha_dir_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 1, 1, 40, 1).unwrap();
    std::fs::remove_dir_all(dir.path().join("alpha")).unwrap();
    let cfg = compose_config(dir.path(), "data");
    let out = i2gfp(&["compose", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(p(&dir.path().join("alpha"))), "{}", stderr(&out));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 1, 1, 40, 1).unwrap();
    let cfg = compose_config(dir.path(), "data");
    let out = i2gfp(&["compose", "--config", p(&cfg), "--set", "compose.colour=3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("compose.colour"));
}

#[test]
fn one_file_can_hold_every_command_section() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 1, 1, 40, 1).unwrap();
    let cfg = compose_config(dir.path(), "data");
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("[train]\ndata_dir = \"data\"\noutput_dir = \"run\"\niterations = 3\n");
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(i2gfp(&["train", "--config", p(&cfg), "--dry-run"]).status.code(), Some(0));
    let typo = i2gfp(&["train", "--config", p(&cfg), "--dry-run", "--set", "train.iteratons=3"]);
    assert_eq!(typo.status.code(), Some(2));
    assert!(stderr(&typo).contains("train.iteratons"));
}

fn effective_model(stderr: &str) -> Value {
    let line = stderr
        .lines()
        .find(|l| l.contains("effective config"))
        .expect("config echo");
    let json = &line[line.find('{').unwrap()..];
    serde_json::from_str::<Value>(json).unwrap()["model"].clone()
}

#[test]
fn ablation_flags_map_to_model_switches() {
    let dir = tempfile::tempdir().unwrap();
    for (name, ic, gfp) in [("base", false, false), ("base_ic", true, false), ("i2gfp", true, true)] {
        let out = i2gfp(&[
            "train",
            "--dry-run",
            "--ablation",
            name,
            "--set",
            &format!("train.data_dir={}", p(dir.path())),
            "--set",
            &format!("train.output_dir={}", p(dir.path())),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let model = effective_model(&stderr(&out));
        assert_eq!(model["use_ic"], ic, "{name}");
        assert_eq!(model["use_gfp"], gfp, "{name}");
    }
    let out = i2gfp(&["train", "--dry-run", "--ablation", "deep"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_two_without_checkpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = i2gfp(&[
        "train",
        "--stage",
        "2",
        "--set",
        &format!("train.data_dir={}", p(dir.path())),
        "--set",
        &format!("train.output_dir={}", p(dir.path())),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("checkpoint"));
}

#[test]
fn train_both_stages_from_composed_data() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_corpus(dir.path(), 2, 3, 40, 3).unwrap();
    let cfg = compose_config(dir.path(), "data");
    let out = i2gfp(&["compose", "--config", p(&cfg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let train_cfg = dir.path().join("train.toml");
    std::fs::write(
        &train_cfg,
        "[model]\ninput_size = 32\n[train]\ndata_dir = \"data\"\noutput_dir = \"runs\"\n\
         iterations = 2\nbatch_size = 2\ncheckpoint_every = 2\n[aug]\ncrop_sizes = [32]\n",
    )
    .unwrap();
    let out = i2gfp(&["train", "--config", p(&train_cfg), "--stage", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = dir.path().join("runs/stage1_iter00000002.ckpt");
    assert!(ckpt.is_file());
    assert!(dir.path().join("runs/train_log_stage1.jsonl").is_file());
    let out = i2gfp(&[
        "train",
        "--config",
        p(&train_cfg),
        "--stage",
        "2",
        "--set",
        &format!("train.resume_from={}", p(&ckpt)),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("runs/stage2_iter00000002.ckpt").is_file());
}

struct InferFixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    ckpt: PathBuf,
    image: PathBuf,
}

fn infer_fixture() -> InferFixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let ckpt = root.join("model.params");
    NetworkParams::init(&ModelConfig::desk(32))
        .unwrap()
        .save(&ckpt)
        .unwrap();
    let sample = toy_sample(45, 2, 3);
    let image = root.join("image.png");
    save_rgb(&sample.image, &image).unwrap();
    save_trimap(&sample.trimap, &root.join("trimap.png")).unwrap();
    InferFixture {
        _dir: dir,
        root,
        ckpt,
        image,
    }
}

fn run_infer(f: &InferFixture, trimap: &Path, out: &Path) -> Output {
    i2gfp(&[
        "infer",
        "--checkpoint",
        p(&f.ckpt),
        "--image",
        p(&f.image),
        "--trimap",
        p(trimap),
        "--out",
        p(out),
    ])
}

#[test]
fn infer_is_deterministic() {
    let f = infer_fixture();
    let tri = f.root.join("trimap.png");
    let (a, b) = (f.root.join("a.png"), f.root.join("b.png"));
    assert!(run_infer(&f, &tri, &a).status.success());
    assert!(run_infer(&f, &tri, &b).status.success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn infer_known_trimaps_give_constant_mattes() {
    let f = infer_fixture();
    for (label, want) in [(TrimapLabel::Foreground, 1.0), (TrimapLabel::Background, 0.0)] {
        let tri = f.root.join("known.png");
        save_trimap(&Trimap::filled(45, 45, label), &tri).unwrap();
        let out = f.root.join("known_out.png");
        let res = run_infer(&f, &tri, &out);
        assert!(res.status.success(), "{}", stderr(&res));
        let alpha = load_alpha(&out).unwrap();
        assert_eq!(alpha.dims(), (45, 45));
        assert!(alpha.data().iter().all(|&v| v == want));
    }
}

#[test]
fn infer_dimension_mismatch_is_a_config_error() {
    let f = infer_fixture();
    let tri = f.root.join("small.png");
    save_trimap(&Trimap::filled(30, 45, TrimapLabel::Unknown), &tri).unwrap();
    let out = run_infer(&f, &tri, &f.root.join("x.png"));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

fn eval_dirs(root: &Path, n: usize) -> (PathBuf, PathBuf) {
    let (alpha, tri) = (root.join("alpha"), root.join("trimap"));
    for i in 0..n {
        let s = toy_sample(24, i as u64, 2);
        save_alpha(s.ground_truth.as_ref().unwrap(), &alpha.join(format!("im{i}.png"))).unwrap();
        save_trimap(&s.trimap, &tri.join(format!("im{i}.png"))).unwrap();
    }
    (alpha, tri)
}

fn check_report_schema(report: &Value, n: usize, region: &str) {
    let keys = ["sad", "mse", "grad", "conn"];
    assert_eq!(report["region"], region);
    assert!(report["failures"].as_array().unwrap().is_empty());
    let per = report["per_image"].as_array().unwrap();
    assert_eq!(per.len(), n);
    for m in per {
        assert!(m["name"].is_string());
        for k in keys {
            assert!(m[k].is_number(), "{k}");
        }
    }
    assert_eq!(report["aggregate"]["count"], n);
    for k in keys {
        assert_eq!(report["aggregate"][k].as_f64(), Some(0.0), "{k}");
    }
}

#[test]
fn eval_identical_directories_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (alpha, tri) = eval_dirs(dir.path(), 3);
    for region in ["unknown", "full"] {
        let report_path = dir.path().join(format!("{region}.json"));
        let out = i2gfp(&[
            "eval",
            "--pred",
            p(&alpha),
            "--gt",
            p(&alpha),
            "--trimap",
            p(&tri),
            "--region",
            region,
            "--report",
            p(&report_path),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
        check_report_schema(&stdout, 3, region);
        let file: Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
        assert_eq!(file, stdout);
    }
}

#[test]
fn eval_count_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (alpha, tri) = eval_dirs(dir.path(), 2);
    let pred = dir.path().join("pred");
    save_alpha(&AlphaMatte::filled(24, 24, 0.5), &pred.join("im0.png")).unwrap();
    let out = i2gfp(&["eval", "--pred", p(&pred), "--gt", p(&alpha), "--trimap", p(&tri)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn eval_unreadable_prediction_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let (alpha, tri) = eval_dirs(dir.path(), 2);
    let pred = dir.path().join("pred");
    save_alpha(&AlphaMatte::filled(24, 24, 0.5), &pred.join("im0.png")).unwrap();
    save_rgb(&RgbImage::filled(10, 10, [0.0; 3]), &pred.join("im1.png")).unwrap();
    let out = i2gfp(&["eval", "--pred", p(&pred), "--gt", p(&alpha), "--trimap", p(&tri)]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 1);
}

#[test]
fn audit_reports_small_relative_error() {
    let out = i2gfp(&["audit", "--size", "32", "--probes", "5", "--set", "model.ablation=\"base_ic\""]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["probes"].as_array().unwrap().len(), 5);
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn env_overrides_sit_between_file_and_flags() {
    let run = |envs: &[(&str, &str)], extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_i2gfp"));
        cmd.args(["train", "--dry-run", "--set", "train.data_dir=d", "--set", "train.output_dir=o"]);
        cmd.args(extra).env_remove("RUST_LOG");
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        effective_model(&stderr(&out))
    };
    assert_eq!(run(&[], &[])["input_size"], 64);
    assert_eq!(run(&[("I2GFP_MODEL__INPUT_SIZE", "48")], &[])["input_size"], 48);
    assert_eq!(
        run(&[("I2GFP_MODEL__INPUT_SIZE", "48")], &["--set", "model.input_size=96"])["input_size"],
        96
    );
}
