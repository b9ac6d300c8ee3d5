use i2gfp::data::AugmentationConfig;
use i2gfp::network::{Ablation, ModelConfig};
use i2gfp::raster::MattingSample;
use i2gfp::toy::toy_sample;
use i2gfp::trainer::{checkpoint_file_name, train_stage, Checkpoint, LogRecord, TrainConfig};

fn data() -> Vec<MattingSample> {
    (0..3).map(|i| toy_sample(40, i, 2)).collect()
}

fn model() -> ModelConfig {
    ModelConfig::desk(32).with_ablation(Ablation::BaseIc)
}

fn config(iterations: usize, every: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 2,
        checkpoint_every: every,
        lr_initial: 1e-3,
        augmentation: AugmentationConfig::scaled(32),
        ..TrainConfig::default()
    }
}

#[test]
fn checkpoints_follow_the_cadence_and_the_final_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        batch_size: 1,
        output_dir: Some(dir.path().to_path_buf()),
        ..config(100, 40)
    };
    let out = train_stage(&data(), &model(), &cfg).unwrap();
    let iters: Vec<usize> = out.checkpoints.iter().map(|(i, _)| *i).collect();
    assert_eq!(iters, [40, 80, 100]);
    for (i, p) in &out.checkpoints {
        let p = p.as_ref().unwrap();
        assert_eq!(p.file_name().unwrap().to_str().unwrap(), checkpoint_file_name(1, *i));
        assert_eq!(Checkpoint::load(p).unwrap().iteration, *i);
    }
    let log = std::fs::read_to_string(dir.path().join("train_log_stage1.jsonl")).unwrap();
    let records: Vec<LogRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records, out.log);
    assert_eq!(records.len(), 100);
    assert!(records.iter().all(|r| r.total.is_finite()));
}

#[test]
fn parallel_and_strict_runs_agree_bitwise() {
    let run = |strict: bool| {
        train_stage(&data(), &model(), &TrainConfig { strict, ..config(6, 6) }).unwrap()
    };
    let (a, b) = (run(true), run(false));
    assert_eq!(a.log, b.log);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn checkpoint_bytes_survive_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_stage(&data(), &model(), &config(2, 2)).unwrap();
    let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    out.checkpoint.save(&p1).unwrap();
    Checkpoint::load(&p1).unwrap().save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn resuming_with_a_different_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..config(2, 2)
    };
    let out = train_stage(&data(), &model(), &cfg).unwrap();
    let ckpt = out.checkpoints.last().unwrap().1.clone().unwrap();
    let resume = TrainConfig {
        resume_from: Some(ckpt),
        output_dir: None,
        ..config(4, 2)
    };
    let other = ModelConfig { shrink_channels: 4, ..model() };
    assert!(train_stage(&data(), &other, &resume).unwrap_err().is_config());
}

#[test]
fn stage_two_warm_start_begins_at_the_stage_one_loss() {
    let dir = tempfile::tempdir().unwrap();
    let s1 = TrainConfig {
        output_dir: Some(dir.path().join("s1")),
        augmentation: AugmentationConfig::identity(32),
        lr_initial: 1e-9,
        ..config(3, 3)
    };
    let samples: Vec<_> = (0..2).map(|i| toy_sample(32, i, 2)).collect();
    let cfg1 = TrainConfig { batch_size: 2, ..s1 };
    let out1 = train_stage(&samples, &model(), &cfg1).unwrap();
    let ckpt = out1.checkpoints.last().unwrap().1.clone().unwrap();
    let cfg2 = TrainConfig {
        stage: 2,
        resume_from: Some(ckpt),
        output_dir: Some(dir.path().join("s2")),
        ..cfg1.clone()
    };
    let full = model().with_ablation(Ablation::I2gfp);
    let out2 = train_stage(&samples, &full, &cfg2).unwrap();
    // zero-initialised GFP inputs to the head: the first stage-2 loss equals
    // the last stage-1 loss up to the negligible learning rate
    let (last1, first2) = (out1.log.last().unwrap().total, out2.log[0].total);
    assert!((last1 - first2).abs() < 1e-6 * last1.max(1.0), "{last1} vs {first2}");
    assert!(out2.checkpoint.params.config.use_gfp);
}
