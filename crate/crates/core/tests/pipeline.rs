//! End-to-end flow through the public API: synthesize, write to disk, load,
//! train with an output directory, reload the checkpoint and report.

use std::path::Path;

use star_core::datasets::{
    generate_synthetic, load_bitemporal, load_single_temporal, write_bitemporal, write_single_temporal,
    AugmentationConfig, Split, SyntheticSceneSpec,
};
use star_core::evaluation::{
    compare_report, evaluate_counts, ChangeHead, EvalOptions, Pcc, ReportOptions, REPORT_FILE,
};
use star_core::model::{Architecture, ChangeMixinConfig, ChangeStar};
use star_core::training::{read_log, LogRecord, TrainConfig, TrainData, Trainer, METRICS_FILE};
use star_core::ErrorClass;

fn tiny_arch() -> Architecture {
    Architecture {
        backbone: "fpn-lite".into(),
        backbone_config: serde_json::json!({"in_channels": 3, "base_width": 4, "feature_channels": 8}),
        mixin: ChangeMixinConfig { layers: 1, width: 4 },
    }
}

fn tiny_config(steps: usize) -> TrainConfig {
    TrainConfig {
        max_steps: steps,
        batch_size: 4,
        eval_every: 2,
        checkpoint_every: 2,
        augmentation: AugmentationConfig {
            crop: 32,
            scale_jitter: [1.0, 1.0],
            ..AugmentationConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn spec() -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        size: 32,
        seed: 11,
        ..SyntheticSceneSpec::default()
    }
}

#[test]
fn datasets_survive_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&spec(), 6, 3).unwrap();
    write_single_temporal(dir.path().join("train"), &data.train, Split::Train).unwrap();
    write_bitemporal(dir.path().join("eval"), &data.eval, Split::Eval).unwrap();
    let train = load_single_temporal(dir.path().join("train")).unwrap();
    let eval = load_bitemporal(dir.path().join("eval")).unwrap();

    assert_eq!(train.len(), 6);
    for (a, b) in data.train.iter().zip(&train) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.mask, b.mask);
        // 8-bit storage: at most half a quantization step of error.
        let worst = a.image.iter().zip(&b.image).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(worst <= 0.5 / 255.0 + 1e-6, "{worst}");
    }
    assert_eq!(eval.len(), 3);
    for (a, b) in data.eval.iter().zip(&eval) {
        assert_eq!((&a.id, &a.change, &a.semantic_t1, &a.semantic_t2), (&b.id, &b.change, &b.semantic_t1, &b.semantic_t2));
    }
}

#[test]
fn train_checkpoint_reload_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let data = generate_synthetic(&spec(), 8, 3).unwrap();
    let model = ChangeStar::new(tiny_arch(), 0).unwrap();
    let mut trainer = Trainer::new(tiny_config(4), model).unwrap().with_output_dir(out).unwrap();
    trainer.run(TrainData::Single(&data.train), Some(&data.eval)).unwrap();

    let log = read_log(&out.join(METRICS_FILE)).unwrap();
    assert_eq!(log, trainer.records());
    let train_steps: Vec<usize> = log
        .iter()
        .filter(|r| matches!(r, LogRecord::Train { .. }))
        .map(|r| r.step())
        .collect();
    assert_eq!(train_steps, [1, 2, 3, 4]);
    let curve: Vec<_> = log.iter().filter_map(|r| r.curve_point()).collect();
    assert_eq!(curve.iter().map(|p| p.step).collect::<Vec<_>>(), [2, 4]);
    for name in ["step_000002", "step_000004", "final"] {
        assert!(out.join("checkpoints").join(name).join("meta.json").exists(), "{name}");
    }

    let opts = EvalOptions::default();
    let mut trained = trainer.into_model();
    let want = evaluate_counts(&mut ChangeHead(&mut trained), &data.eval, &opts).unwrap();
    let (mut reloaded, meta) = ChangeStar::<f32>::from_checkpoint(&out.join("checkpoints/final")).unwrap();
    assert_eq!(meta.step, 4);
    assert_eq!(evaluate_counts(&mut ChangeHead(&mut reloaded), &data.eval, &opts).unwrap(), want);
    let last = curve.last().unwrap();
    assert_eq!(last.changestar, want.scores());

    let mut pcc_model = reloaded.clone();
    let report = compare_report(
        &mut ChangeHead(&mut reloaded),
        &mut Pcc(&mut pcc_model),
        &data.eval,
        out,
        &ReportOptions {
            eval: opts,
            panels: 2,
            curve: Some(curve),
        },
    )
    .unwrap();
    assert_eq!(report.methods.changestar.counts, want);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
    for key in ["eval_pairs", "options", "methods", "delta", "per_pair", "error_maps", "learning_curve"] {
        assert!(json.get(key).is_some(), "report is missing {key}");
    }
    for rel in json["error_maps"].as_array().unwrap() {
        assert!(out.join(rel.as_str().unwrap()).exists());
    }
    assert!(out.join(json["learning_curve"].as_str().unwrap()).exists());
}

#[test]
fn a_checkpoint_refuses_a_different_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&spec(), 4, 0).unwrap();
    let mut trainer = Trainer::new(tiny_config(1), ChangeStar::new(tiny_arch(), 0).unwrap()).unwrap();
    trainer.run(TrainData::Single(&data.train), None).unwrap();
    trainer.save_checkpoint(dir.path()).unwrap();

    let mut other = ChangeStar::<f32>::new(
        Architecture {
            mixin: ChangeMixinConfig { layers: 2, width: 4 },
            ..tiny_arch()
        },
        0,
    )
    .unwrap();
    let err = star_core::model::load_checkpoint(dir.path(), &mut other).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Data);
    assert!(Path::new(&dir.path().join("weights.bin")).exists());
}
