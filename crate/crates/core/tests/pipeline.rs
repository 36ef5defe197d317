//! Training, checkpoint and inference round-trips.

use std::fs;
use std::path::{Path, PathBuf};

use lesionseg::data::{write_synthetic, Dataset, SplitSpec};
use lesionseg::model::{checkpoint, ModelConfig};
use lesionseg::train::{evaluate, predict, predict_mask, train, DatasetSource, TrainConfig, BEST_DIR, FINAL_DIR, LOG_FILE, NAN_DUMP_FILE};
use lesionseg::Error;

fn tiny(out: &Path) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 2,
        lr: 1e-3,
        model: ModelConfig::toy(32, 32, 4),
        dataset: DatasetSource::Synthetic { count: 5, seed: 2 },
        split: SplitSpec::new(4, 1),
        out_dir: out.to_path_buf(),
        ..TrainConfig::default()
    }
}

#[test]
fn identical_configs_reproduce_the_metric_log() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = train(&tiny(&a)).unwrap();
    let rb = train(&tiny(&b)).unwrap();
    assert_eq!(fs::read(a.join(LOG_FILE)).unwrap(), fs::read(b.join(LOG_FILE)).unwrap());
    assert_eq!(ra.step_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), rb.step_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(ra.epochs.iter().all(|e| e.train_loss.is_finite()));
    for dir in [BEST_DIR, FINAL_DIR] {
        assert_eq!(fs::read(a.join(dir).join(checkpoint::WEIGHTS_FILE)).unwrap(), fs::read(b.join(dir).join(checkpoint::WEIGHTS_FILE)).unwrap());
    }

    let c = tmp.path().join("c");
    let rc = train(&TrainConfig { seed: 1, ..tiny(&c) }).unwrap();
    assert_ne!(ra.step_losses, rc.step_losses);
}

#[test]
fn saved_model_evaluates_identically_after_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    train(&cfg).unwrap();
    let dataset = cfg.load_dataset().unwrap();
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let first = checkpoint::load::<f32>(tmp.path().join(FINAL_DIR)).unwrap();
    let second = checkpoint::load::<f32>(tmp.path().join(FINAL_DIR)).unwrap();
    let (ra, sa) = evaluate(&first, &dataset, &indices, 2).unwrap();
    let (rb, sb) = evaluate(&second, &dataset, &indices, 3).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(sa, sb);

    let resaved = tmp.path().join("resaved");
    checkpoint::save(&first, &resaved).unwrap();
    let weights = |d: PathBuf| fs::read(d.join(checkpoint::WEIGHTS_FILE)).unwrap();
    assert_eq!(weights(tmp.path().join(FINAL_DIR)), weights(resaved));
}

#[test]
fn written_masks_reload_to_the_in_memory_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_synthetic(&data, 3, 4, (40, 56)).unwrap();
    let cfg = TrainConfig {
        dataset: DatasetSource::Dir { path: data.clone() },
        split: SplitSpec::new(2, 1),
        epochs: 1,
        ..tiny(&tmp.path().join("run"))
    };
    train(&cfg).unwrap();
    let net = checkpoint::load::<f32>(tmp.path().join("run").join(FINAL_DIR)).unwrap();
    let mut images: Vec<PathBuf> = fs::read_dir(data.join("images")).unwrap().map(|e| e.unwrap().path()).collect();
    images.sort();
    let out = tmp.path().join("pred");
    for (p, path) in predict(&net, &images, &out).unwrap().into_iter().zip(&images) {
        let (mask_path, _) = p.result.unwrap();
        let (_, want) = predict_mask(&net, &image::open(path).unwrap().to_rgb8()).unwrap();
        let got = image::open(&mask_path).unwrap().to_luma8();
        assert_eq!(got, want);
    }
}

#[test]
fn loading_a_directory_twice_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    write_synthetic(tmp.path(), 4, 9, (50, 70)).unwrap();
    let a = Dataset::load_dir(tmp.path(), (32, 48)).unwrap();
    let b = Dataset::load_dir(tmp.path(), (32, 48)).unwrap();
    assert_eq!(a.samples, b.samples);
    assert!(a.samples.iter().all(|s| s.mask.iter().all(|&v| v <= 1)));
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        lr: 1e30,
        epochs: 5,
        ..tiny(tmp.path())
    };
    let err = train(&cfg).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    assert!(tmp.path().join(NAN_DUMP_FILE).exists());
    let log = fs::read_to_string(tmp.path().join(LOG_FILE)).unwrap();
    for line in log.lines() {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(row["train_loss"].as_f64().is_some_and(f64::is_finite));
    }
}
