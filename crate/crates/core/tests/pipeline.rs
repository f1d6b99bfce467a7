use pai_core::data::{apply_normalization, compute_norm_stats, split_stratified, synthesize, DEFAULT_RATIOS};
use pai_core::metrics::{classification_metrics, regression_metrics};
use pai_core::training::{load_run, predict, save_run, train};
use pai_core::{ArchConfig, Backbone, GenConfig, HeadKind, Protocol, Task, TrainConfig};

fn gen(task: Task) -> GenConfig {
    GenConfig {
        record_count: 240,
        feature_count: 4,
        min_length: 4,
        max_length: 10,
        task,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn every_protocol_trains_saves_and_reloads() {
    let ds = synthesize(&gen(Task::Classification)).unwrap();
    let (tr, va, te) = split_stratified(&ds, DEFAULT_RATIOS, 3).unwrap();
    let stats = compute_norm_stats(&tr);
    let (tr, va, te) = (
        apply_normalization(&tr, &stats).unwrap(),
        apply_normalization(&va, &stats).unwrap(),
        apply_normalization(&te, &stats).unwrap(),
    );
    let dir = tempfile::tempdir().unwrap();
    for backbone in Backbone::ALL {
        for protocol in Protocol::ALL {
            let arch = ArchConfig::new(backbone, HeadKind::LinearClassifier, 4);
            let cfg = TrainConfig {
                epochs: 3,
                protocol,
                seed: 5,
                ..Default::default()
            };
            let run = train(&tr, &va, &arch, &cfg).unwrap();
            assert_eq!(run.prompt.is_some(), protocol == Protocol::Pai);
            let scores = predict(&run, &te).unwrap();
            assert!(scores.iter().all(|p| (0.0..=1.0).contains(p)));
            let m = classification_metrics(&te.labels(), &scores).unwrap();
            assert!((0.0..=1.0).contains(&m.auroc), "{backbone}/{protocol}");

            let path = dir.path().join(format!("{backbone}-{protocol}"));
            save_run(&run, &path).unwrap();
            let back = load_run(&path).unwrap();
            assert_eq!(predict(&back, &te).unwrap(), scores, "{backbone}/{protocol}");
        }
    }
}

#[test]
fn regression_pipeline() {
    let ds = synthesize(&gen(Task::Regression)).unwrap();
    let (tr, va, te) = split_stratified(&ds, DEFAULT_RATIOS, 3).unwrap();
    let arch = ArchConfig::new(Backbone::Gru, HeadKind::MlpRegressor, 4);
    let run = train(&tr, &va, &arch, &TrainConfig { epochs: 4, ..Default::default() }).unwrap();
    let m = regression_metrics(&te.labels(), &predict(&run, &te).unwrap()).unwrap();
    assert!(m.mse.is_finite() && (m.rmse * m.rmse - m.mse).abs() < 1e-9);
    assert!(m.mae <= m.rmse + 1e-12);
}
