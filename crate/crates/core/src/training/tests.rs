use super::*;
use crate::autodiff::sigmoid;
use crate::data::{synthesize, GenConfig, MissingMode, Provenance, TimeSeriesRecord};
use crate::models::{Backbone, HeadKind};

fn one_record(x: f64, y: f64) -> Dataset {
    let r = TimeSeriesRecord::new("a", 1, 1, vec![x], vec![true], y).unwrap();
    Dataset::new(vec![r], 1, Task::Classification, Provenance::Memory).unwrap()
}

fn sgd(protocol: Protocol, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        lr_model: lr,
        lr_prompt: lr,
        optimizer: Optimizer::Sgd,
        protocol,
        seed: 5,
        ..Default::default()
    }
}

fn small_synthetic(task: Task, noise: f64, seed: u64) -> Dataset {
    synthesize(&GenConfig {
        record_count: 160,
        feature_count: 3,
        min_length: 4,
        max_length: 8,
        missing_rate: 0.3,
        missing_mode: MissingMode::Informative,
        task,
        label_noise: noise,
        seed,
    })
    .unwrap()
}

#[test]
fn one_sgd_step_matches_hand_derivation() {
    let arch = ArchConfig {
        backbone: Backbone::Rnn,
        layers: 1,
        hidden_dim: 1,
        head: HeadKind::LinearClassifier,
        input_dim: 1,
    };
    let (x, y, lr) = (0.7, 1.0, 0.1);
    let ds = one_record(x, y);
    let cfg = sgd(Protocol::Zero, 1, lr);
    let init = ModelParams::init(&arch, cfg.seed).unwrap();
    let p = |name: &str| init.get(name).unwrap().data()[0];
    let (a, u, c, h, k) = (p("rnn.0.w_ih"), p("rnn.0.w_hh"), p("rnn.0.b"), p("head.w"), p("head.b"));

    // e = tanh(a·x + u·0 + c), z = h·e + k, dL/dz = σ(z) − y
    let e = (a * x + c).tanh();
    let dz = sigmoid(h * e + k) - y;
    let de = dz * h;
    let dpre = de * (1.0 - e * e);
    let expected = [
        ("rnn.0.w_ih", a - lr * dpre * x),
        ("rnn.0.w_hh", u),
        ("rnn.0.b", c - lr * dpre),
        ("head.w", h - lr * dz * e),
        ("head.b", k - lr * dz),
    ];

    let run = train(&ds, &ds, &arch, &cfg).unwrap();
    for (name, want) in expected {
        let got = run.model.get(name).unwrap().data()[0];
        assert!((got - want).abs() < 1e-12, "{name}: {got} vs {want}");
    }
}

#[test]
fn fully_observed_pai_matches_zero_protocol() {
    let ds = synthesize(&GenConfig {
        record_count: 60,
        feature_count: 2,
        min_length: 3,
        max_length: 6,
        missing_rate: 0.0,
        ..Default::default()
    })
    .unwrap();
    let arch = ArchConfig::new(Backbone::Gru, HeadKind::LinearClassifier, 2);
    let mut cfg = TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed: 2,
        ..Default::default()
    };
    let zero = train(&ds, &ds, &arch, &cfg).unwrap_or_else(|e| panic!("{e}"));
    cfg.protocol = Protocol::Zero;
    let base = train(&ds, &ds, &arch, &cfg).unwrap();
    let losses = |r: &TrainedRun| r.history.iter().map(|h| h.train_loss).collect::<Vec<_>>();
    assert_eq!(losses(&zero), losses(&base));
}

#[test]
fn rejects_bad_configs() {
    let ds = one_record(0.1, 1.0);
    let arch = ArchConfig::new(Backbone::Rnn, HeadKind::LinearClassifier, 1);
    let mut cfg = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    assert!(matches!(train(&ds, &ds, &arch, &cfg), Err(Error::InvalidArgument(_))));
    cfg.epochs = 1;
    cfg.lr_prompt = -1.0;
    assert!(matches!(train(&ds, &ds, &arch, &cfg), Err(Error::InvalidArgument(_))));
    let wide = ArchConfig::new(Backbone::Rnn, HeadKind::LinearClassifier, 2);
    assert!(matches!(
        train(&ds, &ds, &wide, &TrainConfig::default()),
        Err(Error::InvalidInput(_))
    ));
    let reg = ArchConfig::new(Backbone::Rnn, HeadKind::MlpRegressor, 1);
    assert!(matches!(
        train(&ds, &ds, &reg, &TrainConfig::default()),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn divergence_reports_position() {
    let ds = small_synthetic(Task::Regression, 1.0, 3);
    let arch = ArchConfig::new(Backbone::Rnn, HeadKind::MlpRegressor, 3);
    let cfg = TrainConfig {
        epochs: 5,
        lr_model: 1e200,
        optimizer: Optimizer::Sgd,
        protocol: Protocol::Zero,
        ..Default::default()
    };
    match train(&ds, &ds, &arch, &cfg) {
        Err(Error::Diverged { epoch, loss, .. }) => {
            assert!(epoch >= 1);
            assert!(!loss.is_finite());
        }
        other => panic!("expected divergence, got {:?}", other.map(|r| r.history)),
    }
}

#[test]
fn predict_is_frozen_and_deterministic() {
    let ds = small_synthetic(Task::Classification, 1.0, 4);
    let arch = ArchConfig::new(Backbone::Attention, HeadKind::LinearClassifier, 3);
    let cfg = TrainConfig {
        epochs: 2,
        seed: 1,
        ..Default::default()
    };
    let run = train(&ds, &ds, &arch, &cfg).unwrap();
    assert!(run.prompt.as_ref().unwrap().is_frozen());
    let hash = run.model.hash();
    let a = predict(&run, &ds).unwrap();
    let b = predict(&run, &ds).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), ds.len());
    assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(run.model.hash(), hash);
    assert!(predict(&run, &ds.subset(&[])).unwrap().is_empty());
    let other = small_synthetic(Task::Classification, 1.0, 4);
    let wide = synthesize(&GenConfig {
        record_count: 20,
        feature_count: 4,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(predict(&run, &wide), Err(Error::InvalidInput(_))));
    assert_eq!(predict(&run, &other).unwrap(), a);
}

#[test]
fn batched_prediction_equals_one_at_a_time() {
    let ds = small_synthetic(Task::Regression, 1.0, 8);
    for backbone in Backbone::ALL {
        let arch = ArchConfig::new(backbone, HeadKind::MlpRegressor, 3);
        let mut run = train(&ds, &ds, &arch, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        let batched = predict(&run, &ds).unwrap();
        run.manifest.config.batch_size = 1;
        assert_eq!(predict(&run, &ds).unwrap(), batched, "{backbone}");
    }
}

#[test]
fn baselines_create_no_prompt() {
    let ds = small_synthetic(Task::Classification, 1.0, 2);
    let arch = ArchConfig::new(Backbone::Rnn, HeadKind::LinearClassifier, 3);
    let bare = ModelParams::init(&arch, 0).unwrap().count();
    for protocol in [Protocol::Locf, Protocol::Zero, Protocol::Mean] {
        let cfg = TrainConfig { epochs: 1, protocol, ..Default::default() };
        let run = train(&ds, &ds, &arch, &cfg).unwrap();
        assert!(run.prompt.is_none());
        assert_eq!(run.manifest.param_count.prompt_count, 0);
        assert_eq!(run.manifest.param_count.model_count, bare);
    }
    let run = train(&ds, &ds, &arch, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    assert_eq!(run.manifest.param_count.prompt_count, 3);
}

#[test]
fn selection_epoch_holds_the_best_validation_score() {
    let ds = small_synthetic(Task::Classification, 0.5, 6);
    let (tr, va, _) = crate::data::split_stratified(&ds, crate::data::DEFAULT_RATIOS, 1).unwrap();
    let arch = ArchConfig::new(Backbone::Gru, HeadKind::LinearClassifier, 3);
    let cfg = TrainConfig { epochs: 8, seed: 3, ..Default::default() };
    let run = train(&tr, &va, &arch, &cfg).unwrap();
    assert_eq!(run.history.len(), 8);
    let best = run.history.iter().map(|h| h.val_metric).fold(f64::MIN, f64::max);
    let sel = run.selection_epoch();
    assert_eq!(run.history[sel - 1].val_metric, best);
    assert!(run.history[..sel - 1].iter().all(|h| h.val_metric < best));
    // The kept weights reproduce the recorded validation score.
    let scores = predict(&run, &va).unwrap();
    assert_eq!(crate::metrics::auprc(&va.labels(), &scores).unwrap(), best);
}

#[test]
fn loss_descends_on_a_learnable_task() {
    for protocol in Protocol::ALL {
        for seed in [1, 2] {
            let ds = small_synthetic(Task::Classification, 0.0, 10 + seed);
            let arch = ArchConfig::new(Backbone::Gru, HeadKind::LinearClassifier, 3);
            let cfg = TrainConfig { epochs: 20, protocol, seed, ..Default::default() };
            let run = train(&ds, &ds, &arch, &cfg).unwrap();
            let (first, last) = (run.history[0].train_loss, run.history[19].train_loss);
            assert!(last < first, "{protocol} seed {seed}: {first} -> {last}");
        }
    }
}

#[test]
fn two_rate_equals_single_group_for_equal_rates() {
    let ds = small_synthetic(Task::Classification, 1.0, 9);
    let arch = ArchConfig::new(Backbone::Gru, HeadKind::LinearClassifier, 3);
    let model = ModelParams::init(&arch, 4).unwrap();
    let prompt = FeaturePrompt::init(PromptInit::Uniform, 3, None, 4).unwrap();
    let settings = OptimizerSettings { kind: Optimizer::Sgd, ..Default::default() };
    let mut two = ParamGroups::two_rate(model.clone(), Some(prompt.clone()), 0.05, 0.05, settings).unwrap();
    let mut one = ParamGroups::single(model, Some(prompt), 0.05, settings).unwrap();
    let prep = prepare(&ds, Protocol::Pai, &[0.0; 3]).unwrap();
    let mut tape = Tape::new();
    for step in 0..5 {
        let idx: Vec<usize> = (step * 16..(step + 1) * 16).collect();
        let batch = make_batch(&prep, &idx).unwrap();
        let la = compute_gradients(&mut two, &batch, &mut tape).unwrap();
        async_update(&mut two).unwrap();
        let lb = compute_gradients(&mut one, &batch, &mut tape).unwrap();
        async_update(&mut one).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
    }
    assert_eq!(two.model.hash(), one.model.hash());
    assert_eq!(two.prompt.unwrap().values(), one.prompt.unwrap().values());
}

#[test]
fn run_directory_round_trip() {
    let ds = small_synthetic(Task::Classification, 1.0, 5);
    let arch = ArchConfig::new(Backbone::Rnn, HeadKind::LinearClassifier, 3);
    let run = train(&ds, &ds, &arch, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_run(&run, dir.path()).unwrap();
    for f in ["manifest.json", "history.csv", "checkpoint/model.json", "checkpoint/prompt.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = load_run(dir.path()).unwrap();
    assert_eq!(back.history, run.history);
    assert_eq!(back.manifest, run.manifest);
    assert_eq!(back.model.hash(), run.model.hash());
    assert!(back.prompt.as_ref().unwrap().is_frozen());
    assert_eq!(predict(&back, &ds).unwrap(), predict(&run, &ds).unwrap());
}

#[test]
fn batches_are_time_major_with_observed_padding() {
    let a = TimeSeriesRecord::new("a", 2, 1, vec![1.0, 2.0], vec![true, false], 0.0).unwrap();
    let b = TimeSeriesRecord::new("b", 1, 1, vec![3.0], vec![true], 1.0).unwrap();
    let ds = Dataset::new(vec![a, b], 1, Task::Classification, Provenance::Memory).unwrap();
    let prep = prepare(&ds, Protocol::Pai, &[0.0]).unwrap();
    let batch = make_batch(&prep, &[0, 1]).unwrap();
    assert_eq!(batch.x, vec![1.0, 3.0, 0.0, 0.0]);
    assert_eq!(batch.mask, vec![true, true, false, true]);
    assert_eq!(batch.layout.lengths, vec![2, 1]);
    assert_eq!(batch.targets, vec![0.0, 1.0]);
    assert!(make_batch(&prep, &[]).is_err());
    let locf = prepare(&ds, Protocol::Locf, &[0.0]).unwrap();
    assert_eq!(locf.records[0].values, vec![1.0, 1.0]);
    assert!(locf.records[0].mask.iter().all(|&m| m));
    let mean = prepare(&ds, Protocol::Mean, &observed_means(&ds)).unwrap();
    assert_eq!(mean.records[0].values, vec![1.0, 2.0]);
}
