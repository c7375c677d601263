use fpt_core::analysis::{forecast_token_similarity, mixed_weights_similarity_sweep, SweepOptions};
use fpt_core::backbone::{init_random, AttentionMode, BackboneConfig, MixMode};
use fpt_core::data::synthetic::{sine_square_corpus, sinusoid_with_spikes, SinusoidSpec};
use fpt_core::data::TimeSeriesDataset;
use fpt_core::numerics::RandomStream;
use fpt_core::preprocess::PatchConfig;
use fpt_core::tasks::{
    run_anomaly, run_classification, run_few_shot, run_forecast, run_imputation, run_zero_shot, task_model_config,
    Ablation, AnomalyOptions, TaskSetup, TaskSpec, ZeroShotMetric,
};
use fpt_core::FptError;

fn sinusoid(length: usize, noise_std: f64, seed: u64) -> TimeSeriesDataset {
    SinusoidSpec { noise_std, ..SinusoidSpec::new(length, 24.0) }.generate("sinusoid", &mut RandomStream::new(seed)).unwrap()
}

fn scratch(lookback: usize) -> TaskSetup {
    let mut s = TaskSetup::new(lookback);
    s.train.ablation = Ablation::NoPretrain;
    s
}

fn metric(out: &fpt_core::tasks::RunOutput, scope: &str, name: &str) -> f64 {
    out.report.row(scope).and_then(|r| r.get(name)).unwrap_or_else(|| panic!("{scope}/{name} missing"))
}

#[test]
fn anomaly_detector_finds_injected_spikes() {
    let spec = SinusoidSpec { noise_std: 0.5, ..SinusoidSpec::new(1000, 24.0) };
    let ds = sinusoid_with_spikes(&spec, 20, 10.0, &mut RandomStream::new(0)).unwrap();
    let mut setup = scratch(192);
    setup.patch = PatchConfig::new(32, 32).unwrap();
    setup.backbone = BackboneConfig { n_layers: 2, d_model: 4, n_heads: 2, d_ff: 16, ..Default::default() };
    let out = run_anomaly(&ds, &setup, &AnomalyOptions::default(), None).unwrap();
    let f1 = metric(&out, "test", "F1");
    assert!(f1 >= 0.9, "F1 {f1}");
}

#[test]
fn classifier_separates_sines_from_squares() {
    let ds = sine_square_corpus(200, 256, 0.1, &mut RandomStream::new(0)).unwrap();
    let mut setup = scratch(128);
    setup.stride = 16;
    setup.train.learning_rate = 3e-4;
    setup.train.epochs = 30;
    setup.train.early_stop_patience = 10;
    let out = run_classification(&ds, &setup, Some(2), None).unwrap();
    let acc = metric(&out, "test", "accuracy");
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn imputation_beats_the_mean_fill() {
    let ds = sinusoid(2000, 0.05, 0);
    let mut setup = scratch(96);
    setup.stride = 4;
    setup.train.epochs = 5;
    let out = run_imputation(&ds, &setup, &[0.125, 0.25], None).unwrap();
    for scope in ["ratio=0.125", "ratio=0.25", "avg"] {
        let (m, b) = (metric(&out, scope, "MSE"), metric(&out, scope, "baseline_mean_MSE"));
        assert!(m < 0.25 * b, "{scope}: {m} vs mean fill {b}");
    }
}

#[test]
fn few_shot_reports_one_row_per_fraction() {
    let ds = sinusoid(6000, 0.1, 0);
    let mut setup = scratch(96);
    setup.train.epochs = 5;
    let (report, runs) = run_few_shot(&ds, &setup, 24, &[0.05, 0.1], None).unwrap();
    assert_eq!(runs.len(), 2);
    for p in ["percent=0.05", "percent=0.1"] {
        let mse = report.row(p).and_then(|r| r.get("MSE")).unwrap();
        assert!(mse < 0.1, "{p}: {mse}");
    }
    // The smaller fraction sees fewer training windows.
    let windows = |i: usize| runs[i].report.metadata.extra["train_windows"].as_u64().unwrap();
    assert!(windows(0) < windows(1));
    assert!(matches!(run_few_shot(&ds, &setup, 24, &[], None), Err(FptError::InvalidInput(_))));
}

#[test]
fn zero_shot_transfers_to_a_shifted_sinusoid() {
    let src = SinusoidSpec { offset: 5.0, ..SinusoidSpec::new(3000, 24.0) }.generate("src", &mut RandomStream::new(0)).unwrap();
    let tgt = SinusoidSpec { offset: 5.0, phase: 1.0, ..SinusoidSpec::new(1500, 24.0) }
        .generate("tgt", &mut RandomStream::new(1))
        .unwrap();
    let mut setup = scratch(96);
    setup.standardize = false;
    setup.train.epochs = 5;
    let out = run_zero_shot(&src, &tgt, &setup, 24, None, Some(ZeroShotMetric::Smape), None).unwrap();
    let model = metric(&out, "target:horizon=24", "sMAPE");
    let naive = metric(&out, "target:baseline:repeat_last", "sMAPE");
    assert!(model < 0.5 * naive, "sMAPE {model} vs repeat-last {naive}");
}

fn small_setup() -> TaskSetup {
    let mut s = scratch(48);
    s.stride = 4;
    s.backbone = BackboneConfig { n_layers: 2, d_model: 8, n_heads: 2, d_ff: 16, ..Default::default() };
    s.train.epochs = 1;
    s
}

#[test]
fn sweep_is_deterministic_and_bounded() {
    let ds = sinusoid(800, 0.05, 3);
    let setup = small_setup();
    let cfg = task_model_config(&setup, &TaskSpec::Forecast { horizon: 12 }).unwrap();
    let pretrained = init_random(&cfg, &mut RandomStream::new(77)).unwrap();
    let opts = SweepOptions { eval_batch: 4, ..Default::default() };
    let a = mixed_weights_similarity_sweep(Some(&pretrained), &ds, &setup, 12, &[0.0, 0.5, 1.0], &opts).unwrap();
    let b = mixed_weights_similarity_sweep(Some(&pretrained), &ds, &setup, 12, &[0.0, 0.5, 1.0], &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 3);
    for row in &a.rows {
        assert_eq!(row.profile.layer_means.len(), setup.backbone.n_layers + 1);
        assert!(row.profile.layer_means.iter().all(|m| (-1.0..=1.0).contains(m)));
        assert!(row.test_mse.is_finite());
    }
    assert_eq!(a.to_csv().lines().count(), 4);

    let interp = SweepOptions { mix_mode: MixMode::Interpolate, finetune_epochs: 0, ..opts.clone() };
    let c = mixed_weights_similarity_sweep(Some(&pretrained), &ds, &setup, 12, &[0.0], &interp).unwrap();
    let zero = forecast_token_similarity(&pretrained, &ds, &setup, 12, 4, AttentionMode::Softmax).unwrap();
    assert_eq!(c.rows[0].profile, zero);

    let err = mixed_weights_similarity_sweep(None, &ds, &setup, 12, &[0.0], &opts).unwrap_err();
    assert_eq!(err.kind(), "MissingWeights");
    assert!(mixed_weights_similarity_sweep(Some(&pretrained), &ds, &setup, 12, &[1.5], &opts).is_err());
}

#[test]
fn pca_attention_similarity_profile_has_every_layer() {
    let ds = sinusoid(800, 0.05, 4);
    let setup = small_setup();
    let out = run_forecast(&ds, &setup, 12, None).unwrap();
    for mode in [AttentionMode::Softmax, AttentionMode::Pca { m: 2 }] {
        let p = forecast_token_similarity(&out.store, &ds, &setup, 12, 8, mode).unwrap();
        assert_eq!(p.layer_means.len(), 3);
        assert_eq!(p.histograms.len(), 3);
        let n = setup.n_patches().unwrap() as u64;
        for h in &p.histograms {
            assert_eq!(h.iter().sum::<u64>(), 8 * n * (n - 1) / 2);
        }
    }
}
