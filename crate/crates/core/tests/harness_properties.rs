use optbench_core::data::{
    run_pipeline, stratified_folds, PipelineMode, PipelineOptions, PreparedData, RawTable, FEATURE_NAMES,
};
use optbench_core::harness::{
    epoch_order, run_benchmark, snapshot_init, train_run, EarlyStopping, ExperimentConfig, RunReport, RunSettings,
    TrainLossMode,
};
use optbench_core::network::Params;
use optbench_core::optim::OptimizerKind;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(n: usize, seed: u64) -> RawTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let target = (i % 2) as f64;
            let shift = if target == 1.0 { 0.6 } else { -0.6 };
            let mut r: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0) + shift).collect();
            r[3] = rng.gen_range(100.0..180.0);
            r[4] = if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(150.0..350.0)
            };
            r.push(target);
            r
        })
        .collect();
    RawTable {
        header: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
    }
}

fn prepared() -> PreparedData {
    run_pipeline(&table(240, 1), &PipelineOptions::new(PipelineMode::LeakageSafe, 5)).unwrap()
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        epochs: 6,
        ..ExperimentConfig::default()
    }
}

/// Everything but the wall-clock time.
fn stable(r: &RunReport) -> RunReport {
    RunReport {
        wall_clock_seconds: 0.0,
        ..r.clone()
    }
}

fn reports(data: &PreparedData, cfg: &ExperimentConfig) -> (String, Vec<RunReport>) {
    let b = run_benchmark(data, cfg).unwrap();
    let runs = b.runs.iter().map(|r| stable(r.result.as_ref().unwrap())).collect();
    (b.snapshot_hash, runs)
}

#[test]
fn every_run_starts_from_the_snapshot() {
    let data = prepared();
    let (hash, runs) = reports(&data, &small_config());
    assert_eq!(runs.len(), 10);
    assert!(runs.iter().all(|r| r.init_hash == hash));
    assert_eq!(hash, snapshot_init(small_config().seeds.init, 10).unwrap().hash());
}

#[test]
fn reports_are_deterministic_and_independent_of_thread_count() {
    let data = prepared();
    let cfg = small_config();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| reports(&data, &cfg));
    let b = wide.install(|| reports(&data, &cfg));
    assert_eq!(a, b);
}

#[test]
fn repeated_optimizer_gives_identical_reports() {
    let data = prepared();
    let mut cfg = small_config();
    let sgd = cfg.spec_for(OptimizerKind::Sgd);
    cfg.optimizers = vec![sgd, sgd];
    let (_, runs) = reports(&data, &cfg);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn full_pass_train_loss_is_an_eval_mode_loss() {
    let data = prepared();
    let mut cfg = small_config();
    cfg.train_loss = TrainLossMode::FullPass;
    cfg.optimizers = vec![cfg.spec_for(OptimizerKind::Adam)];
    let (_, runs) = reports(&data, &cfg);
    let r = &runs[0];
    assert_eq!(r.log.len(), 6);
    assert!(r.log.train_losses().iter().all(|l| l.is_finite() && *l > 0.0));
}

#[test]
fn early_stopping_epoch_accounting() {
    let data = prepared();
    let init = snapshot_init(9, 10).unwrap();
    let spec = ExperimentConfig::default()
        .spec_for(OptimizerKind::Nadam)
        .with_learning_rate(0.05);
    for patience in [1, 3] {
        let settings = RunSettings {
            epochs: 40,
            batch_size: 16,
            shuffle_seed: 2,
            dropout_seed: 3,
            dropout_rate: 0.2,
            early_stopping: Some(EarlyStopping {
                patience,
                restore_best: true,
            }),
            train_loss: TrainLossMode::BatchMean,
        };
        let r = train_run(&init, &spec, &data.train(), &data.validation(), &data.test(), &settings).unwrap();
        assert!(r.log.len() <= 40);
        let best = r.best_epoch.unwrap();
        if r.stopped_early {
            assert_eq!(r.log.len(), best + patience + 1);
        }
        assert_eq!(r.final_validation_loss, r.log.epochs[best].validation_loss);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn each_row_appears_once_per_epoch(n in 1usize..300, seed in any::<u64>(), epoch in 0usize..100, batch in 1usize..64) {
        let order = epoch_order(n, seed, epoch);
        let mut seen = vec![0u32; n];
        for chunk in order.chunks(batch) {
            prop_assert!(chunk.len() <= batch);
            for &i in chunk {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn folds_partition_the_pool(neg in 5usize..80, pos in 5usize..80, k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(neg >= k && pos >= k);
        let mut y = vec![0.0; neg];
        y.extend(vec![1.0; pos]);
        let pool: Vec<usize> = (0..y.len()).collect();
        let folds = stratified_folds(&pool, &y, k, seed).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, pool);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let ratio = pos as f64 / (neg + pos) as f64;
        for f in &folds {
            let p = f.iter().filter(|&&i| y[i] == 1.0).count() as f64;
            prop_assert!((p - f.len() as f64 * ratio).abs() <= 1.0);
        }
    }

    #[test]
    fn snapshot_bytes_round_trip(seed in any::<u64>()) {
        let s = snapshot_init(seed, 10).unwrap();
        let back = Params::from_bytes(s.bytes()).unwrap();
        prop_assert_eq!(back.content_hash(), s.hash());
        prop_assert_eq!(back.to_bytes(), s.bytes().to_vec());
    }
}
