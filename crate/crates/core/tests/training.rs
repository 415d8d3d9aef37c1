use simmetric::data::{PairTable, Provenance, SimilarityDataset, WordPair, EmbeddingStore, Normalization};
use simmetric::eval::{baseline_validation, score_cell, score_validation, significance};
use simmetric::experiment::synth::{generate, SyntheticSpec};
use simmetric::metric::{cosine, Embedding, MetricFactor};
use simmetric::training::{
    make_folds, mse_loss, run_grid, train_fold, GridSpec, InitMode, PairObjective, Objective, TrainConfig,
};

fn recovery_table(dim: usize) -> PairTable {
    let spec = SyntheticSpec {
        dim,
        n_words: 40,
        hidden_factor_scale: 1.0,
        noise_sigma: 0.02,
        seed: 7,
    };
    let data = generate(&spec).unwrap();
    PairTable::build(&data.dataset, &data.store).unwrap()
}

fn recovery_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        seed: 7,
        init_mode: InitMode::Identity,
        ..TrainConfig::default()
    }
}

/// Positive-orthant vectors, so plain cosines already lie in [0, 1].
fn cosine_target_table() -> PairTable {
    let mut store = EmbeddingStore::new("pos", 5, Normalization::Exact);
    let mut words = Vec::new();
    for i in 0..12 {
        let v: Vec<f64> = (0..5).map(|j| 1.0 + ((i * 7 + j * 3) % 11) as f64).collect();
        let e = Embedding::new(format!("w{i}"), v).unwrap();
        store.insert(e.clone()).unwrap();
        words.push(e);
    }
    let mut pairs = Vec::new();
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            pairs.push(WordPair {
                word_a: words[i].word().into(),
                word_b: words[j].word().into(),
                target: cosine(&words[i], &words[j]).unwrap(),
                group: None,
            });
        }
    }
    let dataset = SimilarityDataset::new("cosine", pairs, Provenance::Plain).unwrap();
    PairTable::build(&dataset, &store).unwrap()
}

#[test]
fn already_optimal_start_stays_put() {
    let table = cosine_target_table();
    let fold = &make_folds(table.len(), 5, 1).unwrap()[0];
    let cfg = TrainConfig {
        init_mode: InitMode::Identity,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let model = train_fold(&table, fold, &cfg).unwrap();
    assert!(model.initial_train_loss < 1e-24, "{}", model.initial_train_loss);
    assert!(model.factor.matrix().max_abs_diff(MetricFactor::identity(5).matrix()) < 1e-9);
}

#[test]
fn cosine_targets_give_a_perfect_baseline() {
    let table = cosine_target_table();
    let folds = make_folds(table.len(), 3, 2).unwrap();
    let base = baseline_validation(&folds, &table).unwrap();
    assert!((base.mean_r - 1.0).abs() < 1e-9);
    assert!((base.mean_rho - 1.0).abs() < 1e-9);
}

#[test]
fn recovery_beats_identity_on_validation_loss() {
    let table = recovery_table(8);
    let cfg = recovery_config();
    for fold in make_folds(table.len(), 5, cfg.seed).unwrap() {
        let identity = MetricFactor::identity(8);
        let mut objective = PairObjective::new(&table, &fold.train, &fold.val).unwrap();
        let identity_val = objective.val_loss(&identity).unwrap();
        let model = train_fold(&table, &fold, &cfg).unwrap();
        assert!(model.best_val_loss < identity_val, "fold {}: {} vs {identity_val}", fold.index, model.best_val_loss);
        assert!(model.final_train_loss < model.initial_train_loss);
        let min_trace = model.trace.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert!(model.best_val_loss <= min_trace);
    }
}

#[test]
fn recovery_raises_mean_r_over_baseline() {
    let table = recovery_table(8);
    let cfg = recovery_config();
    let folds = make_folds(table.len(), 5, cfg.seed).unwrap();
    let models: Vec<_> = folds.iter().map(|f| train_fold(&table, f, &cfg).unwrap()).collect();
    let cell = score_cell(&models, &table).unwrap();
    assert!(cell.model.mean_r > cell.baseline.mean_r, "{} vs {}", cell.model.mean_r, cell.baseline.mean_r);
    // baseline does not depend on the learning rate
    let slower = TrainConfig { learning_rate: 1e-5, ..cfg };
    let models: Vec<_> = folds.iter().map(|f| train_fold(&table, f, &slower).unwrap()).collect();
    assert_eq!(score_cell(&models, &table).unwrap().baseline, cell.baseline);
}

#[test]
fn stopped_runs_end_on_strict_increases_after_the_gate() {
    let table = recovery_table(8);
    let cfg = TrainConfig {
        learning_rate: 5e-2,
        early_stop_loss_gate: 0.5,
        early_stop_patience: 3,
        max_epochs: 400,
        ..recovery_config()
    };
    let mut stopped = 0;
    for fold in make_folds(table.len(), 5, cfg.seed).unwrap() {
        let model = train_fold(&table, &fold, &cfg).unwrap();
        if !model.stopped_early {
            continue;
        }
        stopped += 1;
        let vals: Vec<f64> = model.trace.iter().map(|e| e.val_loss).collect();
        let n = vals.len();
        assert!(vals[n - 1 - cfg.early_stop_patience..].windows(2).all(|w| w[1] > w[0]));
        assert!(vals[..n - cfg.early_stop_patience].iter().any(|&v| v < cfg.early_stop_loss_gate));
    }
    assert!(stopped > 0, "no fold stopped early");
}

#[test]
fn grid_shape_and_determinism() {
    let table = recovery_table(4);
    let grid = GridSpec::default();
    let base = TrainConfig {
        max_epochs: 20,
        ..recovery_config()
    };
    let a = run_grid(&table, &grid, &base).unwrap();
    let b = run_grid(&table, &grid, &base).unwrap();
    assert_eq!(a.cells.len(), 9);
    for cell in &a.cells {
        assert_eq!(cell.models().unwrap().len(), cell.folds);
    }
    assert_eq!(a.best_pearson, b.best_pearson);
    assert_eq!(a.best_spearman, b.best_spearman);
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!(x.score(), y.score());
    }
}

#[test]
fn one_cell_grid_equals_direct_training() {
    let table = recovery_table(4);
    let base = TrainConfig {
        max_epochs: 60,
        ..recovery_config()
    };
    let grid = GridSpec {
        learning_rates: vec![1e-2],
        fold_counts: vec![6],
    };
    let result = run_grid(&table, &grid, &base).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        folds: 6,
        ..base
    };
    let models: Vec<_> = make_folds(table.len(), 6, cfg.seed)
        .unwrap()
        .iter()
        .map(|f| train_fold(&table, f, &cfg).unwrap())
        .collect();
    assert_eq!(result.cells[0].score().unwrap(), &score_cell(&models, &table).unwrap());
    assert_eq!(score_validation(&models, &table).unwrap(), result.cells[0].score().unwrap().model);
}

#[test]
fn mse_of_predictions() {
    assert_eq!(mse_loss(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
    assert!((mse_loss(&[0.0, 1.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
}

/// Two-sided t-test p-value by Simpson quadrature of the t density, with
/// its own log-gamma.
fn oracle_p(r: f64, n: usize) -> f64 {
    fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let density = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let steps = 20_000;
    let h = t.abs() / steps as f64;
    let mut sum = density(0.0) + density(t.abs());
    for i in 1..steps {
        sum += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half_mass = sum * h / 3.0;
    2.0 * (0.5 - half_mass)
}

#[test]
fn significance_matches_quadrature_oracle() {
    let p = significance(0.5, 30);
    assert!((p - oracle_p(0.5, 30)).abs() < 1e-8, "{p}");
    assert!((p - 0.0049).abs() < 1e-4);
    for (r, n) in [(0.1, 10), (0.3, 100), (-0.7, 12), (0.05, 400)] {
        assert!((significance(r, n) - oracle_p(r, n)).abs() < 1e-8, "r={r} n={n}");
    }
}
