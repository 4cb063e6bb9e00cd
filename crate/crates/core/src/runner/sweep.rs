//! Multi-run studies: accuracy against dataset size, training time and
//! accuracy against node count, and the four-way model comparison.

use crate::error::{ConfigError, RunError};
use crate::evalgen::bayes_accuracy;
use crate::fusion::FusionWeights;
use crate::params::ParamVector;
use crate::runner::config::ExperimentConfig;
use crate::runner::experiment::{report, train_centralized, train_federated, Prepared, RunReport, Trained};
use crate::runner::report::{rate, real, write_csv, write_run};
use std::path::Path;
use std::time::Instant;

/// `count` consecutive seeds starting at `base`.
pub fn seed_list(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Mean over the defined values; `None` if none is defined.
fn mean_defined(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = xs.into_iter().flatten().collect();
    (!defined.is_empty()).then(|| mean(defined))
}

/// One row of a trend table, averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendRow {
    /// Dataset size or node count.
    pub value: usize,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
    pub mean_fpr: Option<f64>,
    pub mean_fnr: Option<f64>,
    /// Mean wall-clock federated training time.
    pub mean_train_seconds: f64,
}

impl TrendRow {
    fn from_reports(value: usize, reports: &[RunReport]) -> Self {
        let acc = || reports.iter().map(|r| r.summary.accuracy);
        TrendRow {
            value,
            runs: reports.len(),
            mean_accuracy: mean(acc()),
            min_accuracy: acc().fold(f64::INFINITY, f64::min),
            max_accuracy: acc().fold(f64::NEG_INFINITY, f64::max),
            mean_fpr: mean_defined(reports.iter().map(|r| r.summary.fpr)),
            mean_fnr: mean_defined(reports.iter().map(|r| r.summary.fnr)),
            mean_train_seconds: mean(reports.iter().map(|r| r.summary.train_seconds)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trend {
    pub rows: Vec<TrendRow>,
    /// Every run, grouped by row, in seed order.
    pub reports: Vec<Vec<RunReport>>,
}

fn write_trend(path: &Path, key: &str, rows: &[TrendRow]) -> Result<(), RunError> {
    let header = [
        key,
        "runs",
        "mean_accuracy",
        "min_accuracy",
        "max_accuracy",
        "mean_fpr",
        "mean_fnr",
        "mean_train_seconds",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.value.to_string(),
                r.runs.to_string(),
                real(r.mean_accuracy),
                real(r.min_accuracy),
                real(r.max_accuracy),
                rate(r.mean_fpr),
                rate(r.mean_fnr),
                real(r.mean_train_seconds),
            ]
        })
        .collect();
    write_csv(path, &header, &body)
}

fn check_seeds(seeds: &[u64]) -> Result<(), ConfigError> {
    if seeds.is_empty() {
        return Err(ConfigError::invalid("seeds", "need at least one seed"));
    }
    Ok(())
}

/// Runs `base` at every dataset size in `sizes` (strictly ascending) for
/// each seed. Writes `size_trend.csv` and per-run outputs under `out`.
pub fn sweep_dataset_size(
    base: &ExperimentConfig,
    sizes: &[usize],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Trend, RunError> {
    if sizes.is_empty() {
        return Err(ConfigError::invalid("sizes", "need at least one size").into());
    }
    if let Some(w) = sizes.windows(2).find(|w| w[1] <= w[0]) {
        let reason = if w[0] == w[1] {
            format!("duplicate size {}", w[0])
        } else {
            format!("sizes must be ascending, {} follows {}", w[1], w[0])
        };
        return Err(ConfigError::invalid("sizes", reason).into());
    }
    check_seeds(seeds)?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &n in sizes {
        let mut runs = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.data.n_samples = n;
            cfg.seed = seed;
            let r = crate::runner::run_experiment(&cfg)?;
            if let Some(dir) = out {
                write_run(&dir.join(format!("size_{n}")).join(format!("seed_{seed}")), &cfg, &r)?;
            }
            runs.push(r);
        }
        rows.push(TrendRow::from_reports(n, &runs));
        reports.push(runs);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_trend(&dir.join("size_trend.csv"), "n_samples", &rows)?;
    }
    Ok(Trend { rows, reports })
}

/// Runs `base` on one dataset per seed, re-partitioned for each node count.
/// Every count shares the seed's test split. Writes `nodes_trend.csv`.
pub fn sweep_nodes(base: &ExperimentConfig, counts: &[usize], seeds: &[u64], out: Option<&Path>) -> Result<Trend, RunError> {
    if counts.is_empty() {
        return Err(ConfigError::invalid("nodes", "need at least one node count").into());
    }
    if counts.contains(&0) {
        return Err(ConfigError::invalid("nodes", "node counts must be at least 1").into());
    }
    check_seeds(seeds)?;
    for (i, c) in counts.iter().enumerate() {
        if counts[..i].contains(c) {
            return Err(ConfigError::invalid("nodes", format!("duplicate node count {c}")).into());
        }
    }
    let mut by_count: Vec<Vec<RunReport>> = vec![Vec::new(); counts.len()];
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.validate()?;
        let weights = cfg.fusion_weights()?;
        let mut prepared = Prepared::new(&cfg)?;
        let (train, test) = prepared.fused(&cfg, &weights)?;
        for (slot, &n) in counts.iter().enumerate() {
            let mut cfg = cfg.clone();
            cfg.clients = n;
            cfg.validate()?;
            prepared.shards = crate::evalgen::partition(prepared.train.labels(), n, prepared.spec.dirichlet_beta, seed)?;
            let started = Instant::now();
            let trained = train_federated(&cfg, &train, &test, &prepared.shards)?;
            let wall = started.elapsed().as_secs_f64();
            let mut r = report(&cfg, &prepared.spec, &weights, train.len(), test.len(), trained);
            r.summary.train_seconds = wall;
            if let Some(dir) = out {
                write_run(&dir.join(format!("nodes_{n}")).join(format!("seed_{seed}")), &cfg, &r)?;
            }
            by_count[slot].push(r);
        }
    }
    let rows = counts
        .iter()
        .zip(&by_count)
        .map(|(&n, runs)| TrendRow::from_reports(n, runs))
        .collect::<Vec<_>>();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_trend(&dir.join("nodes_trend.csv"), "clients", &rows)?;
    }
    Ok(Trend {
        rows,
        reports: by_count,
    })
}

pub const MODEL_NAMES: [&str; 4] = [
    "centralized-unimodal",
    "federated-unimodal",
    "federated-fusion",
    "centralized-fusion",
];

/// One model variant averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub model: &'static str,
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub train_seconds: f64,
    pub detect_seconds: f64,
}

/// Results of one variant on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantRun {
    pub accuracy: f64,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub train_seconds: f64,
    pub detect_seconds: f64,
    pub theta: ParamVector,
}

impl From<&Trained> for VariantRun {
    fn from(t: &Trained) -> Self {
        let last = t.final_row();
        VariantRun {
            accuracy: last.accuracy,
            fpr: last.fpr,
            fnr: last.fnr,
            train_seconds: t.total_train_seconds(),
            detect_seconds: last.detect_seconds,
            theta: t.theta.clone(),
        }
    }
}

/// Every variant on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedComparison {
    pub seed: u64,
    /// Modality chosen for the unimodal rows, by federated training accuracy.
    pub best_modality: usize,
    /// Test accuracy of the federated model on each single modality.
    pub unimodal_federated: Vec<f64>,
    /// Indexed like [`MODEL_NAMES`].
    pub variants: [VariantRun; 4],
    pub bayes_fused: f64,
    pub bayes_unimodal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ModelRow>,
    pub seeds: Vec<SeedComparison>,
}

impl Comparison {
    pub fn accuracy(&self, model: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.model == model).map(|r| r.accuracy)
    }
}

fn training_accuracy(theta: &ParamVector, train: &crate::params::LabeledBatch, threshold: f64) -> Result<f64, RunError> {
    let (c, _) = crate::evalgen::evaluate(theta, train, threshold)?;
    Ok((c.true_pos + c.true_neg) as f64 / c.total() as f64)
}

/// Compares centralized and federated training, each with one modality
/// and with all modalities fused, on the same data and test split.
pub fn compare_seed(cfg: &ExperimentConfig) -> Result<SeedComparison, RunError> {
    cfg.validate()?;
    let prepared = Prepared::new(cfg)?;
    let m = cfg.data.modalities;
    let fused_w = cfg.fusion_weights()?;

    let mut unimodal = Vec::with_capacity(m);
    let mut best: Option<(usize, f64, Trained)> = None;
    for k in 0..m {
        let (train, test) = prepared.fused(cfg, &FusionWeights::one_hot(m, k))?;
        let t = train_federated(cfg, &train, &test, &prepared.shards)?;
        unimodal.push(t.final_row().accuracy);
        let fit = training_accuracy(&t.theta, &train, cfg.threshold)?;
        if best.as_ref().is_none_or(|(_, f, _)| fit > *f) {
            best = Some((k, fit, t));
        }
    }
    let (best_modality, _, fed_uni) = best.expect("at least one modality");
    let uni_w = FusionWeights::one_hot(m, best_modality);
    let (uni_train, uni_test) = prepared.fused(cfg, &uni_w)?;
    let cen_uni = train_centralized(cfg, &uni_train, &uni_test)?;

    let (train, test) = prepared.fused(cfg, &fused_w)?;
    let fed_fused = train_federated(cfg, &train, &test, &prepared.shards)?;
    let cen_fused = train_centralized(cfg, &train, &test)?;

    Ok(SeedComparison {
        seed: cfg.seed,
        best_modality,
        unimodal_federated: unimodal,
        variants: [
            (&cen_uni).into(),
            (&fed_uni).into(),
            (&fed_fused).into(),
            (&cen_fused).into(),
        ],
        bayes_fused: bayes_accuracy(&prepared.spec, &fused_w),
        bayes_unimodal: bayes_accuracy(&prepared.spec, &uni_w),
    })
}

/// [`compare_seed`] over `seeds`, averaged. Writes `compare.csv` and
/// `unimodal.csv` under `out`.
pub fn compare_models(cfg: &ExperimentConfig, seeds: &[u64], out: Option<&Path>) -> Result<Comparison, RunError> {
    check_seeds(seeds)?;
    let per_seed = seeds
        .iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            compare_seed(&c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<ModelRow> = MODEL_NAMES
        .iter()
        .enumerate()
        .map(|(i, &model)| {
            let runs = || per_seed.iter().map(move |s| &s.variants[i]);
            ModelRow {
                model,
                accuracy: mean(runs().map(|v| v.accuracy)),
                fpr: mean_defined(runs().map(|v| v.fpr)),
                fnr: mean_defined(runs().map(|v| v.fnr)),
                train_seconds: mean(runs().map(|v| v.train_seconds)),
                detect_seconds: mean(runs().map(|v| v.detect_seconds)),
            }
        })
        .collect();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let body: Vec<[String; 7]> = rows
            .iter()
            .map(|r| {
                [
                    r.model.to_string(),
                    real(r.accuracy),
                    rate(r.fpr),
                    rate(r.fnr),
                    real(r.train_seconds),
                    real(r.detect_seconds),
                    seeds.len().to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("compare.csv"),
            &["model", "accuracy", "fpr", "fnr", "train_seconds", "detect_seconds", "seeds"],
            &body,
        )?;
        let mut uni: Vec<[String; 4]> = Vec::new();
        for s in &per_seed {
            for (k, acc) in s.unimodal_federated.iter().enumerate() {
                uni.push([
                    s.seed.to_string(),
                    k.to_string(),
                    real(*acc),
                    (k == s.best_modality).to_string(),
                ]);
            }
        }
        write_csv(&dir.join("unimodal.csv"), &["seed", "modality", "accuracy", "selected"], &uni)?;
    }
    Ok(Comparison { rows, seeds: per_seed })
}
