use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{significance, CorrelationReport};
use crate::data::PairTable;
use crate::error::{Error, Result};
use crate::metric::MetricFactor;
use crate::training::{predict_pairs, FoldSplit, ProjectionCache, TrainedModel};

/// Correlation of one fold's (or one model's) predictions, or the reason it
/// could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold: usize,
    pub report: Option<CorrelationReport>,
    /// Groups averaged into the report; 0 for ungrouped scoring.
    pub groups_used: usize,
    pub skipped: Option<String>,
}

/// Fold-averaged correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub per_fold: Vec<FoldScore>,
    /// Arithmetic mean of per-fold Pearson r over scored folds.
    pub mean_r: f64,
    /// Arithmetic mean of per-fold Spearman ρ over scored folds.
    pub mean_rho: f64,
    pub median_p_r: f64,
    pub median_p_rho: f64,
}

impl Aggregate {
    fn from_folds(per_fold: Vec<FoldScore>) -> Result<Self> {
        let reports: Vec<&CorrelationReport> = per_fold.iter().filter_map(|f| f.report.as_ref()).collect();
        if reports.is_empty() {
            return Err(Error::UndefinedCorrelation("no fold could be scored".into()));
        }
        let n = reports.len() as f64;
        let mean_r = reports.iter().map(|r| r.pearson).sum::<f64>() / n;
        let mean_rho = reports.iter().map(|r| r.spearman).sum::<f64>() / n;
        let median_p_r = median(reports.iter().map(|r| r.p_pearson).collect());
        let median_p_rho = median(reports.iter().map(|r| r.p_spearman).collect());
        Ok(Self {
            per_fold,
            mean_r,
            mean_rho,
            median_p_r,
            median_p_rho,
        })
    }

    pub fn folds_scored(&self) -> usize {
        self.per_fold.iter().filter(|f| f.report.is_some()).count()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Trained-model and identity-baseline aggregates over the same folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub model: Aggregate,
    pub baseline: Aggregate,
}

/// Correlation over `pairs`. When the table spans several groups, the
/// correlation is computed per group and averaged without weights; groups
/// with fewer than 2 pairs, or with constant values, are left out.
fn correlate(table: &PairTable, pairs: &[usize], predictions: &[f64]) -> Result<(CorrelationReport, usize)> {
    let targets: Vec<f64> = pairs.iter().map(|&p| table.targets[p]).collect();
    if table.group_names.len() < 2 {
        return Ok((CorrelationReport::compute(predictions, &targets)?, 0));
    }

    let mut by_group: BTreeMap<Option<usize>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, &p) in pairs.iter().enumerate() {
        let entry = by_group.entry(table.groups[p]).or_default();
        entry.0.push(predictions[i]);
        entry.1.push(targets[i]);
    }
    let mut reports = Vec::new();
    for (group, (pred, targ)) in &by_group {
        let name = group.map_or("<ungrouped>", |g| table.group_names[g].as_str());
        if pred.len() < 2 {
            log::info!("group `{name}` has {} pair(s) here; left out of the group mean", pred.len());
            continue;
        }
        match CorrelationReport::compute(pred, targ) {
            Ok(r) => reports.push(r),
            Err(Error::UndefinedCorrelation(why)) => {
                log::info!("group `{name}` left out of the group mean: {why}");
            }
            Err(e) => return Err(e),
        }
    }
    if reports.is_empty() {
        return Err(Error::UndefinedCorrelation("no group could be scored".into()));
    }
    let k = reports.len() as f64;
    let pearson = reports.iter().map(|r| r.pearson).sum::<f64>() / k;
    let spearman = reports.iter().map(|r| r.spearman).sum::<f64>() / k;
    let n = reports.iter().map(|r| r.n).sum();
    Ok((
        CorrelationReport {
            pearson,
            spearman,
            n,
            p_pearson: significance(pearson, n),
            p_spearman: significance(spearman, n),
        },
        reports.len(),
    ))
}

fn score_pairs(
    table: &PairTable,
    cache: &mut ProjectionCache,
    factor: &MetricFactor,
    fold: usize,
    pairs: &[usize],
) -> Result<FoldScore> {
    if factor.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            found: factor.dim(),
        });
    }
    let predictions = predict_pairs(table, cache, factor, pairs)?;
    Ok(match correlate(table, pairs, &predictions) {
        Ok((report, groups_used)) => FoldScore {
            fold,
            report: Some(report),
            groups_used,
            skipped: None,
        },
        Err(Error::UndefinedCorrelation(why)) => {
            log::warn!("fold {fold} skipped: {why}");
            FoldScore {
                fold,
                report: None,
                groups_used: 0,
                skipped: Some(why),
            }
        }
        Err(e) => return Err(e),
    })
}

/// Each fold's model scored on its own validation set, then averaged.
pub fn score_validation(models: &[TrainedModel], table: &PairTable) -> Result<Aggregate> {
    let mut cache = ProjectionCache::default();
    let per_fold = models
        .iter()
        .map(|m| score_pairs(table, &mut cache, &m.factor, m.fold.index, &m.fold.val))
        .collect::<Result<Vec<_>>>()?;
    Aggregate::from_folds(per_fold)
}

/// [`score_validation`] with the identity factor on every fold.
pub fn baseline_validation(folds: &[FoldSplit], table: &PairTable) -> Result<Aggregate> {
    let identity = MetricFactor::identity(table.dim());
    let mut cache = ProjectionCache::default();
    let per_fold = folds
        .iter()
        .map(|f| score_pairs(table, &mut cache, &identity, f.index, &f.val))
        .collect::<Result<Vec<_>>>()?;
    Aggregate::from_folds(per_fold)
}

/// Model and baseline aggregates for one grid cell; the baseline is scored
/// on exactly the folds the models were validated on.
pub fn score_cell(models: &[TrainedModel], table: &PairTable) -> Result<CellScore> {
    let folds: Vec<FoldSplit> = models.iter().map(|m| m.fold.clone()).collect();
    Ok(CellScore {
        model: score_validation(models, table)?,
        baseline: baseline_validation(&folds, table)?,
    })
}

/// Every fold model scores the entire test table; the k correlation scores
/// are averaged.
pub fn transfer_test(models: &[TrainedModel], test: &PairTable) -> Result<Aggregate> {
    let all: Vec<usize> = (0..test.len()).collect();
    let mut cache = ProjectionCache::default();
    let per_fold = models
        .iter()
        .map(|m| score_pairs(test, &mut cache, &m.factor, m.fold.index, &all))
        .collect::<Result<Vec<_>>>()?;
    Aggregate::from_folds(per_fold)
}

/// Standard cosine against human targets over all pairs as one sample.
pub fn baseline_full(test: &PairTable) -> Result<CorrelationReport> {
    let all: Vec<usize> = (0..test.len()).collect();
    let mut cache = ProjectionCache::default();
    let predictions = predict_pairs(test, &mut cache, &MetricFactor::identity(test.dim()), &all)?;
    CorrelationReport::compute(&predictions, test.targets())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub group: Option<String>,
    pub word_a: String,
    pub word_b: String,
    pub human: f64,
    pub model: f64,
    pub abs_diff: f64,
}

impl DistributionRow {
    pub fn to_tsv(rows: &[DistributionRow]) -> String {
        let mut out = String::from("group\tword1\tword2\thuman\tmodel\tabs_diff\n");
        for r in rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.group.as_deref().unwrap_or(""),
                r.word_a,
                r.word_b,
                r.human,
                r.model,
                r.abs_diff
            );
        }
        out
    }
}

/// Per-pair human target, model score and their absolute difference,
/// ordered by group and then by pair. Without a factor, the model score is
/// the standard cosine.
pub fn distribution_dump(table: &PairTable, factor: Option<&MetricFactor>) -> Result<Vec<DistributionRow>> {
    let identity;
    let factor = match factor {
        Some(f) => f,
        None => {
            identity = MetricFactor::identity(table.dim());
            &identity
        }
    };
    if factor.dim() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            found: factor.dim(),
        });
    }
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by_key(|&p| (table.groups[p].is_none(), table.groups[p]));
    let mut cache = ProjectionCache::default();
    let scores = predict_pairs(table, &mut cache, factor, &order)?;
    Ok(order
        .iter()
        .zip(scores)
        .map(|(&p, model)| {
            let (a, b) = table.pairs[p];
            let human = table.targets[p];
            DistributionRow {
                group: table.groups[p].map(|g| table.group_names[g].clone()),
                word_a: table.embedding(a).word().to_string(),
                word_b: table.embedding(b).word().to_string(),
                human,
                model,
                abs_diff: (human - model).abs(),
            }
        })
        .collect())
}
