use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{train_fold, TrainConfig, TrainedModel};
use super::folds::{make_folds, FoldSplit};
use crate::data::PairTable;
use crate::error::{Error, Result};
use crate::eval::{score_cell, CellScore};

/// Learning rates crossed with fold counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub fold_counts: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-5, 1e-6, 1e-7],
            fold_counts: vec![5, 6, 7],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.fold_counts.is_empty() {
            return Err(Error::Config("grid needs at least one learning rate and one fold count".into()));
        }
        Ok(())
    }

    /// Cells in row-major `(learning rate, fold count)` order.
    pub fn cells(&self) -> Vec<(f64, usize)> {
        self.learning_rates
            .iter()
            .flat_map(|&lr| self.fold_counts.iter().map(move |&k| (lr, k)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Done {
        score: CellScore,
        models: Vec<TrainedModel>,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub learning_rate: f64,
    pub folds: usize,
    pub outcome: CellOutcome,
}

impl GridCell {
    pub fn score(&self) -> Option<&CellScore> {
        match &self.outcome {
            CellOutcome::Done { score, .. } => Some(score),
            CellOutcome::Failed { .. } => None,
        }
    }

    pub fn models(&self) -> Option<&[TrainedModel]> {
        match &self.outcome {
            CellOutcome::Done { models, .. } => Some(models),
            CellOutcome::Failed { .. } => None,
        }
    }

    pub fn failure(&self) -> Option<&str> {
        match &self.outcome {
            CellOutcome::Failed { reason } => Some(reason),
            CellOutcome::Done { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index of the cell with the highest mean validation Pearson.
    pub best_pearson: Option<usize>,
    /// Index of the cell with the highest mean validation Spearman.
    pub best_spearman: Option<usize>,
}

impl GridResult {
    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.score().is_none())
    }

    /// Drops the trained factors of every cell other than the best ones.
    pub fn retain_best_models(&mut self) {
        let keep = [self.best_pearson, self.best_spearman];
        for (i, cell) in self.cells.iter_mut().enumerate() {
            if keep.contains(&Some(i)) {
                continue;
            }
            if let CellOutcome::Done { models, .. } = &mut cell.outcome {
                models.clear();
            }
        }
    }
}

/// Index of the largest finite value; earlier cells win ties.
fn argmax(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Trains every fold of every grid cell and scores each cell against the
/// identity baseline on the same folds.
///
/// Folds of all cells run in parallel on the current rayon pool; results
/// are merged in grid order, so output does not depend on scheduling. A
/// failing fold marks its cell failed without affecting other cells.
pub fn run_grid(table: &PairTable, grid: &GridSpec, base: &TrainConfig) -> Result<GridResult> {
    grid.validate()?;
    let cells = grid.cells();
    let mut splits: Vec<std::result::Result<Vec<FoldSplit>, String>> = Vec::new();
    for &(lr, k) in &cells {
        let cfg = TrainConfig {
            learning_rate: lr,
            folds: k,
            ..base.clone()
        };
        cfg.validate()?;
        splits.push(make_folds(table.len(), k, base.seed).map_err(|e| e.to_string()));
    }

    let jobs: Vec<(usize, &FoldSplit)> = splits
        .iter()
        .enumerate()
        .filter_map(|(c, s)| s.as_ref().ok().map(|folds| (c, folds)))
        .flat_map(|(c, folds)| folds.iter().map(move |f| (c, f)))
        .collect();
    let trained: Vec<(usize, Result<TrainedModel>)> = jobs
        .par_iter()
        .map(|&(c, fold)| {
            let (lr, k) = cells[c];
            let cfg = TrainConfig {
                learning_rate: lr,
                folds: k,
                ..base.clone()
            };
            (c, train_fold(table, fold, &cfg))
        })
        .collect();

    let mut per_cell: Vec<Vec<Result<TrainedModel>>> = cells.iter().map(|_| Vec::new()).collect();
    for (c, model) in trained {
        per_cell[c].push(model);
    }

    let mut out = Vec::with_capacity(cells.len());
    for (c, (&(lr, k), results)) in cells.iter().zip(per_cell).enumerate() {
        let outcome = match &splits[c] {
            Err(reason) => CellOutcome::Failed { reason: reason.clone() },
            Ok(_) => match results.into_iter().collect::<Result<Vec<_>>>() {
                Err(e) => {
                    log::warn!("cell lr={lr:e} k={k} failed: {e}");
                    CellOutcome::Failed { reason: e.to_string() }
                }
                Ok(models) => match score_cell(&models, table) {
                    Ok(score) => CellOutcome::Done { score, models },
                    Err(e) => CellOutcome::Failed { reason: e.to_string() },
                },
            },
        };
        out.push(GridCell {
            learning_rate: lr,
            folds: k,
            outcome,
        });
    }

    let best_pearson = argmax(out.iter().map(|c| c.score().map(|s| s.model.mean_r)));
    let best_spearman = argmax(out.iter().map(|c| c.score().map(|s| s.model.mean_rho)));
    Ok(GridResult {
        cells: out,
        best_pearson,
        best_spearman,
    })
}
