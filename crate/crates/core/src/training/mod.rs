//! Fold-wise training of a metric factor against human similarity targets.

mod fit;
mod folds;
mod grid;
mod optim;

pub use fit::{
    fit, initial_factor, mse_loss, train_fold, EarlyStopping, EpochRecord, FitOutcome, InitMode,
    Objective, PairObjective, TrainConfig, TrainedModel,
};
pub(crate) use fit::{predict_pairs, ProjectionCache};
pub use folds::{derive_seed, make_folds, FoldSplit};
pub use grid::{run_grid, CellOutcome, GridCell, GridResult, GridSpec};
pub use optim::{adam_step, AdamConfig, AdamState};
