use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DatasetRole, ExperimentConfig};
use crate::data::{align, integrity_check, load_embeddings_text, load_judgments, JudgmentOptions, PairTable, Provenance};
use crate::error::{Error, Result};
use crate::eval::{baseline_full, distribution_dump, transfer_test, CellScore, DistributionRow};
use crate::metric::export_gram;
use crate::training::{run_grid, GridCell, GridResult, TrainedModel};

/// Note attached to every results document about how `p_r` / `p_rho` are
/// summarized.
pub const P_VALUE_NOTE: &str =
    "p_r and p_rho are medians of per-fold p-values (per-fold n); pooled-n alternatives are not reported";

/// One grid cell, or one best cell, in the fixed report layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub representation: String,
    pub lr: f64,
    pub k: usize,
    pub mean_r: Option<f64>,
    pub mean_rho: Option<f64>,
    pub base_r: Option<f64>,
    pub base_rho: Option<f64>,
    pub p_r: Option<f64>,
    pub p_rho: Option<f64>,
    pub base_p_r: Option<f64>,
    pub base_p_rho: Option<f64>,
    pub failure: Option<String>,
}

impl ReportRow {
    fn from_cell(dataset: &str, representation: &str, cell: &GridCell) -> Self {
        let score: Option<&CellScore> = cell.score();
        Self {
            dataset: dataset.to_string(),
            representation: representation.to_string(),
            lr: cell.learning_rate,
            k: cell.folds,
            mean_r: score.map(|s| s.model.mean_r),
            mean_rho: score.map(|s| s.model.mean_rho),
            base_r: score.map(|s| s.baseline.mean_r),
            base_rho: score.map(|s| s.baseline.mean_rho),
            p_r: score.map(|s| s.model.median_p_r),
            p_rho: score.map(|s| s.model.median_p_rho),
            base_p_r: score.map(|s| s.baseline.median_p_r),
            base_p_rho: score.map(|s| s.baseline.median_p_rho),
            failure: cell.failure().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub dataset: String,
    pub role: DatasetRole,
    pub pairs: usize,
    pub dropped: usize,
    pub cells: Vec<ReportRow>,
    pub best_pearson: Option<ReportRow>,
    pub best_spearman: Option<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Pearson,
    Spearman,
}

impl Selection {
    fn tag(self) -> &'static str {
        match self {
            Selection::Pearson => "best_pearson",
            Selection::Spearman => "best_spearman",
        }
    }
}

/// Models of the `all` dataset's best cell scored on a whole test dataset;
/// `base_*` is the identity baseline over the full test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub dataset: String,
    pub trained_on: String,
    pub representation: String,
    pub selected_by: Selection,
    pub lr: f64,
    pub k: usize,
    pub mean_r: f64,
    pub mean_rho: f64,
    pub base_r: f64,
    pub base_rho: f64,
    pub p_r: f64,
    pub p_rho: f64,
    pub base_p_r: f64,
    pub base_p_rho: f64,
}

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub representation: String,
    pub seed: u64,
    pub p_value_note: String,
    pub datasets: Vec<DatasetResult>,
    pub transfer: Vec<TransferRow>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub results: RunResults,
    pub output_dir: PathBuf,
    /// Every trained cell of every dataset failed.
    pub all_failed: bool,
}

struct Prepared {
    name: String,
    role: DatasetRole,
    train: bool,
    table: PairTable,
    dropped: usize,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cell_tag(lr: f64, k: usize) -> String {
    format!("lr{lr:e}_k{k}")
}

fn prepare(cfg: &ExperimentConfig) -> Result<(Vec<Prepared>, String)> {
    let (store, _) = load_embeddings_text(&cfg.embeddings_path, None, cfg.normalization)?;
    let mut prepared = Vec::new();
    for entry in &cfg.dataset_paths {
        let options = JudgmentOptions {
            scale: entry.scale.unwrap_or(cfg.scale),
            provenance: if entry.contextualized {
                Provenance::Contextualized
            } else {
                Provenance::Plain
            },
            pos_filter: entry.pos_filter.clone(),
            name: Some(entry.name.clone()),
        };
        let dataset = load_judgments(&entry.path, &options)?;
        let (aligned, report) = align(&dataset, &store)?;
        if !report.is_empty() {
            log::warn!("{}: dropped {} of {} pairs", entry.name, report.len(), dataset.len());
        }
        let summary = integrity_check(&aligned);
        let dir = &cfg.output_dir;
        write(&dir.join(format!("summary_{}.tsv", entry.name)), summary.to_tsv())?;
        write(&dir.join(format!("dropped_{}.tsv", entry.name)), report.to_tsv())?;
        prepared.push(Prepared {
            name: entry.name.clone(),
            role: entry.role,
            train: entry.train,
            table: PairTable::build(&aligned, &store)?,
            dropped: report.len(),
        });
    }
    Ok((prepared, store.source_name().to_string()))
}

fn trace_jsonl(model: &TrainedModel) -> Result<String> {
    let mut out = String::new();
    for rec in &model.trace {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

fn best_cells(grid: &GridResult) -> Vec<(Selection, usize)> {
    [(Selection::Pearson, grid.best_pearson), (Selection::Spearman, grid.best_spearman)]
        .into_iter()
        .filter_map(|(s, i)| i.map(|i| (s, i)))
        .collect()
}

fn write_dataset_outputs(cfg: &ExperimentConfig, data: &Prepared, grid: &GridResult) -> Result<()> {
    let dir = &cfg.output_dir;
    if cfg.trace {
        for cell in &grid.cells {
            for m in cell.models().unwrap_or_default() {
                let name = format!("{}_fold{}.jsonl", cell_tag(cell.learning_rate, cell.folds), m.fold.index);
                write(&dir.join("trace").join(&data.name).join(name), trace_jsonl(m)?)?;
            }
        }
    }
    for (sel, idx) in best_cells(grid) {
        let cell = &grid.cells[idx];
        for m in cell.models().unwrap_or_default() {
            let stem = format!("{}_{}_fold{}", sel.tag(), cell_tag(cell.learning_rate, cell.folds), m.fold.index);
            let fdir = dir.join("factors").join(&data.name);
            fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
            m.factor.write(&fdir.join(format!("{stem}.txt")))?;
            if cfg.export_gram {
                export_gram(&m.factor, &fdir.join(format!("{stem}.gram.txt")))?;
            }
        }
    }
    if cfg.dump_distribution {
        let ddir = dir.join("distribution");
        let base = distribution_dump(&data.table, None)?;
        write(&ddir.join(format!("{}_baseline.tsv", data.name)), DistributionRow::to_tsv(&base))?;
        let first = grid
            .best_pearson
            .and_then(|i| grid.cells[i].models())
            .and_then(|m| m.first());
        if let Some(m) = first {
            let rows = distribution_dump(&data.table, Some(&m.factor))?;
            write(&ddir.join(format!("{}_model.tsv", data.name)), DistributionRow::to_tsv(&rows))?;
        }
    }
    let mut tsv = String::from("lr\tk\tstatus\tmean_r\tmean_rho\tbase_r\tbase_rho\tp_r\tp_rho\n");
    for cell in &grid.cells {
        match cell.score() {
            Some(s) => {
                let _ = writeln!(
                    tsv,
                    "{:e}\t{}\tok\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3e}\t{:.3e}",
                    cell.learning_rate,
                    cell.folds,
                    s.model.mean_r,
                    s.model.mean_rho,
                    s.baseline.mean_r,
                    s.baseline.mean_rho,
                    s.model.median_p_r,
                    s.model.median_p_rho
                );
            }
            None => {
                let _ = writeln!(
                    tsv,
                    "{:e}\t{}\tfailed: {}\t\t\t\t\t\t",
                    cell.learning_rate,
                    cell.folds,
                    cell.failure().unwrap_or("")
                );
            }
        }
    }
    write(&dir.join(format!("grid_{}.tsv", data.name)), tsv)
}

fn report_tsv(results: &RunResults) -> String {
    let mut out = format!("# generated_at={}\n", chrono::Utc::now().to_rfc3339());
    out.push_str("dataset\trepresentation\tlr\tk\tstatus\tmean_r\tmean_rho\tbase_r\tbase_rho\tp_r\tp_rho\tbest\n");
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for d in &results.datasets {
        for row in &d.cells {
            let mut best = Vec::new();
            if d.best_pearson.as_ref() == Some(row) {
                best.push("pearson");
            }
            if d.best_spearman.as_ref() == Some(row) {
                best.push("spearman");
            }
            let _ = writeln!(
                out,
                "{}\t{}\t{:e}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.dataset,
                row.representation,
                row.lr,
                row.k,
                row.failure.as_deref().map_or("ok".to_string(), |f| format!("failed: {f}")),
                fmt(row.mean_r),
                fmt(row.mean_rho),
                fmt(row.base_r),
                fmt(row.base_rho),
                fmt(row.p_r),
                fmt(row.p_rho),
                best.join(",")
            );
        }
    }
    out
}

fn transfer_tsv(rows: &[TransferRow]) -> String {
    let mut out = String::from(
        "dataset\ttrained_on\tselected_by\tlr\tk\tmean_r\tmean_rho\tbase_r\tbase_rho\tp_r\tp_rho\n",
    );
    for t in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:e}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3e}\t{:.3e}",
            t.dataset,
            t.trained_on,
            t.selected_by.tag(),
            t.lr,
            t.k,
            t.mean_r,
            t.mean_rho,
            t.base_r,
            t.base_rho,
            t.p_r,
            t.p_rho
        );
    }
    out
}

/// Runs grids on every trainable dataset, transfers the `all` dataset's
/// best cells to each transfer-test dataset and writes all reports under
/// `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (prepared, _) = prepare(cfg)?;
    let representation = cfg.representation();

    let mut datasets = Vec::new();
    let mut all_grid: Option<(usize, GridResult)> = None;
    let mut trained_cells = 0;
    let mut failed_cells = 0;
    for (i, data) in prepared.iter().enumerate() {
        if !data.train {
            continue;
        }
        let base = cfg.train_config(cfg.grid.learning_rates[0], cfg.grid.fold_counts[0]);
        log::info!("{}: training {} cells on {} pairs", data.name, cfg.grid.cells().len(), data.table.len());
        let mut grid = run_grid(&data.table, &cfg.grid, &base)?;
        trained_cells += grid.cells.len();
        failed_cells += grid.cells.iter().filter(|c| c.score().is_none()).count();
        write_dataset_outputs(cfg, data, &grid)?;

        let cells: Vec<ReportRow> = grid
            .cells
            .iter()
            .map(|c| ReportRow::from_cell(&data.name, &representation, c))
            .collect();
        datasets.push(DatasetResult {
            dataset: data.name.clone(),
            role: data.role,
            pairs: data.table.len(),
            dropped: data.dropped,
            best_pearson: grid.best_pearson.map(|i| cells[i].clone()),
            best_spearman: grid.best_spearman.map(|i| cells[i].clone()),
            cells,
        });
        grid.retain_best_models();
        if data.role == DatasetRole::All {
            all_grid = Some((i, grid));
        }
    }

    let mut transfer = Vec::new();
    if let Some((all_idx, grid)) = &all_grid {
        let trained_on = &prepared[*all_idx].name;
        for test in prepared.iter().filter(|d| d.role == DatasetRole::TransferTest) {
            let base = baseline_full(&test.table)?;
            for (sel, idx) in best_cells(grid) {
                let cell = &grid.cells[idx];
                let models = cell.models().unwrap_or_default();
                let agg = transfer_test(models, &test.table)?;
                transfer.push(TransferRow {
                    dataset: test.name.clone(),
                    trained_on: trained_on.clone(),
                    representation: representation.clone(),
                    selected_by: sel,
                    lr: cell.learning_rate,
                    k: cell.folds,
                    mean_r: agg.mean_r,
                    mean_rho: agg.mean_rho,
                    base_r: base.pearson,
                    base_rho: base.spearman,
                    p_r: agg.median_p_r,
                    p_rho: agg.median_p_rho,
                    base_p_r: base.p_pearson,
                    base_p_rho: base.p_spearman,
                });
            }
        }
    }

    let results = RunResults {
        representation,
        seed: cfg.seed,
        p_value_note: P_VALUE_NOTE.to_string(),
        datasets,
        transfer,
    };
    write(&dir.join("results.json"), serde_json::to_string_pretty(&results)?)?;
    write(&dir.join("report.tsv"), report_tsv(&results))?;
    if !results.transfer.is_empty() {
        write(&dir.join("transfer.tsv"), transfer_tsv(&results.transfer))?;
    }
    Ok(RunSummary {
        all_failed: trained_cells > 0 && failed_cells == trained_cells,
        results,
        output_dir: dir.clone(),
    })
}

pub fn read_results(dir: &Path) -> Result<RunResults> {
    let path = dir.join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
