//! Text rendering of a completed run: best-cell correlation tables,
//! relative-change tables and transfer tables.

use std::fmt::Write as _;

use super::run::{ReportRow, RunResults, Selection, TransferRow};

/// Significance level marked in rendered tables.
pub const ALPHA: f64 = 0.05;

/// `(|model| − |base|) / |base|` in percent, rounded to the nearest integer.
/// `None` when the baseline is zero.
pub fn percent_change(model: f64, base: f64) -> Option<i64> {
    if base == 0.0 {
        return None;
    }
    Some((100.0 * (model.abs() - base.abs()) / base.abs()).round() as i64)
}

/// `*` marks p < 0.05, `+` marks a model score above its baseline.
fn flagged(value: f64, p: Option<f64>, beats: bool) -> String {
    let mut s = format!("{value:.3}");
    if p.is_some_and(|p| p < ALPHA) {
        s.push('*');
    }
    if beats {
        s.push('+');
    }
    s
}

fn base_cell(value: f64, p: Option<f64>) -> String {
    flagged(value, p, false)
}

fn pick(row: &ReportRow, sel: Selection) -> Option<(f64, f64, Option<f64>, Option<f64>)> {
    match sel {
        Selection::Pearson => Some((row.mean_r?, row.base_r?, row.p_r, row.base_p_r)),
        Selection::Spearman => Some((row.mean_rho?, row.base_rho?, row.p_rho, row.base_p_rho)),
    }
}

fn correlation_table(out: &mut String, results: &RunResults, sel: Selection) {
    let title = match sel {
        Selection::Pearson => "Best Pearson correlation per dataset",
        Selection::Spearman => "Best Spearman correlation per dataset",
    };
    let _ = writeln!(out, "{title} ({})", results.representation);
    let _ = writeln!(out, "{:<20} {:>10} {:>10}  lr, k", "dataset", "model", "base");
    for d in &results.datasets {
        let best = match sel {
            Selection::Pearson => &d.best_pearson,
            Selection::Spearman => &d.best_spearman,
        };
        match best.as_ref().and_then(|row| pick(row, sel).map(|v| (row, v))) {
            Some((row, (model, base, p, bp))) => {
                let _ = writeln!(
                    out,
                    "{:<20} {:>10} {:>10}  {:e}, {}",
                    d.dataset,
                    flagged(model, p, model > base),
                    base_cell(base, bp),
                    row.lr,
                    row.k
                );
            }
            None => {
                let reason = d
                    .cells
                    .iter()
                    .find_map(|c| c.failure.as_deref())
                    .unwrap_or("no scored cell");
                let _ = writeln!(out, "{:<20} failed: {reason}", d.dataset);
            }
        }
    }
    out.push('\n');
}

fn change_table(out: &mut String, results: &RunResults) {
    let _ = writeln!(out, "Relative change over baseline, % ({})", results.representation);
    let _ = writeln!(out, "{:<20} {:>8} {:<12} {:>8} {:<12}", "dataset", "r %", "lr, k", "rho %", "lr, k");
    let cell = |row: &Option<ReportRow>, sel| -> (String, String) {
        match row.as_ref().and_then(|r| pick(r, sel).map(|v| (r, v))) {
            Some((r, (m, b, _, _))) => (
                percent_change(m, b).map_or("n/a".into(), |p| p.to_string()),
                format!("{:e}, {}", r.lr, r.k),
            ),
            None => ("failed".into(), String::new()),
        }
    };
    for d in &results.datasets {
        let (rp, rc) = cell(&d.best_pearson, Selection::Pearson);
        let (sp, sc) = cell(&d.best_spearman, Selection::Spearman);
        let _ = writeln!(out, "{:<20} {:>8} {:<12} {:>8} {:<12}", d.dataset, rp, rc, sp, sc);
    }
    out.push('\n');
}

fn transfer_table(out: &mut String, rows: &[TransferRow]) {
    if rows.is_empty() {
        return;
    }
    let _ = writeln!(out, "Transfer of the best pooled-dataset models");
    let _ = writeln!(
        out,
        "{:<20} {:<12} {:>10} {:>10} {:>10} {:>10}",
        "dataset", "trained on", "model r", "base r", "model rho", "base rho"
    );
    let mut names: Vec<&str> = rows.iter().map(|r| r.dataset.as_str()).collect();
    names.dedup();
    for name in names {
        let find = |sel| rows.iter().find(|r| r.dataset == name && r.selected_by == sel);
        let (Some(rp), Some(rs)) = (find(Selection::Pearson), find(Selection::Spearman)) else {
            continue;
        };
        let _ = writeln!(
            out,
            "{:<20} {:<12} {:>10} {:>10} {:>10} {:>10}",
            name,
            rp.trained_on,
            flagged(rp.mean_r, Some(rp.p_r), rp.mean_r > rp.base_r),
            base_cell(rp.base_r, Some(rp.base_p_r)),
            flagged(rs.mean_rho, Some(rs.p_rho), rs.mean_rho > rs.base_rho),
            base_cell(rs.base_rho, Some(rs.base_p_rho)),
        );
    }
    out.push('\n');
}

/// All tables for a run, as plain text.
pub fn render(results: &RunResults) -> String {
    let mut out = String::new();
    correlation_table(&mut out, results, Selection::Pearson);
    correlation_table(&mut out, results, Selection::Spearman);
    change_table(&mut out, results);
    transfer_table(&mut out, &results.transfer);
    let _ = writeln!(out, "* p < {ALPHA}   + model above baseline");
    let _ = writeln!(out, "note: {}", results.p_value_note);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::DatasetRole;
    use crate::experiment::run::DatasetResult;

    #[test]
    fn percent_change_examples() {
        assert_eq!(percent_change(0.550, 0.141), Some(290));
        assert_eq!(percent_change(0.637, 0.654), Some(-3));
        assert_eq!(percent_change(0.4, 0.4), Some(0));
        assert_eq!(percent_change(-0.3, 0.2), Some(50));
        assert_eq!(percent_change(0.3, 0.0), None);
    }

    fn row(model: f64, base: f64) -> ReportRow {
        ReportRow {
            dataset: "Clothing".into(),
            representation: "BERT".into(),
            lr: 1e-6,
            k: 5,
            mean_r: Some(model),
            mean_rho: Some(model),
            base_r: Some(base),
            base_rho: Some(base),
            p_r: Some(0.01),
            p_rho: Some(0.2),
            base_p_r: Some(0.3),
            base_p_rho: Some(0.3),
            failure: None,
        }
    }

    fn results(best: Option<ReportRow>, failure: Option<&str>) -> RunResults {
        let mut cells = best.iter().cloned().collect::<Vec<_>>();
        if let Some(f) = failure {
            let mut failed = row(0.0, 0.0);
            failed.failure = Some(f.into());
            cells.push(failed);
        }
        RunResults {
            representation: "BERT".into(),
            seed: 0,
            p_value_note: "note".into(),
            datasets: vec![DatasetResult {
                dataset: "Clothing".into(),
                role: DatasetRole::PerHypernym,
                pairs: 406,
                dropped: 0,
                cells,
                best_pearson: best.clone(),
                best_spearman: best,
            }],
            transfer: vec![],
        }
    }

    #[test]
    fn renders_flags_and_change() {
        let text = render(&results(Some(row(0.550, 0.141)), None));
        assert!(text.contains("0.550*+"), "{text}");
        assert!(text.contains("0.141 "), "{text}");
        assert!(text.contains(" 290 "), "{text}");
        // Spearman p of 0.2 is not significant
        assert!(text.contains("0.550+"), "{text}");
    }

    #[test]
    fn equal_scores_have_no_bold_flag() {
        let text = render(&results(Some(row(0.4, 0.4)), None));
        assert!(!text.contains("0.400*+"));
        assert!(text.contains("0.400*"));
        assert!(text.contains("       0 "));
    }

    #[test]
    fn failed_dataset_renders_reason() {
        let text = render(&results(None, Some("training diverged at epoch 3: non-finite training loss")));
        assert!(text.contains("failed: training diverged at epoch 3"));
    }
}
