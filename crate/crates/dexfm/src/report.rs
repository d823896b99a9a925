//! Text outputs: per-epoch history, cross-validation reports, sweep tables
//! and feature-map exports. Missing values print as `NA`; floats use the
//! shortest representation that parses back exactly.

use std::fmt::Write as _;

use dexfm_core::cv::{Comparison, CvReport, FeatureMapRow};
use dexfm_core::metrics::{MetricsError, TTest};
use dexfm_core::training::{History, LossBreakdown};

pub const HISTORY_HEADER: &str = "epoch\tl1\tld\treg\ttotal\tval_logloss\tval_auc";
pub const SWEEP_HEADER: &str = "parameter\tvalue\tmean_logloss\tmean_auc\tsd_logloss\tsd_auc";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// One row per completed epoch.
pub fn history_tsv(h: &History) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for e in &h.epochs {
        let t = &e.train;
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.epoch,
            t.l1,
            t.ld,
            t.reg,
            t.total,
            opt(e.val_logloss),
            opt(e.val_auc)
        )
        .unwrap();
    }
    out
}

fn breakdown_lines(out: &mut String, prefix: &str, b: &LossBreakdown) {
    writeln!(out, "{prefix}_l1={}", b.l1).unwrap();
    writeln!(out, "{prefix}_ld={}", b.ld).unwrap();
    writeln!(out, "{prefix}_reg={}", b.reg).unwrap();
    writeln!(out, "{prefix}_total={}", b.total).unwrap();
}

/// `key=value` summary of a single training run.
pub fn train_summary(h: &History, extra: &[(&str, String)]) -> String {
    let mut out = String::from("[train]\n");
    for (k, v) in extra {
        writeln!(out, "{k}={v}").unwrap();
    }
    writeln!(out, "epochs_run={}", h.epochs.len()).unwrap();
    writeln!(out, "stopped_early={}", h.stopped_early).unwrap();
    writeln!(out, "best_epoch={}", h.best_epoch.map_or_else(|| "NA".into(), |b| b.to_string())).unwrap();
    breakdown_lines(&mut out, "initial", &h.initial);
    if let Some(last) = h.epochs.last() {
        breakdown_lines(&mut out, "final", &last.train);
        writeln!(out, "final_val_logloss={}", opt(last.val_logloss)).unwrap();
        writeln!(out, "final_val_auc={}", opt(last.val_auc)).unwrap();
    }
    out
}

fn cv_blocks(out: &mut String, r: &CvReport) {
    for f in &r.folds {
        writeln!(out, "[fold {} {}]", r.variant, f.fold).unwrap();
        writeln!(out, "test_logloss={}", f.test_logloss).unwrap();
        writeln!(out, "test_auc={}", f.test_auc).unwrap();
        writeln!(out, "epochs_run={}", f.history.epochs.len()).unwrap();
        out.push('\n');
    }
    writeln!(out, "[summary {}]", r.variant).unwrap();
    writeln!(out, "variant={}", r.variant).unwrap();
    writeln!(out, "seed={}", r.seed).unwrap();
    writeln!(out, "folds={}", r.folds.len()).unwrap();
    writeln!(out, "mean_logloss={}", r.mean_logloss()).unwrap();
    writeln!(out, "sd_logloss={}", r.sd_logloss()).unwrap();
    writeln!(out, "mean_auc={}", r.mean_auc()).unwrap();
    writeln!(out, "sd_auc={}", r.sd_auc()).unwrap();
    out.push('\n');
}

fn test_lines(out: &mut String, metric: &str, t: &Result<TTest, MetricsError>) {
    match t {
        Ok(t) => {
            writeln!(out, "{metric}_mean_diff={}", t.mean_diff).unwrap();
            writeln!(out, "{metric}_t={}", t.t).unwrap();
            writeln!(out, "{metric}_df={}", t.df).unwrap();
            writeln!(out, "{metric}_p_value={}", t.p_value).unwrap();
            writeln!(out, "{metric}_significant={}", t.significant).unwrap();
        }
        Err(e) => writeln!(out, "{metric}_test=unavailable: {e}").unwrap(),
    }
}

/// Blocks for every report, then a paired comparison block when given.
pub fn metrics_report(reports: &[CvReport], comparison: Option<(&Comparison, f64)>) -> String {
    let mut out = String::new();
    for r in reports {
        cv_blocks(&mut out, r);
    }
    if let Some((c, alpha)) = comparison {
        writeln!(out, "[compare {} {}]", c.a, c.b).unwrap();
        writeln!(out, "alpha={alpha}").unwrap();
        writeln!(out, "mean_auc_{}={}", c.a, c.mean_auc.0).unwrap();
        writeln!(out, "mean_auc_{}={}", c.b, c.mean_auc.1).unwrap();
        writeln!(out, "mean_logloss_{}={}", c.a, c.mean_logloss.0).unwrap();
        writeln!(out, "mean_logloss_{}={}", c.b, c.mean_logloss.1).unwrap();
        test_lines(&mut out, "auc", &c.auc_test);
        test_lines(&mut out, "logloss", &c.logloss_test);
    }
    out
}

pub fn sweep_tsv(parameter: &str, rows: &[(String, CvReport)]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for (value, r) in rows {
        writeln!(
            out,
            "{parameter}\t{value}\t{}\t{}\t{}\t{}",
            r.mean_logloss(),
            r.mean_auc(),
            r.sd_logloss(),
            r.sd_auc()
        )
        .unwrap();
    }
    out
}

/// `instance<TAB>layer<TAB>map<TAB>v_1,...,v_d`, one line per feature map.
pub fn feature_map_tsv(rows: &[FeatureMapRow]) -> String {
    let mut out = String::new();
    for r in rows {
        write!(out, "{}\t{}\t{}\t", r.instance, r.layer, r.map).unwrap();
        for (i, v) in r.values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reads `key=value` lines of one `[section]`, for tools and tests that
/// consume metrics reports.
pub fn report_section<'a>(text: &'a str, section: &str) -> Option<Vec<(&'a str, &'a str)>> {
    let header = format!("[{section}]");
    let mut lines = text.lines().skip_while(|l| *l != header);
    lines.next()?;
    Some(
        lines
            .take_while(|l| !l.starts_with('['))
            .filter_map(|l| l.split_once('='))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_values_parse_back_exactly() {
        let values = vec![0.1 + 0.2, -1e-300, 1.0 / 3.0];
        let text = feature_map_tsv(&[FeatureMapRow {
            instance: 4,
            layer: 2,
            map: 1,
            values: values.clone(),
        }]);
        let cols: Vec<&str> = text.trim_end().split('\t').collect();
        assert_eq!(&cols[..3], &["4", "2", "1"]);
        let back: Vec<f64> = cols[3].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(back, values);
    }

    #[test]
    fn sections() {
        let text = "[a]\nx=1\n\n[b]\ny=2\nz=3\n";
        assert_eq!(report_section(text, "b").unwrap(), vec![("y", "2"), ("z", "3")]);
        assert_eq!(report_section(text, "a").unwrap(), vec![("x", "1")]);
        assert!(report_section(text, "c").is_none());
    }
}
