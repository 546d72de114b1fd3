//! Comma-separated renderings of evaluation results.

use std::fmt::Write;

use super::classification::ClassificationReport;
use super::gates::GateGroup;
use super::ranking::{LinkPredReport, RankStats, Side};
use crate::dataset::RelationCategory;

/// One row: mean rank and Hits@10 under the raw and filtered settings.
pub fn link_prediction_csv(model: &str, report: &LinkPredReport) -> String {
    let s = &report.overall;
    format!(
        "model,mean_rank_raw,mean_rank_filter,hits10_raw,hits10_filter\n{model},{:.1},{:.1},{:.2},{:.2}\n",
        s.mean_rank_raw(),
        s.mean_rank_filtered(),
        s.hits_raw(),
        s.hits_filtered()
    )
}

/// Filtered Hits@10 by relation category, head-prediction columns then
/// tail-prediction columns.
pub fn category_csv(model: &str, report: &LinkPredReport) -> String {
    let mut header = String::from("model");
    let mut row = String::from(model);
    for side in Side::BOTH {
        for c in RelationCategory::ALL {
            write!(header, ",{}_{}", side.label(), c.label()).unwrap();
            write!(row, ",{:.2}", report.by_category[c.index()][side.index()].hits_filtered()).unwrap();
        }
    }
    format!("{header}\n{row}\n")
}

/// Long-form breakdown: every side × category cell with all four metrics.
pub fn category_detail_csv(report: &LinkPredReport) -> String {
    let mut out = String::from("side,category,queries,mean_rank_raw,mean_rank_filter,hits10_raw,hits10_filter\n");
    let mut line = |side: &str, cat: &str, s: &RankStats| {
        writeln!(
            out,
            "{side},{cat},{},{:.1},{:.1},{:.2},{:.2}",
            s.count,
            s.mean_rank_raw(),
            s.mean_rank_filtered(),
            s.hits_raw(),
            s.hits_filtered()
        )
        .unwrap();
    };
    for side in Side::BOTH {
        for c in RelationCategory::ALL {
            line(side.label(), c.label(), &report.by_category[c.index()][side.index()]);
        }
        line(side.label(), "uncategorized", &report.uncategorized[side.index()]);
        line(side.label(), "all", &report.by_side[side.index()]);
    }
    out
}

pub fn relation_prediction_csv(model: &str, stats: &RankStats) -> String {
    format!(
        "model,mean_rank_raw,mean_rank_filter,hits1_raw,hits1_filter\n{model},{:.2},{:.2},{:.2},{:.2}\n",
        stats.mean_rank_raw(),
        stats.mean_rank_filtered(),
        stats.hits_raw(),
        stats.hits_filtered()
    )
}

pub fn classification_csv(model: &str, report: &ClassificationReport) -> String {
    format!(
        "model,accuracy,correct,total\n{model},{:.2},{},{}\n",
        report.accuracy(),
        report.correct,
        report.total
    )
}

pub fn gate_csv(groups: &[GateGroup]) -> String {
    let mut out = String::from("group_index,freq_lo,freq_hi,mean_gate\n");
    for g in groups {
        writeln!(out, "{},{},{},{:.6}", g.group_index, g.freq_lo, g.freq_hi, g.mean_gate).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Triple;
    use crate::eval::ranking::RankResult;

    #[test]
    fn perfect_report_renders_mr_one() {
        let t = Triple::new(0usize, 0usize, 1usize);
        let ranks = Side::BOTH
            .map(|side| RankResult {
                triple: t,
                side,
                raw: 1,
                filtered: 1,
            })
            .to_vec();
        let report = LinkPredReport::from_ranks(ranks, &[Some(RelationCategory::OneToOne)]);
        assert_eq!(
            link_prediction_csv("m", &report),
            "model,mean_rank_raw,mean_rank_filter,hits10_raw,hits10_filter\nm,1.0,1.0,100.00,100.00\n"
        );
        let wide = category_csv("m", &report);
        assert!(wide.starts_with("model,head_1-to-1,head_1-to-N"));
        assert!(wide.lines().nth(1).unwrap().starts_with("m,100.00,NaN"));
    }

    #[test]
    fn gate_table_layout() {
        let g = GateGroup {
            group_index: 0,
            entities: 3,
            freq_lo: 2,
            freq_hi: 9,
            mean_gate: 0.25,
        };
        assert_eq!(gate_csv(&[g]), "group_index,freq_lo,freq_hi,mean_gate\n0,2,9,0.250000\n");
    }
}
