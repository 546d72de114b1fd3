//! Link prediction, relation prediction, triplet classification and gate
//! reports against a frozen model.

mod classification;
mod gates;
mod ranking;
pub mod report;

pub use classification::{
    accuracy_of, classify, find_thresholds, fit_threshold, fit_thresholds, make_classification_negatives,
    score_labeled, ClassificationReport, ClassifierThresholds, LabeledTriple, ScoredExample,
};
pub use gates::{gate_report, partition_sizes, GateGroup, DEFAULT_GATE_GROUPS, SUMMARY_GATE_GROUPS};
pub use ranking::{
    link_prediction_eval, rank_all, rank_entities, rank_of, rank_relations, relation_prediction_eval,
    LinkPredReport, RankResult, RankStats, Side, ENTITY_HITS_AT, RELATION_HITS_AT,
};
