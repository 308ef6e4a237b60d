//! Evaluation metrics: WER, CER, BLEU, accuracy, and radar-chart score
//! normalization with CSV/JSON report emission.

mod bleu;
mod edit;
mod scores;

pub use bleu::{bleu, corpus_bleu, Smoothing};
pub use edit::{accuracy, cer, corpus_error_rate, edit_counts, edit_distance, normalize_words, wer, EditCounts};
pub use scores::{emit_report, normalize_scores, render_report, ReportFormat, ReportRow, ScoreTable};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Wer,
    Cer,
    Bleu,
    Accuracy,
}

/// Audit counts behind a metric value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MetricCounts {
    Edit(EditCounts),
    Ngram {
        matches: Vec<usize>,
        totals: Vec<usize>,
        hyp_len: usize,
        ref_len: usize,
        brevity_penalty: f64,
    },
    Accuracy {
        correct: usize,
        total: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricResult {
    pub metric: Metric,
    pub value: f64,
    pub counts: MetricCounts,
}
