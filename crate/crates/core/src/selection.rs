//! Feature ranking by area under the ROC curve.
//!
//! The AUC is computed in its Mann-Whitney form over the training set:
//! the fraction of (positive, negative) pairs ranked correctly, ties
//! counting one half. Features are ranked by effective AUC
//! `max(auc, 1 - auc)` so anti-correlated features keep their
//! discriminative power, and the top k per (threshold, model) are kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{FeatureSlot, ModelSource, FEATURE_COUNT};
use crate::sim::trajectory::Threshold;

/// AUC of `scores` with binary labels, Mann-Whitney formulation:
/// `[#(pos > neg) + 0.5 * #(ties)] / (#pos * #neg)`. Computed by midrank
/// summation, which is exactly the pair count.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    if scores.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::Data("AUC scores must be finite".into()));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    // midrank sum of the positives
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        // ranks are 1-based; a tie run [i, j) shares the midrank
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_run = sorted[i..j].iter().filter(|s| s.1).count();
        rank_sum_pos += midrank * pos_in_run as f64;
        i = j;
    }
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// Ranking score: discriminative power regardless of direction.
pub fn effective_auc(auc: f64) -> f64 {
    auc.max(1.0 - auc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature_id: u8,
    /// Raw AUC of the feature (before the effective-AUC fold).
    pub auc: f64,
}

/// Feature ranking for one (threshold, model source) pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AucRanking {
    pub threshold: Threshold,
    pub source: ModelSource,
    /// Sorted by descending effective AUC, ties broken by ascending
    /// feature id. Features with undefined AUC are absent.
    pub entries: Vec<RankedFeature>,
}

impl AucRanking {
    /// Rank the catalogue features over labelled vectors. A feature's AUC
    /// uses the rows where it is present; features that never see both
    /// labels are dropped from the ranking.
    pub fn compute(
        threshold: Threshold,
        source: ModelSource,
        rows: &[(&FeatureSlot, bool)],
    ) -> Self {
        let mut entries = Vec::new();
        for fid in 1..=FEATURE_COUNT as u8 {
            let scores: Vec<(f64, bool)> = rows
                .iter()
                .filter_map(|(slot, label)| slot[usize::from(fid) - 1].map(|v| (v, *label)))
                .collect();
            if let Ok(a) = auc(&scores) {
                entries.push(RankedFeature {
                    feature_id: fid,
                    auc: a,
                });
            }
        }
        entries.sort_by(|a, b| {
            effective_auc(b.auc)
                .partial_cmp(&effective_auc(a.auc))
                .expect("AUC is finite")
                .then(a.feature_id.cmp(&b.feature_id))
        });
        AucRanking {
            threshold,
            source,
            entries,
        }
    }
}

/// The top `k` feature ids of a ranking, in rank order.
pub fn select_top(ranking: &AucRanking, k: usize) -> Result<Vec<u8>> {
    if k > FEATURE_COUNT {
        return Err(Error::Config(format!(
            "cannot select {k} features from a {FEATURE_COUNT}-feature catalogue"
        )));
    }
    if ranking.entries.len() < k {
        return Err(Error::SelectionShortfall {
            usable: ranking.entries.len(),
            requested: k,
        });
    }
    Ok(ranking.entries[..k].iter().map(|e| e.feature_id).collect())
}
