//! Bidirectional retrieval metrics, gate statistics and attention export.
//!
//! Each query has exactly one relevant candidate, so average precision is
//! `1 / rank`. Ranks are by descending score with ties broken by candidate
//! index, lower first. Reported metrics are multiplied by 100.

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::ClipRecord;
use crate::error::{Result, WalError};
use crate::model::{attention_weights, embed_frames, embed_sentence, pair_score, ModelParams};
use crate::training::EpochMetrics;

/// 1-based rank of `relevant` under descending score, ties by index.
pub fn rank_of(scores: &[f64], relevant: usize) -> Result<usize> {
    if scores.is_empty() {
        return Err(WalError::invalid("scores", "empty candidate list"));
    }
    if relevant >= scores.len() {
        return Err(WalError::invalid(
            "relevant_index",
            format!("{relevant} out of {} candidates", scores.len()),
        ));
    }
    let r = scores[relevant];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > r || (s == r && j < relevant))
        .count();
    Ok(ahead + 1)
}

pub fn average_precision(scores: &[f64], relevant: usize) -> Result<f64> {
    Ok(1.0 / rank_of(scores, relevant)? as f64)
}

pub fn recall_at_k(scores: &[f64], relevant: usize, k: usize) -> Result<u8> {
    if k == 0 || k > scores.len() {
        return Err(WalError::invalid(
            "k",
            format!("must be in 1..={}, got {k}", scores.len()),
        ));
    }
    Ok(u8::from(rank_of(scores, relevant)? <= k))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub map: f64,
    pub rec5: f64,
    pub rec10: f64,
    pub ranks: Vec<usize>,
}

impl DirectionReport {
    fn from_ranks(ranks: Vec<usize>) -> Self {
        let n = ranks.len() as f64;
        let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        DirectionReport {
            map: 100.0 * ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            rec5: recall(5),
            rec10: recall(10),
            ranks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    /// Sentence queries against the video pool.
    pub video_search: DirectionReport,
    /// Video queries against the sentence pool.
    pub sentence_search: DirectionReport,
}

impl RetrievalReport {
    pub fn mean_map(&self) -> f64 {
        0.5 * (self.video_search.map + self.sentence_search.map)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,direction,value\n");
        for (dir, r) in [
            ("video_search", &self.video_search),
            ("sentence_search", &self.sentence_search),
        ] {
            for (metric, v) in [("map", r.map), ("rec5", r.rec5), ("rec10", r.rec10)] {
                out.push_str(&format!("{metric},{dir},{v}\n"));
            }
        }
        out
    }

    /// One-line JSON without the per-query ranks.
    pub fn summary_line(&self) -> String {
        let d = |r: &DirectionReport| serde_json::json!({"map": r.map, "rec5": r.rec5, "rec10": r.rec10});
        serde_json::json!({
            "video_search": d(&self.video_search),
            "sentence_search": d(&self.sentence_search),
        })
        .to_string()
    }
}

/// `scores[q][c] = s_q · v(s_q, H_c)` over every test pair, using all frames.
pub fn score_matrix(params: &ModelParams, test: &[ClipRecord]) -> Result<Vec<Vec<f64>>> {
    for r in test {
        if r.dim() != params.d_in() {
            return Err(WalError::dim(format!("test record {}", r.id), params.d_in(), r.dim()));
        }
    }
    let sents = test
        .iter()
        .map(|r| embed_sentence(params, &r.sentence))
        .collect::<Result<Vec<_>>>()?;
    let clips = test
        .iter()
        .map(|r| embed_frames(params, &r.frames))
        .collect::<Result<Vec<_>>>()?;
    sents
        .par_iter()
        .map(|s| clips.iter().map(|h| pair_score(params, s, h)).collect())
        .collect()
}

pub fn retrieval_from_scores(scores: &[Vec<f64>]) -> Result<RetrievalReport> {
    let n = scores.len();
    if n < 2 {
        return Err(WalError::invalid("test_pairs", "need at least 2 test pairs"));
    }
    let video = (0..n).map(|q| rank_of(&scores[q], q)).collect::<Result<Vec<_>>>()?;
    let sentence = (0..n)
        .map(|c| {
            let column: Vec<f64> = scores.iter().map(|row| row[c]).collect();
            rank_of(&column, c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetrievalReport {
        video_search: DirectionReport::from_ranks(video),
        sentence_search: DirectionReport::from_ranks(sentence),
    })
}

pub fn bidirectional_retrieval(params: &ModelParams, test: &[ClipRecord]) -> Result<RetrievalReport> {
    if test.len() < 2 {
        return Err(WalError::invalid("test_pairs", "need at least 2 test pairs"));
    }
    retrieval_from_scores(&score_matrix(params, test)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateStats {
    /// Percentage of pairs with `z = 0`, one per epoch.
    pub z0_percent: Vec<f64>,
    /// Gate-out percentage of positives per tag, one row per epoch.
    pub z1_percent_by_tag: Vec<[Option<f64>; 3]>,
}

pub fn gate_statistics(history: &[EpochMetrics]) -> Result<GateStats> {
    if history.is_empty() {
        return Err(WalError::invalid("metrics_history", "empty"));
    }
    Ok(GateStats {
        z0_percent: history.iter().map(|m| 100.0 * m.z0_fraction).collect(),
        z1_percent_by_tag: history
            .iter()
            .map(|m| m.z1_rate_by_tag.map(|r| r.map(|x| 100.0 * x)))
            .collect(),
    })
}

/// Attention of a pair's own sentence over all of its frames, scaled so the
/// largest weight is 1. Returns `(frame_index, score)`.
pub fn export_attention(params: &ModelParams, pair: &ClipRecord) -> Result<Vec<(usize, f64)>> {
    let s = embed_sentence(params, &pair.sentence)?;
    let h = embed_frames(params, &pair.frames)?;
    Ok(normalize_to_max(&attention_weights(&params.attention, &s, &h)?)
        .into_iter()
        .enumerate()
        .collect())
}

pub fn normalize_to_max(alpha: &[f64]) -> Vec<f64> {
    let m = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    alpha.iter().map(|a| a / m).collect()
}

pub fn attention_csv(params: &ModelParams, pairs: &[ClipRecord]) -> Result<String> {
    let mut out = String::from("pair_id,frame_index,normalized_score\n");
    for p in pairs {
        for (i, s) in export_attention(params, p)? {
            out.push_str(&format!("{},{i},{s}\n", p.id));
        }
    }
    Ok(out)
}
