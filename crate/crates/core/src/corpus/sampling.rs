//! Balanced pair batches and fixed-length frame sampling.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::ClipRecord;
use crate::error::{Result, WalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairEntry {
    pub sentence: usize,
    pub clip: usize,
    /// 1 for a clip with its own sentence, 0 otherwise.
    pub label: u8,
}

/// Positives first, then the same number of negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub entries: Vec<PairEntry>,
}

impl PairBatch {
    pub fn positives(&self) -> impl Iterator<Item = &PairEntry> {
        self.entries.iter().filter(|e| e.label == 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_batch_args(n_clips: usize, batch_size: usize) -> Result<()> {
    if batch_size < 2 || !batch_size.is_multiple_of(2) {
        return Err(WalError::invalid(
            "batch_size",
            format!("must be even and >= 2, got {batch_size}"),
        ));
    }
    if n_clips < 2 {
        return Err(WalError::invalid(
            "corpus",
            "need at least 2 clips to draw a negative sentence",
        ));
    }
    Ok(())
}

fn build_batch<R: Rng + ?Sized>(positive_clips: &[usize], n_clips: usize, rng: &mut R) -> PairBatch {
    let half = positive_clips.len();
    let mut entries = Vec::with_capacity(2 * half);
    entries.extend(positive_clips.iter().map(|&c| PairEntry {
        sentence: c,
        clip: c,
        label: 1,
    }));
    for _ in 0..half {
        let clip = rng.random_range(0..n_clips);
        // uniform over the other n-1 sentences
        let mut sentence = rng.random_range(0..n_clips - 1);
        if sentence >= clip {
            sentence += 1;
        }
        entries.push(PairEntry {
            sentence,
            clip,
            label: 0,
        });
    }
    PairBatch { entries }
}

/// One batch with uniformly drawn positives and negatives.
pub fn sample_training_batch<R: Rng + ?Sized>(n_clips: usize, batch_size: usize, rng: &mut R) -> Result<PairBatch> {
    check_batch_args(n_clips, batch_size)?;
    let positives: Vec<usize> = (0..batch_size / 2).map(|_| rng.random_range(0..n_clips)).collect();
    Ok(build_batch(&positives, n_clips, rng))
}

/// All batches of one epoch. Clips are shuffled and dealt out as positives,
/// so every clip is a positive at least once; the final short chunk is topped
/// up with uniformly drawn clips.
pub fn epoch_batches<R: Rng + ?Sized>(n_clips: usize, batch_size: usize, rng: &mut R) -> Result<Vec<PairBatch>> {
    check_batch_args(n_clips, batch_size)?;
    let half = batch_size / 2;
    let mut order: Vec<usize> = (0..n_clips).collect();
    order.shuffle(rng);
    let mut batches = Vec::with_capacity(n_clips.div_ceil(half));
    for chunk in order.chunks(half) {
        let mut positives = chunk.to_vec();
        while positives.len() < half {
            positives.push(rng.random_range(0..n_clips));
        }
        batches.push(build_batch(&positives, n_clips, rng));
    }
    Ok(batches)
}

/// Indices of `n_f` frames out of `n_frames`, in temporal order. Without
/// replacement when the clip is long enough; otherwise every frame once plus
/// uniform resampling for the shortfall.
pub fn sample_frame_indices<R: Rng + ?Sized>(n_frames: usize, n_f: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n_frames == 0 {
        return Err(WalError::invalid("clip", "clip has no frames"));
    }
    if n_f == 0 {
        return Err(WalError::invalid("n_f", "must be at least 1"));
    }
    let mut idx: Vec<usize> = if n_frames >= n_f {
        index::sample(rng, n_frames, n_f).into_vec()
    } else {
        let mut v: Vec<usize> = (0..n_frames).collect();
        v.extend((n_frames..n_f).map(|_| rng.random_range(0..n_frames)));
        v
    };
    idx.sort_unstable();
    Ok(idx)
}

pub fn sample_frames<'a, R: Rng + ?Sized>(clip: &'a ClipRecord, n_f: usize, rng: &mut R) -> Result<Vec<&'a [f64]>> {
    Ok(sample_frame_indices(clip.frames.len(), n_f, rng)?
        .into_iter()
        .map(|i| clip.frames[i].as_slice())
        .collect())
}
