//! Synthetic sentence/clip corpora with planted correspondence noise.
//!
//! A [`ConceptBank`] of random unit vectors stands in for frozen pretrained
//! encoders: a sentence "mentions" a small subset of concepts and a frame
//! "shows" a subset. How the sentence subset relates to the frame subsets is
//! controlled by the planted [`Tag`]:
//!
//! * `clean`: at least half of the frames show exactly the sentence's concepts,
//!   the rest show unrelated distractor concepts.
//! * `loose`: a single frame shares one concept with the sentence.
//! * `noise`: no frame shares anything with the sentence.
//!
//! Test pairs are always clean.

mod io;
mod sampling;

pub use io::{load_corpus, save_corpus, Corpus, FORMAT_NAME, FORMAT_VERSION};
pub use sampling::{epoch_batches, sample_frame_indices, sample_frames, sample_training_batch, PairBatch, PairEntry};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalError};
use crate::linalg::{dot, l2_normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Clean,
    Loose,
    Noise,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::Clean, Tag::Loose, Tag::Noise];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Clean => "clean",
            Tag::Loose => "loose",
            Tag::Noise => "noise",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One sentence/clip pair with its planted ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub tag: Tag,
    pub sentence: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    /// `grounded[i]` is true when frame `i` shows the sentence's concepts.
    pub grounded: Vec<bool>,
}

impl ClipRecord {
    pub fn dim(&self) -> usize {
        self.sentence.len()
    }
}

/// Random unit vectors used as the atoms of every raw feature.
#[derive(Debug, Clone)]
pub struct ConceptBank {
    pub concepts: Vec<Vec<f64>>,
    pub seed: u64,
}

impl ConceptBank {
    pub fn generate<R: Rng + ?Sized>(k: usize, d: usize, seed: u64, rng: &mut R) -> Self {
        let concepts = (0..k)
            .map(|_| {
                loop {
                    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                    // a zero draw is astronomically unlikely, but the norm invariant is absolute
                    if v.iter().any(|&x| x != 0.0) {
                        break l2_normalize(&v);
                    }
                }
            })
            .collect();
        ConceptBank { concepts, seed }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.concepts.first().map_or(0, Vec::len)
    }

    fn compose(&self, subset: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        for &c in subset {
            for (a, x) in acc.iter_mut().zip(&self.concepts[c]) {
                *a += x;
            }
        }
        l2_normalize(&acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub n_concepts: usize,
    pub frac_clean: f64,
    pub frac_loose: f64,
    pub frac_noise: f64,
    pub concepts_per_pair: usize,
    pub feature_noise_sigma: f64,
    pub frame_len_min: usize,
    pub frame_len_max: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_train: 2000,
            n_test: 100,
            d: 32,
            n_concepts: 50,
            frac_clean: 0.5,
            frac_loose: 0.3,
            frac_noise: 0.2,
            concepts_per_pair: 3,
            feature_noise_sigma: 0.05,
            frame_len_min: 4,
            frame_len_max: 10,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [
            ("frac_clean", self.frac_clean),
            ("frac_loose", self.frac_loose),
            ("frac_noise", self.frac_noise),
        ];
        for (name, f) in fracs {
            if !(f.is_finite() && f >= 0.0) {
                return Err(WalError::invalid(
                    name,
                    format!("must be a nonnegative number, got {f}"),
                ));
            }
        }
        let sum = self.frac_clean + self.frac_loose + self.frac_noise;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(WalError::invalid(
                "frac_clean/frac_loose/frac_noise",
                format!("fractions must sum to 1, got {sum}"),
            ));
        }
        if self.n_test < 1 {
            return Err(WalError::invalid("n_test", "must be at least 1"));
        }
        if self.d < 2 {
            return Err(WalError::invalid("d", "must be at least 2"));
        }
        if self.concepts_per_pair < 1 {
            return Err(WalError::invalid("concepts_per_pair", "must be at least 1"));
        }
        // noise pairs need a sentence subset and a disjoint frame subset
        if self.n_concepts < 2 * self.concepts_per_pair {
            return Err(WalError::invalid(
                "n_concepts",
                format!("need at least 2 * concepts_per_pair = {}", 2 * self.concepts_per_pair),
            ));
        }
        if self.frame_len_min < 1 || self.frame_len_max < self.frame_len_min {
            return Err(WalError::invalid(
                "frame_len_min/frame_len_max",
                format!(
                    "need 1 <= min <= max, got {}..{}",
                    self.frame_len_min, self.frame_len_max
                ),
            ));
        }
        if !(self.feature_noise_sigma.is_finite() && self.feature_noise_sigma >= 0.0) {
            return Err(WalError::invalid("feature_noise_sigma", "must be a nonnegative number"));
        }
        Ok(())
    }
}

/// Train and test splits generated from one concept bank.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub train: Vec<ClipRecord>,
    pub test: Vec<ClipRecord>,
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bank = ConceptBank::generate(spec.n_concepts, spec.d, spec.seed, &mut rng);
    let gen = Generator { spec, bank: &bank };

    let cut_clean = spec.frac_clean;
    let cut_loose = spec.frac_clean + spec.frac_loose;
    let train = (0..spec.n_train)
        .map(|i| {
            let u: f64 = rng.random();
            let tag = if u < cut_clean {
                Tag::Clean
            } else if u < cut_loose {
                Tag::Loose
            } else {
                Tag::Noise
            };
            // degenerate fractions must not leak a tag with zero mass through rounding
            let tag = match tag {
                Tag::Noise if spec.frac_noise == 0.0 => {
                    if spec.frac_loose > 0.0 {
                        Tag::Loose
                    } else {
                        Tag::Clean
                    }
                }
                t => t,
            };
            gen.record(format!("train-{i:06}"), tag, &mut rng)
        })
        .collect();
    let test = (0..spec.n_test)
        .map(|i| gen.record(format!("test-{i:04}"), Tag::Clean, &mut rng))
        .collect();
    Ok(GeneratedCorpus { train, test })
}

struct Generator<'a> {
    spec: &'a CorpusSpec,
    bank: &'a ConceptBank,
}

impl Generator<'_> {
    fn perturb<R: Rng + ?Sized>(&self, base: Vec<f64>, rng: &mut R) -> Vec<f64> {
        let sigma = self.spec.feature_noise_sigma;
        if sigma == 0.0 {
            return base;
        }
        let noisy: Vec<f64> = base
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(rng);
                x + sigma * z
            })
            .collect();
        l2_normalize(&noisy)
    }

    fn feature<R: Rng + ?Sized>(&self, subset: &[usize], rng: &mut R) -> Vec<f64> {
        let base = self.bank.compose(subset);
        self.perturb(base, rng)
    }

    /// `count` distinct concepts, none of which are in `exclude`.
    fn draw_excluding<R: Rng + ?Sized>(&self, count: usize, exclude: &[usize], rng: &mut R) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..self.bank.len()).filter(|c| !exclude.contains(c)).collect();
        pool.shuffle(rng);
        pool.truncate(count);
        pool
    }

    fn record<R: Rng + ?Sized>(&self, id: String, tag: Tag, rng: &mut R) -> ClipRecord {
        let c = self.spec.concepts_per_pair;
        let subset = self.draw_excluding(c, &[], rng);
        let sentence = self.feature(&subset, rng);
        let n = rng.random_range(self.spec.frame_len_min..=self.spec.frame_len_max);

        let mut grounded = vec![false; n];
        match tag {
            Tag::Clean => {
                let k = rng.random_range(n.div_ceil(2)..=n);
                let mut slots: Vec<usize> = (0..n).collect();
                slots.shuffle(rng);
                for &i in &slots[..k] {
                    grounded[i] = true;
                }
            }
            Tag::Loose => grounded[rng.random_range(0..n)] = true,
            Tag::Noise => {}
        }

        let frames = grounded
            .iter()
            .map(|&g| match (tag, g) {
                (Tag::Clean, true) => self.feature(&subset, rng),
                (Tag::Loose, true) => {
                    let shared = subset[rng.random_range(0..c)];
                    let mut s = self.draw_excluding(c - 1, &subset, rng);
                    s.push(shared);
                    self.feature(&s, rng)
                }
                _ => {
                    let s = self.draw_excluding(c, &subset, rng);
                    self.feature(&s, rng)
                }
            })
            .collect();

        ClipRecord {
            id,
            tag,
            sentence,
            frames,
            grounded,
        }
    }
}

/// Mean cosine between each sentence and the mean of its grounded frames
/// (all frames when none are grounded), restricted to records with `tag`.
pub fn mean_grounded_similarity(records: &[ClipRecord], tag: Tag) -> Option<f64> {
    let sims: Vec<f64> = records
        .iter()
        .filter(|r| r.tag == tag)
        .map(|r| {
            let any = r.grounded.iter().any(|&g| g);
            let mut mean = vec![0.0; r.dim()];
            let mut count = 0usize;
            for (f, &g) in r.frames.iter().zip(&r.grounded) {
                if g || !any {
                    for (m, x) in mean.iter_mut().zip(f) {
                        *m += x;
                    }
                    count += 1;
                }
            }
            let mean: Vec<f64> = mean.iter().map(|m| m / count as f64).collect();
            dot(&r.sentence, &l2_normalize(&mean))
        })
        .collect();
    if sims.is_empty() {
        None
    } else {
        Some(sims.iter().sum::<f64>() / sims.len() as f64)
    }
}
