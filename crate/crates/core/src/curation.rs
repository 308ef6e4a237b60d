//! Data-curation stages: loss-distribution filtering, 1:3 cross-modal text
//! splitting with timbre assignment, proportional dataset mixing and ASR
//! roundtrip filtering. Every stage is pure and seeded.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit;
use crate::exec::Exec;

pub const TIMBRE_COUNT: u32 = 44;

pub const DEFAULT_PROMPT: &str = "Please listen to the following audio describing the content of the image. \
Your task is to supplement more information by integrating the image after listening";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFilterReport {
    pub mu: f64,
    pub sigma: f64,
    pub kept_ids: Vec<String>,
    pub removed_low_ids: Vec<String>,
    pub removed_high_ids: Vec<String>,
}

/// Keeps samples whose loss lies in the closed interval `mu ± sigma`, with
/// `sigma` the population standard deviation. Id order is preserved.
pub fn gaussian_filter(losses: &[(String, f64)]) -> Result<LossFilterReport> {
    if losses.len() < 2 {
        return Err(Error::contract(format!(
            "gaussian_filter needs at least 2 samples, got {}",
            losses.len()
        )));
    }
    if let Some((id, l)) = losses.iter().find(|(_, l)| !l.is_finite()) {
        return Err(Error::contract(format!("loss for {id} is not finite: {l}")));
    }
    let n = losses.len() as f64;
    let first = losses[0].1;
    let (mu, sigma) = if losses.iter().all(|(_, l)| *l == first) {
        (first, 0.0)
    } else {
        let mu = losses.iter().map(|(_, l)| l).sum::<f64>() / n;
        let var = losses.iter().map(|(_, l)| (l - mu).powi(2)).sum::<f64>() / n;
        (mu, var.sqrt())
    };
    let mut r = LossFilterReport {
        mu,
        sigma,
        kept_ids: Vec::new(),
        removed_low_ids: Vec::new(),
        removed_high_ids: Vec::new(),
    };
    for (id, l) in losses {
        if *l < mu - sigma {
            r.removed_low_ids.push(id.clone());
        } else if *l > mu + sigma {
            r.removed_high_ids.push(id.clone());
        } else {
            r.kept_ids.push(id.clone());
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSplit {
    pub audio_text: String,
    pub target_text: String,
}

/// Cuts `text` at the word start nearest to a quarter of its character
/// count; earlier boundaries win ties. Whitespace before the cut stays with
/// the audio part so the two halves concatenate back to the source.
pub fn split_one_three(text: &str) -> Result<TextSplit> {
    let words = text.split_whitespace().count();
    if words < 4 {
        return Err(Error::contract(format!(
            "split_one_three needs at least 4 words, got {words}"
        )));
    }
    let total = text.chars().count() as f64;
    let target = total / 4.0;
    let mut best: Option<(f64, usize)> = None;
    let mut prev_ws = true;
    for (ci, (bi, c)) in text.char_indices().enumerate() {
        let ws = c.is_whitespace();
        if prev_ws && !ws && !text[..bi].trim().is_empty() {
            let d = (ci as f64 - target).abs();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, bi));
            }
        }
        prev_ws = ws;
    }
    let cut = best
        .map(|(_, b)| b)
        .expect("at least 4 words means at least 3 interior word starts");
    Ok(TextSplit {
        audio_text: text[..cut].to_string(),
        target_text: text[cut..].to_string(),
    })
}

/// One line of the cross-modal TTS manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossModalSample {
    pub audio_text: String,
    pub target_text: String,
    #[serde(rename = "timbre")]
    pub timbre_id: u32,
    pub prompt: String,
}

/// Uniform seeded timbre draw over `[0, 44)`, one per split, in order.
pub fn assign_timbres(splits: Vec<TextSplit>, seed: u64) -> Vec<CrossModalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    splits
        .into_iter()
        .map(|s| CrossModalSample {
            audio_text: s.audio_text,
            target_text: s.target_text,
            timbre_id: rng.gen_range(0..TIMBRE_COUNT),
            prompt: DEFAULT_PROMPT.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixPlan {
    pub names: Vec<String>,
    pub sizes: Vec<u64>,
    pub sample_counts: Vec<u64>,
    pub budget: u64,
    pub seed: u64,
}

fn name_priority(name: &str, seed: u64) -> u64 {
    // FNV-1a, then a splitmix64 finalizer keyed by the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Size-proportional allocation of `budget` samples with largest-remainder
/// rounding. Remainder ties are broken by a seeded hash of the dataset name,
/// so counts do not depend on input order.
pub fn mix_plan(sizes: &[(String, u64)], budget: u64, seed: u64) -> Result<MixPlan> {
    let mut seen = HashSet::new();
    for (n, _) in sizes {
        if !seen.insert(n.as_str()) {
            return Err(Error::contract(format!("duplicate dataset name {n}")));
        }
    }
    let total: u128 = sizes.iter().map(|(_, s)| u128::from(*s)).sum();
    if u128::from(budget) > total {
        return Err(Error::contract(format!(
            "budget {budget} exceeds total dataset size {total}"
        )));
    }
    let mut counts = vec![0u64; sizes.len()];
    if budget > 0 {
        let mut rems = Vec::with_capacity(sizes.len());
        let mut assigned = 0u64;
        for (i, (name, s)) in sizes.iter().enumerate() {
            let num = u128::from(budget) * u128::from(*s);
            counts[i] = (num / total) as u64;
            assigned += counts[i];
            rems.push((num % total, name_priority(name, seed), name.as_str(), i));
        }
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(b.2)));
        for &(_, _, _, i) in rems.iter().take((budget - assigned) as usize) {
            counts[i] += 1;
        }
    }
    Ok(MixPlan {
        names: sizes.iter().map(|(n, _)| n.clone()).collect(),
        sizes: sizes.iter().map(|(_, s)| *s).collect(),
        sample_counts: counts,
        budget,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "threshold", rename_all = "snake_case")]
pub enum RoundtripMode {
    Exact,
    CerThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrPair {
    pub id: String,
    pub prompt: String,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub kept_ids: Vec<String>,
    pub removed_ids: Vec<String>,
}

/// Lowercase, collapse whitespace, strip trailing punctuation.
pub fn normalize_transcript(text: &str) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    joined
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || matches!(c, '。' | '！' | '？' | '…'))
        .trim_end()
        .to_string()
}

/// Keeps pairs whose transcript matches the prompt after normalization.
/// Pairs with an empty normalized prompt are always removed.
pub fn asr_roundtrip_filter(pairs: &[AsrPair], mode: RoundtripMode) -> Result<RoundtripReport> {
    if let RoundtripMode::CerThreshold(t) = mode {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::contract(format!("cer threshold must be in [0, 1], got {t}")));
        }
    }
    let keep = Exec::default().map_slice(pairs, |p| {
        let a = normalize_transcript(&p.prompt);
        let b = normalize_transcript(&p.transcript);
        if a.is_empty() {
            return false;
        }
        match mode {
            RoundtripMode::Exact => a == b,
            RoundtripMode::CerThreshold(t) => evalkit::cer(&a, &b).is_ok_and(|r| r.value <= t),
        }
    });
    let mut r = RoundtripReport::default();
    for (p, k) in pairs.iter().zip(keep) {
        if k {
            r.kept_ids.push(p.id.clone());
        } else {
            r.removed_ids.push(p.id.clone());
        }
    }
    Ok(r)
}
