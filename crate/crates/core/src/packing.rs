//! Sample packing with per-sample attention isolation.
//!
//! Samples are binned into fixed-capacity rows; each row records the
//! cumulative sequence lengths (`cu_seqlens`) of its members. Attention
//! inside a row is causal within a sample and blocked across samples and
//! padding, which [`packed_attention`] evaluates explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numkit::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackPolicy {
    /// Arrival order; each sample goes to the first bin with room.
    FirstFit,
    /// Longest first (ties by arrival), then first fit.
    FirstFitDecreasing,
}

/// One packed row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    /// Sample ids (indices into the input length list) in row order.
    pub samples: Vec<usize>,
    /// `[0, l0, l0 + l1, ...]`.
    pub cu_seqlens: Vec<usize>,
    #[serde(rename = "pad")]
    pub pad_len: usize,
}

impl Bin {
    pub fn used(&self) -> usize {
        *self.cu_seqlens.last().expect("cu_seqlens starts at 0")
    }

    /// Member lengths recovered from the boundaries.
    pub fn lengths(&self) -> Vec<usize> {
        self.cu_seqlens.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Segment index of position `pos`, `None` for padding.
    pub fn segment_of(&self, pos: usize) -> Option<usize> {
        if pos >= self.used() {
            return None;
        }
        Some(self.cu_seqlens.partition_point(|&b| b <= pos) - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedBatch {
    pub capacity: usize,
    pub bins: Vec<Bin>,
}

impl PackedBatch {
    /// Total padding tokens across bins.
    pub fn waste(&self) -> usize {
        self.bins.iter().map(|b| b.pad_len).sum()
    }
}

pub fn pack(lengths: &[usize], capacity: usize, policy: PackPolicy) -> Result<PackedBatch> {
    if capacity == 0 {
        return Err(Error::contract("pack: capacity must be positive"));
    }
    for (id, &len) in lengths.iter().enumerate() {
        if len == 0 {
            return Err(Error::contract(format!("pack: sample {id} has zero length")));
        }
        if len > capacity {
            return Err(Error::Oversize { id, len, capacity });
        }
    }
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    if policy == PackPolicy::FirstFitDecreasing {
        order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]));
    }

    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut free: Vec<usize> = Vec::new();
    for id in order {
        let len = lengths[id];
        match free.iter().position(|&f| f >= len) {
            Some(b) => {
                members[b].push(id);
                free[b] -= len;
            }
            None => {
                members.push(vec![id]);
                free.push(capacity - len);
            }
        }
    }

    let bins = members
        .into_iter()
        .zip(free)
        .map(|(samples, pad_len)| {
            let mut cu_seqlens = Vec::with_capacity(samples.len() + 1);
            cu_seqlens.push(0);
            for &id in &samples {
                cu_seqlens.push(cu_seqlens.last().unwrap() + lengths[id]);
            }
            Bin {
                samples,
                cu_seqlens,
                pad_len,
            }
        })
        .collect();
    Ok(PackedBatch { capacity, bins })
}

/// Explicit block-causal mask of one bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolationMask {
    size: usize,
    allowed: Vec<bool>,
}

impl IsolationMask {
    /// Dense mask from `cu_seqlens`: `i` may attend to `j` iff both lie in
    /// the same segment and `j <= i`. Padding rows attend nowhere.
    pub fn from_cu_seqlens(cu_seqlens: &[usize], capacity: usize) -> Result<Self> {
        validate_cu_seqlens(cu_seqlens, capacity)?;
        let mut allowed = vec![false; capacity * capacity];
        for w in cu_seqlens.windows(2) {
            for i in w[0]..w[1] {
                for j in w[0]..=i {
                    allowed[i * capacity + j] = true;
                }
            }
        }
        Ok(Self {
            size: capacity,
            allowed,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.allowed[i * self.size..(i + 1) * self.size]
    }

    /// All `(i, j)` pairs with attention allowed, row-major.
    pub fn allowed_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.size)
            .flat_map(|i| (0..self.size).map(move |j| (i, j)))
            .filter(|&(i, j)| self.allows(i, j))
            .collect()
    }

    /// Checks this dense mask against the implicit rule on `bin`.
    pub fn matches_bin(&self, bin: &Bin) -> bool {
        (0..self.size).all(|i| {
            (0..self.size).all(|j| {
                let implicit = match (bin.segment_of(i), bin.segment_of(j)) {
                    (Some(a), Some(b)) => a == b && j <= i,
                    _ => false,
                };
                implicit == self.allows(i, j)
            })
        })
    }
}

fn validate_cu_seqlens(cu: &[usize], capacity: usize) -> Result<()> {
    if cu.first() != Some(&0) {
        return Err(Error::contract("cu_seqlens must start at 0"));
    }
    if cu.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract(format!(
            "cu_seqlens must be strictly increasing: {cu:?}"
        )));
    }
    if *cu.last().unwrap() > capacity {
        return Err(Error::contract(format!("cu_seqlens {cu:?} exceed capacity {capacity}")));
    }
    Ok(())
}

pub fn build_mask(batch: &PackedBatch, bin_index: usize) -> Result<IsolationMask> {
    let bin = batch.bins.get(bin_index).ok_or(Error::OutOfRange {
        index: bin_index,
        len: batch.bins.len(),
    })?;
    IsolationMask::from_cu_seqlens(&bin.cu_seqlens, batch.capacity)
}

pub fn packed_attention(tokens: &Tensor, mask: &IsolationMask) -> Result<Tensor> {
    packed_attention_with(Exec::default(), tokens, mask)
}

/// Single-head scaled dot-product attention with identity projections
/// (`q = k = v = tokens`) restricted to the mask. Rows with no allowed
/// keys produce zeros.
pub fn packed_attention_with(exec: Exec, tokens: &Tensor, mask: &IsolationMask) -> Result<Tensor> {
    let (n, d) = tokens.dims2("packed_attention")?;
    if n != mask.size() {
        return Err(Error::Shape {
            op: "packed_attention",
            left: tokens.shape().to_vec(),
            right: vec![mask.size(), mask.size()],
        });
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0; n * d];
    exec.for_each_row(&mut out, d, |i, row| {
        let keys: Vec<usize> = (0..n).filter(|&j| mask.allows(i, j)).collect();
        if keys.is_empty() {
            return;
        }
        let q = tokens.row(i);
        let scores: Vec<f64> = keys
            .iter()
            .map(|&j| q.iter().zip(tokens.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        for (&j, w) in keys.iter().zip(&weights) {
            for (o, v) in row.iter_mut().zip(tokens.row(j)) {
                *o += w / z * v;
            }
        }
    });
    Tensor::new(vec![n, d], out)
}
