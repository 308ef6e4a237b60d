use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numkit::{matmul, Tensor};

use super::{check_rate, ConvGmlp, ConvGmlpConfig, Projector};

/// Synthetic regression: recover a random linear map of the
/// `rate_n`-mean-pooled input from the full input sequence.
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub input: Tensor,
    pub target: Tensor,
}

impl ToyTask {
    pub const LEN: usize = 64;
    /// Standard deviation of the synthetic input.
    pub const INPUT_SCALE: f64 = 2.0;

    pub fn new(cfg: &ConvGmlpConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let input = Tensor::from_fn(&[Self::LEN, cfg.in_channels], |_| normal() * Self::INPUT_SCALE);
        let map = Tensor::from_fn(&[cfg.in_channels, cfg.llm_dim], |_| normal());
        let n = cfg.rate_n;
        let groups = Self::LEN.div_ceil(n);
        let pooled = Tensor::from_fn(&[groups, cfg.in_channels], |i| {
            let (g, c) = (i / cfg.in_channels, i % cfg.in_channels);
            let rows = g * n..((g + 1) * n).min(Self::LEN);
            let k = rows.len() as f64;
            rows.map(|r| input.at2(r, c)).sum::<f64>() / k
        });
        Ok(Self {
            target: matmul(&pooled, &map)?,
            input,
        })
    }

    /// Squared error summed over features, averaged over output tokens,
    /// with its gradient.
    fn mse(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        let diff = y.sub(&self.target)?;
        let n = diff.shape()[0] as f64;
        let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
        Ok((loss, diff.scale(2.0 / n)))
    }
}

/// Fits a freshly initialized Conv-GMLP to [`ToyTask`] by plain gradient
/// descent and returns the per-token mean-squared loss before each step.
pub fn toy_fit(cfg: &ConvGmlpConfig, steps: usize, lr: f64, seed: u64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::contract("toy_fit: steps must be >= 1"));
    }
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::contract(format!("toy_fit: invalid learning rate {lr}")));
    }
    let task = ToyTask::new(cfg, seed)?;
    let proj = ConvGmlp::new(*cfg);
    let mut params = proj.init(seed);
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let y = proj.forward(&params, &task.input)?;
        let (loss, upstream) = task.mse(&y)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        curve.push(loss);
        if lr > 0.0 {
            let grads = proj.backward(&params, &task.input, &upstream)?;
            params = params.descend(&grads.params, lr)?;
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub rate: usize,
    /// Output length over input length.
    pub len_ratio: f64,
    pub params: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Runs [`toy_fit`] once per rate with identical widths, steps, learning
/// rate and seed.
pub fn ablate_rates(
    rates: &[usize],
    in_channels: usize,
    llm_dim: usize,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if rates.is_empty() {
        return Err(Error::contract("ablate_rates: no rates given"));
    }
    for &r in rates {
        check_rate(r)?;
    }
    Exec::default()
        .map_slice(rates, |&rate| {
            let cfg = ConvGmlpConfig::new(rate, in_channels, llm_dim)?;
            let curve = toy_fit(&cfg, steps, lr, seed)?;
            Ok(AblationRow {
                rate,
                len_ratio: cfg.output_len(ToyTask::LEN) as f64 / ToyTask::LEN as f64,
                params: ConvGmlp::new(cfg).param_count(),
                initial_loss: curve[0],
                final_loss: *curve.last().expect("steps >= 1"),
            })
        })
        .into_iter()
        .collect()
}
