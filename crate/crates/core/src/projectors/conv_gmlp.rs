use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{
    add_bias, add_bias_backward, conv1d, conv1d_backward, elementwise_mul, gelu, gelu_backward, matmul, sigmoid,
    sigmoid_backward, Gradients, Tensor,
};

use super::{Projector, ProjectorParams};

pub const SUPPORTED_RATES: [usize; 4] = [1, 2, 4, 8];

pub fn check_rate(rate: usize) -> Result<()> {
    if SUPPORTED_RATES.contains(&rate) {
        Ok(())
    } else {
        Err(Error::UnsupportedRate(rate))
    }
}

/// Geometry of a Conv-GMLP projector.
///
/// `rate_n` is the total sequence reduction; it is split over the two
/// convolution stages as `strides = (s1, s2)` with `s1 * s2 = rate_n`.
/// The gated features are `rate_n * in_channels` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGmlpConfig {
    pub rate_n: usize,
    pub in_channels: usize,
    pub llm_dim: usize,
    pub strides: (usize, usize),
}

impl ConvGmlpConfig {
    /// Strides default to `(rate_n, 1)`.
    pub fn new(rate_n: usize, in_channels: usize, llm_dim: usize) -> Result<Self> {
        check_rate(rate_n)?;
        if in_channels == 0 || llm_dim == 0 {
            return Err(Error::contract("channel counts must be positive"));
        }
        Ok(Self {
            rate_n,
            in_channels,
            llm_dim,
            strides: (rate_n, 1),
        })
    }

    pub fn with_strides(mut self, s1: usize, s2: usize) -> Result<Self> {
        if s1 == 0 || s2 == 0 || s1 * s2 != self.rate_n {
            return Err(Error::contract(format!(
                "strides ({s1}, {s2}) do not multiply to rate {}",
                self.rate_n
            )));
        }
        self.strides = (s1, s2);
        Ok(self)
    }

    pub fn expansion(&self) -> usize {
        self.rate_n
    }

    /// `ceil(len / rate_n)`.
    pub fn output_len(&self, len: usize) -> usize {
        len.div_ceil(self.rate_n)
    }

    /// `(rows, channels)` of the gated features for an input of `len` rows.
    pub fn intermediate_shape(&self, len: usize) -> (usize, usize) {
        (self.output_len(len), self.rate_n * self.in_channels)
    }

    fn stage1_channels(&self) -> usize {
        self.strides.0 * self.in_channels
    }

    fn gated_channels(&self) -> usize {
        self.rate_n * self.in_channels
    }
}

/// Conv-GMLP: `gelu(conv_s1(x))` feeds parallel value and gate convolutions
/// (stride `s2`); their product `value * sigmoid(gate)` is projected to the
/// LLM width and added to a linear map of the `rate_n`-mean-pooled input.
#[derive(Debug, Clone, Copy)]
pub struct ConvGmlp {
    pub cfg: ConvGmlpConfig,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ConvGmlpTrace {
    pub padded_len: usize,
    pre1: Tensor,
    hidden: Tensor,
    value: Tensor,
    gate_sig: Tensor,
    /// `value * sigmoid(gate)`, `[ceil(L / n) x n C]`.
    pub gated: Tensor,
    pooled: Tensor,
}

impl ConvGmlp {
    pub fn new(cfg: ConvGmlpConfig) -> Self {
        Self { cfg }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (len, c) = x.dims2("conv_gmlp")?;
        if c != self.cfg.in_channels {
            return Err(Error::Shape {
                op: "conv_gmlp",
                left: x.shape().to_vec(),
                right: vec![len, self.cfg.in_channels],
            });
        }
        Ok(len)
    }

    /// Mean of each group of `rate_n` consecutive rows; a short final
    /// group averages only its real rows.
    fn pool_rows(&self, x: &Tensor) -> Result<Tensor> {
        let (len, c) = x.dims2("pool_rows")?;
        let n = self.cfg.rate_n;
        let groups = len.div_ceil(n);
        let mut out = vec![0.0; groups * c];
        for g in 0..groups {
            let rows = g * n..((g + 1) * n).min(len);
            let inv = 1.0 / rows.len() as f64;
            for r in rows {
                for (o, v) in out[g * c..(g + 1) * c].iter_mut().zip(x.row(r)) {
                    *o += v * inv;
                }
            }
        }
        Tensor::new(vec![groups, c], out)
    }

    fn pool_rows_backward(&self, len: usize, d_pooled: &Tensor) -> Result<Tensor> {
        let c = self.cfg.in_channels;
        let n = self.cfg.rate_n;
        let mut dx = vec![0.0; len * c];
        for g in 0..len.div_ceil(n) {
            let rows = g * n..((g + 1) * n).min(len);
            let inv = 1.0 / rows.len() as f64;
            for r in rows {
                for (d, v) in dx[r * c..(r + 1) * c].iter_mut().zip(d_pooled.row(g)) {
                    *d += v * inv;
                }
            }
        }
        Tensor::new(vec![len, c], dx)
    }

    pub fn forward_traced(&self, params: &ProjectorParams, x: &Tensor) -> Result<(Tensor, ConvGmlpTrace)> {
        params.validate(&self.param_shapes())?;
        let len = self.check_input(x)?;
        let (s1, s2) = self.cfg.strides;
        let padded_len = self.cfg.output_len(len) * self.cfg.rate_n;

        let pre1 = add_bias(
            &conv1d(x, params.get("conv1.weight")?, s1, padded_len - len)?,
            params.get("conv1.bias")?,
        )?;
        let hidden = gelu(&pre1);
        let value = add_bias(
            &conv1d(&hidden, params.get("value.weight")?, s2, 0)?,
            params.get("value.bias")?,
        )?;
        let gate = add_bias(
            &conv1d(&hidden, params.get("gate.weight")?, s2, 0)?,
            params.get("gate.bias")?,
        )?;
        let gate_sig = sigmoid(&gate);
        let gated = elementwise_mul(&value, &gate_sig)?;

        let pooled = self.pool_rows(x)?;
        let out = add_bias(&matmul(&gated, params.get("out.weight")?)?, params.get("out.bias")?)?
            .add(&matmul(&pooled, params.get("residual.weight")?)?)?;

        Ok((
            out,
            ConvGmlpTrace {
                padded_len,
                pre1,
                hidden,
                value,
                gate_sig,
                gated,
                pooled,
            },
        ))
    }
}

impl Projector for ConvGmlp {
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.cfg.in_channels;
        let (s1, s2) = self.cfg.strides;
        let (h, g, d) = (self.cfg.stage1_channels(), self.cfg.gated_channels(), self.cfg.llm_dim);
        vec![
            ("conv1.weight".into(), vec![s1, c, h]),
            ("conv1.bias".into(), vec![h]),
            ("value.weight".into(), vec![s2, h, g]),
            ("value.bias".into(), vec![g]),
            ("gate.weight".into(), vec![s2, h, g]),
            ("gate.bias".into(), vec![g]),
            ("out.weight".into(), vec![g, d]),
            ("out.bias".into(), vec![d]),
            ("residual.weight".into(), vec![c, d]),
        ]
    }

    fn forward(&self, params: &ProjectorParams, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(params, x)?.0)
    }

    fn backward(&self, params: &ProjectorParams, x: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        let (out, tr) = self.forward_traced(params, x)?;
        if upstream.shape() != out.shape() {
            return Err(Error::Shape {
                op: "conv_gmlp_backward",
                left: upstream.shape().to_vec(),
                right: out.shape().to_vec(),
            });
        }
        let len = x.shape()[0];
        let (s1, s2) = self.cfg.strides;
        let w_out = params.get("out.weight")?;
        let w_res = params.get("residual.weight")?;

        let d_w_out = matmul(&tr.gated.transpose()?, upstream)?;
        let d_b_out = add_bias_backward(upstream)?;
        let d_gated = matmul(upstream, &w_out.transpose()?)?;
        let d_w_res = matmul(&tr.pooled.transpose()?, upstream)?;
        let dx_res = self.pool_rows_backward(len, &matmul(upstream, &w_res.transpose()?)?)?;

        let d_value = elementwise_mul(&d_gated, &tr.gate_sig)?;
        let d_gate = sigmoid_backward(&tr.gate_sig, &elementwise_mul(&d_gated, &tr.value)?)?;
        let (dh_v, d_w_value) = conv1d_backward(&tr.hidden, params.get("value.weight")?, s2, 0, &d_value)?;
        let (dh_g, d_w_gate) = conv1d_backward(&tr.hidden, params.get("gate.weight")?, s2, 0, &d_gate)?;
        let d_pre1 = gelu_backward(&tr.pre1, &dh_v.add(&dh_g)?)?;
        let (dx_conv, d_w1) = conv1d_backward(x, params.get("conv1.weight")?, s1, tr.padded_len - len, &d_pre1)?;

        Ok(Gradients {
            params: vec![
                d_w1,
                add_bias_backward(&d_pre1)?,
                d_w_value,
                add_bias_backward(&d_value)?,
                d_w_gate,
                add_bias_backward(&d_gate)?,
                d_w_out,
                d_b_out,
                d_w_res,
            ],
            input: Some(dx_conv.add(&dx_res)?),
        })
    }
}
