use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{
    add_bias, add_bias_backward, conv2d, conv2d_backward, gelu, gelu_backward, matmul, pool2x2, pool2x2_backward,
    Gradients, PadPolicy, Tensor,
};

use super::{Projector, ProjectorParams};

/// Side of the encoder's square patch grid.
pub const GRID_SIDE: usize = 27;
pub const GRID_TOKENS: usize = GRID_SIDE * GRID_SIDE;
/// 13 rows x 14 columns after 2x2 pooling with the column axis padded to 28.
pub const POOLED_TOKENS: usize = 182;
const POOLED_ROWS: usize = 13;
const POOLED_COLS: usize = 14;
const CABS_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualVariant {
    /// Two-layer MLP on every patch; 729 tokens.
    Mlp,
    /// 3x3 conv, 2x2 pool, 3x3 conv; 182 tokens.
    CAbs,
    /// Concatenate each 2x2 neighbourhood, then the MLP; 182 tokens.
    Concat,
    /// 2x2 mean pool, then the MLP; 182 tokens.
    MeanPool,
}

impl VisualVariant {
    pub const ALL: [VisualVariant; 4] = [Self::Mlp, Self::CAbs, Self::Concat, Self::MeanPool];

    pub fn output_tokens(self) -> usize {
        match self {
            Self::Mlp => GRID_TOKENS,
            _ => POOLED_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualProjectorConfig {
    pub variant: VisualVariant,
    pub in_dim: usize,
    pub llm_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct VisualProjector {
    pub cfg: VisualProjectorConfig,
}

struct MlpCache {
    pre: Tensor,
    hidden: Tensor,
}

fn mlp_forward(params: &ProjectorParams, x: &Tensor) -> Result<(Tensor, MlpCache)> {
    let pre = add_bias(&matmul(x, params.get("fc1.weight")?)?, params.get("fc1.bias")?)?;
    let hidden = gelu(&pre);
    let y = add_bias(&matmul(&hidden, params.get("fc2.weight")?)?, params.get("fc2.bias")?)?;
    Ok((y, MlpCache { pre, hidden }))
}

/// Returns `(d_input, [dW1, db1, dW2, db2])`.
fn mlp_backward(params: &ProjectorParams, x: &Tensor, cache: &MlpCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
    let d_w2 = matmul(&cache.hidden.transpose()?, dy)?;
    let d_b2 = add_bias_backward(dy)?;
    let d_hidden = matmul(dy, &params.get("fc2.weight")?.transpose()?)?;
    let d_pre = gelu_backward(&cache.pre, &d_hidden)?;
    let d_w1 = matmul(&x.transpose()?, &d_pre)?;
    let d_b1 = add_bias_backward(&d_pre)?;
    let dx = matmul(&d_pre, &params.get("fc1.weight")?.transpose()?)?;
    Ok((dx, vec![d_w1, d_b1, d_w2, d_b2]))
}

/// Concatenates each 2x2 neighbourhood of a `[27 x 27 x d]` grid into one
/// `4d` token. Rows are floored, the column axis is zero-padded to 28.
fn group_2x2(grid: &Tensor) -> Result<Tensor> {
    let d = grid.shape()[2];
    let mut out = vec![0.0; POOLED_TOKENS * 4 * d];
    for i in 0..POOLED_ROWS {
        for j in 0..POOLED_COLS {
            let tok = &mut out[(i * POOLED_COLS + j) * 4 * d..(i * POOLED_COLS + j + 1) * 4 * d];
            for (q, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                let (r, c) = (2 * i + di, 2 * j + dj);
                if c < GRID_SIDE {
                    let base = (r * GRID_SIDE + c) * d;
                    tok[q * d..(q + 1) * d].copy_from_slice(&grid.data()[base..base + d]);
                }
            }
        }
    }
    Tensor::new(vec![POOLED_TOKENS, 4 * d], out)
}

fn group_2x2_backward(d: usize, d_tokens: &Tensor) -> Result<Tensor> {
    let mut dx = vec![0.0; GRID_TOKENS * d];
    for i in 0..POOLED_ROWS {
        for j in 0..POOLED_COLS {
            let tok = d_tokens.row(i * POOLED_COLS + j);
            for (q, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                let (r, c) = (2 * i + di, 2 * j + dj);
                if c < GRID_SIDE {
                    let base = (r * GRID_SIDE + c) * d;
                    for (g, v) in dx[base..base + d].iter_mut().zip(&tok[q * d..(q + 1) * d]) {
                        *g += v;
                    }
                }
            }
        }
    }
    Tensor::new(vec![GRID_TOKENS, d], dx)
}

fn as_grid(x: &Tensor) -> Result<Tensor> {
    let d = x.shape()[1];
    x.clone().reshape(&[GRID_SIDE, GRID_SIDE, d])
}

fn flatten_grid(x: Tensor) -> Result<Tensor> {
    let s = x.shape().to_vec();
    x.reshape(&[s[0] * s[1], s[2]])
}

const SAME: usize = CABS_KERNEL - 1;

impl VisualProjector {
    pub fn new(cfg: VisualProjectorConfig) -> Self {
        Self { cfg }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (rows, d) = x.dims2("visual_project")?;
        if rows != GRID_TOKENS || d != self.cfg.in_dim {
            return Err(Error::Shape {
                op: "visual_project",
                left: x.shape().to_vec(),
                right: vec![GRID_TOKENS, self.cfg.in_dim],
            });
        }
        Ok(())
    }

    /// Parameters of the first layer, the quantity the Concat variant grows.
    pub fn first_layer_params(&self) -> usize {
        self.param_shapes()[..2]
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

impl Projector for VisualProjector {
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d_in, d) = (self.cfg.in_dim, self.cfg.llm_dim);
        let k = CABS_KERNEL;
        match self.cfg.variant {
            VisualVariant::CAbs => vec![
                ("conv1.weight".into(), vec![k, k, d_in, d]),
                ("conv1.bias".into(), vec![d]),
                ("conv2.weight".into(), vec![k, k, d, d]),
                ("conv2.bias".into(), vec![d]),
            ],
            variant => {
                let first = if variant == VisualVariant::Concat {
                    4 * d_in
                } else {
                    d_in
                };
                vec![
                    ("fc1.weight".into(), vec![first, d]),
                    ("fc1.bias".into(), vec![d]),
                    ("fc2.weight".into(), vec![d, d]),
                    ("fc2.bias".into(), vec![d]),
                ]
            }
        }
    }

    fn forward(&self, params: &ProjectorParams, x: &Tensor) -> Result<Tensor> {
        params.validate(&self.param_shapes())?;
        self.check_input(x)?;
        match self.cfg.variant {
            VisualVariant::Mlp => Ok(mlp_forward(params, x)?.0),
            VisualVariant::MeanPool => {
                let pooled = flatten_grid(pool2x2(&as_grid(x)?, PadPolicy::PadCols)?)?;
                Ok(mlp_forward(params, &pooled)?.0)
            }
            VisualVariant::Concat => Ok(mlp_forward(params, &group_2x2(&as_grid(x)?)?)?.0),
            VisualVariant::CAbs => {
                let d = self.cfg.llm_dim;
                let a1 = conv2d(&as_grid(x)?, params.get("conv1.weight")?, SAME, SAME)?;
                let a1 = add_bias(&flatten_grid(a1)?, params.get("conv1.bias")?)?;
                let h = gelu(&a1).reshape(&[GRID_SIDE, GRID_SIDE, d])?;
                let p = pool2x2(&h, PadPolicy::PadCols)?;
                let a2 = conv2d(&p, params.get("conv2.weight")?, SAME, SAME)?;
                add_bias(&flatten_grid(a2)?, params.get("conv2.bias")?)
            }
        }
    }

    fn backward(&self, params: &ProjectorParams, x: &Tensor, upstream: &Tensor) -> Result<Gradients> {
        params.validate(&self.param_shapes())?;
        self.check_input(x)?;
        let expected = [self.cfg.variant.output_tokens(), self.cfg.llm_dim];
        if upstream.shape() != expected {
            return Err(Error::Shape {
                op: "visual_backward",
                left: upstream.shape().to_vec(),
                right: expected.to_vec(),
            });
        }
        let d_in = self.cfg.in_dim;
        let (dx, grads) = match self.cfg.variant {
            VisualVariant::Mlp => {
                let (_, cache) = mlp_forward(params, x)?;
                mlp_backward(params, x, &cache, upstream)?
            }
            VisualVariant::MeanPool => {
                let grid = as_grid(x)?;
                let pooled = flatten_grid(pool2x2(&grid, PadPolicy::PadCols)?)?;
                let (_, cache) = mlp_forward(params, &pooled)?;
                let (d_pooled, grads) = mlp_backward(params, &pooled, &cache, upstream)?;
                let d_pooled = d_pooled.reshape(&[POOLED_ROWS, POOLED_COLS, d_in])?;
                let dx = pool2x2_backward(grid.shape(), PadPolicy::PadCols, &d_pooled)?;
                (flatten_grid(dx)?, grads)
            }
            VisualVariant::Concat => {
                let grouped = group_2x2(&as_grid(x)?)?;
                let (_, cache) = mlp_forward(params, &grouped)?;
                let (d_grouped, grads) = mlp_backward(params, &grouped, &cache, upstream)?;
                (group_2x2_backward(d_in, &d_grouped)?, grads)
            }
            VisualVariant::CAbs => {
                let d = self.cfg.llm_dim;
                let grid = as_grid(x)?;
                let (k1, k2) = (params.get("conv1.weight")?, params.get("conv2.weight")?);
                let a1 = add_bias(
                    &flatten_grid(conv2d(&grid, k1, SAME, SAME)?)?,
                    params.get("conv1.bias")?,
                )?;
                let h = gelu(&a1).reshape(&[GRID_SIDE, GRID_SIDE, d])?;
                let p = pool2x2(&h, PadPolicy::PadCols)?;

                let d_b2 = add_bias_backward(upstream)?;
                let dy = upstream.clone().reshape(&[POOLED_ROWS, POOLED_COLS, d])?;
                let (dp, d_k2) = conv2d_backward(&p, k2, SAME, SAME, &dy)?;
                let dh = flatten_grid(pool2x2_backward(h.shape(), PadPolicy::PadCols, &dp)?)?;
                let da1 = gelu_backward(&a1, &dh)?;
                let d_b1 = add_bias_backward(&da1)?;
                let (dx, d_k1) = conv2d_backward(&grid, k1, SAME, SAME, &da1.reshape(&[GRID_SIDE, GRID_SIDE, d])?)?;
                (flatten_grid(dx)?, vec![d_k1, d_b1, d_k2, d_b2])
            }
        };
        Ok(Gradients {
            params: grads,
            input: Some(dx),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj(variant: VisualVariant) -> VisualProjector {
        VisualProjector::new(VisualProjectorConfig {
            variant,
            in_dim: 3,
            llm_dim: 2,
        })
    }

    #[test]
    fn token_counts() {
        let x = Tensor::from_fn(&[729, 3], |i| (i as f64 * 0.37).sin());
        for v in VisualVariant::ALL {
            let p = proj(v);
            let y = p.forward(&p.init(0), &x).unwrap();
            assert_eq!(y.shape(), &[v.output_tokens(), 2], "{v:?}");
        }
    }

    #[test]
    fn wrong_row_count() {
        let p = proj(VisualVariant::MeanPool);
        let err = p.forward(&p.init(0), &Tensor::zeros(&[730, 3])).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn grouping_places_neighbours() {
        let grid = Tensor::from_fn(&[27, 27, 1], |i| i as f64);
        let g = group_2x2(&grid).unwrap();
        assert_eq!(g.row(0), &[0.0, 1.0, 27.0, 28.0]);
        // last column group holds column 26 and zero padding
        assert_eq!(g.row(13), &[26.0, 0.0, 53.0, 0.0]);
    }

    #[test]
    fn concat_has_wider_first_layer() {
        assert!(proj(VisualVariant::Concat).first_layer_params() > proj(VisualVariant::Mlp).first_layer_params());
    }
}
