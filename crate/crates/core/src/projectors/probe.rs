use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{grad_check, Differentiable, GradCheckReport, Gradients, Tensor};

use super::{
    ConvGmlp, ConvGmlpConfig, Projector, ProjectorParams, VisualProjector, VisualProjectorConfig, VisualVariant,
    GRID_TOKENS,
};

/// Scalar probe `sum((f(x) - f(x0)) * R)` over a projector's output.
///
/// Subtracting the baseline output keeps the loss near zero, so rows a
/// perturbation does not touch cancel exactly and central differences see
/// only the rounding of the rows that moved.
pub struct ProbeLoss<'a, P: Projector> {
    projector: &'a P,
    template: ProjectorParams,
    weights: Tensor,
    baseline: Tensor,
}

impl<'a, P: Projector> ProbeLoss<'a, P> {
    pub fn new(projector: &'a P, params: &ProjectorParams, x: &Tensor, weights: Tensor) -> Result<Self> {
        let baseline = projector.forward(params, x)?;
        if baseline.shape() != weights.shape() {
            return Err(Error::Shape {
                op: "probe",
                left: weights.shape().to_vec(),
                right: baseline.shape().to_vec(),
            });
        }
        Ok(Self {
            projector,
            template: params.clone(),
            weights,
            baseline,
        })
    }
}

impl<P: Projector> Differentiable for ProbeLoss<'_, P> {
    fn loss(&self, params: &[Tensor], input: &Tensor) -> Result<Tensor> {
        let p = self.template.with_tensors(params)?;
        let y = self.projector.forward(&p, input)?;
        Ok(Tensor::scalar(y.sub(&self.baseline)?.dot(&self.weights)?))
    }

    fn gradients(&self, params: &[Tensor], input: &Tensor) -> Result<Gradients> {
        let p = self.template.with_tensors(params)?;
        self.projector.backward(&p, input, &self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    Mlp,
    CAbs,
    Concat,
    MeanPool,
    ConvGmlp,
}

impl ProjectorKind {
    pub const ALL: [ProjectorKind; 5] = [Self::Mlp, Self::CAbs, Self::Concat, Self::MeanPool, Self::ConvGmlp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::CAbs => "c_abs",
            Self::Concat => "concat",
            Self::MeanPool => "mean_pool",
            Self::ConvGmlp => "conv_gmlp",
        }
    }

    fn visual(self) -> Option<VisualVariant> {
        match self {
            Self::Mlp => Some(VisualVariant::Mlp),
            Self::CAbs => Some(VisualVariant::CAbs),
            Self::Concat => Some(VisualVariant::Concat),
            Self::MeanPool => Some(VisualVariant::MeanPool),
            Self::ConvGmlp => None,
        }
    }
}

impl fmt::Display for ProjectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProjectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown projector {s:?}")))
    }
}

fn normal_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(&mut *rng))
}

fn check<P: Projector>(
    proj: &P,
    x: Tensor,
    seed: u64,
    eps: f64,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let params = proj.init(seed);
    let out_shape = proj.forward(&params, &x)?.shape().to_vec();
    let probe = ProbeLoss::new(proj, &params, &x, normal_tensor(&out_shape, rng))?;
    grad_check(&probe, &params.tensors(), &x, eps, tol)
}

/// Gradient check of one projector at desk-scale widths: visual variants
/// use `in_dim = 3`, `llm_dim = 2` on the full 27x27 grid; Conv-GMLP uses
/// 4 input channels, `llm_dim = 3` and `len` frames.
pub fn check_projector(
    kind: ProjectorKind,
    rate: usize,
    len: usize,
    seed: u64,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    match kind.visual() {
        Some(variant) => {
            let proj = VisualProjector::new(VisualProjectorConfig {
                variant,
                in_dim: 3,
                llm_dim: 2,
            });
            let x = normal_tensor(&[GRID_TOKENS, 3], &mut rng);
            check(&proj, x, seed, eps, tol, &mut rng)
        }
        None => {
            let proj = ConvGmlp::new(ConvGmlpConfig::new(rate, 4, 3)?);
            if len == 0 {
                return Err(Error::contract("conv_gmlp: input length must be positive"));
            }
            let x = normal_tensor(&[len, 4], &mut rng);
            check(&proj, x, seed, eps, tol, &mut rng)
        }
    }
}
