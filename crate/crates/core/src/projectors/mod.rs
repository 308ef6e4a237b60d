//! Projectors from encoder features into the LLM embedding space.
//!
//! Four visual variants map a 27x27 patch grid to 729 or 182 tokens; the
//! Conv-GMLP audio projector shortens a frame sequence by its down-sampling
//! rate while a mean-pooled residual shortcut carries the input forward.
//! Every projector has a hand-written backward pass checked against finite
//! differences.

mod conv_gmlp;
mod fit;
mod params;
mod probe;
mod visual;

pub use conv_gmlp::{check_rate, ConvGmlp, ConvGmlpConfig, ConvGmlpTrace, SUPPORTED_RATES};
pub use fit::{ablate_rates, toy_fit, AblationRow, ToyTask};
pub use params::ProjectorParams;
pub use probe::{check_projector, ProbeLoss, ProjectorKind};
pub use visual::{VisualProjector, VisualProjectorConfig, VisualVariant, GRID_SIDE, GRID_TOKENS, POOLED_TOKENS};

use crate::error::Result;
use crate::numkit::{Gradients, Tensor};

/// Forward and backward over named parameters.
pub trait Projector: Sync {
    /// Parameter names and shapes, in canonical order.
    fn param_shapes(&self) -> Vec<(String, Vec<usize>)>;

    fn forward(&self, params: &ProjectorParams, x: &Tensor) -> Result<Tensor>;

    /// Gradients for every parameter (in [`Projector::param_shapes`] order)
    /// and for `x`, given the upstream gradient of the output.
    fn backward(&self, params: &ProjectorParams, x: &Tensor, upstream: &Tensor) -> Result<Gradients>;

    /// Uniform `+-sqrt(1 / fan_in)` initialization from `seed`.
    fn init(&self, seed: u64) -> ProjectorParams {
        ProjectorParams::init_uniform(&self.param_shapes(), seed)
    }

    fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}
