use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tiles::{plan_tiles_with, TilingConfig, TOKENS_PER_TILE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub fps: f64,
    pub max_frames: usize,
    /// Bound on the shorter frame side after rescaling.
    pub max_short_px: usize,
    /// Bound on the longer frame side after rescaling.
    pub max_long_px: usize,
    pub tile_px: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            fps: 1.0,
            max_frames: 48,
            max_short_px: 384,
            max_long_px: 768,
            tile_px: 384,
        }
    }
}

fn default_fps() -> f64 {
    1.0
}

fn default_max_frames() -> usize {
    48
}

/// Which source frames of a video are encoded, and at what token cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    #[serde(rename = "frames")]
    pub frame_indices: Vec<usize>,
    #[serde(skip_serializing, default = "default_fps")]
    pub fps: f64,
    #[serde(skip_serializing, default = "default_max_frames")]
    pub max_frames: usize,
    pub per_frame_tokens: usize,
}

impl FramePlan {
    pub fn total_tokens(&self) -> usize {
        self.frame_indices.len() * self.per_frame_tokens
    }
}

/// Samples `min(max(floor(duration * fps), 1), max_frames)` frames spread
/// uniformly as `floor(i * total / count)`, deduplicated.
pub fn plan_frames(duration_s: f64, total_source_frames: usize) -> Result<FramePlan> {
    plan_frames_with(&FrameConfig::default(), duration_s, total_source_frames)
}

pub fn plan_frames_with(cfg: &FrameConfig, duration_s: f64, total_source_frames: usize) -> Result<FramePlan> {
    if duration_s.is_nan() || duration_s <= 0.0 || !duration_s.is_finite() {
        return Err(Error::contract(format!("duration must be positive, got {duration_s}")));
    }
    if total_source_frames == 0 {
        return Err(Error::contract("video has no frames"));
    }
    let wanted = (duration_s * cfg.fps).floor().max(1.0);
    let count = (wanted as usize).min(cfg.max_frames).max(1);
    let mut frame_indices: Vec<usize> = (0..count)
        .map(|i| ((i as u128 * total_source_frames as u128) / count as u128) as usize)
        .collect();
    frame_indices.dedup();
    Ok(FramePlan {
        frame_indices,
        fps: cfg.fps,
        max_frames: cfg.max_frames,
        per_frame_tokens: TOKENS_PER_TILE,
    })
}

/// [`plan_frames`] with the per-frame token cost set from the frame size.
pub fn plan_video(duration_s: f64, total_source_frames: usize, width_px: usize, height_px: usize) -> Result<FramePlan> {
    plan_video_with(
        &FrameConfig::default(),
        duration_s,
        total_source_frames,
        width_px,
        height_px,
    )
}

pub fn plan_video_with(
    cfg: &FrameConfig,
    duration_s: f64,
    total_source_frames: usize,
    width_px: usize,
    height_px: usize,
) -> Result<FramePlan> {
    let mut plan = plan_frames_with(cfg, duration_s, total_source_frames)?;
    plan.per_frame_tokens = frame_tokens_with(cfg, width_px, height_px)?;
    Ok(plan)
}

pub fn frame_tokens(width_px: usize, height_px: usize) -> Result<usize> {
    frame_tokens_with(&FrameConfig::default(), width_px, height_px)
}

/// Token cost of one video frame: the frame is shrunk (never enlarged,
/// aspect kept) so its short side fits `max_short_px` and its long side
/// `max_long_px`, then tiled like an image.
pub fn frame_tokens_with(cfg: &FrameConfig, width_px: usize, height_px: usize) -> Result<usize> {
    if width_px == 0 || height_px == 0 {
        return Err(Error::contract(format!(
            "frame dimensions must be positive, got {width_px}x{height_px}"
        )));
    }
    let short = width_px.min(height_px) as f64;
    let long = width_px.max(height_px) as f64;
    let scale = (cfg.max_short_px as f64 / short)
        .min(cfg.max_long_px as f64 / long)
        .min(1.0);
    let fit = |px: usize, bound: usize| ((px as f64 * scale).round() as usize).clamp(1, bound);
    let (w, h) = if width_px <= height_px {
        (fit(width_px, cfg.max_short_px), fit(height_px, cfg.max_long_px))
    } else {
        (fit(width_px, cfg.max_long_px), fit(height_px, cfg.max_short_px))
    };
    let tiling = TilingConfig {
        tile_px: cfg.tile_px,
        max_tiles: usize::MAX,
    };
    Ok(plan_tiles_with(&tiling, w, h)?.total_tokens)
}
