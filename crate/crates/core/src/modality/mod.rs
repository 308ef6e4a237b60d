//! Planners that turn media geometry into token budgets and feature grids.

mod frames;
mod mel;
mod tiles;
mod vad;
mod wav;

pub use frames::{
    frame_tokens, frame_tokens_with, plan_frames, plan_frames_with, plan_video, plan_video_with, FrameConfig, FramePlan,
};
pub use mel::{
    hz_to_mel, mel_filters, mel_to_hz, melspec, melspec_with, MelSpec, HOP_SAMPLES, N_FFT, N_FRAMES, N_MELS, N_SAMPLES,
    SAMPLE_RATE_HZ,
};
pub use tiles::{plan_tiles, plan_tiles_with, TilePlan, TilingConfig, TOKENS_PER_TILE};
pub use vad::{frame_energy_db, vad, VadConfig, VadSegment};
pub use wav::{read_wav, write_wav};
