use serde::{Deserialize, Serialize};

use super::mel::MelSpec;

/// Half-open run of active mel frames `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadSegment {
    pub start_frame: usize,
    pub end_frame: usize,
}

impl VadSegment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadConfig {
    pub threshold_db: f64,
    /// Active runs separated by at most this many frames are merged.
    pub hangover_frames: usize,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            threshold_db: -60.0,
            hangover_frames: 5,
        }
    }
}

/// Mean log-mel energy of one frame in dB.
///
/// Inverts the `(log10(p) + 4) / 4` normalization, so a normalized value `v`
/// is `10 log10(p) = 40 v - 40` dB. Pure silence sits at -100 dB.
pub fn frame_energy_db(frame: &[f64]) -> f64 {
    frame.iter().map(|&v| 40.0 * v - 40.0).sum::<f64>() / frame.len() as f64
}

/// Energy-threshold voice activity detection over mel frames.
pub fn vad(spec: &MelSpec, cfg: &VadConfig) -> Vec<VadSegment> {
    let mut runs: Vec<VadSegment> = Vec::new();
    let mut open: Option<usize> = None;
    for t in 0..spec.frames {
        let active = frame_energy_db(spec.frame(t)) > cfg.threshold_db;
        match (active, open) {
            (true, None) => open = Some(t),
            (false, Some(start)) => {
                runs.push(VadSegment {
                    start_frame: start,
                    end_frame: t,
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        runs.push(VadSegment {
            start_frame: start,
            end_frame: spec.frames,
        });
    }

    let mut merged: Vec<VadSegment> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(prev) if run.start_frame - prev.end_frame <= cfg.hangover_frames => {
                prev.end_frame = run.end_frame;
            }
            _ => merged.push(run),
        }
    }
    merged
}
