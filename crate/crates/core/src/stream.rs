//! Streaming injection protocol.
//!
//! Visual and text tokens enter the model as they arrive. Audio is buffered
//! between its start and end boundaries and injected in one block at the
//! end boundary, which also triggers inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modality::{vad, FramePlan, MelSpec, VadConfig, VadSegment, HOP_SAMPLES, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AudioStart,
    AudioFrame,
    AudioEnd,
    VideoFrame,
    Image,
    Text,
}

impl EventKind {
    pub fn is_audio(self) -> bool {
        matches!(self, Self::AudioStart | Self::AudioFrame | Self::AudioEnd)
    }
}

/// One input event; serialized as `{"t":ms,"kind":"...","tokens":N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEvent {
    #[serde(rename = "t")]
    pub timestamp_ms: u64,
    pub kind: EventKind,
    #[serde(rename = "tokens", default)]
    pub payload_tokens: u64,
}

impl StreamEvent {
    pub fn new(timestamp_ms: u64, kind: EventKind, payload_tokens: u64) -> Self {
        Self {
            timestamp_ms,
            kind,
            payload_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Video,
    Image,
    Text,
}

/// A block of tokens entering the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    #[serde(rename = "t")]
    pub timestamp_ms: u64,
    pub modality: Modality,
    #[serde(rename = "tokens")]
    pub token_count: u64,
    pub trigger_inference: bool,
}

pub type InjectionTrace = Vec<Injection>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Idle,
    AudioActive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SchedulerState {
    pub mode: Mode,
    pub audio_buffer_tokens: u64,
    /// Completed audio segments.
    pub segment_counter: u64,
    pub last_timestamp_ms: Option<u64>,
}

impl SchedulerState {
    pub fn is_idle(&self) -> bool {
        self.mode == Mode::Idle
    }

    /// Applies one event, returning the next state and any injections.
    pub fn step(self, event: &StreamEvent) -> Result<(Self, Vec<Injection>)> {
        let t = event.timestamp_ms;
        if let Some(last) = self.last_timestamp_ms {
            if t < last {
                return Err(Error::Ordering {
                    timestamp_ms: t,
                    last_ms: last,
                });
            }
        }
        let protocol = |detail: &str| Error::Protocol {
            timestamp_ms: t,
            detail: detail.to_string(),
        };
        let mut next = Self {
            last_timestamp_ms: Some(t),
            ..self
        };
        let visual = |modality| Injection {
            timestamp_ms: t,
            modality,
            token_count: event.payload_tokens,
            trigger_inference: false,
        };

        let out = match (event.kind, self.mode) {
            (EventKind::VideoFrame, _) => vec![visual(Modality::Video)],
            (EventKind::Image, _) => vec![visual(Modality::Image)],
            (EventKind::Text, _) => vec![visual(Modality::Text)],
            (EventKind::AudioStart | EventKind::AudioEnd, _) if event.payload_tokens != 0 => {
                return Err(protocol("audio boundary events carry no tokens"));
            }
            (EventKind::AudioStart, Mode::Idle) => {
                next.mode = Mode::AudioActive;
                vec![]
            }
            (EventKind::AudioStart, Mode::AudioActive) => {
                return Err(protocol("audio_start while audio is already active"));
            }
            (EventKind::AudioFrame, Mode::AudioActive) => {
                next.audio_buffer_tokens += event.payload_tokens;
                vec![]
            }
            (EventKind::AudioEnd, Mode::AudioActive) => {
                next.mode = Mode::Idle;
                next.audio_buffer_tokens = 0;
                next.segment_counter += 1;
                vec![Injection {
                    timestamp_ms: t,
                    modality: Modality::Audio,
                    token_count: self.audio_buffer_tokens,
                    trigger_inference: true,
                }]
            }
            (EventKind::AudioFrame, Mode::Idle) => return Err(protocol("audio_frame outside an audio segment")),
            (EventKind::AudioEnd, Mode::Idle) => return Err(protocol("audio_end without audio_start")),
        };
        Ok((next, out))
    }
}

/// Folds [`SchedulerState::step`] over a trace. The trace must end idle.
pub fn run(events: &[StreamEvent]) -> Result<InjectionTrace> {
    let mut state = SchedulerState::default();
    let mut trace = Vec::new();
    for ev in events {
        let (next, out) = state.step(ev)?;
        state = next;
        trace.extend(out);
    }
    if !state.is_idle() {
        let t = state.last_timestamp_ms.unwrap_or(0);
        return Err(Error::Protocol {
            timestamp_ms: t,
            detail: "trace ended inside an unterminated audio segment".into(),
        });
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediaEventConfig {
    pub vad: VadConfig,
    /// Mel frames per `audio_frame` event.
    pub chunk_frames: usize,
    /// Audio projector down-sampling rate; a segment of `m` mel frames
    /// costs `ceil(m / rate_n)` tokens.
    pub rate_n: usize,
    pub video_spacing_ms: u64,
}

impl Default for MediaEventConfig {
    fn default() -> Self {
        Self {
            vad: VadConfig::default(),
            chunk_frames: 10,
            rate_n: 4,
            video_spacing_ms: 1000,
        }
    }
}

fn mel_frame_ms(frame: usize) -> u64 {
    (frame * HOP_SAMPLES * 1000 / SAMPLE_RATE_HZ) as u64
}

/// Events for one detected audio segment. Chunk `[a, b)` (relative to the
/// segment start) carries `ceil(b / rate) - ceil(a / rate)` tokens, so the
/// segment total is `ceil(len / rate)`.
pub fn segment_events(seg: &VadSegment, chunk_frames: usize, rate_n: usize) -> Result<Vec<StreamEvent>> {
    if chunk_frames == 0 || rate_n == 0 {
        return Err(Error::contract("chunk_frames and rate_n must be positive"));
    }
    let mut events = vec![StreamEvent::new(
        mel_frame_ms(seg.start_frame),
        EventKind::AudioStart,
        0,
    )];
    let len = seg.len();
    let mut a = 0;
    while a < len {
        let b = (a + chunk_frames).min(len);
        let tokens = b.div_ceil(rate_n) - a.div_ceil(rate_n);
        events.push(StreamEvent::new(
            mel_frame_ms(seg.start_frame + b),
            EventKind::AudioFrame,
            tokens as u64,
        ));
        a = b;
    }
    events.push(StreamEvent::new(mel_frame_ms(seg.end_frame), EventKind::AudioEnd, 0));
    Ok(events)
}

/// Merges VAD-derived audio events with one `video_frame` event per planned
/// frame (the k-th at `k * video_spacing_ms`). Ties keep audio first.
pub fn events_from_media(mel: &MelSpec, cfg: &MediaEventConfig, frame_plan: &FramePlan) -> Result<Vec<StreamEvent>> {
    let mut audio = Vec::new();
    for seg in vad(mel, &cfg.vad) {
        audio.extend(segment_events(&seg, cfg.chunk_frames, cfg.rate_n)?);
    }
    let video = (0..frame_plan.frame_indices.len()).map(|k| {
        StreamEvent::new(
            k as u64 * cfg.video_spacing_ms,
            EventKind::VideoFrame,
            frame_plan.per_frame_tokens as u64,
        )
    });
    let mut merged: Vec<StreamEvent> = audio.into_iter().chain(video).collect();
    merged.sort_by_key(|e| e.timestamp_ms);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use EventKind::*;

    #[test]
    fn image_only() {
        let trace = run(&[StreamEvent::new(0, Image, 182)]).unwrap();
        assert_eq!(
            trace,
            vec![Injection {
                timestamp_ms: 0,
                modality: Modality::Image,
                token_count: 182,
                trigger_inference: false
            }]
        );
    }

    #[test]
    fn audio_is_deferred_to_its_end() {
        let events = [
            StreamEvent::new(0, AudioStart, 0),
            StreamEvent::new(100, VideoFrame, 182),
            StreamEvent::new(150, AudioFrame, 50),
            StreamEvent::new(300, AudioEnd, 0),
        ];
        let trace = run(&events).unwrap();
        assert_eq!(
            trace,
            vec![
                Injection {
                    timestamp_ms: 100,
                    modality: Modality::Video,
                    token_count: 182,
                    trigger_inference: false
                },
                Injection {
                    timestamp_ms: 300,
                    modality: Modality::Audio,
                    token_count: 50,
                    trigger_inference: true
                },
            ]
        );
    }

    #[test]
    fn protocol_errors() {
        assert!(matches!(
            run(&[StreamEvent::new(0, AudioEnd, 0)]),
            Err(Error::Protocol { .. })
        ));
        assert!(matches!(
            run(&[StreamEvent::new(0, AudioFrame, 3)]),
            Err(Error::Protocol { .. })
        ));
        let double = [StreamEvent::new(0, AudioStart, 0), StreamEvent::new(1, AudioStart, 0)];
        assert!(matches!(run(&double), Err(Error::Protocol { .. })));
        let dangling = [StreamEvent::new(0, AudioStart, 0), StreamEvent::new(5, AudioFrame, 2)];
        assert!(matches!(run(&dangling), Err(Error::Protocol { .. })));
        let back = [StreamEvent::new(10, Text, 1), StreamEvent::new(5, Text, 1)];
        assert!(matches!(
            run(&back),
            Err(Error::Ordering {
                timestamp_ms: 5,
                last_ms: 10
            })
        ));
        assert!(run(&[]).unwrap().is_empty());
    }

    #[test]
    fn segment_chunking() {
        let seg = VadSegment {
            start_frame: 100,
            end_frame: 200,
        };
        let ev = segment_events(&seg, 10, 4).unwrap();
        assert_eq!(ev.len(), 12);
        assert_eq!(ev.iter().filter(|e| e.kind == AudioFrame).count(), 10);
        let total: u64 = ev.iter().map(|e| e.payload_tokens).sum();
        assert_eq!(total, 25);
        assert_eq!(ev[0].timestamp_ms, 1000);
        assert_eq!(ev.last().unwrap().timestamp_ms, 2000);
    }

    #[test]
    fn json_lines_shape() {
        let ev: StreamEvent = serde_json::from_str(r#"{"t":150,"kind":"audio_frame","tokens":50}"#).unwrap();
        assert_eq!(ev, StreamEvent::new(150, AudioFrame, 50));
        let ev: StreamEvent = serde_json::from_str(r#"{"t":0,"kind":"audio_start"}"#).unwrap();
        assert_eq!(ev.payload_tokens, 0);
    }
}
